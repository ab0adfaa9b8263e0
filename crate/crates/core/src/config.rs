//! JSON run configuration and the scenario it describes.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::TrussModel;
use crate::field::{
    beta_from_nu, build_precision, Anisotropy, Covariance, LengthScale, Normalization, PrecisionOperator,
    RandomFieldSpec, UncorrelatedField,
};
use crate::io::LatticeFile;
use crate::lattice::{build_bcc_lattice, build_grid_lattice, BccComposer, Diagonals, Lattice};
use crate::optim::{MmaOptions, OptimizationProblem, Reference, StopCriteria};
use crate::regularization::{DesignMap, PenalizationCurve, PenaltyPreset};
use crate::robust::GradientPath;

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LatticeSource {
    Grid {
        nx: usize,
        ny: usize,
        cell_w: f64,
        cell_h: f64,
        diagonals: Diagonals,
    },
    Bcc {
        nx: usize,
        ny: usize,
        nz: usize,
        cell: f64,
    },
    Composer(BccComposer),
    /// Lattice JSON file, relative to the config file.
    File(String),
    Inline(LatticeFile),
}

fn default_tol() -> f64 {
    1e-9
}

/// Axis-aligned joint predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Selector {
    /// `|x[axis] − value| ≤ tol`.
    Plane {
        axis: usize,
        value: f64,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    /// Inclusive box, widened by `tol`.
    Box {
        min: Vec<f64>,
        max: Vec<f64>,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    /// Joints within `tol` of a point.
    Point {
        at: Vec<f64>,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    /// The single joint closest to a point (lowest index on ties).
    Nearest { at: Vec<f64> },
}

impl Selector {
    pub fn select(&self, lattice: &Lattice) -> Result<Vec<usize>> {
        let d = lattice.dim();
        let check_len = |v: &[f64]| {
            if v.len() == d {
                Ok(())
            } else {
                Err(config_error(format!("selector coordinates need {d} entries: {self:?}")))
            }
        };
        let joints = match self {
            Selector::Plane { axis, value, tol } => {
                if *axis >= d {
                    return Err(config_error(format!("selector axis {axis} out of range")));
                }
                lattice.select_joints(|p| (p[*axis] - value).abs() <= *tol)
            }
            Selector::Box { min, max, tol } => {
                check_len(min)?;
                check_len(max)?;
                lattice.select_joints(|p| (0..d).all(|k| p[k] >= min[k] - tol && p[k] <= max[k] + tol))
            }
            Selector::Point { at, tol } => {
                check_len(at)?;
                lattice.select_joints(|p| {
                    p.iter().zip(at).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= *tol
                })
            }
            Selector::Nearest { at } => {
                check_len(at)?;
                let dist = |p: &[f64]| p.iter().zip(at).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                let best = lattice
                    .joints()
                    .iter()
                    .enumerate()
                    .min_by(|a, b| dist(&a.1.position).total_cmp(&dist(&b.1.position)))
                    .map(|(i, _)| i);
                best.into_iter().collect()
            }
        };
        if joints.is_empty() {
            return Err(config_error(format!("selector {self:?} matches no joint")));
        }
        Ok(joints)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportSpec {
    pub select: Selector,
    /// Constrained directions; all when omitted.
    #[serde(default)]
    pub dofs: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub select: Selector,
    /// Force on every selected joint, or the total when `split` is set.
    pub force: Vec<f64>,
    #[serde(default)]
    pub split: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    /// Mean Young's modulus, common to all members.
    pub mean: f64,
    /// Standard deviation of independent moduli; excludes the SPDE keys.
    #[serde(default)]
    pub uncorrelated: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub beta: Option<u32>,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub length_scale: Option<LengthScale>,
    #[serde(default)]
    pub anisotropy: Option<Anisotropy>,
    #[serde(default)]
    pub dimension: Option<usize>,
    #[serde(default)]
    pub normalization: Option<Normalization>,
}

impl FieldConfig {
    fn validate(&self) -> Result<()> {
        if !(self.mean > 0.0 && self.mean.is_finite()) {
            return Err(config_error("field.mean must be positive"));
        }
        match self.uncorrelated {
            Some(s) => {
                let spde_keys = self.sigma.is_some()
                    || self.beta.is_some()
                    || self.nu.is_some()
                    || self.length_scale.is_some()
                    || self.anisotropy.is_some()
                    || self.dimension.is_some()
                    || self.normalization.is_some();
                if spde_keys {
                    return Err(config_error("field.uncorrelated cannot be combined with SPDE keys"));
                }
                if !(s >= 0.0 && s.is_finite()) {
                    return Err(config_error("field.uncorrelated must be a non-negative σ"));
                }
            }
            None => {
                if self.sigma.is_none() || self.length_scale.is_none() {
                    return Err(config_error(
                        "field needs either `uncorrelated` or both `sigma` and `length_scale`",
                    ));
                }
                if self.beta.is_some() == self.nu.is_some() {
                    return Err(config_error("field needs exactly one of `beta` and `nu`"));
                }
                self.beta()?;
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension.unwrap_or(1)
    }

    pub fn beta(&self) -> Result<u32> {
        match (self.beta, self.nu) {
            (Some(b), _) => Ok(b),
            (None, Some(nu)) => beta_from_nu(nu, self.dimension()).map_err(|e| config_error(e.to_string())),
            (None, None) => Err(config_error("field needs `beta` or `nu`")),
        }
    }

    pub fn spec(&self, lattice: &Lattice) -> Result<Option<RandomFieldSpec>> {
        if self.uncorrelated.is_some() {
            return Ok(None);
        }
        Ok(Some(RandomFieldSpec {
            mean: vec![self.mean; lattice.num_members()],
            sigma: self.sigma.unwrap_or_default(),
            beta: self.beta()?,
            length_scale: self.length_scale.ok_or_else(|| config_error("field.length_scale missing"))?,
            anisotropy: self.anisotropy.clone(),
            dimension: self.dimension(),
            normalization: self.normalization.unwrap_or_default(),
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PenaltyConfig {
    Preset(PenaltyPreset),
    Control { control_points: [[f64; 2]; 6] },
}

impl PenaltyConfig {
    pub fn curve(&self) -> Result<PenalizationCurve> {
        match self {
            PenaltyConfig::Preset(p) => Ok(PenalizationCurve::from_preset(*p)),
            PenaltyConfig::Control { control_points } => PenalizationCurve::new(*control_points),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizationConfig {
    /// Filter radius; 0 disables filtering.
    pub filter_radius: f64,
    pub penalty: Option<PenaltyConfig>,
}

fn default_area_min() -> f64 {
    1e-4
}

fn default_area_max() -> f64 {
    1.0
}

fn default_iterations() -> usize {
    StopCriteria::default().max_iterations
}

fn default_tolerance() -> f64 {
    StopCriteria::default().tolerance
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizationConfig {
    /// Weight of the mean compliance; the single-run value.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Weights for Pareto sweeps.
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
    pub volume_max: f64,
    #[serde(default = "default_area_min")]
    pub area_min: f64,
    #[serde(default = "default_area_max")]
    pub area_max: f64,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub gradient_path: GradientPath,
    #[serde(default)]
    pub mma: MmaOptions,
    /// `J̄*` and `σ_J*`; computed by the α = 1 and α = 0 runs when omitted.
    #[serde(default)]
    pub reference: Option<Reference>,
}

impl OptimizationConfig {
    fn validate(&self) -> Result<()> {
        let in_unit = |a: f64| (0.0..=1.0).contains(&a);
        if let Some(a) = self.alpha {
            if !in_unit(a) {
                return Err(config_error(format!("optimization.alpha = {a} outside [0, 1]")));
            }
        }
        if let Some(list) = &self.alphas {
            if list.is_empty() || list.iter().any(|a| !in_unit(*a)) {
                return Err(config_error("optimization.alphas must be a non-empty list in [0, 1]"));
            }
        }
        if !(self.volume_max > 0.0 && self.volume_max.is_finite()) {
            return Err(config_error("optimization.volume_max must be positive"));
        }
        if !(self.area_min > 0.0 && self.area_max > self.area_min && self.area_max.is_finite()) {
            return Err(config_error("optimization needs 0 < area_min < area_max"));
        }
        if self.max_iterations == 0 || !(self.tolerance > 0.0) {
            return Err(config_error("optimization needs max_iterations ≥ 1 and tolerance > 0"));
        }
        if let Some(r) = self.reference {
            if !(r.mean > 0.0 && r.std_dev > 0.0) {
                return Err(config_error("optimization.reference values must be positive"));
            }
        }
        self.mma.validate().map_err(|e| config_error(e.to_string()))
    }

    pub fn stop(&self) -> StopCriteria {
        StopCriteria {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
    Vtk,
    MatrixMarket,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Csv, OutputFormat::Vtk]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub directory: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    /// Required by every command that draws random numbers.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            formats: default_formats(),
            seed: None,
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    pub lattice: LatticeSource,
    #[serde(default)]
    pub supports: Vec<SupportSpec>,
    #[serde(default)]
    pub loads: Vec<LoadSpec>,
    pub field: FieldConfig,
    #[serde(default)]
    pub regularization: RegularizationConfig,
    #[serde(default)]
    pub optimization: Option<OptimizationConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// Parses and validates; errors carry `origin:line:column`.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
            config_error(format!("{origin}:{}:{}: {msg}", e.line(), e.column()))
        })?;
        config.validate().map_err(|e| match e {
            Error::Config(m) => config_error(format!("{origin}: {m}")),
            other => other,
        })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(config_error("name must be non-empty without path separators"));
        }
        self.field.validate()?;
        if let Some(o) = &self.optimization {
            o.validate()?;
        }
        let r = self.regularization.filter_radius;
        if !(r >= 0.0 && r.is_finite()) {
            return Err(config_error("regularization.filter_radius must be ≥ 0"));
        }
        if let Some(p) = &self.regularization.penalty {
            p.curve().map_err(|e| config_error(e.to_string()))?;
        }
        Ok(())
    }

    /// Requested seed, or an error naming the command that needs it.
    pub fn require_seed(&self, command: &str) -> Result<u64> {
        self.output
            .seed
            .ok_or_else(|| config_error(format!("`{command}` samples random fields and needs output.seed")))
    }
}

/// The field a scenario draws moduli from.
#[derive(Clone)]
pub enum FieldModel {
    Uncorrelated(Arc<UncorrelatedField>),
    Spde(Arc<PrecisionOperator>),
}

impl FieldModel {
    pub fn covariance(&self) -> Arc<dyn Covariance> {
        match self {
            FieldModel::Uncorrelated(f) => f.clone(),
            FieldModel::Spde(f) => f.clone(),
        }
    }
}

/// Lattice with boundary conditions, FE model and field built from a config.
#[derive(Clone)]
pub struct Scenario {
    pub config: RunConfig,
    pub model: Arc<TrussModel>,
    pub field: FieldModel,
}

pub fn build_lattice(config: &RunConfig, base_dir: &Path) -> Result<Lattice> {
    let mut lattice = match &config.lattice {
        LatticeSource::Grid {
            nx,
            ny,
            cell_w,
            cell_h,
            diagonals,
        } => build_grid_lattice(*nx, *ny, *cell_w, *cell_h, *diagonals)?,
        LatticeSource::Bcc { nx, ny, nz, cell } => build_bcc_lattice(*nx, *ny, *nz, *cell)?,
        LatticeSource::Composer(c) => c.build()?,
        LatticeSource::File(path) => {
            let path = base_dir.join(path);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            LatticeFile::from_json(&text)
                .map_err(|e| config_error(format!("{}: {e}", path.display())))?
                .to_lattice()?
        }
        LatticeSource::Inline(f) => f.to_lattice()?,
    };
    for s in &config.supports {
        for j in s.select.select(&lattice)? {
            match &s.dofs {
                Some(dofs) => dofs.iter().try_for_each(|&k| lattice.fix_dof(j, k))?,
                None => lattice.fix_joint(j)?,
            }
        }
    }
    for l in &config.loads {
        let joints = l.select.select(&lattice)?;
        let share = if l.split { 1.0 / joints.len() as f64 } else { 1.0 };
        let force: Vec<f64> = l.force.iter().map(|f| f * share).collect();
        for j in joints {
            lattice.add_load(j, &force)?;
        }
    }
    Ok(lattice)
}

impl Scenario {
    pub fn build(config: RunConfig, base_dir: &Path) -> Result<Self> {
        let lattice = build_lattice(&config, base_dir)?;
        let field = match config.field.spec(&lattice)? {
            None => FieldModel::Uncorrelated(Arc::new(UncorrelatedField::new(
                vec![config.field.mean; lattice.num_members()],
                config.field.uncorrelated.unwrap_or_default(),
            )?)),
            Some(spec) => FieldModel::Spde(Arc::new(build_precision(&spec, &lattice)?)),
        };
        Ok(Self {
            config,
            model: Arc::new(TrussModel::new(lattice)),
            field,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        self.model.lattice()
    }

    pub fn optimization(&self) -> Result<&OptimizationConfig> {
        self.config
            .optimization
            .as_ref()
            .ok_or_else(|| config_error(format!("{}: no optimization section", self.config.name)))
    }

    pub fn design_map(&self) -> Result<DesignMap> {
        let o = self.optimization()?;
        let penalty = self
            .config
            .regularization
            .penalty
            .as_ref()
            .map(PenaltyConfig::curve)
            .transpose()?;
        DesignMap::new(
            self.lattice(),
            self.config.regularization.filter_radius,
            penalty,
            o.area_min,
            o.area_max,
        )
    }

    /// Problem at the configured α; the reference values are placeholders
    /// until set explicitly or by the reference runs.
    pub fn problem(&self) -> Result<OptimizationProblem> {
        let o = self.optimization()?;
        Ok(OptimizationProblem {
            model: self.model.clone(),
            field: self.field.covariance(),
            design: self.design_map()?,
            volume_max: o.volume_max,
            alpha: o.alpha.unwrap_or(1.0),
            reference: o.reference.unwrap_or(Reference {
                mean: 1.0,
                std_dev: 1.0,
            }),
            gradient_path: o.gradient_path,
        })
    }
}
