use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use latro_core::config::{FieldModel, OutputFormat, RunConfig, Scenario};
use latro_core::io::{matrix_market, vtk_polydata, LatticeFile};
use latro_core::optim::{pareto_sweep, solve_weighted, OptimizationResult, Reference, StopReason};
use latro_core::regularization::{DesignState, PenalizationCurve};
use latro_core::robust::{compliance_statistics, monte_carlo_validate, sample_rng};

use crate::artifacts::Artifacts;

pub struct Globals {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub enum Status {
    Done,
    IterationCap,
}

struct Loaded {
    config: RunConfig,
    base_dir: PathBuf,
    out_dir: PathBuf,
}

fn load(globals: &Globals, path: &Path) -> Result<Loaded> {
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = globals.seed {
        config.output.seed = Some(seed);
    }
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out_dir = match (&globals.output_dir, &config.output.directory) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => PathBuf::from("out").join(&config.name),
    };
    Ok(Loaded {
        config,
        base_dir,
        out_dir,
    })
}

fn finish(artifacts: Artifacts, dir: &Path) -> Result<()> {
    for p in artifacts.commit(dir)? {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn design_file(scenario: &Scenario, state: &DesignState) -> LatticeFile {
    LatticeFile::from_lattice(scenario.lattice())
        .with_member_data("s", state.raw.clone())
        .with_member_data("s_filtered", state.filtered.clone())
        .with_member_data("s_penalized", state.penalized.clone())
        .with_member_data("area", state.areas.clone())
}

fn design_vtk(scenario: &Scenario, state: &DesignState) -> Result<String> {
    Ok(vtk_polydata(
        scenario.lattice(),
        &scenario.config.name,
        &[("area", &state.areas), ("density", &state.penalized)],
    )?)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    name: &'a str,
    alpha: f64,
    mean: f64,
    std_dev: f64,
    objective: f64,
    volume: f64,
    volume_max: f64,
    constraint: f64,
    iterations: usize,
    stop: StopReason,
    reference: Reference,
    joints: usize,
    members: usize,
}

#[derive(Serialize)]
struct Timing {
    wall_time_s: f64,
}

pub fn optimize(globals: &Globals, path: &Path, alpha: Option<f64>) -> Result<Status> {
    let loaded = load(globals, path)?;
    let scenario = Scenario::build(loaded.config, &loaded.base_dir)?;
    let opt = scenario.optimization()?.clone();
    let alpha = alpha.or(opt.alpha).unwrap_or(1.0);
    if !(0.0..=1.0).contains(&alpha) {
        bail!("α = {alpha} outside [0, 1]");
    }
    let template = scenario.problem()?;
    let (reference, result) = solve_weighted(&template, alpha, opt.reference, opt.stop(), opt.mma)?;
    let e = &result.evaluation;
    let out = &scenario.config.output;
    let mut art = Artifacts::default();
    if out.wants(OutputFormat::Csv) {
        art.csv("history.csv", &result.history)?;
    }
    if out.wants(OutputFormat::Json) {
        art.json(
            "summary.json",
            &RunSummary {
                name: &scenario.config.name,
                alpha,
                mean: e.stats.mean,
                std_dev: e.stats.std_dev,
                objective: alpha / reference.mean * e.stats.mean
                    + (1.0 - alpha) / reference.std_dev * e.stats.std_dev,
                volume: e.volume,
                volume_max: template.volume_max,
                constraint: e.constraint,
                iterations: result.iterations,
                stop: result.stop,
                reference,
                joints: scenario.lattice().num_joints(),
                members: scenario.lattice().num_members(),
            },
        )?;
        art.json("timing.json", &Timing { wall_time_s: result.wall_time })?;
        art.add("design.json", design_file(&scenario, &e.state).to_json()? + "\n");
    }
    if out.wants(OutputFormat::Vtk) {
        art.add("design.vtk", design_vtk(&scenario, &e.state)?);
    }
    if out.wants(OutputFormat::MatrixMarket) {
        let k = scenario
            .model
            .stiffness_matrix(scenario.field.covariance().mean(), &e.state.areas)?;
        art.add("stiffness.mtx", matrix_market(&k, true));
        if let FieldModel::Spde(op) = &scenario.field {
            art.add("precision.mtx", matrix_market(op.precision(), true));
        }
    }
    finish(art, &loaded.out_dir)?;
    println!(
        "α = {alpha}: J̄ = {:.6e}, σ_J = {:.6e}, V = {:.6e}, {} iterations ({:?})",
        e.stats.mean, e.stats.std_dev, e.volume, result.iterations, result.stop
    );
    Ok(match result.stop {
        StopReason::Converged => Status::Done,
        StopReason::IterationLimit => Status::IterationCap,
    })
}

#[derive(Serialize, Default)]
struct Spread {
    mean: f64,
    min: f64,
    max: f64,
}

fn spread(values: &[f64]) -> Spread {
    Spread {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

#[derive(Serialize)]
struct FieldReport {
    name: String,
    count: usize,
    seed: u64,
    members: usize,
    /// Per-member sample standard deviation over the draws.
    empirical_std_dev: Option<Spread>,
    /// Exact marginal standard deviation of the field model.
    model_std_dev: Option<Spread>,
    vtk_samples: usize,
}

/// Largest field for which the exact marginal variances are reported.
const MARGINAL_REPORT_LIMIT: usize = 20_000;
/// Samples written to the VTK file; the CSV holds all of them.
const VTK_SAMPLE_LIMIT: usize = 16;

pub fn sample_field(globals: &Globals, path: &Path, count: usize) -> Result<Status> {
    let loaded = load(globals, path)?;
    if count == 0 {
        return Ok(Status::Done);
    }
    let seed = loaded.config.require_seed("sample-field")?;
    let scenario = Scenario::build(loaded.config, &loaded.base_dir)?;
    let cov = scenario.field.covariance();
    let n = cov.dim();
    let samples: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|i| cov.sample(&mut sample_rng(seed, i as u64)))
        .collect();

    let empirical = (count >= 2).then(|| {
        let sd: Vec<f64> = (0..n)
            .map(|e| {
                let m = samples.iter().map(|s| s[e]).sum::<f64>() / count as f64;
                let v = samples.iter().map(|s| (s[e] - m).powi(2)).sum::<f64>() / (count - 1) as f64;
                v.sqrt()
            })
            .collect();
        spread(&sd)
    });
    let model = match &scenario.field {
        FieldModel::Uncorrelated(_) => None,
        FieldModel::Spde(op) if n <= MARGINAL_REPORT_LIMIT => {
            let sd: Vec<f64> = op.marginal_variances()?.iter().map(|v| v.sqrt()).collect();
            Some(spread(&sd))
        }
        FieldModel::Spde(_) => {
            log::warn!("{n} members: exact marginal variances skipped");
            None
        }
    }
    .or_else(|| match &scenario.field {
        FieldModel::Uncorrelated(f) => Some(Spread {
            mean: f.sigma(),
            min: f.sigma(),
            max: f.sigma(),
        }),
        _ => None,
    });

    let out = &scenario.config.output;
    let mut art = Artifacts::default();
    if out.wants(OutputFormat::Csv) {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["member".to_string()];
        header.extend((0..count).map(|i| format!("sample_{i}")));
        w.write_record(&header)?;
        for e in 0..n {
            let mut row = vec![e.to_string()];
            row.extend(samples.iter().map(|s| format!("{:e}", s[e])));
            w.write_record(&row)?;
        }
        art.add("fields.csv", w.into_inner().context("flushing CSV")?);
    }
    let vtk_samples = count.min(VTK_SAMPLE_LIMIT);
    if out.wants(OutputFormat::Vtk) {
        let names: Vec<String> = (0..vtk_samples).map(|i| format!("sample_{i}")).collect();
        let data: Vec<(&str, &[f64])> = names
            .iter()
            .zip(&samples)
            .map(|(name, s)| (name.as_str(), s.as_slice()))
            .collect();
        art.add("fields.vtk", vtk_polydata(scenario.lattice(), &scenario.config.name, &data)?);
    }
    if out.wants(OutputFormat::Json) {
        art.json(
            "field_report.json",
            &FieldReport {
                name: scenario.config.name.clone(),
                count,
                seed,
                members: n,
                empirical_std_dev: empirical,
                model_std_dev: model,
                vtk_samples,
            },
        )?;
    }
    finish(art, &loaded.out_dir)?;
    Ok(Status::Done)
}

#[derive(Serialize)]
struct Moments {
    mean: f64,
    std_dev: f64,
}

#[derive(Serialize)]
struct Agreement {
    /// `(perturbation − Monte Carlo) / Monte Carlo`, absent when the sample value is zero.
    mean_relative: Option<f64>,
    std_dev_relative: Option<f64>,
    /// Differences in units of the Monte Carlo standard error.
    mean_z: Option<f64>,
    std_dev_z: Option<f64>,
}

#[derive(Serialize)]
struct ValidationReport<'a> {
    name: &'a str,
    seed: u64,
    perturbation: Moments,
    monte_carlo: &'a latro_core::robust::MonteCarloReport,
    agreement: Agreement,
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| a / b)
}

/// Standard errors at rounding level (a deterministic field) give no usable z-score.
fn z_score(diff: f64, stderr: f64, scale: f64) -> Option<f64> {
    (stderr > 1e-12 * scale.abs()).then(|| diff / stderr)
}

pub fn validate(globals: &Globals, path: &Path, count: usize, design: Option<&Path>) -> Result<Status> {
    let loaded = load(globals, path)?;
    let seed = loaded.config.require_seed("validate")?;
    let scenario = Scenario::build(loaded.config, &loaded.base_dir)?;
    let map = scenario.design_map()?;
    let s = match design {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let file = LatticeFile::from_json(&text).with_context(|| format!("parsing {}", p.display()))?;
            file.member_data
                .get("s")
                .cloned()
                .ok_or_else(|| anyhow!("{} has no member data `s`", p.display()))?
        }
        None => scenario.problem()?.initial_design()?,
    };
    let state = map.areas_from_design(&s)?;
    let cov = scenario.field.covariance();
    let stats = compliance_statistics(&scenario.model, &state.areas, cov.as_ref(), None)?;
    let mc = monte_carlo_validate(&scenario.model, &state.areas, cov.as_ref(), count, seed)?;
    let report = ValidationReport {
        name: &scenario.config.name,
        seed,
        perturbation: Moments {
            mean: stats.mean,
            std_dev: stats.std_dev,
        },
        monte_carlo: &mc,
        agreement: Agreement {
            mean_relative: ratio(stats.mean - mc.mean, mc.mean),
            std_dev_relative: ratio(stats.std_dev - mc.std_dev, mc.std_dev),
            mean_z: z_score(stats.mean - mc.mean, mc.mean_stderr, mc.mean),
            std_dev_z: z_score(stats.std_dev - mc.std_dev, mc.std_dev_stderr, mc.mean),
        },
    };
    let out = &scenario.config.output;
    let mut art = Artifacts::default();
    if out.wants(OutputFormat::Json) {
        art.json("validation.json", &report)?;
    }
    if out.wants(OutputFormat::Csv) {
        #[derive(Serialize)]
        struct Row {
            sample: usize,
            compliance: Option<f64>,
        }
        art.csv(
            "mc_samples.csv",
            mc.samples.iter().enumerate().map(|(sample, c)| Row { sample, compliance: *c }),
        )?;
    }
    finish(art, &loaded.out_dir)?;
    println!(
        "perturbation: J̄ = {:.6e}, σ_J = {:.6e}; Monte Carlo ({} of {}): J̄ = {:.6e} ± {:.1e}, σ_J = {:.6e} ± {:.1e}",
        stats.mean,
        stats.std_dev,
        mc.accepted,
        mc.requested,
        mc.mean,
        mc.mean_stderr,
        mc.std_dev,
        mc.std_dev_stderr
    );
    Ok(Status::Done)
}

#[derive(Serialize)]
struct Front<'a> {
    name: &'a str,
    reference: Reference,
    points: Vec<&'a latro_core::optim::ParetoPoint>,
}

fn alpha_tag(alpha: f64) -> String {
    format!("{alpha}").replace('.', "p")
}

pub fn pareto(globals: &Globals, path: &Path, alphas: Option<Vec<f64>>) -> Result<Status> {
    let loaded = load(globals, path)?;
    let scenario = Scenario::build(loaded.config, &loaded.base_dir)?;
    let opt = scenario.optimization()?.clone();
    let alphas = alphas
        .or(opt.alphas.clone())
        .ok_or_else(|| anyhow!("no α list: pass --alphas or set optimization.alphas"))?;
    let template = scenario.problem()?;
    let (reference, runs) = pareto_sweep(&template, &alphas, opt.stop(), opt.mma)?;
    let points: Vec<_> = runs.iter().map(|(p, _)| p).collect();
    let out = &scenario.config.output;
    let mut art = Artifacts::default();
    if out.wants(OutputFormat::Csv) {
        art.csv("front.csv", points.iter().copied())?;
    }
    if out.wants(OutputFormat::Json) {
        art.json(
            "front.json",
            &Front {
                name: &scenario.config.name,
                reference,
                points: points.clone(),
            },
        )?;
    }
    for (p, r) in &runs {
        let r: &OptimizationResult = r;
        let tag = alpha_tag(p.alpha);
        if out.wants(OutputFormat::Json) {
            art.add(
                &format!("design_alpha_{tag}.json"),
                design_file(&scenario, &r.evaluation.state).to_json()? + "\n",
            );
        }
        if out.wants(OutputFormat::Vtk) {
            art.add(&format!("design_alpha_{tag}.vtk"), design_vtk(&scenario, &r.evaluation.state)?);
        }
    }
    finish(art, &loaded.out_dir)?;
    for p in &points {
        println!(
            "α = {:<5} J̄ = {:.6e}  σ_J = {:.6e}  ({} iterations{})",
            p.alpha,
            p.mean,
            p.std_dev,
            p.iterations,
            if p.converged { "" } else { ", not converged" }
        );
    }
    Ok(if points.iter().all(|p| p.converged) {
        Status::Done
    } else {
        Status::IterationCap
    })
}

pub fn penalty_curve(globals: &Globals, path: &Path, samples: usize) -> Result<Status> {
    let loaded = load(globals, path)?;
    if samples < 2 {
        bail!("penalty-curve needs at least two samples");
    }
    let penalty = loaded
        .config
        .regularization
        .penalty
        .as_ref()
        .ok_or_else(|| anyhow!("{}: regularization.penalty is not set", path.display()))?;
    let curve: PenalizationCurve = penalty.curve()?;
    #[derive(Serialize)]
    struct Row {
        s: f64,
        penalized: f64,
        slope: f64,
    }
    let rows: Vec<Row> = (0..samples)
        .map(|k| {
            let s = k as f64 / (samples - 1) as f64;
            let (penalized, slope) = curve.eval(s);
            Row { s, penalized, slope }
        })
        .collect();
    let mut art = Artifacts::default();
    art.csv("penalty_curve.csv", rows)?;
    art.json("penalty_control_points.json", curve.control_points())?;
    finish(art, &loaded.out_dir)?;
    Ok(Status::Done)
}
