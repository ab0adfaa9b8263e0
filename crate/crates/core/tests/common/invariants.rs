//! Property checks shared by the `properties` test target and the
//! acceptance run. Each returns `Err` with the (shrunk) failing input.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DVector;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use rand::Rng;

use latro_core::fem::{d2k_drds, dk_dr, element_stiffness, TrussModel};
use latro_core::field::{
    assemble_adjoint_operators, build_precision, Anisotropy, Covariance, LengthScale, Normalization,
    PrecisionOperator, RandomFieldSpec, UncorrelatedField,
};
use latro_core::lattice::{build_bcc_lattice, build_grid_lattice, AdjointLattice, Diagonals, Lattice};
use latro_core::optim::{optimize, MmaOptions, MmaState, OptimizationProblem, Reference, StopCriteria};
use latro_core::regularization::{DesignMap, FilterOperator, PenalizationCurve, PenaltyPreset};
use latro_core::robust::{compliance_statistics, monte_carlo_validate, sample_rng, GradientPath};

use super::{dense, dot, plain_problem, rel_max_diff, verification_lattice};

pub type Check = fn() -> Result<(), String>;

/// Every invariant, by name.
pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("grid member count", grid_member_count),
        ("stored member lengths", member_lengths_match_endpoints),
        ("line-graph degree identity", line_graph_degree_identity),
        ("K symmetric, u·Ku ≥ 0", stiffness_symmetric_psd),
        ("compliance identity f·u = u·Ku", compliance_identity),
        ("K linear in moduli", stiffness_linear_in_moduli),
        ("element derivative blocks", element_derivatives_match_differences),
        ("precision SPD", precision_spd),
        ("line-graph operators", line_graph_operators),
        ("chain marginal variance", chain_marginal_variance),
        ("sampler covariance rate", sampler_covariance_rate),
        ("non-stationary correlation trend", nonstationary_correlation_trend),
        ("σ_J² against dense covariance", variance_matches_dense_covariance),
        ("gradient paths agree", gradient_paths_agree),
        ("load scaling", load_scaling),
        ("mean-field scaling", mean_field_scaling),
        ("first-order vs Monte Carlo", first_order_matches_monte_carlo),
        ("filter rows, constants, contraction", filter_properties),
        ("penalty curve shape", penalty_curve_shape),
        ("pipeline gradient", pipeline_gradient_matches_differences),
        ("MMA iterates within bounds", mma_iterates_within_bounds),
        ("seeded runs deterministic", seeded_runs_deterministic),
        ("converged volume feasible", converged_volume_feasible),
    ]
}

fn run<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S: Strategy,
    S::Value: std::fmt::Debug,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(what()))
    }
}

fn plain(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn diagonals() -> impl Strategy<Value = Diagonals> {
    prop_oneof![Just(Diagonals::None), Just(Diagonals::Single), Just(Diagonals::Double)]
}

fn braced() -> impl Strategy<Value = Diagonals> {
    prop_oneof![Just(Diagonals::Single), Just(Diagonals::Double)]
}

#[derive(Debug, Clone)]
struct GridCase {
    nx: usize,
    ny: usize,
    w: f64,
    h: f64,
    diagonals: Diagonals,
    /// Joint offsets as fractions of the smaller cell side.
    jitter: Vec<[f64; 2]>,
}

impl GridCase {
    fn lattice(&self) -> Lattice {
        let base = build_grid_lattice(self.nx, self.ny, self.w, self.h, self.diagonals).unwrap();
        let step = self.w.min(self.h);
        let positions: Vec<Vec<f64>> = base
            .joints()
            .iter()
            .zip(&self.jitter)
            .map(|(j, o)| vec![j.position[0] + o[0] * step, j.position[1] + o[1] * step])
            .collect();
        let members: Vec<[usize; 2]> = base.members().iter().map(|m| m.joints).collect();
        Lattice::new(2, positions, &members).unwrap()
    }

    /// Left edge clamped, random loads on the right edge.
    fn supported(&self, loads: &[f64]) -> Lattice {
        let mut l = self.lattice();
        let x_max = self.nx as f64 * self.w;
        let step = self.w.min(self.h);
        for j in l.select_joints(|p| p[0] < 0.25 * step) {
            l.fix_joint(j).unwrap();
        }
        let right = l.select_joints(|p| p[0] > x_max - 0.25 * step);
        for (k, j) in right.into_iter().enumerate() {
            let f = [loads[(2 * k) % loads.len()], loads[(2 * k + 1) % loads.len()]];
            l.add_load(j, &f).unwrap();
        }
        l
    }
}

fn grid_case(diag: impl Strategy<Value = Diagonals>) -> impl Strategy<Value = GridCase> {
    (1usize..6, 1usize..5, 0.5f64..2.0, 0.5f64..2.0, diag).prop_flat_map(|(nx, ny, w, h, diagonals)| {
        let joints = (nx + 1) * (ny + 1);
        prop::collection::vec([-0.15f64..0.15, -0.15f64..0.15], joints).prop_map(move |jitter| GridCase {
            nx,
            ny,
            w,
            h,
            diagonals,
            jitter,
        })
    })
}

/// Supported, loaded grid with per-member moduli and areas.
#[derive(Debug, Clone)]
struct LoadedCase {
    grid: GridCase,
    loads: Vec<f64>,
    young: Vec<f64>,
    areas: Vec<f64>,
}

fn loaded_case() -> impl Strategy<Value = LoadedCase> {
    grid_case(braced()).prop_flat_map(|grid| {
        let n = grid.lattice().num_members();
        (
            Just(grid),
            prop::collection::vec(-2.0f64..2.0, 4),
            prop::collection::vec(0.5f64..5.0, n),
            prop::collection::vec(0.01f64..1.0, n),
        )
            .prop_map(|(grid, mut loads, young, areas)| {
                loads[0] += 3.0;
                LoadedCase {
                    grid,
                    loads,
                    young,
                    areas,
                }
            })
    })
}

fn spde_spec(lattice: &Lattice, sigma: f64, beta: u32, l: f64) -> RandomFieldSpec {
    RandomFieldSpec {
        mean: vec![100.0; lattice.num_members()],
        sigma,
        beta,
        length_scale: LengthScale::Constant(l),
        anisotropy: None,
        dimension: 1,
        normalization: Normalization::Spde,
    }
}

pub fn grid_member_count() -> Result<(), String> {
    run(64, (1usize..12, 1usize..12, diagonals()), |(nx, ny, d)| {
        let l = build_grid_lattice(nx, ny, 1.0, 1.0, d).unwrap();
        let diag = match d {
            Diagonals::None => 0,
            Diagonals::Single => nx * ny,
            Diagonals::Double => 2 * nx * ny,
        };
        ensure(l.num_members() == nx * (ny + 1) + ny * (nx + 1) + diag, || {
            format!("{} members", l.num_members())
        })?;
        ensure(l.num_joints() == (nx + 1) * (ny + 1), || format!("{} joints", l.num_joints()))
    })
}

fn lengths_ok(l: &Lattice) -> Result<(), TestCaseError> {
    for (e, m) in l.members().iter().enumerate() {
        let [a, b] = m.joints;
        let pa = &l.joints()[a].position;
        let pb = &l.joints()[b].position;
        let d = pa.iter().zip(pb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        ensure((m.length - d).abs() <= 1e-12 * d, || format!("member {e}: {} vs {d}", m.length))?;
    }
    Ok(())
}

pub fn member_lengths_match_endpoints() -> Result<(), String> {
    run(32, grid_case(diagonals()), |g| lengths_ok(&g.lattice()))?;
    run(8, (1usize..4, 1usize..4, 1usize..4, 0.3f64..3.0), |(nx, ny, nz, c)| {
        lengths_ok(&build_bcc_lattice(nx, ny, nz, c).unwrap())
    })
}

pub fn line_graph_degree_identity() -> Result<(), String> {
    run(32, grid_case(diagonals()), |g| {
        let l = g.lattice();
        let adj = AdjointLattice::build(&l).unwrap();
        let incident = l.joint_members();
        let expected: usize = incident.iter().map(|m| m.len() * (m.len() - 1) / 2).sum();
        ensure(adj.num_edges() == expected, || format!("{} edges, expected {expected}", adj.num_edges()))?;
        // each joint contributes exactly the pairs of its own members
        let mut pairs: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &(a, b, _) in &adj.edges {
            *pairs.entry((a, b)).or_default() += 1;
        }
        for members in &incident {
            for (p, &a) in members.iter().enumerate() {
                for &b in &members[p + 1..] {
                    let key = (a.min(b), a.max(b));
                    ensure(pairs.get(&key) == Some(&1), || format!("pair {key:?} missing or repeated"))?;
                }
            }
        }
        Ok(())
    })
}

pub fn stiffness_symmetric_psd() -> Result<(), String> {
    run(32, (loaded_case(), any::<u64>()), |(c, seed)| {
        let model = Arc::new(TrussModel::new(c.grid.supported(&c.loads)));
        let k = model.stiffness_matrix(&c.young, &c.areas).unwrap();
        ensure(k.max_asymmetry() == 0.0, || format!("asymmetry {}", k.max_asymmetry()))?;
        ensure(model.assemble(&c.young, &c.areas).is_ok(), || "Cholesky failed".into())?;
        let mut rng = sample_rng(seed, 0);
        for _ in 0..4 {
            let u: Vec<f64> = (0..k.nrows()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let uku = dot(&u, &k.mul_vec(&u));
            let bound = 1e-12 * k.max_abs() * dot(&u, &u) * k.nrows() as f64;
            ensure(uku >= -bound, || format!("u·Ku = {uku}"))?;
        }
        Ok(())
    })
}

pub fn compliance_identity() -> Result<(), String> {
    run(32, loaded_case(), |c| {
        let model = Arc::new(TrussModel::new(c.grid.supported(&c.loads)));
        let sys = model.assemble(&c.young, &c.areas).unwrap();
        let f = model.reduced_loads();
        let u = sys.solve(&f);
        let fu = dot(&f, &u);
        let uku = dot(&u, &sys.matrix().mul_vec(&u));
        ensure((fu - uku).abs() <= 1e-10 * fu.abs(), || format!("f·u = {fu}, u·Ku = {uku}"))
    })
}

pub fn stiffness_linear_in_moduli() -> Result<(), String> {
    run(32, (loaded_case(), 0.1f64..10.0), |(c, scale)| {
        let model = Arc::new(TrussModel::new(c.grid.supported(&c.loads)));
        let scaled: Vec<f64> = c.young.iter().map(|e| e * scale).collect();
        let k1 = dense(&model.stiffness_matrix(&c.young, &c.areas).unwrap());
        let k2 = dense(&model.stiffness_matrix(&scaled, &c.areas).unwrap());
        let err = super::max_abs(&(&k2 - &k1 * scale)) / super::max_abs(&k2);
        ensure(err <= 1e-14, || format!("K(c r) − c K(r): {err:e}"))?;
        let f = model.reduced_loads();
        let u1 = model.assemble(&c.young, &c.areas).unwrap().solve(&f);
        let u2 = model.assemble(&scaled, &c.areas).unwrap().solve(&f);
        let u1c: Vec<f64> = u1.iter().map(|x| x / scale).collect();
        ensure(rel_max_diff(&u2, &u1c) <= 1e-10, || "u(c r) ≠ u(r)/c".into())?;
        let (j1, j2) = (dot(&f, &u1), dot(&f, &u2));
        ensure((j2 - j1 / scale).abs() <= 1e-10 * j2.abs(), || format!("J: {j2} vs {}", j1 / scale))
    })
}

pub fn element_derivatives_match_differences() -> Result<(), String> {
    let h = 1e-6;
    run(
        64,
        (grid_case(braced()), 0.5f64..5.0, 0.05f64..1.0, 0.1f64..0.9),
        |(g, young, span, s)| {
            let l = g.lattice();
            let area = |s: f64| 1e-3 + s * span;
            for m in l.members().iter().take(6) {
                let plus = element_stiffness(m, young + h, area(s)).unwrap();
                let minus = element_stiffness(m, young - h, area(s)).unwrap();
                let exact = dk_dr(m, area(s));
                let cross_p = dk_dr(m, area(s + h));
                let cross_m = dk_dr(m, area(s - h));
                let exact2 = d2k_drds(m, span);
                let scale = exact.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
                let scale2 = exact2.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
                for i in 0..exact.len() {
                    for j in 0..exact.len() {
                        let fd = (plus[i][j] - minus[i][j]) / (2.0 * h);
                        ensure((fd - exact[i][j]).abs() <= 1e-5 * scale, || format!("dK/dr ({i},{j})"))?;
                        let fd2 = (cross_p[i][j] - cross_m[i][j]) / (2.0 * h);
                        ensure((fd2 - exact2[i][j]).abs() <= 1e-5 * scale2, || format!("d²K/drds ({i},{j})"))?;
                    }
                }
            }
            Ok(())
        },
    )
}

#[derive(Debug, Clone)]
struct FieldCase {
    grid: GridCase,
    sigma: f64,
    beta: u32,
    length: f64,
    affine_slope: Option<f64>,
    anisotropy: Option<(f64, f64, f64)>,
    marginal: bool,
}

impl FieldCase {
    fn spec(&self, lattice: &Lattice) -> RandomFieldSpec {
        RandomFieldSpec {
            mean: vec![100.0; lattice.num_members()],
            sigma: self.sigma,
            beta: self.beta,
            length_scale: match self.affine_slope {
                Some(slope) => LengthScale::Affine {
                    axis: 0,
                    offset: self.length,
                    slope,
                },
                None => LengthScale::Constant(self.length),
            },
            anisotropy: self.anisotropy.map(|(angle, d_par, d_perp)| Anisotropy {
                direction: vec![angle.cos(), angle.sin()],
                d_par,
                d_perp,
            }),
            dimension: 2,
            normalization: if self.marginal {
                Normalization::Marginal
            } else {
                Normalization::Spde
            },
        }
    }
}

fn field_case() -> impl Strategy<Value = FieldCase> {
    (
        grid_case(braced()),
        0.1f64..20.0,
        1u32..3,
        0.3f64..6.0,
        prop::option::of(0.0f64..0.5),
        prop::option::of((0.0f64..std::f64::consts::PI, 0.2f64..5.0, 0.2f64..5.0)),
        any::<bool>(),
    )
        .prop_map(|(grid, sigma, beta, length, affine_slope, anisotropy, marginal)| FieldCase {
            grid,
            sigma,
            beta,
            length,
            affine_slope,
            anisotropy,
            marginal,
        })
}

pub fn precision_spd() -> Result<(), String> {
    run(24, field_case(), |c| {
        let l = c.grid.lattice();
        let op = build_precision(&c.spec(&l), &l).map_err(|e| TestCaseError::fail(e.to_string()))?;
        ensure(op.precision().max_asymmetry() <= 1e-12 * op.precision().max_abs(), || {
            "precision not symmetric".into()
        })?;
        let x = vec![1.0; op.dim()];
        let cx = op.covariance_apply(&x).map_err(|e| TestCaseError::fail(e.to_string()))?;
        ensure(dot(&x, &cx) > 0.0, || "1·C1 not positive".into())
    })
}

pub fn line_graph_operators() -> Result<(), String> {
    run(32, grid_case(diagonals()), |g| {
        let ops = assemble_adjoint_operators(&AdjointLattice::build(&g.lattice()).unwrap()).unwrap();
        ensure(ops.mass.iter().all(|m| *m > 0.0), || "non-positive lumped mass".into())?;
        let row_sums = ops.stiffness.mul_vec(&vec![1.0; ops.mass.len()]);
        let worst = row_sums.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        ensure(worst <= 1e-12 * ops.stiffness.max_abs(), || format!("row sum {worst:e}"))
    })
}

/// 1D chain with `n` unit members along the x axis.
pub fn unit_chain(n: usize) -> Lattice {
    let positions = (0..=n).map(|i| vec![i as f64]).collect();
    let members: Vec<[usize; 2]> = (0..n).map(|i| [i, i + 1]).collect();
    Lattice::new(1, positions, &members).unwrap()
}

pub fn chain_marginal_variance() -> Result<(), String> {
    let l = unit_chain(600);
    let (sigma, ell) = (1.0, 10.0);
    let op = build_precision(&spde_spec(&l, sigma, 1, ell), &l).map_err(|e| e.to_string())?;
    let var = op.marginal_variances().map_err(|e| e.to_string())?;
    let margin = (5.0 * ell) as usize;
    let worst = var[margin..var.len() - margin]
        .iter()
        .fold(0.0f64, |a, v| a.max((v / (sigma * sigma) - 1.0).abs()));
    plain(worst <= 0.10, || format!("interior variance off by {:.1}%", 100.0 * worst))
}

/// Largest `|Ĉ − C| / SE` over all entries, with the Gaussian standard error
/// `SE_ij = √((C_ii C_jj + C_ij²)/N)`.
pub fn covariance_z_max(op: &PrecisionOperator, samples: usize, seed: u64) -> Result<f64, String> {
    let n = op.dim();
    let q = dense(op.precision());
    let c = q.try_inverse().ok_or("precision not invertible")?;
    let mut acc = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..samples {
        let x = DVector::from_vec(op.sample_perturbation(&mut sample_rng(seed, i as u64)));
        acc.ger(1.0, &x, &x, 1.0);
    }
    let emp = acc / samples as f64;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            let se = ((c[(i, i)] * c[(j, j)] + c[(i, j)].powi(2)) / samples as f64).sqrt();
            worst = worst.max((emp[(i, j)] - c[(i, j)]).abs() / se);
        }
    }
    Ok(worst)
}

pub fn sampler_covariance_rate() -> Result<(), String> {
    // n_e ≤ 10: triangle, 4-member chain, braced square
    let triangle = Lattice::new(2, vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.4, 0.8]], &[[0, 1], [1, 2], [2, 0]]).unwrap();
    let square = build_grid_lattice(1, 1, 1.0, 1.0, Diagonals::Double).unwrap();
    let cases = [(triangle, 1, 0.7), (unit_chain(4), 2, 1.5), (square, 1, 2.0)];
    for (k, (l, beta, ell)) in cases.iter().enumerate() {
        let op = build_precision(&spde_spec(l, 1.0, *beta, *ell), l).map_err(|e| e.to_string())?;
        for n in [1_000, 10_000, 100_000] {
            let z = covariance_z_max(&op, n, 11 + k as u64)?;
            plain(z <= 4.5, || format!("case {k}, N = {n}: max |Ĉ − C| = {z:.2} SE"))?;
        }
    }
    Ok(())
}

pub fn nonstationary_correlation_trend() -> Result<(), String> {
    let l = build_grid_lattice(50, 30, 1.0, 1.0, Diagonals::Double).unwrap();
    let mut spec = spde_spec(&l, 10.0, 1, 1.0);
    spec.dimension = 2;
    spec.length_scale = LengthScale::Affine {
        axis: 0,
        offset: 3.0,
        slope: 17.0 / 50.0,
    };
    let op = build_precision(&spec, &l).map_err(|e| e.to_string())?;
    let adj = AdjointLattice::build(&l).unwrap();
    let count = 500;
    let n = op.dim();
    let samples: Vec<Vec<f64>> = (0..count)
        .map(|i| op.sample_perturbation(&mut sample_rng(7, i)))
        .collect();
    let mut var = vec![0.0; n];
    for s in &samples {
        for (v, x) in var.iter_mut().zip(s) {
            *v += x * x;
        }
    }
    let slabs = 5;
    let mut sums = vec![(0.0, 0usize); slabs];
    for &(a, b, _) in &adj.edges {
        let cov: f64 = samples.iter().map(|s| s[a] * s[b]).sum();
        let rho = cov / (var[a] * var[b]).sqrt();
        let x = 0.5 * (adj.positions[a][0] + adj.positions[b][0]);
        let k = ((x / 50.0 * slabs as f64) as usize).min(slabs - 1);
        sums[k].0 += rho;
        sums[k].1 += 1;
    }
    let means: Vec<f64> = sums.iter().map(|(s, c)| s / *c as f64).collect();
    plain(means.windows(2).all(|w| w[1] >= w[0] - 0.01), || {
        format!("slab lag-1 correlations {means:?}")
    })
}

fn spde_field(lattice: &Lattice, beta: u32, ell: f64, sigma: f64) -> Arc<PrecisionOperator> {
    let mut spec = spde_spec(lattice, sigma, beta, ell);
    spec.dimension = lattice.dim();
    Arc::new(build_precision(&spec, lattice).unwrap())
}

pub fn variance_matches_dense_covariance() -> Result<(), String> {
    let small = loaded_case().prop_filter("n_e ≤ 40", |c| c.areas.len() <= 40);
    run(16, (small, 1u32..3, 0.5f64..4.0), |(c, beta, ell)| {
        let l = c.grid.supported(&c.loads);
        let field = spde_field(&l, beta, ell, 5.0);
        let model = Arc::new(TrussModel::new(l));
        let stats = compliance_statistics(&model, &c.areas, field.as_ref(), None).unwrap();
        let cov = dense(field.precision()).try_inverse().unwrap();
        let g = DVector::from_vec(stats.dj_dr.clone());
        let var = g.dot(&(&cov * &g));
        let got = stats.std_dev * stats.std_dev;
        ensure((got - var).abs() <= 1e-10 * var, || format!("σ_J² = {got}, dense {var}"))
    })
}

pub fn gradient_paths_agree() -> Result<(), String> {
    run(16, (loaded_case(), 1u32..3, 0.5f64..4.0), |(c, beta, ell)| {
        let l = c.grid.supported(&c.loads);
        let field = spde_field(&l, beta, ell, 5.0);
        let model = Arc::new(TrussModel::new(l));
        let a = compliance_statistics(&model, &c.areas, field.as_ref(), Some(GradientPath::Adjoint)).unwrap();
        let b = compliance_statistics(&model, &c.areas, field.as_ref(), Some(GradientPath::PerMember)).unwrap();
        let err = rel_max_diff(&a.grad_std, &b.grad_std);
        ensure(err <= 1e-10, || format!("paths differ by {err:e}"))
    })
}

pub fn load_scaling() -> Result<(), String> {
    run(16, (loaded_case(), 0.1f64..10.0), |(c, k)| {
        let l = c.grid.supported(&c.loads);
        let field = spde_field(&l, 1, 2.0, 5.0);
        let base = Arc::new(TrussModel::new(l.clone()));
        let scaled = Arc::new(TrussModel::new(l.with_scaled_loads(k)));
        let path = Some(GradientPath::Adjoint);
        let a = compliance_statistics(&base, &c.areas, field.as_ref(), path).unwrap();
        let b = compliance_statistics(&scaled, &c.areas, field.as_ref(), path).unwrap();
        let k2 = k * k;
        ensure((b.mean - k2 * a.mean).abs() <= 1e-10 * b.mean, || "J̄ not scaled by c²".into())?;
        ensure((b.std_dev - k2 * a.std_dev).abs() <= 1e-10 * b.std_dev, || "σ_J not scaled by c²".into())?;
        let gm: Vec<f64> = a.grad_mean.iter().map(|g| g * k2).collect();
        let gs: Vec<f64> = a.grad_std.iter().map(|g| g * k2).collect();
        ensure(rel_max_diff(&b.grad_mean, &gm) <= 1e-10, || "∂J̄/∂A not scaled by c²".into())?;
        ensure(rel_max_diff(&b.grad_std, &gs) <= 1e-10, || "∂σ_J/∂A not scaled by c²".into())
    })
}

pub fn mean_field_scaling() -> Result<(), String> {
    run(16, (loaded_case(), 0.1f64..10.0), |(c, k)| {
        let model = Arc::new(TrussModel::new(c.grid.supported(&c.loads)));
        let a = UncorrelatedField::new(c.young.clone(), 0.1).unwrap();
        let b = UncorrelatedField::new(c.young.iter().map(|e| e * k).collect(), 0.1).unwrap();
        let ja = compliance_statistics(&model, &c.areas, &a, None).unwrap().mean;
        let jb = compliance_statistics(&model, &c.areas, &b, None).unwrap().mean;
        ensure((jb - ja / k).abs() <= 1e-10 * jb, || format!("J̄(c r̄) = {jb}, J̄(r̄)/c = {}", ja / k))
    })
}

/// Perturbation and Monte Carlo `σ_J` on the verification lattice at the
/// uniform start design, `σ/Ē = 0.1`.
pub fn verification_sigma_comparison(samples: usize, seed: u64) -> (f64, f64) {
    let p = plain_problem(verification_lattice(), 100.0, 10.0, 0.5);
    let s = p.initial_design().unwrap();
    let areas = p.design.areas_from_design(&s).unwrap().areas;
    let stats = compliance_statistics(&p.model, &areas, p.field.as_ref(), None).unwrap();
    let mc = monte_carlo_validate(&p.model, &areas, p.field.as_ref(), samples, seed).unwrap();
    (stats.std_dev, mc.std_dev)
}

pub fn first_order_matches_monte_carlo() -> Result<(), String> {
    let (pert, mc) = verification_sigma_comparison(100_000, 5);
    let rel = (pert - mc).abs() / mc;
    plain(rel <= 0.05, || format!("σ_J {pert:.5e} vs Monte Carlo {mc:.5e} ({:.2}%)", 100.0 * rel))
}

pub fn filter_properties() -> Result<(), String> {
    run(32, (grid_case(diagonals()), 0.0f64..3.0, any::<u64>()), |(g, radius, seed)| {
        let l = g.lattice();
        let f = FilterOperator::build(&l, radius).unwrap();
        let n = l.num_members();
        let ones = f.apply(&vec![1.0; n]);
        ensure(ones.iter().all(|x| (x - 1.0).abs() <= 1e-14), || "rows do not sum to 1".into())?;
        ensure(f.weights().values().iter().all(|w| *w >= 0.0), || "negative weight".into())?;
        let c = f.apply(&vec![0.37; n]);
        ensure(c.iter().all(|x| (x - 0.37).abs() <= 1e-14), || "constant not preserved".into())?;
        let mut rng = sample_rng(seed, 0);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let t = f.apply(&s);
        let (lo, hi) = s.iter().fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(*x), b.max(*x)));
        ensure(t.iter().all(|x| *x >= lo - 1e-14 && *x <= hi + 1e-14), || "not a contraction".into())
    })
}

fn control_polygon() -> impl Strategy<Value = [[f64; 2]; 6]> {
    (0.3f64..0.8, 0.05f64..0.5, prop::array::uniform3(0.0f64..1.0), prop::array::uniform3(0.0f64..1.0)).prop_map(|(t, frac, mut xs, mut ys)| {
        let x4 = t * (1.0 - frac);
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        // strictly increasing abscissae inside (0, x4)
        let xs: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x4 * (0.05 + 0.9 * (i as f64 + x) / 3.0)).collect();
        [
            [0.0, 0.0],
            [xs[0], ys[0] * x4],
            [xs[1], ys[1] * x4],
            [xs[2], ys[2] * x4],
            [x4, x4],
            [t, t],
        ]
    })
}

fn curve_shape(curve: &PenalizationCurve) -> Result<(), TestCaseError> {
    let t = curve.threshold();
    ensure(curve.eval(0.0).0 == 0.0, || "s̃(0) ≠ 0".into())?;
    for k in 0..=20 {
        let s = t + (1.0 - t) * k as f64 / 20.0;
        ensure(curve.eval(s) == (s, 1.0), || format!("not the identity at {s}"))?;
    }
    let (v, d) = curve.eval(t - 1e-9);
    ensure((v - (t - 1e-9)).abs() <= 1e-8 && (d - 1.0).abs() <= 1e-6, || {
        format!("not C¹ at s*: value {v}, slope {d}")
    })?;
    let mut prev = 0.0;
    for k in 0..=2000 {
        let s = k as f64 / 2000.0;
        let (v, d) = curve.eval(s);
        ensure((0.0..=1.0).contains(&v), || format!("s̃({s}) = {v} outside [0, 1]"))?;
        ensure(v >= prev - 1e-14 && d >= -1e-12, || format!("decreasing at {s}"))?;
        prev = v;
    }
    // slope agrees with differences away from the knots
    for k in 1..40 {
        let s = t * k as f64 / 40.0;
        let h = 1e-7;
        let fd = (curve.eval(s + h).0 - curve.eval(s - h).0) / (2.0 * h);
        ensure((fd - curve.eval(s).1).abs() <= 1e-5 * (1.0 + fd.abs()), || format!("slope at {s}"))?;
    }
    Ok(())
}

pub fn penalty_curve_shape() -> Result<(), String> {
    for p in [PenaltyPreset::Default, PenaltyPreset::Mild] {
        curve_shape(&PenalizationCurve::from_preset(p)).map_err(|e| format!("{p:?}: {e}"))?;
    }
    run(48, control_polygon(), |control| {
        let curve = PenalizationCurve::new(control).map_err(|e| TestCaseError::fail(e.to_string()))?;
        curve_shape(&curve)
    })
}

/// Filtered, penalised problem on a jittered `6 × 4` grid with a correlated field.
pub fn pipeline_problem(jitter_seed: u64, alpha: f64) -> OptimizationProblem {
    let base = build_grid_lattice(6, 4, 1.0, 1.0, Diagonals::Double).unwrap();
    let mut rng = sample_rng(jitter_seed, 0);
    let positions: Vec<Vec<f64>> = base
        .joints()
        .iter()
        .map(|j| j.position.iter().map(|x| x + rng.random_range(-0.15..0.15)).collect())
        .collect();
    let members: Vec<[usize; 2]> = base.members().iter().map(|m| m.joints).collect();
    let mut l = Lattice::new(2, positions, &members).unwrap();
    for j in l.select_joints(|p| p[0] < 0.5) {
        l.fix_joint(j).unwrap();
    }
    let right = l.select_joints(|p| p[0] > 5.5);
    for j in right {
        l.add_load(j, &[rng.random_range(-1.0..1.0), -1.0]).unwrap();
    }
    let mut spec = spde_spec(&l, 10.0, 1, 2.0);
    spec.dimension = 2;
    let field = Arc::new(build_precision(&spec, &l).unwrap());
    let design = DesignMap::new(&l, 1.5, Some(PenalizationCurve::from_preset(PenaltyPreset::Mild)), 1e-3, 1.0).unwrap();
    OptimizationProblem {
        model: Arc::new(TrussModel::new(l)),
        field,
        design,
        volume_max: 10.0,
        alpha,
        reference: Reference {
            mean: 1.0,
            std_dev: 1.0,
        },
        gradient_path: GradientPath::Adjoint,
    }
}

/// Central differences of the objective and constraint with full re-solves.
pub fn finite_difference(p: &OptimizationProblem, s: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let mut obj = Vec::with_capacity(s.len());
    let mut con = Vec::with_capacity(s.len());
    for e in 0..s.len() {
        let mut plus = s.to_vec();
        let mut minus = s.to_vec();
        plus[e] += h;
        minus[e] -= h;
        let a = p.evaluate(&plus).unwrap();
        let b = p.evaluate(&minus).unwrap();
        obj.push((a.objective - b.objective) / (2.0 * h));
        con.push((a.constraint - b.constraint) / (2.0 * h));
    }
    (obj, con)
}

/// Design drawn away from the bounds so that `s ± h` stays admissible.
pub fn random_design(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = sample_rng(seed, 1);
    (0..n).map(|_| rng.random_range(0.05..0.95)).collect()
}

pub fn pipeline_gradient_matches_differences() -> Result<(), String> {
    run(4, (any::<u64>(), 0.0f64..=1.0), |(seed, alpha)| {
        let p = pipeline_problem(seed, alpha);
        let s = random_design(p.design.len(), seed);
        let e = p.evaluate(&s).unwrap();
        let (fo, fc) = finite_difference(&p, &s, 1e-6);
        let eo = rel_max_diff(&e.objective_gradient, &fo);
        let ec = rel_max_diff(&e.constraint_gradient, &fc);
        ensure(eo <= 1e-5 && ec <= 1e-5, || format!("objective {eo:e}, constraint {ec:e}"))
    })
}

pub fn mma_iterates_within_bounds() -> Result<(), String> {
    let problem = (2usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(0.1f64..5.0, n),
            prop::collection::vec(0.1f64..2.0, n),
            0.1f64..0.9,
        )
    });
    run(48, problem, |(x0, target, weight, cost, budget)| {
        let n = x0.len();
        let mut st = MmaState::new(x0, MmaOptions::default()).unwrap();
        let limit = budget * cost.iter().sum::<f64>();
        for _ in 0..40 {
            let x = st.x.clone();
            let f: f64 = (0..n).map(|j| weight[j] * (x[j] - 1.5 * target[j] + 0.2).powi(2)).sum();
            let df: Vec<f64> = (0..n).map(|j| 2.0 * weight[j] * (x[j] - 1.5 * target[j] + 0.2)).collect();
            let g = dot(&cost, &x) - limit;
            let next = st.step(f, &df, g, &cost).map_err(|e| TestCaseError::fail(e.to_string()))?;
            ensure(next.iter().all(|v| (0.0..=1.0).contains(v)), || format!("iterate outside [0, 1]: {next:?}"))?;
        }
        Ok(())
    })
}

pub fn seeded_runs_deterministic() -> Result<(), String> {
    let p = pipeline_problem(3, 0.5);
    let stop = StopCriteria {
        max_iterations: 30,
        tolerance: 1e-4,
    };
    let a = optimize(&p, None, stop, MmaOptions::default()).map_err(|e| e.to_string())?;
    let b = optimize(&p, None, stop, MmaOptions::default()).map_err(|e| e.to_string())?;
    plain(a.history == b.history && a.design == b.design, || "optimiser histories differ".into())?;
    let field = p.field.as_ref();
    let x = field.sample(&mut sample_rng(9, 4));
    let y = field.sample(&mut sample_rng(9, 4));
    let z = field.sample(&mut sample_rng(9, 5));
    plain(x == y && x != z, || "field samples not reproducible per (seed, index)".into())?;
    let areas = p.design.areas_from_design(&a.design).unwrap().areas;
    let m1 = monte_carlo_validate(&p.model, &areas, field, 200, 3).map_err(|e| e.to_string())?;
    let m2 = monte_carlo_validate(&p.model, &areas, field, 200, 3).map_err(|e| e.to_string())?;
    plain(m1 == m2, || "Monte Carlo reports differ".into())
}

pub fn converged_volume_feasible() -> Result<(), String> {
    for alpha in [1.0, 0.0] {
        let mut p = plain_problem(verification_lattice(), 100.0, 10.0, 0.5);
        p.alpha = alpha;
        let r = optimize(&p, None, StopCriteria::default(), MmaOptions::default()).map_err(|e| e.to_string())?;
        plain(r.evaluation.constraint <= 1e-6 * p.volume_max, || {
            format!("α = {alpha}: g = {:e}", r.evaluation.constraint)
        })?;
    }
    Ok(())
}
