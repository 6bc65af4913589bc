//! Convergence harness: driver-family recipes, rate studies against the
//! oracles, the pathwise bound check with its calibration protocol,
//! stopping-time statistics, and distributional convergence.
//!
//! Seeds are deterministic per (study, h-index, replicate) so any row can be
//! replayed in isolation; parallel fan-outs collect in index order so reruns
//! produce identical tables.

use crate::driver::{
    check_cfl, exit_time_moments, regularize_with_modulus, sample_brownian, scaled_random_walk,
    stopping_time_partition, ExitMoments, Modulus, StoppingTimeFamily,
};
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::oracle::{pathwise_oracle, reference_fallback, sup_error_against_reference, OracleRun};
use crate::path::{Partition, PiecewisePath};
use crate::problem::Problem;
use crate::rng::study_seed;
use crate::scheme::{evolve, EpsRule, EvolveRecord, SchemeKind, SchemeSpec, SnapshotPolicy};
use crate::stats::{fit_rate, mean, median, quantile, two_sample_ks, FitResult};
use rayon::prelude::*;

/// Shared knobs for the studies.
#[derive(Debug, Clone)]
pub struct HarnessCfg {
    pub horizon: f64,
    /// lambda = lambda_frac * lambda0 in the regularization recipes.
    pub lambda_frac: f64,
    /// Fine sampling step for Brownian drivers (stopping-time recipes refine
    /// it further to threshold^2 / 64 when needed).
    pub dt_fine: f64,
    /// Number of probe times for sup-error measurement.
    pub probes: usize,
    pub seed_offset: u64,
}

impl Default for HarnessCfg {
    fn default() -> Self {
        HarnessCfg {
            horizon: 0.5,
            lambda_frac: 0.9,
            dt_fine: 1e-4,
            probes: 8,
            seed_offset: 0,
        }
    }
}

pub fn driver_ids() -> &'static [&'static str] {
    &[
        "brownian_regular",
        "brownian_stopping",
        "lipschitz_ramp",
        "random_walk",
    ]
}

/// How the approximating path and partition are produced for a given h.
#[derive(Clone)]
pub enum DriverFamily {
    /// A fixed continuous path with its analytic modulus of continuity.
    FixedPath {
        path: PiecewisePath,
        modulus: Modulus,
    },
    /// Brownian sample regularized on regular partitions under the Levy modulus.
    BrownianRegular,
    /// Brownian sample with oscillation stopping times.
    BrownianStopping,
    /// Parabolically scaled simple random walk.
    RandomWalk,
}

impl DriverFamily {
    pub fn id(&self) -> &'static str {
        match self {
            DriverFamily::FixedPath { .. } => "fixed_path",
            DriverFamily::BrownianRegular => "brownian_regular",
            DriverFamily::BrownianStopping => "brownian_stopping",
            DriverFamily::RandomWalk => "random_walk",
        }
    }

    /// Ramp W(t) = t with its Lipschitz modulus: the classical setting.
    pub fn lipschitz_ramp(horizon: f64) -> Result<Self> {
        Ok(DriverFamily::FixedPath {
            path: PiecewisePath::linear(1.0, horizon)?,
            modulus: Modulus::lipschitz(1.0),
        })
    }
}

/// Output of a driver recipe at one h.
pub struct DriverBuild {
    pub rho: f64,
    pub partition: Partition,
    /// The regularized driver the scheme steps over.
    pub path: PiecewisePath,
    /// The target path the exact solution is driven by.
    pub truth: PiecewisePath,
    pub stopping: Option<StoppingTimeFamily>,
    pub rescales: usize,
}

pub fn build_driver(
    family: &DriverFamily,
    h: f64,
    lambda0: f64,
    seed: u64,
    cfg: &HarnessCfg,
) -> Result<DriverBuild> {
    let lambda = cfg.lambda_frac * lambda0;
    match family {
        DriverFamily::FixedPath { path, modulus } => {
            let (partition, wh, rho, rescales) =
                regularize_with_modulus(path, modulus, h, lambda, lambda0, cfg.horizon)?;
            Ok(DriverBuild {
                rho,
                partition,
                path: wh,
                truth: path.clone(),
                stopping: None,
                rescales,
            })
        }
        DriverFamily::BrownianRegular => {
            let w = sample_brownian(seed, cfg.horizon, cfg.dt_fine)?;
            let (partition, wh, rho, rescales) =
                regularize_with_modulus(&w, &Modulus::levy(), h, lambda, lambda0, cfg.horizon)?;
            Ok(DriverBuild {
                rho,
                partition,
                path: wh,
                truth: w,
                stopping: None,
                rescales,
            })
        }
        DriverFamily::BrownianStopping => {
            let eta = h.powf(1.0 / 3.0) / h.ln().abs().powf(2.0 / 3.0);
            let fine = (eta * eta / crate::driver::STOPPING_DETECTION_FACTOR).min(cfg.dt_fine);
            let w = sample_brownian(seed, cfg.horizon, fine)?;
            let (family, partition, wh) = stopping_time_partition(&w, h, lambda0)?;
            Ok(DriverBuild {
                rho: partition.mesh(),
                partition,
                path: wh,
                truth: w,
                stopping: Some(family),
                rescales: 0,
            })
        }
        DriverFamily::RandomWalk => {
            let (partition, wh) = scaled_random_walk(seed, h, lambda, lambda0, cfg.horizon)?;
            // The walk approximates the Brownian law; pathwise, the scheme is
            // measured against the solution driven by the walk itself.
            Ok(DriverBuild {
                rho: (lambda * h).powf(4.0 / 3.0),
                partition,
                path: wh.clone(),
                truth: wh,
                stopping: None,
                rescales: 0,
            })
        }
    }
}

/// Scheme spec for a catalogue problem.
pub fn build_scheme(problem: &Problem, kind: SchemeKind, theta: f64) -> Result<SchemeSpec> {
    match kind {
        SchemeKind::LfFirstOrder => {
            SchemeSpec::lf_first_order(problem.hamiltonian.clone(), theta)
        }
        SchemeKind::Upwind => SchemeSpec::upwind(problem.hamiltonian.clone()),
        SchemeKind::LfSecondOrder => {
            let diffusion = problem.diffusion.clone().ok_or(Error::InvalidParameter {
                what: "problem",
                why: "second-order scheme needs a diffusion".into(),
            })?;
            SchemeSpec::lf_second_order(
                problem.hamiltonian.clone(),
                diffusion,
                theta,
                EpsRule::PathSlope { factor: 1.0 },
            )
        }
        SchemeKind::TrotterKato => {
            SchemeSpec::trotter_kato(problem.hamiltonian.clone(), problem.diffusion.clone())
        }
    }
}

/// Evenly spaced probe targets (j T / probes), matched later to partition times.
pub fn probe_targets(horizon: f64, probes: usize) -> Vec<f64> {
    (1..=probes.max(1))
        .map(|j| horizon * j as f64 / probes.max(1) as f64)
        .collect()
}

/// For the second-order scheme the partition is refined to meet the parabolic
/// step bound dt <= 0.9 h^2 / (2 (||F'|| + eps_h)) before stepping.
fn prepare_partition(
    spec: &SchemeSpec,
    build_partition: &Partition,
    path: &PiecewisePath,
    h: f64,
) -> Result<Partition> {
    if spec.kind != SchemeKind::LfSecondOrder {
        return Ok(build_partition.clone());
    }
    let times = build_partition.times();
    let mut wdot: f64 = 0.0;
    for n in 0..build_partition.intervals() {
        let dz = path.eval_scalar(times[n + 1])? - path.eval_scalar(times[n])?;
        wdot = wdot.max(dz.abs() / (times[n + 1] - times[n]));
    }
    let eps = match spec.eps_rule {
        EpsRule::PathSlope { factor } => factor * h * wdot,
        EpsRule::Fixed(e) => e,
    };
    let fprime = spec
        .diffusion
        .as_ref()
        .map(|f| f.derivative_bound())
        .unwrap_or(0.0);
    let dt_cap = 0.9 * h * h / (2.0 * (fprime + eps)).max(1e-300);
    build_partition.refine_max_dt(dt_cap)
}

/// Evolve the scheme for one (h, seed) row and return the record plus the
/// driver build it ran on.
pub fn run_row(
    problem: &Problem,
    spec: &SchemeSpec,
    family: &DriverFamily,
    grid: Grid1D,
    h: f64,
    seed: u64,
    cfg: &HarnessCfg,
) -> Result<(DriverBuild, EvolveRecord)> {
    let build = build_driver(family, h, spec.lambda0, seed, cfg)?;
    let partition = prepare_partition(spec, &build.partition, &build.path, h)?;
    let record = evolve(
        spec,
        grid,
        &problem.initial,
        &build.path,
        &partition,
        SnapshotPolicy::At(probe_targets(cfg.horizon, cfg.probes)),
    )?;
    Ok((build, record))
}

/// Sup distance between a record and an oracle run probed at the same times.
pub fn sup_error_against_oracle(record: &EvolveRecord, oracle: &OracleRun) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, &t) in record.times.iter().enumerate() {
        let snap = oracle.snapshot_at(t).ok_or_else(|| {
            Error::InvalidParameter {
                what: "oracle",
                why: format!("no oracle snapshot at t = {t}"),
            }
        })?;
        worst = worst.max(record.snapshots[i].sup_distance(snap));
    }
    Ok(worst)
}

/// Optional divisor applied to errors before the log-log fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correction {
    None,
    /// error / (h^{1/3} |log h|^{1/3})
    HCubeRootLog,
    /// error / (rho^{1/4} |log rho|^{1/2})
    RhoQuarterLog,
}

impl Correction {
    pub fn divisor(&self, h: f64, rho: f64) -> f64 {
        match self {
            Correction::None => 1.0,
            Correction::HCubeRootLog => h.powf(1.0 / 3.0) * h.ln().abs().powf(1.0 / 3.0),
            Correction::RhoQuarterLog => rho.powf(0.25) * rho.ln().abs().powf(0.5),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Correction::None => "none",
            Correction::HCubeRootLog => "h13log13",
            Correction::RhoQuarterLog => "rho14log12",
        }
    }
}

/// How the reference solution for a rate study is produced.
#[derive(Debug, Clone, Copy)]
pub enum ReferenceKind {
    /// Exact Lax-Oleinik composition on the truth path (convex H, F = 0).
    PathwiseOracle,
    /// Same scheme at spacing h / refinement (flagged non-exact).
    Fallback { refinement: usize },
}

#[derive(Debug, Clone)]
pub struct RateRow {
    pub h: f64,
    pub rho: f64,
    pub seed: u64,
    pub sup_error: f64,
    pub corrected: f64,
}

#[derive(Debug, Clone)]
pub struct RateReport {
    pub study: String,
    pub correction: Correction,
    pub rows: Vec<RateRow>,
    pub skipped: Vec<(f64, String)>,
    /// Per h (descending): median raw and corrected errors over seeds.
    pub medians: Vec<(f64, f64)>,
    pub corrected_medians: Vec<(f64, f64)>,
    pub fit: FitResult,
    /// max/min of the corrected medians.
    pub corrected_spread: f64,
    pub max_discrete_lipschitz: f64,
    pub declared_lipschitz: f64,
}

pub struct RateStudyCfg {
    pub study: String,
    pub problem: Problem,
    pub scheme: SchemeKind,
    pub theta: f64,
    pub family: DriverFamily,
    pub reference: ReferenceKind,
    pub h_list: Vec<f64>,
    pub seeds: u32,
    pub correction: Correction,
    pub harness: HarnessCfg,
}

/// Rate study: for each h and seed, build the driver, evolve, compare to the
/// reference at the probe times, fit the slope of the per-h medians.
pub fn rate_study(cfg: &RateStudyCfg) -> Result<RateReport> {
    if cfg.h_list.len() < 2 {
        return Err(Error::InvalidParameter {
            what: "h_list",
            why: "need at least 2 grid spacings".into(),
        });
    }
    if cfg.h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter {
            what: "h_list",
            why: "h_list must be strictly decreasing".into(),
        });
    }
    let spec = build_scheme(&cfg.problem, cfg.scheme, cfg.theta)?;
    let period = cfg.problem.initial.period();
    // (h_eff, rho, sup error, max discrete Lipschitz) per finished row.
    type RowOut = (f64, f64, f64, f64);
    let jobs: Vec<(usize, u64)> = (0..cfg.h_list.len())
        .flat_map(|hi| (0..cfg.seeds).map(move |r| (hi, r as u64)))
        .collect();
    let results: Vec<(usize, u64, Result<RowOut>)> = jobs
        .par_iter()
        .map(|&(hi, rep)| {
            let h = cfg.h_list[hi];
            let seed = study_seed(&cfg.study, hi as u64, rep, cfg.harness.seed_offset);
            let out = rate_row(cfg, &spec, period, h, seed);
            (hi, seed, out)
        })
        .collect();

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut max_discrete_lipschitz = 0.0f64;
    for (hi, seed, out) in results {
        match out {
            Ok((h_eff, rho, err, lip)) => {
                let corrected = err / cfg.correction.divisor(h_eff, rho);
                max_discrete_lipschitz = max_discrete_lipschitz.max(lip);
                rows.push(RateRow {
                    h: h_eff,
                    rho,
                    seed,
                    sup_error: err,
                    corrected,
                });
            }
            Err(e) => skipped.push((cfg.h_list[hi], e.to_string())),
        }
    }

    if rows.is_empty() {
        return Err(Error::InvalidParameter {
            what: "rate_study",
            why: format!("all rows failed; first: {:?}", skipped.first()),
        });
    }
    let mut medians = Vec::new();
    let mut corrected_medians = Vec::new();
    for &h in &cfg.h_list {
        // Group by the effective spacing the grid actually used.
        let nodes = (period / h).round().max(4.0);
        let h_eff = period / nodes;
        let errs: Vec<f64> = rows
            .iter()
            .filter(|r| (r.h - h_eff).abs() <= 1e-12 * h_eff)
            .map(|r| r.sup_error)
            .collect();
        if errs.is_empty() {
            continue;
        }
        let cors: Vec<f64> = rows
            .iter()
            .filter(|r| (r.h - h_eff).abs() <= 1e-12 * h_eff)
            .map(|r| r.corrected)
            .collect();
        medians.push((h_eff, median(&errs)));
        corrected_medians.push((h_eff, median(&cors)));
    }
    let fit = fit_rate(&medians, None)?;
    let finite: Vec<f64> = corrected_medians
        .iter()
        .map(|&(_, c)| c)
        .filter(|c| c.is_finite() && *c > 0.0)
        .collect();
    let corrected_spread = if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            / finite.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    Ok(RateReport {
        study: cfg.study.clone(),
        correction: cfg.correction,
        rows,
        skipped,
        medians,
        corrected_medians,
        fit,
        corrected_spread,
        max_discrete_lipschitz,
        declared_lipschitz: cfg.problem.initial.lipschitz_constant(),
    })
}

fn rate_row(
    cfg: &RateStudyCfg,
    spec: &SchemeSpec,
    period: f64,
    h: f64,
    seed: u64,
) -> Result<(f64, f64, f64, f64)> {
    let nodes = (period / h).round().max(4.0) as usize;
    let grid = Grid1D::new(period, nodes)?;
    let h_eff = grid.spacing();
    let (build, record) = run_row(&cfg.problem, spec, &cfg.family, grid, h_eff, seed, &cfg.harness)?;
    let err = match cfg.reference {
        ReferenceKind::PathwiseOracle => {
            let oracle = pathwise_oracle(
                grid,
                &cfg.problem.initial,
                &build.truth,
                &cfg.problem.hamiltonian,
                &record.times,
                Some((&build.path, 1.0)),
            )?;
            sup_error_against_oracle(&record, &oracle)?
        }
        ReferenceKind::Fallback { refinement } => {
            let family = cfg.family.clone();
            let harness = cfg.harness.clone();
            let spec_c = spec.clone();
            let builder = move |h_fine: f64| -> Result<(Partition, PiecewisePath)> {
                let b = build_driver(&family, h_fine, spec_c.lambda0, seed, &harness)?;
                let p = prepare_partition(&spec_c, &b.partition, &b.path, h_fine)?;
                Ok((p, b.path))
            };
            let reference = reference_fallback(
                spec,
                &cfg.problem.initial,
                grid,
                refinement,
                &builder,
                &record.times,
                crate::oracle::DEFAULT_NODE_STEP_BUDGET,
            )?;
            sup_error_against_reference(&record, &reference)
        }
    };
    Ok((h_eff, build.rho, err, record.max_discrete_lipschitz))
}

/// Exact maximum of c |zeta(s) - zeta(t)| - |s - t|^2 / (2 eps) over
/// [0, T]^2 for a piecewise-linear path: cell-by-cell over segment pairs, the
/// objective is linear in s + t and concave in s - t on each branch of the
/// absolute value, so edge candidates plus per-edge stationary points cover
/// the maximum.
pub fn penalization_max(zeta: &PiecewisePath, c: f64, eps: f64) -> f64 {
    let times = zeta.times();
    let n = times.len() - 1;
    let osc_total = zeta.osc(0.0, zeta.horizon()).unwrap_or(0.0);
    let mut best = 0.0f64; // s = t gives 0
    let value = |s: f64, t: f64| -> f64 {
        let ds = zeta.eval_scalar(s).unwrap() - zeta.eval_scalar(t).unwrap();
        c * ds.abs() - (s - t) * (s - t) / (2.0 * eps)
    };
    for i in 0..n {
        let (s0, s1) = (times[i], times[i + 1]);
        let sa = zeta.value(i, 0);
        let slope_s = (zeta.value(i + 1, 0) - sa) / (s1 - s0);
        for j in 0..n {
            let (t0, t1) = (times[j], times[j + 1]);
            let gap = if s1 < t0 {
                t0 - s1
            } else if t1 < s0 {
                s0 - t1
            } else {
                0.0
            };
            if c * osc_total - gap * gap / (2.0 * eps) <= best {
                continue;
            }
            let ta = zeta.value(j, 0);
            let slope_t = (zeta.value(j + 1, 0) - ta) / (t1 - t0);
            // Four edges; on each, one variable is fixed and the objective is
            // a concave quadratic per branch of |.|.
            for &(fix_t, t_hat) in &[(true, t0), (true, t1)] {
                let _ = fix_t;
                for sigma in [1.0f64, -1.0] {
                    let s_star = (t_hat + sigma * c * slope_s * eps).clamp(s0, s1);
                    for s in [s0, s1, s_star] {
                        best = best.max(value(s, t_hat));
                    }
                }
            }
            for &s_hat in &[s0, s1] {
                for sigma in [1.0f64, -1.0] {
                    let t_star = (s_hat - sigma * c * slope_t * eps).clamp(t0, t1);
                    for t in [t0, t1, t_star] {
                        best = best.max(value(s_hat, t));
                    }
                }
            }
        }
    }
    best
}

/// One pathwise error-bound record at a single epsilon.
#[derive(Debug, Clone)]
pub struct BoundCheckRecord {
    pub path_index: usize,
    pub epsilon: f64,
    pub sum_dt_squared: f64,
    pub intervals: usize,
    pub h: f64,
    pub penalization: f64,
    pub rhs: f64,
    pub measured: f64,
    pub pass: bool,
}

/// Evaluate the pathwise estimate for one admissible (zeta, partition) pair:
/// measured sup error against the exact solution driven by zeta, compared to
/// (1/eps) sum dt^2 + C sqrt(N) h + max { C |zeta(s)-zeta(t)| - |s-t|^2/(2 eps) }
/// across the epsilon sweep.
#[allow(clippy::too_many_arguments)]
pub fn bound_check(
    problem: &Problem,
    spec: &SchemeSpec,
    grid: Grid1D,
    zeta: &PiecewisePath,
    partition: &Partition,
    eps_list: &[f64],
    c_hat: f64,
    cfg: &HarnessCfg,
    path_index: usize,
) -> Result<Vec<BoundCheckRecord>> {
    if zeta.eval_scalar(0.0)?.abs() > 1e-12 {
        return Err(Error::PremiseViolation("zeta(0) must be 0".into()));
    }
    let h = grid.spacing();
    let report = check_cfl(zeta, partition, h, spec.lambda0)?;
    if !report.admissible {
        return Err(Error::PremiseViolation(format!(
            "per-interval increment ratio {} above 1",
            report.worst_ratio
        )));
    }
    let record = evolve(
        spec,
        grid,
        &problem.initial,
        zeta,
        partition,
        SnapshotPolicy::At(probe_targets(partition.horizon(), cfg.probes)),
    )?;
    let oracle = pathwise_oracle(
        grid,
        &problem.initial,
        zeta,
        &problem.hamiltonian,
        &record.times,
        None,
    )?;
    let measured = sup_error_against_oracle(&record, &oracle)?;
    let sum_dt2 = partition.sum_dt_squared();
    let n_intervals = partition.intervals();
    let sqrt_n_h = (n_intervals as f64).sqrt() * h;
    Ok(eps_list
        .iter()
        .map(|&eps| {
            let penal = penalization_max(zeta, c_hat, eps);
            let rhs = sum_dt2 / eps + c_hat * sqrt_n_h + penal;
            BoundCheckRecord {
                path_index,
                epsilon: eps,
                sum_dt_squared: sum_dt2,
                intervals: n_intervals,
                h,
                penalization: penal,
                rhs,
                measured,
                pass: measured <= rhs,
            }
        })
        .collect())
}

/// Default epsilon sweep around the balance point sqrt(T) rho^{3/2} / h.
pub fn default_eps_list(horizon: f64, rho: f64, h: f64) -> Vec<f64> {
    let center = horizon.sqrt() * rho.powf(1.5) / h;
    (-3..=3).map(|k| center * 4f64.powi(k)).collect()
}

/// Random CFL-admissible piecewise-linear path over a uniform partition:
/// i.i.d. uniform increments within the cap, with occasional ramps and
/// zigzags for coverage.
pub fn make_admissible_path(
    seed: u64,
    intervals: usize,
    lambda0: f64,
    h: f64,
    horizon: f64,
) -> Result<(Partition, PiecewisePath)> {
    let partition = Partition::uniform(horizon, intervals)?;
    let cap = lambda0 * h;
    let mut rng = crate::rng::seeded_rng(seed);
    use rand::Rng;
    let style = seed % 5;
    let mut value = 0.0;
    let mut times = vec![0.0];
    let mut values = vec![0.0];
    for (n, w) in partition.times().windows(2).enumerate() {
        let inc = match style {
            0 => cap * 0.97, // steady ramp at the cap
            1 => {
                // zigzag at the cap
                if n % 2 == 0 {
                    cap * 0.97
                } else {
                    -cap * 0.97
                }
            }
            _ => rng.gen_range(-1.0..1.0) * cap,
        };
        value += inc;
        times.push(w[1]);
        values.push(value);
    }
    Ok((partition, PiecewisePath::new(times, values, 1)?))
}

/// Smallest constant C such that measured <= min over the sweep of RHS_C,
/// found by bisection (RHS is strictly increasing in C).
fn minimal_passing_constant(
    zeta: &PiecewisePath,
    sum_dt2: f64,
    intervals: usize,
    h: f64,
    eps_list: &[f64],
    measured: f64,
) -> f64 {
    let rhs_at = |c: f64| -> f64 {
        eps_list
            .iter()
            .map(|&eps| sum_dt2 / eps + c * (intervals as f64).sqrt() * h + penalization_max(zeta, c, eps))
            .fold(f64::INFINITY, f64::min)
    };
    if rhs_at(0.0) >= measured {
        return 0.0;
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while rhs_at(hi) < measured && hi < 1e9 {
        hi *= 2.0;
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if rhs_at(mid) < measured {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Train/holdout calibration of the bound constant: C_hat is twice the
/// worst minimal passing constant over the training paths.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_bound_constant(
    problem: &Problem,
    spec: &SchemeSpec,
    grid: Grid1D,
    train_paths: usize,
    intervals: usize,
    cfg: &HarnessCfg,
    study: &str,
) -> Result<f64> {
    let h = grid.spacing();
    let worst: Result<Vec<f64>> = (0..train_paths)
        .into_par_iter()
        .map(|i| {
            let seed = study_seed(study, 0, i as u64, cfg.seed_offset);
            let (partition, zeta) =
                make_admissible_path(seed, intervals, spec.lambda0, h, cfg.horizon)?;
            let record = evolve(
                spec,
                grid,
                &problem.initial,
                &zeta,
                &partition,
                SnapshotPolicy::At(probe_targets(cfg.horizon, cfg.probes)),
            )?;
            let oracle = pathwise_oracle(
                grid,
                &problem.initial,
                &zeta,
                &problem.hamiltonian,
                &record.times,
                None,
            )?;
            let measured = sup_error_against_oracle(&record, &oracle)?;
            let eps_list = default_eps_list(cfg.horizon, partition.mesh(), h);
            Ok(minimal_passing_constant(
                &zeta,
                partition.sum_dt_squared(),
                partition.intervals(),
                h,
                &eps_list,
                measured,
            ))
        })
        .collect();
    let worst = worst?;
    Ok(2.0 * worst.iter().cloned().fold(0.0, f64::max))
}

#[derive(Debug, Clone)]
pub struct StoppingStatsRow {
    pub h: f64,
    pub eta: f64,
    pub seeds: u32,
    pub mean_k_eta2: f64,
    pub median_k_eta2: f64,
    pub q90_k_eta2: f64,
    /// T / c1_hat.
    pub bound_k: f64,
    pub mean_sum_dt2_norm: f64,
    pub q90_sum_dt2_norm: f64,
    /// T lambda0 c2_hat / c1_hat.
    pub bound_sum: f64,
}

/// Stopping-time statistics across seeds: K_h eta^2 against T / c1 and
/// sum dt^2 / (h eta) against T lambda0 c2 / c1.
pub fn stopping_time_stats(
    h_list: &[f64],
    seeds: u32,
    lambda0: f64,
    moments: &ExitMoments,
    cfg: &HarnessCfg,
) -> Result<Vec<StoppingStatsRow>> {
    if seeds == 0 {
        return Err(Error::InvalidParameter {
            what: "seeds",
            why: "need at least one seed".into(),
        });
    }
    let mut rows = Vec::with_capacity(h_list.len());
    for (hi, &h) in h_list.iter().enumerate() {
        let eta = h.powf(1.0 / 3.0) / h.ln().abs().powf(2.0 / 3.0);
        let fine = eta * eta / crate::driver::STOPPING_DETECTION_FACTOR;
        let samples: Result<Vec<(f64, f64)>> = (0..seeds)
            .into_par_iter()
            .map(|rep| {
                let seed = study_seed("stopping_stats", hi as u64, rep as u64, cfg.seed_offset);
                let w = sample_brownian(seed, cfg.horizon, fine)?;
                let (family, partition, _) = stopping_time_partition(&w, h, lambda0)?;
                let k_eta2 = family.count() as f64 * eta * eta;
                let s = partition.sum_dt_squared() / (h * eta);
                Ok((k_eta2, s))
            })
            .collect();
        let samples = samples?;
        let ks: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let sums: Vec<f64> = samples.iter().map(|s| s.1).collect();
        rows.push(StoppingStatsRow {
            h,
            eta,
            seeds,
            mean_k_eta2: mean(&ks),
            median_k_eta2: median(&ks),
            q90_k_eta2: quantile(&ks, 0.9),
            bound_k: cfg.horizon / moments.c1,
            mean_sum_dt2_norm: mean(&sums),
            q90_sum_dt2_norm: quantile(&sums, 0.9),
            bound_sum: cfg.horizon * lambda0 * moments.c2 / moments.c1,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct KsRow {
    pub h: f64,
    pub n_samples: usize,
    pub ks: f64,
    pub noise_band: f64,
}

#[derive(Debug, Clone)]
pub struct DistributionReport {
    pub rows: Vec<KsRow>,
    pub probe_x: f64,
    pub reference_mean: f64,
    pub reference_sd: f64,
}

/// Distributional convergence at a space-time probe: scheme values driven by
/// scaled random walks per h, versus the exact pathwise solution on finely
/// sampled Brownian paths.
#[allow(clippy::too_many_arguments)]
pub fn distribution_study(
    problem: &Problem,
    scheme: SchemeKind,
    theta: f64,
    h_list: &[f64],
    n_samples: usize,
    probe_x: f64,
    oracle_nodes: usize,
    cfg: &HarnessCfg,
) -> Result<DistributionReport> {
    let spec = build_scheme(problem, scheme, theta)?;
    let period = problem.initial.period();
    let oracle_grid = Grid1D::new(period, oracle_nodes)?;
    let reference: Result<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let seed = study_seed("distribution_reference", 0, i as u64, cfg.seed_offset);
            let w = sample_brownian(seed, cfg.horizon, cfg.dt_fine)?;
            let run = pathwise_oracle(
                oracle_grid,
                &problem.initial,
                &w,
                &problem.hamiltonian,
                &[cfg.horizon],
                None,
            )?;
            Ok(run.snapshots[0].eval_periodic(probe_x))
        })
        .collect();
    let reference = reference?;

    let mut rows = Vec::with_capacity(h_list.len());
    for (hi, &h) in h_list.iter().enumerate() {
        let nodes = (period / h).round().max(4.0) as usize;
        let grid = Grid1D::new(period, nodes)?;
        let samples: Result<Vec<f64>> = (0..n_samples)
            .into_par_iter()
            .map(|rep| {
                let seed = study_seed("distribution_walk", hi as u64, rep as u64, cfg.seed_offset);
                let (build, record) =
                    run_row(problem, &spec, &DriverFamily::RandomWalk, grid, grid.spacing(), seed, cfg)?;
                let _ = build;
                Ok(record.final_snapshot().eval_periodic(probe_x))
            })
            .collect();
        let samples = samples?;
        rows.push(KsRow {
            h,
            n_samples,
            ks: two_sample_ks(&samples, &reference),
            noise_band: 2.0 * (1.0 / n_samples as f64).sqrt(),
        });
    }
    let m = mean(&reference);
    let sd = (reference.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
        / reference.len() as f64)
        .sqrt();
    Ok(DistributionReport {
        rows,
        probe_x,
        reference_mean: m,
        reference_sd: sd,
    })
}

/// Calibrated path-stability factor: worst ratio of solution sup-distance to
/// driver sup-distance over perturbed pairs, doubled.
pub fn calibrate_path_stability(
    problem: &Problem,
    grid: Grid1D,
    trials: usize,
    cfg: &HarnessCfg,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..trials {
        let seed = study_seed("path_stability", 0, i as u64, cfg.seed_offset);
        let w1 = sample_brownian(seed, cfg.horizon, 20.0 * cfg.dt_fine)?;
        // Perturb: shift every breakpoint by a smooth bump.
        let times: Vec<f64> = w1.times().to_vec();
        let values: Vec<f64> = (0..w1.len())
            .map(|k| {
                let t = times[k];
                w1.value(k, 0)
                    + 0.05 * (std::f64::consts::PI * t / cfg.horizon).sin() * ((i + 1) as f64 * 0.2)
            })
            .collect();
        let w2 = PiecewisePath::new(times, values, 1)?;
        let run1 = pathwise_oracle(
            grid,
            &problem.initial,
            &w1,
            &problem.hamiltonian,
            &[cfg.horizon],
            None,
        )?;
        let run2 = pathwise_oracle(
            grid,
            &problem.initial,
            &w2,
            &problem.hamiltonian,
            &[cfg.horizon],
            None,
        )?;
        let num = run1.snapshots[0].sup_distance(&run2.snapshots[0]);
        let den = w1.sup_distance(&w2)?;
        if den > 1e-12 {
            worst = worst.max(num / den);
        }
    }
    Ok(2.0 * worst.max(0.5))
}

/// Time-regularity diagnostic: the smallest constant that dominates
/// |v(x, t_n) - v(x, t_m)| / (h sqrt(n - m) + osc(zeta, t_m, t_n)) over the
/// kept snapshots of a record.
pub fn time_regularity_constant(record: &EvolveRecord, zeta: &PiecewisePath) -> Result<f64> {
    let h = record.grid.spacing();
    let mut worst = 0.0f64;
    for a in 0..record.times.len() {
        for b in (a + 1)..record.times.len() {
            let dn = (record.step_indices[b] - record.step_indices[a]) as f64;
            let osc = zeta.osc(record.times[a], record.times[b])?;
            let denom = h * dn.sqrt() + osc;
            if denom <= 0.0 {
                continue;
            }
            let num = record.snapshots[a].sup_distance(&record.snapshots[b]);
            worst = worst.max(num / denom);
        }
    }
    Ok(worst)
}

/// Finite-propagation margin for running the whole-line problem on one
/// period: L ||H'|| osc(zeta) must stay below period / 4.
pub fn periodic_faithfulness(
    lipschitz: f64,
    grad_bound: f64,
    zeta: &PiecewisePath,
    period: f64,
) -> Result<(f64, bool)> {
    let swing = zeta.osc(0.0, zeta.horizon())?;
    let reach = lipschitz * grad_bound * swing;
    Ok((reach, reach < period / 4.0))
}

/// Unit-threshold exit-time moments with the default sample budget.
pub fn calibrate_exit_moments(samples: usize, seed: u64) -> ExitMoments {
    exit_time_moments(samples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::problem_by_id;

    fn cfg() -> HarnessCfg {
        HarnessCfg {
            horizon: 0.5,
            lambda_frac: 0.9,
            dt_fine: 1e-3,
            probes: 4,
            seed_offset: 0,
        }
    }

    #[test]
    fn classical_ramp_study_has_half_order_slope() {
        let problem = problem_by_id("eikonal_sawtooth").unwrap();
        let study = RateStudyCfg {
            study: "classical-unit".into(),
            problem,
            scheme: SchemeKind::LfFirstOrder,
            theta: 1.0,
            family: DriverFamily::lipschitz_ramp(0.5).unwrap(),
            reference: ReferenceKind::PathwiseOracle,
            h_list: vec![1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0],
            seeds: 1,
            correction: Correction::None,
            harness: cfg(),
        };
        let report = rate_study(&study).unwrap();
        assert!(report.skipped.is_empty(), "skipped: {:?}", report.skipped);
        assert!(
            report.fit.slope >= 0.45,
            "slope {} below 0.45",
            report.fit.slope
        );
        assert!(report.max_discrete_lipschitz <= 1.0 + 1e-10);
    }

    #[test]
    fn zero_path_zero_f_gives_zero_error_rows() {
        // Constant path: scheme output equals the diffused initial data only
        // for theta = 0 diffusion... use the upwind scheme, whose step is the
        // identity when dzeta = 0.
        let problem = problem_by_id("eikonal_sawtooth").unwrap();
        let study = RateStudyCfg {
            study: "zero-path".into(),
            problem,
            scheme: SchemeKind::Upwind,
            theta: 0.0,
            family: DriverFamily::FixedPath {
                path: PiecewisePath::constant(0.0, 0.5).unwrap(),
                modulus: Modulus::lipschitz(1.0),
            },
            reference: ReferenceKind::PathwiseOracle,
            h_list: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
            seeds: 1,
            correction: Correction::None,
            harness: cfg(),
        };
        // The constant path has omega == 0: rho solver cannot bracket a root.
        // Regularize against a tiny Lipschitz modulus instead.
        let report = rate_study(&study);
        match report {
            Ok(r) => {
                for row in &r.rows {
                    assert!(row.sup_error <= 1e-12, "error {}", row.sup_error);
                }
            }
            Err(_) => {
                // Accepted alternative: the recipe may reject the degenerate
                // modulus; evolve directly to verify the zero-error claim.
                let problem = problem_by_id("eikonal_sawtooth").unwrap();
                let spec = build_scheme(&problem, SchemeKind::Upwind, 0.0).unwrap();
                let grid = Grid1D::new(2.0, 64).unwrap();
                let zeta = PiecewisePath::constant(0.0, 0.5).unwrap();
                let partition = Partition::uniform(0.5, 8).unwrap();
                let record = evolve(
                    &spec,
                    grid,
                    &problem.initial,
                    &zeta,
                    &partition,
                    SnapshotPolicy::All,
                )
                .unwrap();
                let oracle = pathwise_oracle(
                    grid,
                    &problem.initial,
                    &zeta,
                    &problem.hamiltonian,
                    &record.times,
                    None,
                )
                .unwrap();
                assert!(sup_error_against_oracle(&record, &oracle).unwrap() <= 1e-12);
            }
        }
    }

    #[test]
    fn penalization_max_matches_dense_scan() {
        let mut rng = crate::rng::seeded_rng(8);
        use rand::Rng;
        for trial in 0..5 {
            let n = 16;
            let mut t = 0.0;
            let mut v = 0.0;
            let mut pts = vec![(0.0, 0.0)];
            for _ in 0..n {
                t += rng.gen_range(0.01..0.1);
                v += rng.gen_range(-0.05..0.05);
                pts.push((t, v));
            }
            let zeta = PiecewisePath::from_breakpoints(pts).unwrap();
            let c = 1.5;
            let eps = 10f64.powf(rng.gen_range(-3.0..0.0));
            let exact = penalization_max(&zeta, c, eps);
            // Dense grid scan lower-bounds the exact cell maximum.
            let horizon = zeta.horizon();
            let mut dense: f64 = 0.0;
            let steps = 400;
            for a in 0..=steps {
                let s = (horizon * a as f64 / steps as f64).min(horizon);
                let zs = zeta.eval_scalar(s).unwrap();
                for b in 0..=steps {
                    let tt = (horizon * b as f64 / steps as f64).min(horizon);
                    let zt = zeta.eval_scalar(tt).unwrap();
                    dense =
                        dense.max(c * (zs - zt).abs() - (s - tt) * (s - tt) / (2.0 * eps));
                }
            }
            assert!(
                exact >= dense - 1e-9,
                "trial {trial}: exact {exact} below dense scan {dense}"
            );
            assert!(
                exact <= dense + c * 0.1 + 0.05,
                "trial {trial}: exact {exact} implausibly above dense {dense}"
            );
            assert!(exact >= 0.0);
        }
    }

    #[test]
    fn penalization_limits() {
        // eps -> infinity: the quadratic penalty vanishes and the maximum is
        // C times the total oscillation of zeta.
        let zeta =
            PiecewisePath::from_breakpoints(vec![(0.0, 0.0), (0.3, 0.2), (0.6, -0.1), (1.0, 0.05)])
                .unwrap();
        let c = 2.0;
        let osc = zeta.osc(0.0, 1.0).unwrap();
        let p = penalization_max(&zeta, c, 1e9);
        assert!((p - c * osc).abs() < 1e-6, "p = {p}, c osc = {}", c * osc);
        // Constant path: maximum is 0 at s = t.
        let flat = PiecewisePath::constant(0.0, 1.0).unwrap();
        assert_eq!(penalization_max(&flat, 2.0, 0.1), 0.0);
    }

    #[test]
    fn bound_check_single_step_terms() {
        // Single-interval partition with zeta == 0: RHS reduces to
        // (dt)^2/eps + C h (penalization 0, sqrt(1) = 1).
        let problem = problem_by_id("eikonal_sawtooth").unwrap();
        let spec = build_scheme(&problem, SchemeKind::LfFirstOrder, 1.0).unwrap();
        let grid = Grid1D::new(2.0, 64).unwrap();
        let zeta = PiecewisePath::constant(0.0, 0.5).unwrap();
        let partition = Partition::uniform(0.5, 1).unwrap();
        let c_hat = 2.0;
        let recs = bound_check(
            &problem,
            &spec,
            grid,
            &zeta,
            &partition,
            &[0.1, 1.0],
            c_hat,
            &cfg(),
            0,
        )
        .unwrap();
        for r in &recs {
            let want = 0.25 / r.epsilon + c_hat * grid.spacing();
            assert!((r.rhs - want).abs() < 1e-12, "rhs {} want {want}", r.rhs);
            assert!(r.pass);
        }
        // The 1/eps term decreases in eps; penalization nondecreasing.
        assert!(recs[0].rhs > recs[1].rhs);
    }

    #[test]
    fn bound_check_rejects_bad_premise() {
        let problem = problem_by_id("eikonal_sawtooth").unwrap();
        let spec = build_scheme(&problem, SchemeKind::LfFirstOrder, 1.0).unwrap();
        let grid = Grid1D::new(2.0, 64).unwrap();
        let partition = Partition::uniform(0.5, 4).unwrap();
        // Increment 3 lambda0 h on the first interval.
        let h = grid.spacing();
        let zeta = PiecewisePath::from_breakpoints(vec![
            (0.0, 0.0),
            (0.125, 3.0 * spec.lambda0 * h),
            (0.5, 3.0 * spec.lambda0 * h),
        ])
        .unwrap();
        assert!(matches!(
            bound_check(
                &problem,
                &spec,
                grid,
                &zeta,
                &partition,
                &[1.0],
                2.0,
                &cfg(),
                0
            ),
            Err(Error::PremiseViolation(_))
        ));
    }

    #[test]
    fn calibrated_constant_passes_holdout() {
        let problem = problem_by_id("eikonal_sawtooth").unwrap();
        let spec = build_scheme(&problem, SchemeKind::LfFirstOrder, 1.0).unwrap();
        let grid = Grid1D::new(2.0, 64).unwrap();
        let c_hat =
            calibrate_bound_constant(&problem, &spec, grid, 6, 32, &cfg(), "bound-train-unit")
                .unwrap();
        assert!(c_hat.is_finite() && c_hat >= 0.0);
        let h = grid.spacing();
        for i in 0..10 {
            let seed = study_seed("bound-holdout-unit", 0, i, 0);
            let (partition, zeta) =
                make_admissible_path(seed, 32, spec.lambda0, h, 0.5).unwrap();
            let eps_list = default_eps_list(0.5, partition.mesh(), h);
            let recs = bound_check(
                &problem,
                &spec,
                grid,
                &zeta,
                &partition,
                &eps_list,
                c_hat,
                &cfg(),
                i as usize,
            )
            .unwrap();
            assert!(
                recs.iter().any(|r| r.pass),
                "holdout path {i} fails at every epsilon"
            );
        }
    }

    #[test]
    fn stopping_stats_against_exit_moments() {
        let moments = exit_time_moments(50_000, 7);
        let rows = stopping_time_stats(&[1.0 / 128.0], 40, 1.0, &moments, &cfg()).unwrap();
        let row = &rows[0];
        assert!(
            row.mean_k_eta2 <= 1.1 * row.bound_k,
            "mean K eta^2 = {} vs bound {}",
            row.mean_k_eta2,
            row.bound_k
        );
        assert!(
            row.mean_sum_dt2_norm <= 1.2 * row.bound_sum,
            "sum dt^2 norm = {} vs bound {}",
            row.mean_sum_dt2_norm,
            row.bound_sum
        );
    }

    #[test]
    fn time_regularity_diagnostic_is_stable_across_seeds() {
        let problem = problem_by_id("eikonal_sawtooth").unwrap();
        let spec = build_scheme(&problem, SchemeKind::LfFirstOrder, 1.0).unwrap();
        let grid = Grid1D::new(2.0, 128).unwrap();
        let mut constants = Vec::new();
        for seed in 0..4 {
            let build =
                build_driver(&DriverFamily::BrownianRegular, grid.spacing(), spec.lambda0, seed, &cfg())
                    .unwrap();
            let record = evolve(
                &spec,
                grid,
                &problem.initial,
                &build.path,
                &build.partition,
                SnapshotPolicy::At(probe_targets(0.5, 6)),
            )
            .unwrap();
            constants.push(time_regularity_constant(&record, &build.path).unwrap());
        }
        let base = constants[0];
        for c in &constants {
            assert!(c.is_finite() && *c > 0.0);
            assert!(*c <= 2.5 * base + 1.0, "diagnostic unstable: {constants:?}");
        }
    }

    #[test]
    fn constant_data_gives_point_mass_distributions() {
        // u0 constant with H(0) = 0: both the scheme and the oracle values
        // are point masses, so the KS distance vanishes.
        let problem = crate::problem::Problem {
            id: "eikonal_constant".into(),
            hamiltonian: crate::problem::Hamiltonian::eikonal(1.0),
            diffusion: None,
            initial: crate::problem::InitialData::constant(0.7, 2.0),
        };
        let report = distribution_study(
            &problem,
            SchemeKind::LfFirstOrder,
            1.0,
            &[1.0 / 16.0, 1.0 / 32.0],
            40,
            0.5,
            64,
            &cfg(),
        )
        .unwrap();
        for row in &report.rows {
            assert_eq!(row.ks, 0.0, "h = {}: KS {}", row.h, row.ks);
        }
        // Summation rounding only.
        assert!(report.reference_sd <= 1e-12);
    }

    #[test]
    fn faithfulness_margin_reports_reach() {
        let zeta = PiecewisePath::from_breakpoints(vec![(0.0, 0.0), (0.5, 0.2)]).unwrap();
        let (reach, ok) = periodic_faithfulness(1.0, 1.0, &zeta, 2.0).unwrap();
        assert!((reach - 0.2).abs() < 1e-15);
        assert!(ok);
        let big = PiecewisePath::from_breakpoints(vec![(0.0, 0.0), (0.5, 0.6)]).unwrap();
        assert!(!periodic_faithfulness(1.0, 1.0, &big, 2.0).unwrap().1);
    }
}
