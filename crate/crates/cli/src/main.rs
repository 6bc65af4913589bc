//! Command-line entry point: study dispatch, run persistence, plot-ready CSV
//! emission. Exit status is derived from the verdict summary file alone.

mod config;

use config::{parse_config, render_config, RunConfig, StudyKind};
use pathwise::harness::{
    bound_check, calibrate_bound_constant, calibrate_path_stability, default_eps_list,
    distribution_study, driver_ids, make_admissible_path, rate_study, stopping_time_stats,
    BoundCheckRecord, Correction, DriverFamily, HarnessCfg, RateStudyCfg, ReferenceKind,
};
use pathwise::problem::{
    diffusion_ids, hamiltonian_ids, initial_ids, problem_by_id, problem_ids, Problem,
};
use pathwise::report::{
    write_bound_csv, write_ks_csv, write_rate_csv, write_snapshot_csv, write_stopping_csv,
    Metadata, VerdictSummary,
};
use pathwise::rng::study_seed;
use pathwise::scheme::{scheme_ids, SchemeKind};
use pathwise::{driver::exit_time_moments, Grid1D};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    ExitCode::from(dispatch(&args))
}

fn dispatch(args: &[String]) -> u8 {
    match args.first().map(String::as_str) {
        Some("run") => cmd_run(&args[1..]),
        Some("list") => cmd_list(),
        Some("calibrate") => cmd_calibrate(&args[1..]),
        Some("--help") | Some("-h") => {
            print_usage();
            0
        }
        None => {
            print_usage();
            2
        }
        Some(other) => {
            eprintln!("unknown command '{other}'");
            print_usage();
            2
        }
    }
}

fn print_usage() {
    eprintln!(
        "usage:\n  pathwise run <config> [--out DIR] [--seed-offset N] [--jobs N]\n  \
         pathwise list\n  pathwise calibrate [--out DIR] [--samples N] [--seed-offset N]"
    );
}

struct Flags {
    out: Option<String>,
    seed_offset: u64,
    jobs: Option<usize>,
    samples: usize,
    positional: Vec<String>,
}

fn parse_flags(args: &[String]) -> Result<Flags, String> {
    let mut flags = Flags {
        out: None,
        seed_offset: 0,
        jobs: None,
        samples: 1_000_000,
        positional: Vec::new(),
    };
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--out" => {
                flags.out = Some(
                    it.next()
                        .ok_or_else(|| "--out needs a directory".to_string())?
                        .clone(),
                )
            }
            "--seed-offset" => {
                flags.seed_offset = it
                    .next()
                    .ok_or_else(|| "--seed-offset needs a value".to_string())?
                    .parse()
                    .map_err(|_| "--seed-offset must be an integer".to_string())?;
            }
            "--jobs" => {
                flags.jobs = Some(
                    it.next()
                        .ok_or_else(|| "--jobs needs a value".to_string())?
                        .parse()
                        .map_err(|_| "--jobs must be an integer".to_string())?,
                );
            }
            "--samples" => {
                flags.samples = it
                    .next()
                    .ok_or_else(|| "--samples needs a value".to_string())?
                    .parse()
                    .map_err(|_| "--samples must be an integer".to_string())?;
            }
            other => flags.positional.push(other.to_string()),
        }
    }
    Ok(flags)
}

fn init_pool(jobs: Option<usize>) {
    if let Some(n) = jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Print one line to stdout; a closed pipe downstream (e.g. `list | head`)
/// ends the process quietly instead of panicking.
fn print_line(line: &str) {
    use std::io::Write;
    if writeln!(std::io::stdout(), "{line}").is_err() {
        std::process::exit(0);
    }
}

fn cmd_list() -> u8 {
    let mut lines = Vec::new();
    for id in driver_ids() {
        lines.push(format!("driver {id}"));
    }
    for id in diffusion_ids() {
        lines.push(format!("diffusion {id}"));
    }
    for id in hamiltonian_ids() {
        lines.push(format!("hamiltonian {id}"));
    }
    for id in initial_ids() {
        lines.push(format!("initial {id}"));
    }
    for id in problem_ids() {
        lines.push(format!("problem {id}"));
    }
    for id in scheme_ids() {
        lines.push(format!("scheme {id}"));
    }
    lines.sort();
    for line in lines {
        print_line(&line);
    }
    0
}

fn cmd_run(args: &[String]) -> u8 {
    let flags = match parse_flags(args) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    let Some(config_path) = flags.positional.first() else {
        eprintln!("run: missing <config> argument");
        return 2;
    };
    let text = match std::fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read '{config_path}': {e}");
            return 2;
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    init_pool(flags.jobs);
    let out_dir = PathBuf::from(
        flags
            .out
            .clone()
            .or_else(|| cfg.out.clone())
            .unwrap_or_else(|| format!("runs/{}", cfg.name)),
    );
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("cannot create run directory {}: {e}", out_dir.display());
        return 2;
    }
    if let Err(e) = execute(&cfg, &out_dir, flags.seed_offset) {
        eprintln!("study '{}' aborted: {e}", cfg.name);
        return 3;
    }
    // Exit status reads the verdict file back: nothing else decides it.
    let verdict_text = match std::fs::read_to_string(out_dir.join("verdicts.txt")) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("missing verdict summary: {e}");
            return 3;
        }
    };
    if VerdictSummary::file_passes(&verdict_text) {
        0
    } else {
        1
    }
}

fn scheme_kind(id: &str) -> SchemeKind {
    match id {
        "lf_first_order" => SchemeKind::LfFirstOrder,
        "lf_second_order" => SchemeKind::LfSecondOrder,
        "upwind" => SchemeKind::Upwind,
        "trotter_kato" => SchemeKind::TrotterKato,
        _ => unreachable!("validated in config"),
    }
}

fn correction_kind(id: &str) -> Correction {
    match id {
        "none" => Correction::None,
        "h13log13" => Correction::HCubeRootLog,
        "rho14log12" => Correction::RhoQuarterLog,
        _ => unreachable!("validated in config"),
    }
}

fn driver_family(cfg: &RunConfig) -> Result<DriverFamily, pathwise::Error> {
    match cfg.driver.as_str() {
        "lipschitz_ramp" => DriverFamily::lipschitz_ramp(cfg.horizon),
        "brownian_regular" => Ok(DriverFamily::BrownianRegular),
        "brownian_stopping" => Ok(DriverFamily::BrownianStopping),
        "random_walk" => Ok(DriverFamily::RandomWalk),
        _ => unreachable!("validated in config"),
    }
}

fn reference_kind(id: &str) -> ReferenceKind {
    if let Some(n) = id.strip_prefix("fallback:") {
        ReferenceKind::Fallback {
            refinement: n.parse().expect("validated in config"),
        }
    } else {
        ReferenceKind::PathwiseOracle
    }
}

fn harness_cfg(cfg: &RunConfig, seed_offset: u64) -> HarnessCfg {
    HarnessCfg {
        horizon: cfg.horizon,
        lambda_frac: cfg.lambda_frac,
        dt_fine: cfg.dt_fine,
        probes: cfg.probes,
        seed_offset,
    }
}

fn base_metadata(cfg: &RunConfig, seed_offset: u64) -> Metadata {
    let mut meta = Metadata::new();
    meta.push("version", env!("CARGO_PKG_VERSION"));
    meta.push("study", &cfg.name);
    meta.push("kind", cfg.kind);
    meta.push("problem", &cfg.problem);
    meta.push("scheme", &cfg.scheme);
    meta.push("driver", &cfg.driver);
    meta.push("theta", cfg.theta);
    meta.push("lambda_frac", cfg.lambda_frac);
    meta.push("horizon", cfg.horizon);
    meta.push("dt_fine", cfg.dt_fine);
    meta.push("seed_offset", seed_offset);
    meta
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut Vec<u8>) -> pathwise::Result<()>,
) -> pathwise::Result<()> {
    let mut buf = Vec::new();
    body(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

fn execute(cfg: &RunConfig, out_dir: &Path, seed_offset: u64) -> pathwise::Result<()> {
    std::fs::write(
        out_dir.join("config.resolved.txt"),
        render_config(cfg, seed_offset),
    )?;
    let problem = problem_by_id(&cfg.problem)?;
    let mut meta = base_metadata(cfg, seed_offset);
    let mut verdicts = VerdictSummary::new();
    match cfg.kind {
        StudyKind::Rate => run_rate(cfg, &problem, out_dir, seed_offset, &mut meta, &mut verdicts)?,
        StudyKind::Bound => run_bound(cfg, &problem, out_dir, seed_offset, &mut meta, &mut verdicts)?,
        StudyKind::Stopping => {
            run_stopping(cfg, &problem, out_dir, seed_offset, &mut meta, &mut verdicts)?
        }
        StudyKind::Distribution => {
            run_distribution(cfg, &problem, out_dir, seed_offset, &mut meta, &mut verdicts)?
        }
    }
    meta.stamp_now();
    write_file(&out_dir.join("metadata.txt"), |buf| meta.write(buf))?;
    write_file(&out_dir.join("verdicts.txt"), |buf| verdicts.write(buf))?;
    Ok(())
}

fn run_rate(
    cfg: &RunConfig,
    problem: &Problem,
    out_dir: &Path,
    seed_offset: u64,
    meta: &mut Metadata,
    verdicts: &mut VerdictSummary,
) -> pathwise::Result<()> {
    let family = driver_family(cfg)?;
    let study = RateStudyCfg {
        study: cfg.name.clone(),
        problem: problem.clone(),
        scheme: scheme_kind(&cfg.scheme),
        theta: cfg.theta,
        family: family.clone(),
        reference: reference_kind(&cfg.reference),
        h_list: cfg.h_list.clone(),
        seeds: cfg.seeds,
        correction: correction_kind(&cfg.correction),
        harness: harness_cfg(cfg, seed_offset),
    };
    let report = rate_study(&study)?;
    write_file(&out_dir.join("rate.csv"), |buf| write_rate_csv(&report, buf))?;
    // Representative space-time dump plus the time-regularity diagnostic,
    // from the coarsest h and first replicate.
    let spec = pathwise::harness::build_scheme(problem, scheme_kind(&cfg.scheme), cfg.theta)?;
    let h0 = cfg.h_list[0];
    let nodes = (problem.initial.period() / h0).round().max(4.0) as usize;
    let grid = Grid1D::new(problem.initial.period(), nodes)?;
    let seed = study_seed(&cfg.name, 0, 0, seed_offset);
    if let Ok((build, record)) = pathwise::harness::run_row(
        problem,
        &spec,
        &family,
        grid,
        grid.spacing(),
        seed,
        &study.harness,
    ) {
        write_file(&out_dir.join("snapshot.csv"), |buf| {
            write_snapshot_csv(&record.times, &record.snapshots, buf)
        })?;
        meta.push(
            "time_regularity_c_hat",
            pathwise::harness::time_regularity_constant(&record, &build.path)?,
        );
    }
    for (h, reason) in &report.skipped {
        eprintln!("study '{}': h = {h} skipped: {reason}", cfg.name);
    }
    verdicts.record("construction", report.skipped.is_empty());
    if let Some(min) = cfg.min_slope {
        verdicts.record("slope_at_least", report.fit.slope >= min);
    }
    if let Some(max) = cfg.max_slope {
        verdicts.record("slope_at_most", report.fit.slope <= max);
    }
    if let Some(spread) = cfg.max_spread {
        verdicts.record("corrected_spread_at_most", report.corrected_spread <= spread);
    }
    verdicts.record(
        "lipschitz_preserved",
        report.max_discrete_lipschitz <= report.declared_lipschitz + 1e-10,
    );
    meta.push("fit_slope", report.fit.slope);
    meta.push("fit_max_residual", report.fit.max_residual);
    meta.push("corrected_spread", report.corrected_spread);
    meta.push("max_discrete_lipschitz", report.max_discrete_lipschitz);
    meta.push("rows", report.rows.len());
    meta.push("rows_skipped", report.skipped.len());
    Ok(())
}

fn run_bound(
    cfg: &RunConfig,
    problem: &Problem,
    out_dir: &Path,
    seed_offset: u64,
    meta: &mut Metadata,
    verdicts: &mut VerdictSummary,
) -> pathwise::Result<()> {
    let spec = pathwise::harness::build_scheme(problem, scheme_kind(&cfg.scheme), cfg.theta)?;
    let grid = Grid1D::new(problem.initial.period(), cfg.nodes)?;
    let harness = harness_cfg(cfg, seed_offset);
    let train_study = format!("{}-train", cfg.name);
    let c_hat = calibrate_bound_constant(
        problem,
        &spec,
        grid,
        cfg.train_paths as usize,
        cfg.intervals,
        &harness,
        &train_study,
    )?;
    let h = grid.spacing();
    let mut all_records: Vec<BoundCheckRecord> = Vec::new();
    let mut violations = 0usize;
    for i in 0..cfg.holdout_paths {
        let seed = study_seed(&format!("{}-holdout", cfg.name), 0, i as u64, seed_offset);
        let (partition, zeta) =
            make_admissible_path(seed, cfg.intervals, spec.lambda0, h, cfg.horizon)?;
        let eps_list = default_eps_list(cfg.horizon, partition.mesh(), h);
        let records = bound_check(
            problem, &spec, grid, &zeta, &partition, &eps_list, c_hat, &harness, i as usize,
        )?;
        if !records.iter().any(|r| r.pass) {
            violations += 1;
            eprintln!(
                "study '{}': holdout path {i} violates the bound at every epsilon",
                cfg.name
            );
        }
        all_records.extend(records);
    }
    write_file(&out_dir.join("bound.csv"), |buf| {
        write_bound_csv(&all_records, buf)
    })?;
    verdicts.record("zero_violations", violations == 0);
    meta.push("c_hat", c_hat);
    meta.push("train_paths", cfg.train_paths);
    meta.push("holdout_paths", cfg.holdout_paths);
    meta.push("violations", violations);
    Ok(())
}

fn run_stopping(
    cfg: &RunConfig,
    problem: &Problem,
    out_dir: &Path,
    seed_offset: u64,
    meta: &mut Metadata,
    verdicts: &mut VerdictSummary,
) -> pathwise::Result<()> {
    let spec = pathwise::harness::build_scheme(problem, scheme_kind(&cfg.scheme), cfg.theta)?;
    let moments = exit_time_moments(
        cfg.mc_samples,
        study_seed(&format!("{}-exit-mc", cfg.name), 0, 0, seed_offset),
    );
    let harness = harness_cfg(cfg, seed_offset);
    let rows = stopping_time_stats(&cfg.h_list, cfg.seeds, spec.lambda0, &moments, &harness)?;
    write_file(&out_dir.join("stopping.csv"), |buf| {
        write_stopping_csv(&rows, buf)
    })?;
    let k_ok = rows
        .iter()
        .all(|r| r.mean_k_eta2 <= cfg.k_mean_factor * r.bound_k);
    let sum_ok = rows
        .iter()
        .all(|r| r.mean_sum_dt2_norm <= 1.2 * r.bound_sum);
    verdicts.record("k_eta2_mean_bounded", k_ok);
    verdicts.record("sum_dt2_concentrated", sum_ok);
    meta.push("c1_hat", moments.c1);
    meta.push("c2_hat", moments.c2);
    meta.push("exit_mc_samples", moments.samples);
    meta.push("exit_mc_relative_step", moments.relative_step);
    Ok(())
}

fn run_distribution(
    cfg: &RunConfig,
    problem: &Problem,
    out_dir: &Path,
    seed_offset: u64,
    meta: &mut Metadata,
    verdicts: &mut VerdictSummary,
) -> pathwise::Result<()> {
    let harness = harness_cfg(cfg, seed_offset);
    let report = distribution_study(
        problem,
        scheme_kind(&cfg.scheme),
        cfg.theta,
        &cfg.h_list,
        cfg.n_samples,
        cfg.probe_x,
        cfg.oracle_nodes,
        &harness,
    )?;
    write_file(&out_dir.join("ks.csv"), |buf| {
        write_ks_csv(&cfg.name, &report.rows, buf)
    })?;
    let decreasing = report
        .rows
        .windows(2)
        .all(|w| w[1].ks <= w[0].ks + w[0].noise_band);
    verdicts.record("ks_decreasing_within_noise", decreasing);
    if let Some(max_ks) = cfg.max_ks {
        verdicts.record(
            "final_ks_at_most",
            report.rows.last().map(|r| r.ks <= max_ks).unwrap_or(false),
        );
    }
    meta.push("probe_x", report.probe_x);
    meta.push("reference_mean", report.reference_mean);
    meta.push("reference_sd", report.reference_sd);
    Ok(())
}

fn cmd_calibrate(args: &[String]) -> u8 {
    let flags = match parse_flags(args) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    init_pool(flags.jobs);
    let out_dir = PathBuf::from(flags.out.clone().unwrap_or_else(|| "runs/calibration".into()));
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("cannot create {}: {e}", out_dir.display());
        return 2;
    }
    match calibrate_all(&out_dir, flags.samples, flags.seed_offset) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("calibration failed: {e}");
            3
        }
    }
}

fn calibrate_all(out_dir: &Path, samples: usize, seed_offset: u64) -> pathwise::Result<()> {
    let moments = exit_time_moments(samples, study_seed("exit-mc", 0, 0, seed_offset));
    let problem = problem_by_id("eikonal_sawtooth")?;
    let spec = pathwise::harness::build_scheme(&problem, SchemeKind::LfFirstOrder, 1.0)?;
    let grid = Grid1D::new(problem.initial.period(), 256)?;
    let harness = HarnessCfg {
        seed_offset,
        ..HarnessCfg::default()
    };
    let c_hat =
        calibrate_bound_constant(&problem, &spec, grid, 20, 64, &harness, "calibrate-bound")?;
    let oracle_grid = Grid1D::new(problem.initial.period(), 512)?;
    let cl_hat = calibrate_path_stability(&problem, oracle_grid, 10, &harness)?;
    let mut constants = Metadata::new();
    constants.push("c1_hat", moments.c1);
    constants.push("c2_hat", moments.c2);
    constants.push("exit_mc_samples", moments.samples);
    constants.push("exit_mc_relative_step", moments.relative_step);
    constants.push("c_hat_bound", c_hat);
    constants.push("cl_hat_path_stability", cl_hat);
    write_file(&out_dir.join("constants.txt"), |buf| constants.write(buf))?;
    let mut meta = Metadata::new();
    meta.push("version", env!("CARGO_PKG_VERSION"));
    meta.push("seed_offset", seed_offset);
    meta.stamp_now();
    write_file(&out_dir.join("metadata.txt"), |buf| meta.write(buf))?;
    print_line(&format!(
        "c1_hat = {}, c2_hat = {}, c_hat_bound = {}, cl_hat = {}",
        moments.c1, moments.c2, c_hat, cl_hat
    ));
    Ok(())
}
