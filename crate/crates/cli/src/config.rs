//! Flat key = value run configuration with [section] headers.
//!
//! Grammar (one statement per line):
//!   [section]        -- `study`, `bound`, `distribution`, `stopping`, `verdicts`
//!   key = value      -- keys listed below, values parsed per key
//!   # comment        -- ignored, as are blank lines
//!
//! `h_list` accepts space-separated floats or `2^-k` tokens. Unknown keys and
//! malformed lines are rejected with their line number.

use pathwise::problem::problem_by_id;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Rate,
    Bound,
    Stopping,
    Distribution,
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StudyKind::Rate => "rate",
            StudyKind::Bound => "bound",
            StudyKind::Stopping => "stopping",
            StudyKind::Distribution => "distribution",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub kind: StudyKind,
    pub name: String,
    pub problem: String,
    pub scheme: String,
    pub theta: f64,
    pub driver: String,
    pub reference: String,
    pub h_list: Vec<f64>,
    pub seeds: u32,
    pub horizon: f64,
    pub lambda_frac: f64,
    pub dt_fine: f64,
    pub probes: usize,
    pub correction: String,
    pub out: Option<String>,
    // [bound]
    pub train_paths: u32,
    pub holdout_paths: u32,
    pub intervals: usize,
    pub nodes: usize,
    // [stopping]
    pub mc_samples: usize,
    // [distribution]
    pub n_samples: usize,
    pub probe_x: f64,
    pub oracle_nodes: usize,
    // [verdicts]
    pub min_slope: Option<f64>,
    pub max_slope: Option<f64>,
    pub max_spread: Option<f64>,
    pub max_ks: Option<f64>,
    pub k_mean_factor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kind: StudyKind::Rate,
            name: "run".into(),
            problem: "eikonal_sawtooth".into(),
            scheme: "lf_first_order".into(),
            theta: 1.0,
            driver: "lipschitz_ramp".into(),
            reference: "oracle".into(),
            h_list: vec![],
            seeds: 1,
            horizon: 0.5,
            lambda_frac: 0.9,
            dt_fine: 1e-4,
            probes: 8,
            correction: "none".into(),
            out: None,
            train_paths: 20,
            holdout_paths: 100,
            intervals: 64,
            nodes: 256,
            mc_samples: 200_000,
            n_samples: 500,
            probe_x: 0.5,
            oracle_nodes: 512,
            min_slope: None,
            max_slope: None,
            max_spread: None,
            max_ks: None,
            k_mean_factor: 1.1,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError {
    pub line: usize,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "config error at line {}, field '{}': {}",
            self.line, self.field, self.message
        )
    }
}

impl std::error::Error for ConfigError {}

fn err(line: usize, field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        field: field.into(),
        message: message.into(),
    }
}

fn parse_h_token(tok: &str, line: usize) -> Result<f64, ConfigError> {
    if let Some(rest) = tok.strip_prefix("2^") {
        let exp: i32 = rest
            .parse()
            .map_err(|_| err(line, "h_list", format!("bad exponent '{rest}'")))?;
        return Ok(2f64.powi(exp));
    }
    tok.parse()
        .map_err(|_| err(line, "h_list", format!("bad value '{tok}'")))
}

fn parse_num<T: std::str::FromStr>(value: &str, line: usize, field: &str) -> Result<T, ConfigError> {
    value
        .trim()
        .parse()
        .map_err(|_| err(line, field, format!("cannot parse '{value}'")))
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut section = "study".to_string();
    let mut saw_h_list = false;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(lineno, "section", "missing closing ']'"))?;
            match name {
                "study" | "bound" | "stopping" | "distribution" | "verdicts" => {
                    section = name.to_string();
                }
                other => return Err(err(lineno, "section", format!("unknown section '{other}'"))),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(lineno, "line", "expected 'key = value'"));
        };
        let key = key.trim();
        let value = value.trim();
        match (section.as_str(), key) {
            ("study", "kind") => {
                cfg.kind = match value {
                    "rate" => StudyKind::Rate,
                    "bound" => StudyKind::Bound,
                    "stopping" => StudyKind::Stopping,
                    "distribution" => StudyKind::Distribution,
                    other => {
                        return Err(err(lineno, "kind", format!("unknown study kind '{other}'")))
                    }
                };
            }
            ("study", "name") => cfg.name = value.to_string(),
            ("study", "problem") => cfg.problem = value.to_string(),
            ("study", "scheme") => cfg.scheme = value.to_string(),
            ("study", "theta") => cfg.theta = parse_num(value, lineno, "theta")?,
            ("study", "driver") => cfg.driver = value.to_string(),
            ("study", "reference") => cfg.reference = value.to_string(),
            ("study", "h_list") => {
                cfg.h_list = value
                    .split_whitespace()
                    .map(|tok| parse_h_token(tok, lineno))
                    .collect::<Result<_, _>>()?;
                saw_h_list = true;
            }
            ("study", "seeds") => cfg.seeds = parse_num(value, lineno, "seeds")?,
            ("study", "horizon") => cfg.horizon = parse_num(value, lineno, "horizon")?,
            ("study", "lambda_frac") => cfg.lambda_frac = parse_num(value, lineno, "lambda_frac")?,
            ("study", "dt_fine") => cfg.dt_fine = parse_num(value, lineno, "dt_fine")?,
            ("study", "probes") => cfg.probes = parse_num(value, lineno, "probes")?,
            ("study", "correction") => cfg.correction = value.to_string(),
            ("study", "out") => cfg.out = Some(value.to_string()),
            ("bound", "train_paths") => cfg.train_paths = parse_num(value, lineno, "train_paths")?,
            ("bound", "holdout_paths") => {
                cfg.holdout_paths = parse_num(value, lineno, "holdout_paths")?
            }
            ("bound", "intervals") => cfg.intervals = parse_num(value, lineno, "intervals")?,
            ("bound", "nodes") => cfg.nodes = parse_num(value, lineno, "nodes")?,
            ("stopping", "mc_samples") => cfg.mc_samples = parse_num(value, lineno, "mc_samples")?,
            ("distribution", "n_samples") => {
                cfg.n_samples = parse_num(value, lineno, "n_samples")?
            }
            ("distribution", "probe_x") => cfg.probe_x = parse_num(value, lineno, "probe_x")?,
            ("distribution", "oracle_nodes") => {
                cfg.oracle_nodes = parse_num(value, lineno, "oracle_nodes")?
            }
            ("verdicts", "min_slope") => cfg.min_slope = Some(parse_num(value, lineno, "min_slope")?),
            ("verdicts", "max_slope") => cfg.max_slope = Some(parse_num(value, lineno, "max_slope")?),
            ("verdicts", "max_spread") => {
                cfg.max_spread = Some(parse_num(value, lineno, "max_spread")?)
            }
            ("verdicts", "max_ks") => cfg.max_ks = Some(parse_num(value, lineno, "max_ks")?),
            ("verdicts", "k_mean_factor") => {
                cfg.k_mean_factor = parse_num(value, lineno, "k_mean_factor")?
            }
            (sec, other) => {
                return Err(err(
                    lineno,
                    other,
                    format!("unknown key '{other}' in section [{sec}]"),
                ))
            }
        }
    }
    validate(&cfg, saw_h_list)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig, saw_h_list: bool) -> Result<(), ConfigError> {
    problem_by_id(&cfg.problem)
        .map_err(|e| err(0, "problem", e.to_string()))?;
    if !pathwise::scheme::scheme_ids().contains(&cfg.scheme.as_str()) {
        return Err(err(0, "scheme", format!("unknown scheme '{}'", cfg.scheme)));
    }
    if !pathwise::harness::driver_ids().contains(&cfg.driver.as_str()) {
        return Err(err(0, "driver", format!("unknown driver '{}'", cfg.driver)));
    }
    if !["none", "h13log13", "rho14log12"].contains(&cfg.correction.as_str()) {
        return Err(err(
            0,
            "correction",
            format!("unknown correction '{}'", cfg.correction),
        ));
    }
    if cfg.reference != "oracle" && !cfg.reference.starts_with("fallback:") {
        return Err(err(
            0,
            "reference",
            format!("reference must be 'oracle' or 'fallback:N', got '{}'", cfg.reference),
        ));
    }
    if let Some(n) = cfg.reference.strip_prefix("fallback:") {
        n.parse::<usize>()
            .map_err(|_| err(0, "reference", format!("bad refinement '{n}'")))?;
    }
    if matches!(cfg.kind, StudyKind::Rate | StudyKind::Stopping | StudyKind::Distribution) {
        if !saw_h_list || cfg.h_list.is_empty() {
            return Err(err(0, "h_list", "h_list is required for this study kind"));
        }
        if cfg.h_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(err(0, "h_list", "h_list must be strictly decreasing"));
        }
    }
    if cfg.horizon <= 0.0 {
        return Err(err(0, "horizon", "horizon must be positive"));
    }
    if cfg.seeds == 0 {
        return Err(err(0, "seeds", "need at least one seed"));
    }
    Ok(())
}

/// Re-serialize the resolved configuration (the copy stored in the run dir).
pub fn render_config(cfg: &RunConfig, seed_offset: u64) -> String {
    let h_list = cfg
        .h_list
        .iter()
        .map(|h| h.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    let mut s = String::new();
    s.push_str("[study]\n");
    s.push_str(&format!("kind = {}\n", cfg.kind));
    s.push_str(&format!("name = {}\n", cfg.name));
    s.push_str(&format!("problem = {}\n", cfg.problem));
    s.push_str(&format!("scheme = {}\n", cfg.scheme));
    s.push_str(&format!("theta = {}\n", cfg.theta));
    s.push_str(&format!("driver = {}\n", cfg.driver));
    s.push_str(&format!("reference = {}\n", cfg.reference));
    s.push_str(&format!("h_list = {h_list}\n"));
    s.push_str(&format!("seeds = {}\n", cfg.seeds));
    s.push_str(&format!("horizon = {}\n", cfg.horizon));
    s.push_str(&format!("lambda_frac = {}\n", cfg.lambda_frac));
    s.push_str(&format!("dt_fine = {}\n", cfg.dt_fine));
    s.push_str(&format!("probes = {}\n", cfg.probes));
    s.push_str(&format!("correction = {}\n", cfg.correction));
    s.push_str(&format!("seed_offset = {seed_offset}\n"));
    s.push_str("\n[bound]\n");
    s.push_str(&format!("train_paths = {}\n", cfg.train_paths));
    s.push_str(&format!("holdout_paths = {}\n", cfg.holdout_paths));
    s.push_str(&format!("intervals = {}\n", cfg.intervals));
    s.push_str(&format!("nodes = {}\n", cfg.nodes));
    s.push_str("\n[stopping]\n");
    s.push_str(&format!("mc_samples = {}\n", cfg.mc_samples));
    s.push_str("\n[distribution]\n");
    s.push_str(&format!("n_samples = {}\n", cfg.n_samples));
    s.push_str(&format!("probe_x = {}\n", cfg.probe_x));
    s.push_str(&format!("oracle_nodes = {}\n", cfg.oracle_nodes));
    s.push_str("\n[verdicts]\n");
    if let Some(v) = cfg.min_slope {
        s.push_str(&format!("min_slope = {v}\n"));
    }
    if let Some(v) = cfg.max_slope {
        s.push_str(&format!("max_slope = {v}\n"));
    }
    if let Some(v) = cfg.max_spread {
        s.push_str(&format!("max_spread = {v}\n"));
    }
    if let Some(v) = cfg.max_ks {
        s.push_str(&format!("max_ks = {v}\n"));
    }
    s.push_str(&format!("k_mean_factor = {}\n", cfg.k_mean_factor));
    s
}
