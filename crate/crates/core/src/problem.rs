//! Hamiltonians, diffusions, initial data, and their analytical companions.
//!
//! Every Hamiltonian carries a working gradient range [-L, L]. Outside that
//! range the built-ins are extended linearly with slope H'(+-L), which leaves
//! the solution unchanged for L-Lipschitz data and makes the global Lipschitz
//! bound equal to the bound on [-L, L].

use crate::error::{Error, Result};
use std::sync::Arc;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum HKind {
    /// H(p) = |p|
    Eikonal,
    /// H(p) = p^2 / 2, linear beyond the gradient range
    Quadratic,
    /// H(p) = sqrt(1 + p^2) - 1, linear beyond the gradient range
    SmoothBounded,
    /// H(p) = c p
    Linear { speed: f64 },
    Custom {
        eval: ScalarFn,
        deriv: Option<ScalarFn>,
        second: Option<ScalarFn>,
        lipschitz: f64,
        convex: bool,
    },
}

/// A Hamiltonian H(p) with its Lipschitz bound on the working gradient range,
/// optional convex decomposition H = H1 - H2, and optional Legendre transform.
#[derive(Clone)]
pub struct Hamiltonian {
    name: String,
    kind: HKind,
    grad_range: f64,
}

impl Hamiltonian {
    pub fn eikonal(grad_range: f64) -> Self {
        Hamiltonian {
            name: "eikonal".into(),
            kind: HKind::Eikonal,
            grad_range,
        }
    }

    pub fn quadratic(grad_range: f64) -> Self {
        Hamiltonian {
            name: "quadratic".into(),
            kind: HKind::Quadratic,
            grad_range,
        }
    }

    pub fn smooth_bounded(grad_range: f64) -> Self {
        Hamiltonian {
            name: "smooth_bounded".into(),
            kind: HKind::SmoothBounded,
            grad_range,
        }
    }

    pub fn linear(speed: f64, grad_range: f64) -> Self {
        Hamiltonian {
            name: "linear".into(),
            kind: HKind::Linear { speed },
            grad_range,
        }
    }

    pub fn custom(
        name: &str,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
        convex: bool,
        grad_range: f64,
    ) -> Self {
        Hamiltonian {
            name: name.into(),
            kind: HKind::Custom {
                eval: Arc::new(eval),
                deriv: None,
                second: None,
                lipschitz,
                convex,
            },
            grad_range,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Working gradient range L: the profile slopes the scheme will see.
    pub fn grad_range(&self) -> f64 {
        self.grad_range
    }

    pub fn eval(&self, p: f64) -> f64 {
        let l = self.grad_range;
        match &self.kind {
            HKind::Eikonal => p.abs(),
            HKind::Quadratic => {
                if p.abs() <= l {
                    0.5 * p * p
                } else {
                    l * p.abs() - 0.5 * l * l
                }
            }
            HKind::SmoothBounded => {
                let f = |q: f64| (1.0 + q * q).sqrt() - 1.0;
                if p.abs() <= l {
                    f(p)
                } else {
                    let s = l / (1.0 + l * l).sqrt();
                    f(l) + s * (p.abs() - l)
                }
            }
            HKind::Linear { speed } => speed * p,
            HKind::Custom { eval, .. } => eval(p),
        }
    }

    /// ||H'||_inf on the working range (global, thanks to the linear extension).
    pub fn lipschitz_bound(&self) -> f64 {
        let l = self.grad_range;
        match &self.kind {
            HKind::Eikonal => 1.0,
            HKind::Quadratic => l,
            HKind::SmoothBounded => l / (1.0 + l * l).sqrt(),
            HKind::Linear { speed } => speed.abs(),
            HKind::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn is_convex(&self) -> bool {
        match &self.kind {
            HKind::Custom { convex, .. } => *convex,
            _ => true,
        }
    }

    pub fn derivative(&self, p: f64) -> Option<f64> {
        let l = self.grad_range;
        match &self.kind {
            HKind::Eikonal => None,
            HKind::Quadratic => Some(p.clamp(-l, l)),
            HKind::SmoothBounded => {
                let q = p.clamp(-l, l);
                Some(q / (1.0 + q * q).sqrt())
            }
            HKind::Linear { speed } => Some(*speed),
            HKind::Custom { deriv, .. } => deriv.as_ref().map(|f| f(p)),
        }
    }

    pub fn second_derivative(&self, p: f64) -> Option<f64> {
        let l = self.grad_range;
        match &self.kind {
            HKind::Eikonal => None,
            HKind::Quadratic => Some(if p.abs() <= l { 1.0 } else { 0.0 }),
            HKind::SmoothBounded => {
                if p.abs() <= l {
                    Some((1.0 + p * p).powf(-1.5))
                } else {
                    Some(0.0)
                }
            }
            HKind::Linear { .. } => Some(0.0),
            HKind::Custom { second, .. } => second.as_ref().map(|f| f(p)),
        }
    }

    /// Convex decomposition H = H1 - H2 with H1, H2 >= 0, when known.
    pub fn convex_parts(&self) -> Option<(ScalarFn, ScalarFn)> {
        match &self.kind {
            HKind::Eikonal => Some((Arc::new(|p: f64| p.abs()), Arc::new(|_| 0.0))),
            HKind::Quadratic => {
                let me = self.clone();
                Some((Arc::new(move |p| me.eval(p)), Arc::new(|_| 0.0)))
            }
            HKind::SmoothBounded => {
                let me = self.clone();
                Some((Arc::new(move |p| me.eval(p)), Arc::new(|_| 0.0)))
            }
            HKind::Linear { speed } => {
                let c = *speed;
                Some((
                    Arc::new(move |p: f64| (c * p).max(0.0)),
                    Arc::new(move |p: f64| (-c * p).max(0.0)),
                ))
            }
            HKind::Custom { .. } => None,
        }
    }

    /// Closed-form Legendre transform for the built-in convex Hamiltonians
    /// (computed for the linearly extended versions, whose effective domain is
    /// the closure of the range of H').
    pub fn legendre(&self) -> Option<Box<dyn LegendreTransform>> {
        let l = self.grad_range;
        match &self.kind {
            HKind::Eikonal => Some(Box::new(AnalyticStar {
                lo: -1.0,
                hi: 1.0,
                f: Arc::new(|_| 0.0),
            })),
            HKind::Quadratic => Some(Box::new(AnalyticStar {
                lo: -l,
                hi: l,
                f: Arc::new(|q: f64| 0.5 * q * q),
            })),
            HKind::SmoothBounded => {
                let s = l / (1.0 + l * l).sqrt();
                Some(Box::new(AnalyticStar {
                    lo: -s,
                    hi: s,
                    f: Arc::new(|q: f64| 1.0 - (1.0 - q * q).max(0.0).sqrt()),
                }))
            }
            HKind::Linear { speed } => {
                let c = *speed;
                Some(Box::new(AnalyticStar {
                    lo: c,
                    hi: c,
                    f: Arc::new(|_| 0.0),
                }))
            }
            HKind::Custom { .. } => None,
        }
    }

    /// Spot-check of the declared Lipschitz bound on random pairs in [-L, L].
    pub fn check_lipschitz(&self, pairs: usize, seed: u64) -> f64 {
        let mut rng = crate::rng::seeded_rng(seed);
        use rand::Rng;
        let l = self.grad_range;
        let mut worst = 0.0f64;
        for _ in 0..pairs {
            let p: f64 = rng.gen_range(-l..l);
            let q: f64 = rng.gen_range(-l..l);
            if (p - q).abs() < 1e-12 {
                continue;
            }
            let ratio = (self.eval(p) - self.eval(q)).abs() / (p - q).abs();
            worst = worst.max(ratio);
        }
        worst
    }
}

/// H*(q) = sup_p (p q - H(p)), +infinity outside the effective domain.
/// The domain endpoints drive the search window in the Lax-Oleinik solver.
pub trait LegendreTransform: Send + Sync {
    fn star(&self, q: f64) -> f64;
    /// Closed effective domain [lo, hi].
    fn domain(&self) -> (f64, f64);
}

struct AnalyticStar {
    lo: f64,
    hi: f64,
    f: ScalarFn,
}

impl LegendreTransform for AnalyticStar {
    fn star(&self, q: f64) -> f64 {
        if q < self.lo - 1e-14 || q > self.hi + 1e-14 {
            f64::INFINITY
        } else {
            (self.f)(q.clamp(self.lo, self.hi))
        }
    }

    fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

/// Numerical Legendre transform by maximizing p q - H(p) over a sampled
/// p-interval. A value attained only at the boundary of the sample range is
/// reported as +infinity: for the linearly extended Hamiltonians that is
/// exactly divergence outside the effective domain.
pub struct NumericStar {
    p_samples: Vec<f64>,
    h_samples: Vec<f64>,
    domain: (f64, f64),
}

impl NumericStar {
    pub fn build(h: &Hamiltonian, p_range: (f64, f64), p_samples: usize) -> Result<Self> {
        if !h.is_convex() {
            return Err(Error::HamiltonianRejected {
                name: h.name().into(),
                why: "Legendre transform requires a convex Hamiltonian".into(),
            });
        }
        if p_samples < 3 || p_range.1 <= p_range.0 {
            return Err(Error::InvalidParameter {
                what: "p_samples/p_range",
                why: "need an increasing range and at least 3 samples".into(),
            });
        }
        let ps: Vec<f64> = (0..p_samples)
            .map(|i| p_range.0 + (p_range.1 - p_range.0) * i as f64 / (p_samples - 1) as f64)
            .collect();
        let hs: Vec<f64> = ps.iter().map(|&p| h.eval(p)).collect();
        // Effective domain of H* = closure of the range of H', estimated by
        // one-sided slopes at the sample ends.
        let n = ps.len();
        let lo = (hs[1] - hs[0]) / (ps[1] - ps[0]);
        let hi = (hs[n - 1] - hs[n - 2]) / (ps[n - 1] - ps[n - 2]);
        Ok(NumericStar {
            p_samples: ps,
            h_samples: hs,
            domain: (lo, hi),
        })
    }
}

impl LegendreTransform for NumericStar {
    fn star(&self, q: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        let mut best_i = 0;
        for (i, (&p, &hp)) in self.p_samples.iter().zip(&self.h_samples).enumerate() {
            let v = p * q - hp;
            if v > best {
                best = v;
                best_i = i;
            }
        }
        let n = self.p_samples.len();
        if best_i == 0 || best_i == n - 1 {
            // Attained only at the boundary means the true sup escapes the range;
            // an interior tie within rounding keeps it finite.
            let tol = 1e-12 * (1.0 + best.abs());
            let interior_tie = self
                .p_samples
                .iter()
                .zip(&self.h_samples)
                .enumerate()
                .any(|(i, (&p, &hp))| i != 0 && i != n - 1 && p * q - hp >= best - tol);
            if !interior_tie {
                return f64::INFINITY;
            }
        }
        best
    }

    fn domain(&self) -> (f64, f64) {
        self.domain
    }
}

/// Sampled H* on an explicit q-grid.
pub fn legendre_transform(
    h: &Hamiltonian,
    q_grid: &[f64],
    p_range: (f64, f64),
    p_samples: usize,
) -> Result<Vec<f64>> {
    let star = NumericStar::build(h, p_range, p_samples)?;
    Ok(q_grid.iter().map(|&q| star.star(q)).collect())
}

#[derive(Clone)]
enum DKind {
    /// F(X) = nu X
    Heat { nu: f64 },
    /// F(X) = nu max(X, 0)
    Degenerate { nu: f64 },
    Custom { eval: ScalarFn, bound: f64 },
}

/// Degenerate elliptic nonlinearity F acting on the discrete second derivative.
#[derive(Clone)]
pub struct Diffusion {
    name: String,
    kind: DKind,
}

impl Diffusion {
    pub fn heat(nu: f64) -> Result<Self> {
        if nu < 0.0 {
            return Err(Error::InvalidParameter {
                what: "nu",
                why: format!("diffusion coefficient must be >= 0, got {nu}"),
            });
        }
        Ok(Diffusion {
            name: "heat".into(),
            kind: DKind::Heat { nu },
        })
    }

    pub fn degenerate(nu: f64) -> Result<Self> {
        if nu < 0.0 {
            return Err(Error::InvalidParameter {
                what: "nu",
                why: format!("diffusion coefficient must be >= 0, got {nu}"),
            });
        }
        Ok(Diffusion {
            name: "degenerate".into(),
            kind: DKind::Degenerate { nu },
        })
    }

    pub fn custom(
        name: &str,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative_bound: f64,
    ) -> Self {
        Diffusion {
            name: name.into(),
            kind: DKind::Custom {
                eval: Arc::new(eval),
                bound: derivative_bound,
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            DKind::Heat { nu } => nu * x,
            DKind::Degenerate { nu } => nu * x.max(0.0),
            DKind::Custom { eval, .. } => eval(x),
        }
    }

    pub fn derivative_bound(&self) -> f64 {
        match &self.kind {
            DKind::Heat { nu } | DKind::Degenerate { nu } => *nu,
            DKind::Custom { bound, .. } => *bound,
        }
    }

    /// Degenerate ellipticity spot check: F nondecreasing on a test grid.
    pub fn is_monotone_on(&self, xs: &[f64]) -> bool {
        let mut sorted = xs.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted
            .windows(2)
            .all(|w| self.eval(w[1]) >= self.eval(w[0]) - 1e-12)
    }
}

#[derive(Clone)]
enum UKind {
    /// L times the distance to the lattice period * Z (triangle profile).
    Sawtooth,
    /// (L period / 2 pi) cos(2 pi x / period).
    Cosine,
    Constant { value: f64 },
    Custom { eval: ScalarFn },
}

/// Periodic Lipschitz initial data with a declared constant.
#[derive(Clone)]
pub struct InitialData {
    name: String,
    kind: UKind,
    lipschitz: f64,
    period: f64,
}

impl InitialData {
    pub fn sawtooth(lipschitz: f64, period: f64) -> Self {
        InitialData {
            name: "sawtooth".into(),
            kind: UKind::Sawtooth,
            lipschitz,
            period,
        }
    }

    pub fn cosine(lipschitz: f64, period: f64) -> Self {
        InitialData {
            name: "cosine".into(),
            kind: UKind::Cosine,
            lipschitz,
            period,
        }
    }

    pub fn constant(value: f64, period: f64) -> Self {
        InitialData {
            name: "constant".into(),
            kind: UKind::Constant { value },
            lipschitz: 0.0,
            period,
        }
    }

    pub fn custom(
        name: &str,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
        period: f64,
    ) -> Self {
        InitialData {
            name: name.into(),
            kind: UKind::Custom {
                eval: Arc::new(eval),
            },
            lipschitz,
            period,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lipschitz_constant(&self) -> f64 {
        self.lipschitz
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn eval(&self, x: f64) -> f64 {
        let p = self.period;
        match &self.kind {
            UKind::Sawtooth => {
                let y = x.rem_euclid(p);
                self.lipschitz * y.min(p - y)
            }
            UKind::Cosine => {
                let a = self.lipschitz * p / (2.0 * std::f64::consts::PI);
                a * (2.0 * std::f64::consts::PI * x / p).cos()
            }
            UKind::Constant { value } => *value,
            UKind::Custom { eval } => eval(x),
        }
    }
}

/// A named problem: Hamiltonian, optional diffusion, and initial data.
#[derive(Clone)]
pub struct Problem {
    pub id: String,
    pub hamiltonian: Hamiltonian,
    pub diffusion: Option<Diffusion>,
    pub initial: InitialData,
}

pub const DEFAULT_PERIOD: f64 = 2.0;
pub const DEFAULT_LIPSCHITZ: f64 = 1.0;

pub fn hamiltonian_ids() -> &'static [&'static str] {
    &["eikonal", "linear", "quadratic", "smooth_bounded"]
}

pub fn diffusion_ids() -> &'static [&'static str] {
    &["degenerate", "heat"]
}

pub fn initial_ids() -> &'static [&'static str] {
    &["constant", "cosine", "sawtooth"]
}

pub fn problem_ids() -> &'static [&'static str] {
    &[
        "eikonal_cosine",
        "eikonal_sawtooth",
        "linear_sawtooth",
        "quadratic_cosine",
        "quadratic_cosine_degenerate",
        "quadratic_cosine_heat",
        "quadratic_sawtooth",
        "smooth_bounded_cosine",
    ]
}

pub fn hamiltonian_by_id(id: &str, grad_range: f64) -> Result<Hamiltonian> {
    match id {
        "eikonal" => Ok(Hamiltonian::eikonal(grad_range)),
        "quadratic" => Ok(Hamiltonian::quadratic(grad_range)),
        "smooth_bounded" => Ok(Hamiltonian::smooth_bounded(grad_range)),
        "linear" => Ok(Hamiltonian::linear(0.25, grad_range)),
        _ => Err(Error::UnknownId(id.into())),
    }
}

pub fn diffusion_by_id(id: &str, nu: f64) -> Result<Diffusion> {
    match id {
        "heat" => Diffusion::heat(nu),
        "degenerate" => Diffusion::degenerate(nu),
        _ => Err(Error::UnknownId(id.into())),
    }
}

pub fn initial_by_id(id: &str, lipschitz: f64, period: f64) -> Result<InitialData> {
    match id {
        "sawtooth" => Ok(InitialData::sawtooth(lipschitz, period)),
        "cosine" => Ok(InitialData::cosine(lipschitz, period)),
        "constant" => Ok(InitialData::constant(0.0, period)),
        _ => Err(Error::UnknownId(id.into())),
    }
}

/// Built-in problem catalogue, addressable by string id.
pub fn problem_by_id(id: &str) -> Result<Problem> {
    let l = DEFAULT_LIPSCHITZ;
    let p = DEFAULT_PERIOD;
    let (h, f, u0): (Hamiltonian, Option<Diffusion>, InitialData) = match id {
        "eikonal_sawtooth" => (Hamiltonian::eikonal(l), None, InitialData::sawtooth(l, p)),
        "eikonal_cosine" => (Hamiltonian::eikonal(l), None, InitialData::cosine(l, p)),
        "quadratic_cosine" => (Hamiltonian::quadratic(l), None, InitialData::cosine(l, p)),
        "quadratic_sawtooth" => (Hamiltonian::quadratic(l), None, InitialData::sawtooth(l, p)),
        "smooth_bounded_cosine" => (
            Hamiltonian::smooth_bounded(l),
            None,
            InitialData::cosine(l, p),
        ),
        "linear_sawtooth" => (
            Hamiltonian::linear(0.25, l),
            None,
            InitialData::sawtooth(l, p),
        ),
        "quadratic_cosine_heat" => (
            Hamiltonian::quadratic(l),
            Some(Diffusion::heat(0.1)?),
            InitialData::cosine(l, p),
        ),
        "quadratic_cosine_degenerate" => (
            Hamiltonian::quadratic(l),
            Some(Diffusion::degenerate(0.1)?),
            InitialData::cosine(l, p),
        ),
        _ => return Err(Error::UnknownId(id.into())),
    };
    Ok(Problem {
        id: id.into(),
        hamiltonian: h,
        diffusion: f,
        initial: u0,
    })
}
