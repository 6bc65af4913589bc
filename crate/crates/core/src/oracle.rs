//! Reference solutions: Hopf-Lax/Lax-Oleinik semigroup composition over the
//! monotone runs of a piecewise-linear driver, characteristics-based smooth
//! solutions, and a fine-grid scheme fallback for problems with no closed
//! oracle.

use crate::error::{Error, Result};
use crate::grid::{Grid1D, GridFunction};
use crate::path::{Partition, PiecewisePath};
use crate::problem::{Hamiltonian, InitialData, LegendreTransform, NumericStar};
use crate::scheme::{evolve, EvolveRecord, SchemeSpec, SnapshotPolicy};

/// One Lax-Oleinik step for a signed driver displacement `c_dt` of a convex
/// Hamiltonian with transform `star`:
///   c_dt > 0:  v(x) = sup_y { u(y) - c_dt H*((y - x)/c_dt) }
///   c_dt < 0:  v(x) = inf_y { u(y) + |c_dt| H*((x - y)/|c_dt|) }
///   c_dt = 0:  identity.
/// The search runs over grid nodes within one period of images; the effective
/// domain of H* bounds the window, so the cost is O(nodes * window).
pub fn lax_oleinik_segment(
    u: &GridFunction,
    c_dt: f64,
    star: &dyn LegendreTransform,
) -> Result<GridFunction> {
    if c_dt == 0.0 {
        return Ok(u.clone());
    }
    let grid = u.grid();
    let h = grid.spacing();
    let period = grid.period();
    let (qlo, qhi) = star.domain();
    if !(qlo.is_finite() && qhi.is_finite() && qhi >= qlo) {
        return Err(Error::MissingLegendre(
            "Legendre transform has no finite effective domain".into(),
        ));
    }
    let qmax = qlo.abs().max(qhi.abs());
    let a = c_dt.abs();
    if a * qmax >= 0.5 * period {
        return Err(Error::OracleUnavailable(format!(
            "displacement {a:.3e} times domain radius {qmax:.3} reaches half a period; \
             split the segment or enlarge the period"
        )));
    }

    // Degenerate or sub-grid domain: evaluate by periodic interpolation at the
    // domain points instead of scanning nodes (exact transport for linear H).
    if (qhi - qlo) * a < h {
        let qs = [qlo, 0.5 * (qlo + qhi), qhi];
        let values = (0..grid.nodes())
            .map(|i| {
                let x = grid.node(i);
                let mut best = if c_dt > 0.0 {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                };
                for &q in &qs {
                    let sv = star.star(q);
                    if !sv.is_finite() {
                        continue;
                    }
                    if c_dt > 0.0 {
                        best = best.max(u.eval_periodic(x + c_dt * q) - c_dt * sv);
                    } else {
                        best = best.min(u.eval_periodic(x - a * q) + a * sv);
                    }
                }
                best
            })
            .collect();
        return GridFunction::new(grid, values);
    }

    // Node offsets k such that q(k) lies in the domain: for c_dt > 0 the
    // candidate y = x + k h has q = k h / c_dt; for c_dt < 0, q = -k h / a.
    let (k_lo, k_hi) = if c_dt > 0.0 {
        (
            (qlo * c_dt / h).floor() as isize - 1,
            (qhi * c_dt / h).ceil() as isize + 1,
        )
    } else {
        (
            (-qhi * a / h).floor() as isize - 1,
            (-qlo * a / h).ceil() as isize + 1,
        )
    };
    let mut offsets: Vec<(isize, f64)> = Vec::with_capacity((k_hi - k_lo + 1) as usize);
    for k in k_lo..=k_hi {
        let q = if c_dt > 0.0 {
            k as f64 * h / c_dt
        } else {
            -(k as f64) * h / a
        };
        let sv = star.star(q);
        if sv.is_finite() {
            offsets.push((k, a * sv));
        }
    }
    if offsets.is_empty() {
        // Domain narrower than one node spacing in q; fall back on its center.
        let q = 0.5 * (qlo + qhi);
        let sv = star.star(q);
        let values = (0..grid.nodes())
            .map(|i| {
                let x = grid.node(i);
                if c_dt > 0.0 {
                    u.eval_periodic(x + c_dt * q) - c_dt * sv
                } else {
                    u.eval_periodic(x - a * q) + a * sv
                }
            })
            .collect();
        return GridFunction::new(grid, values);
    }

    let m = grid.nodes() as isize;
    let values: Vec<f64> = (0..m)
        .map(|i| {
            if c_dt > 0.0 {
                let mut best = f64::NEG_INFINITY;
                for &(k, cost) in &offsets {
                    let v = u.value(i + k) - cost;
                    if v > best {
                        best = v;
                    }
                }
                best
            } else {
                let mut best = f64::INFINITY;
                for &(k, cost) in &offsets {
                    let v = u.value(i + k) + cost;
                    if v < best {
                        best = v;
                    }
                }
                best
            }
        })
        .collect();
    GridFunction::new(grid, values)
}

/// Snapshots of the exact pathwise solution at the probe times, with the
/// path-substitution error budget when a target path is supplied.
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub times: Vec<f64>,
    pub snapshots: Vec<GridFunction>,
    /// C_L_hat * sup |zeta - w| when a comparison path was given.
    pub budget: Option<f64>,
}

impl OracleRun {
    pub fn snapshot_at(&self, t: f64) -> Option<&GridFunction> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
            .map(|i| &self.snapshots[i])
    }
}

fn star_for(hamiltonian: &Hamiltonian) -> Result<Box<dyn LegendreTransform>> {
    if !hamiltonian.is_convex() {
        return Err(Error::OracleUnavailable(format!(
            "'{}' is not convex; use the fine-grid reference fallback",
            hamiltonian.name()
        )));
    }
    if let Some(star) = hamiltonian.legendre() {
        return Ok(star);
    }
    let l = hamiltonian.grad_range();
    Ok(Box::new(NumericStar::build(
        hamiltonian,
        (-3.0 * l, 3.0 * l),
        4001,
    )?))
}

/// Exact pathwise solution for convex H and F = 0: Lax-Oleinik steps composed
/// over the monotone runs of the piecewise-linear driver, flushed at probe
/// times. `budget_against` attaches the error budget C_hat * sup|zeta - W|
/// for reading the result as an approximation of the W-driven solution.
pub fn pathwise_oracle(
    grid: Grid1D,
    u0: &InitialData,
    zeta: &PiecewisePath,
    hamiltonian: &Hamiltonian,
    probe_times: &[f64],
    budget_against: Option<(&PiecewisePath, f64)>,
) -> Result<OracleRun> {
    if zeta.components() != 1 {
        return Err(Error::InvalidParameter {
            what: "zeta",
            why: "oracle runs on scalar drivers".into(),
        });
    }
    let star = star_for(hamiltonian)?;
    let mut probes: Vec<f64> = probe_times.to_vec();
    probes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    probes.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    for &p in &probes {
        if p < 0.0 || p > zeta.horizon() + 1e-12 {
            return Err(Error::TimeOutOfRange {
                t: p,
                horizon: zeta.horizon(),
            });
        }
    }
    let refined = zeta.with_times_inserted(&probes)?;
    let mut v = GridFunction::sample(grid, |x| u0.eval(x))?;
    let mut out_times = Vec::with_capacity(probes.len());
    let mut snapshots = Vec::with_capacity(probes.len());
    let mut probe_iter = probes.iter().peekable();
    if let Some(&&p) = probe_iter.peek() {
        if p <= 1e-12 {
            out_times.push(p);
            snapshots.push(v.clone());
            probe_iter.next();
        }
    }
    // Accumulate same-sign displacements; apply one Lax-Oleinik step per run.
    let mut pending = 0.0f64;
    let times = refined.times();
    for i in 0..times.len() - 1 {
        let d = refined.value(i + 1, 0) - refined.value(i, 0);
        if d != 0.0 {
            if pending != 0.0 && d.signum() != pending.signum() {
                v = lax_oleinik_segment(&v, pending, star.as_ref())?;
                pending = 0.0;
            }
            pending += d;
        }
        let t_here = times[i + 1];
        while let Some(&&p) = probe_iter.peek() {
            if p <= t_here + 1e-12 {
                if pending != 0.0 {
                    v = lax_oleinik_segment(&v, pending, star.as_ref())?;
                    pending = 0.0;
                }
                out_times.push(p);
                snapshots.push(v.clone());
                probe_iter.next();
            } else {
                break;
            }
        }
    }
    let budget = match budget_against {
        Some((w, c_hat)) => Some(c_hat * zeta.sup_distance(w)?),
        None => None,
    };
    Ok(OracleRun {
        times: out_times,
        snapshots,
        budget,
    })
}

/// Twice-differentiable spatial profile with analytic derivatives.
pub trait SmoothProfile: Send + Sync {
    fn eval(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
    fn period(&self) -> f64;
}

/// amplitude * cos(2 pi x / period).
#[derive(Debug, Clone, Copy)]
pub struct CosineProfile {
    pub amplitude: f64,
    pub period: f64,
}

impl SmoothProfile for CosineProfile {
    fn eval(&self, x: f64) -> f64 {
        self.amplitude * (2.0 * std::f64::consts::PI * x / self.period).cos()
    }

    fn d1(&self, x: f64) -> f64 {
        let k = 2.0 * std::f64::consts::PI / self.period;
        -self.amplitude * k * (k * x).sin()
    }

    fn d2(&self, x: f64) -> f64 {
        let k = 2.0 * std::f64::consts::PI / self.period;
        -self.amplitude * k * k * (k * x).cos()
    }

    fn period(&self) -> f64 {
        self.period
    }
}

/// Local-in-time smooth solution built by inverting the characteristics
/// x -> x - H'(phi'(x)) (zeta(t) - zeta(t0)). Valid while the inversion map
/// keeps derivative above 0.05 for every sampled x.
pub struct SmoothSolutionWindow {
    hamiltonian: Hamiltonian,
    profile: Box<dyn SmoothProfile>,
    zeta: PiecewisePath,
    base_time: f64,
    window: (f64, f64),
    displacement_range: (f64, f64),
    grad_bound: f64,
}

impl SmoothSolutionWindow {
    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn base_time(&self) -> f64 {
        self.base_time
    }

    fn displacement(&self, t: f64) -> Result<f64> {
        Ok(self.zeta.eval_scalar(t)? - self.zeta.eval_scalar(self.base_time)?)
    }

    fn check(&self, t: f64) -> Result<f64> {
        if t < self.window.0 - 1e-12 || t > self.window.1 + 1e-12 {
            return Err(Error::WindowExceeded(format!(
                "t = {t} outside validity window [{}, {}]",
                self.window.0, self.window.1
            )));
        }
        let d = self.displacement(t)?;
        if d <= self.displacement_range.0 || d >= self.displacement_range.1 {
            return Err(Error::WindowExceeded(format!(
                "driver displacement {d:.6} outside admissible ({}, {})",
                self.displacement_range.0, self.displacement_range.1
            )));
        }
        Ok(d)
    }

    /// Evaluate the smooth solution at (x, t) by a bracketed monotone search
    /// for the characteristic foot, polished by Newton iterations.
    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        let d = self.check(t)?;
        let foot = self.invert(x, d);
        let p = self.profile.d1(foot);
        let hp = self.hamiltonian.eval(p);
        let dhp = self
            .hamiltonian
            .derivative(p)
            .expect("C^2 Hamiltonian checked at construction");
        Ok(self.profile.eval(foot) + (hp - p * dhp) * d)
    }

    /// Spatial derivative of the solution, transported from the profile.
    pub fn gradient(&self, x: f64, t: f64) -> Result<f64> {
        let d = self.check(t)?;
        Ok(self.profile.d1(self.invert(x, d)))
    }

    fn forward(&self, y: f64, d: f64) -> f64 {
        let p = self.profile.d1(y);
        y - self.hamiltonian.derivative(p).unwrap() * d
    }

    fn forward_slope(&self, y: f64, d: f64) -> f64 {
        let p = self.profile.d1(y);
        1.0 - self.hamiltonian.second_derivative(p).unwrap() * self.profile.d2(y) * d
    }

    fn invert(&self, x: f64, d: f64) -> f64 {
        let radius = self.grad_bound * d.abs() + 1e-9;
        let mut lo = x - radius;
        let mut hi = x + radius;
        // The map y -> X(y) is strictly increasing with slope > 0.05 on the
        // window, so bisection brackets stay valid.
        for _ in 0..90 {
            let mid = 0.5 * (lo + hi);
            if self.forward(mid, d) < x {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 * (1.0 + x.abs()) {
                break;
            }
        }
        let mut y = 0.5 * (lo + hi);
        for _ in 0..4 {
            let fx = self.forward(y, d) - x;
            let fp = self.forward_slope(y, d);
            if fp.abs() < 0.01 {
                break;
            }
            let step = fx / fp;
            let y_next = y - step;
            if y_next < lo - radius || y_next > hi + radius {
                break;
            }
            y = y_next;
        }
        y
    }

    /// First time t >= base_time with zeta(t) - zeta(base_time) equal to the
    /// requested displacement, staying inside the validity window. Also
    /// returns the base time, for a (start, end) step pair.
    pub fn times_for_displacement(&self, d: f64) -> Result<(f64, f64)> {
        if d <= self.displacement_range.0 || d >= self.displacement_range.1 {
            return Err(Error::WindowExceeded(format!(
                "requested displacement {d:.6} outside admissible ({}, {})",
                self.displacement_range.0, self.displacement_range.1
            )));
        }
        let base_val = self.zeta.eval_scalar(self.base_time)?;
        let times = self.zeta.times();
        let mut prev_t = self.base_time;
        let mut prev_v = 0.0f64;
        for i in 0..times.len() {
            let t_raw = times[i];
            if t_raw <= self.base_time {
                continue;
            }
            // Clamp the segment to the validity window before testing it.
            let t = t_raw.min(self.window.1);
            let v = self.zeta.eval_scalar(t)? - base_val;
            if (prev_v - d) * (v - d) <= 0.0 && prev_v != v {
                let w = (d - prev_v) / (v - prev_v);
                return Ok((self.base_time, prev_t + w * (t - prev_t)));
            }
            if t_raw >= self.window.1 {
                break;
            }
            prev_t = t;
            prev_v = v;
        }
        Err(Error::WindowExceeded(format!(
            "driver never reaches displacement {d:.6} inside the validity window"
        )))
    }
}

/// Build the characteristics solution around `t0`. Needs a C^2 Hamiltonian
/// (analytic first and second derivatives) and a twice differentiable profile.
pub fn characteristics_solution(
    hamiltonian: &Hamiltonian,
    profile: Box<dyn SmoothProfile>,
    zeta: &PiecewisePath,
    t0: f64,
) -> Result<SmoothSolutionWindow> {
    if zeta.components() != 1 {
        return Err(Error::InvalidParameter {
            what: "zeta",
            why: "characteristics run on scalar drivers".into(),
        });
    }
    if hamiltonian.derivative(0.0).is_none() || hamiltonian.second_derivative(0.0).is_none() {
        return Err(Error::HamiltonianRejected {
            name: hamiltonian.name().into(),
            why: "characteristics need a C^2 Hamiltonian with analytic derivatives".into(),
        });
    }
    if t0 < 0.0 || t0 > zeta.horizon() {
        return Err(Error::TimeOutOfRange {
            t: t0,
            horizon: zeta.horizon(),
        });
    }
    // Admissible displacement interval from 1 - H''(phi'(x)) phi''(x) d > 0.05
    // over one period of sampled x.
    let samples = 4096;
    let period = profile.period();
    let mut a_min = f64::INFINITY;
    let mut a_max = f64::NEG_INFINITY;
    let mut grad_bound = 0.0f64;
    for i in 0..samples {
        let x = period * i as f64 / samples as f64;
        let p = profile.d1(x);
        let a = hamiltonian.second_derivative(p).unwrap() * profile.d2(x);
        a_min = a_min.min(a);
        a_max = a_max.max(a);
        grad_bound = grad_bound.max(hamiltonian.derivative(p).unwrap().abs());
    }
    let d_hi = if a_max > 0.0 { 0.95 / a_max } else { f64::INFINITY };
    let d_lo = if a_min < 0.0 { 0.95 / a_min } else { f64::NEG_INFINITY };

    // Walk the driver in both directions while the displacement stays strictly
    // inside (d_lo, d_hi).
    let base_val = zeta.eval_scalar(t0)?;
    let crossing = |t_a: f64, v_a: f64, t_b: f64, v_b: f64, level: f64| -> f64 {
        t_a + (level - v_a) / (v_b - v_a) * (t_b - t_a)
    };
    let times = zeta.times();
    let mut hi = zeta.horizon();
    {
        let mut prev_t = t0;
        let mut prev_v = 0.0f64;
        for i in 0..times.len() {
            let t = times[i];
            if t <= t0 {
                continue;
            }
            let v = zeta.value(i, 0) - base_val;
            if v >= d_hi {
                hi = crossing(prev_t, prev_v, t, v, d_hi);
                break;
            }
            if v <= d_lo {
                hi = crossing(prev_t, prev_v, t, v, d_lo);
                break;
            }
            prev_t = t;
            prev_v = v;
        }
    }
    let mut lo = 0.0;
    {
        let mut prev_t = t0;
        let mut prev_v = 0.0f64;
        for i in (0..times.len()).rev() {
            let t = times[i];
            if t >= t0 {
                continue;
            }
            let v = zeta.value(i, 0) - base_val;
            if v >= d_hi {
                lo = crossing(prev_t, prev_v, t, v, d_hi);
                break;
            }
            if v <= d_lo {
                lo = crossing(prev_t, prev_v, t, v, d_lo);
                break;
            }
            prev_t = t;
            prev_v = v;
        }
    }
    Ok(SmoothSolutionWindow {
        hamiltonian: hamiltonian.clone(),
        profile,
        zeta: zeta.clone(),
        base_time: t0,
        window: (lo, hi),
        displacement_range: (d_lo, d_hi),
        grad_bound,
    })
}

/// Fine-grid reference: the same scheme run at spacing h / refinement with a
/// driver partition rebuilt for the finer grid. Not an exact oracle; reports
/// must flag it as such.
pub struct FallbackReference {
    pub record: EvolveRecord,
    pub refinement: usize,
    /// Always false: this reference is a scheme run, not a closed solution.
    pub exact: bool,
}

pub const DEFAULT_NODE_STEP_BUDGET: u128 = 8_000_000_000;

pub fn reference_fallback(
    spec: &SchemeSpec,
    u0: &InitialData,
    coarse_grid: Grid1D,
    refinement: usize,
    build_driver: &dyn Fn(f64) -> Result<(Partition, PiecewisePath)>,
    probe_times: &[f64],
    node_step_budget: u128,
) -> Result<FallbackReference> {
    if refinement < 4 {
        return Err(Error::InvalidParameter {
            what: "refinement",
            why: format!("need refinement >= 4, got {refinement}"),
        });
    }
    let fine_grid = Grid1D::new(coarse_grid.period(), coarse_grid.nodes() * refinement)?;
    let (partition, path) = build_driver(fine_grid.spacing())?;
    let required = partition.intervals() as u128 * fine_grid.nodes() as u128;
    if required > node_step_budget {
        return Err(Error::BudgetExceeded {
            required,
            cap: node_step_budget,
        });
    }
    let record = evolve(
        spec,
        fine_grid,
        u0,
        &path,
        &partition,
        SnapshotPolicy::At(probe_times.to_vec()),
    )?;
    Ok(FallbackReference {
        record,
        refinement,
        exact: false,
    })
}

/// Sup distance between a coarse evolve record and a reference on a grid
/// `refinement` times finer, over coarse nodes at matched snapshot times.
/// Snapshot times are matched to the nearest reference time; the reference
/// partition is finer, so the offset stays below half a coarse snapshot gap.
pub fn sup_error_against_reference(coarse: &EvolveRecord, reference: &FallbackReference) -> f64 {
    let r = reference.record.grid.nodes() / coarse.grid.nodes();
    let min_gap = coarse
        .times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let mut worst = 0.0f64;
    for (i, &t) in coarse.times.iter().enumerate() {
        let mut j_best = 0usize;
        let mut dist = f64::INFINITY;
        for (j, &s) in reference.record.times.iter().enumerate() {
            let d = (s - t).abs();
            if d < dist {
                dist = d;
                j_best = j;
            }
        }
        if dist > 0.5 * min_gap {
            continue;
        }
        let cs = &coarse.snapshots[i];
        let fs = &reference.record.snapshots[j_best];
        for n in 0..coarse.grid.nodes() {
            worst = worst.max((cs.values()[n] - fs.values()[n * r]).abs());
        }
    }
    worst
}
