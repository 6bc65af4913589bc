//! Construction, regularization and validation of the driving signals.
//!
//! The regularization recipes share one shape: choose a step width rho from a
//! modulus of continuity, lay the partition {n rho ^ T}, and replace the
//! driver by a block-wise linear interpolation whose per-step increments obey
//! |increment| <= lambda0 h. Violations abort; nothing is clipped.

use crate::error::{Error, Result};
use crate::path::{Partition, PiecewisePath};
use crate::rng::GaussianSource;

/// Modulus of continuity supplied analytically per path family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Modulus {
    /// omega(r) = constant * r^exponent, exponent in (0, 1].
    Holder { constant: f64, exponent: f64 },
    /// omega(r) = constant * sqrt(2 r max(|ln r|, 1)): the a.s. modulus of
    /// Brownian paths, continued monotonically past r = 1/e.
    Levy { constant: f64 },
}

impl Modulus {
    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            Modulus::Holder { constant, exponent } => constant * r.powf(*exponent),
            Modulus::Levy { constant } => constant * (2.0 * r * r.ln().abs().max(1.0)).sqrt(),
        }
    }

    pub fn lipschitz(constant: f64) -> Self {
        Modulus::Holder {
            constant,
            exponent: 1.0,
        }
    }

    pub fn levy() -> Self {
        Modulus::Levy { constant: 1.0 }
    }

    /// Same shape with the leading constant multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            Modulus::Holder { constant, exponent } => Modulus::Holder {
                constant: constant * factor,
                exponent,
            },
            Modulus::Levy { constant } => Modulus::Levy {
                constant: constant * factor,
            },
        }
    }
}

/// Standard Brownian path sampled on a uniform fine grid of step `dt_fine`
/// (the final increment is shortened to land exactly on the horizon).
/// Identical seeds give bit-identical breakpoints.
pub fn sample_brownian(seed: u64, horizon: f64, dt_fine: f64) -> Result<PiecewisePath> {
    if horizon <= 0.0 {
        return Err(Error::NonpositiveParameter {
            what: "horizon",
            value: horizon,
        });
    }
    if dt_fine <= 0.0 {
        return Err(Error::NonpositiveParameter {
            what: "dt_fine",
            value: dt_fine,
        });
    }
    let mut gauss = GaussianSource::new(seed);
    let steps = (horizon / dt_fine).floor() as usize;
    let mut times = Vec::with_capacity(steps + 2);
    let mut values = Vec::with_capacity(steps + 2);
    times.push(0.0);
    values.push(0.0);
    let mut w = 0.0;
    for k in 1..=steps {
        let t = k as f64 * dt_fine;
        if t >= horizon {
            break;
        }
        w += dt_fine.sqrt() * gauss.next_standard();
        times.push(t);
        values.push(w);
    }
    let t_last = *times.last().unwrap();
    let tail = horizon - t_last;
    w += tail.sqrt() * gauss.next_standard();
    times.push(horizon);
    values.push(w);
    PiecewisePath::new(times, values, 1)
}

/// Regular regularization: partition {n rho ^ T}; the path interpolates W at
/// the block endpoints k M rho with M = floor(rho^{-1/2}).
pub fn regularize_regular(
    w: &PiecewisePath,
    rho: f64,
    horizon: f64,
) -> Result<(Partition, PiecewisePath)> {
    if rho <= 0.0 {
        return Err(Error::NonpositiveParameter {
            what: "rho",
            value: rho,
        });
    }
    if rho >= 1.0 {
        return Err(Error::InvalidParameter {
            what: "rho",
            why: format!("regular regularization needs rho < 1, got {rho}"),
        });
    }
    if horizon > w.horizon() + 1e-12 {
        return Err(Error::TimeOutOfRange {
            t: horizon,
            horizon: w.horizon(),
        });
    }
    let partition = Partition::with_step(horizon, rho)?;
    let block_steps = rho.powf(-0.5).floor().max(1.0) as u64;
    let block = block_steps as f64 * rho;
    let mut times = vec![0.0];
    let mut values = vec![w.eval_scalar(0.0)?];
    let mut k = 1u64;
    loop {
        let t = block * k as f64;
        if t >= horizon - 1e-12 * block {
            times.push(horizon);
            values.push(w.eval_scalar(horizon)?);
            break;
        }
        times.push(t);
        values.push(w.eval_scalar(t)?);
        k += 1;
    }
    let path = PiecewisePath::new(times, values, 1)?;
    Ok((partition, path))
}

/// Solve rho^{1/2} omega(rho^{1/2}) = lambda h for rho by bisection on (0, 1),
/// to relative residual 1e-12.
pub fn solve_rho_implicit(omega: &Modulus, h: f64, lambda: f64) -> Result<f64> {
    if h <= 0.0 {
        return Err(Error::NonpositiveParameter { what: "h", value: h });
    }
    if lambda <= 0.0 {
        return Err(Error::NonpositiveParameter {
            what: "lambda",
            value: lambda,
        });
    }
    let target = lambda * h;
    let g = |rho: f64| rho.sqrt() * omega.eval(rho.sqrt()) - target;
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    if g(hi) < 0.0 {
        return Err(Error::NoRoot(format!(
            "rho^(1/2) omega(rho^(1/2)) stays below lambda h = {target:.3e} on (0, 1]; \
             h is too large for this modulus"
        )));
    }
    let tol = 1e-12 * target;
    let mut mid = 0.5;
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let v = g(mid);
        if v.abs() <= tol {
            return Ok(mid);
        }
        if v > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * mid {
            break;
        }
    }
    if g(mid).abs() <= tol {
        Ok(mid)
    } else {
        Err(Error::NoRoot(format!(
            "bisection residual {:.3e} above tolerance {:.3e}",
            g(mid).abs(),
            tol
        )))
    }
}

/// Stopping times are detected on a fine grid of step threshold^2 / this
/// factor, and the exit-time Monte Carlo runs at the matching relative step
/// 1 / this factor, so their discretization biases cancel by Brownian scaling.
pub const STOPPING_DETECTION_FACTOR: f64 = 64.0;

/// Oscillation stopping times of a driver: T_{k+1} is the first fine-grid time
/// with osc(W, T_k, t) >= threshold.
#[derive(Debug, Clone)]
pub struct StoppingTimeFamily {
    /// T_0 = 0 and every detected stopping time <= T.
    pub times: Vec<f64>,
    pub threshold: f64,
    pub fine_resolution: f64,
}

impl StoppingTimeFamily {
    /// K_h: number of stopping times detected by the horizon.
    pub fn count(&self) -> usize {
        self.times.len() - 1
    }

    /// Durations tau_k = T_k - T_{k-1} of the completed blocks.
    pub fn durations(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Stopping-time regularization: threshold eta_h = h^{1/3} |ln h|^{-2/3},
/// blocks [T_k, T_{k+1}] subdivided into ceil(eta_h / (lambda0 h)) equal steps
/// (raised per block if the endpoint increment detected on the fine grid
/// overshoots the threshold, so every step satisfies the CFL bound).
pub fn stopping_time_partition(
    w: &PiecewisePath,
    h: f64,
    lambda0: f64,
) -> Result<(StoppingTimeFamily, Partition, PiecewisePath)> {
    if !(h > 0.0 && h < (-1.0f64).exp()) {
        return Err(Error::InvalidParameter {
            what: "h",
            why: format!("stopping-time recipe needs 0 < h < 1/e, got {h}"),
        });
    }
    if lambda0 <= 0.0 {
        return Err(Error::NonpositiveParameter {
            what: "lambda0",
            value: lambda0,
        });
    }
    let eta = h.powf(1.0 / 3.0) / h.ln().abs().powf(2.0 / 3.0);
    let required = eta * eta / STOPPING_DETECTION_FACTOR;
    let actual = w.max_breakpoint_gap();
    if actual > required * (1.0 + 1e-9) {
        return Err(Error::FineResolutionTooCoarse { required, actual });
    }
    let horizon = w.horizon();
    let m_base = (eta / (lambda0 * h)).ceil().max(1.0) as usize;

    let times = w.times();
    let mut stop_times = vec![0.0];
    let mut stop_values = vec![w.value(0, 0)];
    let mut part_times = vec![0.0];

    let mut block_start_idx = 0usize;
    let mut running_min = w.value(0, 0);
    let mut running_max = running_min;
    let mut idx = 1usize;
    while idx < times.len() {
        let v = w.value(idx, 0);
        running_min = running_min.min(v);
        running_max = running_max.max(v);
        if running_max - running_min >= eta {
            let t_prev = times[block_start_idx];
            let t_here = times[idx];
            let dv = (v - w.value(block_start_idx, 0)).abs();
            let m_block = m_base.max((dv / (lambda0 * h)).ceil() as usize).max(1);
            let tau = t_here - t_prev;
            for j in 1..=m_block {
                part_times.push(t_prev + tau * j as f64 / m_block as f64);
            }
            *part_times.last_mut().unwrap() = t_here;
            stop_times.push(t_here);
            stop_values.push(v);
            block_start_idx = idx;
            running_min = v;
            running_max = v;
        }
        idx += 1;
    }
    // Trailing block without an exit: interpolate straight to the horizon.
    let t_last_stop = *stop_times.last().unwrap();
    let mut path_times = stop_times.clone();
    let mut path_values = stop_values.clone();
    if t_last_stop < horizon {
        let v_end = w.eval_scalar(horizon)?;
        let dv = (v_end - *path_values.last().unwrap()).abs();
        let m_block = m_base.max((dv / (lambda0 * h)).ceil() as usize).max(1);
        let tau = horizon - t_last_stop;
        for j in 1..=m_block {
            part_times.push(t_last_stop + tau * j as f64 / m_block as f64);
        }
        *part_times.last_mut().unwrap() = horizon;
        path_times.push(horizon);
        path_values.push(v_end);
    }
    let family = StoppingTimeFamily {
        times: stop_times,
        threshold: eta,
        fine_resolution: actual,
    };
    let partition = Partition::from_times(part_times)?;
    let path = PiecewisePath::new(path_times, path_values, 1)?;
    Ok((family, partition, path))
}

/// Parabolically scaled simple random walk: blocks of M rho with slopes
/// +-(M rho)^{-1/2}, M = ceil(rho^{-1/2}) so each partition step moves by
/// (rho / M)^{1/2} <= rho^{3/4} <= lambda0 h.
pub fn scaled_random_walk(
    seed: u64,
    h: f64,
    lambda: f64,
    lambda0: f64,
    horizon: f64,
) -> Result<(Partition, PiecewisePath)> {
    if lambda > lambda0 {
        return Err(Error::CflViolation {
            interval: 0,
            ratio: lambda / lambda0,
        });
    }
    if h <= 0.0 {
        return Err(Error::NonpositiveParameter { what: "h", value: h });
    }
    let rho = (lambda * h).powf(4.0 / 3.0);
    if rho >= 1.0 {
        return Err(Error::InvalidParameter {
            what: "h",
            why: format!("rho = (lambda h)^(4/3) = {rho} must be < 1"),
        });
    }
    let partition = Partition::with_step(horizon, rho)?;
    let m = rho.powf(-0.5).ceil().max(1.0) as u64;
    let block = m as f64 * rho;
    let slope_mag = 1.0 / block.sqrt();
    let mut rng = crate::rng::seeded_rng(seed);
    use rand::Rng;
    let mut times = vec![0.0];
    let mut values = vec![0.0];
    let mut w = 0.0;
    let mut k = 0u64;
    loop {
        let t0 = block * k as f64;
        let t1 = block * (k + 1) as f64;
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        if t1 >= horizon - 1e-12 * block {
            w += sign * slope_mag * (horizon - t0);
            times.push(horizon);
            values.push(w);
            break;
        }
        w += sign * slope_mag * block;
        times.push(t1);
        values.push(w);
        k += 1;
    }
    let path = PiecewisePath::new(times, values, 1)?;
    Ok((partition, path))
}

/// Regular regularization sized by a modulus of continuity, with a CFL retry:
/// rho solves rho^{1/2} omega(rho^{1/2}) = lambda h; if the sampled driver
/// oscillates above its nominal modulus on some block, the modulus constant is
/// inflated by the observed excess and rho re-solved until the construction
/// passes check_cfl with the supplied lambda0. Returns the construction along
/// with rho and the number of rescales applied.
pub fn regularize_with_modulus(
    w: &PiecewisePath,
    omega: &Modulus,
    h: f64,
    lambda: f64,
    lambda0: f64,
    horizon: f64,
) -> Result<(Partition, PiecewisePath, f64, usize)> {
    if lambda > lambda0 {
        return Err(Error::CflViolation {
            interval: 0,
            ratio: lambda / lambda0,
        });
    }
    let mut modulus = *omega;
    let mut rescales = 0usize;
    loop {
        let rho = solve_rho_implicit(&modulus, h, lambda)?;
        let (partition, path) = regularize_regular(w, rho, horizon)?;
        let report = check_cfl(&path, &partition, h, lambda0)?;
        if report.admissible {
            return Ok((partition, path, rho, rescales));
        }
        if rescales >= 12 {
            return Err(Error::CflViolation {
                interval: report.worst_interval,
                ratio: report.worst_ratio,
            });
        }
        modulus = modulus.scaled(report.worst_ratio * 1.05);
        rescales += 1;
    }
}

/// Outcome of a CFL check: the worst |increment| / (lambda0 h) over the
/// partition and whether every interval passed.
#[derive(Debug, Clone, Copy)]
pub struct CflReport {
    pub admissible: bool,
    pub worst_ratio: f64,
    pub worst_interval: usize,
}

const CFL_SLACK: f64 = 1e-9;

/// Verify the path is affine on each partition interval and every increment
/// satisfies |zeta(t_{n+1}) - zeta(t_n)| <= lambda0 h.
pub fn check_cfl(
    path: &PiecewisePath,
    partition: &Partition,
    h: f64,
    lambda0: f64,
) -> Result<CflReport> {
    if h <= 0.0 {
        return Err(Error::NonpositiveParameter { what: "h", value: h });
    }
    let cap = lambda0 * h;
    let times = partition.times();
    let mut worst = 0.0f64;
    let mut worst_interval = 0usize;
    let scale = path
        .times()
        .iter()
        .enumerate()
        .map(|(i, _)| path.value(i, 0).abs())
        .fold(1.0f64, f64::max);
    for n in 0..partition.intervals() {
        let (t0, t1) = (times[n], times[n + 1]);
        let a = path.eval(t0)?;
        let b = path.eval(t1)?;
        // Affinity: interior breakpoints must sit on the chord.
        for (i, &bt) in path.times().iter().enumerate() {
            if bt <= t0 || bt >= t1 {
                continue;
            }
            let w = (bt - t0) / (t1 - t0);
            for c in 0..path.components() {
                let chord = a[c] + w * (b[c] - a[c]);
                if (path.value(i, c) - chord).abs() > 1e-9 * scale {
                    return Err(Error::NotAffine { interval: n });
                }
            }
        }
        let inc: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let ratio = if cap == 0.0 {
            if inc == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else if cap.is_infinite() {
            0.0
        } else {
            inc / cap
        };
        if ratio > worst {
            worst = ratio;
            worst_interval = n;
        }
    }
    Ok(CflReport {
        admissible: worst <= 1.0 + CFL_SLACK,
        worst_ratio: worst,
        worst_interval,
    })
}

/// Empirical Hoelder constant of a scalar path at exponent alpha, scanned over
/// dyadic separations of its breakpoint grid.
pub fn empirical_holder_constant(path: &PiecewisePath, alpha: f64) -> f64 {
    let times = path.times();
    let n = times.len();
    let mut best = 0.0f64;
    let mut gap = 1usize;
    while gap < n {
        for i in 0..(n - gap) {
            let dt = times[i + gap] - times[i];
            let dv = (path.value(i + gap, 0) - path.value(i, 0)).abs();
            best = best.max(dv / dt.powf(alpha));
        }
        gap *= 2;
    }
    best
}

/// Moments of the unit-threshold oscillation exit time, estimated by Monte
/// Carlo at the detector's relative resolution (1 / STOPPING_DETECTION_FACTOR),
/// so discretization biases cancel in the statistics that compare the two.
#[derive(Debug, Clone, Copy)]
pub struct ExitMoments {
    pub c1: f64,
    pub c2: f64,
    pub samples: usize,
    pub relative_step: f64,
}

pub fn exit_time_moments(samples: usize, seed: u64) -> ExitMoments {
    let step: f64 = 1.0 / STOPPING_DETECTION_FACTOR;
    let sqrt_step = step.sqrt();
    let mut gauss = GaussianSource::new(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let mut w = 0.0f64;
        let mut min = 0.0f64;
        let mut max = 0.0f64;
        let mut n = 0u64;
        loop {
            n += 1;
            w += sqrt_step * gauss.next_standard();
            min = min.min(w);
            max = max.max(w);
            if max - min >= 1.0 {
                break;
            }
        }
        let tau = n as f64 * step;
        sum += tau;
        sum_sq += tau * tau;
    }
    ExitMoments {
        c1: sum / samples as f64,
        c2: sum_sq / samples as f64,
        samples,
        relative_step: step,
    }
}
