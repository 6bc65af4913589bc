//! Continuous driving signals stored as piecewise-linear breakpoints, and the
//! time partitions the schemes step over.

use crate::error::{Error, Result};
use std::io::Write;

/// A continuous path [0, T] -> R^m with linear interpolation between
/// breakpoints. Breakpoint times are strictly increasing, start at 0 and end
/// at the horizon; instances are immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePath {
    times: Vec<f64>,
    /// Row-major: values[i * components + c] is component c at times[i].
    values: Vec<f64>,
    components: usize,
}

impl PiecewisePath {
    pub fn new(times: Vec<f64>, values: Vec<f64>, components: usize) -> Result<Self> {
        if components == 0 {
            return Err(Error::InvalidPath("zero components".into()));
        }
        if times.len() < 2 {
            return Err(Error::InvalidPath("need at least two breakpoints".into()));
        }
        if values.len() != times.len() * components {
            return Err(Error::InvalidPath(format!(
                "value count {} does not match {} breakpoints x {} components",
                values.len(),
                times.len(),
                components
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidPath(format!(
                "first breakpoint time must be 0, got {}",
                times[0]
            )));
        }
        for w in times.windows(2) {
            if w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::InvalidPath(format!(
                    "breakpoint times not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidPath("non-finite breakpoint".into()));
        }
        Ok(PiecewisePath {
            times,
            values,
            components,
        })
    }

    /// Scalar path from (time, value) pairs.
    pub fn from_breakpoints(points: Vec<(f64, f64)>) -> Result<Self> {
        let times = points.iter().map(|p| p.0).collect();
        let values = points.iter().map(|p| p.1).collect();
        PiecewisePath::new(times, values, 1)
    }

    pub fn constant(value: f64, horizon: f64) -> Result<Self> {
        PiecewisePath::from_breakpoints(vec![(0.0, value), (horizon, value)])
    }

    pub fn linear(slope: f64, horizon: f64) -> Result<Self> {
        PiecewisePath::from_breakpoints(vec![(0.0, 0.0), (horizon, slope * horizon)])
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn value(&self, index: usize, component: usize) -> f64 {
        self.values[index * self.components + component]
    }

    /// Number of breakpoints (always at least 2).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_breakpoint_gap(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
        Ok(())
    }

    /// Index of the segment containing t: largest i with times[i] <= t,
    /// capped at len - 2 so t = T lands in the final segment.
    fn segment_of(&self, t: f64) -> usize {
        match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(self.times.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.times.len() - 2),
        }
    }

    pub fn eval_scalar(&self, t: f64) -> Result<f64> {
        debug_assert_eq!(self.components, 1);
        self.check_time(t)?;
        let i = self.segment_of(t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        let w = (t - t0) / (t1 - t0);
        Ok(v0 + w * (v1 - v0))
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let i = self.segment_of(t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        Ok((0..self.components)
            .map(|c| {
                let v0 = self.value(i, c);
                let v1 = self.value(i + 1, c);
                v0 + w * (v1 - v0)
            })
            .collect())
    }

    /// Maximum oscillation over [min(s,t), max(s,t)]: max minus min for scalar
    /// paths, largest pairwise distance for vector paths. Exact for
    /// piecewise-linear paths since extrema sit at breakpoints or endpoints.
    pub fn osc(&self, s: f64, t: f64) -> Result<f64> {
        self.check_time(s)?;
        self.check_time(t)?;
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        if self.components == 1 {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for v in [self.eval_scalar(lo)?, self.eval_scalar(hi)?] {
                min = min.min(v);
                max = max.max(v);
            }
            let i0 = self.segment_of(lo);
            for i in (i0 + 1)..self.times.len() {
                let ti = self.times[i];
                if ti <= lo {
                    continue;
                }
                if ti >= hi {
                    break;
                }
                let v = self.values[i];
                min = min.min(v);
                max = max.max(v);
            }
            Ok(max - min)
        } else {
            // Pairwise distances over breakpoints in range plus the endpoints.
            let mut pts: Vec<Vec<f64>> = vec![self.eval(lo)?, self.eval(hi)?];
            for i in 0..self.times.len() {
                let ti = self.times[i];
                if ti > lo && ti < hi {
                    pts.push((0..self.components).map(|c| self.value(i, c)).collect());
                }
            }
            let mut best = 0.0f64;
            for a in 0..pts.len() {
                for b in (a + 1)..pts.len() {
                    let d: f64 = pts[a]
                        .iter()
                        .zip(&pts[b])
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt();
                    best = best.max(d);
                }
            }
            Ok(best)
        }
    }

    /// Sup distance to another path over the union of both breakpoint sets,
    /// which is exact for piecewise-linear paths.
    pub fn sup_distance(&self, other: &PiecewisePath) -> Result<f64> {
        if self.components != other.components {
            return Err(Error::InvalidPath("component count mismatch".into()));
        }
        let horizon = self.horizon().min(other.horizon());
        let mut best = 0.0f64;
        for t in self.times.iter().chain(other.times.iter()) {
            let t = t.min(horizon);
            let a = self.eval(t)?;
            let b = other.eval(t)?;
            let d: f64 = a
                .iter()
                .zip(&b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            best = best.max(d);
        }
        Ok(best)
    }

    /// Total variation of a scalar path (sum of absolute breakpoint moves).
    pub fn total_variation(&self) -> f64 {
        debug_assert_eq!(self.components, 1);
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    /// Same function with extra breakpoints inserted at the given times.
    pub fn with_times_inserted(&self, extra: &[f64]) -> Result<PiecewisePath> {
        let mut stamps: Vec<f64> = self.times.clone();
        for &t in extra {
            self.check_time(t)?;
            stamps.push(t);
        }
        stamps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        stamps.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * self.horizon().max(1.0));
        let mut values = Vec::with_capacity(stamps.len() * self.components);
        for &t in &stamps {
            values.extend(self.eval(t)?);
        }
        PiecewisePath::new(stamps, values, self.components)
    }

    /// Two-column-per-component CSV; the leading comment line names the
    /// component count and horizon.
    pub fn to_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "# components={},horizon={}", self.components, self.horizon())?;
        let header: Vec<String> = (0..self.components).map(|c| format!("w{}", c + 1)).collect();
        writeln!(out, "time,{}", header.join(","))?;
        for i in 0..self.times.len() {
            let row: Vec<String> = (0..self.components)
                .map(|c| format!("{:.17e}", self.value(i, c)))
                .collect();
            writeln!(out, "{:.17e},{}", self.times[i], row.join(","))?;
        }
        Ok(())
    }
}

/// Ordered time grid 0 = t0 < ... < tN = T.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
}

impl Partition {
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidPartition("need at least two times".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidPartition(format!(
                "first time must be 0, got {}",
                times[0]
            )));
        }
        for w in times.windows(2) {
            if w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::InvalidPartition(format!(
                    "times not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidPartition("non-finite time".into()));
        }
        Ok(Partition { times })
    }

    pub fn uniform(horizon: f64, intervals: usize) -> Result<Self> {
        if horizon <= 0.0 {
            return Err(Error::NonpositiveParameter {
                what: "horizon",
                value: horizon,
            });
        }
        if intervals == 0 {
            return Err(Error::InvalidPartition("zero intervals".into()));
        }
        let mut times: Vec<f64> = (0..=intervals)
            .map(|n| horizon * n as f64 / intervals as f64)
            .collect();
        *times.last_mut().unwrap() = horizon;
        Partition::from_times(times)
    }

    /// Partition {n rho ^ T}: multiples of `rho` capped at the horizon.
    pub fn with_step(horizon: f64, rho: f64) -> Result<Self> {
        if rho <= 0.0 {
            return Err(Error::NonpositiveParameter {
                what: "rho",
                value: rho,
            });
        }
        if horizon <= 0.0 {
            return Err(Error::NonpositiveParameter {
                what: "horizon",
                value: horizon,
            });
        }
        let mut times = vec![0.0];
        let mut n = 1u64;
        loop {
            let t = rho * n as f64;
            if t >= horizon - 1e-12 * rho {
                times.push(horizon);
                break;
            }
            times.push(t);
            n += 1;
        }
        Partition::from_times(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }

    /// Mesh |P|: the largest interval length.
    pub fn mesh(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn sum_dt_squared(&self) -> f64 {
        self.times.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
    }

    /// Split every interval into equal pieces no longer than `dt_max`.
    pub fn refine_max_dt(&self, dt_max: f64) -> Result<Partition> {
        if dt_max <= 0.0 {
            return Err(Error::NonpositiveParameter {
                what: "dt_max",
                value: dt_max,
            });
        }
        let mut times = vec![0.0];
        for w in self.times.windows(2) {
            let dt = w[1] - w[0];
            let pieces = (dt / dt_max).ceil().max(1.0) as usize;
            for k in 1..=pieces {
                times.push(w[0] + dt * k as f64 / pieces as f64);
            }
            *times.last_mut().unwrap() = w[1];
        }
        Partition::from_times(times)
    }

    /// Index of the partition time nearest to t.
    pub fn nearest_index(&self, t: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, &ti) in self.times.iter().enumerate() {
            let d = (ti - t).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }
}
