//! Small statistics helpers shared by the harness: log-log rate fits,
//! two-sample Kolmogorov-Smirnov distance, quantiles.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
    /// Rows dropped because their error was exactly zero.
    pub excluded_zero: usize,
}

/// Least squares on (log h, log(error / correction(h))). Zero-error rows are
/// excluded (logged in the result); at least 3 positive rows required.
pub fn fit_rate(
    pairs: &[(f64, f64)],
    correction: Option<&dyn Fn(f64) -> f64>,
) -> Result<FitResult> {
    if pairs.len() < 3 {
        return Err(Error::InvalidParameter {
            what: "pairs",
            why: format!("need at least 3 (h, error) pairs, got {}", pairs.len()),
        });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = 0usize;
    for &(h, err) in pairs {
        if h <= 0.0 {
            return Err(Error::InvalidParameter {
                what: "pairs",
                why: format!("nonpositive h = {h}"),
            });
        }
        if err < 0.0 {
            return Err(Error::InvalidParameter {
                what: "pairs",
                why: format!("negative error {err}"),
            });
        }
        if err == 0.0 {
            excluded += 1;
            continue;
        }
        let corr = correction.map(|f| f(h)).unwrap_or(1.0);
        xs.push(h.ln());
        ys.push((err / corr).ln());
    }
    if xs.len() < 3 {
        return Err(Error::InvalidParameter {
            what: "pairs",
            why: format!("only {} nonzero rows after exclusions", xs.len()),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter {
            what: "pairs",
            why: "all h identical".into(),
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).abs())
        .fold(0.0, f64::max);
    Ok(FitResult {
        slope,
        intercept,
        max_residual,
        excluded_zero: excluded,
    })
}

/// Two-sample Kolmogorov-Smirnov distance: sup over pooled sample points of
/// |F1 - F2| for the right-continuous empirical CDFs.
pub fn two_sample_ks(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|p, q| p.partial_cmp(q).unwrap());
    b.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut best = 0.0f64;
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

/// One-sample KS distance against an exact CDF.
pub fn ks_against_cdf<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let mut a = xs.to_vec();
    a.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let n = a.len() as f64;
    let mut best = 0.0f64;
    for (i, &x) in a.iter().enumerate() {
        let c = cdf(x);
        best = best.max((c - i as f64 / n).abs());
        best = best.max(((i + 1) as f64 / n - c).abs());
    }
    best
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
}

/// Abramowitz-Stegun 7.1.26-style rational approximation, |error| < 1.5e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        poly
    } else {
        2.0 - poly
    }
}

pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty());
    let mut a = xs.to_vec();
    a.sort_by(|p, r| p.partial_cmp(r).unwrap());
    let pos = q.clamp(0.0, 1.0) * (a.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    a[lo] * (1.0 - w) + a[hi] * w
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
