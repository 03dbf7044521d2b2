//! Comparison of reconstructions and clouds against references.

use std::io::{Read, Write};

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::reconstruct::{trapezoid, GridDensity};
use crate::sde::ParticleCloud;

/// Integrated squared error `∫ (p − q)²` by trapezoid quadrature.
pub fn ise(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    if p.grid() != q.grid() {
        return Err(Error::GridMismatch(format!(
            "{:?} vs {:?}",
            p.grid(),
            q.grid()
        )));
    }
    let sq: Vec<f64> = p
        .values()
        .iter()
        .zip(q.values())
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    Ok(trapezoid(&sq, p.grid().spacing()))
}

/// Empirical 1-D Wasserstein-1 distance.
///
/// Equal sample counts use the sorted-sample formula `(1/n) Σ |x_(i) − y_(i)|`.
/// Otherwise both samples are compared at `max(n, m)` quantile levels
/// `(i + ½)/max(n, m)` of their linearly interpolated empirical quantile
/// functions.
pub fn w1_empirical(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptyInput("W1 samples"));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        let n = a.len() as f64;
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n);
    }
    let m = a.len().max(b.len());
    let total: f64 = (0..m)
        .map(|i| {
            let u = (i as f64 + 0.5) / m as f64;
            (interpolated_quantile(&a, u) - interpolated_quantile(&b, u)).abs()
        })
        .sum();
    Ok(total / m as f64)
}

/// Linear interpolation between order statistics placed at `(i + ½)/n`.
fn interpolated_quantile(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    let pos = u * n as f64 - 0.5;
    if pos <= 0.0 {
        return sorted[0];
    }
    let i = pos.floor() as usize;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    let t = pos - i as f64;
    sorted[i] + t * (sorted[i + 1] - sorted[i])
}

/// `n` quantiles of `N(mean, var)` at levels `(i + ½)/n`: a deterministic
/// stand-in sample of the continuous law for W1 comparisons.
pub fn normal_quantiles(n: usize, mean: f64, var: f64) -> Vec<f64> {
    let dist = Normal::new(mean, var.sqrt()).expect("finite moments");
    (0..n)
        .map(|i| dist.inverse_cdf((i as f64 + 0.5) / n as f64))
        .collect()
}

/// W1 between a 1-D cloud and `N(mean, var)`, through [`normal_quantiles`].
pub fn w1_to_normal(cloud: &ParticleCloud, mean: f64, var: f64) -> Result<f64> {
    w1_empirical(cloud.positions(), &normal_quantiles(cloud.len(), mean, var))
}

/// Average over runs of the squared error of the empirical mean and variance
/// (first coordinate).
pub fn moment_mse(runs: &[ParticleCloud], target_mean: f64, target_var: f64) -> Result<(f64, f64)> {
    if runs.is_empty() {
        return Err(Error::EmptyInput("moment_mse runs"));
    }
    let n = runs.len() as f64;
    let (mut se_mean, mut se_var) = (0.0, 0.0);
    for cloud in runs {
        se_mean += (cloud.mean()[0] - target_mean).powi(2);
        se_var += (cloud.variance()[0] - target_var).powi(2);
    }
    Ok((se_mean / n, se_var / n))
}

/// Least-squares fit of `log error = intercept + slope · log scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::invalid(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(s, e)) = points.iter().find(|(s, e)| !(*s > 0.0 && *e > 0.0)) {
        return Err(Error::invalid(format!(
            "rate fit needs positive scales and errors, got ({s}, {e})"
        )));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("rate fit needs at least two distinct scales"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        r2,
        points: points.to_vec(),
    })
}

/// One row of a run-summary CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// Experiment label, optionally with `/key=value` sweep coordinates.
    pub experiment: String,
    pub seed: u64,
    pub n_particles: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub metric: String,
    pub value: f64,
}

pub const SUMMARY_HEADER: [&str; 7] =
    ["experiment", "seed", "N", "gamma", "alpha", "metric_name", "value"];

pub fn write_summary_csv(rows: &[SummaryRow], w: impl Write, header: bool) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    if header {
        writer.write_record(SUMMARY_HEADER)?;
    }
    for r in rows {
        writer.write_record([
            r.experiment.clone(),
            r.seed.to_string(),
            r.n_particles.to_string(),
            r.gamma.to_string(),
            r.alpha.to_string(),
            r.metric.clone(),
            r.value.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_summary_csv(r: impl Read) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_reader(r);
    let headers = reader.headers()?.clone();
    if headers.iter().map(str::trim).ne(SUMMARY_HEADER.iter().copied()) {
        return Err(Error::Parse(format!(
            "unexpected summary header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
    };
    let int = |s: &str| {
        s.trim()
            .parse::<u64>()
            .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
    };
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            Ok(SummaryRow {
                experiment: rec[0].to_string(),
                seed: int(&rec[1])?,
                n_particles: int(&rec[2])? as usize,
                gamma: num(&rec[3])?,
                alpha: num(&rec[4])?,
                metric: rec[5].to_string(),
                value: num(&rec[6])?,
            })
        })
        .collect()
}
