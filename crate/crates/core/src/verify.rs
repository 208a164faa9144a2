//! Registration-vs-truth comparison: identity-line R², range-normalized
//! RMSE, inter-vector angles, Q-Q quantile pairs, a histogram with a
//! moment Gaussian fit, and the consolidated report.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{percentile, summary_stats, WallKinematics};
use crate::volume::Volume3;

/// Coefficient of determination against the identity line y = x:
/// `1 - sum (est - truth)^2 / sum (truth - mean(truth))^2`. Can be
/// negative (worse than the constant predictor).
pub fn r_squared_identity(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.is_empty() || truth.len() != estimate.len() {
        return Err(Error::InvalidParameter(
            "r_squared_identity: inputs must be non-empty and equal length".into(),
        ));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::Degenerate("r_squared_identity: truth has zero variance".into()));
    }
    let ss_res: f64 = truth.iter().zip(estimate).map(|(t, e)| (e - t).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// RMSE divided by the ground-truth value range.
pub fn nrmse(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.is_empty() || truth.len() != estimate.len() {
        return Err(Error::InvalidParameter(
            "nrmse: inputs must be non-empty and equal length".into(),
        ));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &t in truth {
        lo = lo.min(t);
        hi = hi.max(t);
    }
    if hi <= lo {
        return Err(Error::Degenerate("nrmse: truth has zero range".into()));
    }
    let mse: f64 = truth.iter().zip(estimate).map(|(t, e)| (e - t).powi(2)).sum::<f64>() / truth.len() as f64;
    Ok(mse.sqrt() / (hi - lo))
}

/// Angle between two vectors in degrees, `None` when either is too short
/// for the direction to be meaningful (excluded from plots).
pub fn angle_between(a: Vector3<f64>, b: Vector3<f64>) -> Option<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na <= 1e-12 || nb <= 1e-12 {
        return None;
    }
    Some((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees())
}

/// `n` matched quantile pairs (truth, estimate) at percentiles evenly
/// spaced in [0.5, 99.5].
pub fn qq_pairs(truth: &[f64], estimate: &[f64], n: usize) -> Result<Vec<(f64, f64)>> {
    if truth.is_empty() || estimate.is_empty() {
        return Err(Error::InvalidParameter("qq_pairs: inputs must be non-empty".into()));
    }
    if n < 2 {
        return Err(Error::InvalidParameter("qq_pairs: need at least 2 quantiles".into()));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let p = 0.5 + 99.0 * i as f64 / (n - 1) as f64;
        out.push((percentile(truth, p)?, percentile(estimate, p)?));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mu: f64,
    pub sigma: f64,
}

/// Equal-width histogram over [min, max] plus a moment Gaussian fit
/// (mu = mean, sigma = sample std). Identical values degenerate to a
/// single bin with sigma 0.
pub fn histogram_gaussian_fit(diffs: &[f64], bins: usize) -> Result<Histogram> {
    if diffs.len() < 2 {
        return Err(Error::InvalidParameter("histogram needs at least 2 values".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidParameter("histogram needs at least 1 bin".into()));
    }
    let stats = summary_stats(diffs)?;
    if stats.max <= stats.min {
        return Ok(Histogram {
            edges: vec![stats.min, stats.min],
            counts: vec![diffs.len()],
            mu: stats.mean,
            sigma: 0.0,
        });
    }
    let width = (stats.max - stats.min) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| stats.min + width * i as f64).collect();
    let mut counts = vec![0usize; bins];
    for &d in diffs {
        let bin = (((d - stats.min) / width) as usize).min(bins - 1);
        counts[bin] += 1;
    }
    Ok(Histogram {
        edges,
        counts,
        mu: stats.mean,
        sigma: stats.sample_std,
    })
}

/// Mean absolute intensity difference between two volumes sharing a
/// geometry; the numeric stand-in for an edge-overlay alignment check.
pub fn mean_abs_diff(a: &Volume3, b: &Volume3) -> Result<f64> {
    if !a.same_geometry(b) {
        return Err(Error::GeometryMismatch("mean_abs_diff: volumes differ in geometry".into()));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (*x as f64 - *y as f64).abs())
        .sum();
    Ok(sum / a.voxel_count() as f64)
}

/// Per-channel comparison metrics. `r_squared`/`nrmse` are `None` when the
/// truth channel is degenerate (zero variance or zero range) — reported as
/// undefined rather than NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub n_points: usize,
    pub r_squared: Option<f64>,
    pub nrmse: Option<f64>,
    pub p99_truth: f64,
    pub p99_estimate: f64,
    pub p99_relative_diff: Option<f64>,
    /// Paired two-sided t statistic of the differences, informational only.
    pub t_statistic: Option<f64>,
}

fn channel_metrics(truth: &[f64], estimate: &[f64]) -> Result<ChannelMetrics> {
    let abs_truth: Vec<f64> = truth.iter().map(|v| v.abs()).collect();
    let abs_est: Vec<f64> = estimate.iter().map(|v| v.abs()).collect();
    let p99_truth = percentile(&abs_truth, 99.0)?;
    let p99_estimate = percentile(&abs_est, 99.0)?;
    let p99_relative_diff = if p99_truth.abs() > 1e-12 {
        Some((p99_estimate - p99_truth).abs() / p99_truth.abs())
    } else {
        None
    };
    let diffs: Vec<f64> = estimate.iter().zip(truth).map(|(e, t)| e - t).collect();
    let t_statistic = if diffs.len() >= 2 {
        let s = summary_stats(&diffs)?;
        if s.sample_std > 0.0 {
            Some(s.mean / (s.sample_std / (diffs.len() as f64).sqrt()))
        } else {
            None
        }
    } else {
        None
    };
    Ok(ChannelMetrics {
        n_points: truth.len(),
        r_squared: r_squared_identity(truth, estimate).ok(),
        nrmse: nrmse(truth, estimate).ok(),
        p99_truth,
        p99_estimate,
        p99_relative_diff,
        t_statistic,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub magnitude: ChannelMetrics,
    pub normal: ChannelMetrics,
    pub tangential: ChannelMetrics,
    pub strain: ChannelMetrics,
    /// Q-Q pairs of the normal-displacement distributions.
    pub qq_normal: Vec<(f64, f64)>,
    /// Histogram of per-point normal-displacement differences with a
    /// Gaussian moment fit.
    pub normal_diff_histogram: Histogram,
    /// Mean absolute intensity difference fixed-vs-moving and
    /// fixed-vs-registered, when volumes were supplied.
    pub intensity_mad_before: Option<f64>,
    pub intensity_mad_after: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct ReportOptions {
    pub qq_points: usize,
    pub histogram_bins: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            qq_points: 20,
            histogram_bins: 30,
        }
    }
}

/// Channel-wise comparison of two kinematics built over the same point set
/// and validity mask.
pub fn build_report(
    truth: &WallKinematics,
    registration: &WallKinematics,
    opts: &ReportOptions,
) -> Result<VerificationReport> {
    if truth.valid.len() != registration.valid.len() {
        return Err(Error::GeometryMismatch(
            "build_report: kinematics cover different point sets".into(),
        ));
    }
    if truth.valid != registration.valid {
        return Err(Error::GeometryMismatch(
            "build_report: kinematics have different validity masks".into(),
        ));
    }
    let t_mag = truth.channel(|i| truth.displacement[i].norm());
    let r_mag = registration.channel(|i| registration.displacement[i].norm());
    let t_norm = truth.channel(|i| truth.u_normal[i]);
    let r_norm = registration.channel(|i| registration.u_normal[i]);
    let t_tan = truth.channel(|i| truth.t_magnitude[i]);
    let r_tan = registration.channel(|i| registration.t_magnitude[i]);
    let t_eps = truth.channel(|i| truth.strain[i]);
    let r_eps = registration.channel(|i| registration.strain[i]);

    let diffs: Vec<f64> = r_norm.iter().zip(&t_norm).map(|(r, t)| r - t).collect();
    Ok(VerificationReport {
        magnitude: channel_metrics(&t_mag, &r_mag)?,
        normal: channel_metrics(&t_norm, &r_norm)?,
        tangential: channel_metrics(&t_tan, &r_tan)?,
        strain: channel_metrics(&t_eps, &r_eps)?,
        qq_normal: qq_pairs(&t_norm, &r_norm, opts.qq_points)?,
        normal_diff_histogram: histogram_gaussian_fit(&diffs, opts.histogram_bins)?,
        intensity_mad_before: None,
        intensity_mad_after: None,
    })
}

/// Writes per-channel scatter CSVs (truth, estimate, angle), the Q-Q CSV,
/// and the histogram CSV next to the report for external plotting.
pub fn write_report_csvs(
    dir: &Path,
    truth: &WallKinematics,
    registration: &WallKinematics,
    report: &VerificationReport,
) -> Result<()> {
    let write = |path: &Path, content: String| -> Result<()> {
        fs::write(path, content).map_err(|e| Error::io(path, e))
    };

    let channels: [(&str, Box<dyn Fn(usize) -> (f64, f64)>); 4] = [
        (
            "magnitude",
            Box::new(|i| (truth.displacement[i].norm(), registration.displacement[i].norm())),
        ),
        ("normal", Box::new(|i| (truth.u_normal[i], registration.u_normal[i]))),
        (
            "tangential",
            Box::new(|i| (truth.t_magnitude[i], registration.t_magnitude[i])),
        ),
        ("strain", Box::new(|i| (truth.strain[i], registration.strain[i]))),
    ];
    for (name, select) in &channels {
        let mut csv = String::from("truth,estimate,angle_deg\n");
        for i in 0..truth.valid.len() {
            if !truth.valid[i] {
                continue;
            }
            let (t, e) = select(i);
            let angle = angle_between(truth.displacement[i], registration.displacement[i]);
            match angle {
                Some(a) => csv.push_str(&format!("{t},{e},{a}\n")),
                None => csv.push_str(&format!("{t},{e},\n")),
            }
        }
        write(&dir.join(format!("scatter_{name}.csv")), csv)?;
    }

    let mut qq = String::from("truth_quantile,registration_quantile\n");
    for (t, r) in &report.qq_normal {
        qq.push_str(&format!("{t},{r}\n"));
    }
    write(&dir.join("qq_normal.csv"), qq)?;

    let mut hist = String::from("bin_lo,bin_hi,count\n");
    let h = &report.normal_diff_histogram;
    for (i, &c) in h.counts.iter().enumerate() {
        hist.push_str(&format!("{},{},{}\n", h.edges[i], h.edges[i + 1], c));
    }
    write(&dir.join("histogram_normal_diff.csv"), hist)?;
    Ok(())
}

/// Emits a self-contained matplotlib script that renders the scatter, Q-Q
/// and histogram CSVs written by [`write_report_csvs`].
pub fn write_plot_script(path: &Path, report: &VerificationReport) -> Result<()> {
    let script = format!(
        r#"#!/usr/bin/env python3
"""Plots for the verification report; run next to the CSV dumps."""
import csv
import math
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))

def read_csv(name):
    with open(os.path.join(HERE, name)) as f:
        rows = list(csv.DictReader(f))
    return rows

fig, axes = plt.subplots(2, 3, figsize=(15, 9))

for ax, channel in zip(axes.flat[:4], ["magnitude", "normal", "tangential", "strain"]):
    rows = read_csv(f"scatter_{{channel}}.csv")
    t = [float(r["truth"]) for r in rows]
    e = [float(r["estimate"]) for r in rows]
    a = [float(r["angle_deg"]) if r["angle_deg"] else float("nan") for r in rows]
    sc = ax.scatter(t, e, c=a, s=4, cmap="viridis")
    lim = [min(t + e), max(t + e)]
    ax.plot(lim, lim, "r-", linewidth=1)
    ax.set_title(channel)
    ax.set_xlabel("ground truth")
    ax.set_ylabel("registration")
    fig.colorbar(sc, ax=ax, label="angle (deg)")

rows = read_csv("qq_normal.csv")
ax = axes.flat[4]
t = [float(r["truth_quantile"]) for r in rows]
e = [float(r["registration_quantile"]) for r in rows]
ax.plot(t, e, "o", markersize=3)
lim = [min(t + e), max(t + e)]
ax.plot(lim, lim, "r-", linewidth=1)
ax.set_title("Q-Q, normal displacement")

rows = read_csv("histogram_normal_diff.csv")
ax = axes.flat[5]
lo = [float(r["bin_lo"]) for r in rows]
hi = [float(r["bin_hi"]) for r in rows]
counts = [int(r["count"]) for r in rows]
widths = [b - a for a, b in zip(lo, hi)]
ax.bar(lo, counts, width=widths, align="edge")
mu, sigma = {mu}, {sigma}
if sigma > 0:
    total = sum(counts)
    xs = [lo[0] + (hi[-1] - lo[0]) * i / 200 for i in range(201)]
    ys = [total * widths[0] / (sigma * math.sqrt(2 * math.pi))
          * math.exp(-((x - mu) ** 2) / (2 * sigma ** 2)) for x in xs]
    ax.plot(xs, ys, "r-", linewidth=1)
ax.set_title(f"normal diff histogram (mu={{mu:.4g}}, sigma={{sigma:.4g}})")

fig.tight_layout()
out = os.path.join(HERE, "verification_report.png")
fig.savefig(out, dpi=120)
print(f"wrote {{out}}")
"#,
        mu = report.normal_diff_histogram.mu,
        sigma = report.normal_diff_histogram.sigma,
    );
    fs::write(path, script).map_err(|e| Error::io(path, e))
}
