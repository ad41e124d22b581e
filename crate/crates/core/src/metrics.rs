//! Loss terms re-used as evaluation metrics, plus recall / error summaries.

use serde::{Deserialize, Serialize};

use crate::angle::angle_distance;
use crate::error::{shape, Error, Result};
use crate::features::PetalFeature;

pub const LAMBDA_LOC: f64 = 1.0;
pub const LAMBDA_THETA: f64 = 1.0;
pub const LAMBDA_CON: f64 = 5.0;
pub const LAMBDA_L2: f64 = 0.2;
/// Softmax temperature of the contrastive term.
pub const TEMPERATURE: f64 = 0.05;

/// `|180 - ||gt - pred| - 180|| / 180` on the difference reduced mod 360.
pub fn angle_loss(gt_theta: f64, pred_theta: f64) -> f64 {
    let d = (gt_theta - pred_theta).rem_euclid(360.0);
    (180.0 - (d - 180.0).abs()).abs() / 180.0
}

/// InfoNCE over anchor scores with the positive at `positive`.
pub fn contrastive_metric(scores: &[f64], positive: usize, temperature: f64) -> Result<f64> {
    if positive >= scores.len() {
        return Err(Error::Index {
            index: positive,
            len: scores.len(),
        });
    }
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m / temperature
        + scores
            .iter()
            .map(|s| ((s - m) / temperature).exp())
            .sum::<f64>()
            .ln();
    Ok(lse - scores[positive] / temperature)
}

/// Euclidean norm of the elementwise difference.
pub fn reconstruction_l2(street: &PetalFeature, sat_crop: &PetalFeature) -> Result<f64> {
    if street.data.len() != sat_crop.data.len()
        || street.n_a != sat_crop.n_a
        || street.channels != sat_crop.channels
        || street.n_z != sat_crop.n_z
    {
        return shape(format!(
            "features differ in shape: {}x{}x{} vs {}x{}x{}",
            street.n_a, street.channels, street.n_z, sat_crop.n_a, sat_crop.channels, sat_crop.n_z
        ));
    }
    Ok(street
        .data
        .iter()
        .zip(&sat_crop.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// One evaluated prediction; errors in meters and degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: u64,
    pub err_lat_m: f64,
    pub err_lon_m: f64,
    pub err_loc_m: f64,
    pub err_angle_deg: f64,
    pub angle_loss: f64,
    /// Mean contrastive term over levels that still held the correct anchor.
    pub contrastive: Option<f64>,
    pub l2: Option<f64>,
}

impl EvalRecord {
    /// Builds a record from positions in pixels and a ground resolution.
    pub fn new(
        id: u64,
        gt: (f64, f64),
        gt_theta: f64,
        pred: (f64, f64),
        pred_theta: f64,
        ground_res: f64,
    ) -> Self {
        let err_lat_m = (pred.0 - gt.0).abs() * ground_res;
        let err_lon_m = (pred.1 - gt.1).abs() * ground_res;
        EvalRecord {
            id,
            err_lat_m,
            err_lon_m,
            err_loc_m: err_lat_m.hypot(err_lon_m),
            err_angle_deg: angle_distance(gt_theta, pred_theta),
            angle_loss: angle_loss(gt_theta, pred_theta),
            contrastive: None,
            l2: None,
        }
    }

    /// Weighted sum of the four loss terms; absent terms count as zero.
    pub fn weighted_loss(&self) -> f64 {
        LAMBDA_LOC * self.err_loc_m
            + LAMBDA_THETA * self.angle_loss
            + LAMBDA_CON * self.contrastive.unwrap_or(0.0)
            + LAMBDA_L2 * self.l2.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    /// `(threshold, fraction within threshold)` pairs.
    pub recall: Vec<(f64, f64)>,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub count: usize,
    pub lat: ErrorStats,
    pub lon: ErrorStats,
    pub loc: ErrorStats,
    pub orientation: ErrorStats,
    pub mean_weighted_loss: f64,
}

fn stats(values: &[f64], thresholds: &[f64]) -> ErrorStats {
    let n = values.len() as f64;
    let recall = thresholds
        .iter()
        .map(|&t| (t, values.iter().filter(|&&v| v <= t).count() as f64 / n))
        .collect();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    };
    ErrorStats {
        recall,
        mean: values.iter().sum::<f64>() / n,
        median,
    }
}

/// Recall at each threshold, mean and median for lat / lon / loc /
/// orientation errors, and the mean weighted loss.
pub fn summarize(records: &[EvalRecord], thresholds_m: &[f64], thresholds_deg: &[f64]) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no evaluation records".into()));
    }
    let col = |f: fn(&EvalRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    Ok(Report {
        count: records.len(),
        lat: stats(&col(|r| r.err_lat_m), thresholds_m),
        lon: stats(&col(|r| r.err_lon_m), thresholds_m),
        loc: stats(&col(|r| r.err_loc_m), thresholds_m),
        orientation: stats(&col(|r| r.err_angle_deg), thresholds_deg),
        mean_weighted_loss: records.iter().map(EvalRecord::weighted_loss).sum::<f64>()
            / records.len() as f64,
    })
}

impl Report {
    /// Markdown table in the lat / lon / orientation / loc column layout.
    pub fn to_markdown(&self) -> String {
        let mut head = vec![];
        let mut row = vec![];
        for (name, s, unit) in [
            ("Lat", &self.lat, "m"),
            ("Lon", &self.lon, "m"),
            ("Orientation", &self.orientation, "°"),
            ("Loc", &self.loc, "m"),
        ] {
            for (t, r) in &s.recall {
                head.push(format!("{name} r@{t}{unit}"));
                row.push(format!("{:.2}%", r * 100.0));
            }
            head.push(format!("{name} mean"));
            row.push(format!("{:.3}", s.mean));
            head.push(format!("{name} median"));
            row.push(format!("{:.3}", s.median));
        }
        head.push("weighted loss".into());
        row.push(format!("{:.4}", self.mean_weighted_loss));
        let sep = vec!["---"; head.len()];
        format!(
            "| {} |\n| {} |\n| {} |\n",
            head.join(" | "),
            sep.join(" | "),
            row.join(" | ")
        )
    }

    /// Long-form CSV: `metric,threshold,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,threshold,value\n");
        for (name, s) in [
            ("lat", &self.lat),
            ("lon", &self.lon),
            ("orientation", &self.orientation),
            ("loc", &self.loc),
        ] {
            for (t, r) in &s.recall {
                out.push_str(&format!("{name}_recall,{t},{r}\n"));
            }
            out.push_str(&format!("{name}_mean,,{}\n", s.mean));
            out.push_str(&format!("{name}_median,,{}\n", s.median));
        }
        out.push_str(&format!("weighted_loss,,{}\n", self.mean_weighted_loss));
        out.push_str(&format!("count,,{}\n", self.count));
        out
    }
}
