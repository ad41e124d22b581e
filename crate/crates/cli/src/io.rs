//! Manifest / prediction records and small file helpers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use petal_core::features::FeatureMap;
use petal_core::search::SearchResult;
use petal_core::synthworld::GroundTruth;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.jsonl";
pub const PREDICTIONS: &str = "predictions.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u64,
    pub seed: u64,
    pub satellite: String,
    pub street: String,
    #[serde(flatten)]
    pub truth: GroundTruth,
}

/// Per-level summary kept in the predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub theta_a: f64,
    pub anchor_spacing: f64,
    pub anchors: Vec<(i64, i64)>,
    pub scores: Vec<f64>,
    pub best: usize,
    pub best_theta: f64,
    pub refined_location: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: u64,
    pub pred_y: f64,
    pub pred_x: f64,
    pub pred_theta: f64,
    pub score: f64,
    pub queries_used: usize,
    pub l2: f64,
    pub per_level: Vec<LevelRecord>,
}

impl Prediction {
    pub fn from_result(id: u64, r: &SearchResult) -> Self {
        Prediction {
            id,
            pred_y: r.location.0,
            pred_x: r.location.1,
            pred_theta: r.orientation,
            score: r.score,
            queries_used: r.queries_used,
            l2: r.l2,
            per_level: r
                .trace
                .iter()
                .map(|t| LevelRecord {
                    level: t.level,
                    theta_a: t.theta_a,
                    anchor_spacing: t.anchor_spacing,
                    anchors: t.anchors.clone(),
                    scores: t.scores.clone(),
                    best: t.best,
                    best_theta: t.thetas[t.best],
                    refined_location: t.refined_location,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedPrediction {
    pub id: u64,
    pub error: String,
}

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredictionLine {
    Ok(Prediction),
    Failed(FailedPrediction),
}

impl PredictionLine {
    pub fn id(&self) -> u64 {
        match self {
            PredictionLine::Ok(p) => p.id,
            PredictionLine::Failed(f) => f.id,
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_fmap(path: &Path, map: &FeatureMap) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    map.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_fmap(path: &Path) -> Result<FeatureMap> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    FeatureMap::read_from(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}
