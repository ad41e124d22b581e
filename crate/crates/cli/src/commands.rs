use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use petal_core::features::street_features;
use petal_core::geometry::PetalLut;
use petal_core::metrics::{contrastive_metric, summarize, EvalRecord, Report, TEMPERATURE};
use petal_core::search::{correct_anchor, flat_search, run_search, LevelPlan, SearchResult};
use petal_core::synthworld::generate_instance;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Mode};
use crate::io::{
    read_fmap, read_jsonl, write_fmap, write_jsonl, FailedPrediction, ManifestEntry, Prediction, PredictionLine,
    MANIFEST, PREDICTIONS,
};

pub const THRESHOLDS_M: [f64; 3] = [1.0, 3.0, 5.0];
pub const THRESHOLDS_DEG: [f64; 3] = [1.0, 3.0, 5.0];

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes the noisy satellite map, the street view and a manifest line per
/// instance.
pub fn generate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ManifestEntry>> {
    ensure_dir(out)?;
    let luts = cfg.luts()?;
    let finest = luts.last().expect("validated plan has levels");
    let layout = cfg.layout();
    let ids = cfg.ids();
    let entries = pool(cfg.run.workers)?.install(|| {
        ids.par_iter()
            .map(|&id| -> Result<ManifestEntry> {
                let scene = cfg.scene_for(id);
                let inst = generate_instance(&scene, finest, &layout).with_context(|| format!("instance {id}"))?;
                let sat_name = format!("scene_{id:05}.fmap");
                let street_name = format!("street_{id:05}.fmap");
                write_fmap(&out.join(&sat_name), &inst.satellite)?;
                write_fmap(&out.join(&street_name), &inst.street)?;
                Ok(ManifestEntry {
                    id,
                    seed: scene.seed,
                    satellite: sat_name,
                    street: street_name,
                    truth: inst.truth,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_jsonl(&out.join(MANIFEST), &entries)?;
    info!("generated {} instances in {}", entries.len(), out.display());
    Ok(entries)
}

/// Dumps every level LUT, a per-cell sample count table and a per-level
/// occupancy raster (how many cells claim each pixel of the scanned square).
pub fn lut(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let luts = cfg.luts()?;
    let mut counts = csv::Writer::from_path(out.join("lut_counts.csv"))?;
    counts.write_record(["level", "theta_a", "petal", "zone", "count"])?;
    for (l, lut) in luts.iter().enumerate() {
        fs::write(out.join(format!("level_{l}.plut")), lut.to_bytes())?;
        for p in 0..lut.n_a() {
            for z in 0..lut.n_z() {
                counts.write_record([
                    l.to_string(),
                    lut.spec.theta_a.to_string(),
                    p.to_string(),
                    z.to_string(),
                    lut.counts[p * lut.n_z() + z].to_string(),
                ])?;
            }
        }
        write_occupancy(&out.join(format!("occupancy_level_{l}.csv")), lut)?;
    }
    counts.flush()?;
    info!("wrote {} LUTs to {}", luts.len(), out.display());
    Ok(())
}

pub fn occupancy(lut: &PetalLut) -> Vec<Vec<u32>> {
    let h = lut.half_extent;
    let side = (2 * h + 1) as usize;
    let mut grid = vec![vec![0u32; side]; side];
    for cell in 0..lut.counts.len() {
        for &[dy, dx] in &lut.offsets[cell][..lut.counts[cell]] {
            grid[(dy + h) as usize][(dx + h) as usize] += 1;
        }
    }
    grid
}

fn write_occupancy(path: &Path, lut: &PetalLut) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in occupancy(lut) {
        w.write_record(row.iter().map(u32::to_string))?;
    }
    w.flush()?;
    Ok(())
}

/// Everything a search needs that does not depend on the instance.
pub struct Searcher<'a> {
    cfg: &'a ExperimentConfig,
    plan: LevelPlan,
    luts: Vec<PetalLut>,
}

impl<'a> Searcher<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        Ok(Searcher {
            plan: cfg.plan()?,
            luts: cfg.luts()?,
            cfg,
        })
    }

    pub fn plan(&self) -> &LevelPlan {
        &self.plan
    }

    pub fn solve(&self, dir: &Path, entry: &ManifestEntry, mode: Mode) -> Result<SearchResult> {
        let sat = read_fmap(&dir.join(&entry.satellite))?;
        let street = read_fmap(&dir.join(&entry.street))?;
        let cfg = self.cfg;
        let feats = street_features(
            &street,
            &cfg.search.theta_per_level,
            cfg.scene.fov,
            cfg.petal.zones_m.len(),
        )?;
        let opts = cfg.options_with(cfg.prior_for(entry.truth.prior_theta))?;
        let r = match mode {
            Mode::Multiscale => run_search(&sat, &feats, &self.plan, &self.luts, &opts)?,
            Mode::Flat => {
                let last = self.luts.len() - 1;
                flat_search(
                    &sat,
                    &feats[last],
                    &self.luts[last],
                    self.plan.search_side,
                    cfg.search.flat_stride,
                    &opts,
                )?
            }
        };
        Ok(r)
    }
}

/// Runs the configured search on every manifest entry. A failing instance
/// is recorded as an error line; the batch continues.
pub fn search(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PredictionLine>> {
    let entries: Vec<ManifestEntry> = read_jsonl(&dir.join(MANIFEST))?;
    let searcher = Searcher::new(cfg)?;
    let mode = cfg.search.mode;
    let mut lines: Vec<PredictionLine> = pool(cfg.run.workers)?.install(|| {
        entries
            .par_iter()
            .map(|e| match searcher.solve(dir, e, mode) {
                Ok(r) => PredictionLine::Ok(Prediction::from_result(e.id, &r)),
                Err(err) => {
                    warn!("instance {}: {err:#}", e.id);
                    PredictionLine::Failed(FailedPrediction {
                        id: e.id,
                        error: format!("{err:#}"),
                    })
                }
            })
            .collect()
    });
    lines.sort_by_key(PredictionLine::id);
    write_jsonl(&dir.join(PREDICTIONS), &lines)?;
    let failed = lines.iter().filter(|l| matches!(l, PredictionLine::Failed(_))).count();
    info!("searched {} instances ({failed} failed)", lines.len());
    Ok(lines)
}

/// Mean contrastive term over the levels whose anchor grid still holds the
/// truth; `None` when no level does.
pub fn mean_contrastive(p: &Prediction, gt: (f64, f64)) -> Result<Option<f64>> {
    let mut terms = Vec::new();
    for lvl in &p.per_level {
        if let Some(pos) = correct_anchor(&lvl.anchors, gt, lvl.anchor_spacing) {
            terms.push(contrastive_metric(&lvl.scores, pos, TEMPERATURE)?);
        }
    }
    Ok((!terms.is_empty()).then(|| terms.iter().sum::<f64>() / terms.len() as f64))
}

pub struct Evaluation {
    pub report: Report,
    pub records: Vec<EvalRecord>,
    pub failed: usize,
}

pub fn evaluate(cfg: &ExperimentConfig, dir: &Path) -> Result<Evaluation> {
    let entries: Vec<ManifestEntry> = read_jsonl(&dir.join(MANIFEST))?;
    let lines: Vec<PredictionLine> = read_jsonl(&dir.join(PREDICTIONS))?;
    let truth: BTreeMap<u64, &ManifestEntry> = entries.iter().map(|e| (e.id, e)).collect();
    let res = cfg.scene.ground_res;
    let mut records = Vec::new();
    let mut failed = 0;
    for line in &lines {
        let p = match line {
            PredictionLine::Ok(p) => p,
            PredictionLine::Failed(_) => {
                failed += 1;
                continue;
            }
        };
        let Some(e) = truth.get(&p.id) else {
            bail!("prediction {} has no manifest entry", p.id);
        };
        let gt = e.truth.gt_location;
        let mut rec = EvalRecord::new(p.id, gt, e.truth.gt_theta, (p.pred_y, p.pred_x), p.pred_theta, res);
        rec.contrastive = mean_contrastive(p, gt)?;
        rec.l2 = Some(p.l2);
        records.push(rec);
    }
    let report = summarize(&records, &THRESHOLDS_M, &THRESHOLDS_DEG)?;
    let mut md = String::new();
    writeln!(md, "# Metrics\n\n{} evaluated, {failed} failed\n", report.count)?;
    md.push_str(&report.to_markdown());
    fs::write(dir.join("metrics.md"), md)?;
    fs::write(dir.join("metrics.csv"), report.to_csv())?;
    Ok(Evaluation {
        report,
        records,
        failed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub id: u64,
    pub mode: &'static str,
    pub queries: usize,
    pub wall_ms: f64,
    pub err_px: f64,
}

/// Times both search modes on every manifest entry.
pub fn bench(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<BenchRow>> {
    let entries: Vec<ManifestEntry> = read_jsonl(&dir.join(MANIFEST))?;
    let searcher = Searcher::new(cfg)?;
    let rows = pool(cfg.run.workers)?.install(|| {
        entries
            .par_iter()
            .map(|e| -> Result<Vec<BenchRow>> {
                let mut out = Vec::new();
                for (mode, name) in [(Mode::Multiscale, "multiscale"), (Mode::Flat, "flat")] {
                    let t = Instant::now();
                    let r = searcher.solve(dir, e, mode).with_context(|| format!("instance {}", e.id))?;
                    let wall_ms = t.elapsed().as_secs_f64() * 1e3;
                    let gt = e.truth.gt_location;
                    out.push(BenchRow {
                        id: e.id,
                        mode: name,
                        queries: r.queries_used,
                        wall_ms,
                        err_px: (r.location.0 - gt.0).hypot(r.location.1 - gt.1),
                    });
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<BenchRow> = rows.into_iter().flatten().collect();
    let mut w = csv::Writer::from_path(dir.join("bench.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

/// Mean flat / multiscale ratio of a bench column.
pub fn bench_ratio(rows: &[BenchRow], f: impl Fn(&BenchRow) -> f64) -> f64 {
    let mean = |m: &str| {
        let v: Vec<f64> = rows.iter().filter(|r| r.mode == m).map(&f).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    mean("flat") / mean("multiscale")
}
