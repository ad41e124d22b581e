//! Plain-Rust view builders behind the wasm exports.

use petal_core::features::{normalize, satellite_feature, street_features};
use petal_core::geometry::build_level_luts;
use petal_core::matchmaker::{best_orientation, prior_curve, MatchMaker, PriorConfig};
use petal_core::search::{plan_levels, run_search, SearchOptions};
use petal_core::synthworld::{generate_instance, Instance, SceneConfig, StreetLayout};
use petal_core::Result;

pub const THETAS: [f64; 4] = [10.0, 5.0, 2.5, 2.5];
pub const ZONES_M: [f64; 4] = [10.0, 20.0, 32.0, 45.0];
const CS_FACTOR: usize = 5;

/// Petal / zone id of every pixel in the LUT's scanned square, -1 where no
/// cell claims the pixel. Pixels claimed twice keep the first cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub side: usize,
    pub petal: Vec<i32>,
    pub zone: Vec<i32>,
}

pub fn lut_raster(theta_a: f64, zones_m: &[f64], ground_res: f64) -> Result<Raster> {
    let lut = build_level_luts(&[theta_a], zones_m, ground_res)?.remove(0);
    let h = lut.half_extent;
    let side = (2 * h + 1) as usize;
    let mut petal = vec![-1; side * side];
    let mut zone = vec![-1; side * side];
    for p in 0..lut.n_a() {
        for z in 0..lut.n_z() {
            for &[dy, dx] in lut.samples(p, z) {
                let i = (dy + h) as usize * side + (dx + h) as usize;
                if petal[i] < 0 {
                    petal[i] = p as i32;
                    zone[i] = z as i32;
                }
            }
        }
    }
    Ok(Raster { side, petal, zone })
}

fn layout() -> StreetLayout {
    StreetLayout {
        rows_per_zone: 2,
        cols_per_petal: CS_FACTOR,
        fov: 360.0,
    }
}

fn instance(seed: u64, noise_sigma: f64) -> Result<Instance> {
    let cfg = SceneConfig {
        noise_sigma,
        ..SceneConfig::default()
    }
    .with_seed(seed);
    let luts = build_level_luts(&THETAS, &ZONES_M, cfg.ground_res)?;
    generate_instance(&cfg, luts.last().expect("four levels"), &layout())
}

/// Finest-level orientation curve at the true location, with and without a
/// prior. `prior` is empty for a zero-width prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub bin_width: f64,
    pub smoothed: Vec<f64>,
    pub prior: Vec<f64>,
    pub gt_theta: f64,
    pub plain_theta: f64,
    pub prior_theta: f64,
}

pub fn orientation_curve(seed: u64, p_theta: f64, delta_p: f64, rho_p: f64) -> Result<Curve> {
    let inst = instance(seed, 0.0)?;
    let res = inst.satellite.ground_res.unwrap_or(petal_core::synthworld::DEFAULT_GROUND_RES);
    let lut = build_level_luts(&THETAS[3..], &ZONES_M, res)?.remove(0);
    let street = street_features(&inst.street, &THETAS[3..], 360.0, ZONES_M.len())?.remove(0);
    let gt = inst.truth.gt_location;
    let sat = satellite_feature(&inst.satellite, (gt.0 as i64, gt.1 as i64), &lut)?;
    let prepared = MatchMaker::new(CS_FACTOR, None)?.prepare(&normalize(&street).0)?;
    let curve = prepared.smoothed(&normalize(&sat).0)?;
    let cfg = PriorConfig {
        p_theta,
        delta_p,
        rho_p,
        delta_scale: 1.0,
    };
    let prior = if delta_p > 0.0 {
        prior_curve(&cfg, curve.len(), curve.bin_width)?.values
    } else {
        Vec::new()
    };
    Ok(Curve {
        bin_width: curve.bin_width,
        plain_theta: best_orientation(&curve, None)?.theta,
        prior_theta: best_orientation(&curve, Some(&cfg))?.theta,
        smoothed: curve.values,
        prior,
        gt_theta: inst.truth.gt_theta,
    })
}

/// A search over one synthetic instance. `anchors` holds
/// `(level, y, x, score, chosen)` quintuples, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub side: usize,
    pub rgba: Vec<u8>,
    pub anchors: Vec<f64>,
    pub gt: Vec<f64>,
    pub pred: Vec<f64>,
    pub queries: usize,
}

pub fn search_trace(seed: u64, noise_sigma: f64) -> Result<Trace> {
    let inst = instance(seed, noise_sigma)?;
    let sat = &inst.satellite;
    let res = sat.ground_res.unwrap_or(petal_core::synthworld::DEFAULT_GROUND_RES);
    let plan = plan_levels(sat.height, 4, 3, &THETAS)?;
    let luts = build_level_luts(&THETAS, &ZONES_M, res)?;
    let feats = street_features(&inst.street, &THETAS, 360.0, ZONES_M.len())?;
    let r = run_search(sat, &feats, &plan, &luts, &SearchOptions::default())?;

    let mut anchors = Vec::new();
    for t in &r.trace {
        for (i, (&(y, x), &s)) in t.anchors.iter().zip(&t.scores).enumerate() {
            anchors.extend([t.level as f64, y as f64, x as f64, s, (i == t.best) as u8 as f64]);
        }
    }
    let g = inst.truth.gt_location;
    Ok(Trace {
        side: sat.height,
        rgba: false_color(sat),
        anchors,
        gt: vec![g.0, g.1, inst.truth.gt_theta],
        pred: vec![r.location.0, r.location.1, r.orientation],
        queries: r.queries_used,
    })
}

/// First three channels, each stretched to its own range.
fn false_color(map: &petal_core::features::FeatureMap) -> Vec<u8> {
    let n = map.height * map.width;
    let mut out = vec![255u8; n * 4];
    for c in 0..map.channels.min(3) {
        let plane = &map.data[c * n..(c + 1) * n];
        let lo = plane.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = plane.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let span = (hi - lo).max(1e-6);
        for (i, &v) in plane.iter().enumerate() {
            out[i * 4 + c] = (255.0 * (v - lo) / span) as u8;
        }
    }
    out
}
