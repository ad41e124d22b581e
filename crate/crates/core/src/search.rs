//! Dynamic coarse-to-fine anchor search, sub-anchor refinement and the
//! exhaustive flat-grid comparator.

use serde::{Deserialize, Serialize};

use crate::error::{config, shape, Result};
use crate::features::{normalize, satellite_feature, FeatureMap, PetalFeature};
use crate::geometry::PetalLut;
use crate::matchmaker::{MatchMaker, Orientation, PreparedStreet};

/// Geometry of one search level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelGeometry {
    pub level: usize,
    /// Patch side handed down by the level recurrence, in pixels.
    pub patch_size: f64,
    /// Anchors per grid side.
    pub grid_side: usize,
    pub anchor_count: usize,
    /// Distance between neighbouring anchors, in pixels.
    pub anchor_spacing: f64,
    pub theta_a: f64,
    pub is_last: bool,
}

impl LevelGeometry {
    /// Side of the square whose sub-patch centers are the anchors.
    pub fn anchor_extent(&self) -> f64 {
        self.grid_side as f64 * self.anchor_spacing
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPlan {
    pub map_side: usize,
    /// Side of the central search area (half the map side).
    pub search_side: usize,
    pub n_s: usize,
    pub n_s_prime: usize,
    pub levels: Vec<LevelGeometry>,
}

impl LevelPlan {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn theta_per_level(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.theta_a).collect()
    }
}

/// Number of levels for a search area and grid: regular levels while the
/// anchor spacing stays at or above one pixel, then the final level.
pub fn level_count(map_side: usize, n_s: usize) -> usize {
    let search_side = (map_side / 2) as f64;
    let mut l = 0;
    while search_side / (n_s as f64).powi(l as i32 + 1) >= 1.0 {
        l += 1;
    }
    l + 1
}

/// Builds the level recurrence for a square map.
pub fn plan_levels(
    map_side: usize,
    n_s: usize,
    n_s_prime: usize,
    theta_per_level: &[f64],
) -> Result<LevelPlan> {
    if n_s < 2 {
        return config(format!("grid side n_s must be >= 2, got {n_s}"));
    }
    if n_s_prime < 1 {
        return config("final grid side must be >= 1");
    }
    if map_side < 2 {
        return config(format!("map side {map_side} is too small"));
    }
    let n_levels = level_count(map_side, n_s);
    if theta_per_level.len() != n_levels {
        return config(format!(
            "map side {map_side} with n_s = {n_s} needs {n_levels} petal widths, got {}",
            theta_per_level.len()
        ));
    }
    let search_side = map_side / 2;
    let ls = search_side as f64;
    let ns = n_s as f64;
    let mut levels = Vec::with_capacity(n_levels);
    for (l, &theta_a) in theta_per_level.iter().enumerate() {
        let is_last = l + 1 == n_levels;
        let level = if is_last {
            LevelGeometry {
                level: l,
                patch_size: ls / ns.powi(l as i32 - 1),
                grid_side: n_s_prime,
                anchor_count: n_s_prime * n_s_prime,
                anchor_spacing: 1.0,
                theta_a,
                is_last,
            }
        } else {
            let patch = ls / ns.powi(l as i32);
            LevelGeometry {
                level: l,
                patch_size: patch,
                grid_side: n_s,
                anchor_count: n_s * n_s,
                anchor_spacing: patch / ns,
                theta_a,
                is_last,
            }
        };
        levels.push(level);
    }
    Ok(LevelPlan {
        map_side,
        search_side,
        n_s,
        n_s_prime,
        levels,
    })
}

/// Total anchor queries of a plan.
pub fn query_count(plan: &LevelPlan) -> usize {
    plan.levels.iter().map(|l| l.anchor_count).sum()
}

/// `n_s^2 * floor(log_{n_s} L_s)` regular queries plus the final level.
pub fn query_bound(plan: &LevelPlan) -> usize {
    let mut log = 0;
    let mut p = plan.n_s;
    while p <= plan.search_side {
        log += 1;
        p *= plan.n_s;
    }
    plan.n_s * plan.n_s * log + plan.n_s_prime * plan.n_s_prime
}

/// Centers of the `k x k` equal sub-patches of an `extent`-wide square
/// around `center`, rounded half-up to whole pixels and clamped to the map.
/// Row-major order.
pub fn create_patch_centers(
    center: (i64, i64),
    extent: f64,
    anchor_count: usize,
    bounds: (usize, usize),
) -> Result<Vec<(i64, i64)>> {
    let k = (anchor_count as f64).sqrt().round() as usize;
    if k == 0 || k * k != anchor_count {
        return config(format!("anchor count {anchor_count} is not a perfect square"));
    }
    let offsets: Vec<i64> = (0..k)
        .map(|i| {
            let o = ((i as f64 + 0.5) / k as f64 - 0.5) * extent;
            (o + 0.5).floor() as i64
        })
        .collect();
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1);
    let mut anchors = Vec::with_capacity(anchor_count);
    for &oy in &offsets {
        for &ox in &offsets {
            anchors.push((clamp(center.0 + oy, bounds.0), clamp(center.1 + ox, bounds.1)));
        }
    }
    Ok(anchors)
}

/// Index of the anchor whose cell (side `cell_side`, closed below, open
/// above) contains `gt`. Lowest index wins on shared edges.
pub fn correct_anchor(anchors: &[(i64, i64)], gt: (f64, f64), cell_side: f64) -> Option<usize> {
    let h = cell_side / 2.0;
    anchors.iter().position(|&(ay, ax)| {
        let (ay, ax) = (ay as f64, ax as f64);
        gt.0 >= ay - h && gt.0 < ay + h && gt.1 >= ax - h && gt.1 < ax + h
    })
}

/// Sub-anchor peak of an upsampled score grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    /// Offset from the grid center, in pixels.
    pub dy: f64,
    pub dx: f64,
    pub score: f64,
}

/// Keys cubic convolution kernel (a = -0.5).
fn cubic_weight(t: f64) -> f64 {
    let t = t.abs();
    if t < 1.0 {
        1.5 * t * t * t - 2.5 * t * t + 1.0
    } else if t < 2.0 {
        -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0
    } else {
        0.0
    }
}

fn bicubic(grid: &[f64], k: usize, u: f64, v: f64) -> f64 {
    let (iy, ix) = (u.floor() as i64, v.floor() as i64);
    let (fy, fx) = (u - iy as f64, v - ix as f64);
    let at = |y: i64, x: i64| {
        let y = y.clamp(0, k as i64 - 1) as usize;
        let x = x.clamp(0, k as i64 - 1) as usize;
        grid[y * k + x]
    };
    let mut acc = 0.0;
    for m in -1..=2 {
        let wy = cubic_weight(fy - m as f64);
        if wy == 0.0 {
            continue;
        }
        for n in -1..=2 {
            let wx = cubic_weight(fx - n as f64);
            if wx != 0.0 {
                acc += wy * wx * at(iy + m, ix + n);
            }
        }
    }
    acc
}

/// Bicubic upsampling of a `k x k` row-major score grid by `factor`; the
/// argmax is mapped back to a pixel offset from the grid center. The
/// resolving power is `anchor_spacing / factor`.
pub fn refine_location(grid: &[f64], k: usize, anchor_spacing: f64, factor: usize) -> Result<Refinement> {
    if k == 0 || grid.len() != k * k {
        return shape(format!("score grid has {} entries, expected {k}x{k}", grid.len()));
    }
    if factor == 0 {
        return config("refinement factor must be >= 1");
    }
    if k == 1 {
        return Ok(Refinement {
            dy: 0.0,
            dx: 0.0,
            score: grid[0],
        });
    }
    let steps = (k - 1) * factor + 1;
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for sy in 0..steps {
        let u = sy as f64 / factor as f64;
        for sx in 0..steps {
            let v = sx as f64 / factor as f64;
            let s = bicubic(grid, k, u, v);
            if s > best.2 {
                best = (sy, sx, s);
            }
        }
    }
    let half = (k - 1) as f64 / 2.0;
    Ok(Refinement {
        dy: (best.0 as f64 / factor as f64 - half) * anchor_spacing,
        dx: (best.1 as f64 / factor as f64 - half) * anchor_spacing,
        score: best.2,
    })
}

/// Per-level diagnostics of a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub level: usize,
    pub theta_a: f64,
    pub anchor_spacing: f64,
    pub anchors: Vec<(i64, i64)>,
    pub thetas: Vec<f64>,
    pub scores: Vec<f64>,
    pub best: usize,
    pub refined_offset: (f64, f64),
    pub refined_location: (f64, f64),
    pub refined_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Refined location `(y, x)` in feature pixels.
    pub location: (f64, f64),
    /// Same location in meters from the map origin.
    pub location_m: (f64, f64),
    /// Best discrete anchor of the final level.
    pub best_pixel: (i64, i64),
    pub orientation: f64,
    /// Mixed score of the best final-level anchor.
    pub score: f64,
    pub queries_used: usize,
    /// L2 distance between the street feature and the best satellite
    /// feature rotated to the chosen orientation and cropped to the FOV.
    pub l2: f64,
    pub trace: Vec<LevelTrace>,
}

/// Matching options shared by all levels.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub matchmaker: MatchMaker,
    pub refine_factor: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            matchmaker: MatchMaker::default(),
            refine_factor: 8,
        }
    }
}

fn prepare_street(street: &PetalFeature, mm: &MatchMaker) -> Result<(PetalFeature, PreparedStreet)> {
    let (unit, _) = normalize(street);
    let prepared = mm.prepare(&unit)?;
    Ok((unit, prepared))
}

fn evaluate_anchor(
    map: &FeatureMap,
    anchor: (i64, i64),
    lut: &PetalLut,
    street: &PreparedStreet,
) -> Result<(Orientation, PetalFeature)> {
    let (sat, _) = normalize(&satellite_feature(map, anchor, lut)?);
    Ok((street.match_anchor(&sat)?, sat))
}

fn reconstruction_gap(street: &PetalFeature, sat: &PetalFeature, theta: f64) -> Result<f64> {
    let shift = (theta / sat.theta_a).round() as i64;
    let crop = sat.rotate(shift).crop(street.n_a)?;
    crate::metrics::reconstruction_l2(street, &crop)
}

fn ground_res(map: &FeatureMap) -> f64 {
    map.ground_res.unwrap_or(1.0)
}

/// Greedy coarse-to-fine search. `street_feats[l]` and `luts[l]` must use
/// the petal width of plan level `l`.
pub fn run_search(
    sat_map: &FeatureMap,
    street_feats: &[PetalFeature],
    plan: &LevelPlan,
    luts: &[PetalLut],
    opts: &SearchOptions,
) -> Result<SearchResult> {
    let n = plan.n_levels();
    if street_feats.len() != n || luts.len() != n {
        return shape(format!(
            "plan has {n} levels, got {} street features and {} LUTs",
            street_feats.len(),
            luts.len()
        ));
    }
    for (l, geom) in plan.levels.iter().enumerate() {
        let (lt, st) = (luts[l].spec.theta_a, street_feats[l].theta_a);
        if (lt - geom.theta_a).abs() > 1e-9 || (st - geom.theta_a).abs() > 1e-9 {
            return shape(format!(
                "level {l}: plan petal width {} but LUT {lt} / street {st}",
                geom.theta_a
            ));
        }
    }

    let bounds = (sat_map.height, sat_map.width);
    let mut center = sat_map.center();
    let mut trace = Vec::with_capacity(n);
    let mut queries = 0;
    let mut last_best = None;
    for (l, geom) in plan.levels.iter().enumerate() {
        let (street, prepared) = prepare_street(&street_feats[l], &opts.matchmaker)?;
        let anchors = create_patch_centers(center, geom.anchor_extent(), geom.anchor_count, bounds)?;
        let mut thetas = Vec::with_capacity(anchors.len());
        let mut scores = Vec::with_capacity(anchors.len());
        let mut best: Option<(usize, PetalFeature)> = None;
        for (i, &a) in anchors.iter().enumerate() {
            let (o, sat) = evaluate_anchor(sat_map, a, &luts[l], &prepared)?;
            let better = best.as_ref().is_none_or(|(b, _)| o.score > scores[*b]);
            thetas.push(o.theta);
            scores.push(o.score);
            if better {
                best = Some((i, sat));
            }
        }
        queries += anchors.len();
        let (best_idx, best_sat) = best.expect("every level has at least one anchor");

        let refined = refine_location(&scores, geom.grid_side, geom.anchor_spacing, opts.refine_factor)?;
        let k = anchors.len() as f64;
        let gy = anchors.iter().map(|a| a.0 as f64).sum::<f64>() / k;
        let gx = anchors.iter().map(|a| a.1 as f64).sum::<f64>() / k;
        let refined_location = (gy + refined.dy, gx + refined.dx);

        center = anchors[best_idx];
        last_best = Some((street, best_sat, thetas[best_idx], scores[best_idx]));
        trace.push(LevelTrace {
            level: l,
            theta_a: geom.theta_a,
            anchor_spacing: geom.anchor_spacing,
            anchors,
            thetas,
            scores,
            best: best_idx,
            refined_offset: (refined.dy, refined.dx),
            refined_location,
            refined_score: refined.score,
        });
    }

    let (street, sat, orientation, score) = last_best.expect("plan has at least one level");
    let location = trace.last().expect("non-empty trace").refined_location;
    let res = ground_res(sat_map);
    Ok(SearchResult {
        location,
        location_m: (location.0 * res, location.1 * res),
        best_pixel: center,
        orientation,
        score,
        queries_used: queries,
        l2: reconstruction_gap(&street, &sat, orientation)?,
        trace,
    })
}

/// Queries made by a flat search: `ceil(search_side / stride)^2`.
pub fn flat_query_count(search_side: usize, stride: usize) -> usize {
    let per_axis = search_side.div_ceil(stride.max(1));
    per_axis * per_axis
}

/// Exhaustive evaluation at every `stride`-spaced pixel of the central
/// `search_side` square, using a single petal layout.
pub fn flat_search(
    sat_map: &FeatureMap,
    street_feat: &PetalFeature,
    lut: &PetalLut,
    search_side: usize,
    stride: usize,
    opts: &SearchOptions,
) -> Result<SearchResult> {
    if stride == 0 {
        return config("stride must be >= 1");
    }
    if (lut.spec.theta_a - street_feat.theta_a).abs() > 1e-9 {
        return shape("street feature and LUT use different petal widths");
    }
    let (street, prepared) = prepare_street(street_feat, &opts.matchmaker)?;
    let (cy, cx) = sat_map.center();
    let half = (search_side / 2) as i64;
    let coords: Vec<i64> = (0..search_side as i64).step_by(stride).map(|o| o - half).collect();

    let mut anchors = Vec::with_capacity(coords.len() * coords.len());
    let mut thetas = Vec::with_capacity(anchors.capacity());
    let mut scores = Vec::with_capacity(anchors.capacity());
    let mut best: Option<(usize, PetalFeature)> = None;
    for &oy in &coords {
        for &ox in &coords {
            let a = (cy + oy, cx + ox);
            let (o, sat) = evaluate_anchor(sat_map, a, lut, &prepared)?;
            if best.as_ref().is_none_or(|(b, _)| o.score > scores[*b]) {
                best = Some((anchors.len(), sat));
            }
            anchors.push(a);
            thetas.push(o.theta);
            scores.push(o.score);
        }
    }
    let (best_idx, best_sat) = best.ok_or_else(|| crate::Error::EmptyInput("empty flat grid".into()))?;
    let pixel = anchors[best_idx];
    let location = (pixel.0 as f64, pixel.1 as f64);
    let res = ground_res(sat_map);
    let orientation = thetas[best_idx];
    Ok(SearchResult {
        location,
        location_m: (location.0 * res, location.1 * res),
        best_pixel: pixel,
        orientation,
        score: scores[best_idx],
        queries_used: anchors.len(),
        l2: reconstruction_gap(&street, &best_sat, orientation)?,
        trace: vec![LevelTrace {
            level: 0,
            theta_a: lut.spec.theta_a,
            anchor_spacing: stride as f64,
            best: best_idx,
            refined_offset: (0.0, 0.0),
            refined_location: location,
            refined_score: scores[best_idx],
            anchors,
            thetas,
            scores,
        }],
    })
}
