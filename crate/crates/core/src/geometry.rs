//! Pixel-to-petal belongingness and the padded lookup tables that gather
//! satellite feature pixels into (petal, zone) bins around an anchor.
//!
//! Offsets are `(dy, dx)` in feature pixels relative to the anchor pixel
//! center. Azimuths follow [`crate::angle::azimuth`]: 0 deg is south
//! (increasing row), 90 deg is east (increasing column).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::angle::azimuth;
use crate::error::{config, Error, Result};
use crate::features::FeatureMap;

/// Minimum angular contribution / value needed to accept a pixel.
pub const T1: f64 = 0.5;
/// Value threshold applied when the contribution is below [`T1`].
pub const T2: f64 = 0.8;

// Threshold slack: pixel corners that sit exactly on a petal border give
// fractions like 0.5 that atan2 may round either way.
const EPS: f64 = 1e-9;

/// Offset value stored in padded LUT slots.
pub const PAD_SENTINEL: [i32; 2] = [i32::MIN, i32::MIN];

/// Angular and radial layout of one search level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PetalSpec {
    pub level_index: usize,
    /// Angular width of one petal in degrees.
    pub theta_a: f64,
    pub n_a: usize,
    /// Outer zone radii in meters, strictly increasing.
    pub zone_bounds_m: Vec<f64>,
    /// Meters per feature pixel.
    pub ground_res: f64,
}

impl PetalSpec {
    pub fn new(
        level_index: usize,
        theta_a: f64,
        zone_bounds_m: Vec<f64>,
        ground_res: f64,
    ) -> Result<Self> {
        if !(theta_a > 0.0) || !theta_a.is_finite() {
            return config(format!("petal width must be positive, got {theta_a}"));
        }
        let n = 360.0 / theta_a;
        let n_a = n.round();
        if (n - n_a).abs() > 1e-9 || n_a < 1.0 {
            return config(format!("360 deg is not a whole number of {theta_a} deg petals"));
        }
        let spec = PetalSpec {
            level_index,
            theta_a,
            n_a: n_a as usize,
            zone_bounds_m,
            ground_res,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.n_a as f64 * self.theta_a - 360.0).abs() > 1e-9 {
            return config(format!(
                "n_a * theta_a must be 360, got {} * {}",
                self.n_a, self.theta_a
            ));
        }
        if !(self.ground_res > 0.0) {
            return config(format!("ground_res must be positive, got {}", self.ground_res));
        }
        if self.zone_bounds_m.is_empty() {
            return config("at least one zone bound is required");
        }
        let mut prev = 0.0;
        for &b in &self.zone_bounds_m {
            if !(b > prev) {
                return config(format!(
                    "zone bounds must be positive and strictly increasing: {:?}",
                    self.zone_bounds_m
                ));
            }
            prev = b;
        }
        Ok(())
    }

    pub fn n_z(&self) -> usize {
        self.zone_bounds_m.len()
    }

    /// Zone `j` spans `(lo, hi]` in pixels; zone 0 starts at 0.
    pub fn zone_range_px(&self, j: usize) -> (f64, f64) {
        let lo = if j == 0 {
            0.0
        } else {
            self.zone_bounds_m[j - 1] / self.ground_res
        };
        (lo, self.zone_bounds_m[j] / self.ground_res)
    }

    pub fn outer_radius_px(&self) -> f64 {
        self.zone_bounds_m[self.n_z() - 1] / self.ground_res
    }

    /// Petal `i` covers `[i * theta_a, (i + 1) * theta_a)`.
    pub fn petal_range_deg(&self, i: usize) -> (f64, f64) {
        (i as f64 * self.theta_a, (i + 1) as f64 * self.theta_a)
    }
}

/// Corner azimuths and distances of one pixel seen from the anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelGeom {
    /// Corner order: bottom-left, bottom-right, top-left, top-right.
    pub corner_angles: [f64; 4],
    pub corner_dists: [f64; 4],
    /// Minimal covering arc; `start` in `[0, 360)`, `end >= start` and
    /// possibly beyond 360 when the arc crosses the branch cut.
    pub angle_range: (f64, f64),
    pub dist_range: (f64, f64),
}

impl PixelGeom {
    pub fn arc_width(&self) -> f64 {
        self.angle_range.1 - self.angle_range.0
    }

    /// True for the pixel that contains the anchor itself.
    pub fn is_anchor(&self) -> bool {
        self.arc_width() >= 360.0
    }
}

/// Corner geometry of the pixel at offset `(dy, dx)` from the anchor.
pub fn pixel_geometry(dy: i32, dx: i32) -> PixelGeom {
    let (y, x) = (dy as f64, dx as f64);
    // bottom = +0.5 row (south side), left = -0.5 column (west side)
    let corners = [
        (y + 0.5, x - 0.5),
        (y + 0.5, x + 0.5),
        (y - 0.5, x - 0.5),
        (y - 0.5, x + 0.5),
    ];
    let corner_angles = corners.map(|(cy, cx)| azimuth(cy, cx));
    let corner_dists = corners.map(|(cy, cx)| cy.hypot(cx));
    let dmin = corner_dists.iter().copied().fold(f64::INFINITY, f64::min);
    let dmax = corner_dists.iter().copied().fold(0.0, f64::max);

    let angle_range = if dy == 0 && dx == 0 {
        (0.0, 360.0)
    } else {
        covering_arc(corner_angles)
    };
    PixelGeom {
        corner_angles,
        corner_dists,
        angle_range,
        dist_range: (dmin, dmax),
    }
}

fn covering_arc(angles: [f64; 4]) -> (f64, f64) {
    let mut a = angles;
    a.sort_by(f64::total_cmp);
    // the arc is the complement of the widest gap between sorted angles
    let mut best_gap = a[0] + 360.0 - a[3];
    let mut start = a[0];
    let mut end = a[3];
    for k in 0..3 {
        let gap = a[k + 1] - a[k];
        if gap > best_gap {
            best_gap = gap;
            start = a[k + 1];
            end = a[k] + 360.0;
        }
    }
    (start, end)
}

/// Length of the intersection of two circular arcs, each given as
/// `(start, end)` with `start` in `[0, 360)` and width below 360.
pub fn arc_overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (-1..=1)
        .map(|k| {
            let shift = 360.0 * k as f64;
            (a.1.min(b.1 + shift) - a.0.max(b.0 + shift)).max(0.0)
        })
        .sum()
}

/// Angular and radial overlap of a pixel with one (petal, zone) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlap {
    /// Overlap angle over the petal width.
    pub contr: f64,
    /// Overlap angle over the pixel's own angular width.
    pub value: f64,
    /// Overlap length of the distance ranges, in pixels.
    pub dist_overlap: f64,
}

pub fn petal_overlap(
    geom: &PixelGeom,
    petal_angle_range: (f64, f64),
    zone_dist_range: (f64, f64),
) -> Overlap {
    let petal_width = petal_angle_range.1 - petal_angle_range.0;
    let theta = arc_overlap(geom.angle_range, petal_angle_range);
    Overlap {
        contr: theta / petal_width,
        value: theta / geom.arc_width(),
        dist_overlap: range_overlap(geom.dist_range, zone_dist_range),
    }
}

fn range_overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

/// Angular acceptance rule plus the positive-distance-overlap rule.
///
/// The third angular clause is implied by the second because `T2 > T1`;
/// it is kept so the rule reads the same as its definition.
pub fn accept_pixel(contr: f64, value: f64, dist_overlap: f64) -> bool {
    let angle_ok = contr >= T1 - EPS
        || value >= T1 - EPS
        || (contr < T1 - EPS && value >= T2 - EPS);
    angle_ok && dist_overlap > EPS
}

/// Padded per-(petal, zone) pixel offset tables for one level.
#[derive(Debug, Clone, PartialEq)]
pub struct PetalLut {
    pub spec: PetalSpec,
    /// Indexed by `petal * n_z + zone`; each list holds `s_max[zone]` entries.
    pub offsets: Vec<Vec<[i32; 2]>>,
    /// True sample count per `petal * n_z + zone`.
    pub counts: Vec<usize>,
    pub s_max: Vec<usize>,
    /// Half side of the scanned bounding square.
    pub half_extent: i32,
}

impl PetalLut {
    pub fn n_a(&self) -> usize {
        self.spec.n_a
    }

    pub fn n_z(&self) -> usize {
        self.spec.n_z()
    }

    pub fn cell(&self, petal: usize, zone: usize) -> &[[i32; 2]] {
        &self.offsets[petal * self.n_z() + zone]
    }

    /// The non-pad offsets of one cell.
    pub fn samples(&self, petal: usize, zone: usize) -> &[[i32; 2]] {
        let idx = petal * self.n_z() + zone;
        &self.offsets[idx][..self.counts[idx]]
    }

    /// Total number of (non-pad) samples across all cells.
    pub fn total_samples(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Whether `(dy, dx)` is a sample of `(petal, zone)`.
    pub fn contains(&self, petal: usize, zone: usize, dy: i32, dx: i32) -> bool {
        self.samples(petal, zone).contains(&[dy, dx])
    }
}

/// One LUT per search level, sharing zones and ground resolution.
pub fn build_level_luts(theta_per_level: &[f64], zone_bounds_m: &[f64], ground_res: f64) -> Result<Vec<PetalLut>> {
    theta_per_level
        .iter()
        .enumerate()
        .map(|(l, &t)| build_lut(&PetalSpec::new(l, t, zone_bounds_m.to_vec(), ground_res)?))
        .collect()
}

/// Builds the padded LUT by scanning the outer zone's bounding square in
/// row-major order.
pub fn build_lut(spec: &PetalSpec) -> Result<PetalLut> {
    spec.validate()?;
    let radius = spec.outer_radius_px();
    if radius < 1.0 {
        return config(format!(
            "outermost zone radius is {radius:.3} px; at least 1 px is required"
        ));
    }
    let n_a = spec.n_a;
    let n_z = spec.n_z();
    let half = radius.ceil() as i32;
    let zones: Vec<(f64, f64)> = (0..n_z).map(|j| spec.zone_range_px(j)).collect();

    let mut cells: Vec<Vec<[i32; 2]>> = vec![Vec::new(); n_a * n_z];
    for dy in -half..=half {
        for dx in -half..=half {
            if dy == 0 && dx == 0 {
                continue;
            }
            let geom = pixel_geometry(dy, dx);
            let dist: Vec<f64> = zones
                .iter()
                .map(|&z| range_overlap(geom.dist_range, z))
                .collect();
            if dist.iter().all(|&d| d <= EPS) {
                continue;
            }
            // only petals touching the pixel's arc can accept it
            let first = (geom.angle_range.0 / spec.theta_a).floor() as i64;
            let last = (geom.angle_range.1 / spec.theta_a).ceil() as i64;
            for p in first..last {
                let i = p.rem_euclid(n_a as i64) as usize;
                let petal = spec.petal_range_deg(i);
                let theta = arc_overlap(geom.angle_range, petal);
                let (contr, value) = (theta / spec.theta_a, theta / geom.arc_width());
                for (j, &d) in dist.iter().enumerate() {
                    if accept_pixel(contr, value, d) {
                        let cell = &mut cells[i * n_z + j];
                        // a petal can be visited twice when n_a is tiny
                        if cell.last() != Some(&[dy, dx]) {
                            cell.push([dy, dx]);
                        }
                    }
                }
            }
        }
    }

    let counts: Vec<usize> = cells.iter().map(Vec::len).collect();
    let s_max: Vec<usize> = (0..n_z)
        .map(|j| (0..n_a).map(|i| counts[i * n_z + j]).max().unwrap_or(0))
        .collect();
    for (idx, cell) in cells.iter_mut().enumerate() {
        cell.resize(s_max[idx % n_z], PAD_SENTINEL);
    }
    Ok(PetalLut {
        spec: spec.clone(),
        offsets: cells,
        counts,
        s_max,
        half_extent: half,
    })
}

/// Raw gathered samples around one anchor, laid out zone-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPetals {
    pub n_a: usize,
    pub n_z: usize,
    pub channels: usize,
    pub theta_a: f64,
    pub s_max: Vec<usize>,
    /// Per zone: `[petal][channel][slot]`, `s_max[zone]` slots.
    pub values: Vec<Vec<f64>>,
    /// Per zone: `[petal][slot]`.
    pub valid: Vec<Vec<bool>>,
}

impl SampledPetals {
    pub fn value(&self, zone: usize, petal: usize, channel: usize, slot: usize) -> f64 {
        let s = self.s_max[zone];
        self.values[zone][(petal * self.channels + channel) * s + slot]
    }

    pub fn is_valid(&self, zone: usize, petal: usize, slot: usize) -> bool {
        self.valid[zone][petal * self.s_max[zone] + slot]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().flatten().filter(|&&v| v).count()
    }
}

/// Gathers map values at `anchor + offset` for every LUT slot. Pad slots
/// and offsets falling off the map are zero and marked invalid.
pub fn sample_petals(map: &FeatureMap, anchor: (i64, i64), lut: &PetalLut) -> Result<SampledPetals> {
    map.check_anchor(anchor)?;
    let (n_a, n_z, ch) = (lut.n_a(), lut.n_z(), map.channels);
    let mut values = Vec::with_capacity(n_z);
    let mut valid = Vec::with_capacity(n_z);
    for j in 0..n_z {
        let s = lut.s_max[j];
        let mut zv = vec![0.0; n_a * ch * s];
        let mut zm = vec![false; n_a * s];
        for i in 0..n_a {
            for (slot, off) in lut.cell(i, j).iter().enumerate() {
                if *off == PAD_SENTINEL {
                    continue;
                }
                let Some((y, x)) = map.offset_pixel(anchor, *off) else {
                    continue;
                };
                zm[i * s + slot] = true;
                for c in 0..ch {
                    zv[(i * ch + c) * s + slot] = map.get(c, y, x) as f64;
                }
            }
        }
        values.push(zv);
        valid.push(zm);
    }
    Ok(SampledPetals {
        n_a,
        n_z,
        channels: ch,
        theta_a: lut.spec.theta_a,
        s_max: lut.s_max.clone(),
        values,
        valid,
    })
}

const LUT_MAGIC: &[u8; 4] = b"PLUT";
const LUT_VERSION: u16 = 1;

impl PetalLut {
    /// Writes the LUT container: magic, version, spec fields, `s_max`, then
    /// per `(petal, zone)` the count followed by `s_max[zone]` offset pairs.
    /// All integers and floats are little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let spec = &self.spec;
        w.write_all(LUT_MAGIC)?;
        w.write_all(&LUT_VERSION.to_le_bytes())?;
        w.write_all(&(spec.level_index as u32).to_le_bytes())?;
        w.write_all(&spec.theta_a.to_le_bytes())?;
        w.write_all(&(spec.n_a as u32).to_le_bytes())?;
        w.write_all(&(spec.n_z() as u32).to_le_bytes())?;
        w.write_all(&spec.ground_res.to_le_bytes())?;
        for b in &spec.zone_bounds_m {
            w.write_all(&b.to_le_bytes())?;
        }
        w.write_all(&(self.half_extent as u32).to_le_bytes())?;
        for &s in &self.s_max {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        for (idx, cell) in self.offsets.iter().enumerate() {
            w.write_all(&(self.counts[idx] as u32).to_le_bytes())?;
            for off in cell {
                w.write_all(&off[0].to_le_bytes())?;
                w.write_all(&off[1].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != LUT_MAGIC {
            return Err(Error::Format(format!("bad LUT magic {magic:?}")));
        }
        let version = read_u16(&mut r)?;
        if version != LUT_VERSION {
            return Err(Error::Format(format!("unsupported LUT version {version}")));
        }
        let level_index = read_u32(&mut r)? as usize;
        let theta_a = read_f64(&mut r)?;
        let n_a = read_u32(&mut r)? as usize;
        let n_z = read_u32(&mut r)? as usize;
        let ground_res = read_f64(&mut r)?;
        let zone_bounds_m = (0..n_z).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let spec = PetalSpec {
            level_index,
            theta_a,
            n_a,
            zone_bounds_m,
            ground_res,
        };
        spec.validate()
            .map_err(|e| Error::Format(format!("invalid LUT spec: {e}")))?;
        let half_extent = read_u32(&mut r)? as i32;
        let s_max = (0..n_z).map(|_| read_u32(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let mut offsets = Vec::with_capacity(n_a * n_z);
        let mut counts = Vec::with_capacity(n_a * n_z);
        for idx in 0..n_a * n_z {
            let count = read_u32(&mut r)? as usize;
            let s = s_max[idx % n_z];
            if count > s {
                return Err(Error::Format(format!("cell {idx}: count {count} exceeds s_max {s}")));
            }
            let mut cell = Vec::with_capacity(s);
            for _ in 0..s {
                let dy = read_i32(&mut r)?;
                let dx = read_i32(&mut r)?;
                cell.push([dy, dx]);
            }
            counts.push(count);
            offsets.push(cell);
        }
        Ok(PetalLut {
            spec,
            offsets,
            counts,
            s_max,
            half_extent,
        })
    }
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_i32<R: Read>(r: &mut R) -> Result<i32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(i32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMap;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn south_pixel_points_to_zero() {
        let g = pixel_geometry(5, 0);
        for a in g.corner_angles {
            assert!(crate::angle::angle_distance(a, 0.0) < 7.0, "{a}");
        }
        // arc crosses the branch cut and is unwrapped
        assert!(g.angle_range.0 > 350.0 && g.angle_range.1 > 360.0);
        assert!(g.arc_width() < 15.0);
        assert!(close(g.dist_range.0, 4.5f64.hypot(0.5), 1e-12));
        assert!(close(g.dist_range.1, 5.5f64.hypot(0.5), 1e-12));
    }

    #[test]
    fn east_pixel_points_to_ninety() {
        let g = pixel_geometry(0, 5);
        for a in g.corner_angles {
            assert!((a - 90.0).abs() < 7.0);
        }
        assert!(g.angle_range.0 < 90.0 && g.angle_range.1 > 90.0);
    }

    #[test]
    fn oblique_pixel_matches_corner_evaluation() {
        let g = pixel_geometry(3, 4);
        let center = crate::angle::azimuth(3.0, 4.0);
        assert!(close(center, 53.130_102_354_155_98, 1e-9));
        // independent evaluation of the four corners
        let corners: [(f64, f64); 4] = [(3.5, 3.5), (3.5, 4.5), (2.5, 3.5), (2.5, 4.5)];
        for (k, (cy, cx)) in corners.iter().enumerate() {
            let a = crate::angle::wrap_360(cx.atan2(*cy).to_degrees());
            assert!(close(g.corner_angles[k], a, 1e-12));
            assert!(close(g.corner_dists[k], (cy * cy + cx * cx).sqrt(), 1e-12));
        }
        let lo = g.corner_angles.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = g.corner_angles.iter().copied().fold(0.0, f64::max);
        assert_eq!(g.angle_range, (lo, hi));
    }

    #[test]
    fn anchor_pixel_is_full_circle() {
        let g = pixel_geometry(0, 0);
        assert!(g.is_anchor());
    }

    #[test]
    fn overlap_cases() {
        let mut g = pixel_geometry(30, 0);
        // fully inside petal [350, 370) and a wide zone
        let ov = petal_overlap(&g, (350.0, 370.0), (0.0, 100.0));
        assert!(close(ov.contr, g.arc_width() / 20.0, 1e-12));
        assert!(close(ov.value, 1.0, 1e-12));

        let ov = petal_overlap(&g, (90.0, 100.0), (0.0, 100.0));
        assert_eq!((ov.contr, ov.value), (0.0, 0.0));

        g.angle_range = (8.0, 14.0);
        let ov = petal_overlap(&g, (10.0, 20.0), (0.0, 100.0));
        assert!(close(ov.contr, 0.4, 1e-12));
        assert!(close(ov.value, 4.0 / 6.0, 1e-12));
    }

    #[test]
    fn acceptance_truth_table() {
        assert!(accept_pixel(0.6, 0.3, 0.4));
        assert!(!accept_pixel(0.1, 0.9, 0.0));
        assert!(accept_pixel(0.4, 0.55, 0.2));
        assert!(!accept_pixel(0.4, 0.45, 0.2));
        assert!(accept_pixel(0.2, 0.85, 0.1));
    }

    #[test]
    fn lut_rejects_sub_pixel_radius() {
        let spec = PetalSpec::new(0, 90.0, vec![0.5], 1.0).unwrap();
        assert!(matches!(build_lut(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn spec_validation() {
        assert!(PetalSpec::new(0, 7.0, vec![1.0], 1.0).is_err());
        assert!(PetalSpec::new(0, 10.0, vec![2.0, 1.0], 1.0).is_err());
        assert!(PetalSpec::new(0, 10.0, vec![2.0], 0.0).is_err());
        assert_eq!(PetalSpec::new(0, 2.5, vec![2.0], 1.0).unwrap().n_a, 144);
    }

    #[test]
    fn quarter_petals_in_three_by_three() {
        // brute force over the 3x3 neighbourhood with the acceptance rule
        let spec = PetalSpec::new(0, 90.0, vec![1.5], 1.0).unwrap();
        let lut = build_lut(&spec).unwrap();
        for i in 0..4 {
            let mut expected = Vec::new();
            for dy in -2..=2 {
                for dx in -2..=2 {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let g = pixel_geometry(dy, dx);
                    let ov = petal_overlap(&g, (90.0 * i as f64, 90.0 * (i + 1) as f64), (0.0, 1.5));
                    if accept_pixel(ov.contr, ov.value, ov.dist_overlap) {
                        expected.push([dy, dx]);
                    }
                }
            }
            assert_eq!(lut.samples(i, 0), expected.as_slice(), "petal {i}");
        }
        // petal 0 spans 0..90 deg: south neighbour and south-east diagonal
        assert!(lut.contains(0, 0, 1, 0));
        assert!(lut.contains(0, 0, 1, 1));
        assert!(!lut.contains(0, 0, 1, -1));
        assert!(lut.contains(3, 0, 1, -1));
        assert!(!lut.contains(0, 0, -1, 0));
    }

    #[test]
    fn lut_padding_and_determinism() {
        let spec = PetalSpec::new(0, 10.0, vec![8.0, 20.0], 0.78344).unwrap();
        let a = build_lut(&spec).unwrap();
        let b = build_lut(&spec).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        for i in 0..a.n_a() {
            for j in 0..a.n_z() {
                let cell = a.cell(i, j);
                assert_eq!(cell.len(), a.s_max[j]);
                assert!(cell[a.counts[i * a.n_z() + j]..].iter().all(|o| *o == PAD_SENTINEL));
            }
        }
        let back = PetalLut::read_from(a.to_bytes().as_slice()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn lut_reader_rejects_garbage() {
        assert!(matches!(PetalLut::read_from(&b"NOPE\x01\x00"[..]), Err(Error::Format(_))));
    }

    #[test]
    fn constant_map_samples() {
        let spec = PetalSpec::new(0, 30.0, vec![3.0], 1.0).unwrap();
        let lut = build_lut(&spec).unwrap();
        let map = FeatureMap::filled(2, 20, 20, 0.25, Some(1.0));
        let s = sample_petals(&map, (10, 10), &lut).unwrap();
        for j in 0..s.n_z {
            for i in 0..s.n_a {
                for slot in 0..s.s_max[j] {
                    let expected = if s.is_valid(j, i, slot) { 0.25 } else { 0.0 };
                    for c in 0..2 {
                        assert_eq!(s.value(j, i, c, slot), expected);
                    }
                }
            }
        }
        assert_eq!(s.valid_count(), lut.total_samples());
    }

    #[test]
    fn corner_anchor_masks_outside() {
        let spec = PetalSpec::new(0, 30.0, vec![3.0], 1.0).unwrap();
        let lut = build_lut(&spec).unwrap();
        let map = FeatureMap::filled(1, 10, 10, 1.0, Some(1.0));
        let s = sample_petals(&map, (0, 0), &lut).unwrap();
        let inside = (0..lut.n_a())
            .flat_map(|i| lut.samples(i, 0).iter())
            .filter(|o| o[0] >= 0 && o[1] >= 0)
            .count();
        assert_eq!(s.valid_count(), inside);
        assert!(inside < lut.total_samples());
        assert!(matches!(sample_petals(&map, (10, 0), &lut), Err(Error::Bounds { .. })));
    }

    #[test]
    fn impulse_lands_in_accepting_cells() {
        let spec = PetalSpec::new(0, 10.0, vec![3.0, 7.0], 1.0).unwrap();
        let lut = build_lut(&spec).unwrap();
        let mut map = FeatureMap::zeros(1, 30, 30, Some(1.0));
        map.set(0, 15 + 5, 15, 1.0);
        let s = sample_petals(&map, (15, 15), &lut).unwrap();
        for j in 0..s.n_z {
            for i in 0..s.n_a {
                let hit = (0..s.s_max[j]).any(|slot| s.value(j, i, 0, slot) != 0.0);
                assert_eq!(hit, lut.contains(i, j, 5, 0), "petal {i} zone {j}");
            }
        }
    }
}
