//! Feature maps and zone-pooled petal features for both views.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{config, shape, Error, Result};
use crate::geometry::{PetalLut, SampledPetals};

/// Dense `C x H x W` feature grid, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
    /// Meters per pixel for overhead maps, `None` for street maps.
    pub ground_res: Option<f64>,
}

impl FeatureMap {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
        ground_res: Option<f64>,
    ) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return shape(format!("feature map dims must be >= 1, got {channels}x{height}x{width}"));
        }
        if data.len() != channels * height * width {
            return shape(format!(
                "expected {} values for {channels}x{height}x{width}, got {}",
                channels * height * width,
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("feature map contains non-finite values".into()));
        }
        Ok(FeatureMap {
            channels,
            height,
            width,
            data,
            ground_res,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize, ground_res: Option<f64>) -> Self {
        Self::filled(channels, height, width, 0.0, ground_res)
    }

    pub fn filled(
        channels: usize,
        height: usize,
        width: usize,
        value: f32,
        ground_res: Option<f64>,
    ) -> Self {
        FeatureMap {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
            ground_res,
        }
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn contains(&self, y: i64, x: i64) -> bool {
        y >= 0 && x >= 0 && (y as usize) < self.height && (x as usize) < self.width
    }

    pub fn check_anchor(&self, anchor: (i64, i64)) -> Result<()> {
        if self.contains(anchor.0, anchor.1) {
            Ok(())
        } else {
            Err(Error::Bounds {
                y: anchor.0,
                x: anchor.1,
                height: self.height,
                width: self.width,
            })
        }
    }

    #[inline]
    pub(crate) fn offset_pixel(&self, anchor: (i64, i64), off: [i32; 2]) -> Option<(usize, usize)> {
        let y = anchor.0 + off[0] as i64;
        let x = anchor.1 + off[1] as i64;
        self.contains(y, x).then_some((y as usize, x as usize))
    }

    /// Center pixel, `(H / 2, W / 2)`.
    pub fn center(&self) -> (i64, i64) {
        ((self.height / 2) as i64, (self.width / 2) as i64)
    }
}

const FMAP_MAGIC: &[u8; 4] = b"FMAP";
const FMAP_VERSION: u16 = 1;

impl FeatureMap {
    /// Writes `FMAP`, version u16, u32 C/H/W, f32 ground_res (0 = none),
    /// then the `C x H x W` f32 payload, all little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FMAP_MAGIC)?;
        w.write_all(&FMAP_VERSION.to_le_bytes())?;
        for d in [self.channels, self.height, self.width] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&(self.ground_res.unwrap_or(0.0) as f32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 22];
        r.read_exact(&mut head)
            .map_err(|e| Error::Format(format!("truncated FMAP header: {e}")))?;
        if &head[0..4] != FMAP_MAGIC {
            return Err(Error::Format(format!("bad FMAP magic {:?}", &head[0..4])));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != FMAP_VERSION {
            return Err(Error::Format(format!("unsupported FMAP version {version}")));
        }
        let dim = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap()) as usize;
        let (c, h, w) = (dim(6), dim(10), dim(14));
        let res = f32::from_le_bytes(head[18..22].try_into().unwrap());
        let n = c
            .checked_mul(h)
            .and_then(|v| v.checked_mul(w))
            .ok_or_else(|| Error::Format("FMAP dims overflow".into()))?;
        let mut payload = vec![0u8; n * 4];
        r.read_exact(&mut payload)
            .map_err(|e| Error::Format(format!("truncated FMAP payload: {e}")))?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let ground_res = (res != 0.0).then_some(res as f64);
        FeatureMap::new(c, h, w, data, ground_res)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViewTag {
    Street,
    Satellite,
}

/// Polar descriptor of one observation point: `[petal][channel][zone]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PetalFeature {
    pub n_a: usize,
    pub channels: usize,
    pub n_z: usize,
    pub theta_a: f64,
    pub fov_deg: f64,
    pub view: ViewTag,
    pub normalized: bool,
    pub data: Vec<f64>,
}

impl PetalFeature {
    pub fn zeros(n_a: usize, channels: usize, n_z: usize, theta_a: f64, view: ViewTag) -> Self {
        PetalFeature {
            n_a,
            channels,
            n_z,
            theta_a,
            fov_deg: n_a as f64 * theta_a,
            view,
            normalized: false,
            data: vec![0.0; n_a * channels * n_z],
        }
    }

    #[inline]
    pub fn idx(&self, a: usize, c: usize, z: usize) -> usize {
        (a * self.channels + c) * self.n_z + z
    }

    #[inline]
    pub fn get(&self, a: usize, c: usize, z: usize) -> f64 {
        self.data[self.idx(a, c, z)]
    }

    /// One petal's `C x N_z` block.
    pub fn petal(&self, a: usize) -> &[f64] {
        let n = self.channels * self.n_z;
        &self.data[a * n..(a + 1) * n]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Circular shift of the petal axis: `out[a] = self[(a + k) mod n_a]`.
    pub fn rotate(&self, k: i64) -> PetalFeature {
        let n = self.channels * self.n_z;
        let mut out = self.clone();
        for a in 0..self.n_a {
            let src = (a as i64 + k).rem_euclid(self.n_a as i64) as usize;
            out.data[a * n..(a + 1) * n].copy_from_slice(self.petal(src));
        }
        out
    }

    /// Keeps the first `n` petals, e.g. to restrict to a camera FOV.
    pub fn crop(&self, n: usize) -> Result<PetalFeature> {
        if n == 0 || n > self.n_a {
            return shape(format!("cannot crop {} petals to {n}", self.n_a));
        }
        let block = self.channels * self.n_z;
        Ok(PetalFeature {
            n_a: n,
            fov_deg: n as f64 * self.theta_a,
            data: self.data[..n * block].to_vec(),
            ..self.clone()
        })
    }
}

/// Turns raw samples / street columns into petal features.
///
/// Zone-mean pooling is the only implementation here; the trait leaves room
/// for a learned processor with the same inputs.
pub trait PetalAggregator {
    fn satellite(&self, samples: &SampledPetals) -> PetalFeature;
    fn street(&self, columns: &GroupedColumns, rows: &ZoneRowMap) -> Result<PetalFeature>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZoneMeanPooling;

impl PetalAggregator for ZoneMeanPooling {
    fn satellite(&self, samples: &SampledPetals) -> PetalFeature {
        aggregate_satellite(samples)
    }

    fn street(&self, columns: &GroupedColumns, rows: &ZoneRowMap) -> Result<PetalFeature> {
        aggregate_street(columns, rows)
    }
}

/// Mean over valid slots per (petal, channel, zone); empty cells are zero.
pub fn aggregate_satellite(samples: &SampledPetals) -> PetalFeature {
    let mut out = PetalFeature::zeros(
        samples.n_a,
        samples.channels,
        samples.n_z,
        samples.theta_a,
        ViewTag::Satellite,
    );
    for j in 0..samples.n_z {
        let s = samples.s_max[j];
        for i in 0..samples.n_a {
            let n_valid = (0..s).filter(|&slot| samples.is_valid(j, i, slot)).count();
            if n_valid == 0 {
                continue;
            }
            for c in 0..samples.channels {
                let sum: f64 = (0..s)
                    .filter(|&slot| samples.is_valid(j, i, slot))
                    .map(|slot| samples.value(j, i, c, slot))
                    .sum();
                let k = out.idx(i, c, j);
                out.data[k] = sum / n_valid as f64;
            }
        }
    }
    out
}

/// Fused gather + zone-mean of the satellite map around `anchor`; equal to
/// `aggregate_satellite(sample_petals(..))` without materializing samples.
pub fn satellite_feature(map: &FeatureMap, anchor: (i64, i64), lut: &PetalLut) -> Result<PetalFeature> {
    map.check_anchor(anchor)?;
    let (n_a, n_z, ch) = (lut.n_a(), lut.n_z(), map.channels);
    let mut out = PetalFeature::zeros(n_a, ch, n_z, lut.spec.theta_a, ViewTag::Satellite);
    let h = lut.half_extent as i64;
    let interior = anchor.0 >= h
        && anchor.1 >= h
        && anchor.0 + h < map.height as i64
        && anchor.1 + h < map.width as i64;
    let plane = map.height * map.width;
    let base = anchor.0 * map.width as i64 + anchor.1;
    let mut sums = vec![0.0f64; ch];
    for i in 0..n_a {
        for j in 0..n_z {
            sums.iter_mut().for_each(|s| *s = 0.0);
            let mut n = 0usize;
            for off in lut.samples(i, j) {
                let p = if interior {
                    (base + off[0] as i64 * map.width as i64 + off[1] as i64) as usize
                } else {
                    match map.offset_pixel(anchor, *off) {
                        Some((y, x)) => y * map.width + x,
                        None => continue,
                    }
                };
                n += 1;
                for (c, s) in sums.iter_mut().enumerate() {
                    *s += map.data[c * plane + p] as f64;
                }
            }
            if n > 0 {
                for (c, s) in sums.iter().enumerate() {
                    let k = out.idx(i, c, j);
                    out.data[k] = s / n as f64;
                }
            }
        }
    }
    Ok(out)
}

/// Street columns regrouped into petal-width bands: `[group][c][row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedColumns {
    pub n_groups: usize,
    pub w_a: usize,
    pub channels: usize,
    pub height: usize,
    pub theta_a: f64,
    pub fov_deg: f64,
    pub data: Vec<f64>,
}

impl GroupedColumns {
    #[inline]
    pub fn get(&self, g: usize, c: usize, row: usize, col: usize) -> f64 {
        self.data[((g * self.channels + c) * self.height + row) * self.w_a + col]
    }
}

/// Splits a street map into `fov / theta_a` groups of adjacent columns.
/// Group 0 starts at the image's left edge.
pub fn split_street_columns(street: &FeatureMap, theta_a: f64, fov: f64) -> Result<GroupedColumns> {
    let groups = fov / theta_a;
    let n_groups = groups.round();
    if !(theta_a > 0.0) || (groups - n_groups).abs() > 1e-9 || n_groups < 1.0 {
        return config(format!("FOV {fov} is not a whole number of {theta_a} deg petals"));
    }
    let n_groups = n_groups as usize;
    if !street.width.is_multiple_of(n_groups) {
        return config(format!(
            "street width {} is not divisible into {n_groups} column groups",
            street.width
        ));
    }
    let w_a = street.width / n_groups;
    let (ch, h) = (street.channels, street.height);
    let mut data = Vec::with_capacity(ch * h * street.width);
    for g in 0..n_groups {
        for c in 0..ch {
            for row in 0..h {
                for col in 0..w_a {
                    data.push(street.get(c, row, g * w_a + col) as f64);
                }
            }
        }
    }
    Ok(GroupedColumns {
        n_groups,
        w_a,
        channels: ch,
        height: h,
        theta_a,
        fov_deg: fov,
        data,
    })
}

/// Assignment of street image rows to zones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZoneRowMap {
    pub n_z: usize,
    pub zone_of_row: Vec<usize>,
}

impl ZoneRowMap {
    /// Equal horizontal bands, top band = farthest zone.
    pub fn equal_bands(height: usize, n_z: usize) -> Result<Self> {
        if n_z == 0 || height < n_z {
            return config(format!("cannot split {height} rows into {n_z} zones"));
        }
        let zone_of_row = (0..height)
            .map(|r| n_z - 1 - (r * n_z / height))
            .collect();
        Ok(ZoneRowMap { n_z, zone_of_row })
    }
}

/// Street features for every petal width, with equal zone bands.
pub fn street_features(street: &FeatureMap, theta_per_level: &[f64], fov: f64, n_z: usize) -> Result<Vec<PetalFeature>> {
    let rows = ZoneRowMap::equal_bands(street.height, n_z)?;
    theta_per_level
        .iter()
        .map(|&t| aggregate_street(&split_street_columns(street, t, fov)?, &rows))
        .collect()
}

/// Mean over each group's pixels whose rows fall into each zone.
pub fn aggregate_street(columns: &GroupedColumns, rows: &ZoneRowMap) -> Result<PetalFeature> {
    if rows.zone_of_row.len() != columns.height {
        return shape(format!(
            "row map covers {} rows, street has {}",
            rows.zone_of_row.len(),
            columns.height
        ));
    }
    let mut rows_in_zone = vec![0usize; rows.n_z];
    for &z in &rows.zone_of_row {
        if z >= rows.n_z {
            return config(format!("row assigned to zone {z} of {}", rows.n_z));
        }
        rows_in_zone[z] += 1;
    }
    if let Some(z) = rows_in_zone.iter().position(|&n| n == 0) {
        return config(format!("zone {z} receives no street rows"));
    }
    let mut out = PetalFeature::zeros(
        columns.n_groups,
        columns.channels,
        rows.n_z,
        columns.theta_a,
        ViewTag::Street,
    );
    out.fov_deg = columns.fov_deg;
    for g in 0..columns.n_groups {
        for c in 0..columns.channels {
            for (row, &z) in rows.zone_of_row.iter().enumerate() {
                let s: f64 = (0..columns.w_a).map(|col| columns.get(g, c, row, col)).sum();
                let k = out.idx(g, c, z);
                out.data[k] += s;
            }
            for z in 0..rows.n_z {
                let k = out.idx(g, c, z);
                out.data[k] /= (rows_in_zone[z] * columns.w_a) as f64;
            }
        }
    }
    Ok(out)
}

/// Outcome of [`normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormStatus {
    Unit,
    /// Input was all zeros and is returned unchanged.
    ZeroInput,
}

/// Scales the flattened feature to unit L2 norm.
pub fn normalize(f: &PetalFeature) -> (PetalFeature, NormStatus) {
    let n = f.norm();
    if n == 0.0 {
        log::debug!("normalize: zero {:?} feature left unchanged", f.view);
        return (f.clone(), NormStatus::ZeroInput);
    }
    let mut out = f.clone();
    out.data.iter_mut().for_each(|v| *v /= n);
    out.normalized = true;
    (out, NormStatus::Unit)
}
