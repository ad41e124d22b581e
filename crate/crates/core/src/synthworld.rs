//! Seeded synthetic scenes with mutually consistent overhead and street
//! feature maps and a known pose.
//!
//! The street view is rendered from the same petal LUT the search uses, so
//! every mismatch between the two views comes from pose, quantization or
//! added noise, never from appearance modeling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_360;
use crate::error::{config, Result};
use crate::features::{satellite_feature, FeatureMap};
use crate::geometry::PetalLut;

/// Meters per feature pixel: 0.19586 m image pixels at feature stride 4,
/// which puts a 32 px anchor spacing at 25.07 m.
pub const DEFAULT_GROUND_RES: f64 = 0.78344;

/// RNG stream ids, so scene content and poses never share draws.
const STREAM_SCENE: u64 = 0;
const STREAM_POSE: u64 = 1;
const STREAM_SAT_NOISE: u64 = 2;
const STREAM_STREET_NOISE: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Per-instance seed; set by the caller, never read from config files.
    #[serde(skip)]
    pub seed: u64,
    pub channels: usize,
    pub map_side: usize,
    /// Gaussian blobs per channel.
    pub blob_count: usize,
    /// Blob standard deviation range in pixels.
    pub blob_sigma: (f64, f64),
    /// Minimum distance between blob centers of one channel, in pixels.
    pub blob_min_separation: f64,
    /// Line segments per channel.
    pub line_count: usize,
    /// Line profile standard deviation in pixels.
    pub line_width: f64,
    pub noise_sigma: f64,
    /// Street camera field of view in degrees.
    pub fov: f64,
    /// Maximum ground-truth offset from the map center per axis, meters.
    pub shift_max_m: f64,
    pub ground_res: f64,
    /// Absolute noise level of the orientation prior, degrees.
    pub prior_noise_deg: f64,
    /// Snap the pose to whole pixels and to the orientation grid.
    pub quantize: bool,
    /// Orientation grid step in degrees when quantizing.
    pub angle_step: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            seed: 0,
            channels: 8,
            map_side: 128,
            blob_count: 8,
            blob_sigma: (12.0, 20.0),
            blob_min_separation: 0.0,
            line_count: 0,
            line_width: 1.5,
            noise_sigma: 0.0,
            fov: 360.0,
            shift_max_m: 20.0,
            ground_res: DEFAULT_GROUND_RES,
            prior_noise_deg: 10.0,
            quantize: true,
            angle_step: 0.5,
        }
    }
}

impl SceneConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        SceneConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return config("scene.channels must be >= 1");
        }
        if self.map_side < 4 || !self.map_side.is_multiple_of(2) {
            return config(format!("scene.map_side must be even and >= 4, got {}", self.map_side));
        }
        if !(self.ground_res > 0.0) {
            return config("scene.ground_res must be positive");
        }
        let (lo, hi) = self.blob_sigma;
        if !(lo > 0.0 && hi >= lo) {
            return config(format!("scene.blob_sigma must satisfy 0 < lo <= hi, got {lo}..{hi}"));
        }
        if !(self.line_width > 0.0) {
            return config("scene.line_width must be positive");
        }
        if !(self.noise_sigma >= 0.0) || !(self.prior_noise_deg >= 0.0) {
            return config("noise levels must be >= 0");
        }
        if !(self.fov > 0.0 && self.fov <= 360.0) {
            return config(format!("scene.fov must be in (0, 360], got {}", self.fov));
        }
        if !(self.angle_step > 0.0) {
            return config("scene.angle_step must be positive");
        }
        let half_search_m = (self.map_side / 4) as f64 * self.ground_res;
        if !(self.shift_max_m >= 0.0) || self.shift_max_m > half_search_m {
            return config(format!(
                "scene.shift_max_m = {} exceeds the search half-width {half_search_m:.3} m",
                self.shift_max_m
            ));
        }
        Ok(())
    }

    pub fn shift_max_px(&self) -> f64 {
        self.shift_max_m / self.ground_res
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Ground-truth pose and the priors handed to the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `(y, x)` in feature pixels.
    pub gt_location: (f64, f64),
    pub gt_theta: f64,
    pub prior_location: (f64, f64),
    pub prior_theta: f64,
    /// `(S_x, S_y)` offset of the truth from the prior location, meters.
    pub shift_m: (f64, f64),
}

struct Blob {
    y: f64,
    x: f64,
    sigma: f64,
    amp: f64,
}

struct Segment {
    a: (f64, f64),
    b: (f64, f64),
    amp: f64,
}

fn segment_distance(p: (f64, f64), s: &Segment) -> f64 {
    let (dy, dx) = (s.b.0 - s.a.0, s.b.1 - s.a.1);
    let len2 = dy * dy + dx * dx;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - s.a.0) * dy + (p.1 - s.a.1) * dx) / len2).clamp(0.0, 1.0)
    };
    (p.0 - s.a.0 - t * dy).hypot(p.1 - s.a.1 - t * dx)
}

/// Noise-free overhead map: per channel a sum of Gaussian blobs and soft
/// line segments, clipped to `[0, 1]`.
pub fn generate_scene(cfg: &SceneConfig) -> Result<FeatureMap> {
    cfg.validate()?;
    let mut rng = cfg.rng(STREAM_SCENE);
    let side = cfg.map_side;
    let mut map = FeatureMap::zeros(cfg.channels, side, side, Some(cfg.ground_res));
    for c in 0..cfg.channels {
        let mut blobs: Vec<Blob> = Vec::with_capacity(cfg.blob_count);
        let mut attempts = 0;
        while blobs.len() < cfg.blob_count {
            let y = rng.random_range(0.0..side as f64);
            let x = rng.random_range(0.0..side as f64);
            let sigma = rng.random_range(cfg.blob_sigma.0..=cfg.blob_sigma.1);
            let amp = rng.random_range(0.5..1.0);
            attempts += 1;
            let far = blobs
                .iter()
                .all(|b| (b.y - y).hypot(b.x - x) >= cfg.blob_min_separation);
            if far || attempts > 1000 * cfg.blob_count {
                blobs.push(Blob { y, x, sigma, amp });
            }
        }
        let segments: Vec<Segment> = (0..cfg.line_count)
            .map(|_| Segment {
                a: (rng.random_range(0.0..side as f64), rng.random_range(0.0..side as f64)),
                b: (rng.random_range(0.0..side as f64), rng.random_range(0.0..side as f64)),
                amp: rng.random_range(0.3..0.8),
            })
            .collect();
        let lw2 = 2.0 * cfg.line_width * cfg.line_width;
        for y in 0..side {
            for x in 0..side {
                let p = (y as f64, x as f64);
                let mut v: f64 = blobs
                    .iter()
                    .map(|b| {
                        let d2 = (p.0 - b.y).powi(2) + (p.1 - b.x).powi(2);
                        b.amp * (-d2 / (2.0 * b.sigma * b.sigma)).exp()
                    })
                    .sum();
                v += segments
                    .iter()
                    .map(|s| s.amp * (-segment_distance(p, s).powi(2) / lw2).exp())
                    .sum::<f64>();
                map.set(c, y, x, v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    Ok(map)
}

/// Satellite copy of a scene with i.i.d. Gaussian noise (clean copy when
/// `noise_sigma` is zero).
pub fn satellite_copy(scene: &FeatureMap, cfg: &SceneConfig) -> FeatureMap {
    add_noise(scene, cfg.noise_sigma, &mut cfg.rng(STREAM_SAT_NOISE))
}

fn add_noise(map: &FeatureMap, sigma: f64, rng: &mut ChaCha8Rng) -> FeatureMap {
    let mut out = map.clone();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
        for v in &mut out.data {
            *v += normal.sample(rng) as f32;
        }
    }
    out
}

/// Draws the ground-truth pose around the map center.
pub fn sample_pose(cfg: &SceneConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let mut rng = cfg.rng(STREAM_POSE);
    let c = (cfg.map_side / 2) as f64;
    let s = cfg.shift_max_px();
    let draw = |rng: &mut ChaCha8Rng| if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 };
    let (mut sy, mut sx) = (draw(&mut rng), draw(&mut rng));
    let mut gt_theta = rng.random_range(0.0..360.0);
    if cfg.quantize {
        sy = sy.round();
        sx = sx.round();
        gt_theta = wrap_360((gt_theta / cfg.angle_step).round() * cfg.angle_step);
    }
    let noise = if cfg.prior_noise_deg > 0.0 {
        rng.random_range(-cfg.prior_noise_deg..=cfg.prior_noise_deg)
    } else {
        0.0
    };
    Ok(GroundTruth {
        gt_location: (c + sy, c + sx),
        gt_theta,
        prior_location: (c, c),
        prior_theta: wrap_360(gt_theta + noise),
        shift_m: (sx * cfg.ground_res, sy * cfg.ground_res),
    })
}

/// Street rendering options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreetLayout {
    pub rows_per_zone: usize,
    /// Image columns per finest petal; one column spans `theta_a / cols`.
    pub cols_per_petal: usize,
    pub fov: f64,
}

/// Renders the street map seen from `gt` using the finest-level LUT.
///
/// Column `j` looks along azimuth `gt_theta + j * theta_a / cols_per_petal`
/// and carries the value of the satellite petal containing that azimuth, so
/// an orientation between petal borders becomes a column shift. Each zone
/// fills `rows_per_zone` rows, farthest zone on top. Parts of the disc
/// beyond the map edge are masked exactly as in satellite sampling.
pub fn render_street(
    scene: &FeatureMap,
    gt: &GroundTruth,
    lut: &PetalLut,
    layout: &StreetLayout,
    noise_sigma: f64,
    seed: u64,
) -> Result<FeatureMap> {
    let anchor = (gt.gt_location.0.round() as i64, gt.gt_location.1.round() as i64);
    scene.check_anchor(anchor)?;
    if layout.rows_per_zone == 0 || layout.cols_per_petal == 0 {
        return config("street layout needs at least one row per zone and column per petal");
    }
    let feat = satellite_feature(scene, anchor, lut)?;
    let theta_a = lut.spec.theta_a;
    let groups = layout.fov / theta_a;
    if (groups - groups.round()).abs() > 1e-9 || groups < 1.0 {
        return config(format!("FOV {} is not a whole number of {theta_a} deg petals", layout.fov));
    }
    let cpp = layout.cols_per_petal;
    let width = groups.round() as usize * cpp;
    let n_z = lut.n_z();
    let height = n_z * layout.rows_per_zone;
    let sub = theta_a / cpp as f64;
    let start = (wrap_360(gt.gt_theta) / sub).round() as usize;
    let n_sub = feat.n_a * cpp;

    let mut street = FeatureMap::zeros(scene.channels, height, width, None);
    for j in 0..width {
        let petal = ((start + j) % n_sub) / cpp;
        for c in 0..scene.channels {
            for z in 0..n_z {
                let v = feat.get(petal, c, z) as f32;
                let band = n_z - 1 - z;
                for r in 0..layout.rows_per_zone {
                    street.set(c, band * layout.rows_per_zone + r, j, v);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_STREET_NOISE);
    Ok(add_noise(&street, noise_sigma, &mut rng))
}

/// A complete generated instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub scene: FeatureMap,
    pub satellite: FeatureMap,
    pub street: FeatureMap,
    pub truth: GroundTruth,
}

/// Scene, noisy satellite copy, pose and street view for one seed.
pub fn generate_instance(cfg: &SceneConfig, finest: &PetalLut, layout: &StreetLayout) -> Result<Instance> {
    let scene = generate_scene(cfg)?;
    let satellite = satellite_copy(&scene, cfg);
    let truth = sample_pose(cfg)?;
    let street = render_street(&scene, &truth, finest, layout, cfg.noise_sigma, cfg.seed)?;
    Ok(Instance {
        scene,
        satellite,
        street,
        truth,
    })
}
