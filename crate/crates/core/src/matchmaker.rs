//! Orientation matching between a street petal feature and satellite anchor
//! features: circular cross-correlation, periodic cubic smoothing and the
//! Gaussian prior-angle mixer.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::angle::{angle_distance, wrap_180};
use crate::error::{config, shape, Result};
use crate::features::PetalFeature;

/// Scores over circular angular shifts.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityCurve {
    pub values: Vec<f64>,
    /// Degrees per entry; `values.len() * bin_width == 360`.
    pub bin_width: f64,
}

impl SimilarityCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the maximum; ties go to the smallest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Orientation prior mixed into every similarity curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Prior azimuth in degrees.
    pub p_theta: f64,
    /// Absolute noise level of the prior in degrees. Zero means the
    /// orientation is taken as known (see [`best_orientation`]).
    pub delta_p: f64,
    /// Amplitude weight.
    pub rho_p: f64,
    /// Multiplier on the noise level.
    pub delta_scale: f64,
}

impl PriorConfig {
    pub fn new(p_theta: f64, delta_p: f64) -> Self {
        PriorConfig {
            p_theta,
            delta_p,
            rho_p: 0.05,
            delta_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_p >= 0.0) || !(self.rho_p >= 0.0) || !(self.delta_scale > 0.0) {
            return config(format!("invalid prior parameters {self:?}"));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        0.5 * self.delta_scale * self.delta_p
    }

    fn is_exact(&self) -> bool {
        self.delta_p == 0.0
    }
}

fn check_pair(street: &PetalFeature, sat: &PetalFeature) -> Result<()> {
    if street.channels != sat.channels || street.n_z != sat.n_z {
        return shape(format!(
            "street is {}ch x {}z, satellite is {}ch x {}z",
            street.channels, street.n_z, sat.channels, sat.n_z
        ));
    }
    if (street.theta_a - sat.theta_a).abs() > 1e-9 {
        return shape(format!(
            "petal widths differ: street {} vs satellite {}",
            street.theta_a, sat.theta_a
        ));
    }
    if street.n_a > sat.n_a || street.n_a == 0 {
        return shape(format!(
            "street has {} petals, satellite {}",
            street.n_a, sat.n_a
        ));
    }
    Ok(())
}

/// Direct circular correlation:
/// `values[w] = sum_{a,c,z} street[a,c,z] * sat[(a + w) mod N_sat, c, z]`.
pub fn circular_correlate(street: &PetalFeature, sat: &PetalFeature) -> Result<SimilarityCurve> {
    check_pair(street, sat)?;
    let n = sat.n_a;
    let values = (0..n)
        .map(|w| {
            (0..street.n_a)
                .map(|a| {
                    street
                        .petal(a)
                        .iter()
                        .zip(sat.petal((a + w) % n))
                        .map(|(x, y)| x * y)
                        .sum::<f64>()
                })
                .sum()
        })
        .collect();
    Ok(SimilarityCurve {
        values,
        bin_width: 360.0 / n as f64,
    })
}

/// Frequency-domain circular correlation; the street feature is zero-padded
/// to the satellite petal count.
pub fn circular_correlate_fft(street: &PetalFeature, sat: &PetalFeature) -> Result<SimilarityCurve> {
    check_pair(street, sat)?;
    StreetSpectrum::new(street, sat.n_a).correlate(sat)
}

/// Street feature transformed once for repeated correlation.
#[derive(Clone)]
pub struct StreetSpectrum {
    n: usize,
    street_n_a: usize,
    channels: usize,
    n_z: usize,
    theta_a: f64,
    /// conj(FFT(street)) per `(c, z)`, each of length `n`.
    conj: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for StreetSpectrum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StreetSpectrum")
            .field("n", &self.n)
            .field("street_n_a", &self.street_n_a)
            .finish_non_exhaustive()
    }
}

impl StreetSpectrum {
    pub fn new(street: &PetalFeature, n_sat: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n_sat);
        let inverse = planner.plan_fft_inverse(n_sat);
        let lanes = street.channels * street.n_z;
        let mut buf = vec![Complex::new(0.0, 0.0); lanes * n_sat];
        for a in 0..street.n_a.min(n_sat) {
            for (lane, v) in street.petal(a).iter().enumerate() {
                buf[lane * n_sat + a].re = *v;
            }
        }
        forward.process(&mut buf);
        buf.iter_mut().for_each(|v| *v = v.conj());
        StreetSpectrum {
            n: n_sat,
            street_n_a: street.n_a,
            channels: street.channels,
            n_z: street.n_z,
            theta_a: street.theta_a,
            conj: buf,
            forward,
            inverse,
        }
    }

    pub fn correlate(&self, sat: &PetalFeature) -> Result<SimilarityCurve> {
        if sat.n_a != self.n
            || sat.channels != self.channels
            || sat.n_z != self.n_z
            || (sat.theta_a - self.theta_a).abs() > 1e-9
        {
            return shape(format!(
                "satellite feature {}x{}x{} does not match prepared street ({} bins, {}ch, {}z)",
                sat.n_a, sat.channels, sat.n_z, self.n, self.channels, self.n_z
            ));
        }
        let n = self.n;
        let lanes = self.channels * self.n_z;
        let mut buf = vec![Complex::new(0.0, 0.0); lanes * n];
        for a in 0..n {
            for (lane, v) in sat.petal(a).iter().enumerate() {
                buf[lane * n + a].re = *v;
            }
        }
        self.forward.process(&mut buf);
        let mut acc = vec![Complex::new(0.0, 0.0); n];
        for lane in 0..lanes {
            let s = &self.conj[lane * n..(lane + 1) * n];
            let t = &buf[lane * n..(lane + 1) * n];
            for k in 0..n {
                acc[k] += s[k] * t[k];
            }
        }
        self.inverse.process(&mut acc);
        let scale = 1.0 / n as f64;
        Ok(SimilarityCurve {
            values: acc.iter().map(|v| v.re * scale).collect(),
            bin_width: 360.0 / n as f64,
        })
    }
}

/// Second derivatives of the periodic cubic spline through `y` at unit
/// spacing: `M[i-1] + 4 M[i] + M[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1])`.
fn periodic_spline_moments(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    match n {
        0 | 1 => return vec![0.0; n],
        2 => {
            let d = 6.0 * (y[1] - y[0]);
            return vec![d, -d];
        }
        _ => {}
    }
    let rhs: Vec<f64> = (0..n)
        .map(|i| 6.0 * (y[(i + 1) % n] - 2.0 * y[i] + y[(i + n - 1) % n]))
        .collect();
    // Sherman-Morrison on the cyclic system, corner entries both 1
    let gamma = -4.0;
    let mut diag = vec![4.0; n];
    diag[0] -= gamma;
    diag[n - 1] -= 1.0 / gamma;
    let x = solve_tridiagonal(&diag, &rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = 1.0;
    let z = solve_tridiagonal(&diag, &u);
    let fact = (x[0] + x[n - 1] / gamma) / (1.0 + z[0] + z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

/// Thomas algorithm with unit off-diagonals.
fn solve_tridiagonal(diag: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = 1.0 / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - c[i - 1];
        c[i] = 1.0 / m;
        d[i] = (rhs[i] - d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Upsamples a circular curve by `factor` with a periodic cubic spline.
/// Original samples are reproduced at every `factor`-th output position.
pub fn smooth_curve(curve: &SimilarityCurve, factor: usize) -> Result<SimilarityCurve> {
    if factor == 0 {
        return config("smoothing factor must be >= 1");
    }
    if factor == 1 {
        return Ok(curve.clone());
    }
    let y = &curve.values;
    let n = y.len();
    let m = periodic_spline_moments(y);
    let mut values = Vec::with_capacity(n * factor);
    for i in 0..n {
        let (y0, y1) = (y[i], y[(i + 1) % n]);
        let (m0, m1) = (m[i], m[(i + 1) % n]);
        values.push(y0);
        for k in 1..factor {
            let t = k as f64 / factor as f64;
            let s = 1.0 - t;
            values.push(s * y0 + t * y1 + ((s * s * s - s) * m0 + (t * t * t - t) * m1) / 6.0);
        }
    }
    Ok(SimilarityCurve {
        values,
        bin_width: curve.bin_width / factor as f64,
    })
}

/// Wrapped Gaussian prior sampled on `len` bins of `bin_width` degrees.
pub fn prior_curve(cfg: &PriorConfig, len: usize, bin_width: f64) -> Result<SimilarityCurve> {
    cfg.validate()?;
    if (len as f64 * bin_width - 360.0).abs() > 1e-6 {
        return config(format!("{len} bins of {bin_width} deg do not cover 360 deg"));
    }
    let sigma = cfg.sigma();
    if sigma < 1e-6 {
        return config(format!("prior width {sigma} deg is too small"));
    }
    let peak = cfg.rho_p / (sigma * (2.0 * PI).sqrt());
    let values = (0..len)
        .map(|w| {
            let d = wrap_180(w as f64 * bin_width - cfg.p_theta);
            peak * (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    Ok(SimilarityCurve { values, bin_width })
}

/// Best shift of one anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    pub theta: f64,
    pub score: f64,
    pub index: usize,
}

/// Argmax of the (optionally prior-mixed) curve.
///
/// A prior with `delta_p == 0` pins the orientation to the bin nearest
/// `p_theta`; the score is then the unmixed curve value there.
pub fn best_orientation(curve: &SimilarityCurve, prior: Option<&PriorConfig>) -> Result<Orientation> {
    if curve.is_empty() {
        return config("empty similarity curve");
    }
    match prior {
        Some(p) if p.is_exact() => {
            p.validate()?;
            let index = nearest_bin(p.p_theta, curve.len(), curve.bin_width);
            Ok(Orientation {
                theta: index as f64 * curve.bin_width,
                score: curve.values[index],
                index,
            })
        }
        Some(p) => {
            let pc = prior_curve(p, curve.len(), curve.bin_width)?;
            Ok(mixed_argmax(curve, Some(&pc.values)))
        }
        None => Ok(mixed_argmax(curve, None)),
    }
}

fn nearest_bin(theta: f64, len: usize, bin_width: f64) -> usize {
    (0..len)
        .min_by(|&a, &b| {
            angle_distance(a as f64 * bin_width, theta)
                .total_cmp(&angle_distance(b as f64 * bin_width, theta))
        })
        .unwrap_or(0)
}

fn mixed_argmax(curve: &SimilarityCurve, prior: Option<&[f64]>) -> Orientation {
    let score_at = |i: usize| curve.values[i] + prior.map_or(0.0, |p| p[i]);
    let mut index = 0;
    let mut score = score_at(0);
    for i in 1..curve.len() {
        let s = score_at(i);
        if s > score {
            index = i;
            score = s;
        }
    }
    Orientation {
        theta: index as f64 * curve.bin_width,
        score,
        index,
    }
}

/// Per-anchor orientation matcher.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchMaker {
    pub cs_factor: usize,
    pub prior: Option<PriorConfig>,
}

impl Default for MatchMaker {
    fn default() -> Self {
        MatchMaker {
            cs_factor: 5,
            prior: None,
        }
    }
}

impl MatchMaker {
    pub fn new(cs_factor: usize, prior: Option<PriorConfig>) -> Result<Self> {
        if cs_factor == 0 {
            return config("cs factor must be >= 1");
        }
        if let Some(p) = &prior {
            p.validate()?;
        }
        Ok(MatchMaker { cs_factor, prior })
    }

    /// Precomputes the street spectrum and the prior at smoothed resolution.
    pub fn prepare(&self, street: &PetalFeature) -> Result<PreparedStreet> {
        let n_sat = (360.0 / street.theta_a).round() as usize;
        if street.n_a == 0 || street.n_a > n_sat {
            return shape(format!("street feature has {} petals", street.n_a));
        }
        let len = n_sat * self.cs_factor;
        let bin = street.theta_a / self.cs_factor as f64;
        let prior = match &self.prior {
            Some(p) if !p.is_exact() => Some(prior_curve(p, len, bin)?.values),
            _ => None,
        };
        Ok(PreparedStreet {
            spectrum: StreetSpectrum::new(street, n_sat),
            cs_factor: self.cs_factor,
            prior_cfg: self.prior,
            prior,
        })
    }
}

#[derive(Debug, Clone)]
pub struct PreparedStreet {
    spectrum: StreetSpectrum,
    cs_factor: usize,
    prior_cfg: Option<PriorConfig>,
    prior: Option<Vec<f64>>,
}

impl PreparedStreet {
    /// Raw correlation curve against one satellite feature.
    pub fn correlate(&self, sat: &PetalFeature) -> Result<SimilarityCurve> {
        self.spectrum.correlate(sat)
    }

    /// Smoothed curve, without the prior.
    pub fn smoothed(&self, sat: &PetalFeature) -> Result<SimilarityCurve> {
        smooth_curve(&self.correlate(sat)?, self.cs_factor)
    }

    /// Correlate, smooth, mix the prior and take the argmax.
    pub fn match_anchor(&self, sat: &PetalFeature) -> Result<Orientation> {
        let curve = self.smoothed(sat)?;
        match (&self.prior_cfg, &self.prior) {
            (Some(cfg), None) => best_orientation(&curve, Some(cfg)),
            (_, Some(p)) => Ok(mixed_argmax(&curve, Some(p))),
            (None, None) => Ok(mixed_argmax(&curve, None)),
        }
    }
}
