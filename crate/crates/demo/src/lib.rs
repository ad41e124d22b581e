//! WebAssembly bindings for the static demo page in `www/`.

pub mod views;

use wasm_bindgen::prelude::*;

fn js_err(e: petal_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(getter_with_clone)]
pub struct LutRaster {
    pub side: usize,
    pub petal: Vec<i32>,
    pub zone: Vec<i32>,
}

/// Petal and zone of every pixel for one petal width.
#[wasm_bindgen]
pub fn lut_raster(theta_a: f64, zones_m: Vec<f64>, ground_res: f64) -> Result<LutRaster, JsError> {
    let r = views::lut_raster(theta_a, &zones_m, ground_res).map_err(js_err)?;
    Ok(LutRaster {
        side: r.side,
        petal: r.petal,
        zone: r.zone,
    })
}

#[wasm_bindgen(getter_with_clone)]
pub struct CurveView {
    pub bin_width: f64,
    pub smoothed: Vec<f64>,
    pub prior: Vec<f64>,
    pub gt_theta: f64,
    pub plain_theta: f64,
    pub prior_theta: f64,
}

/// Orientation curve at the true pose of scene `seed`, plus a prior.
#[wasm_bindgen]
pub fn orientation_curve(seed: u32, p_theta: f64, delta_p: f64, rho_p: f64) -> Result<CurveView, JsError> {
    let c = views::orientation_curve(seed as u64, p_theta, delta_p, rho_p).map_err(js_err)?;
    Ok(CurveView {
        bin_width: c.bin_width,
        smoothed: c.smoothed,
        prior: c.prior,
        gt_theta: c.gt_theta,
        plain_theta: c.plain_theta,
        prior_theta: c.prior_theta,
    })
}

#[wasm_bindgen(getter_with_clone)]
pub struct TraceView {
    pub side: usize,
    pub rgba: Vec<u8>,
    pub anchors: Vec<f64>,
    pub gt: Vec<f64>,
    pub pred: Vec<f64>,
    pub queries: usize,
}

/// Multi-scale search on scene `seed` with satellite noise `noise_sigma`.
#[wasm_bindgen]
pub fn search_trace(seed: u32, noise_sigma: f64) -> Result<TraceView, JsError> {
    let t = views::search_trace(seed as u64, noise_sigma).map_err(js_err)?;
    Ok(TraceView {
        side: t.side,
        rgba: t.rgba,
        anchors: t.anchors,
        gt: t.gt,
        pred: t.pred,
        queries: t.queries,
    })
}
