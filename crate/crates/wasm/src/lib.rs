//! Browser bindings: a data slice, the degeneracy curve of the derivative
//! kernel, and the singular slab profile of the data.

use rev_euler::data_fields::{eval_data, eval_grad_data};
use rev_euler::diagnostics::singular_slab_scan_fn;
use rev_euler::kernels::degeneracy_scan;
use rev_euler::{Family, Params, Point3};
use wasm_bindgen::prelude::*;

fn params(alpha0: f64, beta0: f64, radial: bool) -> rev_euler::Result<Params> {
    Params::new(alpha0, beta0, if radial { Family::Radial } else { Family::Planar })
}

fn js(e: rev_euler::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Component `component` (0, 1 or 2) of the data on the `n x n` plane
/// `x3 = x3`, `|x1|, |x2| <= half`; row-major with `x1` along rows.
pub fn data_slice_values(
    alpha0: f64,
    beta0: f64,
    radial: bool,
    component: usize,
    x3: f64,
    n: usize,
    half: f64,
) -> rev_euler::Result<Vec<f64>> {
    let p = params(alpha0, beta0, radial)?;
    if component > 2 || n < 2 || !(half > 0.0) {
        return Err(rev_euler::Error::InvalidParams("component <= 2, n >= 2 and half > 0 required".into()));
    }
    let h = 2.0 * half / n as f64;
    let c = |i: usize| -half + (i as f64 + 0.5) * h;
    Ok((0..n * n).map(|k| eval_data(Point3::new(c(k / n), c(k % n), x3), &p)[component]).collect())
}

#[wasm_bindgen]
pub fn data_slice(
    alpha0: f64,
    beta0: f64,
    radial: bool,
    component: usize,
    x3: f64,
    n: usize,
    half: f64,
) -> Result<Vec<f64>, JsError> {
    data_slice_values(alpha0, beta0, radial, component, x3, n, half).map_err(js)
}

/// Sup of the unit step convolved with the `x1` derivative kernel at time
/// `t`, one value per viscosity in `nus` (descending).
#[wasm_bindgen]
pub fn degeneracy_curve(t: f64, nus: Vec<f64>) -> Result<Vec<f64>, JsError> {
    degeneracy_scan(|x| if x.x1 > 0.0 { 1.0 } else { 0.0 }, t, 0, &nus).map_err(js)
}

/// Slab profile of the data at `(x2, x3)` over `levels` radii `0.1 * 0.3^k`,
/// as JSON `{rows, slopes, trends}`.
pub fn slab_profile_json(alpha0: f64, beta0: f64, radial: bool, x2: f64, x3: f64, levels: usize) -> rev_euler::Result<String> {
    let p = params(alpha0, beta0, radial)?;
    let radii: Vec<f64> = (0..levels as i32).map(|k| 0.1 * 0.3f64.powi(k)).collect();
    let prof = singular_slab_scan_fn(|x| Ok((eval_data(x, &p), eval_grad_data(x, &p)?)), &radii, &[(x2, x3)], 200)?;
    let value = serde_json::json!({ "rows": prof.rows, "slopes": prof.slopes, "trends": prof.trends });
    Ok(value.to_string())
}

#[wasm_bindgen]
pub fn slab_profile(alpha0: f64, beta0: f64, radial: bool, x2: f64, x3: f64, levels: usize) -> Result<String, JsError> {
    slab_profile_json(alpha0, beta0, radial, x2, x3, levels).map_err(js)
}
