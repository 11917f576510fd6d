//! Browser bindings: the bounding-graph field of the arctan family, the
//! affine-case Weierstrass curve and its box-counting dimension.
//!
//! The `*_values` functions are plain Rust and carry the logic; the
//! `#[wasm_bindgen]` wrappers only translate errors.

use skewgraph::pullback::{field, Grid, PullbackSettings};
use skewgraph::weierstrass::{box_dimension, dyadic_samples};
use skewgraph::{ArctanCosine, Baker};
use wasm_bindgen::prelude::*;

/// Largest grid the page may request; keeps a frame under a second.
pub const MAX_GRID: usize = 256;

/// Row-major (`x` rows, `ξ` columns) `φ⁺` followed by `φ⁻`, `2 n²` values.
pub fn field_values(eps: f64, n: usize, depth: usize) -> Result<Vec<f64>, String> {
    if !(2..=MAX_GRID).contains(&n) {
        return Err(format!("grid size {n} outside 2..={MAX_GRID}"));
    }
    let family = ArctanCosine::new(1.1, eps, 0.86).map_err(|e| e.to_string())?;
    let base = Baker::new(0.5).map_err(|e| e.to_string())?;
    let grid = Grid::square(n).map_err(|e| e.to_string())?;
    // a fixed depth shows the depth-n graphs, discontinuities included
    let settings = PullbackSettings { depth, stop_tol: 0.0, probe_step: depth.max(1) };
    let fld = field(&base, &family, grid, &settings);
    let mut out = fld.phi_plus;
    out.extend_from_slice(&fld.phi_minus);
    Ok(out)
}

/// `W(i / 2^bits)` for the affine case with contraction `lambda`.
pub fn curve_values(lambda: f64, bits: u32) -> Result<Vec<f64>, String> {
    if bits > 14 {
        return Err(format!("2^{bits} points is more than the page draws"));
    }
    dyadic_samples(lambda, 60, bits).map_err(|e| e.to_string())
}

/// `[estimate, expected or NaN, fit rms]`.
pub fn dimension_values(lambda: f64) -> Result<Vec<f64>, String> {
    let d = box_dimension(lambda, 7, 60, 18).map_err(|e| e.to_string())?;
    Ok(vec![d.graph_dimension, d.expected.unwrap_or(f64::NAN), d.fit_rms])
}

#[wasm_bindgen]
pub fn bounding_field(eps: f64, n: usize, depth: usize) -> Result<Vec<f64>, JsError> {
    field_values(eps, n, depth).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn weierstrass_curve(lambda: f64, bits: u32) -> Result<Vec<f64>, JsError> {
    curve_values(lambda, bits).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn weierstrass_dimension(lambda: f64) -> Result<Vec<f64>, JsError> {
    dimension_values(lambda).map_err(|e| JsError::new(&e))
}
