//! Numerical toolkit for skew products `F(θ, y) = (Sθ, f_θ(y))` over the
//! 2-torus, driven by a generalized Baker transformation or the cat map, with
//! monotone fibre maps on a compact interval `[-M, M]`.
//!
//! The crate computes the bounding invariant graphs by pull-back, the
//! separating graph, fibre Lyapunov exponents, the fibre-wise conjugacy onto a
//! system whose fibre maps only see the stable coordinate, and pinch-set
//! diagnostics. The affine (Weierstrass) case has its own closed-form module.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod base_maps;
pub mod conjugacy;
pub mod error;
pub mod fibre_maps;
pub mod lyapunov;
pub mod numeric;
pub mod pinch;
pub mod pullback;
pub mod weierstrass;

#[cfg(feature = "cli")]
pub mod cli;

pub use base_maps::{Baker, Base, BaseMap, BasePoint, CatMap};
pub use error::{Error, Result};
pub use fibre_maps::{AffineCosine, ArctanCosine, FamilyBounds, FibreMap};
pub use pullback::{GraphField, Grid, PullbackSettings};
