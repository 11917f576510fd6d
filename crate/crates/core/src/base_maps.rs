//! Driving systems on the 2-torus: the generalized Baker transformation
//! (with its inverse, the stable projection `Π`, the section `σ` and the
//! expanding factor `Ŝ = τ`) and the cat map.
//!
//! Points are stored on the half-open square `[0,1)²`. For the Baker map `ξ`
//! is the coordinate expanded by `S`, `x` the one contracted by `S`; backward
//! iterates therefore contract `ξ` and double (for `a = 1/2`) `x`.

use crate::error::{Error, Result};

/// Values this close to 1 are snapped to 0 after reduction mod 1.
const WRAP_SNAP: f64 = 1e-15;

/// Reduces `v` into `[0, 1)`.
#[inline]
pub fn wrap_unit(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    if r >= 1.0 - WRAP_SNAP {
        0.0
    } else {
        r
    }
}

/// Distance between `u` and `v` on the circle `ℝ/ℤ`.
#[inline]
pub fn circle_distance(u: f64, v: f64) -> f64 {
    let d = (u - v).abs().rem_euclid(1.0);
    d.min(1.0 - d)
}

/// A point `θ = (ξ, x)` of the torus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasePoint {
    pub xi: f64,
    pub x: f64,
}

impl BasePoint {
    pub fn new(xi: f64, x: f64) -> Self {
        BasePoint { xi: wrap_unit(xi), x: wrap_unit(x) }
    }

    /// Max of the coordinate-wise circle distances (flat torus metric).
    pub fn torus_distance(&self, other: &BasePoint) -> f64 {
        circle_distance(self.xi, other.xi).max(circle_distance(self.x, other.x))
    }

    /// Max metric on the square `[0,1)²` without wrap-around. The Baker map is
    /// discontinuous across `ξ = 0`, so stable-fibre contraction estimates
    /// use this metric.
    pub fn square_distance(&self, other: &BasePoint) -> f64 {
        (self.xi - other.xi).abs().max((self.x - other.x).abs())
    }
}

/// An invertible drive `S` of the torus.
pub trait BaseMap: Send + Sync {
    fn forward(&self, p: BasePoint) -> BasePoint;
    fn inverse(&self, p: BasePoint) -> BasePoint;
    /// Rate `α` at which `S⁻¹` contracts its stable fibres.
    fn stable_rate(&self) -> f64;
    fn name(&self) -> &'static str;
}

/// `[θ, S⁻¹θ, …, S⁻ⁿθ]`.
pub fn backward_orbit<B: BaseMap + ?Sized>(base: &B, theta: BasePoint, n: usize) -> Vec<BasePoint> {
    let mut out = Vec::with_capacity(n + 1);
    let mut p = theta;
    out.push(p);
    for _ in 0..n {
        p = base.inverse(p);
        out.push(p);
    }
    out
}

/// `[θ, Sθ, …, Sⁿθ]`.
pub fn forward_orbit<B: BaseMap + ?Sized>(base: &B, theta: BasePoint, n: usize) -> Vec<BasePoint> {
    let mut out = Vec::with_capacity(n + 1);
    let mut p = theta;
    out.push(p);
    for _ in 0..n {
        p = base.forward(p);
        out.push(p);
    }
    out
}

/// Generalized Baker transformation with branch cut `a`.
///
/// Branches are half-open, `[0, a)` and `[a, 1)`, so `S` is a bijection of
/// `[0,1)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baker {
    a: f64,
}

impl Baker {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Config(format!("[base].a = {a} must lie in (0, 1)")));
        }
        Ok(Baker { a })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Stable contraction rate `α = max(a, 1 - a)`.
    pub fn alpha(&self) -> f64 {
        self.a.max(1.0 - self.a)
    }

    /// Prefactor in `d(S⁻ⁿθ, S⁻ⁿσΠθ) ≤ C αⁿ d(θ, σΠθ)`; 1 in the square metric.
    pub fn contraction_prefactor(&self) -> f64 {
        1.0
    }

    /// Branch index `κ(u) ∈ {0, 1}`.
    #[inline]
    pub fn kappa(&self, u: f64) -> usize {
        usize::from(u >= self.a)
    }

    /// The expanding circle map `τ`.
    #[inline]
    pub fn tau(&self, u: f64) -> f64 {
        if u < self.a {
            wrap_unit(u / self.a)
        } else {
            wrap_unit((u - self.a) / (1.0 - self.a))
        }
    }

    /// Contracting branches `ρ₀(u) = a u`, `ρ₁(u) = a + (1 - a) u`.
    #[inline]
    pub fn rho(&self, branch: usize, u: f64) -> f64 {
        if branch == 0 {
            self.a * u
        } else {
            wrap_unit(self.a + (1.0 - self.a) * u)
        }
    }

    /// `Π(ξ, x) = x`.
    pub fn project(&self, p: BasePoint) -> f64 {
        p.x
    }

    /// `σ(x) = (0, x)`.
    pub fn sigma(&self, x: f64) -> BasePoint {
        BasePoint::new(0.0, x)
    }

    /// The factor `Ŝ = τ` of `S⁻¹` on the stable coordinate.
    pub fn factor(&self, x: f64) -> f64 {
        self.tau(x)
    }
}

impl BaseMap for Baker {
    fn forward(&self, p: BasePoint) -> BasePoint {
        let k = self.kappa(p.xi);
        BasePoint::new(self.tau(p.xi), self.rho(k, p.x))
    }

    fn inverse(&self, p: BasePoint) -> BasePoint {
        let k = self.kappa(p.x);
        BasePoint::new(self.rho(k, p.xi), self.tau(p.x))
    }

    fn stable_rate(&self) -> f64 {
        self.alpha()
    }

    fn name(&self) -> &'static str {
        "baker"
    }
}

/// The cat map `(ξ, x) ↦ (2ξ + x, ξ + x) mod 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CatMap;

impl CatMap {
    pub const MATRIX: [[i64; 2]; 2] = [[2, 1], [1, 1]];

    /// Eigenvalue `(3 + √5)/2`, expanded by `S`.
    pub fn unstable_eigenvalue(&self) -> f64 {
        (3.0 + 5f64.sqrt()) / 2.0
    }

    /// Eigenvalue `(3 - √5)/2`, contracted by `S`.
    pub fn stable_eigenvalue(&self) -> f64 {
        (3.0 - 5f64.sqrt()) / 2.0
    }

    /// Unit direction contracted by `S⁻¹` (the unstable eigendirection of the
    /// matrix). Pinch sets are unions of lines in this direction.
    pub fn backward_stable_direction(&self) -> (f64, f64) {
        normalize(1.0, self.unstable_eigenvalue() - 2.0)
    }

    /// Unit direction contracted by `S`.
    pub fn forward_stable_direction(&self) -> (f64, f64) {
        normalize(1.0, self.stable_eigenvalue() - 2.0)
    }
}

fn normalize(u: f64, v: f64) -> (f64, f64) {
    let n = u.hypot(v);
    (u / n, v / n)
}

impl BaseMap for CatMap {
    fn forward(&self, p: BasePoint) -> BasePoint {
        BasePoint::new(2.0 * p.xi + p.x, p.xi + p.x)
    }

    fn inverse(&self, p: BasePoint) -> BasePoint {
        BasePoint::new(p.xi - p.x, 2.0 * p.x - p.xi)
    }

    fn stable_rate(&self) -> f64 {
        self.stable_eigenvalue()
    }

    fn name(&self) -> &'static str {
        "cat"
    }
}

/// Either drive, as selected in a run configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Base {
    Baker(Baker),
    Cat(CatMap),
}

impl Base {
    pub fn as_baker(&self) -> Result<&Baker> {
        match self {
            Base::Baker(b) => Ok(b),
            Base::Cat(_) => Err(Error::UnsupportedBase("stable factor (Π, σ, Ŝ)")),
        }
    }

    pub fn project(&self, p: BasePoint) -> Result<f64> {
        Ok(self.as_baker()?.project(p))
    }

    pub fn sigma(&self, x: f64) -> Result<BasePoint> {
        Ok(self.as_baker()?.sigma(x))
    }

    pub fn factor(&self, x: f64) -> Result<f64> {
        Ok(self.as_baker()?.factor(x))
    }
}

impl BaseMap for Base {
    fn forward(&self, p: BasePoint) -> BasePoint {
        match self {
            Base::Baker(b) => b.forward(p),
            Base::Cat(c) => c.forward(p),
        }
    }

    fn inverse(&self, p: BasePoint) -> BasePoint {
        match self {
            Base::Baker(b) => b.inverse(p),
            Base::Cat(c) => c.inverse(p),
        }
    }

    fn stable_rate(&self) -> f64 {
        match self {
            Base::Baker(b) => b.stable_rate(),
            Base::Cat(c) => c.stable_rate(),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Base::Baker(b) => b.name(),
            Base::Cat(c) => c.name(),
        }
    }
}
