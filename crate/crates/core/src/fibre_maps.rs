//! Parametric fibre-map families `f_θ : [-M, M] → (-M, M)`.
//!
//! Every family supplies closed-form first, second and third derivatives in
//! `y`; the Schwarzian derivative is assembled from them. New families are
//! added by implementing [`FibreMap`] and registering a constructor in a
//! [`FamilyRegistry`].

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::base_maps::{BaseMap, BasePoint};
use crate::error::{Error, Result};

pub trait FibreMap: Send + Sync {
    fn name(&self) -> &'static str;

    /// `M`, the half-width of the fibre interval `𝕀 = [-M, M]`.
    fn half_width(&self) -> f64;

    fn value(&self, theta: BasePoint, y: f64) -> f64;
    fn deriv(&self, theta: BasePoint, y: f64) -> f64;
    fn deriv2(&self, theta: BasePoint, y: f64) -> f64;
    fn deriv3(&self, theta: BasePoint, y: f64) -> f64;

    /// `f‴/f′ − (3/2)(f″/f′)²`.
    fn schwarzian(&self, theta: BasePoint, y: f64) -> f64 {
        let d1 = self.deriv(theta, y);
        let ratio = self.deriv2(theta, y) / d1;
        self.deriv3(theta, y) / d1 - 1.5 * ratio * ratio
    }

    /// Applies `f_θ` in place to a batch of fibre values.
    fn apply(&self, theta: BasePoint, ys: &mut [f64]) {
        for y in ys.iter_mut() {
            *y = self.value(theta, *y);
        }
    }

    /// Closed-form bounds, where the family knows them.
    fn analytic_bounds(&self) -> AnalyticBounds {
        AnalyticBounds::default()
    }

    /// Parameters as `(key, value)` pairs, for reports.
    fn params(&self) -> Vec<(&'static str, f64)>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AnalyticBounds {
    pub q_f: Option<f64>,
    pub qp_f: Option<f64>,
    pub lip: Option<f64>,
}

/// `f_θ(y) = arctan(r y) + ε cos(2π(x + ξ))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArctanCosine {
    pub r: f64,
    pub eps: f64,
    pub m: f64,
}

impl ArctanCosine {
    pub fn new(r: f64, eps: f64, m: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Config(format!("[family].r = {r} must be positive")));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::Config(format!("[family].eps = {eps} must be non-negative")));
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Config(format!("[family].M = {m} must be positive")));
        }
        Ok(ArctanCosine { r, eps, m })
    }

    #[inline]
    fn forcing(&self, theta: BasePoint) -> f64 {
        self.eps * (2.0 * PI * (theta.x + theta.xi)).cos()
    }
}

impl FibreMap for ArctanCosine {
    fn name(&self) -> &'static str {
        "arctan_cosine"
    }

    fn half_width(&self) -> f64 {
        self.m
    }

    #[inline]
    fn value(&self, theta: BasePoint, y: f64) -> f64 {
        (self.r * y).atan() + self.forcing(theta)
    }

    #[inline]
    fn deriv(&self, _theta: BasePoint, y: f64) -> f64 {
        let u = self.r * y;
        self.r / (1.0 + u * u)
    }

    fn apply(&self, theta: BasePoint, ys: &mut [f64]) {
        let shift = self.forcing(theta);
        for y in ys.iter_mut() {
            *y = (self.r * *y).atan() + shift;
        }
    }

    fn deriv2(&self, _theta: BasePoint, y: f64) -> f64 {
        let u = self.r * y;
        let q = 1.0 + u * u;
        -2.0 * self.r * self.r * u / (q * q)
    }

    fn deriv3(&self, _theta: BasePoint, y: f64) -> f64 {
        let u = self.r * y;
        let q = 1.0 + u * u;
        self.r.powi(3) * (6.0 * u * u - 2.0) / (q * q * q)
    }

    fn schwarzian(&self, _theta: BasePoint, y: f64) -> f64 {
        let u = self.r * y;
        let q = 1.0 + u * u;
        -2.0 * self.r * self.r / (q * q)
    }

    fn analytic_bounds(&self) -> AnalyticBounds {
        // |(log f')'| = 2r²|y|/(1 + r²y²) peaks at |y| = 1/r
        let y0 = (1.0 / self.r).min(self.m);
        let u = self.r * y0;
        AnalyticBounds {
            q_f: Some(self.r),
            qp_f: Some(2.0 * self.r * u / (1.0 + u * u)),
            // |Δ(x + ξ)| ≤ 2 d(θ, θ') and f' does not depend on θ
            lip: Some(4.0 * PI * self.eps),
        }
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![("r", self.r), ("eps", self.eps), ("M", self.m)]
    }
}

/// `f_θ(y) = λ y + cos(2π x)`, the Weierstrass case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineCosine {
    pub lambda: f64,
    pub m: f64,
}

impl AffineCosine {
    pub fn new(lambda: f64, m: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Config(format!("[family].lambda = {lambda} must lie in (0, 1)")));
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Config(format!("[family].M = {m} must be positive")));
        }
        Ok(AffineCosine { lambda, m })
    }
}

impl FibreMap for AffineCosine {
    fn name(&self) -> &'static str {
        "affine_cosine"
    }

    fn half_width(&self) -> f64 {
        self.m
    }

    #[inline]
    fn value(&self, theta: BasePoint, y: f64) -> f64 {
        self.lambda * y + (2.0 * PI * theta.x).cos()
    }

    #[inline]
    fn deriv(&self, _theta: BasePoint, _y: f64) -> f64 {
        self.lambda
    }

    fn deriv2(&self, _theta: BasePoint, _y: f64) -> f64 {
        0.0
    }

    fn deriv3(&self, _theta: BasePoint, _y: f64) -> f64 {
        0.0
    }

    fn analytic_bounds(&self) -> AnalyticBounds {
        AnalyticBounds { q_f: Some(self.lambda), qp_f: Some(0.0), lip: Some(2.0 * PI) }
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![("lambda", self.lambda), ("M", self.m)]
    }
}

fn check_domain<F: FibreMap + ?Sized>(family: &F, y: f64) -> Result<()> {
    let m = family.half_width();
    if y.is_finite() && y.abs() <= m {
        Ok(())
    } else {
        Err(Error::Domain { y, m })
    }
}

/// `f_θ(y)` with a domain check on `y`.
pub fn eval<F: FibreMap + ?Sized>(family: &F, theta: BasePoint, y: f64) -> Result<f64> {
    check_domain(family, y)?;
    Ok(family.value(theta, y))
}

/// `f′_θ(y)` with a domain check on `y`.
pub fn eval_deriv<F: FibreMap + ?Sized>(family: &F, theta: BasePoint, y: f64) -> Result<f64> {
    check_domain(family, y)?;
    Ok(family.deriv(theta, y))
}

/// `𝒮f_θ(y)` with a domain check on `y`.
pub fn eval_schwarzian<F: FibreMap + ?Sized>(family: &F, theta: BasePoint, y: f64) -> Result<f64> {
    check_domain(family, y)?;
    Ok(family.schwarzian(theta, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certification {
    Analytic,
    GridEstimate,
}

/// Constants entering the conjugacy estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyBounds {
    /// `sup f′` over `Θ × 𝕀`.
    pub q_f: f64,
    /// `sup |(log f′)′|`.
    pub qp_f: f64,
    /// Lipschitz constant of `θ ↦ f_θ` in `d¹`.
    pub lip: f64,
    /// Grid estimate of the same Lipschitz constant, always reported.
    pub lip_grid: f64,
    pub certified_by: Certification,
}

/// Grid inflation applied when a bound is only estimated.
pub const GRID_SAFETY: f64 = 1.1;

/// Node grid `i / n` on the circle; includes `0`, where the forcing peaks.
fn grid_points(n: usize) -> impl Iterator<Item = f64> + Clone {
    (0..n).map(move |i| i as f64 / n as f64)
}

fn fibre_points(m: f64, n: usize) -> impl Iterator<Item = f64> + Clone {
    (0..=n).map(move |i| -m + 2.0 * m * i as f64 / n as f64)
}

fn lipschitz_grid_estimate<F: FibreMap + ?Sized>(family: &F, n: usize) -> f64 {
    let m = family.half_width();
    let h = 1.0 / n as f64;
    let mut best = 0.0f64;
    for xi in grid_points(n) {
        for x in grid_points(n) {
            let t = BasePoint::new(xi, x);
            let neighbours = [
                BasePoint::new(xi + h, x),
                BasePoint::new(xi, x + h),
                BasePoint::new(xi + h, x + h),
                BasePoint::new(xi + h, x - h),
            ];
            for t2 in neighbours {
                let mut dv = 0.0f64;
                let mut dd = 0.0f64;
                for y in fibre_points(m, n) {
                    dv = dv.max((family.value(t, y) - family.value(t2, y)).abs());
                    dd = dd.max((family.deriv(t, y) - family.deriv(t2, y)).abs());
                }
                best = best.max((dv + dd) / t.torus_distance(&t2));
            }
        }
    }
    best
}

/// Certifies `Q_f`, `Q′_f` and the Lipschitz constant `L`.
///
/// Closed forms are used where the family provides them; anything else is
/// a grid maximum inflated by [`GRID_SAFETY`].
pub fn certify_bounds<F: FibreMap + ?Sized>(family: &F, grid_density: usize) -> Result<FamilyBounds> {
    if grid_density < 64 {
        return Err(Error::Precondition(format!("grid density {grid_density} < 64")));
    }
    let m = family.half_width();
    let analytic = family.analytic_bounds();

    let mut q_grid = 0.0f64;
    let mut qp_grid = 0.0f64;
    for xi in grid_points(grid_density) {
        for x in grid_points(grid_density) {
            let t = BasePoint::new(xi, x);
            for y in fibre_points(m, grid_density) {
                let d1 = family.deriv(t, y);
                q_grid = q_grid.max(d1);
                qp_grid = qp_grid.max((family.deriv2(t, y) / d1).abs());
            }
        }
    }
    let lip_grid = lipschitz_grid_estimate(family, grid_density) * GRID_SAFETY;

    let q_f = analytic.q_f.unwrap_or(q_grid * GRID_SAFETY);
    let qp_f = analytic.qp_f.unwrap_or(qp_grid * GRID_SAFETY);
    let lip = analytic.lip.unwrap_or(lip_grid);
    for (name, v) in [("Q_f", q_f), ("Q'_f", qp_f), ("L", lip), ("L_grid", lip_grid)] {
        if !v.is_finite() {
            return Err(Error::Certification(format!("{name} is not finite")));
        }
    }
    let all_analytic = analytic.q_f.is_some() && analytic.qp_f.is_some() && analytic.lip.is_some();
    Ok(FamilyBounds {
        q_f,
        qp_f,
        lip,
        lip_grid,
        certified_by: if all_analytic { Certification::Analytic } else { Certification::GridEstimate },
    })
}

/// Outcome of checking the standing assumptions on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub compressing: bool,
    pub monotone: bool,
    /// `false` is a warning only (affine families).
    pub schwarzian_negative: bool,
    pub alpha_qf_lt_1: bool,
    pub alpha: f64,
    pub q_f: f64,
    pub alpha_qf: f64,
    /// `max |f_θ(±M)|` over the grid.
    pub max_abs_image: f64,
    pub min_deriv: f64,
    pub max_schwarzian: f64,
    pub bounds: Option<FamilyBounds>,
}

impl ValidationReport {
    /// Failures that block the conjugacy machinery.
    pub fn hard_ok(&self) -> bool {
        self.compressing && self.monotone && self.alpha_qf_lt_1
    }
}

pub fn validate_family<F, B>(family: &F, base: &B, grid_density: usize) -> ValidationReport
where
    F: FibreMap + ?Sized,
    B: BaseMap + ?Sized,
{
    let n = grid_density.max(2);
    let m = family.half_width();
    let mut max_abs_image = 0.0f64;
    let mut min_deriv = f64::INFINITY;
    let mut max_schwarzian = f64::NEG_INFINITY;
    let mut finite = true;
    for xi in grid_points(n) {
        for x in grid_points(n) {
            let t = BasePoint::new(xi, x);
            // f is increasing, so the image extremes sit at ±M
            max_abs_image = max_abs_image.max(family.value(t, m).abs()).max(family.value(t, -m).abs());
            for y in fibre_points(m, n) {
                let d = family.deriv(t, y);
                let s = family.schwarzian(t, y);
                finite &= d.is_finite() && s.is_finite();
                min_deriv = min_deriv.min(d);
                max_schwarzian = max_schwarzian.max(s);
            }
        }
    }
    let bounds = certify_bounds(family, n.max(64)).ok();
    let q_f = bounds.map(|b| b.q_f).unwrap_or(f64::NAN);
    let alpha = base.stable_rate();
    let alpha_qf = alpha * q_f;
    ValidationReport {
        compressing: finite && max_abs_image < m,
        monotone: finite && min_deriv > 0.0,
        schwarzian_negative: finite && max_schwarzian < 0.0,
        alpha_qf_lt_1: alpha_qf < 1.0,
        alpha,
        q_f,
        alpha_qf,
        max_abs_image,
        min_deriv,
        max_schwarzian,
        bounds,
    }
}

/// Boxed family, as built from a configuration.
pub type DynFamily = Box<dyn FibreMap>;

type Constructor = fn(&BTreeMap<String, f64>) -> Result<DynFamily>;

struct Entry {
    canonical: &'static str,
    keys: &'static [&'static str],
    build: Constructor,
}

/// Name → constructor table for fibre families.
pub struct FamilyRegistry {
    entries: BTreeMap<String, Entry>,
}

fn param(params: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    params
        .get(key)
        .copied()
        .ok_or_else(|| Error::Config(format!("missing key [family].{key}")))
}

fn build_arctan(p: &BTreeMap<String, f64>) -> Result<DynFamily> {
    Ok(Box::new(ArctanCosine::new(param(p, "r")?, p.get("eps").copied().unwrap_or(0.0), param(p, "M")?)?))
}

fn build_affine(p: &BTreeMap<String, f64>) -> Result<DynFamily> {
    Ok(Box::new(AffineCosine::new(param(p, "lambda")?, param(p, "M")?)?))
}

impl FamilyRegistry {
    pub fn empty() -> Self {
        FamilyRegistry { entries: BTreeMap::new() }
    }

    /// The two built-in families plus the short aliases `arctan`, `affine`.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register("arctan_cosine", &["r", "eps", "M"], build_arctan);
        reg.register("affine_cosine", &["lambda", "M"], build_affine);
        reg.alias("arctan", "arctan_cosine");
        reg.alias("affine", "affine_cosine");
        reg
    }

    pub fn register(&mut self, name: &'static str, keys: &'static [&'static str], build: Constructor) {
        self.entries.insert(name.to_string(), Entry { canonical: name, keys, build });
    }

    pub fn alias(&mut self, alias: &str, target: &str) {
        if let Some(e) = self.entries.get(target) {
            let copy = Entry { canonical: e.canonical, keys: e.keys, build: e.build };
            self.entries.insert(alias.to_string(), copy);
        }
    }

    /// Canonical kind name and accepted parameter keys.
    pub fn describe(&self, kind: &str) -> Result<(&'static str, &'static [&'static str])> {
        self.entries
            .get(kind)
            .map(|e| (e.canonical, e.keys))
            .ok_or_else(|| Error::UnknownFamily(kind.to_string()))
    }

    pub fn build(&self, kind: &str, params: &BTreeMap<String, f64>) -> Result<DynFamily> {
        let e = self.entries.get(kind).ok_or_else(|| Error::UnknownFamily(kind.to_string()))?;
        for k in params.keys() {
            if !e.keys.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key [family].{k} for kind {}", e.canonical)));
            }
        }
        (e.build)(params)
    }
}
