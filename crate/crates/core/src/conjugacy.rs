//! Fibre-wise conjugacy onto a skew product whose fibre maps depend only on
//! the stable coordinate: the maps `G_{θ,θ′,n}`, their limits `G_θ`, the
//! reduced maps `f̂`, and the sampled-map metrics `d⁰`, `d¹`.
//!
//! Only the Baker drive is supported; it supplies the projection `Π` and the
//! section `σ`.

use crate::base_maps::{backward_orbit, Baker, BaseMap, BasePoint};
use crate::error::{Error, Result};
use crate::fibre_maps::{FamilyBounds, FibreMap};
use crate::lyapunov::sample_points;
use crate::numeric::{par_map_range, Estimate};
use crate::pullback::{adaptive_pair, PullbackSettings};

/// An increasing map known through samples on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneMapSample {
    xs: Vec<f64>,
    values: Vec<f64>,
    derivs: Option<Vec<f64>>,
}

/// Default number of abscissae for sampled maps.
pub const DEFAULT_SAMPLES: usize = 1024;

/// Chebyshev–Lobatto nodes on `[lo, hi]`, increasing, endpoints included.
pub fn lobatto_nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let mut xs: Vec<f64> =
        (0..n).map(|k| c - r * (std::f64::consts::PI * k as f64 / (n - 1) as f64).cos()).collect();
    xs[0] = lo;
    xs[n - 1] = hi;
    xs
}

impl MonotoneMapSample {
    pub fn new(xs: Vec<f64>, values: Vec<f64>, derivs: Option<Vec<f64>>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != values.len() {
            return Err(Error::Precondition("sampled map needs at least two matching abscissae and values".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("abscissae must be strictly increasing".into()));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("sampled map is not strictly increasing".into()));
        }
        if let Some(d) = &derivs {
            if d.len() != xs.len() || d.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Precondition("derivative samples must be positive, one per abscissa".into()));
            }
        }
        Ok(MonotoneMapSample { xs, values, derivs })
    }

    /// Samples `g` (and optionally `g′`) on Chebyshev–Lobatto nodes.
    pub fn from_fn<G, D>(lo: f64, hi: f64, n: usize, g: G, dg: Option<D>) -> Result<Self>
    where
        G: Fn(f64) -> f64,
        D: Fn(f64) -> f64,
    {
        let xs = lobatto_nodes(lo, hi, n);
        let values = xs.iter().map(|&x| g(x)).collect();
        let derivs = dg.map(|d| xs.iter().map(|&x| d(x)).collect());
        Self::new(xs, values, derivs)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn locate(&self, x: f64) -> Result<(usize, f64)> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain { y: x, m: lo.abs().max(hi.abs()) });
        }
        let i = self.xs.partition_point(|&v| v <= x).clamp(1, self.xs.len() - 1);
        let t = (x - self.xs[i - 1]) / (self.xs[i] - self.xs[i - 1]);
        Ok((i, t))
    }

    /// Piecewise-linear interpolation.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let (i, t) = self.locate(x)?;
        Ok(self.values[i - 1] + t * (self.values[i] - self.values[i - 1]))
    }

    pub fn eval_deriv(&self, x: f64) -> Result<f64> {
        let d = self.derivs.as_ref().ok_or_else(|| Error::Precondition("no derivative samples".into()))?;
        let (i, t) = self.locate(x)?;
        Ok(d[i - 1] + t * (d[i] - d[i - 1]))
    }
}

fn contains(outer: (f64, f64), inner: (f64, f64)) -> bool {
    outer.0 <= inner.0 && inner.1 <= outer.1
}

/// `sup |g − h|` over the abscissae of `h`; requires `I_h ⊆ I_g`.
pub fn d0(g: &MonotoneMapSample, h: &MonotoneMapSample) -> Result<f64> {
    if !contains(g.domain(), h.domain()) {
        return Err(Error::Precondition("d0 needs the domain of h inside the domain of g".into()));
    }
    let mut best = 0.0f64;
    for (&x, &v) in h.xs.iter().zip(&h.values) {
        best = best.max((g.eval(x)? - v).abs());
    }
    Ok(best)
}

/// `d⁰(g, h) + sup |g′ − h′|`.
pub fn d1(g: &MonotoneMapSample, h: &MonotoneMapSample) -> Result<f64> {
    let hd = h.derivs.as_ref().ok_or_else(|| Error::Precondition("d1 needs derivative samples of h".into()))?;
    let base = d0(g, h)?;
    let mut best = 0.0f64;
    for (&x, &dv) in h.xs.iter().zip(hd) {
        best = best.max((g.eval_deriv(x)? - dv).abs());
    }
    Ok(base + best)
}

/// Bisection on `[lo, hi]` down to `tol`, then at most three Newton steps
/// that are only accepted if they stay in the bracket and reduce the residual.
pub fn invert_monotone<G>(g: G, dg: Option<&dyn Fn(f64) -> f64>, target: f64, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    G: Fn(f64) -> f64,
{
    let (glo, ghi) = (g(lo), g(hi));
    let slack = 4.0 * f64::EPSILON * glo.abs().max(ghi.abs()).max(1.0);
    if !(target >= glo - slack && target <= ghi + slack) {
        return Err(Error::Bracket { target, lo: glo, hi: ghi });
    }
    if target <= glo {
        return Ok(lo);
    }
    if target >= ghi {
        return Ok(hi);
    }
    let (mut a, mut b) = (lo, hi);
    let mut iters = 0;
    while b - a > tol && iters < 200 {
        let mid = 0.5 * (a + b);
        if g(mid) < target {
            a = mid;
        } else {
            b = mid;
        }
        iters += 1;
    }
    let mut x = 0.5 * (a + b);
    if let Some(dg) = dg {
        let mut r = g(x) - target;
        for _ in 0..3 {
            if r == 0.0 {
                break;
            }
            let d = dg(x);
            if !(d > 0.0) {
                break;
            }
            let xn = x - r / d;
            if !(xn >= lo && xn <= hi) {
                break;
            }
            let rn = g(xn) - target;
            if rn.abs() >= r.abs() {
                break;
            }
            x = xn;
            r = rn;
        }
    }
    Ok(x)
}

/// Bisection tolerance for the per-step inversions; Newton finishes the job.
const INVERT_TOL: f64 = 1e-9;
/// Rounding slack tolerated when a point sits just outside an image interval.
const IMAGE_SLACK: f64 = 1e-12;

/// `(G_{θ,θ′,n}(y), log G′_{θ,θ′,n}(y))` for any base; no stable-fibre check.
fn g_n_unchecked<B, F>(base: &B, family: &F, theta: BasePoint, theta2: BasePoint, n: usize, y: f64) -> Result<(f64, f64)>
where
    B: BaseMap + ?Sized,
    F: FibreMap + ?Sized,
{
    let m = family.half_width();
    if !(y.abs() <= m) {
        return Err(Error::Domain { y, m });
    }
    if n == 0 {
        return Ok((y, 0.0));
    }
    let orbit = backward_orbit(base, theta, n);
    let orbit2 = backward_orbit(base, theta2, n);
    let mut z = y;
    let mut log_d = 0.0;
    for &t in &orbit[1..] {
        let (lo, hi) = (family.value(t, -m), family.value(t, m));
        if z < lo - IMAGE_SLACK || z > hi + IMAGE_SLACK {
            return Err(Error::Domain { y, m });
        }
        let target = z.clamp(lo, hi);
        let df = |u: f64| family.deriv(t, u);
        z = invert_monotone(|u| family.value(t, u), Some(&df), target, -m, m, INVERT_TOL)?;
        log_d -= family.deriv(t, z).ln();
    }
    for &t in orbit2[1..].iter().rev() {
        log_d += family.deriv(t, z).ln();
        z = family.value(t, z);
    }
    Ok((z, log_d))
}

fn same_stable_fibre(theta: BasePoint, theta2: BasePoint) -> Result<()> {
    if theta.x != theta2.x {
        return Err(Error::Precondition(format!(
            "θ = ({}, {}) and θ′ = ({}, {}) are not on a common stable fibre",
            theta.xi, theta.x, theta2.xi, theta2.x
        )));
    }
    Ok(())
}

/// `G_{θ,θ′,n}(y) = fⁿ_{S⁻ⁿθ′} ∘ (fⁿ_{S⁻ⁿθ})⁻¹(y)`.
pub fn g_n<F: FibreMap + ?Sized>(base: &Baker, family: &F, theta: BasePoint, theta2: BasePoint, n: usize, y: f64) -> Result<f64> {
    same_stable_fibre(theta, theta2)?;
    Ok(g_n_unchecked(base, family, theta, theta2, n, y)?.0)
}

/// Like [`g_n`], also returning `G′` from the chain-rule sum of `log f′`.
pub fn g_n_with_derivative<F: FibreMap + ?Sized>(
    base: &Baker,
    family: &F,
    theta: BasePoint,
    theta2: BasePoint,
    n: usize,
    y: f64,
) -> Result<(f64, f64)> {
    same_stable_fibre(theta, theta2)?;
    let (v, log_d) = g_n_unchecked(base, family, theta, theta2, n, y)?;
    Ok((v, log_d.exp()))
}

/// Result of evaluating a certified limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certified {
    pub value: f64,
    pub depth: usize,
    /// `C′ (αQ_f)ⁿ d(θ, θ′)`.
    pub bound: f64,
}

/// Settings and certified constants for the conjugacy of one system.
pub struct Conjugacy<'a, F: FibreMap + ?Sized> {
    base: &'a Baker,
    family: &'a F,
    bounds: FamilyBounds,
    target_err: f64,
    depth_cap: usize,
    /// `C′ = α C (1.1 L) / (1 − α Q_f)`.
    c_prime: f64,
    rate: f64,
    pub pullback: PullbackSettings,
    pub pinch_tol: f64,
}

/// Inflation applied to the Lipschitz constant in `C′`.
pub const LIP_SAFETY: f64 = 1.1;

impl<'a, F: FibreMap + ?Sized> Conjugacy<'a, F> {
    pub fn new(base: &'a Baker, family: &'a F, bounds: FamilyBounds, target_err: f64) -> Result<Self> {
        let rate = base.alpha() * bounds.q_f;
        if !(rate < 1.0) {
            return Err(Error::Hypothesis(format!("α·Q_f = {rate:.6} is not below 1")));
        }
        if !(target_err > 0.0) {
            return Err(Error::Precondition("target_err must be positive".into()));
        }
        let c_prime = base.alpha() * base.contraction_prefactor() * LIP_SAFETY * bounds.lip / (1.0 - rate);
        Ok(Conjugacy {
            base,
            family,
            bounds,
            target_err,
            depth_cap: 200,
            c_prime,
            rate,
            pullback: PullbackSettings::default(),
            pinch_tol: 1e-6,
        })
    }

    pub fn with_depth_cap(mut self, cap: usize) -> Self {
        self.depth_cap = cap;
        self
    }

    pub fn c_prime(&self) -> f64 {
        self.c_prime
    }

    /// `α Q_f`.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn bounds(&self) -> &FamilyBounds {
        &self.bounds
    }

    pub fn target_err(&self) -> f64 {
        self.target_err
    }

    /// `C′ (αQ_f)ⁿ d`.
    pub fn bound(&self, n: usize, d: f64) -> f64 {
        self.c_prime * self.rate.powi(n as i32) * d
    }

    /// Smallest depth whose certified bound at distance `d` beats the target.
    pub fn depth_for(&self, d: f64) -> Result<usize> {
        if d <= 0.0 || self.bound(0, d) < self.target_err {
            return Ok(0);
        }
        let n = ((self.target_err / (self.c_prime * d)).ln() / self.rate.ln()).floor() as usize + 1;
        let n = (n.saturating_sub(1)..n + 2).find(|&k| self.bound(k, d) < self.target_err).unwrap_or(n + 2);
        if n > self.depth_cap {
            return Err(Error::Certification(format!(
                "depth {n} needed for target {:e} exceeds the cap {}",
                self.target_err, self.depth_cap
            )));
        }
        Ok(n)
    }

    /// Depth that certifies every pair on a common fibre (`d ≤ 1`).
    pub fn uniform_depth(&self) -> Result<usize> {
        self.depth_for(1.0)
    }

    /// `K(θ) = [φ⁻(θ), φ⁺(θ)]` from the pull-back.
    pub fn k_interval(&self, theta: BasePoint) -> (f64, f64) {
        let c = adaptive_pair(self.base, self.family, theta, &self.pullback);
        (c.phi_minus, c.phi_plus)
    }

    /// `σΠθ`.
    pub fn anchor(&self, theta: BasePoint) -> BasePoint {
        self.base.sigma(self.base.project(theta))
    }

    pub fn g_pair(&self, theta: BasePoint, theta2: BasePoint, n: usize, y: f64) -> Result<(f64, f64)> {
        g_n_with_derivative(self.base, self.family, theta, theta2, n, y)
    }

    /// `G_θ(y)` at the certified depth for `d(θ, σΠθ)`.
    pub fn g_limit(&self, theta: BasePoint, y: f64) -> Result<Certified> {
        let anchor = self.anchor(theta);
        let d = theta.square_distance(&anchor);
        let depth = self.depth_for(d)?;
        let value = g_n(self.base, self.family, theta, anchor, depth, y)?;
        Ok(Certified { value, depth, bound: self.bound(depth, d) })
    }

    /// `G′_θ(y)`; refused on pinched fibres, where `G_θ` need not be smooth.
    pub fn g_derivative(&self, theta: BasePoint, y: f64) -> Result<f64> {
        let (lo, hi) = self.k_interval(theta);
        if hi - lo < self.pinch_tol {
            return Err(Error::Degenerate(format!("θ = ({}, {}) is pinched", theta.xi, theta.x)));
        }
        let anchor = self.anchor(theta);
        let depth = self.depth_for(theta.square_distance(&anchor))?;
        Ok(self.g_pair(theta, anchor, depth, y)?.1)
    }

    /// The two points defining `f̂` for `Π(Sθ) = x1`: `σΠθ` and `S⁻¹σΠSθ`.
    fn hat_points(&self, x1: f64) -> (BasePoint, BasePoint) {
        let inner = self.base.inverse(self.base.sigma(x1));
        (self.base.sigma(inner.x), inner)
    }

    /// `f̂_θ(y) = f_{S⁻¹σΠSθ} ∘ G_{σΠθ, S⁻¹σΠSθ}(y)` at depth `n`, with `θ` entering
    /// only through `x1 = Π(Sθ)`.
    pub fn hat_f_at_depth(&self, x1: f64, y: f64, n: usize) -> Result<f64> {
        let (from, to) = self.hat_points(x1);
        let g = g_n(self.base, self.family, from, to, n, y)?;
        Ok(self.family.value(to, g))
    }

    pub fn hat_f(&self, x1: f64, y: f64) -> Result<Certified> {
        let (from, to) = self.hat_points(x1);
        let d = from.square_distance(&to);
        let depth = self.depth_for(d)?;
        let g = g_n(self.base, self.family, from, to, depth, y)?;
        Ok(Certified { value: self.family.value(to, g), depth, bound: self.bound(depth, d) })
    }

    pub fn hat_f_for(&self, theta: BasePoint, y: f64) -> Result<Certified> {
        self.hat_f(self.base.project(self.base.forward(theta)), y)
    }

    /// `f̂′` by central differences with step `1e-6 |K̂|`, one-sided at the ends.
    pub fn hat_f_derivative(&self, x1: f64, y: f64, n: usize) -> Result<f64> {
        let (from, _) = self.hat_points(x1);
        let (lo, hi) = self.k_interval(from);
        // pinched fibres have no width to scale by; fall back to the interval
        let width = if hi - lo > self.pinch_tol { hi - lo } else { 2.0 * self.family.half_width() };
        let h = 1e-6 * width;
        let f = |u: f64| self.hat_f_at_depth(x1, u, n);
        match (f(y + h), f(y - h)) {
            (Ok(p), Ok(q)) => Ok((p - q) / (2.0 * h)),
            (Ok(p), Err(_)) => Ok((p - f(y)?) / h),
            (Err(_), Ok(q)) => Ok((f(y)? - q) / h),
            (Err(e), Err(_)) => Err(e),
        }
    }

    /// `(φ̂⁻(θ), φ̂⁺(θ)) = G_θ(φ±(θ))`.
    pub fn hat_phi(&self, theta: BasePoint) -> Result<(f64, f64)> {
        let (lo, hi) = self.k_interval(theta);
        Ok((self.g_limit(theta, lo)?.value, self.g_limit(theta, hi)?.value))
    }

    /// Residuals of `f_θ = G⁻¹_{Sθ} ∘ f̂_θ ∘ G_θ` at `n_samples` points of `K(θ)`,
    /// all maps evaluated at one common certified depth.
    pub fn verify(&self, theta: BasePoint, n_samples: usize) -> Result<ConjugacyTable> {
        let depth = self.uniform_depth()?;
        let (lo, hi) = self.k_interval(theta);
        let anchor = self.anchor(theta);
        let s_theta = self.base.forward(theta);
        let s_anchor = self.anchor(s_theta);
        let x1 = s_theta.x;
        let n = n_samples.max(2);
        let mut rows = Vec::with_capacity(n);
        for k in 0..n {
            let y = lo + (hi - lo) * k as f64 / (n - 1) as f64;
            let (g, h) = self.g_pair(theta, anchor, depth, y)?;
            let fh = self.hat_f_at_depth(x1, g, depth)?;
            let back = g_n(self.base, self.family, s_anchor, s_theta, depth, fh)?;
            let residual = (self.family.value(theta, y) - back).abs();
            rows.push(ConjugacyRow { y, g, h, residual });
        }
        Ok(ConjugacyTable {
            theta,
            k: (lo, hi),
            depth,
            bound: self.bound(depth, theta.square_distance(&anchor)),
            rows,
        })
    }

    /// `sup_y |G_{n+1}(y) − G_n(y)|` for each `n` in `ns`, over `ys`.
    pub fn cauchy_profile(&self, theta: BasePoint, ys: &[f64], ns: std::ops::RangeInclusive<usize>) -> Result<Vec<f64>> {
        let anchor = self.anchor(theta);
        let mut out = Vec::new();
        let mut prev: Option<Vec<f64>> = None;
        for n in *ns.start()..=*ns.end() + 1 {
            let cur = ys
                .iter()
                .map(|&y| g_n(self.base, self.family, theta, anchor, n, y))
                .collect::<Result<Vec<f64>>>()?;
            if let Some(p) = prev {
                out.push(p.iter().zip(&cur).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            }
            prev = Some(cur);
        }
        Ok(out)
    }

    /// Compares `λ(φ̂±)` (via finite-difference `f̂′`) with `λ(φ±)` from
    /// independent samples.
    pub fn hat_exponent_check(&self, n_samples: usize, seed: u64) -> Result<HatExponentReport> {
        let depth = self.uniform_depth()?;
        let hat_points = sample_points(n_samples, seed);
        let direct_points = sample_points(n_samples, seed ^ 0x9e37_79b9_7f4a_7c15);
        let hat = par_map_range(n_samples, |i| -> Result<(f64, f64)> {
            let t = hat_points[i];
            let (lo, hi) = self.hat_phi(t)?;
            let x1 = self.base.forward(t).x;
            Ok((self.hat_f_derivative(x1, lo, depth)?.ln(), self.hat_f_derivative(x1, hi, depth)?.ln()))
        });
        let direct = par_map_range(n_samples, |i| {
            let t = direct_points[i];
            let (lo, hi) = self.k_interval(t);
            (self.family.deriv(t, lo).ln(), self.family.deriv(t, hi).ln())
        });
        let hat: Vec<(f64, f64)> = hat.into_iter().collect::<Result<_>>()?;
        let est = |v: &[(f64, f64)], upper: bool| {
            let xs: Vec<f64> = v.iter().map(|p| if upper { p.1 } else { p.0 }).collect();
            Estimate::from_samples(&xs)
        };
        Ok(HatExponentReport {
            hat_lower: est(&hat, false),
            hat_upper: est(&hat, true),
            lower: est(&direct, false),
            upper: est(&direct, true),
            depth,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugacyRow {
    pub y: f64,
    /// `G_θ(y)`.
    pub g: f64,
    /// `G′_θ(y)`.
    pub h: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugacyTable {
    pub theta: BasePoint,
    pub k: (f64, f64),
    pub depth: usize,
    pub bound: f64,
    pub rows: Vec<ConjugacyRow>,
}

impl ConjugacyTable {
    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HatExponentReport {
    pub hat_lower: Estimate,
    pub hat_upper: Estimate,
    pub lower: Estimate,
    pub upper: Estimate,
    pub depth: usize,
}

impl HatExponentReport {
    /// `|λ(φ̂) − λ(φ)|` and the combined standard error, lower then upper.
    pub fn differences(&self) -> [(f64, f64); 2] {
        let diff = |a: &Estimate, b: &Estimate| ((a.mean - b.mean).abs(), a.stderr.hypot(b.stderr));
        [diff(&self.hat_lower, &self.lower), diff(&self.hat_upper, &self.upper)]
    }
}
