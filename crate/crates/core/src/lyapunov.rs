//! Fibre Lyapunov exponents of invariant graphs and the three-case
//! classification of the bounding graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::base_maps::{BaseMap, BasePoint};
use crate::error::{Error, Result};
use crate::fibre_maps::FibreMap;
use crate::numeric::{pairwise_sum, par_map_range, Estimate};
use crate::pullback::{adaptive_pair, field, separator, Grid, PullbackSettings, SeparatorSettings};

fn log_deriv<F: FibreMap + ?Sized>(family: &F, theta: BasePoint, y: f64) -> Result<f64> {
    let d = family.deriv(theta, y);
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Family(format!(
            "f' = {d} at θ = ({}, {}), y = {y}; fibre maps must be strictly increasing",
            theta.xi, theta.x
        )));
    }
    Ok(d.ln())
}

/// `(1/n) Σ_{k<n} log f′_{Sᵏθ}(fᵏ_θ(y))`.
pub fn pointwise_exponent<B, F>(base: &B, family: &F, theta: BasePoint, y: f64, n: usize) -> Result<f64>
where
    B: BaseMap + ?Sized,
    F: FibreMap + ?Sized,
{
    if n == 0 {
        return Err(Error::Precondition("pointwise exponent needs n >= 1".into()));
    }
    let m = family.half_width();
    if !(y.abs() <= m) {
        return Err(Error::Domain { y, m });
    }
    let mut logs = Vec::with_capacity(n);
    let (mut t, mut v) = (theta, y);
    for _ in 0..n {
        logs.push(log_deriv(family, t, v)?);
        v = family.value(t, v);
        t = base.forward(t);
    }
    Ok(pairwise_sum(&logs) / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphKind {
    Lower,
    Upper,
    Separator,
}

impl GraphKind {
    pub fn label(self) -> &'static str {
        match self {
            GraphKind::Lower => "phi_minus",
            GraphKind::Upper => "phi_plus",
            GraphKind::Separator => "phi_star",
        }
    }
}

/// Value of the chosen graph at `θ`, or `None` where the separator is not
/// resolvable.
pub fn graph_value<B, F>(
    base: &B,
    family: &F,
    kind: GraphKind,
    theta: BasePoint,
    settings: &SeparatorSettings,
) -> Result<Option<f64>>
where
    B: BaseMap + ?Sized,
    F: FibreMap + ?Sized,
{
    Ok(match kind {
        GraphKind::Lower => Some(adaptive_pair(base, family, theta, &settings.pullback).phi_minus),
        GraphKind::Upper => Some(adaptive_pair(base, family, theta, &settings.pullback).phi_plus),
        GraphKind::Separator => separator(base, family, theta, settings)?.resolved().map(|s| s.value),
    })
}

/// Uniform (Lebesgue) sample of the torus from a seeded generator.
pub fn sample_points(n: usize, seed: u64) -> Vec<BasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| BasePoint::new(rng.random::<f64>(), rng.random::<f64>())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphExponent {
    pub kind: GraphKind,
    pub estimate: Estimate,
    pub seed: u64,
    /// `(θ, φ(θ), log f′_θ(φ(θ)))` per used sample.
    pub samples: Vec<(BasePoint, f64, f64)>,
    /// Samples where the graph could not be evaluated.
    pub skipped: usize,
}

/// Space average of `log f′_θ(φ(θ))` over `n_samples` uniform `θ`, with
/// `φ(θ)` computed at the sample point itself.
pub fn graph_exponent<B, F>(
    base: &B,
    family: &F,
    kind: GraphKind,
    n_samples: usize,
    seed: u64,
    settings: &SeparatorSettings,
) -> Result<GraphExponent>
where
    B: BaseMap + ?Sized,
    F: FibreMap + ?Sized,
{
    let points = sample_points(n_samples, seed);
    let values = par_map_range(points.len(), |i| -> Result<Option<(BasePoint, f64, f64)>> {
        let t = points[i];
        match graph_value(base, family, kind, t, settings)? {
            Some(y) => Ok(Some((t, y, log_deriv(family, t, y)?))),
            None => Ok(None),
        }
    });
    let mut samples = Vec::with_capacity(n_samples);
    let mut skipped = 0;
    for v in values {
        match v? {
            Some(s) => samples.push(s),
            None => skipped += 1,
        }
    }
    let logs: Vec<f64> = samples.iter().map(|s| s.2).collect();
    Ok(GraphExponent { kind, estimate: Estimate::from_samples(&logs), seed, samples, skipped })
}

/// Time average of `log f′` along one forward orbit started on the graph.
/// The standard error comes from `batches` equal batch means.
pub fn birkhoff_exponent<B, F>(
    base: &B,
    family: &F,
    kind: GraphKind,
    theta: BasePoint,
    n: usize,
    batches: usize,
    settings: &SeparatorSettings,
) -> Result<Estimate>
where
    B: BaseMap + ?Sized,
    F: FibreMap + ?Sized,
{
    let batches = batches.max(2);
    if n < batches {
        return Err(Error::Precondition(format!("orbit length {n} shorter than {batches} batches")));
    }
    let y0 = graph_value(base, family, kind, theta, settings)?
        .ok_or_else(|| Error::Degenerate("graph undefined at the orbit's start".into()))?;
    let mut logs = Vec::with_capacity(n);
    let (mut t, mut y) = (theta, y0);
    for _ in 0..n {
        logs.push(log_deriv(family, t, y)?);
        y = family.value(t, y);
        t = base.forward(t);
    }
    let len = n / batches;
    let means: Vec<f64> = (0..batches).map(|b| pairwise_sum(&logs[b * len..(b + 1) * len]) / len as f64).collect();
    Ok(Estimate::from_samples(&means))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// `φ⁻ = φ* = φ⁺` almost surely.
    One,
    /// `φ⁻ = φ* < φ⁺`, lower graph neutral.
    TwoLower,
    /// `φ⁻ < φ* = φ⁺`, upper graph neutral.
    TwoUpper,
    Three,
    Undetermined,
}

impl Case {
    pub fn label(self) -> &'static str {
        match self {
            Case::One => "one",
            Case::TwoLower => "two_lower",
            Case::TwoUpper => "two_upper",
            Case::Three => "three",
            Case::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sign {
    Negative,
    Zero,
    Positive,
    Unclear,
}

/// Sign at `tol_zero`, demanding three standard errors of separation.
fn sign(e: &Estimate, tol_zero: f64) -> Sign {
    let band = 3.0 * e.stderr;
    if !e.mean.is_finite() {
        Sign::Unclear
    } else if e.mean + band < -tol_zero {
        Sign::Negative
    } else if e.mean - band > tol_zero {
        Sign::Positive
    } else if e.mean.abs() + band <= tol_zero {
        Sign::Zero
    } else {
        Sign::Unclear
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifySettings {
    pub grid: Grid,
    pub tol_pinch: f64,
    pub tol_zero: f64,
    pub n_samples: usize,
    /// Samples for the separator exponent, which costs a bisection each.
    pub separator_samples: usize,
    pub seed: u64,
    pub separator: SeparatorSettings,
}

impl Default for ClassifySettings {
    fn default() -> Self {
        ClassifySettings {
            grid: Grid { n_xi: 50, n_x: 50 },
            tol_pinch: 1e-6,
            tol_zero: 1e-3,
            n_samples: 10_000,
            separator_samples: 500,
            seed: 0,
            separator: SeparatorSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Fraction of cells with gap at least `tol_pinch`.
    pub open_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub case: Case,
    pub lower: Estimate,
    pub upper: Estimate,
    pub separator: Option<Estimate>,
    /// Fraction of separator samples where the bisection resolved.
    pub separator_resolved: Option<f64>,
    pub gap: GapStats,
    pub monotone_violations: usize,
    pub tol_pinch: f64,
    pub tol_zero: f64,
    pub seed: u64,
}

impl ClassificationReport {
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut out = vec![("case".to_string(), self.case.label().to_string())];
        let mut est = |name: &str, e: &Estimate| {
            out.push((format!("lambda_{name}"), format!("{:.10e}", e.mean)));
            out.push((format!("lambda_{name}_stderr"), format!("{:.3e}", e.stderr)));
            out.push((format!("lambda_{name}_samples"), e.samples.to_string()));
        };
        est("phi_minus", &self.lower);
        est("phi_plus", &self.upper);
        if let Some(s) = &self.separator {
            est("phi_star", s);
        }
        if let Some(f) = self.separator_resolved {
            out.push(("separator_resolved_fraction".into(), format!("{f:.4}")));
        }
        out.push(("gap_mean".into(), format!("{:.10e}", self.gap.mean)));
        out.push(("gap_min".into(), format!("{:.10e}", self.gap.min)));
        out.push(("gap_max".into(), format!("{:.10e}", self.gap.max)));
        out.push(("gap_open_fraction".into(), format!("{:.4}", self.gap.open_fraction)));
        out.push(("monotone_violations".into(), self.monotone_violations.to_string()));
        out.push(("tol_pinch".into(), format!("{:e}", self.tol_pinch)));
        out.push(("tol_zero".into(), format!("{:e}", self.tol_zero)));
        out.push(("seed".into(), self.seed.to_string()));
        out
    }
}

/// Assigns one of the three cases from gap statistics and exponent signs.
pub fn classify<B, F>(base: &B, family: &F, settings: &ClassifySettings) -> Result<ClassificationReport>
where
    B: BaseMap + ?Sized,
    F: FibreMap + ?Sized,
{
    let fld = field(base, family, settings.grid, &settings.separator.pullback);
    let gaps = fld.gaps();
    let gap = GapStats {
        mean: pairwise_sum(&gaps) / gaps.len() as f64,
        min: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        max: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        open_fraction: gaps.iter().filter(|&&g| g >= settings.tol_pinch).count() as f64 / gaps.len() as f64,
    };
    let seed = settings.seed;
    let sep_settings = SeparatorSettings { pinch_tol: settings.tol_pinch, ..settings.separator };
    let lower = graph_exponent(base, family, GraphKind::Lower, settings.n_samples, seed, &sep_settings)?.estimate;
    let upper =
        graph_exponent(base, family, GraphKind::Upper, settings.n_samples, seed.wrapping_add(1), &sep_settings)?.estimate;

    let (mut separator_est, mut resolved) = (None, None);
    if gap.open_fraction > 0.5 {
        let g = graph_exponent(
            base,
            family,
            GraphKind::Separator,
            settings.separator_samples,
            seed.wrapping_add(2),
            &sep_settings,
        )?;
        let total = g.samples.len() + g.skipped;
        resolved = Some(if total == 0 { 0.0 } else { g.samples.len() as f64 / total as f64 });
        if !g.samples.is_empty() {
            separator_est = Some(g.estimate);
        }
    }

    let (sl, su) = (sign(&lower, settings.tol_zero), sign(&upper, settings.tol_zero));
    let case = if gap.mean < settings.tol_pinch {
        if matches!(sl, Sign::Positive) || matches!(su, Sign::Positive) {
            Case::Undetermined
        } else {
            Case::One
        }
    } else if gap.open_fraction <= 0.5 {
        Case::Undetermined
    } else {
        match (sl, su) {
            (Sign::Negative, Sign::Negative) => match separator_est.as_ref().map(|e| sign(e, settings.tol_zero)) {
                Some(Sign::Positive) if resolved.unwrap_or(0.0) >= 0.5 => Case::Three,
                _ => Case::Undetermined,
            },
            (Sign::Zero, Sign::Negative) => Case::TwoLower,
            (Sign::Negative, Sign::Zero) => Case::TwoUpper,
            _ => Case::Undetermined,
        }
    };
    Ok(ClassificationReport {
        case,
        lower,
        upper,
        separator: separator_est,
        separator_resolved: resolved,
        gap,
        monotone_violations: fld.monotone_violations,
        tol_pinch: settings.tol_pinch,
        tol_zero: settings.tol_zero,
        seed,
    })
}

/// Convenience: exponent of a graph at the default pull-back settings.
pub fn graph_exponent_default<B, F>(base: &B, family: &F, kind: GraphKind, n_samples: usize, seed: u64) -> Result<GraphExponent>
where
    B: BaseMap + ?Sized,
    F: FibreMap + ?Sized,
{
    let settings = SeparatorSettings { pullback: PullbackSettings::default(), ..Default::default() };
    graph_exponent(base, family, kind, n_samples, seed, &settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_maps::Baker;
    use crate::fibre_maps::{AffineCosine, ArctanCosine};

    fn y_star() -> f64 {
        let (mut a, mut b) = (0.1f64, 0.86f64);
        for _ in 0..200 {
            let c = 0.5 * (a + b);
            if (1.1 * c).atan() > c {
                a = c
            } else {
                b = c
            }
        }
        0.5 * (a + b)
    }

    fn baker() -> Baker {
        Baker::new(0.5).unwrap()
    }

    #[test]
    fn pointwise_at_repelling_fixed_point() {
        let f = ArctanCosine::new(1.1, 0.0, 0.86).unwrap();
        for n in [1, 7, 100] {
            let l = pointwise_exponent(&baker(), &f, BasePoint::new(0.3, 0.2), 0.0, n).unwrap();
            assert!((l - 1.1f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn pointwise_at_attracting_fixed_point() {
        let f = ArctanCosine::new(1.1, 0.0, 0.86).unwrap();
        let ys = y_star();
        let expect = (1.1 / (1.0 + 1.21 * ys * ys)).ln();
        assert!((expect + 0.185394).abs() < 1e-6);
        let l = pointwise_exponent(&baker(), &f, BasePoint::new(0.3, 0.2), ys, 50).unwrap();
        assert!((l - expect).abs() < 1e-10);
    }

    #[test]
    fn pointwise_affine_is_log_lambda() {
        let f = AffineCosine::new(0.6, 2.6).unwrap();
        let l = pointwise_exponent(&baker(), &f, BasePoint::new(0.9, 0.1), 1.3, 33).unwrap();
        assert!((l - 0.6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn pointwise_rejects_bad_input() {
        let f = AffineCosine::new(0.6, 2.6).unwrap();
        assert!(pointwise_exponent(&baker(), &f, BasePoint::new(0.0, 0.0), 0.0, 0).is_err());
        assert!(matches!(
            pointwise_exponent(&baker(), &f, BasePoint::new(0.0, 0.0), 3.0, 5),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn unforced_graph_exponents() {
        let f = ArctanCosine::new(1.1, 0.0, 0.86).unwrap();
        let ys = y_star();
        let expect = (1.1 / (1.0 + 1.21 * ys * ys)).ln();
        let up = graph_exponent_default(&baker(), &f, GraphKind::Upper, 2000, 7).unwrap();
        assert!((up.estimate.mean - expect).abs() < 1e-4);
        let sep = graph_exponent_default(&baker(), &f, GraphKind::Separator, 50, 7).unwrap();
        assert_eq!(sep.skipped, 0);
        assert!((sep.estimate.mean - 1.1f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn birkhoff_matches_space_average_unforced() {
        let f = ArctanCosine::new(1.1, 0.0, 0.86).unwrap();
        let s = SeparatorSettings { pullback: PullbackSettings::with_depth(200), ..Default::default() };
        let time = birkhoff_exponent(&baker(), &f, GraphKind::Upper, BasePoint::new(0.2, 0.7), 10_000, 10, &s).unwrap();
        let space = graph_exponent(&baker(), &f, GraphKind::Upper, 1000, 3, &s).unwrap().estimate;
        let band = 3.0 * (time.stderr.powi(2) + space.stderr.powi(2)).sqrt();
        // the space average sees φ⁺ only up to the pull-back stop: a one-step
        // change below 1e-10 at contraction 0.83 leaves ~6e-10 in y, and
        // |(log f′)′| ≤ 1.1 carries that into the exponent
        let bias = 1.1 * s.pullback.stop_tol / (1.0 - 0.83);
        assert!((time.mean - space.mean).abs() <= band + bias, "{time:?} {space:?}");
    }

    #[test]
    fn sampling_is_reproducible() {
        assert_eq!(sample_points(10, 42), sample_points(10, 42));
        assert_ne!(sample_points(10, 42), sample_points(10, 43));
    }

    #[test]
    fn classify_unforced_is_case_three() {
        let f = ArctanCosine::new(1.1, 0.0, 0.86).unwrap();
        let settings = ClassifySettings {
            grid: Grid::square(10).unwrap(),
            n_samples: 500,
            separator_samples: 20,
            ..Default::default()
        };
        let r = classify(&baker(), &f, &settings).unwrap();
        assert_eq!(r.case, Case::Three);
        assert_eq!(r.separator_resolved, Some(1.0));
    }

    #[test]
    fn classify_affine_is_case_one() {
        let f = AffineCosine::new(0.6, 2.6).unwrap();
        let settings = ClassifySettings {
            grid: Grid::square(10).unwrap(),
            n_samples: 200,
            ..Default::default()
        };
        let r = classify(&baker(), &f, &settings).unwrap();
        assert_eq!(r.case, Case::One);
        assert!((r.upper.mean - 0.6f64.ln()).abs() < 1e-12);
        assert!(r.separator.is_none());
    }

    #[test]
    fn sign_rules() {
        let e = |mean, stderr| Estimate { mean, stderr, samples: 10 };
        assert_eq!(sign(&e(-0.2, 0.01), 1e-3), Sign::Negative);
        assert_eq!(sign(&e(0.2, 0.01), 1e-3), Sign::Positive);
        assert_eq!(sign(&e(0.0, 1e-5), 1e-3), Sign::Zero);
        assert_eq!(sign(&e(0.002, 1e-3), 1e-3), Sign::Unclear);
    }
}
