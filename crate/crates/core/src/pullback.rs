//! Bounding invariant graphs `φ±ₙ(θ) = fⁿ_{S⁻ⁿθ}(±M)` by pull-back, grid
//! fields of them, the invariance residual and the separating graph `φ*`.

use std::io::{self, Write};

use crate::base_maps::{backward_orbit, BaseMap, BasePoint};
use crate::error::{Error, Result};
use crate::fibre_maps::FibreMap;
use crate::numeric::{par_map_range, sig17};

/// Slack allowed in the monotone-convergence checks.
pub const MONOTONE_SLACK: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PullbackSettings {
    /// Maximum pull-back depth.
    pub depth: usize,
    /// A cell stops once one probe step changes both bounds by less than this.
    pub stop_tol: f64,
    /// Depth increment between convergence probes.
    pub probe_step: usize,
}

impl Default for PullbackSettings {
    fn default() -> Self {
        PullbackSettings { depth: 60, stop_tol: 1e-10, probe_step: 10 }
    }
}

impl PullbackSettings {
    pub fn with_depth(depth: usize) -> Self {
        PullbackSettings { depth, ..Default::default() }
    }
}

/// Cell-centred grid over the torus, `n_xi` columns by `n_x` rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub n_xi: usize,
    pub n_x: usize,
}

impl Grid {
    pub fn new(n_xi: usize, n_x: usize) -> Result<Self> {
        if n_xi < 2 || n_x < 2 {
            return Err(Error::Precondition(format!("grid {n_xi}x{n_x} is smaller than 2x2")));
        }
        Ok(Grid { n_xi, n_x })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn len(&self) -> usize {
        self.n_xi * self.n_x
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major index: rows are constant `x`.
    #[inline]
    pub fn index(&self, i_xi: usize, j_x: usize) -> usize {
        j_x * self.n_xi + i_xi
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.n_xi, idx / self.n_xi)
    }

    pub fn xi_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.n_xi as f64
    }

    pub fn x_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.n_x as f64
    }

    pub fn center(&self, idx: usize) -> BasePoint {
        let (i, j) = self.coords(idx);
        BasePoint::new(self.xi_center(i), self.x_center(j))
    }

    /// The cell containing `p`, i.e. the nearest cell centre.
    pub fn locate(&self, p: BasePoint) -> usize {
        let i = ((p.xi * self.n_xi as f64) as usize).min(self.n_xi - 1);
        let j = ((p.x * self.n_x as f64) as usize).min(self.n_x - 1);
        self.index(i, j)
    }

    /// The coarser of the two cell widths.
    pub fn pitch(&self) -> f64 {
        (1.0 / self.n_xi as f64).max(1.0 / self.n_x as f64)
    }
}

/// `(φ⁻ₙ(θ), φ⁺ₙ(θ))` at exactly depth `n`.
pub fn bounding_pair<B, F>(base: &B, family: &F, theta: BasePoint, n: usize) -> (f64, f64)
where
    B: BaseMap + ?Sized,
    F: FibreMap + ?Sized,
{
    let orbit = backward_orbit(base, theta, n);
    let m = family.half_width();
    let mut v = [-m, m];
    for k in (1..=n).rev() {
        family.apply(orbit[k], &mut v);
    }
    (v[0], v[1])
}

/// `(φ⁻ₖ(θ), φ⁺ₖ(θ))` for every `k = 0..=n`. Quadratic cost; meant for checks.
pub fn bounding_sequence<B, F>(base: &B, family: &F, theta: BasePoint, n: usize) -> Vec<(f64, f64)>
where
    B: BaseMap + ?Sized,
    F: FibreMap + ?Sized,
{
    let orbit = backward_orbit(base, theta, n);
    let m = family.half_width();
    (0..=n)
        .map(|depth| {
            let mut v = [-m, m];
            for k in (1..=depth).rev() {
                family.apply(orbit[k], &mut v);
            }
            (v[0], v[1])
        })
        .collect()
}

/// Converged bounds at one base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellValue {
    pub phi_minus: f64,
    pub phi_plus: f64,
    pub depth: usize,
    /// Probes at which `φ⁺` rose or `φ⁻` fell by more than [`MONOTONE_SLACK`].
    pub monotone_violations: usize,
}

/// Pull-back with adaptive early stop.
///
/// Each probe pushes `±M` and `f_{S⁻ⁿθ}(±M)` through the same `n - 1` outer
/// maps, giving depths `n - 1` and `n` in one pass.
pub fn adaptive_pair<B, F>(base: &B, family: &F, theta: BasePoint, settings: &PullbackSettings) -> CellValue
where
    B: BaseMap + ?Sized,
    F: FibreMap + ?Sized,
{
    let m = family.half_width();
    let max_depth = settings.depth;
    if max_depth == 0 {
        return CellValue { phi_minus: -m, phi_plus: m, depth: 0, monotone_violations: 0 };
    }
    let orbit = backward_orbit(base, theta, max_depth);
    let step = settings.probe_step.max(1);
    let mut violations = 0;
    let mut last = (-m, m);
    let mut n = step.min(max_depth);
    loop {
        // [φ⁻ₙ₋₁, φ⁺ₙ₋₁, φ⁻ₙ, φ⁺ₙ]
        let mut v = [-m, m, -m, m];
        family.apply(orbit[n], &mut v[2..]);
        for k in (1..n).rev() {
            family.apply(orbit[k], &mut v);
        }
        let (lo_prev, hi_prev, lo, hi) = (v[0], v[1], v[2], v[3]);
        if hi > hi_prev + MONOTONE_SLACK || lo < lo_prev - MONOTONE_SLACK {
            violations += 1;
        }
        if hi > last.1 + MONOTONE_SLACK || lo < last.0 - MONOTONE_SLACK {
            violations += 1;
        }
        last = (lo, hi);
        let change = (hi_prev - hi).max(lo - lo_prev);
        if change < settings.stop_tol || n == max_depth {
            return CellValue { phi_minus: lo, phi_plus: hi, depth: n, monotone_violations: violations };
        }
        n = (n + step).min(max_depth);
    }
}

/// Bounding graphs sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphField {
    pub grid: Grid,
    pub phi_minus: Vec<f64>,
    pub phi_plus: Vec<f64>,
    pub depth: Vec<usize>,
    pub settings: PullbackSettings,
    pub monotone_violations: usize,
    /// Free-form description of the family and base.
    pub description: String,
}

impl GraphField {
    pub fn gap(&self, idx: usize) -> f64 {
        self.phi_plus[idx] - self.phi_minus[idx]
    }

    pub fn gaps(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.gap(i)).collect()
    }

    pub fn max_depth_reached(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// CSV with columns `xi,x,phi_minus,phi_plus,depth,gap`, preceded by the
    /// given `#` comment lines.
    pub fn write_csv<W: Write>(&self, w: &mut W, header: &[String]) -> io::Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "xi,x,phi_minus,phi_plus,depth,gap")?;
        for idx in 0..self.grid.len() {
            let t = self.grid.center(idx);
            writeln!(
                w,
                "{},{},{},{},{},{}",
                sig17(t.xi),
                sig17(t.x),
                sig17(self.phi_minus[idx]),
                sig17(self.phi_plus[idx]),
                self.depth[idx],
                sig17(self.gap(idx))
            )?;
        }
        Ok(())
    }
}

/// Computes [`adaptive_pair`] at every cell centre.
pub fn field<B, F>(base: &B, family: &F, grid: Grid, settings: &PullbackSettings) -> GraphField
where
    B: BaseMap + ?Sized,
    F: FibreMap + ?Sized,
{
    let cells = par_map_range(grid.len(), |idx| adaptive_pair(base, family, grid.center(idx), settings));
    GraphField {
        grid,
        phi_minus: cells.iter().map(|c| c.phi_minus).collect(),
        phi_plus: cells.iter().map(|c| c.phi_plus).collect(),
        depth: cells.iter().map(|c| c.depth).collect(),
        settings: *settings,
        monotone_violations: cells.iter().map(|c| c.monotone_violations).sum(),
        description: format!("{} over {}", family.name(), base.name()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceResidual {
    /// `sup |f_θ(φ±(θ)) − φ±(Sθ)|` with `φ±(Sθ)` read from the containing cell.
    pub sup: f64,
    pub cell: usize,
    /// Whether the supremum came from the upper graph.
    pub upper: bool,
}

pub fn invariance_residual<B, F>(base: &B, family: &F, field: &GraphField) -> InvarianceResidual
where
    B: BaseMap + ?Sized,
    F: FibreMap + ?Sized,
{
    let grid = field.grid;
    let per_cell = par_map_range(grid.len(), |idx| {
        let t = grid.center(idx);
        let target = grid.locate(base.forward(t));
        let lo = (family.value(t, field.phi_minus[idx]) - field.phi_minus[target]).abs();
        let hi = (family.value(t, field.phi_plus[idx]) - field.phi_plus[target]).abs();
        (lo, hi)
    });
    let mut best = InvarianceResidual { sup: 0.0, cell: 0, upper: false };
    for (idx, (lo, hi)) in per_cell.into_iter().enumerate() {
        if lo > best.sup {
            best = InvarianceResidual { sup: lo, cell: idx, upper: false };
        }
        if hi > best.sup {
            best = InvarianceResidual { sup: hi, cell: idx, upper: true };
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparatorSettings {
    /// Minimum forward horizon before a probe may be classified.
    pub horizon: usize,
    /// Hard cap; beyond it probes are classified by the nearer bound.
    pub max_horizon: usize,
    /// Bisection stops once the bracket is narrower than this.
    pub tol: f64,
    /// Fibres with a gap below this are treated as pinched.
    pub pinch_tol: f64,
    pub pullback: PullbackSettings,
}

impl Default for SeparatorSettings {
    fn default() -> Self {
        SeparatorSettings {
            horizon: 40,
            max_horizon: 4000,
            tol: 1e-10,
            pinch_tol: 1e-6,
            pullback: PullbackSettings::default(),
        }
    }
}

/// A resolved value of `φ*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparatorSample {
    pub theta: BasePoint,
    pub value: f64,
    pub phi_minus: f64,
    pub phi_plus: f64,
    pub bracket_width: f64,
    /// Longest forward horizon any probe needed.
    pub horizon_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeparatorOutcome {
    Resolved(SeparatorSample),
    /// No separator could be resolved: the fibre is pinched, or every probe
    /// fell into the same basin.
    Degenerate { theta: BasePoint, phi_minus: f64, phi_plus: f64, reason: &'static str },
}

impl SeparatorOutcome {
    pub fn resolved(&self) -> Option<&SeparatorSample> {
        match self {
            SeparatorOutcome::Resolved(s) => Some(s),
            SeparatorOutcome::Degenerate { .. } => None,
        }
    }
}

/// Fraction of the current gap within which a probe counts as captured.
const CAPTURE: f64 = 0.1;

/// Locates `φ*(θ)` by bisection on the basins of `φ⁻` and `φ⁺`.
///
/// The bounds are carried forward together with the probe, using
/// `φ±(Sⁿθ) = fⁿ_θ(φ±(θ))`, so no pull-back is needed along the orbit.
pub fn separator<B, F>(base: &B, family: &F, theta: BasePoint, settings: &SeparatorSettings) -> Result<SeparatorOutcome>
where
    B: BaseMap + ?Sized,
    F: FibreMap + ?Sized,
{
    if settings.horizon == 0 {
        return Err(Error::Precondition("separator horizon must be at least 1".into()));
    }
    let cell = adaptive_pair(base, family, theta, &settings.pullback);
    let (lo0, hi0) = (cell.phi_minus, cell.phi_plus);
    if hi0 - lo0 < settings.pinch_tol {
        return Ok(SeparatorOutcome::Degenerate { theta, phi_minus: lo0, phi_plus: hi0, reason: "pinched fibre" });
    }
    let max_h = settings.max_horizon.max(settings.horizon);
    let mut orbit = vec![theta];
    let mut used = 0usize;

    // true when the probe ends up in the basin of φ⁺
    let mut goes_up = |y0: f64| -> bool {
        let mut v = [lo0, hi0, y0];
        for n in 1..=max_h {
            if orbit.len() < n {
                let next = base.forward(orbit[n - 2]);
                orbit.push(next);
            }
            family.apply(orbit[n - 1], &mut v);
            if n >= settings.horizon {
                let gap = v[1] - v[0];
                if v[2] - v[0] < CAPTURE * gap {
                    used = used.max(n);
                    return false;
                }
                if v[1] - v[2] < CAPTURE * gap {
                    used = used.max(n);
                    return true;
                }
            }
        }
        used = max_h;
        v[2] - v[0] >= v[1] - v[2]
    };

    let (mut lo, mut hi) = (lo0, hi0);
    while hi - lo > settings.tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if goes_up(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let value = 0.5 * (lo + hi);
    let width = hi - lo;
    if value - lo0 <= 2.0 * settings.tol.max(width) || hi0 - value <= 2.0 * settings.tol.max(width) {
        return Ok(SeparatorOutcome::Degenerate {
            theta,
            phi_minus: lo0,
            phi_plus: hi0,
            reason: "all probes classify identically",
        });
    }
    Ok(SeparatorOutcome::Resolved(SeparatorSample {
        theta,
        value,
        phi_minus: lo0,
        phi_plus: hi0,
        bracket_width: width,
        horizon_used: used,
    }))
}
