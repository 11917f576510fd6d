//! Pinch sets `{θ : φ⁻(θ) = φ⁺(θ)}` on a grid, the discontinuity lines of
//! the Baker pull-back, semicontinuous envelopes and the structural checks.

use crate::base_maps::{Baker, BaseMap, BasePoint, CatMap};
use crate::error::{Error, Result};
use crate::fibre_maps::FibreMap;
use crate::numeric::par_map_range;
use crate::pullback::{adaptive_pair, GraphField, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    SubsetOfL,
    DenseCandidate,
    Empty,
    Inconclusive,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::SubsetOfL => "subset_of_L",
            Verdict::DenseCandidate => "dense_candidate",
            Verdict::Empty => "empty",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PinchReport {
    pub tol: f64,
    pub grid: Grid,
    /// Indices of pinched cells, increasing.
    pub pinched: Vec<usize>,
    pub fraction: f64,
    /// Fraction of pinched cells whose whole `ξ`-row is pinched.
    pub fibre_score: Option<f64>,
    /// Fraction of pinched cells whose `S`-image is pinched: it lands within
    /// one cell of a pinched cell or, when the family is supplied, the
    /// pull-back at the exact image point has gap below `tol`.
    pub forward_invariance: Option<f64>,
    pub backward_invariance: Option<f64>,
    /// The same scores from grid lookup alone.
    pub forward_invariance_grid: Option<f64>,
    pub backward_invariance_grid: Option<f64>,
    /// Largest distance from a pinched row to the nearest discontinuity line.
    pub line_distance: Option<f64>,
    /// Largest `ξ`-variation of the gap inside a fully pinched row.
    pub xi_variation: Option<f64>,
    /// Fraction of pinched cells within one cell of an envelope-pinched cell or a line.
    pub envelope_consistency: Option<f64>,
    pub verdict: Verdict,
}

impl PinchReport {
    pub fn is_pinched(&self, idx: usize) -> bool {
        self.pinched.binary_search(&idx).is_ok()
    }

    pub fn key_values(&self) -> Vec<(String, String)> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "n/a".into());
        vec![
            ("tol".into(), format!("{:e}", self.tol)),
            ("cells".into(), self.grid.len().to_string()),
            ("pinched_cells".into(), self.pinched.len().to_string()),
            ("fraction_pinched".into(), format!("{:.6}", self.fraction)),
            ("fibre_score".into(), opt(self.fibre_score)),
            ("forward_invariance".into(), opt(self.forward_invariance)),
            ("backward_invariance".into(), opt(self.backward_invariance)),
            ("forward_invariance_grid".into(), opt(self.forward_invariance_grid)),
            ("backward_invariance_grid".into(), opt(self.backward_invariance_grid)),
            ("max_line_distance".into(), opt(self.line_distance)),
            ("max_xi_variation".into(), self.xi_variation.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "n/a".into())),
            ("envelope_consistency".into(), opt(self.envelope_consistency)),
            ("verdict".into(), self.verdict.label().into()),
            (
                "verdict_rule".into(),
                "heuristic: subset_of_L if every pinched row lies within one pitch of a line, dense_candidate if pinched rows meet more than half of the coarse x-bins".into(),
            ),
        ]
    }
}

/// Marks cells with gap below `tol`; with `tol = 0` only exact ties count.
pub fn pinch_cells(field: &GraphField, tol: f64) -> PinchReport {
    let pinched: Vec<usize> = (0..field.grid.len())
        .filter(|&i| {
            let g = field.gap(i);
            g < tol || g <= 0.0
        })
        .collect();
    let fraction = pinched.len() as f64 / field.grid.len() as f64;
    PinchReport {
        tol,
        grid: field.grid,
        verdict: if pinched.is_empty() { Verdict::Empty } else { Verdict::Inconclusive },
        pinched,
        fraction,
        fibre_score: None,
        forward_invariance: None,
        backward_invariance: None,
        forward_invariance_grid: None,
        backward_invariance_grid: None,
        line_distance: None,
        xi_variation: None,
        envelope_consistency: None,
    }
}

/// Horizontal lines `𝔸 × {z}` given by their `x`-values.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscontinuityLines {
    pub n: usize,
    pub xs: Vec<f64>,
}

impl DiscontinuityLines {
    /// Circle distance from `x` to the nearest line.
    pub fn distance(&self, x: f64) -> f64 {
        self.xs.iter().map(|&z| crate::base_maps::circle_distance(x, z)).fold(f64::INFINITY, f64::min)
    }
}

fn dedup_sorted(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    xs
}

/// `{τᵏ(a) : 0 ≤ k < n}`, the images of the cut line under `S⁻ᵏ`.
pub fn discontinuity_lines(base: &Baker, n: usize) -> Result<DiscontinuityLines> {
    if n == 0 {
        return Err(Error::Precondition("discontinuity lines need n >= 1".into()));
    }
    let mut xs = Vec::with_capacity(n);
    let mut z = base.a();
    for _ in 0..n {
        xs.push(z);
        z = base.tau(z);
    }
    Ok(DiscontinuityLines { n, xs: dedup_sorted(xs) })
}

/// Rows where `S⁻ⁿ` itself jumps: the preimages `τ⁻ʲ{0, a}`, `j < n`.
/// This is where `φₙ±` can be discontinuous; the set doubles with each `j`.
pub fn jump_lines(base: &Baker, n: usize) -> Result<DiscontinuityLines> {
    if n == 0 {
        return Err(Error::Precondition("jump lines need n >= 1".into()));
    }
    if n > 24 {
        return Err(Error::Precondition(format!("jump lines at depth {n} are too many to list")));
    }
    let a = base.a();
    let mut level = vec![0.0, a];
    let mut all = level.clone();
    for _ in 1..n {
        level = level.iter().flat_map(|&z| [base.rho(0, z), base.rho(1, z)]).collect();
        all.extend_from_slice(&level);
    }
    Ok(DiscontinuityLines { n, xs: dedup_sorted(all) })
}

fn wrap_index(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Lower and upper envelopes: per-cell min of `φ⁻` and max of `φ⁺` over the
/// `(2r+1)²` neighbourhood, wrapping on the torus.
pub fn envelopes(field: &GraphField, radius: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if radius == 0 {
        return Err(Error::Precondition("envelope radius must be at least 1 cell".into()));
    }
    let g = field.grid;
    let r = radius as isize;
    let mut lower = vec![0.0; g.len()];
    let mut upper = vec![0.0; g.len()];
    for idx in 0..g.len() {
        let (i, j) = g.coords(idx);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for dj in -r..=r {
            for di in -r..=r {
                let k = g.index(wrap_index(i as isize + di, g.n_xi), wrap_index(j as isize + dj, g.n_x));
                lo = lo.min(field.phi_minus[k]);
                hi = hi.max(field.phi_plus[k]);
            }
        }
        lower[idx] = lo;
        upper[idx] = hi;
    }
    Ok((lower, upper))
}

fn near_pinched(report: &PinchReport, idx: usize) -> bool {
    let g = report.grid;
    let (i, j) = g.coords(idx);
    for dj in -1..=1isize {
        for di in -1..=1isize {
            let k = g.index(wrap_index(i as isize + di, g.n_xi), wrap_index(j as isize + dj, g.n_x));
            if report.is_pinched(k) {
                return true;
            }
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureSettings {
    pub envelope_radius: usize,
    /// Coarse `x`-bins used for the density proxy.
    pub coarse_bins: usize,
}

impl Default for StructureSettings {
    fn default() -> Self {
        StructureSettings { envelope_radius: 2, coarse_bins: 20 }
    }
}

/// Fills in the structural diagnostics of a report from [`pinch_cells`].
/// `lines` are the discontinuity lines to test against (Baker only). With
/// `family`, images that miss the pinched cells are re-examined by a direct
/// pull-back at the image point, since a pinch set made of lines need not
/// pass through the cell centres of its own images.
pub fn structure_checks<B: BaseMap + ?Sized>(
    base: &B,
    family: Option<&dyn FibreMap>,
    field: &GraphField,
    mut report: PinchReport,
    lines: Option<&DiscontinuityLines>,
    settings: &StructureSettings,
) -> Result<PinchReport> {
    if report.pinched.is_empty() {
        report.verdict = Verdict::Empty;
        return Ok(report);
    }
    let g = field.grid;
    let count = report.pinched.len() as f64;

    let rows: Vec<usize> = {
        let mut r: Vec<usize> = report.pinched.iter().map(|&k| g.coords(k).1).collect();
        r.dedup();
        r
    };
    let full: Vec<bool> = (0..g.n_x).map(|j| (0..g.n_xi).all(|i| report.is_pinched(g.index(i, j)))).collect();
    let full_row = |j: usize| full[j];
    let in_full_rows = report.pinched.iter().filter(|&&k| full_row(g.coords(k).1)).count();
    report.fibre_score = Some(in_full_rows as f64 / count);

    let tol = report.tol;
    let score = |image: &(dyn Fn(BasePoint) -> BasePoint + Sync)| {
        let hits = par_map_range(report.pinched.len(), |i| {
            let p = image(g.center(report.pinched[i]));
            let on_grid = near_pinched(&report, g.locate(p));
            let exact = on_grid
                || family.is_some_and(|f| {
                    let c = adaptive_pair(base, f, p, &field.settings);
                    let gap = c.phi_plus - c.phi_minus;
                    gap < tol || gap <= 0.0
                });
            (on_grid, exact)
        });
        let grid_hits = hits.iter().filter(|h| h.0).count() as f64;
        let exact_hits = hits.iter().filter(|h| h.1).count() as f64;
        (exact_hits / count, grid_hits / count)
    };
    let (fwd, fwd_grid) = score(&|p| base.forward(p));
    let (bwd, bwd_grid) = score(&|p| base.inverse(p));
    report.forward_invariance = Some(fwd);
    report.backward_invariance = Some(bwd);
    report.forward_invariance_grid = Some(fwd_grid);
    report.backward_invariance_grid = Some(bwd_grid);

    let variation = rows
        .iter()
        .filter(|&&j| full_row(j))
        .map(|&j| {
            let gaps = (0..g.n_xi).map(|i| field.gap(g.index(i, j)));
            let (lo, hi) = gaps.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            hi - lo
        })
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    report.xi_variation = variation;

    let (env_lo, env_hi) = envelopes(field, settings.envelope_radius)?;
    let env_pinched = |k: usize| env_hi[k] - env_lo[k] < report.tol;
    let pitch = g.pitch();
    let near_line = |k: usize| lines.is_some_and(|l| l.distance(g.center(k).x) <= pitch);
    let consistent = report
        .pinched
        .iter()
        .filter(|&&k| {
            let (i, j) = g.coords(k);
            near_line(k)
                || (-1..=1isize).any(|dj| {
                    (-1..=1isize).any(|di| {
                        env_pinched(g.index(wrap_index(i as isize + di, g.n_xi), wrap_index(j as isize + dj, g.n_x)))
                    })
                })
        })
        .count();
    report.envelope_consistency = Some(consistent as f64 / count);

    let bins = settings.coarse_bins.max(1);
    let mut hit = vec![false; bins];
    for &j in &rows {
        hit[((g.x_center(j) * bins as f64) as usize).min(bins - 1)] = true;
    }
    let coverage = hit.iter().filter(|&&h| h).count() as f64 / bins as f64;

    report.verdict = match lines {
        Some(l) => {
            let dist = rows.iter().map(|&j| l.distance(g.x_center(j))).fold(0.0, f64::max);
            report.line_distance = Some(dist);
            if dist <= pitch {
                Verdict::SubsetOfL
            } else if coverage > 0.5 {
                Verdict::DenseCandidate
            } else {
                Verdict::Inconclusive
            }
        }
        None if coverage > 0.5 => Verdict::DenseCandidate,
        None => Verdict::Inconclusive,
    };
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub score: f64,
    pub pinched_cells: usize,
    pub samples: usize,
}

/// For each pinched cell, steps `reach` pitches each way along the direction
/// contracted by `S⁻¹` and counts how many landing cells are pinched, allowing
/// one cell of slack. An empty pinch set scores 1.
pub fn stable_alignment(base: &CatMap, report: &PinchReport, reach: usize) -> AlignmentReport {
    if report.pinched.is_empty() {
        return AlignmentReport { score: 1.0, pinched_cells: 0, samples: 0 };
    }
    let g = report.grid;
    let (dx, dy) = base.backward_stable_direction();
    let step = g.pitch();
    let mut hits = 0usize;
    let mut samples = 0usize;
    for &k in &report.pinched {
        let c = g.center(k);
        for s in 1..=reach as isize {
            for sign in [-1.0, 1.0] {
                let t = sign * s as f64 * step;
                let p = BasePoint::new(c.xi + t * dx, c.x + t * dy);
                samples += 1;
                if near_pinched(report, g.locate(p)) {
                    hits += 1;
                }
            }
        }
    }
    AlignmentReport {
        score: if samples == 0 { 1.0 } else { hits as f64 / samples as f64 },
        pinched_cells: report.pinched.len(),
        samples,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpReport {
    /// Row boundaries (as `x`) that carry a line, with the jump across each.
    pub line_jumps: Vec<(f64, f64)>,
    pub max_line_jump: f64,
    pub median_intra_row: f64,
    /// Row boundaries whose jump exceeds ten times the median intra-row variation.
    pub detected: Vec<f64>,
}

impl JumpReport {
    pub fn ratio(&self) -> f64 {
        self.max_line_jump / self.median_intra_row
    }
}

/// Jump heuristic: compares the largest jump of `values` across the row
/// boundaries nearest to `lines` with the median, over rows, of the largest
/// step between `ξ`-neighbours inside a row.
pub fn jump_detector(grid: Grid, values: &[f64], lines: &DiscontinuityLines) -> JumpReport {
    let across = |j: usize| {
        let j2 = (j + 1) % grid.n_x;
        (0..grid.n_xi).map(|i| (values[grid.index(i, j2)] - values[grid.index(i, j)]).abs()).fold(0.0, f64::max)
    };
    let mut intra: Vec<f64> = (0..grid.n_x)
        .map(|j| {
            (0..grid.n_xi - 1)
                .map(|i| (values[grid.index(i + 1, j)] - values[grid.index(i, j)]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    intra.sort_by(f64::total_cmp);
    let median_intra_row = if intra.len() % 2 == 1 {
        intra[intra.len() / 2]
    } else {
        0.5 * (intra[intra.len() / 2 - 1] + intra[intra.len() / 2])
    };
    let nx = grid.n_x as f64;
    let mut line_jumps: Vec<(f64, f64)> = lines
        .xs
        .iter()
        .map(|&z| {
            // boundary b sits at x = b / n_x, between rows b - 1 and b
            let b = ((z * nx).round() as usize) % grid.n_x;
            let j = (b + grid.n_x - 1) % grid.n_x;
            (b as f64 / nx, across(j))
        })
        .collect();
    line_jumps.dedup_by(|a, b| a.0 == b.0);
    let max_line_jump = line_jumps.iter().map(|p| p.1).fold(0.0, f64::max);
    let detected = (0..grid.n_x)
        .filter(|&j| across(j) > 10.0 * median_intra_row)
        .map(|j| ((j + 1) % grid.n_x) as f64 / nx)
        .collect();
    JumpReport { line_jumps, max_line_jump, median_intra_row, detected }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fibre_maps::{AffineCosine, ArctanCosine};
    use crate::pullback::{field, PullbackSettings};

    fn baker() -> Baker {
        Baker::new(0.5).unwrap()
    }

    fn synthetic(grid: Grid, gap: impl Fn(usize) -> f64) -> GraphField {
        let n = grid.len();
        GraphField {
            grid,
            phi_minus: vec![0.0; n],
            phi_plus: (0..n).map(gap).collect(),
            depth: vec![0; n],
            settings: PullbackSettings::default(),
            monotone_violations: 0,
            description: "synthetic".into(),
        }
    }

    #[test]
    fn line_examples() {
        assert_eq!(discontinuity_lines(&baker(), 1).unwrap().xs, vec![0.5]);
        assert_eq!(discontinuity_lines(&baker(), 3).unwrap().xs, vec![0.0, 0.5]);
        assert_eq!(discontinuity_lines(&Baker::new(0.3).unwrap(), 2).unwrap().xs, vec![0.0, 0.3]);
        assert!(discontinuity_lines(&baker(), 0).is_err());
        assert_eq!(jump_lines(&baker(), 2).unwrap().xs, vec![0.0, 0.25, 0.5, 0.75]);
    }

    #[test]
    fn affine_is_fully_pinched() {
        let f = AffineCosine::new(0.6, 2.6).unwrap();
        let fld = field(&baker(), &f, Grid::square(20).unwrap(), &PullbackSettings::with_depth(40));
        let r = pinch_cells(&fld, 1e-6);
        assert_eq!(r.fraction, 1.0);
        let lines = discontinuity_lines(&baker(), 40).unwrap();
        let r = structure_checks(&baker(), Some(&f), &fld, r, Some(&lines), &StructureSettings::default()).unwrap();
        assert_eq!(r.fibre_score, Some(1.0));
        assert_eq!(r.forward_invariance, Some(1.0));
        assert_eq!(r.backward_invariance, Some(1.0));
        assert_eq!(r.verdict, Verdict::DenseCandidate);
    }

    #[test]
    fn unforced_is_empty() {
        let f = ArctanCosine::new(1.1, 0.0, 0.86).unwrap();
        let fld = field(&baker(), &f, Grid::square(10).unwrap(), &PullbackSettings::default());
        let r = pinch_cells(&fld, 1e-6);
        assert_eq!(r.fraction, 0.0);
        let r = structure_checks(&baker(), None, &fld, r, None, &StructureSettings::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Empty);
    }

    #[test]
    fn zero_tolerance_marks_exact_ties() {
        let g = Grid::square(4).unwrap();
        let fld = synthetic(g, |k| if k == 5 { 0.0 } else { 1e-300 });
        assert_eq!(pinch_cells(&fld, 0.0).pinched, vec![5]);
    }

    #[test]
    fn envelope_bracket_and_growth() {
        let g = Grid::square(9).unwrap();
        let fld = synthetic(g, |k| ((k * 37) % 11) as f64);
        let (lo1, hi1) = envelopes(&fld, 1).unwrap();
        let (lo2, hi2) = envelopes(&fld, 2).unwrap();
        for k in 0..g.len() {
            assert!(hi1[k] >= fld.phi_plus[k] && lo1[k] <= fld.phi_minus[k]);
            assert!(hi2[k] >= hi1[k] && lo2[k] <= lo1[k]);
        }
        let flat = synthetic(g, |_| 0.25);
        assert_eq!(envelopes(&flat, 2).unwrap().1, flat.phi_plus);
        assert!(envelopes(&flat, 0).is_err());
    }

    #[test]
    fn single_row_is_subset_of_lines() {
        let g = Grid::square(16).unwrap();
        // row 7 has x-centre 15/32, within one pitch of the cut at 1/2
        let fld = synthetic(g, |k| if g.coords(k).1 == 7 { 0.0 } else { 1.0 });
        let lines = discontinuity_lines(&baker(), 5).unwrap();
        let r = structure_checks(&baker(), None, &fld, pinch_cells(&fld, 1e-6), Some(&lines), &StructureSettings::default())
            .unwrap();
        assert_eq!(r.fibre_score, Some(1.0));
        assert_eq!(r.verdict, Verdict::SubsetOfL);
        assert_eq!(r.xi_variation, Some(0.0));
    }

    #[test]
    fn alignment_examples() {
        let g = Grid::square(64).unwrap();
        let empty = synthetic(g, |_| 1.0);
        assert_eq!(stable_alignment(&CatMap, &pinch_cells(&empty, 1e-6), 2).score, 1.0);
        let full = synthetic(g, |_| 0.0);
        assert_eq!(stable_alignment(&CatMap, &pinch_cells(&full, 1e-6), 2).score, 1.0);
    }

    #[test]
    fn alignment_on_a_stable_segment() {
        let g = Grid::square(128).unwrap();
        let (dx, dy) = CatMap.backward_stable_direction();
        let mut marked = vec![false; g.len()];
        let len = 0.6;
        let steps = 2000;
        for s in 0..=steps {
            let t = len * s as f64 / steps as f64;
            marked[g.locate(BasePoint::new(0.2 + t * dx, 0.1 + t * dy))] = true;
        }
        let fld = synthetic(g, |k| if marked[k] { 0.0 } else { 1.0 });
        let report = pinch_cells(&fld, 1e-6);
        let line_cells = len / g.pitch();
        let a = stable_alignment(&CatMap, &report, 2);
        assert!(a.score >= 1.0 - 2.0 / line_cells, "{}", a.score);
        // a line along the other eigendirection is not aligned
        let (ux, uy) = CatMap.forward_stable_direction();
        let mut wrong = vec![false; g.len()];
        for s in 0..=steps {
            let t = len * s as f64 / steps as f64;
            wrong[g.locate(BasePoint::new(0.2 + t * ux, 0.1 + t * uy))] = true;
        }
        let fld = synthetic(g, |k| if wrong[k] { 0.0 } else { 1.0 });
        assert!(stable_alignment(&CatMap, &pinch_cells(&fld, 1e-6), 4).score < 0.5);
    }

    #[test]
    fn figure_one_jumps() {
        let f = ArctanCosine::new(1.1, 0.1, 0.86).unwrap();
        let g = Grid::square(100).unwrap();
        let fld = field(&baker(), &f, g, &PullbackSettings { depth: 2, stop_tol: 0.0, probe_step: 2 });
        let lines = jump_lines(&baker(), 2).unwrap();
        let j = jump_detector(g, &fld.phi_plus, &lines);
        assert!(j.ratio() > 10.0, "{j:?}");
        for x in &j.detected {
            assert!(lines.distance(*x) < 1e-12, "{x}");
        }
    }
}
