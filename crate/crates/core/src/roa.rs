//! Region-of-attraction estimates on a uniform grid over `X` and the
//! excess-volume tables built from them.
//!
//! Two scan modes classify the same grid:
//!
//! * [`ScanMode::Points`] runs the phase-1 LP at every grid point.
//! * [`ScanMode::Rows`] exploits convexity of the feasible set: for every
//!   grid line along `x1` two LPs give the feasible interval, and points are
//!   classified against it. The QP constraints must be affine in the state,
//!   which holds for every controller in this crate and is verified.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::controller::Controller;
use crate::error::{Error, Result};
use crate::fmt;
use crate::geometry::HPolytope;
use crate::plant::ProblemSpec;
use crate::qpsolve::{self, FeasibilityResult, LinearProgram, QpSettings, QpStatus, QuadraticProgram};

/// Slack (in `x1` units, relative to `1 + |x1|`) when classifying points
/// against a feasible interval.
pub const INTERVAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanMode {
    Points,
    Rows,
}

impl ScanMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "points" => Ok(ScanMode::Points),
            "rows" => Ok(ScanMode::Rows),
            _ => Err(Error::InvalidInput(format!("unknown scan mode `{s}` (expected points or rows)"))),
        }
    }
}

/// Axis-aligned grid; index `i1 + r1 (i2 + r2 (i3 + …))`, so `x1` varies
/// fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: Vec<usize>,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let n = lower.len();
        if n == 0 || upper.len() != n || resolution.len() != n {
            return Err(Error::InvalidInput("grid bounds and resolution must share a nonzero length".into()));
        }
        for i in 0..n {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] <= upper[i]) {
                return Err(Error::InvalidInput(format!("bad grid bounds on axis {}", i + 1)));
            }
            if resolution[i] == 0 {
                return Err(Error::InvalidInput(format!("zero resolution on axis {}", i + 1)));
            }
        }
        Ok(GridSpec { lower, upper, resolution })
    }

    /// Grid over the bounding box of `X` (exact for box constraints).
    pub fn covering(x_set: &HPolytope, resolution: Vec<usize>) -> Result<Self> {
        let n = x_set.dim();
        if resolution.len() != n {
            return Err(Error::dim("grid resolution", n, resolution.len()));
        }
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            let hi = x_set.support_lp(&e)?;
            let lo = x_set.support_lp(&(-&e))?;
            match (lo, hi) {
                (Some(lo), Some(hi)) => {
                    lower.push(-lo);
                    upper.push(hi);
                }
                _ => return Err(Error::InvalidInput(format!("X is unbounded along axis {}", i + 1))),
            }
        }
        GridSpec::new(lower, upper, resolution)
    }

    /// The default resolution: 101 x 41 in two dimensions, 21 per axis
    /// otherwise.
    pub fn default_for(spec: &ProblemSpec) -> Result<Self> {
        let res = if spec.n() == 2 { vec![101, 41] } else { vec![21; spec.n()] };
        Self::covering(&spec.x_set, res)
    }

    /// Parses `r1xr2x…`.
    pub fn parse_resolution(s: &str) -> Result<Vec<usize>> {
        s.split('x')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&r| r > 0)
                    .ok_or_else(|| Error::InvalidInput(format!("bad resolution `{s}` (expected e.g. 101x41)")))
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn box_volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    fn coord(&self, axis: usize, i: usize) -> f64 {
        let r = self.resolution[axis];
        if r == 1 {
            return 0.5 * (self.lower[axis] + self.upper[axis]);
        }
        let t = i as f64 / (r - 1) as f64;
        self.lower[axis] + (self.upper[axis] - self.lower[axis]) * t
    }

    pub fn point(&self, index: usize) -> DVector<f64> {
        let mut rest = index;
        DVector::from_fn(self.dim(), |axis, _| {
            let r = self.resolution[axis];
            let i = rest % r;
            rest /= r;
            self.coord(axis, i)
        })
    }

    pub fn points(&self) -> Vec<DVector<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoaResult {
    pub controller_id: String,
    pub grid: GridSpec,
    pub mode: ScanMode,
    pub mask: Vec<bool>,
    /// Phase-1 margin per point ([`ScanMode::Points`]) or signed `x1`
    /// distance to the feasible interval ([`ScanMode::Rows`]); negative
    /// inside, `inf` where nothing is feasible.
    pub margins: Vec<f64>,
    /// Volume of the gridded region (`X` for box constraints).
    pub domain_volume: f64,
    /// `feasible / total × domain_volume`
    pub volume: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoaSummary<'a> {
    pub controller_id: &'a str,
    pub mode: ScanMode,
    pub grid_lower: &'a [f64],
    pub grid_upper: &'a [f64],
    pub resolution: &'a [usize],
    pub feasible_count: usize,
    pub total: usize,
    pub domain_volume: f64,
    pub volume: f64,
}

impl RoaResult {
    fn assemble(controller_id: &str, grid: &GridSpec, mode: ScanMode, mask: Vec<bool>, margins: Vec<f64>) -> Self {
        let domain_volume = grid.box_volume();
        let count = mask.iter().filter(|&&b| b).count();
        RoaResult {
            controller_id: controller_id.to_string(),
            grid: grid.clone(),
            mode,
            volume: count as f64 / mask.len() as f64 * domain_volume,
            mask,
            margins,
            domain_volume,
        }
    }

    /// All-infeasible result, for controllers whose synthesis failed.
    pub fn empty(controller_id: &str, grid: &GridSpec, mode: ScanMode) -> Self {
        Self::assemble(controller_id, grid, mode, vec![false; grid.len()], vec![f64::INFINITY; grid.len()])
    }

    pub fn feasible_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.feasible_count() as f64 / self.mask.len() as f64
    }

    /// Grid points feasible here but not in `other`.
    pub fn exceptions_to_subset(&self, other: &RoaResult) -> Result<usize> {
        self.check_same_grid(other)?;
        Ok(self.mask.iter().zip(&other.mask).filter(|(a, b)| **a && !**b).count())
    }

    /// `self ⊆ other` up to `tolerance × total` exceptional points.
    pub fn is_subset_of(&self, other: &RoaResult, tolerance: f64) -> Result<bool> {
        Ok(self.exceptions_to_subset(other)? as f64 <= tolerance * self.mask.len() as f64)
    }

    fn check_same_grid(&self, other: &RoaResult) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::InvalidInput("RoA results are on different grids".into()));
        }
        Ok(())
    }

    pub fn feasible_points(&self) -> Vec<DVector<f64>> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).map(|i| self.grid.point(i)).collect()
    }

    pub fn summary(&self) -> RoaSummary<'_> {
        RoaSummary {
            controller_id: &self.controller_id,
            mode: self.mode,
            grid_lower: &self.grid.lower,
            grid_upper: &self.grid.upper,
            resolution: &self.grid.resolution,
            feasible_count: self.feasible_count(),
            total: self.mask.len(),
            domain_volume: self.domain_volume,
            volume: self.volume,
        }
    }

    /// Columns `x1,…,xn,feasible,margin`, one row per grid point in grid order.
    pub fn to_csv(&self) -> String {
        let n = self.grid.dim();
        let mut out: String = (1..=n).map(|i| format!("x{i},")).collect();
        out.push_str("feasible,margin\n");
        for (i, (&f, &m)) in self.mask.iter().zip(&self.margins).enumerate() {
            out.push_str(&fmt::floats(self.grid.point(i).iter()));
            out.push_str(if f { ",1," } else { ",0," });
            out.push_str(&fmt::float(m));
            out.push('\n');
        }
        out
    }

    /// Plot-ready boundary of a 2-D mask: per grid row with feasible points,
    /// the smallest and largest feasible `x1`.
    pub fn boundary_csv(&self) -> Result<String> {
        if self.grid.dim() != 2 {
            return Err(Error::InvalidInput("boundary polylines are only defined in 2-D".into()));
        }
        let (r1, r2) = (self.grid.resolution[0], self.grid.resolution[1]);
        let mut out = String::from("x2,x1_min,x1_max\n");
        for j in 0..r2 {
            let row = &self.mask[j * r1..(j + 1) * r1];
            let (Some(a), Some(b)) = (row.iter().position(|&f| f), row.iter().rposition(|&f| f)) else {
                continue;
            };
            out.push_str(&fmt::floats(
                [self.grid.coord(1, j), self.grid.coord(0, a), self.grid.coord(0, b)].iter(),
            ));
            out.push('\n');
        }
        Ok(out)
    }
}

fn locate(err: Error, x: &DVector<f64>) -> Error {
    let at = fmt::floats(x.iter());
    match err {
        Error::Solver(msg) => Error::Solver(format!("at x = [{at}]: {msg}")),
        Error::NonConvergence(msg) => Error::NonConvergence(format!("at x = [{at}]: {msg}")),
        other => other,
    }
}

/// Classifies every grid point with `predicate`; points are evaluated in
/// parallel and assembled in grid order.
pub fn scan<F>(predicate: F, grid: &GridSpec, controller_id: &str) -> Result<RoaResult>
where
    F: Fn(&DVector<f64>) -> Result<FeasibilityResult> + Sync,
{
    let results: Vec<Result<FeasibilityResult>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            predicate(&x).map_err(|e| locate(e, &x))
        })
        .collect();
    let mut mask = Vec::with_capacity(grid.len());
    let mut margins = Vec::with_capacity(grid.len());
    for r in results {
        let r = r?;
        mask.push(r.feasible);
        margins.push(r.margin);
    }
    Ok(RoaResult::assemble(controller_id, grid, ScanMode::Points, mask, margins))
}

/// Scans a controller in the requested mode.
pub fn scan_controller(controller: &dyn Controller, grid: &GridSpec, mode: ScanMode) -> Result<RoaResult> {
    if grid.dim() != controller.spec().n() {
        return Err(Error::dim("grid dimension", controller.spec().n(), grid.dim()));
    }
    match mode {
        ScanMode::Points => scan(|x| controller.feasibility(x), grid, controller.id()),
        ScanMode::Rows => scan_rows(controller, grid),
    }
}

/// Scans the outcome of a controller construction; synthesis infeasibility
/// yields an empty region instead of an error.
pub fn scan_built(
    built: Result<Box<dyn Controller>>,
    label: &str,
    grid: &GridSpec,
    mode: ScanMode,
) -> Result<RoaResult> {
    match built {
        Ok(c) => scan_controller(c.as_ref(), grid, mode),
        Err(Error::SynthesisInfeasible(msg)) => {
            log::info!("{label}: synthesis infeasible ({msg}); empty region");
            Ok(RoaResult::empty(label, grid, mode))
        }
        Err(e) => Err(e),
    }
}

/// Constraint data of `build_qp(x)` written as `base + S x`.
struct AffineConstraints {
    base: QuadraticProgram,
    eq_sens: DMatrix<f64>,
    lo_sens: DMatrix<f64>,
    hi_sens: DMatrix<f64>,
}

fn rhs_diff(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.zip_map(b, |x, y| if x.is_finite() && y.is_finite() { x - y } else { 0.0 })
}

fn affine_constraints(controller: &dyn Controller) -> Result<AffineConstraints> {
    let n = controller.spec().n();
    let base = controller.build_qp(&DVector::zeros(n))?;
    let mut eq_sens = DMatrix::zeros(base.num_eq(), n);
    let mut lo_sens = DMatrix::zeros(base.num_ineq(), n);
    let mut hi_sens = DMatrix::zeros(base.num_ineq(), n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let qi = controller.build_qp(&e)?;
        if qi.eq_lhs != base.eq_lhs || qi.ineq_lhs != base.ineq_lhs {
            return Err(Error::InvalidInput(format!(
                "{}: constraint matrix depends on the state; row scans need affine constraints",
                controller.id()
            )));
        }
        eq_sens.set_column(i, &rhs_diff(&qi.eq_rhs, &base.eq_rhs));
        lo_sens.set_column(i, &rhs_diff(&qi.ineq_lower, &base.ineq_lower));
        hi_sens.set_column(i, &rhs_diff(&qi.ineq_rhs, &base.ineq_rhs));
    }
    let out = AffineConstraints {
        base,
        eq_sens,
        lo_sens,
        hi_sens,
    };
    // spot check of affinity away from the unit vectors
    let probe = DVector::from_fn(n, |i, _| 0.5 - 0.25 * i as f64);
    let q = controller.build_qp(&probe)?;
    let pred = &out.base.eq_rhs + &out.eq_sens * &probe;
    let hi_pred = &out.base.ineq_rhs + &out.hi_sens * &probe;
    let err = (pred - &q.eq_rhs).amax().max(rhs_diff(&hi_pred, &q.ineq_rhs).amax());
    if err > 1e-9 * (1.0 + q.eq_rhs.amax()) {
        return Err(Error::InvalidInput(format!("{}: constraints are not affine in the state", controller.id())));
    }
    Ok(out)
}

impl AffineConstraints {
    /// LP over `[z, s]` with `x = (s, rest)`, `s` restricted to `[lo, hi]`.
    fn line_lp(&self, rest: &[f64], lo: f64, hi: f64, sign: f64) -> Result<LinearProgram> {
        let b = &self.base;
        let nz = b.num_vars();
        let rest = DVector::from_column_slice(rest);
        let tail = |s: &DMatrix<f64>| -> DVector<f64> {
            if rest.is_empty() {
                DVector::zeros(s.nrows())
            } else {
                s.columns(1, rest.len()) * &rest
            }
        };
        let mut eq_lhs = DMatrix::zeros(b.num_eq(), nz + 1);
        eq_lhs.view_mut((0, 0), (b.num_eq(), nz)).copy_from(&b.eq_lhs);
        eq_lhs.set_column(nz, &(-self.eq_sens.column(0)));
        let eq_rhs = &b.eq_rhs + tail(&self.eq_sens);

        let (lo_shift, hi_shift) = (tail(&self.lo_sens), tail(&self.hi_sens));
        let mut rows: Vec<(Vec<f64>, f64, f64)> = Vec::with_capacity(b.num_ineq() + 1);
        for r in 0..b.num_ineq() {
            let (l, h) = (b.ineq_lower[r], b.ineq_rhs[r]);
            let (sl, sh) = (self.lo_sens[(r, 0)], self.hi_sens[(r, 0)]);
            let coeffs = |sens: f64| {
                let mut v: Vec<f64> = b.ineq_lhs.row(r).iter().copied().collect();
                v.push(-sens);
                v
            };
            if !l.is_finite() || !h.is_finite() || sl == sh {
                let sens = if h.is_finite() { sh } else { sl };
                rows.push((coeffs(sens), l + lo_shift[r], h + hi_shift[r]));
            } else {
                rows.push((coeffs(sl), l + lo_shift[r], f64::INFINITY));
                rows.push((coeffs(sh), f64::NEG_INFINITY, h + hi_shift[r]));
            }
        }
        let mut bound = vec![0.0; nz + 1];
        bound[nz] = 1.0;
        rows.push((bound, lo, hi));
        // `∞` upper bounds are not allowed; those rows become `-row <= -lo`
        let mut lhs = DMatrix::zeros(rows.len(), nz + 1);
        let mut lower = DVector::zeros(rows.len());
        let mut upper = DVector::zeros(rows.len());
        for (i, (c, l, h)) in rows.into_iter().enumerate() {
            if h.is_finite() {
                lhs.row_mut(i).copy_from_slice(&c);
                lower[i] = l;
                upper[i] = h;
            } else {
                lhs.row_mut(i).copy_from_slice(&c.iter().map(|v| -v).collect::<Vec<_>>());
                lower[i] = f64::NEG_INFINITY;
                upper[i] = -l;
            }
        }
        let mut objective = DVector::zeros(nz + 1);
        objective[nz] = sign;
        LinearProgram::new_two_sided(objective, eq_lhs, eq_rhs, lhs, lower, upper)
    }

    /// Feasible `x1` interval on the line with the given remaining
    /// coordinates, or `None` when the line misses the feasible set.
    fn interval(&self, rest: &[f64], lo: f64, hi: f64) -> Result<Option<(f64, f64)>> {
        let settings = QpSettings::default();
        let mut ends = [0.0; 2];
        for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
            let lp = self.line_lp(rest, lo, hi, sign)?;
            let sol = qpsolve::solve_lp(&lp, &settings)?;
            match sol.status {
                QpStatus::Optimal => ends[k] = sol.primal[self.base.num_vars()],
                QpStatus::PrimalInfeasible => return Ok(None),
                s => return Err(Error::Solver(format!("line LP returned {s}"))),
            }
        }
        Ok(Some((ends[0], ends[1])))
    }
}

fn scan_rows(controller: &dyn Controller, grid: &GridSpec) -> Result<RoaResult> {
    let affine = affine_constraints(controller)?;
    let r1 = grid.resolution[0];
    let lines = grid.len() / r1;
    let (lo, hi) = (grid.lower[0], grid.upper[0]);
    let per_line: Vec<Result<Vec<(bool, f64)>>> = (0..lines)
        .into_par_iter()
        .map(|j| {
            let first = grid.point(j * r1);
            let rest: Vec<f64> = first.iter().skip(1).copied().collect();
            let interval = affine.interval(&rest, lo, hi).map_err(|e| locate(e, &first))?;
            Ok((0..r1)
                .map(|i| {
                    let x1 = grid.coord(0, i);
                    match interval {
                        None => (false, f64::INFINITY),
                        Some((a, b)) => {
                            let dist = (a - x1).max(x1 - b);
                            (dist <= INTERVAL_TOL * (1.0 + x1.abs()), dist)
                        }
                    }
                })
                .collect())
        })
        .collect();
    let mut mask = Vec::with_capacity(grid.len());
    let mut margins = Vec::with_capacity(grid.len());
    for line in per_line {
        for (f, m) in line? {
            mask.push(f);
            margins.push(m);
        }
    }
    Ok(RoaResult::assemble(controller.id(), grid, ScanMode::Rows, mask, margins))
}

/// `100 (vol_a − vol_b) / vol_b`
pub fn excess_volume(a: &RoaResult, b: &RoaResult) -> Result<f64> {
    a.check_same_grid(b)?;
    if b.volume <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "excess volume undefined: reference region of {} is empty",
            b.controller_id
        )));
    }
    Ok(100.0 * (a.volume - b.volume) / b.volume)
}

/// Builds a controller for a cell of a sweep.
pub type Factory<'a> = &'a (dyn Fn(&ProblemSpec) -> Result<Box<dyn Controller>> + Sync);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcessTable {
    pub label_a: String,
    pub label_b: String,
    pub ts: Vec<f64>,
    pub horizons: Vec<usize>,
    /// Percentages, `entries[row][col]`; NaN where the reference region is
    /// empty.
    pub entries: Vec<Vec<f64>>,
    pub volumes_a: Vec<Vec<f64>>,
    pub volumes_b: Vec<Vec<f64>>,
    /// Cells without a defined entry, with the reason.
    pub notes: Vec<String>,
}

impl ExcessTable {
    pub fn entry(&self, ts: f64, horizon: usize) -> Option<f64> {
        let r = self.ts.iter().position(|&t| t == ts)?;
        let c = self.horizons.iter().position(|&n| n == horizon)?;
        Some(self.entries[r][c])
    }

    /// Header `ts,N1,N2,…`; one row per sampling time.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ts");
        for n in &self.horizons {
            out.push_str(&format!(",{n}"));
        }
        out.push('\n');
        for (t, row) in self.ts.iter().zip(&self.entries) {
            out.push_str(&fmt::float(*t));
            out.push(',');
            out.push_str(&fmt::floats(row.iter()));
            out.push('\n');
        }
        out
    }

    /// Rows `t_S`, columns `N`, signed one-decimal percentages.
    pub fn to_markdown(&self) -> String {
        let mut out = format!("Excess volume of RoA of {} over {}\n\n| t_S \\ N |", self.label_a, self.label_b);
        for n in &self.horizons {
            out.push_str(&format!(" {n} |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(self.horizons.len()));
        out.push('\n');
        for (t, row) in self.ts.iter().zip(&self.entries) {
            out.push_str(&format!("| {t:.2} |"));
            for v in row {
                if v.is_finite() {
                    out.push_str(&format!(" {v:+.1}% |"));
                } else {
                    out.push_str(" n/a |");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// One excess-volume entry per `(ts, N)`. The spec at each cell is the
/// template re-discretized at `ts` with horizon `N`; the factories may
/// adjust it further (e.g. `M = N`).
#[allow(clippy::too_many_arguments)]
pub fn table_sweep(
    template: &ProblemSpec,
    ts_list: &[f64],
    horizons: &[usize],
    labels: (&str, &str),
    factories: (Factory, Factory),
    resolution: &[usize],
    mode: ScanMode,
) -> Result<ExcessTable> {
    if ts_list.is_empty() || horizons.is_empty() {
        return Err(Error::InvalidInput("sweep lists must be nonempty".into()));
    }
    let mut table = ExcessTable {
        label_a: labels.0.to_string(),
        label_b: labels.1.to_string(),
        ts: ts_list.to_vec(),
        horizons: horizons.to_vec(),
        entries: Vec::new(),
        volumes_a: Vec::new(),
        volumes_b: Vec::new(),
        notes: Vec::new(),
    };
    for &ts in ts_list {
        let (mut row, mut va, mut vb) = (Vec::new(), Vec::new(), Vec::new());
        for &n in horizons {
            let spec = template.with_sample_time(ts)?;
            let spec = if n >= spec.deadbeat_m {
                spec.with_horizon(n)?
            } else {
                spec.with_deadbeat(n)?.with_horizon(n)?
            };
            let grid = GridSpec::covering(&spec.x_set, resolution.to_vec())?;
            let a = scan_built((factories.0)(&spec), labels.0, &grid, mode)?;
            let b = scan_built((factories.1)(&spec), labels.1, &grid, mode)?;
            log::info!("ts={ts} N={n}: {} {:.4}, {} {:.4}", labels.0, a.volume, labels.1, b.volume);
            let entry = match excess_volume(&a, &b) {
                Ok(v) => v,
                Err(Error::InvalidInput(msg)) => {
                    table.notes.push(format!("ts={ts} N={n}: {msg}"));
                    f64::NAN
                }
                Err(e) => return Err(e),
            };
            row.push(entry);
            va.push(a.volume);
            vb.push(b.volume);
        }
        table.entries.push(row);
        table.volumes_a.push(va);
        table.volumes_b.push(vb);
    }
    Ok(table)
}
