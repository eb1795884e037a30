use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mat_from_rows, mat_to_rows, vec_to_vec};
use crate::qpsolve::{self, LinearProgram, QpStatus};

/// Default absolute tolerance for set predicates.
pub const SET_TOL: f64 = 1e-9;

/// Anything with a computable support function `h(d) = max_{x in S} d.x`.
pub trait Support {
    fn dim(&self) -> usize;
    fn support(&self, direction: &DVector<f64>) -> Result<f64>;
}

/// Half-space representation `{x : normals * x <= offsets}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
}

/// Vertex representation: convex hull of a finite point list.
#[derive(Debug, Clone, PartialEq)]
pub struct VPolytope {
    vertices: Vec<DVector<f64>>,
}

/// Axis-aligned box `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

/// Two-sided linear rows `lo <= rows * x <= hi`, produced by pairing
/// opposite facets of an H-polytope.
#[derive(Debug, Clone)]
pub struct Slabs {
    pub rows: DMatrix<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

fn check_dim(context: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::dim(context, expected, got))
    } else {
        Ok(())
    }
}

impl HPolytope {
    pub fn new(normals: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self> {
        if normals.nrows() != offsets.len() {
            return Err(Error::dim("HPolytope offsets", normals.nrows(), offsets.len()));
        }
        if normals.ncols() == 0 {
            return Err(Error::InvalidInput("HPolytope must have dimension >= 1".into()));
        }
        if normals.iter().chain(offsets.iter()).any(|x| x.is_nan()) {
            return Err(Error::InvalidInput("HPolytope contains NaN".into()));
        }
        Ok(HPolytope { normals, offsets })
    }

    /// The whole space `R^dim` (no facets).
    pub fn universe(dim: usize) -> Self {
        HPolytope {
            normals: DMatrix::zeros(0, dim),
            offsets: DVector::zeros(0),
        }
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    pub fn dim(&self) -> usize {
        self.normals.ncols()
    }

    pub fn num_facets(&self) -> usize {
        self.normals.nrows()
    }

    pub fn contains(&self, point: &DVector<f64>, tol: f64) -> bool {
        debug_assert_eq!(point.len(), self.dim());
        (0..self.num_facets()).all(|i| self.normals.row(i).dot(&point.transpose()) <= self.offsets[i] + tol)
    }

    /// Largest facet violation `max_i (a_i.x - b_i)`; negative inside.
    pub fn violation(&self, point: &DVector<f64>) -> f64 {
        (0..self.num_facets())
            .map(|i| self.normals.row(i).dot(&point.transpose()) - self.offsets[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn intersect(&self, other: &HPolytope) -> Result<HPolytope> {
        check_dim("intersect", self.dim(), other.dim())?;
        let q = self.num_facets() + other.num_facets();
        let mut normals = DMatrix::zeros(q, self.dim());
        normals.rows_mut(0, self.num_facets()).copy_from(&self.normals);
        normals.rows_mut(self.num_facets(), other.num_facets()).copy_from(&other.normals);
        let mut offsets = DVector::zeros(q);
        offsets.rows_mut(0, self.num_facets()).copy_from(&self.offsets);
        offsets.rows_mut(self.num_facets(), other.num_facets()).copy_from(&other.offsets);
        HPolytope::new(normals, offsets)
    }

    /// `{x : map * x in self}`.
    pub fn preimage(&self, map: &DMatrix<f64>) -> Result<HPolytope> {
        check_dim("preimage", self.dim(), map.nrows())?;
        HPolytope::new(&self.normals * map, self.offsets.clone())
    }

    /// Uniform scaling about the origin, `factor * self`.
    pub fn scale(&self, factor: f64) -> HPolytope {
        HPolytope {
            normals: self.normals.clone(),
            offsets: &self.offsets * factor,
        }
    }

    /// Emptiness through a phase-1 LP.
    pub fn is_empty(&self) -> Result<bool> {
        if self.num_facets() == 0 {
            return Ok(false);
        }
        let res = qpsolve::feasibility_check(
            &DMatrix::zeros(0, self.dim()),
            &DVector::zeros(0),
            &self.normals,
            &self.offsets,
        )?;
        Ok(!res.feasible)
    }

    /// Support value by LP; `None` when unbounded in that direction.
    pub fn support_lp(&self, direction: &DVector<f64>) -> Result<Option<f64>> {
        check_dim("support direction", self.dim(), direction.len())?;
        let lp = LinearProgram::new(
            -direction.clone(),
            DMatrix::zeros(0, self.dim()),
            DVector::zeros(0),
            self.normals.clone(),
            self.offsets.clone(),
        )?;
        let sol = qpsolve::solve_lp(&lp, &Default::default())?;
        match sol.status {
            QpStatus::Optimal => Ok(Some(-sol.objective)),
            QpStatus::DualInfeasible => Ok(None),
            QpStatus::PrimalInfeasible => Err(Error::InvalidInput("support of an empty polytope".into())),
            QpStatus::MaxIterations => Err(Error::Solver("support LP hit the iteration cap".into())),
        }
    }

    /// Drops facets implied by the others (LP test per facet) and exact
    /// duplicates. Facet order of the survivors is preserved.
    pub fn remove_redundant(&self, tol: f64) -> Result<HPolytope> {
        let n = self.dim();
        // normalise rows, drop zero rows that are trivially satisfied
        let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
        for i in 0..self.num_facets() {
            let a = self.normals.row(i).transpose();
            let nrm = a.norm();
            let b = self.offsets[i];
            if nrm < 1e-14 {
                if b < -tol {
                    // infeasible row; keep as is so emptiness remains visible
                    rows.push((a, b));
                }
                continue;
            }
            let (a, b) = (a / nrm, b / nrm);
            if let Some(existing) = rows.iter_mut().find(|(r, _)| (r - &a).amax() < 1e-12) {
                existing.1 = existing.1.min(b);
            } else {
                rows.push((a, b));
            }
        }
        let mut keep = vec![true; rows.len()];
        for i in 0..rows.len() {
            let others: Vec<usize> = (0..rows.len()).filter(|&j| j != i && keep[j]).collect();
            if others.is_empty() {
                continue;
            }
            let mut normals = DMatrix::zeros(others.len() + 1, n);
            let mut offsets = DVector::zeros(others.len() + 1);
            for (r, &j) in others.iter().enumerate() {
                normals.set_row(r, &rows[j].0.transpose());
                offsets[r] = rows[j].1;
            }
            // cap the tested direction so the LP stays bounded
            normals.set_row(others.len(), &rows[i].0.transpose());
            offsets[others.len()] = rows[i].1 + 1.0;
            let lp = LinearProgram::new(
                -rows[i].0.clone(),
                DMatrix::zeros(0, n),
                DVector::zeros(0),
                normals,
                offsets,
            )?;
            let sol = qpsolve::solve_lp(&lp, &Default::default())?;
            match sol.status {
                QpStatus::Optimal => {
                    if -sol.objective <= rows[i].1 + tol {
                        keep[i] = false;
                    }
                }
                QpStatus::PrimalInfeasible => return Ok(self.clone()),
                _ => {}
            }
        }
        let kept: Vec<&(DVector<f64>, f64)> = rows.iter().zip(&keep).filter(|(_, k)| **k).map(|(r, _)| r).collect();
        let mut normals = DMatrix::zeros(kept.len(), n);
        let mut offsets = DVector::zeros(kept.len());
        for (r, (a, b)) in kept.iter().enumerate() {
            normals.set_row(r, &a.transpose());
            offsets[r] = *b;
        }
        HPolytope::new(normals, offsets)
    }

    /// Pairs facets with exactly opposite normals into two-sided rows.
    /// Unpaired facets become rows with `lo = -inf`.
    pub fn to_slabs(&self) -> Slabs {
        let q = self.num_facets();
        let mut used = vec![false; q];
        let mut rows: Vec<DVector<f64>> = Vec::new();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for i in 0..q {
            if used[i] {
                continue;
            }
            used[i] = true;
            let a = self.normals.row(i).transpose();
            let partner = (i + 1..q).find(|&j| {
                !used[j] && {
                    let b = self.normals.row(j).transpose();
                    (&a + &b).amax() <= 1e-14 * a.amax().max(1.0)
                }
            });
            match partner {
                Some(j) => {
                    used[j] = true;
                    lo.push(-self.offsets[j]);
                    hi.push(self.offsets[i]);
                }
                None => {
                    lo.push(f64::NEG_INFINITY);
                    hi.push(self.offsets[i]);
                }
            }
            rows.push(a);
        }
        let mut mat = DMatrix::zeros(rows.len(), self.dim());
        for (r, a) in rows.iter().enumerate() {
            mat.set_row(r, &a.transpose());
        }
        Slabs {
            rows: mat,
            lo: DVector::from_vec(lo),
            hi: DVector::from_vec(hi),
        }
    }

    /// Returns the box if every facet is an axis-aligned bound and each axis
    /// is bounded on both sides.
    pub fn as_box(&self) -> Option<BoxSet> {
        let n = self.dim();
        let mut lower = DVector::from_element(n, f64::NEG_INFINITY);
        let mut upper = DVector::from_element(n, f64::INFINITY);
        for i in 0..self.num_facets() {
            let row = self.normals.row(i);
            let nz: Vec<usize> = (0..n).filter(|&j| row[j] != 0.0).collect();
            if nz.len() != 1 {
                return None;
            }
            let j = nz[0];
            let v = self.offsets[i] / row[j];
            if row[j] > 0.0 {
                upper[j] = upper[j].min(v);
            } else {
                lower[j] = lower[j].max(v);
            }
        }
        if lower.iter().chain(upper.iter()).any(|x| !x.is_finite()) {
            return None;
        }
        BoxSet::new(lower, upper).ok()
    }
}

impl VPolytope {
    pub fn new(vertices: Vec<DVector<f64>>) -> Result<Self> {
        let first = vertices
            .first()
            .ok_or_else(|| Error::InvalidInput("VPolytope needs at least one vertex".into()))?;
        let n = first.len();
        if n == 0 {
            return Err(Error::InvalidInput("VPolytope must have dimension >= 1".into()));
        }
        for (i, v) in vertices.iter().enumerate() {
            check_dim(&format!("vertex {i}"), n, v.len())?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("vertex {i} is not finite")));
            }
        }
        Ok(VPolytope { vertices })
    }

    pub fn singleton(point: DVector<f64>) -> Self {
        VPolytope { vertices: vec![point] }
    }

    pub fn origin(dim: usize) -> Self {
        Self::singleton(DVector::zeros(dim))
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Image under a linear map.
    pub fn linear_map(&self, map: &DMatrix<f64>) -> Result<VPolytope> {
        check_dim("linear_map", self.dim(), map.ncols())?;
        let mut out = VPolytope {
            vertices: self.vertices.iter().map(|v| map * v).collect(),
        };
        out.prune();
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> VPolytope {
        VPolytope {
            vertices: self.vertices.iter().map(|v| v * factor).collect(),
        }
    }

    /// Adds a vertex (used to put the origin into the deadbeat hulls).
    pub fn with_vertex(&self, v: DVector<f64>) -> Result<VPolytope> {
        check_dim("with_vertex", self.dim(), v.len())?;
        let mut vertices = self.vertices.clone();
        vertices.push(v);
        Ok(VPolytope { vertices })
    }

    pub fn is_origin_vertex_present(&self) -> bool {
        self.vertices.iter().any(|v| v.iter().all(|&x| x == 0.0))
    }

    /// Removes redundant points: exact hull in 1-D and 2-D, duplicates only
    /// in higher dimensions.
    pub fn prune(&mut self) {
        match self.dim() {
            1 => {
                let lo = self.vertices.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
                let hi = self.vertices.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
                self.vertices = if lo == hi {
                    vec![DVector::from_element(1, lo)]
                } else {
                    vec![DVector::from_element(1, lo), DVector::from_element(1, hi)]
                };
            }
            2 => {
                self.vertices = planar_hull(&self.vertices);
            }
            _ => {
                let mut out: Vec<DVector<f64>> = Vec::with_capacity(self.vertices.len());
                for v in self.vertices.drain(..) {
                    if !out.iter().any(|w| w == &v) {
                        out.push(v);
                    }
                }
                self.vertices = out;
            }
        }
    }

    pub fn bounding_box(&self) -> BoxSet {
        let n = self.dim();
        let mut lower = DVector::from_element(n, f64::INFINITY);
        let mut upper = DVector::from_element(n, f64::NEG_INFINITY);
        for v in &self.vertices {
            for j in 0..n {
                lower[j] = lower[j].min(v[j]);
                upper[j] = upper[j].max(v[j]);
            }
        }
        BoxSet { lower, upper }
    }

    /// Facet representation. Exact in 1-D and 2-D; in higher dimensions
    /// only vertex sets that fill their bounding box are supported.
    pub fn to_hpolytope(&self) -> Result<HPolytope> {
        match self.dim() {
            1 => self.bounding_box().to_hpolytope(),
            2 => {
                let hull = planar_hull(&self.vertices);
                if hull.len() < 3 {
                    // degenerate: segment or point, described by bounds plus
                    // the line through it
                    return segment_hpolytope(&hull);
                }
                let k = hull.len();
                let mut normals = DMatrix::zeros(k, 2);
                let mut offsets = DVector::zeros(k);
                for i in 0..k {
                    let p = &hull[i];
                    let q = &hull[(i + 1) % k];
                    // counter-clockwise order: outward normal is (dy, -dx)
                    let a = DVector::from_vec(vec![q[1] - p[1], -(q[0] - p[0])]);
                    let nrm = a.norm();
                    let a = a / nrm;
                    offsets[i] = a.dot(p);
                    normals.set_row(i, &a.transpose());
                }
                HPolytope::new(normals, offsets)
            }
            _ => {
                let bb = self.bounding_box();
                let corners = bb.to_vpolytope();
                let fills = corners
                    .vertices
                    .iter()
                    .all(|c| self.vertices.iter().any(|v| (v - c).amax() <= SET_TOL));
                if fills {
                    bb.to_hpolytope()
                } else {
                    Err(Error::InvalidInput(format!(
                        "facet enumeration of a general {}-D vertex set is not supported",
                        self.dim()
                    )))
                }
            }
        }
    }

    /// Area of a planar polytope (0 for degenerate hulls).
    pub fn area(&self) -> Result<f64> {
        check_dim("area", 2, self.dim())?;
        let hull = planar_hull(&self.vertices);
        let k = hull.len();
        if k < 3 {
            return Ok(0.0);
        }
        let mut s = 0.0;
        for i in 0..k {
            let p = &hull[i];
            let q = &hull[(i + 1) % k];
            s += p[0] * q[1] - q[0] * p[1];
        }
        Ok(0.5 * s.abs())
    }
}

fn segment_hpolytope(points: &[DVector<f64>]) -> Result<HPolytope> {
    let p = &points[0];
    let q = points.last().unwrap_or(p);
    let d = q - p;
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    if d.norm() > 0.0 {
        let t = &d / d.norm();
        let nvec = DVector::from_vec(vec![-t[1], t[0]]);
        rows.push((nvec.clone(), nvec.dot(p)));
        rows.push((-nvec.clone(), -nvec.dot(p)));
        rows.push((t.clone(), t.dot(q)));
        rows.push((-t.clone(), -t.dot(p)));
    } else {
        for j in 0..2 {
            let mut e = DVector::zeros(2);
            e[j] = 1.0;
            rows.push((e.clone(), p[j]));
            rows.push((-e, -p[j]));
        }
    }
    let mut normals = DMatrix::zeros(rows.len(), 2);
    let mut offsets = DVector::zeros(rows.len());
    for (i, (a, b)) in rows.into_iter().enumerate() {
        normals.set_row(i, &a.transpose());
        offsets[i] = b;
    }
    HPolytope::new(normals, offsets)
}

/// Convex hull of planar points (Andrew's monotone chain), counter-clockwise,
/// collinear points removed. Degenerate inputs return 1 or 2 points.
pub fn planar_hull(points: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() <= 2 {
        return pts.into_iter().map(|(x, y)| DVector::from_vec(vec![x, y])).collect();
    }
    let scale = pts
        .iter()
        .fold(0.0_f64, |m, p| m.max(p.0.abs()).max(p.1.abs()))
        .max(1e-300);
    let eps = 1e-13 * scale * scale;
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= eps {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= eps {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 2 {
        // all points collinear and coincident within eps: keep extremes
        let first = pts[0];
        let last = pts[pts.len() - 1];
        hull = vec![first, last];
    }
    hull.into_iter().map(|(x, y)| DVector::from_vec(vec![x, y])).collect()
}

impl Support for VPolytope {
    fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    fn support(&self, direction: &DVector<f64>) -> Result<f64> {
        check_dim("support direction", self.dim(), direction.len())?;
        Ok(self
            .vertices
            .iter()
            .map(|v| v.dot(direction))
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

impl BoxSet {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::dim("box bounds", lower.len(), upper.len()));
        }
        if lower.is_empty() {
            return Err(Error::InvalidInput("box must have dimension >= 1".into()));
        }
        for j in 0..lower.len() {
            if lower[j].is_nan() || upper[j].is_nan() || lower[j] > upper[j] {
                return Err(Error::InvalidInput(format!(
                    "box axis {j}: lower {} > upper {}",
                    lower[j], upper[j]
                )));
            }
        }
        Ok(BoxSet { lower, upper })
    }

    pub fn symmetric(half_widths: &[f64]) -> Result<Self> {
        let upper = DVector::from_column_slice(half_widths);
        BoxSet::new(-&upper, upper)
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn contains(&self, point: &DVector<f64>, tol: f64) -> bool {
        (0..self.lower.len()).all(|j| point[j] >= self.lower[j] - tol && point[j] <= self.upper[j] + tol)
    }

    pub fn volume(&self) -> f64 {
        (&self.upper - &self.lower).iter().product()
    }

    /// Facets ordered `+e_0, -e_0, +e_1, -e_1, ...`.
    pub fn to_hpolytope(&self) -> Result<HPolytope> {
        let n = self.lower.len();
        let mut normals = DMatrix::zeros(2 * n, n);
        let mut offsets = DVector::zeros(2 * n);
        for j in 0..n {
            normals[(2 * j, j)] = 1.0;
            offsets[2 * j] = self.upper[j];
            normals[(2 * j + 1, j)] = -1.0;
            offsets[2 * j + 1] = -self.lower[j];
        }
        HPolytope::new(normals, offsets)
    }

    /// All `2^n` corners; corner `k` takes `upper[j]` when bit `j` of `k` is
    /// clear, so corner 0 is `upper`.
    pub fn to_vpolytope(&self) -> VPolytope {
        let n = self.lower.len();
        let vertices = (0..1usize << n)
            .map(|k| DVector::from_fn(n, |j, _| if k >> j & 1 == 0 { self.upper[j] } else { self.lower[j] }))
            .collect();
        VPolytope { vertices }
    }
}

impl Support for BoxSet {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn support(&self, direction: &DVector<f64>) -> Result<f64> {
        check_dim("support direction", self.dim(), direction.len())?;
        Ok((0..self.dim())
            .map(|j| {
                let d = direction[j];
                if d > 0.0 {
                    d * self.upper[j]
                } else if d < 0.0 {
                    d * self.lower[j]
                } else {
                    0.0
                }
            })
            .sum())
    }
}

/// `minuend ⊖ subtrahend`: each offset shrinks by the subtrahend's support in
/// the facet normal. The result may be empty; check with `is_empty`.
pub fn pontryagin_diff<S: Support + ?Sized>(minuend: &HPolytope, subtrahend: &S) -> Result<HPolytope> {
    check_dim("pontryagin_diff", minuend.dim(), subtrahend.dim())?;
    let mut offsets = minuend.offsets.clone();
    for i in 0..minuend.num_facets() {
        let a = minuend.normals.row(i).transpose();
        offsets[i] -= subtrahend.support(&a)?;
    }
    HPolytope::new(minuend.normals.clone(), offsets)
}

/// `a ⊕ b` as all pairwise vertex sums (pruned by the planar hull in 2-D).
pub fn minkowski_sum(a: &VPolytope, b: &VPolytope) -> Result<VPolytope> {
    check_dim("minkowski_sum", a.dim(), b.dim())?;
    let mut vertices = Vec::with_capacity(a.num_vertices() * b.num_vertices());
    for u in &a.vertices {
        for v in &b.vertices {
            vertices.push(u + v);
        }
    }
    let mut out = VPolytope { vertices };
    if out.dim() <= 2 {
        out.prune();
    }
    Ok(out)
}

/// Polytope literal as it appears in config and export files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolytopeJson {
    H { normals: Vec<Vec<f64>>, offsets: Vec<f64> },
    V { vertices: Vec<Vec<f64>> },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl PolytopeJson {
    pub fn to_hpolytope(&self) -> Result<HPolytope> {
        match self {
            PolytopeJson::H { normals, offsets } => {
                let normals = if normals.is_empty() {
                    return Err(Error::InvalidInput("H-polytope without facets".into()));
                } else {
                    mat_from_rows(normals)?
                };
                HPolytope::new(normals, DVector::from_column_slice(offsets))
            }
            PolytopeJson::Box { lower, upper } => BoxSet::new(
                DVector::from_column_slice(lower),
                DVector::from_column_slice(upper),
            )?
            .to_hpolytope(),
            PolytopeJson::V { .. } => self.to_vpolytope()?.to_hpolytope(),
        }
    }

    pub fn to_vpolytope(&self) -> Result<VPolytope> {
        match self {
            PolytopeJson::V { vertices } => {
                VPolytope::new(vertices.iter().map(|v| DVector::from_column_slice(v)).collect())
            }
            PolytopeJson::Box { lower, upper } => Ok(BoxSet::new(
                DVector::from_column_slice(lower),
                DVector::from_column_slice(upper),
            )?
            .to_vpolytope()),
            PolytopeJson::H { .. } => Err(Error::InvalidInput(
                "vertex enumeration of an H-polytope is not supported; give vertices".into(),
            )),
        }
    }
}

impl From<&HPolytope> for PolytopeJson {
    fn from(p: &HPolytope) -> Self {
        PolytopeJson::H {
            normals: mat_to_rows(&p.normals),
            offsets: vec_to_vec(&p.offsets),
        }
    }
}

impl From<&VPolytope> for PolytopeJson {
    fn from(p: &VPolytope) -> Self {
        PolytopeJson::V {
            vertices: p.vertices.iter().map(vec_to_vec).collect(),
        }
    }
}

impl From<&BoxSet> for PolytopeJson {
    fn from(b: &BoxSet) -> Self {
        PolytopeJson::Box {
            lower: vec_to_vec(&b.lower),
            upper: vec_to_vec(&b.upper),
        }
    }
}

impl Serialize for HPolytope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolytopeJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for HPolytope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        PolytopeJson::deserialize(d)?
            .to_hpolytope()
            .map_err(serde::de::Error::custom)
    }
}

impl Serialize for VPolytope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolytopeJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for VPolytope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        PolytopeJson::deserialize(d)?
            .to_vpolytope()
            .map_err(serde::de::Error::custom)
    }
}

impl Serialize for BoxSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolytopeJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for BoxSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match PolytopeJson::deserialize(d)? {
            PolytopeJson::Box { lower, upper } => BoxSet::new(
                DVector::from_column_slice(&lower),
                DVector::from_column_slice(&upper),
            )
            .map_err(serde::de::Error::custom),
            _ => Err(serde::de::Error::custom("expected {\"lower\", \"upper\"}")),
        }
    }
}
