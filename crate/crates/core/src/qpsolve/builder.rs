use nalgebra::{DMatrix, DVector};

use super::problem::QuadraticProgram;
use crate::error::Result;

/// Incremental assembly of a [`QuadraticProgram`] from sparse rows.
#[derive(Debug, Clone)]
pub struct QpBuilder {
    nvars: usize,
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    eq: Vec<(Vec<(usize, f64)>, f64)>,
    ineq: Vec<(Vec<(usize, f64)>, f64, f64)>,
}

impl QpBuilder {
    pub fn new(nvars: usize) -> Self {
        QpBuilder {
            nvars,
            hessian: DMatrix::zeros(nvars, nvars),
            linear: DVector::zeros(nvars),
            eq: Vec::new(),
            ineq: Vec::new(),
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn num_eq(&self) -> usize {
        self.eq.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq.len()
    }

    /// Adds `block` to the Hessian at `(offset, offset)`.
    pub fn add_hessian_block(&mut self, offset: usize, block: &DMatrix<f64>) {
        let mut view = self.hessian.view_mut((offset, offset), (block.nrows(), block.ncols()));
        view += block;
    }

    pub fn add_linear(&mut self, offset: usize, v: &DVector<f64>) {
        let mut view = self.linear.rows_mut(offset, v.len());
        view += v;
    }

    pub fn add_eq(&mut self, row: Vec<(usize, f64)>, rhs: f64) {
        self.eq.push((row, rhs));
    }

    /// `lo <= row · z <= hi`; either bound may be infinite.
    pub fn add_ineq(&mut self, row: Vec<(usize, f64)>, lo: f64, hi: f64) {
        self.ineq.push((row, lo, hi));
    }

    pub fn build(self) -> Result<QuadraticProgram> {
        let n = self.nvars;
        let mut e = DMatrix::zeros(self.eq.len(), n);
        let mut er = DVector::zeros(self.eq.len());
        for (i, (row, rhs)) in self.eq.iter().enumerate() {
            for &(j, v) in row {
                e[(i, j)] += v;
            }
            er[i] = *rhs;
        }
        let mut g = DMatrix::zeros(self.ineq.len(), n);
        let mut lo = DVector::zeros(self.ineq.len());
        let mut hi = DVector::zeros(self.ineq.len());
        for (i, (row, l, h)) in self.ineq.iter().enumerate() {
            for &(j, v) in row {
                g[(i, j)] += v;
            }
            lo[i] = *l;
            hi[i] = *h;
        }
        let h = (&self.hessian + self.hessian.transpose()) * 0.5;
        QuadraticProgram::new_two_sided(h, self.linear, e, er, g, lo, hi)
    }
}
