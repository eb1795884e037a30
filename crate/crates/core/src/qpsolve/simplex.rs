//! Primal active-set method for inequality-form LPs `min cᵀv, A v <= b`.
//!
//! Works directly on free variables: while the working set does not pin the
//! point down, the iterate moves along the projected negative gradient until
//! a row blocks. Once the projected gradient vanishes, multipliers decide
//! whether to stop or to release a row. Ties are broken by lowest row index.

use nalgebra::{DMatrix, DVector};

use super::problem::{QpSettings, QpStatus};
use super::reduce::IneqRows;
use crate::error::{Error, Result};

const ZERO_ROW: f64 = 1e-14;
/// Projected-gradient size (relative to the cost) treated as zero.
const STATIONARY: f64 = 1e-9;

pub(crate) struct PhaseOne {
    pub point: DVector<f64>,
    /// Optimal largest normalized violation, bounded below by -1.
    pub margin: f64,
    /// Row multipliers in the units of the input rows.
    pub multipliers: DVector<f64>,
    pub iterations: usize,
}

pub(crate) struct PhaseTwo {
    pub point: DVector<f64>,
    pub multipliers: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    MaxIterations,
}

struct Run {
    x: DVector<f64>,
    lambda: DVector<f64>,
    outcome: Outcome,
    iterations: usize,
}

/// Row norms used for normalization (1 for zero rows).
pub(super) fn row_scales(a: &DMatrix<f64>) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| {
            let n = a.row(i).norm();
            if n > ZERO_ROW {
                n
            } else {
                1.0
            }
        })
        .collect()
}

pub(super) fn normalized(rows: &IneqRows, scales: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let mut a = rows.a.clone();
    let mut b = rows.b.clone();
    for (i, &s) in scales.iter().enumerate() {
        a.row_mut(i).scale_mut(1.0 / s);
        b[i] /= s;
    }
    (a, b)
}

fn check_finite(rows: &IneqRows) -> Result<()> {
    if rows.a.iter().chain(rows.b.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Solver("non-finite LP row data".into()));
    }
    Ok(())
}

/// Minimizes the largest normalized violation `s` of `a_i · v <= b_i`
/// subject to `s >= -1`, starting from `v = 0`.
pub(crate) fn phase_one(rows: &IneqRows, settings: &QpSettings) -> Result<PhaseOne> {
    check_finite(rows)?;
    let n = rows.dim();
    let m = rows.len();
    let scales = row_scales(&rows.a);
    let (an, bn) = normalized(rows, &scales);
    // augmented rows [a_i, -1] v' <= b_i, and [0, -1] v' <= 1
    let mut a = DMatrix::zeros(m + 1, n + 1);
    a.view_mut((0, 0), (m, n)).copy_from(&an);
    for i in 0..m {
        a[(i, n)] = -1.0;
    }
    a[(m, n)] = -1.0;
    let mut b = DVector::zeros(m + 1);
    b.rows_mut(0, m).copy_from(&bn);
    b[m] = 1.0;
    let s0 = (0..m).map(|i| -bn[i]).fold(-1.0_f64, f64::max);
    let mut x0 = DVector::zeros(n + 1);
    x0[n] = s0;
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    let run = active_set(&a, &b, &c, x0, settings.max_iter.max(10 * (m + n + 1)));
    match run.outcome {
        Outcome::Optimal => {}
        Outcome::Unbounded => return Err(Error::Solver("phase-1 LP reported unbounded".into())),
        Outcome::MaxIterations => {
            return Err(Error::Solver(format!("phase-1 LP hit the iteration limit ({})", run.iterations)))
        }
    }
    let margin = run.x[n];
    let multipliers = DVector::from_iterator(m, (0..m).map(|i| run.lambda[i] / scales[i]));
    Ok(PhaseOne {
        point: run.x.rows(0, n).into_owned(),
        margin,
        multipliers,
        iterations: run.iterations,
    })
}

/// Minimizes `cᵀv` over `a_i · v <= b_i + relax * ‖a_i‖` from a point that
/// satisfies the relaxed rows.
pub(crate) fn minimize(
    rows: &IneqRows,
    c: &DVector<f64>,
    start: &DVector<f64>,
    relax: f64,
    settings: &QpSettings,
) -> Result<PhaseTwo> {
    check_finite(rows)?;
    let m = rows.len();
    let scales = row_scales(&rows.a);
    let (a, mut b) = normalized(rows, &scales);
    b.add_scalar_mut(relax);
    let run = active_set(&a, &b, c, start.clone(), settings.max_iter.max(10 * (m + c.len())));
    let status = match run.outcome {
        Outcome::Optimal => QpStatus::Optimal,
        Outcome::Unbounded => QpStatus::DualInfeasible,
        Outcome::MaxIterations => QpStatus::MaxIterations,
    };
    let multipliers = DVector::from_iterator(m, (0..m).map(|i| run.lambda[i] / scales[i]));
    Ok(PhaseTwo {
        point: run.x,
        multipliers,
        status,
        iterations: run.iterations,
    })
}

/// Solves `R λ = rhs` for upper-triangular `R` (k x k).
fn back_substitute(r: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let k = rhs.len();
    let mut out = DVector::zeros(k);
    for i in (0..k).rev() {
        let mut acc = rhs[i];
        for j in i + 1..k {
            acc -= r[(i, j)] * out[j];
        }
        let d = r[(i, i)];
        out[i] = if d.abs() > 1e-300 { acc / d } else { 0.0 };
    }
    out
}

fn active_set(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>, mut x: DVector<f64>, max_iter: usize) -> Run {
    let m = a.nrows();
    let n = a.ncols();
    let cnorm = c.amax().max(1.0);
    let mut working: Vec<usize> = Vec::new();
    let mut in_working = vec![false; m];
    let mut av = a * &x;
    let mut lambda = DVector::zeros(m);
    for it in 0..max_iter {
        if it % 64 == 63 {
            av = a * &x;
        }
        // projected gradient on the current face
        let (pc, qr_parts) = if working.is_empty() {
            (c.clone(), None)
        } else {
            let mut aw = DMatrix::zeros(n, working.len());
            for (col, &i) in working.iter().enumerate() {
                aw.set_column(col, &a.row(i).transpose());
            }
            let qr = aw.qr();
            let q = qr.q();
            let r = qr.r();
            let qtc = q.transpose() * c;
            (c - &q * &qtc, Some((r, qtc)))
        };
        if pc.amax() > STATIONARY * cnorm {
            let d = -pc;
            let ad = a * &d;
            let dn = d.norm();
            let mut best: Option<(usize, f64)> = None;
            for i in 0..m {
                if in_working[i] || ad[i] <= 1e-11 * dn {
                    continue;
                }
                let t = ((b[i] - av[i]).max(0.0)) / ad[i];
                match best {
                    Some((_, tb)) if t >= tb - 1e-12 * (1.0 + tb.abs()) => {}
                    _ => best = Some((i, t)),
                }
            }
            let Some((i, t)) = best else {
                lambda.fill(0.0);
                return Run {
                    x,
                    lambda,
                    outcome: Outcome::Unbounded,
                    iterations: it,
                };
            };
            x.axpy(t, &d, 1.0);
            av.axpy(t, &ad, 1.0);
            working.push(i);
            in_working[i] = true;
            continue;
        }
        // stationary on the face: A_Wᵀ λ = -c
        let lam_w = match qr_parts {
            Some((r, qtc)) => back_substitute(&r, &(-qtc)),
            None => DVector::zeros(0),
        };
        let lmax = lam_w.amax().max(1.0);
        let mut drop: Option<usize> = None;
        for (k, &i) in working.iter().enumerate() {
            if lam_w[k] < -1e-11 * lmax && drop.is_none_or(|kk| i < working[kk]) {
                drop = Some(k);
            }
        }
        match drop {
            None => {
                lambda.fill(0.0);
                for (k, &i) in working.iter().enumerate() {
                    lambda[i] = lam_w[k].max(0.0);
                }
                return Run {
                    x,
                    lambda,
                    outcome: Outcome::Optimal,
                    iterations: it,
                };
            }
            Some(k) => {
                let i = working.remove(k);
                in_working[i] = false;
            }
        }
    }
    Run {
        x,
        lambda,
        outcome: Outcome::MaxIterations,
        iterations: max_iter,
    }
}
