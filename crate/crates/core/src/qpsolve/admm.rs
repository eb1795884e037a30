//! Operator-splitting iteration on the reduced problem
//! `min ½yᵀPy + qᵀy, l <= A y <= u`, plus the active-set polish.

use nalgebra::{DMatrix, DVector};

use super::problem::{QpSettings, QpStatus};
use super::reduce::Reduced;
use crate::error::{Error, Result};
use crate::linalg::inf_norm;

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const BOUND_INF: f64 = 1e20;

pub(crate) struct Inner {
    pub y: DVector<f64>,
    /// Signed row multipliers in unscaled units.
    pub mu: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
}

struct Scaled {
    p: DMatrix<f64>,
    q: DVector<f64>,
    a: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
    /// variable scaling
    d: DVector<f64>,
    /// row scaling
    e: DVector<f64>,
    /// cost scaling
    c: f64,
}

fn ruiz(red: &Reduced, iters: usize) -> Scaled {
    let n = red.dim();
    let m = red.rows.nrows();
    let mut p = red.hessian.clone();
    let mut q = red.linear.clone();
    let mut a = red.rows.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let mut c = 1.0;
    let clamp = |x: f64| if x < 1e-4 { 1.0 } else { x.min(1e4) };
    for _ in 0..iters {
        let mut dd = DVector::zeros(n);
        for j in 0..n {
            let col = p.column(j).amax().max(if m > 0 { a.column(j).amax() } else { 0.0 });
            dd[j] = 1.0 / clamp(col).sqrt();
        }
        let mut ee = DVector::zeros(m);
        for i in 0..m {
            ee[i] = 1.0 / clamp(a.row(i).amax()).sqrt();
        }
        for j in 0..n {
            for i in 0..n {
                p[(i, j)] *= dd[i] * dd[j];
            }
            q[j] *= dd[j];
        }
        for j in 0..n {
            for i in 0..m {
                a[(i, j)] *= ee[i] * dd[j];
            }
        }
        d.component_mul_assign(&dd);
        e.component_mul_assign(&ee);
        // cost scaling
        let pm = if n > 0 {
            (0..n).map(|j| p.column(j).amax()).sum::<f64>() / n as f64
        } else {
            0.0
        };
        let gamma = 1.0 / clamp(pm.max(q.amax()));
        p *= gamma;
        q *= gamma;
        c *= gamma;
    }
    let mut l = red.lower.clone();
    let mut u = red.upper.clone();
    for i in 0..m {
        l[i] = if l[i].is_finite() { (l[i] * e[i]).max(-BOUND_INF) } else { -BOUND_INF };
        u[i] = if u[i].is_finite() { (u[i] * e[i]).min(BOUND_INF) } else { BOUND_INF };
    }
    Scaled { p, q, a, l, u, d, e, c }
}

fn row_rho(sc: &Scaled, rho: f64) -> DVector<f64> {
    DVector::from_iterator(
        sc.l.len(),
        (0..sc.l.len()).map(|i| {
            let (l, u) = (sc.l[i], sc.u[i]);
            if l <= -BOUND_INF && u >= BOUND_INF {
                RHO_MIN
            } else if (u - l).abs() < 1e-4 {
                RHO_EQ_FACTOR * rho
            } else {
                rho
            }
        }),
    )
}

fn factor(sc: &Scaled, sigma: f64, rho_vec: &DVector<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let n = sc.p.nrows();
    let mut k = &sc.p + DMatrix::identity(n, n) * sigma;
    if sc.a.nrows() > 0 {
        let mut ra = sc.a.clone();
        for i in 0..ra.nrows() {
            ra.row_mut(i).scale_mut(rho_vec[i]);
        }
        k += sc.a.transpose() * ra;
    }
    let k = (&k + k.transpose()) * 0.5;
    k.cholesky()
        .ok_or_else(|| Error::Solver("ADMM linear system not positive definite".into()))
}

pub(crate) fn solve(red: &Reduced, s: &QpSettings) -> Result<Inner> {
    let n = red.dim();
    let m = red.rows.nrows();
    if n == 0 {
        let ok = (0..m).all(|i| red.lower[i] <= 1e-9 && red.upper[i] >= -1e-9);
        return Ok(Inner {
            y: DVector::zeros(0),
            mu: DVector::zeros(m),
            status: if ok { QpStatus::Optimal } else { QpStatus::PrimalInfeasible },
            iterations: 0,
        });
    }
    // Fast path: try the polish from the unconstrained guess first.
    let sc = ruiz(red, s.scaling_iters);
    let mut rho = s.rho;
    let mut rho_vec = row_rho(&sc, rho);
    let mut chol = factor(&sc, s.sigma, &rho_vec)?;

    let mut x = DVector::zeros(n);
    let mut z = DVector::zeros(m);
    let mut yv = DVector::zeros(m);
    let mut x_prev;
    let mut y_prev;
    let alpha = s.alpha;
    let check_every = s.check_every.max(1);
    let mut next_polish = 25usize;

    for it in 1..=s.max_iter {
        x_prev = x.clone();
        y_prev = yv.clone();
        let mut rhs = &x * s.sigma - &sc.q;
        if m > 0 {
            let t = rho_vec.component_mul(&z) - &yv;
            rhs += sc.a.transpose() * t;
        }
        let xt = chol.solve(&rhs);
        let zt = &sc.a * &xt;
        x = &xt * alpha + &x * (1.0 - alpha);
        let zr = &zt * alpha + &z * (1.0 - alpha);
        let mut znew = DVector::zeros(m);
        for i in 0..m {
            let v = zr[i] + yv[i] / rho_vec[i];
            znew[i] = v.clamp(sc.l[i], sc.u[i]);
        }
        for i in 0..m {
            yv[i] += rho_vec[i] * (zr[i] - znew[i]);
        }
        z = znew;

        if it % check_every != 0 && it != s.max_iter {
            continue;
        }
        // residuals in unscaled units
        let ax = &sc.a * &x;
        let mut rp: f64 = 0.0;
        let mut ax_n: f64 = 0.0;
        let mut z_n: f64 = 0.0;
        for i in 0..m {
            rp = rp.max(((ax[i] - z[i]) / sc.e[i]).abs());
            ax_n = ax_n.max((ax[i] / sc.e[i]).abs());
            z_n = z_n.max((z[i] / sc.e[i]).abs());
        }
        let px = &sc.p * &x;
        let aty = if m > 0 { sc.a.transpose() * &yv } else { DVector::zeros(n) };
        let mut rd: f64 = 0.0;
        let mut px_n: f64 = 0.0;
        let mut aty_n: f64 = 0.0;
        let mut q_n: f64 = 0.0;
        for j in 0..n {
            let inv = 1.0 / (sc.d[j] * sc.c);
            rd = rd.max(((px[j] + sc.q[j] + aty[j]) * inv).abs());
            px_n = px_n.max((px[j] * inv).abs());
            aty_n = aty_n.max((aty[j] * inv).abs());
            q_n = q_n.max((sc.q[j] * inv).abs());
        }
        let eps_p = s.eps_abs + s.eps_rel * ax_n.max(z_n);
        let eps_d = s.eps_abs + s.eps_rel * px_n.max(aty_n).max(q_n);

        let converged = rp <= eps_p && rd <= eps_d;
        let near = rp <= 1e-3 * (1.0 + ax_n.max(z_n)) && rd <= 1e-3 * (1.0 + px_n.max(aty_n).max(q_n));
        if s.polish && (converged || (near && it >= next_polish)) {
            next_polish = it * 2;
            let (y0, mu0) = unscale(&sc, &x, &yv);
            if let Some((y, mu)) = polish(red, &y0, &mu0) {
                return Ok(Inner {
                    y,
                    mu,
                    status: QpStatus::Optimal,
                    iterations: it,
                });
            }
        }
        if converged {
            let (y, mu) = unscale(&sc, &x, &yv);
            return Ok(Inner {
                y,
                mu,
                status: QpStatus::Optimal,
                iterations: it,
            });
        }
        // infeasibility detection
        let dy = &yv - &y_prev;
        let dy_n = inf_norm(&dy);
        if m > 0 && dy_n > 0.0 {
            let scaled_dy = dy.component_mul(&sc.e);
            let dy_un = inf_norm(&scaled_dy);
            let atdy = sc.a.transpose() * &dy;
            let atdy_un = (0..n).map(|j| (atdy[j] / sc.d[j]).abs()).fold(0.0, f64::max);
            let mut support = 0.0;
            for i in 0..m {
                let v = dy[i];
                if v > 0.0 {
                    support += if sc.u[i] >= BOUND_INF { f64::INFINITY } else { sc.u[i] * v };
                } else if v < 0.0 {
                    support += if sc.l[i] <= -BOUND_INF { f64::INFINITY } else { sc.l[i] * v };
                }
            }
            if atdy_un <= s.eps_infeasible * dy_un && support < -s.eps_infeasible * dy_un {
                let (y, mu) = unscale(&sc, &x, &yv);
                return Ok(Inner {
                    y,
                    mu,
                    status: QpStatus::PrimalInfeasible,
                    iterations: it,
                });
            }
        }
        let dx = &x - &x_prev;
        let dx_un = (0..n).map(|j| (dx[j] * sc.d[j]).abs()).fold(0.0, f64::max);
        if dx_un > 0.0 {
            let pdx = &sc.p * &dx;
            let pdx_un = (0..n).map(|j| (pdx[j] / sc.d[j]).abs()).fold(0.0, f64::max) / sc.c;
            let qdx = sc.q.dot(&dx) / sc.c;
            let adx = &sc.a * &dx;
            let tol = s.eps_infeasible * dx_un;
            let cone_ok = (0..m).all(|i| {
                let v = adx[i] / sc.e[i];
                let up_inf = sc.u[i] >= BOUND_INF;
                let lo_inf = sc.l[i] <= -BOUND_INF;
                match (lo_inf, up_inf) {
                    (true, true) => true,
                    (false, true) => v >= -tol,
                    (true, false) => v <= tol,
                    (false, false) => v.abs() <= tol,
                }
            });
            if pdx_un <= tol && qdx < -tol && cone_ok {
                let (y, mu) = unscale(&sc, &x, &yv);
                return Ok(Inner {
                    y,
                    mu,
                    status: QpStatus::DualInfeasible,
                    iterations: it,
                });
            }
        }
        // step-size adaptation
        if m > 0 && rp > 0.0 && rd > 0.0 {
            let num = rp / ax_n.max(z_n).max(1e-12);
            let den = rd / px_n.max(aty_n).max(q_n).max(1e-12);
            let new_rho = (rho * (num / den).sqrt()).clamp(RHO_MIN, RHO_MAX);
            if new_rho > 5.0 * rho || new_rho < rho / 5.0 {
                rho = new_rho;
                rho_vec = row_rho(&sc, rho);
                chol = factor(&sc, s.sigma, &rho_vec)?;
            }
        }
    }
    let (y0, mu0) = unscale(&sc, &x, &yv);
    if s.polish {
        if let Some((y, mu)) = polish(red, &y0, &mu0) {
            return Ok(Inner {
                y,
                mu,
                status: QpStatus::Optimal,
                iterations: s.max_iter,
            });
        }
    }
    Ok(Inner {
        y: y0,
        mu: mu0,
        status: QpStatus::MaxIterations,
        iterations: s.max_iter,
    })
}

fn unscale(sc: &Scaled, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let yy = x.component_mul(&sc.d);
    let mu = y.component_mul(&sc.e) / sc.c;
    (yy, mu)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Side {
    Lower,
    Upper,
    Equal,
}

/// Solves the equality-constrained QP of an active set; returns the primal
/// point and the multipliers of the active rows.
fn solve_active(red: &Reduced, active: &[(usize, Side)]) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = red.dim();
    let k = active.len();
    let mut aa = DMatrix::zeros(k, n);
    let mut bb = DVector::zeros(k);
    for (r, &(i, side)) in active.iter().enumerate() {
        aa.set_row(r, &red.rows.row(i));
        bb[r] = match side {
            Side::Lower => red.lower[i],
            Side::Upper | Side::Equal => red.upper[i],
        };
    }
    let (y0, z, resid) = crate::linalg::nullspace_solve(&aa, &bb, 1e-10);
    if resid > 1e-9 * (1.0 + inf_norm(&bb)) {
        return None;
    }
    let g0 = &red.hessian * &y0 + &red.linear;
    let y = if z.ncols() > 0 {
        let hz = z.transpose() * &red.hessian * &z;
        let gz = z.transpose() * &g0;
        let svd = hz.clone().svd(true, true);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let w = if smax > 0.0 {
            svd.solve(&(-&gz), 1e-12 * smax).ok()?
        } else {
            DVector::zeros(z.ncols())
        };
        // the face must contain a minimizer (no descent ray)
        if inf_norm(&(&hz * &w + &gz)) > 1e-9 * (1.0 + inf_norm(&gz)) {
            return None;
        }
        &y0 + &z * w
    } else {
        y0
    };
    let grad = &red.hessian * &y + &red.linear;
    let mu_a = if k > 0 {
        let svd = aa.transpose().svd(true, true);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        svd.solve(&(-&grad), 1e-12 * smax.max(f64::MIN_POSITIVE)).ok()?
    } else {
        DVector::zeros(0)
    };
    Some((y, mu_a))
}

/// Active-set polish with a repair loop: rows violated by the candidate are
/// added, active rows with wrong-signed multipliers are released.
fn polish(red: &Reduced, y0: &DVector<f64>, mu0: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = red.dim();
    let m = red.rows.nrows();
    let ay0 = &red.rows * y0;
    let mut active: Vec<(usize, Side)> = Vec::new();
    for i in 0..m {
        let (l, u) = (red.lower[i], red.upper[i]);
        if l.is_finite() && u.is_finite() && (u - l).abs() <= 1e-12 * (1.0 + u.abs()) {
            active.push((i, Side::Equal));
        } else if u.is_finite() && mu0[i] > 0.0 && u - ay0[i] < mu0[i] {
            active.push((i, Side::Upper));
        } else if l.is_finite() && mu0[i] < 0.0 && ay0[i] - l < -mu0[i] {
            active.push((i, Side::Lower));
        }
    }
    let max_rounds = 50 + 4 * (n + 1);
    let mut seen: Vec<Vec<(usize, Side)>> = Vec::new();
    for _ in 0..max_rounds {
        let mut key = active.clone();
        key.sort_by_key(|&(i, _)| i);
        if seen.contains(&key) {
            return None;
        }
        seen.push(key);
        let Some((y, mu_a)) = solve_active(red, &active) else {
            // inconsistent or unbounded face: release the newest non-equality row
            {
                let pos = active.iter().rposition(|&(_, s)| s != Side::Equal)?;
                active.remove(pos);
                continue;
            }
        };
        let mu_scale = mu_a.amax().max(1.0);
        let mut worst_sign: Option<(usize, f64)> = None;
        for (r, &(_, side)) in active.iter().enumerate() {
            let bad = match side {
                Side::Upper => -mu_a[r],
                Side::Lower => mu_a[r],
                Side::Equal => 0.0,
            };
            if bad > 1e-10 * mu_scale && worst_sign.is_none_or(|(_, b)| bad > b) {
                worst_sign = Some((r, bad));
            }
        }
        if let Some((r, _)) = worst_sign {
            active.remove(r);
            continue;
        }
        let ay = &red.rows * &y;
        let mut worst_viol: Option<(usize, Side, f64)> = None;
        for i in 0..m {
            if active.iter().any(|&(j, _)| j == i) {
                continue;
            }
            let (l, u) = (red.lower[i], red.upper[i]);
            let (v, side) = if ay[i] - u > l - ay[i] { (ay[i] - u, Side::Upper) } else { (l - ay[i], Side::Lower) };
            let tol = 1e-10 * (1.0 + if side == Side::Upper { u.abs() } else { l.abs() });
            if v > tol && worst_viol.is_none_or(|(_, _, w)| v > w) {
                worst_viol = Some((i, side, v));
            }
        }
        if let Some((i, side, _)) = worst_viol {
            active.push((i, side));
            continue;
        }
        let mut mu = DVector::zeros(m);
        for (r, &(i, side)) in active.iter().enumerate() {
            mu[i] += match side {
                Side::Upper => mu_a[r].max(0.0),
                Side::Lower => mu_a[r].min(0.0),
                Side::Equal => mu_a[r],
            };
        }
        return Some((y, mu));
    }
    None
}
