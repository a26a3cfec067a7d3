//! Mehrotra-style primal-dual interior-point solver specialized to the
//! epigraph LP of this crate.
//!
//! The inequality system `G v >= h` has M dense sign rows touching only
//! the x block and 2N sparse box rows coupling `(x_i, u_i)` pairs. The
//! normal matrix `G^T W G` therefore splits into a dense N x N block plus
//! diagonals, and eliminating the u block leaves a single N x N Cholesky
//! factorization per iteration:
//!
//! ```text
//! S_x = Phi_y^T W_s Phi_y + diag(4 w+ w- / (w+ + w-))
//! ```

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, dot, norm_inf, Matrix};
use crate::recon::LpProblem;

pub(crate) struct IpmOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum IpmStatus {
    Converged,
    IterationLimit,
    Stalled,
}

pub(crate) struct IpmOutcome {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub z: Vec<f64>,
    pub iterations: usize,
    pub status: IpmStatus,
}

/// Fraction of the way to the boundary taken per step.
const STEP_FRACTION: f64 = 0.995;

pub(crate) fn solve(problem: &LpProblem, opts: &IpmOptions) -> Result<IpmOutcome> {
    let n = problem.n();
    let m = problem.m();
    let rows = problem.num_rows();
    let h = problem.rhs();

    let mut x = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut s: Vec<f64> = h.iter().map(|&hi| (hi.abs() + 1.0).max(1.0)).collect();
    let mut z = vec![1.0; rows];

    let mut status = IpmStatus::IterationLimit;
    let mut iterations = opts.max_iter;

    for it in 0..opts.max_iter {
        let gv = problem.apply(&x, &u)?;
        // residuals: primal Gv - s - h, dual G'z - c
        let rp: Vec<f64> = gv
            .iter()
            .zip(&s)
            .zip(&h)
            .map(|((&g, &si), &hi)| g - si - hi)
            .collect();
        let (gtx, gtu) = problem.apply_transpose(&z)?;
        let mut rd = vec![0.0; 2 * n];
        for i in 0..n {
            rd[i] = gtx[i];
            rd[n + i] = gtu[i] - 1.0;
        }
        let mu = dot(&s, &z) / rows as f64;
        let primal_obj: f64 = u.iter().sum();
        let dual_obj = dot(&h, &z);
        let gap_rel = (primal_obj - dual_obj).abs() / (1.0 + primal_obj.abs());
        let rp_rel = norm_inf(&rp) / (1.0 + norm_inf(&h));
        let rd_rel = norm_inf(&rd) / 2.0;

        if rp_rel <= opts.feas_tol && rd_rel <= opts.opt_tol && gap_rel <= opts.opt_tol {
            status = IpmStatus::Converged;
            iterations = it;
            break;
        }
        if mu < 1e-16 && it > 10 {
            status = IpmStatus::Stalled;
            iterations = it;
            break;
        }

        // scaling W = z/s split into the three row groups
        let w: Vec<f64> = z.iter().zip(&s).map(|(&zi, &si)| zi / si).collect();
        let (w_sign, w_box) = w.split_at(m);
        let (w_plus, w_minus) = w_box.split_at(n);

        let schur = build_schur(problem, w_sign, w_plus, w_minus);
        let factor = factor_with_ridge(&schur)?;

        // predictor: affine direction, sigma = 0
        let rc_aff: Vec<f64> = s.iter().zip(&z).map(|(&si, &zi)| -si * zi).collect();
        let (dx_a, du_a, dz_a, ds_a) = newton_direction(
            problem, &factor, w_plus, w_minus, &w, &rp, &rd, &rc_aff, &s, &z,
        )?;
        let alpha_p_aff = max_step(&s, &ds_a);
        let alpha_d_aff = max_step(&z, &dz_a);
        let mu_aff = {
            let mut acc = 0.0;
            for i in 0..rows {
                acc += (s[i] + alpha_p_aff * ds_a[i]) * (z[i] + alpha_d_aff * dz_a[i]);
            }
            acc / rows as f64
        };
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        // corrector reuses the factorization
        let rc: Vec<f64> = (0..rows)
            .map(|i| sigma * mu - s[i] * z[i] - ds_a[i] * dz_a[i])
            .collect();
        let (dx, du, dz, ds) = newton_direction(
            problem, &factor, w_plus, w_minus, &w, &rp, &rd, &rc, &s, &z,
        )?;

        let alpha_p = (STEP_FRACTION * max_step(&s, &ds)).min(1.0);
        let alpha_d = (STEP_FRACTION * max_step(&z, &dz)).min(1.0);
        let _ = (dx_a, du_a);

        for i in 0..n {
            x[i] += alpha_p * dx[i];
            u[i] += alpha_p * du[i];
        }
        for i in 0..rows {
            s[i] += alpha_p * ds[i];
            z[i] += alpha_d * dz[i];
        }
    }

    Ok(IpmOutcome {
        x,
        u,
        z,
        iterations,
        status,
    })
}

/// Dense Schur complement on the x block.
fn build_schur(problem: &LpProblem, w_sign: &[f64], w_plus: &[f64], w_minus: &[f64]) -> Matrix {
    let n = problem.n();
    let phi = problem.signed_phi();
    let mut a = Matrix::zeros(n, n);
    // Phi_y^T W_s Phi_y, lower triangle
    for (row, &wmu) in phi.rows_iter().zip(w_sign) {
        for i in 0..n {
            let c = wmu * row[i];
            if c == 0.0 {
                continue;
            }
            let base = i * n;
            let ai = &mut a.as_mut_slice()[base..base + i + 1];
            for (j, aij) in ai.iter_mut().enumerate() {
                *aij += c * row[j];
            }
        }
    }
    // diagonal from the eliminated u block
    for i in 0..n {
        let d = w_plus[i] + w_minus[i];
        let add = 4.0 * w_plus[i] * w_minus[i] / d;
        let v = a.get(i, i) + add;
        a.set(i, i, v);
    }
    // mirror to upper triangle
    for i in 0..n {
        for j in 0..i {
            let v = a.get(i, j);
            a.set(j, i, v);
        }
    }
    a
}

fn factor_with_ridge(schur: &Matrix) -> Result<Matrix> {
    let n = schur.nrows();
    match cholesky(schur) {
        Ok(l) => Ok(l),
        Err(_) => {
            let mut ridge = 1e-13
                * (0..n)
                    .map(|i| schur.get(i, i))
                    .fold(0.0_f64, f64::max)
                    .max(1.0);
            let mut boosted = schur.clone();
            for _ in 0..4 {
                for i in 0..n {
                    let v = boosted.get(i, i) + ridge;
                    boosted.set(i, i, v);
                }
                if let Ok(l) = cholesky(&boosted) {
                    return Ok(l);
                }
                ridge *= 100.0;
            }
            Err(Error::Numerical(
                "ipm: normal matrix factorization failed".into(),
            ))
        }
    }
}

/// Solve one Newton system given the Schur factor. Returns
/// `(dx, du, dz, ds)`.
#[allow(clippy::too_many_arguments)]
fn newton_direction(
    problem: &LpProblem,
    factor: &Matrix,
    w_plus: &[f64],
    w_minus: &[f64],
    w: &[f64],
    rp: &[f64],
    rd: &[f64],
    rc: &[f64],
    s: &[f64],
    z: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = problem.n();
    let rows = problem.num_rows();

    // normal equations: (G^T W G) dv = rd + G^T [ -W rp + rc / s ]
    let t: Vec<f64> = (0..rows)
        .map(|i| -w[i] * rp[i] + rc[i] / s[i])
        .collect();
    let (tx, tu) = problem.apply_transpose(&t)?;
    let mut r_x = vec![0.0; n];
    let mut r_u = vec![0.0; n];
    for i in 0..n {
        r_x[i] = tx[i] + rd[i];
        r_u[i] = tu[i] + rd[n + i];
    }

    // eliminate du: du = D^-1 (r_u - B dx)
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let d = w_plus[i] + w_minus[i];
        let b = w_plus[i] - w_minus[i];
        rhs[i] = r_x[i] - b / d * r_u[i];
    }
    let dx = cholesky_solve(factor, &rhs);
    let mut du = vec![0.0; n];
    for i in 0..n {
        let d = w_plus[i] + w_minus[i];
        let b = w_plus[i] - w_minus[i];
        du[i] = (r_u[i] - b * dx[i]) / d;
    }

    // dz = -W (rp + G dv) + rc / s ; ds = (rc - s dz) / z
    let gdv = problem.apply(&dx, &du)?;
    let mut dz = vec![0.0; rows];
    let mut ds = vec![0.0; rows];
    for i in 0..rows {
        dz[i] = -w[i] * (rp[i] + gdv[i]) + rc[i] / s[i];
        ds[i] = (rc[i] - s[i] * dz[i]) / z[i];
    }
    Ok((dx, du, dz, ds))
}

/// Largest step in `[0, 1]` keeping `v + alpha dv > 0`.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    let mut alpha = 1.0_f64;
    for (&vi, &di) in v.iter().zip(dv) {
        if di < 0.0 {
            alpha = alpha.min(-vi / di);
        }
    }
    alpha
}
