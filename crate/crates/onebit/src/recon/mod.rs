//! Sparse reconstruction from sign measurements: minimize the l1 norm
//! over the convex region consistent with the observed signs.
//!
//! The epigraph form in variables `(x, u)` is
//!
//! ```text
//! minimize    sum_i u_i
//! subject to  y_mu ((Phi x)_mu + lambda_mu) >= 0     (M sign rows)
//!             x_i + u_i >= 0,  -x_i + u_i >= 0       (2N box rows)
//! ```
//!
//! Every result carries a verifiable certificate (primal violation and a
//! dual-based optimality residual) that [`check_certificate`] re-derives
//! from the returned vectors alone, independent of solver internals.

mod ipm;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{norm1, Matrix};
use crate::model::Instance;

/// The epigraph LP, stored structurally: the sign block is `diag(y) Phi`
/// and the box blocks are implicit.
#[derive(Debug, Clone)]
pub struct LpProblem {
    n: usize,
    m: usize,
    signed_phi: Matrix,
    /// Right-hand side of the sign rows: `-y_mu lambda_mu`.
    rhs_sign: Vec<f64>,
}

impl LpProblem {
    pub fn num_vars(&self) -> usize {
        2 * self.n
    }

    pub fn num_rows(&self) -> usize {
        self.m + 2 * self.n
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `G (x, u)` over all rows: sign block, then `x + u`, then `u - x`.
    pub fn apply(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n || u.len() != self.n {
            return Err(Error::Dimension("lp apply: bad vector length".into()));
        }
        let mut out = self.signed_phi.matvec(x)?;
        out.reserve(2 * self.n);
        for i in 0..self.n {
            out.push(x[i] + u[i]);
        }
        for i in 0..self.n {
            out.push(u[i] - x[i]);
        }
        Ok(out)
    }

    /// `G^T z`, split into the x and u components.
    pub fn apply_transpose(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if z.len() != self.num_rows() {
            return Err(Error::Dimension("lp apply_transpose: bad length".into()));
        }
        let (zs, rest) = z.split_at(self.m);
        let (zp, zm) = rest.split_at(self.n);
        let mut gx = self.signed_phi.t_matvec(zs)?;
        let mut gu = vec![0.0; self.n];
        for i in 0..self.n {
            gx[i] += zp[i] - zm[i];
            gu[i] = zp[i] + zm[i];
        }
        Ok((gx, gu))
    }

    /// Full right-hand side `h` (zeros on the box rows).
    pub fn rhs(&self) -> Vec<f64> {
        let mut h = self.rhs_sign.clone();
        h.resize(self.num_rows(), 0.0);
        h
    }

    pub fn signed_phi(&self) -> &Matrix {
        &self.signed_phi
    }

    pub fn rhs_sign(&self) -> &[f64] {
        &self.rhs_sign
    }

    /// Dense `(G, h)` for small-problem oracles.
    pub fn dense(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut g = Vec::with_capacity(self.num_rows());
        for mu in 0..self.m {
            let mut row = vec![0.0; 2 * self.n];
            row[..self.n].copy_from_slice(self.signed_phi.row(mu));
            g.push(row);
        }
        for i in 0..self.n {
            let mut row = vec![0.0; 2 * self.n];
            row[i] = 1.0;
            row[self.n + i] = 1.0;
            g.push(row);
        }
        for i in 0..self.n {
            let mut row = vec![0.0; 2 * self.n];
            row[i] = -1.0;
            row[self.n + i] = 1.0;
            g.push(row);
        }
        (g, self.rhs())
    }

    /// Largest inequality violation `max(0, h - G v)` at `(x, u)`.
    pub fn max_violation(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        let gv = self.apply(x, u)?;
        let h = self.rhs();
        Ok(gv
            .iter()
            .zip(&h)
            .fold(0.0_f64, |acc, (&g, &hi)| acc.max(hi - g)))
    }
}

/// Build the epigraph LP from an instance.
pub fn build_lp(instance: &Instance) -> Result<LpProblem> {
    if instance.phi.nrows() != instance.m
        || instance.phi.ncols() != instance.n
        || instance.y.len() != instance.m
        || instance.lambda_vec.len() != instance.m
    {
        return Err(Error::Dimension("build_lp: inconsistent instance".into()));
    }
    let mut signed = Matrix::zeros(instance.m, instance.n);
    for mu in 0..instance.m {
        let y = f64::from(instance.y[mu]);
        for j in 0..instance.n {
            signed.set(mu, j, y * instance.phi.get(mu, j));
        }
    }
    let rhs_sign = instance
        .y
        .iter()
        .zip(&instance.lambda_vec)
        .map(|(&y, &l)| -f64::from(y) * l)
        .collect();
    Ok(LpProblem {
        n: instance.n,
        m: instance.m,
        signed_phi: signed,
        rhs_sign,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconStatus {
    Optimal,
    InfeasibleTolerance,
    IterationLimit,
}

/// Reconstruction output with certificate data.
#[derive(Debug, Clone, Serialize)]
pub struct ReconResult {
    pub x_hat: Vec<f64>,
    pub l1_norm: f64,
    pub status: ReconStatus,
    /// Largest primal inequality violation.
    pub max_violation: f64,
    /// Max of dual-feasibility residual and relative duality gap.
    pub cert_residual: f64,
    /// Epigraph variables at the solution.
    #[serde(skip)]
    pub u_hat: Vec<f64>,
    /// Dual multipliers (one per inequality row).
    #[serde(skip)]
    pub dual: Vec<f64>,
    #[serde(skip)]
    pub iterations: usize,
}

/// Solve the l1 reconstruction to the given tolerances.
///
/// When the zero vector is feasible (`y_mu lambda_mu >= 0` for all mu,
/// which covers every all-zero threshold instance), it is optimal with
/// objective zero and is returned exactly, with an explicit dual
/// certificate.
pub fn reconstruct(instance: &Instance, feas_tol: f64, opt_tol: f64) -> Result<ReconResult> {
    if !(feas_tol > 0.0 && opt_tol > 0.0) {
        return Err(Error::Domain("reconstruct: tolerances must be > 0".into()));
    }
    let problem = build_lp(instance)?;
    let n = problem.n;

    if problem.rhs_sign.iter().all(|&h| h <= 0.0) {
        // zero is feasible; sum u >= 0 forces x = u = 0 as an optimum.
        // Dual: half weight on each box row reproduces the objective.
        let mut dual = vec![0.0; problem.num_rows()];
        for zi in dual.iter_mut().skip(problem.m) {
            *zi = 0.5;
        }
        return Ok(ReconResult {
            x_hat: vec![0.0; n],
            l1_norm: 0.0,
            status: ReconStatus::Optimal,
            max_violation: 0.0,
            cert_residual: 0.0,
            u_hat: vec![0.0; n],
            dual,
            iterations: 0,
        });
    }

    let outcome = ipm::solve(
        &problem,
        &ipm::IpmOptions {
            feas_tol: 0.1 * feas_tol,
            opt_tol: 0.1 * opt_tol,
            max_iter: 200,
        },
    )?;

    let max_violation = problem.max_violation(&outcome.x, &outcome.u)?;
    let cert_residual = optimality_residual(&problem, &outcome.u, &outcome.z)?;
    let status = if max_violation <= feas_tol && cert_residual <= opt_tol {
        ReconStatus::Optimal
    } else {
        match outcome.status {
            ipm::IpmStatus::IterationLimit => ReconStatus::IterationLimit,
            _ => ReconStatus::InfeasibleTolerance,
        }
    };
    Ok(ReconResult {
        l1_norm: norm1(&outcome.x),
        x_hat: outcome.x,
        status,
        max_violation,
        cert_residual,
        u_hat: outcome.u,
        dual: outcome.z,
        iterations: outcome.iterations,
    })
}

/// Dual-feasibility and duality-gap residual of `(u, z)`.
fn optimality_residual(problem: &LpProblem, u: &[f64], z: &[f64]) -> Result<f64> {
    let (gx, gu) = problem.apply_transpose(z)?;
    // dual feasibility: G'z = c = (0, 1), z >= 0
    let mut res = 0.0_f64;
    for i in 0..problem.n {
        res = res.max(gx[i].abs()).max((gu[i] - 1.0).abs());
    }
    for &zi in z {
        res = res.max(-zi);
    }
    // duality gap: c'v - h'z
    let primal: f64 = u.iter().sum();
    let dual_obj = crate::linalg::dot(&problem.rhs(), z);
    let gap = (primal - dual_obj).abs() / (1.0 + primal.abs());
    Ok(res.max(gap))
}

/// Re-verify a result's feasibility and optimality certificate from the
/// stored vectors alone.
pub fn check_certificate(
    result: &ReconResult,
    problem: &LpProblem,
    feas_tol: f64,
    opt_tol: f64,
) -> bool {
    let u = if result.u_hat.len() == problem.n {
        result.u_hat.clone()
    } else {
        result.x_hat.iter().map(|v| v.abs()).collect()
    };
    let Ok(viol) = problem.max_violation(&result.x_hat, &u) else {
        return false;
    };
    if viol > feas_tol {
        return false;
    }
    match optimality_residual(problem, &u, &result.dual) {
        Ok(res) => res <= opt_tol,
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Instance, SignalModel, ThresholdStrategy};

    fn tiny_instance(seed: u64, lambda: f64) -> Instance {
        let model = SignalModel::new(0.5, 1.0).unwrap();
        let strat = ThresholdStrategy::Fixed { lambda };
        Instance::generate(5, 7, &model, &strat, seed).unwrap()
    }

    #[test]
    fn lp_shape_counts() {
        let inst = tiny_instance(1, 0.4);
        let p = build_lp(&inst).unwrap();
        assert_eq!(p.num_vars(), 10);
        assert_eq!(p.num_rows(), 7 + 10);
        // N=1, M=1 instance: 2 vars, 3 rows
        let m1 = SignalModel::new(1.0, 1.0).unwrap();
        let one = Instance::generate(1, 1, &m1, &ThresholdStrategy::Fixed { lambda: 0.2 }, 3)
            .unwrap();
        let p1 = build_lp(&one).unwrap();
        assert_eq!(p1.num_vars(), 2);
        assert_eq!(p1.num_rows(), 3);
    }

    #[test]
    fn truth_is_feasible() {
        for seed in 0..20 {
            let inst = tiny_instance(seed, 0.3);
            let p = build_lp(&inst).unwrap();
            let u: Vec<f64> = inst.x0.iter().map(|v| v.abs()).collect();
            let viol = p.max_violation(&inst.x0, &u).unwrap();
            assert!(viol <= 0.0, "x0 infeasible: violation {viol}");
        }
    }

    #[test]
    fn zero_thresholds_give_exact_zero() {
        let inst = tiny_instance(5, 0.0);
        let r = reconstruct(&inst, 1e-8, 1e-8).unwrap();
        assert!(r.x_hat.iter().all(|&v| v == 0.0));
        assert_eq!(r.l1_norm, 0.0);
        assert_eq!(r.status, ReconStatus::Optimal);
        let p = build_lp(&inst).unwrap();
        assert!(check_certificate(&r, &p, 1e-8, 1e-8));
    }

    #[test]
    fn forced_negative_solution() {
        // single row: phi = [[1]], lambda = 1, y = -1 => -(x + 1) >= 0 => x <= -1
        // minimizing |x| gives x = -1
        let model = SignalModel::new(1.0, 1.0).unwrap();
        let mut inst = Instance::generate(
            1,
            1,
            &model,
            &ThresholdStrategy::Fixed { lambda: 1.0 },
            11,
        )
        .unwrap();
        inst.phi = crate::linalg::Matrix::from_rows(vec![vec![1.0]]).unwrap();
        inst.x0 = vec![-2.0];
        inst.lambda_vec = vec![1.0];
        inst.y = vec![-1];
        let r = reconstruct(&inst, 1e-8, 1e-8).unwrap();
        assert_eq!(r.status, ReconStatus::Optimal);
        assert!((r.x_hat[0] + 1.0).abs() < 1e-6, "x_hat = {}", r.x_hat[0]);
    }

    #[test]
    fn minimality_against_truth() {
        for seed in 0..10 {
            let inst = tiny_instance(100 + seed, 0.5);
            let r = reconstruct(&inst, 1e-8, 1e-8).unwrap();
            assert_eq!(r.status, ReconStatus::Optimal);
            assert!(r.l1_norm <= norm1(&inst.x0) + 1e-6);
            let p = build_lp(&inst).unwrap();
            assert!(check_certificate(&r, &p, 1e-8, 1e-8));
        }
    }

    #[test]
    fn certificate_rejects_perturbed_point() {
        let inst = tiny_instance(33, 0.5);
        let p = build_lp(&inst).unwrap();
        let r = reconstruct(&inst, 1e-8, 1e-8).unwrap();
        assert!(check_certificate(&r, &p, 1e-8, 1e-8));
        let mut bad = r.clone();
        bad.x_hat[0] += 0.1;
        bad.u_hat = bad.x_hat.iter().map(|v| v.abs()).collect();
        assert!(!check_certificate(&bad, &p, 1e-8, 1e-8));
    }

    #[test]
    fn certificate_rejects_suboptimal_feasible_point() {
        // find an instance where the truth is strictly suboptimal
        for seed in 0..50 {
            let inst = tiny_instance(700 + seed, 0.6);
            let r = reconstruct(&inst, 1e-8, 1e-8).unwrap();
            if norm1(&inst.x0) > r.l1_norm + 1e-3 {
                let p = build_lp(&inst).unwrap();
                let mut sub = r.clone();
                sub.x_hat = inst.x0.clone();
                sub.u_hat = inst.x0.iter().map(|v| v.abs()).collect();
                sub.l1_norm = norm1(&inst.x0);
                assert!(
                    !check_certificate(&sub, &p, 1e-8, 1e-8),
                    "suboptimal point passed at seed {seed}"
                );
                return;
            }
        }
        panic!("no strictly suboptimal instance found");
    }

    #[test]
    fn scale_covariance_in_lambda() {
        let inst = tiny_instance(44, 0.5);
        let r1 = reconstruct(&inst, 1e-9, 1e-9).unwrap();
        let mut scaled = inst.clone();
        let c = 2.0;
        for l in scaled.lambda_vec.iter_mut() {
            *l *= c;
        }
        for v in scaled.x0.iter_mut() {
            *v *= c; // keep instance invariant y = sign(phi x0 + lambda)
        }
        let r2 = reconstruct(&scaled, 1e-9, 1e-9).unwrap();
        for i in 0..inst.n {
            assert!(
                (r2.x_hat[i] - c * r1.x_hat[i]).abs() < 1e-5,
                "component {i}: {} vs {}",
                r2.x_hat[i],
                c * r1.x_hat[i]
            );
        }
    }

    #[test]
    fn deterministic_resolve() {
        let inst = tiny_instance(55, 0.4);
        let a = reconstruct(&inst, 1e-8, 1e-8).unwrap();
        let b = reconstruct(&inst, 1e-8, 1e-8).unwrap();
        assert_eq!(a.x_hat, b.x_hat);
        assert_eq!(a.l1_norm, b.l1_norm);
    }

    #[test]
    fn recon_result_json_schema() {
        let inst = tiny_instance(66, 0.4);
        let r = reconstruct(&inst, 1e-8, 1e-8).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            vec!["cert_residual", "l1_norm", "max_violation", "status", "x_hat"]
        );
        assert_eq!(v["status"], "optimal");
    }
}
