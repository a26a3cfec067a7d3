//! Threshold optimization: minimize the predicted MSE over the family's
//! scalar parameter by a coarse grid followed by golden-section
//! refinement, warm-starting each solve from its neighbor.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SignalModel;
use crate::replica::{solve_saddle, ReplicaSolution, SaddleOptions, ThresholdFamily};

#[derive(Debug, Clone)]
pub struct EnvelopeOptions {
    /// Points of the coarse grid over `[0, 3 sqrt(Q0) max(1, sqrt(alpha))]`.
    pub grid_points: usize,
    /// Final bracket width of the golden-section refinement.
    pub refine_width: f64,
    pub saddle: SaddleOptions,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self {
            grid_points: 61,
            refine_width: 1e-4,
            saddle: SaddleOptions::default(),
        }
    }
}

/// Result of one envelope optimization.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeResult {
    pub family: String,
    pub param_opt: f64,
    pub mse_opt: f64,
    pub mse_opt_db: f64,
    /// Positive-output probability at the optimum (0.5 for the
    /// zero-mean random family).
    pub p_plus_opt: f64,
    /// False if any contributing solve failed to converge.
    pub trusted: bool,
    #[serde(skip)]
    pub solution: ReplicaSolution,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Minimize predicted MSE over the family parameter.
pub fn envelope(
    family: &dyn ThresholdFamily,
    model: &SignalModel,
    alpha: f64,
    opts: &EnvelopeOptions,
) -> Result<EnvelopeResult> {
    if opts.grid_points < 3 {
        return Err(Error::Domain(format!(
            "envelope: grid_points = {} < 3",
            opts.grid_points
        )));
    }
    let q0 = model.signal_power();
    let hi = 3.0 * q0.sqrt() * alpha.sqrt().max(1.0);
    let n = opts.grid_points;

    // fast inner solves: single init, warm-started from the neighbor
    let mut inner = opts.saddle.clone();
    inner.dual_init_check = false;

    let mut trusted = true;
    let mut warm: Option<crate::replica::OrderParams> = None;
    let mut best: Option<(f64, f64)> = None; // (param, mse)
    let mut best_idx = 0usize;
    let mut evaluate = |param: f64, warm_from: Option<crate::replica::OrderParams>| -> Result<(f64, Option<crate::replica::OrderParams>)> {
        let fam = family.with_param(param);
        let mut o = inner.clone();
        o.init = warm_from;
        let sol = solve_saddle(fam.as_ref(), model, alpha, &o)?;
        let next_warm = sol.converged.then_some(sol.order);
        if !sol.converged {
            trusted = false;
        }
        Ok((if sol.converged { sol.mse } else { f64::INFINITY }, next_warm))
    };

    let mut grid_mse = Vec::with_capacity(n);
    for i in 0..n {
        let p = hi * i as f64 / (n - 1) as f64;
        let (mse, w) = evaluate(p, warm)?;
        if w.is_some() {
            warm = w;
        }
        grid_mse.push(mse);
        match best {
            Some((_, b)) if mse >= b => {}
            _ => {
                best = Some((p, mse));
                best_idx = i;
            }
        }
    }
    let (_, best_mse) = best.ok_or_else(|| Error::Numerical("envelope: empty grid".into()))?;
    if !best_mse.is_finite() {
        return Err(Error::Numerical(
            "envelope: no grid point converged".into(),
        ));
    }

    // golden-section refinement inside the bracketing neighbors
    let step = hi / (n - 1) as f64;
    let mut a = (best_idx as f64 - 1.0).max(0.0) * step;
    let mut b = ((best_idx + 1).min(n - 1)) as f64 * step;
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, _) = evaluate(c, warm)?;
    let (mut fd, _) = evaluate(d, warm)?;
    while b - a > opts.refine_width {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = evaluate(c, warm)?.0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = evaluate(d, warm)?.0;
        }
    }
    let param_opt = 0.5 * (a + b);

    // final solve at full rigor (dual-initialization cross-check)
    let mut final_opts = opts.saddle.clone();
    final_opts.init = None;
    let fam = family.with_param(param_opt);
    let solution = solve_saddle(fam.as_ref(), model, alpha, &final_opts)?;
    if !solution.converged {
        trusted = false;
    }
    let p_plus_opt = fam.p_plus(model)?;
    Ok(EnvelopeResult {
        family: family.name().to_string(),
        param_opt,
        mse_opt: solution.mse,
        mse_opt_db: crate::model::mse_to_db(solution.mse),
        p_plus_opt,
        trusted,
        solution,
    })
}
