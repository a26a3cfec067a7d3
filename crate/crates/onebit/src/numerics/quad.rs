//! Gaussian-expectation quadrature.
//!
//! Two kinds of rules back the analytic formulas:
//!
//! - [`QuadratureRule::gauss_hermite`]: a full-line rule representing the
//!   expectation under N(0,1), used for integrands that are smooth on all
//!   of R (the exp-weighted saddle kernels, moment checks).
//! - [`NormalSegment`]: composite Gauss-Legendre panels over a finite
//!   interval with the normal density folded into the weights, used where
//!   a step factor `Theta(...)` has been absorbed into integration limits.
//!   Panels can be graded around a known breakpoint so that narrow sigmoid
//!   features (width `s*sqrt(q)/m`, which shrinks as the saddle point
//!   approaches the alignment boundary) stay resolved.
//!
//! Step-function kernels must not be handed to a fixed full-line rule: a
//! jump that falls between nodes costs O(1/order) accuracy no matter the
//! order. Splitting at the jump restores spectral convergence.

use crate::error::{Error, Result};
use crate::numerics::normal_pdf;

/// Width above which a span is split into multiple panels.
const PANEL_MAX_WIDTH: f64 = 2.0;

/// Nodes and weights representing the expectation under N(0,1).
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Gauss-Hermite rule in standard normal scale.
    ///
    /// Built by Golub-Welsch: the Jacobi matrix of the (probabilists')
    /// Hermite polynomials has zero diagonal and off-diagonals `sqrt(k)`,
    /// its eigenvalues are the nodes and the squared first eigenvector
    /// components the weights. Weights are renormalized to sum to 1.
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::Domain(format!(
                "gauss_hermite: order {order} < 2"
            )));
        }
        let mut diag = vec![0.0_f64; order];
        let mut off: Vec<f64> = (1..order).map(|k| (k as f64).sqrt()).collect();
        off.push(0.0);
        let mut first_row = vec![0.0_f64; order];
        first_row[0] = 1.0;
        tridiag_ql(&mut diag, &mut off, &mut first_row)?;

        let mut idx: Vec<usize> = (0..order).collect();
        idx.sort_by(|&a, &b| diag[a].partial_cmp(&diag[b]).unwrap());
        let nodes: Vec<f64> = idx.iter().map(|&i| diag[i]).collect();
        let raw: Vec<f64> = idx.iter().map(|&i| first_row[i] * first_row[i]).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|&w| w / total).collect();
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `E_{t~N(0,1)}[f(t)]` as `sum_k w_k f(node_k)`.
pub fn expect_1d<F: FnMut(f64) -> f64>(mut f: F, rule: &QuadratureRule) -> Result<f64> {
    let mut acc = 0.0;
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::Eval { node: x, value: v });
        }
        acc += w * v;
    }
    Ok(acc)
}

/// Tensor-product expectation over independent `(t, r) ~ N(0,1)^2`
/// using the same rule on both axes.
pub fn expect_2d<F: FnMut(f64, f64) -> f64>(mut f: F, rule: &QuadratureRule) -> Result<f64> {
    expect_2d_with(&mut f, rule, rule)
}

/// Tensor-product expectation with separate rules per axis.
pub fn expect_2d_with<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    rule_t: &QuadratureRule,
    rule_r: &QuadratureRule,
) -> Result<f64> {
    let mut acc = 0.0;
    for (&t, &wt) in rule_t.nodes.iter().zip(&rule_t.weights) {
        let mut inner = 0.0;
        for (&r, &wr) in rule_r.nodes.iter().zip(&rule_r.weights) {
            let v = f(t, r);
            if !v.is_finite() {
                return Err(Error::Eval { node: t, value: v });
            }
            inner += wr * v;
        }
        acc += wt * inner;
    }
    Ok(acc)
}

/// Gauss-Legendre nodes/weights on `[-1, 1]`, reused across panels.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let n = n.max(2);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Chebyshev initial guess, then Newton on the Legendre recurrence.
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
                }
                pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Raw integral `\int_a^b f(t) dt`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

/// Composite rule for `\int_a^b f(t) phi(t) dt` (phi the N(0,1) density).
///
/// Weights sum to the Gaussian mass of `[a, b]`; they are intentionally
/// not normalized because the rule represents a partial expectation.
#[derive(Debug, Clone)]
pub struct NormalSegment {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl NormalSegment {
    /// Plain panels of width at most [`PANEL_MAX_WIDTH`].
    pub fn new(a: f64, b: f64, gl: &GaussLegendre) -> Self {
        Self::with_breakpoints(a, b, &[], gl)
    }

    /// Panels graded around each `(center, scale)` breakpoint: edge spacing
    /// starts at `scale` next to the center and doubles outward, so a
    /// feature of that width gets a full panel of resolution.
    pub fn with_breakpoints(a: f64, b: f64, breaks: &[(f64, f64)], gl: &GaussLegendre) -> Self {
        let mut rule = Self {
            nodes: Vec::new(),
            weights: Vec::new(),
        };
        if !(b - a > 0.0) || !a.is_finite() || !b.is_finite() {
            return rule;
        }
        let mut edges = vec![a, b];
        for &(center, scale) in breaks {
            if center > a && center < b {
                edges.push(center);
            }
            let mut w = scale.max(1e-6);
            let mut k = 0;
            while w < PANEL_MAX_WIDTH && k < 16 {
                for p in [center - w, center + w] {
                    if p > a && p < b {
                        edges.push(p);
                    }
                }
                w *= 2.0;
                k += 1;
            }
        }
        edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
        edges.dedup_by(|x, y| (*x - *y).abs() < 1e-13);

        for pair in edges.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let span = hi - lo;
            if span <= 0.0 {
                continue;
            }
            let panels = (span / PANEL_MAX_WIDTH).ceil() as usize;
            let step = span / panels as f64;
            for p in 0..panels {
                let pa = lo + p as f64 * step;
                let pb = pa + step;
                let mid = 0.5 * (pa + pb);
                let half = 0.5 * (pb - pa);
                for (&x, &w) in gl.nodes.iter().zip(&gl.weights) {
                    let t = mid + half * x;
                    rule.nodes.push(t);
                    rule.weights.push(w * half * normal_pdf(t));
                }
            }
        }
        rule
    }

    /// `\int f(t) phi(t) dt` over the covered interval.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> Result<f64> {
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::Eval { node: x, value: v });
            }
            acc += w * v;
        }
        Ok(acc)
    }

    /// Gaussian mass covered by the rule.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// QL with implicit shifts for a symmetric tridiagonal matrix.
///
/// `diag` holds the diagonal, `off` the subdiagonal in `off[0..n-1]`
/// (`off[n-1]` scratch). Eigenvalues replace `diag`; `row` (any vector)
/// is rotated along, so passing the first unit vector yields the first
/// components of the eigenvectors, exactly what Golub-Welsch needs.
fn tridiag_ql(diag: &mut [f64], off: &mut [f64], row: &mut [f64]) -> Result<()> {
    let n = diag.len();
    if n == 0 {
        return Ok(());
    }
    off[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Numerical(
                    "gauss_hermite: tridiagonal QL did not converge".into(),
                ));
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0_f64, 1.0_f64);
            let mut p = 0.0_f64;
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let mut f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                f = row[i + 1];
                row[i + 1] = s * row[i] + c * f;
                row[i] = c * row[i] - s * f;
            }
            if underflow {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}
