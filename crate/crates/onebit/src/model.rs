//! Problem instances: sparse signals, Gaussian measurement matrices,
//! threshold vectors, the one-bit measurement itself, and empirical
//! error metrics.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adaptive::{self, AdaptiveParams};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Substream tags for deriving per-purpose seeds from an instance seed.
/// Stable across runs; changing them changes every sampled stream.
pub mod streams {
    pub const SIGNAL: u64 = 1;
    pub const MATRIX: u64 = 2;
    pub const THRESHOLDS: u64 = 3;
    pub const TRIAL: u64 = 4;
    pub const PROBE: u64 = 5;
}

/// SplitMix64 finalizer; the basis of all seed derivation.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `(master, stream)`. Children are
/// order-independent, so trials can run in any order or in parallel.
#[inline]
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    mix64(master ^ mix64(stream))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Bernoulli-Gaussian signal prior: each entry is zero with probability
/// `1 - rho`, otherwise N(0, sigma0_sq).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalModel {
    pub rho: f64,
    pub sigma0_sq: f64,
}

impl SignalModel {
    pub fn new(rho: f64, sigma0_sq: f64) -> Result<Self> {
        let m = Self { rho, sigma0_sq };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Domain(format!(
                "signal model: rho = {} outside (0, 1]",
                self.rho
            )));
        }
        if !(self.sigma0_sq > 0.0 && self.sigma0_sq.is_finite()) {
            return Err(Error::Domain(format!(
                "signal model: sigma0_sq = {} must be positive",
                self.sigma0_sq
            )));
        }
        Ok(())
    }

    /// Per-component signal power `Q0 = rho * sigma0_sq`.
    pub fn signal_power(&self) -> f64 {
        self.rho * self.sigma0_sq
    }
}

/// How the threshold vector is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdStrategy {
    /// Every measurement uses the same constant threshold.
    Fixed { lambda: f64 },
    /// Thresholds drawn i.i.d. from N(0, sigma_lambda^2).
    #[serde(rename = "gaussian")]
    GaussianRandom { sigma_lambda: f64 },
    /// Thresholds produced online by the learning rule.
    Adaptive { params: AdaptiveParams },
}

impl ThresholdStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Fixed { .. } => "fixed",
            Self::GaussianRandom { .. } => "gaussian",
            Self::Adaptive { .. } => "adaptive",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Fixed { lambda } if !lambda.is_finite() => {
                Err(Error::Domain("fixed strategy: non-finite lambda".into()))
            }
            Self::GaussianRandom { sigma_lambda } if !(*sigma_lambda >= 0.0) => Err(
                Error::Domain(format!("gaussian strategy: sigma_lambda = {sigma_lambda} < 0")),
            ),
            Self::Adaptive { params } => params.validate(),
            _ => Ok(()),
        }
    }
}

/// Draw an n-vector from the Bernoulli-Gaussian prior.
pub fn sample_signal(n: usize, model: &SignalModel, seed: u64) -> Result<Vec<f64>> {
    model.validate()?;
    if n == 0 {
        return Err(Error::Domain("sample_signal: n = 0".into()));
    }
    let mut rng = rng_from(seed);
    let sigma = model.sigma0_sq.sqrt();
    Ok((0..n)
        .map(|_| {
            let keep: f64 = rng.random();
            if keep < model.rho {
                let z: f64 = rng.sample(StandardNormal);
                sigma * z
            } else {
                0.0
            }
        })
        .collect())
}

/// Draw an m x n measurement matrix with i.i.d. N(0, 1/n) entries.
pub fn sample_matrix(m: usize, n: usize, seed: u64) -> Result<Matrix> {
    if m == 0 || n == 0 {
        return Err(Error::Domain(format!("sample_matrix: {m} x {n}")));
    }
    let mut rng = rng_from(seed);
    let scale = 1.0 / (n as f64).sqrt();
    let mut mat = Matrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            mat.set(i, j, scale * z);
        }
    }
    Ok(mat)
}

/// Realize the threshold vector for the fixed or Gaussian strategies.
///
/// Adaptive thresholds are produced online during measurement and are
/// rejected here.
pub fn sample_thresholds(strategy: &ThresholdStrategy, m: usize, seed: u64) -> Result<Vec<f64>> {
    strategy.validate()?;
    match strategy {
        ThresholdStrategy::Fixed { lambda } => Ok(vec![*lambda; m]),
        ThresholdStrategy::GaussianRandom { sigma_lambda } => {
            let mut rng = rng_from(seed);
            Ok((0..m)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    sigma_lambda * z
                })
                .collect())
        }
        ThresholdStrategy::Adaptive { .. } => Err(Error::Strategy(
            "adaptive thresholds are generated online; use the adaptive module".into(),
        )),
    }
}

/// One-bit measurement `y = sign(Phi x0 + lambda)` with `sign(0) := +1`.
pub fn measure(phi: &Matrix, x0: &[f64], lambda_vec: &[f64]) -> Result<Vec<i8>> {
    if lambda_vec.len() != phi.nrows() {
        return Err(Error::Dimension(format!(
            "measure: {} thresholds for {} rows",
            lambda_vec.len(),
            phi.nrows()
        )));
    }
    let z = phi.matvec(x0)?;
    Ok(z.iter()
        .zip(lambda_vec)
        .map(|(&zi, &li)| if zi + li >= 0.0 { 1 } else { -1 })
        .collect())
}

/// Per-component squared error `N^-1 |x_hat - x0|^2`.
pub fn empirical_mse(x_hat: &[f64], x0: &[f64]) -> Result<f64> {
    if x_hat.len() != x0.len() || x0.is_empty() {
        return Err(Error::Dimension(format!(
            "empirical_mse: lengths {} vs {}",
            x_hat.len(),
            x0.len()
        )));
    }
    let s: f64 = x_hat
        .iter()
        .zip(x0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(s / x0.len() as f64)
}

/// `10 log10(mse)`; negative infinity at zero error.
pub fn mse_to_db(mse: f64) -> f64 {
    if mse > 0.0 {
        10.0 * mse.log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// Squared distance between unit-normalized vectors.
pub fn directional_mse(x_hat: &[f64], x0: &[f64]) -> Result<f64> {
    if x_hat.len() != x0.len() || x0.is_empty() {
        return Err(Error::Dimension(format!(
            "directional_mse: lengths {} vs {}",
            x_hat.len(),
            x0.len()
        )));
    }
    let na = crate::linalg::norm2(x_hat);
    let nb = crate::linalg::norm2(x0);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain(
            "directional_mse: zero vector has no direction".into(),
        ));
    }
    Ok(x_hat
        .iter()
        .zip(x0)
        .map(|(a, b)| {
            let d = a / na - b / nb;
            d * d
        })
        .sum())
}

/// One realized problem: everything needed to reconstruct and score.
#[derive(Debug, Clone)]
pub struct Instance {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub model: SignalModel,
    pub strategy: ThresholdStrategy,
    pub phi: Matrix,
    pub x0: Vec<f64>,
    pub lambda_vec: Vec<f64>,
    pub y: Vec<i8>,
}

impl Instance {
    /// Generate a full instance for any strategy. The measurement matrix
    /// and signal always come from the same derived substreams, so the
    /// adaptive strategy with step size zero reproduces the fixed
    /// strategy bit for bit.
    pub fn generate(
        n: usize,
        m: usize,
        model: &SignalModel,
        strategy: &ThresholdStrategy,
        seed: u64,
    ) -> Result<Self> {
        model.validate()?;
        strategy.validate()?;
        if n == 0 || m == 0 {
            return Err(Error::Domain(format!("instance: {m} x {n}")));
        }
        let x0 = sample_signal(n, model, derive_seed(seed, streams::SIGNAL))?;
        let (phi, lambda_vec, y) = match strategy {
            ThresholdStrategy::Adaptive { params } => {
                let run = adaptive::run_adaptive(&x0, m, params, seed)?;
                (run.phi, run.lambda_vec, run.y)
            }
            _ => {
                let phi = sample_matrix(m, n, derive_seed(seed, streams::MATRIX))?;
                let lam = sample_thresholds(strategy, m, derive_seed(seed, streams::THRESHOLDS))?;
                let y = measure(&phi, &x0, &lam)?;
                (phi, lam, y)
            }
        };
        Ok(Self {
            n,
            m,
            seed,
            model: *model,
            strategy: strategy.clone(),
            phi,
            x0,
            lambda_vec,
            y,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    /// Check dimensional consistency and that `y` is exactly the sign
    /// pattern of `Phi x0 + lambda`.
    pub fn validate(&self) -> Result<()> {
        if self.phi.nrows() != self.m
            || self.phi.ncols() != self.n
            || self.x0.len() != self.n
            || self.lambda_vec.len() != self.m
            || self.y.len() != self.m
        {
            return Err(Error::Dimension("instance: inconsistent dimensions".into()));
        }
        let expect = measure(&self.phi, &self.x0, &self.lambda_vec)?;
        if expect != self.y {
            return Err(Error::Domain(
                "instance: stored y does not match re-measurement".into(),
            ));
        }
        Ok(())
    }

    /// Flat JSON document; `phi` and `x0` may be omitted and regenerated
    /// from the stored seed on load.
    pub fn to_json(&self, include_x0: bool, include_phi: bool) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "m": self.m,
            "seed": self.seed,
            "rho": self.model.rho,
            "sigma0_sq": self.model.sigma0_sq,
            "strategy": self.strategy,
            "lambda_vec": self.lambda_vec,
            "y": self.y,
            "x0": if include_x0 { Some(&self.x0) } else { None },
            "phi": if include_phi { Some(self.phi.to_nested()) } else { None },
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            n: usize,
            m: usize,
            seed: u64,
            rho: f64,
            sigma0_sq: f64,
            strategy: ThresholdStrategy,
            lambda_vec: Vec<f64>,
            y: Vec<i8>,
            #[serde(default)]
            x0: Option<Vec<f64>>,
            #[serde(default)]
            phi: Option<Vec<Vec<f64>>>,
        }
        let doc: Doc = serde_json::from_value(v.clone())?;
        let model = SignalModel::new(doc.rho, doc.sigma0_sq)?;
        let x0 = match doc.x0 {
            Some(x) => x,
            None => sample_signal(doc.n, &model, derive_seed(doc.seed, streams::SIGNAL))?,
        };
        let phi = match doc.phi {
            Some(rows) => Matrix::from_rows(rows)?,
            None => sample_matrix(doc.m, doc.n, derive_seed(doc.seed, streams::MATRIX))?,
        };
        let inst = Self {
            n: doc.n,
            m: doc.m,
            seed: doc.seed,
            model,
            strategy: doc.strategy,
            phi,
            x0,
            lambda_vec: doc.lambda_vec,
            y: doc.y,
        };
        inst.validate()?;
        Ok(inst)
    }
}
