//! Dirichlet negative log-likelihood, the monotonicity penalty on the mean
//! true-prediction rate, and their analytic gradient.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::mlp::{MlpParams, Trace};
use crate::error::{Error, Result};
use crate::taskgen::{TransferDataset, TransferRecord};
use crate::transfer::QualityVector;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    /// `lambda * max(0, mu[n-1] - mu[n])`, differentiable almost everywhere.
    #[default]
    Hinge,
    /// `lambda` per decrease of `mu`; zero gradient.
    Step,
}

/// Clamps each rate into `[eps, 1 - eps]` and renormalises onto the simplex.
pub fn clamp_quality(q: [f64; 3], eps: f64) -> [f64; 3] {
    let c = q.map(|v| v.clamp(eps, 1.0 - eps));
    let s: f64 = c.iter().sum();
    c.map(|v| v / s)
}

fn check_alpha(alpha: &[f64; 3]) -> Result<()> {
    if alpha.iter().all(|&a| a > 0.0 && a.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonPositiveAlpha)
    }
}

fn nll_clamped(alpha: &[f64; 3], log_q: &[f64; 3]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    -ln_gamma(a0) + alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>()
        - alpha.iter().zip(log_q).map(|(a, lq)| (a - 1.0) * lq).sum::<f64>()
}

pub fn dirichlet_nll(alpha: [f64; 3], q: &QualityVector, q_clamp: f64) -> Result<f64> {
    check_alpha(&alpha)?;
    let log_q = clamp_quality(q.as_array(), q_clamp).map(f64::ln);
    Ok(nll_clamped(&alpha, &log_q))
}

fn tr_mean(alpha: &[f64; 3]) -> f64 {
    alpha[0] / alpha.iter().sum::<f64>()
}

/// Total penalty over concentrations ordered by ascending similarity.
pub fn monotonicity_penalty(alphas_sorted: &[[f64; 3]], lambda: f64, mode: PenaltyMode) -> f64 {
    alphas_sorted
        .windows(2)
        .map(|w| {
            let drop = tr_mean(&w[0]) - tr_mean(&w[1]);
            match mode {
                PenaltyMode::Hinge => lambda * drop.max(0.0),
                PenaltyMode::Step if drop > 0.0 => lambda,
                PenaltyMode::Step => 0.0,
            }
        })
        .sum()
}

/// Training records in ascending-similarity order with precomputed log rates.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub varsigma: Vec<f64>,
    pub log_q: Vec<[f64; 3]>,
}

impl PreparedData {
    pub fn new(dataset: &TransferDataset, q_clamp: f64) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Empty("transfer dataset"));
        }
        let mut records: Vec<&TransferRecord> = dataset.records.iter().collect();
        // stable: equal similarities keep file order
        records.sort_by(|a, b| a.varsigma.total_cmp(&b.varsigma));
        if records.iter().any(|r| !r.varsigma.is_finite()) {
            return Err(Error::NonFinite("similarity in training data"));
        }
        Ok(Self {
            varsigma: records.iter().map(|r| r.varsigma).collect(),
            log_q: records.iter().map(|r| clamp_quality(r.quality().as_array(), q_clamp).map(f64::ln)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.varsigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.varsigma.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSettings {
    pub lambda: f64,
    pub penalty_mode: PenaltyMode,
}

/// Mean over records of NLL plus penalty, and optionally its gradient.
pub fn loss_and_gradient(
    params: &MlpParams,
    data: &PreparedData,
    settings: LossSettings,
    want_grad: bool,
) -> (f64, Option<MlpParams>) {
    let n = data.len();
    let traces: Vec<Trace> = data.varsigma.iter().map(|&s| params.trace(s)).collect();
    let alphas: Vec<[f64; 3]> = traces.iter().map(Trace::output).collect();

    let nll: f64 = alphas.iter().zip(&data.log_q).map(|(a, lq)| nll_clamped(a, lq)).sum();
    let penalty = monotonicity_penalty(&alphas, settings.lambda, settings.penalty_mode);
    let loss = (nll + penalty) / n as f64;
    if !want_grad {
        return (loss, None);
    }

    let mut d_alpha: Vec<[f64; 3]> = alphas
        .iter()
        .zip(&data.log_q)
        .map(|(a, lq)| {
            let psi0 = digamma(a.iter().sum());
            [0, 1, 2].map(|k| digamma(a[k]) - psi0 - lq[k])
        })
        .collect();

    if settings.penalty_mode == PenaltyMode::Hinge && settings.lambda != 0.0 {
        let d_mu = |a: &[f64; 3]| {
            let a0: f64 = a.iter().sum();
            let a0sq = a0 * a0;
            [(a0 - a[0]) / a0sq, -a[0] / a0sq, -a[0] / a0sq]
        };
        for i in 1..n {
            if tr_mean(&alphas[i - 1]) > tr_mean(&alphas[i]) {
                let prev = d_mu(&alphas[i - 1]);
                let cur = d_mu(&alphas[i]);
                for k in 0..3 {
                    d_alpha[i - 1][k] += settings.lambda * prev[k];
                    d_alpha[i][k] -= settings.lambda * cur[k];
                }
            }
        }
    }

    let scale = 1.0 / n as f64;
    let mut grad = MlpParams::zeros();
    for (trace, d) in traces.iter().zip(&d_alpha) {
        params.backward(trace, d.map(|v| v * scale), &mut grad);
    }
    (loss, Some(grad))
}

pub fn total_loss(
    params: &MlpParams,
    dataset: &TransferDataset,
    lambda: f64,
    q_clamp: f64,
    mode: PenaltyMode,
) -> Result<f64> {
    let data = PreparedData::new(dataset, q_clamp)?;
    Ok(loss_and_gradient(params, &data, LossSettings { lambda, penalty_mode: mode }, false).0)
}
