//! Expected utility of forecast prediction quality, the expected value of
//! information transfer (EVIT), and transfer-strategy selection.
//!
//! ```text
//! EU(Q | T)  = M * sum_k E[q_k] * U_k            (Dirichlet mean)
//! EU(Q | T0) = M * (U_true + U_fp + U_fn) / 3    (uniform allocation)
//! EVIT(T)    = EU(Q | T) - EU(Q | T0)
//! T*         = argmax_T EVIT(T) + U(T),  T0 when no candidate beats 0
//! ```

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regressor::{dirichlet_mean, forward, DirichletSampler, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityTable {
    pub u_true: f64,
    pub u_fp: f64,
    pub u_fn: f64,
}

impl Default for UtilityTable {
    fn default() -> Self {
        Self { u_true: 5.0, u_fp: -10.0, u_fn: -50.0 }
    }
}

impl UtilityTable {
    pub fn as_array(&self) -> [f64; 3] {
        [self.u_true, self.u_fp, self.u_fn]
    }

    /// Describes an unusual ordering (expected `u_true > 0 > u_fp > u_fn`).
    pub fn ordering_warning(&self) -> Option<String> {
        if self.u_true > 0.0 && 0.0 > self.u_fp && self.u_fp > self.u_fn {
            None
        } else {
            Some(format!(
                "utilities ({}, {}, {}) do not follow true > 0 > false-positive > false-negative",
                self.u_true, self.u_fp, self.u_fn
            ))
        }
    }
}

/// Expected total utility of `m_points` predictions under `Dir(alpha)`.
pub fn expected_utility(alpha: [f64; 3], m_points: usize, utilities: &UtilityTable) -> f64 {
    let mean = dirichlet_mean(alpha);
    m_points as f64 * mean.iter().zip(utilities.as_array()).map(|(q, u)| q * u).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilitySummary {
    pub mean: f64,
    pub std: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// Monte Carlo distribution of the count-utility product `M * q . U`.
pub fn expected_utility_sampled(
    alpha: [f64; 3],
    m_points: usize,
    utilities: &UtilityTable,
    n_samples: usize,
    seed: u64,
) -> Result<UtilitySummary> {
    if n_samples < 2 {
        return Err(Error::InvalidConfig("need at least 2 samples".into()));
    }
    let sampler = DirichletSampler::new(alpha)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = utilities.as_array();
    let m = m_points as f64;
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 1..=n_samples {
        let q = sampler.sample(&mut rng);
        let x = m * (q[0] * u[0] + q[1] * u[1] + q[2] * u[2]);
        let d = x - mean;
        mean += d / i as f64;
        m2 += d * (x - mean);
    }
    let std = (m2 / (n_samples - 1) as f64).sqrt();
    Ok(UtilitySummary { mean, std, std_error: std / (n_samples as f64).sqrt(), n_samples })
}

/// Utility of `m_points` predictions with each type equally likely.
pub fn null_expected_utility(m_points: usize, utilities: &UtilityTable) -> f64 {
    m_points as f64 * (utilities.u_true + utilities.u_fp + utilities.u_fn) / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvitResult {
    pub varsigma: f64,
    pub eu_transfer: f64,
    pub eu_null: f64,
    pub evit: f64,
    pub positive: bool,
}

impl EvitResult {
    pub fn from_alpha(varsigma: f64, alpha: [f64; 3], m_points: usize, utilities: &UtilityTable) -> Self {
        let eu_transfer = expected_utility(alpha, m_points, utilities);
        let eu_null = null_expected_utility(m_points, utilities);
        let evit = eu_transfer - eu_null;
        Self { varsigma, eu_transfer, eu_null, evit, positive: evit > 0.0 }
    }
}

pub fn evit(params: &MlpParams, varsigma: f64, m_points: usize, utilities: &UtilityTable) -> Result<EvitResult> {
    Ok(EvitResult::from_alpha(varsigma, forward(params, varsigma)?, m_points, utilities))
}

pub fn evit_curve(
    params: &MlpParams,
    varsigma_grid: &[f64],
    m_points: usize,
    utilities: &UtilityTable,
) -> Result<Vec<EvitResult>> {
    varsigma_grid.iter().map(|&s| evit(params, s, m_points, utilities)).collect()
}

/// `n` evenly spaced points from 0 to 1 inclusive.
pub fn unit_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// CSV `varsigma,eu_transfer,eu_null,evit`.
pub fn write_evit_csv<W: Write>(curve: &[EvitResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["varsigma", "eu_transfer", "eu_null", "evit"])?;
    for r in curve {
        w.serialize((r.varsigma, r.eu_transfer, r.eu_null, r.evit))?;
    }
    w.flush()?;
    Ok(())
}

const THRESHOLD_GRID: usize = 201;

/// Smallest similarity in `[0, 1]` with `EVIT >= 0`, located by grid
/// bracketing then bisection down to `tol`. `None` when EVIT is negative on
/// the whole grid.
pub fn positive_transfer_threshold_with<F>(mut evit_at: F, tol: f64) -> Result<Option<f64>>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig("threshold tolerance must be > 0".into()));
    }
    let grid = unit_grid(THRESHOLD_GRID);
    let mut prev = None;
    for &s in &grid {
        if evit_at(s)? >= 0.0 {
            let Some(mut lo) = prev else {
                return Ok(Some(0.0));
            };
            let mut hi = s;
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                if evit_at(mid)? >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Some(hi));
        }
        prev = Some(s);
    }
    Ok(None)
}

pub fn positive_transfer_threshold(
    params: &MlpParams,
    m_points: usize,
    utilities: &UtilityTable,
    tol: f64,
) -> Result<Option<f64>> {
    positive_transfer_threshold_with(|s| Ok(evit(params, s, m_points, utilities)?.evit), tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    NcaKnn,
    Identity,
}

/// A source/algorithm choice with its execution utility `U(T)`. No source
/// means the null strategy `T0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferStrategy {
    pub source_id: Option<usize>,
    pub algorithm: Algorithm,
    pub transfer_cost: f64,
}

impl TransferStrategy {
    pub const NULL: Self = Self { source_id: None, algorithm: Algorithm::Identity, transfer_cost: 0.0 };

    pub fn nca(source_id: usize, transfer_cost: f64) -> Self {
        Self { source_id: Some(source_id), algorithm: Algorithm::NcaKnn, transfer_cost }
    }

    pub fn is_null(&self) -> bool {
        self.source_id.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub source_id: usize,
    pub varsigma: f64,
    /// `U(T)`; costs are negative utilities.
    #[serde(default)]
    pub transfer_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub source_id: usize,
    pub varsigma: f64,
    pub transfer_cost: f64,
    pub evit: f64,
    /// `EVIT + U(T)`.
    pub value: f64,
}

/// Candidates ordered best first: value, then similarity (both descending),
/// then source id.
pub fn rank_candidates(
    candidates: &[Candidate],
    params: &MlpParams,
    m_points: usize,
    utilities: &UtilityTable,
) -> Result<Vec<RankedCandidate>> {
    let mut ranked = candidates
        .iter()
        .map(|c| {
            let e = evit(params, c.varsigma, m_points, utilities)?.evit;
            Ok(RankedCandidate {
                source_id: c.source_id,
                varsigma: c.varsigma,
                transfer_cost: c.transfer_cost,
                evit: e,
                value: e + c.transfer_cost,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        b.value.total_cmp(&a.value).then(b.varsigma.total_cmp(&a.varsigma)).then(a.source_id.cmp(&b.source_id))
    });
    Ok(ranked)
}

pub fn optimize_strategy(
    candidates: &[Candidate],
    params: &MlpParams,
    m_points: usize,
    utilities: &UtilityTable,
) -> Result<TransferStrategy> {
    let ranked = rank_candidates(candidates, params, m_points, utilities)?;
    Ok(match ranked.first() {
        Some(best) if best.value > 0.0 => TransferStrategy::nca(best.source_id, best.transfer_cost),
        _ => TransferStrategy::NULL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Transfer,
    NoTransfer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub source_id: Option<usize>,
    pub varsigma: Option<f64>,
    pub evit: f64,
    pub decision: Decision,
}

impl Recommendation {
    pub fn from_ranking(strategy: &TransferStrategy, ranked: &[RankedCandidate]) -> Self {
        match strategy.source_id.and_then(|id| ranked.iter().find(|r| r.source_id == id)) {
            Some(r) => Self {
                source_id: Some(r.source_id),
                varsigma: Some(r.varsigma),
                evit: r.evit,
                decision: Decision::Transfer,
            },
            None => Self { source_id: None, varsigma: None, evit: 0.0, decision: Decision::NoTransfer },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressor::Dense;

    /// Network whose TR concentration is `softplus(gain * s + bias)` and
    /// whose FPR/FNR concentrations are constant.
    fn ramp_model(gain: f64, bias: f64) -> MlpParams {
        let mut p = MlpParams::zeros();
        // hidden 1, unit 0 carries s through softplus; hidden 2 unit 0 passes it on.
        p.layers[0].weights[0] = 10.0;
        p.layers[0].biases[0] = -5.0;
        p.layers[1].weights[0] = 1.0;
        let out: &mut Dense = &mut p.layers[2];
        out.weights[0] = gain;
        out.biases[0] = bias;
        out.biases[1] = 0.5;
        out.biases[2] = 0.5;
        p
    }

    #[test]
    fn null_utility_values() {
        let u = UtilityTable::default();
        assert!((null_expected_utility(200, &u) + 3666.666666666667).abs() < 1e-9);
        assert!((null_expected_utility(200, &u) + 3666.67).abs() < 0.01);
        let ones = UtilityTable { u_true: 1.0, u_fp: 1.0, u_fn: 1.0 };
        assert_eq!(null_expected_utility(7, &ones), 7.0);
        assert_eq!(null_expected_utility(3, &u), -55.0);
    }

    #[test]
    fn expected_utility_examples() {
        let u = UtilityTable::default();
        assert!((expected_utility([1.0, 1.0, 1.0], 200, &u) + 3666.67).abs() < 0.01);
        let near_certain = expected_utility([1e9, 1e-3, 1e-3], 200, &u);
        assert!((near_certain - 1000.0).abs() < 1e-6);
        // counts (100, 60, 40) as a point mass
        let counts = [100.0, 60.0, 40.0];
        let direct: f64 = counts.iter().zip(u.as_array()).map(|(c, v)| c * v).sum();
        assert_eq!(direct, -2100.0);
        let alpha = [100e6, 60e6, 40e6];
        assert!((expected_utility(alpha, 200, &u) + 2100.0).abs() < 1e-6);
    }

    #[test]
    fn sampled_utility_agrees_with_analytic() {
        let u = UtilityTable::default();
        let alpha = [4.0, 1.5, 0.7];
        let s = expected_utility_sampled(alpha, 200, &u, 200_000, 8).unwrap();
        assert!((s.mean - expected_utility(alpha, 200, &u)).abs() < 3.0 * s.std_error);
    }

    #[test]
    fn symmetric_forecast_has_zero_evit() {
        let r = EvitResult::from_alpha(0.5, [2.0, 2.0, 2.0], 200, &UtilityTable::default());
        assert!(r.evit.abs() < 1e-9);
        assert_eq!(r.evit, r.eu_transfer - r.eu_null);
    }

    #[test]
    fn zero_network_has_zero_evit_everywhere() {
        let p = MlpParams::zeros();
        let u = UtilityTable::default();
        let curve = evit_curve(&p, &unit_grid(11), 200, &u).unwrap();
        assert!(curve.iter().all(|r| r.evit.abs() < 1e-9 && r.eu_null == curve[0].eu_null));
    }

    #[test]
    fn single_point_curve_matches_evit() {
        let p = ramp_model(6.0, -1.0);
        let u = UtilityTable::default();
        let c = evit_curve(&p, &[0.42], 200, &u).unwrap();
        assert_eq!(c, vec![evit(&p, 0.42, 200, &u).unwrap()]);
    }

    #[test]
    fn threshold_of_constant_zero_evit_is_zero() {
        assert_eq!(positive_transfer_threshold_with(|_| Ok(0.0), 1e-6).unwrap(), Some(0.0));
        // exact ties at zero count as positive
        let p = MlpParams::zeros();
        let t =
            positive_transfer_threshold_with(|s| Ok(evit(&p, s, 200, &UtilityTable::default())?.evit.round()), 1e-6);
        assert_eq!(t.unwrap(), Some(0.0));
    }

    #[test]
    fn threshold_brackets_root() {
        let f = |s: f64| Ok(s * s - 0.5);
        let tol = 1e-7;
        let t = positive_transfer_threshold_with(f, tol).unwrap().unwrap();
        assert!((t - 0.5_f64.sqrt()).abs() <= tol);
        assert!(f(t - tol).unwrap() < 0.0 && f(t + tol).unwrap() >= 0.0);
        assert_eq!(positive_transfer_threshold_with(|_| Ok(-1.0), tol).unwrap(), None);
        assert!(positive_transfer_threshold_with(f, 0.0).is_err());
    }

    #[test]
    fn ramp_model_threshold_is_bracketed() {
        let p = ramp_model(8.0, -8.0);
        let u = UtilityTable::default();
        let tol = 1e-6;
        let t = positive_transfer_threshold(&p, 200, &u, tol).unwrap().unwrap();
        assert!(evit(&p, t - tol, 200, &u).unwrap().evit < 0.0);
        assert!(evit(&p, t + tol, 200, &u).unwrap().evit >= 0.0);
    }

    #[test]
    fn strategy_selection() {
        let p = ramp_model(8.0, -8.0);
        let u = UtilityTable::default();
        let cands = [
            Candidate { source_id: 3, varsigma: 0.80, transfer_cost: 0.0 },
            Candidate { source_id: 1, varsigma: 0.95, transfer_cost: 0.0 },
            Candidate { source_id: 2, varsigma: 0.90, transfer_cost: 0.0 },
        ];
        assert_eq!(optimize_strategy(&cands, &p, 200, &u).unwrap(), TransferStrategy::nca(1, 0.0));
        assert_eq!(optimize_strategy(&[], &p, 200, &u).unwrap(), TransferStrategy::NULL);
        let hopeless = [Candidate { source_id: 1, varsigma: 0.0, transfer_cost: 0.0 }];
        assert!(evit(&p, 0.0, 200, &u).unwrap().evit < 0.0);
        assert!(optimize_strategy(&hopeless, &p, 200, &u).unwrap().is_null());
        // a large cost turns a positive EVIT into no transfer
        let costly = [Candidate { source_id: 1, varsigma: 0.95, transfer_cost: -1e6 }];
        assert!(optimize_strategy(&costly, &p, 200, &u).unwrap().is_null());
    }

    #[test]
    fn ties_prefer_higher_similarity_then_lower_id() {
        let p = MlpParams::zeros();
        let u = UtilityTable::default();
        let cands = [
            Candidate { source_id: 5, varsigma: 0.7, transfer_cost: 10.0 },
            Candidate { source_id: 4, varsigma: 0.9, transfer_cost: 10.0 },
            Candidate { source_id: 2, varsigma: 0.9, transfer_cost: 10.0 },
        ];
        let r = rank_candidates(&cands, &p, 200, &u).unwrap();
        assert_eq!(r.iter().map(|c| c.source_id).collect::<Vec<_>>(), vec![2, 4, 5]);
        assert_eq!(optimize_strategy(&cands, &p, 200, &u).unwrap().source_id, Some(2));
    }

    #[test]
    fn utility_ordering_warning() {
        assert!(UtilityTable::default().ordering_warning().is_none());
        assert!(UtilityTable { u_true: -1.0, ..Default::default() }.ordering_warning().is_some());
    }

    #[test]
    fn evit_csv_header() {
        let p = MlpParams::zeros();
        let curve = evit_curve(&p, &[0.0, 1.0], 200, &UtilityTable::default()).unwrap();
        let mut buf = Vec::new();
        write_evit_csv(&curve, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("varsigma,eu_transfer,eu_null,evit\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
