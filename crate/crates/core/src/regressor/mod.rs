//! Probabilistic regression from structural similarity to post-transfer
//! prediction quality.
//!
//! A `1-8-12-3` softplus network maps a similarity value to Dirichlet
//! concentrations over `(TR, FPR, FNR)`. Training minimises the mean
//! Dirichlet negative log-likelihood plus a penalty on decreases of the
//! mean true-prediction rate between records adjacent in similarity, using
//! full-batch Adam.

mod forecast;
mod loss;
mod mlp;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taskgen::TransferDataset;

pub use forecast::{
    density_on_simplex, dirichlet_mean, dirichlet_pdf, forecast_from_alpha, predict_quality, DirichletSampler,
    QualityForecast, SimplexDensity, SimplexPoint, CREDIBLE_LEVEL,
};
pub use loss::{
    clamp_quality, dirichlet_nll, loss_and_gradient, monotonicity_penalty, total_loss, LossSettings, PenaltyMode,
    PreparedData,
};
pub use mlp::{forward, softplus, Dense, MlpParams, LAYER_SIZES};

pub const MODEL_SCHEMA: &str = "evitlab-mlp-v1";

/// Fewer records than this are too sparse to learn a mapping from.
pub const MIN_TRAINING_RECORDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub q_clamp: f64,
    pub init_std: f64,
    pub penalty_mode: PenaltyMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lambda: 1.0,
            q_clamp: 1e-6,
            init_std: 0.1,
            penalty_mode: PenaltyMode::Hinge,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and > 0");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if !(self.q_clamp > 0.0 && self.q_clamp < 1.0 / 3.0) {
            return bad("q_clamp must lie in (0, 1/3)");
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad("init_std must be finite and > 0");
        }
        Ok(())
    }

    fn loss_settings(&self) -> LossSettings {
        LossSettings { lambda: self.lambda, penalty_mode: self.penalty_mode }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut MlpParams, grad: &MlpParams, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        let grads = grad.flatten();
        for (((p, g), m), v) in params.values_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    /// Loss before each epoch's update; `loss_history[0]` is the initial loss.
    pub loss_history: Vec<f64>,
}

pub fn train(dataset: &TransferDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.len() < MIN_TRAINING_RECORDS {
        return Err(Error::TooFewRecords { min: MIN_TRAINING_RECORDS, actual: dataset.len() });
    }
    let data = PreparedData::new(dataset, config.q_clamp)?;
    let mut params = MlpParams::init(config.seed, config.init_std);
    let mut adam = Adam::new(params.n_params());
    let mut loss_history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let (loss, grad) = loss_and_gradient(&params, &data, config.loss_settings(), true);
        let grad = grad.expect("gradient requested");
        if !loss.is_finite() || grad.flatten().iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        loss_history.push(loss);
        adam.step(&mut params, &grad, config);
    }
    Ok(TrainOutcome { params, loss_history })
}

/// Serialised network plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub schema: String,
    pub layers: Vec<Dense>,
    pub config: TrainConfig,
}

impl TrainedModel {
    pub fn new(params: MlpParams, config: TrainConfig) -> Self {
        Self { schema: MODEL_SCHEMA.into(), layers: params.layers, config }
    }

    pub fn params(&self) -> MlpParams {
        MlpParams { layers: self.layers.clone() }
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_reader(reader)?;
        let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("").to_string();
        if found != MODEL_SCHEMA {
            return Err(Error::Schema { expected: MODEL_SCHEMA.into(), found });
        }
        let model: TrainedModel = serde_json::from_value(value)?;
        model.params().validate()?;
        Ok(model)
    }
}

/// `epoch,loss` rows, epochs counted from 1.
pub fn write_loss_csv<W: Write>(history: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "loss"])?;
    for (i, loss) in history.iter().enumerate() {
        w.serialize((i + 1, loss))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_csv<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<(usize, f64)>, _>>()?;
    Ok(rows.into_iter().map(|(_, l)| l).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::TransferRecord;
    use crate::transfer::QualityVector;

    /// TR rising with similarity, FNR absorbing the rest.
    fn synthetic(n: usize) -> TransferDataset {
        let records = (0..n)
            .map(|i| {
                let s = 0.4 + 0.6 * i as f64 / (n - 1) as f64;
                let n_true = (100.0 * s * s) as usize;
                let n_fp = (100 - n_true) / 3;
                let q = QualityVector::from_counts(n_true, n_fp, 100 - n_true - n_fp).unwrap();
                TransferRecord { source_id: 1, target_id: 2, varsigma: s, tr: q.tr, fpr: q.fpr, fnr: q.fnr }
            })
            .collect();
        TransferDataset { records }
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let ds = synthetic(40);
        let cfg = TrainConfig { epochs: 300, seed: 5, ..Default::default() };
        let a = train(&ds, &cfg).unwrap();
        assert_eq!(a.loss_history.len(), 300);
        assert!(a.loss_history.last().unwrap() < &a.loss_history[0]);
        let b = train(&ds, &cfg).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn sparse_data_is_rejected() {
        let err = train(&synthetic(9), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::TooFewRecords { min: 10, actual: 9 }));
    }

    #[test]
    fn divergence_reports_epoch() {
        let cfg = TrainConfig { learning_rate: 1e6, epochs: 200, ..Default::default() };
        match train(&synthetic(20), &cfg) {
            Err(Error::Diverged { epoch }) => assert!(epoch >= 1),
            Ok(_) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn model_json_round_trip_and_schema_check() {
        let model = TrainedModel::new(MlpParams::init(1, 0.1), TrainConfig::default());
        let mut buf = Vec::new();
        model.write_json(&mut buf).unwrap();
        assert_eq!(TrainedModel::read_json(buf.as_slice()).unwrap(), model);
        let text = String::from_utf8(buf).unwrap().replace(MODEL_SCHEMA, "evitlab-mlp-v0");
        assert!(matches!(TrainedModel::read_json(text.as_bytes()), Err(Error::Schema { .. })));
    }

    #[test]
    fn loss_csv_round_trip() {
        let h = vec![1.5, 0.25, -0.125];
        let mut buf = Vec::new();
        write_loss_csv(&h, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("epoch,loss\n1,1.5\n"));
        assert_eq!(read_loss_csv(buf.as_slice()).unwrap(), h);
    }
}
