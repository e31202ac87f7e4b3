//! Transfer-task enumeration over a population and assembly of the
//! similarity/quality training set.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{modal_analysis, LabelledDataset, ModalModel, Population};
use crate::similarity::similarity_score;
use crate::transfer::{knn_predict, nca_align, normal_stats, prediction_quality, QualityVector};

/// Everything a transfer task needs to know about one structure.
#[derive(Debug, Clone)]
pub struct StructureBundle {
    pub id: usize,
    pub modal: ModalModel,
    pub dataset: LabelledDataset,
}

pub fn bundles_from_population(population: &Population) -> Result<Vec<StructureBundle>> {
    population
        .structures
        .iter()
        .map(|s| {
            let dataset = s
                .dataset
                .clone()
                .ok_or_else(|| Error::Malformed(format!("structure {} has no dataset", s.system.id)))?;
            Ok(StructureBundle { id: s.system.id, modal: modal_analysis(&s.system)?, dataset })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub source_id: usize,
    pub target_id: usize,
    pub varsigma: f64,
    pub tr: f64,
    pub fpr: f64,
    pub fnr: f64,
}

impl TransferRecord {
    pub fn quality(&self) -> QualityVector {
        QualityVector { tr: self.tr, fpr: self.fpr, fnr: self.fnr }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransferDataset {
    pub records: Vec<TransferRecord>,
}

/// All ordered pairs of distinct 1-based ids, lexicographically.
pub fn enumerate_tasks(n_structures: usize) -> Vec<(usize, usize)> {
    (1..=n_structures).flat_map(|s| (1..=n_structures).filter(move |&t| t != s).map(move |t| (s, t))).collect()
}

pub fn run_task(source: &StructureBundle, target: &StructureBundle, n_modes: usize) -> Result<TransferRecord> {
    let varsigma = similarity_score(&source.modal.mode_shapes, &target.modal.mode_shapes, n_modes)?;
    let source_stats = normal_stats(&source.dataset)?;
    let target_stats = normal_stats(&target.dataset)?;
    let predicted = target
        .dataset
        .features
        .iter()
        .map(|x| knn_predict(&source.dataset, &nca_align(x, &target_stats, &source_stats)?))
        .collect::<Result<Vec<_>>>()?;
    let q = prediction_quality(&predicted, &target.dataset.labels)?;
    Ok(TransferRecord {
        source_id: source.id,
        target_id: target.id,
        varsigma: varsigma.value,
        tr: q.tr,
        fpr: q.fpr,
        fnr: q.fnr,
    })
}

/// Runs every ordered task between the bundles. Records come back sorted by
/// `(source_id, target_id)` whatever the parallelism.
pub fn build_transfer_dataset(
    bundles: &[StructureBundle],
    n_modes: usize,
    parallelism: usize,
) -> Result<TransferDataset> {
    let pairs: Vec<(usize, usize)> =
        (0..bundles.len()).flat_map(|s| (0..bundles.len()).filter(move |&t| t != s).map(move |t| (s, t))).collect();
    let mut records = crate::with_pool(parallelism, || {
        pairs
            .par_iter()
            .map(|&(s, t)| {
                run_task(&bundles[s], &bundles[t], n_modes).map_err(|e| Error::TaskFailed {
                    source_id: bundles[s].id,
                    target_id: bundles[t].id,
                    cause: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    records.sort_by_key(|r| (r.source_id, r.target_id));
    Ok(TransferDataset { records })
}

impl TransferDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with header `source_id,target_id,varsigma,tr,fpr,fnr`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        if self.records.is_empty() {
            w.write_record(["source_id", "target_id", "varsigma", "tr", "fpr", "fnr"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let expected = ["source_id", "target_id", "varsigma", "tr", "fpr", "fnr"];
        if header.iter().ne(expected) {
            return Err(Error::Malformed(format!("unexpected tasks header {:?}", header.as_slice())));
        }
        let records = rdr.deserialize().collect::<std::result::Result<Vec<TransferRecord>, _>>()?;
        for r in &records {
            if r.source_id == r.target_id {
                return Err(Error::Malformed(format!(
                    "task {} -> {} has source equal to target",
                    r.source_id, r.target_id
                )));
            }
        }
        Ok(Self { records })
    }
}
