//! Periodic snapshots and log replay for early-stopping rollback.

use super::{LogRecord, UpdateKind};
use crate::error::Result;
use crate::model::ParameterStore;

/// Re-applies logged updates, in order, on top of `base`.
pub fn replay(base: &ParameterStore, records: &[LogRecord], nu: f64) -> Result<ParameterStore> {
    let mut store = base.clone();
    for r in records {
        apply_record(&mut store, r, nu)?;
    }
    Ok(store)
}

pub(crate) fn apply_record(store: &mut ParameterStore, r: &LogRecord, nu: f64) -> Result<()> {
    match (r.kind, r.feature, r.degree) {
        (UpdateKind::Split, Some(k), Some(d)) => store.accumulate_update(
            r.output,
            k,
            d,
            r.threshold.expect("split records carry a threshold"),
            r.gamma_left,
            r.gamma_right,
            nu,
        ),
        (UpdateKind::Global, Some(k), Some(d)) => store.accumulate_global(r.output, k, d, r.gamma_left, nu),
        _ => Ok(()),
    }
}

/// Model states saved every `every` iterations.
#[derive(Debug, Clone)]
pub struct Snapshots {
    every: usize,
    saved: Vec<(usize, ParameterStore)>,
}

impl Snapshots {
    pub fn new(initial: &ParameterStore, every: usize) -> Self {
        Self {
            every: every.max(1),
            saved: vec![(0, initial.clone())],
        }
    }

    /// Records the state after `iteration` if it falls on the cadence.
    /// Snapshots that can no longer serve a rollback to `best` or later are
    /// dropped.
    pub fn observe(&mut self, iteration: usize, store: &ParameterStore, best: usize) {
        if iteration % self.every == 0 {
            self.saved.push((iteration, store.clone()));
        }
        if let Some(keep) = self.saved.iter().rposition(|(it, _)| *it <= best) {
            self.saved.drain(..keep);
        }
    }

    /// The state right after iteration `target`, rebuilt from the nearest
    /// earlier snapshot and the log.
    pub fn rollback_to(&self, target: usize, log: &[LogRecord], nu: f64) -> Result<ParameterStore> {
        let (start, base) = self
            .saved
            .iter()
            .rev()
            .find(|(it, _)| *it <= target)
            .expect("the snapshot list always covers the best iteration");
        let tail: Vec<LogRecord> = log
            .iter()
            .filter(|r| r.iteration > *start && r.iteration <= target)
            .cloned()
            .collect();
        replay(base, &tail, nu)
    }
}
