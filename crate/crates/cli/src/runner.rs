//! Executes a batch of planned runs across the worker pool.
//!
//! Runs are independent (disjoint seeds), so they go through rayon; the
//! output is stitched back in plan order, never in completion order, which
//! keeps bytes identical no matter how many workers there are. A run that
//! diverges keeps the metrics it produced before blowing up and adds a note
//! for stderr; the batch as a whole only counts as failed when every run
//! failed.

use rayon::prelude::*;

use btpp_core::{run_experiment, MetricsRecord, RunConfig};

pub struct BatchOutcome {
    pub records: Vec<MetricsRecord>,
    /// One human-readable line per failed run.
    pub failures: Vec<String>,
    pub total_runs: usize,
}

impl BatchOutcome {
    pub fn all_failed(&self) -> bool {
        self.failures.len() == self.total_runs
    }
}

pub fn run_batch(runs: &[RunConfig]) -> BatchOutcome {
    let results: Vec<_> = runs.par_iter().map(run_experiment).collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (cfg, result) in runs.iter().zip(results) {
        match result {
            Ok(mut recs) => records.append(&mut recs),
            Err(failure) => {
                failures.push(format!(
                    "run failed ({}, n = {}, seed {}): {}",
                    cfg.algorithm.name(),
                    cfg.problem.agents(),
                    cfg.seed,
                    failure
                ));
                records.extend(failure.records);
            }
        }
    }
    BatchOutcome {
        records,
        failures,
        total_runs: runs.len(),
    }
}
