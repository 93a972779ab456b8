//! Grid sweeps over experiment parameters, run in parallel.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OutputPaths};
use super::experiment::{experiment, ExperimentReport};
use super::persist::write_json;
use crate::error::Result;
use crate::losses::LossVariant;
use crate::proxies::ProxyStrategy;
use crate::rng::restart_seed;

/// Values to sweep; an empty list keeps the base configuration's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    /// Explicit seeds. Without them run `k` uses `base.optim.seed ^ k`.
    pub seed: Vec<u64>,
    #[serde(rename = "C")]
    pub classes: Vec<usize>,
    pub d: Vec<usize>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub variant: Vec<LossVariant>,
    pub proxy_strategy: Vec<ProxyStrategy>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    #[serde(default)]
    pub grid: SweepGrid,
    /// Runs go to `out_dir/run_<k>`; defaults to the base output directory.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub index: usize,
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ExperimentReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl SweepConfig {
    /// The Cartesian product of the grid in a fixed order (seed varies fastest).
    pub fn expand(&self) -> Vec<ExperimentConfig> {
        let b = &self.base;
        let root = self.out_dir.clone().unwrap_or_else(|| b.outputs.dir.clone());
        let seeds: Vec<Option<u64>> =
            if self.grid.seed.is_empty() { vec![None] } else { self.grid.seed.iter().copied().map(Some).collect() };
        let mut out = Vec::new();
        for variant in axis(&self.grid.variant, b.loss.variant) {
            for strategy in axis(&self.grid.proxy_strategy, b.proxy_strategy) {
                for classes in axis(&self.grid.classes, b.classes) {
                    for d in axis(&self.grid.d, b.d) {
                        for alpha in axis(&self.grid.alpha, b.loss.alpha) {
                            for beta in axis(&self.grid.beta, b.loss.beta) {
                                for seed in &seeds {
                                    let k = out.len();
                                    let mut cfg = b.clone();
                                    cfg.loss.variant = variant;
                                    cfg.loss.alpha = alpha;
                                    cfg.loss.beta = beta;
                                    cfg.proxy_strategy = strategy;
                                    cfg.classes = classes;
                                    cfg.d = d;
                                    cfg.optim.seed = seed.unwrap_or_else(|| restart_seed(b.optim.seed, k));
                                    cfg.outputs =
                                        OutputPaths { dir: root.join(format!("run_{k:03}")), ..b.outputs.clone() };
                                    out.push(cfg);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Runs every grid point (in parallel) and writes `sweep.json` with one entry
/// per run. A failing run is recorded, not propagated.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepRun>> {
    let runs: Vec<SweepRun> = cfg
        .expand()
        .into_par_iter()
        .enumerate()
        .map(|(index, c)| {
            let dir = c.outputs.dir.clone();
            match experiment(&c) {
                Ok(o) => SweepRun { index, dir, config: c, report: Some(o.report), error: None },
                Err(e) => SweepRun { index, dir, config: c, report: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    let root = cfg.out_dir.clone().unwrap_or_else(|| cfg.base.outputs.dir.clone());
    std::fs::create_dir_all(&root)?;
    write_json(&root.join("sweep.json"), &runs)?;
    Ok(runs)
}
