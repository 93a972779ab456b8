use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::optim::OptimConfig;
use crate::proxies::ProxyStrategy;

fn default_strategy() -> ProxyStrategy {
    ProxyStrategy::Learnable
}

/// Where an experiment writes its artifacts. File names are relative to `dir`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub trajectory: String,
    pub final_state: String,
    pub report: String,
    pub manifest: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            dir: PathBuf::from("out"),
            trajectory: "trajectory.csv".into(),
            final_state: "final_state.json".into(),
            report: "report.json".into(),
            manifest: "manifest.json".into(),
        }
    }
}

impl OutputPaths {
    pub fn in_dir(dir: impl Into<PathBuf>) -> Self {
        OutputPaths { dir: dir.into(), ..OutputPaths::default() }
    }

    pub fn trajectory_path(&self) -> PathBuf {
        self.dir.join(&self.trajectory)
    }

    pub fn final_state_path(&self) -> PathBuf {
        self.dir.join(&self.final_state)
    }

    pub fn report_path(&self) -> PathBuf {
        self.dir.join(&self.report)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join(&self.manifest)
    }
}

/// A full training experiment in the unconstrained-features setting.
///
/// `samples_per_class` is the head-class size; with `imbalance_ratio` the
/// class sizes decay geometrically from it (see [`long_tail_counts`]). The
/// experiment seed is `optim.seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "C")]
    pub classes: usize,
    pub d: usize,
    pub samples_per_class: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imbalance_ratio: Option<f64>,
    pub loss: LossSpec,
    #[serde(default = "default_strategy")]
    pub proxy_strategy: ProxyStrategy,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default)]
    pub outputs: OutputPaths,
    /// GNC snapshot cadence in iterations; 0 disables snapshots.
    #[serde(default)]
    pub gnc_every: usize,
}

impl ExperimentConfig {
    pub fn new(classes: usize, d: usize, samples_per_class: usize, loss: LossSpec) -> Self {
        ExperimentConfig {
            classes,
            d,
            samples_per_class,
            imbalance_ratio: None,
            loss,
            proxy_strategy: ProxyStrategy::Learnable,
            optim: OptimConfig::default(),
            outputs: OutputPaths::default(),
            gnc_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid("an experiment needs C >= 2"));
        }
        if self.d < 2 {
            return Err(Error::invalid("an experiment needs d >= 2"));
        }
        if let Some(ir) = self.imbalance_ratio {
            if !(ir > 0.0 && ir <= 1.0) {
                return Err(Error::invalid(format!("imbalance_ratio must lie in (0, 1], got {ir}")));
            }
        }
        if !self.loss.variant.on_sphere() && self.proxy_strategy != ProxyStrategy::Learnable {
            return Err(Error::invalid("the unnormalized loss only supports learnable proxies"));
        }
        self.loss.validate()?;
        self.optim.validate()
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        match self.imbalance_ratio {
            Some(ir) => long_tail_counts(self.classes, self.samples_per_class, ir),
            None => vec![self.samples_per_class; self.classes],
        }
    }
}

/// `ceil(n_max * ir^(c / (C - 1)))` for `c = 0..C`.
pub fn long_tail_counts(classes: usize, n_max: usize, ir: f64) -> Vec<usize> {
    let last = classes.saturating_sub(1).max(1) as f64;
    (0..classes)
        .map(|c| {
            let v = n_max as f64 * ir.powf(c as f64 / last);
            // absorb rounding noise such as 100 * 0.01 = 1.0000000000000002
            (v - 1e-9).ceil().max(0.0) as usize
        })
        .collect()
}
