use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::persist::{save_state, write_json};
use crate::energy::riesz_energy;
use crate::error::{Error, Result};
use crate::geometry::{class_means, normalize_rows, sample_gaussian_sphere, Labels};
use crate::gnc::{ace, gnc_report_state, GncReport};
use crate::losses::{evaluate, LabeledState, LossVariant};
use crate::optim::{train, OptimConfig, Trajectory};
use crate::proxies::{init_proxies, ProxySet};
use crate::rng::{stream, stream_seed};

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedState {
    pub state: LabeledState,
    /// Absent for the unnormalized loss, whose proxies are free vectors.
    pub proxies: Option<ProxySet>,
}

/// Draws features uniformly on the sphere with the configured class counts and
/// initializes proxies per the configured strategy.
pub fn generate_state(cfg: &ExperimentConfig, seed: u64) -> Result<GeneratedState> {
    cfg.validate()?;
    let counts = cfg.class_counts();
    if let Some(c) = counts.iter().position(|&k| k == 0) {
        return Err(Error::EmptyClass(c));
    }
    let labels = Labels::from_counts(&counts)?;
    let features = sample_gaussian_sphere(labels.len(), cfg.d, stream_seed(seed, stream::FEATURES));
    let proxy_seed = stream_seed(seed, stream::PROXIES);
    if cfg.loss.variant.on_sphere() {
        let energy_cfg = OptimConfig { seed: proxy_seed, ..OptimConfig::energy_default() };
        let ps = init_proxies(cfg.proxy_strategy, cfg.classes, cfg.d, proxy_seed, Some(&energy_cfg))?;
        let state = LabeledState::new(features, labels, ps.effective()?)?;
        Ok(GeneratedState { state, proxies: Some(ps) })
    } else {
        let proxies = sample_gaussian_sphere(cfg.classes, cfg.d, proxy_seed);
        let state = LabeledState::unnormalized(features.into_raw(), labels, proxies.into_raw())?;
        Ok(GeneratedState { state, proxies: None })
    }
}

/// Summary written to `report.json`. Contains no timing so that reruns are
/// byte-identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub variant: LossVariant,
    pub iterations: usize,
    pub final_loss: f64,
    pub final_inter_term: f64,
    pub final_intra_term: f64,
    /// Riesz `s = 2` energy (ordered pairs) of the centered, normalized class means.
    pub class_mean_energy: f64,
    /// Average `s = 2` energy of the proxies before and after training.
    pub proxy_ace_initial: f64,
    pub proxy_ace_final: f64,
    pub gnc: GncReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub library_version: String,
    pub started_at_unix_ms: u64,
    pub finished_at_unix_ms: u64,
    pub final_report: GncReport,
    /// SHA-256 of each emitted file, keyed by file name.
    pub digests: BTreeMap<String, String>,
}

impl RunManifest {
    /// Whether every digest matches the file currently in `dir`.
    pub fn digests_match(&self, dir: &Path) -> Result<bool> {
        for (name, digest) in &self.digests {
            if &sha256_file(&dir.join(name))? != digest {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutcome {
    pub state: LabeledState,
    pub proxies: Option<ProxySet>,
    pub trajectory: Trajectory,
    pub report: ExperimentReport,
    pub manifest: RunManifest,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Generates a state, trains it and writes the trajectory CSV, final state,
/// report and manifest into `cfg.outputs.dir`. Files already written are
/// removed again if a later step fails.
pub fn experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let started = now_ms();
    let seed = cfg.optim.seed;
    let generated = generate_state(cfg, seed)?;
    let proxy_ace_initial = ace(&normalize_rows(generated.state.proxies())?)?;
    let trained = train(generated.state, generated.proxies.as_ref(), &cfg.loss, &cfg.optim, cfg.gnc_every)?;
    let state = trained.state;
    let gnc = gnc_report_state(&state)?;
    let last = evaluate(&state, &cfg.loss)?;
    let report = ExperimentReport {
        variant: cfg.loss.variant,
        iterations: trained.trajectory.last().map_or(0, |r| r.iteration),
        final_loss: last.value,
        final_inter_term: last.inter_term,
        final_intra_term: last.intra_term,
        class_mean_energy: riesz_energy(&class_means(state.features(), state.labels())?.normalized, 2.0)?,
        proxy_ace_initial,
        proxy_ace_final: ace(&normalize_rows(state.proxies())?)?,
        gnc: gnc.clone(),
    };

    let out = &cfg.outputs;
    fs::create_dir_all(&out.dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<RunManifest> {
        let files = [
            (out.trajectory.clone(), out.trajectory_path()),
            (out.final_state.clone(), out.final_state_path()),
            (out.report.clone(), out.report_path()),
        ];
        written.push(files[0].1.clone());
        trained.trajectory.write_csv(BufWriter::new(fs::File::create(&files[0].1)?))?;
        written.push(files[1].1.clone());
        save_state(&files[1].1, &state)?;
        written.push(files[2].1.clone());
        write_json(&files[2].1, &report)?;
        let mut digests = BTreeMap::new();
        for (name, path) in &files {
            digests.insert(name.clone(), sha256_file(path)?);
        }
        let manifest = RunManifest {
            config: cfg.clone(),
            seed,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at_unix_ms: started,
            finished_at_unix_ms: now_ms(),
            final_report: gnc.clone(),
            digests,
        };
        written.push(out.manifest_path());
        write_json(&out.manifest_path(), &manifest)?;
        Ok(manifest)
    })();
    match result {
        Ok(manifest) => {
            Ok(ExperimentOutcome { state, proxies: trained.proxies, trajectory: trained.trajectory, report, manifest })
        }
        Err(e) => {
            for p in written {
                let _ = fs::remove_file(p);
            }
            Err(e)
        }
    }
}
