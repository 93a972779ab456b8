//! Verification suites: each one checks a closed-form or asymptotic statement
//! numerically and reports measured values, targets and tolerances. Failures
//! are data, never errors.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::energy::riesz_energy;
use crate::error::{Error, Result};
use crate::geometry::resultant_norm;
use crate::gnc::{cross_polytope_deviation, etf_deviation, uniformity_stats};
use crate::losses::{ce_bounds, evaluate, matched_beta_prime, LabeledState, LossSpec, LossVariant};
use crate::optim::{minimize_energy, OptimConfig};
use crate::oracle::{cross_polytope_config, etf_energy, mc_uniform_pair_energy};
use crate::proxies::{init_proxies, ProxyStrategy};
use crate::rng::rng_from_seed;

/// Monte Carlo sample count for continuous-energy targets.
const MC_SAMPLES: usize = 1_000_000;
const MC_SEED: u64 = 2024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Etf,
    CrossPolytope,
    Asymptotic,
    InitEnergy,
    EnergyOrder,
    MhsLimit,
    CeBounds,
    SurrogateBound,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Etf,
        Suite::CrossPolytope,
        Suite::Asymptotic,
        Suite::InitEnergy,
        Suite::EnergyOrder,
        Suite::MhsLimit,
        Suite::CeBounds,
        Suite::SurrogateBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Etf => "etf",
            Suite::CrossPolytope => "cross_polytope",
            Suite::Asymptotic => "asymptotic",
            Suite::InitEnergy => "init_energy",
            Suite::EnergyOrder => "energy_order",
            Suite::MhsLimit => "mhs_limit",
            Suite::CeBounds => "ce_bounds",
            Suite::SurrogateBound => "surrogate_bound",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown suite `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub target: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    /// `|measured - target| <= tolerance`.
    pub fn within(name: impl Into<String>, measured: f64, target: f64, tolerance: f64) -> Self {
        let passed = (measured - target).abs() <= tolerance;
        Check { name: name.into(), measured, target, tolerance, passed, note: None }
    }

    /// `|measured - target| <= rel * |target|`; `tolerance` holds `rel`.
    pub fn relative(name: impl Into<String>, measured: f64, target: f64, rel: f64) -> Self {
        let passed = (measured - target).abs() <= rel * target.abs();
        Check { name: name.into(), measured, target, tolerance: rel, passed, note: None }
    }

    /// `measured < bound`; the bound is reported as the target.
    pub fn below(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Check { name: name.into(), measured, target: bound, tolerance: 0.0, passed: measured < bound, note: None }
    }

    /// `passes` out of `total` must all pass.
    pub fn count(name: impl Into<String>, passes: usize, total: usize) -> Self {
        Check {
            name: name.into(),
            measured: passes as f64,
            target: total as f64,
            tolerance: 0.0,
            passed: passes == total,
            note: None,
        }
    }

    /// A boolean property, reported as 1 / 0.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Check {
            name: name.into(),
            measured: if ok { 1.0 } else { 0.0 },
            target: 1.0,
            tolerance: 0.0,
            passed: ok,
            note: None,
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    fn error(name: impl Into<String>, e: &Error) -> Self {
        Check::holds(name, false).with_note(format!("error: {e}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

/// Runs one suite. Errors inside a suite become failed checks.
pub fn verify(suite: Suite) -> SuiteReport {
    let checks = match suite {
        Suite::Etf => etf(),
        Suite::CrossPolytope => cross_polytope(),
        Suite::Asymptotic => asymptotic(),
        Suite::InitEnergy => init_energy(),
        Suite::EnergyOrder => energy_order(),
        Suite::MhsLimit => mhs_limit(),
        Suite::CeBounds => ce_sandwich(),
        Suite::SurrogateBound => surrogate_bound(),
    };
    let checks = checks.unwrap_or_else(|e| vec![Check::error(suite.name(), &e)]);
    SuiteReport { suite, passed: checks.iter().all(|c| c.passed), checks }
}

fn etf() -> Result<Vec<Check>> {
    let cfg = OptimConfig::energy_default();
    let mut checks = Vec::new();
    for c in 2..=6 {
        match minimize_energy(c, 8, 2.0, &cfg) {
            Ok(m) => {
                checks.push(Check::below(format!("C={c} etf_deviation"), etf_deviation(&m.config), 1e-3));
                checks.push(Check::relative(format!("C={c} energy"), m.energy, etf_energy(c, 2.0), 1e-6));
            }
            Err(e) => checks.push(Check::error(format!("C={c}"), &e)),
        }
    }
    Ok(checks)
}

fn cross_polytope() -> Result<Vec<Check>> {
    let m = minimize_energy(6, 3, 2.0, &OptimConfig::energy_default())?;
    let dev = cross_polytope_deviation(&m.config)?;
    Ok(vec![
        Check::below("cross_polytope_deviation", dev.deviation, 1e-3),
        Check::holds("perfect_matching", dev.perfect_matching),
        Check::within("energy", m.energy, 13.5, 1e-3),
    ])
}

fn average_energy(energy: f64, n: usize) -> f64 {
    energy / (n * (n - 1)) as f64
}

fn asymptotic() -> Result<Vec<Check>> {
    let cfg = OptimConfig { restarts: 1, ..OptimConfig::energy_default() };
    let mut devs = Vec::new();
    let mut last_avg = 0.0;
    for c in [50, 100, 200] {
        let m = minimize_energy(c, 3, 1.0, &cfg)?;
        devs.push((c, uniformity_stats(&m.config).covariance_deviation));
        last_avg = average_energy(m.energy, c);
    }
    let mut checks: Vec<Check> = devs
        .windows(2)
        .map(|w| Check::below(format!("covariance_deviation C={} < C={}", w[1].0, w[0].0), w[1].1, w[0].1))
        .collect();
    checks.push(Check::below("covariance_deviation C=200", devs[2].1, 0.05));
    let mc = mc_uniform_pair_energy(3, 1.0, MC_SAMPLES, MC_SEED)?;
    checks.push(
        Check::relative("average energy C=200 vs uniform (s=1)", last_avg, mc.estimate, 0.05)
            .with_note(format!("monte carlo std error {:.2e}", mc.std_error)),
    );
    Ok(checks)
}

fn init_energy() -> Result<Vec<Check>> {
    let (c, d) = (1000, 128);
    let mc = mc_uniform_pair_energy(d, 2.0, MC_SAMPLES, MC_SEED)?;
    let mut checks = Vec::new();
    for seed in 0..10 {
        let ps = init_proxies(ProxyStrategy::StaticRandom, c, d, seed, None)?;
        let avg = average_energy(riesz_energy(ps.base(), 2.0)?, c);
        checks.push(Check::relative(format!("seed {seed} average energy"), avg, mc.estimate, 0.05));
        checks.push(Check::below(
            format!("seed {seed} resultant_norm"),
            resultant_norm(ps.base()),
            3.0 / (c as f64).sqrt(),
        ));
    }
    Ok(checks)
}

fn energy_order() -> Result<Vec<Check>> {
    // n = 128 settles to ~1e-6 relative within 2000 line-search steps
    let cfg = OptimConfig { restarts: 2, max_iters: 5000, ..OptimConfig::energy_default() };
    let mc = mc_uniform_pair_energy(3, 1.0, MC_SAMPLES, MC_SEED)?;
    let mut ratios = Vec::new();
    let mut checks = Vec::new();
    for n in [32, 64, 128] {
        let m = minimize_energy(n, 3, 1.0, &cfg)?;
        let ratio = m.energy / (n * n) as f64;
        checks.push(Check::relative(format!("n={n} energy / n^2"), ratio, mc.estimate, 0.10));
        ratios.push((n, ratio));
    }
    for w in ratios.windows(2) {
        checks.push(Check::holds(format!("ratio increases n={} -> n={}", w[0].0, w[1].0), w[1].1 > w[0].1));
    }
    Ok(checks)
}

fn mhs_limit() -> Result<Vec<Check>> {
    let cp = cross_polytope_config(3);
    let target = 1.0 / 2f64.sqrt();
    let mut gaps = Vec::new();
    for s in [16.0, 64.0, 256.0] {
        gaps.push((s, (riesz_energy(&cp, s)?.powf(1.0 / s) - target).abs()));
    }
    let mut checks = vec![Check::within("E_256^(1/256)", target + gaps[2].1, target, 0.02)];
    for w in gaps.windows(2) {
        checks.push(Check::below(format!("gap s={} < s={}", w[1].0, w[0].0), w[1].1, w[0].1));
    }
    Ok(checks)
}

/// A random labelled state with 2..=5 classes, dimension 2..=6 and 1..=4
/// samples per class.
fn random_state(rng: &mut crate::rng::Rng) -> Result<LabeledState> {
    let classes = rng.random_range(2..=5);
    let d = rng.random_range(2..=6);
    let counts: Vec<usize> = (0..classes).map(|_| rng.random_range(1..=4)).collect();
    LabeledState::random(&counts, d, rng.random())
}

fn ce_sandwich() -> Result<Vec<Check>> {
    let mut rng = rng_from_seed(7);
    let (mut lower, mut upper, mut both) = (0, 0, 0);
    let total = 100;
    for _ in 0..total {
        let b = ce_bounds(&random_state(&mut rng)?)?;
        lower += usize::from(b.lower <= b.ce);
        upper += usize::from(b.ce <= b.upper);
        both += usize::from(b.holds());
    }
    Ok(vec![
        Check::count("lower <= CE", lower, total),
        Check::count("CE <= upper", upper, total),
        Check::count("lower <= CE <= upper", both, total),
    ])
}

fn surrogate_bound() -> Result<Vec<Check>> {
    let mut rng = rng_from_seed(11);
    let total = 50;
    let mut holds = 0;
    for _ in 0..total {
        let state = random_state(&mut rng)?;
        let exact = LossSpec::new(LossVariant::MheHug);
        let relaxed =
            LossSpec::new(LossVariant::MheHugRelaxed).with_beta_prime(matched_beta_prime(&exact, state.labels())?);
        holds += usize::from(evaluate(&state, &relaxed)?.value >= evaluate(&state, &exact)?.value);
    }
    Ok(vec![Check::count("relaxed >= exact", holds, total)])
}
