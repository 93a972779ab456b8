//! Projected gradient descent on products of spheres.
//!
//! Every optimization in the crate goes through one driver that sees the
//! problem as a list of blocks: matrices whose rows live on the unit sphere
//! (retracted by renormalization after each step) or in Euclidean space.
//! Features, learnable proxies and Cayley rotation parameters are all blocks.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::riesz_energy_and_grad;
use crate::error::{Error, Result};
use crate::geometry::{sample_gaussian_sphere, PointConfig, RawMatrix};
use crate::gnc::{gnc_report_state, GncReport};
use crate::losses::{evaluate, LabeledState, LossGrads, LossSpec};
use crate::proxies::{cayley_rotation, route_proxy_gradient, ParamGradient, ProxySet, ProxyStrategy};
use crate::rng::restart_seed;

/// Armijo sufficient-decrease constant.
const ARMIJO_C: f64 = 1e-4;
const LINE_SEARCH_TRIES: usize = 60;
const STEP_GROWTH: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Multiply the step by `factor` every `every_k` iterations.
    StepDecay {
        factor: f64,
        every_k: usize,
    },
    /// Multiply the step by `factor` at each listed fraction of `max_iters`.
    Milestones {
        factor: f64,
        fractions: Vec<f64>,
    },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Milestones { factor: 0.1, fractions: vec![0.6, 0.9] }
    }
}

impl Schedule {
    pub fn step_at(&self, base: f64, iteration: usize, max_iters: usize) -> f64 {
        match self {
            Schedule::Constant => base,
            Schedule::StepDecay { factor, every_k } => base * factor.powi((iteration / every_k) as i32),
            Schedule::Milestones { factor, fractions } => {
                let passed = fractions.iter().filter(|&&f| iteration as f64 >= f * max_iters as f64).count();
                base * factor.powi(passed as i32)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Schedule::Constant => Ok(()),
            Schedule::StepDecay { factor, every_k } => {
                if !(*factor > 0.0) || *every_k == 0 {
                    return Err(Error::invalid("step decay needs factor > 0 and every_k >= 1"));
                }
                Ok(())
            }
            Schedule::Milestones { factor, fractions } => {
                if !(*factor > 0.0) || fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
                    return Err(Error::invalid("milestones need factor > 0 and fractions in [0, 1]"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub step_size: f64,
    pub momentum: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub schedule: Schedule,
    pub seed: u64,
    pub restarts: usize,
    pub record_every: usize,
    /// Backtracking (Armijo) steps along the negative gradient instead of the
    /// scheduled momentum step. `step_size` is then only the first trial step;
    /// it grows after every accepted step and the run stops when no decrease
    /// can be found.
    pub line_search: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            step_size: 0.1,
            momentum: 0.9,
            max_iters: 2000,
            grad_tol: 1e-9,
            schedule: Schedule::default(),
            seed: 0,
            restarts: 1,
            record_every: 10,
            line_search: false,
        }
    }
}

impl OptimConfig {
    /// Settings for pure energy minimization: line search, eight restarts.
    pub fn energy_default() -> Self {
        OptimConfig {
            step_size: 0.1,
            momentum: 0.0,
            max_iters: 20_000,
            grad_tol: 1e-12,
            schedule: Schedule::Constant,
            seed: 0,
            restarts: 8,
            record_every: 100,
            line_search: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("step_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::invalid("grad_tol must be positive"));
        }
        if self.restarts == 0 || self.record_every == 0 {
            return Err(Error::invalid("restarts and record_every must be >= 1"));
        }
        self.schedule.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub iteration: usize,
    pub loss: f64,
    pub inter_term: f64,
    pub intra_term: f64,
    pub grad_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gnc: Option<GncReport>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn new() -> Self {
        Trajectory::default()
    }

    /// Appends a record; iterations must increase strictly.
    pub fn push(&mut self, record: TrajectoryRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.iteration <= last.iteration {
                return Err(Error::invalid(format!(
                    "trajectory iteration {} does not follow {}",
                    record.iteration, last.iteration
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[TrajectoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TrajectoryRecord> {
        self.records.last()
    }

    /// CSV with the fixed columns followed by the GNC columns, which are left
    /// empty on records without a snapshot.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration", "loss", "inter_term", "intra_term", "grad_norm"];
        header.extend(GncReport::CSV_COLUMNS);
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.iteration.to_string(),
                r.loss.to_string(),
                r.inter_term.to_string(),
                r.intra_term.to_string(),
                r.grad_norm.to_string(),
            ];
            match &r.gnc {
                Some(g) => row.extend(g.csv_values().iter().map(f64::to_string)),
                None => row.extend(std::iter::repeat_n(String::new(), GncReport::CSV_COLUMNS.len())),
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Manifold {
    Sphere,
    Euclidean,
}

#[derive(Clone, Debug)]
pub(crate) struct Block {
    pub value: RawMatrix,
    pub manifold: Manifold,
}

pub(crate) struct Evaluation {
    pub loss: f64,
    pub inter: f64,
    pub intra: f64,
    /// One gradient per block, already tangent for sphere blocks.
    pub grads: Vec<RawMatrix>,
}

fn retract(block: &mut Block) {
    if block.manifold == Manifold::Sphere {
        for i in 0..block.value.rows() {
            let row = block.value.row_mut(i);
            let len = crate::geometry::norm(row);
            if len > 0.0 {
                row.iter_mut().for_each(|v| *v /= len);
            }
        }
    }
}

fn grad_norm(grads: &[RawMatrix]) -> f64 {
    grads.iter().map(|g| g.as_slice().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
}

fn all_finite(blocks: &[Block]) -> bool {
    blocks.iter().all(|b| b.value.is_finite())
}

/// The shared descent loop.
///
/// At iteration `k` the objective is evaluated at the current point, a record
/// is written when `k` is a multiple of `record_every` (or `observe` returns a
/// snapshot), and the loop stops once the gradient norm drops below `grad_tol`
/// or `k == max_iters`; otherwise one step is taken.
pub(crate) fn descend<F, O>(
    blocks: &mut [Block],
    cfg: &OptimConfig,
    mut objective: F,
    mut observe: O,
) -> Result<Trajectory>
where
    F: FnMut(&[Block]) -> Result<Evaluation>,
    O: FnMut(usize, &[Block]) -> Result<Option<GncReport>>,
{
    cfg.validate()?;
    let mut trajectory = Trajectory::new();
    let mut velocity: Vec<RawMatrix> =
        blocks.iter().map(|b| RawMatrix::zeros(b.value.rows(), b.value.cols())).collect();
    let mut eval = objective(blocks)?;
    let mut trial_step = cfg.step_size;
    for it in 0..=cfg.max_iters {
        let gnorm = grad_norm(&eval.grads);
        if !(eval.loss.is_finite() && gnorm.is_finite() && eval.inter.is_finite() && eval.intra.is_finite()) {
            return Err(Error::NonFinite { iteration: it });
        }
        let snapshot = observe(it, blocks)?;
        if it % cfg.record_every == 0 || snapshot.is_some() {
            trajectory.push(TrajectoryRecord {
                iteration: it,
                loss: eval.loss,
                inter_term: eval.inter,
                intra_term: eval.intra,
                grad_norm: gnorm,
                gnc: snapshot,
            })?;
        }
        if gnorm < cfg.grad_tol || it == cfg.max_iters {
            break;
        }
        if cfg.line_search {
            let mut eta = trial_step;
            let mut accepted = None;
            for _ in 0..LINE_SEARCH_TRIES {
                let mut trial: Vec<Block> = blocks.to_vec();
                for (b, g) in trial.iter_mut().zip(&eval.grads) {
                    b.value.add_scaled(g, -eta);
                    retract(b);
                }
                if all_finite(&trial) {
                    let e = objective(&trial)?;
                    if e.loss.is_finite() && e.loss <= eval.loss - ARMIJO_C * eta * gnorm * gnorm {
                        accepted = Some((trial, e));
                        break;
                    }
                }
                eta *= 0.5;
            }
            let Some((trial, e)) = accepted else { break };
            blocks.clone_from_slice(&trial);
            eval = e;
            trial_step = eta * STEP_GROWTH;
        } else {
            let eta = cfg.schedule.step_at(cfg.step_size, it, cfg.max_iters);
            for ((b, v), g) in blocks.iter_mut().zip(&mut velocity).zip(&eval.grads) {
                v.scale(cfg.momentum);
                v.add_scaled(g, 1.0);
                b.value.add_scaled(v, -eta);
                retract(b);
            }
            if !all_finite(blocks) {
                return Err(Error::NonFinite { iteration: it + 1 });
            }
            eval = objective(blocks)?;
        }
    }
    Ok(trajectory)
}

/// Momentum buffers matching a [`LabeledState`].
#[derive(Clone, Debug, PartialEq)]
pub struct Velocity {
    pub features: RawMatrix,
    pub proxies: RawMatrix,
}

impl Velocity {
    pub fn zeros(state: &LabeledState) -> Self {
        Velocity {
            features: RawMatrix::zeros(state.num_samples(), state.dim()),
            proxies: RawMatrix::zeros(state.num_classes(), state.dim()),
        }
    }
}

/// One momentum step with `cfg.step_size`: `v' = mu v + g`, `x' = x - eta v'`,
/// then rows are renormalized unless the state is unnormalized.
pub fn pgd_step(
    state: &LabeledState,
    grads: &LossGrads,
    cfg: &OptimConfig,
    velocity: &Velocity,
) -> Result<(LabeledState, Velocity)> {
    let manifold = if state.on_sphere() { Manifold::Sphere } else { Manifold::Euclidean };
    let mut next = state.clone();
    let mut vel = velocity.clone();
    let (f, p) = next.parts_mut();
    for (x, v, g) in [(f, &mut vel.features, &grads.features), (p, &mut vel.proxies, &grads.proxies())] {
        if x.rows() != g.rows() || x.cols() != g.cols() || v.rows() != g.rows() || v.cols() != g.cols() {
            return Err(Error::shape("gradient or velocity does not match the state"));
        }
        v.scale(cfg.momentum);
        v.add_scaled(g, 1.0);
        let mut block = Block { value: std::mem::replace(x, RawMatrix::zeros(0, 0)), manifold };
        block.value.add_scaled(v, -cfg.step_size);
        retract(&mut block);
        if !block.value.is_finite() {
            return Err(Error::NonFinite { iteration: 0 });
        }
        *x = block.value;
    }
    Ok((next, vel))
}

/// How the proxies take part in training.
enum ProxyMode {
    /// Proxies are a block of their own.
    Free,
    /// Proxies stay fixed.
    Frozen,
    /// Only the Cayley parameters (a `1 x k` block) move.
    Rotation(PointConfig),
}

/// Rebuilds a [`LabeledState`] from the blocks.
struct Assembler {
    template: LabeledState,
    mode: ProxyMode,
}

impl Assembler {
    fn state(&self, blocks: &[Block]) -> Result<LabeledState> {
        let mut s = self.template.clone();
        let proxies = match &self.mode {
            ProxyMode::Free => Some(blocks[1].value.clone()),
            ProxyMode::Frozen => None,
            ProxyMode::Rotation(base) => {
                let r = cayley_rotation(blocks[1].value.as_slice(), base.dim())?;
                Some(base.rotate(&r)?.into_raw())
            }
        };
        let (f, p) = s.parts_mut();
        *f = blocks[0].value.clone();
        if let Some(w) = proxies {
            *p = w;
        }
        Ok(s)
    }

    fn evaluate(&self, blocks: &[Block], spec: &LossSpec) -> Result<Evaluation> {
        let state = self.state(blocks)?;
        let out = evaluate(&state, spec)?;
        let mut grads = vec![out.grads.features.clone()];
        match &self.mode {
            ProxyMode::Free => grads.push(out.grads.proxies()),
            ProxyMode::Frozen => {}
            ProxyMode::Rotation(base) => {
                let ps = ProxySet::with_params(
                    ProxyStrategy::PartiallyLearnable,
                    base.clone(),
                    blocks[1].value.as_slice().to_vec(),
                )?;
                let ParamGradient::Rotation(g) = route_proxy_gradient(&ps, &out.grads.proxies())? else {
                    unreachable!("partially learnable proxies route to rotation parameters");
                };
                grads.push(RawMatrix::from_vec(1, g.len(), g)?);
            }
        }
        Ok(Evaluation { loss: out.value, inter: out.inter_term, intra: out.intra_term, grads })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub state: LabeledState,
    /// Updated proxy set when training started from one.
    pub proxies: Option<ProxySet>,
    pub trajectory: Trajectory,
}

/// Trains features and proxies. With `proxies = None` the state's own proxies
/// are learnable; otherwise the strategy decides what moves and the state's
/// proxies are replaced by the set's effective proxies first. A GNC snapshot
/// is attached every `gnc_every` iterations (never when 0).
pub fn train(
    state: LabeledState,
    proxies: Option<&ProxySet>,
    spec: &LossSpec,
    cfg: &OptimConfig,
    gnc_every: usize,
) -> Result<TrainOutcome> {
    spec.validate()?;
    if state.on_sphere() != spec.variant.on_sphere() {
        return Err(Error::invalid(format!(
            "{:?} does not match a state with on_sphere = {}",
            spec.variant,
            state.on_sphere()
        )));
    }
    let manifold = if state.on_sphere() { Manifold::Sphere } else { Manifold::Euclidean };
    let (state, mode) = match proxies {
        None => (state, ProxyMode::Free),
        Some(ps) => {
            if !state.on_sphere() {
                return Err(Error::invalid("proxy strategies apply to states on the sphere"));
            }
            let state = state.with_proxies(ps.effective()?.into_raw())?;
            let mode = match ps.strategy() {
                ProxyStrategy::Learnable => ProxyMode::Free,
                ProxyStrategy::StaticRandom | ProxyStrategy::StaticOptimized => ProxyMode::Frozen,
                ProxyStrategy::PartiallyLearnable => ProxyMode::Rotation(ps.base().clone()),
            };
            (state, mode)
        }
    };
    let mut blocks = vec![Block { value: state.features().clone(), manifold }];
    match (&mode, proxies) {
        (ProxyMode::Free, _) => blocks.push(Block { value: state.proxies().clone(), manifold }),
        (ProxyMode::Rotation(_), Some(ps)) => blocks.push(Block {
            value: RawMatrix::from_vec(1, ps.rotation_params().len(), ps.rotation_params().to_vec())?,
            manifold: Manifold::Euclidean,
        }),
        _ => {}
    }
    let asm = Assembler { template: state, mode };
    let trajectory = descend(
        &mut blocks,
        cfg,
        |b| asm.evaluate(b, spec),
        |it, b| {
            if gnc_every > 0 && it % gnc_every == 0 {
                Ok(Some(gnc_report_state(&asm.state(b)?)?))
            } else {
                Ok(None)
            }
        },
    )?;
    let final_state = asm.state(&blocks)?;
    let proxies = match proxies {
        None => None,
        Some(ps) => {
            let mut out = ps.clone();
            match &asm.mode {
                ProxyMode::Free => out.set_base(PointConfig::new(final_state.proxies().clone())?),
                ProxyMode::Rotation(_) => out.set_rotation_params(blocks[1].value.as_slice().to_vec()),
                ProxyMode::Frozen => {}
            }
            Some(out)
        }
    };
    Ok(TrainOutcome { state: final_state, proxies, trajectory })
}

/// Trains features and proxies jointly from `state`.
pub fn run(state: LabeledState, spec: &LossSpec, cfg: &OptimConfig) -> Result<(LabeledState, Trajectory)> {
    let out = train(state, None, spec, cfg, 0)?;
    Ok((out.state, out.trajectory))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyMinimum {
    pub config: PointConfig,
    /// Riesz energy over ordered pairs.
    pub energy: f64,
    /// Index of the winning restart.
    pub restart: usize,
    /// Trajectory of the winning restart, in units of the average energy.
    pub trajectory: Trajectory,
}

/// Minimizes the Riesz `s`-energy of `n` points on `S^{d-1}`.
///
/// Restart `k` starts from Gaussian points seeded with `seed ^ k`; restarts run
/// in parallel and the lowest energy wins (lowest index on ties). Internally
/// the average energy `E / (n (n - 1))` is minimized so that step sizes do not
/// depend on `n`.
pub fn minimize_energy(n: usize, d: usize, s: f64, cfg: &OptimConfig) -> Result<EnergyMinimum> {
    if n < 2 {
        return Err(Error::invalid("energy minimization needs n >= 2"));
    }
    if d < 2 {
        return Err(Error::invalid("ambient dimension must be >= 2"));
    }
    cfg.validate()?;
    let results: Vec<Result<EnergyMinimum>> =
        (0..cfg.restarts).into_par_iter().map(|k| minimize_once(n, d, s, cfg, k)).collect();
    let mut best: Option<EnergyMinimum> = None;
    for r in results {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.energy < b.energy) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn minimize_once(n: usize, d: usize, s: f64, cfg: &OptimConfig, restart: usize) -> Result<EnergyMinimum> {
    let init = sample_gaussian_sphere(n, d, restart_seed(cfg.seed, restart));
    let scale = 1.0 / (n * (n - 1)) as f64;
    let mut blocks = vec![Block { value: init.into_raw(), manifold: Manifold::Sphere }];
    let objective = |b: &[Block]| -> Result<Evaluation> {
        let p = PointConfig::new(b[0].value.clone())?;
        let (e, mut g) = riesz_energy_and_grad(&p, s)?;
        g.scale(scale);
        Ok(Evaluation { loss: e * scale, inter: e * scale, intra: 0.0, grads: vec![g] })
    };
    let trajectory = descend(&mut blocks, cfg, objective, |_, _| Ok(None))?;
    let config = PointConfig::new(blocks.pop().expect("one block").value)?;
    let energy = crate::energy::riesz_energy(&config, s)?;
    Ok(EnergyMinimum { config, energy, restart, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::riesz_energy;
    use crate::geometry::{norm, Labels};
    use crate::gnc::{cross_polytope_deviation, etf_deviation};
    use crate::losses::LossVariant;
    use crate::oracle::{circle_energy, etf_energy, relative_error};
    use crate::proxies::init_proxies;

    fn fast() -> OptimConfig {
        OptimConfig { max_iters: 300, ..OptimConfig::default() }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let state = LabeledState::random(&[2, 2], 3, 0).unwrap();
        let zero = LossGrads::zeros(4, 2, 3);
        let (next, v) = pgd_step(&state, &zero, &fast(), &Velocity::zeros(&state)).unwrap();
        // retraction re-normalizes, which may move the last bit
        assert!(relative_error(next.features(), state.features()) < 1e-15);
        assert!(relative_error(next.proxies(), state.proxies()) < 1e-15);
        assert_eq!(v, Velocity::zeros(&state));
    }

    #[test]
    fn antipodal_critical_point_is_unchanged() {
        let p = PointConfig::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        let state = LabeledState::new(p.clone(), Labels::balanced(2, 1).unwrap(), p).unwrap();
        let spec = LossSpec::new(LossVariant::MheHug);
        let g = evaluate(&state, &spec).unwrap().grads;
        let (next, _) = pgd_step(&state, &g, &fast(), &Velocity::zeros(&state)).unwrap();
        for (a, b) in next.proxies().as_slice().iter().zip(state.proxies().as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_step_is_normalized_descent() {
        let x = PointConfig::from_rows(&[[0.6, 0.8]]).unwrap();
        let w = PointConfig::from_rows(&[[1.0, 0.0]]).unwrap();
        let state = LabeledState::new(x, Labels::balanced(1, 1).unwrap(), w).unwrap();
        let mut g = LossGrads::zeros(1, 1, 2);
        // tangent at (0.6, 0.8)
        g.features = RawMatrix::from_rows(&[[0.8, -0.6]]).unwrap();
        let cfg = OptimConfig { step_size: 0.5, momentum: 0.0, ..fast() };
        let (next, _) = pgd_step(&state, &g, &cfg, &Velocity::zeros(&state)).unwrap();
        let raw = [0.6 - 0.5 * 0.8, 0.8 + 0.5 * 0.6];
        let len = norm(&raw);
        assert!((next.features().get(0, 0) - raw[0] / len).abs() < 1e-15);
        assert!((next.features().get(0, 1) - raw[1] / len).abs() < 1e-15);
    }

    #[test]
    fn non_finite_step_is_reported() {
        let state = LabeledState::random(&[2, 2], 3, 0).unwrap();
        let mut g = LossGrads::zeros(4, 2, 3);
        g.features.set(0, 0, f64::INFINITY);
        assert!(matches!(pgd_step(&state, &g, &fast(), &Velocity::zeros(&state)), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn circle_minima() {
        for (n, target, tol) in [(3, 2.0, 1e-4), (10, 82.5, 0.01), (2, 0.5, 1e-9)] {
            let m = minimize_energy(n, 2, 2.0, &OptimConfig::energy_default()).unwrap();
            assert!((m.energy - target).abs() < tol, "n={n}: {}", m.energy);
            assert!((circle_energy(n, 2.0) - target).abs() < 1e-9);
        }
    }

    #[test]
    fn sphere_minima_match_closed_forms() {
        let cfg = OptimConfig::energy_default();
        let m = minimize_energy(4, 3, 2.0, &cfg).unwrap();
        assert!((m.energy - 4.5).abs() < 1e-3 && (m.energy - etf_energy(4, 2.0)).abs() < 1e-3);
        assert!(etf_deviation(&m.config) < 1e-3);
        let m = minimize_energy(6, 3, 2.0, &cfg).unwrap();
        assert!((m.energy - 13.5).abs() < 1e-3);
        assert!(cross_polytope_deviation(&m.config).unwrap().deviation < 1e-3);
        let m = minimize_energy(2, 5, 2.0, &cfg).unwrap();
        assert!((m.energy - 0.5).abs() < 1e-9);
    }

    #[test]
    fn run_reaches_circle_energy_with_proxies_only() {
        for (c, target, tol) in [(3, 2.0, 1e-4), (10, 82.5, 0.01)] {
            let labels = Labels::balanced(c, 1).unwrap();
            let w = sample_gaussian_sphere(c, 2, 42);
            let state = LabeledState::new(w.clone(), labels, w).unwrap();
            let spec = LossSpec::new(LossVariant::MheHug).with_weights(1.0, 0.0);
            let cfg = OptimConfig { step_size: 0.01, max_iters: 4000, ..OptimConfig::default() };
            let (out, _) = run(state, &spec, &cfg).unwrap();
            let e = riesz_energy(&PointConfig::new(out.proxies().clone()).unwrap(), 2.0).unwrap();
            assert!((e - target).abs() < tol, "C={c}: {e}");
        }
    }

    #[test]
    fn trajectory_respects_grad_tol_and_cadence() {
        let state = LabeledState::random(&[2, 2], 2, 3).unwrap();
        let spec = LossSpec::new(LossVariant::MheHugRelaxed);
        let cfg = OptimConfig { grad_tol: 1e-3, record_every: 7, max_iters: 5000, ..OptimConfig::default() };
        let (_, traj) = run(state, &spec, &cfg).unwrap();
        let iters: Vec<usize> = traj.records().iter().map(|r| r.iteration).collect();
        assert!(iters.windows(2).all(|w| w[0] < w[1]));
        assert!(iters.iter().all(|i| i % 7 == 0));
        let last = *iters.last().unwrap();
        assert!(traj.len() <= last / 7 + 1);
    }

    #[test]
    fn small_constant_steps_do_not_increase_the_loss() {
        for variant in [LossVariant::MheHug, LossVariant::MheHugRelaxed] {
            let state = LabeledState::random(&[3, 3, 3], 3, 11).unwrap();
            let spec = LossSpec::new(variant).with_weights(1.0, 0.1);
            let cfg = OptimConfig {
                step_size: 1e-3,
                momentum: 0.0,
                max_iters: 300,
                record_every: 1,
                schedule: Schedule::Constant,
                ..OptimConfig::default()
            };
            let (out, traj) = run(state, &spec, &cfg).unwrap();
            for w in traj.records().windows(2) {
                assert!(w[1].loss <= w[0].loss + 1e-9, "{variant:?} at {}", w[1].iteration);
            }
            for row in out.features().iter_rows().chain(out.proxies().iter_rows()) {
                assert!((norm(row) - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn runs_are_bit_reproducible() {
        let state = LabeledState::random(&[3, 4], 3, 5).unwrap();
        let spec = LossSpec::new(LossVariant::MhsHug).with_tau(0.05);
        let a = run(state.clone(), &spec, &fast()).unwrap();
        let b = run(state, &spec, &fast()).unwrap();
        assert_eq!(a, b);
        let m1 = minimize_energy(7, 3, 1.0, &OptimConfig { restarts: 4, ..OptimConfig::energy_default() }).unwrap();
        let m2 = minimize_energy(7, 3, 1.0, &OptimConfig { restarts: 4, ..OptimConfig::energy_default() }).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn static_proxies_are_untouched_and_rotations_preserve_distances() {
        let state = LabeledState::random(&[3, 3, 3], 3, 2).unwrap();
        let spec = LossSpec::new(LossVariant::MheHugRelaxed);
        for strategy in [ProxyStrategy::StaticRandom, ProxyStrategy::StaticOptimized] {
            let ps = init_proxies(strategy, 3, 3, 4, None).unwrap();
            let out = train(state.clone(), Some(&ps), &spec, &fast(), 0).unwrap();
            assert_eq!(out.state.proxies(), ps.base().as_raw());
            assert_eq!(out.proxies.as_ref(), Some(&ps));
        }
        let ps = ProxySet::new(ProxyStrategy::PartiallyLearnable, sample_gaussian_sphere(3, 3, 8));
        let out = train(state, Some(&ps), &spec, &fast(), 0).unwrap();
        let moved = out.proxies.unwrap();
        assert!(moved.rotation_params().iter().any(|&p| p != 0.0));
        let (a, b) = (
            crate::geometry::pairwise_sq_dists(ps.base()),
            crate::geometry::pairwise_sq_dists(&moved.effective().unwrap()),
        );
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x.sqrt() - y.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn gnc_snapshots_follow_their_cadence() {
        let state = LabeledState::random(&[3, 3], 2, 2).unwrap();
        let spec = LossSpec::new(LossVariant::MheHugRelaxed);
        let cfg = OptimConfig { max_iters: 60, record_every: 10, ..OptimConfig::default() };
        let out = train(state, None, &spec, &cfg, 25).unwrap();
        let with: Vec<usize> =
            out.trajectory.records().iter().filter(|r| r.gnc.is_some()).map(|r| r.iteration).collect();
        assert_eq!(with, vec![0, 25, 50]);
        let mut buf = Vec::new();
        out.trajectory.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "iteration,loss,inter_term,intra_term,grad_norm,ace,acme,afre,afmre,collapse_metric,equinorm_cv,self_duality_gap,nearest_mean_agreement\n"
        ));
        assert_eq!(text.lines().count(), 1 + out.trajectory.len());
    }

    #[test]
    fn schedules() {
        let m = Schedule::default();
        assert_eq!(m.step_at(1.0, 59, 100), 1.0);
        assert!((m.step_at(1.0, 60, 100) - 0.1).abs() < 1e-15);
        assert!((m.step_at(1.0, 95, 100) - 0.01).abs() < 1e-15);
        let s = Schedule::StepDecay { factor: 0.5, every_k: 10 };
        assert_eq!(s.step_at(1.0, 25, 100), 0.25);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"kind":"step_decay","factor":0.5,"every_k":10}"#);
        assert!(OptimConfig { momentum: 1.0, ..OptimConfig::default() }.validate().is_err());
    }
}
