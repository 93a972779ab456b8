//! The HUG loss family and the cross-entropy baseline.
//!
//! Every loss is returned as a quantity to *minimize*. Objectives that are
//! naturally maximized (separation and gram-determinant based HUG) are negated.
//! Each evaluation reports the total value, an inter-class and an intra-class
//! term, and gradients with respect to the features and the proxies. Gradients
//! are Riemannian (tangent-projected) for every variant except
//! [`LossVariant::UnnormalizedHug`], whose gradients are Euclidean.
//!
//! The proxy gradient is kept split into the part coming from the intra-class
//! term and everything else, so that the stop-gradient variant can drop the
//! former without re-evaluating the loss.

mod ce;
mod hug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, sample_gaussian_sphere, Labels, PointConfig, RawMatrix};
use crate::rng;

pub use ce::{ce_boudiaf_lower, ce_bounds, ce_loss, BoudiafBound, CeBounds};
pub use hug::{
    coupled_hug, matched_beta_prime, mgd_hug, mhe_hug, mhe_hug_relaxed, mhs_hug, mhs_hug_surrogate, pf_hug,
    unnormalized_hug, PfMode,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LossVariant {
    MheHug,
    MheHugRelaxed,
    MhsHug,
    MhsHugSurrogate,
    MgdHug,
    PfHugRelaxed,
    PfHugFull,
    CoupledHug,
    UnnormalizedHug,
    Ce,
}

impl LossVariant {
    pub const ALL: [LossVariant; 10] = [
        LossVariant::MheHug,
        LossVariant::MheHugRelaxed,
        LossVariant::MhsHug,
        LossVariant::MhsHugSurrogate,
        LossVariant::MgdHug,
        LossVariant::PfHugRelaxed,
        LossVariant::PfHugFull,
        LossVariant::CoupledHug,
        LossVariant::UnnormalizedHug,
        LossVariant::Ce,
    ];

    /// Whether the loss lives on the sphere (and its gradients are projected).
    pub fn on_sphere(self) -> bool {
        self != LossVariant::UnnormalizedHug
    }

    /// Whether the proxies enter the loss at all.
    pub fn uses_proxies(self) -> bool {
        !matches!(self, LossVariant::PfHugRelaxed | LossVariant::PfHugFull)
    }
}

fn default_alpha() -> f64 {
    0.15
}
fn default_beta() -> f64 {
    0.015
}
fn default_s_b() -> f64 {
    2.0
}
fn default_s_w() -> f64 {
    -1.0
}
fn one() -> f64 {
    1.0
}

/// Which loss to evaluate and its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub variant: LossVariant,
    /// Weight of the inter-class term.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Weight of the exact intra-class term.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Weight of the relaxed intra-class term; falls back to `beta` when absent.
    #[serde(default)]
    pub beta_prime: Option<f64>,
    #[serde(default = "default_s_b")]
    pub s_b: f64,
    #[serde(default = "default_s_w")]
    pub s_w: f64,
    /// Gaussian kernel parameter (gram-determinant variant).
    #[serde(default = "one")]
    pub epsilon: f64,
    /// Log-sum-exp temperature for the separation variants; 0 means exact min / max.
    #[serde(default)]
    pub tau: f64,
    #[serde(default)]
    pub stop_gradient_proxies: bool,
    #[serde(default)]
    pub lambda1: f64,
    #[serde(default)]
    pub lambda2: f64,
    #[serde(default = "one")]
    pub s_target: f64,
    /// Seed for the per-class representatives of the relaxed proxy-free loss.
    #[serde(default)]
    pub representative_seed: u64,
}

impl LossSpec {
    pub fn new(variant: LossVariant) -> Self {
        LossSpec {
            variant,
            alpha: default_alpha(),
            beta: default_beta(),
            beta_prime: None,
            s_b: default_s_b(),
            s_w: default_s_w(),
            epsilon: 1.0,
            tau: 0.0,
            stop_gradient_proxies: false,
            lambda1: 0.0,
            lambda2: 0.0,
            s_target: 1.0,
            representative_seed: 0,
        }
    }

    pub fn with_weights(mut self, alpha: f64, beta: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self
    }

    pub fn with_beta_prime(mut self, beta_prime: f64) -> Self {
        self.beta_prime = Some(beta_prime);
        self
    }

    pub fn with_exponents(mut self, s_b: f64, s_w: f64) -> Self {
        self.s_b = s_b;
        self.s_w = s_w;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_stop_gradient(mut self, on: bool) -> Self {
        self.stop_gradient_proxies = on;
        self
    }

    pub fn with_magnitude_penalty(mut self, lambda1: f64, lambda2: f64, s_target: f64) -> Self {
        self.lambda1 = lambda1;
        self.lambda2 = lambda2;
        self.s_target = s_target;
        self
    }

    pub fn beta_prime(&self) -> f64 {
        self.beta_prime.unwrap_or(self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64, name: &str| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        nonneg(self.alpha, "alpha")?;
        nonneg(self.beta, "beta")?;
        nonneg(self.beta_prime(), "beta_prime")?;
        nonneg(self.tau, "tau")?;
        nonneg(self.lambda1, "lambda1")?;
        nonneg(self.lambda2, "lambda2")?;
        if self.variant != LossVariant::Ce && self.alpha == 0.0 && self.beta == 0.0 && self.beta_prime() == 0.0 {
            return Err(Error::invalid("alpha or beta must be positive"));
        }
        if self.s_b == 0.0 || self.s_w == 0.0 || !self.s_b.is_finite() || !self.s_w.is_finite() {
            return Err(Error::invalid("riesz exponents must be finite and nonzero"));
        }
        if self.variant == LossVariant::MgdHug && !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        Ok(())
    }
}

/// Features, labels and class proxies: the optimizable state of an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledState {
    features: RawMatrix,
    labels: Labels,
    proxies: RawMatrix,
    on_sphere: bool,
}

impl LabeledState {
    pub fn new(features: PointConfig, labels: Labels, proxies: PointConfig) -> Result<Self> {
        let s = LabeledState { features: features.into_raw(), labels, proxies: proxies.into_raw(), on_sphere: true };
        s.check_shapes()?;
        Ok(s)
    }

    /// A state whose rows are free vectors in `R^d`.
    pub fn unnormalized(features: RawMatrix, labels: Labels, proxies: RawMatrix) -> Result<Self> {
        let s = LabeledState { features, labels, proxies, on_sphere: false };
        s.check_shapes()?;
        Ok(s)
    }

    /// Uniformly random features (`counts[c]` per class) and proxies on `S^{d-1}`.
    pub fn random(counts: &[usize], d: usize, seed: u64) -> Result<Self> {
        let labels = Labels::from_counts(counts)?;
        let features = sample_gaussian_sphere(labels.len(), d, rng::stream_seed(seed, rng::stream::FEATURES));
        let proxies = sample_gaussian_sphere(counts.len(), d, rng::stream_seed(seed, rng::stream::PROXIES));
        LabeledState::new(features, labels, proxies)
    }

    fn check_shapes(&self) -> Result<()> {
        if self.features.cols() != self.proxies.cols() {
            return Err(Error::shape(format!(
                "features live in R^{} but proxies in R^{}",
                self.features.cols(),
                self.proxies.cols()
            )));
        }
        if self.features.rows() != self.labels.len() {
            return Err(Error::shape(format!("{} features but {} labels", self.features.rows(), self.labels.len())));
        }
        if self.proxies.rows() != self.labels.num_classes() {
            return Err(Error::shape(format!(
                "{} proxies for {} classes",
                self.proxies.rows(),
                self.labels.num_classes()
            )));
        }
        if self.features.cols() < 2 {
            return Err(Error::invalid("ambient dimension must be >= 2"));
        }
        Ok(())
    }

    pub fn features(&self) -> &RawMatrix {
        &self.features
    }

    pub fn proxies(&self) -> &RawMatrix {
        &self.proxies
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn on_sphere(&self) -> bool {
        self.on_sphere
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.num_classes()
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    /// Replaces the proxies; rows must be unit vectors when the state lives on the sphere.
    pub fn with_proxies(mut self, proxies: RawMatrix) -> Result<Self> {
        if self.on_sphere {
            PointConfig::new(proxies.clone())?;
        }
        self.proxies = proxies;
        self.check_shapes()?;
        Ok(self)
    }

    pub fn with_features(mut self, features: RawMatrix) -> Result<Self> {
        if self.on_sphere {
            PointConfig::new(features.clone())?;
        }
        self.features = features;
        self.check_shapes()?;
        Ok(self)
    }

    /// The same vectors, no longer constrained to the sphere.
    pub fn into_unnormalized(mut self) -> Self {
        self.on_sphere = false;
        self
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut RawMatrix, &mut RawMatrix) {
        (&mut self.features, &mut self.proxies)
    }
}

#[derive(Serialize, Deserialize)]
struct StateWire {
    on_sphere: bool,
    labels: Labels,
    features: RawMatrix,
    proxies: RawMatrix,
}

impl Serialize for LabeledState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StateWire {
            on_sphere: self.on_sphere,
            labels: self.labels.clone(),
            features: self.features.clone(),
            proxies: self.proxies.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabeledState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = StateWire::deserialize(d)?;
        let state = if w.on_sphere {
            let f = PointConfig::new(w.features).map_err(serde::de::Error::custom)?;
            let p = PointConfig::new(w.proxies).map_err(serde::de::Error::custom)?;
            LabeledState::new(f, w.labels, p)
        } else {
            LabeledState::unnormalized(w.features, w.labels, w.proxies)
        };
        state.map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossGrads {
    pub features: RawMatrix,
    /// Proxy gradient of every term except the intra-class one.
    pub proxies_inter: RawMatrix,
    /// Proxy gradient of the intra-class term.
    pub proxies_intra: RawMatrix,
}

impl LossGrads {
    pub fn zeros(n: usize, classes: usize, d: usize) -> Self {
        LossGrads {
            features: RawMatrix::zeros(n, d),
            proxies_inter: RawMatrix::zeros(classes, d),
            proxies_intra: RawMatrix::zeros(classes, d),
        }
    }

    /// Total proxy gradient.
    pub fn proxies(&self) -> RawMatrix {
        let mut p = self.proxies_inter.clone();
        p.add_scaled(&self.proxies_intra, 1.0);
        p
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub inter_term: f64,
    pub intra_term: f64,
    pub grads: LossGrads,
}

impl LossOutput {
    pub(crate) fn zeros(state: &LabeledState) -> Self {
        LossOutput {
            value: 0.0,
            inter_term: 0.0,
            intra_term: 0.0,
            grads: LossGrads::zeros(state.num_samples(), state.num_classes(), state.dim()),
        }
    }
}

/// Drops the proxy gradient of the intra-class term when the spec asks for it.
pub fn apply_stop_gradient(mut grads: LossGrads, spec: &LossSpec) -> LossGrads {
    if spec.stop_gradient_proxies {
        grads.proxies_intra.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
    }
    grads
}

/// Projects Euclidean gradients onto the sphere (when applicable) and applies
/// the stop-gradient flag.
pub(crate) fn finish(state: &LabeledState, spec: &LossSpec, mut out: LossOutput, project: bool) -> LossOutput {
    if project {
        geometry::project_rows(state.features(), &mut out.grads.features);
        geometry::project_rows(state.proxies(), &mut out.grads.proxies_inter);
        geometry::project_rows(state.proxies(), &mut out.grads.proxies_intra);
    }
    out.grads = apply_stop_gradient(out.grads, spec);
    out
}

pub(crate) fn require_sphere(state: &LabeledState, variant: LossVariant) -> Result<()> {
    if !state.on_sphere() {
        return Err(Error::invalid(format!("{variant:?} needs features and proxies on the sphere")));
    }
    Ok(())
}

/// Evaluates the loss selected by `spec.variant`.
pub fn evaluate(state: &LabeledState, spec: &LossSpec) -> Result<LossOutput> {
    spec.validate()?;
    match spec.variant {
        LossVariant::MheHug => mhe_hug(state, spec),
        LossVariant::MheHugRelaxed => mhe_hug_relaxed(state, spec),
        LossVariant::MhsHug => mhs_hug(state, spec),
        LossVariant::MhsHugSurrogate => mhs_hug_surrogate(state, spec),
        LossVariant::MgdHug => mgd_hug(state, spec),
        LossVariant::PfHugRelaxed => pf_hug(state, spec, PfMode::Relaxed, spec.representative_seed),
        LossVariant::PfHugFull => pf_hug(state, spec, PfMode::Full, spec.representative_seed),
        LossVariant::CoupledHug => coupled_hug(state, spec),
        LossVariant::UnnormalizedHug => unnormalized_hug(state, spec),
        LossVariant::Ce => ce_loss(state, spec),
    }
}

#[cfg(test)]
mod tests;
