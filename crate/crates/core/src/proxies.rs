//! Class-proxy strategies and how proxy gradients reach their parameters.
//!
//! A partially learnable proxy set keeps a fixed base configuration and learns
//! only an orientation `R = (I - A)(I + A)^-1`, the Cayley transform of a
//! skew-symmetric `A`. The effective proxies are the rows of `base * R`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, normalize_rows, sample_gaussian_sphere, PointConfig, RawMatrix};
use crate::optim::{self, OptimConfig};

const CAYLEY_PIVOT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProxyStrategy {
    /// Gaussian init, every coordinate trained.
    Learnable,
    /// Gaussian init, never updated.
    StaticRandom,
    /// Energy-minimized before training, never updated.
    StaticOptimized,
    /// Energy-minimized base, only a global rotation is trained.
    PartiallyLearnable,
}

impl ProxyStrategy {
    pub fn is_frozen(self) -> bool {
        matches!(self, ProxyStrategy::StaticRandom | ProxyStrategy::StaticOptimized)
    }
}

/// Number of free entries of a `d x d` skew-symmetric matrix.
pub fn rotation_param_count(d: usize) -> usize {
    d * d.saturating_sub(1) / 2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProxySetWire")]
pub struct ProxySet {
    strategy: ProxyStrategy,
    base: PointConfig,
    rotation_params: Vec<f64>,
}

#[derive(Deserialize)]
struct ProxySetWire {
    strategy: ProxyStrategy,
    base: PointConfig,
    #[serde(default)]
    rotation_params: Vec<f64>,
}

impl TryFrom<ProxySetWire> for ProxySet {
    type Error = Error;

    fn try_from(w: ProxySetWire) -> Result<Self> {
        ProxySet::with_params(w.strategy, w.base, w.rotation_params)
    }
}

impl ProxySet {
    /// A proxy set with an identity rotation.
    pub fn new(strategy: ProxyStrategy, base: PointConfig) -> Self {
        let k = if strategy == ProxyStrategy::PartiallyLearnable { rotation_param_count(base.dim()) } else { 0 };
        ProxySet { strategy, base, rotation_params: vec![0.0; k] }
    }

    pub fn with_params(strategy: ProxyStrategy, base: PointConfig, rotation_params: Vec<f64>) -> Result<Self> {
        let expected = if strategy == ProxyStrategy::PartiallyLearnable { rotation_param_count(base.dim()) } else { 0 };
        if rotation_params.len() != expected {
            return Err(Error::WrongCount { expected, actual: rotation_params.len() });
        }
        if rotation_params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("rotation parameters must be finite"));
        }
        Ok(ProxySet { strategy, base, rotation_params })
    }

    pub fn strategy(&self) -> ProxyStrategy {
        self.strategy
    }

    pub fn base(&self) -> &PointConfig {
        &self.base
    }

    pub fn rotation_params(&self) -> &[f64] {
        &self.rotation_params
    }

    pub fn num_classes(&self) -> usize {
        self.base.n()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub(crate) fn set_base(&mut self, base: PointConfig) {
        self.base = base;
    }

    pub(crate) fn set_rotation_params(&mut self, params: Vec<f64>) {
        debug_assert_eq!(params.len(), self.rotation_params.len());
        self.rotation_params = params;
    }

    pub fn effective(&self) -> Result<PointConfig> {
        effective_proxies(self)
    }
}

/// Builds the initial proxies for a strategy. `cfg` drives the energy
/// minimization of the optimized strategies (defaults when `None`).
pub fn init_proxies(
    strategy: ProxyStrategy,
    classes: usize,
    d: usize,
    seed: u64,
    cfg: Option<&OptimConfig>,
) -> Result<ProxySet> {
    if classes < 2 {
        return Err(Error::invalid("proxies need at least two classes"));
    }
    if d < 2 {
        return Err(Error::invalid("ambient dimension must be >= 2"));
    }
    let base = match strategy {
        ProxyStrategy::Learnable | ProxyStrategy::StaticRandom => sample_gaussian_sphere(classes, d, seed),
        ProxyStrategy::StaticOptimized | ProxyStrategy::PartiallyLearnable => {
            let default;
            let cfg = match cfg {
                Some(c) => c,
                None => {
                    default = OptimConfig::energy_default();
                    &default
                }
            };
            let cfg = OptimConfig { seed, ..cfg.clone() };
            optim::minimize_energy(classes, d, 2.0, &cfg)?.config
        }
    };
    Ok(ProxySet::new(strategy, base))
}

fn skew(params: &[f64], d: usize) -> Result<DMatrix<f64>> {
    if params.len() != rotation_param_count(d) {
        return Err(Error::WrongCount { expected: rotation_param_count(d), actual: params.len() });
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("rotation parameters must be finite"));
    }
    let mut a = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i + 1..d {
            a[(i, j)] = params[k];
            a[(j, i)] = -params[k];
            k += 1;
        }
    }
    Ok(a)
}

/// `(R, (I + A)^-1)`.
fn cayley_parts(params: &[f64], d: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let a = skew(params, d)?;
    let eye = DMatrix::<f64>::identity(d, d);
    let lu = (&eye + &a).lu();
    if lu.u().diagonal().iter().any(|u| u.abs() < CAYLEY_PIVOT) {
        return Err(Error::SingularCayley);
    }
    let m = lu.try_inverse().ok_or(Error::SingularCayley)?;
    Ok(((&eye - &a) * &m, m))
}

fn to_raw(m: &DMatrix<f64>) -> RawMatrix {
    let mut out = RawMatrix::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.set(i, j, m[(i, j)]);
        }
    }
    out
}

fn to_dmatrix(m: &RawMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Orthogonal `R = (I - A)(I + A)^-1`; parameters fill the upper triangle of
/// `A` row by row (`A_ij = p`, `A_ji = -p` for `i < j`).
pub fn cayley_rotation(params: &[f64], d: usize) -> Result<RawMatrix> {
    Ok(to_raw(&cayley_parts(params, d)?.0))
}

/// `base` for the identity rotation, otherwise the rows of `base * R`,
/// renormalized to absorb rounding.
pub fn effective_proxies(ps: &ProxySet) -> Result<PointConfig> {
    if ps.rotation_params.iter().all(|&p| p == 0.0) {
        return Ok(ps.base.clone());
    }
    let r = cayley_rotation(&ps.rotation_params, ps.dim())?;
    normalize_rows(&ps.base.as_raw().matmul(&r)?)
}

/// Where a proxy gradient lands for each strategy.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamGradient {
    /// Tangent gradient on every proxy row.
    Proxies(RawMatrix),
    /// Gradient with respect to the Cayley parameters.
    Rotation(Vec<f64>),
    /// Static strategies receive nothing.
    Frozen,
}

/// Routes a gradient with respect to the effective proxies to the strategy's
/// trainable parameters.
pub fn route_proxy_gradient(ps: &ProxySet, grad: &RawMatrix) -> Result<ParamGradient> {
    if grad.rows() != ps.num_classes() || grad.cols() != ps.dim() {
        return Err(Error::shape(format!(
            "proxy gradient is {}x{}, proxies are {}x{}",
            grad.rows(),
            grad.cols(),
            ps.num_classes(),
            ps.dim()
        )));
    }
    Ok(match ps.strategy {
        ProxyStrategy::StaticRandom | ProxyStrategy::StaticOptimized => ParamGradient::Frozen,
        ProxyStrategy::Learnable => {
            let mut g = grad.clone();
            geometry::project_rows(ps.base.as_raw(), &mut g);
            ParamGradient::Proxies(g)
        }
        ProxyStrategy::PartiallyLearnable => ParamGradient::Rotation(rotation_gradient(ps, grad)?),
    })
}

/// Chain rule through `P = B R(A)`. With `M = (I + A)^-1` and `D = B^T G`,
/// `dR = -(I + R) dA M`, so `dL/dA = H = -(I + R)^T D M^T` and each parameter
/// collects `H_ij - H_ji`.
fn rotation_gradient(ps: &ProxySet, grad: &RawMatrix) -> Result<Vec<f64>> {
    let d = ps.dim();
    let (r, m) = cayley_parts(&ps.rotation_params, d)?;
    let dmat = to_dmatrix(ps.base.as_raw()).transpose() * to_dmatrix(grad);
    let eye = DMatrix::<f64>::identity(d, d);
    let h = -((&eye + &r).transpose() * dmat * m.transpose());
    let mut out = Vec::with_capacity(rotation_param_count(d));
    for i in 0..d {
        for j in i + 1..d {
            out.push(h[(i, j)] - h[(j, i)]);
        }
    }
    Ok(out)
}
