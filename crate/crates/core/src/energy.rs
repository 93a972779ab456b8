//! Hyperspherical energies and uniformity measures.
//!
//! Energies sum over *ordered* pairs `(i, j)`, `i != j`, so every unordered
//! pair is counted twice. The average energy of `n` points is therefore
//! `E / (n (n - 1))`. Distances are chordal (Euclidean in the ambient space).
//!
//! Gradients returned by the public `*_grad` functions are Riemannian: the
//! Euclidean gradient of each row is projected onto the tangent space of the
//! sphere at that row.

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, dist, sq_dist, Labels, PointConfig, RawMatrix};

/// Pairs closer than this count as coincident.
pub const COINCIDENT: f64 = 1e-12;
/// Smallest admissible pivot in the Cholesky factorization of a gram matrix.
pub const GRAM_PIVOT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Riesz { s: f64 },
    Logarithmic,
    Gaussian { epsilon: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Riesz { s } if s == 0.0 || !s.is_finite() => {
                Err(Error::invalid("riesz exponent must be finite and nonzero"))
            }
            KernelSpec::Gaussian { epsilon } if !(epsilon > 0.0) => {
                Err(Error::invalid("gaussian epsilon must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Total energy over ordered pairs (Riesz, logarithmic) or the log-determinant
    /// of the kernel gram matrix (Gaussian).
    pub fn energy(&self, p: &PointConfig) -> Result<f64> {
        self.validate()?;
        match *self {
            KernelSpec::Riesz { s } => riesz_energy(p, s),
            KernelSpec::Logarithmic => log_energy(p),
            KernelSpec::Gaussian { epsilon } => log_det_gram(p, epsilon),
        }
    }
}

/// Accumulation strategy for pair sums.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Reduction {
    /// Fixed row-major order over ordered pairs; bit-reproducible.
    #[default]
    Sequential,
    /// Row sums computed on the rayon pool; not bit-reproducible.
    Parallel,
}

/// Minimum or maximum pairwise distance together with the pair achieving it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairExtremum {
    pub value: f64,
    pub pair: (usize, usize),
}

/// `K_s` as a function of the squared distance: `r^-s` for `s > 0`, `-r^-s` for `s < 0`.
#[inline]
pub(crate) fn riesz_kernel(dist_sq: f64, s: f64) -> f64 {
    let v = dist_sq.powf(-0.5 * s);
    if s > 0.0 {
        v
    } else {
        -v
    }
}

/// Coefficient `k` such that `d K_s(a, b) / d a = k (a - b)`.
///
/// For `s < 0` the kernel is not differentiable at coincidence; the zero
/// subgradient is used there.
#[inline]
pub(crate) fn riesz_coeff(dist_sq: f64, s: f64) -> f64 {
    if s < 0.0 && dist_sq < COINCIDENT * COINCIDENT {
        return 0.0;
    }
    -s.abs() * dist_sq.powf(-0.5 * s - 1.0)
}

/// Unit direction `(a - b) / |a - b|`, or zero when the points coincide.
#[inline]
pub(crate) fn distance_coeff(d: f64) -> f64 {
    if d < COINCIDENT {
        0.0
    } else {
        1.0 / d
    }
}

/// Riesz energy of an arbitrary list of rows with the Euclidean gradient of each
/// row written into `grad` (one `d`-vector per row) when requested.
pub(crate) fn riesz_set(rows: &[&[f64]], s: f64, mut grad: Option<&mut [Vec<f64>]>) -> Result<f64> {
    let m = rows.len();
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let d2 = sq_dist(rows[i], rows[j]);
            if s > 0.0 && d2 < COINCIDENT * COINCIDENT {
                return Err(Error::CoincidentPoints(i.min(j), i.max(j)));
            }
            total += riesz_kernel(d2, s);
            if let Some(g) = grad.as_deref_mut() {
                // the (j, i) term contributes the same amount to row i
                let k = riesz_coeff(d2, s);
                for ((gi, a), b) in g[i].iter_mut().zip(rows[i]).zip(rows[j]) {
                    *gi += 2.0 * k * (a - b);
                }
            }
        }
    }
    Ok(total)
}

fn check_riesz(p: &PointConfig, s: f64) -> Result<()> {
    if s == 0.0 || !s.is_finite() {
        return Err(Error::invalid("riesz exponent must be finite and nonzero"));
    }
    if p.n() < 2 {
        return Err(Error::invalid("energy needs at least two points"));
    }
    Ok(())
}

/// `sum_{i != j} K_s(p_i, p_j)`.
pub fn riesz_energy(p: &PointConfig, s: f64) -> Result<f64> {
    riesz_energy_with(p, s, Reduction::Sequential)
}

pub fn riesz_energy_with(p: &PointConfig, s: f64, reduction: Reduction) -> Result<f64> {
    check_riesz(p, s)?;
    let n = p.n();
    let row_sum = |i: usize| -> Result<f64> {
        let mut acc = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let d2 = sq_dist(p.row(i), p.row(j));
            if s > 0.0 && d2 < COINCIDENT * COINCIDENT {
                return Err(Error::CoincidentPoints(i.min(j), i.max(j)));
            }
            acc += riesz_kernel(d2, s);
        }
        Ok(acc)
    };
    match reduction {
        Reduction::Sequential => {
            let mut total = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let d2 = sq_dist(p.row(i), p.row(j));
                    if s > 0.0 && d2 < COINCIDENT * COINCIDENT {
                        return Err(Error::CoincidentPoints(i.min(j), i.max(j)));
                    }
                    total += riesz_kernel(d2, s);
                }
            }
            Ok(total)
        }
        Reduction::Parallel => (0..n).into_par_iter().map(row_sum).try_reduce(|| 0.0, |a, b| Ok(a + b)),
    }
}

/// Euclidean gradient of the Riesz energy, one row per point, before projection.
pub(crate) fn riesz_euclidean_grad(p: &RawMatrix, s: f64) -> Result<(f64, RawMatrix)> {
    let rows: Vec<&[f64]> = p.iter_rows().collect();
    let mut g = vec![vec![0.0; p.cols()]; p.rows()];
    let e = riesz_set(&rows, s, Some(&mut g))?;
    Ok((e, RawMatrix::from_rows(&g)?))
}

/// Riemannian gradient of [`riesz_energy`].
pub fn riesz_energy_grad(p: &PointConfig, s: f64) -> Result<RawMatrix> {
    Ok(riesz_energy_and_grad(p, s)?.1)
}

pub fn riesz_energy_and_grad(p: &PointConfig, s: f64) -> Result<(f64, RawMatrix)> {
    check_riesz(p, s)?;
    let (e, mut g) = riesz_euclidean_grad(p.as_raw(), s)?;
    geometry::project_rows(p.as_raw(), &mut g);
    Ok((e, g))
}

/// `sum_{i != j} -log |p_i - p_j|`.
pub fn log_energy(p: &PointConfig) -> Result<f64> {
    let n = p.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = dist(p.row(i), p.row(j));
            if d < COINCIDENT {
                return Err(Error::CoincidentPoints(i.min(j), i.max(j)));
            }
            total -= d.ln();
        }
    }
    Ok(total)
}

fn pair_extremum(p: &PointConfig, better: impl Fn(f64, f64) -> bool) -> Result<PairExtremum> {
    if p.n() < 2 {
        return Err(Error::invalid("need at least two points"));
    }
    let mut best = PairExtremum { value: dist(p.row(0), p.row(1)), pair: (0, 1) };
    for i in 0..p.n() {
        for j in (i + 1)..p.n() {
            let d = dist(p.row(i), p.row(j));
            // strict comparison keeps the lexicographically smallest pair on ties
            if better(d, best.value) {
                best = PairExtremum { value: d, pair: (i, j) };
            }
        }
    }
    Ok(best)
}

/// Separation distance: the smallest pairwise distance.
pub fn separation(p: &PointConfig) -> Result<PairExtremum> {
    pair_extremum(p, |d, best| d < best)
}

/// The largest pairwise distance.
pub fn max_pair_distance(p: &PointConfig) -> Result<PairExtremum> {
    pair_extremum(p, |d, best| d > best)
}

pub(crate) fn gaussian_gram(p: &RawMatrix, epsilon: f64) -> DMatrix<f64> {
    let n = p.rows();
    let e2 = epsilon * epsilon;
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { (-e2 * sq_dist(p.row(i), p.row(j))).exp() })
}

fn factor_gram(g: DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let chol = Cholesky::new(g).ok_or(Error::SingularGram)?;
    let l = chol.l_dirty();
    if (0..l.nrows()).any(|i| l[(i, i)] * l[(i, i)] < GRAM_PIVOT) {
        return Err(Error::SingularGram);
    }
    Ok(chol)
}

/// `log det G` with `G_ij = exp(-eps^2 |p_i - p_j|^2)`.
pub fn log_det_gram(p: &PointConfig, epsilon: f64) -> Result<f64> {
    Ok(log_det_gram_raw(p.as_raw(), epsilon, false)?.0)
}

/// Log-determinant and (optionally) its Euclidean gradient.
pub(crate) fn log_det_gram_raw(p: &RawMatrix, epsilon: f64, want_grad: bool) -> Result<(f64, Option<RawMatrix>)> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("gaussian epsilon must be positive"));
    }
    let g = gaussian_gram(p, epsilon);
    let chol = factor_gram(g.clone())?;
    let l = chol.l_dirty();
    let logdet = 2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
    if !want_grad {
        return Ok((logdet, None));
    }
    // d logdet / d p_i = sum_j 2 (G^-1)_ij G_ij (-2 eps^2) (p_i - p_j)
    let inv = chol.inverse();
    let n = p.rows();
    let e2 = epsilon * epsilon;
    let mut grad = RawMatrix::zeros(n, p.cols());
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let k = -4.0 * e2 * inv[(i, j)] * g[(i, j)];
            let (a, b) = (p.row(i).to_vec(), p.row(j));
            for ((gi, ai), bi) in grad.row_mut(i).iter_mut().zip(&a).zip(b) {
                *gi += k * (ai - bi);
            }
        }
    }
    Ok((logdet, Some(grad)))
}

/// Riemannian gradient of [`log_det_gram`].
pub fn log_det_gram_grad(p: &PointConfig, epsilon: f64) -> Result<RawMatrix> {
    let (_, g) = log_det_gram_raw(p.as_raw(), epsilon, true)?;
    let mut g = g.expect("gradient requested");
    geometry::project_rows(p.as_raw(), &mut g);
    Ok(g)
}

/// Hyperspherical reverse-energy: summed distances over ordered intra-class pairs
/// of the normalized features.
pub fn reverse_energy(features: &PointConfig, labels: &Labels) -> Result<f64> {
    if features.n() != labels.len() {
        return Err(Error::shape(format!("{} features but {} labels", features.n(), labels.len())));
    }
    let mut total = 0.0;
    for c in 0..labels.num_classes() {
        let idx = labels.members(c);
        for &i in idx {
            for &j in idx {
                if i != j {
                    total += dist(features.row(i), features.row(j));
                }
            }
        }
    }
    Ok(total)
}
