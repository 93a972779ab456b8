//! Independent references: closed-form optima, canonical configurations,
//! derivative-free minimization, finite-difference gradients and Monte Carlo
//! estimates of continuous energies.
//!
//! Nothing in here calls into [`crate::optim`]; the point is to have a second
//! route to every number the optimizer produces.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};

use crate::energy::{riesz_energy, riesz_kernel, COINCIDENT};
use crate::error::{Error, Result};
use crate::geometry::{self, normalize_rows, sample_gaussian_sphere, sq_dist, PointConfig, RawMatrix};
use crate::rng;

/// `C` equally spaced points on the unit circle, the first at `(1, 0)`.
pub fn circle_config(c: usize) -> PointConfig {
    let rows: Vec<[f64; 2]> = (0..c)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / c as f64;
            [t.cos(), t.sin()]
        })
        .collect();
    PointConfig::from_rows(&rows).expect("circle points are unit vectors")
}

/// Energy of `C` equally spaced points on the circle:
/// `C * sum_{k=1}^{C-1} K_s(2 sin(pi k / C))`.
///
/// Chords `k` and `C - k` are summed as one doubled term, and quarter-turn
/// angles use exact chords, so `C = 4` reproduces the `d = 2` cross-polytope
/// bit for bit.
pub fn circle_energy(c: usize, s: f64) -> f64 {
    let chord_sq = |k: usize| -> f64 {
        if (4 * k).is_multiple_of(c) {
            // pi k / C is a multiple of pi / 4: sin^2 is 1/2 or 1
            if (4 * k / c) % 2 == 1 {
                2.0
            } else {
                4.0
            }
        } else {
            let h = (PI * k as f64 / c as f64).sin();
            4.0 * h * h
        }
    };
    let mut total = 0.0;
    for k in 1..=c / 2 {
        let e = riesz_kernel(chord_sq(k), s);
        total += if 2 * k == c { e } else { 2.0 * e };
    }
    c as f64 * total
}

/// Vertices of a regular simplex with `C` vertices, centred at the origin and
/// embedded in `R^d`. All pairwise inner products equal `-1 / (C - 1)`.
///
/// The vertices are the rows of `I - 11^T / C` expressed in the Helmert basis
/// of the sum-zero hyperplane, padded with zeros and normalized.
pub fn etf_config(c: usize, d: usize) -> Result<PointConfig> {
    if c < 2 {
        return Err(Error::invalid("a simplex needs at least two vertices"));
    }
    if c > d + 1 {
        return Err(Error::DimensionTooSmall { classes: c, dim: d });
    }
    if d < 2 {
        return Err(Error::invalid("ambient dimension must be >= 2"));
    }
    let mut m = RawMatrix::zeros(c, d);
    for i in 0..c {
        for k in 1..c {
            // Helmert vector h_k = (1, ..., 1, -k, 0, ...) / sqrt(k (k + 1))
            let kf = k as f64;
            let h = |j: usize| -> f64 {
                let raw = if j < k {
                    1.0
                } else if j == k {
                    -kf
                } else {
                    0.0
                };
                raw / (kf * (kf + 1.0)).sqrt()
            };
            // <e_i - 1/C, h_k> = h_k[i] since h_k sums to zero
            m.set(i, k - 1, h(i));
        }
    }
    normalize_rows(&m)
}

/// Energy of the regular simplex: `C (C - 1) (2C / (C - 1))^{-s/2}`.
pub fn etf_energy(c: usize, s: f64) -> f64 {
    let cf = c as f64;
    cf * (cf - 1.0) * riesz_kernel(2.0 * cf / (cf - 1.0), s)
}

/// The `2d` vertices `+-e_k`, ordered `+e_1, -e_1, +e_2, -e_2, ...`.
pub fn cross_polytope_config(d: usize) -> PointConfig {
    let mut m = RawMatrix::zeros(2 * d, d);
    for k in 0..d {
        m.set(2 * k, k, 1.0);
        m.set(2 * k + 1, k, -1.0);
    }
    PointConfig::new(m).expect("cross-polytope vertices are unit vectors")
}

/// `2d [(2d - 2) 2^{-s/2} + 4^{-s/2}]`.
pub fn cross_polytope_energy(d: usize, s: f64) -> f64 {
    let df = d as f64;
    2.0 * df * ((2.0 * df - 2.0) * riesz_kernel(2.0, s) + riesz_kernel(4.0, s))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BruteForceBudget {
    pub restarts: usize,
    pub steps: usize,
}

impl Default for BruteForceBudget {
    fn default() -> Self {
        BruteForceBudget { restarts: 64, steps: 2000 }
    }
}

/// Largest `n * d` accepted by [`brute_force_min_energy`].
pub const BRUTE_FORCE_MAX_SIZE: usize = 64;

/// Derivative-free multi-start minimization of the Riesz energy.
///
/// Each restart draws a random configuration and refines it with a (1+1)
/// evolution strategy: all points are perturbed by isotropic Gaussian noise,
/// pushed back to the sphere, and the move is kept only if the energy drops.
/// The step size follows the one-fifth success rule. No gradients are used.
pub fn brute_force_min_energy(
    n: usize,
    d: usize,
    s: f64,
    budget: BruteForceBudget,
    seed: u64,
) -> Result<(PointConfig, f64)> {
    if n < 2 || d < 2 {
        return Err(Error::invalid("brute force needs n >= 2 and d >= 2"));
    }
    if n * d > BRUTE_FORCE_MAX_SIZE {
        return Err(Error::invalid(format!("n * d = {} exceeds {BRUTE_FORCE_MAX_SIZE}", n * d)));
    }
    let energy = |m: &RawMatrix| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let d2 = sq_dist(m.row(i), m.row(j));
                    if s > 0.0 && d2 < COINCIDENT * COINCIDENT {
                        return f64::INFINITY;
                    }
                    total += riesz_kernel(d2, s);
                }
            }
        }
        total
    };
    let mut best: Option<(RawMatrix, f64)> = None;
    for restart in 0..budget.restarts.max(1) {
        let restart_seed = rng::restart_seed(seed, restart);
        let mut rng = rng::rng_from_seed(restart_seed);
        let mut current = sample_gaussian_sphere(n, d, restart_seed).into_raw();
        let mut e = energy(&current);
        let mut sigma = 0.3;
        let mut candidate = current.clone();
        for _ in 0..budget.steps {
            for (c, x) in candidate.as_mut_slice().iter_mut().zip(current.as_slice()) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *c = x + sigma * z;
            }
            for i in 0..n {
                let row = candidate.row_mut(i);
                let len = geometry::norm(row);
                row.iter_mut().for_each(|v| *v /= len);
            }
            let ec = energy(&candidate);
            if ec < e {
                std::mem::swap(&mut current, &mut candidate);
                e = ec;
                sigma *= 1.5;
            } else {
                sigma *= 0.9;
            }
            sigma = sigma.clamp(1e-12, 1.0);
        }
        if best.as_ref().is_none_or(|(_, b)| e < *b) {
            best = Some((current, e));
        }
    }
    let (m, _) = best.expect("at least one restart");
    let p = normalize_rows(&m)?;
    let e = riesz_energy(&p, s)?;
    Ok((p, e))
}

/// Central-difference gradient of a function of a point configuration.
///
/// Each coordinate is perturbed by `+-h`, the perturbed configuration is pushed
/// back to the sphere, and the resulting difference quotients are projected onto
/// the tangent space so they compare directly with Riemannian gradients.
pub fn finite_diff_grad<F>(f: F, p: &PointConfig, h: f64) -> RawMatrix
where
    F: Fn(&PointConfig) -> f64,
{
    let eval = |m: &RawMatrix| f(&normalize_rows(m).expect("perturbation keeps rows nonzero"));
    let mut grad = finite_diff_grad_euclidean(eval, p.as_raw(), h);
    geometry::project_rows(p.as_raw(), &mut grad);
    grad
}

/// Plain central differences in the ambient space, no projection.
pub fn finite_diff_grad_euclidean<F>(f: F, m: &RawMatrix, h: f64) -> RawMatrix
where
    F: Fn(&RawMatrix) -> f64,
{
    let mut grad = RawMatrix::zeros(m.rows(), m.cols());
    let mut probe = m.clone();
    for k in 0..m.as_slice().len() {
        let x = m.as_slice()[k];
        probe.as_mut_slice()[k] = x + h;
        let fp = f(&probe);
        probe.as_mut_slice()[k] = x - h;
        let fm = f(&probe);
        probe.as_mut_slice()[k] = x;
        grad.as_mut_slice()[k] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Central differences of a function of a parameter vector.
pub fn finite_diff_vec<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let fp = f(&probe);
            probe[k] = x[k] - h;
            let fm = f(&probe);
            probe[k] = x[k];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `|a - b|_F / max(|a|_F, |b|_F)`; zero when both vanish.
pub fn relative_error(a: &RawMatrix, b: &RawMatrix) -> f64 {
    relative_error_slices(a.as_slice(), b.as_slice())
}

pub fn relative_error_slices(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = geometry::norm(a).max(geometry::norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Monte Carlo estimate of `E K_s(u, v)` for independent uniform `u, v` on
/// `S^{d-1}`, i.e. the continuous energy of the uniform measure.
pub fn mc_uniform_pair_energy(d: usize, s: f64, samples: usize, seed: u64) -> Result<MonteCarloEstimate> {
    if d < 2 || samples < 2 {
        return Err(Error::invalid("need d >= 2 and at least two samples"));
    }
    if s == 0.0 {
        return Err(Error::invalid("riesz exponent must be nonzero"));
    }
    if s >= d as f64 - 1.0 {
        return Err(Error::Divergent { s, dim: d });
    }
    let mut rng = rng::rng_from_seed(seed);
    let mut u = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut draw = |buf: &mut [f64]| loop {
        buf.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
        let len = geometry::norm(buf);
        if len > 0.0 {
            buf.iter_mut().for_each(|x| *x /= len);
            break;
        }
    };
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 0..samples {
        draw(&mut u);
        draw(&mut v);
        let x = riesz_kernel(sq_dist(&u, &v), s);
        // Welford update
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    let var = m2 / (samples - 1) as f64;
    Ok(MonteCarloEstimate { estimate: mean, std_error: (var / samples as f64).sqrt() })
}
