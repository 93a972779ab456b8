//! Unit-hypersphere primitives.
//!
//! [`RawMatrix`] is a dense row-major `n x d` matrix used for unnormalized
//! inputs and for gradients. [`PointConfig`] wraps a `RawMatrix` whose rows are
//! all unit vectors; the invariant is checked at construction and maintained
//! by every constructor in this module.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng;

/// Rows of a [`PointConfig`] must have norm within this distance of 1.
pub const UNIT_TOLERANCE: f64 = 1e-9;
/// Rows shorter than this cannot be normalized.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RawMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RawMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!("{} entries cannot form a {rows}x{cols} matrix", data.len())));
        }
        let m = RawMatrix { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(format!("row {i} has {} entries, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        RawMatrix::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &RawMatrix, scale: f64) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// Right-multiplies every row by the `cols x cols` matrix `r` (`self * r`).
    pub fn matmul(&self, r: &RawMatrix) -> Result<RawMatrix> {
        if r.rows != self.cols {
            return Err(Error::shape(format!("cannot multiply {}x{} by {}x{}", self.rows, self.cols, r.rows, r.cols)));
        }
        let mut out = RawMatrix::zeros(self.rows, r.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = out.row_mut(i);
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (oj, rkj) in o.iter_mut().zip(r.row(k)) {
                    *oj += aik * rkj;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> RawMatrix {
        let mut out = RawMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn identity(n: usize) -> RawMatrix {
        let mut m = RawMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    fn check_finite(&self) -> Result<()> {
        if let Some(k) = self.data.iter().position(|v| !v.is_finite()) {
            let cols = self.cols.max(1);
            return Err(Error::NonFiniteEntry { row: k / cols, col: k % cols });
        }
        Ok(())
    }
}

/// An ordered set of `n` unit vectors in `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointConfig {
    inner: RawMatrix,
}

impl PointConfig {
    /// Wraps `m` after checking that every row is a finite unit vector.
    pub fn new(m: RawMatrix) -> Result<Self> {
        if m.rows == 0 {
            return Err(Error::invalid("a point configuration needs at least one point"));
        }
        if m.cols < 2 {
            return Err(Error::invalid(format!("ambient dimension must be >= 2, got {}", m.cols)));
        }
        m.check_finite()?;
        for (i, row) in m.iter_rows().enumerate() {
            let norm = norm(row);
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::NotUnit { row: i, norm });
            }
        }
        Ok(PointConfig { inner: m })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        PointConfig::new(RawMatrix::from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.inner.rows
    }

    pub fn dim(&self) -> usize {
        self.inner.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.inner.row(i)
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.inner.iter_rows()
    }

    pub fn as_raw(&self) -> &RawMatrix {
        &self.inner
    }

    pub fn into_raw(self) -> RawMatrix {
        self.inner
    }

    /// Rotates every point by `r` (`points * r`) and re-normalizes to absorb rounding.
    pub fn rotate(&self, r: &RawMatrix) -> Result<PointConfig> {
        normalize_rows(&self.inner.matmul(r)?)
    }
}

impl AsRef<RawMatrix> for PointConfig {
    fn as_ref(&self) -> &RawMatrix {
        &self.inner
    }
}

impl AsRef<RawMatrix> for RawMatrix {
    fn as_ref(&self) -> &RawMatrix {
        self
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixWire {
    d: usize,
    n: usize,
    points: Vec<Vec<f64>>,
}

impl MatrixWire {
    fn from_matrix(m: &RawMatrix) -> Self {
        MatrixWire { d: m.cols, n: m.rows, points: m.iter_rows().map(<[f64]>::to_vec).collect() }
    }

    fn into_matrix(self) -> Result<RawMatrix> {
        if self.points.len() != self.n {
            return Err(Error::Parse(format!("n = {} but {} points given", self.n, self.points.len())));
        }
        if self.points.iter().any(|p| p.len() != self.d) {
            return Err(Error::Parse(format!("every point must have d = {} coordinates", self.d)));
        }
        RawMatrix::from_vec(self.n, self.d, self.points.into_iter().flatten().collect())
    }
}

impl Serialize for RawMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixWire::from_matrix(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for RawMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        MatrixWire::deserialize(d)?.into_matrix().map_err(serde::de::Error::custom)
    }
}

impl Serialize for PointConfig {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.inner.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PointConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = RawMatrix::deserialize(d)?;
        PointConfig::new(m).map_err(serde::de::Error::custom)
    }
}

/// Class assignment of every sample, with the per-class index sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labels {
    assignments: Vec<usize>,
    num_classes: usize,
    members: Vec<Vec<usize>>,
}

impl Labels {
    /// Every class in `0..num_classes` must own at least one sample.
    pub fn new(assignments: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::invalid("at least one class is required"));
        }
        let mut members = vec![Vec::new(); num_classes];
        for (i, &c) in assignments.iter().enumerate() {
            if c >= num_classes {
                return Err(Error::invalid(format!("sample {i} has class {c} >= {num_classes}")));
            }
            members[c].push(i);
        }
        if let Some(c) = members.iter().position(Vec::is_empty) {
            return Err(Error::EmptyClass(c));
        }
        Ok(Labels { assignments, num_classes, members })
    }

    /// `counts[c]` consecutive samples for each class `c`.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let assignments = counts.iter().enumerate().flat_map(|(c, &k)| std::iter::repeat_n(c, k)).collect();
        Labels::new(assignments, counts.len())
    }

    pub fn balanced(num_classes: usize, per_class: usize) -> Result<Self> {
        Labels::from_counts(&vec![per_class; num_classes])
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn class_of(&self, i: usize) -> usize {
        self.assignments[i]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    /// Sample indices of class `c`, in increasing order.
    pub fn members(&self, c: usize) -> &[usize] {
        &self.members[c]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct LabelsWire {
    num_classes: usize,
    assignments: Vec<usize>,
}

impl Serialize for Labels {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LabelsWire { num_classes: self.num_classes, assignments: self.assignments.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Labels {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = LabelsWire::deserialize(d)?;
        Labels::new(w.assignments, w.num_classes).map_err(serde::de::Error::custom)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Divides each row by its Euclidean norm.
pub fn normalize_rows(m: &RawMatrix) -> Result<PointConfig> {
    let mut out = m.clone();
    for i in 0..out.rows {
        let row = out.row_mut(i);
        let n = norm(row);
        if !(n >= ZERO_NORM) {
            return Err(Error::ZeroRow(i));
        }
        row.iter_mut().for_each(|v| *v /= n);
    }
    PointConfig::new(out)
}

/// `n` i.i.d. standard Gaussian vectors pushed onto the sphere.
pub fn sample_gaussian_sphere(n: usize, d: usize, seed: u64) -> PointConfig {
    let mut rng = rng::rng_from_seed(seed);
    let mut data = Vec::with_capacity(n * d);
    let mut v = vec![0.0; d];
    for _ in 0..n {
        loop {
            v.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
            let len = norm(&v);
            if len >= ZERO_NORM {
                data.extend(v.iter().map(|x| x / len));
                break;
            }
        }
    }
    PointConfig::new(RawMatrix { rows: n, cols: d, data }).expect("gaussian samples normalize to the sphere")
}

/// Squared chordal distances between all pairs; entries lie in `[0, 4]`.
pub fn pairwise_sq_dists(p: &PointConfig) -> RawMatrix {
    let n = p.n();
    let mut out = RawMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = sq_dist(p.row(i), p.row(j)).clamp(0.0, 4.0);
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    out
}

/// Removes the component of `g` along the unit vector `base`.
pub fn tangent_project(base: &[f64], g: &[f64]) -> Vec<f64> {
    let radial = dot(g, base);
    g.iter().zip(base).map(|(gi, bi)| gi - radial * bi).collect()
}

/// Projects row `i` of `grad` onto the tangent space at row `i` of `points`, in place.
pub fn project_rows(points: &RawMatrix, grad: &mut RawMatrix) {
    for i in 0..points.rows() {
        let base = points.row(i);
        let g = grad.row_mut(i);
        let radial = dot(g, base);
        g.iter_mut().zip(base).for_each(|(gi, bi)| *gi -= radial * bi);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMeans {
    /// Per-class averages `mu_c`.
    pub means: RawMatrix,
    /// `(mu_c - mu_G) / |mu_c - mu_G|`.
    pub normalized: PointConfig,
    /// Average of all samples `mu_G`.
    pub global: Vec<f64>,
}

/// Raw per-class means only; never fails.
pub fn raw_class_means(features: &RawMatrix, labels: &Labels) -> Result<(RawMatrix, Vec<f64>)> {
    if features.rows() != labels.len() {
        return Err(Error::shape(format!("{} features but {} labels", features.rows(), labels.len())));
    }
    let d = features.cols();
    let mut means = RawMatrix::zeros(labels.num_classes(), d);
    for c in 0..labels.num_classes() {
        let idx = labels.members(c);
        let row = means.row_mut(c);
        for &i in idx {
            row.iter_mut().zip(features.row(i)).for_each(|(m, x)| *m += x);
        }
        let k = idx.len() as f64;
        row.iter_mut().for_each(|m| *m /= k);
    }
    let mut global = vec![0.0; d];
    for row in features.iter_rows() {
        global.iter_mut().zip(row).for_each(|(g, x)| *g += x);
    }
    let n = features.rows().max(1) as f64;
    global.iter_mut().for_each(|g| *g /= n);
    Ok((means, global))
}

pub fn class_means(features: &RawMatrix, labels: &Labels) -> Result<ClassMeans> {
    let (means, global) = raw_class_means(features, labels)?;
    let mut centered = means.clone();
    for c in 0..centered.rows() {
        let row = centered.row_mut(c);
        row.iter_mut().zip(&global).for_each(|(m, g)| *m -= g);
        let len = norm(row);
        if !(len >= ZERO_NORM) {
            return Err(Error::DegenerateMean(c));
        }
        row.iter_mut().for_each(|m| *m /= len);
    }
    Ok(ClassMeans { means, normalized: PointConfig::new(centered)?, global })
}

/// Norm of the average of all rows.
pub fn resultant_norm(p: &PointConfig) -> f64 {
    let mut sum = vec![0.0; p.dim()];
    for row in p.iter_rows() {
        sum.iter_mut().zip(row).for_each(|(s, x)| *s += x);
    }
    norm(&sum) / p.n() as f64
}
