//! Collapse and uniformity diagnostics.
//!
//! Class means come in two flavours. The centered, normalized means
//! `(mu_c - mu_G) / |mu_c - mu_G|` feed ACME, the self-duality gap and the
//! structural measures (ETF, cross-polytope, uniformity), following the usual
//! neural-collapse convention. AFMRE measures spread around the *uncentered*
//! normalized mean `mu_c / |mu_c|`, which is the natural center for a class of
//! unit vectors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::energy::{self, riesz_energy};
use crate::error::{Error, Result};
use crate::geometry::{class_means, dist, dot, norm, normalize_rows, raw_class_means, Labels, PointConfig, RawMatrix};
use crate::losses::LabeledState;

const PINV_RTOL: f64 = 1e-10;
const ZERO_MEAN: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GncReport {
    pub ace: f64,
    pub acme: f64,
    pub afre: f64,
    pub afmre: f64,
    pub reverse_energy: f64,
    pub trace_sb: f64,
    pub trace_sw: f64,
    pub collapse_metric: f64,
    pub equinorm_cv: f64,
    pub self_duality_gap: f64,
    pub nearest_mean_agreement: f64,
    pub etf_deviation: f64,
    /// Only defined when `C = 2d`.
    pub cross_polytope_deviation: Option<f64>,
    pub resultant_norm: f64,
    pub covariance_deviation: f64,
}

impl GncReport {
    /// Column names used when the report is appended to a trajectory CSV.
    pub const CSV_COLUMNS: [&'static str; 8] = [
        "ace",
        "acme",
        "afre",
        "afmre",
        "collapse_metric",
        "equinorm_cv",
        "self_duality_gap",
        "nearest_mean_agreement",
    ];

    pub fn csv_values(&self) -> [f64; 8] {
        [
            self.ace,
            self.acme,
            self.afre,
            self.afmre,
            self.collapse_metric,
            self.equinorm_cv,
            self.self_duality_gap,
            self.nearest_mean_agreement,
        ]
    }
}

fn check(features: &RawMatrix, labels: &Labels, proxies: Option<&RawMatrix>) -> Result<()> {
    if features.rows() != labels.len() {
        return Err(Error::shape(format!("{} features but {} labels", features.rows(), labels.len())));
    }
    if let Some(p) = proxies {
        if p.rows() != labels.num_classes() || p.cols() != features.cols() {
            return Err(Error::shape(format!(
                "proxies are {}x{}, expected {}x{}",
                p.rows(),
                p.cols(),
                labels.num_classes(),
                features.cols()
            )));
        }
    }
    Ok(())
}

/// Every diagnostic at once. Proxies that are not unit vectors (unnormalized
/// runs) are normalized before ACE and the self-duality gap.
pub fn gnc_report(features: &RawMatrix, labels: &Labels, proxies: &RawMatrix) -> Result<GncReport> {
    check(features, labels, Some(proxies))?;
    let w = normalize_rows(proxies)?;
    let means = class_means(features, labels)?.normalized;
    let (trace_sb, trace_sw) = fda_traces(features, labels)?;
    let stats = uniformity_stats(&means);
    let cross_polytope_deviation =
        if means.n() == 2 * means.dim() { Some(cross_polytope_deviation(&means)?.deviation) } else { None };
    Ok(GncReport {
        ace: ace(&w)?,
        acme: ace(&means)?,
        afre: afre(features, labels)?,
        afmre: afmre(features, labels)?,
        reverse_energy: energy::reverse_energy(&normalize_rows(features)?, labels)?,
        trace_sb,
        trace_sw,
        collapse_metric: collapse_metric(features, labels)?,
        equinorm_cv: equinorm_cv(features, labels)?,
        self_duality_gap: self_duality_gap(w.as_raw(), features, labels)?,
        nearest_mean_agreement: nearest_mean_agreement(proxies, features, labels)?,
        etf_deviation: etf_deviation(&means),
        cross_polytope_deviation,
        resultant_norm: stats.resultant_norm,
        covariance_deviation: stats.covariance_deviation,
    })
}

pub fn gnc_report_state(state: &LabeledState) -> Result<GncReport> {
    gnc_report(state.features(), state.labels(), state.proxies())
}

/// Average classifier energy: Riesz `s = 2` energy over ordered pairs divided
/// by `C (C - 1)`.
pub fn ace(proxies: &PointConfig) -> Result<f64> {
    let c = proxies.n() as f64;
    Ok(riesz_energy(proxies, 2.0)? / (c * (c - 1.0)))
}

/// Average class-mean energy: [`ace`] of the centered, normalized class means.
pub fn acme(features: &RawMatrix, labels: &Labels) -> Result<f64> {
    ace(&class_means(features, labels)?.normalized)
}

/// Average feature reverse-energy: mean distance over ordered pairs inside each
/// class, averaged over classes. Singleton classes contribute 0.
pub fn afre(features: &RawMatrix, labels: &Labels) -> Result<f64> {
    check(features, labels, None)?;
    let mut total = 0.0;
    for c in 0..labels.num_classes() {
        let idx = labels.members(c);
        if idx.len() < 2 {
            continue;
        }
        let mut sum = 0.0;
        for &i in idx {
            for &j in idx {
                if i != j {
                    sum += dist(features.row(i), features.row(j));
                }
            }
        }
        total += sum / (idx.len() * (idx.len() - 1)) as f64;
    }
    Ok(total / labels.num_classes() as f64)
}

/// Average feature-mean reverse-energy: mean distance from each feature to its
/// class's normalized (uncentered) mean, averaged over classes.
pub fn afmre(features: &RawMatrix, labels: &Labels) -> Result<f64> {
    check(features, labels, None)?;
    let (means, _) = raw_class_means(features, labels)?;
    let mut total = 0.0;
    for c in 0..labels.num_classes() {
        let mu = means.row(c);
        let len = norm(mu);
        if !(len >= ZERO_MEAN) {
            return Err(Error::DegenerateMean(c));
        }
        let unit: Vec<f64> = mu.iter().map(|v| v / len).collect();
        let idx = labels.members(c);
        total += idx.iter().map(|&i| dist(features.row(i), &unit)).sum::<f64>() / idx.len() as f64;
    }
    Ok(total / labels.num_classes() as f64)
}

/// `(tr S_b, tr S_w)` with `S_b = sum_c n_c (mu_c - mu)(mu_c - mu)^T` and
/// `S_w = sum_c sum_{j in A_c} (x_j - mu_c)(x_j - mu_c)^T`.
pub fn fda_traces(features: &RawMatrix, labels: &Labels) -> Result<(f64, f64)> {
    let (means, global) = raw_class_means(features, labels)?;
    let mut sb = 0.0;
    let mut sw = 0.0;
    for c in 0..labels.num_classes() {
        let idx = labels.members(c);
        let mu = means.row(c);
        sb += idx.len() as f64 * crate::geometry::sq_dist(mu, &global);
        sw += idx.iter().map(|&i| crate::geometry::sq_dist(features.row(i), mu)).sum::<f64>();
    }
    Ok((sb, sw))
}

/// Moore-Penrose pseudoinverse via SVD; singular values below
/// `1e-10 * sigma_max` are treated as zero.
fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cut = PINV_RTOL * smax;
    let u = svd.u.expect("requested u");
    let vt = svd.v_t.expect("requested v_t");
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            out += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    out
}

/// GNC(1) as a scalar: `tr(Sigma_B^+ Sigma_W)`, with `Sigma_W` averaged over
/// samples and `Sigma_B` over classes.
pub fn collapse_metric(features: &RawMatrix, labels: &Labels) -> Result<f64> {
    let (means, global) = raw_class_means(features, labels)?;
    let d = features.cols();
    let mut sw = DMatrix::<f64>::zeros(d, d);
    for (i, x) in features.iter_rows().enumerate() {
        let mu = means.row(labels.class_of(i));
        let v = DMatrix::from_iterator(d, 1, x.iter().zip(mu).map(|(a, b)| a - b));
        sw += &v * v.transpose();
    }
    sw /= features.rows() as f64;
    let mut sb = DMatrix::<f64>::zeros(d, d);
    for mu in means.iter_rows() {
        let v = DMatrix::from_iterator(d, 1, mu.iter().zip(&global).map(|(a, b)| a - b));
        sb += &v * v.transpose();
    }
    sb /= means.rows() as f64;
    Ok((pinv(&sb) * sw).trace().max(0.0))
}

/// Coefficient of variation (population std over mean) of `|mu_c - mu_G|`.
pub fn equinorm_cv(features: &RawMatrix, labels: &Labels) -> Result<f64> {
    let (means, global) = raw_class_means(features, labels)?;
    let norms: Vec<f64> = means.iter_rows().map(|mu| crate::geometry::sq_dist(mu, &global).sqrt()).collect();
    let k = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / k;
    if !(mean >= ZERO_MEAN) {
        return Err(Error::DegenerateMean(0));
    }
    let var = norms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
    Ok(var.sqrt() / mean)
}

/// GNC(3): largest `|w_c / |w_c| - mu_hat_c|` over classes.
pub fn self_duality_gap(proxies: &RawMatrix, features: &RawMatrix, labels: &Labels) -> Result<f64> {
    check(features, labels, Some(proxies))?;
    let w = normalize_rows(proxies)?;
    let means = class_means(features, labels)?.normalized;
    Ok((0..labels.num_classes()).map(|c| dist(w.row(c), means.row(c))).fold(0.0, f64::max))
}

fn first_best(values: impl Iterator<Item = f64>, better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = (0, f64::NAN);
    for (k, v) in values.enumerate() {
        if k == 0 || better(v, best.1) {
            best = (k, v);
        }
    }
    best.0
}

/// GNC(4) without bias: fraction of samples on which `argmax_c <w_c, x>` and
/// `argmin_c |x - mu_c|` agree. Ties go to the lowest class index.
pub fn nearest_mean_agreement(proxies: &RawMatrix, features: &RawMatrix, labels: &Labels) -> Result<f64> {
    check(features, labels, Some(proxies))?;
    let (means, _) = raw_class_means(features, labels)?;
    let agree = features
        .iter_rows()
        .filter(|x| {
            let by_proxy = first_best(proxies.iter_rows().map(|w| dot(w, x)), |a, b| a > b);
            let by_mean = first_best(means.iter_rows().map(|m| crate::geometry::sq_dist(m, x)), |a, b| a < b);
            by_proxy == by_mean
        })
        .count();
    Ok(agree as f64 / features.rows() as f64)
}

/// `max_{i != j} |<p_i, p_j> + 1/(C-1)|`.
pub fn etf_deviation(p: &PointConfig) -> f64 {
    let n = p.n();
    if n < 2 {
        return 0.0;
    }
    let target = -1.0 / (n as f64 - 1.0);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((dot(p.row(i), p.row(j)) - target).abs());
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossPolytopeDeviation {
    pub deviation: f64,
    /// Greedy partners, `partner[i] = j` and `partner[j] = i`.
    pub partner: Vec<usize>,
    /// Every matched pair is mutually the most antipodal partner of its two ends.
    pub perfect_matching: bool,
}

/// Distance from the cross-polytope structure: points are greedily paired with
/// their most antipodal unmatched partner (lowest index on ties); the deviation
/// is the largest `|<p_i, p_j> + 1|` over pairs and `|<p_i, p_j>|` over the rest.
pub fn cross_polytope_deviation(p: &PointConfig) -> Result<CrossPolytopeDeviation> {
    let n = p.n();
    if n != 2 * p.dim() {
        return Err(Error::WrongCount { expected: 2 * p.dim(), actual: n });
    }
    let g: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dot(p.row(i), p.row(j))).collect()).collect();
    let mut partner = vec![usize::MAX; n];
    for i in 0..n {
        if partner[i] != usize::MAX {
            continue;
        }
        let mut best: Option<usize> = None;
        for j in (i + 1)..n {
            if partner[j] == usize::MAX && best.is_none_or(|b| g[i][j] < g[i][b]) {
                best = Some(j);
            }
        }
        let j = best.expect("an even number of points always leaves a partner");
        partner[i] = j;
        partner[j] = i;
    }
    let most_antipodal =
        |i: usize| first_best((0..n).map(|j| if j == i { f64::INFINITY } else { g[i][j] }), |a, b| a < b);
    let perfect_matching = (0..n).all(|i| most_antipodal(i) == partner[i]);
    let mut deviation: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let v = if partner[i] == j { (g[i][j] + 1.0).abs() } else { g[i][j].abs() };
            deviation = deviation.max(v);
        }
    }
    Ok(CrossPolytopeDeviation { deviation, partner, perfect_matching })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityStats {
    pub resultant_norm: f64,
    /// `|(1/n) P^T P - I/d|_F`.
    pub covariance_deviation: f64,
}

pub fn uniformity_stats(p: &PointConfig) -> UniformityStats {
    let d = p.dim();
    let n = p.n() as f64;
    let mut cov = vec![0.0; d * d];
    for row in p.iter_rows() {
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += row[a] * row[b] / n;
            }
        }
    }
    let mut dev = 0.0;
    for a in 0..d {
        for b in 0..d {
            let target = if a == b { 1.0 / d as f64 } else { 0.0 };
            dev += (cov[a * d + b] - target).powi(2);
        }
    }
    UniformityStats { resultant_norm: crate::geometry::resultant_norm(p), covariance_deviation: dev.sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_gaussian_sphere;
    use crate::oracle::{circle_config, cross_polytope_config, etf_config};
    use crate::proxies::cayley_rotation;

    fn pc(rows: &[[f64; 2]]) -> PointConfig {
        PointConfig::from_rows(rows).unwrap()
    }

    /// `per` copies of each row of `w`, labelled by row.
    fn collapsed(w: &PointConfig, per: usize) -> (RawMatrix, Labels) {
        let labels = Labels::balanced(w.n(), per).unwrap();
        let rows: Vec<&[f64]> = labels.assignments().iter().map(|&c| w.row(c)).collect();
        (RawMatrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn collapsed_etf_report() {
        let w = etf_config(3, 2).unwrap();
        let (f, labels) = collapsed(&w, 4);
        let r = gnc_report(&f, &labels, w.as_raw()).unwrap();
        assert!(r.afmre.abs() < 1e-12);
        assert!(r.collapse_metric.abs() < 1e-12);
        assert!(r.self_duality_gap < 1e-12);
        assert_eq!(r.nearest_mean_agreement, 1.0);
        assert!(r.etf_deviation < 1e-9);
        assert!((r.ace - 1.0 / 3.0).abs() < 1e-12 && (r.acme - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!((r.afre, r.reverse_energy, r.trace_sw), (0.0, 0.0, 0.0));
        assert!(r.cross_polytope_deviation.is_none());
        assert!(r.resultant_norm < 1e-12 && r.covariance_deviation < 1e-12);
    }

    #[test]
    fn random_report_is_in_range() {
        for seed in 0..10 {
            let f = sample_gaussian_sphere(24, 4, seed);
            let labels = Labels::balanced(4, 6).unwrap();
            let w = sample_gaussian_sphere(4, 4, seed + 100);
            let r = gnc_report(f.as_raw(), &labels, w.as_raw()).unwrap();
            let v = serde_json::to_value(&r).unwrap();
            for (k, x) in v.as_object().unwrap() {
                if let Some(x) = x.as_f64() {
                    assert!(x.is_finite() && x >= 0.0, "{k} = {x}");
                }
            }
            assert!((0.0..=1.0).contains(&r.nearest_mean_agreement));
            assert!(r.self_duality_gap <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn singleton_classes_have_no_spread() {
        let w = sample_gaussian_sphere(5, 3, 1);
        let labels = Labels::balanced(5, 1).unwrap();
        let r = gnc_report(w.as_raw(), &labels, w.as_raw()).unwrap();
        assert_eq!((r.afre, r.reverse_energy), (0.0, 0.0));
        assert_eq!(r.collapse_metric, 0.0);
    }

    #[test]
    fn ace_examples() {
        assert!((ace(&circle_config(3)).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((ace(&circle_config(10)).unwrap() - 82.5 / 90.0).abs() < 1e-12);
        assert!((ace(&cross_polytope_config(3)).unwrap() - 0.45).abs() < 1e-12);
    }

    #[test]
    fn afre_afmre_examples() {
        let anti = pc(&[[1.0, 0.0], [-1.0, 0.0]]);
        let one = Labels::balanced(1, 2).unwrap();
        assert!((afre(anti.as_raw(), &one).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(afmre(anti.as_raw(), &one), Err(Error::DegenerateMean(0))));

        let t = std::f64::consts::FRAC_PI_3;
        let sixty = pc(&[[1.0, 0.0], [t.cos(), t.sin()]]);
        assert!((afre(sixty.as_raw(), &one).unwrap() - 1.0).abs() < 1e-12);

        let (f, labels) = collapsed(&circle_config(4), 3);
        assert!(afre(&f, &labels).unwrap() < 1e-24 && afmre(&f, &labels).unwrap() < 1e-24);
    }

    #[test]
    fn collapse_metric_small_instance() {
        let delta: f64 = 0.1;
        let c = (1.0 - delta * delta).sqrt();
        let f = RawMatrix::from_rows(&[[c, delta], [c, -delta], [-c, delta], [-c, -delta]]).unwrap();
        let labels = Labels::balanced(2, 2).unwrap();
        // means (+-c, 0), global 0: Sigma_B = diag(c^2, 0); Sigma_W = diag(0, delta^2)
        assert!(collapse_metric(&f, &labels).unwrap().abs() < 1e-15);

        // within-class spread with a component along the between-class axis
        let (s1, s2) = ((1.0 - 0.81f64).sqrt(), (1.0 - 0.49f64).sqrt());
        let f = RawMatrix::from_rows(&[[0.9, s1], [0.7, s2], [-0.9, -s1], [-0.7, -s2]]).unwrap();
        // brute force: means m and -m, Sigma_B = m m^T, Sigma_W = (1/4) sum r r^T
        let m = [0.8, (s1 + s2) / 2.0];
        let r = [0.1, (s1 - s2) / 2.0];
        // Sigma_W = r r^T (all four residuals are +-r); tr(pinv(m m^T) r r^T) = <m, r>^2 / |m|^4
        let mm = m[0] * m[0] + m[1] * m[1];
        let expected = (m[0] * r[0] + m[1] * r[1]).powi(2) / (mm * mm);
        assert!((collapse_metric(&f, &labels).unwrap() - expected).abs() < 1e-12);

        let w = sample_gaussian_sphere(4, 3, 0);
        assert_eq!(collapse_metric(w.as_raw(), &Labels::balanced(4, 1).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn equinorm_examples() {
        let (f, labels) = collapsed(&pc(&[[1.0, 0.0], [-1.0, 0.0]]), 2);
        assert_eq!(equinorm_cv(&f, &labels).unwrap(), 0.0);
        let (f, labels) = collapsed(&etf_config(3, 2).unwrap(), 2);
        assert!(equinorm_cv(&f, &labels).unwrap() < 1e-12);
        let f = RawMatrix::from_rows(&[[1.0, 0.0], [-3.0, 0.0], [-3.0, 0.0], [-3.0, 0.0]]).unwrap();
        let labels = Labels::new(vec![0, 1, 1, 1], 2).unwrap();
        // global mean -2; norms |1 + 2| = 3, |-3 + 2| = 1
        assert!((equinorm_cv(&f, &labels).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn self_duality_examples() {
        let w = pc(&[[1.0, 0.0], [-1.0, 0.0]]);
        let (f, labels) = collapsed(&w, 2);
        assert_eq!(self_duality_gap(w.as_raw(), &f, &labels).unwrap(), 0.0);
        let flipped = pc(&[[-1.0, 0.0], [1.0, 0.0]]);
        assert!((self_duality_gap(flipped.as_raw(), &f, &labels).unwrap() - 2.0).abs() < 1e-12);
        let quarter = pc(&[[0.0, 1.0], [0.0, -1.0]]);
        assert!((self_duality_gap(quarter.as_raw(), &f, &labels).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn agreement_examples() {
        let w = etf_config(3, 2).unwrap();
        let (f, labels) = collapsed(&w, 3);
        assert_eq!(nearest_mean_agreement(w.as_raw(), &f, &labels).unwrap(), 1.0);
        let w2 = pc(&[[1.0, 0.0], [-1.0, 0.0]]);
        let (f, labels) = collapsed(&w2, 3);
        let swapped = pc(&[[-1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(nearest_mean_agreement(swapped.as_raw(), &f, &labels).unwrap(), 0.0);
    }

    #[test]
    fn fda_examples() {
        let (f, labels) = collapsed(&pc(&[[1.0, 0.0], [-1.0, 0.0]]), 2);
        assert_eq!(fda_traces(&f, &labels).unwrap(), (4.0, 0.0));

        // degenerate solution: ten classes stacked at the two poles
        let poles = [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];
        let assignments: Vec<usize> = (0..10).flat_map(|c| [c; 3]).collect();
        let rows: Vec<[f64; 3]> = assignments.iter().map(|&c| poles[c % 2]).collect();
        let f = RawMatrix::from_rows(&rows).unwrap();
        let labels = Labels::new(assignments, 10).unwrap();
        let (sb, sw) = fda_traces(&f, &labels).unwrap();
        assert_eq!(sw, 0.0);
        assert!((sb - 30.0).abs() < 1e-12);

        let f = sample_gaussian_sphere(5, 3, 2);
        assert!(fda_traces(f.as_raw(), &Labels::balanced(1, 5).unwrap()).unwrap().0 < 1e-24);
    }

    #[test]
    fn etf_deviation_examples() {
        assert!(etf_deviation(&circle_config(3)) < 1e-12);
        assert_eq!(etf_deviation(&pc(&[[1.0, 0.0], [-1.0, 0.0]])), 0.0);
        assert!((etf_deviation(&circle_config(4)) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cross_polytope_examples() {
        let cp = cross_polytope_config(3);
        let r = cross_polytope_deviation(&cp).unwrap();
        assert_eq!(r.deviation, 0.0);
        assert!(r.perfect_matching);

        let rot = cp.rotate(&cayley_rotation(&[0.3, 1.2, -0.4], 3).unwrap()).unwrap();
        assert!(cross_polytope_deviation(&rot).unwrap().deviation < 1e-10);

        let rows: Vec<[f64; 3]> = (0..6)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / 3.0;
                [t.cos(), t.sin(), 0.0]
            })
            .collect();
        let ring = PointConfig::from_rows(&rows).unwrap();
        assert!(cross_polytope_deviation(&ring).unwrap().deviation >= 0.5);

        assert!(matches!(
            cross_polytope_deviation(&circle_config(3)),
            Err(Error::WrongCount { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn uniformity_examples() {
        let s = uniformity_stats(&cross_polytope_config(3));
        assert!(s.resultant_norm < 1e-15 && s.covariance_deviation < 1e-15);
        let s = uniformity_stats(&etf_config(3, 2).unwrap());
        assert!(s.resultant_norm < 1e-12 && s.covariance_deviation < 1e-12);
        let same = PointConfig::from_rows(&[[1.0, 0.0, 0.0]; 4]).unwrap();
        let s = uniformity_stats(&same);
        let expected = ((1.0f64 - 1.0 / 3.0).powi(2) + 2.0 / 9.0).sqrt();
        assert!((s.resultant_norm - 1.0).abs() < 1e-15 && (s.covariance_deviation - expected).abs() < 1e-15);
    }

    #[test]
    fn report_is_rotation_invariant() {
        let f = sample_gaussian_sphere(18, 3, 4);
        let w = sample_gaussian_sphere(3, 3, 5);
        let labels = Labels::balanced(3, 6).unwrap();
        let r = cayley_rotation(&[0.2, -0.9, 0.5], 3).unwrap();
        let a = gnc_report(f.as_raw(), &labels, w.as_raw()).unwrap();
        let b = gnc_report(f.rotate(&r).unwrap().as_raw(), &labels, w.rotate(&r).unwrap().as_raw()).unwrap();
        let (va, vb) = (serde_json::to_value(&a).unwrap(), serde_json::to_value(&b).unwrap());
        for (k, x) in va.as_object().unwrap() {
            if let (Some(x), Some(y)) = (x.as_f64(), vb[k].as_f64()) {
                assert!((x - y).abs() < 1e-9, "{k}: {x} vs {y}");
            }
        }
    }
}
