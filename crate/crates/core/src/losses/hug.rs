//! HUG variants. All sums over "pairs" of a set run over ordered pairs, matching
//! the energy convention of [`crate::energy`].

use rand::Rng as _;

use super::{finish, require_sphere, LabeledState, LossGrads, LossOutput, LossSpec, LossVariant};
use crate::energy::{distance_coeff, log_det_gram_raw, riesz_coeff, riesz_kernel, COINCIDENT};
use crate::error::{Error, Result};
use crate::geometry::{norm, sq_dist, Labels};
use crate::rng::{rng_from_seed, stream, stream_seed};

/// A row of the state: a feature or a class proxy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Loc {
    Feature(usize),
    Proxy(usize),
}

impl Loc {
    fn index(self) -> usize {
        match self {
            Loc::Feature(i) | Loc::Proxy(i) => i,
        }
    }
}

/// Which proxy-gradient bucket a term writes into.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Term {
    Inter,
    Intra,
}

fn at(state: &LabeledState, loc: Loc) -> &[f64] {
    match loc {
        Loc::Feature(i) => state.features().row(i),
        Loc::Proxy(c) => state.proxies().row(c),
    }
}

fn push(grads: &mut LossGrads, loc: Loc, term: Term, dir: &[f64], scale: f64) {
    let row = match (loc, term) {
        (Loc::Feature(i), _) => grads.features.row_mut(i),
        (Loc::Proxy(c), Term::Inter) => grads.proxies_inter.row_mut(c),
        (Loc::Proxy(c), Term::Intra) => grads.proxies_intra.row_mut(c),
    };
    row.iter_mut().zip(dir).for_each(|(g, v)| *g += scale * v);
}

fn delta(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `K_s(a, b)`, with `weight * K_s` differentiated into both endpoints.
fn riesz_pair(
    state: &LabeledState,
    grads: &mut LossGrads,
    (a, b): (Loc, Loc),
    s: f64,
    weight: f64,
    term: Term,
) -> Result<f64> {
    let (pa, pb) = (at(state, a), at(state, b));
    let d2 = sq_dist(pa, pb);
    if s > 0.0 && d2 < COINCIDENT * COINCIDENT {
        return Err(Error::CoincidentPoints(a.index(), b.index()));
    }
    let k = weight * riesz_coeff(d2, s);
    let dir = delta(pa, pb);
    push(grads, a, term, &dir, k);
    push(grads, b, term, &dir, -k);
    Ok(riesz_kernel(d2, s))
}

/// `|a - b|`, with `weight * |a - b|` differentiated into both endpoints.
fn dist_pair(state: &LabeledState, grads: &mut LossGrads, (a, b): (Loc, Loc), weight: f64, term: Term) -> f64 {
    let dir = delta(at(state, a), at(state, b));
    let d = norm(&dir);
    let k = weight * distance_coeff(d);
    push(grads, a, term, &dir, k);
    push(grads, b, term, &dir, -k);
    d
}

/// Ordered-pair energy of a set of rows; gradient of `weight * energy` is accumulated.
fn set_energy(
    state: &LabeledState,
    grads: &mut LossGrads,
    set: &[Loc],
    s: f64,
    weight: f64,
    term: Term,
) -> Result<f64> {
    let mut e = 0.0;
    for (k, &a) in set.iter().enumerate() {
        for &b in &set[k + 1..] {
            e += 2.0 * riesz_pair(state, grads, (a, b), s, 2.0 * weight, term)?;
        }
    }
    Ok(e)
}

fn proxy_set(state: &LabeledState) -> Vec<Loc> {
    (0..state.num_classes()).map(Loc::Proxy).collect()
}

/// Members of class `c` followed by its proxy.
fn class_set(labels: &Labels, c: usize) -> Vec<Loc> {
    labels.members(c).iter().map(|&i| Loc::Feature(i)).chain([Loc::Proxy(c)]).collect()
}

/// `sum_c E_{s_w}(X_c, w_c)` with the gradient of `weight * sum` accumulated.
fn intra_energy(state: &LabeledState, grads: &mut LossGrads, s: f64, weight: f64) -> Result<f64> {
    let mut total = 0.0;
    for c in 0..state.num_classes() {
        total += set_energy(state, grads, &class_set(state.labels(), c), s, weight, Term::Intra)?;
    }
    Ok(total)
}

/// `sum_i |x_i - w_{y_i}|`.
fn proxy_distance_sum(state: &LabeledState, grads: &mut LossGrads, weight: f64) -> f64 {
    (0..state.num_samples())
        .map(|i| {
            dist_pair(state, grads, (Loc::Feature(i), Loc::Proxy(state.labels().class_of(i))), weight, Term::Intra)
        })
        .sum()
}

/// `sum_c sum_{i != j in A_c} |x_i - x_j|`.
fn feature_distance_sum(state: &LabeledState, grads: &mut LossGrads, weight: f64) -> f64 {
    let mut total = 0.0;
    for c in 0..state.num_classes() {
        let members = state.labels().members(c);
        for (k, &i) in members.iter().enumerate() {
            for &j in &members[k + 1..] {
                total += 2.0 * dist_pair(state, grads, (Loc::Feature(i), Loc::Feature(j)), 2.0 * weight, Term::Intra);
            }
        }
    }
    total
}

/// `alpha E_{s_b}(W) - beta sum_c E_{s_w}(X_c, w_c)`.
pub fn mhe_hug(state: &LabeledState, spec: &LossSpec) -> Result<LossOutput> {
    require_sphere(state, LossVariant::MheHug)?;
    let mut out = LossOutput::zeros(state);
    out.inter_term =
        spec.alpha * set_energy(state, &mut out.grads, &proxy_set(state), spec.s_b, spec.alpha, Term::Inter)?;
    out.intra_term = -spec.beta * intra_energy(state, &mut out.grads, spec.s_w, -spec.beta)?;
    out.value = out.inter_term + out.intra_term;
    Ok(finish(state, spec, out, true))
}

/// `alpha E_{s_b}(W) + beta' sum_i |x_i - w_{y_i}|`.
pub fn mhe_hug_relaxed(state: &LabeledState, spec: &LossSpec) -> Result<LossOutput> {
    require_sphere(state, LossVariant::MheHugRelaxed)?;
    let mut out = LossOutput::zeros(state);
    out.inter_term =
        spec.alpha * set_energy(state, &mut out.grads, &proxy_set(state), spec.s_b, spec.alpha, Term::Inter)?;
    let bp = spec.beta_prime();
    out.intra_term = bp * proxy_distance_sum(state, &mut out.grads, bp);
    out.value = out.inter_term + out.intra_term;
    Ok(finish(state, spec, out, true))
}

/// The `beta'` for which the relaxed MHE loss upper-bounds the exact one at
/// every state with these labels.
///
/// By the triangle inequality through `w_c`, the ordered pairs of
/// `X_c ∪ {w_c}` have total length at most `2 |A_c| sum_{i in A_c} |x_i - w_c|`,
/// so `beta' = 2 beta max_c |A_c|` suffices. The argument needs `s_w = -1`.
pub fn matched_beta_prime(spec: &LossSpec, labels: &Labels) -> Result<f64> {
    if spec.s_w != -1.0 {
        return Err(Error::invalid("matched beta' is only derived for s_w = -1"));
    }
    let largest = labels.counts().into_iter().max().unwrap_or(0);
    Ok(2.0 * spec.beta * largest as f64)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Extremum {
    Min,
    Max,
}

/// Min or max of `values` and its derivative weights. `tau == 0` picks the
/// first extremal entry; `tau > 0` uses a log-sum-exp softening.
fn soft_extremum(values: &[f64], tau: f64, ext: Extremum) -> (f64, Vec<f64>) {
    let sign = if ext == Extremum::Max { 1.0 } else { -1.0 };
    let (best, top) =
        values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if sign * v > acc.1 { (k, sign * v) } else { acc });
    let mut w = vec![0.0; values.len()];
    if tau == 0.0 {
        w[best] = 1.0;
        return (sign * top, w);
    }
    let mut z = 0.0;
    for (wk, &v) in w.iter_mut().zip(values) {
        *wk = ((sign * v - top) / tau).exp();
        z += *wk;
    }
    w.iter_mut().for_each(|wk| *wk /= z);
    (sign * (top + tau * z.ln()), w)
}

/// Extremum of `|a - b|` over the listed pairs, differentiated with `weight`.
fn extremal_distance(
    state: &LabeledState,
    grads: &mut LossGrads,
    pairs: &[(Loc, Loc)],
    tau: f64,
    ext: Extremum,
    weight: f64,
    term: Term,
) -> f64 {
    let dists: Vec<f64> = pairs.iter().map(|&(a, b)| crate::geometry::dist(at(state, a), at(state, b))).collect();
    let (value, w) = soft_extremum(&dists, tau, ext);
    for (&pair, wk) in pairs.iter().zip(w) {
        if wk != 0.0 {
            dist_pair(state, grads, pair, weight * wk, term);
        }
    }
    value
}

fn unordered_pairs(set: &[Loc]) -> Vec<(Loc, Loc)> {
    let mut out = Vec::with_capacity(set.len() * set.len().saturating_sub(1) / 2);
    for (k, &a) in set.iter().enumerate() {
        for &b in &set[k + 1..] {
            out.push((a, b));
        }
    }
    out
}

fn need_two_classes(state: &LabeledState) -> Result<()> {
    if state.num_classes() < 2 {
        return Err(Error::invalid("separation needs at least two classes"));
    }
    Ok(())
}

/// Negated max-min separation: `-(alpha theta(W) - beta sum_c theta^-1(X_c, w_c))`,
/// where `theta` is the smallest and `theta^-1` the largest pairwise distance.
pub fn mhs_hug(state: &LabeledState, spec: &LossSpec) -> Result<LossOutput> {
    require_sphere(state, LossVariant::MhsHug)?;
    need_two_classes(state)?;
    let mut out = LossOutput::zeros(state);
    let inter = unordered_pairs(&proxy_set(state));
    let theta = extremal_distance(state, &mut out.grads, &inter, spec.tau, Extremum::Min, -spec.alpha, Term::Inter);
    out.inter_term = -spec.alpha * theta;
    let mut spread = 0.0;
    for c in 0..state.num_classes() {
        let pairs = unordered_pairs(&class_set(state.labels(), c));
        spread += extremal_distance(state, &mut out.grads, &pairs, spec.tau, Extremum::Max, spec.beta, Term::Intra);
    }
    out.intra_term = spec.beta * spread;
    out.value = out.inter_term + out.intra_term;
    Ok(finish(state, spec, out, true))
}

/// Nearest-neighbour form of [`mhs_hug`]:
/// `-(alpha min_{c != c'} |w_c - w_c'| - beta sum_c max_{i in A_c} |x_i - w_c|)`.
pub fn mhs_hug_surrogate(state: &LabeledState, spec: &LossSpec) -> Result<LossOutput> {
    require_sphere(state, LossVariant::MhsHugSurrogate)?;
    need_two_classes(state)?;
    let mut out = LossOutput::zeros(state);
    let inter = unordered_pairs(&proxy_set(state));
    let theta = extremal_distance(state, &mut out.grads, &inter, spec.tau, Extremum::Min, -spec.alpha, Term::Inter);
    out.inter_term = -spec.alpha * theta;
    let mut spread = 0.0;
    for c in 0..state.num_classes() {
        let pairs: Vec<(Loc, Loc)> =
            state.labels().members(c).iter().map(|&i| (Loc::Feature(i), Loc::Proxy(c))).collect();
        spread += extremal_distance(state, &mut out.grads, &pairs, spec.tau, Extremum::Max, spec.beta, Term::Intra);
    }
    out.intra_term = spec.beta * spread;
    out.value = out.inter_term + out.intra_term;
    Ok(finish(state, spec, out, true))
}

/// `-alpha log det G_eps(W) + beta' sum_i |x_i - w_{y_i}|`. The intra term
/// carries the collapsing sign.
pub fn mgd_hug(state: &LabeledState, spec: &LossSpec) -> Result<LossOutput> {
    require_sphere(state, LossVariant::MgdHug)?;
    let mut out = LossOutput::zeros(state);
    let (logdet, grad) = log_det_gram_raw(state.proxies(), spec.epsilon, true)?;
    out.inter_term = -spec.alpha * logdet;
    if let Some(g) = grad {
        out.grads.proxies_inter.add_scaled(&g, -spec.alpha);
    }
    let bp = spec.beta_prime();
    out.intra_term = bp * proxy_distance_sum(state, &mut out.grads, bp);
    out.value = out.inter_term + out.intra_term;
    Ok(finish(state, spec, out, true))
}

/// Inter-class term of the proxy-free loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PfMode {
    /// One random representative per class, drawn from `seed`.
    Relaxed,
    /// Every ordered cross-class pair of features.
    Full,
}

/// Proxy-free HUG: `alpha E_{s_b}` over cross-class features plus
/// `beta' sum_c sum_{i != j in A_c} |x_i - x_j|`. The proxies are unused and
/// receive zero gradient.
pub fn pf_hug(state: &LabeledState, spec: &LossSpec, mode: PfMode, seed: u64) -> Result<LossOutput> {
    let variant = match mode {
        PfMode::Relaxed => LossVariant::PfHugRelaxed,
        PfMode::Full => LossVariant::PfHugFull,
    };
    require_sphere(state, variant)?;
    let mut out = LossOutput::zeros(state);
    let labels = state.labels();
    out.inter_term = spec.alpha
        * match mode {
            PfMode::Relaxed => {
                let mut rng = rng_from_seed(stream_seed(seed, stream::REPRESENTATIVES));
                let reps: Vec<Loc> = (0..labels.num_classes())
                    .map(|c| {
                        let m = labels.members(c);
                        Loc::Feature(m[rng.random_range(0..m.len())])
                    })
                    .collect();
                set_energy(state, &mut out.grads, &reps, spec.s_b, spec.alpha, Term::Inter)?
            }
            PfMode::Full => {
                let mut e = 0.0;
                for i in 0..labels.len() {
                    for j in i + 1..labels.len() {
                        if labels.class_of(i) != labels.class_of(j) {
                            let pair = (Loc::Feature(i), Loc::Feature(j));
                            e +=
                                2.0 * riesz_pair(state, &mut out.grads, pair, spec.s_b, 2.0 * spec.alpha, Term::Inter)?;
                        }
                    }
                }
                e
            }
        };
    let bp = spec.beta_prime();
    out.intra_term = bp * feature_distance_sum(state, &mut out.grads, bp);
    out.value = out.inter_term + out.intra_term;
    Ok(finish(state, spec, out, true))
}

/// Coupled HUG: `alpha sum_i sum_{c != y_i} K_{s_b}(x_i, w_c)` plus the
/// proxy-free intra term.
pub fn coupled_hug(state: &LabeledState, spec: &LossSpec) -> Result<LossOutput> {
    require_sphere(state, LossVariant::CoupledHug)?;
    let mut out = LossOutput::zeros(state);
    let mut e = 0.0;
    for i in 0..state.num_samples() {
        let y = state.labels().class_of(i);
        for c in (0..state.num_classes()).filter(|&c| c != y) {
            e +=
                riesz_pair(state, &mut out.grads, (Loc::Feature(i), Loc::Proxy(c)), spec.s_b, spec.alpha, Term::Inter)?;
        }
    }
    out.inter_term = spec.alpha * e;
    let bp = spec.beta_prime();
    out.intra_term = bp * feature_distance_sum(state, &mut out.grads, bp);
    out.value = out.inter_term + out.intra_term;
    Ok(finish(state, spec, out, true))
}

/// MHE-HUG on free vectors plus the soft magnitude penalties
/// `lambda1 sum_c (|w_c| - s)^2 + lambda2 sum_i (|x_i| - s)^2`.
///
/// Gradients are Euclidean. The penalties count toward `value` but neither
/// toward `inter_term` nor `intra_term`; their proxy gradient sits in
/// `proxies_inter`.
pub fn unnormalized_hug(state: &LabeledState, spec: &LossSpec) -> Result<LossOutput> {
    let mut out = LossOutput::zeros(state);
    out.inter_term =
        spec.alpha * set_energy(state, &mut out.grads, &proxy_set(state), spec.s_b, spec.alpha, Term::Inter)?;
    out.intra_term = -spec.beta * intra_energy(state, &mut out.grads, spec.s_w, -spec.beta)?;
    let mut penalty = 0.0;
    let rows = (0..state.num_classes())
        .map(|c| (Loc::Proxy(c), spec.lambda1))
        .chain((0..state.num_samples()).map(|i| (Loc::Feature(i), spec.lambda2)));
    for (loc, lambda) in rows {
        if lambda == 0.0 {
            continue;
        }
        let v = at(state, loc).to_vec();
        let r = norm(&v);
        penalty += lambda * (r - spec.s_target).powi(2);
        if r > 0.0 {
            push(&mut out.grads, loc, Term::Inter, &v, 2.0 * lambda * (r - spec.s_target) / r);
        }
    }
    out.value = out.inter_term + out.intra_term + penalty;
    Ok(finish(state, spec, out, false))
}
