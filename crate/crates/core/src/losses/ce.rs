//! Cross-entropy on the sphere (no bias) and its uniformity bounds.

use serde::{Deserialize, Serialize};

use super::{finish, require_sphere, LabeledState, LossOutput, LossSpec, LossVariant};
use crate::error::{Error, Result};
use crate::geometry::dot;

fn logits(state: &LabeledState, i: usize) -> Vec<f64> {
    let x = state.features().row(i);
    state.proxies().iter_rows().map(|w| dot(w, x)).collect()
}

/// `(log sum_c e^{l_c}, softmax(l))`.
fn log_softmax(l: &[f64]) -> (f64, Vec<f64>) {
    let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = l.iter().map(|v| (v - m).exp()).sum();
    let lse = m + z.ln();
    (lse, l.iter().map(|v| (v - lse).exp()).collect())
}

/// `sum_i log(1 + sum_{j != y_i} exp(<w_j, x_i> - <w_{y_i}, x_i>))`.
///
/// `inter_term` is `sum_i log sum_j e^{<w_j, x_i>}` and `intra_term` is
/// `-sum_i <w_{y_i}, x_i>`; only the latter's proxy gradient is dropped by the
/// stop-gradient flag.
pub fn ce_loss(state: &LabeledState, spec: &LossSpec) -> Result<LossOutput> {
    require_sphere(state, LossVariant::Ce)?;
    let mut out = LossOutput::zeros(state);
    for i in 0..state.num_samples() {
        let y = state.labels().class_of(i);
        let x = state.features().row(i).to_vec();
        let l = logits(state, i);
        let (lse, p) = log_softmax(&l);
        out.inter_term += lse;
        out.intra_term -= l[y];
        let gx = out.grads.features.row_mut(i);
        for (c, w) in state.proxies().iter_rows().enumerate() {
            let coeff = if c == y { p[c] - 1.0 } else { p[c] };
            gx.iter_mut().zip(w).for_each(|(g, v)| *g += coeff * v);
        }
        for (c, &pc) in p.iter().enumerate() {
            out.grads.proxies_inter.row_mut(c).iter_mut().zip(&x).for_each(|(g, v)| *g += pc * v);
        }
        out.grads.proxies_intra.row_mut(y).iter_mut().zip(&x).for_each(|(g, v)| *g -= v);
    }
    out.value = out.inter_term + out.intra_term;
    Ok(finish(state, spec, out, true))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CeBounds {
    pub lower: f64,
    pub upper: f64,
    pub ce: f64,
}

impl CeBounds {
    pub fn holds(&self) -> bool {
        self.lower <= self.ce && self.ce <= self.upper
    }
}

/// The coupled lower and upper bounds on CE with `rho = C - 1`:
///
/// * lower: `sum_i sum_{j != y_i} <w_j, x_i> - (C-1) sum_i <w_{y_i}, x_i>`
/// * upper: `log(1 + sum_i sum_{j != y_i} e^{<w_j, x_i>} + (C-1) sum_i e^{-<w_{y_i}, x_i>})`
///
/// Both are evaluated exactly as written; whether they sandwich the loss is
/// reported by [`CeBounds::holds`] rather than assumed.
pub fn ce_bounds(state: &LabeledState) -> Result<CeBounds> {
    require_sphere(state, LossVariant::Ce)?;
    let rho = (state.num_classes() - 1) as f64;
    let (mut q1, mut q2, mut q3, mut q4) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..state.num_samples() {
        let y = state.labels().class_of(i);
        for (c, l) in logits(state, i).into_iter().enumerate() {
            if c == y {
                q2 += l;
                q4 += (-l).exp();
            } else {
                q1 += l;
                q3 += l.exp();
            }
        }
    }
    let ce = ce_loss(state, &LossSpec::new(LossVariant::Ce))?.value;
    Ok(CeBounds { lower: q1 - rho * q2, upper: (1.0 + q3 + rho * q4).ln(), ce })
}

/// Value of the convex-split lower bound `Q1(w*) + Q2(w*)` for one `lambda`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoudiafBound {
    pub lambda: f64,
    pub bound: f64,
    /// `Q1(w*) = -1/(2 lambda n) sum_i sum_{j in A_{y_i}} <x_i, x_j>`.
    pub q1: f64,
    /// `Q2(w*)`, built from the softmax confidences of the current proxies.
    pub q2: f64,
    pub ce: f64,
    pub holds: bool,
}

/// Splits CE into `Q1 + Q2` with a `lambda n / 2 |w|^2` term and evaluates the
/// closed-form minima of both halves. A violated bound is reported through
/// `holds`, not as an error.
pub fn ce_boudiaf_lower(state: &LabeledState, lambda: f64) -> Result<BoudiafBound> {
    require_sphere(state, LossVariant::Ce)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    let n = state.num_samples();
    let classes = state.num_classes();
    let nf = n as f64;
    let x = state.features();
    let gram: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dot(x.row(i), x.row(j))).collect()).collect();

    let mut same = 0.0;
    for i in 0..n {
        for &j in state.labels().members(state.labels().class_of(i)) {
            same += gram[i][j];
        }
    }
    let q1 = -same / (2.0 * lambda * nf);

    let conf: Vec<Vec<f64>> = (0..n).map(|i| log_softmax(&logits(state, i)).1).collect();
    let mut q2 = 0.0;
    for i in 0..n {
        let args: Vec<f64> =
            (0..classes).map(|c| (0..n).map(|j| conf[j][c] * gram[i][j]).sum::<f64>() / (lambda * nf)).collect();
        q2 += log_softmax(&args).0;
    }
    for c in 0..classes {
        let mut m = vec![0.0; x.cols()];
        for (i, row) in x.iter_rows().enumerate() {
            m.iter_mut().zip(row).for_each(|(a, v)| *a += conf[i][c] * v / nf);
        }
        q2 -= nf / (2.0 * lambda) * dot(&m, &m);
    }

    let ce = ce_loss(state, &LossSpec::new(LossVariant::Ce))?.value;
    let bound = q1 + q2;
    Ok(BoudiafBound { lambda, bound, q1, q2, ce, holds: bound <= ce })
}
