use super::{Result, SemisupError};
use crate::augment::ViewTransport;
use crate::model::Prediction;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before any log.
pub const PROB_CLAMP: f64 = 1e-7;

/// Supervision for one prediction in the supervised loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target<'a> {
    /// Row-major `frames x classes` 0/1 grid.
    Strong(&'a [f64]),
    Weak(&'a [f64]),
    None,
}

/// Gradient of a loss with respect to one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredGrad {
    pub strong: Vec<f64>,
    pub weak: Vec<f64>,
}

impl PredGrad {
    pub fn zeros(p: &Prediction) -> Self {
        Self { strong: vec![0.0; p.strong.len()], weak: vec![0.0; p.weak.len()] }
    }

    pub fn add_scaled(&mut self, other: &PredGrad, scale: f64) {
        for (a, b) in self.strong.iter_mut().zip(&other.strong) {
            *a += scale * b;
        }
        for (a, b) in self.weak.iter_mut().zip(&other.weak) {
            *a += scale * b;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    /// One entry per input prediction, in input order.
    pub grads: Vec<PredGrad>,
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(SemisupError::Shape { what, expected, got });
    }
    Ok(())
}

/// Binary cross-entropy of a clamped probability and its derivative
/// (zero where the clamp is active).
fn bce(y: f64, p: f64) -> (f64, f64) {
    let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let value = -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
    let grad = if p == pc { (pc - y) / (pc * (1.0 - pc)) } else { 0.0 };
    (value, grad)
}

/// Frame-level BCE averaged over strongly labelled items plus clip-level BCE
/// averaged over weakly labelled items. An empty group contributes zero.
pub fn supervised_loss(preds: &[&Prediction], targets: &[Target]) -> Result<LossOutput> {
    check_len("targets", preds.len(), targets.len())?;
    let mut grads: Vec<PredGrad> = preds.iter().map(|p| PredGrad::zeros(p)).collect();
    let n_strong = targets.iter().filter(|t| matches!(t, Target::Strong(_))).count();
    let n_weak = targets.iter().filter(|t| matches!(t, Target::Weak(_))).count();
    let mut strong_sum = 0.0;
    let mut weak_sum = 0.0;
    for ((p, t), g) in preds.iter().zip(targets).zip(&mut grads) {
        match t {
            Target::Strong(y) => {
                check_len("strong target", p.strong.len(), y.len())?;
                let norm = (n_strong * p.strong.len()) as f64;
                for i in 0..y.len() {
                    let (v, d) = bce(y[i], p.strong[i]);
                    strong_sum += v / norm;
                    g.strong[i] = d / norm;
                }
            }
            Target::Weak(y) => {
                check_len("weak target", p.weak.len(), y.len())?;
                let norm = (n_weak * p.weak.len()) as f64;
                for i in 0..y.len() {
                    let (v, d) = bce(y[i], p.weak[i]);
                    weak_sum += v / norm;
                    g.weak[i] = d / norm;
                }
            }
            Target::None => {}
        }
    }
    Ok(LossOutput { value: strong_sum + weak_sum, grads })
}

/// Squared error between student and teacher predictions over all clips,
/// frame term normalized by `N * T' * C`, clip term by `N * C`. Teacher
/// predictions are constants; gradients are returned for the student only.
pub fn meanteacher_loss(student: &[&Prediction], teacher: &[&Prediction]) -> Result<LossOutput> {
    check_len("teacher predictions", student.len(), teacher.len())?;
    let n = student.len() as f64;
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(student.len());
    for (s, t) in student.iter().zip(teacher) {
        check_len("teacher strong", s.strong.len(), t.strong.len())?;
        check_len("teacher weak", s.weak.len(), t.weak.len())?;
        let ns = n * s.strong.len() as f64;
        let nw = n * s.weak.len() as f64;
        let mut g = PredGrad::zeros(s);
        for i in 0..s.strong.len() {
            let d = s.strong[i] - t.strong[i];
            value += d * d / ns;
            g.strong[i] = 2.0 * d / ns;
        }
        for i in 0..s.weak.len() {
            let d = s.weak[i] - t.weak[i];
            value += d * d / nw;
            g.weak[i] = 2.0 * d / nw;
        }
        grads.push(g);
    }
    Ok(LossOutput { value, grads })
}

/// One augmented view: the index of the clip it was made from, the student
/// prediction on it, and how reference frames map into its time base.
#[derive(Debug, Clone, Copy)]
pub struct ViewPrediction<'a> {
    pub origin: usize,
    pub prediction: &'a Prediction,
    pub transport: &'a ViewTransport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyOutput {
    pub value: f64,
    pub originals: Vec<PredGrad>,
    pub views: Vec<PredGrad>,
}

/// Squared difference between transported predictions on the originals and
/// predictions on their views, averaged over `N * P * T' * C` (frames) and
/// `N * P * C` (clips). Gradients reach both sides unless the view involves
/// mixup, whose binarized reference is a constant.
pub fn consistency_loss(originals: &[&Prediction], views: &[ViewPrediction], p: usize) -> Result<ConsistencyOutput> {
    let n = originals.len();
    let mut out = ConsistencyOutput {
        value: 0.0,
        originals: originals.iter().map(|o| PredGrad::zeros(o)).collect(),
        views: views.iter().map(|v| PredGrad::zeros(v.prediction)).collect(),
    };
    if views.is_empty() {
        return Ok(out);
    }
    let strong: Vec<&[f64]> = originals.iter().map(|o| o.strong.as_slice()).collect();
    let weak: Vec<&[f64]> = originals.iter().map(|o| o.weak.as_slice()).collect();
    for (k, v) in views.iter().enumerate() {
        if v.origin >= n || v.transport.partners.iter().any(|(i, _)| *i >= n) {
            return Err(SemisupError::Shape { what: "view origin", expected: n, got: v.origin });
        }
        let o = originals[v.origin];
        let classes = o.n_classes;
        check_len("view strong", o.strong.len(), v.prediction.strong.len())?;
        check_len("view weak", o.weak.len(), v.prediction.weak.len())?;
        check_len("transport frames", o.n_frames, v.transport.own.len())?;
        let ref_strong = v.transport.strong(v.origin, &strong, classes)?;
        let ref_weak = v.transport.weak(v.origin, &weak);
        let ns = (n * p * o.strong.len()) as f64;
        let nw = (n * p * o.weak.len()) as f64;
        let mut d_ref_strong = vec![0.0; ref_strong.len()];
        for i in 0..ref_strong.len() {
            let d = ref_strong[i] - v.prediction.strong[i];
            out.value += d * d / ns;
            out.views[k].strong[i] -= 2.0 * d / ns;
            d_ref_strong[i] = 2.0 * d / ns;
        }
        let mut d_ref_weak = vec![0.0; ref_weak.len()];
        for i in 0..ref_weak.len() {
            let d = ref_weak[i] - v.prediction.weak[i];
            out.value += d * d / nw;
            out.views[k].weak[i] -= 2.0 * d / nw;
            d_ref_weak[i] = 2.0 * d / nw;
        }
        if v.transport.is_differentiable() {
            let g = &mut out.originals[v.origin];
            v.transport.own.adjoint_add(&d_ref_strong, classes, &mut g.strong);
            for (a, b) in g.weak.iter_mut().zip(&d_ref_weak) {
                *a += b;
            }
        }
    }
    Ok(out)
}

/// Weighted sum `L_super + ramp * (lambda_unsuper * L_unsuper + lambda_cr * L_cr)`.
pub fn total_loss(parts: (f64, f64, f64), lambda_unsuper: f64, lambda_cr: f64, ramp: f64) -> f64 {
    parts.0 + ramp * (lambda_unsuper * parts.1 + lambda_cr * parts.2)
}
