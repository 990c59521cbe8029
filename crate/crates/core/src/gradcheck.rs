//! Central-difference validation of tape gradients.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::model::{Model, ParamMode};
use crate::tensor::{ParamId, Tape, Tensor, Var};

/// Outcome of a gradient comparison.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// `max |autodiff - numeric| / max(1, |numeric|)` over all entries.
    pub max_rel_error: f64,
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
}

/// Relative error used by every gradient check in the crate.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

/// Compares reverse-mode gradients of the scalar built by `f` against
/// central differences with step `h` (1e-5 is a good default).
///
/// `f` receives a fresh tape and one gradient-tracking leaf per entry of
/// `params`, and must return a scalar node.
pub fn finite_diff_check<F>(params: &[Tensor], h: f64, mut f: F) -> Result<GradCheck>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let leaves: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone(), true)).collect();
    let loss = f(&mut tape, &leaves)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .zip(params)
        .map(|(v, p)| tape.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| alloc::vec![0.0; p.len()]))
        .collect();

    let mut eval = |ps: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let ls: Vec<Var> = ps.iter().map(|p| t.leaf(p.clone(), true)).collect();
        let out = f(&mut t, &ls)?;
        Ok(t.value(out).data()[0])
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let mut max_rel: f64 = 0.0;
    for pi in 0..params.len() {
        let mut grads = Vec::with_capacity(params[pi].len());
        for k in 0..params[pi].len() {
            let orig = work[pi].data()[k];
            work[pi].data_mut()[k] = orig + h;
            let up = eval(&work)?;
            work[pi].data_mut()[k] = orig - h;
            let down = eval(&work)?;
            work[pi].data_mut()[k] = orig;
            let num = (up - down) / (2.0 * h);
            max_rel = max_rel.max(rel_error(analytic[pi][k], num));
            grads.push(num);
        }
        numeric.push(grads);
    }
    Ok(GradCheck { max_rel_error: max_rel, analytic, numeric })
}

/// Checks the cross-entropy gradient of every model parameter on the batch
/// `xs` (`[n, seq_len, feature_dim]`) against central differences with step
/// `h`. Returns the worst relative error per named parameter.
pub fn model_gradcheck(model: &Model, xs: &[f64], labels: &[usize], h: f64) -> Result<Vec<(String, f64)>> {
    let (l, f) = (model.config.seq_len, model.config.feature_dim);
    let b = labels.len();
    let loss = |m: &Model, mode: ParamMode| -> Result<(Tape, Var)> {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(alloc::vec![b, l, f], xs.to_vec())?);
        let y = m.forward(&mut tape, x, mode)?;
        let loss = tape.cross_entropy(y, labels)?;
        Ok((tape, loss))
    };
    let mut m = model.clone();
    m.params.zero_grad();
    let (mut tape, lv) = loss(&m, ParamMode::Train)?;
    tape.backward(lv)?;
    m.params.accumulate_grads(&tape);
    let analytic: Vec<Vec<f64>> = m.params.iter().map(|p| p.grad.clone()).collect();
    let mut out = Vec::with_capacity(m.params.len());
    for (pi, grad) in analytic.iter().enumerate() {
        let id = ParamId(pi);
        let mut worst: f64 = 0.0;
        for (k, g) in grad.iter().enumerate() {
            let orig = m.params.get(id).value.data()[k];
            m.params.get_mut(id).value.data_mut()[k] = orig + h;
            let (t, v) = loss(&m, ParamMode::Frozen)?;
            let up = t.value(v).data()[0];
            m.params.get_mut(id).value.data_mut()[k] = orig - h;
            let (t, v) = loss(&m, ParamMode::Frozen)?;
            let dn = t.value(v).data()[0];
            m.params.get_mut(id).value.data_mut()[k] = orig;
            worst = worst.max(rel_error(*g, (up - dn) / (2.0 * h)));
        }
        out.push((m.params.get(id).name.clone(), worst));
    }
    Ok(out)
}
