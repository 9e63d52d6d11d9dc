use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Largest elementwise relative error between analytic gradients and central
/// differences `(f(p+eps) - f(p-eps)) / (2 eps)`.
///
/// The relative error of one entry is `|a - n| / max(|a|, |n|, 1e-8)`.
/// `loss_fn` rebuilds the forward graph from the store on every call and must
/// be deterministic; two evaluations at the base point are compared
/// bit-for-bit. Parameter values and gradients are restored on return.
pub fn finite_diff_check<F>(mut loss_fn: F, params: &mut ParamStore, eps: f64) -> Result<f64>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::Range(format!("finite-difference step {eps} not in (0, 1e-2]")));
    }
    if params.num_scalars() == 0 {
        return Ok(0.0);
    }

    let first = eval(&mut loss_fn, params)?;
    let second = eval(&mut loss_fn, params)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::Determinism { first, second });
    }

    let saved_grads: Vec<_> = params.ids().map(|id| params.grad(id).clone()).collect();
    params.zero_grad();
    let analytic: Vec<Vec<f64>> = {
        let mut g = Graph::new();
        let loss = loss_fn(&mut g, params)?;
        g.backward(loss, params)?;
        params.ids().map(|id| params.grad(id).data().to_vec()).collect()
    };
    for (id, saved) in params.ids().collect::<Vec<_>>().into_iter().zip(saved_grads) {
        *params.grad_mut(id) = saved;
    }

    let mut worst = 0.0f64;
    let ids: Vec<_> = params.ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        for k in 0..params.value(id).len() {
            let orig = params.value(id).data()[k];
            params.value_mut(id).data_mut()[k] = orig + eps;
            let plus = eval(&mut loss_fn, params);
            params.value_mut(id).data_mut()[k] = orig - eps;
            let minus = eval(&mut loss_fn, params);
            params.value_mut(id).data_mut()[k] = orig;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let a = analytic[pi][k];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

fn eval<F>(loss_fn: &mut F, store: &ParamStore) -> Result<f64>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = loss_fn(&mut g, store)?;
    Ok(g.value(loss).item())
}
