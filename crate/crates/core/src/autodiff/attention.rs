use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Weight and optional bias of one linear layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinearParams {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl LinearParams {
    pub fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        match self.bias {
            Some(bias) => {
                let b = g.param(store, bias);
                g.linear(x, w, b)
            }
            None => g.matmul(x, w),
        }
    }
}

/// Projections of one attention block. `value: None` reuses the key
/// projection as the value projection.
///
/// A key bias only shifts each softmax row by a constant, so blocks with a
/// separate value projection are normally built with `key.bias = None`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    pub query: LinearParams,
    pub key: LinearParams,
    pub value: Option<LinearParams>,
}

/// Multi-head scaled dot-product attention of `q` rows over `kv` rows.
///
/// Each head sees a contiguous `dim / heads` column slice of the projections
/// and scales its logits by `1/sqrt(dim / heads)`. Head outputs are
/// concatenated without an output projection. Self-attention is `q == kv`.
pub fn multi_head_attention(
    g: &mut Graph,
    store: &ParamStore,
    q: Var,
    kv: Var,
    params: &AttentionParams,
    heads: usize,
) -> Result<Var> {
    let dim = g.value(q).cols();
    if heads == 0 || dim % heads != 0 {
        return Err(Error::Config(format!(
            "attention width {dim} is not divisible by {heads} heads"
        )));
    }
    if g.value(kv).cols() != dim {
        return Err(Error::shape(
            "multi_head_attention",
            format!("query width {dim}, key/value width {}", g.value(kv).cols()),
        ));
    }
    let head_dim = dim / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let qp = params.query.apply(g, store, q)?;
    let kp = params.key.apply(g, store, kv)?;
    let vp = match &params.value {
        Some(v) => v.apply(g, store, kv)?,
        None => kp,
    };

    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (qp, kp, vp)
        } else {
            (
                g.slice_cols(qp, h * head_dim, head_dim)?,
                g.slice_cols(kp, h * head_dim, head_dim)?,
                g.slice_cols(vp, h * head_dim, head_dim)?,
            )
        };
        let logits = g.matmul_nt(qh, kh)?;
        let logits = g.scale(logits, scale);
        let weights = g.softmax_rows(logits)?;
        outs.push(g.matmul(weights, vh)?);
    }
    if outs.len() == 1 {
        Ok(outs[0])
    } else {
        g.concat_cols(&outs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::finite_diff_check;
    use crate::autodiff::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn linear(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, d: usize, bias: bool) -> LinearParams {
        let weight = store.insert(format!("{name}.w"), random_matrix(rng, d, d)).unwrap();
        let bias = bias.then(|| {
            store
                .insert(
                    format!("{name}.b"),
                    Tensor::vector((0..d).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap(),
                )
                .unwrap()
        });
        LinearParams { weight, bias }
    }

    fn setup(d: usize, seed: u64) -> (ParamStore, AttentionParams, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = AttentionParams {
            query: linear(&mut store, &mut rng, "q", d, true),
            key: linear(&mut store, &mut rng, "k", d, false),
            value: Some(linear(&mut store, &mut rng, "v", d, true)),
        };
        (store, p, rng)
    }

    fn project(store: &ParamStore, lp: &LinearParams, x: &Tensor) -> Vec<Vec<f64>> {
        let w = store.value(lp.weight);
        let b = lp.bias.map(|b| store.value(b).data().to_vec()).unwrap_or(vec![0.0; w.cols()]);
        (0..x.rows())
            .map(|i| {
                (0..w.cols())
                    .map(|j| b[j] + (0..x.cols()).map(|k| x.get(i, k) * w.get(k, j)).sum::<f64>())
                    .collect()
            })
            .collect()
    }

    /// Direct evaluation of softmax(q kᵀ / sqrt(dh)) v per head.
    fn reference(store: &ParamStore, p: &AttentionParams, q: &Tensor, kv: &Tensor, heads: usize) -> Vec<Vec<f64>> {
        let qp = project(store, &p.query, q);
        let kp = project(store, &p.key, kv);
        let vp = project(store, p.value.as_ref().unwrap(), kv);
        let d = qp[0].len();
        let dh = d / heads;
        let mut out = vec![vec![0.0; d]; qp.len()];
        for (i, qrow) in qp.iter().enumerate() {
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let logits: Vec<f64> = kp
                    .iter()
                    .map(|krow| cols.clone().map(|c| qrow[c] * krow[c]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
                for (j, l) in logits.iter().enumerate() {
                    let w = (l - mx).exp() / z;
                    for c in cols.clone() {
                        out[i][c] += w * vp[j][c];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn single_key_returns_projected_value() {
        let (store, p, mut rng) = setup(4, 1);
        let kv = random_matrix(&mut rng, 1, 4);
        let v = project(&store, p.value.as_ref().unwrap(), &kv);
        for _ in 0..3 {
            let q = random_matrix(&mut rng, 2, 4);
            let mut g = Graph::new();
            let qv = g.input(q);
            let kvv = g.input(kv.clone());
            let out = multi_head_attention(&mut g, &store, qv, kvv, &p, 2).unwrap();
            for r in 0..2 {
                for c in 0..4 {
                    assert!((g.value(out).get(r, c) - v[0][c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn matches_reference_evaluation() {
        let (store, p, mut rng) = setup(6, 7);
        let q = random_matrix(&mut rng, 2, 6);
        let kv = random_matrix(&mut rng, 3, 6);
        let expected = reference(&store, &p, &q, &kv, 3);
        let mut g = Graph::new();
        let qv = g.input(q);
        let kvv = g.input(kv);
        let out = multi_head_attention(&mut g, &store, qv, kvv, &p, 3).unwrap();
        for (r, row) in expected.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                assert!((g.value(out).get(r, c) - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heads_must_divide_width() {
        let (store, p, mut rng) = setup(6, 3);
        let mut g = Graph::new();
        let q = g.input(random_matrix(&mut rng, 2, 6));
        assert!(matches!(
            multi_head_attention(&mut g, &store, q, q, &p, 4),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (mut store, p, mut rng) = setup(4, 11);
        let q = random_matrix(&mut rng, 2, 4);
        let kv = random_matrix(&mut rng, 3, 4);
        let target = random_matrix(&mut rng, 2, 4);
        let err = finite_diff_check(
            |g: &mut Graph, s: &ParamStore| {
                let qv = g.input(q.clone());
                let kvv = g.input(kv.clone());
                let out = multi_head_attention(g, s, qv, kvv, &p, 2)?;
                let t = g.input(target.clone());
                let prod = g.mul(out, t)?;
                Ok(g.sum(prod))
            },
            &mut store,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }
}
