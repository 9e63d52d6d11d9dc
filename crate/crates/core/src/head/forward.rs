use super::params::{FeedForward, GtrParams};
use super::partition::FramePartition;
use crate::autodiff::{multi_head_attention, Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Graph handles of one head evaluation.
#[derive(Clone, Copy, Debug)]
pub struct HeadOutput {
    /// `G`, queries × detections.
    pub scores: Var,
    /// Per-frame log-probabilities with the empty slot, laid out as
    /// [`Graph::group_log_softmax`] documents.
    pub log_probs: Var,
}

/// Sinusoidal embedding of a frame offset, amplitude 1.
pub fn positional_embedding(offset: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let a = offset as f64 / rate;
            if i % 2 == 0 {
                a.sin()
            } else {
                a.cos()
            }
        })
        .collect()
}

impl GtrParams {
    fn feed_forward(&self, g: &mut Graph, ffn: &FeedForward, x: Var) -> Result<Var> {
        let h = ffn.inner.apply(g, &self.store, x)?;
        let h = g.relu(h);
        ffn.outer.apply(g, &self.store, h)
    }

    /// Encoder stack over the detection features `f` (N×D): self-attention
    /// and feed-forward, each with a residual connection.
    pub fn encode(&self, g: &mut Graph, f: Var) -> Result<Var> {
        let heads = self.config.heads;
        let mut x = f;
        for layer in &self.encoder {
            let a = multi_head_attention(g, &self.store, x, x, &layer.attention, heads)?;
            x = g.add(x, a)?;
            let h = self.feed_forward(g, &layer.ffn, x)?;
            x = g.add(x, h)?;
        }
        Ok(x)
    }

    /// Decoder stack for queries `q` (M×D) against encoded features `enc`
    /// (N×D), then the score product `G = (Y W + b) encᵀ / √D` (M×N).
    pub fn decode(&self, g: &mut Graph, q: Var, enc: Var) -> Result<Var> {
        let heads = self.config.heads;
        let mut y = q;
        for layer in &self.decoder {
            if let Some(sa) = &layer.self_attention {
                let a = multi_head_attention(g, &self.store, y, y, sa, heads)?;
                y = g.add(y, a)?;
            }
            let a = multi_head_attention(g, &self.store, y, enc, &layer.cross_attention, heads)?;
            y = g.add(y, a)?;
            let h = self.feed_forward(g, &layer.ffn, y)?;
            y = g.add(y, h)?;
        }
        let s = self.score.apply(g, &self.store, y)?;
        let prod = g.matmul_nt(s, enc)?;
        Ok(g.scale(prod, 1.0 / (self.config.dim as f64).sqrt()))
    }

    /// Full evaluation on one window. `query_frames[m]` is the window frame
    /// of query `m`; it only matters with positional embeddings.
    pub fn forward(
        &self,
        g: &mut Graph,
        features: &Tensor,
        partition: &FramePartition,
        queries: &Tensor,
        query_frames: &[usize],
    ) -> Result<HeadOutput> {
        let d = self.config.dim;
        let (n, m) = (features.rows(), queries.rows());
        if features.cols() != d || queries.cols() != d {
            return Err(Error::shape(
                "head",
                format!(
                    "head width {d}, features {:?}, queries {:?}",
                    features.shape(),
                    queries.shape()
                ),
            ));
        }
        if partition.total() != n {
            return Err(Error::Contract(format!(
                "partition covers {} columns but there are {n} features",
                partition.total()
            )));
        }
        if query_frames.len() != m || query_frames.iter().any(|&t| t >= partition.num_frames()) {
            return Err(Error::Contract("query frames do not match the queries".into()));
        }

        let (f, q) = if self.config.positional_embedding {
            let last = partition.num_frames() - 1;
            let fe = add_rows(features, partition.frame_of_columns().iter().map(|&t| last - t))?;
            let qe = add_rows(queries, query_frames.iter().map(|&t| last - t))?;
            (g.input(fe), g.input(qe))
        } else {
            (g.input(features.clone()), g.input(queries.clone()))
        };
        let enc = self.encode(g, f)?;
        let scores = self.decode(g, q, enc)?;
        let log_probs = g.group_log_softmax(scores, &partition.groups())?;
        Ok(HeadOutput { scores, log_probs })
    }
}

fn add_rows(x: &Tensor, offsets: impl Iterator<Item = usize>) -> Result<Tensor> {
    let d = x.cols();
    let mut data = x.data().to_vec();
    for (r, off) in offsets.enumerate() {
        for (v, p) in data[r * d..(r + 1) * d].iter_mut().zip(positional_embedding(off, d)) {
            *v += p;
        }
    }
    Tensor::matrix(x.rows(), d, data)
}

/// Stacks equal-length rows into a matrix.
pub fn stack_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>, width: usize) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        if r.len() != width {
            return Err(Error::shape("stack_rows", format!("row of length {} in width {width}", r.len())));
        }
        data.extend_from_slice(r);
        n += 1;
    }
    Tensor::matrix(n, width, data)
}
