use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{AttentionParams, Checkpoint, LinearParams, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Head hyperparameters and ablation switches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    /// Feature width `D`; detection features must have this length.
    pub dim: usize,
    pub heads: usize,
    /// Inner width of both feed-forward blocks; `None` means `2 * dim`.
    pub ffn_dim: Option<usize>,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Drop the transformer: `G = (Q W + b) Fᵀ / √D`.
    pub dot_product_only: bool,
    /// Self-attention among the queries before each cross-attention.
    pub decoder_self_attention: bool,
    /// Add a sinusoidal embedding of the frame offset inside the window to
    /// features and queries.
    pub positional_embedding: bool,
    /// Start the score projection at zero, so that every untrained score
    /// is 0.
    pub zero_init_score: bool,
    pub init_seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            dim: 256,
            heads: 8,
            ffn_dim: None,
            encoder_layers: 1,
            decoder_layers: 1,
            dot_product_only: false,
            decoder_self_attention: false,
            positional_embedding: false,
            zero_init_score: true,
            init_seed: 0,
        }
    }
}

impl HeadConfig {
    pub fn ffn_width(&self) -> usize {
        self.ffn_dim.unwrap_or(2 * self.dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.ffn_width() == 0 {
            return Err(Error::Config("head widths must be positive".into()));
        }
        if self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "dim {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        Ok(())
    }

    fn effective_layers(&self) -> (usize, usize) {
        if self.dot_product_only {
            (0, 0)
        } else {
            (self.encoder_layers, self.decoder_layers)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeedForward {
    pub inner: LinearParams,
    pub outer: LinearParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderLayer {
    pub attention: AttentionParams,
    pub ffn: FeedForward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoderLayer {
    pub self_attention: Option<AttentionParams>,
    /// Value projection shared with the key projection.
    pub cross_attention: AttentionParams,
    pub ffn: FeedForward,
}

/// Parameters of the association head together with the layout that names
/// them.
#[derive(Clone, Debug)]
pub struct GtrParams {
    pub config: HeadConfig,
    pub store: ParamStore,
    pub encoder: Vec<EncoderLayer>,
    pub decoder: Vec<DecoderLayer>,
    /// Applied to the decoded queries only; encoded features enter the score
    /// product unprojected.
    pub score: LinearParams,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn linear(
        &mut self,
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        zero: bool,
    ) -> Result<LinearParams> {
        let w = if zero {
            Tensor::zeros(&[fan_in, fan_out])
        } else {
            let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
            let data = (0..fan_in * fan_out).map(|_| normal.sample(&mut self.rng)).collect();
            Tensor::matrix(fan_in, fan_out, data)?
        };
        let weight = store.insert(format!("{name}.weight"), w)?;
        let bias = if bias {
            Some(store.insert(format!("{name}.bias"), Tensor::zeros(&[fan_out]))?)
        } else {
            None
        };
        Ok(LinearParams { weight, bias })
    }

    fn ffn(&mut self, store: &mut ParamStore, name: &str, dim: usize, inner: usize) -> Result<FeedForward> {
        Ok(FeedForward {
            inner: self.linear(store, &format!("{name}.ffn.inner"), dim, inner, true, false)?,
            outer: self.linear(store, &format!("{name}.ffn.outer"), inner, dim, true, false)?,
        })
    }

    fn self_attention(&mut self, store: &mut ParamStore, name: &str, dim: usize) -> Result<AttentionParams> {
        Ok(AttentionParams {
            query: self.linear(store, &format!("{name}.query"), dim, dim, true, false)?,
            key: self.linear(store, &format!("{name}.key"), dim, dim, false, false)?,
            value: Some(self.linear(store, &format!("{name}.value"), dim, dim, true, false)?),
        })
    }
}

impl GtrParams {
    pub fn new(config: HeadConfig) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let inner = config.ffn_width();
        let (n_enc, n_dec) = config.effective_layers();
        let mut store = ParamStore::new();
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(config.init_seed),
        };

        let mut encoder = Vec::with_capacity(n_enc);
        for l in 0..n_enc {
            let name = format!("encoder.{l}");
            encoder.push(EncoderLayer {
                attention: init.self_attention(&mut store, &format!("{name}.self_attn"), d)?,
                ffn: init.ffn(&mut store, &name, d, inner)?,
            });
        }
        let mut decoder = Vec::with_capacity(n_dec);
        for l in 0..n_dec {
            let name = format!("decoder.{l}");
            let self_attention = if config.decoder_self_attention {
                Some(init.self_attention(&mut store, &format!("{name}.self_attn"), d)?)
            } else {
                None
            };
            let cross_attention = AttentionParams {
                query: init.linear(&mut store, &format!("{name}.cross_attn.query"), d, d, true, false)?,
                key: init.linear(&mut store, &format!("{name}.cross_attn.key"), d, d, true, false)?,
                value: None,
            };
            decoder.push(DecoderLayer {
                self_attention,
                cross_attention,
                ffn: init.ffn(&mut store, &name, d, inner)?,
            });
        }
        let score = init.linear(&mut store, "score", d, d, true, config.zero_init_score)?;
        Ok(Self {
            config,
            store,
            encoder,
            decoder,
            score,
        })
    }

    /// Every linear map of the head, in construction order.
    pub fn linear_layers(&self) -> Vec<LinearParams> {
        let mut out = Vec::new();
        let attn = |a: &AttentionParams, out: &mut Vec<LinearParams>| {
            out.push(a.query);
            out.push(a.key);
            if let Some(v) = a.value {
                out.push(v);
            }
        };
        for l in &self.encoder {
            attn(&l.attention, &mut out);
            out.extend([l.ffn.inner, l.ffn.outer]);
        }
        for l in &self.decoder {
            if let Some(sa) = &l.self_attention {
                attn(sa, &mut out);
            }
            attn(&l.cross_attention, &mut out);
            out.extend([l.ffn.inner, l.ffn.outer]);
        }
        out.push(self.score);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Ok(self.store.to_checkpoint(serde_json::to_value(&self.config)?))
    }

    /// Rebuilds the layout from the stored head configuration and loads the
    /// arrays into it.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config: HeadConfig = serde_json::from_value(ckpt.metadata.clone())
            .map_err(|e| Error::Checkpoint(format!("bad head configuration: {e}")))?;
        let mut params = Self::new(config)?;
        params.store.load_checkpoint(ckpt)?;
        Ok(params)
    }
}
