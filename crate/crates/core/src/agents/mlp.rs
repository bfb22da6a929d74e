//! Fully connected network with tanh hidden layers and a linear output,
//! stored as one flat parameter vector.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Layer `l` occupies `W_l` (row-major, `out x in`) followed by `b_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Per-layer activations from a forward pass, reused by `backward`.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        }
    }

    /// Gaussian init with std `gain / sqrt(fan_in)`; `out_gain` for the last
    /// layer. Biases start at zero.
    pub fn init(sizes: &[usize], hidden_gain: f64, out_gain: f64, rng: &mut impl Rng) -> Self {
        let mut m = Self::zeros(sizes);
        let layers = sizes.len() - 1;
        let mut off = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let gain = if l + 1 == layers {
                out_gain
            } else {
                hidden_gain
            };
            let std = gain / (n_in as f64).sqrt();
            if std > 0.0 {
                let dist = Normal::new(0.0, std).expect("finite std");
                for p in &mut m.params[off..off + n_in * n_out] {
                    *p = dist.sample(rng);
                }
            }
            off += n_in * n_out + n_out;
        }
        m
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn forward(&self, x: &[f64], cache: &mut MlpCache) {
        debug_assert_eq!(x.len(), self.input_dim());
        let layers = self.sizes.len() - 1;
        cache.acts.resize(self.sizes.len(), Vec::new());
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let (before, after) = cache.acts.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            out.clear();
            for (j, row) in w.chunks_exact(n_in).enumerate() {
                let z = b[j] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                out.push(if l + 1 < layers { z.tanh() } else { z });
            }
            off += n_in * n_out + n_out;
        }
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut c = MlpCache::default();
        self.forward(x, &mut c);
        c.output().to_vec()
    }

    /// Accumulate `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offs = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offs.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offs[l];
            if l + 1 < layers {
                // through tanh: d/dz = d/da * (1 - a^2)
                for (d, a) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let input = &cache.acts[l];
            for j in 0..n_out {
                let row = &mut grad[off + j * n_in..off + (j + 1) * n_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += delta[j] * x;
                }
                grad[off + n_in * n_out + j] += delta[j];
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for (j, row) in w.chunks_exact(n_in).enumerate() {
                    for (p, wij) in prev.iter_mut().zip(row) {
                        *p += delta[j] * wij;
                    }
                }
                delta = prev;
            }
        }
    }
}
