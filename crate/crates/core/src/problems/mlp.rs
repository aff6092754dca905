//! Small fully connected ReLU network with hand-written backpropagation.
//!
//! Parameters are stored flat, layer by layer: the weight matrix (row-major,
//! `out x in`) followed by the bias vector.

use rand::Rng;

use crate::error::{Error, Result};

/// At most two hidden layers.
pub const MAX_HIDDEN_LAYERS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
}

impl Mlp {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.len() > MAX_HIDDEN_LAYERS + 2 {
            return Err(Error::InvalidConfig(format!(
                "mlp layer sizes must list input, up to {MAX_HIDDEN_LAYERS} hidden layers and output; got {sizes:?}"
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "mlp layer sizes must be positive; got {sizes:?}"
            )));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Kaiming-uniform weights (bound `sqrt(6 / fan_in)`), biases drawn
    /// uniformly from `[-bias_bound, bias_bound]`.
    pub fn init_params<R: Rng>(&self, rng: &mut R, bias_bound: f64) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.param_count());
        for w in self.sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)));
            if bias_bound > 0.0 {
                params.extend((0..fan_out).map(|_| rng.random_range(-bias_bound..=bias_bound)));
            } else {
                params.extend(std::iter::repeat_n(0.0, fan_out));
            }
        }
        params
    }

    pub fn forward(&self, params: &[f64], input: &[f64], out: &mut Vec<f64>) {
        let mut act = input.to_vec();
        let mut offset = 0;
        let n_layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[offset..offset + n_in * n_out];
            let bias = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let mut next = bias.to_vec();
            for (j, z) in next.iter_mut().enumerate() {
                let row = &weights[j * n_in..(j + 1) * n_in];
                *z += row.iter().zip(&act).map(|(a, b)| a * b).sum::<f64>();
            }
            if l + 1 < n_layers {
                next.iter_mut().for_each(|z| *z = relu(*z));
            }
            act = next;
        }
        out.clear();
        out.extend_from_slice(&act);
    }

    /// Mean over `indices` of the summed squared output error. When `grad`
    /// is given it is overwritten with the gradient w.r.t. `params`.
    pub fn loss_and_grad(
        &self,
        params: &[f64],
        inputs: &[f64],
        targets: &[f64],
        indices: &[usize],
        mut grad: Option<&mut [f64]>,
    ) -> f64 {
        let n_in = self.input_dim();
        let n_out = self.output_dim();
        let n_layers = self.sizes.len() - 1;
        let scale = 1.0 / indices.len() as f64;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }

        let offsets: Vec<usize> = self
            .sizes
            .windows(2)
            .scan(0, |acc, w| {
                let start = *acc;
                *acc += w[0] * w[1] + w[1];
                Some(start)
            })
            .collect();

        let mut pre: Vec<Vec<f64>> = vec![Vec::new(); n_layers];
        let mut acts: Vec<Vec<f64>> = vec![Vec::new(); n_layers + 1];
        let mut loss = 0.0;

        for &s in indices {
            let x = &inputs[s * n_in..(s + 1) * n_in];
            let y = &targets[s * n_out..(s + 1) * n_out];

            acts[0].clear();
            acts[0].extend_from_slice(x);
            for l in 0..n_layers {
                let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
                let w = &params[offsets[l]..offsets[l] + fi * fo];
                let b = &params[offsets[l] + fi * fo..offsets[l] + fi * fo + fo];
                let z: Vec<f64> = (0..fo)
                    .map(|j| {
                        b[j] + w[j * fi..(j + 1) * fi]
                            .iter()
                            .zip(&acts[l])
                            .map(|(a, c)| a * c)
                            .sum::<f64>()
                    })
                    .collect();
                acts[l + 1] = if l + 1 < n_layers {
                    z.iter().map(|&v| relu(v)).collect()
                } else {
                    z.clone()
                };
                pre[l] = z;
            }

            let pred = &acts[n_layers];
            let mut delta: Vec<f64> = pred.iter().zip(y).map(|(p, t)| p - t).collect();
            loss += delta.iter().map(|d| d * d).sum::<f64>();

            let Some(g) = grad.as_deref_mut() else {
                continue;
            };
            delta.iter_mut().for_each(|d| *d *= 2.0 * scale);
            for l in (0..n_layers).rev() {
                let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
                let off = offsets[l];
                for j in 0..fo {
                    let dj = delta[j];
                    if dj == 0.0 {
                        continue;
                    }
                    let gw = &mut g[off + j * fi..off + (j + 1) * fi];
                    for (gk, a) in gw.iter_mut().zip(&acts[l]) {
                        *gk += dj * a;
                    }
                    g[off + fi * fo + j] += dj;
                }
                if l > 0 {
                    let w = &params[off..off + fi * fo];
                    let mut prev = vec![0.0; fi];
                    for j in 0..fo {
                        let dj = delta[j];
                        for (k, p) in prev.iter_mut().enumerate() {
                            *p += w[j * fi + k] * dj;
                        }
                    }
                    for (p, z) in prev.iter_mut().zip(&pre[l - 1]) {
                        // subgradient of ReLU at exactly 0 is taken as 0
                        if *z <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        loss * scale
    }
}

fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}
