use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
}

/// Fully connected ReLU network; weights stored row-major (out x in)
/// followed by the bias, layer after layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub output: Activation,
    #[serde(skip)]
    pub params: Vec<f64>,
}

/// Per-layer activations of one batched forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    pub batch: usize,
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape has an output")
    }
}

impl Mlp {
    pub fn num_params_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` init.
    pub fn new(sizes: Vec<usize>, output: Activation, rng: &mut SplitMix64) -> Self {
        let mut params = Vec::with_capacity(Self::num_params_for(&sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                params.push(rng.uniform(-bound, bound));
            }
        }
        Self { sizes, output, params }
    }

    pub fn num_params(&self) -> usize {
        Self::num_params_for(&self.sizes)
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> Tape {
        debug_assert_eq!(x.len(), batch * self.input_dim());
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let input = &acts[l];
            let mut out = vec![0.0; batch * fan_out];
            for r in 0..batch {
                let xr = &input[r * fan_in..(r + 1) * fan_in];
                let yr = &mut out[r * fan_out..(r + 1) * fan_out];
                for (o, y) in yr.iter_mut().enumerate() {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    *y = b[o] + row.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            if l + 1 < n_layers {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            } else if self.output == Activation::Tanh {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        Tape { batch, acts }
    }

    /// Accumulates parameter gradients into `grads` (when given) and returns
    /// the gradient with respect to the input.
    pub fn backward(&self, tape: &Tape, d_out: &[f64], mut grads: Option<&mut [f64]>) -> Vec<f64> {
        let batch = tape.batch;
        let n_layers = self.sizes.len() - 1;
        let mut delta = d_out.to_vec();
        if self.output == Activation::Tanh {
            for (d, y) in delta.iter_mut().zip(tape.output()) {
                *d *= 1.0 - y * y;
            }
        }
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for l in 0..n_layers {
            offsets.push(offset);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let w = &self.params[off..off + fan_in * fan_out];
            let input = &tape.acts[l];
            if let Some(g) = grads.as_deref_mut() {
                let (gw, gb) = g[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                for r in 0..batch {
                    let xr = &input[r * fan_in..(r + 1) * fan_in];
                    for o in 0..fan_out {
                        let d = delta[r * fan_out + o];
                        if d == 0.0 {
                            continue;
                        }
                        gb[o] += d;
                        for (gwi, xi) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(xr) {
                            *gwi += d * xi;
                        }
                    }
                }
            }
            let mut d_in = vec![0.0; batch * fan_in];
            for r in 0..batch {
                let dr = &mut d_in[r * fan_in..(r + 1) * fan_in];
                for o in 0..fan_out {
                    let d = delta[r * fan_out + o];
                    if d == 0.0 {
                        continue;
                    }
                    for (di, wi) in dr.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                        *di += d * wi;
                    }
                }
            }
            if l > 0 {
                for (d, a) in d_in.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = d_in;
        }
        delta
    }

    /// `self <- (1 - tau) * self + tau * source`.
    pub fn soft_update(&mut self, source: &Mlp, tau: f64) {
        for (p, s) in self.params.iter_mut().zip(&source.params) {
            *p += tau * (s - *p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss(m: &Mlp, x: &[f64], batch: usize) -> f64 {
        m.forward(x, batch).output().iter().enumerate().map(|(i, y)| (i as f64 + 1.0) * y).sum()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for output in [Activation::Identity, Activation::Tanh] {
            let mut rng = SplitMix64::new(5);
            let mut m = Mlp::new(vec![3, 6, 5, 2], output, &mut rng);
            let x: Vec<f64> = (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let tape = m.forward(&x, 4);
            let d_out: Vec<f64> = (0..8).map(|i| i as f64 + 1.0).collect();
            let mut grads = vec![0.0; m.num_params()];
            let d_in = m.backward(&tape, &d_out, Some(&mut grads));
            let h = 1e-6;
            for i in 0..m.num_params() {
                let orig = m.params[i];
                m.params[i] = orig + h;
                let up = loss(&m, &x, 4);
                m.params[i] = orig - h;
                let down = loss(&m, &x, 4);
                m.params[i] = orig;
                assert!(((up - down) / (2.0 * h) - grads[i]).abs() < 1e-6, "param {i}");
            }
            for i in 0..x.len() {
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let fd = (loss(&m, &xp, 4) - loss(&m, &xm, 4)) / (2.0 * h);
                assert!((fd - d_in[i]).abs() < 1e-6, "input {i}");
            }
        }
    }

    #[test]
    fn soft_update_interpolates() {
        let mut rng = SplitMix64::new(1);
        let a = Mlp::new(vec![2, 3, 1], Activation::Identity, &mut rng);
        let mut b = a.clone();
        b.params.iter_mut().for_each(|p| *p = 0.0);
        b.soft_update(&a, 0.25);
        for (x, y) in b.params.iter().zip(&a.params) {
            assert!((x - 0.25 * y).abs() < 1e-15);
        }
    }
}
