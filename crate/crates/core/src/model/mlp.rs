//! Fully connected ReLU network with a single sigmoid output, trained with
//! Adam on binary cross-entropy.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// One affine layer; `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.biases[o];
            out.push(z);
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Numerically stable `log(1 + e^z)`.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit against a 0/1 target.
pub fn bce_from_logit(logit: f64, target: f64) -> f64 {
    softplus(logit) - target * logit
}

/// Activations kept for backprop: `pre[l]` are layer-l pre-activations,
/// `post[l]` its inputs (`post[0]` is the network input).
#[derive(Debug, Default)]
pub struct Trace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Mlp {
    /// He-normal hidden weights, Glorot-normal output weights, zero biases.
    pub fn init<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let sd = if l + 1 == n {
                    (2.0 / (fan_in + fan_out) as f64).sqrt()
                } else {
                    (2.0 / fan_in as f64).sqrt()
                };
                let dist = Normal::new(0.0, sd).expect("finite sd");
                let mut layer = Dense::zeros(fan_in, fan_out);
                layer.weights.iter_mut().for_each(|w| *w = dist.sample(rng));
                layer
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let mut trace = Trace::default();
        self.forward_traced(x, &mut trace)
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    fn forward_traced(&self, x: &[f64], trace: &mut Trace) -> f64 {
        let n = self.layers.len();
        trace.pre.resize_with(n, Vec::new);
        trace.post.resize_with(n, Vec::new);
        trace.post[0].clear();
        trace.post[0].extend_from_slice(x);
        for l in 0..n {
            let (pre, post) = (&mut trace.pre, &mut trace.post);
            self.layers[l].forward(&post[l], &mut pre[l]);
            if l + 1 < n {
                let next = &mut post[l + 1];
                next.clear();
                next.extend(pre[l].iter().map(|&z| z.max(0.0)));
            }
        }
        trace.pre[n - 1][0]
    }

    /// Adds the BCE gradient for one example into `grad` (flat, in
    /// [`Mlp::params`] order) and returns the example's loss.
    pub fn accumulate_gradient(&self, x: &[f64], target: f64, trace: &mut Trace, grad: &mut [f64]) -> f64 {
        let logit = self.forward_traced(x, trace);
        let loss = bce_from_logit(logit, target);
        let mut delta = vec![sigmoid(logit) - target];
        let offsets = self.offsets();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.post[l];
            let base = offsets[l];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[base + o * layer.inputs..base + (o + 1) * layer.inputs];
                for (g, &v) in row.iter_mut().zip(input) {
                    *g += d * v;
                }
                grad[base + layer.weights.len() + o] += d;
            }
            if l > 0 {
                let prev_pre = &trace.pre[l - 1];
                let mut next = vec![0.0; layer.inputs];
                for (i, n) in next.iter_mut().enumerate() {
                    if prev_pre[i] > 0.0 {
                        *n = (0..layer.outputs)
                            .map(|o| layer.weights[o * layer.inputs + i] * delta[o])
                            .sum();
                    }
                }
                delta = next;
            }
        }
        loss
    }

    /// Flat gradient of the loss for one example.
    pub fn gradient(&self, x: &[f64], target: f64) -> Vec<f64> {
        let mut grad = vec![0.0; self.param_count()];
        self.accumulate_gradient(x, target, &mut Trace::default(), &mut grad);
        grad
    }

    pub fn loss(&self, x: &[f64], target: f64) -> f64 {
        bce_from_logit(self.logit(x), target)
    }

    fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.layers
            .iter()
            .map(|l| {
                let o = acc;
                acc += l.param_count();
                o
            })
            .collect()
    }

    /// Mutable reference to parameter `k` in flat order.
    pub fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for layer in &mut self.layers {
            if k < layer.weights.len() {
                return &mut layer.weights[k];
            }
            k -= layer.weights.len();
            if k < layer.biases.len() {
                return &mut layer.biases[k];
            }
            k -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    fn apply(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut k = 0;
        for layer in &mut self.layers {
            for p in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                f(k, p);
                k += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grad: &[f64]) {
        self.t += 1;
        let c = self.cfg;
        let bias1 = 1.0 - c.beta1.powi(self.t);
        let bias2 = 1.0 - c.beta2.powi(self.t);
        let (m, v) = (&mut self.m, &mut self.v);
        net.apply(|k, p| {
            let g = grad[k];
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
            let m_hat = m[k] / bias1;
            let v_hat = v[k] / bias2;
            *p -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stable_loss_matches_naive_formula() {
        for &z in &[-3.0, -0.1, 0.0, 0.7, 4.0] {
            let p = 1.0 / (1.0 + f64::exp(-z));
            for &y in &[0.0, 1.0] {
                let naive = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
                assert!((bce_from_logit(z, y) - naive).abs() < 1e-12);
            }
        }
        assert!(bce_from_logit(800.0, 1.0).is_finite());
        assert!(bce_from_logit(-800.0, 0.0).is_finite());
    }

    #[test]
    fn zero_network_kills_hidden_gradients() {
        let net = Mlp::zeros(&[3, 4, 2, 1]);
        let g = net.gradient(&[0.0, 0.0, 0.0], 1.0);
        let n = g.len();
        // Everything but the output bias sits behind a dead ReLU or multiplies a zero activation.
        assert!(g[..n - 1].iter().all(|&v| v == 0.0));
        assert_eq!(g[n - 1], -0.5);
    }

    #[test]
    fn param_order_matches_gradient_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::init(&[2, 3, 1], &mut rng);
        let flat = net.params();
        for (k, &v) in flat.iter().enumerate() {
            assert_eq!(*net.param_mut(k), v);
        }
        assert_eq!(flat.len(), net.param_count());
        assert_eq!(net.sizes(), vec![2, 3, 1]);
    }
}
