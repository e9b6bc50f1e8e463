//! Differentiable function approximators for the learners: a table keyed by
//! observation id and a one-hidden-layer perceptron over encoded
//! observations. Reverse-mode gradients are written out by hand; the flat
//! parameter view exists so finite differences can check every path.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const HIDDEN_WIDTH: usize = 64;

#[derive(Debug, Clone)]
pub struct TabularNet {
    table: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpNet {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

impl MlpNet {
    fn new(in_dim: usize, hidden: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |rows: usize, cols: usize| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
        };
        Self {
            w1: layer(hidden, in_dim),
            b1: Array1::zeros(hidden),
            w2: layer(out_dim, hidden),
            b2: Array1::zeros(out_dim),
        }
    }
}

/// Policy or value head. The tabular variant reads the observation id and
/// ignores the encoding; the perceptron does the opposite.
#[derive(Debug, Clone)]
pub enum Net {
    Tabular(TabularNet),
    Mlp(MlpNet),
}

#[derive(Debug, Clone)]
pub enum NetGrads {
    Tabular(Array2<f64>),
    Mlp {
        w1: Array2<f64>,
        b1: Array1<f64>,
        w2: Array2<f64>,
        b2: Array1<f64>,
    },
}

impl Net {
    pub fn tabular(n_obs: usize, out_dim: usize) -> Self {
        Net::Tabular(TabularNet {
            table: Array2::zeros((n_obs, out_dim)),
        })
    }

    pub fn mlp(in_dim: usize, out_dim: usize, seed: u64) -> Self {
        Net::Mlp(MlpNet::new(in_dim, HIDDEN_WIDTH, out_dim, seed))
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Net::Tabular(t) => t.table.ncols(),
            Net::Mlp(m) => m.b2.len(),
        }
    }

    pub fn forward(&self, obs_id: usize, x: &[f64]) -> Array1<f64> {
        match self {
            Net::Tabular(t) => t.table.row(obs_id).to_owned(),
            Net::Mlp(m) => {
                let x = Array1::from(x.to_vec());
                let h = (m.w1.dot(&x) + &m.b1).mapv(f64::tanh);
                m.w2.dot(&h) + &m.b2
            }
        }
    }

    /// Adds d(loss)/d(params) for one observation, given d(loss)/d(output).
    pub fn accumulate_grad(
        &self,
        obs_id: usize,
        x: &[f64],
        dout: &Array1<f64>,
        grads: &mut NetGrads,
    ) {
        match (self, grads) {
            (Net::Tabular(_), NetGrads::Tabular(g)) => {
                for (j, &d) in dout.iter().enumerate() {
                    g[[obs_id, j]] += d;
                }
            }
            (Net::Mlp(m), NetGrads::Mlp { w1, b1, w2, b2 }) => {
                let x = Array1::from(x.to_vec());
                let h = (m.w1.dot(&x) + &m.b1).mapv(f64::tanh);
                for (j, &d) in dout.iter().enumerate() {
                    for (k, &hk) in h.iter().enumerate() {
                        w2[[j, k]] += d * hk;
                    }
                    b2[j] += d;
                }
                let dh = m.w2.t().dot(dout) * h.mapv(|v| 1.0 - v * v);
                for (k, &dk) in dh.iter().enumerate() {
                    for (i, &xi) in x.iter().enumerate() {
                        w1[[k, i]] += dk * xi;
                    }
                    b1[k] += dk;
                }
            }
            _ => unreachable!("grads built by zero_grads always match the net"),
        }
    }

    pub fn zero_grads(&self) -> NetGrads {
        match self {
            Net::Tabular(t) => NetGrads::Tabular(Array2::zeros(t.table.raw_dim())),
            Net::Mlp(m) => NetGrads::Mlp {
                w1: Array2::zeros(m.w1.raw_dim()),
                b1: Array1::zeros(m.b1.len()),
                w2: Array2::zeros(m.w2.raw_dim()),
                b2: Array1::zeros(m.b2.len()),
            },
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Net::Tabular(t) => t.table.len(),
            Net::Mlp(m) => m.w1.len() + m.b1.len() + m.w2.len() + m.b2.len(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Net::Tabular(t) => t.table.iter().copied().collect(),
            Net::Mlp(m) => m
                .w1
                .iter()
                .chain(m.b1.iter())
                .chain(m.w2.iter())
                .chain(m.b2.iter())
                .copied()
                .collect(),
        }
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        match self {
            Net::Tabular(t) => {
                for (dst, src) in t.table.iter_mut().zip(flat) {
                    *dst = *src;
                }
            }
            Net::Mlp(m) => {
                let mut it = flat.iter();
                for dst in m
                    .w1
                    .iter_mut()
                    .chain(m.b1.iter_mut())
                    .chain(m.w2.iter_mut())
                    .chain(m.b2.iter_mut())
                {
                    *dst = *it.next().expect("length checked above");
                }
            }
        }
        Ok(())
    }
}

impl NetGrads {
    pub fn flat(&self) -> Vec<f64> {
        match self {
            NetGrads::Tabular(g) => g.iter().copied().collect(),
            NetGrads::Mlp { w1, b1, w2, b2 } => w1
                .iter()
                .chain(b1.iter())
                .chain(w2.iter())
                .chain(b2.iter())
                .copied()
                .collect(),
        }
    }
}

/// Row softmax utilities shared by both learners.
pub fn log_softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let lse = logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    logits.mapv(|x| x - lse)
}

pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    log_softmax(logits).mapv(f64::exp)
}

pub fn entropy_of_logits(logits: &Array1<f64>) -> f64 {
    let lp = log_softmax(logits);
    -lp.iter().map(|&l| l.exp() * l).sum::<f64>()
}

/// d(entropy)/d(logit_j) = -p_j (log p_j + H).
pub fn entropy_grad_wrt_logits(logits: &Array1<f64>) -> Array1<f64> {
    let lp = log_softmax(logits);
    let h = -lp.iter().map(|&l| l.exp() * l).sum::<f64>();
    lp.mapv(|l| -l.exp() * (l + h))
}

pub fn sample_from_logits(logits: &Array1<f64>, rng: &mut ChaCha8Rng) -> usize {
    let p = softmax(logits);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (a, &pa) in p.iter().enumerate() {
        acc += pa;
        if u < acc {
            return a;
        }
    }
    p.len() - 1
}

#[derive(Debug, Clone, Copy)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn step(&self, net: &mut Net, grads: &NetGrads) {
        let mut params = net.params();
        for (p, g) in params.iter_mut().zip(grads.flat()) {
            *p -= self.lr * g;
        }
        net.set_params(&params).expect("same net, same length");
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Net, grads: &NetGrads) {
        self.t += 1;
        let mut params = net.params();
        let flat = grads.flat();
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * flat[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * flat[i] * flat[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        net.set_params(&params).expect("same net, same length");
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    pub fn step(&mut self, net: &mut Net, grads: &NetGrads) {
        match self {
            Optimizer::Sgd(o) => o.step(net, grads),
            Optimizer::Adam(o) => o.step(net, grads),
        }
    }
}

/// Central-difference check of a full analytic gradient along a random
/// direction. Returns the relative error of the directional derivative.
pub fn directional_fd_error(
    loss: &mut dyn FnMut(&mut Net) -> f64,
    net: &mut Net,
    analytic: &NetGrads,
    seed: u64,
    eps: f64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = net.n_params();
    let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
    let dir: Vec<f64> = dir.iter().map(|d| d / norm).collect();

    let base = net.params();
    let shift = |net: &mut Net, sign: f64| {
        let params: Vec<f64> = base
            .iter()
            .zip(dir.iter())
            .map(|(p, d)| p + sign * eps * d)
            .collect();
        net.set_params(&params).expect("same length");
    };
    shift(net, 1.0);
    let plus = loss(net);
    shift(net, -1.0);
    let minus = loss(net);
    net.set_params(&base).expect("same length");

    let fd = (plus - minus) / (2.0 * eps);
    let an: f64 = analytic.flat().iter().zip(dir.iter()).map(|(g, d)| g * d).sum();
    (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8)
}
