//! Multiplicative Gabor filter network with hand-written backpropagation.
//!
//! Layer `l` has `hidden` Gabor units
//! `g_j(x) = exp(−γ_j/2 · ‖x − μ_j‖²) · sin(⟨ω_j, x⟩ + φ_j)`.
//! Features compose multiplicatively:
//!
//! ```text
//! z_0 = g_0(x)
//! z_l = (W_l z_{l−1} + b_l) ⊙ g_l(x)       l = 1 .. L−1
//! h   = V z_{L−1} + c                       (latent, width `latent`)
//! y   = uᵀ h + e
//! ```
//!
//! All trainable values live in one flat vector; the concentrations `γ` are
//! sampled at initialization and kept fixed.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

pub const IN_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub hidden: usize,
    pub latent: usize,
    pub layers: usize,
}

/// Offsets of each parameter block inside the flat vector.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    /// Per filter layer: (omega, phi, mu).
    filters: Vec<(usize, usize, usize)>,
    /// Per linear layer `l ≥ 1`: (weight, bias).
    linears: Vec<(usize, usize)>,
    latent_w: usize,
    latent_b: usize,
    readout_w: usize,
    readout_b: usize,
    total: usize,
}

impl Layout {
    fn new(s: NetworkShape) -> Self {
        let mut off = 0;
        let mut take = |n: usize| {
            let at = off;
            off += n;
            at
        };
        let filters = (0..s.layers)
            .map(|_| (take(s.hidden * IN_DIM), take(s.hidden), take(s.hidden * IN_DIM)))
            .collect();
        let linears = (1..s.layers).map(|_| (take(s.hidden * s.hidden), take(s.hidden))).collect();
        let latent_w = take(s.latent * s.hidden);
        let latent_b = take(s.latent);
        let readout_w = take(s.latent);
        let readout_b = take(1);
        Self { filters, linears, latent_w, latent_b, readout_w, readout_b, total: off }
    }
}

/// Response of one Gabor unit: returns `(envelope, sin θ, cos θ)`.
#[inline]
fn gabor_unit(x: [f64; 2], omega: &[f64], phi: f64, mu: &[f64], gamma: f64) -> (f64, f64, f64) {
    let d0 = x[0] - mu[0];
    let d1 = x[1] - mu[1];
    let envelope = (-0.5 * gamma * (d0 * d0 + d1 * d1)).exp();
    let theta = omega[0] * x[0] + omega[1] * x[1] + phi;
    let (s, c) = theta.sin_cos();
    (envelope, s, c)
}

/// A standalone Gabor filter bank, one row per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborLayer {
    pub omega: Vec<[f64; 2]>,
    pub phi: Vec<f64>,
    pub mu: Vec<[f64; 2]>,
    pub gamma: Vec<f64>,
}

impl GaborLayer {
    pub fn response(&self, x: [f64; 2]) -> Vec<f64> {
        (0..self.phi.len())
            .map(|j| {
                let (e, s, _) = gabor_unit(x, &self.omega[j], self.phi[j], &self.mu[j], self.gamma[j]);
                e * s
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaborNet {
    shape: NetworkShape,
    params: Vec<f64>,
    /// Fixed concentrations, `layers × hidden`.
    gamma: Vec<f64>,
    #[serde(skip, default = "Layout::placeholder")]
    layout: Layout,
}

impl Layout {
    fn placeholder() -> Self {
        Layout::new(NetworkShape { hidden: 0, latent: 0, layers: 0 })
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
struct Trace {
    x: [f64; 2],
    /// Per layer: envelope, sin, cos of each unit.
    env: Vec<Vec<f64>>,
    sin: Vec<Vec<f64>>,
    cos: Vec<Vec<f64>>,
    /// Per linear layer `l ≥ 1`: pre-activation `W z + b`.
    pre: Vec<Vec<f64>>,
    /// Features `z_l`.
    z: Vec<Vec<f64>>,
    h: Vec<f64>,
    y: f64,
}

impl GaborNet {
    /// Random initialization.
    ///
    /// Frequencies are uniform on `±input_scale/(l+1)`, phases on `±π`,
    /// centres on `[−1, 1]²`; linear maps are uniform on `±1/√fan_in`.
    /// Concentrations follow `Gamma(shape = alpha, rate = alpha)`, or are all
    /// one when `alpha == 0`.
    pub fn init(shape: NetworkShape, input_scale: f64, alpha: f64, rng: &mut impl Rng) -> Self {
        assert!(shape.hidden > 0 && shape.latent > 0 && shape.layers > 0, "empty network shape");
        let layout = Layout::new(shape);
        let mut params = vec![0.0; layout.total];
        fn uniform(slice: &mut [f64], bound: f64, rng: &mut impl Rng) {
            for v in slice {
                *v = rng.random_range(-bound..=bound);
            }
        }
        for (l, &(omega, phi, mu)) in layout.filters.iter().enumerate() {
            let h = shape.hidden;
            uniform(&mut params[omega..omega + h * IN_DIM], input_scale / (l as f64 + 1.0), rng);
            uniform(&mut params[phi..phi + h], std::f64::consts::PI, rng);
            uniform(&mut params[mu..mu + h * IN_DIM], 1.0, rng);
        }
        let inv_sqrt = |n: usize| 1.0 / (n as f64).sqrt();
        for &(w, b) in &layout.linears {
            let h = shape.hidden;
            uniform(&mut params[w..w + h * h], inv_sqrt(h), rng);
            uniform(&mut params[b..b + h], inv_sqrt(h), rng);
        }
        uniform(&mut params[layout.latent_w..layout.latent_w + shape.latent * shape.hidden], inv_sqrt(shape.hidden), rng);
        uniform(&mut params[layout.latent_b..layout.latent_b + shape.latent], inv_sqrt(shape.hidden), rng);
        uniform(&mut params[layout.readout_w..layout.readout_w + shape.latent], inv_sqrt(shape.latent), rng);
        uniform(&mut params[layout.readout_b..layout.readout_b + 1], inv_sqrt(shape.latent), rng);

        let n_gamma = shape.layers * shape.hidden;
        let gamma = if alpha > 0.0 {
            let dist = Gamma::new(alpha, 1.0 / alpha).expect("positive gamma parameters");
            (0..n_gamma).map(|_| dist.sample(rng)).collect()
        } else {
            vec![1.0; n_gamma]
        };
        Self { shape, params, gamma, layout }
    }

    /// Rebuilds a network from stored parts.
    pub fn from_parts(shape: NetworkShape, params: Vec<f64>, gamma: Vec<f64>) -> Option<Self> {
        let layout = Layout::new(shape);
        (params.len() == layout.total && gamma.len() == shape.layers * shape.hidden && gamma.iter().all(|g| *g >= 0.0))
            .then_some(Self { shape, params, gamma, layout })
    }

    pub fn shape(&self) -> NetworkShape {
        self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Mask of parameters subject to L2 decay: the linear-map weights.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.layout.total];
        let mut mark = |start: usize, len: usize| mask[start..start + len].iter_mut().for_each(|m| *m = true);
        for &(w, _) in &self.layout.linears {
            mark(w, self.shape.hidden * self.shape.hidden);
        }
        mark(self.layout.latent_w, self.shape.latent * self.shape.hidden);
        mark(self.layout.readout_w, self.shape.latent);
        mask
    }

    /// Filter bank `l` as a standalone layer.
    pub fn filter(&self, l: usize) -> GaborLayer {
        let (omega, phi, mu) = self.layout.filters[l];
        let h = self.shape.hidden;
        let p = &self.params;
        GaborLayer {
            omega: (0..h).map(|j| [p[omega + 2 * j], p[omega + 2 * j + 1]]).collect(),
            phi: p[phi..phi + h].to_vec(),
            mu: (0..h).map(|j| [p[mu + 2 * j], p[mu + 2 * j + 1]]).collect(),
            gamma: self.gamma[l * h..(l + 1) * h].to_vec(),
        }
    }

    fn forward_trace(&self, x: [f64; 2]) -> Trace {
        let s = self.shape;
        let h = s.hidden;
        let p = &self.params;
        let mut t = Trace {
            x,
            env: Vec::with_capacity(s.layers),
            sin: Vec::with_capacity(s.layers),
            cos: Vec::with_capacity(s.layers),
            pre: Vec::with_capacity(s.layers.saturating_sub(1)),
            z: Vec::with_capacity(s.layers),
            h: Vec::new(),
            y: 0.0,
        };
        for (l, &(omega, phi, mu)) in self.layout.filters.iter().enumerate() {
            let mut env = vec![0.0; h];
            let mut sin = vec![0.0; h];
            let mut cos = vec![0.0; h];
            for j in 0..h {
                let (e, sn, cs) =
                    gabor_unit(x, &p[omega + 2 * j..omega + 2 * j + 2], p[phi + j], &p[mu + 2 * j..mu + 2 * j + 2], self.gamma[l * h + j]);
                env[j] = e;
                sin[j] = sn;
                cos[j] = cs;
            }
            let z = if l == 0 {
                env.iter().zip(&sin).map(|(e, s)| e * s).collect()
            } else {
                let (w, b) = self.layout.linears[l - 1];
                let prev = &t.z[l - 1];
                let pre: Vec<f64> = (0..h)
                    .map(|i| {
                        let row = &p[w + i * h..w + (i + 1) * h];
                        p[b + i] + row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect();
                let z = (0..h).map(|i| pre[i] * env[i] * sin[i]).collect();
                t.pre.push(pre);
                z
            };
            t.env.push(env);
            t.sin.push(sin);
            t.cos.push(cos);
            t.z.push(z);
        }
        let last = t.z.last().expect("at least one layer");
        t.h = (0..s.latent)
            .map(|i| {
                let row = &p[self.layout.latent_w + i * h..self.layout.latent_w + (i + 1) * h];
                p[self.layout.latent_b + i] + row.iter().zip(last).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        t.y = p[self.layout.readout_b]
            + t.h.iter().enumerate().map(|(i, v)| p[self.layout.readout_w + i] * v).sum::<f64>();
        t
    }

    /// Network output for one normalized coordinate.
    pub fn forward(&self, x: [f64; 2]) -> f64 {
        self.forward_trace(x).y
    }

    /// Final-layer features `z_{L−1}` for a batch of normalized coordinates.
    pub fn features(&self, xs: &[[f64; 2]]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| self.forward_trace(x).z.pop().expect("at least one layer")).collect()
    }

    /// Accumulates `scale · ∂y/∂θ` into `grad`.
    fn backward(&self, t: &Trace, scale: f64, grad: &mut [f64]) {
        let s = self.shape;
        let h = s.hidden;
        let p = &self.params;
        let lay = &self.layout;

        grad[lay.readout_b] += scale;
        let mut dh = vec![0.0; s.latent];
        for i in 0..s.latent {
            grad[lay.readout_w + i] += scale * t.h[i];
            dh[i] = scale * p[lay.readout_w + i];
        }
        let last = s.layers - 1;
        let mut dz = vec![0.0; h];
        for i in 0..s.latent {
            grad[lay.latent_b + i] += dh[i];
            let base = lay.latent_w + i * h;
            for k in 0..h {
                grad[base + k] += dh[i] * t.z[last][k];
                dz[k] += dh[i] * p[base + k];
            }
        }
        for l in (0..s.layers).rev() {
            // dg: gradient w.r.t. this layer's Gabor responses.
            let dg: Vec<f64> = if l == 0 {
                dz.clone()
            } else {
                let (w, b) = lay.linears[l - 1];
                let pre = &t.pre[l - 1];
                let prev = &t.z[l - 1];
                let mut dprev = vec![0.0; h];
                let mut dg = vec![0.0; h];
                for i in 0..h {
                    let g = t.env[l][i] * t.sin[l][i];
                    let da = dz[i] * g;
                    dg[i] = dz[i] * pre[i];
                    grad[b + i] += da;
                    let base = w + i * h;
                    for k in 0..h {
                        grad[base + k] += da * prev[k];
                        dprev[k] += da * p[base + k];
                    }
                }
                dz = dprev;
                dg
            };
            let (omega, phi, mu) = lay.filters[l];
            for j in 0..h {
                let e = t.env[l][j];
                let dtheta = dg[j] * e * t.cos[l][j];
                grad[omega + 2 * j] += dtheta * t.x[0];
                grad[omega + 2 * j + 1] += dtheta * t.x[1];
                grad[phi + j] += dtheta;
                // ∂e/∂μ_k = e · γ · (x_k − μ_k)
                let de = dg[j] * t.sin[l][j] * e * self.gamma[l * h + j];
                grad[mu + 2 * j] += de * (t.x[0] - p[mu + 2 * j]);
                grad[mu + 2 * j + 1] += de * (t.x[1] - p[mu + 2 * j + 1]);
            }
        }
    }

    /// Regularized loss `mean (y − t)² + l2 · Σ w²` over the batch, and its
    /// gradient with respect to every trainable parameter.
    pub fn loss_and_grad(&self, xs: &[[f64; 2]], targets: &[f64], l2: f64) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate(xs, targets, l2, &mut grad);
        (loss, grad)
    }

    pub(crate) fn accumulate(&self, xs: &[[f64; 2]], targets: &[f64], l2: f64, grad: &mut [f64]) -> f64 {
        let inv_n = 1.0 / xs.len() as f64;
        let mut mse = 0.0;
        for (&x, &target) in xs.iter().zip(targets) {
            let t = self.forward_trace(x);
            let r = t.y - target;
            mse += r * r * inv_n;
            self.backward(&t, 2.0 * r * inv_n, grad);
        }
        let mut penalty = 0.0;
        if l2 > 0.0 {
            for (i, m) in self.decay_mask().into_iter().enumerate() {
                if m {
                    let w = self.params[i];
                    penalty += w * w;
                    grad[i] += 2.0 * l2 * w;
                }
            }
        }
        mse + l2 * penalty
    }

    /// Loss only, for finite-difference checks.
    pub fn loss(&self, xs: &[[f64; 2]], targets: &[f64], l2: f64) -> f64 {
        let mse = xs
            .iter()
            .zip(targets)
            .map(|(&x, &t)| (self.forward(x) - t).powi(2))
            .sum::<f64>()
            / xs.len() as f64;
        let penalty: f64 = self
            .decay_mask()
            .into_iter()
            .zip(&self.params)
            .filter_map(|(m, w)| m.then_some(w * w))
            .sum();
        mse + l2 * penalty
    }

    pub(crate) fn relayout(&mut self) {
        self.layout = Layout::new(self.shape);
    }
}
