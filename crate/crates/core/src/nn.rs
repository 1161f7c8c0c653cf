//! Dense multilayer perceptrons.
//!
//! All learned functions in the crate (energy terms, dissipation factors,
//! input gains, residuals, encoder/decoder, baseline transition) are MLPs
//! with tanh hidden layers and a linear output layer. Weights start from a
//! zero-mean normal with scale `1/sqrt(fan_in)`; biases start at zero. The
//! draw order is fixed (layers in order, each weight matrix row-major), so a
//! seed pins the weights exactly.
//!
//! [`Mlp::input_gradient`] computes `∇ₓ y` for scalar-output nets by running
//! the reverse sweep `W₁ᵀ D₁ W₂ᵀ D₂ ⋯ W_Lᵀ` with `D_l = diag(1 − h_l²)`.
//! That closed form is what the energy module exposes as exact gradients;
//! training-time parameter gradients are a separate concern handled on the
//! autodiff tape.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// One dense layer, `y = W x + b`, weights row-major `[out_dim × in_dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, 1.0 / (in_dim as f64).sqrt()).expect("valid std");
        let w = (0..in_dim * out_dim).map(|_| normal.sample(rng)).collect();
        Dense {
            w,
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.in_dim);
        out.clear();
        out.reserve(self.out_dim);
        // Accumulate the product first and add the bias last — the same
        // association the differentiation tape uses, so both evaluation
        // paths agree bit for bit.
        for r in 0..self.out_dim {
            let row = &self.w[r * self.in_dim..(r + 1) * self.in_dim];
            let mut acc = 0.0;
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc + self.b[r]);
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Tanh-hidden, linear-output MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Post-activation hidden states from a forward pass, needed for the
/// reverse gradient sweep.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `hidden[l]` = tanh activations after hidden layer `l`.
    pub hidden: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl Mlp {
    /// Builds an MLP for the given layer sizes `[in, h₁, …, out]`.
    pub fn init(dims: &[usize], rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output dims");
        assert!(dims.iter().all(|&d| d > 0), "zero-width layer");
        let layers = dims
            .windows(2)
            .map(|w| Dense::init(w[0], w[1], rng))
            .collect();
        Mlp { layers }
    }

    /// Convenience: `[in] + hidden + [out]`.
    pub fn init_with_hidden(
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(in_dim);
        dims.extend_from_slice(hidden);
        dims.push(out_dim);
        Self::init(&dims, rng)
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().expect("nonempty").in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Layer sizes `[in, h₁, …, out]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.layers.iter().map(|l| l.in_dim).collect();
        d.push(self.out_dim());
        d
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i != last {
                for v in next.iter_mut() {
                    *v = v.tanh();
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Forward pass keeping hidden activations for [`Self::input_gradient`].
    pub fn forward_trace(&self, x: &[f64]) -> ForwardTrace {
        let mut hidden = Vec::with_capacity(self.layers.len() - 1);
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i != last {
                for v in next.iter_mut() {
                    *v = v.tanh();
                }
                hidden.push(next.clone());
            }
            std::mem::swap(&mut cur, &mut next);
        }
        ForwardTrace {
            hidden,
            output: cur,
        }
    }

    /// `∇ₓ y` for a scalar-output net, from a cached forward trace.
    pub fn input_gradient(&self, trace: &ForwardTrace) -> Vec<f64> {
        assert_eq!(self.out_dim(), 1, "input_gradient needs scalar output");
        self.output_vjp(trace, &[1.0])
    }

    /// Vector-Jacobian product `(∂y/∂x)ᵀ v` from a cached forward trace.
    /// Works for any output width; cost is one reverse sweep.
    pub fn output_vjp(&self, trace: &ForwardTrace, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.out_dim());
        let last = self.layers.len() - 1;
        let mut u = {
            let layer = &self.layers[last];
            let mut u = vec![0.0; layer.in_dim];
            for (r, vr) in v.iter().enumerate() {
                let row = &layer.w[r * layer.in_dim..(r + 1) * layer.in_dim];
                for (ui, wi) in u.iter_mut().zip(row) {
                    *ui += wi * vr;
                }
            }
            u
        };
        for l in (0..last).rev() {
            // Through the tanh: multiply by 1 − h².
            for (ui, hi) in u.iter_mut().zip(&trace.hidden[l]) {
                *ui *= 1.0 - hi * hi;
            }
            let layer = &self.layers[l];
            let mut prev = vec![0.0; layer.in_dim];
            for (r, ur) in u.iter().enumerate() {
                let row = &layer.w[r * layer.in_dim..(r + 1) * layer.in_dim];
                for (pi, wi) in prev.iter_mut().zip(row) {
                    *pi += wi * ur;
                }
            }
            u = prev;
        }
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    /// Central finite difference of a scalar function.
    fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            xp[i] = x[i] + eps;
            let fp = f(&xp);
            xp[i] = x[i] - eps;
            let fm = f(&xp);
            xp[i] = x[i];
            g[i] = (fp - fm) / (2.0 * eps);
        }
        g
    }

    #[test]
    fn param_count_hand_check() {
        // dims [3, 5, 2]: 3·5+5 + 5·2+2 = 32.
        let mut r = rng::seeded(0);
        let net = Mlp::init(&[3, 5, 2], &mut r);
        assert_eq!(net.param_count(), 32);
        assert_eq!(net.dims(), vec![3, 5, 2]);
    }

    #[test]
    fn init_is_deterministic_and_biases_zero() {
        let a = Mlp::init(&[2, 8, 1], &mut rng::seeded(7));
        let b = Mlp::init(&[2, 8, 1], &mut rng::seeded(7));
        assert_eq!(a, b);
        for l in &a.layers {
            assert!(l.b.iter().all(|&x| x == 0.0));
        }
        let c = Mlp::init(&[2, 8, 1], &mut rng::seeded(8));
        assert_ne!(a, c);
    }

    #[test]
    fn linear_net_is_exactly_affine() {
        let mut net = Mlp::init(&[2, 2], &mut rng::seeded(0));
        net.layers[0].w = vec![1.0, 0.0, 0.0, 1.0];
        net.layers[0].b = vec![0.5, -0.5];
        let y = net.forward(&[3.0, 4.0]);
        assert_eq!(y, vec![3.5, 3.5]);
    }

    #[test]
    fn input_gradient_matches_finite_difference() {
        let net = Mlp::init(&[4, 16, 16, 1], &mut rng::seeded(11));
        let mut r = rng::seeded(12);
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| rand::Rng::gen_range(&mut r, -2.0..2.0)).collect();
            let trace = net.forward_trace(&x);
            let g = net.input_gradient(&trace);
            let g_fd = fd_grad(|x| net.forward(x)[0], &x, 1e-5);
            for (a, b) in g.iter().zip(&g_fd) {
                assert!(
                    (a - b).abs() <= 1e-8 * (1.0 + a.abs()),
                    "gradient {a} vs finite difference {b}"
                );
            }
        }
    }

    #[test]
    fn vjp_matches_finite_difference_for_vector_output() {
        let net = Mlp::init(&[3, 8, 2], &mut rng::seeded(21));
        let x = [0.3, -0.7, 1.1];
        let v = [0.9, -1.4];
        let trace = net.forward_trace(&x);
        let vjp = net.output_vjp(&trace, &v);
        let g_fd = fd_grad(
            |x| {
                let y = net.forward(x);
                v[0] * y[0] + v[1] * y[1]
            },
            &x,
            1e-5,
        );
        for (a, b) in vjp.iter().zip(&g_fd) {
            assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()));
        }
    }
}
