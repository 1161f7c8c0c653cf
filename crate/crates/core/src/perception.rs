//! Maps between observation space and phase space.
//!
//! The encoder reads a short window of recent observations — two frames by
//! default, the minimum that makes momentum-like components identifiable
//! from position-like readouts — and produces a phase state. The decoder
//! maps a phase state back to an observation mean; its predictive
//! distribution is Gaussian with unit scale, so maximizing likelihood is
//! minimizing squared error.
//!
//! Both are plain feed-forward nets and both are pure: same parameters,
//! same input, same output. No claim is made that the learned coordinates
//! align with the true ones — evaluation happens in observation space.

use crate::error::HwmError;
use crate::nn::Mlp;
use crate::phase::FlatState;
use crate::Result;
use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Default observation-window length.
pub const DEFAULT_WINDOW: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub net: Mlp,
    /// Number of observation rows consumed per encoding.
    pub window: usize,
    pub obs_dim: usize,
}

impl Encoder {
    /// Net maps the flattened window `k·d_o` to a phase state `2n`.
    pub fn init(
        window: usize,
        obs_dim: usize,
        state_dim: usize,
        hidden: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if window == 0 || obs_dim == 0 {
            return Err(HwmError::InvalidParams(
                "encoder window and observation width must be positive".into(),
            ));
        }
        if state_dim == 0 || state_dim % 2 != 0 {
            return Err(HwmError::InvalidParams(format!(
                "phase dimension must be positive and even, got {state_dim}"
            )));
        }
        let net = Mlp::init_with_hidden(window * obs_dim, hidden, state_dim, rng);
        Ok(Encoder {
            net,
            window,
            obs_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.net.out_dim()
    }

    /// Flattens the window row-major (oldest row first) and runs the net.
    pub fn encode(&self, window: ArrayView2<f64>) -> Result<FlatState> {
        if window.nrows() != self.window || window.ncols() != self.obs_dim {
            return Err(HwmError::WindowLengthMismatch {
                expected: self.window,
                got: window.nrows(),
            });
        }
        let mut input = Vec::with_capacity(self.window * self.obs_dim);
        for row in window.rows() {
            input.extend(row.iter());
        }
        FlatState::new(self.net.forward(&input))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub net: Mlp,
}

impl Decoder {
    /// Net maps a phase state `2n` to an observation mean `d_o`.
    pub fn init(state_dim: usize, hidden: &[usize], obs_dim: usize, rng: &mut impl Rng) -> Self {
        Decoder {
            net: Mlp::init_with_hidden(state_dim, hidden, obs_dim, rng),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.net.out_dim()
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.net.in_dim() {
            return Err(HwmError::DimensionMismatch {
                context: "decode".into(),
                expected: self.net.in_dim(),
                got: z.len(),
            });
        }
        Ok(self.net.forward(z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::{array, Array2};

    #[test]
    fn zero_weight_encoder_maps_everything_to_the_origin() {
        let mut e = Encoder::init(2, 3, 4, &[8], &mut rng::seeded(0)).unwrap();
        for layer in e.net.layers.iter_mut() {
            layer.w.iter_mut().for_each(|w| *w = 0.0);
        }
        let w1 = array![[1.0, -2.0, 3.0], [0.5, 0.0, -0.5]];
        let w2 = array![[100.0, 100.0, 100.0], [-7.0, 2.0, 0.1]];
        assert_eq!(e.encode(w1.view()).unwrap().as_slice(), &[0.0; 4]);
        assert_eq!(e.encode(w2.view()).unwrap().as_slice(), &[0.0; 4]);
    }

    #[test]
    fn encoder_rejects_misshapen_windows() {
        let e = Encoder::init(2, 3, 4, &[8], &mut rng::seeded(0)).unwrap();
        let short = Array2::<f64>::zeros((1, 3));
        assert_eq!(
            e.encode(short.view()).unwrap_err(),
            HwmError::WindowLengthMismatch {
                expected: 2,
                got: 1
            }
        );
        let wide = Array2::<f64>::zeros((2, 4));
        assert!(e.encode(wide.view()).is_err());
    }

    #[test]
    fn repeated_frames_still_encode_deterministically() {
        let e = Encoder::init(2, 3, 2, &[8], &mut rng::seeded(1)).unwrap();
        let w = array![[0.3, -0.1, 0.9], [0.3, -0.1, 0.9]];
        let a = e.encode(w.view()).unwrap();
        let b = e.encode(w.view()).unwrap();
        assert_eq!(a, b);
        assert!(a.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_weight_decoder_emits_its_bias() {
        let mut d = Decoder::init(4, &[8], 3, &mut rng::seeded(2));
        for layer in d.net.layers.iter_mut() {
            layer.w.iter_mut().for_each(|w| *w = 0.0);
        }
        let last = d.net.layers.len() - 1;
        d.net.layers[last].b = vec![0.1, -0.2, 0.3];
        assert_eq!(d.decode(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.1, -0.2, 0.3]);
    }

    #[test]
    fn identity_decoder_reproduces_the_state() {
        // Single linear layer with W = I, b = 0.
        let mut d = Decoder::init(2, &[], 2, &mut rng::seeded(0));
        d.net.layers[0].w = vec![1.0, 0.0, 0.0, 1.0];
        d.net.layers[0].b = vec![0.0, 0.0];
        let z = [0.42, -1.7];
        assert_eq!(d.decode(&z).unwrap(), vec![0.42, -1.7]);
    }

    #[test]
    fn decoder_checks_state_dimension() {
        let d = Decoder::init(4, &[8], 3, &mut rng::seeded(0));
        assert!(d.decode(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn encoder_validates_construction() {
        assert!(Encoder::init(0, 3, 4, &[], &mut rng::seeded(0)).is_err());
        assert!(Encoder::init(2, 3, 3, &[], &mut rng::seeded(0)).is_err());
    }
}
