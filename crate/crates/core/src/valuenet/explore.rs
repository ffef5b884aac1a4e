//! Meta-policy perturbations held fixed over an exploration trajectory.
//!
//! Both act on the weights leaving the final hidden layer. Flipping the sign
//! of hidden unit `j` is the same as negating row `j` of the head.

use ndarray::{Array1, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{view2, view2_mut};
use super::ModelParams;

pub const DEFAULT_FLIP_PROB: f64 = 1.0 / 16.0;
pub const PARAM_NOISE_STD: f64 = 0.1;

/// Per-unit ±1 mask over the final hidden layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SignMask {
    pub signs: Vec<f64>,
}

impl SignMask {
    pub fn identity(hidden: usize) -> Self {
        Self { signs: vec![1.0; hidden] }
    }

    pub fn flipped(&self) -> usize {
        self.signs.iter().filter(|&&s| s < 0.0).count()
    }

    /// Perturbed copy of `params`; the original is untouched.
    pub fn apply(&self, params: &ModelParams) -> ModelParams {
        let mut out = params.clone();
        let (h, m) = (params.layout.hidden, params.layout.outputs);
        for player in heads(params) {
            let (w, _) = params.head_offsets(player);
            let mut head = view2_mut(&mut out.data, w, h, m);
            for (mut row, &s) in head.axis_iter_mut(Axis(0)).zip(&self.signs) {
                row *= s;
            }
        }
        out
    }
}

fn heads(params: &ModelParams) -> Vec<usize> {
    if params.layout.shared {
        vec![0]
    } else {
        (0..params.layout.players).collect()
    }
}

/// Draw a mask flipping each unit independently with probability `prob`.
pub fn sign_flip<R: Rng + ?Sized>(hidden: usize, prob: f64, rng: &mut R) -> SignMask {
    let signs = (0..hidden).map(|_| if rng.random::<f64>() < prob { -1.0 } else { 1.0 }).collect();
    SignMask { signs }
}

/// Gaussian offset on the head weights, `H × M` row-major.
pub fn head_noise<R: Rng + ?Sized>(params: &ModelParams, std: f64, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, std).expect("valid std");
    (0..params.layout.hidden * params.layout.outputs).map(|_| normal.sample(rng)).collect()
}

/// Exploration perturbation for one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub enum Perturbation {
    None,
    Signs(SignMask),
    Noise(Vec<f64>),
}

impl Perturbation {
    /// Mean head weight vector of the perturbed model for `player`.
    pub fn head_mean(&self, params: &ModelParams, player: usize) -> Array1<f64> {
        let base = params.head_mean(player);
        match self {
            Perturbation::None => base,
            Perturbation::Signs(mask) => base * &Array1::from(mask.signs.clone()),
            Perturbation::Noise(e) => {
                let (h, m) = (params.layout.hidden, params.layout.outputs);
                let offset = view2(e, 0, h, m).mean_axis(Axis(1)).expect("non-empty head");
                base + offset
            }
        }
    }

    /// Perturbed copy of the full parameter set.
    pub fn apply(&self, params: &ModelParams) -> ModelParams {
        match self {
            Perturbation::None => params.clone(),
            Perturbation::Signs(mask) => mask.apply(params),
            Perturbation::Noise(e) => {
                let mut out = params.clone();
                for player in heads(params) {
                    let (w, _) = params.head_offsets(player);
                    for (d, n) in out.data[w..w + e.len()].iter_mut().zip(e) {
                        *d += n;
                    }
                }
                out
            }
        }
    }
}
