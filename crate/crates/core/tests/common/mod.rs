//! Shared helpers for integration tests: reference models, seeded inputs
//! and the finite-difference gradient checker.
#![allow(dead_code)]

pub mod oracle;
pub mod session;
pub mod states;

use engagement::nn::LayerSpec::*;
use engagement::nn::layers::maxpool_forward;
use engagement::nn::ForwardPass;
use engagement::{Emotion, Model, Scalar, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 8×8 input, two 3×3 filters, pool, dense to the 7-way softmax.
pub fn tiny_model<T: Scalar>(seed: u64) -> Model<T> {
    Model::new(
        [1, 8, 8],
        vec![
            Conv2D { in_channels: 1, out_channels: 2 },
            ReLU,
            MaxPool,
            Flatten,
            Dense { in_units: 32, out_units: 7 },
            Softmax,
        ],
    )
    .unwrap()
    .init_parameters(seed)
}

pub fn random_tensor<T: Scalar>(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.random_range(lo..hi))).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cross-entropy evaluated in f64 from the model's logits, so the only
/// working-precision rounding is the network's own forward pass.
fn loss_of<T: Scalar>(pass: &ForwardPass<T>, target: Emotion) -> f64 {
    let logits: Vec<f64> = pass.logits().iter().map(|&v| v.into()).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - logits[target.index()]
}

/// Which side of every ReLU kink each activation sits on, and which
/// element wins every pooling window.
fn branch_pattern<T: Scalar>(model: &Model<T>, pass: &ForwardPass<T>) -> Vec<usize> {
    let mut pattern = Vec::new();
    for (i, layer) in model.layers().iter().enumerate() {
        let x = if i == 0 { &pass.input } else { &pass.outputs[i - 1] };
        match layer {
            ReLU => pattern.extend(x.data().iter().map(|&v| (v > T::zero()) as usize)),
            MaxPool => pattern.extend(maxpool_forward(x).unwrap().1),
            _ => {}
        }
    }
    pattern
}

#[derive(Debug, Clone, Copy)]
pub struct GradPair {
    pub analytic: f64,
    pub numeric: f64,
    /// The ± step moved some ReLU or pooling decision, so the central
    /// difference straddles a point where the loss is not differentiable.
    pub crosses_kink: bool,
}

/// Per-parameter gradient pairs using central differences with step `eps`.
pub fn finite_difference_pairs<T: Scalar>(model: &Model<T>, input: &Tensor<T>, target: Emotion, eps: f64) -> Vec<GradPair> {
    let pass = model.forward(input).unwrap();
    let base = branch_pattern(model, &pass);
    let analytic: Vec<f64> = model.backward(&pass, target.index()).unwrap().flat().into_iter().map(Into::into).collect();

    let mut pairs = Vec::with_capacity(analytic.len());
    let mut probe = model.clone();
    let mut k = 0;
    let n_layers = probe.parameters().len();
    for layer in 0..n_layers {
        if probe.parameters()[layer].is_none() {
            continue;
        }
        for which in 0..2 {
            let len = {
                let p = probe.parameters()[layer].as_ref().unwrap();
                if which == 0 { p.weights.len() } else { p.bias.len() }
            };
            for i in 0..len {
                let original = get(&probe, layer, which, i);
                // Divide by the step actually representable at working precision.
                let hi = T::from_f64_lossy(original + eps);
                let lo = T::from_f64_lossy(original - eps);
                set(&mut probe, layer, which, i, hi);
                let up = probe.forward(input).unwrap();
                set(&mut probe, layer, which, i, lo);
                let down = probe.forward(input).unwrap();
                set(&mut probe, layer, which, i, T::from_f64_lossy(original));
                let step: f64 = hi.into() - lo.into();
                pairs.push(GradPair {
                    analytic: analytic[k],
                    numeric: (loss_of(&up, target) - loss_of(&down, target)) / step,
                    crosses_kink: branch_pattern(&probe, &up) != base || branch_pattern(&probe, &down) != base,
                });
                k += 1;
            }
        }
    }
    assert_eq!(k, analytic.len());
    pairs
}

fn get<T: Scalar>(m: &Model<T>, layer: usize, which: usize, i: usize) -> f64 {
    let p = m.parameters()[layer].as_ref().unwrap();
    let t = if which == 0 { &p.weights } else { &p.bias };
    t.data()[i].into()
}

fn set<T: Scalar>(m: &mut Model<T>, layer: usize, which: usize, i: usize, v: T) {
    let idx = m.parameters()[..layer].iter().filter(|p| p.is_some()).count();
    let p = m.parameters_mut().nth(idx).unwrap();
    let t = if which == 0 { &mut p.weights } else { &mut p.bias };
    t.data_mut()[i] = v;
}

/// `|a − n| / max(|a|, |n|, floor)`; the floor keeps gradients that are
/// zero up to rounding from producing meaningless ratios.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub struct GradientCheck {
    pub parameters: usize,
    pub kinks: usize,
    pub worst_relative_error: f64,
}

/// Gradient check of the reduced model at precision `T` for the given
/// model and input seeds.
pub fn gradient_check<T: Scalar>(model_seed: u64, input_seed: u64, eps: f64) -> GradientCheck {
    let model = tiny_model::<T>(model_seed);
    let input = random_tensor::<T>(&[1, 8, 8], &mut rng(input_seed), 0.0, 1.0);
    let pairs = finite_difference_pairs(&model, &input, Emotion::Joy, eps);
    GradientCheck {
        parameters: pairs.len(),
        kinks: pairs.iter().filter(|p| p.crosses_kink).count(),
        worst_relative_error: pairs.iter().map(|p| relative_error(p.analytic, p.numeric, 1e-12)).fold(0.0, f64::max),
    }
}

/// Analytic gradients computed at f32, compared against central
/// differences of the same parameters evaluated at f64.
pub fn gradient_check_against_f64(model_seed: u64, input_seed: u64, eps: f64) -> GradientCheck {
    let model = tiny_model::<f32>(model_seed);
    let input = random_tensor::<f32>(&[1, 8, 8], &mut rng(input_seed), 0.0, 1.0);
    let pass = model.forward(&input).unwrap();
    let analytic = model.backward(&pass, Emotion::Joy.index()).unwrap().flat();
    let reference = finite_difference_pairs(&model.cast::<f64>(), &input.cast::<f64>(), Emotion::Joy, eps);
    GradientCheck {
        parameters: reference.len(),
        kinks: reference.iter().filter(|p| p.crosses_kink).count(),
        worst_relative_error: analytic
            .iter()
            .zip(&reference)
            .map(|(&a, p)| relative_error(a.into(), p.numeric, 1e-12))
            .fold(0.0, f64::max),
    }
}
