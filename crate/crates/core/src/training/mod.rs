//! Cross-entropy training with momentum SGD, evaluation and metrics.

pub mod metrics;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{
    binary_metrics, compute_metrics, f1_score, BinaryCounts, BinaryMetrics, ClassMetrics, ConfusionMatrix,
    MetricsReport,
};

use crate::emotion::{argmax, Emotion};
use crate::error::{Error, Result};
use crate::nn::{Gradients, Model};
use crate::tensor::{Scalar, Tensor};

/// Probability floor applied before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Usage("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Usage("batch size must be at least 1".into()));
        }
        // lr = 0 is allowed: it freezes the parameters.
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Usage(format!("invalid learning rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Usage(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

/// One labelled network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T = f32> {
    pub input: Tensor<T>,
    pub label: Emotion,
}

/// `-ln(max(p[target], 1e-12))`.
pub fn cross_entropy_loss<T: Scalar>(probs: &[T], target: Emotion) -> f64 {
    let p: f64 = probs[target.index()].into();
    -p.max(PROB_FLOOR).ln()
}

/// Momentum buffers for [`sgd_step`].
#[derive(Debug, Clone)]
pub struct SgdMomentum<T = f32> {
    velocity: Gradients<T>,
}

impl<T: Scalar> SgdMomentum<T> {
    pub fn new(model: &Model<T>) -> Self {
        SgdMomentum {
            velocity: Gradients::zeros_like(model),
        }
    }
}

/// `v ← μ·v + g`, then `w ← w − lr·v`, for every parameter.
pub fn sgd_step<T: Scalar>(
    model: &mut Model<T>,
    grads: &Gradients<T>,
    state: &mut SgdMomentum<T>,
    config: &TrainConfig,
) -> Result<()> {
    if !grads.is_congruent_with(model) || !state.velocity.is_congruent_with(model) {
        return Err(Error::Usage("gradient shapes do not match the model".into()));
    }
    let lr = T::from_f64_lossy(config.learning_rate);
    let mu = T::from_f64_lossy(config.momentum);
    let params = model.parameters_mut();
    let velocity = state.velocity.layers_mut();
    let grads = grads.layers().iter().flatten();
    for ((p, v), g) in params.zip(velocity).zip(grads) {
        update(p.weights.data_mut(), v.weights.data_mut(), g.weights.data(), lr, mu);
        update(p.bias.data_mut(), v.bias.data_mut(), g.bias.data(), lr, mu);
    }
    Ok(())
}

fn update<T: Scalar>(w: &mut [T], v: &mut [T], g: &[T], lr: T, mu: T) {
    for ((w, v), &g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
        *v = mu * *v + g;
        *w = *w - lr * *v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch, measured before each batch update.
    pub loss: f64,
    pub train_accuracy: f64,
}

/// Renders the epoch log as `epoch,loss,train_accuracy` CSV.
pub fn epoch_log_csv(log: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss,train_accuracy\n");
    for s in log {
        out.push_str(&format!("{},{},{}\n", s.epoch, s.loss, s.train_accuracy));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T = f32> {
    pub model: Model<T>,
    pub log: Vec<EpochStats>,
}

pub fn train<T: Scalar>(model: Model<T>, data: &[Example<T>], config: &TrainConfig) -> Result<TrainOutcome<T>> {
    train_with(model, data, config, |_| {})
}

/// Mini-batch training; `on_epoch` sees each epoch's stats as they finish.
///
/// Fully deterministic for a given seed: batches are processed in a
/// single thread and the shuffle comes from a seeded ChaCha stream.
pub fn train_with<T: Scalar>(
    mut model: Model<T>,
    data: &[Example<T>],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut momentum = SgdMomentum::new(&model);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let mut grads = Gradients::zeros_like(&model);
            for &i in batch {
                let example = &data[i];
                let pass = model.forward(&example.input)?;
                let probs = pass.probabilities();
                let loss = cross_entropy_loss(probs, example.label);
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
                }
                loss_sum += loss;
                if argmax(probs) == example.label.index() {
                    correct += 1;
                }
                model.backward_into(&pass, example.label.index(), &mut grads)?;
            }
            grads.scale(T::one() / T::from_f64_lossy(batch.len() as f64));
            sgd_step(&mut model, &grads, &mut momentum, config)?;
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
        };
        on_epoch(&stats);
        log.push(stats);
    }
    Ok(TrainOutcome { model, log })
}

/// Anything that maps a network input to class probabilities.
pub trait Classifier<T: Scalar = f32> {
    fn probabilities(&self, input: &Tensor<T>) -> Result<Vec<T>>;

    /// Argmax class, lowest index on ties.
    fn classify(&self, input: &Tensor<T>) -> Result<Emotion> {
        let probs = self.probabilities(input)?;
        Ok(Emotion::ALL[argmax(&probs)])
    }
}

impl<T: Scalar> Classifier<T> for Model<T> {
    fn probabilities(&self, input: &Tensor<T>) -> Result<Vec<T>> {
        self.predict(input)
    }
}

pub fn evaluate<T: Scalar, C: Classifier<T> + ?Sized>(model: &C, data: &[Example<T>]) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new();
    for example in data {
        cm.record(example.label, model.classify(&example.input)?);
    }
    Ok(cm)
}

/// Fraction of `data` the classifier gets right.
pub fn accuracy<T: Scalar, C: Classifier<T> + ?Sized>(model: &C, data: &[Example<T>]) -> Result<f64> {
    let cm = evaluate(model, data)?;
    if cm.total() == 0 {
        return Err(Error::Data("accuracy of an empty dataset".into()));
    }
    Ok(cm.trace() as f64 / cm.total() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec::*;

    fn linear_model() -> Model<f64> {
        Model::new([1, 1, 2], vec![Flatten, Dense { in_units: 2, out_units: 7 }, Softmax]).unwrap()
    }

    #[test]
    fn loss_values() {
        let mut p = [0.0f64; 7];
        p[3] = 1.0;
        assert_eq!(cross_entropy_loss(&p, Emotion::Joy), 0.0);
        let u = [1.0f64 / 7.0; 7];
        assert!((cross_entropy_loss(&u, Emotion::Anger) - 7f64.ln()).abs() < 1e-12);
        assert!((cross_entropy_loss(&p, Emotion::Anger) - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn sgd_zero_gradient_is_fixed_point() {
        let mut m = linear_model().init_parameters(4);
        let before = m.clone();
        let g = Gradients::zeros_like(&m);
        let mut s = SgdMomentum::new(&m);
        sgd_step(&mut m, &g, &mut s, &TrainConfig::default()).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn sgd_direct_subtraction() {
        let mut m = linear_model().init_parameters(4);
        let mut g = Gradients::zeros_like(&m);
        for (gp, p) in g.layers_mut().zip(m.parameters().iter().flatten()) {
            gp.weights.data_mut().copy_from_slice(p.weights.data());
        }
        let mut s = SgdMomentum::new(&m);
        let cfg = TrainConfig { learning_rate: 1.0, momentum: 0.0, ..Default::default() };
        sgd_step(&mut m, &g, &mut s, &cfg).unwrap();
        assert!(m.parameters().iter().flatten().all(|p| p.weights.data().iter().all(|&w| w == 0.0)));
    }

    #[test]
    fn sgd_rejects_foreign_gradients() {
        let mut m = linear_model();
        let other = Model::<f64>::new([1, 1, 3], vec![Flatten, Dense { in_units: 3, out_units: 7 }, Softmax]).unwrap();
        let mut s = SgdMomentum::new(&m);
        let g = Gradients::zeros_like(&other);
        assert!(matches!(sgd_step(&mut m, &g, &mut s, &TrainConfig::default()), Err(Error::Usage(_))));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { momentum: 1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn empty_dataset_is_data_error() {
        let r = train(linear_model(), &[], &TrainConfig::default());
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn log_csv_header() {
        let log = [EpochStats { epoch: 1, loss: 0.5, train_accuracy: 0.75 }];
        assert_eq!(epoch_log_csv(&log), "epoch,loss,train_accuracy\n1,0.5,0.75\n");
    }
}
