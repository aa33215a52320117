//! Mini-batch training of [`NeuralPredictor`] on sliding windows.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NeuralPredictor, PredictError, PredictionRequest};
use crate::geometry::Vec2;
use crate::mitigation::SmootherSpec;
use crate::optim::{Adam, AdamConfig};
use crate::scene::Scene;

/// Augmentation draws come from their own stream so that a hook never
/// shifts the shuffling order.
const HOOK_STREAM: u64 = 0x5eed_a09e_7a11_0001;

/// Rewrites a training history before it is used; called once per sample
/// per epoch.
pub trait SampleHook: Sync {
    fn apply(&self, history: &mut Vec<Vec2>, frequency_hz: f64, rng: &mut ChaCha8Rng);
}

pub struct TrainOptions<'a> {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub augmentation: Option<&'a dyn SampleHook>,
    /// Installed on the model before training; also used at inference.
    pub smoothing: Option<SmootherSpec>,
}

impl Default for TrainOptions<'_> {
    fn default() -> Self {
        Self { epochs: 150, learning_rate: 2e-3, batch_size: 32, seed: 0, augmentation: None, smoothing: None }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: NeuralPredictor,
    /// Mean squared displacement error (m²): the first entry is measured
    /// before any update, then one mean batch loss per epoch.
    pub loss_history: Vec<f64>,
}

struct Sample {
    history: Vec<Vec2>,
    /// Mean of the other objects' last positions.
    neighbor_center: Option<Vec2>,
    future: Vec<Vec2>,
    frequency_hz: f64,
}

fn windows(scenes: &[Scene], l_i: usize, l_o: usize) -> Vec<Sample> {
    let mut out = Vec::new();
    for scene in scenes {
        let frames = scene.frame_count();
        if frames < l_i + l_o {
            continue;
        }
        for end in l_i - 1..frames - l_o {
            let req = PredictionRequest::from_scene(scene, end, l_i, l_o).expect("window in range");
            for (i, traj) in scene.trajectories().iter().enumerate() {
                let history = req.histories()[i].points.clone();
                let last = history[l_i - 1];
                out.push(Sample {
                    neighbor_center: req.neighbor_offset(i).map(|o| o + last),
                    future: traj.states()[end + 1..=end + l_o].iter().map(|s| s.position).collect(),
                    history,
                    frequency_hz: scene.frequency_hz(),
                });
            }
        }
    }
    out
}

/// Loss of one sample; when `param_grad` is given its gradient is added.
fn sample_loss(
    model: &NeuralPredictor,
    history: &[Vec2],
    sample: &Sample,
    scale: f64,
    param_grad: Option<&mut [f64]>,
) -> f64 {
    let h = model.preprocess(history);
    let last = h[h.len() - 1];
    let acts = model.forward(model.encode(&h, sample.neighbor_center.map(|c| c - last)));
    let pred = model.decode(last, acts.output());
    let l_o = pred.len() as f64;
    let mut loss = 0.0;
    let mut g = Vec::with_capacity(pred.len());
    for (p, s) in pred.iter().zip(&sample.future) {
        let e = *p - *s;
        loss += e.norm_squared() / l_o;
        g.push(e * (2.0 * scale / l_o));
    }
    if let Some(pg) = param_grad {
        model.backward(&acts, &model.output_gradient(&g), Some(pg));
    }
    loss
}

/// Fits `model` by Adam on the mean squared displacement error of every
/// object's sliding windows. Deterministic in `opts.seed`.
pub fn train(model: NeuralPredictor, scenes: &[Scene], opts: &TrainOptions<'_>) -> Result<TrainOutcome, PredictError> {
    use super::Predictor;
    let mut model = model.with_input_smoother(opts.smoothing.clone());
    let samples = windows(scenes, model.l_i(), model.l_o());
    if samples.is_empty() {
        return Err(PredictError::EmptyDataset);
    }
    let initial =
        samples.iter().map(|s| sample_loss(&model, &s.history, s, 0.0, None)).sum::<f64>() / samples.len() as f64;
    let mut loss_history = vec![initial];

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut hook_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ HOOK_STREAM);
    let mut adam = Adam::new(model.param_count(), AdamConfig::with_learning_rate(opts.learning_rate));
    let mut params = model.params();
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch_size = opts.batch_size.max(1);

    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let s = &samples[i];
                let mut history = s.history.clone();
                if let Some(hook) = opts.augmentation {
                    hook.apply(&mut history, s.frequency_hz, &mut hook_rng);
                }
                epoch_loss += sample_loss(&model, &history, s, scale, Some(&mut grad));
            }
            adam.step(&mut params, &grad);
            model.set_params(&params);
        }
        loss_history.push(epoch_loss / samples.len() as f64);
    }
    Ok(TrainOutcome { model, loss_history })
}
