//! Small fully connected predictor with hand-written backpropagation.
//!
//! Input: the target's `L_I − 1` per-frame displacements divided by
//! `feature_scale`, followed by the mean neighbor offset divided by
//! `neighbor_scale` (zero without neighbors). Two tanh hidden layers feed a
//! linear head of `2·L_O` values; each pair, times `feature_scale`, is one
//! future displacement, and the displacements are summed onto the last
//! observed position. Only differences of positions enter the network, so
//! predictions move rigidly with translations of the scene.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_loss_gradient, check_request, ModelKind, PredictError, PredictionRequest, Predictor};
use crate::geometry::Vec2;
use crate::mitigation::SmootherSpec;
use crate::scene::Scene;

pub const DEFAULT_HIDDEN: usize = 64;

/// `outputs × inputs` weights, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn uniform(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let r = 1.0 / (inputs as f64).sqrt();
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.gen_range(-r..=r)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralPredictor {
    l_i: usize,
    l_o: usize,
    feature_scale: f64,
    neighbor_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_smoother: Option<SmootherSpec>,
    layers: Vec<DenseLayer>,
}

/// Activations of one forward pass; `acts[0]` is the input and the last
/// entry the raw head output.
pub(crate) struct Activations(Vec<Vec<f64>>);

impl Activations {
    pub(crate) fn output(&self) -> &[f64] {
        self.0.last().expect("at least one layer")
    }
}

impl NeuralPredictor {
    /// Randomly initialized network with two hidden layers of width `hidden`.
    pub fn new(l_i: usize, l_o: usize, hidden: usize, feature_scale: f64, neighbor_scale: f64, seed: u64) -> Self {
        assert!(l_i >= 2 && l_o >= 1 && hidden >= 1);
        assert!(feature_scale > 0.0 && neighbor_scale > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d0 = 2 * (l_i - 1) + 2;
        let layers = vec![
            DenseLayer::uniform(d0, hidden, &mut rng),
            DenseLayer::uniform(hidden, hidden, &mut rng),
            DenseLayer::uniform(hidden, 2 * l_o, &mut rng),
        ];
        Self { l_i, l_o, feature_scale, neighbor_scale, input_smoother: None, layers }
    }

    /// Scales chosen from the data: the RMS per-frame displacement of all
    /// objects and the RMS neighbor offset (at least 1 m).
    pub fn for_dataset(scenes: &[Scene], l_i: usize, l_o: usize, hidden: usize, seed: u64) -> Self {
        let (mut step_sq, mut steps) = (0.0, 0usize);
        let (mut nb_sq, mut nbs) = (0.0, 0usize);
        for scene in scenes {
            for t in scene.trajectories() {
                for w in t.positions().windows(2) {
                    step_sq += (w[1] - w[0]).norm_squared();
                    steps += 1;
                }
            }
            if scene.frame_count() >= l_i {
                if let Ok(req) = PredictionRequest::from_scene(scene, l_i - 1, l_i, l_o) {
                    for i in 0..req.histories().len() {
                        if let Some(o) = req.neighbor_offset(i) {
                            nb_sq += o.norm_squared();
                            nbs += 1;
                        }
                    }
                }
            }
        }
        let feature_scale = if steps > 0 && step_sq > 0.0 { (step_sq / steps as f64).sqrt() } else { 1.0 };
        let neighbor_scale = if nbs > 0 { (nb_sq / nbs as f64).sqrt().max(1.0) } else { 1.0 };
        Self::new(l_i, l_o, hidden, feature_scale, neighbor_scale, seed)
    }

    /// Network whose every weight and bias is zero; it predicts a standstill.
    pub fn zeroed(l_i: usize, l_o: usize, hidden: usize) -> Self {
        let mut n = Self::new(l_i, l_o, hidden, 1.0, 1.0, 0);
        for layer in &mut n.layers {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        n
    }

    /// Smooths histories before they reach the network, both in training
    /// and at inference.
    pub fn with_input_smoother(mut self, smoother: Option<SmootherSpec>) -> Self {
        if let Some(s) = &smoother {
            assert!(self.l_i >= s.kernel().len(), "history shorter than the smoothing kernel");
        }
        self.input_smoother = smoother;
        self
    }

    pub fn input_smoother(&self) -> Option<&SmootherSpec> {
        self.input_smoother.as_ref()
    }

    pub fn feature_scale(&self) -> f64 {
        self.feature_scale
    }

    pub fn neighbor_scale(&self) -> f64 {
        self.neighbor_scale
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.l_i < 2 || self.l_o < 1 {
            return Err("l_i must be >= 2 and l_o >= 1".into());
        }
        if !(self.feature_scale > 0.0 && self.feature_scale.is_finite())
            || !(self.neighbor_scale > 0.0 && self.neighbor_scale.is_finite())
        {
            return Err("scales must be positive and finite".into());
        }
        if let Some(s) = &self.input_smoother {
            if s.kernel().len() > self.l_i {
                return Err("smoothing kernel longer than the history".into());
            }
        }
        let mut width = 2 * (self.l_i - 1) + 2;
        if self.layers.is_empty() {
            return Err("no layers".into());
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.inputs != width
                || layer.weights.len() != layer.inputs * layer.outputs
                || layer.bias.len() != layer.outputs
            {
                return Err(format!("layer {i} has inconsistent shape"));
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(format!("layer {i} has a non-finite parameter"));
            }
            width = layer.outputs;
        }
        if width != 2 * self.l_o {
            return Err(format!("head width {width} does not match l_o = {}", self.l_o));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub(crate) fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub(crate) fn set_params(&mut self, params: &[f64]) {
        let mut at = 0;
        for l in &mut self.layers {
            let w = l.weights.len();
            l.weights.copy_from_slice(&params[at..at + w]);
            at += w;
            let b = l.bias.len();
            l.bias.copy_from_slice(&params[at..at + b]);
            at += b;
        }
    }

    /// History as the network sees it.
    pub(crate) fn preprocess(&self, history: &[Vec2]) -> Vec<Vec2> {
        match &self.input_smoother {
            Some(s) => s.smooth_points(history).expect("history length checked"),
            None => history.to_vec(),
        }
    }

    pub(crate) fn encode(&self, history: &[Vec2], neighbor_offset: Option<Vec2>) -> Vec<f64> {
        let mut x = Vec::with_capacity(2 * self.l_i);
        for w in history.windows(2) {
            let d = (w[1] - w[0]) / self.feature_scale;
            x.push(d.x);
            x.push(d.y);
        }
        let nb = neighbor_offset.map_or(Vec2::ZERO, |o| o / self.neighbor_scale);
        x.push(nb.x);
        x.push(nb.y);
        x
    }

    pub(crate) fn forward(&self, x: Vec<f64>) -> Activations {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.apply(acts.last().expect("input pushed"));
            if i < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Activations(acts)
    }

    pub(crate) fn decode(&self, last: Vec2, output: &[f64]) -> Vec<Vec2> {
        let mut p = last;
        output
            .chunks_exact(2)
            .map(|c| {
                p += Vec2::new(c[0], c[1]) * self.feature_scale;
                p
            })
            .collect()
    }

    /// Gradient with respect to the head output of `Σ_k g[k] · p_k`.
    pub(crate) fn output_gradient(&self, g: &[Vec2]) -> Vec<f64> {
        let mut d_out = vec![0.0; 2 * g.len()];
        let mut suffix = Vec2::ZERO;
        for j in (0..g.len()).rev() {
            suffix += g[j];
            d_out[2 * j] = suffix.x * self.feature_scale;
            d_out[2 * j + 1] = suffix.y * self.feature_scale;
        }
        d_out
    }

    /// Backpropagates `d_out` through the layers, accumulating parameter
    /// gradients into `param_grad` when given, and returns the gradient with
    /// respect to the input features.
    pub(crate) fn backward(&self, acts: &Activations, d_out: &[f64], mut param_grad: Option<&mut [f64]>) -> Vec<f64> {
        let acts = &acts.0;
        let last = self.layers.len() - 1;
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for l in &self.layers {
            offsets.push(at);
            at += l.param_count();
        }
        let mut delta = d_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i < last {
                for (d, z) in delta.iter_mut().zip(&acts[i + 1]) {
                    *d *= 1.0 - z * z;
                }
            }
            let a = &acts[i];
            if let Some(pg) = param_grad.as_deref_mut() {
                let off = offsets[i];
                let (gw, gb) = pg[off..off + layer.param_count()].split_at_mut(layer.weights.len());
                for (o, d) in delta.iter().enumerate() {
                    gb[o] += d;
                    for (gwi, ai) in gw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(a) {
                        *gwi += d * ai;
                    }
                }
            }
            let mut d_in = vec![0.0; layer.inputs];
            for (row, d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                for (di, w) in d_in.iter_mut().zip(row) {
                    *di += w * d;
                }
            }
            delta = d_in;
        }
        delta
    }

    /// Maps an input-feature gradient back to the (preprocessed) history
    /// points and adds `direct` to the last point.
    pub(crate) fn feature_gradient_to_history(&self, d_x: &[f64], has_neighbors: bool, direct: Vec2) -> Vec<Vec2> {
        let n = self.l_i;
        let mut g = vec![Vec2::ZERO; n];
        for i in 0..n - 1 {
            let d = Vec2::new(d_x[2 * i], d_x[2 * i + 1]) / self.feature_scale;
            g[i + 1] += d;
            g[i] -= d;
        }
        if has_neighbors {
            let k = 2 * (n - 1);
            g[n - 1] -= Vec2::new(d_x[k], d_x[k + 1]) / self.neighbor_scale;
        }
        g[n - 1] += direct;
        g
    }
}

impl Predictor for NeuralPredictor {
    fn kind(&self) -> ModelKind {
        ModelKind::Neural
    }
    fn l_i(&self) -> usize {
        self.l_i
    }
    fn l_o(&self) -> usize {
        self.l_o
    }

    fn predict_object(&self, req: &PredictionRequest, index: usize) -> Result<Vec<Vec2>, PredictError> {
        check_request(req, self.l_i, self.l_o)?;
        let h = self.preprocess(&req.histories()[index].points);
        let acts = self.forward(self.encode(&h, req.neighbor_offset(index)));
        Ok(self.decode(h[h.len() - 1], acts.output()))
    }

    fn input_gradient(&self, req: &PredictionRequest, loss_gradient: &[Vec2]) -> Result<Vec<Vec2>, PredictError> {
        check_request(req, self.l_i, self.l_o)?;
        check_loss_gradient(loss_gradient, self.l_o)?;
        let index = req.target_index();
        let h = self.preprocess(req.target_history());
        let nb = req.neighbor_offset(index);
        let acts = self.forward(self.encode(&h, nb));
        let d_x = self.backward(&acts, &self.output_gradient(loss_gradient), None);
        let direct: Vec2 = loss_gradient.iter().copied().sum();
        let g = self.feature_gradient_to_history(&d_x, nb.is_some(), direct);
        Ok(match &self.input_smoother {
            Some(s) => s.pull_back(&g),
            None => g,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::History;

    fn request(seed: u64, l_i: usize, l_o: usize, neighbors: usize) -> PredictionRequest {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hs = Vec::new();
        for j in 0..=neighbors {
            let mut p = Vec2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
            let v = Vec2::new(rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0));
            let points = (0..l_i)
                .map(|_| {
                    p += v + Vec2::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
                    p
                })
                .collect();
            hs.push(History { id: j.to_string(), points });
        }
        PredictionRequest::new(hs, "0", l_o).unwrap()
    }

    #[test]
    fn zero_network_predicts_last_position() {
        let net = NeuralPredictor::zeroed(6, 4, 16);
        let r = request(1, 6, 4, 2);
        let last = *r.target_history().last().unwrap();
        assert!(net.predict_target(&r).unwrap().iter().all(|p| *p == last));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (seed, smoother) in [(3, None), (4, Some(SmootherSpec::default()))] {
            let net = NeuralPredictor::new(6, 5, 32, 4.0, 15.0, seed).with_input_smoother(smoother);
            let r = request(seed, 6, 5, 3);
            let g: Vec<Vec2> = (0..5).map(|k| Vec2::new(0.3 - 0.1 * k as f64, 0.2 * k as f64)).collect();
            let loss = |req: &PredictionRequest| -> f64 {
                net.predict_target(req).unwrap().iter().zip(&g).map(|(p, w)| p.dot(*w)).sum()
            };
            let grad = net.input_gradient(&r, &g).unwrap();
            let h = 1e-4;
            for i in 0..6 {
                for axis in 0..2 {
                    let bump = |s: f64| {
                        let mut pts = r.target_history().to_vec();
                        if axis == 0 {
                            pts[i].x += s;
                        } else {
                            pts[i].y += s;
                        }
                        r.with_target_history(pts)
                    };
                    let fd = (loss(&bump(h)) - loss(&bump(-h))) / (2.0 * h);
                    let an = if axis == 0 { grad[i].x } else { grad[i].y };
                    assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "point {i} axis {axis}: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn translation_moves_predictions_rigidly() {
        let net = NeuralPredictor::new(6, 4, 16, 3.0, 10.0, 9);
        let r = request(7, 6, 4, 2);
        let shift = Vec2::new(123.25, -48.5);
        let moved = r.map_histories(|h| h.iter().map(|&p| p + shift).collect());
        let a = net.predict_target(&r).unwrap();
        let b = net.predict_target(&moved).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((*p + shift - *q).norm() < 1e-9);
        }
    }

    #[test]
    fn params_round_trip() {
        let mut net = NeuralPredictor::new(4, 3, 8, 1.0, 1.0, 2);
        let p = net.params();
        assert_eq!(p.len(), net.param_count());
        let doubled: Vec<f64> = p.iter().map(|v| v * 2.0).collect();
        net.set_params(&doubled);
        assert_eq!(net.params(), doubled);
        assert!(net.validate().is_ok());
    }
}
