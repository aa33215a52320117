//! Constant-velocity and constant-acceleration extrapolation.
//!
//! Both models are linear in the last few history points, so their input
//! gradients are closed-form.

use serde::{Deserialize, Serialize};

use super::{check_loss_gradient, check_request, ModelKind, PredictError, PredictionRequest, Predictor};
use crate::geometry::Vec2;

/// `p_{t+k} = p_t + k (p_t − p_{t−1})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstantVelocity {
    pub l_i: usize,
    pub l_o: usize,
}

impl ConstantVelocity {
    pub fn new(l_i: usize, l_o: usize) -> Self {
        assert!(l_i >= 2, "constant velocity needs two history points");
        Self { l_i, l_o }
    }
}

impl Predictor for ConstantVelocity {
    fn kind(&self) -> ModelKind {
        ModelKind::ConstantVelocity
    }
    fn l_i(&self) -> usize {
        self.l_i
    }
    fn l_o(&self) -> usize {
        self.l_o
    }

    fn predict_object(&self, req: &PredictionRequest, index: usize) -> Result<Vec<Vec2>, PredictError> {
        check_request(req, self.l_i, self.l_o)?;
        let h = &req.histories()[index].points;
        let last = h[h.len() - 1];
        let v = last - h[h.len() - 2];
        Ok((1..=self.l_o).map(|k| last + v * k as f64).collect())
    }

    fn input_gradient(&self, req: &PredictionRequest, loss_gradient: &[Vec2]) -> Result<Vec<Vec2>, PredictError> {
        check_request(req, self.l_i, self.l_o)?;
        check_loss_gradient(loss_gradient, self.l_o)?;
        let n = self.l_i;
        let mut grad = vec![Vec2::ZERO; n];
        for (i, g) in loss_gradient.iter().enumerate() {
            let k = (i + 1) as f64;
            grad[n - 1] += *g * (1.0 + k);
            grad[n - 2] -= *g * k;
        }
        Ok(grad)
    }
}

/// `p_{t+k} = p_t + k v + k(k+1)/2 a` with `v = p_t − p_{t−1}` and
/// `a = v − (p_{t−1} − p_{t−2})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstantAcceleration {
    pub l_i: usize,
    pub l_o: usize,
}

impl ConstantAcceleration {
    pub fn new(l_i: usize, l_o: usize) -> Self {
        assert!(l_i >= 3, "constant acceleration needs three history points");
        Self { l_i, l_o }
    }
}

impl Predictor for ConstantAcceleration {
    fn kind(&self) -> ModelKind {
        ModelKind::ConstantAcceleration
    }
    fn l_i(&self) -> usize {
        self.l_i
    }
    fn l_o(&self) -> usize {
        self.l_o
    }

    fn predict_object(&self, req: &PredictionRequest, index: usize) -> Result<Vec<Vec2>, PredictError> {
        check_request(req, self.l_i, self.l_o)?;
        let h = &req.histories()[index].points;
        let n = h.len();
        let v = h[n - 1] - h[n - 2];
        let a = v - (h[n - 2] - h[n - 3]);
        Ok((1..=self.l_o)
            .map(|k| {
                let k = k as f64;
                h[n - 1] + v * k + a * (k * (k + 1.0) / 2.0)
            })
            .collect())
    }

    fn input_gradient(&self, req: &PredictionRequest, loss_gradient: &[Vec2]) -> Result<Vec<Vec2>, PredictError> {
        check_request(req, self.l_i, self.l_o)?;
        check_loss_gradient(loss_gradient, self.l_o)?;
        let n = self.l_i;
        let mut grad = vec![Vec2::ZERO; n];
        for (i, g) in loss_gradient.iter().enumerate() {
            let k = (i + 1) as f64;
            let c = k * (k + 1.0) / 2.0;
            grad[n - 1] += *g * (1.0 + k + c);
            grad[n - 2] -= *g * (k + 2.0 * c);
            grad[n - 3] += *g * c;
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::History;

    fn req(pts: &[(f64, f64)], l_o: usize) -> PredictionRequest {
        let h = History { id: "ov".into(), points: pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect() };
        PredictionRequest::new(vec![h], "ov", l_o).unwrap()
    }

    #[test]
    fn constant_velocity_extrapolates() {
        let p = ConstantVelocity::new(2, 3).predict_target(&req(&[(0.0, 0.0), (1.0, 0.0)], 3)).unwrap();
        assert_eq!(p, vec![Vec2::new(2.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(4.0, 0.0)]);
    }

    #[test]
    fn constant_acceleration_extrapolates() {
        let r = req(&[(0.0, 0.0), (1.0, 0.0), (3.0, 0.0)], 2);
        let p = ConstantAcceleration::new(3, 2).predict_target(&r).unwrap();
        assert_eq!(p, vec![Vec2::new(6.0, 0.0), Vec2::new(10.0, 0.0)]);
    }

    #[test]
    fn first_point_x_gradient() {
        let r = req(&[(0.0, 0.0), (1.0, 0.0)], 3);
        let mut g = vec![Vec2::ZERO; 3];
        g[0] = Vec2::new(1.0, 0.0);
        let grad = ConstantVelocity::new(2, 3).input_gradient(&r, &g).unwrap();
        assert_eq!(grad, vec![Vec2::new(-1.0, 0.0), Vec2::new(2.0, 0.0)]);
    }

    #[test]
    fn zero_loss_gradient_gives_zero() {
        let r = req(&[(0.0, 0.0), (1.0, 0.5), (2.5, 1.0), (4.0, 2.0)], 4);
        let zero = vec![Vec2::ZERO; 4];
        for g in [
            ConstantVelocity::new(4, 4).input_gradient(&r, &zero).unwrap(),
            ConstantAcceleration::new(4, 4).input_gradient(&r, &zero).unwrap(),
        ] {
            assert!(g.iter().all(|v| *v == Vec2::ZERO));
        }
    }

    #[test]
    fn shape_mismatch() {
        let r = req(&[(0.0, 0.0), (1.0, 0.0)], 3);
        assert!(matches!(
            ConstantVelocity::new(4, 3).predict_target(&r),
            Err(PredictError::HistoryLength { got: 2, expected: 4, .. })
        ));
        assert!(matches!(
            ConstantVelocity::new(2, 5).predict_target(&r),
            Err(PredictError::HorizonMismatch { got: 3, expected: 5 })
        ));
    }
}
