//! Finite-difference kinematics of sampled trajectories.
//!
//! Velocities are forward differences of positions, accelerations forward
//! differences of velocities, jerks forward differences of the scalar
//! longitudinal/lateral accelerations, each scaled by the sample rate.
//! Acceleration at sample `i` is split along the unit velocity
//! `p[i+1] - p[i]` (longitudinal) and its +90° rotation (lateral).

use thiserror::Error;

use crate::geometry::Vec2;
use crate::scene::Trajectory;

/// Speeds below this are treated as having no direction.
pub const MIN_DIRECTION_SPEED: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("trajectory has {got} points, at least {need} are required")]
    TooShort { got: usize, need: usize },
}

/// Speed, acceleration, and jerk sequences of one trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KinematicProfile {
    /// m/s, one per step (`len - 1`).
    pub speed: Vec<f64>,
    /// m/s², `len - 2` values.
    pub long_accel: Vec<f64>,
    pub lat_accel: Vec<f64>,
    /// m/s³, `len - 3` values.
    pub long_jerk: Vec<f64>,
    pub lat_jerk: Vec<f64>,
}

impl KinematicProfile {
    /// Acceleration magnitudes, `len - 2` values.
    pub fn accel_magnitude(&self) -> Vec<f64> {
        self.long_accel.iter().zip(&self.lat_accel).map(|(l, s)| l.hypot(*s)).collect()
    }

    pub fn jerk_magnitude(&self) -> Vec<f64> {
        self.long_jerk.iter().zip(&self.lat_jerk).map(|(l, s)| l.hypot(*s)).collect()
    }
}

pub fn kinematics(traj: &Trajectory, frequency_hz: f64) -> Result<KinematicProfile, KinematicsError> {
    kinematics_of(&traj.positions(), frequency_hz)
}

/// Kinematics of a raw position sequence. Needs at least 4 points.
pub fn kinematics_of(points: &[Vec2], frequency_hz: f64) -> Result<KinematicProfile, KinematicsError> {
    if points.len() < 4 {
        return Err(KinematicsError::TooShort { got: points.len(), need: 4 });
    }
    Ok(profile_unchecked(points, frequency_hz))
}

/// Like [`kinematics_of`] but accepts any length; sequences that need more
/// points than available come back empty.
pub(crate) fn profile_unchecked(points: &[Vec2], frequency_hz: f64) -> KinematicProfile {
    let f = frequency_hz;
    let velocity: Vec<Vec2> = points.windows(2).map(|w| (w[1] - w[0]) * f).collect();
    let speed: Vec<f64> = velocity.iter().map(|v| v.norm()).collect();

    let mut dir = Vec2::UNIT_X;
    let n_acc = velocity.len().saturating_sub(1);
    let mut long_accel = Vec::with_capacity(n_acc);
    let mut lat_accel = Vec::with_capacity(n_acc);
    for i in 0..n_acc {
        if let Some(d) = velocity[i].normalized(MIN_DIRECTION_SPEED) {
            dir = d;
        }
        let a = (velocity[i + 1] - velocity[i]) * f;
        long_accel.push(a.dot(dir));
        lat_accel.push(a.dot(dir.perp()));
    }
    let long_jerk = long_accel.windows(2).map(|w| (w[1] - w[0]) * f).collect();
    let lat_jerk = lat_accel.windows(2).map(|w| (w[1] - w[0]) * f).collect();
    KinematicProfile { speed, long_accel, lat_accel, long_jerk, lat_jerk }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Vec<Vec2> {
        xs.iter().map(|&x| Vec2::new(x, 0.0)).collect()
    }

    #[test]
    fn stationary_is_all_zero() {
        let k = kinematics_of(&[Vec2::new(3.0, 4.0); 6], 2.0).unwrap();
        assert!(k.speed.iter().all(|&v| v == 0.0));
        assert!(k.long_accel.iter().chain(&k.lat_accel).all(|&a| a == 0.0));
    }

    #[test]
    fn constant_velocity() {
        let k = kinematics_of(&line(&[0.0, 1.0, 2.0, 3.0]), 1.0).unwrap();
        assert_eq!(k.speed, vec![1.0, 1.0, 1.0]);
        assert_eq!(k.long_accel, vec![0.0, 0.0]);
        assert_eq!(k.lat_accel, vec![0.0, 0.0]);
    }

    #[test]
    fn hand_differenced_acceleration() {
        let k = kinematics_of(&line(&[0.0, 1.0, 3.0, 6.0]), 1.0).unwrap();
        assert_eq!(k.speed, vec![1.0, 2.0, 3.0]);
        assert_eq!(k.long_accel, vec![1.0, 1.0]);
        assert_eq!(k.long_jerk, vec![0.0]);
        assert_eq!(k.lat_jerk, vec![0.0]);
    }

    #[test]
    fn lengths_follow_differencing_order() {
        let pts: Vec<Vec2> = (0..9).map(|i| Vec2::new(i as f64, (i * i) as f64 * 0.1)).collect();
        let k = kinematics_of(&pts, 5.0).unwrap();
        assert_eq!(k.speed.len(), 8);
        assert_eq!(k.long_accel.len(), 7);
        assert_eq!(k.lat_accel.len(), 7);
        assert_eq!(k.long_jerk.len(), 6);
        assert_eq!(k.lat_jerk.len(), 6);
    }

    #[test]
    fn left_turn_has_positive_lateral_accel() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.5), Vec2::new(3.0, 1.5)];
        let k = kinematics_of(&pts, 1.0).unwrap();
        assert!(k.lat_accel[0] > 0.0);
    }

    #[test]
    fn too_short() {
        assert_eq!(
            kinematics_of(&line(&[0.0, 1.0, 2.0]), 1.0).unwrap_err(),
            KinematicsError::TooShort { got: 3, need: 4 }
        );
    }
}
