//! Constant-velocity Kalman filter on image-plane positions.
//!
//! State is `(x, y, vx, vy)` in pixels and pixels per frame; the time step
//! is one frame and only positions are measured.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanState {
    pub state: Vector4<f64>,
    pub covariance: Matrix4<f64>,
}

fn transition() -> Matrix4<f64> {
    Matrix4::new(
        1.0, 0.0, 1.0, 0.0, //
        0.0, 1.0, 0.0, 1.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    )
}

fn measurement() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

/// `q·G·Gᵀ` for piecewise-constant acceleration, `G = (½, ½, 1, 1)` per axis.
pub fn process_covariance(q: f64) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for axis in 0..2 {
        let (p, v) = (axis, axis + 2);
        m[(p, p)] = 0.25 * q;
        m[(p, v)] = 0.5 * q;
        m[(v, p)] = 0.5 * q;
        m[(v, v)] = q;
    }
    m
}

fn symmetrize(m: Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

impl KalmanState {
    /// Track birth at `position` with zero velocity.
    pub fn new(position: [f64; 2], position_var: f64, velocity_var: f64) -> Self {
        Self {
            state: Vector4::new(position[0], position[1], 0.0, 0.0),
            covariance: Matrix4::from_diagonal(&Vector4::new(position_var, position_var, velocity_var, velocity_var)),
        }
    }

    #[inline]
    pub fn position(&self) -> [f64; 2] {
        [self.state[0], self.state[1]]
    }

    #[inline]
    pub fn velocity(&self) -> [f64; 2] {
        [self.state[2], self.state[3]]
    }

    pub fn predict(&self, process_noise: f64) -> Self {
        let f = transition();
        Self {
            state: f * self.state,
            covariance: symmetrize(f * self.covariance * f.transpose() + process_covariance(process_noise)),
        }
    }

    /// Position-only update in Joseph form. A zero `measurement_noise`
    /// snaps the position onto the measurement.
    pub fn update(&self, measurement_px: [f64; 2], measurement_noise: f64) -> Self {
        let h = measurement();
        let r = Matrix2::identity() * measurement_noise;
        let z = Vector2::new(measurement_px[0], measurement_px[1]);
        let innovation = z - h * self.state;
        let s = h * self.covariance * h.transpose() + r;
        let Some(s_inv) = s.try_inverse() else {
            return *self;
        };
        let gain = self.covariance * h.transpose() * s_inv;
        let ikh = Matrix4::identity() - gain * h;
        let covariance = ikh * self.covariance * ikh.transpose() + gain * r * gain.transpose();
        Self { state: self.state + gain * innovation, covariance: symmetrize(covariance) }
    }
}

/// `kalman_predict` as a free function.
pub fn kalman_predict(state: &KalmanState, process_noise: f64) -> KalmanState {
    state.predict(process_noise)
}

/// `kalman_update` as a free function.
pub fn kalman_update(state: &KalmanState, measurement: [f64; 2], measurement_noise: f64) -> KalmanState {
    state.update(measurement, measurement_noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn min_eigen(m: &Matrix4<f64>) -> f64 {
        m.symmetric_eigen().eigenvalues.min()
    }

    #[test]
    fn predict_moves_with_velocity() {
        let mut s = KalmanState::new([0.0, 0.0], 1.0, 1.0);
        s.state = Vector4::new(0.0, 0.0, 1.0, 2.0);
        let p = s.predict(0.0);
        assert_eq!(p.state, Vector4::new(1.0, 2.0, 1.0, 2.0));
        let f = transition();
        assert_eq!(p.covariance, symmetrize(f * s.covariance * f.transpose()));
    }

    #[test]
    fn zero_velocity_stays_put() {
        let s = KalmanState::new([3.0, 4.0], 1.0, 1.0);
        assert_eq!(s.predict(0.0).position(), [3.0, 4.0]);
    }

    #[test]
    fn repeated_prediction_is_exact() {
        let mut s = KalmanState::new([0.0, 0.0], 1.0, 1.0);
        s.state[2] = 1.0;
        for _ in 0..37 {
            s = s.predict(0.5);
        }
        assert_eq!(s.position(), [37.0, 0.0]);
    }

    #[test]
    fn update_at_prediction_shrinks_covariance() {
        let s = KalmanState::new([5.0, 5.0], 4.0, 100.0).predict(1.0);
        let u = s.update(s.position(), 2.0);
        assert_eq!(u.position(), s.position());
        assert!(u.covariance.trace() < s.covariance.trace());
    }

    #[test]
    fn zero_measurement_noise_snaps_to_measurement() {
        let s = KalmanState::new([5.0, 5.0], 4.0, 100.0).predict(1.0);
        let u = s.update([9.0, -3.0], 0.0);
        assert!((u.position()[0] - 9.0).abs() < 1e-9);
        assert!((u.position()[1] + 3.0).abs() < 1e-9);
    }

    #[test]
    fn one_dimensional_recursion_matches_hand_values() {
        // x axis only: P0 = diag(1, 1), q = 0, r = 1, measurements z1 = 1, z2 = 2.
        //
        // Step 1: P⁻ = [[2,1],[1,1]], K = (2/3, 1/3), x = (2/3, 1/3),
        //         P = [[2/3, 1/3], [1/3, 2/3]].
        // Step 2: x⁻ = (1, 1/3), P⁻ = [[2, 1],[1, 2/3]], S = 3,
        //         K = (2/3, 1/3), innovation 1 → x = (5/3, 2/3),
        //         P = [[2/3, 1/3], [1/3, 1/3]].
        let mut s = KalmanState::new([0.0, 0.0], 1.0, 1.0);
        s = s.predict(0.0).update([1.0, 0.0], 1.0);
        assert!((s.state[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.state[2] - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.covariance[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.covariance[(0, 2)] - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.covariance[(2, 2)] - 2.0 / 3.0).abs() < 1e-12);
        s = s.predict(0.0).update([2.0, 0.0], 1.0);
        assert!((s.state[0] - 5.0 / 3.0).abs() < 1e-12);
        assert!((s.state[2] - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.covariance[(2, 2)] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_linear_motion_converges() {
        let mut s = KalmanState::new([10.0, 20.0], 4.0, 100.0);
        let mut errors = Vec::new();
        for k in 1..200 {
            let truth = [10.0 + 2.0 * k as f64, 20.0 - 0.5 * k as f64];
            s = s.predict(0.01).update(truth, 4.0);
            errors.push(((s.state[0] - truth[0]).powi(2) + (s.state[1] - truth[1]).powi(2)).sqrt());
        }
        assert!(errors.last().unwrap() < &1e-6);
        assert!((s.velocity()[0] - 2.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn covariance_stays_psd(
            steps in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0, 0.0f64..10.0, 0.0f64..10.0, any::<bool>()), 1..60)
        ) {
            let mut s = KalmanState::new([0.0, 0.0], 1.0, 100.0);
            for (x, y, q, r, upd) in steps {
                s = s.predict(q);
                if upd {
                    s = s.update([x, y], r);
                }
                prop_assert!((s.covariance - s.covariance.transpose()).abs().max() <= 1e-9);
                prop_assert!(min_eigen(&s.covariance) >= -1e-9);
            }
        }
    }
}
