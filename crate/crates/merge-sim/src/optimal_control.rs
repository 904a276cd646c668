//! Closed-form minimum-energy solver for the double integrator.
//!
//! Minimizing the energy integral of u^2/2 between fixed endpoints makes the
//! costate on speed linear in time, so the optimal control is affine:
//! u(t) = alpha + beta * (t - t0). The module solves for (alpha, beta) from
//! the boundary conditions and evaluates the resulting cubic position /
//! quadratic speed profiles in closed form.

use crate::kinematics::VehicleState;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default minimum horizon in seconds for one-shot plans. Guards the T^3
/// division against degenerate boundary-value problems.
pub const DEFAULT_T_MIN: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("horizon {horizon:.4} s below minimum {min:.4} s")]
    HorizonTooShort { horizon: f64, min: f64 },
    #[error("time {t:.4} outside control window [{t0:.4}, {tf:.4}]")]
    OutOfWindow { t: f64, t0: f64, tf: f64 },
}

/// Fixed-endpoint boundary-value problem for the double integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bvp {
    pub t0: f64,
    pub tf: f64,
    pub p0: f64,
    pub v0: f64,
    pub pf: f64,
    pub vf: f64,
}

impl Bvp {
    pub fn horizon(&self) -> f64 {
        self.tf - self.t0
    }
}

/// Affine-in-time acceleration profile u(t) = alpha + beta * (t - t0),
/// valid on [t0, tf].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlLaw {
    pub alpha: f64,
    pub beta: f64,
    pub t0: f64,
    pub tf: f64,
}

impl ControlLaw {
    /// The zero law: hold speed on [t0, tf].
    pub fn zero(t0: f64, tf: f64) -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            t0,
            tf,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.tf - self.t0
    }

    /// Control value at `t`, which must lie in the validity window.
    pub fn eval(&self, t: f64) -> Result<f64, ControlError> {
        if t < self.t0 - 1e-9 || t > self.tf + 1e-9 {
            return Err(ControlError::OutOfWindow {
                t,
                t0: self.t0,
                tf: self.tf,
            });
        }
        Ok(self.alpha + self.beta * (t - self.t0))
    }

    /// Closed-form state at elapsed time `tau` from `(p0, v0)` under this law.
    pub fn state_at(&self, p0: f64, v0: f64, tau: f64) -> (f64, f64) {
        let p = p0 + v0 * tau + 0.5 * self.alpha * tau * tau + self.beta * tau.powi(3) / 6.0;
        let v = v0 + self.alpha * tau + 0.5 * self.beta * tau * tau;
        (p, v)
    }

    /// Sample the law from `(p0, v0)` on a uniform `dt` grid over [t0, tf].
    ///
    /// Every sample comes from the closed-form cubic anchored at the start
    /// state, not from accumulated stepping, so the terminal error is
    /// floating-point only. The stored acceleration is the instantaneous
    /// control at the sample time.
    pub fn rollout(&self, p0: f64, v0: f64, dt: f64) -> Vec<VehicleState> {
        let t_span = self.horizon();
        let n = (t_span / dt).round() as usize;
        debug_assert!(
            (n as f64 * dt - t_span).abs() < 1e-6,
            "dt must divide the horizon"
        );
        (0..=n)
            .map(|k| {
                let tau = (k as f64 * dt).min(t_span);
                let (p, v) = self.state_at(p0, v0, tau);
                VehicleState::new(self.t0 + tau, p, v, self.alpha + self.beta * tau)
            })
            .collect()
    }

    /// Energy cost of the law: the integral of u^2/2 over [t0, tf].
    pub fn energy_cost(&self) -> f64 {
        let t = self.horizon();
        0.5 * (self.alpha * self.alpha * t
            + self.alpha * self.beta * t * t
            + self.beta * self.beta * t.powi(3) / 3.0)
    }
}

/// Solve the minimum-energy fixed-endpoint problem.
///
/// With T = tf - t0, A = vf - v0 and B = pf - p0 - v0 T, the optimal affine
/// control has beta = 6A/T^2 - 12B/T^3 and alpha = -2A/T + 6B/T^2.
pub fn solve_min_energy(bvp: &Bvp, t_min: f64) -> Result<ControlLaw, ControlError> {
    let t = bvp.horizon();
    if t < t_min {
        return Err(ControlError::HorizonTooShort {
            horizon: t,
            min: t_min,
        });
    }
    let a = bvp.vf - bvp.v0;
    let b = bvp.pf - bvp.p0 - bvp.v0 * t;
    let beta = 6.0 * a / (t * t) - 12.0 * b / t.powi(3);
    let alpha = -2.0 * a / t + 6.0 * b / (t * t);
    Ok(ControlLaw {
        alpha,
        beta,
        t0: bvp.t0,
        tf: bvp.tf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn already_on_target_gives_zero_law() {
        let bvp = Bvp {
            t0: 0.0,
            tf: 10.0,
            p0: 0.0,
            v0: 10.0,
            pf: 100.0,
            vf: 10.0,
        };
        let law = solve_min_energy(&bvp, DEFAULT_T_MIN).unwrap();
        assert_abs_diff_eq!(law.alpha, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(law.beta, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_acceleration_case() {
        // v(10) = 12 and p(10) = 110 are exactly the u = 0.2 motion from (0, 10).
        let bvp = Bvp {
            t0: 0.0,
            tf: 10.0,
            p0: 0.0,
            v0: 10.0,
            pf: 110.0,
            vf: 12.0,
        };
        let law = solve_min_energy(&bvp, DEFAULT_T_MIN).unwrap();
        assert_abs_diff_eq!(law.alpha, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(law.beta, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn worked_affine_case() {
        let bvp = Bvp {
            t0: 0.0,
            tf: 5.0,
            p0: 0.0,
            v0: 20.0,
            pf: 110.0,
            vf: 22.0,
        };
        let law = solve_min_energy(&bvp, DEFAULT_T_MIN).unwrap();
        assert_abs_diff_eq!(law.alpha, 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(law.beta, -0.48, epsilon = 1e-12);
        let samples = law.rollout(0.0, 20.0, 0.04);
        let last = samples.last().unwrap();
        assert_abs_diff_eq!(last.p, 110.0, epsilon = 1e-6);
        assert_abs_diff_eq!(last.v, 22.0, epsilon = 1e-6);
    }

    #[test]
    fn horizon_guard() {
        let bvp = Bvp {
            t0: 0.0,
            tf: 0.1,
            p0: 0.0,
            v0: 10.0,
            pf: 1.0,
            vf: 10.0,
        };
        assert!(matches!(
            solve_min_energy(&bvp, DEFAULT_T_MIN),
            Err(ControlError::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn eval_control_examples() {
        let law = ControlLaw {
            alpha: 1.6,
            beta: -0.48,
            t0: 2.0,
            tf: 7.0,
        };
        assert_abs_diff_eq!(law.eval(2.0).unwrap(), 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(law.eval(7.0).unwrap(), -0.8, epsilon = 1e-12);
        assert!(matches!(
            law.eval(8.0),
            Err(ControlError::OutOfWindow { .. })
        ));
        let zero = ControlLaw::zero(0.0, 1.0);
        assert_eq!(zero.eval(0.5).unwrap(), 0.0);
    }

    #[test]
    fn zero_law_rollout_is_straight_line() {
        let law = ControlLaw::zero(0.0, 1.0);
        let samples = law.rollout(0.0, 10.0, 0.04);
        assert_eq!(samples.len(), 26);
        assert_abs_diff_eq!(samples.last().unwrap().p, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn rollout_matches_stepped_integration_coarsely() {
        // Piecewise-constant stepping of the sampled control (midpoint value
        // per step, which integrates the affine speed profile exactly) tracks
        // the closed-form cubic to O(beta * dt^2 * T).
        let (alpha, beta, t_total) = (-0.2f64, 0.05f64, 10.0f64);
        let a_term = alpha * t_total + 0.5 * beta * t_total * t_total;
        let b_term = 0.5 * alpha * t_total * t_total + beta * t_total.powi(3) / 6.0;
        let bvp = Bvp {
            t0: 0.0,
            tf: t_total,
            p0: 0.0,
            v0: 20.0,
            pf: 20.0 * t_total + b_term,
            vf: 20.0 + a_term,
        };
        let law = solve_min_energy(&bvp, DEFAULT_T_MIN).unwrap();
        assert_abs_diff_eq!(law.alpha, alpha, epsilon = 1e-9);
        assert_abs_diff_eq!(law.beta, beta, epsilon = 1e-9);
        let rolled = law.rollout(0.0, 20.0, 0.04);
        let mut state = VehicleState::new(0.0, 0.0, 20.0, law.alpha);
        let mut worst: f64 = 0.0;
        for k in 0..250 {
            let u = law.eval(crate::kinematics::grid_time(k) + 0.02).unwrap();
            state = crate::kinematics::step(&state, u, 0.04).state;
            worst = worst.max((state.p - rolled[k + 1].p).abs());
        }
        assert!(worst < 1e-4, "worst deviation {worst}");
    }

    #[test]
    fn energy_cost_examples() {
        let constant = ControlLaw {
            alpha: 0.2,
            beta: 0.0,
            t0: 0.0,
            tf: 10.0,
        };
        assert_abs_diff_eq!(constant.energy_cost(), 0.2, epsilon = 1e-12);
        assert_eq!(ControlLaw::zero(0.0, 5.0).energy_cost(), 0.0);

        // Cross-check the closed form against fine quadrature of u^2/2.
        let law = ControlLaw {
            alpha: 1.6,
            beta: -0.48,
            t0: 0.0,
            tf: 5.0,
        };
        let quad = quadrature_energy(&law, 2_000_000);
        assert_abs_diff_eq!(law.energy_cost(), quad, epsilon = 1e-6);
        assert_abs_diff_eq!(law.energy_cost(), 1.6, epsilon = 1e-12);
    }

    fn quadrature_energy(law: &ControlLaw, n: usize) -> f64 {
        // Midpoint rule, exact up to O(h^2) for the quadratic integrand.
        let h = law.horizon() / n as f64;
        (0..n)
            .map(|k| {
                let tau = (k as f64 + 0.5) * h;
                let u = law.alpha + law.beta * tau;
                0.5 * u * u * h
            })
            .sum()
    }

    /// Solve a two-segment piecewise-constant control hitting the same
    /// endpoints: accelerations u1 on [0, sT] and u2 on (sT, T].
    fn two_segment_cost(bvp: &Bvp, s: f64) -> f64 {
        let t = bvp.horizon();
        let (t1, t2) = (s * t, (1.0 - s) * t);
        let a = bvp.vf - bvp.v0;
        let b = bvp.pf - bvp.p0 - bvp.v0 * t;
        // u1 t1 + u2 t2 = a
        // u1 (t1^2/2 + t1 t2) + u2 t2^2/2 = b
        let m11 = t1;
        let m12 = t2;
        let m21 = t1 * t1 / 2.0 + t1 * t2;
        let m22 = t2 * t2 / 2.0;
        let det = m11 * m22 - m12 * m21;
        let u1 = (a * m22 - b * m12) / det;
        let u2 = (b * m11 - a * m21) / det;
        0.5 * (u1 * u1 * t1 + u2 * u2 * t2)
    }

    #[test]
    fn affine_law_beats_two_segment_competitors() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for _ in 0..200 {
            let t = rng.random_range(1.0..20.0);
            let bvp = Bvp {
                t0: 0.0,
                tf: t,
                p0: rng.random_range(-50.0..50.0),
                v0: rng.random_range(0.0..35.0),
                pf: rng.random_range(0.0..600.0),
                vf: rng.random_range(0.0..35.0),
            };
            let law = solve_min_energy(&bvp, DEFAULT_T_MIN).unwrap();
            for s in [0.2, 0.5, 0.8] {
                let competitor = two_segment_cost(&bvp, s);
                assert!(
                    law.energy_cost() <= competitor + 1e-9,
                    "competitor at s={s} beat the law: {} < {}",
                    competitor,
                    law.energy_cost()
                );
            }
        }
    }

    proptest! {
        /// Rollout terminal state matches the boundary conditions.
        #[test]
        fn endpoint_exactness(
            t in 0.5f64..30.0,
            p0 in -100.0f64..100.0,
            v0 in 0.0f64..40.0,
            dpf in -50.0f64..800.0,
            vf in 0.0f64..40.0,
        ) {
            let n = (t / 0.04).round().max(1.0);
            let t = n * 0.04;
            let bvp = Bvp { t0: 0.0, tf: t, p0, v0, pf: p0 + dpf, vf };
            let law = solve_min_energy(&bvp, DEFAULT_T_MIN).unwrap();
            let samples = law.rollout(p0, v0, 0.04);
            let last = samples.last().unwrap();
            prop_assert!((last.p - bvp.pf).abs() < 1e-6);
            prop_assert!((last.v - bvp.vf).abs() < 1e-6);
        }

        /// Shifting the window leaves the coefficients unchanged.
        #[test]
        fn time_translation_invariance(
            shift in -100.0f64..100.0,
            t in 0.5f64..20.0,
            v0 in 0.0f64..40.0,
            vf in 0.0f64..40.0,
            dp in -50.0f64..400.0,
        ) {
            let base = Bvp { t0: 0.0, tf: t, p0: 0.0, v0, pf: dp, vf };
            let moved = Bvp { t0: shift, tf: shift + t, ..base };
            let l0 = solve_min_energy(&base, DEFAULT_T_MIN).unwrap();
            let l1 = solve_min_energy(&moved, DEFAULT_T_MIN).unwrap();
            prop_assert!((l0.alpha - l1.alpha).abs() < 1e-9);
            prop_assert!((l0.beta - l1.beta).abs() < 1e-9);
        }
    }
}
