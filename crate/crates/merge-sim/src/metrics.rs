//! Evaluation measures: merging time gap (safety), acceleration RMS
//! (comfort), and polynomial fuel consumption (energy), plus aggregation,
//! improvement rates, and Welch significance testing.

use crate::kinematics::{KinematicsError, Trajectory};
use crate::merge_planning::Sequence;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("samples too small or degenerate for a t test")]
    DegenerateSamples,
    #[error("zero baseline for {measure}; improvement rate undefined")]
    ZeroBaseline { measure: String },
}

/// Fuel-rate polynomial coefficients: cruise terms theta0..theta3 in
/// mL/s per power of speed, acceleration terms sig0..sig2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelCoefficients {
    pub theta: [f64; 4],
    pub sigma: [f64; 3],
}

impl Default for FuelCoefficients {
    fn default() -> Self {
        Self {
            theta: [0.1569, 0.0245, -7.415e-4, 5.975e-5],
            sigma: [7.224e-2, 9.681e-2, 1.075e-3],
        }
    }
}

/// How deceleration samples contribute to fuel.
///
/// `ZeroTotal` neglects fuel entirely while decelerating (the default);
/// `ZeroAccelTerm` keeps the cruise component and zeroes only the
/// acceleration component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecelRule {
    #[default]
    ZeroTotal,
    ZeroAccelTerm,
}

/// Instantaneous fuel rate in mL/s.
pub fn fuel_rate(v: f64, a: f64, coeffs: &FuelCoefficients, rule: DecelRule) -> f64 {
    let cruise = coeffs.theta[0]
        + coeffs.theta[1] * v
        + coeffs.theta[2] * v * v
        + coeffs.theta[3] * v * v * v;
    if a < 0.0 {
        return match rule {
            DecelRule::ZeroTotal => 0.0,
            DecelRule::ZeroAccelTerm => cruise,
        };
    }
    let accel = a * (coeffs.sigma[0] + coeffs.sigma[1] * v + coeffs.sigma[2] * v * v);
    cruise + accel
}

/// Total fuel in mL over the trajectory, by the left rectangle rule at `dt`.
pub fn fuel(traj: &Trajectory, coeffs: &FuelCoefficients, dt: f64, rule: DecelRule) -> f64 {
    assert!(!traj.is_empty(), "fuel on empty trajectory");
    let n = traj.len().saturating_sub(1).max(1);
    traj.samples[..n.min(traj.len())]
        .iter()
        .map(|s| fuel_rate(s.v, s.a, coeffs, rule) * dt)
        .sum()
}

/// Root mean square of the acceleration samples over the metric window
/// (left samples, so that a_rms^2 times the window length equals
/// dt * sum of a^2).
pub fn a_rms(traj: &Trajectory) -> f64 {
    assert!(!traj.is_empty(), "a_rms on empty trajectory");
    let n = traj.len().saturating_sub(1).max(1);
    let sum_sq: f64 = traj.samples[..n.min(traj.len())]
        .iter()
        .map(|s| s.a * s.a)
        .sum();
    (sum_sq / n as f64).sqrt()
}

/// Merging time gap: the interval between the leader's rear leaving the
/// merging position and the follower's front arriving there. Non-positive
/// values mean a collision at the merging position.
pub fn merging_time_gap(
    lead: &Trajectory,
    follow: &Trajectory,
    p_merge: f64,
    l: f64,
) -> Result<f64, MetricsError> {
    let t_lead = lead.crossing_time(p_merge + l)?;
    let t_follow = follow.crossing_time(p_merge)?;
    Ok(t_follow - t_lead)
}

/// Sequence-aware merging time gap with constant-speed extrapolation past
/// the trajectory ends. Simulation outputs stop at the merging time while
/// the follower arrives about h seconds later, so the crossing times beyond
/// the recorded span are extended at the terminal speed.
pub fn merging_time_gap_for(
    onramp: &Trajectory,
    mainline: &Trajectory,
    sequence: Sequence,
    p_merge: f64,
    l: f64,
) -> Result<f64, MetricsError> {
    let (lead, follow) = match sequence {
        Sequence::MainlineLeads => (mainline, onramp),
        Sequence::OnRampLeads => (onramp, mainline),
    };
    let t_lead = lead.crossing_time_extrapolated(p_merge + l)?;
    let t_follow = follow.crossing_time_extrapolated(p_merge)?;
    Ok(t_follow - t_lead)
}

/// Per-pair evaluation results for one case run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub gap_s: f64,
    pub arms_onramp: f64,
    pub arms_mainline: f64,
    pub fuel_onramp: f64,
    pub fuel_mainline: f64,
    pub collision: bool,
}

impl PairMetrics {
    /// Evaluate a run. The merging position is the on-ramp vehicle's actual
    /// front position at the end of the run (recursive control can shift the
    /// merge point away from the preset position).
    pub fn compute(
        onramp: &Trajectory,
        mainline: &Trajectory,
        sequence: Sequence,
        l: f64,
        coeffs: &FuelCoefficients,
        rule: DecelRule,
    ) -> Result<PairMetrics, MetricsError> {
        let p_merge_actual = onramp.last().p;
        let gap_s = merging_time_gap_for(onramp, mainline, sequence, p_merge_actual, l)?;
        let dt_on = onramp.dt();
        let dt_main = mainline.dt();
        Ok(PairMetrics {
            gap_s,
            arms_onramp: a_rms(onramp),
            arms_mainline: a_rms(mainline),
            fuel_onramp: fuel(onramp, coeffs, dt_on, rule),
            fuel_mainline: fuel(mainline, coeffs, dt_main, rule),
            collision: gap_s <= 0.0,
        })
    }
}

/// Per-case aggregate over a batch: means of every measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseAggregate {
    pub n: usize,
    pub collisions: usize,
    pub gap_s: f64,
    pub arms_onramp: f64,
    pub arms_mainline: f64,
    pub fuel_onramp: f64,
    pub fuel_mainline: f64,
}

impl CaseAggregate {
    pub fn from_metrics(all: &[PairMetrics]) -> Option<CaseAggregate> {
        if all.is_empty() {
            return None;
        }
        let n = all.len() as f64;
        let mean = |f: fn(&PairMetrics) -> f64| all.iter().map(f).sum::<f64>() / n;
        Some(CaseAggregate {
            n: all.len(),
            collisions: all.iter().filter(|m| m.collision).count(),
            gap_s: mean(|m| m.gap_s),
            arms_onramp: mean(|m| m.arms_onramp),
            arms_mainline: mean(|m| m.arms_mainline),
            fuel_onramp: mean(|m| m.fuel_onramp),
            fuel_mainline: mean(|m| m.fuel_mainline),
        })
    }
}

/// Improvement rates of a case over the baseline, in percent. Fuel and A-RMS
/// improve downward, the gap improves upward; the conventions are recorded
/// alongside the numbers in the serialized output. `None` marks an undefined
/// rate (zero baseline).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRates {
    pub gap_s: Option<f64>,
    pub arms_onramp: Option<f64>,
    pub arms_mainline: Option<f64>,
    pub fuel_onramp: Option<f64>,
    pub fuel_mainline: Option<f64>,
}

/// Direction conventions, embedded in improvement-rate exports.
pub const IMPROVEMENT_DIRECTIONS: [(&str, &str); 5] = [
    ("gap_s", "100*(case-baseline)/baseline, higher is better"),
    (
        "arms_onramp",
        "100*(baseline-case)/baseline, lower is better",
    ),
    (
        "arms_mainline",
        "100*(baseline-case)/baseline, lower is better",
    ),
    (
        "fuel_onramp",
        "100*(baseline-case)/baseline, lower is better",
    ),
    (
        "fuel_mainline",
        "100*(baseline-case)/baseline, lower is better",
    ),
];

pub fn improvement_rates(baseline: &CaseAggregate, case: &CaseAggregate) -> ImprovementRates {
    let lower_better = |base: f64, val: f64| {
        if base.abs() < 1e-12 {
            None
        } else {
            Some(100.0 * (base - val) / base)
        }
    };
    let higher_better = |base: f64, val: f64| {
        if base.abs() < 1e-12 {
            None
        } else {
            Some(100.0 * (val - base) / base)
        }
    };
    ImprovementRates {
        gap_s: higher_better(baseline.gap_s, case.gap_s),
        arms_onramp: lower_better(baseline.arms_onramp, case.arms_onramp),
        arms_mainline: lower_better(baseline.arms_mainline, case.arms_mainline),
        fuel_onramp: lower_better(baseline.fuel_onramp, case.fuel_onramp),
        fuel_mainline: lower_better(baseline.fuel_mainline, case.fuel_mainline),
    }
}

/// Welch's unequal-variance t test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t_stat: f64,
    pub dof: f64,
    pub p_value: f64,
    pub significant_95: bool,
}

pub fn welch_t_test(xs: &[f64], ys: &[f64]) -> Result<WelchResult, MetricsError> {
    let (n, m) = (xs.len(), ys.len());
    if n < 2 || m < 2 {
        return Err(MetricsError::DegenerateSamples);
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let var = |s: &[f64], mu: f64| {
        s.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (s.len() - 1) as f64
    };
    let (mx, my) = (mean(xs), mean(ys));
    let (vx, vy) = (var(xs, mx), var(ys, my));
    if vx <= 0.0 && vy <= 0.0 {
        if (mx - my).abs() < 1e-300 {
            // Identical constant samples: no evidence of a difference.
            return Ok(WelchResult {
                t_stat: 0.0,
                dof: (n + m - 2) as f64,
                p_value: 1.0,
                significant_95: false,
            });
        }
        return Err(MetricsError::DegenerateSamples);
    }
    let (a, b) = (vx / n as f64, vy / m as f64);
    let se = (a + b).sqrt();
    let t_stat = (mx - my) / se;
    let dof = (a + b) * (a + b) / (a * a / (n as f64 - 1.0) + b * b / (m as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).expect("valid dof");
    let p_value = 2.0 * (1.0 - dist.cdf(t_stat.abs()));
    Ok(WelchResult {
        t_stat,
        dof,
        p_value,
        significant_95: p_value < 0.05,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{grid_time, Lane, VehicleState, DT};
    use crate::optimal_control::ControlLaw;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn const_traj(p0: f64, v: f64, a: f64, n: usize) -> Trajectory {
        let samples = (0..=n)
            .map(|k| {
                let t = grid_time(k);
                VehicleState::new(t, p0 + v * t + 0.5 * a * t * t, v + a * t, a)
            })
            .collect();
        Trajectory::new("veh", Lane::Mainline, samples)
    }

    #[test]
    fn gap_constant_speed_example() {
        let lead = const_traj(47.5, 25.0, 0.0, 300);
        let follow = const_traj(0.0, 25.0, 0.0, 300);
        let gap = merging_time_gap(&lead, &follow, 200.0, 2.5).unwrap();
        assert_abs_diff_eq!(gap, 1.8, epsilon = 1e-9);
    }

    #[test]
    fn gap_simultaneous_arrival_is_collision() {
        let lead = const_traj(0.0, 25.0, 0.0, 300);
        let follow = const_traj(0.0, 25.0, 0.0, 300);
        let gap = merging_time_gap(&lead, &follow, 200.0, 2.5).unwrap();
        assert!(gap <= 0.0);
        assert_abs_diff_eq!(gap, -0.1, epsilon = 1e-9);
    }

    #[test]
    fn gap_accelerating_follower_shrinks_headway() {
        let lead = const_traj(50.0, 25.0, 0.0, 400);
        let accel_follow = const_traj(0.0, 25.0, 0.5, 400);
        let const_follow = const_traj(0.0, 25.0, 0.0, 400);
        let g_accel = merging_time_gap(&lead, &accel_follow, 200.0, 2.5).unwrap();
        let g_const = merging_time_gap(&lead, &const_follow, 200.0, 2.5).unwrap();
        assert!(g_accel > 0.0);
        assert!(g_accel < g_const);
    }

    #[test]
    fn gap_not_reached_propagates() {
        let lead = const_traj(47.5, 25.0, 0.0, 10);
        let follow = const_traj(0.0, 25.0, 0.0, 10);
        assert!(matches!(
            merging_time_gap(&lead, &follow, 500.0, 2.5),
            Err(MetricsError::Kinematics(KinematicsError::NotReached { .. }))
        ));
    }

    #[test]
    fn a_rms_basics() {
        assert_abs_diff_eq!(
            a_rms(&const_traj(0.0, 20.0, 0.2, 100)),
            0.2,
            epsilon = 1e-12
        );
        let mut alternating = const_traj(0.0, 20.0, 0.0, 100);
        for (k, s) in alternating.samples.iter_mut().enumerate() {
            s.a = if k % 2 == 0 { 1.0 } else { -1.0 };
        }
        assert_abs_diff_eq!(a_rms(&alternating), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn a_rms_of_affine_law_matches_quadrature() {
        let law = ControlLaw {
            alpha: 1.6,
            beta: -0.48,
            t0: 0.0,
            tf: 5.0,
        };
        let samples = law.rollout(0.0, 20.0, DT);
        let traj = Trajectory::new("veh", Lane::Onramp, samples);
        // (1/T) * integral of u^2 = 3.2 / 5 = 0.64, so the RMS is 0.8.
        assert_abs_diff_eq!(a_rms(&traj), 0.8, epsilon = 1e-2);
    }

    #[test]
    fn a_rms_definition_identity() {
        let traj = const_traj(0.0, 20.0, 0.7, 250);
        let n = traj.len() - 1;
        let window = n as f64 * DT;
        let sum_sq: f64 = traj.samples[..n].iter().map(|s| s.a * s.a).sum();
        assert_abs_diff_eq!(a_rms(&traj).powi(2) * window, DT * sum_sq, epsilon = 1e-9);
    }

    #[test]
    fn fuel_cruise_point_check() {
        let coeffs = FuelCoefficients::default();
        assert_abs_diff_eq!(
            fuel_rate(20.0, 0.0, &coeffs, DecelRule::ZeroTotal),
            0.8283,
            epsilon = 1e-4
        );
        // One 1-second sample at v=20, a=0.
        let traj = Trajectory::new(
            "veh",
            Lane::Onramp,
            vec![
                VehicleState::new(0.0, 0.0, 20.0, 0.0),
                VehicleState::new(1.0, 20.0, 20.0, 0.0),
            ],
        );
        assert_abs_diff_eq!(
            fuel(&traj, &coeffs, 1.0, DecelRule::ZeroTotal),
            0.8283,
            epsilon = 1e-4
        );
    }

    #[test]
    fn fuel_accel_point_check() {
        let coeffs = FuelCoefficients::default();
        assert_abs_diff_eq!(
            fuel_rate(20.0, 1.0, &coeffs, DecelRule::ZeroTotal),
            3.2667,
            epsilon = 1e-4
        );
    }

    #[test]
    fn fuel_deceleration_rules() {
        let coeffs = FuelCoefficients::default();
        assert_eq!(fuel_rate(20.0, -0.5, &coeffs, DecelRule::ZeroTotal), 0.0);
        assert_abs_diff_eq!(
            fuel_rate(20.0, -0.5, &coeffs, DecelRule::ZeroAccelTerm),
            0.8283,
            epsilon = 1e-4
        );
    }

    #[test]
    fn fuel_monotone_in_duration() {
        let coeffs = FuelCoefficients::default();
        let long = const_traj(0.0, 20.0, 0.0, 200);
        let short = const_traj(0.0, 20.0, 0.0, 100);
        assert!(
            fuel(&long, &coeffs, DT, DecelRule::ZeroTotal)
                >= fuel(&short, &coeffs, DT, DecelRule::ZeroTotal)
        );
    }

    #[test]
    fn rectangle_rule_converges() {
        // Fuel under an affine law: Richardson-extrapolated rectangle sums
        // agree with fine quadrature of the rate polynomial.
        let coeffs = FuelCoefficients::default();
        let law = ControlLaw {
            alpha: 1.2,
            beta: -0.3,
            t0: 0.0,
            tf: 8.0,
        };
        let make = |dt: f64| Trajectory::new("veh", Lane::Onramp, law.rollout(0.0, 22.0, dt));
        let f_h = fuel(&make(DT), &coeffs, DT, DecelRule::ZeroTotal);
        let f_h2 = fuel(&make(DT / 2.0), &coeffs, DT / 2.0, DecelRule::ZeroTotal);
        let extrapolated = 2.0 * f_h2 - f_h;
        // Oracle: midpoint quadrature of the exact rate along the law.
        let n = 400_000;
        let h = law.horizon() / n as f64;
        let oracle: f64 = (0..n)
            .map(|k| {
                let tau = (k as f64 + 0.5) * h;
                let (_, v) = law.state_at(0.0, 22.0, tau);
                let a = law.alpha + law.beta * tau;
                fuel_rate(v, a, &coeffs, DecelRule::ZeroTotal) * h
            })
            .sum();
        assert!((f_h - oracle).abs() > (extrapolated - oracle).abs());
        assert_abs_diff_eq!(extrapolated, oracle, epsilon = 1e-4);
    }

    #[test]
    fn improvement_rate_conventions() {
        let base = CaseAggregate {
            n: 10,
            collisions: 0,
            gap_s: 0.9,
            arms_onramp: 1.0,
            arms_mainline: 1.0,
            fuel_onramp: 100.0,
            fuel_mainline: 100.0,
        };
        let same = improvement_rates(&base, &base);
        assert_eq!(same.gap_s, Some(0.0));
        assert_eq!(same.fuel_onramp, Some(0.0));
        let better = CaseAggregate {
            gap_s: 1.8,
            fuel_onramp: 90.0,
            ..base
        };
        let rates = improvement_rates(&base, &better);
        assert_abs_diff_eq!(rates.gap_s.unwrap(), 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rates.fuel_onramp.unwrap(), 10.0, epsilon = 1e-9);
    }

    #[test]
    fn improvement_rate_zero_baseline_undefined() {
        let base = CaseAggregate {
            n: 10,
            collisions: 0,
            gap_s: 0.9,
            arms_onramp: 0.0,
            arms_mainline: 0.0,
            fuel_onramp: 100.0,
            fuel_mainline: 100.0,
        };
        let rates = improvement_rates(&base, &base);
        assert_eq!(rates.arms_onramp, None);
    }

    #[test]
    fn welch_identical_samples() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let out = welch_t_test(&xs, &xs).unwrap();
        assert_abs_diff_eq!(out.t_stat, 0.0, epsilon = 1e-12);
        assert!(!out.significant_95);
    }

    #[test]
    fn welch_detects_unit_shift() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let norm = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..100).map(|_| rng.sample(norm)).collect();
        let ys: Vec<f64> = (0..100).map(|_| rng.sample(norm) + 1.0).collect();
        let out = welch_t_test(&xs, &ys).unwrap();
        assert!(out.significant_95, "p = {}", out.p_value);
        assert!(out.t_stat < 0.0);
    }

    #[test]
    fn welch_degenerate_samples() {
        assert!(matches!(
            welch_t_test(&[1.0], &[1.0, 2.0]),
            Err(MetricsError::DegenerateSamples)
        ));
        assert!(matches!(
            welch_t_test(&[1.0, 1.0], &[2.0, 2.0]),
            Err(MetricsError::DegenerateSamples)
        ));
    }
}
