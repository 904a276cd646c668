//! Longitudinal double-integrator state, exact stepping, and trajectory utilities.
//!
//! Positions are measured along the lane from the Start Line (p = 0) and refer
//! to the front bumper; a vehicle's rear is at `p - l`. The sampling step is
//! [`DT`] (25 Hz) throughout the simulator.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

/// Simulation sampling step in seconds (25 Hz).
pub const DT: f64 = 0.04;

/// Tolerance for deciding that a time sits on the sampling grid.
pub const GRID_TOL: f64 = 1e-9;

/// Time of grid sample `k`. Always computed as `k * DT` rather than by
/// accumulation so that repeated passes over a trajectory agree bit-for-bit.
pub fn grid_time(k: usize) -> f64 {
    k as f64 * DT
}

/// Nearest grid index for `t`, or `None` if `t` is off-grid by more than `tol`.
pub fn grid_index(t: f64, tol: f64) -> Option<usize> {
    if t < -tol {
        return None;
    }
    let k = (t / DT).round();
    if (t - k * DT).abs() <= tol {
        Some(k as usize)
    } else {
        None
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("position {target:.3} m not reached (trajectory ends at {last:.3} m)")]
    NotReached { target: f64, last: f64 },
    #[error("window [{t0:.3}, {t1:.3}] outside trajectory span [{lo:.3}, {hi:.3}]")]
    OutOfSpan { t0: f64, t1: f64, lo: f64, hi: f64 },
}

/// Longitudinal kinematic state: time, front-bumper position, speed, and the
/// applied acceleration (the control input u).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub t: f64,
    pub p: f64,
    pub v: f64,
    pub a: f64,
}

impl VehicleState {
    pub fn new(t: f64, p: f64, v: f64, a: f64) -> Self {
        Self { t, p, v, a }
    }
}

/// Outcome of one kinematic step. `clamped` is raised when the speed floor
/// at zero was hit; it is a flag, not an error.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub state: VehicleState,
    pub clamped: bool,
}

/// Advance one state by `dt` under constant acceleration `u`, using the exact
/// quadratic update so that analytic control laws hit their terminal
/// constraints to floating-point precision.
pub fn step(state: &VehicleState, u: f64, dt: f64) -> StepOutcome {
    debug_assert!(dt > 0.0, "step requires dt > 0");
    let v_next = state.v + u * dt;
    if v_next < 0.0 {
        // Speed floor: stop at v = 0 and stay there for the rest of the step.
        let t_stop = if u != 0.0 { -state.v / u } else { 0.0 };
        let t_stop = t_stop.clamp(0.0, dt);
        let p_stop = state.p + state.v * t_stop + 0.5 * u * t_stop * t_stop;
        StepOutcome {
            state: VehicleState::new(state.t + dt, p_stop, 0.0, u),
            clamped: true,
        }
    } else {
        StepOutcome {
            state: VehicleState::new(
                state.t + dt,
                state.p + state.v * dt + 0.5 * u * dt * dt,
                v_next,
                u,
            ),
            clamped: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lane {
    Mainline,
    Onramp,
}

impl std::fmt::Display for Lane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Lane::Mainline => write!(f, "mainline"),
            Lane::Onramp => write!(f, "onramp"),
        }
    }
}

impl std::str::FromStr for Lane {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mainline" => Ok(Lane::Mainline),
            "onramp" => Ok(Lane::Onramp),
            other => Err(format!("unknown lane {other:?}")),
        }
    }
}

/// Uniformly sampled longitudinal trajectory of one vehicle.
///
/// `ingested` marks trajectories read from external data, which are exempt
/// from the kinematic-consistency invariant that simulator-produced
/// piecewise-constant-acceleration trajectories satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub vehicle_id: String,
    pub lane: Lane,
    pub samples: Vec<VehicleState>,
    #[serde(default)]
    pub ingested: bool,
}

impl Trajectory {
    pub fn new(vehicle_id: impl Into<String>, lane: Lane, samples: Vec<VehicleState>) -> Self {
        Self {
            vehicle_id: vehicle_id.into(),
            lane,
            samples,
            ingested: false,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &VehicleState {
        &self.samples[0]
    }

    pub fn last(&self) -> &VehicleState {
        &self.samples[self.samples.len() - 1]
    }

    /// Sampling step, taken from the first two samples.
    pub fn dt(&self) -> f64 {
        if self.samples.len() < 2 {
            DT
        } else {
            self.samples[1].t - self.samples[0].t
        }
    }

    /// Maximum deviation of the sample times from a uniform grid.
    pub fn grid_residual(&self) -> f64 {
        let dt = self.dt();
        let t0 = self.samples[0].t;
        self.samples
            .iter()
            .enumerate()
            .map(|(k, s)| (s.t - (t0 + k as f64 * dt)).abs())
            .fold(0.0, f64::max)
    }

    /// Maximum violation of the constant-acceleration update between
    /// consecutive samples, in meters / (m/s) combined. Simulator-produced
    /// piecewise-constant trajectories keep this below 1e-6; law rollouts
    /// carry an O(beta * dt^3) residual instead.
    pub fn kinematic_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in self.samples.windows(2) {
            let (s0, s1) = (&w[0], &w[1]);
            let dt = s1.t - s0.t;
            let p_pred = s0.p + s0.v * dt + 0.5 * s0.a * dt * dt;
            let v_pred = (s0.v + s0.a * dt).max(0.0);
            worst = worst.max((s1.p - p_pred).abs()).max((s1.v - v_pred).abs());
        }
        worst
    }

    /// Linear interpolation of the state at time `t` between bracketing samples.
    pub fn state_at(&self, t: f64) -> Result<VehicleState, KinematicsError> {
        let (lo, hi) = (self.first().t, self.last().t);
        if t < lo - GRID_TOL || t > hi + GRID_TOL {
            return Err(KinematicsError::OutOfSpan {
                t0: t,
                t1: t,
                lo,
                hi,
            });
        }
        if self.samples.len() == 1 {
            return Ok(self.samples[0]);
        }
        let t = t.clamp(lo, hi);
        let dt = self.dt();
        let k = (((t - lo) / dt).floor() as usize).min(self.samples.len() - 2);
        let (s0, s1) = (&self.samples[k], &self.samples[k + 1]);
        let w = ((t - s0.t) / (s1.t - s0.t)).clamp(0.0, 1.0);
        Ok(VehicleState::new(
            t,
            s0.p + w * (s1.p - s0.p),
            s0.v + w * (s1.v - s0.v),
            s0.a + w * (s1.a - s0.a),
        ))
    }

    /// First time the front bumper reaches `p_target`, linearly interpolated
    /// between the bracketing samples. A target already behind the first
    /// sample is reported as reached at the start time.
    pub fn crossing_time(&self, p_target: f64) -> Result<f64, KinematicsError> {
        assert!(
            !self.samples.is_empty(),
            "crossing_time on empty trajectory"
        );
        if p_target <= self.first().p {
            return Ok(self.first().t);
        }
        for w in self.samples.windows(2) {
            let (s0, s1) = (&w[0], &w[1]);
            if s1.p >= p_target && s0.p < p_target {
                let frac = (p_target - s0.p) / (s1.p - s0.p);
                return Ok(s0.t + frac * (s1.t - s0.t));
            }
        }
        Err(KinematicsError::NotReached {
            target: p_target,
            last: self.last().p,
        })
    }

    /// Like [`crossing_time`](Self::crossing_time), but extrapolates past the
    /// final sample at constant terminal speed. Used for surrogate-safety
    /// gaps on outputs that end at the merging time.
    pub fn crossing_time_extrapolated(&self, p_target: f64) -> Result<f64, KinematicsError> {
        match self.crossing_time(p_target) {
            Err(KinematicsError::NotReached { .. }) if self.last().v > 1e-9 => {
                let last = self.last();
                Ok(last.t + (p_target - last.p) / last.v)
            }
            other => other,
        }
    }

    /// Sub-trajectory on `[t0, t1]` with samples re-laid on the `dt` grid
    /// anchored at `t0`; endpoints are linearly interpolated.
    pub fn resample_window(&self, t0: f64, t1: f64) -> Result<Trajectory, KinematicsError> {
        let (lo, hi) = (self.first().t, self.last().t);
        if t0 >= t1 || t0 < lo - GRID_TOL || t1 > hi + GRID_TOL {
            return Err(KinematicsError::OutOfSpan { t0, t1, lo, hi });
        }
        let dt = self.dt();
        let n = ((t1 - t0) / dt + GRID_TOL).floor() as usize;
        let mut samples = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let t = (t0 + k as f64 * dt).min(hi);
            samples.push(self.state_at(t)?);
        }
        let mut out = Trajectory::new(self.vehicle_id.clone(), self.lane, samples);
        out.ingested = self.ingested;
        Ok(out)
    }

    /// Serialize as CSV with header `t,p,v,a`, 6 decimal places, rows by t.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,p,v,a")?;
        for s in &self.samples {
            writeln!(w, "{:.6},{:.6},{:.6},{:.6}", s.t, s.p, s.v, s.a)?;
        }
        Ok(())
    }

    /// Parse the `t,p,v,a` CSV format produced by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: BufRead>(
        vehicle_id: impl Into<String>,
        lane: Lane,
        r: R,
    ) -> Result<Trajectory, std::io::Error> {
        let mut samples = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if i == 0 {
                if line != "t,p,v,a" {
                    return Err(std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("expected header t,p,v,a, got {line:?}"),
                    ));
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("row {i}: expected 4 fields, got {}", fields.len()),
                ));
            }
            let parse = |s: &str| -> Result<f64, std::io::Error> {
                s.parse::<f64>().map_err(|e| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("row {i}: bad number {s:?}: {e}"),
                    )
                })
            };
            samples.push(VehicleState::new(
                parse(fields[0])?,
                parse(fields[1])?,
                parse(fields[2])?,
                parse(fields[3])?,
            ));
        }
        Ok(Trajectory::new(vehicle_id, lane, samples))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn step_zero_input_drift() {
        let s = VehicleState::new(0.0, 0.0, 10.0, 0.0);
        let out = step(&s, 0.0, 0.04);
        assert_abs_diff_eq!(out.state.p, 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(out.state.v, 10.0, epsilon = 1e-12);
        assert!(!out.clamped);
    }

    #[test]
    fn step_constant_acceleration() {
        let s = VehicleState::new(0.0, 0.0, 10.0, 0.0);
        let out = step(&s, 2.0, 1.0);
        assert_abs_diff_eq!(out.state.p, 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.state.v, 12.0, epsilon = 1e-12);
    }

    #[test]
    fn step_quadratic_update() {
        let s = VehicleState::new(0.0, 100.0, 20.0, 0.0);
        let out = step(&s, -1.0, 0.04);
        assert_abs_diff_eq!(out.state.p, 100.7992, epsilon = 1e-12);
        assert_abs_diff_eq!(out.state.v, 19.96, epsilon = 1e-12);
    }

    #[test]
    fn step_clamps_speed_at_zero() {
        let s = VehicleState::new(0.0, 0.0, 1.0, 0.0);
        let out = step(&s, -2.0, 1.0);
        assert!(out.clamped);
        assert_eq!(out.state.v, 0.0);
        // Stops after 0.5 s having covered 0.25 m.
        assert_abs_diff_eq!(out.state.p, 0.25, epsilon = 1e-12);
    }

    fn constant_speed_traj(v: f64, n: usize) -> Trajectory {
        let samples = (0..=n)
            .map(|k| VehicleState::new(grid_time(k), v * grid_time(k), v, 0.0))
            .collect();
        Trajectory::new("veh", Lane::Mainline, samples)
    }

    #[test]
    fn crossing_time_constant_speed() {
        let traj = constant_speed_traj(20.0, 200);
        assert_abs_diff_eq!(traj.crossing_time(100.0).unwrap(), 5.0, epsilon = 1e-9);
    }

    #[test]
    fn crossing_time_linear_midpoint() {
        let traj = Trajectory::new(
            "veh",
            Lane::Onramp,
            vec![
                VehicleState::new(0.0, 0.0, 10.0, 0.0),
                VehicleState::new(0.04, 0.4, 10.0, 0.0),
            ],
        );
        assert_abs_diff_eq!(traj.crossing_time(0.2).unwrap(), 0.02, epsilon = 1e-12);
    }

    #[test]
    fn crossing_time_matches_quadratic_root() {
        // Accelerate u=2 from (p=0, v=10) for 1 s, then coast at v=12.
        let mut samples = vec![VehicleState::new(0.0, 0.0, 10.0, 2.0)];
        for k in 0..25 {
            let out = step(&samples[k], 2.0, DT);
            samples.push(out.state);
        }
        for k in 25..50 {
            let out = step(&samples[k], 0.0, DT);
            samples.push(out.state);
        }
        let traj = Trajectory::new("veh", Lane::Onramp, samples);
        // Analytic root of 10 t + t^2 = 5.25 is t = 0.5.
        let t = traj.crossing_time(5.25).unwrap();
        assert_abs_diff_eq!(t, 0.5, epsilon = 1e-4);
    }

    #[test]
    fn crossing_time_not_reached() {
        let traj = constant_speed_traj(20.0, 10);
        match traj.crossing_time(1000.0) {
            Err(KinematicsError::NotReached { .. }) => {}
            other => panic!("expected NotReached, got {other:?}"),
        }
    }

    #[test]
    fn crossing_time_extrapolates_constant_speed() {
        let traj = constant_speed_traj(20.0, 10);
        assert_abs_diff_eq!(
            traj.crossing_time_extrapolated(100.0).unwrap(),
            5.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn resample_full_span_is_identity() {
        let traj = constant_speed_traj(20.0, 50);
        let out = traj.resample_window(0.0, grid_time(50)).unwrap();
        assert_eq!(out.samples.len(), traj.samples.len());
        for (a, b) in out.samples.iter().zip(&traj.samples) {
            assert_abs_diff_eq!(a.p, b.p, epsilon = 1e-9);
            assert_abs_diff_eq!(a.v, b.v, epsilon = 1e-9);
        }
    }

    #[test]
    fn resample_two_samples() {
        let traj = constant_speed_traj(10.0, 1);
        let out = traj.resample_window(0.0, 0.04).unwrap();
        assert_eq!(out.samples.len(), 2);
    }

    #[test]
    fn resample_mid_sample_start_stays_consistent() {
        // Constant acceleration trajectory; interpolated window keeps the
        // constant-acceleration consistency because p is piecewise quadratic
        // but v is piecewise linear and a constant.
        let mut samples = vec![VehicleState::new(0.0, 0.0, 10.0, 1.0)];
        for k in 0..100 {
            samples.push(step(&samples[k], 1.0, DT).state);
        }
        let traj = Trajectory::new("veh", Lane::Onramp, samples);
        let win = traj.resample_window(0.02, 3.98).unwrap();
        assert_abs_diff_eq!(win.first().t, 0.02, epsilon = 1e-12);
        // Interpolated p sits within u*dt^2/8 of the quadratic path.
        let exact = 10.0 * 0.02 + 0.5 * 0.02 * 0.02;
        assert!((win.first().p - exact).abs() < 1.0 * DT * DT / 8.0 + 1e-12);
        assert!(win.grid_residual() < 1e-9);
    }

    #[test]
    fn out_of_span_window_rejected() {
        let traj = constant_speed_traj(10.0, 10);
        assert!(matches!(
            traj.resample_window(-1.0, 0.2),
            Err(KinematicsError::OutOfSpan { .. })
        ));
        assert!(matches!(
            traj.resample_window(0.0, 99.0),
            Err(KinematicsError::OutOfSpan { .. })
        ));
    }

    #[test]
    fn csv_round_trip_six_decimals() {
        let traj = constant_speed_traj(23.456789, 25);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let parsed = Trajectory::read_csv("veh", Lane::Mainline, &buf[..]).unwrap();
        let mut buf2 = Vec::new();
        parsed.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    proptest! {
        /// Composing N constant-u steps equals one step of N*dt.
        #[test]
        fn step_composition_is_exact(
            v0 in 0.5f64..40.0,
            u in -3.0f64..3.0,
            n in 1usize..200,
        ) {
            let s0 = VehicleState::new(0.0, 0.0, v0, u);
            // Skip runs that would hit the speed floor.
            prop_assume!(v0 + u * (n as f64) * DT > 0.0);
            let mut s = s0;
            for _ in 0..n {
                s = step(&s, u, DT).state;
            }
            let big = step(&s0, u, n as f64 * DT).state;
            prop_assert!((s.p - big.p).abs() < 1e-9);
            prop_assert!((s.v - big.v).abs() < 1e-9);
        }

        /// Crossing time is monotone in the target for non-decreasing positions.
        #[test]
        fn crossing_time_monotone(
            v in 1.0f64..40.0,
            p1 in 0.0f64..100.0,
            dp in 0.0f64..50.0,
        ) {
            let traj = constant_speed_traj(v, 200);
            let p2 = p1 + dp;
            prop_assume!(p2 <= traj.last().p);
            let t1 = traj.crossing_time(p1).unwrap();
            let t2 = traj.crossing_time(p2).unwrap();
            prop_assert!(t2 >= t1 - 1e-12);
        }
    }
}
