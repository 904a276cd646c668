//! Merging controllers: recursive control against an unidentified or
//! human-driven mainline vehicle, and one-shot cooperative control between
//! identified connected vehicles.
//!
//! Both build terminal targets from the time-gap policy at equality: the gap
//! between the leader's rear and the follower's front must equal h seconds of
//! the follower's speed at the merging time, and the on-ramp vehicle adopts
//! the mainline vehicle's speed.

use crate::kinematics::VehicleState;
use crate::optimal_control::{solve_min_energy, Bvp, ControlError, ControlLaw};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default safe merging time gap in seconds.
pub const DEFAULT_H: f64 = 1.8;
/// Default vehicle length in meters.
pub const DEFAULT_L: f64 = 2.5;
/// Terminal speed-match tolerance in m/s.
pub const EPS_V: f64 = 0.05;
/// Terminal gap tolerance in seconds (about one sampling step of slack).
pub const EPS_G: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("follower speed {v:.3} m/s too small for a time gap")]
    DegenerateSpeed { v: f64 },
}

/// Which vehicle is ahead at the merging time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sequence {
    MainlineLeads,
    OnRampLeads,
}

impl std::fmt::Display for Sequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sequence::MainlineLeads => write!(f, "mainline_leads"),
            Sequence::OnRampLeads => write!(f, "onramp_leads"),
        }
    }
}

/// Cooperative planning variants.
///
/// `Unilateral` adjusts only the on-ramp vehicle while the mainline holds
/// speed. `Bilateral` moves both vehicles toward the preset merging position,
/// splitting the work, and is the default for the cooperative cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CooperationMode {
    Bilateral,
    Unilateral,
}

/// Merging problem parameters: preset merging time and position, sequence,
/// and the safety parameters h (time gap) and l (vehicle length).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeSpec {
    pub t_mer: f64,
    pub p_merge: f64,
    pub sequence: Sequence,
    pub h: f64,
    pub l: f64,
}

impl MergeSpec {
    pub fn new(t_mer: f64, p_merge: f64, sequence: Sequence) -> Self {
        Self {
            t_mer,
            p_merge,
            sequence,
            h: DEFAULT_H,
            l: DEFAULT_L,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.t_mer <= 0.0 || self.h <= 0.0 || self.l <= 0.0 {
            return Err(format!(
                "t_mer ({}), h ({}) and l ({}) must all be positive",
                self.t_mer, self.h, self.l
            ));
        }
        Ok(())
    }
}

/// Terminal state target for the on-ramp vehicle at the merging time.
///
/// The mainline vehicle is predicted to hold its observed speed, so its
/// position at t_mer is `p + v * (t_mer - t_now)`. The target speed is the
/// observed mainline speed; the target position places the time-gap
/// constraint at equality. When the on-ramp vehicle leads, the preset
/// merging position acts as a floor so the plan never undershoots it.
pub fn terminal_target(
    spec: &MergeSpec,
    mainline: &VehicleState,
    t_now: f64,
    t_min: f64,
) -> Result<(f64, f64), PlanError> {
    let horizon = spec.t_mer - t_now;
    if horizon < t_min {
        return Err(ControlError::HorizonTooShort {
            horizon,
            min: t_min,
        }
        .into());
    }
    let vf = mainline.v;
    let predicted = mainline.p + mainline.v * horizon;
    let pf = match spec.sequence {
        Sequence::MainlineLeads => predicted - spec.l - spec.h * vf,
        Sequence::OnRampLeads => (predicted + spec.l + spec.h * vf).max(spec.p_merge),
    };
    Ok((pf, vf))
}

/// One control step of the recursive controller.
///
/// Re-solves the minimum-energy problem from the current on-ramp state to the
/// terminal target over [t_s, t_mer] using the freshly observed mainline
/// state. The returned law's value at t_s is the commanded input for this
/// step; the caller advances one sampling step and re-invokes. The per-step
/// horizon guard is the sampling step itself so the controller keeps solving
/// all the way to the merging time.
pub fn recursive_step(
    onramp: &VehicleState,
    mainline_observed: &VehicleState,
    spec: &MergeSpec,
    t_s: f64,
    step_dt: f64,
) -> Result<ControlLaw, PlanError> {
    // Half a step of slack so the final on-grid step is not lost to rounding.
    let (pf, vf) = terminal_target(spec, mainline_observed, t_s, step_dt * 0.5)?;
    let bvp = Bvp {
        t0: t_s,
        tf: spec.t_mer,
        p0: onramp.p,
        v0: onramp.v,
        pf,
        vf,
    };
    Ok(solve_min_energy(&bvp, step_dt * 0.5)?)
}

/// One-shot cooperative plan for both vehicles.
///
/// Each law is valid on its own window; a vehicle whose law ends before the
/// merging time cruises at its terminal speed from there, which is how a
/// leading mainline vehicle carries its clearance through the merge point at
/// a settled speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CooperativePlan {
    pub law_onramp: ControlLaw,
    pub law_mainline: ControlLaw,
}

/// Plan the cooperative merge at time `t_c`.
///
/// In `Unilateral` mode only the on-ramp vehicle is controlled: the
/// mainline law is the zero law (hold speed) and the on-ramp law solves to
/// the terminal target. In `Bilateral` mode both vehicles share the terminal
/// speed (the mainline speed at `t_c`); the on-ramp vehicle targets the
/// preset merging position and the mainline vehicle takes the matching
/// clearance position: ahead by l + h*vf when the mainline leads, behind by
/// the same amount when the on-ramp vehicle leads.
///
/// When the mainline vehicle leads, its rear clears the merging position
/// h seconds before the merge, inside its maneuvering window. To keep the
/// crossing-time gap at exactly h, the leader's plan settles at the
/// clearance point by `t_mer - h` and cruises at the shared terminal speed
/// from there; its state at the merging time is unchanged.
pub fn plan_cooperative(
    onramp: &VehicleState,
    mainline: &VehicleState,
    spec: &MergeSpec,
    mode: CooperationMode,
    t_c: f64,
    t_min: f64,
) -> Result<CooperativePlan, PlanError> {
    let horizon = spec.t_mer - t_c;
    if horizon < t_min {
        return Err(ControlError::HorizonTooShort {
            horizon,
            min: t_min,
        }
        .into());
    }
    match mode {
        CooperationMode::Unilateral => {
            let (pf, vf) = terminal_target(spec, mainline, t_c, t_min)?;
            let law_onramp = solve_min_energy(
                &Bvp {
                    t0: t_c,
                    tf: spec.t_mer,
                    p0: onramp.p,
                    v0: onramp.v,
                    pf,
                    vf,
                },
                t_min,
            )?;
            Ok(CooperativePlan {
                law_onramp,
                law_mainline: ControlLaw::zero(t_c, spec.t_mer),
            })
        }
        CooperationMode::Bilateral => {
            let vf = mainline.v;
            let clearance = spec.l + spec.h * vf;
            let law_onramp = solve_min_energy(
                &Bvp {
                    t0: t_c,
                    tf: spec.t_mer,
                    p0: onramp.p,
                    v0: onramp.v,
                    pf: spec.p_merge,
                    vf,
                },
                t_min,
            )?;
            let law_mainline = match spec.sequence {
                Sequence::OnRampLeads => solve_min_energy(
                    &Bvp {
                        t0: t_c,
                        tf: spec.t_mer,
                        p0: mainline.p,
                        v0: mainline.v,
                        pf: spec.p_merge - clearance,
                        vf,
                    },
                    t_min,
                )?,
                Sequence::MainlineLeads => {
                    // Settle on the grid at or before t_mer - h and cruise
                    // through the merge; the cruise places the vehicle at
                    // p_merge + clearance exactly at t_mer.
                    let dt = crate::kinematics::DT;
                    let t_settle = (((spec.t_mer - spec.h - t_c) / dt) + 1e-9).floor() * dt + t_c;
                    let pf_settle = spec.p_merge + clearance - vf * (spec.t_mer - t_settle);
                    solve_min_energy(
                        &Bvp {
                            t0: t_c,
                            tf: t_settle,
                            p0: mainline.p,
                            v0: mainline.v,
                            pf: pf_settle,
                            vf,
                        },
                        t_min,
                    )?
                }
            };
            Ok(CooperativePlan {
                law_onramp,
                law_mainline,
            })
        }
    }
}

/// Terminal constraint check at the merging time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MergeCheck {
    pub speed_ok: bool,
    pub gap_s: f64,
    pub gap_ok: bool,
}

/// Evaluate the terminal speed and time-gap constraints on two states taken
/// at the same time (nominally t_mer). The gap is the leader's rear clearance
/// over the follower's front, in seconds of the follower's speed.
pub fn check_merge_constraints(
    onramp: &VehicleState,
    mainline: &VehicleState,
    spec: &MergeSpec,
) -> Result<MergeCheck, PlanError> {
    let (lead, follow) = match spec.sequence {
        Sequence::MainlineLeads => (mainline, onramp),
        Sequence::OnRampLeads => (onramp, mainline),
    };
    if follow.v < 0.1 {
        return Err(PlanError::DegenerateSpeed { v: follow.v });
    }
    let gap_s = (lead.p - follow.p - spec.l) / follow.v;
    Ok(MergeCheck {
        speed_ok: (onramp.v - mainline.v).abs() <= EPS_V,
        gap_s,
        gap_ok: gap_s >= spec.h - EPS_G,
    })
}
