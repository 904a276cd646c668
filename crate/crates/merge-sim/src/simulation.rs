//! Case orchestration: run one vehicle pair through a case on the sampling
//! grid, wiring identification timing, controller activation, and trajectory
//! recording; run batches deterministically.
//!
//! Timeline conventions: t = 0 is the on-ramp vehicle's Start Line crossing,
//! identification (when a case uses it) runs from t = 0, and the run stops at
//! the merging time. Controlled segments integrate the commanded law in
//! closed form over each sampling step, so a re-solved plan against an
//! exactly predicted mainline vehicle reproduces the one-shot trajectory to
//! floating point.

use crate::kinematics::{grid_time, Trajectory, VehicleState, DT};
use crate::merge_planning::{
    plan_cooperative, recursive_step, CooperationMode, MergeSpec, PlanError,
};
use crate::metrics::{DecelRule, FuelCoefficients, PairMetrics};
use crate::scenario::{VehiclePair, Zone};
use crate::vis::{observe, IdentificationState, VehicleTruth, Verdict, VerdictEvent, VisConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lateral offset between the on-ramp vehicle and mainline traffic in the
/// ego sensing frame, in meters.
const LANE_OFFSET_M: f64 = 3.5;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("merging time {t_mer:.6} s is off the sampling grid")]
    OffGridMergeTime { t_mer: f64 },
    #[error("pair {pair_id}: {reason}")]
    InvalidPair { pair_id: String, reason: String },
    #[error("no cases selected")]
    EmptyCases,
    #[error("no pairs to run")]
    EmptyPairs,
    #[error("plan failed: {0}")]
    Plan(#[from] PlanError),
}

/// Evaluation case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// Replay the recorded pair untouched.
    Baseline,
    /// Mainline vehicle is human-driven: identify, then recursive control.
    Case1CavThv,
    /// Both connected, identification required before cooperation.
    Case2CavCavVis,
    /// Both connected, identification assumed instantaneous.
    Case3CavCavNoVis,
}

impl CaseKind {
    pub const ALL: [CaseKind; 4] = [
        CaseKind::Baseline,
        CaseKind::Case1CavThv,
        CaseKind::Case2CavCavVis,
        CaseKind::Case3CavCavNoVis,
    ];

    pub fn slug(&self) -> &'static str {
        match self {
            CaseKind::Baseline => "baseline",
            CaseKind::Case1CavThv => "case1",
            CaseKind::Case2CavCavVis => "case2",
            CaseKind::Case3CavCavNoVis => "case3",
        }
    }
}

impl std::fmt::Display for CaseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.slug())
    }
}

impl std::str::FromStr for CaseKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(CaseKind::Baseline),
            "case1" => Ok(CaseKind::Case1CavThv),
            "case2" => Ok(CaseKind::Case2CavCavVis),
            "case3" => Ok(CaseKind::Case3CavCavNoVis),
            other => Err(format!(
                "unknown case {other:?} (expected baseline, case1, case2 or case3)"
            )),
        }
    }
}

/// Run configuration shared by every run of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub vis: VisConfig,
    pub cooperation: CooperationMode,
    /// Minimum horizon for one-shot cooperative plans in seconds.
    pub t_min: f64,
    /// Comfort check: outputs with |a| above this are flagged, not clipped.
    pub accel_bound: f64,
    pub fuel: FuelCoefficients,
    pub decel_rule: DecelRule,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            vis: VisConfig::default(),
            cooperation: CooperationMode::Bilateral,
            t_min: crate::optimal_control::DEFAULT_T_MIN,
            accel_bound: 4.0,
            fuel: FuelCoefficients::default(),
            decel_rule: DecelRule::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Flags {
    pub clamped_speed: bool,
    pub insufficient_horizon: bool,
    pub accel_bound_exceeded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SlCross,
    IdentificationDone,
    CooperationStart,
    Merge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub event: EventKind,
}

/// One finished run: both trajectories on [0, t_mer], the event timeline,
/// quality flags, and the identification verdict log when a case ran it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub pair_id: String,
    pub case: CaseKind,
    pub onramp: Trajectory,
    pub mainline: Trajectory,
    pub events: Vec<Event>,
    pub flags: Flags,
    pub verdicts: Vec<VerdictEvent>,
}

impl SimOutput {
    pub fn event_time(&self, kind: EventKind) -> Option<f64> {
        self.events.iter().find(|e| e.event == kind).map(|e| e.t)
    }
}

/// FNV-1a over the pair label, so per-run seeds do not depend on batch order.
fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic per-run RNG seed from the global seed, pair label, and case.
pub fn run_seed(global: u64, pair_id: &str, case: CaseKind) -> u64 {
    splitmix64(global ^ fnv1a(pair_id).rotate_left(17) ^ (case as u64 + 1))
}

/// Grid replay of a recorded trajectory at index k (exact on grid-aligned data).
fn replay_state(traj: &Trajectory, k: usize) -> Result<VehicleState, SimError> {
    traj.state_at(grid_time(k))
        .map_err(|e| SimError::InvalidPair {
            pair_id: traj.vehicle_id.clone(),
            reason: e.to_string(),
        })
}

struct VisOutcome {
    t_done: Option<f64>,
    log: Vec<VerdictEvent>,
}

/// Run identification over the baseline replay window until the conflicting
/// mainline track resolves or the merging time passes.
fn run_vis(
    pair: &VehiclePair,
    mainline_is_cav: bool,
    cfg: &SimConfig,
    case: CaseKind,
    n_steps: usize,
) -> Result<VisOutcome, SimError> {
    let mut rng = ChaCha12Rng::seed_from_u64(run_seed(cfg.seed, &pair.pair_id, case));
    let mut state = IdentificationState::new();
    let track = pair.mainline.vehicle_id.clone();
    for k in 0..=n_steps {
        let t = grid_time(k);
        let on = replay_state(&pair.onramp, k)?;
        let main = replay_state(&pair.mainline, k)?;
        let frame = observe(
            t,
            &[VehicleTruth {
                id: track.clone(),
                rel: (main.p - on.p, LANE_OFFSET_M),
                speed: main.v,
                is_cav: mainline_is_cav,
            }],
            &cfg.vis,
            &mut rng,
        );
        state.update(&frame, &cfg.vis);
        if state.verdict(&track) != Verdict::Pending {
            return Ok(VisOutcome {
                t_done: Some(t),
                log: state.log().to_vec(),
            });
        }
    }
    Ok(VisOutcome {
        t_done: None,
        log: state.log().to_vec(),
    })
}

/// Integrate the recursive controller from grid index `k_start` to the merge,
/// extending `samples` in place. The commanded law of each step is integrated
/// in closed form over the step.
fn recursive_segment(
    samples: &mut Vec<VehicleState>,
    mainline: &Trajectory,
    spec: &MergeSpec,
    k_start: usize,
    n_steps: usize,
    flags: &mut Flags,
) -> Result<(), SimError> {
    let mut last_u = samples[k_start].a;
    for k in k_start..n_steps {
        let t_s = grid_time(k);
        let cur = samples[k];
        let observed = replay_state(mainline, k)?;
        match recursive_step(&cur, &observed, spec, t_s, DT) {
            Ok(law) => {
                samples[k].a = law.alpha;
                last_u = law.alpha;
                let (p, v) = law.state_at(cur.p, cur.v, DT);
                let clamped = v < 0.0;
                if clamped {
                    flags.clamped_speed = true;
                }
                samples.push(VehicleState::new(
                    grid_time(k + 1),
                    p,
                    v.max(0.0),
                    law.alpha + law.beta * DT,
                ));
            }
            Err(_) => {
                // No horizon left: hold the last commanded acceleration.
                flags.insufficient_horizon = true;
                samples[k].a = last_u;
                let out = crate::kinematics::step(&cur, last_u, DT);
                if out.clamped {
                    flags.clamped_speed = true;
                }
                samples.push(out.state);
            }
        }
    }
    Ok(())
}

/// Baseline replay samples on grid indices [0, k_end].
fn replay_segment(traj: &Trajectory, k_end: usize) -> Result<Vec<VehicleState>, SimError> {
    (0..=k_end).map(|k| replay_state(traj, k)).collect()
}

/// Roll a law out on the grid, then cruise at the terminal speed up to grid
/// index `n_steps`. Plans whose law ends at the merge get no cruise tail.
fn rollout_to(
    law: &crate::optimal_control::ControlLaw,
    p0: f64,
    v0: f64,
    n_steps: usize,
) -> Vec<VehicleState> {
    let mut samples = law.rollout(p0, v0, DT);
    let k_end = crate::kinematics::grid_index(law.tf, 1e-6).expect("law ends on the grid");
    if k_end < n_steps {
        let last = *samples.last().unwrap();
        samples.last_mut().unwrap().a = 0.0;
        for k in (k_end + 1)..=n_steps {
            let t = grid_time(k);
            samples.push(VehicleState::new(
                t,
                last.p + last.v * (t - last.t),
                last.v,
                0.0,
            ));
        }
    }
    samples
}

fn scan_flags(flags: &mut Flags, traj: &Trajectory, bound: f64) {
    for s in &traj.samples {
        if s.a.abs() > bound {
            flags.accel_bound_exceeded = true;
        }
        if s.v < -1e-9 {
            flags.clamped_speed = true;
        }
    }
}

/// Run one pair through one case.
pub fn run_case(
    pair: &VehiclePair,
    case: CaseKind,
    cfg: &SimConfig,
) -> Result<SimOutput, SimError> {
    let spec = pair.spec;
    let n_steps = match crate::kinematics::grid_index(spec.t_mer, 1e-6) {
        Some(n) if n > 0 => n,
        _ => return Err(SimError::OffGridMergeTime { t_mer: spec.t_mer }),
    };
    let mut flags = Flags::default();
    let mut events = vec![Event {
        t: 0.0,
        event: EventKind::SlCross,
    }];
    let mut verdicts = Vec::new();

    let (onramp_samples, mainline_samples) = match case {
        CaseKind::Baseline => (
            replay_segment(&pair.onramp, n_steps)?,
            replay_segment(&pair.mainline, n_steps)?,
        ),
        CaseKind::Case1CavThv => {
            let vis = run_vis(pair, false, cfg, case, n_steps)?;
            verdicts = vis.log;
            let mainline = replay_segment(&pair.mainline, n_steps)?;
            let onramp = match vis.t_done {
                None => {
                    // Identification never finished; the vehicle keeps its
                    // initial driving plan for the whole run.
                    flags.insufficient_horizon = true;
                    replay_segment(&pair.onramp, n_steps)?
                }
                Some(t_id) => {
                    events.push(Event {
                        t: t_id,
                        event: EventKind::IdentificationDone,
                    });
                    let k_id = crate::kinematics::grid_index(t_id, 1e-6)
                        .expect("identification time is on the grid");
                    let mut samples = replay_segment(&pair.onramp, k_id)?;
                    recursive_segment(
                        &mut samples,
                        &pair.mainline,
                        &spec,
                        k_id,
                        n_steps,
                        &mut flags,
                    )?;
                    samples
                }
            };
            (onramp, mainline)
        }
        CaseKind::Case2CavCavVis => {
            let vis = run_vis(pair, true, cfg, case, n_steps)?;
            verdicts = vis.log;
            match vis.t_done {
                None => {
                    flags.insufficient_horizon = true;
                    (
                        replay_segment(&pair.onramp, n_steps)?,
                        replay_segment(&pair.mainline, n_steps)?,
                    )
                }
                Some(t_id) => {
                    events.push(Event {
                        t: t_id,
                        event: EventKind::IdentificationDone,
                    });
                    let k_id = crate::kinematics::grid_index(t_id, 1e-6)
                        .expect("identification time is on the grid");
                    let on0 = replay_state(&pair.onramp, k_id)?;
                    let main0 = replay_state(&pair.mainline, k_id)?;
                    match plan_cooperative(&on0, &main0, &spec, cfg.cooperation, t_id, cfg.t_min) {
                        Ok(plan) => {
                            events.push(Event {
                                t: t_id,
                                event: EventKind::CooperationStart,
                            });
                            let mut onramp = replay_segment(&pair.onramp, k_id)?;
                            onramp.truncate(k_id);
                            onramp.extend(rollout_to(&plan.law_onramp, on0.p, on0.v, n_steps));
                            let mut mainline = replay_segment(&pair.mainline, k_id)?;
                            mainline.truncate(k_id);
                            mainline.extend(rollout_to(
                                &plan.law_mainline,
                                main0.p,
                                main0.v,
                                n_steps,
                            ));
                            (onramp, mainline)
                        }
                        Err(_) => {
                            // Too late to plan: recursive fallback for the
                            // on-ramp vehicle, mainline keeps its plan.
                            flags.insufficient_horizon = true;
                            let mut onramp = replay_segment(&pair.onramp, k_id)?;
                            recursive_segment(
                                &mut onramp,
                                &pair.mainline,
                                &spec,
                                k_id,
                                n_steps,
                                &mut flags,
                            )?;
                            (onramp, replay_segment(&pair.mainline, n_steps)?)
                        }
                    }
                }
            }
        }
        CaseKind::Case3CavCavNoVis => {
            let on0 = replay_state(&pair.onramp, 0)?;
            let main0 = replay_state(&pair.mainline, 0)?;
            let plan = plan_cooperative(&on0, &main0, &spec, cfg.cooperation, 0.0, cfg.t_min)?;
            events.push(Event {
                t: 0.0,
                event: EventKind::CooperationStart,
            });
            (
                rollout_to(&plan.law_onramp, on0.p, on0.v, n_steps),
                rollout_to(&plan.law_mainline, main0.p, main0.v, n_steps),
            )
        }
    };

    events.push(Event {
        t: spec.t_mer,
        event: EventKind::Merge,
    });
    events.sort_by(|a, b| a.t.partial_cmp(&b.t).expect("finite event times"));

    let onramp = Trajectory::new(
        pair.onramp.vehicle_id.clone(),
        pair.onramp.lane,
        onramp_samples,
    );
    let mainline = Trajectory::new(
        pair.mainline.vehicle_id.clone(),
        pair.mainline.lane,
        mainline_samples,
    );
    scan_flags(&mut flags, &onramp, cfg.accel_bound);
    scan_flags(&mut flags, &mainline, cfg.accel_bound);

    Ok(SimOutput {
        pair_id: pair.pair_id.clone(),
        case,
        onramp,
        mainline,
        events,
        flags,
        verdicts,
    })
}

/// One batch entry: output and metrics on success, the error text otherwise.
#[derive(Debug, Clone)]
pub struct BatchRun {
    pub pair_id: String,
    pub zone: Zone,
    pub case: CaseKind,
    pub spec: MergeSpec,
    pub output: Result<(SimOutput, PairMetrics), String>,
}

#[derive(Debug, Clone, Default)]
pub struct BatchResult {
    pub runs: Vec<BatchRun>,
}

impl BatchResult {
    /// Metrics of every successful run of a case, ordered by pair id.
    pub fn case_metrics(&self, case: CaseKind) -> Vec<PairMetrics> {
        self.runs
            .iter()
            .filter(|r| r.case == case)
            .filter_map(|r| r.output.as_ref().ok().map(|(_, m)| *m))
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.output.is_err()).count()
    }
}

fn run_one(pair: &VehiclePair, case: CaseKind, cfg: &SimConfig) -> BatchRun {
    let output = run_case(pair, case, cfg)
        .map_err(|e| e.to_string())
        .and_then(|out| {
            PairMetrics::compute(
                &out.onramp,
                &out.mainline,
                pair.spec.sequence,
                pair.spec.l,
                &cfg.fuel,
                cfg.decel_rule,
            )
            .map(|m| (out, m))
            .map_err(|e| e.to_string())
        });
    BatchRun {
        pair_id: pair.pair_id.clone(),
        zone: pair.zone,
        case,
        spec: pair.spec,
        output,
    }
}

/// Run every (pair, case) combination. Per-run RNG streams are derived from
/// the global seed and the pair label, so the result is independent of the
/// worker count and of execution order; failures are recorded per run and
/// the batch continues.
pub fn run_batch(
    pairs: &[VehiclePair],
    cases: &[CaseKind],
    cfg: &SimConfig,
    jobs: Option<usize>,
) -> Result<BatchResult, SimError> {
    if cases.is_empty() {
        return Err(SimError::EmptyCases);
    }
    if pairs.is_empty() {
        return Err(SimError::EmptyPairs);
    }
    let tasks: Vec<(&VehiclePair, CaseKind)> = pairs
        .iter()
        .flat_map(|p| cases.iter().map(move |c| (p, *c)))
        .collect();
    let runs: Vec<BatchRun> = match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .expect("thread pool");
            pool.install(|| {
                use rayon::prelude::*;
                tasks.par_iter().map(|(p, c)| run_one(p, *c, cfg)).collect()
            })
        }
        None => {
            use rayon::prelude::*;
            tasks.par_iter().map(|(p, c)| run_one(p, *c, cfg)).collect()
        }
    };
    Ok(BatchResult { runs })
}
