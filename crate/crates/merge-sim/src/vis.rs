//! Connected-vehicle identification: noisy GPS/radar relative measurements,
//! the per-sample chi-square match test, and evidence accumulation that
//! identifies connected vehicles or rejects human-driven ones.
//!
//! The per-axis GPS and radar errors are zero-mean normal, so for a truly
//! co-located (radar track, message) pair the normalized squared difference
//! follows a chi-square distribution with 2 degrees of freedom. Radar tracks
//! exist only once the ego vehicle has passed the Start Line (t >= 0), where
//! the line of sight is good enough; V2V messages are received regardless.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum VisError {
    #[error("identification still pending at the merging time")]
    NeverResolved,
}

/// Identification mode.
///
/// `FixedDelay` resolves every track at a fixed elapsed time using ground
/// truth, reproducing a known identification delay. `Statistical` runs the
/// M-of-N chi-square evidence rule and is available for studying how the
/// identification time responds to the error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum VisMode {
    FixedDelay { t_id: f64 },
    Statistical { window_n: usize, min_matches: usize },
}

impl Default for VisMode {
    fn default() -> Self {
        VisMode::FixedDelay { t_id: 3.5 }
    }
}

/// Sensor error model and identification parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisConfig {
    /// GPS per-axis error standard deviation in meters.
    pub sigma_g: f64,
    /// Radar per-axis error standard deviation in meters.
    pub sigma_r: f64,
    /// Per-sample significance level of the match test.
    pub alpha: f64,
    pub mode: VisMode,
    pub seed: u64,
}

impl Default for VisConfig {
    fn default() -> Self {
        Self {
            sigma_g: 1.0,
            sigma_r: 0.1,
            alpha: 0.05,
            mode: VisMode::default(),
            seed: 0,
        }
    }
}

impl VisConfig {
    /// Combined per-axis variance of the GPS-radar difference.
    pub fn sigma_sq(&self) -> f64 {
        self.sigma_g * self.sigma_g + self.sigma_r * self.sigma_r
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.sigma_g <= 0.0 || self.sigma_r <= 0.0 {
            return Err("sigma_g and sigma_r must be positive".into());
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err("alpha must lie strictly between 0 and 1".into());
        }
        if let VisMode::Statistical {
            window_n,
            min_matches,
        } = self.mode
        {
            if min_matches == 0 || min_matches > window_n {
                return Err("statistical mode requires 0 < min_matches <= window_n".into());
            }
        }
        Ok(())
    }
}

/// 1 - alpha quantile of the chi-square distribution with 2 degrees of
/// freedom. With 2 dof the CDF is 1 - exp(-x/2), so the quantile is
/// -2 ln(alpha) in closed form.
pub fn chi2_threshold(alpha: f64) -> f64 {
    debug_assert!(alpha > 0.0 && alpha < 1.0);
    -2.0 * alpha.ln()
}

/// Per-sample chi-square match test between a GPS-derived and a
/// radar-measured relative position.
pub fn match_sample(gps: (f64, f64), radar: (f64, f64), cfg: &VisConfig) -> bool {
    let dx = gps.0 - radar.0;
    let dy = gps.1 - radar.1;
    (dx * dx + dy * dy) / cfg.sigma_sq() < chi2_threshold(cfg.alpha)
}

/// Ground-truth description of one surrounding vehicle for frame synthesis.
#[derive(Debug, Clone)]
pub struct VehicleTruth {
    pub id: String,
    /// True relative position (x along the ego's longitudinal axis, y lateral).
    pub rel: (f64, f64),
    pub speed: f64,
    pub is_cav: bool,
}

/// GPS-derived observation carried by a basic safety message.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsmObservation {
    pub rel: (f64, f64),
    pub speed: f64,
}

/// One time-synchronized set of measurements: radar tracks for all visible
/// vehicles and message observations for the connected ones. Track and
/// message identifiers reuse the vehicle label.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub t: f64,
    pub radar_tracks: BTreeMap<String, (f64, f64)>,
    pub bsm_obs: BTreeMap<String, BsmObservation>,
}

/// Synthesize one sensor frame: every vehicle yields a radar track with
/// per-axis radar noise, and every connected vehicle additionally yields a
/// message observation with per-axis GPS noise.
pub fn observe<R: Rng>(
    t: f64,
    vehicles: &[VehicleTruth],
    cfg: &VisConfig,
    rng: &mut R,
) -> SensorFrame {
    let radar_noise = Normal::new(0.0, cfg.sigma_r).expect("positive sigma_r");
    let gps_noise = Normal::new(0.0, cfg.sigma_g).expect("positive sigma_g");
    let mut frame = SensorFrame {
        t,
        radar_tracks: BTreeMap::new(),
        bsm_obs: BTreeMap::new(),
    };
    for veh in vehicles {
        let rx = veh.rel.0 + radar_noise.sample(rng);
        let ry = veh.rel.1 + radar_noise.sample(rng);
        frame.radar_tracks.insert(veh.id.clone(), (rx, ry));
        if veh.is_cav {
            let gx = veh.rel.0 + gps_noise.sample(rng);
            let gy = veh.rel.1 + gps_noise.sample(rng);
            frame.bsm_obs.insert(
                veh.id.clone(),
                BsmObservation {
                    rel: (gx, gy),
                    speed: veh.speed,
                },
            );
        }
    }
    frame
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict", content = "msg_id")]
pub enum Verdict {
    Pending,
    IdentifiedCav(String),
    RejectedThv,
}

/// Verdict log entry, serialized as JSON lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictEvent {
    pub t: f64,
    pub track_id: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Default)]
struct PairCounts {
    sample_count: usize,
    match_count: usize,
}

/// Per-run identification progress across (radar track, message) pairs.
///
/// The first frame registers tracks and starts the clock; evidence
/// accumulates on each following frame. Identified messages are bound to
/// exactly one track and withdrawn from the other tracks' candidate sets, so
/// the identified assignment is one-to-one.
#[derive(Debug, Clone, Default)]
pub struct IdentificationState {
    started_at: Option<f64>,
    pairs: BTreeMap<(String, String), PairCounts>,
    frames_seen: BTreeMap<String, usize>,
    verdicts: BTreeMap<String, Verdict>,
    bound_msgs: BTreeSet<String>,
    log: Vec<VerdictEvent>,
}

impl IdentificationState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn verdict(&self, track_id: &str) -> Verdict {
        self.verdicts
            .get(track_id)
            .cloned()
            .unwrap_or(Verdict::Pending)
    }

    pub fn log(&self) -> &[VerdictEvent] {
        &self.log
    }

    /// First time at which `track_id` received a non-pending verdict.
    pub fn identification_done_time(&self, track_id: &str) -> Result<f64, VisError> {
        self.log
            .iter()
            .find(|e| e.track_id == track_id)
            .map(|e| e.t)
            .ok_or(VisError::NeverResolved)
    }

    fn record(&mut self, t: f64, track_id: String, verdict: Verdict) {
        if let Verdict::IdentifiedCav(msg) = &verdict {
            self.bound_msgs.insert(msg.clone());
        }
        self.verdicts.insert(track_id.clone(), verdict.clone());
        self.log.push(VerdictEvent {
            t,
            track_id,
            verdict,
        });
    }

    /// Fold one frame into the identification state.
    pub fn update(&mut self, frame: &SensorFrame, cfg: &VisConfig) {
        let t0 = match self.started_at {
            Some(t0) => t0,
            None => {
                // Registration frame: start the clock, count no evidence.
                self.started_at = Some(frame.t);
                for track in frame.radar_tracks.keys() {
                    self.verdicts
                        .entry(track.clone())
                        .or_insert(Verdict::Pending);
                    self.frames_seen.entry(track.clone()).or_insert(0);
                }
                return;
            }
        };

        match cfg.mode {
            VisMode::FixedDelay { t_id } => {
                if frame.t - t0 < t_id - 1e-9 {
                    return;
                }
                let pending: Vec<String> = frame
                    .radar_tracks
                    .keys()
                    .filter(|id| self.verdict(id) == Verdict::Pending)
                    .cloned()
                    .collect();
                for track in pending {
                    let verdict = if frame.bsm_obs.contains_key(&track) {
                        Verdict::IdentifiedCav(track.clone())
                    } else {
                        Verdict::RejectedThv
                    };
                    self.record(frame.t, track, verdict);
                }
            }
            VisMode::Statistical {
                window_n,
                min_matches,
            } => {
                let pending: Vec<String> = frame
                    .radar_tracks
                    .keys()
                    .filter(|id| self.verdict(id) == Verdict::Pending)
                    .cloned()
                    .collect();
                for track in &pending {
                    *self.frames_seen.entry(track.clone()).or_insert(0) += 1;
                    let radar = frame.radar_tracks[track];
                    for (msg, obs) in &frame.bsm_obs {
                        if self.bound_msgs.contains(msg) {
                            continue;
                        }
                        let counts = self.pairs.entry((track.clone(), msg.clone())).or_default();
                        counts.sample_count += 1;
                        if match_sample(obs.rel, radar, cfg) {
                            counts.match_count += 1;
                        }
                    }
                }

                // Resolve tracks whose window just completed.
                let due: Vec<String> = pending
                    .into_iter()
                    .filter(|tr| self.frames_seen.get(tr).copied().unwrap_or(0) >= window_n)
                    .collect();
                let mut qualifying: BTreeMap<String, Vec<String>> = BTreeMap::new();
                for track in &due {
                    let msgs: Vec<String> = self
                        .pairs
                        .iter()
                        .filter(|((tr, msg), c)| {
                            tr == track
                                && !self.bound_msgs.contains(msg)
                                && c.sample_count >= window_n
                                && c.match_count >= min_matches
                        })
                        .map(|((_, msg), _)| msg.clone())
                        .collect();
                    qualifying.insert(track.clone(), msgs);
                }
                for track in &due {
                    let msgs = &qualifying[track];
                    match msgs.as_slice() {
                        [] => self.record(frame.t, track.clone(), Verdict::RejectedThv),
                        [msg] => {
                            let contested = qualifying
                                .iter()
                                .any(|(other, m)| other != track && m.contains(msg));
                            if contested {
                                self.reset_window(track);
                            } else {
                                self.record(
                                    frame.t,
                                    track.clone(),
                                    Verdict::IdentifiedCav(msg.clone()),
                                );
                            }
                        }
                        _ => self.reset_window(track),
                    }
                }
            }
        }
    }

    /// Tie: discard this window's evidence and keep the track pending.
    fn reset_window(&mut self, track: &str) {
        self.frames_seen.insert(track.to_string(), 0);
        for ((tr, _), counts) in self.pairs.iter_mut() {
            if tr == track {
                *counts = PairCounts::default();
            }
        }
    }
}

/// Serialize the verdict log as JSON lines `{t, track_id, verdict, msg_id?}`.
pub fn write_verdict_log<W: Write>(mut w: W, log: &[VerdictEvent]) -> std::io::Result<()> {
    for event in log {
        let line = serde_json::to_string(event).expect("verdict event serializes");
        writeln!(w, "{line}")?;
    }
    Ok(())
}
