//! Baseline dangerous-pair production: ingest canonical trajectory CSVs,
//! extract conflicting on-ramp/mainline pairs, filter by collision risk, and
//! synthesize reproducible dangerous pairs when real data is unavailable.
//!
//! Synthetic baselines are constant-speed: this isolates controller effects
//! and keeps crossing-time arithmetic exact. The merging time is snapped to
//! the sampling grid and the on-ramp start speed adjusted so the vehicle
//! crosses the merging position exactly at the merging time.

use crate::kinematics::{grid_time, Lane, Trajectory, VehicleState, DT};
use crate::merge_planning::{MergeSpec, Sequence, DEFAULT_H, DEFAULT_L};
use crate::metrics;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Margin past the merging time covered by baseline trajectories, so that
/// both merging-gap crossings stay inside the recorded span.
const SPAN_MARGIN_S: f64 = 4.0;

/// Minimum sampled baseline gap in seconds; keeps generated hazards short of
/// outright overlap while danger_filter still accepts ingested collisions.
const MIN_SYNTH_GAP_S: f64 = 0.2;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("empty trajectory file")]
    EmptyFile,
    #[error("schema error: {0}")]
    Schema(String),
    #[error("vehicle {vehicle}: non-uniform sampling at frame {frame} (dt {dt:.6})")]
    NonUniformDt {
        vehicle: String,
        frame: usize,
        dt: f64,
    },
    #[error("pair generation failed after {attempts} attempts")]
    RejectionOverflow { attempts: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Manifest(String),
}

/// Merging-zone thirds of the auxiliary lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    OneThird,
    TwoThirds,
}

impl Zone {
    /// Position bounds of the zone in meters from the Start Line.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Zone::OneThird => (230.0, 300.0),
            Zone::TwoThirds => (300.0, 370.0),
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        let (lo, hi) = self.bounds();
        match self {
            Zone::OneThird => p >= lo && p < hi,
            Zone::TwoThirds => p >= lo && p <= hi,
        }
    }
}

impl std::fmt::Display for Zone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Zone::OneThird => write!(f, "one_third"),
            Zone::TwoThirds => write!(f, "two_thirds"),
        }
    }
}

impl std::str::FromStr for Zone {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one_third" | "one-third" => Ok(Zone::OneThird),
            "two_thirds" | "two-thirds" => Ok(Zone::TwoThirds),
            other => Err(format!(
                "unknown zone {other:?} (expected one-third or two-thirds)"
            )),
        }
    }
}

/// A baseline on-ramp/mainline trajectory pair with conflict metadata; the
/// unit of evaluation. Trajectories span from the Start Line crossing through
/// the merging time plus a margin.
#[derive(Debug, Clone, PartialEq)]
pub struct VehiclePair {
    pub pair_id: String,
    pub zone: Zone,
    pub onramp: Trajectory,
    pub mainline: Trajectory,
    pub spec: MergeSpec,
    pub baseline_gap_s: f64,
}

impl VehiclePair {
    /// Check the structural invariants: zone containment, span coverage, and
    /// gap self-consistency against the metrics recomputation.
    pub fn validate(&self) -> Result<(), String> {
        self.spec.validate()?;
        if !self.zone.contains(self.spec.p_merge) {
            return Err(format!(
                "p_merge {:.3} outside zone {}",
                self.spec.p_merge, self.zone
            ));
        }
        if self.onramp.first().t > 1e-9 || self.onramp.last().t < self.spec.t_mer - 1e-9 {
            return Err("onramp trajectory must span t=0 through t_mer".into());
        }
        let recomputed = metrics::merging_time_gap_for(
            &self.onramp,
            &self.mainline,
            self.spec.sequence,
            self.spec.p_merge,
            self.spec.l,
        )
        .map_err(|e| e.to_string())?;
        if (recomputed - self.baseline_gap_s).abs() > 1e-6 {
            return Err(format!(
                "stored gap {:.6} disagrees with recomputed {:.6}",
                self.baseline_gap_s, recomputed
            ));
        }
        Ok(())
    }
}

/// Synthetic dangerous-pair generator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_pairs: usize,
    pub zone: Zone,
    /// Pairs are generated with baseline gaps below this threshold in seconds.
    pub danger_threshold_s: f64,
    /// Probability that the on-ramp vehicle merges ahead of the mainline one.
    pub lead_fraction: f64,
    pub onramp_speed: (f64, f64),
    pub mainline_speed: (f64, f64),
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_pairs: 100,
            zone: Zone::OneThird,
            danger_threshold_s: DEFAULT_H,
            lead_fraction: 0.82,
            onramp_speed: (15.0, 30.0),
            mainline_speed: (20.0, 35.0),
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_pairs == 0 {
            return Err("n_pairs must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.lead_fraction) {
            return Err("lead_fraction must lie in [0, 1]".into());
        }
        if self.danger_threshold_s <= 0.0 {
            return Err("danger_threshold_s must be positive".into());
        }
        if self.onramp_speed.0 <= 0.0 || self.onramp_speed.0 > self.onramp_speed.1 {
            return Err("onramp speed range is invalid".into());
        }
        if self.mainline_speed.0 <= 0.0 || self.mainline_speed.0 > self.mainline_speed.1 {
            return Err("mainline speed range is invalid".into());
        }
        Ok(())
    }
}

fn constant_speed_samples(p0: f64, v: f64, n: usize) -> Vec<VehicleState> {
    (0..=n)
        .map(|k| {
            let t = grid_time(k);
            VehicleState::new(t, p0 + v * t, v, 0.0)
        })
        .collect()
}

/// Build one constant-speed pair from explicit parameters.
///
/// The mainline start position is placed so the recomputed merging time gap
/// equals `gap_s` exactly for the requested sequence.
pub fn synth_pair(
    pair_id: &str,
    zone: Zone,
    v_onramp: f64,
    v_mainline: f64,
    p_merge: f64,
    gap_s: f64,
    sequence: Sequence,
) -> VehiclePair {
    let t_mer = p_merge / v_onramp;
    debug_assert!(
        crate::kinematics::grid_index(t_mer, 1e-6).is_some(),
        "t_mer must sit on the sampling grid"
    );
    let l = DEFAULT_L;
    let p_m0 = match sequence {
        // Mainline front crosses p_merge `gap_s` after the on-ramp rear left it.
        Sequence::OnRampLeads => p_merge - v_mainline * ((p_merge + l) / v_onramp + gap_s),
        // Mainline rear leaves p_merge `gap_s` before the on-ramp front arrives.
        Sequence::MainlineLeads => p_merge + l - v_mainline * (t_mer - gap_s),
    };
    let n = ((t_mer + SPAN_MARGIN_S) / DT).ceil() as usize;
    let onramp = Trajectory::new(
        format!("{pair_id}-onramp"),
        Lane::Onramp,
        constant_speed_samples(0.0, v_onramp, n),
    );
    let mainline = Trajectory::new(
        format!("{pair_id}-mainline"),
        Lane::Mainline,
        constant_speed_samples(p_m0, v_mainline, n),
    );
    let spec = MergeSpec::new(t_mer, p_merge, sequence);
    let baseline_gap_s = metrics::merging_time_gap_for(&onramp, &mainline, sequence, p_merge, l)
        .expect("constant-speed baselines cross the merging position");
    VehiclePair {
        pair_id: pair_id.to_string(),
        zone,
        onramp,
        mainline,
        spec,
        baseline_gap_s,
    }
}

/// Generate `cfg.n_pairs` reproducible dangerous pairs.
pub fn generate_synthetic(cfg: &GeneratorConfig) -> Result<Vec<VehiclePair>, ScenarioError> {
    cfg.validate().map_err(ScenarioError::Schema)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let (zone_lo, zone_hi) = cfg.zone.bounds();
    let mut pairs = Vec::with_capacity(cfg.n_pairs);
    for i in 0..cfg.n_pairs {
        let mut accepted = None;
        for _attempt in 0..1000 {
            let p_merge = rng.random_range(zone_lo..zone_hi);
            let v_raw = rng.random_range(cfg.onramp_speed.0..cfg.onramp_speed.1);
            // Snap the merging time to the grid and take the speed that
            // crosses p_merge exactly then.
            let t_mer = (p_merge / v_raw / DT).round().max(1.0) * DT;
            let v_onramp = p_merge / t_mer;
            if v_onramp < cfg.onramp_speed.0 || v_onramp > cfg.onramp_speed.1 {
                continue;
            }
            let v_mainline = rng.random_range(cfg.mainline_speed.0..cfg.mainline_speed.1);
            let gap_s = rng.random_range(MIN_SYNTH_GAP_S..cfg.danger_threshold_s);
            let sequence = if rng.random_bool(cfg.lead_fraction) {
                Sequence::OnRampLeads
            } else {
                Sequence::MainlineLeads
            };
            let pair = synth_pair(
                &format!("p{i:04}"),
                cfg.zone,
                v_onramp,
                v_mainline,
                p_merge,
                gap_s,
                sequence,
            );
            if (pair.baseline_gap_s - gap_s).abs() > 0.05 {
                continue;
            }
            accepted = Some(pair);
            break;
        }
        match accepted {
            Some(pair) => pairs.push(pair),
            None => return Err(ScenarioError::RejectionOverflow { attempts: 1000 }),
        }
    }
    Ok(pairs)
}

/// Retain pairs whose baseline gap is below the threshold; non-positive gaps
/// (collisions) are always hazards and always retained.
pub fn danger_filter(pairs: Vec<VehiclePair>, threshold_s: f64) -> Vec<VehiclePair> {
    pairs
        .into_iter()
        .filter(|p| p.baseline_gap_s < threshold_s)
        .collect()
}

/// One ingested vehicle: its trajectory plus the per-sample lane labels used
/// to locate the merge event.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub traj: Trajectory,
    pub lane_series: Vec<Lane>,
}

const CANONICAL_HEADER: &str = "frame,vehicle_id,lane,t,p,v,a";

/// Write vehicles in the canonical trajectory CSV format. For the on-ramp
/// vehicle the lane column switches to `mainline` from the merging time on,
/// which encodes the merge event for re-ingestion.
pub fn write_canonical_pair<W: Write>(mut w: W, pair: &VehiclePair) -> std::io::Result<()> {
    writeln!(w, "{CANONICAL_HEADER}")?;
    let rows =
        |w: &mut W, traj: &Trajectory, lane_at: &dyn Fn(f64) -> Lane| -> std::io::Result<()> {
            for s in &traj.samples {
                let frame = (s.t / DT).round() as i64;
                writeln!(
                    w,
                    "{},{},{},{:.6},{:.6},{:.6},{:.6}",
                    frame,
                    traj.vehicle_id,
                    lane_at(s.t),
                    s.t,
                    s.p,
                    s.v,
                    s.a
                )?;
            }
            Ok(())
        };
    let t_mer = pair.spec.t_mer;
    rows(&mut w, &pair.onramp, &move |t| {
        if t >= t_mer - 1e-9 {
            Lane::Mainline
        } else {
            Lane::Onramp
        }
    })?;
    rows(&mut w, &pair.mainline, &|_| Lane::Mainline)?;
    Ok(())
}

/// Parse a canonical trajectory CSV into per-vehicle records.
pub fn ingest_csv<R: BufRead>(r: R) -> Result<Vec<TrajectoryRecord>, ScenarioError> {
    let mut by_vehicle: BTreeMap<String, Vec<(f64, f64, f64, f64, Lane)>> = BTreeMap::new();
    let mut saw_header = false;
    let mut saw_rows = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != CANONICAL_HEADER {
                return Err(ScenarioError::Schema(format!(
                    "expected header {CANONICAL_HEADER:?}, got {line:?}"
                )));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(ScenarioError::Schema(format!(
                "row {i}: expected 7 fields, got {}",
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, ScenarioError> {
            s.parse::<f64>()
                .map_err(|e| ScenarioError::Schema(format!("row {i}: bad number {s:?}: {e}")))
        };
        let lane: Lane = fields[2]
            .parse()
            .map_err(|e| ScenarioError::Schema(format!("row {i}: {e}")))?;
        by_vehicle.entry(fields[1].to_string()).or_default().push((
            parse(fields[3])?,
            parse(fields[4])?,
            parse(fields[5])?,
            parse(fields[6])?,
            lane,
        ));
        saw_rows = true;
    }
    if !saw_rows {
        return Err(ScenarioError::EmptyFile);
    }
    let mut records = Vec::new();
    for (vehicle_id, mut rows) in by_vehicle {
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
        for (k, pair) in rows.windows(2).enumerate() {
            let dt = pair[1].0 - pair[0].0;
            if (dt - DT).abs() > 1e-6 {
                return Err(ScenarioError::NonUniformDt {
                    vehicle: vehicle_id,
                    frame: k + 1,
                    dt,
                });
            }
        }
        let lane_series: Vec<Lane> = rows.iter().map(|r| r.4).collect();
        let samples: Vec<VehicleState> = rows
            .iter()
            .map(|r| VehicleState::new(r.0, r.1, r.2, r.3))
            .collect();
        let mut traj = Trajectory::new(vehicle_id, lane_series[0], samples);
        traj.ingested = true;
        records.push(TrajectoryRecord { traj, lane_series });
    }
    Ok(records)
}

/// Extract conflicting pairs from ingested records: each on-ramp vehicle that
/// transitions to the mainline inside the zone is paired with the mainline
/// vehicle whose crossing time of the merging position is nearest to the
/// merging time. Vehicles without a conflict are skipped and logged.
pub fn extract_pairs(records: &[TrajectoryRecord], zone: Zone) -> Vec<VehiclePair> {
    let mainline_records: Vec<&TrajectoryRecord> = records
        .iter()
        .filter(|r| r.lane_series.iter().all(|l| *l == Lane::Mainline))
        .collect();
    let mut pairs = Vec::new();
    let mut index = 0usize;
    for rec in records {
        if rec.traj.lane != Lane::Onramp {
            continue;
        }
        let Some(k_merge) = rec.lane_series.iter().position(|l| *l == Lane::Mainline) else {
            log::debug!(
                "vehicle {}: no lane transition, skipped",
                rec.traj.vehicle_id
            );
            continue;
        };
        let t_mer = rec.traj.samples[k_merge].t;
        let p_merge = rec.traj.samples[k_merge].p;
        if !zone.contains(p_merge) {
            log::debug!(
                "vehicle {}: merge at {p_merge:.1} m outside zone {zone}, skipped",
                rec.traj.vehicle_id
            );
            continue;
        }
        // Nearest-crossing-time rule for the conflicting mainline vehicle.
        let mut best: Option<(&TrajectoryRecord, f64)> = None;
        for cand in &mainline_records {
            let Ok(t_cross) = cand.traj.crossing_time_extrapolated(p_merge) else {
                continue;
            };
            let d = (t_cross - t_mer).abs();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((cand, d));
            }
        }
        let Some((mainline_rec, _)) = best else {
            log::debug!(
                "vehicle {}: no conflicting mainline vehicle",
                rec.traj.vehicle_id
            );
            continue;
        };
        let t_cross = mainline_rec
            .traj
            .crossing_time_extrapolated(p_merge)
            .expect("candidate crossed during selection");
        let sequence = if t_cross - t_mer > 0.0 {
            Sequence::OnRampLeads
        } else {
            Sequence::MainlineLeads
        };
        let spec = MergeSpec::new(t_mer, p_merge, sequence);
        let Ok(baseline_gap_s) =
            metrics::merging_time_gap_for(&rec.traj, &mainline_rec.traj, sequence, p_merge, spec.l)
        else {
            log::debug!(
                "vehicle {}: gap not computable, skipped",
                rec.traj.vehicle_id
            );
            continue;
        };
        let pair = VehiclePair {
            pair_id: format!("p{index:04}"),
            zone,
            onramp: rec.traj.clone(),
            mainline: mainline_rec.traj.clone(),
            spec,
            baseline_gap_s,
        };
        if let Err(reason) = pair.validate() {
            log::debug!("vehicle {}: {reason}, skipped", rec.traj.vehicle_id);
            continue;
        }
        pairs.push(pair);
        index += 1;
    }
    pairs
}

/// Manifest entry describing one stored pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pair_id: String,
    pub zone: Zone,
    pub t_mer: f64,
    pub p_merge: f64,
    pub sequence: Sequence,
    pub h: f64,
    pub l: f64,
    pub baseline_gap_s: f64,
    pub onramp_id: String,
    pub mainline_id: String,
    /// Canonical trajectory CSV, relative to the manifest file.
    pub trajectories: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub zone: Zone,
    pub seed: Option<u64>,
    pub pairs: Vec<ManifestEntry>,
}

/// Write pairs and their manifest under `dir`.
pub fn write_pairs(
    dir: &Path,
    pairs: &[VehiclePair],
    zone: Zone,
    seed: Option<u64>,
) -> Result<PathBuf, ScenarioError> {
    let pair_dir = dir.join("pairs");
    std::fs::create_dir_all(&pair_dir)?;
    let mut entries = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let rel = format!("pairs/{}.csv", pair.pair_id);
        let file = std::fs::File::create(dir.join(&rel))?;
        write_canonical_pair(std::io::BufWriter::new(file), pair)?;
        entries.push(ManifestEntry {
            pair_id: pair.pair_id.clone(),
            zone: pair.zone,
            t_mer: pair.spec.t_mer,
            p_merge: pair.spec.p_merge,
            sequence: pair.spec.sequence,
            h: pair.spec.h,
            l: pair.spec.l,
            baseline_gap_s: pair.baseline_gap_s,
            onramp_id: pair.onramp.vehicle_id.clone(),
            mainline_id: pair.mainline.vehicle_id.clone(),
            trajectories: rel,
        });
    }
    let manifest = Manifest {
        zone,
        seed,
        pairs: entries,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json + "\n")?;
    Ok(path)
}

/// Load pairs back from a manifest written by [`write_pairs`].
pub fn load_manifest(path: &Path) -> Result<Vec<VehiclePair>, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| ScenarioError::Manifest(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut pairs = Vec::with_capacity(manifest.pairs.len());
    for entry in manifest.pairs {
        let file = std::fs::File::open(base.join(&entry.trajectories))?;
        let records = ingest_csv(std::io::BufReader::new(file))?;
        let find = |id: &str| -> Result<Trajectory, ScenarioError> {
            records
                .iter()
                .find(|r| r.traj.vehicle_id == id)
                .map(|r| r.traj.clone())
                .ok_or_else(|| {
                    ScenarioError::Manifest(format!(
                        "vehicle {id:?} missing from {}",
                        entry.trajectories
                    ))
                })
        };
        let mut onramp = find(&entry.onramp_id)?;
        onramp.lane = Lane::Onramp;
        let mainline = find(&entry.mainline_id)?;
        let spec = MergeSpec {
            t_mer: entry.t_mer,
            p_merge: entry.p_merge,
            sequence: entry.sequence,
            h: entry.h,
            l: entry.l,
        };
        let pair = VehiclePair {
            pair_id: entry.pair_id,
            zone: entry.zone,
            onramp,
            mainline,
            spec,
            baseline_gap_s: entry.baseline_gap_s,
        };
        pair.validate().map_err(|reason| {
            ScenarioError::Manifest(format!("pair {}: {reason}", pair.pair_id))
        })?;
        pairs.push(pair);
    }
    Ok(pairs)
}
