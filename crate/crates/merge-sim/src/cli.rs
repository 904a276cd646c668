//! Command-line front end: generate or ingest scenarios, run case batches,
//! and emit reports and plot data.
//!
//! Output conventions: exit code 0 on success (runs may carry flags), 1 on
//! runtime failure, 2 on usage errors. All files are UTF-8 and numeric
//! report output uses 6 decimals. Every report number is recomputable from
//! the emitted per-run trajectory CSVs; `report` does exactly that and
//! verifies agreement when a summary is present.

use crate::kinematics::{Lane, Trajectory};
use crate::merge_planning::{CooperationMode, MergeSpec, Sequence};
use crate::metrics::{
    improvement_rates, welch_t_test, CaseAggregate, DecelRule, FuelCoefficients, ImprovementRates,
    PairMetrics, WelchResult, IMPROVEMENT_DIRECTIONS,
};
use crate::scenario::{
    danger_filter, extract_pairs, generate_synthetic, ingest_csv, load_manifest, write_pairs,
    GeneratorConfig, Zone,
};
use crate::simulation::{run_batch, CaseKind, Flags, SimConfig};
use crate::vis::{write_verdict_log, VisConfig, VisMode};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "merge-sim",
    version,
    about = "Deterministic on-ramp merging simulator and evaluation harness for connected vehicles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic dangerous merging pairs and write a manifest
    Generate(GenerateArgs),
    /// Ingest canonical trajectory CSVs, extract dangerous pairs, write a manifest
    Ingest(IngestArgs),
    /// Run evaluation cases over a pair manifest and write reports
    Run(RunArgs),
    /// Recompute the report from emitted per-run trajectories and verify it
    Report(ReportArgs),
}

fn parse_zone(s: &str) -> Result<Zone, String> {
    s.parse()
}

/// Comma-separated case list as a single flag value.
#[derive(Debug, Clone)]
pub struct CaseList(pub Vec<CaseKind>);

fn parse_case_list(s: &str) -> Result<CaseList, String> {
    let cases: Result<Vec<CaseKind>, String> =
        s.split(',').map(|c| c.trim().parse::<CaseKind>()).collect();
    let cases = cases?;
    if cases.is_empty() {
        return Err("at least one case required".into());
    }
    Ok(CaseList(cases))
}

fn parse_cooperation(s: &str) -> Result<CooperationMode, String> {
    match s {
        "bilateral" => Ok(CooperationMode::Bilateral),
        "unilateral" => Ok(CooperationMode::Unilateral),
        other => Err(format!(
            "unknown cooperation mode {other:?} (bilateral or unilateral)"
        )),
    }
}

fn parse_vis_mode(s: &str) -> Result<String, String> {
    match s {
        "fixed" | "statistical" => Ok(s.to_string()),
        other => Err(format!("unknown vis mode {other:?} (fixed or statistical)")),
    }
}

fn parse_decel_rule(s: &str) -> Result<DecelRule, String> {
    match s {
        "zero-total" => Ok(DecelRule::ZeroTotal),
        "zero-accel-term" => Ok(DecelRule::ZeroAccelTerm),
        other => Err(format!("unknown decel rule {other:?}")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// Merging zone: one-third or two-thirds of the auxiliary lane
    #[arg(long, default_value = "one-third", value_parser = parse_zone)]
    pub zone: Zone,
    /// Number of pairs to generate
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Baseline gaps are sampled below this threshold in seconds
    #[arg(long, default_value_t = 1.8)]
    pub danger_threshold: f64,
    /// Probability that the on-ramp vehicle merges ahead
    #[arg(long, default_value_t = 0.82)]
    pub lead_fraction: f64,
    /// Output directory for the manifest and trajectory files
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// Canonical trajectory CSV files (frame,vehicle_id,lane,t,p,v,a)
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value = "one-third", value_parser = parse_zone)]
    pub zone: Zone,
    /// Keep only pairs with a baseline gap below this threshold in seconds
    #[arg(long, default_value_t = 1.8)]
    pub danger_threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Pair manifest written by generate or ingest
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON settings file; explicit flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated case list, e.g. baseline,case1,case2,case3
    #[arg(long, value_parser = parse_case_list)]
    pub cases: Option<CaseList>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker count for the batch; results do not depend on it
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Identification mode: fixed or statistical
    #[arg(long, value_parser = parse_vis_mode)]
    pub vis_mode: Option<String>,
    /// Fixed identification delay in seconds
    #[arg(long)]
    pub t_id: Option<f64>,
    /// Statistical mode: evidence window in samples
    #[arg(long)]
    pub window_n: Option<usize>,
    /// Statistical mode: matches required within the window
    #[arg(long)]
    pub min_matches: Option<usize>,
    /// GPS per-axis error standard deviation in meters
    #[arg(long)]
    pub sigma_g: Option<f64>,
    /// Radar per-axis error standard deviation in meters
    #[arg(long)]
    pub sigma_r: Option<f64>,
    /// Per-sample significance level of the match test
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Cooperation mode: bilateral or unilateral
    #[arg(long, value_parser = parse_cooperation)]
    pub coop: Option<CooperationMode>,
    /// Comfort flag threshold on |a| in m/s^2
    #[arg(long)]
    pub accel_bound: Option<f64>,
    /// Fuel treatment of deceleration: zero-total or zero-accel-term
    #[arg(long, value_parser = parse_decel_rule)]
    pub decel_rule: Option<DecelRule>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Output directory of a previous run
    #[arg(long)]
    pub runs: PathBuf,
    /// Where to write the recomputed report files (defaults to --runs)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Tunables of the `run` command with their defaults; a JSON config file can
/// override any subset, and explicit flags win over the file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub cases: Vec<CaseKind>,
    pub seed: u64,
    /// Worker count; an execution knob, kept out of serialized outputs so
    /// results are byte-identical across `--jobs` settings.
    #[serde(skip)]
    pub jobs: Option<usize>,
    pub vis_mode: String,
    pub t_id: f64,
    pub window_n: usize,
    pub min_matches: usize,
    pub sigma_g: f64,
    pub sigma_r: f64,
    pub alpha: f64,
    pub cooperation: CooperationMode,
    pub accel_bound: f64,
    pub decel_rule: DecelRule,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            cases: CaseKind::ALL.to_vec(),
            seed: 0,
            jobs: None,
            vis_mode: "fixed".into(),
            t_id: 3.5,
            window_n: 88,
            min_matches: 70,
            sigma_g: 1.0,
            sigma_r: 0.1,
            alpha: 0.05,
            cooperation: CooperationMode::Bilateral,
            accel_bound: 4.0,
            decel_rule: DecelRule::ZeroTotal,
        }
    }
}

impl RunSettings {
    fn apply_flags(&mut self, args: &RunArgs) {
        if let Some(v) = &args.cases {
            self.cases = v.0.clone();
        }
        if let Some(v) = args.seed {
            self.seed = v;
        }
        if let Some(v) = args.jobs {
            self.jobs = Some(v);
        }
        if let Some(v) = &args.vis_mode {
            self.vis_mode = v.clone();
        }
        if let Some(v) = args.t_id {
            self.t_id = v;
        }
        if let Some(v) = args.window_n {
            self.window_n = v;
        }
        if let Some(v) = args.min_matches {
            self.min_matches = v;
        }
        if let Some(v) = args.sigma_g {
            self.sigma_g = v;
        }
        if let Some(v) = args.sigma_r {
            self.sigma_r = v;
        }
        if let Some(v) = args.alpha {
            self.alpha = v;
        }
        if let Some(v) = args.coop {
            self.cooperation = v;
        }
        if let Some(v) = args.accel_bound {
            self.accel_bound = v;
        }
        if let Some(v) = args.decel_rule {
            self.decel_rule = v;
        }
    }

    fn sim_config(&self) -> Result<SimConfig> {
        let mode = match self.vis_mode.as_str() {
            "fixed" => VisMode::FixedDelay { t_id: self.t_id },
            "statistical" => VisMode::Statistical {
                window_n: self.window_n,
                min_matches: self.min_matches,
            },
            other => bail!("unknown vis mode {other:?} (fixed or statistical)"),
        };
        let vis = VisConfig {
            sigma_g: self.sigma_g,
            sigma_r: self.sigma_r,
            alpha: self.alpha,
            mode,
            seed: self.seed,
        };
        vis.validate().map_err(|e| anyhow::anyhow!(e))?;
        Ok(SimConfig {
            vis,
            cooperation: self.cooperation,
            t_min: crate::optimal_control::DEFAULT_T_MIN,
            accel_bound: self.accel_bound,
            fuel: FuelCoefficients::default(),
            decel_rule: self.decel_rule,
            seed: self.seed,
        })
    }
}

pub fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => cmd_generate(&args).map(|_| ()),
        Command::Ingest(args) => cmd_ingest(&args).map(|_| ()),
        Command::Run(args) => cmd_run(&args).map(|_| ()),
        Command::Report(args) => cmd_report(&args).map(|_| ()),
    }
}

/// Generate pairs and write them under `--out`. Returns the manifest path.
pub fn cmd_generate(args: &GenerateArgs) -> Result<PathBuf> {
    let cfg = GeneratorConfig {
        n_pairs: args.n as usize,
        zone: args.zone,
        danger_threshold_s: args.danger_threshold,
        lead_fraction: args.lead_fraction,
        seed: args.seed,
        ..GeneratorConfig::default()
    };
    let pairs = generate_synthetic(&cfg)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let manifest = write_pairs(&args.out, &pairs, args.zone, Some(args.seed))?;
    let leads = pairs
        .iter()
        .filter(|p| p.spec.sequence == Sequence::OnRampLeads)
        .count();
    println!(
        "generated {} pairs in zone {} ({} with the on-ramp vehicle leading); manifest {}",
        pairs.len(),
        args.zone,
        leads,
        manifest.display()
    );
    Ok(manifest)
}

/// Ingest canonical CSVs, extract and filter pairs, write a manifest.
pub fn cmd_ingest(args: &IngestArgs) -> Result<PathBuf> {
    let mut records = Vec::new();
    for path in &args.input {
        let file =
            std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        records.extend(
            ingest_csv(std::io::BufReader::new(file))
                .with_context(|| format!("ingesting {}", path.display()))?,
        );
    }
    let extracted = extract_pairs(&records, args.zone);
    let n_extracted = extracted.len();
    let pairs = danger_filter(extracted, args.danger_threshold);
    if pairs.is_empty() {
        bail!("no dangerous pairs found (extracted {n_extracted}, none below the threshold)");
    }
    std::fs::create_dir_all(&args.out)?;
    let manifest = write_pairs(&args.out, &pairs, args.zone, None)?;
    println!(
        "ingested {} vehicles, extracted {} pairs, kept {} dangerous; manifest {}",
        records.len(),
        n_extracted,
        pairs.len(),
        manifest.display()
    );
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecordJson {
    pub pair_id: String,
    pub zone: Zone,
    pub case: CaseKind,
    pub sequence: Sequence,
    pub t_mer: f64,
    pub p_merge: f64,
    pub h: f64,
    pub l: f64,
    pub flags: Flags,
    pub metrics: Option<PairMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignificanceEntry {
    pub mean_case2: f64,
    pub mean_case3: f64,
    #[serde(flatten)]
    pub welch: WelchResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZoneReport {
    pub zone: Zone,
    pub aggregates: BTreeMap<String, CaseAggregate>,
    pub improvement_vs_baseline: BTreeMap<String, ImprovementRates>,
    pub significance_case2_vs_case3: BTreeMap<String, SignificanceEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub settings: RunSettings,
    pub n_pairs: usize,
    pub failures: usize,
    pub zones: BTreeMap<String, ZoneReport>,
    pub runs: Vec<RunRecordJson>,
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Quantize through the exact serialization path, so metrics computed on the
/// result are bit-identical to metrics recomputed from the written CSV. The
/// fuel model's deceleration rule is discontinuous at a = 0, so metrics must
/// be defined over the serialized values, not the pre-rounding ones.
fn quantize6(x: f64) -> f64 {
    format!("{x:.6}")
        .parse()
        .expect("fixed-point float reparses")
}

fn quantize_trajectory(traj: &Trajectory) -> Trajectory {
    let mut out = traj.clone();
    for s in &mut out.samples {
        s.t = quantize6(s.t);
        s.p = quantize6(s.p);
        s.v = quantize6(s.v);
        s.a = quantize6(s.a);
    }
    out
}

fn round6_metrics(m: &PairMetrics) -> PairMetrics {
    PairMetrics {
        gap_s: round6(m.gap_s),
        arms_onramp: round6(m.arms_onramp),
        arms_mainline: round6(m.arms_mainline),
        fuel_onramp: round6(m.fuel_onramp),
        fuel_mainline: round6(m.fuel_mainline),
        collision: m.collision,
    }
}

fn round6_aggregate(a: &CaseAggregate) -> CaseAggregate {
    CaseAggregate {
        n: a.n,
        collisions: a.collisions,
        gap_s: round6(a.gap_s),
        arms_onramp: round6(a.arms_onramp),
        arms_mainline: round6(a.arms_mainline),
        fuel_onramp: round6(a.fuel_onramp),
        fuel_mainline: round6(a.fuel_mainline),
    }
}

/// Build the per-zone reports from per-run metrics.
fn build_zone_reports(runs: &[RunRecordJson], cases: &[CaseKind]) -> BTreeMap<String, ZoneReport> {
    let mut zones: BTreeMap<String, ZoneReport> = BTreeMap::new();
    let mut zone_list: Vec<Zone> = runs.iter().map(|r| r.zone).collect();
    zone_list.sort_by_key(|z| format!("{z}"));
    zone_list.dedup();
    for zone in zone_list {
        let mut aggregates = BTreeMap::new();
        let mut per_case: BTreeMap<String, Vec<PairMetrics>> = BTreeMap::new();
        for case in cases {
            let ms: Vec<PairMetrics> = runs
                .iter()
                .filter(|r| r.zone == zone && r.case == *case)
                .filter_map(|r| r.metrics)
                .collect();
            if let Some(agg) = CaseAggregate::from_metrics(&ms) {
                aggregates.insert(case.slug().to_string(), round6_aggregate(&agg));
            }
            per_case.insert(case.slug().to_string(), ms);
        }
        let mut improvement = BTreeMap::new();
        if let Some(base) = aggregates.get("baseline").copied() {
            for case in cases {
                if *case == CaseKind::Baseline {
                    continue;
                }
                if let Some(agg) = aggregates.get(case.slug()) {
                    improvement.insert(case.slug().to_string(), improvement_rates(&base, agg));
                }
            }
        }
        let mut significance = BTreeMap::new();
        let (c2, c3) = (
            per_case.get("case2").cloned().unwrap_or_default(),
            per_case.get("case3").cloned().unwrap_or_default(),
        );
        if c2.len() >= 2 && c3.len() >= 2 {
            let measures: [(&str, fn(&PairMetrics) -> f64); 4] = [
                ("arms_onramp", |m| m.arms_onramp),
                ("fuel_onramp", |m| m.fuel_onramp),
                ("arms_mainline", |m| m.arms_mainline),
                ("fuel_mainline", |m| m.fuel_mainline),
            ];
            for (name, get) in measures {
                let xs: Vec<f64> = c2.iter().map(get).collect();
                let ys: Vec<f64> = c3.iter().map(get).collect();
                if let Ok(welch) = welch_t_test(&xs, &ys) {
                    significance.insert(
                        name.to_string(),
                        SignificanceEntry {
                            mean_case2: round6(xs.iter().sum::<f64>() / xs.len() as f64),
                            mean_case3: round6(ys.iter().sum::<f64>() / ys.len() as f64),
                            welch: WelchResult {
                                t_stat: round6(welch.t_stat),
                                dof: round6(welch.dof),
                                p_value: round6(welch.p_value),
                                significant_95: welch.significant_95,
                            },
                        },
                    );
                }
            }
        }
        zones.insert(
            format!("{zone}"),
            ZoneReport {
                zone,
                aggregates,
                improvement_vs_baseline: improvement,
                significance_case2_vs_case3: significance,
            },
        );
    }
    zones
}

/// Report CSV mirroring the table layout: rows are measures, columns cases.
fn write_report_csv(path: &Path, report: &ZoneReport, cases: &[CaseKind]) -> Result<()> {
    let present: Vec<&CaseKind> = cases
        .iter()
        .filter(|c| report.aggregates.contains_key(c.slug()))
        .collect();
    let mut text = String::from("measure");
    for case in &present {
        text.push(',');
        text.push_str(case.slug());
    }
    text.push('\n');
    let rows: [(&str, fn(&CaseAggregate) -> f64); 5] = [
        ("gap_s", |a| a.gap_s),
        ("arms_onramp", |a| a.arms_onramp),
        ("arms_mainline", |a| a.arms_mainline),
        ("fuel_onramp", |a| a.fuel_onramp),
        ("fuel_mainline", |a| a.fuel_mainline),
    ];
    for (name, get) in rows {
        text.push_str(name);
        for case in &present {
            let agg = &report.aggregates[case.slug()];
            text.push_str(&format!(",{:.6}", get(agg)));
        }
        text.push('\n');
    }
    for (name, get) in [
        (
            "collisions",
            (|a: &CaseAggregate| a.collisions) as fn(&CaseAggregate) -> usize,
        ),
        ("n", |a| a.n),
    ] {
        text.push_str(name);
        for case in &present {
            let agg = &report.aggregates[case.slug()];
            text.push_str(&format!(",{}", get(agg)));
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ImprovementFile<'a> {
    zone: Zone,
    directions: BTreeMap<&'static str, &'static str>,
    cases: &'a BTreeMap<String, ImprovementRates>,
}

fn write_zone_files(dir: &Path, report: &ZoneReport, cases: &[CaseKind]) -> Result<()> {
    let zone = report.zone;
    write_report_csv(&dir.join(format!("report_{zone}.csv")), report, cases)?;
    let improvement = ImprovementFile {
        zone,
        directions: IMPROVEMENT_DIRECTIONS.iter().copied().collect(),
        cases: &report.improvement_vs_baseline,
    };
    let rounded: BTreeMap<String, ImprovementRates> = improvement
        .cases
        .iter()
        .map(|(k, v)| {
            (
                k.clone(),
                ImprovementRates {
                    gap_s: v.gap_s.map(round6),
                    arms_onramp: v.arms_onramp.map(round6),
                    arms_mainline: v.arms_mainline.map(round6),
                    fuel_onramp: v.fuel_onramp.map(round6),
                    fuel_mainline: v.fuel_mainline.map(round6),
                },
            )
        })
        .collect();
    let improvement = ImprovementFile {
        cases: &rounded,
        ..improvement
    };
    std::fs::write(
        dir.join(format!("improvement_rates_{zone}.json")),
        serde_json::to_string_pretty(&improvement)? + "\n",
    )?;
    std::fs::write(
        dir.join(format!("significance_{zone}.json")),
        serde_json::to_string_pretty(&report.significance_case2_vs_case3)? + "\n",
    )?;
    Ok(())
}

/// Run the selected cases over a manifest and write all outputs.
pub fn cmd_run(args: &RunArgs) -> Result<RunSummary> {
    let mut settings = RunSettings::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        settings = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
    }
    settings.apply_flags(args);
    let sim_cfg = settings.sim_config()?;

    let pairs = load_manifest(&args.manifest)
        .with_context(|| format!("loading manifest {}", args.manifest.display()))?;
    let batch = run_batch(&pairs, &settings.cases, &sim_cfg, settings.jobs)?;

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(
        args.out.join("effective_config.json"),
        serde_json::to_string_pretty(&settings)? + "\n",
    )?;

    let runs_dir = args.out.join("runs");
    std::fs::create_dir_all(&runs_dir)?;
    let mut records = Vec::with_capacity(batch.runs.len());
    for run in &batch.runs {
        let record = write_run(&runs_dir, run, &sim_cfg)?;
        records.push(record);
    }

    let zones = build_zone_reports(&records, &settings.cases);
    for report in zones.values() {
        write_zone_files(&args.out, report, &settings.cases)?;
    }

    let summary = RunSummary {
        settings: settings.clone(),
        n_pairs: pairs.len(),
        failures: batch.failures(),
        zones,
        runs: records,
    };
    std::fs::write(
        args.out.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;

    print_summary(&summary);
    if summary.failures > 0 {
        bail!("{} of {} runs failed", summary.failures, summary.runs.len());
    }
    Ok(summary)
}

fn write_run(
    runs_dir: &Path,
    run: &crate::simulation::BatchRun,
    sim_cfg: &SimConfig,
) -> Result<RunRecordJson> {
    let dir = runs_dir.join(format!("{}_{}", run.pair_id, run.case.slug()));
    std::fs::create_dir_all(&dir)?;
    let spec: &MergeSpec = &run.spec;
    let mut record = RunRecordJson {
        pair_id: run.pair_id.clone(),
        zone: run.zone,
        case: run.case,
        sequence: spec.sequence,
        t_mer: spec.t_mer,
        p_merge: spec.p_merge,
        h: spec.h,
        l: spec.l,
        flags: Flags::default(),
        metrics: None,
        error: None,
    };
    match &run.output {
        Ok((out, _)) => {
            record.flags = out.flags;
            let onramp = quantize_trajectory(&out.onramp);
            let mainline = quantize_trajectory(&out.mainline);
            let metrics = PairMetrics::compute(
                &onramp,
                &mainline,
                spec.sequence,
                spec.l,
                &sim_cfg.fuel,
                sim_cfg.decel_rule,
            )?;
            record.metrics = Some(round6_metrics(&metrics));
            let f = std::fs::File::create(dir.join("onramp.csv"))?;
            onramp.write_csv(BufWriter::new(f))?;
            let f = std::fs::File::create(dir.join("mainline.csv"))?;
            mainline.write_csv(BufWriter::new(f))?;
            let mut events = String::new();
            for e in &out.events {
                events.push_str(&serde_json::to_string(e)?);
                events.push('\n');
            }
            std::fs::write(dir.join("events.jsonl"), events)?;
            if !out.verdicts.is_empty() {
                let f = std::fs::File::create(dir.join("verdicts.jsonl"))?;
                write_verdict_log(BufWriter::new(f), &out.verdicts)?;
            }
        }
        Err(e) => record.error = Some(e.clone()),
    }
    std::fs::write(
        dir.join("run.json"),
        serde_json::to_string_pretty(&record)? + "\n",
    )?;
    Ok(record)
}

fn print_summary(summary: &RunSummary) {
    println!(
        "ran {} runs over {} pairs ({} failures)",
        summary.runs.len(),
        summary.n_pairs,
        summary.failures
    );
    for (zone, report) in &summary.zones {
        println!("zone {zone}:");
        for (case, agg) in &report.aggregates {
            println!(
                "  {case:<9} gap {:>8.3} s | arms on/main {:>7.4}/{:>7.4} m/s^2 | fuel on/main {:>8.2}/{:>8.2} mL | collisions {}",
                agg.gap_s, agg.arms_onramp, agg.arms_mainline, agg.fuel_onramp, agg.fuel_mainline, agg.collisions
            );
        }
    }
}

/// Recompute every report number from the emitted per-run trajectory CSVs,
/// write the recomputed report files, and verify agreement with the stored
/// summary when present.
pub fn cmd_report(args: &ReportArgs) -> Result<RunSummary> {
    let runs_dir = args.runs.join("runs");
    if !runs_dir.is_dir() {
        bail!("{} has no runs/ directory", args.runs.display());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&runs_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    let coeffs = FuelCoefficients::default();
    let stored: Option<RunSummary> = std::fs::read_to_string(args.runs.join("summary.json"))
        .ok()
        .and_then(|text| serde_json::from_str(&text).ok());
    let decel_rule = stored
        .as_ref()
        .map(|s| s.settings.decel_rule)
        .unwrap_or_default();

    let mut records = Vec::new();
    for dir in &entries {
        let run_json = dir.join("run.json");
        let mut record: RunRecordJson = serde_json::from_str(
            &std::fs::read_to_string(&run_json)
                .with_context(|| format!("reading {}", run_json.display()))?,
        )?;
        if record.error.is_some() {
            records.push(record);
            continue;
        }
        let onramp = Trajectory::read_csv(
            "onramp",
            Lane::Onramp,
            std::io::BufReader::new(std::fs::File::open(dir.join("onramp.csv"))?),
        )?;
        let mainline = Trajectory::read_csv(
            "mainline",
            Lane::Mainline,
            std::io::BufReader::new(std::fs::File::open(dir.join("mainline.csv"))?),
        )?;
        let metrics = PairMetrics::compute(
            &onramp,
            &mainline,
            record.sequence,
            record.l,
            &coeffs,
            decel_rule,
        )?;
        record.metrics = Some(round6_metrics(&metrics));
        records.push(record);
    }
    if records.is_empty() {
        bail!("no runs found under {}", runs_dir.display());
    }

    let cases: Vec<CaseKind> = CaseKind::ALL
        .into_iter()
        .filter(|c| records.iter().any(|r| r.case == *c))
        .collect();
    let zones = build_zone_reports(&records, &cases);
    let out_dir = args.out.clone().unwrap_or_else(|| args.runs.clone());
    std::fs::create_dir_all(&out_dir)?;
    for report in zones.values() {
        write_zone_files(&out_dir, report, &cases)?;
    }

    let summary = RunSummary {
        settings: stored
            .as_ref()
            .map(|s| s.settings.clone())
            .unwrap_or_default(),
        n_pairs: records
            .iter()
            .map(|r| r.pair_id.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        failures: records.iter().filter(|r| r.error.is_some()).count(),
        zones,
        runs: records,
    };
    print_summary(&summary);

    if let Some(stored) = stored {
        verify_against_stored(&summary, &stored)?;
        println!("report verified: recomputed aggregates match the stored summary");
    }
    Ok(summary)
}

fn verify_against_stored(recomputed: &RunSummary, stored: &RunSummary) -> Result<()> {
    const TOL: f64 = 1e-4;
    for (zone, report) in &recomputed.zones {
        let Some(stored_report) = stored.zones.get(zone) else {
            bail!("zone {zone} missing from stored summary");
        };
        for (case, agg) in &report.aggregates {
            let Some(prev) = stored_report.aggregates.get(case) else {
                bail!("case {case} missing from stored summary in zone {zone}");
            };
            let checks = [
                ("gap_s", agg.gap_s, prev.gap_s),
                ("arms_onramp", agg.arms_onramp, prev.arms_onramp),
                ("arms_mainline", agg.arms_mainline, prev.arms_mainline),
                ("fuel_onramp", agg.fuel_onramp, prev.fuel_onramp),
                ("fuel_mainline", agg.fuel_mainline, prev.fuel_mainline),
            ];
            for (name, a, b) in checks {
                if (a - b).abs() > TOL {
                    bail!("{zone}/{case}/{name}: recomputed {a:.6} differs from stored {b:.6}");
                }
            }
        }
    }
    Ok(())
}
