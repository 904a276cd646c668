//! The whole evaluation in one pass: generate dangerous pairs, run the four
//! cases (baseline replay, recursive control against a human driver, and
//! cooperative control with and without the identification delay), and
//! compare safety, comfort, and fuel.
//!
//! Run with: cargo run -p merge-sim --example evaluate_cases

use merge_sim::metrics::{improvement_rates, CaseAggregate};
use merge_sim::scenario::{generate_synthetic, GeneratorConfig, Zone};
use merge_sim::simulation::{run_batch, CaseKind, SimConfig};

fn main() {
    let pairs = generate_synthetic(&GeneratorConfig {
        n_pairs: 100,
        zone: Zone::OneThird,
        seed: 7,
        ..Default::default()
    })
    .expect("generation succeeds");
    let cfg = SimConfig {
        seed: 7,
        ..SimConfig::default()
    };
    let batch = run_batch(&pairs, &CaseKind::ALL, &cfg, None).expect("batch runs");

    println!(
        "{:<10} {:>8} {:>12} {:>12} {:>10} {:>10}",
        "case", "gap s", "arms on", "arms main", "fuel on", "fuel main"
    );
    let mut aggregates = Vec::new();
    for case in CaseKind::ALL {
        let agg = CaseAggregate::from_metrics(&batch.case_metrics(case)).expect("runs succeeded");
        println!(
            "{:<10} {:>8.3} {:>12.4} {:>12.4} {:>10.2} {:>10.2}",
            case.slug(),
            agg.gap_s,
            agg.arms_onramp,
            agg.arms_mainline,
            agg.fuel_onramp,
            agg.fuel_mainline
        );
        aggregates.push((case, agg));
    }

    let baseline = aggregates[0].1;
    println!("\nimprovement over the baseline (positive is better):");
    for (case, agg) in &aggregates[1..] {
        let rates = improvement_rates(&baseline, agg);
        let fmt = |r: Option<f64>| r.map_or("    n/a".into(), |v| format!("{v:+7.1}%"));
        println!(
            "  {:<8} gap {}  fuel(on) {}  arms(on) {}",
            case.slug(),
            fmt(rates.gap_s),
            fmt(rates.fuel_onramp),
            fmt(rates.arms_onramp)
        );
    }
    println!(
        "\nthe identification delay costs case 2 its head start: cooperation begins at 3.52 s \
         instead of 0 s, and the sharper maneuver shows up in comfort and fuel."
    );
}
