//! Connected-vehicle identification with the chi-square match test: two
//! mainline vehicles, one broadcasting and one silent, observed through
//! noisy GPS and radar until the evidence rule sorts them out.
//!
//! Run with: cargo run -p merge-sim --example identify_vehicles

use merge_sim::vis::{
    chi2_threshold, observe, IdentificationState, VehicleTruth, Verdict, VisConfig, VisMode,
};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn main() {
    let cfg = VisConfig {
        mode: VisMode::Statistical {
            window_n: 88,
            min_matches: 70,
        },
        seed: 42,
        ..VisConfig::default()
    };
    println!(
        "per-sample test: normalized squared GPS-radar difference < {:.4} (alpha = {})",
        chi2_threshold(cfg.alpha),
        cfg.alpha
    );

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut state = IdentificationState::new();
    let dt = merge_sim::DT;
    for k in 0..=200 {
        let t = k as f64 * dt;
        // Both vehicles drift forward relative to the ego vehicle.
        let drift = 0.8 * t;
        let frame = observe(
            t,
            &[
                VehicleTruth {
                    id: "north".into(),
                    rel: (42.0 + drift, 3.5),
                    speed: 26.0,
                    is_cav: true,
                },
                VehicleTruth {
                    id: "south".into(),
                    rel: (75.0 + drift, 3.5),
                    speed: 24.0,
                    is_cav: false,
                },
            ],
            &cfg,
            &mut rng,
        );
        state.update(&frame, &cfg);
        let pending = ["north", "south"]
            .iter()
            .any(|id| state.verdict(id) == Verdict::Pending);
        if !pending {
            break;
        }
    }

    for event in state.log() {
        match &event.verdict {
            Verdict::IdentifiedCav(msg) => println!(
                "t = {:.2} s: track {:?} identified as the sender of message {:?}",
                event.t, event.track_id, msg
            ),
            Verdict::RejectedThv => println!(
                "t = {:.2} s: track {:?} rejected as human-driven (no matching message)",
                event.t, event.track_id
            ),
            Verdict::Pending => {}
        }
    }
}
