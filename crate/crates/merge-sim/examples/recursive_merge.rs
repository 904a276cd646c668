//! Recursive merging control against an unpredictable mainline vehicle:
//! re-solve the minimum-energy problem every sampling step under a
//! constant-speed prediction, apply only the first input, and watch the
//! terminal gap settle at the safe value even though the prediction keeps
//! being wrong.
//!
//! Run with: cargo run -p merge-sim --example recursive_merge

use merge_sim::kinematics::{grid_time, step, VehicleState, DT};
use merge_sim::merge_planning::{check_merge_constraints, recursive_step, MergeSpec, Sequence};

fn main() {
    let spec = MergeSpec::new(10.0, 260.0, Sequence::OnRampLeads);
    let mut onramp = VehicleState::new(0.0, 0.0, 26.0, 0.0);
    let mut mainline = VehicleState::new(0.0, -40.0, 25.0, 0.0);
    let n_steps = (spec.t_mer / DT).round() as usize;

    println!(
        "t_mer = {} s, preset merge at {} m, on-ramp vehicle leads",
        spec.t_mer, spec.p_merge
    );
    for k in 0..n_steps {
        let t_s = grid_time(k);
        // The human driver drifts between braking and accelerating; the
        // controller only ever sees the current state.
        let human_accel = 0.4 * (t_s * 0.9).sin();
        let law = recursive_step(&onramp, &mainline, &spec, t_s, DT).expect("horizon left");
        let (p, v) = law.state_at(onramp.p, onramp.v, DT);
        onramp = VehicleState::new(grid_time(k + 1), p, v, law.alpha);
        mainline = step(&mainline, human_accel, DT).state;
        if k % 50 == 0 {
            println!(
                "t = {:5.2} s  on-ramp ({:7.2} m, {:5.2} m/s, u = {:+.3})  mainline ({:7.2} m, {:5.2} m/s)",
                t_s, onramp.p, onramp.v, law.alpha, mainline.p, mainline.v
            );
        }
    }

    let check = check_merge_constraints(&onramp, &mainline, &spec).expect("speeds sane");
    println!(
        "at the merge: gap {:.3} s (target {} s, ok = {}), speed match ok = {}",
        check.gap_s, spec.h, check.gap_ok, check.speed_ok
    );
}
