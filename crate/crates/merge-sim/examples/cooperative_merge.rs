//! One-shot cooperative planning between two identified connected vehicles,
//! contrasting the bilateral split (both vehicles maneuver) with the
//! unilateral form (only the on-ramp vehicle moves).
//!
//! Run with: cargo run -p merge-sim --example cooperative_merge

use merge_sim::kinematics::{VehicleState, DT};
use merge_sim::merge_planning::{plan_cooperative, CooperationMode, MergeSpec, Sequence};
use merge_sim::optimal_control::DEFAULT_T_MIN;

fn main() {
    let onramp = VehicleState::new(0.0, 0.0, 22.0, 0.0);
    let mainline = VehicleState::new(0.0, -47.8, 25.0, 0.0);

    println!("--- on-ramp vehicle merges ahead ---");
    demo(
        &MergeSpec::new(11.0, 260.0, Sequence::OnRampLeads),
        &onramp,
        &mainline,
    );

    // With the mainline vehicle leading, its bilateral plan settles at the
    // clearance point h seconds before the merge and cruises through it, so
    // the crossing-time gap lands exactly on the policy value.
    println!("--- mainline vehicle merges ahead ---");
    demo(
        &MergeSpec::new(11.0, 260.0, Sequence::MainlineLeads),
        &onramp,
        &VehicleState::new(0.0, 30.0, 25.0, 0.0),
    );
}

fn demo(spec: &MergeSpec, onramp: &VehicleState, mainline: &VehicleState) {
    for mode in [CooperationMode::Bilateral, CooperationMode::Unilateral] {
        let plan = plan_cooperative(onramp, mainline, spec, mode, 0.0, DEFAULT_T_MIN)
            .expect("feasible horizon");
        let on = plan.law_onramp.rollout(onramp.p, onramp.v, DT);
        let main = plan.law_mainline.rollout(mainline.p, mainline.v, DT);
        let (on_end, main_end) = (on.last().unwrap(), main.last().unwrap());
        println!("{mode:?}:");
        println!(
            "  on-ramp law  u(t) = {:+.4} {:+.4} t   -> ({:.2} m, {:.2} m/s) at t = {:.2}",
            plan.law_onramp.alpha, plan.law_onramp.beta, on_end.p, on_end.v, on_end.t
        );
        println!(
            "  mainline law u(t) = {:+.4} {:+.4} t   -> ({:.2} m, {:.2} m/s) at t = {:.2}",
            plan.law_mainline.alpha, plan.law_mainline.beta, main_end.p, main_end.v, main_end.t
        );
        println!(
            "  energy: on-ramp {:.3}, mainline {:.3}",
            plan.law_onramp.energy_cost(),
            plan.law_mainline.energy_cost()
        );
        // Where the mainline vehicle ends up at the merging time (its law may
        // settle early and cruise through the merge).
        let cruise = spec.t_mer - plan.law_mainline.tf;
        println!(
            "  mainline at t_mer: {:.2} m after {:.2} s of terminal cruise\n",
            main_end.p + main_end.v * cruise,
            cruise
        );
    }
}
