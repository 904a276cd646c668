//! Solve a minimum-energy fixed-endpoint problem and inspect the resulting
//! control law: its affine coefficients, the rolled-out trajectory, and the
//! energy cost compared against a blunt two-phase alternative.
//!
//! Run with: cargo run -p merge-sim --example min_energy_plan

use merge_sim::optimal_control::{solve_min_energy, Bvp, DEFAULT_T_MIN};
use merge_sim::DT;

fn main() {
    // Gain 10 m and 2 m/s over 5 s, starting from 20 m/s.
    let bvp = Bvp {
        t0: 0.0,
        tf: 5.0,
        p0: 0.0,
        v0: 20.0,
        pf: 110.0,
        vf: 22.0,
    };
    let law = solve_min_energy(&bvp, DEFAULT_T_MIN).expect("feasible horizon");
    println!(
        "law: u(t) = {:.4} + {:.4} * t on [{}, {}]",
        law.alpha, law.beta, law.t0, law.tf
    );

    let samples = law.rollout(bvp.p0, bvp.v0, DT);
    let last = samples.last().unwrap();
    println!(
        "rollout: {} samples, terminal p = {:.9} m (target {}), v = {:.9} m/s (target {})",
        samples.len(),
        last.p,
        bvp.pf,
        last.v,
        bvp.vf
    );
    println!("energy cost: {:.4} (integral of u^2/2)", law.energy_cost());

    // A bang-bang-style alternative hitting the same endpoints: constant
    // acceleration for the first half, another constant for the second.
    let t_half = 2.5;
    let a = bvp.vf - bvp.v0;
    let b = bvp.pf - bvp.p0 - bvp.v0 * (bvp.tf - bvp.t0);
    let m = [
        [t_half, t_half],
        [
            t_half * t_half / 2.0 + t_half * t_half,
            t_half * t_half / 2.0,
        ],
    ];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let u1 = (a * m[1][1] - b * m[0][1]) / det;
    let u2 = (b * m[0][0] - a * m[1][0]) / det;
    let two_phase_cost = 0.5 * (u1 * u1 + u2 * u2) * t_half;
    println!(
        "two-phase alternative (u1 = {:.4}, u2 = {:.4}): cost {:.4}",
        u1, u2, two_phase_cost
    );
    println!(
        "the affine law saves {:.1}% energy",
        100.0 * (1.0 - law.energy_cost() / two_phase_cost)
    );
}
