//! Closed-loop rollouts on the 1D integrator: the reach-avoid controller on
//! its own, and the stabilize-avoid controller that switches to the R-CLVF
//! once inside `I_M`. Trajectories go to `out/examples/`.

use discount_reach::control::{
    rollout_batch, write_trajectory_csv, Artifacts, DisturbancePolicy, RolloutMode, RolloutSpec,
};
use discount_reach::geometry::sample_to_field;
use discount_reach::hji::{solve, SolverConfig};
use discount_reach::rclvf::{RclvfConfig, Seed};
use discount_reach::sa::solve_sa;
use discount_reach::scenarios::integrator1d;

fn main() -> discount_reach::Result<()> {
    let s = integrator1d(121);
    let ell = sample_to_field(&s.target, &s.grid)?;
    let c = sample_to_field(&s.constraint, &s.grid)?;
    let cfg = SolverConfig::default();
    let seed = Seed::new(vec![0.0], vec![0])?;
    let ra = solve(&ell, &c, &s.dynamics, &cfg)?;
    let sa = solve_sa(&s.dynamics, &ell, &c, &seed, &cfg, &RclvfConfig::default())?;

    let x0s = vec![vec![-2.5], vec![-0.4], vec![0.8], vec![2.5]];
    let spec = RolloutSpec { dt: 0.01, t_end: 8.0 };
    std::fs::create_dir_all("out/examples")?;
    let runs = [
        ("ra", RolloutMode::Ra, Artifacts { snapshots: Some(&ra.snapshots), rclvf: None }),
        ("sa", RolloutMode::Sa, Artifacts { snapshots: Some(&sa.ra.snapshots), rclvf: Some(&sa.rclvf) }),
    ];
    for (name, mode, artifacts) in runs {
        let trajs = rollout_batch(&x0s, mode, artifacts, &s.dynamics, DisturbancePolicy::WorstCase, spec)?;
        for (k, traj) in trajs.iter().enumerate() {
            let entered = traj.states.iter().position(|x| s.target.evaluate(x) < 0.0);
            println!(
                "{name} from {:5.2}: enters target at {:?}, switch at {:?}, final x {:8.4}",
                x0s[k][0],
                entered.map(|i| traj.times[i]),
                traj.switch_time,
                traj.final_state()[0]
            );
            write_trajectory_csv(format!("out/examples/{name}_{k}.csv"), traj)?;
        }
    }
    Ok(())
}
