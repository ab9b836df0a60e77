//! Stabilize-avoid and reach-avoid values for the Dubins car with three
//! obstacles, on the 61 x 61 x 40 grid of `configs/dubins_sa.toml`. Prints set sizes and checks that the
//! stabilize-avoid set sits inside the reach-avoid set.
//!
//! Run with `RUST_LOG=info` to follow the solver stages. Takes several
//! minutes.

use std::time::Instant;

use discount_reach::config::ExperimentConfig;
use discount_reach::control::{rollout, Artifacts, DisturbancePolicy, RolloutMode, RolloutSpec};
use discount_reach::geometry::sample_to_field;
use discount_reach::hji::solve;
use discount_reach::sa::solve_sa;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let exp = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/dubins_sa.toml"))?;
    let grid = exp.grid.build()?;
    let dynamics = exp.system.build()?;
    let ell = sample_to_field(&exp.target, &grid)?;
    let c = sample_to_field(&exp.constraint, &grid)?;
    let seed = exp.stabilize.clone().ok_or("config has no stabilize seed")?;
    let (cfg, rcfg) = (exp.solver_config(), exp.rclvf_config());

    let t0 = Instant::now();
    let sa = solve_sa(&dynamics, &ell, &c, &seed, &cfg, &rcfg)?;
    println!("stabilize-avoid solve: {:.1} s", t0.elapsed().as_secs_f64());
    println!("{:#?}", sa.summary(cfg.gamma));

    let t0 = Instant::now();
    let ra = solve(&ell, &c, &dynamics, &cfg)?;
    println!("reach-avoid solve: {:.1} s, converged {}", t0.elapsed().as_secs_f64(), ra.converged);

    let ra_mask = ra.final_field.negative_mask();
    let count = |m: &[bool]| m.iter().filter(|&&b| b).count();
    let outside = (0..sa.sa_mask.len()).filter(|&i| sa.sa_mask[i] && !ra_mask[i]).count();
    let in_obstacle = (0..sa.sa_mask.len()).filter(|&i| sa.sa_mask[i] && c.values()[i] >= 0.0).count();
    println!(
        "nodes: {} total, {} reach-avoid, {} stabilize-avoid, {} SA-not-RA, {} SA in obstacles, {} in I_m, {} in I_M",
        grid.len(),
        count(&ra_mask),
        count(&sa.sa_mask),
        outside,
        in_obstacle,
        count(&sa.rclvf.srcis_mask),
        count(&sa.rclvf.im_mask()),
    );

    let x0 = [-4.0, 4.0, 0.0];
    let spec = RolloutSpec { dt: 0.05, t_end: 25.0 };
    let dist = |x: &[f64]| (x[0] - seed.point[0]).hypot(x[1] - seed.point[1]);
    let sa_art = Artifacts {
        snapshots: Some(&sa.ra.snapshots),
        rclvf: Some(&sa.rclvf),
    };
    let traj = rollout(&x0, RolloutMode::Sa, sa_art, &dynamics, DisturbancePolicy::WorstCase, spec)?;
    let worst_c = traj.states.iter().map(|x| exp.constraint.evaluate(x)).fold(f64::NEG_INFINITY, f64::max);
    let k = traj.switch_index();
    println!(
        "sa rollout: max c {worst_c:.3}, switch at {:?}, distance to p at switch {:.3}, final {:.3}, fallback steps {}",
        traj.switch_time,
        k.map_or(f64::NAN, |k| dist(&traj.states[k])),
        dist(traj.final_state()),
        traj.fallback_steps
    );
    let ra_art = Artifacts {
        snapshots: Some(&ra.snapshots),
        rclvf: None,
    };
    let traj = rollout(&x0, RolloutMode::Ra, ra_art, &dynamics, DisturbancePolicy::WorstCase, spec)?;
    let reach = traj.states.iter().position(|x| exp.target.evaluate(x) <= 0.0);
    let worst_c = traj.states.iter().map(|x| exp.constraint.evaluate(x)).fold(f64::NEG_INFINITY, f64::max);
    println!(
        "ra rollout: max c {worst_c:.3}, reaches target at {:?}, final distance {:.3}",
        reach.map(|k| traj.times[k]),
        dist(traj.final_state())
    );
    Ok(())
}
