//! Discounted reach-avoid value of the 1D integrator `x' = u + d`, computed
//! by the level-set solver and by semi-Lagrangian value iteration.
//!
//! Target `|x| <= 0.5`, obstacle `x in [1, 2]`. States left of the obstacle
//! can reach the target; states right of it cannot cross.

use discount_reach::bellman::{value_iteration, BackupConfig};
use discount_reach::geometry::sample_to_field;
use discount_reach::hji::{solve, SolverConfig};
use discount_reach::scenarios::integrator1d;

fn main() -> discount_reach::Result<()> {
    let s = integrator1d(241);
    let ell = sample_to_field(&s.target, &s.grid)?;
    let c = sample_to_field(&s.constraint, &s.grid)?;

    let cfg = SolverConfig::default();
    let ra = solve(&ell, &c, &s.dynamics, &cfg)?;
    println!(
        "level set: {} steps of {:.4}, horizon {:.2}, converged {}",
        ra.iterations, ra.dt, ra.horizon, ra.converged
    );

    let bcfg = BackupConfig {
        gamma: cfg.gamma,
        ..Default::default()
    };
    let v0 = ell.zip_map(&c, f64::max)?;
    let (vi, deltas) = value_iteration(&v0, &ell, &c, &s.dynamics, &bcfg, 1e-7, 200_000)?;
    println!("value iteration: {} backups", deltas.len());

    let (a, b) = (ra.final_field.values(), vi.values());
    let edge = |v: &[f64]| {
        (1..v.len())
            .find(|&i| v[i - 1] < 0.0 && v[i] >= 0.0)
            .map(|i| s.grid.node(i)[0])
    };
    println!("first non-negative node: level set {:?}, value iteration {:?}", edge(a), edge(b));
    println!("sup |V_pde - V_vi| = {:.4}", ra.final_field.sup_distance(&vi)?);
    for x in [-2.5, -1.0, 0.0, 0.9, 1.5, 2.5] {
        let i = ((x + 3.0) / s.grid.spacing()[0]).round() as usize;
        println!("x = {x:5.2}: V_pde = {:8.4}  V_vi = {:8.4}", a[i], b[i]);
    }
    Ok(())
}
