//! Smallest robustly invariant set and R-CLVF of `x' = u + d` around 0.
//!
//! With `|u| <= 1` beating `|d| <= 0.2` the invariant set is the point 0, so
//! `v_min = 0` and both the `gamma = 0` field and the `gamma = 0.5` R-CLVF
//! equal `|x|` near the origin.

use discount_reach::geometry::sample_to_field;
use discount_reach::hji::SolverConfig;
use discount_reach::rclvf::{solve_rclvf, RclvfConfig, Seed};
use discount_reach::scenarios::integrator1d;

fn main() -> discount_reach::Result<()> {
    let s = integrator1d(121);
    let ell = sample_to_field(&s.target, &s.grid)?;
    let seed = Seed::new(vec![0.0], vec![0])?;
    let r = solve_rclvf(&s.dynamics, &seed, &ell, &SolverConfig::default(), &RclvfConfig::default())?;

    println!(
        "v_min {:.4}, M {:.4}, level_tol {:.3}, {} nodes in I_m, {} in I_M, {} capped",
        r.v_min,
        r.big_m,
        r.level_tol,
        r.srcis_mask.iter().filter(|&&m| m).count(),
        r.im_mask().iter().filter(|&&m| m).count(),
        r.capped_count()
    );
    println!("{:>6} {:>9} {:>9} {:>9}", "x", "V_0", "V_CLVF", "shifted");
    for x in [-2.0, -1.0, -0.5, -0.1, 0.0, 0.1, 0.5, 1.0, 2.0] {
        let i = ((x + 3.0) / s.grid.spacing()[0]).round() as usize;
        println!(
            "{x:6.2} {:9.4} {:9.4} {:9.4}",
            r.srcis_field.values()[i],
            r.field.values()[i],
            r.shifted_field.values()[i]
        );
    }
    Ok(())
}
