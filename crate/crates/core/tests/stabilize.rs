use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use discount_reach::control::{
    controller_h, mask_distance, rollout, write_trajectory_csv_to, Artifacts, DisturbancePolicy, RolloutMode,
    RolloutSpec,
};
use discount_reach::dynamics::{flow, DoubleIntegrator2d, Dynamics, DynamicsSpec};
use discount_reach::geometry::sample_to_field;
use discount_reach::grid::{interpolate, Grid, ScalarField};
use discount_reach::hji::{solve, SolverConfig};
use discount_reach::rclvf::{solve_rclvf, RclvfConfig, RclvfResult, Seed};
use discount_reach::sa::{solve_sa, SaResult};
use discount_reach::scenarios::integrator1d;

struct Case {
    dynamics: DynamicsSpec,
    ell: ScalarField,
    rclvf: RclvfResult,
}

fn integrator_case() -> Case {
    let s = integrator1d(121);
    let ell = sample_to_field(&s.target, &s.grid).unwrap();
    let seed = Seed::new(vec![0.0], vec![0]).unwrap();
    let rclvf = solve_rclvf(&s.dynamics, &seed, &ell, &SolverConfig::default(), &RclvfConfig::default()).unwrap();
    Case {
        dynamics: s.dynamics,
        ell,
        rclvf,
    }
}

fn double_integrator_case() -> Case {
    let grid = Arc::new(Grid::new(&[(-2.0, 2.0), (-2.0, 2.0)], &[41, 41], &[false, false]).unwrap());
    let dynamics = DoubleIntegrator2d::default().build().unwrap();
    let ell = ScalarField::from_fn(grid, |x| x[0].hypot(x[1]) - 1.0);
    let seed = Seed::new(vec![0.0, 0.0], vec![0, 1]).unwrap();
    let rclvf = solve_rclvf(&dynamics, &seed, &ell, &SolverConfig::default(), &RclvfConfig::default()).unwrap();
    Case { dynamics, ell, rclvf }
}

/// States under `pi_H` against the worst-case disturbance.
fn pi_h_states(case: &Case, x0: &[f64], dt: f64, t_end: f64) -> Vec<Vec<f64>> {
    let steps = (t_end / dt).round() as usize;
    let mut out = vec![x0.to_vec()];
    for _ in 0..steps {
        let x = out.last().unwrap();
        let a = controller_h(x, &case.rclvf, &case.dynamics).unwrap();
        out.push(flow(&case.dynamics, x, &a.u, &a.d_worst, dt));
    }
    out
}

/// The mask nodes, topped up with random points within half a cell of them.
fn starts_in_mask(grid: &Grid, mask: &[bool], count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let nodes: Vec<Vec<f64>> = (0..grid.len()).filter(|&i| mask[i]).map(|i| grid.node(i)).collect();
    assert!(!nodes.is_empty());
    let mut out: Vec<Vec<f64>> = nodes.iter().take(count).cloned().collect();
    while out.len() < count {
        let base = &nodes[rng.gen_range(0..nodes.len())];
        let p = base
            .iter()
            .zip(grid.spacing())
            .map(|(b, h)| b + rng.gen_range(-0.5..0.5) * h)
            .collect();
        out.push(p);
    }
    out
}

#[test]
fn shifted_rclvf_sublevel_set_lies_in_target() {
    for case in [integrator_case(), double_integrator_case()] {
        let inside = case.rclvf.im_mask();
        assert!(inside.iter().any(|&m| m));
        for (i, &m) in inside.iter().enumerate() {
            assert!(!m || case.ell.values()[i] < 0.0, "node {i}");
        }
    }
}

#[test]
fn srcis_is_invariant_under_pi_h() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in [integrator_case(), double_integrator_case()] {
        let grid = case.rclvf.field.grid().clone();
        let dims = &case.rclvf.seed.dims;
        let cell = grid.spacing().iter().map(|h| h * h).sum::<f64>().sqrt();
        for x0 in starts_in_mask(&grid, &case.rclvf.srcis_mask, 20, &mut rng) {
            for x in pi_h_states(&case, &x0, 0.01, 10.0) {
                let d = mask_distance(&grid, &case.rclvf.srcis_mask, &x, dims);
                assert!(d <= cell + 1e-9, "{} from {x0:?} reached {x:?}, {d} from I_m", case.dynamics.name());
            }
        }
    }
}

#[test]
fn clvf_does_not_increase_along_pi_h() {
    for case in [integrator_case(), double_integrator_case()] {
        let n = case.dynamics.n_dims();
        let starts: Vec<Vec<f64>> = (0..8)
            .map(|k| {
                let a = k as f64 * std::f64::consts::PI / 4.0;
                if n == 1 {
                    vec![(0.3 + 0.15 * k as f64) * if k % 2 == 0 { 1.0 } else { -1.0 }]
                } else {
                    vec![0.8 * a.cos(), 0.8 * a.sin()]
                }
            })
            .collect();
        for x0 in starts {
            let states = pi_h_states(&case, &x0, 1e-3, 3.0);
            let v: Vec<f64> = states.iter().map(|x| interpolate(&case.rclvf.field, x)).collect();
            for (k, w) in v.windows(2).enumerate() {
                assert!(w[1] <= w[0] + 1e-3, "{} from {x0:?}: step {k} raised V from {} to {}", case.dynamics.name(), w[0], w[1]);
            }
        }
    }
}

fn integrator_sa() -> (discount_reach::scenarios::Scenario, ScalarField, ScalarField, SaResult) {
    let s = integrator1d(121);
    let ell = sample_to_field(&s.target, &s.grid).unwrap();
    let c = sample_to_field(&s.constraint, &s.grid).unwrap();
    let seed = Seed::new(vec![0.0], vec![0]).unwrap();
    let sa = solve_sa(&s.dynamics, &ell, &c, &seed, &SolverConfig::default(), &RclvfConfig::default()).unwrap();
    (s, ell, c, sa)
}

#[test]
fn sa_rollouts_stay_safe_reach_and_stabilize() {
    let (s, _, _, sa) = integrator_sa();
    let members: Vec<usize> = (0..s.grid.len()).filter(|&i| sa.sa_mask[i]).collect();
    assert!(members.len() >= 20);
    let gamma = sa.rclvf.gamma_clvf;
    let dist = |x: &[f64]| mask_distance(&s.grid, &sa.rclvf.srcis_mask, x, &[0]);
    let spec = RolloutSpec { dt: 0.01, t_end: 10.0 };
    for j in 0..20 {
        let x0 = s.grid.node(members[j * (members.len() - 1) / 19]);
        let artifacts = Artifacts {
            snapshots: Some(&sa.ra.snapshots),
            rclvf: Some(&sa.rclvf),
        };
        let traj = rollout(&x0, RolloutMode::Sa, artifacts, &s.dynamics, DisturbancePolicy::WorstCase, spec).unwrap();
        for x in &traj.states {
            assert!(s.constraint.evaluate(x) < 0.0, "from {x0:?}: unsafe state {x:?}");
        }
        let ks = traj.switch_index().unwrap_or_else(|| panic!("from {x0:?}: never reached I_M"));
        assert!(interpolate(&sa.rclvf.shifted_field, &traj.states[ks]) <= 0.0);
        let d_switch = dist(&traj.states[ks]);
        let d_end = dist(traj.final_state());
        if d_switch > 0.0 {
            assert!(d_end < d_switch, "from {x0:?}: {d_end} at the end, {d_switch} at the switch");
            let ts = traj.times[ks];
            let d1 = dist(&traj.states[(ks + 1).min(traj.len() - 1)]);
            let k = ((gamma * spec.dt).exp() * d1 / d_switch).max(1.0);
            for (t, x) in traj.times[ks..].iter().zip(&traj.states[ks..]) {
                let scaled = (gamma * (t - ts)).exp() * dist(x);
                assert!(scaled <= 1.2 * k * d_switch + 1e-12, "from {x0:?} at t = {t}: {scaled}");
            }
        } else {
            assert_eq!(d_end, 0.0, "from {x0:?}: left I_m");
        }
    }
}

#[test]
fn sa_value_dominates_ra_value_where_target_is_larger() {
    let (s, ell, c, sa) = integrator_sa();
    let ra = solve(&ell, &c, &s.dynamics, &SolverConfig::default()).unwrap();
    let mut checked = 0;
    for i in 0..s.grid.len() {
        if sa.target_slot.values()[i] >= ell.values()[i] {
            checked += 1;
            assert!(sa.sa_field.values()[i] >= ra.final_field.values()[i] - 1e-3, "node {i}");
        }
    }
    assert!(checked > 0);
    assert!(sa.sa_mask.iter().zip(ra.final_field.negative_mask()).all(|(&a, b)| !a || b));
}

#[test]
fn sa_field_is_identical_across_thread_counts() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| integrator_sa().3)
    };
    let (a, b) = (run(1), run(3));
    let bits = |f: &ScalarField| f.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.sa_field), bits(&b.sa_field));
    assert_eq!(bits(&a.rclvf.field), bits(&b.rclvf.field));
}

#[test]
fn rollouts_are_reproducible_byte_for_byte() {
    let (s, _, _, sa) = integrator_sa();
    let artifacts = Artifacts {
        snapshots: Some(&sa.ra.snapshots),
        rclvf: Some(&sa.rclvf),
    };
    let spec = RolloutSpec { dt: 0.01, t_end: 6.0 };
    for policy in [DisturbancePolicy::WorstCase, DisturbancePolicy::SeededRandom { seed: 11 }] {
        let csv = || {
            let traj = rollout(&[-2.5], RolloutMode::Sa, artifacts, &s.dynamics, policy, spec).unwrap();
            let mut buf = Vec::new();
            write_trajectory_csv_to(&traj, &mut buf).unwrap();
            buf
        };
        assert_eq!(csv(), csv());
    }
}
