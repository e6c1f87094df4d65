//! Formulation-level properties of the branch-and-bound engine.

use multiplicity::index_model::{IndexEnsemble, MultiTarget, Standardization};
use multiplicity::linear_fit::{LinearModel, RashomonBall};
use multiplicity::rashomon::SingleTarget;
use multiplicity::solver::{
    fixed_count, node_bound, solve, Direction, MipInstance, Objective, Region, SolveOptions, SolveStatus,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Indicators and count at `v`, or `None` if two rows are within the margin.
fn assignment_at(inst: &MipInstance, v: &DVector<f64>) -> Option<(Vec<bool>, usize)> {
    let s = inst.predictions(v);
    let n = inst.n();
    let mut inds = Vec::new();
    let mut above = Vec::new();
    for owner in inst.objective.owners() {
        let mut a = 0;
        for other in (0..n).filter(|&o| o != owner) {
            let gap = s[other] - s[owner];
            if gap.abs() < inst.margin {
                return None;
            }
            inds.push(gap > 0.0);
            a += (gap > 0.0) as usize;
        }
        above.push(a);
    }
    let count = match &inst.objective {
        Objective::Rank { .. } => above[0],
        Objective::GroupCount { kappa, .. } => above.iter().filter(|&&a| a < *kappa).count(),
    };
    Some((inds, count))
}

fn sample_region(inst: &MipInstance, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let dim = inst.dim();
    match &inst.region {
        Region::Ball { center, radius_sq } => loop {
            let u = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
            if u.norm_squared() <= 1.0 {
                return center + u * radius_sq.sqrt();
            }
        },
        Region::SoftSimplex { min_sum, max_sum } => loop {
            let a = DVector::from_fn(dim, |_, _| rng.random::<f64>());
            if a.sum() >= *min_sum && a.sum() <= *max_sum {
                return a;
            }
        },
    }
}

fn single_instance(rng: &mut ChaCha8Rng, n: usize, dir: Direction) -> MipInstance {
    let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
    let ball = RashomonBall::absolute(
        LinearModel {
            weights: DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)),
            rss: 1.0,
            target_name: "y".into(),
        },
        rng.random_range(0.01..1.0),
    )
    .unwrap();
    let ids = (0..n).map(|i| i.to_string()).collect();
    let p = SingleTarget::new(x, ball, rng.random_range(1..n), ids).unwrap();
    p.instance(rng.random_range(0..n), dir)
}

fn multi(rng: &mut ChaCha8Rng, n: usize, k: usize) -> MultiTarget {
    let p = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
    let e = IndexEnsemble::new(
        (0..k).map(|j| format!("t{j}")).collect(),
        p,
        Standardization::None,
        (0..n).map(|i| i.to_string()).collect(),
    )
    .unwrap();
    MultiTarget::new(e, rng.random_range(1..n)).unwrap()
}

fn instances(seed: u64) -> Vec<MipInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for dir in [Direction::Min, Direction::Max] {
        out.push(single_instance(&mut rng, 6, dir));
        let m = multi(&mut rng, 6, 3);
        out.push(m.instance(rng.random_range(0..6), dir));
        out.push(m.group_instance(&[0, 2, 3], dir));
    }
    out
}

#[test]
fn presolve_fixings_hold_at_every_sampled_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..10 {
        for inst in instances(seed) {
            for _ in 0..300 {
                let v = sample_region(&inst, &mut rng);
                let Some((inds, _)) = assignment_at(&inst, &v) else { continue };
                for (k, f) in inst.fixed.iter().enumerate() {
                    if let Some(f) = f {
                        assert_eq!(*f, inds[k], "seed {seed} indicator {k}");
                    }
                }
            }
        }
    }
}

#[test]
fn node_bounds_are_admissible() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..10 {
        for inst in instances(100 + seed) {
            for _ in 0..60 {
                let v = sample_region(&inst, &mut rng);
                let Some((inds, count)) = assignment_at(&inst, &v) else { continue };
                let fixings: Vec<(usize, bool)> = (0..inds.len())
                    .filter(|_| rng.random_bool(0.3))
                    .map(|k| (k, inds[k]))
                    .collect();
                let b = node_bound(&inst, &fixings).expect("a point realizes these fixings");
                match inst.direction {
                    Direction::Max => assert!(b >= count, "bound {b} < {count}"),
                    Direction::Min => assert!(b <= count, "bound {b} > {count}"),
                }
            }
        }
    }
}

#[test]
fn optimum_dominates_sampled_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..10 {
        for inst in instances(200 + seed) {
            let sol = solve(&inst, &SolveOptions::default());
            assert_eq!(sol.status, SolveStatus::Optimal);
            assert_eq!(sol.bound, sol.count);
            for _ in 0..500 {
                let v = sample_region(&inst, &mut rng);
                if let Some((_, c)) = assignment_at(&inst, &v) {
                    assert!(!inst.direction.better(c, sol.count), "sample {c} beats {}", sol.count);
                }
            }
        }
    }
}

#[test]
fn instances_round_trip_through_json() {
    for inst in instances(7) {
        let back = MipInstance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(back, inst);
        assert!(fixed_count(&back) <= back.indicator_count());
    }
}

#[test]
fn targets_stop_early_or_prove_unreachable() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = multi(&mut rng, 10, 2);
    let inst = m.instance(3, Direction::Max);
    let full = solve(&inst, &SolveOptions::default());
    let reach = solve(
        &inst,
        &SolveOptions {
            target: Some(full.count),
            ..SolveOptions::default()
        },
    );
    assert!(matches!(reach.status, SolveStatus::Cutoff | SolveStatus::Optimal));
    assert!(reach.count >= full.count);
    let beyond = solve(
        &inst,
        &SolveOptions {
            target: Some(full.count + 1),
            ..SolveOptions::default()
        },
    );
    assert_eq!(beyond.status, SolveStatus::Unreachable);
    assert!(beyond.bound <= full.count);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rank_extremes_bracket_every_sample(seed in 0u64..10_000, n in 3usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = multi(&mut rng, n, 3);
        let i = rng.random_range(0..n);
        let lo = solve(&m.instance(i, Direction::Min), &SolveOptions::default());
        let hi = solve(&m.instance(i, Direction::Max), &SolveOptions::default());
        prop_assert!(lo.count <= hi.count);
        let inst = m.instance(i, Direction::Min);
        for _ in 0..200 {
            let v = sample_region(&inst, &mut rng);
            if let Some((_, c)) = assignment_at(&inst, &v) {
                prop_assert!(lo.count <= c && c <= hi.count);
            }
        }
    }

    #[test]
    fn solutions_check_out(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = single_instance(&mut rng, 7, if seed % 2 == 0 { Direction::Min } else { Direction::Max });
        let sol = solve(&inst, &SolveOptions::default());
        prop_assert!(inst.check(&sol, multiplicity::solver::CHECK_TOLERANCE).is_ok());
    }
}
