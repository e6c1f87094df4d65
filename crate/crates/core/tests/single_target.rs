use multiplicity::dataset::{orthonormalize, Dataset};
use multiplicity::linear_fit::{ball_membership, fit_ols, EpsilonMode, LinearModel, RashomonBall};
use multiplicity::oracle::{angle_sweep_single, monte_carlo_flips, SampleFamily};
use multiplicity::rashomon::{SearchConfig, SearchMode, SingleTarget};
use multiplicity::solver::{solve, Direction, SolveOptions, SolveStatus, CHECK_TOLERANCE};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
    let raw = DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
    let slope: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| (0..d).map(|j| slope[j] * raw[(i, j)]).sum::<f64>() + rng.random_range(-1.0..1.0))
        .collect();
    Dataset::from_parts(
        (0..d).map(|j| format!("x{j}")).collect(),
        raw,
        vec!["y".into()],
        DMatrix::from_vec(n, 1, y),
        "g",
        vec!["a".into(); n],
        None,
        None,
    )
    .unwrap()
}

fn exact(p: SingleTarget) -> SingleTarget {
    p.with_config(SearchConfig {
        mode: SearchMode::Exact,
        ..SearchConfig::default()
    })
}

#[test]
fn exact_ranks_match_angle_sweep_with_intercept() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..12 {
        let n = rng.random_range(6..30);
        let ds = random_dataset(&mut rng, n, 1);
        let (o, _) = orthonormalize(&ds).unwrap();
        let m = fit_ols(&o, "y").unwrap();
        let rel = [0.01, 0.1, 1.0][case % 3];
        let kappa = [2, 5][case % 2].min(n);
        let ball = RashomonBall::new(m, rel, EpsilonMode::Relative).unwrap();
        let p = exact(SingleTarget::from_dataset(&o, ball.clone(), kappa).unwrap());
        for i in 0..n {
            let r = p.flip_search(i);
            let (lo, hi) = angle_sweep_single(o.features(), &ball, i).unwrap();
            assert!(r.exact, "case {case} row {i}");
            assert_eq!((r.min_rank, r.max_rank), (lo, hi), "case {case} row {i}");
            assert!(p.verify_witness(&r));
        }
    }
}

#[test]
fn exact_ranks_match_angle_sweep_generic_plane() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for case in 0..15 {
        let n = rng.random_range(5..25);
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        let w0 = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        let eps = [0.01, 0.1, 1.0][case % 3];
        let ball = RashomonBall::absolute(
            LinearModel {
                weights: w0,
                rss: 1.0,
                target_name: "y".into(),
            },
            eps,
        )
        .unwrap();
        let kappa = rng.random_range(1..n);
        let ids = (0..n).map(|i| i.to_string()).collect();
        let p = exact(SingleTarget::new(x.clone(), ball.clone(), kappa, ids).unwrap());
        for i in 0..n {
            let r = p.flip_search(i);
            let (lo, hi) = angle_sweep_single(&x, &ball, i).unwrap();
            assert_eq!((r.min_rank, r.max_rank), (lo, hi), "case {case} row {i}");
            assert!(r.exact);
        }
    }
}

#[test]
fn status_mode_agrees_with_exact_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..6 {
        let n = 20;
        let ds = random_dataset(&mut rng, n, 3);
        let (o, _) = orthonormalize(&ds).unwrap();
        let m = fit_ols(&o, "y").unwrap();
        let ball = RashomonBall::new(m, 0.2, EpsilonMode::Relative).unwrap();
        let status = SingleTarget::from_dataset(&o, ball.clone(), 5).unwrap();
        let ex = exact(status.clone());
        for i in 0..n {
            let a = status.flip_search(i);
            let b = ex.flip_search(i);
            assert_eq!(a.flippable, b.flippable, "row {i}");
            assert!(status.verify_witness(&a));
            assert!(a.min_rank_bound <= b.min_rank && b.max_rank <= a.max_rank_bound);
        }
    }
}

#[test]
fn monte_carlo_flips_are_found_and_pruning_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..4 {
        let n = 12;
        let ds = random_dataset(&mut rng, n, 3);
        let (o, _) = orthonormalize(&ds).unwrap();
        let m = fit_ols(&o, "y").unwrap();
        let ball = RashomonBall::new(m, 0.5, EpsilonMode::Relative).unwrap();
        let p = SingleTarget::from_dataset(&o, ball.clone(), 3).unwrap();
        let reports = p.flip_search_all();
        let found = monte_carlo_flips(
            SampleFamily::Ball {
                design: o.features(),
                center: &ball.center.weights,
                epsilon: ball.epsilon,
            },
            3,
            20_000,
            9,
        )
        .unwrap();
        let pruned = p.prune();
        for &i in &found {
            assert!(reports[i].is_flippable(), "sampled flip at row {i} missed");
            assert!(!pruned.contains(i));
        }
        for r in &reports {
            assert!(r.is_certified());
            if pruned.contains(r.row) {
                assert!(!r.is_flippable());
            }
        }
    }
}

#[test]
fn mip_solutions_satisfy_formulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let ds = random_dataset(&mut rng, 15, 2);
    let (o, _) = orthonormalize(&ds).unwrap();
    let m = fit_ols(&o, "y").unwrap();
    let ball = RashomonBall::new(m, 0.3, EpsilonMode::Relative).unwrap();
    let p = SingleTarget::from_dataset(&o, ball.clone(), 4).unwrap();
    for i in 0..15 {
        for dir in [Direction::Min, Direction::Max] {
            let inst = p.instance(i, dir);
            let sol = solve(&inst, &SolveOptions::default());
            assert_eq!(sol.status, SolveStatus::Optimal);
            inst.check(&sol, CHECK_TOLERANCE).unwrap();
            let scale = ball.center.weights.norm() + ball.radius();
            assert!(ball_membership(&ball, &(&sol.continuous * scale)));
        }
    }
}
