//! Seeded fixtures shared by the benchmarks in `benches/`.

use multiplicity::dataset::orthonormalize;
use multiplicity::index_model::{build_ensemble, IndexEnsemble, Standardization};
use multiplicity::linear_fit::{fit_ols, EpsilonMode, RashomonBall};
use multiplicity::rashomon::SingleTarget;
use multiplicity::Dataset;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` rows, `d` uniform features, `k` noisy linear targets, about 30%
/// of rows in group `a`.
pub fn dataset(n: usize, d: usize, k: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let beta = DMatrix::from_fn(d, k, |_, _| rng.random_range(-1.0..1.0));
    let y = &x * beta + DMatrix::from_fn(n, k, |_, _| rng.random_range(-0.5..0.5));
    let groups = (0..n)
        .map(|i| if i == 0 || rng.random_bool(0.3) { "a" } else { "b" }.to_string())
        .collect();
    Dataset::from_parts(
        (0..d).map(|j| format!("x{j}")).collect(),
        x,
        (0..k).map(|j| format!("y{j}")).collect(),
        y,
        "group",
        groups,
        None,
        None,
    )
    .expect("fixture dataset")
}

pub fn single_target(n: usize, d: usize, epsilon: f64, kappa: usize) -> SingleTarget {
    let (o, _) = orthonormalize(&dataset(n, d, 1, 1)).expect("full rank");
    let ball = RashomonBall::new(fit_ols(&o, "y0").expect("fit"), epsilon, EpsilonMode::Relative).expect("ball");
    SingleTarget::from_dataset(&o, ball, kappa).expect("problem")
}

pub fn ensemble(n: usize, k: usize) -> (IndexEnsemble, Vec<String>) {
    let ds = dataset(n, 3, k, 2);
    let (o, _) = orthonormalize(&ds).expect("full rank");
    let models: Vec<_> = (0..k).map(|j| fit_ols(&o, &format!("y{j}")).expect("fit")).collect();
    let ens = build_ensemble(&models, &o, Standardization::Zscore).expect("ensemble");
    (ens, ds.groups().to_vec())
}
