//! Least-squares fitting and the Rashomon ball of near-optimal linear models.
//!
//! On an orthonormal design `RSS(w) - RSS(w0) = ||w - w0||^2`, so the set of
//! models within `epsilon` of the optimum is a Euclidean ball around `w0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Basis, Dataset};
use crate::error::{Error, Result};

/// Slack on the ball boundary.
pub const BALL_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// Weights in the orthonormal basis.
    #[serde(with = "crate::vecs")]
    pub weights: DVector<f64>,
    pub rss: f64,
    pub target_name: String,
}

impl LinearModel {
    pub fn predict(&self, design: &DMatrix<f64>) -> DVector<f64> {
        design * &self.weights
    }
}

pub fn rss(design: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> f64 {
    (y - design * w).norm_squared()
}

/// OLS on an orthonormal design: `w0 = X^T y`.
pub fn fit_ols(ds: &Dataset, target: &str) -> Result<LinearModel> {
    let y = ds.target(target)?;
    fit_vector(ds, &y, target)
}

pub(crate) fn fit_vector(ds: &Dataset, y: &DVector<f64>, name: &str) -> Result<LinearModel> {
    if ds.basis() != Basis::Orthonormal {
        return Err(Error::NotOrthonormal);
    }
    let x = ds.features();
    let weights = x.transpose() * y;
    let rss = rss(x, y, &weights);
    Ok(LinearModel {
        weights,
        rss,
        target_name: name.to_string(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonMode {
    Absolute,
    /// Tolerance given as a fraction of the baseline RSS.
    #[default]
    Relative,
}

impl std::str::FromStr for EpsilonMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(EpsilonMode::Absolute),
            "relative" => Ok(EpsilonMode::Relative),
            other => Err(Error::Config(format!("unknown epsilon mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RashomonBall {
    pub center: LinearModel,
    /// Absolute RSS slack (the squared radius).
    pub epsilon: f64,
    pub epsilon_mode: EpsilonMode,
    /// The tolerance as supplied, before conversion.
    pub epsilon_input: f64,
}

impl RashomonBall {
    pub fn new(center: LinearModel, epsilon_input: f64, mode: EpsilonMode) -> Result<Self> {
        if !epsilon_input.is_finite() || epsilon_input < 0.0 {
            return Err(Error::Config(format!("epsilon must be >= 0, got {epsilon_input}")));
        }
        let epsilon = match mode {
            EpsilonMode::Absolute => epsilon_input,
            EpsilonMode::Relative => epsilon_input * center.rss,
        };
        Ok(RashomonBall {
            center,
            epsilon,
            epsilon_mode: mode,
            epsilon_input,
        })
    }

    pub fn absolute(center: LinearModel, epsilon: f64) -> Result<Self> {
        Self::new(center, epsilon, EpsilonMode::Absolute)
    }

    pub fn radius(&self) -> f64 {
        self.epsilon.sqrt()
    }

    pub fn dim(&self) -> usize {
        self.center.weights.len()
    }
}

/// `||w - w0||^2 <= epsilon` with a small inclusive slack.
pub fn ball_membership(ball: &RashomonBall, w: &DVector<f64>) -> bool {
    w.len() == ball.dim()
        && (w - &ball.center.weights).norm_squared() <= ball.epsilon + BALL_TOLERANCE
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::orthonormalize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, y: Option<Vec<f64>>) -> Dataset {
        let raw = DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
        let y = y.unwrap_or_else(|| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
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

    #[test]
    fn interpolating_target_has_zero_rss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ds = random_dataset(&mut rng, 15, 3, None);
        let (o, _) = orthonormalize(&ds).unwrap();
        let v = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.25]);
        let y = o.features() * &v;
        let m = fit_vector(&o, &y, "y").unwrap();
        assert!((m.weights - v).norm() < 1e-10);
        assert!(m.rss < 1e-20);
    }

    #[test]
    fn orthogonal_target_gives_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ds = random_dataset(&mut rng, 12, 2, None);
        let (o, _) = orthonormalize(&ds).unwrap();
        let x = o.features();
        let mut y = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
        let proj = x * (x.transpose() * &y);
        y -= proj;
        let m = fit_vector(&o, &y, "y").unwrap();
        assert!(m.weights.norm() < 1e-12);
        assert!((m.rss - y.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ds = random_dataset(&mut rng, 50, 2, None);
        let (o, _) = orthonormalize(&ds).unwrap();
        let m = fit_ols(&o, "y").unwrap();
        let x = ds.features();
        let y = ds.target("y").unwrap();
        let beta = (x.transpose() * x).lu().solve(&(x.transpose() * &y)).unwrap();
        let raw_pred = x * beta;
        assert!((m.predict(o.features()) - raw_pred).norm() < 1e-9);
        assert!(fit_ols(&ds, "y").is_err());
        assert!(matches!(fit_ols(&o, "z"), Err(Error::UnknownTarget(_))));
    }

    #[test]
    fn membership_center_boundary_and_outside() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ds = random_dataset(&mut rng, 30, 2, None);
        let (o, _) = orthonormalize(&ds).unwrap();
        let y = o.target("y").unwrap();
        let m = fit_ols(&o, "y").unwrap();
        let ball = RashomonBall::absolute(m.clone(), 0.04).unwrap();
        assert!(ball_membership(&ball, &m.weights));
        let mut edge = m.weights.clone();
        edge[0] += 0.2;
        assert!(ball_membership(&ball, &edge));

        let dir = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)).normalize();
        let w = &m.weights + dir * (1.01f64 * 0.04).sqrt();
        assert!(!ball_membership(&ball, &w));
        let x = o.features();
        assert!(rss(x, &y, &w) - rss(x, &y, &m.weights) > 0.04);
    }

    #[test]
    fn relative_epsilon_scales_with_rss() {
        let m = LinearModel {
            weights: DVector::zeros(2),
            rss: 8.0,
            target_name: "y".into(),
        };
        let b = RashomonBall::new(m, 0.25, EpsilonMode::Relative).unwrap();
        assert_eq!(b.epsilon, 2.0);
        assert!(RashomonBall::absolute(b.center.clone(), -1.0).is_err());
    }
}
