//! Exact low-dimensional sweeps and a sampling lower bound used to certify
//! the branch-and-bound results.
//!
//! The sweeps use generic semantics: only open cells of the pairwise tie
//! arrangement are evaluated, never points that sit exactly on a tie. This
//! matches the strict-order margin of the MIP formulations.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::linear_fit::RashomonBall;
use crate::ranking::rank_descending;

const TIE_EPS: f64 = 1e-12;
/// Critical angles or breakpoints closer than this are one event.
const MERGE_EPS: f64 = 1e-9;

/// 1-based rank of `i` with ties going to the lower index.
fn rank_of(scores: &DVector<f64>, i: usize) -> usize {
    let si = scores[i];
    1 + (0..scores.len())
        .filter(|&j| j != i && (scores[j] > si || (scores[j] == si && j < i)))
        .count()
}

fn top_flags(scores: &DVector<f64>, kappa: usize) -> Result<Vec<bool>> {
    Ok(rank_descending(scores.as_slice(), kappa)?.top_flags)
}

/// Exact min and max rank of row `i` over the disc `||w - w0||^2 <= eps`
/// for a two-column design.
pub fn angle_sweep_single(design: &DMatrix<f64>, ball: &RashomonBall, i: usize) -> Result<(usize, usize)> {
    if design.ncols() != 2 || ball.dim() != 2 {
        return Err(Error::OraclePrecondition(format!(
            "angle sweep needs 2 weight dimensions, got {}",
            design.ncols()
        )));
    }
    if i >= design.nrows() {
        return Err(Error::OraclePrecondition(format!("row {i} out of range")));
    }
    let w0 = &ball.center.weights;
    let base = design * w0;
    if ball.epsilon == 0.0 {
        let r = rank_of(&base, i);
        return Ok((r, r));
    }
    let radius = ball.radius();
    let xi = design.row(i);
    let scale = design.row_iter().map(|r| r.norm()).fold(1.0, f64::max) * (w0.norm() + radius);
    let mut angles = Vec::new();
    let mut w0_generic = true;
    for j in 0..design.nrows() {
        if j == i {
            continue;
        }
        let d = xi - design.row(j);
        let rho = d.norm() * radius;
        if d.norm() <= TIE_EPS * scale {
            continue;
        }
        let c = d.dot(&w0.transpose());
        if c.abs() <= TIE_EPS * scale {
            w0_generic = false;
        }
        if c.abs() < rho {
            let phi = d[1].atan2(d[0]);
            let delta = (-c / rho).acos();
            for a in [phi + delta, phi - delta] {
                angles.push(a.rem_euclid(2.0 * PI));
            }
        }
    }
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|b, a| *b - *a < MERGE_EPS);
    if angles.len() > 1 && angles[0] + 2.0 * PI - angles[angles.len() - 1] < MERGE_EPS {
        angles.pop();
    }
    let mut probes = Vec::new();
    if angles.is_empty() {
        probes.push(0.0);
    } else {
        for k in 0..angles.len() {
            let a = angles[k];
            let b = if k + 1 < angles.len() { angles[k + 1] } else { angles[0] + 2.0 * PI };
            if b - a > 0.0 {
                probes.push(0.5 * (a + b));
            }
        }
    }
    let mut lo = usize::MAX;
    let mut hi = 0;
    let mut visit = |w: &DVector<f64>| {
        let r = rank_of(&(design * w), i);
        lo = lo.min(r);
        hi = hi.max(r);
    };
    for th in probes {
        let w = w0 + DVector::from_vec(vec![th.cos(), th.sin()]) * radius;
        visit(&w);
    }
    if w0_generic {
        visit(w0);
    }
    Ok((lo, hi))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SweepQuery {
    Rank(usize),
    GroupCount { members: Vec<usize> },
}

/// Exact extremes over `alpha = (t, 1 - t)` for two prediction columns:
/// min/max rank of a row, or min/max number of members in the top `kappa`.
pub fn simplex_sweep_k2(predictions: &DMatrix<f64>, kappa: usize, query: &SweepQuery) -> Result<(usize, usize)> {
    if predictions.ncols() != 2 {
        return Err(Error::OraclePrecondition(format!(
            "simplex sweep needs K = 2, got {}",
            predictions.ncols()
        )));
    }
    let n = predictions.nrows();
    if kappa == 0 || kappa > n {
        return Err(Error::KappaOutOfRange { kappa, n });
    }
    let rows: Vec<usize> = match query {
        SweepQuery::Rank(i) => vec![*i],
        SweepQuery::GroupCount { members } => members.clone(),
    };
    if rows.iter().any(|&r| r >= n) {
        return Err(Error::OraclePrecondition("row out of range".into()));
    }
    let scale = predictions.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut breaks = vec![0.0, 1.0];
    let pairs: Box<dyn Iterator<Item = (usize, usize)>> = match query {
        SweepQuery::Rank(i) => Box::new((0..n).filter(move |&j| j != *i).map(move |j| (*i, j))),
        SweepQuery::GroupCount { .. } => Box::new((0..n).flat_map(move |a| ((a + 1)..n).map(move |b| (a, b)))),
    };
    for (a, b) in pairs {
        let dp = predictions[(a, 0)] - predictions[(b, 0)];
        let dq = predictions[(a, 1)] - predictions[(b, 1)];
        // gap(t) = t dp + (1 - t) dq
        if (dq - dp).abs() <= TIE_EPS * scale {
            continue;
        }
        let t = dq / (dq - dp);
        if t > 0.0 && t < 1.0 {
            breaks.push(t);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|b, a| *b - *a < MERGE_EPS);
    if let Some(last) = breaks.last_mut() {
        *last = 1.0;
    }
    let mut lo = usize::MAX;
    let mut hi = 0;
    for w in breaks.windows(2) {
        if w[1] - w[0] <= 0.0 {
            continue;
        }
        let t = 0.5 * (w[0] + w[1]);
        let s = predictions.column(0) * t + predictions.column(1) * (1.0 - t);
        let value = match query {
            SweepQuery::Rank(i) => rank_of(&s, *i),
            SweepQuery::GroupCount { members } => {
                let top = top_flags(&s, kappa)?;
                members.iter().filter(|&&m| top[m]).count()
            }
        };
        lo = lo.min(value);
        hi = hi.max(value);
    }
    Ok((lo, hi))
}

/// Model family sampled by [`monte_carlo_flips`].
#[derive(Clone, Copy, Debug)]
pub enum SampleFamily<'a> {
    /// Weights on the sphere `||w - w0|| = sqrt(eps)` plus the closed-form
    /// extreme models of every row.
    Ball {
        design: &'a DMatrix<f64>,
        center: &'a DVector<f64>,
        epsilon: f64,
    },
    /// Dirichlet(1) combining weights plus every one-hot vector.
    Simplex { predictions: &'a DMatrix<f64> },
}

type ScoreFn<'a> = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + 'a>;

/// Rows observed both inside and outside the top `kappa` among the sampled
/// models (the reference model always included). A lower bound on the
/// flippable set.
pub fn monte_carlo_flips(family: SampleFamily<'_>, kappa: usize, samples: usize, seed: u64) -> Result<BTreeSet<usize>> {
    let (n, mut candidates, scores_of): (usize, Vec<DVector<f64>>, ScoreFn<'_>) =
        match family {
            SampleFamily::Ball { design, center, epsilon } => {
                let r = epsilon.max(0.0).sqrt();
                let mut c = vec![center.clone()];
                if r > 0.0 {
                    for row in design.row_iter() {
                        let x = row.transpose();
                        let norm = x.norm();
                        if norm > 0.0 {
                            c.push(center + &x * (r / norm));
                            c.push(center - &x * (r / norm));
                        }
                    }
                }
                (design.nrows(), c, Box::new(move |w: &DVector<f64>| design * w))
            }
            SampleFamily::Simplex { predictions } => {
                let k = predictions.ncols();
                let mut c = vec![DVector::from_element(k, 1.0 / k as f64)];
                for j in 0..k {
                    let mut e = DVector::zeros(k);
                    e[j] = 1.0;
                    c.push(e);
                }
                (predictions.nrows(), c, Box::new(move |a: &DVector<f64>| predictions * a))
            }
        };
    if kappa == 0 || kappa > n {
        return Err(Error::KappaOutOfRange { kappa, n });
    }
    if samples == 0 {
        return Ok(BTreeSet::new());
    }
    let mut seen_in = vec![false; n];
    let mut seen_out = vec![false; n];
    let mut record = |s: DVector<f64>| -> Result<()> {
        for (j, t) in top_flags(&s, kappa)?.into_iter().enumerate() {
            if t {
                seen_in[j] = true;
            } else {
                seen_out[j] = true;
            }
        }
        Ok(())
    };
    for c in candidates.drain(..) {
        record(scores_of(&c))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let v = match family {
            SampleFamily::Ball { center, epsilon, .. } => {
                let dir = DVector::from_fn(center.len(), |_, _| StandardNormal.sample(&mut rng));
                let norm: f64 = dir.norm();
                if norm == 0.0 {
                    continue;
                }
                center + dir * (epsilon.max(0.0).sqrt() / norm)
            }
            SampleFamily::Simplex { predictions } => {
                let e = DVector::from_fn(predictions.ncols(), |_, _| -> f64 { Exp1.sample(&mut rng) });
                let sum = e.sum();
                e / sum
            }
        };
        record(scores_of(&v))?;
    }
    Ok((0..n).filter(|&j| seen_in[j] && seen_out[j]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_fit::LinearModel;

    fn ball(w0: &[f64], eps: f64) -> RashomonBall {
        RashomonBall::absolute(
            LinearModel {
                weights: DVector::from_row_slice(w0),
                rss: 1.0,
                target_name: "y".into(),
            },
            eps,
        )
        .unwrap()
    }

    #[test]
    fn zero_epsilon_returns_baseline_rank() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let b = ball(&[0.0, 1.0], 0.0);
        assert_eq!(angle_sweep_single(&x, &b, 0).unwrap(), (3, 3));
        assert_eq!(angle_sweep_single(&x, &b, 2).unwrap(), (1, 1));
    }

    #[test]
    fn two_points_follow_gap_bound_sign() {
        // scores x.w with w0 = (1, 0): row 0 scores 1, row 1 scores 2
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        // B(0, 1) = -1 + sqrt(eps) * 1 > 0 iff eps > 1
        for (eps, expect) in [(0.25, 2), (4.0, 1)] {
            let (lo, _) = angle_sweep_single(&x, &ball(&[1.0, 0.0], eps), 0).unwrap();
            assert_eq!(lo, expect, "eps {eps}");
        }
    }

    #[test]
    fn rejects_wrong_dimension() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0; 6]);
        assert!(angle_sweep_single(&x, &ball(&[0.0, 0.0, 0.0], 1.0), 0).is_err());
        assert!(simplex_sweep_k2(&x, 1, &SweepQuery::Rank(0)).is_err());
    }

    #[test]
    fn identical_targets_have_no_breakpoints() {
        let p = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 3.0, 3.0, 2.0, 2.0, 0.0, 0.0]);
        for i in 0..4 {
            let (lo, hi) = simplex_sweep_k2(&p, 2, &SweepQuery::Rank(i)).unwrap();
            assert_eq!(lo, hi);
        }
        let (lo, hi) = simplex_sweep_k2(&p, 2, &SweepQuery::GroupCount { members: vec![0, 1] }).unwrap();
        assert_eq!((lo, hi), (1, 1));
    }

    #[test]
    fn crossing_pair_swaps_at_midpoint() {
        // row 0: (1, 0), row 1: (0, 1); tie at t = 0.5
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(simplex_sweep_k2(&p, 1, &SweepQuery::Rank(0)).unwrap(), (1, 2));
        assert_eq!(simplex_sweep_k2(&p, 1, &SweepQuery::Rank(1)).unwrap(), (1, 2));
    }

    #[test]
    fn monte_carlo_zero_samples_is_empty() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let f = monte_carlo_flips(SampleFamily::Simplex { predictions: &p }, 1, 0, 1).unwrap();
        assert!(f.is_empty());
    }

    #[test]
    fn monte_carlo_finds_one_hot_flips() {
        let p = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, -1.0]);
        let f = monte_carlo_flips(SampleFamily::Simplex { predictions: &p }, 1, 1, 3).unwrap();
        assert_eq!(f.into_iter().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let x = DMatrix::from_fn(12, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let w0 = DVector::from_vec(vec![0.3, -0.2, 0.5]);
        let fam = SampleFamily::Ball {
            design: &x,
            center: &w0,
            epsilon: 0.05,
        };
        assert_eq!(
            monte_carlo_flips(fam, 4, 500, 11).unwrap(),
            monte_carlo_flips(fam, 4, 500, 11).unwrap()
        );
    }
}
