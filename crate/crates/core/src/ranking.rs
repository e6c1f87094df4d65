//! Descending ranks and top-k membership.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankVector {
    /// 1 = largest score.
    pub ranks: Vec<usize>,
    pub kappa: usize,
    pub top_flags: Vec<bool>,
    /// Adjacent equal scores in sorted order (resolved by row index).
    pub ties: usize,
}

impl RankVector {
    pub fn is_top(&self, i: usize) -> bool {
        self.top_flags[i]
    }

    pub fn top_rows(&self) -> Vec<usize> {
        (0..self.ranks.len()).filter(|&i| self.top_flags[i]).collect()
    }

    /// Row indices ordered from rank 1 down.
    pub fn order(&self) -> Vec<usize> {
        let mut order = vec![0; self.ranks.len()];
        for (i, &r) in self.ranks.iter().enumerate() {
            order[r - 1] = i;
        }
        order
    }
}

/// Larger score first; equal scores go to the lower row index.
pub fn compare_desc(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b]
        .partial_cmp(&scores[a])
        .unwrap_or(Ordering::Equal)
        .then(a.cmp(&b))
}

/// Rank of one row without sorting: 1 + rows that beat it.
pub fn rank_of(scores: &[f64], i: usize) -> usize {
    let si = scores[i];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| j != i && (s > si || (s == si && j < i)))
        .count()
}

pub fn rank_descending(scores: &[f64], kappa: usize) -> Result<RankVector> {
    let n = scores.len();
    if kappa == 0 || kappa > n {
        return Err(Error::KappaOutOfRange { kappa, n });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore(i));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| compare_desc(scores, a, b));
    let mut ranks = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    let ties = order.windows(2).filter(|w| scores[w[0]] == scores[w[1]]).count();
    let top_flags = ranks.iter().map(|&r| r <= kappa).collect();
    Ok(RankVector {
        ranks,
        kappa,
        top_flags,
        ties,
    })
}

/// Resource cap given as a count or as a top percentage of rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaSpec {
    Count(usize),
    Percent(f64),
}

impl KappaSpec {
    /// Percentages round up so that small data still selects a row.
    pub fn resolve(&self, n: usize) -> Result<usize> {
        let k = match *self {
            KappaSpec::Count(k) => k,
            KappaSpec::Percent(p) => (p / 100.0 * n as f64 - 1e-9).ceil().max(1.0) as usize,
        };
        if k == 0 || k > n {
            return Err(Error::KappaOutOfRange { kappa: k, n });
        }
        Ok(k)
    }
}

impl FromStr for KappaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let t = t.strip_prefix("top").map(str::trim).unwrap_or(t);
        if let Some(p) = t.strip_suffix('%') {
            let v: f64 = p
                .trim()
                .parse()
                .map_err(|_| Error::InvalidKappa(s.to_string()))?;
            if !(v > 0.0 && v <= 100.0) {
                return Err(Error::InvalidKappa(s.to_string()));
            }
            return Ok(KappaSpec::Percent(v));
        }
        t.parse::<usize>()
            .map(KappaSpec::Count)
            .map_err(|_| Error::InvalidKappa(s.to_string()))
    }
}

impl fmt::Display for KappaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KappaSpec::Count(k) => write!(f, "{k}"),
            KappaSpec::Percent(p) => write!(f, "{p}%"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_example() {
        let r = rank_descending(&[0.3, 0.9, 0.5], 2).unwrap();
        assert_eq!(r.ranks, vec![3, 1, 2]);
        assert_eq!(r.top_flags, vec![false, true, true]);
        assert_eq!(r.order(), vec![1, 2, 0]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let r = rank_descending(&[1.0; 5], 1).unwrap();
        assert_eq!(r.ranks[0], 1);
        assert_eq!(r.ranks, vec![1, 2, 3, 4, 5]);
        assert_eq!(r.ties, 4);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            rank_descending(&[1.0, 2.0], 0),
            Err(Error::KappaOutOfRange { .. })
        ));
        assert!(matches!(
            rank_descending(&[1.0, 2.0], 3),
            Err(Error::KappaOutOfRange { .. })
        ));
        assert!(matches!(
            rank_descending(&[1.0, f64::NAN], 1),
            Err(Error::NonFiniteScore(1))
        ));
    }

    #[test]
    fn agrees_with_naive_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scores: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        for kappa in [1, 37, 500, 1000] {
            let r = rank_descending(&scores, kappa).unwrap();
            assert_eq!(r.top_flags.iter().filter(|&&t| t).count(), kappa);
            // naive: i is top iff fewer than kappa rows beat it
            for i in 0..scores.len() {
                let beaten_by = scores.iter().filter(|&&s| s > scores[i]).count();
                assert_eq!(r.top_flags[i], beaten_by < kappa);
            }
        }
    }

    #[test]
    fn rank_of_matches_full_ranking() {
        let scores = [0.5, 0.9, 0.5, 0.1];
        let r = rank_descending(&scores, 1).unwrap();
        for i in 0..4 {
            assert_eq!(rank_of(&scores, i), r.ranks[i]);
        }
    }

    #[test]
    fn kappa_spec_parsing() {
        assert_eq!("25".parse::<KappaSpec>().unwrap(), KappaSpec::Count(25));
        assert_eq!("3%".parse::<KappaSpec>().unwrap(), KappaSpec::Percent(3.0));
        assert_eq!("top 3%".parse::<KappaSpec>().unwrap(), KappaSpec::Percent(3.0));
        assert_eq!(KappaSpec::Percent(3.0).resolve(1000).unwrap(), 30);
        assert_eq!(KappaSpec::Percent(3.0).resolve(10).unwrap(), 1);
        assert_eq!(KappaSpec::Percent(3.0).resolve(101).unwrap(), 4);
        assert!("0%".parse::<KappaSpec>().is_err());
        assert!("x".parse::<KappaSpec>().is_err());
        assert!(KappaSpec::Count(11).resolve(10).is_err());
    }

    proptest! {
        #[test]
        fn affine_maps_preserve_ranks(
            scores in prop::collection::vec(-100.0f64..100.0, 2..60),
            slope in 0.01f64..50.0,
            shift in -10.0f64..10.0,
            kappa_frac in 0.0f64..1.0,
        ) {
            let n = scores.len();
            let kappa = 1 + ((n - 1) as f64 * kappa_frac) as usize;
            let a = rank_descending(&scores, kappa).unwrap();
            let mapped: Vec<f64> = scores.iter().map(|s| slope * s + shift).collect();
            let b = rank_descending(&mapped, kappa).unwrap();
            // affine maps can merge nearly-equal floats; compare only when order is strict
            if a.ties == 0 && b.ties == 0 {
                prop_assert_eq!(a.ranks, b.ranks);
            }
        }

        #[test]
        fn ranks_form_a_permutation(scores in prop::collection::vec(-5.0f64..5.0, 1..80)) {
            let n = scores.len();
            let r = rank_descending(&scores, n).unwrap();
            let mut seen = r.ranks.clone();
            seen.sort_unstable();
            prop_assert_eq!(seen, (1..=n).collect::<Vec<_>>());
        }
    }
}
