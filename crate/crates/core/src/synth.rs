//! Semi-synthetic data with two age-driven targets and a protected group
//! concentrated in the middle of the age range.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::{hash_split, Dataset};
use crate::error::{Error, Result};

pub const AGE_RANGE: (f64, f64) = (20.0, 80.0);
pub const PROTECTED: &str = "protected";
pub const OTHER: &str = "other";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    /// Slope of the second target in standardized age.
    pub b: f64,
    /// Age quantile band with the elevated group probability.
    pub group_band: (f64, f64),
    pub p_in_band: f64,
    pub p_out_band: f64,
    pub noise_sd: f64,
    /// Weight of the shared `-z^2` term. Zero gives purely linear targets.
    pub curvature: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 600,
            b: 0.0,
            group_band: (0.4, 0.6),
            p_in_band: 0.6,
            p_out_band: 0.1,
            noise_sd: 0.5,
            curvature: 0.5,
            seed: 7,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.group_band;
        if self.n < 10 {
            return Err(Error::TooFewRows {
                required: 10,
                actual: self.n,
            });
        }
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            return Err(Error::Config(format!("invalid group band ({lo}, {hi})")));
        }
        let prob = 0.0..=1.0;
        if !prob.contains(&self.p_in_band) || !prob.contains(&self.p_out_band) || self.p_in_band <= self.p_out_band {
            return Err(Error::Config("need 0 <= p_out_band < p_in_band <= 1".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) || !self.b.is_finite() || !self.curvature.is_finite() {
            return Err(Error::Config("b, curvature and noise_sd must be finite, noise_sd >= 0".into()));
        }
        Ok(())
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Features `age` and `age_sq` (age squared over 100), targets `y1` and
/// `y2`, group column `group`.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let age_dist = Uniform::new(AGE_RANGE.0, AGE_RANGE.1).expect("valid range");
    let ages: Vec<f64> = (0..n).map(|_| age_dist.sample(&mut rng)).collect();
    let mut sorted = ages.clone();
    sorted.sort_by(f64::total_cmp);
    let (band_lo, band_hi) = (quantile(&sorted, cfg.group_band.0), quantile(&sorted, cfg.group_band.1));

    let mid = 0.5 * (AGE_RANGE.0 + AGE_RANGE.1);
    let sd = (AGE_RANGE.1 - AGE_RANGE.0) / 12f64.sqrt();
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let mut targets = DMatrix::zeros(n, 2);
    let mut groups = Vec::with_capacity(n);
    for (i, &age) in ages.iter().enumerate() {
        let p = if age >= band_lo && age <= band_hi { cfg.p_in_band } else { cfg.p_out_band };
        groups.push(if rng.random::<f64>() < p { PROTECTED } else { OTHER }.to_string());
        let z = (age - mid) / sd;
        let bump = -cfg.curvature * z * z;
        targets[(i, 0)] = -z + bump + noise.sample(&mut rng);
        targets[(i, 1)] = cfg.b * z + bump + noise.sample(&mut rng);
    }
    let features = DMatrix::from_fn(n, 2, |i, j| if j == 0 { ages[i] } else { ages[i] * ages[i] / 100.0 });
    let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let splits = ids.iter().map(|id| hash_split(id, cfg.seed)).collect();
    Dataset::from_parts(
        vec!["age".into(), "age_sq".into()],
        features,
        vec!["y1".into(), "y2".into()],
        targets,
        "group",
        groups,
        Some(ids),
        Some(splits),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        if vb == 0.0 {
            return 0.0;
        }
        cov / (va * vb).sqrt()
    }

    fn linear(b: f64) -> SynthConfig {
        SynthConfig {
            b,
            noise_sd: 0.0,
            curvature: 0.0,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn noiseless_first_target_is_perfectly_anticorrelated() {
        let ds = generate(&linear(0.7)).unwrap();
        let age: Vec<f64> = ds.features().column(1).iter().copied().collect();
        let y1: Vec<f64> = ds.targets().column(0).iter().copied().collect();
        assert!((corr(&age, &y1) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_second_target_at_zero_slope() {
        let ds = generate(&linear(0.0)).unwrap();
        let y2 = ds.targets().column(1);
        assert!(y2.iter().all(|&v| v == y2[0]));
        let age: Vec<f64> = ds.features().column(1).iter().copied().collect();
        assert_eq!(corr(&age, &y2.iter().copied().collect::<Vec<_>>()), 0.0);
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate(&SynthConfig::default()).unwrap();
        let b = generate(&SynthConfig::default()).unwrap();
        assert_eq!(a.features(), b.features());
        assert_eq!(a.targets(), b.targets());
        assert_eq!(a.groups(), b.groups());
        assert_eq!(a.splits(), b.splits());
    }

    #[test]
    fn band_is_enriched() {
        let ds = generate(&SynthConfig {
            n: 4000,
            ..SynthConfig::default()
        })
        .unwrap();
        let ages = ds.features().column(1);
        let (mut inside, mut in_n, mut outside, mut out_n) = (0, 0, 0, 0);
        for i in 0..ds.n() {
            let protected = ds.groups()[i] == PROTECTED;
            if (44.0..=56.0).contains(&ages[i]) {
                in_n += 1;
                inside += protected as usize;
            } else if !(40.0..=60.0).contains(&ages[i]) {
                out_n += 1;
                outside += protected as usize;
            }
        }
        assert!(inside as f64 / in_n as f64 > 0.45);
        assert!((outside as f64 / out_n as f64) < 0.15);
    }

    #[test]
    fn rejects_bad_config() {
        let bad_band = SynthConfig {
            group_band: (0.6, 0.4),
            ..SynthConfig::default()
        };
        assert!(generate(&bad_band).is_err());
        let bad_p = SynthConfig {
            p_in_band: 0.05,
            ..SynthConfig::default()
        };
        assert!(generate(&bad_p).is_err());
        assert!(generate(&SynthConfig { n: 5, ..SynthConfig::default() }).is_err());
    }
}
