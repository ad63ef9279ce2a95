use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::histogram::Histogram;

/// Similarity between two distributions on one binning, in [0, 1] with 1 meaning identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorKind {
    /// Σ min(pᵢ, qᵢ), i.e. one minus the total variation distance.
    #[default]
    Intersection,
    /// Σ √(pᵢ qᵢ).
    Bhattacharyya,
}

impl IndicatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Intersection => "intersection",
            Self::Bhattacharyya => "bhattacharyya",
        }
    }

    /// Evaluates the indicator on raw proportion vectors of equal length.
    pub fn similarity(&self, p: &[f64], q: &[f64]) -> f64 {
        let s: f64 = match self {
            Self::Intersection => p.iter().zip(q).map(|(a, b)| a.min(*b)).sum(),
            Self::Bhattacharyya => p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum(),
        };
        s.clamp(0.0, 1.0)
    }
}

impl std::str::FromStr for IndicatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intersection" => Ok(Self::Intersection),
            "bhattacharyya" => Ok(Self::Bhattacharyya),
            other => Err(Error::Invalid(format!(
                "unknown indicator `{other}` (expected intersection or bhattacharyya)"
            ))),
        }
    }
}

impl std::fmt::Display for IndicatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_shared_binning(p: &Histogram, q: &Histogram) -> Result<()> {
    if p.binning != q.binning || p.proportions.len() != q.proportions.len() {
        return Err(Error::Contract("histograms are built on different binnings".into()));
    }
    Ok(())
}

pub fn indicator(p: &Histogram, q: &Histogram, kind: IndicatorKind) -> Result<f64> {
    check_shared_binning(p, q)?;
    Ok(kind.similarity(&p.proportions, &q.proportions))
}

/// Population mass lying in bins the sample touches.
pub fn variational_coverage(sample: &Histogram, population: &Histogram) -> Result<f64> {
    check_shared_binning(sample, population)?;
    let covered: f64 = sample
        .proportions
        .iter()
        .zip(&population.proportions)
        .filter(|(s, _)| **s > 0.0)
        .map(|(_, p)| *p)
        .sum();
    Ok(covered.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::histogram::Binning;
    use proptest::prelude::*;

    fn hist(p: &[f64]) -> Histogram {
        Histogram {
            binning: Binning::equal_width(p.len(), 0.0, 1.0).unwrap(),
            proportions: p.to_vec(),
            support_count: 1,
        }
    }

    #[test]
    fn identical_histograms_score_one() {
        let p = hist(&[0.2, 0.3, 0.5]);
        for kind in [IndicatorKind::Intersection, IndicatorKind::Bhattacharyya] {
            assert_eq!(indicator(&p, &p, kind).unwrap(), 1.0);
        }
    }

    #[test]
    fn disjoint_support_scores_zero() {
        let (p, q) = (hist(&[1.0, 0.0]), hist(&[0.0, 1.0]));
        for kind in [IndicatorKind::Intersection, IndicatorKind::Bhattacharyya] {
            assert_eq!(indicator(&p, &q, kind).unwrap(), 0.0);
        }
    }

    #[test]
    fn hand_evaluated_pair() {
        let (p, q) = (hist(&[0.5, 0.5]), hist(&[0.25, 0.75]));
        // min(0.5,0.25)+min(0.5,0.75) and √0.125+√0.375.
        let inter = 0.25 + 0.5;
        let bhat = 0.125f64.sqrt() + 0.375f64.sqrt();
        assert!((bhat - 0.9659).abs() < 5e-5);
        assert_eq!(indicator(&p, &q, IndicatorKind::Intersection).unwrap(), inter);
        assert!((indicator(&p, &q, IndicatorKind::Bhattacharyya).unwrap() - bhat).abs() < 1e-15);
    }

    #[test]
    fn binning_mismatch_is_a_contract_error() {
        let p = hist(&[0.5, 0.5]);
        let q = hist(&[0.2, 0.3, 0.5]);
        assert!(matches!(indicator(&p, &q, IndicatorKind::Intersection), Err(Error::Contract(_))));
        assert!(matches!(variational_coverage(&p, &q), Err(Error::Contract(_))));
    }

    #[test]
    fn coverage_examples() {
        let pop = hist(&[0.25, 0.25, 0.3, 0.2]);
        assert_eq!(variational_coverage(&hist(&[0.1, 0.2, 0.3, 0.4]), &pop).unwrap(), 1.0);
        assert_eq!(variational_coverage(&pop, &pop).unwrap(), 1.0);
        // Sample touches bins 0 and 1, which hold 0.25 + 0.25 of the population.
        let half = variational_coverage(&hist(&[0.7, 0.3, 0.0, 0.0]), &pop).unwrap();
        assert_eq!(half, 0.25 + 0.25);
    }

    fn distribution(bins: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0u32..50, bins).prop_map(|counts| {
            let total: u32 = counts.iter().sum::<u32>().max(1);
            let mut p: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
            if counts.iter().all(|&c| c == 0) {
                p[0] = 1.0;
            }
            p
        })
    }

    proptest! {
        #[test]
        fn bounded_and_symmetric((p, q) in (2usize..12).prop_flat_map(|n| (distribution(n), distribution(n)))) {
            let (hp, hq) = (hist(&p), hist(&q));
            for kind in [IndicatorKind::Intersection, IndicatorKind::Bhattacharyya] {
                let a = indicator(&hp, &hq, kind).unwrap();
                let b = indicator(&hq, &hp, kind).unwrap();
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert_eq!(a, b);
                if p == q {
                    prop_assert!((a - 1.0).abs() <= 1e-12);
                }
            }
        }
    }
}
