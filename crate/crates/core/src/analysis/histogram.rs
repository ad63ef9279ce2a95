use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::VariableKind;

pub const DEFAULT_BIN_COUNT: usize = 20;

/// Tolerance for "proportions sum to one".
pub(crate) const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BinningKind {
    /// Categorical for categorical layers, equal-width otherwise.
    #[default]
    Auto,
    EqualWidth,
    LogWidth,
    Categorical,
}

impl std::str::FromStr for BinningKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "equal_width" => Ok(Self::EqualWidth),
            "log_width" => Ok(Self::LogWidth),
            "categorical" => Ok(Self::Categorical),
            other => Err(Error::Invalid(format!("unknown binning `{other}`"))),
        }
    }
}

/// How to discretise a variable before its domain is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningSpec {
    #[serde(default)]
    pub kind: BinningKind,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_bins() -> usize {
    DEFAULT_BIN_COUNT
}

impl Default for BinningSpec {
    fn default() -> Self {
        Self {
            kind: BinningKind::Auto,
            bins: DEFAULT_BIN_COUNT,
        }
    }
}

impl BinningSpec {
    pub fn equal_width(bins: usize) -> Self {
        Self {
            kind: BinningKind::EqualWidth,
            bins,
        }
    }
}

/// A resolved discretisation. Numeric binnings hold `bins + 1` ascending edges spanning
/// the population's [min, max]; a value on an interior edge falls in the upper bin, and
/// the maximum falls in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Binning {
    EqualWidth { edges: Vec<f64> },
    /// Edges equally spaced in ln(v + shift); `shift` lifts the minimum to at least 1
    /// when the population has non-positive values.
    LogWidth { edges: Vec<f64>, shift: f64 },
    Categorical { categories: Vec<i64> },
}

impl Binning {
    pub fn equal_width(bins: usize, min: f64, max: f64) -> Result<Self> {
        check_numeric(bins, min, max)?;
        let mut edges: Vec<f64> = (0..=bins)
            .map(|i| min + (max - min) * (i as f64 / bins as f64))
            .collect();
        edges[bins] = max;
        Ok(Binning::EqualWidth { edges })
    }

    pub fn log_width(bins: usize, min: f64, max: f64) -> Result<Self> {
        check_numeric(bins, min, max)?;
        let shift = if min > 0.0 { 0.0 } else { 1.0 - min };
        let (lo, hi) = ((min + shift).ln(), (max + shift).ln());
        let mut edges: Vec<f64> = (0..=bins)
            .map(|i| (lo + (hi - lo) * (i as f64 / bins as f64)).exp() - shift)
            .collect();
        edges[0] = min;
        edges[bins] = max;
        // exp/ln round trips can nudge an edge past its neighbour on tiny ranges.
        for i in 1..=bins {
            if edges[i] < edges[i - 1] {
                edges[i] = edges[i - 1];
            }
        }
        Ok(Binning::LogWidth { edges, shift })
    }

    pub fn categorical(mut categories: Vec<i64>) -> Result<Self> {
        categories.sort_unstable();
        categories.dedup();
        if categories.is_empty() {
            return Err(Error::Invalid("categorical binning needs at least one category".into()));
        }
        Ok(Binning::Categorical { categories })
    }

    /// Resolves `spec` against the population's values.
    pub fn from_population(spec: BinningSpec, kind: VariableKind, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("cannot bin an empty population".into()));
        }
        let resolved = match (spec.kind, kind) {
            (BinningKind::Auto, VariableKind::Categorical) => BinningKind::Categorical,
            (BinningKind::Auto, VariableKind::Continuous) => BinningKind::EqualWidth,
            (k, _) => k,
        };
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        match resolved {
            BinningKind::EqualWidth | BinningKind::Auto => Self::equal_width(spec.bins, min, max),
            BinningKind::LogWidth => Self::log_width(spec.bins, min, max),
            BinningKind::Categorical => {
                let codes = values
                    .iter()
                    .map(|&v| {
                        crate::ingest::layer_category_code(v).ok_or_else(|| {
                            Error::Type(format!("value {v} cannot be binned as a category"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::categorical(codes)
            }
        }
    }

    pub fn bin_count(&self) -> usize {
        match self {
            Binning::EqualWidth { edges } | Binning::LogWidth { edges, .. } => edges.len() - 1,
            Binning::Categorical { categories } => categories.len(),
        }
    }

    /// Bin of a value. Numeric values outside the domain are clamped to it; categorical
    /// values outside the category set have no bin.
    pub fn bin_of(&self, v: f64) -> Option<usize> {
        match self {
            Binning::EqualWidth { edges } | Binning::LogWidth { edges, .. } => {
                let n = edges.len() - 1;
                Some(edges[1..n].partition_point(|&e| e <= v))
            }
            Binning::Categorical { categories } => {
                let code = crate::ingest::layer_category_code(v)?;
                categories.binary_search(&code).ok()
            }
        }
    }

    /// Human-readable bounds of bin `i`: `[lower, upper)` or the category code.
    pub fn bin_bounds(&self, i: usize) -> BinBounds {
        match self {
            Binning::EqualWidth { edges } | Binning::LogWidth { edges, .. } => BinBounds::Range {
                lower: edges[i],
                upper: edges[i + 1],
            },
            Binning::Categorical { categories } => BinBounds::Category(categories[i]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BinBounds {
    Range { lower: f64, upper: f64 },
    Category(i64),
}

fn check_numeric(bins: usize, min: f64, max: f64) -> Result<()> {
    if bins < 2 {
        return Err(Error::Invalid(format!("need at least 2 bins, got {bins}")));
    }
    if !(min.is_finite() && max.is_finite() && min <= max) {
        return Err(Error::Invalid(format!("invalid binning domain [{min}, {max}]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub binning: Binning,
    pub proportions: Vec<f64>,
    /// Number of values histogrammed.
    pub support_count: usize,
}

impl Histogram {
    pub(crate) fn from_counts(binning: &Binning, counts: &[u64]) -> Self {
        let total: u64 = counts.iter().sum();
        let proportions: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        debug_assert!((proportions.iter().sum::<f64>() - 1.0).abs() <= MASS_TOLERANCE);
        Self {
            binning: binning.clone(),
            proportions,
            support_count: total as usize,
        }
    }
}

/// Proportion of `values` in each bin of `binning`.
pub fn build_histogram(values: &[f64], binning: &Binning) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::Invalid("cannot histogram an empty set of values".into()));
    }
    let mut counts = vec![0u64; binning.bin_count()];
    for &v in values {
        let bin = binning
            .bin_of(v)
            .ok_or_else(|| Error::Contract(format!("value {v} lies outside the binning")))?;
        counts[bin] += 1;
    }
    Ok(Histogram::from_counts(binning, &counts))
}
