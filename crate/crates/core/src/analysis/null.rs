//! Null distribution of the indicator under uniform random sampling of the population.
//!
//! Replicate `r` draws from a ChaCha8 generator seeded with the analysis seed on stream
//! `r`, so every replicate is a pure function of `(seed, r)` and the result does not
//! depend on how replicates are scheduled across threads.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collections::Extent;
use crate::error::{Error, Result};
use crate::grid::CellId;
use crate::ingest::VariableLayer;

use super::histogram::{Binning, Histogram};
use super::indicator::IndicatorKind;

pub const DEFAULT_REPLICATES: usize = 1000;

/// Extent cells that carry a value for the analysed variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    cells: Vec<CellId>,
    values: Vec<f64>,
    /// Extent cells without a value.
    pub coverage_gap_count: usize,
}

impl Population {
    pub fn new(extent: &Extent, layer: &VariableLayer) -> Result<Self> {
        let mut cells = Vec::with_capacity(extent.len().min(layer.len()));
        let mut values = Vec::with_capacity(cells.capacity());
        // Both sides are sorted by cell; merge instead of searching.
        let mut data = layer.iter().peekable();
        for &cell in extent.cells() {
            while data.next_if(|(c, _)| *c < cell).is_some() {}
            if let Some((_, v)) = data.next_if(|(c, _)| *c == cell) {
                cells.push(cell);
                values.push(v);
            }
        }
        if cells.is_empty() {
            return Err(Error::Invalid(format!(
                "extent `{}` has no cells with data for `{}`",
                extent.extent_id, layer.variable_id
            )));
        }
        let coverage_gap_count = extent.len() - cells.len();
        Ok(Self {
            cells,
            values,
            coverage_gap_count,
        })
    }

    pub fn cells(&self) -> &[CellId] {
        &self.cells
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn value_of(&self, cell: CellId) -> Option<f64> {
        self.cells.binary_search(&cell).ok().map(|i| self.values[i])
    }

    pub(crate) fn bin_indices(&self, binning: &Binning) -> Result<Vec<u32>> {
        self.values
            .iter()
            .map(|&v| {
                binning
                    .bin_of(v)
                    .map(|b| b as u32)
                    .ok_or_else(|| Error::Contract(format!("population value {v} lies outside the binning")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub sample_size: usize,
    pub replicate_count: usize,
    pub seed: u64,
    pub with_replacement: bool,
    /// Replicate indicators, ascending.
    pub values: Vec<f64>,
}

impl NullDistribution {
    /// Percentage of replicates strictly below `x`, counting ties as half.
    pub fn percentile_rank(&self, x: f64) -> f64 {
        let below = self.values.partition_point(|&v| v < x);
        let not_above = self.values.partition_point(|&v| v <= x);
        let ties = not_above - below;
        100.0 * (below as f64 + 0.5 * ties as f64) / self.values.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Linear-interpolated quantile, `q` in [0, 1].
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.values.len();
        if n == 1 {
            return self.values[0];
        }
        let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let frac = pos - lo as f64;
        self.values[lo] + (self.values[hi] - self.values[lo]) * frac
    }

    /// Quantiles at 0, 10, ..., 100 %.
    pub fn deciles(&self) -> Vec<f64> {
        (0..=10).map(|i| self.quantile(i as f64 / 10.0)).collect()
    }

    /// Replicate counts in `bins` equal-width bins over [0, 1]; 1.0 lands in the last bin.
    pub fn counts(&self, bins: usize) -> Vec<u64> {
        let mut out = vec![0u64; bins];
        for &v in &self.values {
            let b = ((v * bins as f64).floor() as usize).min(bins - 1);
            out[b] += 1;
        }
        out
    }
}

/// Draws `replicates` random samples of `sample_size` population cells (without
/// replacement unless asked), histograms each on `binning`, and scores it against the
/// population histogram.
pub fn null_distribution(
    population: &Population,
    binning: &Binning,
    kind: IndicatorKind,
    sample_size: usize,
    replicates: usize,
    seed: u64,
    with_replacement: bool,
) -> Result<NullDistribution> {
    if sample_size == 0 {
        return Err(Error::Invalid("sample size must be at least 1".into()));
    }
    if replicates == 0 {
        return Err(Error::Invalid("need at least one replicate".into()));
    }
    let pop_len = population.len();
    if !with_replacement && sample_size > pop_len {
        return Err(Error::Invalid(format!(
            "sample size {sample_size} exceeds the {pop_len} populated extent cells"
        )));
    }
    let bins = population.bin_indices(binning)?;
    let bin_count = binning.bin_count();
    let mut pop_counts = vec![0u64; bin_count];
    for &b in &bins {
        pop_counts[b as usize] += 1;
    }
    let pop_hist = Histogram::from_counts(binning, &pop_counts);

    let mut values: Vec<f64> = if !with_replacement && sample_size == pop_len {
        // Every replicate is the whole population.
        vec![kind.similarity(&pop_hist.proportions, &pop_hist.proportions); replicates]
    } else {
        (0..replicates)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r as u64);
                let mut counts = vec![0u64; bin_count];
                if with_replacement {
                    for _ in 0..sample_size {
                        counts[bins[rng.random_range(0..pop_len)] as usize] += 1;
                    }
                } else {
                    for i in index::sample(&mut rng, pop_len, sample_size) {
                        counts[bins[i] as usize] += 1;
                    }
                }
                let n = sample_size as f64;
                let p: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
                kind.similarity(&p, &pop_hist.proportions)
            })
            .collect()
    };
    values.sort_by(f64::total_cmp);
    Ok(NullDistribution {
        sample_size,
        replicate_count: replicates,
        seed,
        with_replacement,
        values,
    })
}
