use serde::{Deserialize, Serialize};

use crate::collections::{Extent, MappedCollection};
use crate::error::{Error, Result};
use crate::ingest::VariableLayer;

use super::histogram::{build_histogram, Binning, BinningSpec, Histogram};
use super::indicator::{indicator, variational_coverage, IndicatorKind};
use super::null::{null_distribution, NullDistribution, Population, DEFAULT_REPLICATES};

/// Collections scoring below this percentile of the null distribution are flagged biased.
pub const BIAS_PERCENTILE: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullModel {
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub with_replacement: bool,
}

impl NullModel {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            seed,
            with_replacement: false,
        }
    }
}

impl Default for NullModel {
    fn default() -> Self {
        Self::new(DEFAULT_REPLICATES, 0)
    }
}

/// Sample and population resolved on a shared binning; the common input of every
/// single-variable statistic.
#[derive(Debug, Clone)]
pub struct PreparedAnalysis {
    pub population: Population,
    pub binning: Binning,
    pub population_histogram: Histogram,
    pub sample_histogram: Histogram,
    /// Values at the usable sites, in collection order.
    pub sample_values: Vec<f64>,
    /// Sites whose cell is outside the extent or has no data.
    pub off_extent_site_count: usize,
    /// Null-model sample size: the explicit override, else the usable site count.
    pub sample_size: usize,
}

impl PreparedAnalysis {
    pub fn new(
        mapped: &MappedCollection,
        layer: &VariableLayer,
        extent: &Extent,
        binning: BinningSpec,
    ) -> Result<Self> {
        let population = Population::new(extent, layer)?;
        let binning = Binning::from_population(binning, layer.kind, population.values())?;
        let mut sample_values = Vec::with_capacity(mapped.assignments.len());
        let mut off_extent_site_count = 0;
        for a in &mapped.assignments {
            match population.value_of(a.cell) {
                Some(v) => sample_values.push(v),
                None => off_extent_site_count += 1,
            }
        }
        if sample_values.is_empty() {
            return Err(Error::Invalid(format!(
                "none of the {} sites of `{}` falls in a populated cell of extent `{}`",
                mapped.assignments.len(),
                mapped.collection_id,
                extent.extent_id
            )));
        }
        let population_histogram = build_histogram(population.values(), &binning)?;
        let sample_histogram = build_histogram(&sample_values, &binning)?;
        let sample_size = mapped.sample_size_override.unwrap_or(sample_values.len());
        Ok(Self {
            population,
            binning,
            population_histogram,
            sample_histogram,
            sample_values,
            off_extent_site_count,
            sample_size,
        })
    }

    pub fn representativeness(&self, kind: IndicatorKind, null: NullModel) -> Result<RepresentativenessResult> {
        let value = indicator(&self.sample_histogram, &self.population_histogram, kind)?;
        let null = null_distribution(
            &self.population,
            &self.binning,
            kind,
            self.sample_size,
            null.replicates,
            null.seed,
            null.with_replacement,
        )?;
        let percentile_rank = null.percentile_rank(value);
        Ok(RepresentativenessResult {
            indicator_kind: kind,
            indicator: value,
            percentile_rank,
            biased: percentile_rank < BIAS_PERCENTILE,
            variational_coverage: variational_coverage(&self.sample_histogram, &self.population_histogram)?,
            off_extent_site_count: self.off_extent_site_count,
            coverage_gap_count: self.population.coverage_gap_count,
            population_size: self.population.len(),
            usable_site_count: self.sample_values.len(),
            null,
            sample_histogram: self.sample_histogram.clone(),
            population_histogram: self.population_histogram.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentativenessResult {
    pub indicator_kind: IndicatorKind,
    /// Similarity of the collection's histogram to the population's, in [0, 1].
    pub indicator: f64,
    /// Percentile of `indicator` within the null distribution (ties count half).
    pub percentile_rank: f64,
    pub biased: bool,
    pub variational_coverage: f64,
    pub off_extent_site_count: usize,
    pub coverage_gap_count: usize,
    pub population_size: usize,
    pub usable_site_count: usize,
    pub null: NullDistribution,
    pub sample_histogram: Histogram,
    pub population_histogram: Histogram,
}

pub fn representativeness(
    mapped: &MappedCollection,
    layer: &VariableLayer,
    extent: &Extent,
    binning: BinningSpec,
    kind: IndicatorKind,
    null: NullModel,
) -> Result<RepresentativenessResult> {
    PreparedAnalysis::new(mapped, layer, extent, binning)?.representativeness(kind, null)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collections::SiteAssignment;
    use crate::grid::{CellId, Grid, GridConfig};
    use crate::ingest::VariableKind;

    fn grid(cells: f64) -> Grid {
        Grid::build(GridConfig::new(1.0, 4.0 * std::f64::consts::PI / cells)).unwrap()
    }

    fn mapped(cells: impl IntoIterator<Item = CellId>) -> MappedCollection {
        MappedCollection {
            collection_id: "c".into(),
            assignments: cells
                .into_iter()
                .enumerate()
                .map(|(i, cell)| SiteAssignment {
                    site_id: format!("s{i}"),
                    cell,
                })
                .collect(),
            sample_size_override: None,
        }
    }

    /// Layer whose values are an evenly spread permutation of 0..N, so equal-width bins
    /// hold equal mass.
    fn uniform_layer(grid: &Grid) -> VariableLayer {
        let n = grid.total_cells() as usize;
        VariableLayer::new(
            "u",
            VariableKind::Continuous,
            grid.cells().enumerate().map(|(i, c)| (c, ((i * 7919) % n) as f64)),
        )
        .unwrap()
    }

    #[test]
    fn population_as_sample_is_unbiased() {
        let g = grid(400.0);
        let layer = uniform_layer(&g);
        let extent = Extent::new("g", "", g.cells()).unwrap();
        let r = representativeness(
            &mapped(g.cells()),
            &layer,
            &extent,
            BinningSpec::default(),
            IndicatorKind::Intersection,
            NullModel::new(200, 42),
        )
        .unwrap();
        assert_eq!(r.indicator, 1.0);
        assert!(!r.biased);
        assert_eq!(r.percentile_rank, 50.0);
        assert_eq!(r.variational_coverage, 1.0);
    }

    #[test]
    fn top_decile_sample_is_biased() {
        let g = grid(2000.0);
        let layer = uniform_layer(&g);
        let extent = Extent::new("g", "", g.cells()).unwrap();
        let n = layer.len() as f64;
        let top: Vec<CellId> = layer
            .iter()
            .filter(|(_, v)| *v >= 0.9 * n)
            .map(|(c, _)| c)
            .take(157)
            .collect();
        let r = representativeness(
            &mapped(top),
            &layer,
            &extent,
            BinningSpec::equal_width(20),
            IndicatorKind::Intersection,
            NullModel::new(1000, 7),
        )
        .unwrap();
        // Brute-force oracle: the sample lives in the top 2 of 20 equal-mass bins, so
        // Σ min(p_s, p_p) = Σ over those bins of min(p_s, 0.05) ≈ 0.1.
        let oracle: f64 = r
            .sample_histogram
            .proportions
            .iter()
            .zip(&r.population_histogram.proportions)
            .map(|(s, p)| if *s < *p { *s } else { *p })
            .sum();
        assert!((r.indicator - oracle).abs() < 1e-12);
        assert!((r.indicator - 0.1).abs() < 0.01, "{}", r.indicator);
        assert!(r.percentile_rank < 1.0);
        assert!(r.biased);
        assert!(r.variational_coverage <= 0.1 + 1e-9);
    }

    #[test]
    fn off_extent_sites_are_dropped_and_counted() {
        let g = grid(400.0);
        let layer = uniform_layer(&g);
        let cells: Vec<CellId> = g.cells().collect();
        let extent = Extent::new("half", "", cells[..200].iter().copied()).unwrap();
        let m = mapped([cells[0], cells[1], cells[300]]);
        let prep = PreparedAnalysis::new(&m, &layer, &extent, BinningSpec::default()).unwrap();
        assert_eq!(prep.off_extent_site_count, 1);
        assert_eq!(prep.sample_values.len(), 2);
        assert_eq!(prep.sample_size, 2);
        let all_out = mapped([cells[300]]);
        assert!(PreparedAnalysis::new(&all_out, &layer, &extent, BinningSpec::default()).is_err());
        let forced = m.with_effective_sample_size(150).unwrap();
        assert_eq!(PreparedAnalysis::new(&forced, &layer, &extent, BinningSpec::default()).unwrap().sample_size, 150);
    }

    #[test]
    fn coverage_gaps_are_counted() {
        let g = grid(100.0);
        let cells: Vec<CellId> = g.cells().collect();
        let layer = VariableLayer::new("p", VariableKind::Continuous, cells[..60].iter().map(|&c| (c, c.column as f64))).unwrap();
        let extent = Extent::new("g", "", cells.iter().copied()).unwrap();
        let r = representativeness(
            &mapped(cells[..10].iter().copied()),
            &layer,
            &extent,
            BinningSpec::default(),
            IndicatorKind::Bhattacharyya,
            NullModel::new(50, 1),
        )
        .unwrap();
        assert_eq!(r.coverage_gap_count, 40);
        assert_eq!(r.population_size, 60);
    }
}
