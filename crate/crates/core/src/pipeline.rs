//! End-to-end analysis: request in, result document and map out.
//!
//! The command-line driver and the HTTP service both go through [`run_analysis`] and
//! [`write_outputs`], so a request with a fixed seed produces the same files either way.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    area_summary, suggest_undersampled, AreaSummary, BinScore, Binning, BinningSpec,
    ClassThresholds, IndicatorKind, NullModel, PreparedAnalysis, RepresentednessMap,
    DEFAULT_REPLICATES,
};
use crate::collections::{build_extent, map_collection, Collection, ExtentSpec};
use crate::error::{Error, Result};
use crate::grid::{CellId, Grid};
use crate::ingest::{Catalog, VariableKind};
use crate::report;
use crate::SCHEMA_VERSION;

/// Cells listed in the report's undersampled-area suggestion.
pub const SUGGESTION_COUNT: usize = 25;

/// Bins used to summarise the null distribution over [0, 1].
pub const NULL_SUMMARY_BINS: usize = 20;

fn default_samples() -> usize {
    DEFAULT_REPLICATES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisRequest {
    pub collection_id: String,
    pub variable_id: String,
    #[serde(default)]
    pub extent: ExtentSpec,
    #[serde(default)]
    pub binning: BinningSpec,
    #[serde(default)]
    pub indicator: IndicatorKind,
    /// Number of null replicates.
    #[serde(default = "default_samples", alias = "m")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_sample_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub with_replacement: bool,
    /// Collapse sites sharing a cell into one before histogramming.
    #[serde(default)]
    pub dedupe_sites: bool,
    #[serde(default)]
    pub thresholds: ClassThresholds,
}

impl AnalysisRequest {
    pub fn new(collection_id: impl Into<String>, variable_id: impl Into<String>) -> Self {
        Self {
            collection_id: collection_id.into(),
            variable_id: variable_id.into(),
            extent: ExtentSpec::Global,
            binning: BinningSpec::default(),
            indicator: IndicatorKind::default(),
            samples: DEFAULT_REPLICATES,
            effective_sample_size: None,
            seed: None,
            with_replacement: false,
            dedupe_sites: false,
            thresholds: ClassThresholds::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Invalid("samples must be at least 1".into()));
        }
        if self.effective_sample_size == Some(0) {
            return Err(Error::Invalid("effective_sample_size must be at least 1".into()));
        }
        if self.binning.kind != crate::analysis::BinningKind::Categorical && self.binning.bins < 2 {
            return Err(Error::Invalid(format!("need at least 2 bins, got {}", self.binning.bins)));
        }
        self.thresholds.validate()
    }

    /// Fills in a random seed when none was given.
    pub fn with_resolved_seed(mut self) -> Self {
        if self.seed.is_none() {
            self.seed = Some(rand::random::<u64>() >> 11);
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionSummary {
    pub collection_id: String,
    pub site_count: usize,
    pub usable_site_count: usize,
    pub off_extent_site_count: usize,
    pub effective_sample_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtentSummary {
    pub extent_id: String,
    pub description: String,
    pub cell_count: usize,
    pub populated_cell_count: usize,
    pub coverage_gap_count: usize,
    pub area_km2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub variable_id: String,
    pub kind: VariableKind,
    pub units: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub sample_size: usize,
    pub replicates: usize,
    pub seed: u64,
    pub with_replacement: bool,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Quantiles at 0, 10, ..., 100 %.
    pub deciles: Vec<f64>,
    /// Replicate counts in equal-width bins over [0, 1].
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramPair {
    pub sample: Vec<f64>,
    pub population: Vec<f64>,
}

/// The `result.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub request: AnalysisRequest,
    pub collection: CollectionSummary,
    pub extent: ExtentSummary,
    pub variable: VariableSummary,
    pub binning: Binning,
    pub indicator_kind: IndicatorKind,
    pub indicator: f64,
    pub percentile_rank: f64,
    pub biased: bool,
    pub variational_coverage: f64,
    pub null: NullSummary,
    pub histograms: HistogramPair,
    pub bins: Vec<BinScore>,
    pub areas: AreaSummary,
    /// Most under-represented cells, best candidates first.
    pub undersampled: Vec<CellId>,
}

#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub report: AnalysisReport,
    pub map: RepresentednessMap,
}

/// Runs representativeness, representedness and area accounting for one request.
/// The request must carry a seed.
pub fn run_analysis(
    request: &AnalysisRequest,
    grid: &Grid,
    catalog: &Catalog,
    collection: &Collection,
) -> Result<AnalysisOutput> {
    request.validate()?;
    let seed = request
        .seed
        .ok_or_else(|| Error::Invalid("analysis request has no seed".into()))?;
    if collection.collection_id != request.collection_id {
        return Err(Error::Contract(format!(
            "request names collection `{}` but `{}` was supplied",
            request.collection_id, collection.collection_id
        )));
    }
    let layer = catalog.load_layer(&request.variable_id)?;
    let extent = build_extent(&request.extent, grid, catalog)?;

    let mut mapped = map_collection(collection, grid)?;
    if request.dedupe_sites {
        mapped = mapped.deduplicated();
    }
    if let Some(n) = request.effective_sample_size {
        mapped = mapped.with_effective_sample_size(n)?;
    }

    let prepared = PreparedAnalysis::new(&mapped, &layer, &extent, request.binning)?;
    let null_model = NullModel {
        replicates: request.samples,
        seed,
        with_replacement: request.with_replacement,
    };
    let rep = prepared.representativeness(request.indicator, null_model)?;
    let map = prepared.representedness(request.thresholds)?;
    let areas = area_summary(&map, grid)?;
    let populated = crate::collections::Extent::new(
        extent.extent_id.clone(),
        extent.description.clone(),
        prepared.population.cells().iter().copied(),
    )?;
    let undersampled = suggest_undersampled(&map, &populated, SUGGESTION_COUNT);

    let null = &rep.null;
    let report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        request: request.clone(),
        collection: CollectionSummary {
            collection_id: collection.collection_id.clone(),
            site_count: collection.len(),
            usable_site_count: rep.usable_site_count,
            off_extent_site_count: rep.off_extent_site_count,
            effective_sample_size: prepared.sample_size,
        },
        extent: ExtentSummary {
            extent_id: extent.extent_id.clone(),
            description: extent.description.clone(),
            cell_count: extent.len(),
            populated_cell_count: rep.population_size,
            coverage_gap_count: rep.coverage_gap_count,
            area_km2: areas.total_area_km2,
        },
        variable: VariableSummary {
            variable_id: layer.variable_id.clone(),
            kind: layer.kind,
            units: layer.units.clone(),
        },
        binning: prepared.binning.clone(),
        indicator_kind: rep.indicator_kind,
        indicator: rep.indicator,
        percentile_rank: rep.percentile_rank,
        biased: rep.biased,
        variational_coverage: rep.variational_coverage,
        null: NullSummary {
            sample_size: null.sample_size,
            replicates: null.replicate_count,
            seed: null.seed,
            with_replacement: null.with_replacement,
            mean: null.mean(),
            min: null.values[0],
            max: null.values[null.values.len() - 1],
            deciles: null.deciles(),
            histogram: null.counts(NULL_SUMMARY_BINS),
        },
        histograms: HistogramPair {
            sample: rep.sample_histogram.proportions.clone(),
            population: rep.population_histogram.proportions.clone(),
        },
        bins: map.bins.clone(),
        areas,
        undersampled,
    };
    Ok(AnalysisOutput { report, map })
}

pub const RESULT_FILE: &str = "result.json";
pub const BINS_FILE: &str = "bins.csv";
pub const CELLS_FILE: &str = "cells.csv";
pub const MAP_FILE: &str = "map.json";

/// Writes `result.json`, `bins.csv`, `cells.csv` and `map.json` into `dir`.
pub fn write_outputs(dir: &Path, output: &AnalysisOutput, grid: &Grid) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write(RESULT_FILE, to_json(&output.report)?)?;
    write(BINS_FILE, report::bins_csv(&output.report)?)?;
    write(CELLS_FILE, report::cells_csv(&output.map)?)?;
    let map = report::map_document(&output.map, &output.report.areas, grid)?;
    write(MAP_FILE, to_json(&map)?)?;
    Ok(())
}

pub fn read_report(dir: &Path) -> Result<AnalysisReport> {
    crate::ingest::read_json(&dir.join(RESULT_FILE))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}
