//! Single-variable statistics: histograms, similarity indicators, the Monte Carlo null
//! model, the bias verdict, representedness scores and area accounting.

mod histogram;
mod indicator;
mod null;
mod representativeness;
mod representedness;

pub use histogram::{
    build_histogram, BinBounds, Binning, BinningKind, BinningSpec, Histogram, DEFAULT_BIN_COUNT,
};
pub use indicator::{indicator, variational_coverage, IndicatorKind};
pub use null::{null_distribution, NullDistribution, Population, DEFAULT_REPLICATES};
pub use representativeness::{
    representativeness, NullModel, PreparedAnalysis, RepresentativenessResult, BIAS_PERCENTILE,
};
pub use representedness::{
    area_summary, representedness, representedness_score, suggest_undersampled, AreaSummary,
    BinScore, CellClass, ClassArea, ClassThresholds, RepresentationClass, RepresentednessMap,
};
