//! Raster input, harmonisation, zonal aggregation and the variable catalog.

mod catalog;
mod layer;
mod raster;
mod zonal;

use crate::error::{Error, Result};
use crate::grid::Grid;

pub use catalog::{Catalog, CatalogEntry};
pub use layer::{validate_variable_id, VariableKind, VariableLayer, ZonalStat};
pub use raster::{decode_ascii_grid, parse_ascii_grid, read_ascii_grid, Raster};
pub use zonal::{zonal_aggregate, zonal_aggregate_with};

pub(crate) use catalog::read_json;
pub(crate) use layer::validate_id;
pub(crate) use layer::category_code as layer_category_code;

/// Options for turning one raster into a catalog layer.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub variable_id: String,
    pub kind: VariableKind,
    pub stat: ZonalStat,
    pub units: String,
    pub provenance: String,
}

impl IngestOptions {
    pub fn new(variable_id: impl Into<String>, kind: VariableKind) -> Self {
        Self {
            variable_id: variable_id.into(),
            kind,
            stat: ZonalStat::for_kind(kind),
            units: String::new(),
            provenance: String::new(),
        }
    }
}

/// Aggregates `raster` onto the catalog grid and registers the result. A duplicate id
/// fails before any aggregation work.
pub fn ingest_raster(catalog: &Catalog, raster: &Raster, opts: &IngestOptions) -> Result<CatalogEntry> {
    validate_variable_id(&opts.variable_id)?;
    if catalog.contains(&opts.variable_id) {
        return Err(Error::Conflict {
            what: "variable",
            id: opts.variable_id.clone(),
        });
    }
    let grid: Grid = catalog.build_grid()?;
    let layer = zonal_aggregate_with(raster, &grid, opts.kind, opts.stat, &opts.variable_id)?
        .with_units(opts.units.clone())
        .with_provenance(opts.provenance.clone());
    catalog.register_layer(&layer)
}
