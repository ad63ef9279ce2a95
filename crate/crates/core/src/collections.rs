//! Case-study collections (the sample) and analysis extents (the population).

use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellId, Grid};
use crate::ingest::{validate_id, Catalog, VariableKind, VariableLayer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub site_id: String,
    pub lat: f64,
    pub lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collection {
    pub collection_id: String,
    sites: Vec<Site>,
}

impl Collection {
    pub fn new(collection_id: impl Into<String>, sites: Vec<Site>) -> Result<Self> {
        let collection_id = collection_id.into();
        validate_id("collection", &collection_id)?;
        if sites.is_empty() {
            return Err(Error::Invalid("a collection needs at least one site".into()));
        }
        let mut seen = HashSet::new();
        for (i, site) in sites.iter().enumerate() {
            check_coordinates(site.lat, site.lon).map_err(|m| Error::at_row(i + 2, m))?;
            if !seen.insert(site.site_id.as_str()) {
                return Err(Error::at_row(i + 2, format!("duplicate site_id `{}`", site.site_id)));
            }
        }
        Ok(Self {
            collection_id,
            sites,
        })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Writes the `site_id,lat,lon,label` form accepted by [`parse_sites_csv`].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["site_id", "lat", "lon", "label"])?;
        for s in &self.sites {
            w.write_record([
                s.site_id.clone(),
                s.lat.to_string(),
                s.lon.to_string(),
                s.label.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<sites csv>", e))?;
        Ok(())
    }
}

fn check_coordinates(lat: f64, lon: f64) -> std::result::Result<(), &'static str> {
    if !(lat.is_finite() && (-90.0..=90.0).contains(&lat)) {
        return Err("lat out of range");
    }
    if !(lon.is_finite() && (-180.0..180.0).contains(&lon)) {
        return Err("lon out of range");
    }
    Ok(())
}

/// Parses `site_id,lat,lon[,label]` rows. Row numbers in errors count the header as row 1.
pub fn parse_sites_csv<R: Read>(input: R, collection_id: &str) -> Result<Collection> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::at_row(1, e.to_string()))?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_ascii_lowercase())
        .collect();
    let expected = ["site_id", "lat", "lon"];
    if header.len() < 3 || header[..3] != expected {
        return Err(Error::at_row(
            1,
            format!("expected header `site_id,lat,lon[,label]`, got `{}`", header.join(",")),
        ));
    }
    let has_label = header.get(3).is_some_and(|h| h == "label");
    if header.len() > 4 || (header.len() == 4 && !has_label) {
        return Err(Error::at_row(1, format!("unexpected columns in header `{}`", header.join(","))));
    }

    let mut sites = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::at_row(row, e.to_string()))?;
        if rec.len() < 3 {
            return Err(Error::at_row(row, format!("expected at least 3 columns, got {}", rec.len())));
        }
        if rec.len() > header.len() {
            return Err(Error::at_row(row, format!("expected at most {} columns, got {}", header.len(), rec.len())));
        }
        let site_id = rec[0].to_string();
        if site_id.is_empty() {
            return Err(Error::at_row(row, "empty site_id"));
        }
        let lat: f64 = rec[1]
            .parse()
            .map_err(|_| Error::at_row(row, format!("non-numeric lat `{}`", &rec[1])))?;
        let lon: f64 = rec[2]
            .parse()
            .map_err(|_| Error::at_row(row, format!("non-numeric lon `{}`", &rec[2])))?;
        check_coordinates(lat, lon).map_err(|m| Error::at_row(row, m))?;
        let label = rec.get(3).filter(|l| !l.is_empty()).map(str::to_string);
        sites.push(Site {
            site_id,
            lat,
            lon,
            label,
        });
    }
    if sites.is_empty() {
        return Err(Error::at_row(1, "collection has no sites"));
    }
    Collection::new(collection_id, sites)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteAssignment {
    pub site_id: String,
    pub cell: CellId,
}

/// A collection with each site placed in its grid cell. Several sites may share a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedCollection {
    pub collection_id: String,
    pub assignments: Vec<SiteAssignment>,
    /// Explicit sample size for the null model; `None` means "number of usable sites".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_size_override: Option<usize>,
}

impl MappedCollection {
    pub fn effective_sample_size(&self) -> usize {
        self.sample_size_override.unwrap_or(self.assignments.len())
    }

    pub fn with_effective_sample_size(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("effective sample size must be at least 1".into()));
        }
        self.sample_size_override = Some(n);
        Ok(self)
    }

    /// Keeps the first site of every cell.
    pub fn deduplicated(&self) -> Self {
        let mut seen = HashSet::new();
        Self {
            collection_id: self.collection_id.clone(),
            assignments: self
                .assignments
                .iter()
                .filter(|a| seen.insert(a.cell))
                .cloned()
                .collect(),
            sample_size_override: self.sample_size_override,
        }
    }
}

pub fn map_collection(collection: &Collection, grid: &Grid) -> Result<MappedCollection> {
    let assignments = collection
        .sites()
        .iter()
        .map(|s| {
            Ok(SiteAssignment {
                site_id: s.site_id.clone(),
                cell: grid.point_to_cell(s.lat, s.lon)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MappedCollection {
        collection_id: collection.collection_id.clone(),
        assignments,
        sample_size_override: None,
    })
}

/// Categorical layer values that select the cells of a mask extent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub variable_id: String,
    pub included_values: Vec<i64>,
}

impl std::str::FromStr for MaskSpec {
    type Err = Error;

    /// `VAR:v1,v2,...`
    fn from_str(s: &str) -> Result<Self> {
        let (var, vals) = s
            .split_once(':')
            .ok_or_else(|| Error::Invalid(format!("mask `{s}` is not of the form VAR:v1,v2")))?;
        let included_values = vals
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<i64>()
                    .map_err(|_| Error::Invalid(format!("mask value `{v}` is not an integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mask = MaskSpec {
            variable_id: var.trim().to_string(),
            included_values,
        };
        mask.validate()?;
        Ok(mask)
    }
}

impl MaskSpec {
    fn validate(&self) -> Result<()> {
        crate::ingest::validate_variable_id(&self.variable_id)?;
        if self.included_values.is_empty() {
            return Err(Error::Invalid("mask needs at least one included value".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

impl BoundingBox {
    fn validate(&self) -> Result<()> {
        let lat_ok = |v: f64| v.is_finite() && (-90.0..=90.0).contains(&v);
        let lon_ok = |v: f64| v.is_finite() && (-180.0..=180.0).contains(&v);
        if !(lat_ok(self.south) && lat_ok(self.north) && self.south <= self.north) {
            return Err(Error::Domain(format!(
                "bbox latitudes must satisfy -90 <= south <= north <= 90, got {} / {}",
                self.south, self.north
            )));
        }
        if !(lon_ok(self.west) && lon_ok(self.east)) {
            return Err(Error::Domain(format!(
                "bbox longitudes must lie in [-180, 180], got {} / {}",
                self.west, self.east
            )));
        }
        Ok(())
    }

    /// Inclusive. A box with `west > east` wraps across the antimeridian.
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        let lon_in = if self.west <= self.east {
            lon >= self.west && lon <= self.east
        } else {
            lon >= self.west || lon <= self.east
        };
        lat >= self.south && lat <= self.north && lon_in
    }
}

impl std::str::FromStr for BoundingBox {
    type Err = Error;

    /// `S,W,N,E`
    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Invalid(format!("bbox component `{p}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        let [south, west, north, east] = parts[..] else {
            return Err(Error::Invalid(format!("bbox `{s}` must be S,W,N,E")));
        };
        let bbox = BoundingBox {
            south,
            west,
            north,
            east,
        };
        bbox.validate()?;
        Ok(bbox)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExtentSpec {
    #[default]
    Global,
    Mask(MaskSpec),
    Bbox(BoundingBox),
}

impl ExtentSpec {
    pub fn id(&self) -> String {
        match self {
            ExtentSpec::Global => "global".into(),
            ExtentSpec::Mask(m) => format!(
                "mask:{}:{}",
                m.variable_id,
                m.included_values.iter().map(i64::to_string).collect::<Vec<_>>().join(",")
            ),
            ExtentSpec::Bbox(b) => format!("bbox:{},{},{},{}", b.south, b.west, b.north, b.east),
        }
    }
}

/// The population: a non-empty, sorted set of cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub extent_id: String,
    pub description: String,
    cells: Vec<CellId>,
}

impl Extent {
    pub fn new(
        extent_id: impl Into<String>,
        description: impl Into<String>,
        cells: impl IntoIterator<Item = CellId>,
    ) -> Result<Self> {
        let mut cells: Vec<CellId> = cells.into_iter().collect();
        cells.sort_unstable();
        cells.dedup();
        if cells.is_empty() {
            return Err(Error::EmptyExtent);
        }
        Ok(Self {
            extent_id: extent_id.into(),
            description: description.into(),
            cells,
        })
    }

    pub fn cells(&self) -> &[CellId] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: CellId) -> bool {
        self.cells.binary_search(&cell).is_ok()
    }

    /// Writes `band,column`, one row per cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["band", "column"])?;
        for c in &self.cells {
            w.write_record([c.band.to_string(), c.column.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<extent csv>", e))?;
        Ok(())
    }
}

/// Resolves an extent specification, loading mask layers from the catalog.
pub fn build_extent(spec: &ExtentSpec, grid: &Grid, catalog: &Catalog) -> Result<Extent> {
    match spec {
        ExtentSpec::Mask(mask) => {
            mask.validate()?;
            let layer = catalog.load_layer(&mask.variable_id)?;
            mask_extent(mask, &layer)
        }
        _ => build_extent_without_masks(spec, grid),
    }
}

/// Global and bounding-box extents, which need no stored layers.
pub fn build_extent_without_masks(spec: &ExtentSpec, grid: &Grid) -> Result<Extent> {
    match spec {
        ExtentSpec::Global => Extent::new("global", "every grid cell", grid.cells()),
        ExtentSpec::Bbox(bbox) => {
            bbox.validate()?;
            let mut cells = Vec::new();
            for cell in grid.cells() {
                let (lat, lon) = grid.cell_center(cell)?;
                if bbox.contains(lat, lon) {
                    cells.push(cell);
                }
            }
            Extent::new(spec.id(), "cells whose centres fall inside the bounding box", cells)
        }
        ExtentSpec::Mask(mask) => Err(Error::Invalid(format!(
            "mask extent on `{}` needs a catalog",
            mask.variable_id
        ))),
    }
}

/// Cells of a categorical layer whose value is one of the mask's included values.
pub fn mask_extent(mask: &MaskSpec, layer: &VariableLayer) -> Result<Extent> {
    if layer.kind != VariableKind::Categorical {
        return Err(Error::Type(format!(
            "mask layer `{}` is continuous; masks need a categorical layer",
            layer.variable_id
        )));
    }
    let cells = layer
        .iter()
        .filter(|&(_, v)| mask.included_values.iter().any(|&inc| inc as f64 == v))
        .map(|(c, _)| c);
    Extent::new(
        ExtentSpec::Mask(mask.clone()).id(),
        format!("cells of `{}` in the selected categories", layer.variable_id),
        cells,
    )
}
