//! Equal-area discrete global grid.
//!
//! The sphere is cut into bands of equal height in sin(latitude), so every band
//! has the same area (Archimedes' hat-box theorem). Each band is split into
//! equal-longitude cells, giving a count of `round(band_area / target_area)`.
//! Band 0 touches the south pole; column 0 starts at 180°W.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Authalic (equal-area) Earth radius in kilometres.
pub const AUTHALIC_RADIUS_KM: f64 = 6371.0072;

/// Nominal land-unit cell area in km².
pub const DEFAULT_CELL_AREA_KM2: f64 = 96.0;

/// Slack, in degrees, for treating a point as lying on a cell's boundary.
const CONTAINMENT_EPS_DEG: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub sphere_radius_km: f64,
    pub target_cell_area_km2: f64,
    /// Forces a band count instead of the automatic choice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_count: Option<u32>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            sphere_radius_km: AUTHALIC_RADIUS_KM,
            target_cell_area_km2: DEFAULT_CELL_AREA_KM2,
            band_count: None,
        }
    }
}

impl GridConfig {
    pub fn new(sphere_radius_km: f64, target_cell_area_km2: f64) -> Self {
        Self {
            sphere_radius_km,
            target_cell_area_km2,
            band_count: None,
        }
    }

    pub fn with_band_count(mut self, bands: u32) -> Self {
        self.band_count = Some(bands);
        self
    }

    pub fn sphere_area_km2(&self) -> f64 {
        4.0 * PI * self.sphere_radius_km * self.sphere_radius_km
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sphere_radius_km.is_finite() && self.sphere_radius_km > 0.0) {
            return Err(Error::Config(format!(
                "sphere radius must be positive, got {}",
                self.sphere_radius_km
            )));
        }
        if !(self.target_cell_area_km2.is_finite() && self.target_cell_area_km2 > 0.0) {
            return Err(Error::Config(format!(
                "target cell area must be positive, got {}",
                self.target_cell_area_km2
            )));
        }
        if self.target_cell_area_km2 >= self.sphere_area_km2() {
            return Err(Error::Config(format!(
                "target cell area {} km² is not smaller than the sphere area {} km²",
                self.target_cell_area_km2,
                self.sphere_area_km2()
            )));
        }
        if self.band_count == Some(0) {
            return Err(Error::Config("band count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Identifier of one grid cell. Ordered by band, then column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub band: u32,
    pub column: u32,
}

impl CellId {
    pub const fn new(band: u32, column: u32) -> Self {
        Self { band, column }
    }
}

impl std::fmt::Display for CellId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.band, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub sin_lower: f64,
    pub sin_upper: f64,
    pub cells: u32,
}

/// Closed ring of `(lat, lon)` vertices in degrees, counter-clockwise in lon/lat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPolygon {
    pub vertices: Vec<(f64, f64)>,
}

impl CellPolygon {
    /// Inclusive containment test against the ring's lat/lon bounding rectangle.
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        let (mut lat_min, mut lat_max) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lon_min, mut lon_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(la, lo) in &self.vertices {
            lat_min = lat_min.min(la);
            lat_max = lat_max.max(la);
            lon_min = lon_min.min(lo);
            lon_max = lon_max.max(lo);
        }
        lat >= lat_min - CONTAINMENT_EPS_DEG
            && lat <= lat_max + CONTAINMENT_EPS_DEG
            && lon >= lon_min - CONTAINMENT_EPS_DEG
            && lon <= lon_max + CONTAINMENT_EPS_DEG
    }

    /// Vertex average of the open ring.
    pub fn centroid(&self) -> (f64, f64) {
        let open = &self.vertices[..self.vertices.len() - 1];
        let n = open.len() as f64;
        let lat = open.iter().map(|v| v.0).sum::<f64>() / n;
        let lon = open.iter().map(|v| v.1).sum::<f64>() / n;
        (lat, lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    config: GridConfig,
    bands: Vec<Band>,
    /// Flat index of the first cell of each band, plus a trailing total.
    offsets: Vec<u64>,
}

impl Grid {
    pub fn build(config: GridConfig) -> Result<Self> {
        config.validate()?;
        let total_area = config.sphere_area_km2();
        let nominal_cells = total_area / config.target_cell_area_km2;
        let band_count = match config.band_count {
            Some(b) => b,
            None => choose_band_count(nominal_cells),
        };
        let height = 2.0 / band_count as f64;
        let band_area = total_area / band_count as f64;
        let per_band = ((band_area / config.target_cell_area_km2).round() as u32).max(1);

        let mut bands = Vec::with_capacity(band_count as usize);
        for i in 0..band_count {
            let sin_lower = if i == 0 { -1.0 } else { -1.0 + i as f64 * height };
            let sin_upper = if i + 1 == band_count {
                1.0
            } else {
                -1.0 + (i + 1) as f64 * height
            };
            bands.push(Band {
                sin_lower,
                sin_upper,
                cells: per_band,
            });
        }
        let mut offsets = Vec::with_capacity(bands.len() + 1);
        let mut acc = 0u64;
        for band in &bands {
            offsets.push(acc);
            acc += u64::from(band.cells);
        }
        offsets.push(acc);
        Ok(Self {
            config,
            bands,
            offsets,
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn band_count(&self) -> u32 {
        self.bands.len() as u32
    }

    pub fn total_cells(&self) -> u64 {
        *self.offsets.last().unwrap()
    }

    pub fn contains_cell(&self, cell: CellId) -> bool {
        self.bands
            .get(cell.band as usize)
            .is_some_and(|b| cell.column < b.cells)
    }

    fn band_of(&self, cell: CellId) -> Result<&Band> {
        match self.bands.get(cell.band as usize) {
            Some(b) if cell.column < b.cells => Ok(b),
            _ => Err(Error::Domain(format!("cell {cell} is not part of this grid"))),
        }
    }

    /// Position of a cell in band-major order.
    pub fn flat_index(&self, cell: CellId) -> Result<u64> {
        self.band_of(cell)?;
        Ok(self.offsets[cell.band as usize] + u64::from(cell.column))
    }

    pub fn cell_at(&self, index: u64) -> Result<CellId> {
        if index >= self.total_cells() {
            return Err(Error::Domain(format!("cell index {index} out of range")));
        }
        let band = self.offsets.partition_point(|&o| o <= index) - 1;
        Ok(CellId::new(band as u32, (index - self.offsets[band]) as u32))
    }

    pub fn cells(&self) -> impl Iterator<Item = CellId> + '_ {
        self.bands.iter().enumerate().flat_map(|(b, band)| {
            (0..band.cells).map(move |c| CellId::new(b as u32, c))
        })
    }

    /// Western longitude edge of column `column` in a band of `cells` columns.
    fn lon_edge(cells: u32, column: u32) -> f64 {
        if column == 0 {
            -180.0
        } else if column == cells {
            180.0
        } else {
            -180.0 + 360.0 * f64::from(column) / f64::from(cells)
        }
    }

    /// Maps a point to the unique cell containing it. Points on a shared edge go to the
    /// cell with the lower band/column index.
    pub fn point_to_cell(&self, lat: f64, lon: f64) -> Result<CellId> {
        if !(lat.is_finite() && (-90.0..=90.0).contains(&lat)) {
            return Err(Error::Domain(format!("latitude {lat} outside [-90, 90]")));
        }
        if !(lon.is_finite() && (-180.0..180.0).contains(&lon)) {
            return Err(Error::Domain(format!("longitude {lon} outside [-180, 180)")));
        }
        let s = lat.to_radians().sin();
        // Interior band edges strictly below s; an edge equal to s belongs to the lower band.
        let band = self.bands[1..].partition_point(|b| b.sin_lower < s);
        let cells = self.bands[band].cells;

        let width = 360.0 / f64::from(cells);
        let mut column = (((lon + 180.0) / width).floor() as i64).clamp(0, i64::from(cells) - 1) as u32;
        if column > 0 && lon <= Self::lon_edge(cells, column) {
            column -= 1;
        } else if column + 1 < cells && lon > Self::lon_edge(cells, column + 1) {
            column += 1;
        }
        Ok(CellId::new(band as u32, column))
    }

    /// R²·Δ(sin lat)·Δlon for the cell's band.
    pub fn cell_area_km2(&self, cell: CellId) -> Result<f64> {
        let band = self.band_of(cell)?;
        Ok(band_cell_area(&self.config, band))
    }

    /// Area-weighted centre: latitude at the middle of the band's sine interval,
    /// longitude at the middle of the column.
    pub fn cell_center(&self, cell: CellId) -> Result<(f64, f64)> {
        let band = self.band_of(cell)?;
        let lat = (0.5 * (band.sin_lower + band.sin_upper)).asin().to_degrees();
        let west = Self::lon_edge(band.cells, cell.column);
        let east = Self::lon_edge(band.cells, cell.column + 1);
        Ok((lat, 0.5 * (west + east)))
    }

    /// The cell's lat/lon rectangle as a closed five-vertex ring. The easternmost
    /// column's edge is emitted as 180°.
    pub fn cell_polygon(&self, cell: CellId) -> Result<CellPolygon> {
        let band = self.band_of(cell)?;
        let south = band.sin_lower.asin().to_degrees();
        let north = band.sin_upper.asin().to_degrees();
        let west = Self::lon_edge(band.cells, cell.column);
        let east = Self::lon_edge(band.cells, cell.column + 1);
        Ok(CellPolygon {
            vertices: vec![
                (south, west),
                (south, east),
                (north, east),
                (north, west),
                (south, west),
            ],
        })
    }

    pub fn total_area_km2(&self) -> f64 {
        self.bands
            .iter()
            .map(|b| band_cell_area(&self.config, b) * f64::from(b.cells))
            .sum()
    }

    /// Writes `band,column,center_lat,center_lon,area_km2`, one row per cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["band", "column", "center_lat", "center_lon", "area_km2"])?;
        for cell in self.cells() {
            let (lat, lon) = self.cell_center(cell)?;
            let area = self.cell_area_km2(cell)?;
            w.write_record([
                cell.band.to_string(),
                cell.column.to_string(),
                lat.to_string(),
                lon.to_string(),
                area.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<grid csv>", e))?;
        Ok(())
    }
}

fn band_cell_area(config: &GridConfig, band: &Band) -> f64 {
    let r = config.sphere_radius_km;
    r * r * (band.sin_upper - band.sin_lower) * (2.0 * PI / f64::from(band.cells))
}

/// Picks the band count. Near-square equatorial cells need about √(N/π) bands; nearby
/// counts are searched for the one whose rounded per-band cell count lands closest to
/// the target area.
fn choose_band_count(nominal_cells: f64) -> u32 {
    let ideal = (nominal_cells / PI).sqrt();
    let lo = ((ideal / 2.0).floor() as u32).max(1);
    let hi = ((ideal * 2.0).ceil() as u32).max(lo) + 1;
    let deviation = |b: u32| {
        let per_band = nominal_cells / f64::from(b);
        let rounded = per_band.round().max(1.0);
        ((per_band / rounded) - 1.0).abs()
    };
    let mut best = lo;
    for b in lo..=hi {
        let (d, best_d) = (deviation(b), deviation(best));
        if d < best_d - 1e-12
            || ((d - best_d).abs() <= 1e-12
                && (f64::from(b) - ideal).abs() < (f64::from(best) - ideal).abs())
        {
            best = b;
        }
    }
    best
}
