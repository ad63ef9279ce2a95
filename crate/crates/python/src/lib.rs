//! Python bindings: the grid, the variable catalog, and whole analyses returning the
//! same result document the command-line tool writes.

use std::path::PathBuf;

use pyo3::exceptions::{PyKeyError, PyOSError, PyValueError};
use pyo3::prelude::*;
use sitebias_core::analysis::{
    representedness_score, BinningKind, BinningSpec, ClassThresholds, IndicatorKind,
};
use sitebias_core::collections::{parse_sites_csv, ExtentSpec};
use sitebias_core::grid::{self, CellId, GridConfig};
use sitebias_core::ingest::{self, IngestOptions, VariableKind, ZonalStat};
use sitebias_core::pipeline::{run_analysis, to_json, write_outputs, AnalysisRequest};
use sitebias_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NotFound { .. } => PyKeyError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Equal-area global grid of bands and columns.
#[pyclass(module = "sitebias", frozen)]
struct Grid {
    inner: grid::Grid,
}

#[pymethods]
impl Grid {
    #[new]
    #[pyo3(signature = (radius_km = grid::AUTHALIC_RADIUS_KM, cell_area_km2 = grid::DEFAULT_CELL_AREA_KM2, band_count = None))]
    fn new(radius_km: f64, cell_area_km2: f64, band_count: Option<u32>) -> PyResult<Self> {
        let mut config = GridConfig::new(radius_km, cell_area_km2);
        config.band_count = band_count;
        Ok(Self {
            inner: grid::Grid::build(config).map_err(to_py)?,
        })
    }

    #[getter]
    fn total_cells(&self) -> u64 {
        self.inner.total_cells()
    }

    #[getter]
    fn band_count(&self) -> u32 {
        self.inner.band_count()
    }

    fn total_area_km2(&self) -> f64 {
        self.inner.total_area_km2()
    }

    /// `(band, column)` of the cell containing a point.
    fn point_to_cell(&self, lat: f64, lon: f64) -> PyResult<(u32, u32)> {
        let c = self.inner.point_to_cell(lat, lon).map_err(to_py)?;
        Ok((c.band, c.column))
    }

    fn cell_area_km2(&self, band: u32, column: u32) -> PyResult<f64> {
        self.inner.cell_area_km2(CellId::new(band, column)).map_err(to_py)
    }

    fn cell_center(&self, band: u32, column: u32) -> PyResult<(f64, f64)> {
        self.inner.cell_center(CellId::new(band, column)).map_err(to_py)
    }

    /// Closed ring of `(lat, lon)` vertices.
    fn cell_polygon(&self, band: u32, column: u32) -> PyResult<Vec<(f64, f64)>> {
        Ok(self.inner.cell_polygon(CellId::new(band, column)).map_err(to_py)?.vertices)
    }

    fn __repr__(&self) -> String {
        let c = self.inner.config();
        format!(
            "Grid(radius_km={}, cell_area_km2={}, cells={})",
            c.sphere_radius_km,
            c.target_cell_area_km2,
            self.inner.total_cells()
        )
    }
}

/// A directory of variable layers on one grid.
#[pyclass(module = "sitebias", frozen)]
struct Catalog {
    inner: ingest::Catalog,
    grid: grid::Grid,
}

#[pymethods]
impl Catalog {
    /// Opens `root`, creating it on the given grid if it holds no catalog yet.
    #[new]
    #[pyo3(signature = (root, radius_km = grid::AUTHALIC_RADIUS_KM, cell_area_km2 = grid::DEFAULT_CELL_AREA_KM2))]
    fn new(root: PathBuf, radius_km: f64, cell_area_km2: f64) -> PyResult<Self> {
        let inner = ingest::Catalog::open_or_create(root, GridConfig::new(radius_km, cell_area_km2)).map_err(to_py)?;
        let grid = inner.build_grid().map_err(to_py)?;
        Ok(Self { inner, grid })
    }

    /// Aggregates an ESRI ASCII grid onto the catalog grid and registers it. Returns the
    /// number of cells with data.
    #[pyo3(signature = (raster, variable_id, kind, stat = None, units = String::new()))]
    fn ingest(
        &self,
        py: Python<'_>,
        raster: PathBuf,
        variable_id: String,
        kind: &str,
        stat: Option<&str>,
        units: String,
    ) -> PyResult<usize> {
        let kind: VariableKind = kind.parse().map_err(to_py)?;
        let mut opts = IngestOptions::new(variable_id, kind);
        if let Some(s) = stat {
            opts.stat = s.parse::<ZonalStat>().map_err(to_py)?;
        }
        opts.units = units;
        opts.provenance = raster.display().to_string();
        let catalog = &self.inner;
        py.detach(|| {
            let r = ingest::read_ascii_grid(&raster)?;
            ingest::ingest_raster(catalog, &r, &opts)
        })
        .map(|e| e.cell_count)
        .map_err(to_py)
    }

    fn __contains__(&self, variable_id: &str) -> bool {
        self.inner.contains(variable_id)
    }

    /// Registered variables as dicts.
    fn variables(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let entries = self.inner.list_variables().map_err(to_py)?;
        json_to_py(py, &to_json(&entries).map_err(to_py)?)
    }

    /// Runs a full analysis of the sites CSV at `sites` and returns the result document
    /// as a dict. With `out`, also writes result.json, bins.csv, cells.csv and map.json.
    #[pyo3(signature = (
        sites, variable_id, *, collection_id = None, mask = None, bbox = None, bins = 20,
        binning = "auto", samples = 1000, seed = 42, indicator = "intersection",
        effective_sample_size = None, with_replacement = false, dedupe_sites = false,
        mild = 0.1, strong = 0.5, out = None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn analyze(
        &self,
        py: Python<'_>,
        sites: PathBuf,
        variable_id: String,
        collection_id: Option<String>,
        mask: Option<&str>,
        bbox: Option<&str>,
        bins: usize,
        binning: &str,
        samples: usize,
        seed: u64,
        indicator: &str,
        effective_sample_size: Option<usize>,
        with_replacement: bool,
        dedupe_sites: bool,
        mild: f64,
        strong: f64,
        out: Option<PathBuf>,
    ) -> PyResult<Py<PyAny>> {
        let id = match collection_id {
            Some(id) => id,
            None => sites
                .file_stem()
                .and_then(|s| s.to_str())
                .map(str::to_string)
                .ok_or_else(|| PyValueError::new_err("cannot derive a collection id from the path"))?,
        };
        let mut request = AnalysisRequest::new(id.clone(), variable_id);
        request.extent = match (mask, bbox) {
            (Some(_), Some(_)) => return Err(PyValueError::new_err("give mask or bbox, not both")),
            (Some(m), None) => ExtentSpec::Mask(m.parse().map_err(to_py)?),
            (None, Some(b)) => ExtentSpec::Bbox(b.parse().map_err(to_py)?),
            (None, None) => ExtentSpec::Global,
        };
        request.binning = BinningSpec {
            kind: binning.parse::<BinningKind>().map_err(to_py)?,
            bins,
        };
        request.indicator = indicator.parse().map_err(to_py)?;
        request.samples = samples;
        request.seed = Some(seed);
        request.effective_sample_size = effective_sample_size;
        request.with_replacement = with_replacement;
        request.dedupe_sites = dedupe_sites;
        request.thresholds = ClassThresholds { mild, strong };

        let (catalog, grid) = (&self.inner, &self.grid);
        let text = py
            .detach(|| {
                let file = std::fs::File::open(&sites).map_err(|e| Error::Io {
                    path: sites.clone(),
                    source: e,
                })?;
                let collection = parse_sites_csv(std::io::BufReader::new(file), &id)?;
                let output = run_analysis(&request, grid, catalog, &collection)?;
                if let Some(dir) = &out {
                    write_outputs(dir, &output, grid)?;
                }
                to_json(&output.report)
            })
            .map_err(to_py)?;
        json_to_py(py, &text)
    }
}

/// Similarity of two proportion vectors: `intersection` or `bhattacharyya`.
#[pyfunction]
#[pyo3(signature = (p, q, kind = "intersection"))]
fn similarity(p: Vec<f64>, q: Vec<f64>, kind: &str) -> PyResult<f64> {
    if p.len() != q.len() {
        return Err(PyValueError::new_err(format!("lengths differ: {} vs {}", p.len(), q.len())));
    }
    let kind: IndicatorKind = kind.parse().map_err(to_py)?;
    Ok(kind.similarity(&p, &q))
}

/// Signed over/under-representation of one bin, in [-1, 1].
#[pyfunction]
#[pyo3(name = "representedness_score")]
fn score(p_sample: f64, p_population: f64) -> f64 {
    representedness_score(p_sample, p_population)
}

/// Number of sites in a CSV file, after validation.
#[pyfunction]
fn count_sites(path: PathBuf) -> PyResult<usize> {
    let file = std::fs::File::open(&path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
    Ok(parse_sites_csv(std::io::BufReader::new(file), "sites").map_err(to_py)?.len())
}

#[pymodule]
fn sitebias(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<Catalog>()?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(count_sites, m)?)?;
    m.add("SCHEMA_VERSION", sitebias_core::SCHEMA_VERSION)?;
    Ok(())
}
