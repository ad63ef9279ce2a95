//! File-backed variable catalog.
//!
//! ```text
//! <root>/grid.json
//! <root>/<variable_id>/values.csv   band,column,value
//! <root>/<variable_id>/meta.json
//! ```
//!
//! A layer becomes visible only once its directory is renamed into place, so concurrent
//! readers never observe a half-written layer and two writers racing on one id cannot
//! both succeed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellId, Grid, GridConfig};
use crate::SCHEMA_VERSION;

use super::layer::{validate_variable_id, VariableKind, VariableLayer};

const GRID_FILE: &str = "grid.json";
const VALUES_FILE: &str = "values.csv";
const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub variable_id: String,
    pub kind: VariableKind,
    pub units: String,
    pub cell_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerMeta {
    schema_version: u32,
    variable_id: String,
    kind: VariableKind,
    units: String,
    provenance: String,
    cell_count: usize,
    #[serde(default)]
    categories: Vec<i64>,
}

#[derive(Debug, Clone)]
pub struct Catalog {
    root: PathBuf,
    grid: GridConfig,
}

impl Catalog {
    /// Opens an existing catalog, or initialises one on `config` if the root holds none.
    /// An existing catalog built on a different grid is an error.
    pub fn open_or_create(root: impl Into<PathBuf>, config: GridConfig) -> Result<Self> {
        let root = root.into();
        let grid_path = root.join(GRID_FILE);
        if grid_path.exists() {
            let catalog = Self::open(&root)?;
            if catalog.grid != config {
                return Err(Error::Config(format!(
                    "catalog {} was built for grid {:?}, not {:?}",
                    root.display(),
                    catalog.grid,
                    config
                )));
            }
            return Ok(catalog);
        }
        config.validate()?;
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        write_json(&grid_path, &config)?;
        Ok(Self { root, grid: config })
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let grid_path = root.join(GRID_FILE);
        let text = fs::read_to_string(&grid_path).map_err(|e| Error::io(&grid_path, e))?;
        let grid: GridConfig = serde_json::from_str(&text)?;
        grid.validate()?;
        Ok(Self { root, grid })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn grid_config(&self) -> GridConfig {
        self.grid
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::build(self.grid)
    }

    pub fn contains(&self, variable_id: &str) -> bool {
        validate_variable_id(variable_id).is_ok() && self.root.join(variable_id).join(META_FILE).is_file()
    }

    pub fn register_layer(&self, layer: &VariableLayer) -> Result<CatalogEntry> {
        validate_variable_id(&layer.variable_id)?;
        let target = self.root.join(&layer.variable_id);
        if target.exists() {
            return Err(conflict(&layer.variable_id));
        }
        let grid = self.build_grid()?;
        if let Some((cell, _)) = layer.iter().find(|(c, _)| !grid.contains_cell(*c)) {
            return Err(Error::Domain(format!(
                "layer `{}` references cell {cell} outside the catalog grid",
                layer.variable_id
            )));
        }

        let staging = tempdir_in(&self.root, &layer.variable_id)?;
        let result = (|| {
            let values_path = staging.join(VALUES_FILE);
            let mut w = csv::Writer::from_path(&values_path)?;
            w.write_record(["band", "column", "value"])?;
            for (cell, v) in layer.iter() {
                w.write_record([cell.band.to_string(), cell.column.to_string(), v.to_string()])?;
            }
            w.flush().map_err(|e| Error::io(&values_path, e))?;
            let meta = LayerMeta {
                schema_version: SCHEMA_VERSION,
                variable_id: layer.variable_id.clone(),
                kind: layer.kind,
                units: layer.units.clone(),
                provenance: layer.provenance.clone(),
                cell_count: layer.len(),
                categories: layer.categories().to_vec(),
            };
            write_json(&staging.join(META_FILE), &meta)?;
            match fs::rename(&staging, &target) {
                Ok(()) => Ok(()),
                Err(_) if target.exists() => Err(conflict(&layer.variable_id)),
                Err(e) => Err(Error::io(&target, e)),
            }
        })();
        if result.is_err() {
            let _ = fs::remove_dir_all(&staging);
        }
        result?;
        Ok(entry_of(layer))
    }

    pub fn load_layer(&self, variable_id: &str) -> Result<VariableLayer> {
        validate_variable_id(variable_id)?;
        let dir = self.root.join(variable_id);
        let meta_path = dir.join(META_FILE);
        if !meta_path.is_file() {
            return Err(Error::NotFound {
                what: "variable",
                id: variable_id.to_string(),
            });
        }
        let meta: LayerMeta = read_json(&meta_path)?;
        let values_path = dir.join(VALUES_FILE);
        let mut rdr = csv::Reader::from_path(&values_path)?;
        let mut values = Vec::with_capacity(meta.cell_count);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |k: usize| -> Result<&str> {
                rec.get(k)
                    .ok_or_else(|| Error::at_row(i + 2, format!("{VALUES_FILE}: missing column {k}")))
            };
            let num_err = |what: &str| Error::at_row(i + 2, format!("{VALUES_FILE}: invalid {what}"));
            let band = field(0)?.parse().map_err(|_| num_err("band"))?;
            let column = field(1)?.parse().map_err(|_| num_err("column"))?;
            let value = field(2)?.parse().map_err(|_| num_err("value"))?;
            values.push((CellId::new(band, column), value));
        }
        if values.len() != meta.cell_count {
            return Err(Error::Invalid(format!(
                "layer `{variable_id}` lists {} cells but stores {}",
                meta.cell_count,
                values.len()
            )));
        }
        Ok(VariableLayer::new(meta.variable_id, meta.kind, values)?
            .with_units(meta.units)
            .with_provenance(meta.provenance))
    }

    /// Registered layers, ordered by id.
    pub fn list_variables(&self) -> Result<Vec<CatalogEntry>> {
        let mut out = Vec::new();
        let entries = fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if name.starts_with('.') {
                continue;
            }
            let meta_path = entry.path().join(META_FILE);
            if !meta_path.is_file() {
                continue;
            }
            let meta: LayerMeta = read_json(&meta_path)?;
            out.push(CatalogEntry {
                variable_id: meta.variable_id,
                kind: meta.kind,
                units: meta.units,
                cell_count: meta.cell_count,
            });
        }
        out.sort_by(|a, b| a.variable_id.cmp(&b.variable_id));
        Ok(out)
    }
}

fn entry_of(layer: &VariableLayer) -> CatalogEntry {
    CatalogEntry {
        variable_id: layer.variable_id.clone(),
        kind: layer.kind,
        units: layer.units.clone(),
        cell_count: layer.len(),
    }
}

fn conflict(id: &str) -> Error {
    Error::Conflict {
        what: "variable",
        id: id.to_string(),
    }
}

fn tempdir_in(root: &Path, id: &str) -> Result<PathBuf> {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or_default();
    let path = root.join(format!(".staging-{id}-{}-{nanos}", std::process::id()));
    fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
