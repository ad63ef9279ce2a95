use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::CellId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Continuous,
    Categorical,
}

impl std::str::FromStr for VariableKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(Self::Continuous),
            "categorical" => Ok(Self::Categorical),
            other => Err(Error::Invalid(format!(
                "unknown variable kind `{other}` (expected continuous or categorical)"
            ))),
        }
    }
}

impl std::fmt::Display for VariableKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Continuous => "continuous",
            Self::Categorical => "categorical",
        })
    }
}

/// Reduction used to collapse the pixels of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZonalStat {
    Mean,
    Majority,
}

impl ZonalStat {
    pub fn for_kind(kind: VariableKind) -> Self {
        match kind {
            VariableKind::Continuous => Self::Mean,
            VariableKind::Categorical => Self::Majority,
        }
    }
}

impl std::str::FromStr for ZonalStat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "majority" => Ok(Self::Majority),
            other => Err(Error::Invalid(format!(
                "unknown statistic `{other}` (expected mean or majority)"
            ))),
        }
    }
}

/// One global variable sampled on the grid. Cells without valid source pixels have no entry.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayer {
    pub variable_id: String,
    pub kind: VariableKind,
    pub units: String,
    pub provenance: String,
    /// Sorted by cell, unique.
    values: Vec<(CellId, f64)>,
    /// Distinct category codes, ascending. Empty for continuous layers.
    categories: Vec<i64>,
}

impl VariableLayer {
    pub fn new(
        variable_id: impl Into<String>,
        kind: VariableKind,
        values: impl IntoIterator<Item = (CellId, f64)>,
    ) -> Result<Self> {
        let variable_id = variable_id.into();
        validate_variable_id(&variable_id)?;
        let mut values: Vec<(CellId, f64)> = values.into_iter().collect();
        values.sort_by_key(|(c, _)| *c);
        if let Some(w) = values.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Invalid(format!("cell {} appears twice in layer", w[0].0)));
        }
        if let Some((cell, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite value {v} at cell {cell}")));
        }
        let mut categories = Vec::new();
        if kind == VariableKind::Categorical {
            for &(cell, v) in &values {
                categories.push(category_code(v).ok_or_else(|| {
                    Error::Type(format!("categorical value {v} at cell {cell} is not an integer"))
                })?);
            }
            categories.sort_unstable();
            categories.dedup();
        }
        Ok(Self {
            variable_id,
            kind,
            units: String::new(),
            provenance: String::new(),
            values,
            categories,
        })
    }

    pub fn with_units(mut self, units: impl Into<String>) -> Self {
        self.units = units.into();
        self
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn get(&self, cell: CellId) -> Option<f64> {
        self.values
            .binary_search_by_key(&cell, |(c, _)| *c)
            .ok()
            .map(|i| self.values[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (CellId, f64)> + '_ {
        self.values.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn categories(&self) -> &[i64] {
        &self.categories
    }
}

pub(crate) fn category_code(v: f64) -> Option<i64> {
    (v.fract() == 0.0 && v.abs() < 9.0e15).then_some(v as i64)
}

/// Ids become directory names, so only a conservative character set is allowed.
pub fn validate_variable_id(id: &str) -> Result<()> {
    validate_id("variable", id)
}

pub(crate) fn validate_id(what: &str, id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "invalid {what} id `{id}`: use letters, digits, `_`, `-` or `.`"
        )))
    }
}
