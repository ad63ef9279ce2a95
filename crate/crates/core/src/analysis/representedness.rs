use serde::{Deserialize, Serialize};

use crate::collections::{Extent, MappedCollection};
use crate::error::{Error, Result};
use crate::grid::{CellId, Grid};
use crate::ingest::VariableLayer;

use super::histogram::{BinBounds, BinningSpec};
use super::representativeness::PreparedAnalysis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationClass {
    VeryUnder,
    Under,
    Well,
    Over,
    VeryOver,
}

impl RepresentationClass {
    pub const ALL: [RepresentationClass; 5] = [
        Self::VeryUnder,
        Self::Under,
        Self::Well,
        Self::Over,
        Self::VeryOver,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::VeryUnder => "very_under",
            Self::Under => "under",
            Self::Well => "well",
            Self::Over => "over",
            Self::VeryOver => "very_over",
        }
    }
}

impl std::fmt::Display for RepresentationClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Score cut points. With the defaults: very_under r ≤ −0.5, under r ≤ −0.1,
/// well |r| < 0.1, over r < 0.5, very_over otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    pub mild: f64,
    pub strong: f64,
}

impl Default for ClassThresholds {
    fn default() -> Self {
        Self {
            mild: 0.1,
            strong: 0.5,
        }
    }
}

impl ClassThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.mild && self.mild < self.strong && self.strong <= 1.0) {
            return Err(Error::Invalid(format!(
                "class thresholds need 0 < mild < strong <= 1, got {} / {}",
                self.mild, self.strong
            )));
        }
        Ok(())
    }

    pub fn classify(&self, score: f64) -> RepresentationClass {
        if score <= -self.strong {
            RepresentationClass::VeryUnder
        } else if score <= -self.mild {
            RepresentationClass::Under
        } else if score < self.mild {
            RepresentationClass::Well
        } else if score < self.strong {
            RepresentationClass::Over
        } else {
            RepresentationClass::VeryOver
        }
    }
}

/// Signed over/under-representation of one bin: (p_s − p_p) / max(p_s, p_p), 0 when both
/// are empty. −1 means the bin holds population but no sample.
pub fn representedness_score(p_sample: f64, p_population: f64) -> f64 {
    let denom = p_sample.max(p_population);
    if denom == 0.0 {
        0.0
    } else {
        ((p_sample - p_population) / denom).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinScore {
    pub bin: usize,
    pub bounds: BinBounds,
    pub p_sample: f64,
    pub p_population: f64,
    pub score: f64,
    pub class: RepresentationClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellClass {
    pub cell: CellId,
    pub value: f64,
    pub bin: usize,
    pub score: f64,
    pub class: RepresentationClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentednessMap {
    pub thresholds: ClassThresholds,
    pub bins: Vec<BinScore>,
    /// Every populated extent cell, ordered by cell.
    pub cells: Vec<CellClass>,
}

impl PreparedAnalysis {
    pub fn representedness(&self, thresholds: ClassThresholds) -> Result<RepresentednessMap> {
        thresholds.validate()?;
        let bins: Vec<BinScore> = self
            .sample_histogram
            .proportions
            .iter()
            .zip(&self.population_histogram.proportions)
            .enumerate()
            .map(|(bin, (&ps, &pp))| {
                let score = representedness_score(ps, pp);
                BinScore {
                    bin,
                    bounds: self.binning.bin_bounds(bin),
                    p_sample: ps,
                    p_population: pp,
                    score,
                    class: thresholds.classify(score),
                }
            })
            .collect();
        let indices = self.population.bin_indices(&self.binning)?;
        let cells = self
            .population
            .cells()
            .iter()
            .zip(self.population.values())
            .zip(indices)
            .map(|((&cell, &value), bin)| {
                let b = &bins[bin as usize];
                CellClass {
                    cell,
                    value,
                    bin: bin as usize,
                    score: b.score,
                    class: b.class,
                }
            })
            .collect();
        Ok(RepresentednessMap {
            thresholds,
            bins,
            cells,
        })
    }
}

pub fn representedness(
    mapped: &MappedCollection,
    layer: &VariableLayer,
    extent: &Extent,
    binning: BinningSpec,
    thresholds: ClassThresholds,
) -> Result<RepresentednessMap> {
    PreparedAnalysis::new(mapped, layer, extent, binning)?.representedness(thresholds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassArea {
    pub class: RepresentationClass,
    pub cell_count: usize,
    pub area_km2: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSummary {
    pub total_area_km2: f64,
    /// One entry per class, from very_under to very_over.
    pub classes: Vec<ClassArea>,
}

impl AreaSummary {
    pub fn class(&self, class: RepresentationClass) -> &ClassArea {
        &self.classes[class as usize]
    }
}

/// Area and share of the classified extent held by each class.
pub fn area_summary(map: &RepresentednessMap, grid: &Grid) -> Result<AreaSummary> {
    let mut count = [0usize; 5];
    let mut area = [0.0f64; 5];
    let mut total = 0.0;
    for c in &map.cells {
        let a = grid.cell_area_km2(c.cell)?;
        count[c.class as usize] += 1;
        area[c.class as usize] += a;
        total += a;
    }
    let classes = RepresentationClass::ALL
        .iter()
        .map(|&class| {
            let i = class as usize;
            ClassArea {
                class,
                cell_count: count[i],
                area_km2: area[i],
                percent: if total > 0.0 { 100.0 * area[i] / total } else { 0.0 },
            }
        })
        .collect();
    Ok(AreaSummary {
        total_area_km2: total,
        classes,
    })
}

/// Up to `k` classified extent cells, most under-represented first; ties keep cell order.
pub fn suggest_undersampled(map: &RepresentednessMap, extent: &Extent, k: usize) -> Vec<CellId> {
    let mut ranked: Vec<&CellClass> = map.cells.iter().filter(|c| extent.contains(c.cell)).collect();
    ranked.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.cell.cmp(&b.cell)));
    ranked.into_iter().take(k).map(|c| c.cell).collect()
}
