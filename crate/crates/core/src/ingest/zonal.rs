use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;

use super::layer::{category_code, VariableKind, VariableLayer, ZonalStat};
use super::raster::Raster;

/// Rows handled per parallel task. Fixed so that floating-point sums, and therefore the
/// output, do not depend on the thread count.
const ROWS_PER_TASK: usize = 32;

#[derive(Debug, Clone, Copy)]
struct MeanAcc {
    sum: f64,
    count: u64,
    min: f64,
    max: f64,
}

impl MeanAcc {
    fn new(v: f64) -> Self {
        Self {
            sum: v,
            count: 1,
            min: v,
            max: v,
        }
    }

    fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    fn merge(&mut self, other: &MeanAcc) {
        self.sum += other.sum;
        self.count += other.count;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    fn mean(&self) -> f64 {
        // Clamping keeps a constant cell bit-exact despite rounding in the sum.
        (self.sum / self.count as f64).clamp(self.min, self.max)
    }
}

/// Aggregates pixels into cells with the statistic implied by `kind`: mean for continuous
/// layers, majority for categorical ones.
pub fn zonal_aggregate(
    raster: &Raster,
    grid: &Grid,
    kind: VariableKind,
    variable_id: &str,
) -> Result<VariableLayer> {
    zonal_aggregate_with(raster, grid, kind, ZonalStat::for_kind(kind), variable_id)
}

/// Aggregates pixels whose centres fall in each cell. Mean is rejected for categorical
/// layers. Majority ties go to the smallest value. Cells without valid pixels are left out.
pub fn zonal_aggregate_with(
    raster: &Raster,
    grid: &Grid,
    kind: VariableKind,
    stat: ZonalStat,
    variable_id: &str,
) -> Result<VariableLayer> {
    if kind == VariableKind::Categorical && stat == ZonalStat::Mean {
        return Err(Error::Type(
            "the mean of category codes is not a category; use majority".into(),
        ));
    }
    if raster.values.is_empty() || raster.nodata_count() == raster.values.len() {
        return Err(Error::Invalid("raster has no valid pixels".into()));
    }

    let row_chunks: Vec<(usize, &[f64])> = raster
        .values
        .chunks(raster.ncols * ROWS_PER_TASK)
        .enumerate()
        .collect();

    let values: Vec<(crate::grid::CellId, f64)> = match stat {
        ZonalStat::Mean => {
            let partials: Vec<HashMap<u64, MeanAcc>> = row_chunks
                .par_iter()
                .map(|&(chunk, data)| -> Result<HashMap<u64, MeanAcc>> {
                    let mut acc: HashMap<u64, MeanAcc> = HashMap::new();
                    for_each_pixel(raster, grid, chunk, data, |idx, v| {
                        acc.entry(idx)
                            .and_modify(|a| a.push(v))
                            .or_insert_with(|| MeanAcc::new(v));
                    })?;
                    Ok(acc)
                })
                .collect::<Result<_>>()?;
            let mut merged: HashMap<u64, MeanAcc> = HashMap::new();
            for part in &partials {
                for (k, a) in part {
                    merged.entry(*k).and_modify(|m| m.merge(a)).or_insert(*a);
                }
            }
            collect_cells(grid, merged.into_iter().map(|(k, a)| (k, a.mean())))?
        }
        ZonalStat::Majority => {
            let partials: Vec<HashMap<u64, HashMap<u64, u64>>> = row_chunks
                .par_iter()
                .map(|&(chunk, data)| -> Result<HashMap<u64, HashMap<u64, u64>>> {
                    let mut acc: HashMap<u64, HashMap<u64, u64>> = HashMap::new();
                    let mut bad = None;
                    for_each_pixel(raster, grid, chunk, data, |idx, v| {
                        if kind == VariableKind::Categorical && category_code(v).is_none() {
                            bad.get_or_insert(v);
                            return;
                        }
                        *acc.entry(idx).or_default().entry(v.to_bits()).or_default() += 1;
                    })?;
                    if let Some(v) = bad {
                        return Err(Error::Type(format!(
                            "categorical raster holds non-integer value {v}"
                        )));
                    }
                    Ok(acc)
                })
                .collect::<Result<_>>()?;
            let mut merged: HashMap<u64, HashMap<u64, u64>> = HashMap::new();
            for part in partials {
                for (cell, counts) in part {
                    let slot = merged.entry(cell).or_default();
                    for (bits, n) in counts {
                        *slot.entry(bits).or_default() += n;
                    }
                }
            }
            collect_cells(
                grid,
                merged.into_iter().map(|(k, counts)| {
                    let (bits, _) = counts
                        .into_iter()
                        .max_by(|a, b| {
                            a.1.cmp(&b.1)
                                .then_with(|| f64::from_bits(b.0).total_cmp(&f64::from_bits(a.0)))
                        })
                        .expect("cells only exist with at least one pixel");
                    (k, f64::from_bits(bits))
                }),
            )?
        }
    };

    VariableLayer::new(variable_id, kind, values)
}

fn for_each_pixel(
    raster: &Raster,
    grid: &Grid,
    chunk: usize,
    data: &[f64],
    mut visit: impl FnMut(u64, f64),
) -> Result<()> {
    let first_row = chunk * ROWS_PER_TASK;
    for (i, row) in data.chunks(raster.ncols).enumerate() {
        let r = first_row + i;
        for (c, &v) in row.iter().enumerate() {
            if raster.is_nodata(v) {
                continue;
            }
            let (lat, lon) = raster.pixel_center(r, c);
            let lon = if lon >= 180.0 { lon - 360.0 } else { lon };
            let cell = grid.point_to_cell(lat.clamp(-90.0, 90.0), lon)?;
            visit(grid.flat_index(cell)?, v);
        }
    }
    Ok(())
}

fn collect_cells(
    grid: &Grid,
    entries: impl Iterator<Item = (u64, f64)>,
) -> Result<Vec<(crate::grid::CellId, f64)>> {
    entries
        .map(|(idx, v)| Ok((grid.cell_at(idx)?, v)))
        .collect()
}
