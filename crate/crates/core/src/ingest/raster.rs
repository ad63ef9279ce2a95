//! Geographic lat/lon rasters in the ASCII grid layout.
//!
//! ```text
//! ncols         4
//! nrows         2
//! xllcorner     -180
//! yllcorner     -90
//! cellsize      90
//! NODATA_value  -9999
//! 1 2 3 4
//! 5 6 -9999 8
//! ```
//!
//! Row 0 is the northernmost row.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use rayon::prelude::*;

use crate::error::{Error, Result};

const DEFAULT_NODATA: f64 = -9999.0;
/// Slack, in degrees, allowed when checking a raster's extent against the globe.
const EXTENT_EPS_DEG: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata_value: f64,
    /// Row-major, north to south.
    pub values: Vec<f64>,
}

impl Raster {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xllcorner: f64,
        yllcorner: f64,
        cellsize: f64,
        nodata_value: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        let raster = Self {
            ncols,
            nrows,
            xllcorner,
            yllcorner,
            cellsize,
            nodata_value,
            values,
        };
        raster.validate()?;
        Ok(raster)
    }

    fn validate(&self) -> Result<()> {
        if self.ncols == 0 || self.nrows == 0 {
            return Err(Error::Invalid("raster has no pixels".into()));
        }
        if self.values.len() != self.ncols * self.nrows {
            return Err(Error::Invalid(format!(
                "expected {} values, got {}",
                self.ncols * self.nrows,
                self.values.len()
            )));
        }
        if !(self.cellsize.is_finite() && self.cellsize > 0.0) {
            return Err(Error::Invalid(format!("cellsize must be positive, got {}", self.cellsize)));
        }
        let east = self.xllcorner + self.ncols as f64 * self.cellsize;
        let north = self.yllcorner + self.nrows as f64 * self.cellsize;
        if self.xllcorner < -180.0 - EXTENT_EPS_DEG
            || east > 180.0 + EXTENT_EPS_DEG
            || self.yllcorner < -90.0 - EXTENT_EPS_DEG
            || north > 90.0 + EXTENT_EPS_DEG
        {
            return Err(Error::Invalid(format!(
                "raster extent [{}, {}]x[{}, {}] exceeds the globe",
                self.xllcorner, east, self.yllcorner, north
            )));
        }
        Ok(())
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v.is_nan() || v == self.nodata_value
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.values[row * self.ncols + col];
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn nodata_count(&self) -> usize {
        self.values.iter().filter(|&&v| self.is_nodata(v)).count()
    }

    /// Lat/lon of a pixel centre.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let lon = self.xllcorner + (col as f64 + 0.5) * self.cellsize;
        let lat = self.yllcorner + ((self.nrows - row) as f64 - 0.5) * self.cellsize;
        (lat, lon)
    }

    /// Serializes back to the ASCII grid layout; values use shortest round-trip formatting.
    pub fn to_ascii_grid(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 4 + 128);
        let _ = writeln!(out, "ncols {}", self.ncols);
        let _ = writeln!(out, "nrows {}", self.nrows);
        let _ = writeln!(out, "xllcorner {}", self.xllcorner);
        let _ = writeln!(out, "yllcorner {}", self.yllcorner);
        let _ = writeln!(out, "cellsize {}", self.cellsize);
        let _ = writeln!(out, "NODATA_value {}", self.nodata_value);
        for row in self.values.chunks(self.ncols) {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Resamples to `new_cellsize`, taking for every output pixel the input pixel whose
    /// centre is nearest (the one containing the output centre).
    pub fn resample_nearest(&self, new_cellsize: f64) -> Result<Raster> {
        if !(new_cellsize.is_finite() && new_cellsize > 0.0) {
            return Err(Error::Invalid(format!(
                "cellsize must be positive, got {new_cellsize}"
            )));
        }
        let ncols = ((self.ncols as f64 * self.cellsize / new_cellsize).round() as usize).max(1);
        let nrows = ((self.nrows as f64 * self.cellsize / new_cellsize).round() as usize).max(1);
        let north = self.yllcorner + self.nrows as f64 * self.cellsize;
        let src_col: Vec<usize> = (0..ncols)
            .map(|c| {
                let offset = (c as f64 + 0.5) * new_cellsize / self.cellsize;
                (offset.floor() as usize).min(self.ncols - 1)
            })
            .collect();
        let mut values = Vec::with_capacity(ncols * nrows);
        for r in 0..nrows {
            let offset = (r as f64 + 0.5) * new_cellsize / self.cellsize;
            let sr = (offset.floor() as usize).min(self.nrows - 1);
            let src = &self.values[sr * self.ncols..(sr + 1) * self.ncols];
            values.extend(src_col.iter().map(|&sc| src[sc]));
        }
        Ok(Raster {
            ncols,
            nrows,
            xllcorner: self.xllcorner,
            yllcorner: north - nrows as f64 * new_cellsize,
            cellsize: new_cellsize,
            nodata_value: self.nodata_value,
            values,
        })
    }

    /// Fills each nodata pixel with the mean of the valid pixels in the square window of
    /// the given radius around it. Means are taken over the input, not over pixels filled
    /// earlier in the same pass. Valid pixels are never changed.
    pub fn focal_fill(&self, radius: usize) -> Result<Raster> {
        if radius == 0 {
            return Err(Error::Invalid("focal radius must be at least 1".into()));
        }
        let (ncols, nrows) = (self.ncols, self.nrows);
        let mut values = self.values.clone();
        values
            .par_chunks_mut(ncols)
            .enumerate()
            .for_each(|(r, row)| {
                for (c, out) in row.iter_mut().enumerate() {
                    if !self.is_nodata(*out) {
                        continue;
                    }
                    let (mut sum, mut count) = (0.0, 0usize);
                    for wr in r.saturating_sub(radius)..(r + radius + 1).min(nrows) {
                        for wc in c.saturating_sub(radius)..(c + radius + 1).min(ncols) {
                            if let Some(v) = self.get(wr, wc) {
                                sum += v;
                                count += 1;
                            }
                        }
                    }
                    if count > 0 {
                        *out = sum / count as f64;
                    }
                }
            });
        Ok(Raster {
            values,
            ..self.clone()
        })
    }
}

/// Parses an ASCII grid. Header keys are case-insensitive; `xllcenter`/`yllcenter` are
/// accepted in place of the corner keys, and a missing `NODATA_value` defaults to -9999.
pub fn parse_ascii_grid<R: Read>(input: R) -> Result<Raster> {
    let reader = BufReader::new(input);
    let mut ncols = None;
    let mut nrows = None;
    let mut x = None;
    let mut y = None;
    let mut centered = (false, false);
    let mut cellsize = None;
    let mut nodata = None;
    let mut values = Vec::new();
    let mut in_header = true;
    let mut last_line = 0;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = line.map_err(|e| Error::at_line(line_no, format!("read failed: {e}")))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if in_header && trimmed.starts_with(|c: char| c.is_ascii_alphabetic()) {
            let mut parts = trimmed.split_whitespace();
            let key = parts.next().unwrap_or_default().to_ascii_lowercase();
            let raw = parts
                .next()
                .ok_or_else(|| Error::at_line(line_no, format!("header `{key}` has no value")))?;
            let num = |what: &str| -> Result<f64> {
                raw.parse::<f64>()
                    .map_err(|_| Error::at_line(line_no, format!("invalid {what} `{raw}`")))
            };
            let count = |what: &str| -> Result<usize> {
                match raw.parse::<usize>() {
                    Ok(n) if n > 0 => Ok(n),
                    _ => Err(Error::at_line(line_no, format!("invalid {what} `{raw}`"))),
                }
            };
            match key.as_str() {
                "ncols" => ncols = Some(count("ncols")?),
                "nrows" => nrows = Some(count("nrows")?),
                "xllcorner" => x = Some(num("xllcorner")?),
                "yllcorner" => y = Some(num("yllcorner")?),
                "xllcenter" => {
                    x = Some(num("xllcenter")?);
                    centered.0 = true;
                }
                "yllcenter" => {
                    y = Some(num("yllcenter")?);
                    centered.1 = true;
                }
                "cellsize" => cellsize = Some(num("cellsize")?),
                "nodata_value" => nodata = Some(num("NODATA_value")?),
                other => {
                    return Err(Error::at_line(line_no, format!("unknown header key `{other}`")))
                }
            }
            continue;
        }
        if in_header {
            in_header = false;
            let missing = [
                ("ncols", ncols.is_none()),
                ("nrows", nrows.is_none()),
                ("xllcorner", x.is_none()),
                ("yllcorner", y.is_none()),
                ("cellsize", cellsize.is_none()),
            ]
            .into_iter()
            .find(|(_, m)| *m);
            if let Some((key, _)) = missing {
                return Err(Error::at_line(line_no, format!("missing header `{key}`")));
            }
            values.reserve(ncols.unwrap() * nrows.unwrap());
        }
        for tok in trimmed.split_whitespace() {
            let v = tok
                .parse::<f64>()
                .map_err(|_| Error::at_line(line_no, format!("non-numeric value `{tok}`")))?;
            values.push(v);
        }
    }

    let (Some(ncols), Some(nrows), Some(mut x), Some(mut y), Some(cellsize)) =
        (ncols, nrows, x, y, cellsize)
    else {
        return Err(Error::at_line(last_line.max(1), "incomplete header"));
    };
    if centered.0 {
        x -= cellsize / 2.0;
    }
    if centered.1 {
        y -= cellsize / 2.0;
    }
    let expected = ncols * nrows;
    if values.len() != expected {
        return Err(Error::at_line(
            last_line,
            format!("expected {expected} values, got {}", values.len()),
        ));
    }
    Raster::new(
        ncols,
        nrows,
        x,
        y,
        cellsize,
        nodata.unwrap_or(DEFAULT_NODATA),
        values,
    )
    .map_err(|e| Error::at_line(1, e.to_string()))
}

/// Reads an `.asc` file, transparently decompressing gzip input.
pub fn read_ascii_grid(path: &Path) -> Result<Raster> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ascii_grid(&bytes)
}

/// Parses an in-memory `.asc` payload, plain or gzip-compressed.
pub fn decode_ascii_grid(bytes: &[u8]) -> Result<Raster> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        parse_ascii_grid(GzDecoder::new(bytes))
    } else {
        parse_ascii_grid(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Location;
    use proptest::prelude::*;

    const HEADER_2X2: &str =
        "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n";

    #[test]
    fn reads_values_row_major() {
        let r = parse_ascii_grid(format!("{HEADER_2X2}1 2 3 4\n").as_bytes()).unwrap();
        assert_eq!((r.ncols, r.nrows), (2, 2));
        assert_eq!(r.get(0, 0), Some(1.0));
        assert_eq!(r.get(1, 1), Some(4.0));
        assert_eq!(r.pixel_center(0, 0), (1.5, 0.5));
    }

    #[test]
    fn short_value_count_reports_expected_and_actual() {
        let err = parse_ascii_grid(format!("{HEADER_2X2}1 2 3\n").as_bytes()).unwrap_err();
        match err {
            Error::Parse { location, message } => {
                assert_eq!(message, "expected 4 values, got 3");
                assert_eq!(location, Location::Line(7));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nodata_sentinel_is_preserved() {
        let r = parse_ascii_grid(format!("{HEADER_2X2}1 -9999 3 4\n").as_bytes()).unwrap();
        assert_eq!(r.get(0, 1), None);
        assert_eq!(r.values[1], -9999.0);
        assert_eq!(r.nodata_count(), 1);
    }

    #[test]
    fn non_numeric_token_names_its_line() {
        let err = parse_ascii_grid(format!("{HEADER_2X2}1 2\n3 x\n").as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { location: Location::Line(8), .. }), "{err}");
    }

    #[test]
    fn malformed_header() {
        let text = "ncols two\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3 4\n";
        let err = parse_ascii_grid(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { location: Location::Line(1), .. }));
        let text = "ncols 2\nnrows 2\nxllcorner 0\ncellsize 1\n1 2 3 4\n";
        assert!(parse_ascii_grid(text.as_bytes()).unwrap_err().to_string().contains("yllcorner"));
    }

    #[test]
    fn centre_registration_is_converted() {
        let text = "ncols 1\nnrows 1\nxllcenter 0.5\nyllcenter 0.5\ncellsize 1\n7\n";
        let r = parse_ascii_grid(text.as_bytes()).unwrap();
        assert_eq!((r.xllcorner, r.yllcorner), (0.0, 0.0));
    }

    #[test]
    fn gzip_input() {
        use flate2::{write::GzEncoder, Compression};
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.asc.gz");
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(format!("{HEADER_2X2}1 2 3 4\n").as_bytes()).unwrap();
        std::fs::write(&path, enc.finish().unwrap()).unwrap();
        assert_eq!(read_ascii_grid(&path).unwrap().values, vec![1.0, 2.0, 3.0, 4.0]);
    }

    fn raster(ncols: usize, nrows: usize, values: Vec<f64>) -> Raster {
        Raster::new(ncols, nrows, 0.0, 0.0, 1.0, -9999.0, values).unwrap()
    }

    #[test]
    fn resample_identity() {
        let r = raster(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(r.resample_nearest(1.0).unwrap(), r);
    }

    #[test]
    fn resample_half_cellsize_replicates_blocks() {
        let r = raster(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let out = r.resample_nearest(0.5).unwrap();
        assert_eq!((out.ncols, out.nrows), (4, 4));
        #[rustfmt::skip]
        let expected = vec![
            1.0, 1.0, 2.0, 2.0,
            1.0, 1.0, 2.0, 2.0,
            3.0, 3.0, 4.0, 4.0,
            3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(out.values, expected);
        assert_eq!((out.xllcorner, out.yllcorner), (0.0, 0.0));
    }

    #[test]
    fn resample_constant_stays_constant() {
        let r = raster(3, 2, vec![5.5; 6]);
        for cs in [0.25, 0.7, 2.0, 3.0] {
            assert!(r.resample_nearest(cs).unwrap().values.iter().all(|&v| v == 5.5));
        }
    }

    #[test]
    fn focal_fill_without_gaps_is_noop() {
        let r = raster(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(r.focal_fill(1).unwrap(), r);
    }

    #[test]
    fn focal_fill_constant_ring() {
        let mut v = vec![5.0; 9];
        v[4] = -9999.0;
        let out = raster(3, 3, v).focal_fill(1).unwrap();
        assert_eq!(out.get(1, 1), Some(5.0));
    }

    #[test]
    fn focal_fill_hand_mean() {
        // Window of the corner pixel holds {2, 4} plus another gap.
        let out = raster(2, 2, vec![-9999.0, 2.0, 4.0, -9999.0]).focal_fill(1).unwrap();
        assert_eq!(out.get(0, 0), Some((2.0 + 4.0) / 2.0));
        assert_eq!(out.get(1, 1), Some(3.0));
    }

    #[test]
    fn focal_fill_leaves_isolated_gaps() {
        let mut v = vec![-9999.0; 25];
        v[0] = 1.0;
        let out = raster(5, 5, v).focal_fill(1).unwrap();
        assert_eq!(out.get(4, 4), None);
        assert_eq!(out.get(1, 1), Some(1.0));
    }

    fn arb_raster() -> impl Strategy<Value = Raster> {
        (1usize..6, 1usize..6).prop_flat_map(|(nc, nr)| {
            prop::collection::vec(
                prop_oneof![
                    1 => Just(-9999.0),
                    4 => -1e6f64..1e6,
                ],
                nc * nr,
            )
            .prop_map(move |vals| Raster::new(nc, nr, -10.0, 5.0, 0.5, -9999.0, vals).unwrap())
        })
    }

    proptest! {
        #[test]
        fn ascii_round_trip(r in arb_raster()) {
            let text = r.to_ascii_grid();
            prop_assert_eq!(parse_ascii_grid(text.as_bytes()).unwrap(), r);
        }

        #[test]
        fn focal_fill_keeps_valid_pixels(r in arb_raster(), radius in 1usize..3) {
            let out = r.focal_fill(radius).unwrap();
            prop_assert!(out.nodata_count() <= r.nodata_count());
            for (a, b) in r.values.iter().zip(&out.values) {
                if !r.is_nodata(*a) {
                    prop_assert_eq!(a, b);
                }
            }
        }
    }
}
