//! Sequences, sliding windows and amplitude-domain subsections.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// A finite, non-empty sequence of samples ordered by time.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    samples: Vec<f64>,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySeries);
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonNumeric {
                row: pos + 1,
                cell: samples[pos].to_string(),
            });
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.samples
    }

    /// Adds `c` to every sample.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v + c).collect(),
        }
    }

    /// Multiplies every sample by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * s).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Reads a single-column CSV file. See [`parse_series`].
pub fn load_series(path: impl AsRef<Path>, column: Option<&str>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_series(file, column)
}

/// Parses one numeric value per record.
///
/// With `column` set the first record must be a header containing that
/// name. Without it the first column is used and a first record that does
/// not parse as a number is treated as a header. Rows are reported 1-based.
pub fn parse_series<R: Read>(reader: R, column: Option<&str>) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let mut samples = Vec::new();
    let mut col_index = 0usize;
    let mut first = true;
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    loop {
        match rdr.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => {
                return Err(Error::Csv {
                    row: row + 1,
                    message: e.to_string(),
                })
            }
        }
        row = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(row + 1);
        if first {
            first = false;
            if let Some(name) = column {
                col_index = record
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
                continue;
            }
            let cell = record.get(0).unwrap_or("");
            if parse_cell(cell).is_none() {
                continue;
            }
        }
        let cell = record.get(col_index).unwrap_or("");
        let value = parse_cell(cell).ok_or_else(|| Error::NonNumeric {
            row,
            cell: cell.to_string(),
        })?;
        samples.push(value);
    }
    TimeSeries::new(samples)
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Sliding-window geometry: window length `n`, stride `step`, and the
/// resulting number of subsequences `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct WindowPlan {
    pub n: usize,
    pub step: usize,
    pub k: usize,
}

impl WindowPlan {
    pub fn new(m: usize, n: usize, step: usize) -> Result<Self> {
        if n == 0 || n > m {
            return Err(Error::InvalidWindow { n, m });
        }
        if step == 0 {
            return Err(Error::InvalidStride);
        }
        Ok(Self {
            n,
            step,
            k: (m - n) / step + 1,
        })
    }

    /// Offset of subsequence `i` (0-based) in the underlying series.
    pub fn start(&self, i: usize) -> usize {
        i * self.step
    }

    fn fits(&self, m: usize) -> bool {
        self.n >= 1 && self.n <= m && self.start(self.k - 1) + self.n <= m
    }
}

/// The `k` windows of the series as borrowed views.
pub fn subsequences<'a>(ts: &'a TimeSeries, plan: &WindowPlan) -> Result<Vec<&'a [f64]>> {
    if !plan.fits(ts.len()) {
        return Err(Error::InvalidWindow {
            n: plan.n,
            m: ts.len(),
        });
    }
    let s = ts.as_slice();
    Ok((0..plan.k)
        .map(|i| &s[plan.start(i)..plan.start(i) + plan.n])
        .collect())
}

/// `(min, max)` of a non-empty view.
pub fn amplitude_domain(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Equal-width division of `[lo, hi]` into `q` subsections; returns the
/// `q + 1` bounds with the endpoints pinned to `lo` and `hi`.
pub fn subsection_bounds(lo: f64, hi: f64, q: usize) -> Result<Vec<f64>> {
    if q == 0 {
        return Err(Error::InvalidSubsections { q, n: 0 });
    }
    let width = hi - lo;
    let mut bounds: Vec<f64> = (0..=q)
        .map(|t| lo + (t as f64 * width) / q as f64)
        .collect();
    bounds[0] = lo;
    bounds[q] = hi;
    Ok(bounds)
}

/// Whether `x` belongs to subsection `t` (1-based): `[a^{t-1}, a^t)` for
/// `t < q`, closed `[a^{q-1}, a^q]` for the last one. In a degenerate
/// domain every element belongs to the last subsection.
pub fn in_subsection(x: f64, bounds: &[f64], t: usize) -> bool {
    let q = bounds.len() - 1;
    let (lo, hi) = (bounds[t - 1], bounds[t]);
    if t == q {
        lo <= x && x <= hi
    } else {
        lo <= x && x < hi
    }
}

/// The unique subsection (1-based) holding `x`.
pub fn assign_subsection(x: f64, bounds: &[f64]) -> Result<usize> {
    let q = bounds.len() - 1;
    let (lo, hi) = (bounds[0], bounds[q]);
    if !(lo <= x && x <= hi) {
        return Err(Error::OutOfDomain { x, lo, hi });
    }
    // Bounds are ascending, so the first upper bound above x decides.
    let t = bounds[1..q].partition_point(|&a| a <= x) + 1;
    Ok(t)
}

/// Per-subsequence amplitude domains and subsection bounds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubsectionPlan {
    pub q: usize,
    /// `bounds[i]` holds `a_i^0 ..= a_i^q`.
    pub bounds: Vec<Vec<f64>>,
}

impl SubsectionPlan {
    pub fn build(windows: &[&[f64]], q: usize) -> Result<Self> {
        let n = windows.first().map_or(0, |w| w.len());
        if q == 0 || q > n {
            return Err(Error::InvalidSubsections { q, n });
        }
        let bounds = windows
            .iter()
            .map(|w| {
                let (lo, hi) = amplitude_domain(w);
                subsection_bounds(lo, hi, q)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { q, bounds })
    }

    pub fn lower(&self, i: usize) -> f64 {
        self.bounds[i][0]
    }

    pub fn upper(&self, i: usize) -> f64 {
        self.bounds[i][self.q]
    }
}
