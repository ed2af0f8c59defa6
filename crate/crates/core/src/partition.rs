//! Partitions of a bounded response range `[lower, upper]` into consecutive
//! half-open bins `[c_{i-1}, c_i)`, the last bin closed at `upper`.
//!
//! Bin indices are zero-based: a partition with `m` cut-points has bins
//! `0..=m`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attempts allowed before `Partition::random` gives up.
pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPartition")]
pub struct Partition {
    lower: f64,
    upper: f64,
    cuts: Vec<f64>,
}

#[derive(Deserialize)]
struct RawPartition {
    lower: f64,
    upper: f64,
    cuts: Vec<f64>,
}

impl TryFrom<RawPartition> for Partition {
    type Error = Error;

    fn try_from(raw: RawPartition) -> Result<Self> {
        Partition::new(raw.lower, raw.upper, raw.cuts)
    }
}

fn check_range(lower: f64, upper: f64) -> Result<()> {
    if !(lower.is_finite() && upper.is_finite() && lower < upper) {
        return Err(Error::InvalidRange { lower, upper });
    }
    Ok(())
}

/// Default rejection floor for random cut placement: `0.01 / (m + 1)`.
pub fn default_min_width_fraction(m: usize) -> f64 {
    0.01 / (m as f64 + 1.0)
}

impl Partition {
    /// Validates and builds a partition from explicit cut-points.
    pub fn new(lower: f64, upper: f64, cuts: Vec<f64>) -> Result<Self> {
        check_range(lower, upper)?;
        if cuts.is_empty() {
            return Err(Error::InvalidCount("a partition needs at least one cut-point".into()));
        }
        let mut prev = lower;
        for &c in &cuts {
            if !(c.is_finite() && c > prev) {
                return Err(Error::InvalidParameter(format!(
                    "cut-points must be strictly increasing inside ({lower}, {upper}); got {c} after {prev}"
                )));
            }
            prev = c;
        }
        if prev >= upper {
            return Err(Error::InvalidParameter(format!(
                "last cut-point {prev} must be below upper {upper}"
            )));
        }
        Ok(Partition { lower, upper, cuts })
    }

    /// `m` evenly spaced cut-points, giving `m + 1` bins of equal width.
    pub fn even(lower: f64, upper: f64, m: usize) -> Result<Self> {
        check_range(lower, upper)?;
        if m == 0 {
            return Err(Error::InvalidCount("m must be at least 1".into()));
        }
        let span = upper - lower;
        let bins = (m + 1) as f64;
        let cuts = (1..=m).map(|i| lower + i as f64 * span / bins).collect();
        Partition::new(lower, upper, cuts)
    }

    /// Sorted order statistics of `m` uniform draws on `(lower, upper)`.
    ///
    /// The whole set is redrawn until every bin is at least
    /// `min_width_fraction * (upper - lower)` wide; after
    /// [`MAX_REJECTIONS`] consecutive failures this returns
    /// [`Error::NonConvergence`].
    pub fn random<R: Rng + ?Sized>(
        lower: f64,
        upper: f64,
        m: usize,
        rng: &mut R,
        min_width_fraction: f64,
    ) -> Result<Self> {
        check_range(lower, upper)?;
        if m == 0 {
            return Err(Error::InvalidCount("m must be at least 1".into()));
        }
        if !(0.0..1.0 / (m as f64 + 1.0)).contains(&min_width_fraction) {
            return Err(Error::InvalidParameter(format!(
                "min_width_fraction {min_width_fraction} must lie in [0, 1/(m+1))"
            )));
        }
        let min_width = min_width_fraction * (upper - lower);
        let mut cuts = vec![0.0; m];
        for _ in 0..MAX_REJECTIONS {
            for c in cuts.iter_mut() {
                *c = rng.gen_range(lower..upper);
            }
            cuts.sort_by(f64::total_cmp);
            if cuts[0] <= lower {
                continue;
            }
            let mut prev = lower;
            let ok = cuts
                .iter()
                .chain(std::iter::once(&upper))
                .all(|&c| {
                    let width = c - prev;
                    prev = c;
                    width > 0.0 && width >= min_width
                });
            if ok {
                return Partition::new(lower, upper, cuts);
            }
        }
        Err(Error::NonConvergence {
            attempts: MAX_REJECTIONS,
        })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn n_cuts(&self) -> usize {
        self.cuts.len()
    }

    pub fn n_bins(&self) -> usize {
        self.cuts.len() + 1
    }

    /// Edge `j` for `j` in `0..=m+1`: `lower`, the cuts, then `upper`.
    pub fn edge(&self, j: usize) -> f64 {
        if j == 0 {
            self.lower
        } else if j <= self.cuts.len() {
            self.cuts[j - 1]
        } else {
            self.upper
        }
    }

    /// `[left, right]` edges of bin `i`.
    pub fn bin_edges(&self, i: usize) -> Result<(f64, f64)> {
        if i >= self.n_bins() {
            return Err(Error::IndexOutOfBounds {
                index: i,
                bins: self.n_bins(),
            });
        }
        Ok((self.edge(i), self.edge(i + 1)))
    }

    pub fn bin_width(&self, i: usize) -> Result<f64> {
        self.bin_edges(i).map(|(a, b)| b - a)
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.n_bins())
            .map(|i| self.edge(i + 1) - self.edge(i))
            .collect()
    }

    /// Bin containing `y`; `upper` itself falls in the last bin.
    pub fn bin_index(&self, y: f64) -> Result<usize> {
        if !(y >= self.lower && y <= self.upper) {
            return Err(Error::OutOfRange {
                value: y,
                lower: self.lower,
                upper: self.upper,
            });
        }
        Ok(self.locate(y))
    }

    // Caller guarantees y in [lower, upper].
    pub(crate) fn locate(&self, y: f64) -> usize {
        // number of cuts <= y
        self.cuts.partition_point(|&c| c <= y)
    }
}
