//! Binned empirical distributions with density/CDF queries and CSV export.

use std::io::Write;

use crate::error::{Error, Result};

/// Histogram over a finite box; out-of-range samples land in an overflow
/// tally and are excluded from the normalized density.
#[derive(Clone, Debug)]
pub struct EmpiricalDistribution {
    pub dimension: usize,
    /// per-axis strictly increasing edges, bins+1 entries each
    pub edges: Vec<Vec<f64>>,
    /// row-major counts (bins^d entries)
    pub counts: Vec<f64>,
    pub total_weight: f64,
    pub overflow: f64,
}

impl EmpiricalDistribution {
    pub fn bins(&self, axis: usize) -> usize {
        self.edges[axis].len() - 1
    }

    fn bin_index(&self, axis: usize, v: f64) -> Option<usize> {
        let e = &self.edges[axis];
        if v < e[0] || v > *e.last().unwrap() {
            return None;
        }
        let b = self.bins(axis);
        let i = e.partition_point(|&x| x <= v);
        Some(i.saturating_sub(1).min(b - 1))
    }

    /// Normalized density of the bin containing x (0 outside range).
    pub fn density_at(&self, x: &[f64]) -> f64 {
        if self.total_weight == 0.0 {
            return 0.0;
        }
        let mut idx = 0usize;
        let mut vol = 1.0;
        for axis in 0..self.dimension {
            let Some(i) = self.bin_index(axis, x[axis]) else {
                return 0.0;
            };
            idx = idx * self.bins(axis) + i;
            vol *= self.edges[axis][i + 1] - self.edges[axis][i];
        }
        self.counts[idx] / (self.total_weight * vol)
    }

    /// In-range empirical CDF, 1D only.
    pub fn cdf_1d(&self, x: f64) -> f64 {
        assert_eq!(self.dimension, 1);
        if self.total_weight == 0.0 {
            return 0.0;
        }
        let e = &self.edges[0];
        let mut acc = 0.0;
        for (i, c) in self.counts.iter().enumerate() {
            let (lo, hi) = (e[i], e[i + 1]);
            if x >= hi {
                acc += c;
            } else if x > lo {
                acc += c * (x - lo) / (hi - lo);
                break;
            } else {
                break;
            }
        }
        acc / self.total_weight
    }

    /// CSV rows: bin_left, bin_right, density (1D); x_left, x_right,
    /// y_left, y_right, density (2D).
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        match self.dimension {
            1 => {
                writeln!(out, "bin_left,bin_right,density")?;
                let e = &self.edges[0];
                for (i, c) in self.counts.iter().enumerate() {
                    let vol = e[i + 1] - e[i];
                    let dens = if self.total_weight > 0.0 {
                        c / (self.total_weight * vol)
                    } else {
                        0.0
                    };
                    writeln!(out, "{},{},{}", e[i], e[i + 1], dens)?;
                }
            }
            2 => {
                writeln!(out, "x_left,x_right,y_left,y_right,density")?;
                let (ex, ey) = (&self.edges[0], &self.edges[1]);
                let by = self.bins(1);
                for i in 0..self.bins(0) {
                    for j in 0..by {
                        let c = self.counts[i * by + j];
                        let vol = (ex[i + 1] - ex[i]) * (ey[j + 1] - ey[j]);
                        let dens = if self.total_weight > 0.0 {
                            c / (self.total_weight * vol)
                        } else {
                            0.0
                        };
                        writeln!(
                            out,
                            "{},{},{},{},{}",
                            ex[i],
                            ex[i + 1],
                            ey[j],
                            ey[j + 1],
                            dens
                        )?;
                    }
                }
            }
            _ => return Err(Error::Unsupported("histogram dimension > 2".into())),
        }
        Ok(())
    }
}

/// Bin `samples` (row-major, `dimension` coordinates each) into `bins`
/// equal-width bins per axis over `range` = per-axis (lo, hi).
pub fn make_histogram(
    samples: &[f64],
    dimension: usize,
    bins: usize,
    range: &[(f64, f64)],
) -> Result<EmpiricalDistribution> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if bins < 2 {
        return Err(Error::Domain("need at least 2 bins".into()));
    }
    if range.len() != dimension || samples.len() % dimension != 0 {
        return Err(Error::Domain("histogram shape mismatch".into()));
    }
    for &(lo, hi) in range {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Domain("histogram range must be finite".into()));
        }
    }
    let edges: Vec<Vec<f64>> = range
        .iter()
        .map(|&(lo, hi)| {
            (0..=bins)
                .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
                .collect()
        })
        .collect();
    let mut hist = EmpiricalDistribution {
        dimension,
        edges,
        counts: vec![0.0; bins.pow(dimension as u32)],
        total_weight: 0.0,
        overflow: 0.0,
    };
    'outer: for s in samples.chunks_exact(dimension) {
        let mut idx = 0usize;
        for axis in 0..dimension {
            match hist.bin_index(axis, s[axis]) {
                Some(i) => idx = idx * bins + i,
                None => {
                    hist.overflow += 1.0;
                    continue 'outer;
                }
            }
        }
        hist.counts[idx] += 1.0;
        hist.total_weight += 1.0;
    }
    Ok(hist)
}
