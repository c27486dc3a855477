use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature equal-frequency bin edges. A value `x` falls in bin `i` when
/// exactly `i` edges lie strictly below it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub bins: usize,
    pub edges: Vec<Vec<f64>>,
}

/// Cut points splitting `values` into `bins` groups of near-equal size.
///
/// A cut that would split a run of equal values moves to the nearest place
/// where the value changes (the lower one on a tie); cuts that collapse onto
/// each other are merged. Edges sit halfway between neighbouring values.
pub fn equal_frequency_edges(values: &[f64], bins: usize) -> Vec<f64> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut cuts: Vec<usize> = Vec::new();
    for k in 1..bins {
        let ideal = k * n / bins;
        if ideal == 0 || ideal >= n {
            continue;
        }
        let is_boundary = |c: usize| c > 0 && c < n && v[c - 1] != v[c];
        let cut = if is_boundary(ideal) {
            Some(ideal)
        } else {
            let down = (1..ideal).rev().find(|&c| is_boundary(c));
            let up = (ideal + 1..n).find(|&c| is_boundary(c));
            match (down, up) {
                (Some(d), Some(u)) => Some(if ideal - d <= u - ideal { d } else { u }),
                (d, u) => d.or(u),
            }
        };
        if let Some(c) = cut {
            if cuts.last() != Some(&c) && !cuts.contains(&c) {
                cuts.push(c);
            }
        }
    }
    cuts.sort_unstable();
    cuts.into_iter().map(|c| (v[c - 1] + v[c]) / 2.0).collect()
}

impl Discretizer {
    pub fn fit(rows: &[Vec<f64>], bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Config(format!("need at least 2 bins, got {bins}")));
        }
        let width = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::LengthMismatch(width, bad.len()));
        }
        let edges = (0..width)
            .map(|j| {
                let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                equal_frequency_edges(&col, bins)
            })
            .collect();
        Ok(Discretizer { bins, edges })
    }

    pub fn width(&self) -> usize {
        self.edges.len()
    }

    pub fn bin_count(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }

    pub fn bin(&self, feature: usize, x: f64) -> u8 {
        self.edges[feature].partition_point(|&e| e < x) as u8
    }

    pub fn transform(&self, row: &[f64]) -> Vec<u8> {
        row.iter().enumerate().map(|(j, &x)| self.bin(j, x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_values_split_evenly() {
        let values: Vec<f64> = (0..10).map(f64::from).collect();
        let edges = equal_frequency_edges(&values, 5);
        assert_eq!(edges, vec![1.5, 3.5, 5.5, 7.5]);
    }

    #[test]
    fn tied_runs_are_not_split() {
        // ideal cuts at 2 and 4 land inside the run of zeros and both move
        // up to 6, which is also the third cut; the last cut stays at 8
        let values = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0];
        let edges = equal_frequency_edges(&values, 5);
        assert_eq!(edges, vec![0.5, 2.5]);
        let d = Discretizer {
            bins: 5,
            edges: vec![edges],
        };
        assert_eq!(d.bin(0, 0.0), 0);
        assert_eq!(d.bin(0, 1.0), 1);
        assert_eq!(d.bin(0, 2.0), 1);
        assert_eq!(d.bin(0, 4.0), 2);
    }

    #[test]
    fn constant_column_has_one_bin() {
        assert!(equal_frequency_edges(&[2.0; 7], 5).is_empty());
        assert!(equal_frequency_edges(&[], 5).is_empty());
    }

    #[test]
    fn rejects_one_bin() {
        assert!(Discretizer::fit(&[vec![1.0]], 1).is_err());
    }
}
