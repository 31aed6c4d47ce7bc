//! Distance and recurrence matrices for a single analysis window.
//!
//! There is no phase-space embedding: each point is a scalar current reading,
//! so the distance is the absolute difference. Only window-sized matrices are
//! ever built; the full recurrence plot of a day is never materialized.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `W x W` matrix of `|y_i - y_j|`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }
}

pub fn distance_matrix(window: &[f64]) -> Result<DistanceMatrix> {
    let size = window.len();
    if size < 2 {
        return Err(Error::TooShort { needed: 2, got: size });
    }
    let mut entries = Vec::with_capacity(size * size);
    for &yi in window {
        entries.extend(window.iter().map(|&yj| (yi - yj).abs()));
    }
    Ok(DistanceMatrix { size, entries })
}

/// Thresholded distance matrix. A pair is recurrent when its distance is at
/// most `epsilon`, so the boundary `distance == epsilon` counts.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceMatrix {
    size: usize,
    cells: Vec<bool>,
    epsilon: f64,
}

impl RecurrenceMatrix {
    /// Builds a matrix from row-major cells, checking that it is square,
    /// symmetric and has a true main diagonal.
    pub fn from_cells(size: usize, cells: Vec<bool>, epsilon: f64) -> Result<Self> {
        if cells.len() != size * size {
            return Err(Error::InvalidParameter { name: "cells", reason: "must hold size * size entries" });
        }
        for i in 0..size {
            if !cells[i * size + i] {
                return Err(Error::InvalidParameter { name: "cells", reason: "main diagonal must be recurrent" });
            }
            for j in (i + 1)..size {
                if cells[i * size + j] != cells[j * size + i] {
                    return Err(Error::InvalidParameter { name: "cells", reason: "matrix must be symmetric" });
                }
            }
        }
        Ok(RecurrenceMatrix { size, cells, epsilon })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.cells[i * self.size..(i + 1) * self.size]
    }

    /// Recurrent pairs off the line of identity, both triangles.
    pub fn off_diagonal_points(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count() - self.size
    }
}

pub fn recurrence_matrix(dm: &DistanceMatrix, epsilon: f64) -> Result<RecurrenceMatrix> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter { name: "epsilon", reason: "must be finite and non-negative" });
    }
    let cells = dm.entries.iter().map(|&d| d <= epsilon).collect();
    Ok(RecurrenceMatrix { size: dm.size, cells, epsilon })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn as_rows(r: &RecurrenceMatrix) -> Vec<Vec<u8>> {
        (0..r.size()).map(|i| r.row(i).iter().map(|&b| b as u8).collect()).collect()
    }

    #[test]
    fn distances_by_hand() {
        let dm = distance_matrix(&[0.0, 3.0, 0.0]).unwrap();
        let rows: Vec<&[f64]> = (0..3).map(|i| dm.row(i)).collect();
        assert_eq!(rows, vec![&[0.0, 3.0, 0.0][..], &[3.0, 0.0, 3.0], &[0.0, 3.0, 0.0]]);

        let dm = distance_matrix(&[1.0, 4.0, 9.0]).unwrap();
        assert_eq!(dm.get(0, 2), 8.0);
        assert_eq!(dm.get(1, 2), 5.0);

        let dm = distance_matrix(&[2.5; 6]).unwrap();
        assert!((0..6).all(|i| dm.row(i).iter().all(|&d| d == 0.0)));

        assert_eq!(distance_matrix(&[1.0]), Err(Error::TooShort { needed: 2, got: 1 }));
    }

    #[test]
    fn thresholds_by_hand() {
        let dm = distance_matrix(&[0.0, 3.0, 0.0]).unwrap();
        let r = recurrence_matrix(&dm, 1.0).unwrap();
        assert_eq!(as_rows(&r), vec![vec![1, 0, 1], vec![0, 1, 0], vec![1, 0, 1]]);
        // Distance exactly epsilon is recurrent.
        assert!(recurrence_matrix(&dm, 3.0).unwrap().get(0, 1));
        assert!(recurrence_matrix(&dm, -0.1).is_err());
        assert!(recurrence_matrix(&dm, f64::NAN).is_err());
    }

    #[test]
    fn zero_epsilon_distinct_values_is_identity() {
        let r = recurrence_matrix(&distance_matrix(&[0.1, 0.7, 2.0, 5.5]).unwrap(), 0.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(r.get(i, j), i == j);
            }
        }
        assert_eq!(r.off_diagonal_points(), 0);
    }

    #[test]
    fn from_cells_validates() {
        assert!(RecurrenceMatrix::from_cells(2, vec![true, false, false, true], 0.0).is_ok());
        assert!(RecurrenceMatrix::from_cells(2, vec![true, true, false, true], 0.0).is_err());
        assert!(RecurrenceMatrix::from_cells(2, vec![false, false, false, true], 0.0).is_err());
        assert!(RecurrenceMatrix::from_cells(2, vec![true; 3], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_reflexive_monotone(
            window in prop::collection::vec(0.0f64..15.0, 2..40),
            e1 in 0.0f64..8.0,
            de in 0.0f64..4.0,
        ) {
            let dm = distance_matrix(&window).unwrap();
            let lo = recurrence_matrix(&dm, e1).unwrap();
            let hi = recurrence_matrix(&dm, e1 + de).unwrap();
            let n = window.len();
            for i in 0..n {
                prop_assert!(lo.get(i, i));
                for j in 0..n {
                    prop_assert_eq!(lo.get(i, j), lo.get(j, i));
                    prop_assert!(!lo.get(i, j) || hi.get(i, j));
                }
            }
        }

        #[test]
        fn windows_are_blocks_of_the_full_plot(
            series in prop::collection::vec(0.0f64..12.0, 20..200),
            w in 2usize..20,
            eps in 0.0f64..6.0,
        ) {
            // Brute-force oracle: the whole-series recurrence plot, cell by cell.
            let n = series.len();
            let full = |i: usize, j: usize| eps - (series[i] - series[j]).abs() >= 0.0;
            for start in (0..=n - w).step_by(7) {
                let r = recurrence_matrix(&distance_matrix(&series[start..start + w]).unwrap(), eps).unwrap();
                for i in 0..w {
                    for j in 0..w {
                        prop_assert_eq!(r.get(i, j), full(start + i, start + j));
                    }
                }
            }
        }
    }
}
