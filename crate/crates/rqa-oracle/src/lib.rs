//! Slow, direct reference implementation of the window RQA measures.
//!
//! Everything is recomputed from the raw window by enumerating pairs and
//! walking runs cell by cell. It deliberately shares no code with
//! `rqamap-core` and is only meant for tests.

use std::collections::BTreeMap;

/// Integer structure counts of one window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counts {
    /// Recurrent pairs `(i, j)` with `i != j`.
    pub off_diagonal: usize,
    /// Diagonal line lengths (upper triangle, main diagonal excluded) -> count.
    pub diagonal: BTreeMap<usize, usize>,
    /// Vertical line lengths (main-diagonal cell excluded) -> count.
    pub vertical: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measures {
    pub rec: f64,
    pub det: f64,
    pub ent: f64,
    pub lam: f64,
    pub tt: f64,
}

pub fn recurrent(window: &[f64], eps: f64, i: usize, j: usize) -> bool {
    // Heaviside of eps - distance, with H(0) = 1.
    eps - (window[i] - window[j]).abs() >= 0.0
}

/// Line counts over an explicit boolean matrix.
pub fn counts_of_matrix(m: &[Vec<bool>], lmin: usize) -> Counts {
    let n = m.len();
    let mut off_diagonal = 0;
    for i in 0..n {
        for j in 0..n {
            if i != j && m[i][j] {
                off_diagonal += 1;
            }
        }
    }

    let mut diagonal = BTreeMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let starts = m[i][j] && (i == 0 || !m[i - 1][j - 1]);
            if !starts {
                continue;
            }
            let mut len = 0;
            while j + len < n && m[i + len][j + len] {
                len += 1;
            }
            if len >= lmin {
                *diagonal.entry(len).or_insert(0) += 1;
            }
        }
    }

    let mut vertical = BTreeMap::new();
    for j in 0..n {
        for i in 0..n {
            if i == j || !m[i][j] {
                continue;
            }
            let starts = i == 0 || i - 1 == j || !m[i - 1][j];
            if !starts {
                continue;
            }
            let mut len = 0;
            while i + len < n && i + len != j && m[i + len][j] {
                len += 1;
            }
            if len >= lmin {
                *vertical.entry(len).or_insert(0) += 1;
            }
        }
    }

    Counts { off_diagonal, diagonal, vertical }
}

pub fn counts(window: &[f64], eps: f64, lmin: usize) -> Counts {
    let n = window.len();
    let m: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| recurrent(window, eps, i, j)).collect()).collect();
    counts_of_matrix(&m, lmin)
}

pub fn measures(window: &[f64], eps: f64, lmin: usize) -> Measures {
    let w = window.len() as f64;
    let c = counts(window, eps, lmin);
    if c.off_diagonal == 0 {
        return Measures { rec: 0.0, det: 0.0, ent: 0.0, lam: 0.0, tt: 0.0 };
    }
    let n = c.off_diagonal as f64;
    let diag_points: usize = c.diagonal.iter().map(|(l, k)| l * k).sum();
    let diag_lines: usize = c.diagonal.values().sum();
    let vert_points: usize = c.vertical.iter().map(|(l, k)| l * k).sum();
    let vert_lines: usize = c.vertical.values().sum();

    let mut ent = 0.0;
    for &k in c.diagonal.values() {
        let p = k as f64 / diag_lines as f64;
        ent -= p * p.log2();
    }
    Measures {
        rec: 100.0 * n / (w * (w - 1.0)),
        // Upper-triangle lines stand for both triangles.
        det: 100.0 * (2 * diag_points) as f64 / n,
        ent,
        lam: 100.0 * vert_points as f64 / n,
        tt: if vert_lines == 0 { 0.0 } else { vert_points as f64 / vert_lines as f64 },
    }
}
