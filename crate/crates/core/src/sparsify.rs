// SPDX-License-Identifier: MIT OR Apache-2.0

//! The filtered pair `B = D G`, `H = D G D'` with exact on-demand entries.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{CaseError, Result};
use crate::gram::{apply_filter, filter_matrix, GramModel, LinearFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Structure {
    Banded,
    /// Change-point model with `D = G^{-1}`: `B = I`, `H = G^{-1}`.
    ChangePointInverse,
}

/// Filtered Gram pair with thresholded neighbor lists.
#[derive(Debug, Clone)]
pub struct SparsifiedPair {
    gram: GramModel,
    filter: LinearFilter,
    structure: Structure,
    delta: f64,
    neighbors: Vec<Vec<usize>>,
}

/// Build the filtered pair for `g` and `f` and the neighbor lists at threshold `delta`.
///
/// For the change-point model the second-difference filter is taken to be the exact
/// inverse `D = G^{-1}`, whose rows are `-e_{i-1} + 2 e_i - e_{i+1}` (last row
/// `e_p - e_{p-1}`). Then `B` is the identity and `H` is tridiagonal, and `D X'Y`
/// equals the vector of successive differences `Y_i - Y_{i+1}`, `Y_p`.
pub fn sparsify(g: &GramModel, f: &LinearFilter, delta: f64) -> Result<SparsifiedPair> {
    let p = g.p();
    if f.order() >= p {
        return Err(CaseError::InvalidFilter(format!("filter order {} must be below p = {p}", f.order())));
    }
    if !(delta >= 0.0) {
        return Err(CaseError::InvalidParameter(format!("delta must be nonnegative, got {delta}")));
    }
    let structure =
        if g.is_changepoint() && f.is_second_difference() { Structure::ChangePointInverse } else { Structure::Banded };
    let mut sp = SparsifiedPair { gram: g.clone(), filter: f.clone(), structure, delta, neighbors: Vec::new() };
    sp.neighbors = sp.compute_neighbors(delta);
    Ok(sp)
}

impl SparsifiedPair {
    pub fn p(&self) -> usize {
        self.gram.p()
    }

    pub fn gram(&self) -> &GramModel {
        &self.gram
    }

    pub fn filter(&self) -> &LinearFilter {
        &self.filter
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Sorted neighbors of `i` at the construction threshold.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn is_changepoint_inverse(&self) -> bool {
        self.structure == Structure::ChangePointInverse
    }

    /// `B(i, j)`.
    pub fn b(&self, i: usize, j: usize) -> f64 {
        match self.structure {
            Structure::ChangePointInverse => {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            }
            Structure::Banded => {
                let p = self.p();
                let mut s = 0.0;
                for (k, &c) in self.filter.coeffs().iter().enumerate() {
                    if i + k < p {
                        s += c * self.gram.entry(i + k, j);
                    }
                }
                s
            }
        }
    }

    /// `H(i, j)`.
    pub fn h(&self, i: usize, j: usize) -> f64 {
        match self.structure {
            Structure::ChangePointInverse => {
                let p = self.p();
                if i == j {
                    if i + 1 == p {
                        1.0
                    } else {
                        2.0
                    }
                } else if i.abs_diff(j) == 1 {
                    -1.0
                } else {
                    0.0
                }
            }
            Structure::Banded => {
                let p = self.p();
                let eta = self.filter.coeffs();
                let mut s = 0.0;
                for (k, &ck) in eta.iter().enumerate() {
                    if i + k >= p {
                        break;
                    }
                    for (l, &cl) in eta.iter().enumerate() {
                        if j + l >= p {
                            break;
                        }
                        s += ck * cl * self.gram.entry(i + k, j + l);
                    }
                }
                s
            }
        }
    }

    pub fn b_block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, c| self.b(rows[a], cols[c]))
    }

    pub fn h_block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, c| self.h(rows[a], cols[c]))
    }

    /// Dense `D` matching the entries of `B` and `H`.
    pub fn filter_matrix(&self) -> DMatrix<f64> {
        let p = self.p();
        match self.structure {
            Structure::Banded => filter_matrix(&self.filter, p),
            Structure::ChangePointInverse => DMatrix::from_fn(p, p, |i, j| {
                if i == j {
                    if i + 1 == p {
                        1.0
                    } else {
                        2.0
                    }
                } else if i.abs_diff(j) == 1 {
                    -1.0
                } else {
                    0.0
                }
            }),
        }
    }

    /// `D x`.
    pub fn filter_vector(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.p());
        match self.structure {
            Structure::Banded => apply_filter(&self.filter, x),
            Structure::ChangePointInverse => {
                let p = x.len();
                (0..p)
                    .map(|i| {
                        let left = if i > 0 { x[i - 1] } else { 0.0 };
                        if i + 1 == p {
                            x[i] - left
                        } else {
                            2.0 * x[i] - left - x[i + 1]
                        }
                    })
                    .collect()
            }
        }
    }

    /// Neighbor lists at threshold `delta`: `j` is listed for `i != j` when
    /// `|B(i,j)|`, `|B(j,i)|` or `|H(i,j)|` exceeds `delta`.
    pub fn compute_neighbors(&self, delta: f64) -> Vec<Vec<usize>> {
        let p = self.p();
        match self.structure {
            Structure::ChangePointInverse => (0..p)
                .map(|i| {
                    let mut v = Vec::with_capacity(2);
                    if i > 0 && 1.0 > delta {
                        v.push(i - 1);
                    }
                    if i + 1 < p && 1.0 > delta {
                        v.push(i + 1);
                    }
                    v
                })
                .collect(),
            Structure::Banded if delta.is_infinite() => vec![Vec::new(); p],
            Structure::Banded => {
                // B(j, i) for fixed i is needed too; compute row i of B, column i of B, row i of H.
                (0..p)
                    .into_par_iter()
                    .map(|i| {
                        (0..p)
                            .filter(|&j| {
                                j != i
                                    && (self.b(i, j).abs() > delta
                                        || self.b(j, i).abs() > delta
                                        || self.h(i, j).abs() > delta)
                            })
                            .collect()
                    })
                    .collect()
            }
        }
    }

    /// Dense `B` and `H` for small problems.
    pub fn dense_b(&self) -> DMatrix<f64> {
        let p = self.p();
        DMatrix::from_fn(p, p, |i, j| self.b(i, j))
    }

    pub fn dense_h(&self) -> DMatrix<f64> {
        let p = self.p();
        DMatrix::from_fn(p, p, |i, j| self.h(i, j))
    }

    /// Restrict `d` to `idx`.
    pub fn sub_d(d: &[f64], idx: &[usize]) -> DVector<f64> {
        DVector::from_iterator(idx.len(), idx.iter().map(|&i| d[i]))
    }
}
