//! Weighted fusion of per-template score maps and top-k candidate extraction.

use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::geometry::BBox;

/// Number of candidates handed to the selector.
pub const DEFAULT_TOP_K: usize = 10;
/// NMS radius in grid cells (Chebyshev distance).
pub const DEFAULT_NMS_RADIUS: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("no score maps to fuse")]
    Empty,
    #[error("score map {index} is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    DimensionMismatch {
        index: usize,
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("{maps} maps but {weights} weights")]
    WeightCount { maps: usize, weights: usize },
    #[error("fusion weights must sum to 1 (sum = {0})")]
    WeightSum(f64),
    #[error("grid of {rows}x{cols} needs {expected} cells, got {got}")]
    CellCount {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },
    #[error("score at cell {0} is outside [0, 1] or not finite")]
    ScoreRange(usize),
}

/// Confidence grid plus the box decoded at each cell, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    rows: usize,
    cols: usize,
    scores: Vec<f64>,
    boxes: Vec<BBox>,
}

impl ScoreMap {
    pub fn new(rows: usize, cols: usize, scores: Vec<f64>, boxes: Vec<BBox>) -> Result<Self, FusionError> {
        let expected = rows * cols;
        for got in [scores.len(), boxes.len()] {
            if got != expected {
                return Err(FusionError::CellCount {
                    rows,
                    cols,
                    expected,
                    got,
                });
            }
        }
        if let Some(i) = scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
            return Err(FusionError::ScoreRange(i));
        }
        Ok(Self {
            rows,
            cols,
            scores,
            boxes,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn boxes(&self) -> &[BBox] {
        &self.boxes
    }

    pub fn score(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.cols + col]
    }

    pub fn bbox(&self, row: usize, col: usize) -> BBox {
        self.boxes[row * self.cols + col]
    }

    /// Highest-scoring cell, lowest `(row, col)` on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &s) in self.scores.iter().enumerate() {
            if s > self.scores[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub bbox: BBox,
    pub confidence: f64,
    pub cell: (usize, usize),
}

/// `M = Σ W_i m_i`, summed in slot order. Each fused cell takes its box from
/// the template whose weighted score is largest there (first slot on ties).
pub fn fuse(maps: &[ScoreMap], weights: &[f64]) -> Result<ScoreMap, FusionError> {
    let first = maps.first().ok_or(FusionError::Empty)?;
    if maps.len() != weights.len() {
        return Err(FusionError::WeightCount {
            maps: maps.len(),
            weights: weights.len(),
        });
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(FusionError::WeightSum(sum));
    }
    let (rows, cols) = first.dims();
    for (index, m) in maps.iter().enumerate() {
        if m.dims() != (rows, cols) {
            return Err(FusionError::DimensionMismatch {
                index,
                rows,
                cols,
                got_rows: m.rows,
                got_cols: m.cols,
            });
        }
    }

    let cells = rows * cols;
    let mut scores = alloc::vec![0.0; cells];
    let mut best_weighted = alloc::vec![f64::NEG_INFINITY; cells];
    let mut boxes = first.boxes.clone();
    for (m, &w) in maps.iter().zip(weights) {
        for cell in 0..cells {
            let weighted = w * m.scores[cell];
            scores[cell] += weighted;
            if weighted > best_weighted[cell] {
                best_weighted[cell] = weighted;
                boxes[cell] = m.boxes[cell];
            }
        }
    }
    for s in &mut scores {
        // rounding can push a convex combination of ones a hair above 1
        *s = s.clamp(0.0, 1.0);
    }
    Ok(ScoreMap {
        rows,
        cols,
        scores,
        boxes,
    })
}

/// Up to `k` candidates by descending score with greedy suppression: a cell
/// within `radius` (Chebyshev, in cells) of an accepted candidate is dropped.
/// Equal scores resolve in `(row, col)` order.
pub fn top_candidates(map: &ScoreMap, k: usize, radius: usize) -> Vec<Candidate> {
    let mut order: Vec<usize> = (0..map.scores.len()).collect();
    order.sort_by(|&a, &b| {
        map.scores[b]
            .partial_cmp(&map.scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut out: Vec<Candidate> = Vec::with_capacity(k);
    for idx in order {
        if out.len() == k {
            break;
        }
        let cell = (idx / map.cols, idx % map.cols);
        let suppressed = out.iter().any(|c| {
            cell.0.abs_diff(c.cell.0) <= radius && cell.1.abs_diff(c.cell.1) <= radius
        });
        if !suppressed {
            out.push(Candidate {
                bbox: map.boxes[idx],
                confidence: map.scores[idx],
                cell,
            });
        }
    }
    out
}
