//! Piecewise trapezoidal quadrature on a 1 GHz base grid.
//!
//! Integrands are split into pieces at every known discontinuity or kink
//! (box edges, tabulation nodes). Inside a piece the integrand is smooth, so
//! the trapezoid rule converges and interval halving can be used as a
//! stopping criterion. Piece endpoints are sampled a hair inside the piece so
//! that a jump sitting exactly on a breakpoint contributes its one-sided limit.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Base sampling step in THz (1 GHz).
pub const BASE_STEP_THZ: f64 = 1e-3;
/// Relative change between successive halvings that counts as converged.
pub const RELATIVE_TOLERANCE: f64 = 1e-9;
/// Absolute floor for the convergence test (integrals here are O(1)).
pub const ABSOLUTE_TOLERANCE: f64 = 1e-15;
/// Maximum number of halvings of the base step.
pub const MAX_REFINEMENTS: u32 = 14;

/// Breakpoints closer than this are merged.
const MERGE_GAP: f64 = 1e-12;

/// Sorted, non-overlapping integration pieces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pieces(Vec<(f64, f64)>);

impl Pieces {
    /// Splits each interval at the breakpoints falling strictly inside it.
    pub fn new(intervals: &[(f64, f64)], breakpoints: &[f64]) -> Self {
        let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|x| x.is_finite()).collect();
        cuts.sort_by(f64::total_cmp);
        let mut pieces = Vec::new();
        for &(lo, hi) in &merge(intervals.to_vec()) {
            let mut start = lo;
            for &c in cuts.iter().filter(|&&c| c > lo && c < hi) {
                if c - start > MERGE_GAP && hi - c > MERGE_GAP {
                    pieces.push((start, c));
                    start = c;
                }
            }
            if hi - start > MERGE_GAP {
                pieces.push((start, hi));
            }
        }
        Pieces(pieces)
    }

    pub fn as_slice(&self) -> &[(f64, f64)] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total length covered.
    pub fn length(&self) -> f64 {
        self.0.iter().map(|(a, b)| b - a).sum()
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Number of halvings of the base step that were needed.
    pub refinements: u32,
}

struct PieceState {
    a: f64,
    b: f64,
    n: u64,
    ends: f64,
    interior: f64,
}

impl PieceState {
    fn new<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: u64) -> Self {
        let (lo, hi) = nudged(a, b);
        let ends = 0.5 * (f(lo) + f(hi));
        let interior = (1..n).map(|k| f(node(a, b, k, n))).sum();
        PieceState {
            a,
            b,
            n,
            ends,
            interior,
        }
    }

    fn value(&self) -> f64 {
        (self.b - self.a) / self.n as f64 * (self.ends + self.interior)
    }

    fn refine<F: Fn(f64) -> f64>(&mut self, f: &F) {
        let fine = 2 * self.n;
        let added: f64 = (0..self.n)
            .map(|k| f(node(self.a, self.b, 2 * k + 1, fine)))
            .sum();
        self.interior += added;
        self.n = fine;
    }
}

fn node(a: f64, b: f64, k: u64, n: u64) -> f64 {
    a + (b - a) * (k as f64 / n as f64)
}

fn nudged(a: f64, b: f64) -> (f64, f64) {
    let scale = a.abs().max(b.abs()).max(1.0);
    let delta = ((b - a) * 1e-6).min(1e-12).max(8.0 * f64::EPSILON * scale);
    (a + delta, b - delta)
}

fn base_intervals(a: f64, b: f64) -> u64 {
    libm::ceil((b - a) / BASE_STEP_THZ).max(1.0) as u64
}

/// Trapezoid rule with step `BASE_STEP_THZ / 2^level` (rounded so every
/// piece holds a whole number of steps).
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, pieces: &Pieces, level: u32) -> f64 {
    pieces
        .as_slice()
        .iter()
        .map(|&(a, b)| PieceState::new(&f, a, b, base_intervals(a, b) << level).value())
        .sum()
}

/// Halves the step until two successive trapezoid sums agree to
/// `RELATIVE_TOLERANCE`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, pieces: &Pieces) -> Result<Quadrature> {
    let mut states: Vec<PieceState> = pieces
        .as_slice()
        .iter()
        .map(|&(a, b)| PieceState::new(&f, a, b, base_intervals(a, b)))
        .collect();
    let mut previous: f64 = states.iter().map(PieceState::value).sum();
    if states.is_empty() {
        return Ok(Quadrature {
            value: 0.0,
            refinements: 0,
        });
    }
    for level in 1..=MAX_REFINEMENTS {
        for s in states.iter_mut() {
            s.refine(&f);
        }
        let current: f64 = states.iter().map(PieceState::value).sum();
        if !current.is_finite() {
            return Err(Error::Numerical(alloc::format!(
                "non-finite integral at refinement {level}"
            )));
        }
        let diff = (current - previous).abs();
        if diff <= RELATIVE_TOLERANCE * current.abs() || diff <= ABSOLUTE_TOLERANCE {
            return Ok(Quadrature {
                value: current,
                refinements: level,
            });
        }
        previous = current;
    }
    Err(Error::Numerical(alloc::format!(
        "quadrature did not converge after {MAX_REFINEMENTS} refinements"
    )))
}

/// Sorts and merges overlapping or touching intervals, dropping empty ones.
pub fn merge(mut intervals: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    intervals.retain(|(a, b)| b > a);
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
    for (a, b) in intervals {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Intersection of two interval sets.
pub fn intersect(x: &[(f64, f64)], y: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let x = merge(x.to_vec());
    let y = merge(y.to_vec());
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < x.len() && j < y.len() {
        let lo = x[i].0.max(y[j].0);
        let hi = x[i].1.min(y[j].1);
        if hi > lo {
            out.push((lo, hi));
        }
        if x[i].1 < y[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}
