//! Gate-by-gate Monte Carlo of pair generation, switch routing, lossy
//! detection and dark counts.
//!
//! The simulation encodes the physical assumptions behind the analytic rates
//! directly (Poisson pair number, independent per-photon routing and loss,
//! threshold detectors, independent dark counts) and shares no code with
//! [`crate::rates`], so it can serve as a brute-force oracle for it.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, Error, Result};
use crate::rates::DetectionChain;
use crate::spectrum::PairPdf;
use crate::wss::TransferFunction;

/// Gates per batch. Each batch draws from its own ChaCha stream so batches
/// can run in any order or in parallel.
pub const BATCH_GATES: u64 = 1 << 16;
/// Sampling-table resolution, THz.
const TABLE_STEP_THZ: f64 = 1e-3;

/// Click tallies of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GateCounts {
    pub gates: u64,
    pub clicks1: u64,
    pub clicks2: u64,
    pub coincidences: u64,
    pub seed: u64,
}

impl GateCounts {
    /// Adds another batch's tallies (the seed is kept).
    pub fn merge(&mut self, other: &GateCounts) {
        self.gates += other.gates;
        self.clicks1 += other.clicks1;
        self.clicks2 += other.clicks2;
        self.coincidences += other.coincidences;
    }

    pub fn estimate(&self) -> Result<Estimates> {
        estimate(self)
    }
}

/// A frequency estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn from_counts(successes: u64, trials: u64) -> Result<Self> {
        if trials == 0 {
            return Err(invalid("gates", "at least one gate is required"));
        }
        if successes > trials {
            return Err(invalid(
                "counts",
                alloc::format!("{successes} events in {trials} gates"),
            ));
        }
        let n = trials as f64;
        let p = successes as f64 / n;
        Ok(Estimate {
            value: p,
            std_error: libm::sqrt(p * (1.0 - p) / n),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimates {
    pub p1: Estimate,
    pub p2: Estimate,
    pub p12: Estimate,
}

/// Click frequencies `clicks / gates` with binomial errors.
///
/// A zero count has zero standard error; [`zero_count_upper_bound`] gives a
/// usable one-sided bound in that case.
pub fn estimate(counts: &GateCounts) -> Result<Estimates> {
    Ok(Estimates {
        p1: Estimate::from_counts(counts.clicks1, counts.gates)?,
        p2: Estimate::from_counts(counts.clicks2, counts.gates)?,
        p12: Estimate::from_counts(counts.coincidences, counts.gates)?,
    })
}

/// 95% one-sided upper bound on a probability after zero events.
pub fn zero_count_upper_bound(gates: u64) -> f64 {
    3.0 / gates as f64
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    x0: f64,
    width: f64,
    f0: f64,
    f1: f64,
    cdf_start: f64,
}

/// Inverse-CDF sampler for the pair detuning `nu >= 0`.
///
/// The density is tabulated on a grid that includes every breakpoint and
/// treated as linear inside each cell, so piecewise-linear spectra are
/// sampled exactly.
#[derive(Debug, Clone)]
pub struct DetuningSampler {
    cells: Vec<Cell>,
    total: f64,
}

impl DetuningSampler {
    pub fn new(pdf: &PairPdf) -> Result<Self> {
        let pieces = crate::quad::Pieces::new(
            &crate::quad::intersect(&pdf.support(), &[(0.0, f64::INFINITY)]),
            &pdf.breakpoints(),
        );
        let mut cells = Vec::new();
        let mut cdf = 0.0;
        for &(a, b) in pieces.as_slice() {
            let n = libm::ceil((b - a) / TABLE_STEP_THZ).max(1.0) as usize;
            let h = (b - a) / n as f64;
            let nudge = (h * 1e-6).min(1e-12);
            for k in 0..n {
                let x0 = a + (b - a) * (k as f64 / n as f64);
                let x1 = if k + 1 == n { b } else { a + (b - a) * ((k + 1) as f64 / n as f64) };
                let f0 = pdf.density(if k == 0 { x0 + nudge } else { x0 });
                let f1 = pdf.density(if k + 1 == n { x1 - nudge } else { x1 });
                let width = x1 - x0;
                cells.push(Cell {
                    x0,
                    width,
                    f0,
                    f1,
                    cdf_start: cdf,
                });
                cdf += 0.5 * (f0 + f1) * width;
            }
        }
        if !(cdf > 0.0) {
            return Err(Error::EmptySpectrum);
        }
        Ok(DetuningSampler { cells, total: cdf })
    }

    /// Tabulated mass on `nu >= 0`; 1 for a correctly normalized density.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    /// Maps `u` in `[0, 1)` to a detuning.
    pub fn quantile(&self, u: f64) -> f64 {
        let target = u * self.total;
        let i = self
            .cells
            .partition_point(|c| c.cdf_start <= target)
            .saturating_sub(1);
        let c = &self.cells[i];
        let r = (target - c.cdf_start).max(0.0);
        // Solve f0 t w + (f1 - f0) t^2 w / 2 = r for t in [0, 1].
        let a = 0.5 * (c.f1 - c.f0) * c.width;
        let b = c.f0 * c.width;
        let disc = (b * b + 4.0 * a * r).max(0.0);
        let denom = b + libm::sqrt(disc);
        let t = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        c.x0 + t.clamp(0.0, 1.0) * c.width
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// A configured simulation; batches can be run independently.
#[derive(Debug, Clone)]
pub struct Simulation {
    sampler: DetuningSampler,
    tf1: TransferFunction,
    tf2: TransferFunction,
    poisson: Option<Poisson<f64>>,
    kappa1: f64,
    kappa2: f64,
    dark1: f64,
    dark2: f64,
}

impl Simulation {
    pub fn new(
        pdf: &PairPdf,
        tf1: &TransferFunction,
        tf2: &TransferFunction,
        mu: f64,
        chain1: &DetectionChain,
        chain2: &DetectionChain,
    ) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(invalid("mu", alloc::format!("{mu} must be a finite value >= 0")));
        }
        let poisson = if mu > 0.0 {
            Some(Poisson::new(mu).map_err(|e| invalid("mu", alloc::format!("{e}")))?)
        } else {
            None
        };
        Ok(Simulation {
            sampler: DetuningSampler::new(pdf)?,
            tf1: tf1.clone(),
            tf2: tf2.clone(),
            poisson,
            kappa1: chain1.kappa(),
            kappa2: chain2.kappa(),
            dark1: chain1.dark_count,
            dark2: chain2.dark_count,
        })
    }

    /// Number of batches needed for `n_gates`.
    pub fn batch_count(n_gates: u64) -> u64 {
        n_gates.div_ceil(BATCH_GATES)
    }

    /// Runs batch `index` of an `n_gates` run with master seed `seed`.
    pub fn run_batch(&self, seed: u64, index: u64, n_gates: u64) -> GateCounts {
        let start = index * BATCH_GATES;
        let gates = n_gates.saturating_sub(start).min(BATCH_GATES);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let mut counts = GateCounts {
            gates,
            seed,
            ..GateCounts::default()
        };
        for _ in 0..gates {
            let (c1, c2) = self.gate(&mut rng);
            counts.clicks1 += c1 as u64;
            counts.clicks2 += c2 as u64;
            counts.coincidences += (c1 && c2) as u64;
        }
        counts
    }

    /// Runs all batches in order on the current thread.
    pub fn run(&self, n_gates: u64, seed: u64) -> GateCounts {
        let mut total = GateCounts {
            seed,
            ..GateCounts::default()
        };
        for index in 0..Self::batch_count(n_gates) {
            total.merge(&self.run_batch(seed, index, n_gates));
        }
        total
    }

    fn gate<R: Rng>(&self, rng: &mut R) -> (bool, bool) {
        let pairs = match &self.poisson {
            Some(p) => p.sample(rng) as u64,
            None => 0,
        };
        let mut hit1 = false;
        let mut hit2 = false;
        for _ in 0..pairs {
            let nu = self.sampler.sample(rng);
            for photon in [nu, -nu] {
                let u: f64 = rng.random();
                let h1 = self.tf1.power(photon);
                if u < h1 {
                    if rng.random::<f64>() < self.kappa1 {
                        hit1 = true;
                    }
                } else if u < h1 + self.tf2.power(photon) && rng.random::<f64>() < self.kappa2 {
                    hit2 = true;
                }
            }
        }
        let dark1 = rng.random::<f64>() < self.dark1;
        let dark2 = rng.random::<f64>() < self.dark2;
        (hit1 || dark1, hit2 || dark2)
    }
}

/// Simulates `n_gates` gates sequentially. Identical seeds give identical
/// counts.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    pdf: &PairPdf,
    tf1: &TransferFunction,
    tf2: &TransferFunction,
    mu: f64,
    chain1: &DetectionChain,
    chain2: &DetectionChain,
    n_gates: u64,
    seed: u64,
) -> Result<GateCounts> {
    if n_gates == 0 {
        return Err(invalid("n_gates", "at least one gate is required"));
    }
    Ok(Simulation::new(pdf, tf1, tf2, mu, chain1, chain2)?.run(n_gates, seed))
}
