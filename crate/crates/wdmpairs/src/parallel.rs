//! Multi-threaded Monte Carlo driver.

use rayon::prelude::*;
use wdmpairs_core::mc_oracle::{GateCounts, Simulation};

/// Runs every batch of an `n_gates` simulation across the thread pool.
/// Batch streams depend only on `(seed, batch index)` and tallies are merged
/// by integer summation, so the result equals [`Simulation::run`].
pub fn run(sim: &Simulation, n_gates: u64, seed: u64) -> GateCounts {
    let mut total = (0..Simulation::batch_count(n_gates))
        .into_par_iter()
        .map(|i| sim.run_batch(seed, i, n_gates))
        .reduce(GateCounts::default, |mut acc, b| {
            acc.merge(&b);
            acc
        });
    total.seed = seed;
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use wdmpairs_core::{DetectionChain, PairSpectrum, TransferFunction};

    #[test]
    fn matches_sequential_run() {
        let pdf = PairSpectrum::tabulated(&[(0.0, 1.0), (2.0, 1.0)]).unwrap().normalize().unwrap();
        let a = TransferFunction::boxcar(0.4, 0.6, 1.0).unwrap();
        let b = TransferFunction::boxcar(-0.62, -0.42, 0.8).unwrap();
        let chain = DetectionChain::new(0.5, 0.2, 1e-3).unwrap();
        let sim = Simulation::new(&pdf, &a, &b, 0.7, &chain, &chain).unwrap();
        let n = 7 * wdmpairs_core::mc_oracle::BATCH_GATES + 123;
        assert_eq!(run(&sim, n, 42), sim.run(n, 42));
    }
}
