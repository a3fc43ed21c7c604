//! Seeded Monte Carlo estimates of the Good-Turing error `G0 - M0`.
//!
//! Trial `i` of a run with seed `s` draws from its own ChaCha8 stream seeded
//! with [`trial_seed`]`(s, i)`, so results do not depend on how rayon schedules
//! the trials.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chains::{
    build_family, stationary_distribution, Distribution, Family, RowClassChain, Run,
};
use crate::error::{Error, Result};
use crate::fit::{log_log_fit, LogLogFit};

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `i` in a run seeded with `seed`.
pub fn trial_seed(seed: u64, i: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ i)
}

/// One sampled path with its occupancy counts.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRun {
    pub seq: Vec<usize>,
    pub occupancy: BTreeMap<usize, usize>,
    pub phi1: usize,
}

impl SampleRun {
    pub fn from_seq(seq: Vec<usize>) -> Self {
        let mut occupancy = BTreeMap::new();
        for &x in &seq {
            *occupancy.entry(x).or_insert(0) += 1;
        }
        let phi1 = occupancy.values().filter(|&&c| c == 1).count();
        Self {
            seq,
            occupancy,
            phi1,
        }
    }

    pub fn n(&self) -> usize {
        self.seq.len()
    }

    /// Number of states seen exactly `l` times.
    pub fn phi(&self, l: usize) -> usize {
        self.occupancy.values().filter(|&&c| c == l).count()
    }
}

/// Inverse-CDF table over a list of constant-mass runs.
#[derive(Clone, Debug)]
struct RunTable {
    runs: Vec<Run>,
    cum: Vec<f64>,
}

impl RunTable {
    fn new(runs: Vec<Run>) -> Self {
        let mut acc = 0.0;
        let cum = runs
            .iter()
            .map(|r| {
                acc += r.len as f64 * r.mass;
                acc
            })
            .collect();
        Self { runs, cum }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cum.last().expect("non-empty run table");
        let u = rng.random::<f64>() * total;
        let i = self
            .cum
            .partition_point(|&c| c <= u)
            .min(self.runs.len() - 1);
        let run = &self.runs[i];
        let before = if i == 0 { 0.0 } else { self.cum[i - 1] };
        let offset = (((u - before) / run.mass) as usize).min(run.len - 1);
        run.start + offset
    }
}

struct Sampler<'a> {
    chain: &'a RowClassChain,
    initial: RunTable,
    classes: Vec<RunTable>,
}

impl<'a> Sampler<'a> {
    fn new(chain: &'a RowClassChain, pi: &Distribution) -> Result<Self> {
        if pi.len() != chain.num_states() {
            return Err(Error::InvalidDistribution(format!(
                "stationary distribution has {} entries for {} states",
                pi.len(),
                chain.num_states()
            )));
        }
        Ok(Self {
            chain,
            initial: RunTable::new(pi.to_runs()),
            classes: chain
                .classes()
                .iter()
                .map(|c| RunTable::new(c.runs().to_vec()))
                .collect(),
        })
    }

    fn walk<R: Rng>(&self, rng: &mut R, n: usize, mut visit: impl FnMut(usize)) {
        let mut x = self.initial.sample(rng);
        visit(x);
        for _ in 1..n {
            x = self.classes[self.chain.class_of(x)].sample(rng);
            visit(x);
        }
    }
}

/// Draws `X_1 ~ pi` and `n - 1` transitions.
pub fn sample_chain(
    chain: &RowClassChain,
    pi: &Distribution,
    n: usize,
    seed: u64,
) -> Result<SampleRun> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample length must be at least 1".into(),
        ));
    }
    let sampler = Sampler::new(chain, pi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seq = Vec::with_capacity(n);
    sampler.walk(&mut rng, n, |x| seq.push(x));
    Ok(SampleRun::from_seq(seq))
}

/// `phi_1 / n`.
pub fn good_turing(run: &SampleRun) -> f64 {
    run.phi1 as f64 / run.n() as f64
}

/// Stationary mass of the states that never appear in the run.
pub fn missing_mass(run: &SampleRun, pi: &Distribution) -> f64 {
    let seen: f64 = run.occupancy.keys().map(|&x| pi[x]).sum();
    (1.0 - seen).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimResult {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    /// Mean of `G0 - M0`.
    pub mean_error: f64,
    /// Mean of `(G0 - M0)^2`.
    pub mse: f64,
    pub stderr_me: f64,
    pub stderr_mse: f64,
}

/// Per-trial scratch space: visit counts plus the list of touched states.
struct Scratch {
    counts: Vec<u32>,
    touched: Vec<usize>,
}

fn trial_error(
    sampler: &Sampler,
    pi: &Distribution,
    n: usize,
    seed: u64,
    scratch: &mut Scratch,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let Scratch { counts, touched } = scratch;
    sampler.walk(&mut rng, n, |x| {
        if counts[x] == 0 {
            touched.push(x);
        }
        counts[x] += 1;
    });
    let mut phi1 = 0usize;
    let mut seen = 0.0;
    for &x in touched.iter() {
        if counts[x] == 1 {
            phi1 += 1;
        }
        seen += pi[x];
        counts[x] = 0;
    }
    touched.clear();
    phi1 as f64 / n as f64 - (1.0 - seen).max(0.0)
}

/// Monte Carlo mean and mean square of `G0 - M0` over `trials` paths of length `n`.
pub fn estimate_bias_mse(
    chain: &RowClassChain,
    pi: &Distribution,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<SimResult> {
    if trials < 2 {
        return Err(Error::InvalidParameter("need at least 2 trials".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample length must be at least 1".into(),
        ));
    }
    let sampler = Sampler::new(chain, pi)?;
    let k = chain.num_states();
    let errors: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map_init(
            || Scratch {
                counts: vec![0; k],
                touched: Vec::with_capacity(n.min(k)),
            },
            |scratch, i| trial_error(&sampler, pi, n, trial_seed(seed, i), scratch),
        )
        .collect();

    let t = trials as f64;
    let mean_error = errors.iter().sum::<f64>() / t;
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / t;
    let var_e = errors.iter().map(|e| (e - mean_error).powi(2)).sum::<f64>() / (t - 1.0);
    let var_sq = errors.iter().map(|e| (e * e - mse).powi(2)).sum::<f64>() / (t - 1.0);
    Ok(SimResult {
        n,
        trials,
        seed,
        mean_error,
        mse,
        stderr_me: (var_e / t).sqrt(),
        stderr_mse: (var_sq / t).sqrt(),
    })
}

/// Least-squares fit of `ln value` on `ln n`.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<LogLogFit> {
    log_log_fit(points)
}

/// Simulation of one family on a grid of `n` with `K = n`.
///
/// The seed for size `n` is `trial_seed(seed, n)`, so adding grid points does
/// not change the others.
pub fn simulate_family(
    family: Family,
    kappa: f64,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<SimResult>> {
    n_grid
        .iter()
        .map(|&n| {
            let chain = build_family(family, n, kappa, 2, 0.5)?;
            let pi = stationary_distribution(&chain)?;
            estimate_bias_mse(&chain, &pi, n, trials, trial_seed(seed, n as u64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{
        build_iid, build_periodic_kronecker, build_reducible_two_block,
        stationary_distribution_with,
    };

    #[test]
    fn splitmix_reference_values() {
        // first outputs of the reference generator seeded with 0
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn estimator_primitives() {
        let run = SampleRun::from_seq(vec![1, 2, 3]);
        assert_eq!(good_turing(&run), 1.0);
        assert_eq!(good_turing(&SampleRun::from_seq(vec![1, 1, 1])), 0.0);
        assert!((good_turing(&SampleRun::from_seq(vec![1, 1, 2])) - 1.0 / 3.0).abs() < 1e-15);

        let pi = Distribution::uniform(4);
        assert_eq!(missing_mass(&SampleRun::from_seq(vec![1, 1, 1]), &pi), 0.75);
        assert_eq!(
            missing_mass(&SampleRun::from_seq(vec![0, 1, 2, 3]), &pi),
            0.0
        );
    }

    #[test]
    fn iid_frequency() {
        let chain = build_iid(&Distribution::uniform(2)).unwrap();
        let pi = Distribution::uniform(2);
        let n = 100_000;
        let run = sample_chain(&chain, &pi, n, 7).unwrap();
        let ones = run.occupancy.get(&1).copied().unwrap_or(0) as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((ones - n as f64 / 2.0).abs() < 4.0 * sigma);
        assert_eq!(run.occupancy.values().sum::<usize>(), n);
    }

    #[test]
    fn periodic_alternates_blocks() {
        let chain = build_periodic_kronecker(8, 2).unwrap();
        let pi = stationary_distribution(&chain).unwrap();
        let run = sample_chain(&chain, &pi, 200, 3).unwrap();
        for pair in run.seq.windows(2) {
            assert_ne!(pair[0] / 4, pair[1] / 4);
        }
    }

    #[test]
    fn reducible_misses_half() {
        let chain = build_reducible_two_block(16).unwrap();
        let pi = stationary_distribution_with(&chain, true).unwrap();
        let run = sample_chain(&chain, &pi, 2000, 11).unwrap();
        assert!((missing_mass(&run, &pi) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn phi_consistency() {
        let chain = build_iid(&Distribution::uniform(10)).unwrap();
        let run = sample_chain(&chain, &Distribution::uniform(10), 37, 5).unwrap();
        let total: usize = (1..=run.n()).map(|l| l * run.phi(l)).sum();
        assert_eq!(total, 37);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let chain = crate::chains::build_p1(64, 8).unwrap();
        let pi = stationary_distribution(&chain).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_bias_mse(&chain, &pi, 64, 500, 99).unwrap())
        };
        let a = run(1);
        let b = run(8);
        assert_eq!(a.mean_error.to_bits(), b.mean_error.to_bits());
        assert_eq!(a.mse.to_bits(), b.mse.to_bits());
        assert_eq!(
            sample_chain(&chain, &pi, 50, 4).unwrap(),
            sample_chain(&chain, &pi, 50, 4).unwrap()
        );
    }

    #[test]
    fn mse_dominates_squared_mean() {
        let chain = build_iid(&Distribution::uniform(32)).unwrap();
        let r = estimate_bias_mse(&chain, &Distribution::uniform(32), 32, 2000, 1).unwrap();
        assert!(r.mse >= r.mean_error * r.mean_error);
    }
}
