//! Slow reference computations used to check the 2x2 machinery.

use nalgebra::{DMatrix, DVector};

use super::OccupancyTail;
use crate::chains::{stationary_distribution, RowClassChain, DENSE_MAX};
use crate::error::{Error, Result};

/// Largest number of sequences enumerated by the brute-force oracles.
pub const ENUMERATION_MAX: u64 = 10_000_000;
pub const TRANSFER_MAX_STATES: usize = 4096;
pub const TRANSFER_MAX_N: usize = 1_000_000;

/// Stationary distribution from a dense LU solve of `(P' - I) pi = 0` with one
/// equation replaced by `sum pi = 1`.
pub fn dense_stationary(chain: &RowClassChain) -> Result<Vec<f64>> {
    let p = chain.to_dense()?;
    let k = p.len();
    let mut a = DMatrix::from_fn(k, k, |i, j| p[j][i] - if i == j { 1.0 } else { 0.0 });
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(k);
    b[k - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or(Error::NoUniqueStationary)?;
    Ok(pi.iter().copied().collect())
}

fn check_enumeration(k: usize, n: usize) -> Result<()> {
    let count = (k as u64)
        .checked_pow(n as u32)
        .filter(|&c| c <= ENUMERATION_MAX);
    if count.is_none() {
        return Err(Error::GuardExceeded(format!(
            "{k}^{n} sequences exceed {ENUMERATION_MAX}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    Ok(())
}

/// Called with (path probability, visit counts, singletons, missing mass).
type Visit<'a> = dyn FnMut(f64, &[usize], usize, f64) + 'a;

struct Enumerator<'a> {
    p: Vec<Vec<f64>>,
    pi: Vec<f64>,
    n: usize,
    counts: Vec<usize>,
    phi1: usize,
    missing: f64,
    visit: &'a mut Visit<'a>,
}

impl Enumerator<'_> {
    fn enter(&mut self, x: usize) {
        self.counts[x] += 1;
        match self.counts[x] {
            1 => {
                self.phi1 += 1;
                self.missing -= self.pi[x];
            }
            2 => self.phi1 -= 1,
            _ => {}
        }
    }

    fn leave(&mut self, x: usize) {
        match self.counts[x] {
            1 => {
                self.phi1 -= 1;
                self.missing += self.pi[x];
            }
            2 => self.phi1 += 1,
            _ => {}
        }
        self.counts[x] -= 1;
    }

    fn walk(&mut self, depth: usize, last: usize, prob: f64) {
        if depth == self.n {
            (self.visit)(prob, &self.counts, self.phi1, self.missing);
            return;
        }
        for y in 0..self.pi.len() {
            let q = self.p[last][y];
            if q == 0.0 {
                continue;
            }
            self.enter(y);
            self.walk(depth + 1, y, prob * q);
            self.leave(y);
        }
    }

    fn run(&mut self) {
        for x in 0..self.pi.len() {
            if self.pi[x] == 0.0 {
                continue;
            }
            self.enter(x);
            self.walk(1, x, self.pi[x]);
            self.leave(x);
        }
    }
}

fn enumerate(chain: &RowClassChain, n: usize, visit: &mut Visit<'_>) -> Result<()> {
    let k = chain.num_states();
    check_enumeration(k, n)?;
    if k > DENSE_MAX {
        return Err(Error::GuardExceeded(format!(
            "{k} states exceed the dense limit"
        )));
    }
    let pi = dense_stationary(chain)?;
    let mut e = Enumerator {
        p: chain.to_dense()?,
        pi,
        n,
        counts: vec![0; k],
        phi1: 0,
        missing: 1.0,
        visit,
    };
    e.run();
    Ok(())
}

/// `E[G0 - M0]` by summing over all `K^n` sequences.
pub fn brute_force_bias(chain: &RowClassChain, n: usize) -> Result<f64> {
    let mut total = 0.0;
    let nf = n as f64;
    enumerate(chain, n, &mut |prob, _, phi1, missing| {
        total += prob * (phi1 as f64 / nf - missing);
    })?;
    Ok(total)
}

/// `Pr(F_x = 0)` and `Pr(F_x = 1)` by summing over all `K^n` sequences.
pub fn brute_force_tail(chain: &RowClassChain, x: usize, n: usize) -> Result<OccupancyTail> {
    if x >= chain.num_states() {
        return Err(Error::InvalidParameter(format!("state {x} out of range")));
    }
    let (mut p0, mut p1) = (0.0, 0.0);
    enumerate(chain, n, &mut |prob, counts, _, _| match counts[x] {
        0 => p0 += prob,
        1 => p1 += prob,
        _ => {}
    })?;
    Ok(OccupancyTail { p0, p1 })
}

/// `Pr(F_x = 0)` and `Pr(F_x = 1)` by a forward recursion over
/// (current state, visits to `x` so far in {0, 1}).
pub fn transfer_matrix_tail(chain: &RowClassChain, x: usize, n: usize) -> Result<OccupancyTail> {
    let k = chain.num_states();
    if k > TRANSFER_MAX_STATES || n > TRANSFER_MAX_N {
        return Err(Error::GuardExceeded(format!(
            "transfer recursion limited to K <= {TRANSFER_MAX_STATES}, n <= {TRANSFER_MAX_N}"
        )));
    }
    if x >= k {
        return Err(Error::InvalidParameter(format!("state {x} out of range")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let pi = stationary_distribution(chain)?;
    let mut f0: Vec<f64> = pi.probs().to_vec();
    f0[x] = 0.0;
    let mut f1 = vec![0.0; k];
    f1[x] = pi[x];

    let step = |f: &[f64]| -> Vec<f64> {
        let mut class_mass = vec![0.0; chain.num_classes()];
        for (i, fi) in f.iter().enumerate() {
            class_mass[chain.class_of(i)] += fi;
        }
        let mut out = vec![0.0; k];
        for a in chain.atoms() {
            let val: f64 = class_mass.iter().zip(&a.col_mass).map(|(w, m)| w * m).sum();
            out[a.start..a.start + a.len]
                .iter_mut()
                .for_each(|o| *o = val);
        }
        out
    };
    for _ in 1..n {
        let next0 = step(&f0);
        let mut next1 = step(&f1);
        next1[x] = next0[x];
        f0 = next0;
        f0[x] = 0.0;
        f1 = next1;
    }
    Ok(OccupancyTail {
        p0: f0.iter().sum(),
        p1: f1.iter().sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{build_iid, build_periodic_kronecker, build_sticky, Distribution};

    #[test]
    fn iid_two_states() {
        let chain = build_iid(&Distribution::new(vec![0.3, 0.7]).unwrap()).unwrap();
        let want: f64 = [0.3f64, 0.7]
            .iter()
            .map(|p| p * p * (1.0 - p).powi(2))
            .sum();
        assert!((brute_force_bias(&chain, 3).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn sticky_bias_is_finite() {
        let chain = build_sticky(2, 0.1).unwrap();
        let b = brute_force_bias(&chain, 5).unwrap();
        assert!(b.is_finite() && b.abs() < 1.0);
    }

    #[test]
    fn tails_agree_with_enumeration() {
        let chain = build_sticky(3, 0.4).unwrap();
        for x in 0..3 {
            let a = brute_force_tail(&chain, x, 6).unwrap();
            let b = transfer_matrix_tail(&chain, x, 6).unwrap();
            assert!((a.p0 - b.p0).abs() < 1e-14 && (a.p1 - b.p1).abs() < 1e-14);
        }
    }

    #[test]
    fn iid_transfer_is_binomial() {
        let chain = build_iid(&Distribution::uniform(5)).unwrap();
        let t = transfer_matrix_tail(&chain, 1, 12).unwrap();
        assert!((t.p0 - 0.8f64.powi(12)).abs() < 1e-15);
        assert!((t.p1 - 12.0 * 0.2 * 0.8f64.powi(11)).abs() < 1e-15);
    }

    #[test]
    fn periodic_phase() {
        // on the period-2 chain x is visited only at steps of one parity
        let chain = build_periodic_kronecker(4, 2).unwrap();
        let t = brute_force_tail(&chain, 0, 4).unwrap();
        // either phase gives two independent chances of hitting x w.p. 1/2
        assert!((t.p0 - 0.25).abs() < 1e-15);
        assert!((t.p1 - 0.5).abs() < 1e-15);
        let d = transfer_matrix_tail(&chain, 0, 4).unwrap();
        assert!((t.p0 - d.p0).abs() < 1e-15 && (t.p1 - d.p1).abs() < 1e-15);
    }

    #[test]
    fn guard() {
        let chain = build_iid(&Distribution::uniform(10)).unwrap();
        assert!(matches!(
            brute_force_bias(&chain, 8),
            Err(Error::GuardExceeded(_))
        ));
    }
}
