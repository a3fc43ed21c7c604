use nalgebra::DMatrix;

use super::{Distribution, RowClassChain};
use crate::error::{Error, Result};

/// Singular values of `Q' - I` below this (relative) count as null directions.
const NULL_TOL: f64 = 1e-10;
const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;

/// Unique stationary distribution of an irreducible chain.
pub fn stationary_distribution(chain: &RowClassChain) -> Result<Distribution> {
    stationary_distribution_with(chain, false)
}

/// Stationary distribution; with `allow_reducible` a chain with several
/// stationary distributions returns the limit of the lazy chain started from
/// the uniform distribution instead of failing.
///
/// Solved on the quotient over row classes: if `w_c` is the stationary mass of
/// class `c`, then `w = wQ` with `Q[c'][c]` the mass row class `c'` puts on the
/// states of class `c`, and `pi = sum_c w_c R_c`.
pub fn stationary_distribution_with(
    chain: &RowClassChain,
    allow_reducible: bool,
) -> Result<Distribution> {
    let q = quotient_matrix(chain);
    let c = q.nrows();
    let a = q.transpose() - DMatrix::<f64>::identity(c, c);
    let svd = a.svd(false, true);
    let sv = &svd.singular_values;
    let scale = sv[0].max(1.0);
    let null_dim = sv.iter().filter(|&&s| s <= NULL_TOL * scale).count().max(1);

    let weights = if null_dim == 1 {
        let v_t = svd.v_t.expect("right singular vectors requested");
        let null: Vec<f64> = v_t.row(c - 1).iter().copied().collect();
        let total: f64 = null.iter().sum();
        null.iter()
            .map(|x| (x / total).max(0.0))
            .collect::<Vec<_>>()
    } else if allow_reducible {
        lazy_limit(chain, &q)
    } else {
        return Err(Error::NoUniqueStationary);
    };

    let pi = lift(chain, &weights);
    let residual = stationarity_residual(chain, &pi);
    if residual > STATIONARY_RESIDUAL_TOL {
        return Err(Error::Decomposition(format!(
            "stationary residual {residual:.3e} exceeds {STATIONARY_RESIDUAL_TOL:.0e}"
        )));
    }
    Distribution::new(pi)
}

/// `||pi P - pi||_1`, evaluated on atoms.
pub(crate) fn stationarity_residual(chain: &RowClassChain, pi: &[f64]) -> f64 {
    let mut class_weight = vec![0.0; chain.num_classes()];
    for a in chain.atoms() {
        class_weight[a.class] += pi[a.start] * a.len as f64;
    }
    chain
        .atoms()
        .iter()
        .map(|a| {
            let flowed: f64 = class_weight
                .iter()
                .zip(&a.col_mass)
                .map(|(w, m)| w * m)
                .sum();
            a.len as f64 * (flowed - pi[a.start]).abs()
        })
        .sum()
}

fn quotient_matrix(chain: &RowClassChain) -> DMatrix<f64> {
    let c = chain.num_classes();
    let mut q = DMatrix::zeros(c, c);
    for a in chain.atoms() {
        for (from, m) in a.col_mass.iter().enumerate() {
            q[(from, a.class)] += a.len as f64 * m;
        }
    }
    q
}

fn lift(chain: &RowClassChain, weights: &[f64]) -> Vec<f64> {
    let per_atom: Vec<f64> = chain
        .atoms()
        .iter()
        .map(|a| weights.iter().zip(&a.col_mass).map(|(w, m)| w * m).sum())
        .collect();
    let mut pi = chain.expand_atoms(&per_atom);
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    pi
}

fn lazy_limit(chain: &RowClassChain, q: &DMatrix<f64>) -> Vec<f64> {
    let c = q.nrows();
    let k = chain.num_states() as f64;
    let mut w = vec![0.0; c];
    for a in chain.atoms() {
        w[a.class] += a.len as f64 / k;
    }
    for _ in 0..1_000_000 {
        let next: Vec<f64> = (0..c)
            .map(|j| 0.5 * w[j] + 0.5 * (0..c).map(|i| w[i] * q[(i, j)]).sum::<f64>())
            .collect();
        let diff: f64 = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).sum();
        w = next;
        if diff < 1e-15 {
            break;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{
        build_iid, build_p1, build_periodic_kronecker, build_reducible_two_block, build_sticky,
    };

    /// Dense left-eigenvector solve: replace one equation of `(P' - I) pi = 0`
    /// with the normalization and solve by LU.
    fn dense_stationary(chain: &RowClassChain) -> Vec<f64> {
        let p = chain.to_dense().unwrap();
        let k = p.len();
        let mut a = DMatrix::from_fn(k, k, |i, j| p[j][i] - if i == j { 1.0 } else { 0.0 });
        let mut b = nalgebra::DVector::zeros(k);
        for j in 0..k {
            a[(k - 1, j)] = 1.0;
        }
        b[k - 1] = 1.0;
        a.lu().solve(&b).unwrap().iter().copied().collect()
    }

    #[test]
    fn periodic_is_uniform() {
        let chain = build_periodic_kronecker(12, 3).unwrap();
        let pi = stationary_distribution(&chain).unwrap();
        assert!(pi.probs().iter().all(|p| (p - 1.0 / 12.0).abs() < 1e-14));
    }

    #[test]
    fn iid_returns_its_row() {
        let base = Distribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let pi = stationary_distribution(&build_iid(&base).unwrap()).unwrap();
        for (a, b) in pi.probs().iter().zip(base.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn p1_matches_dense_solve() {
        let chain = build_p1(8, 4).unwrap();
        let pi = stationary_distribution(&chain).unwrap();
        let dense = dense_stationary(&chain);
        for (a, b) in pi.probs().iter().zip(&dense) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(stationarity_residual(&chain, pi.probs()) <= 1e-10);
    }

    #[test]
    fn sticky_matches_dense_solve() {
        let chain = build_sticky(5, 0.3).unwrap();
        let pi = stationary_distribution(&chain).unwrap();
        let dense = dense_stationary(&chain);
        for (a, b) in pi.probs().iter().zip(&dense) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn reducible_needs_flag() {
        let chain = build_reducible_two_block(6).unwrap();
        assert!(matches!(
            stationary_distribution(&chain),
            Err(Error::NoUniqueStationary)
        ));
        let pi = stationary_distribution_with(&chain, true).unwrap();
        assert!(pi.probs().iter().all(|p| (p - 1.0 / 6.0).abs() < 1e-15));
    }
}
