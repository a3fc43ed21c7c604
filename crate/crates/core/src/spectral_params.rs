//! The three chain parameters every bound is written in: the spectral gap
//! `beta = 1 - lambda2`, the maximum TV distance `theta` between two rows, and
//! the norm `lambda_pi` of `P - 1 pi` on `L2(pi)`.

use serde::Serialize;

use crate::chains::{
    build_family, rank2_decompose, DecompositionKind, Distribution, Family, Rank2Decomposition,
    RowClassChain,
};
use crate::error::{Error, Result};
use crate::fit::{log_log_fit, LogLogFit};

/// Parameters whose magnitude stays below this are reported as zero.
pub const ZERO_TOL: f64 = 1e-12;
const POWER_REL_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralParams {
    pub beta: f64,
    pub theta: f64,
    pub lambda_pi: f64,
}

impl SpectralParams {
    pub fn compute(chain: &RowClassChain, decomp: &Rank2Decomposition) -> Result<Self> {
        Ok(Self {
            beta: spectral_gap(decomp),
            theta: max_tv_gap(chain),
            lambda_pi: weighted_norm_lambda_pi(decomp)?,
        })
    }

    pub fn theta_bar(&self) -> f64 {
        snap_zero(1.0 - self.theta)
    }

    pub fn lambda_pi_bar(&self) -> f64 {
        snap_zero(1.0 - self.lambda_pi)
    }
}

fn snap_zero(x: f64) -> f64 {
    if x.abs() <= ZERO_TOL {
        0.0
    } else {
        x
    }
}

/// `1 - lambda2`, clamped to `[0, 2]`.
pub fn spectral_gap(decomp: &Rank2Decomposition) -> f64 {
    let beta = snap_zero(1.0 - decomp.lambda2);
    if (beta - 2.0).abs() <= ZERO_TOL {
        2.0
    } else {
        beta.clamp(0.0, 2.0)
    }
}

/// Largest TV distance between two distinct row classes.
pub fn max_tv_gap(chain: &RowClassChain) -> f64 {
    let atoms = chain.atoms();
    let c = chain.num_classes();
    let mut theta: f64 = 0.0;
    for i in 0..c {
        for j in i + 1..c {
            let tv: f64 = 0.5
                * atoms
                    .iter()
                    .map(|a| a.len as f64 * (a.col_mass[i] - a.col_mass[j]).abs())
                    .sum::<f64>();
            theta = theta.max(tv);
        }
    }
    let theta = theta.clamp(0.0, 1.0);
    if 1.0 - theta <= ZERO_TOL {
        1.0
    } else {
        snap_zero(theta)
    }
}

/// Closed form of the `L2(pi)` operator norm of `P - 1 pi = d v u'`:
/// `|d| * ||v||_pi * sqrt(sum_j u_j^2 / pi_j)`.
pub fn weighted_norm_lambda_pi(decomp: &Rank2Decomposition) -> Result<f64> {
    if decomp.kind == DecompositionKind::Iid {
        return Ok(0.0);
    }
    let mut v_norm = 0.0;
    let mut u_dual = 0.0;
    for g in decomp.groups() {
        let size = g.size as f64;
        // zero-mass coordinates are null in L2(pi)
        if g.pi > 0.0 {
            v_norm += size * g.pi * g.v * g.v;
            u_dual += size * g.u * g.u / g.pi;
        }
    }
    let norm = decomp.d2().abs() * v_norm.sqrt() * u_dual.sqrt();
    // P - 1 pi = P (I - 1 pi) is a contraction on L2(pi)
    let norm = norm.min(1.0);
    Ok(if 1.0 - norm <= ZERO_TOL { 1.0 } else { norm })
}

/// Power iteration on `T* T` with `T = P - 1 pi` acting on `L2(pi)`.
///
/// `T* T` maps into functions that are constant on atoms, so the iteration runs
/// on per-atom values. Requires a strictly positive `pi`.
pub fn weighted_norm_numeric(chain: &RowClassChain, pi: &Distribution) -> Result<f64> {
    if pi.len() != chain.num_states() {
        return Err(Error::InvalidParameter(
            "distribution and chain sizes differ".into(),
        ));
    }
    if let Some(x) = pi.probs().iter().position(|&p| p <= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "weighted norm needs pi > 0; state {x} has zero mass"
        )));
    }
    let atoms = chain.atoms();
    let pi_a: Vec<f64> = atoms.iter().map(|a| pi[a.start]).collect();
    let len: Vec<f64> = atoms.iter().map(|a| a.len as f64).collect();
    let ncls = chain.num_classes();
    let mut class_w = vec![0.0; ncls];
    for (a, p) in atoms.iter().zip(&pi_a) {
        class_w[a.class] += a.len as f64 * p;
    }

    let apply_t = |z: &[f64]| -> Vec<f64> {
        (0..ncls)
            .map(|c| {
                atoms
                    .iter()
                    .zip(z)
                    .zip(&pi_a)
                    .map(|((a, zj), pj)| a.len as f64 * (a.col_mass[c] - pj) * zj)
                    .sum()
            })
            .collect()
    };
    let apply_t_adj = |y: &[f64]| -> Vec<f64> {
        atoms
            .iter()
            .zip(&pi_a)
            .map(|(a, pj)| {
                (0..ncls)
                    .map(|c| class_w[c] * y[c] * (a.col_mass[c] - pj))
                    .sum::<f64>()
                    / pj
            })
            .collect()
    };
    let pi_norm = |z: &[f64]| -> f64 {
        z.iter()
            .zip(&pi_a)
            .zip(&len)
            .map(|((zj, pj), l)| l * pj * zj * zj)
            .sum::<f64>()
            .sqrt()
    };

    // deterministic, non-degenerate start
    let mut state = 0x9E37_79B9_7F4A_7C15_u64;
    let mut z: Vec<f64> = atoms
        .iter()
        .map(|_| {
            state = crate::simulate::splitmix64(state);
            0.5 + (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect();
    let n0 = pi_norm(&z);
    z.iter_mut().for_each(|x| *x /= n0);

    let mut prev = f64::NAN;
    let mut gap = f64::INFINITY;
    for _ in 0..POWER_MAX_ITERS {
        let tz = apply_t(&z);
        let sigma = tz
            .iter()
            .zip(&class_w)
            .map(|(y, w)| w * y * y)
            .sum::<f64>()
            .sqrt();
        if sigma == 0.0 {
            return Ok(0.0);
        }
        gap = ((sigma - prev) / sigma).abs();
        if gap <= POWER_REL_TOL {
            return Ok(sigma);
        }
        prev = sigma;
        let mut next = apply_t_adj(&tz);
        let nn = pi_norm(&next);
        if nn == 0.0 {
            return Ok(0.0);
        }
        next.iter_mut().for_each(|x| *x /= nn);
        z = next;
    }
    Err(Error::NoConvergence {
        iterations: POWER_MAX_ITERS,
        gap,
    })
}

/// Power-law behavior of one parameter across a grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TermFit {
    /// Identically zero over the grid.
    Zero,
    Slope(LogLogFit),
}

impl TermFit {
    pub fn slope(&self) -> Option<f64> {
        match self {
            TermFit::Zero => None,
            TermFit::Slope(f) => Some(f.slope),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, TermFit::Zero)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominantTermRow {
    pub n: usize,
    pub k1: usize,
    pub params: SpectralParams,
    pub theta_bar: f64,
    pub lambda_pi_bar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominantTermFit {
    pub family: Family,
    pub kappa: f64,
    pub rows: Vec<DominantTermRow>,
    pub beta: TermFit,
    pub theta_bar: TermFit,
    pub lambda_pi_bar: TermFit,
}

/// Log-log slopes of `beta`, `1 - theta` and `1 - lambda_pi` against `n` for
/// `K = n`, `K1 ~ n^kappa`.
pub fn dominant_term_fit(family: Family, kappa: f64, n_grid: &[usize]) -> Result<DominantTermFit> {
    if !family.uses_k1() {
        return Err(Error::InvalidParameter(format!(
            "family {family} has no connector parameter"
        )));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let chain = build_family(family, n, kappa, 2, 0.5)?;
        let decomp = rank2_decompose(&chain)?;
        let params = SpectralParams::compute(&chain, &decomp)?;
        rows.push(DominantTermRow {
            n,
            k1: crate::chains::k1_for_kappa(n, kappa),
            theta_bar: params.theta_bar(),
            lambda_pi_bar: params.lambda_pi_bar(),
            params,
        });
    }
    let term = |f: &dyn Fn(&DominantTermRow) -> f64| -> Result<TermFit> {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, f(r))).collect();
        if pts.iter().all(|p| p.1.abs() <= ZERO_TOL) {
            Ok(TermFit::Zero)
        } else {
            log_log_fit(&pts).map(TermFit::Slope)
        }
    };
    Ok(DominantTermFit {
        family,
        kappa,
        beta: term(&|r| r.params.beta)?,
        theta_bar: term(&|r| r.theta_bar)?,
        lambda_pi_bar: term(&|r| r.lambda_pi_bar)?,
        rows,
    })
}
