//! Exact occupancy tails, `Gamma_x` and Good-Turing bias for rank-2 chains.
//!
//! For a state `x`, the probability of avoiding `x` evolves through the 2x2
//! matrix `M = S~x R D`:
//!
//! ```text
//! diagonalizable:      M = [[1 - pi_x, -d pi_x v_x], [-u_x, d (1 - v_x u_x)]],  d = lambda2
//! non-diagonalizable:  M = [[1 - pi_x,   -pi_x v_x], [-u_x,     -v_x u_x  ]]
//! ```
//!
//! With `L = [1, d v_x]` and `g(m) = L M^(m-1) e1` (the probability of not
//! returning to `x` in `m - 1` steps after leaving it):
//!
//! ```text
//! Pr(F_x = 0) = (M^n)_11
//! Pr(F_x = 1) = pi_x sum_{m=1}^{n} g(m) g(n + 1 - m)
//! E[G0 - M0]  = sum_x [Pr(F_x = 1) / n - pi_x Pr(F_x = 0)]
//! ```
//!
//! Sums run over groups of states sharing `(pi_x, v_x, u_x)`.

mod oracle;
mod two_by_two;

pub use oracle::{brute_force_bias, brute_force_tail, dense_stationary, transfer_matrix_tail};
pub use two_by_two::{block_pow, cross_power_sum, TwoByTwo, EIGEN_POW_MIN_GAP};

use rayon::prelude::*;
use serde::Serialize;

use crate::chains::{DecompositionKind, Rank2Decomposition, StateGroup};
use crate::error::{Error, Result};

/// Closed-form tails are used only when the eigenvalue gap of `M` is at least
/// this large ...
pub const TAIL_CLOSED_FORM_MIN_GAP: f64 = 1e-4;
/// ... and the eigen-coefficients `|A| + |B|` of `g` stay below this.
pub const TAIL_CLOSED_FORM_MAX_COEF: f64 = 30.0;
/// Smallest eigenvalue gap for which the closed form of `Gamma_x` is used.
pub const GAMMA_CLOSED_FORM_MIN_GAP: f64 = 1e-3;

/// Spectral data of `M` for one state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PerStateSpectral {
    pub x: usize,
    pub pi_x: f64,
    pub v_x: f64,
    pub u_x: f64,
    pub w_x: f64,
    /// `M11 - M22`.
    pub s_x: f64,
    /// Nonnegative eigenvalue gap (0 for a complex pair).
    pub delta_x: f64,
    pub lam1: f64,
    pub lam2: f64,
    /// `false` when `M` has complex eigenvalues (then `lam1`, `lam2` hold the
    /// real part).
    pub real_spectrum: bool,
    /// Coefficient of `v u'` in `P - 1 pi`.
    pub d2: f64,
    /// Spectral gap of the chain.
    pub beta: f64,
    pub kind: DecompositionKind,
}

impl PerStateSpectral {
    pub fn new(decomp: &Rank2Decomposition, x: usize) -> Result<Self> {
        if x >= decomp.num_states() {
            return Err(Error::InvalidParameter(format!("state {x} out of range")));
        }
        let g = decomp.group_of(x);
        Ok(Self::from_group(decomp, g, x))
    }

    fn from_group(decomp: &Rank2Decomposition, g: &StateGroup, x: usize) -> Self {
        let d2 = decomp.d2();
        let w = g.v * g.u;
        let m = srd_from_parts(decomp.kind, d2, g.pi, g.v, g.u);
        let disc = m.discriminant();
        let s = m.a11 - m.a22;
        let t = m.trace();
        let (delta, real) = if disc >= 0.0 {
            (disc.sqrt(), true)
        } else {
            (0.0, false)
        };
        Self {
            x,
            pi_x: g.pi,
            v_x: g.v,
            u_x: g.u,
            w_x: w,
            s_x: s,
            delta_x: delta,
            lam1: 0.5 * (t + delta),
            lam2: 0.5 * (t - delta),
            real_spectrum: real,
            d2,
            beta: decomp.beta(),
            kind: decomp.kind,
        }
    }

    pub fn srd(&self) -> TwoByTwo {
        srd_from_parts(self.kind, self.d2, self.pi_x, self.v_x, self.u_x)
    }

    /// `g(m) = A lam1^(m-1) + B lam2^(m-1)`; `None` when this expansion is
    /// badly conditioned.
    fn tail_coefficients(&self) -> Option<(f64, f64)> {
        if !self.real_spectrum || self.delta_x < TAIL_CLOSED_FORM_MIN_GAP {
            return None;
        }
        let a =
            (self.s_x + self.delta_x) / (2.0 * self.delta_x) - self.d2 * self.w_x / self.delta_x;
        let b = 1.0 - a;
        (a.abs() + b.abs() <= TAIL_CLOSED_FORM_MAX_COEF).then_some((a, b))
    }
}

fn srd_from_parts(kind: DecompositionKind, d2: f64, pi: f64, v: f64, u: f64) -> TwoByTwo {
    let w = v * u;
    match kind {
        DecompositionKind::NonDiagonalizable => TwoByTwo::new(1.0 - pi, -pi * v, -u, -w),
        _ => TwoByTwo::new(1.0 - pi, -d2 * pi * v, -u, d2 * (1.0 - w)),
    }
}

/// `M = S~x R D` for state `x`.
pub fn srd_matrix(decomp: &Rank2Decomposition, x: usize) -> Result<TwoByTwo> {
    if x >= decomp.num_states() {
        return Err(Error::InvalidParameter(format!("state {x} out of range")));
    }
    let g = decomp.group_of(x);
    Ok(srd_from_parts(decomp.kind, decomp.d2(), g.pi, g.v, g.u))
}

/// `M^l` by repeated squaring.
pub fn srd_power(m: &TwoByTwo, l: u64) -> TwoByTwo {
    m.pow(l)
}

fn check_state(decomp: &Rank2Decomposition, x: usize, n: usize, min_n: usize) -> Result<()> {
    if x >= decomp.num_states() {
        return Err(Error::InvalidParameter(format!("state {x} out of range")));
    }
    if n < min_n {
        return Err(Error::InvalidParameter(format!(
            "n must be at least {min_n}, got {n}"
        )));
    }
    if decomp.group_of(x).pi >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "state {x} carries all stationary mass"
        )));
    }
    Ok(())
}

/// `Pr(x not in X_1..X_n without X_m | X_m != x)`, the same for every `m`.
pub fn prob_no_visit_given_not_x(decomp: &Rank2Decomposition, x: usize, n: usize) -> Result<f64> {
    check_state(decomp, x, n, 2)?;
    let g = decomp.group_of(x);
    let m = srd_matrix(decomp, x)?;
    let pib = 1.0 - g.pi;
    let mid = m.pow(n as u64 - 2);
    let left = [1.0, m.a12 / pib];
    let right = [m.a11, m.a21];
    let col = [
        mid.a11 * right[0] + mid.a12 * right[1],
        mid.a21 * right[0] + mid.a22 * right[1],
    ];
    Ok(left[0] * col[0] + left[1] * col[1])
}

/// `g(m)` evaluated with a matrix power.
fn return_free(m: &TwoByTwo, left: [f64; 2], steps: usize) -> f64 {
    if steps <= 1 {
        return 1.0;
    }
    let p = m.pow(steps as u64 - 1);
    left[0] * p.a11 + left[1] * p.a21
}

/// `Pr(x not visited at any time other than m | X_m = x)` for `1 <= m <= n`.
pub fn prob_no_visit_given_x(
    decomp: &Rank2Decomposition,
    x: usize,
    n: usize,
    m: usize,
) -> Result<f64> {
    check_state(decomp, x, n, 2)?;
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!(
            "position {m} outside 1..={n}"
        )));
    }
    let g = decomp.group_of(x);
    let mat = srd_matrix(decomp, x)?;
    let left = [1.0, decomp.d2() * g.v];
    Ok(return_free(&mat, left, m) * return_free(&mat, left, n - m + 1))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OccupancyTail {
    /// `Pr(F_x = 0)`.
    pub p0: f64,
    /// `Pr(F_x = 1)`.
    pub p1: f64,
}

/// Both tails through matrix powers only.
pub fn occupancy_tail_matrix(
    decomp: &Rank2Decomposition,
    x: usize,
    n: usize,
) -> Result<OccupancyTail> {
    check_state(decomp, x, n, 1)?;
    Ok(tail_by_powers(&PerStateSpectral::new(decomp, x)?, n))
}

fn tail_by_powers(sp: &PerStateSpectral, n: usize) -> OccupancyTail {
    if sp.pi_x == 0.0 {
        return OccupancyTail { p0: 1.0, p1: 0.0 };
    }
    let m = sp.srd();
    let left = [1.0, sp.d2 * sp.v_x];
    // X = e1 L
    let x = TwoByTwo::new(left[0], left[1], 0.0, 0.0);
    let (mn, conv) = block_pow(&m, &x, n as u64);
    // sum_m g(m) g(n+1-m) = L (sum_j M^j e1 L M^(n-1-j)) e1
    let sum = left[0] * conv.a11 + left[1] * conv.a21;
    OccupancyTail {
        p0: mn.a11,
        p1: sp.pi_x * sum,
    }
}

fn tail_closed(sp: &PerStateSpectral, n: usize, (a, b): (f64, f64)) -> OccupancyTail {
    let (l1, l2, d) = (sp.lam1, sp.lam2, sp.delta_x);
    let p0 =
        l1.powi(n as i32) * (sp.s_x + d) / (2.0 * d) + l2.powi(n as i32) * (d - sp.s_x) / (2.0 * d);
    let g = |m: usize| a * l1.powi(m as i32 - 1) + b * l2.powi(m as i32 - 1);
    let sum = if n == 2 {
        2.0 * g(2)
    } else {
        let e = (n - 1) as i32;
        2.0 * g(n)
            + (n - 2) as f64 * (a * a * l1.powi(e) + b * b * l2.powi(e))
            + 2.0 * a * b * l1 * l2 * cross_power_sum(l1, l2, n as u64 - 2)
    };
    OccupancyTail {
        p0,
        p1: sp.pi_x * sum,
    }
}

/// `Pr(F_x = 0)` and `Pr(F_x = 1)` for a sample of length `n`.
///
/// Uses the eigen closed form when it is well conditioned and repeated
/// squaring of `M` otherwise.
pub fn occupancy_tail(decomp: &Rank2Decomposition, x: usize, n: usize) -> Result<OccupancyTail> {
    check_state(decomp, x, n, 1)?;
    Ok(tail_for(&PerStateSpectral::new(decomp, x)?, n))
}

fn tail_for(sp: &PerStateSpectral, n: usize) -> OccupancyTail {
    if sp.pi_x == 0.0 {
        return OccupancyTail { p0: 1.0, p1: 0.0 };
    }
    match sp.tail_coefficients() {
        Some(ab) if n >= 2 => tail_closed(sp, n, ab),
        _ => tail_by_powers(sp, n),
    }
}

fn gamma_from_tail(sp: &PerStateSpectral, tail: &OccupancyTail, n: usize) -> f64 {
    (tail.p1 / sp.pi_x - n as f64 * tail.p0 / (1.0 - sp.pi_x)) / n as f64
}

/// `Gamma_x` through the averaged difference of the two conditional
/// no-revisit probabilities, all by matrix powers.
pub fn gamma_x_averaged(decomp: &Rank2Decomposition, x: usize, n: usize) -> Result<f64> {
    check_state(decomp, x, n, 3)?;
    let sp = PerStateSpectral::new(decomp, x)?;
    if sp.pi_x == 0.0 {
        return Ok(0.0);
    }
    Ok(gamma_from_tail(&sp, &tail_by_powers(&sp, n), n))
}

/// Eigenvalue closed form of `Gamma_x`; `None` when the gap is below
/// [`GAMMA_CLOSED_FORM_MIN_GAP`] or the eigenvalues are complex.
pub fn gamma_x_closed_form(decomp: &Rank2Decomposition, x: usize, n: usize) -> Result<Option<f64>> {
    check_state(decomp, x, n, 3)?;
    Ok(gamma_closed(&PerStateSpectral::new(decomp, x)?, n))
}

fn gamma_closed(sp: &PerStateSpectral, n: usize) -> Option<f64> {
    if sp.pi_x == 0.0 {
        return Some(0.0);
    }
    if !sp.real_spectrum || sp.delta_x < GAMMA_CLOSED_FORM_MIN_GAP {
        return None;
    }
    let (l1, l2, d) = (sp.lam1, sp.lam2, sp.delta_x);
    let nf = n as f64;
    let e = (n - 1) as i32;
    let s1 = cross_power_sum(l1, l2, n as u64 - 1);
    let s2 = cross_power_sum(l1, l2, n as u64 - 2);
    let bracket = -s1 / (1.0 - sp.pi_x)
        + sp.beta / (d * d)
            * (-(1.0 - 2.0 / nf) * (l1.powi(e) + l2.powi(e)) + 2.0 / nf * l1 * l2 * s2);
    Some(sp.d2 * sp.w_x * bracket)
}

fn gamma_for(sp: &PerStateSpectral, tail: &OccupancyTail, n: usize) -> f64 {
    if sp.w_x == 0.0 || sp.pi_x == 0.0 {
        return 0.0;
    }
    gamma_closed(sp, n).unwrap_or_else(|| gamma_from_tail(sp, tail, n))
}

/// `Gamma_x = (1/n) sum_m [Pr(no other visit | X_m = x) - Pr(no visit | X_m != x)]`.
///
/// Exactly zero when `v_x u_x = 0`.
pub fn gamma_x(decomp: &Rank2Decomposition, x: usize, n: usize) -> Result<f64> {
    check_state(decomp, x, n, 3)?;
    let sp = PerStateSpectral::new(decomp, x)?;
    if sp.w_x == 0.0 || sp.pi_x == 0.0 {
        return Ok(0.0);
    }
    Ok(gamma_closed(&sp, n).unwrap_or_else(|| gamma_from_tail(&sp, &tail_by_powers(&sp, n), n)))
}

/// Contribution of one group of states sharing `(pi_x, v_x, u_x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StateContribution {
    /// Lowest state of the group.
    pub x: usize,
    /// Number of states in the group.
    pub size: usize,
    pub pi_x: f64,
    pub gamma_x: f64,
    pub p0: f64,
    pub p1: f64,
    /// `p1 / n - pi_x p0` for a single state of the group.
    pub contribution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasReport {
    pub n: usize,
    /// `E[G0 - M0]`.
    pub exact_bias: f64,
    pub per_state: Vec<StateContribution>,
}

/// Exact `E[G0 - M0]` for a stationary irreducible rank-2 chain.
pub fn exact_bias(decomp: &Rank2Decomposition, n: usize) -> Result<BiasReport> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "n must be at least 3, got {n}"
        )));
    }
    if decomp.is_reducible() {
        return Err(Error::Reducible {
            beta: decomp.beta(),
        });
    }
    if decomp.groups().iter().any(|g| g.pi >= 1.0) {
        return Err(Error::InvalidParameter(
            "a single state carries all stationary mass".into(),
        ));
    }
    let per_state: Vec<StateContribution> = decomp
        .groups()
        .par_iter()
        .map(|g| {
            let sp = PerStateSpectral::from_group(decomp, g, g.representative);
            let tail = tail_for(&sp, n);
            StateContribution {
                x: g.representative,
                size: g.size,
                pi_x: g.pi,
                gamma_x: gamma_for(&sp, &tail, n),
                p0: tail.p0,
                p1: tail.p1,
                contribution: tail.p1 / n as f64 - g.pi * tail.p0,
            }
        })
        .collect();
    let exact_bias = per_state
        .iter()
        .map(|c| c.size as f64 * c.contribution)
        .sum();
    Ok(BiasReport {
        n,
        exact_bias,
        per_state,
    })
}

/// `(r/n)(1 - r/n)^(n/r - 1)`, the absolute bias on the period-`r` chain with
/// `K = n`; `0^0` is taken as 1.
pub fn exact_bias_periodic(n: usize, r: usize) -> Result<f64> {
    if r == 0 || r > n {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= r <= n, got r = {r}, n = {n}"
        )));
    }
    let ratio = r as f64 / n as f64;
    Ok(ratio * (1.0 - ratio).powf(n as f64 / r as f64 - 1.0))
}
