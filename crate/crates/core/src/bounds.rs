//! Upper bounds on `|E[G0 - M0]|`.
//!
//! Every bound has the form
//!
//! ```text
//! (delta / beta) (c1 + c2 / (n beta))  +  2 max_{x: pi_x > delta, P_xx != pi_x} Pr(F_x <= 1)  +  1/n
//! ```
//!
//! and differs only in `delta` and in the tail bound used for `Pr(F_x <= 1)`.

use serde::{Deserialize, Serialize};

use crate::chains::{
    build_family, k1_for_kappa, rank2_decompose, Family, Rank2Decomposition, StateGroup,
};
use crate::error::{Error, Result};
use crate::exact_bias::{exact_bias, occupancy_tail};
use crate::fit::{log_log_fit, LogLogFit};
use crate::spectral_params::SpectralParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    /// Constant of the moment tail bound.
    pub c_naor: f64,
    /// Exponent `c` in `(0, 0.5)` of the TV-gap corollary.
    pub c_exponent: f64,
    /// Moment order; `3 ln n` when unset.
    pub q: Option<f64>,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self {
            c1: 42.0,
            c2: 162.0,
            c_naor: 1.0,
            c_exponent: 0.25,
            q: None,
        }
    }
}

impl BoundConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::InvalidParameter("c1 and c2 must be positive".into()));
        }
        if self.c_naor.is_nan() || self.c_naor <= 0.0 {
            return Err(Error::InvalidParameter("C must be positive".into()));
        }
        if !(self.c_exponent > 0.0 && self.c_exponent < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "c must lie in (0, 0.5), got {}",
                self.c_exponent
            )));
        }
        if let Some(q) = self.q {
            if q.is_nan() || q < 2.0 {
                return Err(Error::InvalidParameter(format!(
                    "q must be at least 2, got {q}"
                )));
            }
        }
        Ok(())
    }

    pub fn q_for(&self, n: usize) -> f64 {
        self.q.unwrap_or(3.0 * (n as f64).ln())
    }
}

/// States with `P_xx != pi_x`, split at `delta` (groups of states sharing
/// `(pi_x, v_x, u_x)`).
#[derive(Clone, Debug, PartialEq)]
pub struct StatePartition {
    pub delta: f64,
    /// `pi_x <= delta`.
    pub low: Vec<StateGroup>,
    /// `pi_x > delta`.
    pub high: Vec<StateGroup>,
}

impl StatePartition {
    pub fn new(decomp: &Rank2Decomposition, delta: f64) -> Self {
        let (high, low) = decomp
            .groups()
            .iter()
            .filter(|g| decomp.d2() * g.v * g.u != 0.0)
            .partition(|g| g.pi > delta);
        Self { delta, low, high }
    }

    pub fn low_count(&self) -> usize {
        self.low.iter().map(|g| g.size).sum()
    }

    pub fn high_count(&self) -> usize {
        self.high.iter().map(|g| g.size).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub delta: f64,
    pub low_mass_term: f64,
    pub tail_term: f64,
    pub residual_term: f64,
    pub total: f64,
    pub applicable: bool,
    pub reason: String,
}

impl BoundReport {
    fn new(delta: f64, low_mass_term: f64, tail_term: f64, n: usize) -> Self {
        let residual_term = 1.0 / n as f64;
        Self {
            delta,
            low_mass_term,
            tail_term,
            residual_term,
            total: low_mass_term + tail_term + residual_term,
            applicable: true,
            reason: String::new(),
        }
    }

    fn inapplicable(mut self, reason: String) -> Self {
        self.applicable = false;
        self.reason = reason;
        self
    }

    fn undefined(reason: String) -> Self {
        Self {
            delta: f64::NAN,
            low_mass_term: f64::NAN,
            tail_term: f64::NAN,
            residual_term: f64::NAN,
            total: f64::NAN,
            applicable: false,
            reason,
        }
    }
}

fn low_mass_term(delta: f64, beta: f64, n: usize, consts: &BoundConstants) -> f64 {
    delta / beta * (consts.c1 + consts.c2 / (n as f64 * beta))
}

/// `min(1, 2 exp(-n (1 - theta)^2 eps^2 / 2))`.
pub fn kontorovich_tail(_pi_x: f64, n: usize, theta: f64, epsilon: f64) -> Result<f64> {
    if theta >= 1.0 {
        return Err(Error::Inapplicable(format!(
            "TV gap theta = {theta} is not below 1"
        )));
    }
    if epsilon < 0.0 || epsilon.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let tb = 1.0 - theta;
    Ok((2.0 * (-0.5 * n as f64 * tb * tb * epsilon * epsilon).exp()).min(1.0))
}

/// `min(1, C (q / ((1 - lambda_pi) n))^(q/2) pi_x eps^(-q))`.
pub fn naor_tail(pi_x: f64, n: usize, lambda_pi: f64, epsilon: f64, q: f64, c: f64) -> Result<f64> {
    if lambda_pi >= 1.0 {
        return Err(Error::Inapplicable(format!(
            "weighted norm lambda_pi = {lambda_pi} is not below 1"
        )));
    }
    if q.is_nan() || q < 2.0 {
        return Err(Error::InvalidParameter(format!(
            "q must be at least 2, got {q}"
        )));
    }
    if epsilon < 0.0 || epsilon.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    // in logs to avoid overflow for large q
    let log =
        c.ln() + 0.5 * q * (q / ((1.0 - lambda_pi) * n as f64)).ln() + pi_x.ln() - q * epsilon.ln();
    Ok(log.exp().min(1.0))
}

/// General bound for `1/n < delta <= beta/5`, with `tail(group, n)` an upper
/// bound on `Pr(F_x <= 1)` for the states of `group`.
pub fn theorem1_bound(
    decomp: &Rank2Decomposition,
    params: &SpectralParams,
    n: usize,
    delta: f64,
    tail: &dyn Fn(&StateGroup, usize) -> Result<f64>,
    consts: &BoundConstants,
) -> Result<BoundReport> {
    consts.validate()?;
    let beta = params.beta;
    if beta <= 0.0 {
        return Err(Error::Reducible { beta });
    }
    let nf = n as f64;
    if !(delta > 1.0 / nf && delta <= beta / 5.0) {
        return Err(Error::InvalidParameter(format!(
            "delta = {delta} outside (1/n, beta/5] = ({}, {}]",
            1.0 / nf,
            beta / 5.0
        )));
    }
    let part = StatePartition::new(decomp, delta);
    let mut worst: f64 = 0.0;
    for g in &part.high {
        worst = worst.max(tail(g, n)?);
    }
    Ok(BoundReport::new(
        delta,
        low_mass_term(delta, beta, n, consts),
        2.0 * worst,
        n,
    ))
}

/// `Pr(F_x <= 1)` from the exact occupancy tail.
pub fn exact_tail(decomp: &Rank2Decomposition) -> impl Fn(&StateGroup, usize) -> Result<f64> + '_ {
    move |g, n| {
        let t = occupancy_tail(decomp, g.representative, n)?;
        Ok((t.p0 + t.p1).min(1.0))
    }
}

/// TV-gap corollary: `delta = 1/((1 - theta) n^c) + 1/n`, tail
/// `4 exp(-n^(1-2c)/2)`.
pub fn corollary1_bound(
    _decomp: &Rank2Decomposition,
    params: &SpectralParams,
    n: usize,
    consts: &BoundConstants,
) -> Result<BoundReport> {
    consts.validate()?;
    let theta_bar = 1.0 - params.theta;
    if theta_bar <= 0.0 {
        return Ok(BoundReport::undefined(format!(
            "theta = {} (some rows are disjoint)",
            params.theta
        )));
    }
    if params.beta <= 0.0 {
        return Ok(BoundReport::undefined("beta = 0 (reducible chain)".into()));
    }
    let nf = n as f64;
    let c = consts.c_exponent;
    let delta = 1.0 / (theta_bar * nf.powf(c)) + 1.0 / nf;
    let beta0 = 5.0 * delta;
    let tail = 4.0 * (-0.5 * nf.powf(1.0 - 2.0 * c)).exp();
    let report = BoundReport::new(delta, low_mass_term(delta, params.beta, n, consts), tail, n);
    if params.beta < beta0 {
        return Ok(report.inapplicable(format!(
            "beta = {:.6} below beta0 = {beta0:.6}",
            params.beta
        )));
    }
    Ok(report)
}

/// Weighted-norm corollary: `delta = 3 sqrt(ln n / (n (1 - lambda_pi))) + 1/n`,
/// tail `2 C / n^1.5`.
pub fn corollary2_bound(
    _decomp: &Rank2Decomposition,
    params: &SpectralParams,
    n: usize,
    consts: &BoundConstants,
) -> Result<BoundReport> {
    consts.validate()?;
    let lambda_bar = 1.0 - params.lambda_pi;
    if lambda_bar <= 0.0 {
        return Ok(BoundReport::undefined(format!(
            "lambda_pi = {}",
            params.lambda_pi
        )));
    }
    if params.beta <= 0.0 {
        return Ok(BoundReport::undefined("beta = 0 (reducible chain)".into()));
    }
    let nf = n as f64;
    let delta = 3.0 * (nf.ln() / (nf * lambda_bar)).sqrt() + 1.0 / nf;
    let beta1 = 5.0 * delta;
    let tail = 2.0 * consts.c_naor / nf.powf(1.5);
    let report = BoundReport::new(delta, low_mass_term(delta, params.beta, n, consts), tail, n);
    if params.beta < beta1 {
        return Ok(report.inapplicable(format!(
            "beta = {:.6} below beta1 = {beta1:.6}",
            params.beta
        )));
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub k1: usize,
    pub params: SpectralParams,
    pub corollary1: BoundReport,
    pub corollary2: BoundReport,
    pub exact_bias: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateTable {
    pub family: Family,
    pub kappa: f64,
    pub rows: Vec<RateRow>,
    /// Slope of the low-mass term of the TV-gap corollary against `n`.
    pub corollary1_slope: Option<LogLogFit>,
    /// Slope of the low-mass term of the weighted-norm corollary divided by
    /// `sqrt(ln n)`.
    pub corollary2_slope: Option<LogLogFit>,
}

/// Both corollaries and the exact bias on a grid with `K = n`, `K1 ~ n^kappa`.
///
/// Slopes are fitted on the low-mass term, which carries the `n`-dependence
/// through `beta`, `theta` and `lambda_pi`; rows where the corollary's `beta`
/// condition fails still enter the fit as long as the term is defined.
pub fn bound_rate_table(
    family: Family,
    kappa: f64,
    n_grid: &[usize],
    consts: &BoundConstants,
) -> Result<RateTable> {
    let rows = n_grid
        .iter()
        .map(|&n| {
            let chain = build_family(family, n, kappa, 2, 0.5)?;
            let decomp = rank2_decompose(&chain)?;
            let params = SpectralParams::compute(&chain, &decomp)?;
            Ok(RateRow {
                n,
                k1: k1_for_kappa(n, kappa),
                params,
                corollary1: corollary1_bound(&decomp, &params, n, consts)?,
                corollary2: corollary2_bound(&decomp, &params, n, consts)?,
                exact_bias: exact_bias(&decomp, n)?.exact_bias,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = |f: &dyn Fn(&RateRow) -> f64| -> Option<LogLogFit> {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (r.n as f64, f(r)))
            .filter(|p| p.1.is_finite())
            .collect();
        log_log_fit(&pts).ok()
    };
    Ok(RateTable {
        family,
        kappa,
        corollary1_slope: fit(&|r| r.corollary1.low_mass_term),
        corollary2_slope: fit(&|r| r.corollary2.low_mass_term / (r.n as f64).ln().sqrt()),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{
        build_iid, build_p1, build_p2, build_p3, build_reducible_two_block, Distribution,
        RowClassChain,
    };

    fn setup(chain: &RowClassChain) -> (Rank2Decomposition, SpectralParams) {
        let d = rank2_decompose(chain).unwrap();
        let p = SpectralParams::compute(chain, &d).unwrap();
        (d, p)
    }

    #[test]
    fn kontorovich_values() {
        assert!(
            (kontorovich_tail(0.1, 100, 0.0, 0.5).unwrap() - 2.0 * (-12.5f64).exp()).abs() < 1e-18
        );
        assert!(matches!(
            kontorovich_tail(0.1, 100, 1.0, 0.5),
            Err(Error::Inapplicable(_))
        ));
        assert_eq!(kontorovich_tail(0.1, 100, 0.0, 0.0).unwrap(), 1.0);
        let mut prev = 1.0;
        for e in 1..20 {
            let t = kontorovich_tail(0.1, 100, 0.3, e as f64 * 0.05).unwrap();
            assert!(t <= prev);
            prev = t;
        }
    }

    #[test]
    fn naor_values() {
        assert!((naor_tail(0.1, 100, 0.0, 0.5, 2.0, 1.0).unwrap() - 8e-3).abs() < 1e-15);
        assert!(matches!(
            naor_tail(0.1, 100, 1.0, 0.5, 2.0, 1.0),
            Err(Error::Inapplicable(_))
        ));
        let mut prev = 1.0;
        for n in [100, 200, 400, 800] {
            let t = naor_tail(0.1, n, 0.2, 0.3, 4.0, 1.0).unwrap();
            assert!(t <= prev);
            prev = t;
        }
    }

    #[test]
    fn naor_at_corollary_epsilon() {
        let n = 4096usize;
        let nf = n as f64;
        for lambda in [0.0, 0.5, 0.9] {
            let eps = 3.0 * (nf.ln() / (nf * (1.0 - lambda))).sqrt();
            let t = naor_tail(1.0, n, lambda, eps, 3.0 * nf.ln(), 1.0).unwrap();
            assert!(t <= 1.0 / nf.powf(1.5));
        }
    }

    #[test]
    fn theorem1_preconditions() {
        let (d, p) = setup(&build_reducible_two_block(8).unwrap());
        let tail = exact_tail(&d);
        assert!(matches!(
            theorem1_bound(&d, &p, 100, 0.1, &tail, &BoundConstants::default()),
            Err(Error::Reducible { .. })
        ));
        let (d, p) = setup(&build_p1(64, 16).unwrap());
        let tail = exact_tail(&d);
        assert!(theorem1_bound(&d, &p, 64, 1.0 / 64.0, &tail, &BoundConstants::default()).is_err());
        assert!(theorem1_bound(&d, &p, 64, p.beta, &tail, &BoundConstants::default()).is_err());
    }

    #[test]
    fn theorem1_sound_and_tradeoff() {
        let chain = build_p1(256, 64).unwrap();
        let (d, p) = setup(&chain);
        let n = 256;
        let exact = exact_bias(&d, n).unwrap().exact_bias.abs();
        let tail = exact_tail(&d);
        let consts = BoundConstants::default();
        let top = p.beta / 5.0;
        let r = theorem1_bound(&d, &p, n, top, &tail, &consts).unwrap();
        assert!(r.total >= exact);
        assert!((r.total - (r.low_mass_term + r.tail_term + r.residual_term)).abs() < 1e-15);
        let mut prev: Option<BoundReport> = None;
        for i in 1..=10 {
            let delta = 1.0 / n as f64 + (top - 1.0 / n as f64) * i as f64 / 10.0;
            let r = theorem1_bound(&d, &p, n, delta, &tail, &consts).unwrap();
            if let Some(prev) = prev {
                assert!(r.low_mass_term > prev.low_mass_term);
                assert!(r.tail_term <= prev.tail_term);
            }
            prev = Some(r);
        }
    }

    #[test]
    fn partition_bounds_high_mass_count() {
        let (d, _) = setup(&build_p3(64, 8).unwrap());
        for delta in [0.001, 0.01, 0.05] {
            let part = StatePartition::new(&d, delta);
            assert!(part.high_count() as f64 <= 1.0 / delta);
        }
    }

    #[test]
    fn iid_corollary1() {
        let n = 1024;
        let (d, p) = setup(&build_iid(&Distribution::uniform(n)).unwrap());
        let r = corollary1_bound(&d, &p, n, &BoundConstants::default()).unwrap();
        assert!(r.applicable);
        assert!(r.total >= exact_bias(&d, n).unwrap().exact_bias.abs());
    }

    #[test]
    fn p2_inapplicable() {
        let (d, p) = setup(&build_p2(256, 64).unwrap());
        let c = BoundConstants::default();
        let r1 = corollary1_bound(&d, &p, 256, &c).unwrap();
        let r2 = corollary2_bound(&d, &p, 256, &c).unwrap();
        assert!(!r1.applicable && !r2.applicable);
        assert!(!r1.reason.is_empty() && !r2.reason.is_empty());
    }

    #[test]
    fn p1_sqrt_connector_fails_beta1() {
        let (d, p) = setup(&build_p1(256, 16).unwrap());
        let r = corollary2_bound(&d, &p, 256, &BoundConstants::default()).unwrap();
        assert!(!r.applicable);
        assert!(r.reason.contains("beta1"));
    }

    #[test]
    fn constants_validation() {
        let bad = BoundConstants {
            c_exponent: 0.5,
            ..BoundConstants::default()
        };
        assert!(bad.validate().is_err());
        let bad = BoundConstants {
            q: Some(1.0),
            ..BoundConstants::default()
        };
        assert!(bad.validate().is_err());
        assert!(BoundConstants::default().validate().is_ok());
    }
}
