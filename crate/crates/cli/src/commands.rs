use anyhow::{bail, Result};
use log::info;
use missing_mass::bounds::{
    bound_rate_table, corollary1_bound, corollary2_bound, exact_tail, theorem1_bound,
    BoundConstants, BoundReport,
};
use missing_mass::chains::{
    build_periodic_kronecker, k1_for_kappa, rank2_decompose, stationary_distribution,
    DecompositionKind, Family, RowClassChain,
};
use missing_mass::exact_bias::{
    exact_bias, exact_bias_periodic, transfer_matrix_tail, StateContribution,
};
use missing_mass::fit::LogLogFit;
use missing_mass::simulate::{estimate_bias_mse, rate_fit, trial_seed, SimResult};
use missing_mass::spectral_params::{dominant_term_fit, SpectralParams};
use missing_mass::Error;
use serde::Serialize;

use crate::config::{FamilyArg, Knobs};
use crate::output::{slope_cell, Output};

/// How a successful run ended.
#[derive(Debug, PartialEq, Eq)]
pub enum Status {
    Done,
    /// Every bound evaluated was inapplicable.
    Inapplicable,
}

const TABLE1_GRID: &str = "1024..16384";
const TABLE1_KAPPA: f64 = 0.875;
/// The corollary's rate in the table corresponds to `c` close to 1/2.
const TABLE1_C: f64 = 0.49;
const FIG1_GRID: &str = "64..8192";
const PERIODIC_TRANSFER_MAX: usize = 4096;

fn k1_of(knobs: &Knobs, k: usize) -> Result<Option<usize>> {
    Ok(match knobs.family()? {
        FamilyArg::P1 | FamilyArg::P2 | FamilyArg::P3 => Some(match knobs.k1 {
            Some(k1) => k1,
            None => k1_for_kappa(k, knobs.kappa()?),
        }),
        _ => None,
    })
}

#[derive(Serialize)]
struct ParamsRow {
    family: &'static str,
    k: usize,
    k1: Option<usize>,
    classes: usize,
    kind: DecompositionKind,
    lambda2: f64,
    beta: f64,
    theta: f64,
    lambda_pi: f64,
    theta_bar: f64,
    lambda_pi_bar: f64,
}

pub fn params(knobs: &Knobs, out: &Output) -> Result<Status> {
    let chain = knobs.chain(knobs.n)?;
    let d = rank2_decompose(&chain)?;
    let p = SpectralParams::compute(&chain, &d)?;
    let row = ParamsRow {
        family: knobs.family()?.name(),
        k: chain.num_states(),
        k1: k1_of(knobs, chain.num_states())?,
        classes: chain.num_classes(),
        kind: d.kind,
        lambda2: d.lambda2,
        beta: p.beta,
        theta: p.theta,
        lambda_pi: p.lambda_pi,
        theta_bar: p.theta_bar(),
        lambda_pi_bar: p.lambda_pi_bar(),
    };
    out.emit(std::slice::from_ref(&row), &row)?;
    Ok(Status::Done)
}

#[derive(Serialize)]
struct BiasSummary {
    family: &'static str,
    k: usize,
    n: usize,
    exact_bias: f64,
    abs_bias: f64,
    lambda2: f64,
    beta: f64,
    state_classes: usize,
}

#[derive(Serialize)]
struct PerStateRow {
    x: usize,
    size: usize,
    pi_x: f64,
    gamma_x: f64,
    p0: f64,
    p1: f64,
    contribution: f64,
}

impl From<&StateContribution> for PerStateRow {
    fn from(s: &StateContribution) -> Self {
        Self {
            x: s.x,
            size: s.size,
            pi_x: s.pi_x,
            gamma_x: s.gamma_x,
            p0: s.p0,
            p1: s.p1,
            contribution: s.contribution,
        }
    }
}

#[derive(Serialize)]
struct BiasDoc<'a> {
    summary: &'a BiasSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_state: Option<Vec<PerStateRow>>,
}

pub fn exact_bias_cmd(knobs: &Knobs, out: &Output) -> Result<Status> {
    let n = knobs.require_n()?;
    let chain = knobs.chain(Some(n))?;
    let d = rank2_decompose(&chain)?;
    let report = exact_bias(&d, n)?;
    let summary = BiasSummary {
        family: knobs.family()?.name(),
        k: chain.num_states(),
        n,
        exact_bias: report.exact_bias,
        abs_bias: report.exact_bias.abs(),
        lambda2: d.lambda2,
        beta: d.beta(),
        state_classes: report.per_state.len(),
    };
    let rows: Vec<PerStateRow> = report.per_state.iter().map(PerStateRow::from).collect();
    match (knobs.per_state, out.format) {
        (true, crate::config::Format::Csv) => {
            out.csv(&rows)?;
            out.summary(&summary)?;
        }
        (true, _) => out.json(&BiasDoc {
            summary: &summary,
            per_state: Some(rows),
        })?,
        (false, _) => out.emit(
            std::slice::from_ref(&summary),
            &BiasDoc {
                summary: &summary,
                per_state: None,
            },
        )?,
    }
    Ok(Status::Done)
}

#[derive(Serialize)]
struct BoundRow {
    bound: &'static str,
    n: usize,
    delta: f64,
    low_mass: f64,
    tail: f64,
    residual: f64,
    total: f64,
    exact: f64,
    applicable: bool,
    reason: String,
}

impl BoundRow {
    fn new(bound: &'static str, n: usize, r: BoundReport, exact: f64) -> Self {
        Self {
            bound,
            n,
            delta: r.delta,
            low_mass: r.low_mass_term,
            tail: r.tail_term,
            residual: r.residual_term,
            total: r.total,
            exact,
            applicable: r.applicable,
            reason: r.reason,
        }
    }

    fn skipped(bound: &'static str, n: usize, delta: f64, exact: f64, reason: String) -> Self {
        Self {
            bound,
            n,
            delta,
            low_mass: f64::NAN,
            tail: f64::NAN,
            residual: f64::NAN,
            total: f64::NAN,
            exact,
            applicable: false,
            reason,
        }
    }
}

pub fn bounds(knobs: &Knobs, out: &Output) -> Result<Status> {
    let grid = knobs.grid(None)?;
    let consts = knobs.constants()?;
    let mut rows = Vec::new();
    for &n in &grid {
        let chain = knobs.chain(Some(n))?;
        let d = rank2_decompose(&chain)?;
        let p = SpectralParams::compute(&chain, &d)?;
        let exact = exact_bias(&d, n)?.exact_bias.abs();
        rows.push(BoundRow::new(
            "corollary1",
            n,
            corollary1_bound(&d, &p, n, &consts)?,
            exact,
        ));
        rows.push(BoundRow::new(
            "corollary2",
            n,
            corollary2_bound(&d, &p, n, &consts)?,
            exact,
        ));
        if let Some(delta) = knobs.delta {
            let row = match theorem1_bound(&d, &p, n, delta, &exact_tail(&d), &consts) {
                Ok(r) => BoundRow::new("theorem1", n, r, exact),
                Err(Error::InvalidParameter(reason)) => {
                    BoundRow::skipped("theorem1", n, delta, exact, reason)
                }
                Err(e) => return Err(e.into()),
            };
            rows.push(row);
        }
    }
    out.emit(&rows, &rows)?;
    if rows.iter().any(|r| r.applicable) {
        Ok(Status::Done)
    } else {
        Ok(Status::Inapplicable)
    }
}

#[derive(Serialize)]
struct SimRow {
    n: usize,
    me: f64,
    abs_me: f64,
    mse: f64,
    stderr_me: f64,
    stderr_mse: f64,
}

impl From<&SimResult> for SimRow {
    fn from(r: &SimResult) -> Self {
        Self {
            n: r.n,
            me: r.mean_error,
            abs_me: r.mean_error.abs(),
            mse: r.mse,
            stderr_me: r.stderr_me,
            stderr_mse: r.stderr_mse,
        }
    }
}

fn fit_of(results: &[SimResult], f: impl Fn(&SimResult) -> f64) -> Option<LogLogFit> {
    let pts: Vec<(f64, f64)> = results.iter().map(|r| (r.n as f64, f(r))).collect();
    rate_fit(&pts).ok()
}

#[derive(Serialize)]
struct SimDoc {
    family: &'static str,
    trials: usize,
    seed: u64,
    rows: Vec<SimRow>,
    abs_me_fit: Option<LogLogFit>,
    mse_fit: Option<LogLogFit>,
}

/// Simulates each grid size with the seed `trial_seed(seed, n)`.
fn simulate_grid(
    knobs: &Knobs,
    grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<SimResult>> {
    grid.iter()
        .map(|&n| {
            let chain = knobs.chain(Some(n))?;
            let pi = stationary_distribution(&chain)?;
            info!("simulating n = {n}, K = {}", chain.num_states());
            Ok(estimate_bias_mse(
                &chain,
                &pi,
                n,
                trials,
                trial_seed(seed, n as u64),
            )?)
        })
        .collect()
}

pub fn simulate(knobs: &Knobs, out: &Output) -> Result<Status> {
    let grid = knobs.grid(None)?;
    let (trials, seed) = (knobs.trials()?, knobs.seed()?);
    let results = simulate_grid(knobs, &grid, trials, seed)?;
    let rows: Vec<SimRow> = results.iter().map(SimRow::from).collect();
    let doc = SimDoc {
        family: knobs.family()?.name(),
        trials,
        seed,
        abs_me_fit: fit_of(&results, |r| r.mean_error.abs()),
        mse_fit: fit_of(&results, |r| r.mse),
        rows,
    };
    out.emit(&doc.rows, &doc)?;
    Ok(Status::Done)
}

#[derive(Serialize)]
struct Table1Row {
    family: &'static str,
    kappa: f64,
    beta: String,
    theta_bar: String,
    lambda_pi_bar: String,
    corollary1: String,
    corollary2: String,
    corollary1_applicable: usize,
    corollary2_applicable: usize,
}

#[derive(Serialize)]
struct Table1Doc {
    n_grid: Vec<usize>,
    constants: BoundConstants,
    rows: Vec<Table1Row>,
    parameters: Vec<missing_mass::spectral_params::DominantTermFit>,
    bounds: Vec<missing_mass::bounds::RateTable>,
}

pub fn reproduce_table1(knobs: &Knobs, out: &Output) -> Result<Status> {
    let grid = knobs.grid(Some(TABLE1_GRID))?;
    if grid.len() < 3 {
        bail!("slope fits need at least 3 grid points");
    }
    let kappa = match knobs.kappa {
        Some(_) => knobs.kappa()?,
        None => TABLE1_KAPPA,
    };
    let mut consts = knobs.constants()?;
    if knobs.c.is_none() {
        consts.c_exponent = TABLE1_C;
    }
    let mut doc = Table1Doc {
        n_grid: grid.clone(),
        constants: consts,
        rows: vec![],
        parameters: vec![],
        bounds: vec![],
    };
    for family in [Family::P1, Family::P2, Family::P3] {
        info!("table row {family}");
        let fit = dominant_term_fit(family, kappa, &grid)?;
        let table = bound_rate_table(family, kappa, &grid, &consts)?;
        doc.rows.push(Table1Row {
            family: family.name(),
            kappa,
            beta: slope_cell(fit.beta.slope(), fit.beta.is_zero()),
            theta_bar: slope_cell(fit.theta_bar.slope(), fit.theta_bar.is_zero()),
            lambda_pi_bar: slope_cell(fit.lambda_pi_bar.slope(), fit.lambda_pi_bar.is_zero()),
            corollary1: slope_cell(table.corollary1_slope.map(|f| f.slope), false),
            corollary2: slope_cell(table.corollary2_slope.map(|f| f.slope), false),
            corollary1_applicable: table
                .rows
                .iter()
                .filter(|r| r.corollary1.applicable)
                .count(),
            corollary2_applicable: table
                .rows
                .iter()
                .filter(|r| r.corollary2.applicable)
                .count(),
        });
        doc.parameters.push(fit);
        doc.bounds.push(table);
    }
    out.emit(&doc.rows, &doc)?;
    Ok(Status::Done)
}

#[derive(Serialize)]
struct Fig1Row {
    family: &'static str,
    kappa: f64,
    n: usize,
    me: f64,
    abs_me: f64,
    mse: f64,
    stderr_me: f64,
    stderr_mse: f64,
    abs_me_slope: Option<f64>,
    mse_slope: Option<f64>,
}

pub fn reproduce_fig1(knobs: &Knobs, out: &Output) -> Result<Status> {
    let grid = knobs.grid(Some(FIG1_GRID))?;
    let kappas = match knobs.kappa {
        Some(_) => vec![knobs.kappa()?],
        None => vec![1.0, 0.25],
    };
    let (trials, seed) = (knobs.trials()?, knobs.seed()?);
    let mut rows = Vec::new();
    for kappa in kappas {
        for (family, arg) in [
            (Family::P1, FamilyArg::P1),
            (Family::P2, FamilyArg::P2),
            (Family::P3, FamilyArg::P3),
        ] {
            let fam_knobs = Knobs {
                family: Some(arg),
                kappa: Some(kappa),
                k: None,
                k1: None,
                ..knobs.clone()
            };
            let results = simulate_grid(&fam_knobs, &grid, trials, seed)?;
            let me_slope = fit_of(&results, |r| r.mean_error.abs()).map(|f| f.slope);
            let mse_slope = fit_of(&results, |r| r.mse).map(|f| f.slope);
            for r in &results {
                let s = SimRow::from(r);
                rows.push(Fig1Row {
                    family: family.name(),
                    kappa,
                    n: s.n,
                    me: s.me,
                    abs_me: s.abs_me,
                    mse: s.mse,
                    stderr_me: s.stderr_me,
                    stderr_mse: s.stderr_mse,
                    abs_me_slope: me_slope,
                    mse_slope,
                });
            }
        }
    }
    out.emit(&rows, &rows)?;
    Ok(Status::Done)
}

#[derive(Serialize)]
struct PeriodicRow {
    n: usize,
    k: usize,
    r: usize,
    formula: f64,
    exact: Option<f64>,
    abs_exact: Option<f64>,
    formula_matches: Option<bool>,
    mc_me: f64,
    mc_stderr: f64,
    mc_within_3se: Option<bool>,
}

/// `E[G0 - M0]` from per-state transfer recursions.
fn transfer_bias(chain: &RowClassChain, n: usize) -> Result<f64> {
    let pi = stationary_distribution(chain)?;
    let nf = n as f64;
    let mut total = 0.0;
    for x in 0..chain.num_states() {
        let t = transfer_matrix_tail(chain, x, n)?;
        total += t.p1 / nf - pi[x] * t.p0;
    }
    Ok(total)
}

pub fn periodic_check(knobs: &Knobs, out: &Output) -> Result<Status> {
    let n = knobs.require_n()?;
    let r = knobs.r.unwrap_or(2);
    let k = knobs.k.unwrap_or(n);
    let formula = exact_bias_periodic(n, r)?;
    let chain = build_periodic_kronecker(k, r)?;
    let exact = if k <= PERIODIC_TRANSFER_MAX {
        Some(transfer_bias(&chain, n)?)
    } else {
        None
    };
    let pi = stationary_distribution(&chain)?;
    let mc = estimate_bias_mse(&chain, &pi, n, knobs.trials()?, knobs.seed()?)?;
    let row = PeriodicRow {
        n,
        k,
        r,
        formula,
        exact,
        abs_exact: exact.map(f64::abs),
        formula_matches: exact
            .filter(|_| k == n)
            .map(|e| (e.abs() - formula).abs() <= 1e-12),
        mc_me: mc.mean_error,
        mc_stderr: mc.stderr_me,
        mc_within_3se: exact.map(|e| (mc.mean_error - e).abs() <= 3.0 * mc.stderr_me),
    };
    out.emit(std::slice::from_ref(&row), &row)?;
    Ok(Status::Done)
}
