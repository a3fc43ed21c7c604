//! Built-in invariant suite over a small battery of chains.

use anyhow::Result;
use missing_mass::bounds::{
    corollary1_bound, corollary2_bound, exact_tail, theorem1_bound, BoundConstants,
};
use missing_mass::chains::{
    build_family, build_iid, build_p1, build_p2, build_p3, build_periodic_kronecker,
    build_reducible_two_block, build_sticky, rank2_decompose, stationary_distribution,
    Distribution, Family, Rank2Decomposition, RowClassChain,
};
use missing_mass::exact_bias::{
    brute_force_bias, exact_bias, gamma_x, occupancy_tail, transfer_matrix_tail, PerStateSpectral,
};
use missing_mass::spectral_params::SpectralParams;
use missing_mass::Error;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Largest observed error, or for bound checks the largest `|bias| / bound`.
    pub worst: f64,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub constants: BoundConstants,
    pub checks: Vec<CheckResult>,
}

struct Entry {
    name: String,
    chain: RowClassChain,
    decomp: Rank2Decomposition,
}

fn battery() -> Result<Vec<Entry>> {
    let mut chains: Vec<(String, RowClassChain)> = vec![
        ("iid K=4".into(), build_iid(&Distribution::uniform(4))?),
        (
            "iid skewed K=3".into(),
            build_iid(&Distribution::new(vec![0.2, 0.3, 0.5])?)?,
        ),
        ("sticky K=2".into(), build_sticky(2, 0.3)?),
        ("periodic K=4".into(), build_periodic_kronecker(4, 2)?),
        ("periodic K=16".into(), build_periodic_kronecker(16, 2)?),
    ];
    for k in [4usize, 8, 16, 64] {
        let mut k1s = vec![2, k / 2];
        k1s.dedup();
        for k1 in k1s {
            chains.push((format!("P1 K={k} K1={k1}"), build_p1(k, k1)?));
            chains.push((format!("P2 K={k} K1={k1}"), build_p2(k, k1)?));
            chains.push((format!("P3 K={k} K1={k1}"), build_p3(k, k1)?));
        }
    }
    chains
        .into_iter()
        .map(|(name, chain)| {
            let decomp = rank2_decompose(&chain)?;
            Ok(Entry {
                name,
                chain,
                decomp,
            })
        })
        .collect()
}

struct Tally {
    name: &'static str,
    cases: usize,
    worst: f64,
    failures: Vec<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            cases: 0,
            worst: 0.0,
            failures: Vec::new(),
        }
    }

    fn record(&mut self, ok: bool, value: f64, what: impl FnOnce() -> String) {
        self.cases += 1;
        if value.is_finite() {
            self.worst = self.worst.max(value);
        }
        if !ok {
            self.failures.push(what());
        }
    }

    fn finish(self) -> CheckResult {
        let passed = self.failures.is_empty() && self.cases > 0;
        let detail = match self.failures.len() {
            0 if self.cases == 0 => "no cases".into(),
            0 => "ok".into(),
            k => format!("{k} failures; first: {}", self.failures[0]),
        };
        CheckResult {
            name: self.name,
            passed,
            cases: self.cases,
            worst: self.worst,
            detail,
        }
    }
}

fn decomposition(battery: &[Entry]) -> Result<CheckResult> {
    let mut t = Tally::new("decomposition");
    for e in battery {
        let dense = e.chain.to_dense()?;
        let pi = stationary_distribution(&e.chain)?;
        let k = dense.len();
        let mut err: f64 = 0.0;
        for (i, row) in dense.iter().enumerate() {
            err = err.max((row.iter().sum::<f64>() - 1.0).abs());
            for (j, &pij) in row.iter().enumerate() {
                err = err.max((e.decomp.reconstruct(i, j) - pij).abs());
            }
        }
        let resid: f64 = (0..k)
            .map(|j| ((0..k).map(|i| pi[i] * dense[i][j]).sum::<f64>() - pi[j]).abs())
            .sum();
        let trace_gap = (e.decomp.lambda2 - (e.chain.trace() - 1.0)).abs();
        let worst = err.max(resid).max(trace_gap);
        t.record(
            err <= 1e-9 && resid <= 1e-10 && trace_gap <= 1e-9,
            worst,
            || format!("{}: {worst:e}", e.name),
        );
    }
    Ok(t.finish())
}

fn enumeration(battery: &[Entry]) -> Result<CheckResult> {
    let mut t = Tally::new("oracle_enumeration");
    for e in battery.iter().filter(|e| e.chain.num_states() <= 4) {
        for n in 3..=7 {
            let diff =
                (exact_bias(&e.decomp, n)?.exact_bias - brute_force_bias(&e.chain, n)?).abs();
            t.record(diff <= 1e-12, diff, || {
                format!("{} n={n}: {diff:e}", e.name)
            });
        }
    }
    Ok(t.finish())
}

fn transfer(battery: &[Entry]) -> Result<CheckResult> {
    let mut t = Tally::new("oracle_transfer");
    for e in battery {
        for n in [10, 50] {
            for g in e.decomp.groups() {
                let a = occupancy_tail(&e.decomp, g.representative, n)?;
                let b = transfer_matrix_tail(&e.chain, g.representative, n)?;
                let diff = (a.p0 - b.p0).abs().max((a.p1 - b.p1).abs());
                t.record(diff <= 1e-10, diff, || {
                    format!("{} n={n} x={}: {diff:e}", e.name, g.representative)
                });
            }
        }
    }
    Ok(t.finish())
}

fn gamma_zero(battery: &[Entry]) -> Result<CheckResult> {
    let mut t = Tally::new("gamma_zero");
    for e in battery {
        for g in e
            .decomp
            .groups()
            .iter()
            .filter(|g| g.v * g.u == 0.0 && g.pi > 0.0)
        {
            for n in [3, 50] {
                let gx = gamma_x(&e.decomp, g.representative, n)?;
                t.record(gx == 0.0, gx.abs(), || {
                    format!("{} x={}: {gx:e}", e.name, g.representative)
                });
            }
        }
    }
    Ok(t.finish())
}

fn claims(battery: &[Entry]) -> Result<[CheckResult; 2]> {
    let mut gap = Tally::new("claim_gap");
    let mut weight = Tally::new("claim_weight");
    for e in battery {
        let beta = e.decomp.beta();
        let mut sum = 0.0;
        for g in e.decomp.groups().iter().filter(|g| g.pi <= beta / 5.0) {
            let sp = PerStateSpectral::new(&e.decomp, g.representative)?;
            let short = beta / 3.0 - sp.delta_x;
            gap.record(short <= 1e-12, short.max(0.0), || {
                format!(
                    "{} x={}: Delta {} < beta/3",
                    e.name, g.representative, sp.delta_x
                )
            });
            sum += g.size as f64 * (e.decomp.d2() * g.v * g.u).abs();
        }
        weight.record(sum <= 3.0 + 1e-12, sum, || {
            format!("{}: weight {sum}", e.name)
        });
    }
    Ok([gap.finish(), weight.finish()])
}

fn soundness(battery: &[Entry], consts: &BoundConstants) -> Result<CheckResult> {
    let mut t = Tally::new("bound_soundness");
    let mut chains: Vec<(String, RowClassChain, usize)> = Vec::new();
    for family in [Family::P1, Family::P2, Family::P3] {
        for kappa in [0.75, 0.875, 1.0] {
            for n in [64usize, 256, 1024] {
                chains.push((
                    format!("{family} kappa={kappa} n={n}"),
                    build_family(family, n, kappa, 2, 0.5)?,
                    n,
                ));
            }
        }
    }
    for e in battery {
        for n in [16, 64] {
            chains.push((format!("{} n={n}", e.name), e.chain.clone(), n));
        }
    }
    for (name, chain, n) in &chains {
        let d = rank2_decompose(chain)?;
        let p = SpectralParams::compute(chain, &d)?;
        let exact = exact_bias(&d, *n)?.exact_bias.abs();
        let mut check = |label: &str, total: f64| {
            t.record(total >= exact, exact / total, || {
                format!("{name} {label}: bound {total:e} < |bias| {exact:e}")
            });
        };
        for (label, r) in [
            ("corollary1", corollary1_bound(&d, &p, *n, consts)?),
            ("corollary2", corollary2_bound(&d, &p, *n, consts)?),
        ] {
            if r.applicable {
                check(label, r.total);
            }
        }
        let (lo, hi) = (1.0 / *n as f64, p.beta / 5.0);
        if hi > lo {
            let tail = exact_tail(&d);
            for j in 1..=8 {
                let delta = if j == 8 {
                    hi
                } else {
                    lo + (hi - lo) * j as f64 / 8.0
                };
                check(
                    "theorem1",
                    theorem1_bound(&d, &p, *n, delta, &tail, consts)?.total,
                );
            }
        }
    }
    Ok(t.finish())
}

fn reducible_refusal() -> Result<CheckResult> {
    let mut t = Tally::new("reducible_refusal");
    let d = rank2_decompose(&build_reducible_two_block(8)?)?;
    let refused = matches!(exact_bias(&d, 10), Err(Error::Reducible { .. }));
    t.record(refused, 0.0, || {
        "exact bias was computed for a reducible chain".into()
    });
    Ok(t.finish())
}

fn periodic_formula() -> Result<CheckResult> {
    let mut t = Tally::new("periodic_formula");
    for n in [8usize, 16, 32] {
        let d = rank2_decompose(&build_periodic_kronecker(n, 2)?)?;
        let diff = (exact_bias(&d, n)?.exact_bias.abs()
            - missing_mass::exact_bias::exact_bias_periodic(n, 2)?)
        .abs();
        t.record(diff <= 1e-12, diff, || format!("n={n}: {diff:e}"));
    }
    Ok(t.finish())
}

pub fn run(consts: &BoundConstants) -> Result<ValidationReport> {
    let battery = battery()?;
    let [gap, weight] = claims(&battery)?;
    let checks = vec![
        decomposition(&battery)?,
        enumeration(&battery)?,
        transfer(&battery)?,
        gamma_zero(&battery)?,
        gap,
        weight,
        soundness(&battery, consts)?,
        reducible_refusal()?,
        periodic_formula()?,
    ];
    Ok(ValidationReport {
        passed: checks.iter().all(|c| c.passed),
        constants: *consts,
        checks,
    })
}
