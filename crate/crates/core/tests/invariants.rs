use missing_mass::bounds::{
    exact_tail, kontorovich_tail, theorem1_bound, BoundConstants, StatePartition,
};
use missing_mass::chains::{
    rank2_decompose, stationary_distribution, Rank2Decomposition, RowClassChain,
};
use missing_mass::exact_bias::{
    brute_force_bias, exact_bias, gamma_x_averaged, gamma_x_closed_form, occupancy_tail,
    occupancy_tail_matrix, transfer_matrix_tail, PerStateSpectral,
};
use missing_mass::simulate::{estimate_bias_mse, good_turing, missing_mass, sample_chain};
use missing_mass::spectral_params::{
    max_tv_gap, weighted_norm_lambda_pi, weighted_norm_numeric, SpectralParams,
};
use proptest::prelude::*;

fn normalize(w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Two random rows with some exact zeros, spread over `k` states by a random
/// assignment. Any such matrix has rank at most 2.
fn rank2_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=5).prop_flat_map(|k| {
        let row = prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.05f64..1.0], k)
            .prop_filter("row needs mass", |w| w.iter().sum::<f64>() > 0.0)
            .prop_map(normalize);
        (row.clone(), row, prop::collection::vec(any::<bool>(), k)).prop_map(|(a, b, pick)| {
            pick.into_iter()
                .map(|p| if p { a.clone() } else { b.clone() })
                .collect()
        })
    })
}

fn chain_and_decomp(rows: &[Vec<f64>]) -> Option<(RowClassChain, Rank2Decomposition)> {
    let chain = RowClassChain::from_dense_rows(rows).ok()?;
    let d = rank2_decompose(&chain).ok()?;
    let point_mass = d.pi.probs().iter().any(|&p| p > 1.0 - 1e-9);
    (!d.is_reducible() && !point_mass).then_some((chain, d))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn decomposition_reconstructs(rows in rank2_rows()) {
        let pair = chain_and_decomp(&rows);
        prop_assume!(pair.is_some());
        let (chain, d) = pair.unwrap();
        let k = chain.num_states();
        for (i, row) in rows.iter().enumerate() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (j, &pij) in row.iter().enumerate() {
                let r = d.reconstruct(i, j);
                prop_assert!((r - pij).abs() < 1e-9, "P[{i}][{j}] = {pij} vs {r}");
                prop_assert!((-1e-9..=1.0 + 1e-9).contains(&r));
            }
        }
        let pi = stationary_distribution(&chain).unwrap();
        let resid: f64 = (0..k)
            .map(|j| ((0..k).map(|i| pi[i] * rows[i][j]).sum::<f64>() - pi[j]).abs())
            .sum();
        prop_assert!(resid <= 1e-10);
        prop_assert!((d.lambda2 - (chain.trace() - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn exact_matches_enumeration(rows in rank2_rows(), n in 3usize..=6) {
        let pair = chain_and_decomp(&rows);
        prop_assume!(pair.is_some());
        let (chain, d) = pair.unwrap();
        let exact = exact_bias(&d, n).unwrap();
        let brute = brute_force_bias(&chain, n).unwrap();
        prop_assert!((exact.exact_bias - brute).abs() <= 1e-12, "{} vs {brute}", exact.exact_bias);
        let nf = n as f64;
        let per_state: f64 = exact
            .per_state
            .iter()
            .map(|s| s.size as f64 * (s.p1 / nf - s.pi_x * s.p0))
            .sum();
        prop_assert!((per_state - exact.exact_bias).abs() <= 1e-12);
    }

    #[test]
    fn tails_match_transfer_recursion(rows in rank2_rows(), n in 1usize..=50) {
        let pair = chain_and_decomp(&rows);
        prop_assume!(pair.is_some());
        let (chain, d) = pair.unwrap();
        for x in 0..chain.num_states() {
            let a = occupancy_tail(&d, x, n).unwrap();
            let b = transfer_matrix_tail(&chain, x, n).unwrap();
            let m = occupancy_tail_matrix(&d, x, n).unwrap();
            prop_assert!((a.p0 - b.p0).abs() <= 1e-10 && (a.p1 - b.p1).abs() <= 1e-10, "{a:?} vs {b:?}");
            prop_assert!((m.p0 - b.p0).abs() <= 1e-10 && (m.p1 - b.p1).abs() <= 1e-10);
            prop_assert!(a.p0 >= -1e-12 && a.p1 >= -1e-12 && a.p0 + a.p1 <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn closed_form_gamma_matches_average(rows in rank2_rows(), n in 3usize..=200) {
        let pair = chain_and_decomp(&rows);
        prop_assume!(pair.is_some());
        let (chain, d) = pair.unwrap();
        for x in 0..chain.num_states() {
            let sp = PerStateSpectral::new(&d, x).unwrap();
            let m = sp.srd();
            if sp.real_spectrum {
                prop_assert!((sp.lam1 + sp.lam2 - m.trace()).abs() < 1e-12);
                prop_assert!((sp.lam1 * sp.lam2 - m.det()).abs() < 1e-12);
                prop_assert!((sp.lam1 - sp.lam2 - sp.delta_x).abs() < 1e-12);
            }
            if let Some(g) = gamma_x_closed_form(&d, x, n).unwrap() {
                let avg = gamma_x_averaged(&d, x, n).unwrap();
                prop_assert!((g - avg).abs() <= 1e-11, "x={x}: {g} vs {avg}");
            }
        }
    }

    #[test]
    fn parameters_agree_with_dense(rows in rank2_rows()) {
        let pair = chain_and_decomp(&rows);
        prop_assume!(pair.is_some());
        let (chain, d) = pair.unwrap();
        let k = rows.len();
        let mut theta: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                theta = theta.max(0.5 * (0..k).map(|c| (rows[i][c] - rows[j][c]).abs()).sum::<f64>());
            }
        }
        prop_assert!((max_tv_gap(&chain) - theta).abs() < 1e-12);
        let params = SpectralParams::compute(&chain, &d).unwrap();
        prop_assert!((0.0..=1.0).contains(&params.theta));
        prop_assert!((0.0..=2.0).contains(&params.beta));
        let pi = stationary_distribution(&chain).unwrap();
        if pi.probs().iter().all(|&p| p > 1e-6) {
            let closed = weighted_norm_lambda_pi(&d).unwrap();
            let numeric = weighted_norm_numeric(&chain, &pi).unwrap();
            prop_assert!((closed - numeric).abs() <= 1e-10, "{closed} vs {numeric}");
        }
    }

    #[test]
    fn theorem1_sound_and_monotone(rows in rank2_rows(), n in 20usize..=400) {
        let pair = chain_and_decomp(&rows);
        prop_assume!(pair.is_some());
        let (chain, d) = pair.unwrap();
        let params = SpectralParams::compute(&chain, &d).unwrap();
        let lo = 1.0 / n as f64;
        let hi = params.beta / 5.0;
        prop_assume!(hi > lo);
        let exact = exact_bias(&d, n).unwrap().exact_bias.abs();
        let tail = exact_tail(&d);
        let consts = BoundConstants::default();
        let mut last_low = 0.0;
        for j in 1..=5 {
            let delta = if j == 5 { hi } else { lo + (hi - lo) * j as f64 / 5.0 };
            let r = theorem1_bound(&d, &params, n, delta, &tail, &consts).unwrap();
            prop_assert!(r.total >= exact);
            prop_assert!(r.low_mass_term > last_low);
            prop_assert!((r.total - r.low_mass_term - r.tail_term - r.residual_term).abs() < 1e-12);
            last_low = r.low_mass_term;
            let part = StatePartition::new(&d, delta);
            prop_assert!(part.high_count() as f64 <= 1.0 / delta + 1e-9);
        }
    }

    #[test]
    fn sampled_runs_are_consistent(rows in rank2_rows(), n in 1usize..=40, seed in any::<u64>()) {
        let pair = chain_and_decomp(&rows);
        prop_assume!(pair.is_some());
        let (chain, d) = pair.unwrap();
        let run = sample_chain(&chain, &d.pi, n, seed).unwrap();
        prop_assert_eq!(run.n(), n);
        let total: usize = (1..=n).map(|l| l * run.phi(l)).sum();
        prop_assert_eq!(total, n);
        let g0 = good_turing(&run);
        let m0 = missing_mass(&run, &d.pi);
        prop_assert!((0.0..=1.0).contains(&g0) && (0.0..=1.0).contains(&m0));
        prop_assert_eq!(run, sample_chain(&chain, &d.pi, n, seed).unwrap());
    }
}

#[test]
fn kontorovich_tail_monotone() {
    let mut last = f64::INFINITY;
    for n in [10, 100, 1000, 10_000] {
        let t = kontorovich_tail(0.1, n, 0.3, 0.05).unwrap();
        assert!(t <= last);
        last = t;
    }
    let mut last = f64::INFINITY;
    for eps in [0.01, 0.05, 0.1, 0.5] {
        let t = kontorovich_tail(0.1, 500, 0.3, eps).unwrap();
        assert!(t <= last);
        last = t;
    }
}

#[test]
fn simulation_is_deterministic() {
    let rows = vec![
        vec![0.5, 0.25, 0.25],
        vec![0.1, 0.6, 0.3],
        vec![0.5, 0.25, 0.25],
    ];
    let (chain, d) = chain_and_decomp(&rows).unwrap();
    let a = estimate_bias_mse(&chain, &d.pi, 10, 500, 9).unwrap();
    let b = estimate_bias_mse(&chain, &d.pi, 10, 500, 9).unwrap();
    assert_eq!(a.mean_error.to_bits(), b.mean_error.to_bits());
    assert_eq!(a.mse.to_bits(), b.mse.to_bits());
    assert!(a.mse >= a.mean_error * a.mean_error - 3.0 * a.stderr_mse);
}
