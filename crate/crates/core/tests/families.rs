use missing_mass::chains::{
    build_family, build_iid, build_periodic_kronecker, build_reducible_two_block, rank2_decompose,
    stationary_distribution, DecompositionKind, Distribution, Family, RowClassChain,
};
use missing_mass::exact_bias::{exact_bias, transfer_matrix_tail};
use missing_mass::spectral_params::SpectralParams;
use missing_mass::Error;
use nalgebra::DMatrix;

fn battery() -> Vec<(String, RowClassChain)> {
    let mut out = Vec::new();
    for k in [4usize, 8, 16, 64] {
        for family in [Family::P1, Family::P2, Family::P3] {
            for kappa in [0.25, 0.5, 0.75, 1.0] {
                out.push((
                    format!("{family} K={k} kappa={kappa}"),
                    build_family(family, k, kappa, 2, 0.5).unwrap(),
                ));
            }
        }
        out.push((
            format!("periodic K={k}"),
            build_periodic_kronecker(k, 2).unwrap(),
        ));
    }
    out.push((
        "sticky K=2".into(),
        build_family(Family::Sticky, 2, 1.0, 2, 0.3).unwrap(),
    ));
    out
}

/// Second largest eigenvalue by real part from a dense eigen solve.
fn dense_lambda2(rows: &[Vec<f64>]) -> f64 {
    let k = rows.len();
    let m = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
    let mut eig: Vec<_> = m.complex_eigenvalues().iter().copied().collect();
    // drop the Perron root 1, then take the remaining eigenvalue of largest magnitude
    let one = eig
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.re - 1.0).abs().total_cmp(&(b.1.re - 1.0).abs()))
        .unwrap()
        .0;
    eig.remove(one);
    eig.into_iter()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap()
        .re
}

#[test]
fn families_are_stochastic_and_rank2() {
    for (name, chain) in battery() {
        let dense = chain.to_dense().unwrap();
        let d = rank2_decompose(&chain).unwrap();
        for (i, row) in dense.iter().enumerate() {
            assert!(
                (row.iter().sum::<f64>() - 1.0).abs() <= 1e-12,
                "{name}: row {i}"
            );
            for (j, &p) in row.iter().enumerate() {
                assert!(
                    (d.reconstruct(i, j) - p).abs() <= 1e-9,
                    "{name}: P[{i}][{j}]"
                );
            }
        }
        let pi = stationary_distribution(&chain).unwrap();
        let k = dense.len();
        if d.kind == DecompositionKind::NonDiagonalizable {
            // a Jordan block defeats dense eigensolvers; check nilpotency instead
            let t = DMatrix::from_fn(k, k, |i, j| dense[i][j] - pi[j]);
            assert!(
                (&t * &t).amax() <= 1e-12,
                "{name}: P - 1 pi is not nilpotent"
            );
            assert_eq!(d.lambda2, 0.0);
        } else {
            let dense_l2 = dense_lambda2(&dense);
            assert!(
                (d.lambda2 - dense_l2).abs() <= 1e-9,
                "{name}: lambda2 {} vs {dense_l2}",
                d.lambda2
            );
        }
        let resid: f64 = (0..k)
            .map(|j| ((0..k).map(|i| pi[i] * dense[i][j]).sum::<f64>() - pi[j]).abs())
            .sum();
        assert!(resid <= 1e-10, "{name}: stationarity residual {resid}");
    }
}

#[test]
fn large_family_matches_recursion() {
    let chain = build_family(Family::P3, 1024, 0.75, 2, 0.5).unwrap();
    let d = rank2_decompose(&chain).unwrap();
    let report = exact_bias(&d, 300).unwrap();
    let pi = stationary_distribution(&chain).unwrap();
    let mut total = 0.0;
    for s in &report.per_state {
        let t = transfer_matrix_tail(&chain, s.x, 300).unwrap();
        assert!((t.p0 - s.p0).abs() < 1e-10 && (t.p1 - s.p1).abs() < 1e-10);
        total += s.size as f64 * (t.p1 / 300.0 - pi[s.x] * t.p0);
    }
    assert!((total - report.exact_bias).abs() < 1e-10);
}

#[test]
fn iid_parameters() {
    let chain = build_iid(&Distribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap()).unwrap();
    let d = rank2_decompose(&chain).unwrap();
    assert_eq!(d.kind, DecompositionKind::Iid);
    let p = SpectralParams::compute(&chain, &d).unwrap();
    assert_eq!((p.beta, p.theta, p.lambda_pi), (1.0, 0.0, 0.0));
}

#[test]
fn periodic_spectrum() {
    let d = rank2_decompose(&build_periodic_kronecker(8, 2).unwrap()).unwrap();
    assert!((d.lambda2 + 1.0).abs() < 1e-12);
}

#[test]
fn reducible_chain_is_refused() {
    let d = rank2_decompose(&build_reducible_two_block(8).unwrap()).unwrap();
    assert!(d.is_reducible());
    assert!(matches!(exact_bias(&d, 10), Err(Error::Reducible { .. })));
}

#[test]
fn full_rank_sticky_is_refused() {
    let chain = build_family(Family::Sticky, 4, 1.0, 2, 0.1).unwrap();
    assert!(matches!(
        rank2_decompose(&chain),
        Err(Error::NotRank2 { .. })
    ));
}

#[test]
fn json_round_trip() {
    for (name, chain) in battery() {
        let mut buf = Vec::new();
        chain.to_json_writer(&mut buf).unwrap();
        let back = RowClassChain::from_json_reader(buf.as_slice()).unwrap();
        assert_eq!(
            back.to_dense().unwrap(),
            chain.to_dense().unwrap(),
            "{name}"
        );
    }
}

#[test]
fn csv_import() {
    let csv = "0.5, 0.5, 0\n0, 0.5, 0.5\n0.5, 0.5, 0\n";
    let chain = RowClassChain::from_csv_reader(csv.as_bytes()).unwrap();
    assert_eq!(chain.num_classes(), 2);
    assert!(RowClassChain::from_csv_reader("0.5, x\n".as_bytes()).is_err());
}
