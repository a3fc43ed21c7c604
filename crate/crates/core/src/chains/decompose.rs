use std::collections::HashMap;

use nalgebra::DMatrix;

use super::{stationary_distribution_with, Distribution, RowClassChain};
use crate::error::{Error, Result};

/// Third singular value of the distinct-row matrix, relative to the first,
/// below which the chain counts as rank 2.
pub const RANK_TOL: f64 = 1e-8;
/// `|lambda2|` below which a non-iid chain is treated as non-diagonalizable.
pub const LAMBDA2_ZERO_TOL: f64 = 1e-9;
/// Entrywise size of `P - 1 pi` below which the chain is iid.
pub const IID_TOL: f64 = 1e-9;
const INVARIANT_TOL: f64 = 1e-9;
const SNAP_REL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionKind {
    /// `P = 1 pi`; `u = v = 0`.
    Iid,
    /// `P = 1 pi + lambda2 v u'` with `u.v = 1`.
    Diagonalizable,
    /// `P = 1 pi + v u'` with `u.v = 0`; `lambda2` is zero.
    NonDiagonalizable,
}

/// States sharing the same `(pi_x, v_x, u_x)`; every per-state quantity of the
/// bias machinery is constant on a group.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateGroup {
    pub representative: usize,
    pub size: usize,
    pub pi: f64,
    pub v: f64,
    pub u: f64,
}

/// `P = 1 pi + d v u'` where `d = lambda2` (diagonalizable) or `1`
/// (non-diagonalizable), together with the grouping of states by
/// `(pi_x, v_x, u_x)`.
#[derive(Clone, Debug)]
pub struct Rank2Decomposition {
    pub pi: Distribution,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub lambda2: f64,
    pub kind: DecompositionKind,
    groups: Vec<StateGroup>,
    group_of: Vec<usize>,
}

impl Rank2Decomposition {
    pub fn num_states(&self) -> usize {
        self.v.len()
    }

    pub fn is_diagonalizable(&self) -> bool {
        self.kind != DecompositionKind::NonDiagonalizable
    }

    /// Weight of the rank-one part: `lambda2`, or `1` in the non-diagonalizable case.
    pub fn d2(&self) -> f64 {
        match self.kind {
            DecompositionKind::NonDiagonalizable => 1.0,
            _ => self.lambda2,
        }
    }

    /// Unclamped `1 - lambda2`.
    pub fn beta(&self) -> f64 {
        1.0 - self.lambda2
    }

    pub fn is_reducible(&self) -> bool {
        self.beta() <= 1e-12
    }

    pub fn groups(&self) -> &[StateGroup] {
        &self.groups
    }

    pub fn group_of(&self, x: usize) -> &StateGroup {
        &self.groups[self.group_of[x]]
    }

    pub fn reconstruct(&self, i: usize, j: usize) -> f64 {
        self.pi[j] + self.d2() * self.v[i] * self.u[j]
    }
}

/// Writes a rank-2 chain as `P = 1 pi + lambda2 v u'`.
///
/// `lambda2 = trace(P) - 1`. `v` is scaled to unit `L2(pi)` norm with its first
/// entry of magnitude above `1e-9` positive, and `u` is scaled so that `u.v = 1`.
/// Reducible chains are decomposed around the stationary distribution of the
/// lazy chain started from uniform.
pub fn rank2_decompose(chain: &RowClassChain) -> Result<Rank2Decomposition> {
    check_rank(chain)?;
    let pi = stationary_distribution_with(chain, true)?;
    let atoms = chain.atoms();
    let pi_atom = chain.atom_values(pi.probs());
    let lens: Vec<f64> = atoms.iter().map(|a| a.len as f64).collect();
    let ncls = chain.num_classes();

    // rows of P - 1 pi, one per class, on atoms
    let excess: Vec<Vec<f64>> = (0..ncls)
        .map(|c| {
            atoms
                .iter()
                .zip(&pi_atom)
                .map(|(a, p)| a.col_mass[c] - p)
                .collect()
        })
        .collect();
    let max_excess = excess.iter().flatten().fold(0.0_f64, |m, e| m.max(e.abs()));
    let lambda2 = chain.trace() - 1.0;
    let k = chain.num_states();

    if max_excess <= IID_TOL {
        let groups_input = vec![(0.0, 0.0); atoms.len()];
        let (groups, group_of) = group_states(chain, &pi_atom, &groups_input);
        return Ok(Rank2Decomposition {
            pi,
            u: vec![0.0; k],
            v: vec![0.0; k],
            lambda2: 0.0,
            kind: DecompositionKind::Iid,
            groups,
            group_of,
        });
    }

    let dot = |x: &[f64], y: &[f64]| -> f64 {
        x.iter()
            .zip(y)
            .zip(&lens)
            .map(|((a, b), l)| a * b * l)
            .sum()
    };
    let pivot = (0..ncls)
        .max_by(|&i, &j| dot(&excess[i], &excess[i]).total_cmp(&dot(&excess[j], &excess[j])))
        .expect("at least one class");
    let b = excess[pivot].clone();
    let bb = dot(&b, &b);
    let coef: Vec<f64> = excess.iter().map(|e| dot(e, &b) / bb).collect();

    let residual = excess
        .iter()
        .zip(&coef)
        .flat_map(|(e, c)| e.iter().zip(&b).map(move |(ei, bi)| (ei - c * bi).abs()))
        .fold(0.0_f64, f64::max);
    if residual > INVARIANT_TOL {
        return Err(Error::Decomposition(format!(
            "P - 1 pi is not rank one (residual {residual:.3e})"
        )));
    }

    // trace(P - 1 pi) = sum_x a_x b_x
    let ab: f64 = atoms
        .iter()
        .zip(&b)
        .map(|(a, bj)| a.len as f64 * coef[a.class] * bj)
        .sum();
    if (ab - lambda2).abs() > INVARIANT_TOL {
        return Err(Error::Decomposition(format!(
            "trace(P) - 1 = {lambda2} disagrees with trace of the rank-one part {ab}"
        )));
    }

    let kind = if lambda2.abs() >= LAMBDA2_ZERO_TOL {
        DecompositionKind::Diagonalizable
    } else {
        DecompositionKind::NonDiagonalizable
    };

    let a_atom: Vec<f64> = atoms.iter().map(|a| coef[a.class]).collect();
    let mut norm_pi: f64 = a_atom
        .iter()
        .zip(&pi_atom)
        .zip(&lens)
        .map(|((a, p), l)| a * a * p * l)
        .sum();
    if norm_pi <= 0.0 {
        norm_pi = a_atom.iter().zip(&lens).map(|(a, l)| a * a * l).sum();
    }
    let mut scale = 1.0 / norm_pi.sqrt();
    if a_atom
        .iter()
        .find(|&&a| (a * scale).abs() > 1e-9)
        .is_some_and(|a| *a < 0.0)
    {
        scale = -scale;
    }
    let u_div = match kind {
        DecompositionKind::Diagonalizable => scale * ab,
        _ => scale,
    };
    let mut v_atom: Vec<f64> = a_atom.iter().map(|a| a * scale).collect();
    let mut u_atom: Vec<f64> = b.iter().map(|x| x / u_div).collect();
    snap_small(&mut v_atom);
    snap_small(&mut u_atom);

    let (groups, group_of) = group_states(
        chain,
        &pi_atom,
        &v_atom
            .iter()
            .copied()
            .zip(u_atom.iter().copied())
            .collect::<Vec<_>>(),
    );
    let decomp = Rank2Decomposition {
        pi,
        u: chain.expand_atoms(&u_atom),
        v: chain.expand_atoms(&v_atom),
        lambda2: if kind == DecompositionKind::Diagonalizable {
            lambda2
        } else {
            0.0
        },
        kind,
        groups,
        group_of,
    };
    check_invariants(chain, &decomp)?;
    Ok(decomp)
}

fn check_rank(chain: &RowClassChain) -> Result<()> {
    let ncls = chain.num_classes();
    if ncls < 3 {
        return Ok(());
    }
    let atoms = chain.atoms();
    let m = DMatrix::from_fn(ncls, atoms.len(), |c, j| {
        atoms[j].col_mass[c] * (atoms[j].len as f64).sqrt()
    });
    let sv = m.singular_values();
    let ratio = if sv.len() >= 3 { sv[2] / sv[0] } else { 0.0 };
    if ratio >= RANK_TOL {
        return Err(Error::NotRank2 { ratio });
    }
    Ok(())
}

fn snap_small(values: &mut [f64]) {
    let max = values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    values
        .iter_mut()
        .filter(|x| x.abs() <= SNAP_REL * max)
        .for_each(|x| *x = 0.0);
}

fn group_states(
    chain: &RowClassChain,
    pi_atom: &[f64],
    vu_atom: &[(f64, f64)],
) -> (Vec<StateGroup>, Vec<usize>) {
    let mut index: HashMap<(u64, u64, u64), usize> = HashMap::new();
    let mut groups: Vec<StateGroup> = Vec::new();
    let mut group_of = vec![0; chain.num_states()];
    for ((atom, &p), &(v, u)) in chain.atoms().iter().zip(pi_atom).zip(vu_atom) {
        let key = (p.to_bits(), v.to_bits(), u.to_bits());
        let g = *index.entry(key).or_insert_with(|| {
            groups.push(StateGroup {
                representative: atom.start,
                size: 0,
                pi: p,
                v,
                u,
            });
            groups.len() - 1
        });
        groups[g].size += atom.len;
        group_of[atom.start..atom.start + atom.len]
            .iter_mut()
            .for_each(|o| *o = g);
    }
    (groups, group_of)
}

fn check_invariants(chain: &RowClassChain, d: &Rank2Decomposition) -> Result<()> {
    let atoms = chain.atoms();
    let lens = atoms.iter().map(|a| a.len as f64);
    let mut pi_v = 0.0;
    let mut u_sum = 0.0;
    let mut u_v = 0.0;
    for (a, len) in atoms.iter().zip(lens) {
        let x = a.start;
        pi_v += len * d.pi[x] * d.v[x];
        u_sum += len * d.u[x];
        u_v += len * d.u[x] * d.v[x];
    }
    let target_uv = if d.kind == DecompositionKind::Diagonalizable {
        1.0
    } else {
        0.0
    };
    for (name, got, want) in [
        ("pi.v", pi_v, 0.0),
        ("u.1", u_sum, 0.0),
        ("u.v", u_v, target_uv),
    ] {
        if (got - want).abs() > INVARIANT_TOL {
            return Err(Error::Decomposition(format!(
                "{name} = {got}, expected {want}"
            )));
        }
    }
    let class_v: Vec<f64> = {
        let mut cv = vec![0.0; chain.num_classes()];
        for a in atoms {
            cv[a.class] = d.v[a.start];
        }
        cv
    };
    for a in atoms {
        for (c, &m) in a.col_mass.iter().enumerate() {
            let rebuilt = d.pi[a.start] + d.d2() * class_v[c] * d.u[a.start];
            if (rebuilt - m).abs() > INVARIANT_TOL
                || !(-INVARIANT_TOL..=1.0 + INVARIANT_TOL).contains(&rebuilt)
            {
                return Err(Error::Decomposition(format!(
                    "reconstructed entry {rebuilt} for class {c}, column {} (actual {m})",
                    a.start
                )));
            }
        }
    }
    Ok(())
}
