//! Compact Markov chains whose transition matrix has few distinct rows.
//!
//! A [`RowClassChain`] stores each distinct row once (a *row class*) as a list
//! of constant-mass column runs, plus a map from state to row class. Every
//! family used in the experiments has at most a handful of row classes, so
//! stationary distributions, traces, TV gaps and rank-2 decompositions are
//! computed on *atoms*: maximal state intervals on which the row class and the
//! mass of every row class are constant. Chains with `K` in the tens of
//! thousands stay cheap.

mod decompose;
mod families;
mod io;
mod stationary;

pub use decompose::{rank2_decompose, DecompositionKind, Rank2Decomposition, StateGroup};
pub use families::{
    build_family, build_iid, build_p1, build_p2, build_p3, build_periodic_kronecker,
    build_reducible_two_block, build_sticky, k1_for_kappa, Family,
};
pub use io::ChainFile;
pub use stationary::{stationary_distribution, stationary_distribution_with};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a distribution.
pub const MASS_TOL: f64 = 1e-12;

/// Largest state count for which a dense matrix is materialized.
pub const DENSE_MAX: usize = 4096;

/// A probability vector over states `0..K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0 || **p > 1.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "entry {i} = {p} outside [0,1]"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn has_zero_support(&self) -> bool {
        self.probs.contains(&0.0)
    }

    /// Constant-mass runs covering the support.
    pub fn to_runs(&self) -> Vec<Run> {
        runs_from_dense(&self.probs)
    }
}

impl std::ops::Index<usize> for Distribution {
    type Output = f64;

    fn index(&self, x: usize) -> &f64 {
        &self.probs[x]
    }
}

/// `len` consecutive columns starting at `start`, each carrying `mass`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Run {
    pub start: usize,
    pub len: usize,
    pub mass: f64,
}

impl Run {
    pub fn new(start: usize, len: usize, mass: f64) -> Self {
        Self { start, len, mass }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// One distinct transition row, stored as sorted non-overlapping runs.
/// Columns not covered by a run have zero mass.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockRow {
    runs: Vec<Run>,
}

impl BlockRow {
    pub fn new(k: usize, runs: Vec<Run>) -> Result<Self> {
        let mut runs: Vec<Run> = runs.into_iter().filter(|r| r.len > 0).collect();
        runs.sort_by_key(|r| r.start);
        let mut prev_end = 0;
        for r in &runs {
            if r.start < prev_end {
                return Err(Error::InvalidDistribution(format!(
                    "overlapping run at column {}",
                    r.start
                )));
            }
            if r.end() > k {
                return Err(Error::InvalidDistribution(format!(
                    "run [{}, {}) exceeds state count {k}",
                    r.start,
                    r.end()
                )));
            }
            if !r.mass.is_finite() || r.mass < 0.0 || r.mass > 1.0 {
                return Err(Error::InvalidDistribution(format!(
                    "run mass {} outside [0,1]",
                    r.mass
                )));
            }
            prev_end = r.end();
        }
        let row = Self { runs };
        let total = row.total();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!("row sums to {total}")));
        }
        Ok(row)
    }

    /// Uniform mass over `[start, start + len)`.
    pub fn uniform_block(k: usize, start: usize, len: usize) -> Result<Self> {
        Self::new(k, vec![Run::new(start, len, 1.0 / len as f64)])
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn total(&self) -> f64 {
        self.runs.iter().map(|r| r.len as f64 * r.mass).sum()
    }

    pub fn mass_at(&self, j: usize) -> f64 {
        let idx = self.runs.partition_point(|r| r.end() <= j);
        match self.runs.get(idx) {
            Some(r) if r.start <= j => r.mass,
            _ => 0.0,
        }
    }

    pub fn to_dense(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; k];
        for r in &self.runs {
            out[r.start..r.end()].iter_mut().for_each(|m| *m = r.mass);
        }
        out
    }
}

/// Maximal interval of states on which the assigned row class and the mass of
/// every row class are constant.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub start: usize,
    pub len: usize,
    /// Row class of the states in this atom.
    pub class: usize,
    /// Mass each row class puts on every column of this atom.
    pub col_mass: Vec<f64>,
}

/// Transition matrix with few distinct rows.
#[derive(Clone, Debug)]
pub struct RowClassChain {
    k: usize,
    classes: Vec<BlockRow>,
    assignment: Vec<usize>,
    atoms: Vec<Atom>,
}

impl RowClassChain {
    pub fn new(k: usize, classes: Vec<BlockRow>, assignment: Vec<usize>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter(
                "state count must be positive".into(),
            ));
        }
        if assignment.len() != k {
            return Err(Error::InvalidParameter(format!(
                "assignment covers {} states, expected {k}",
                assignment.len()
            )));
        }
        let mut used = vec![false; classes.len()];
        for (x, &c) in assignment.iter().enumerate() {
            match used.get_mut(c) {
                Some(u) => *u = true,
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "state {x} assigned to unknown class {c}"
                    )))
                }
            }
        }
        if let Some(c) = used.iter().position(|u| !u) {
            return Err(Error::InvalidParameter(format!(
                "row class {c} is never used"
            )));
        }
        for (c, row) in classes.iter().enumerate() {
            if row.runs.last().is_some_and(|r| r.end() > k) {
                return Err(Error::InvalidParameter(format!(
                    "row class {c} exceeds state count"
                )));
            }
        }
        let atoms = build_atoms(k, &classes, &assignment);
        Ok(Self {
            k,
            classes,
            assignment,
            atoms,
        })
    }

    /// Groups identical dense rows into row classes.
    pub fn from_dense_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let mut classes: Vec<BlockRow> = Vec::new();
        let mut reps: Vec<&Vec<f64>> = Vec::new();
        let mut assignment = Vec::with_capacity(k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidParameter(format!(
                    "row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            match reps.iter().position(|r| *r == row) {
                Some(c) => assignment.push(c),
                None => {
                    classes.push(BlockRow::new(k, runs_from_dense(row))?);
                    reps.push(row);
                    assignment.push(classes.len() - 1);
                }
            }
        }
        Self::new(k, classes, assignment)
    }

    pub fn num_states(&self) -> usize {
        self.k
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[BlockRow] {
        &self.classes
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn class_of(&self, x: usize) -> usize {
        self.assignment[x]
    }

    pub fn row(&self, x: usize) -> &BlockRow {
        &self.classes[self.assignment[x]]
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.row(i).mass_at(j)
    }

    pub fn trace(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.len as f64 * a.col_mass[a.class])
            .sum()
    }

    /// Dense `K x K` matrix; refused above [`DENSE_MAX`] states.
    pub fn to_dense(&self) -> Result<Vec<Vec<f64>>> {
        if self.k > DENSE_MAX {
            return Err(Error::GuardExceeded(format!(
                "dense matrix requested for K = {} > {DENSE_MAX}",
                self.k
            )));
        }
        let dense_classes: Vec<Vec<f64>> =
            self.classes.iter().map(|c| c.to_dense(self.k)).collect();
        Ok(self
            .assignment
            .iter()
            .map(|&c| dense_classes[c].clone())
            .collect())
    }

    /// Expands a per-atom value to a per-state vector.
    pub(crate) fn expand_atoms(&self, per_atom: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for (a, &val) in self.atoms.iter().zip(per_atom) {
            out[a.start..a.start + a.len]
                .iter_mut()
                .for_each(|o| *o = val);
        }
        out
    }

    /// Per-atom values of a per-state vector (first state of each atom).
    pub(crate) fn atom_values(&self, per_state: &[f64]) -> Vec<f64> {
        self.atoms.iter().map(|a| per_state[a.start]).collect()
    }
}

fn build_atoms(k: usize, classes: &[BlockRow], assignment: &[usize]) -> Vec<Atom> {
    let mut cuts = vec![0, k];
    for row in classes {
        for r in &row.runs {
            cuts.push(r.start);
            cuts.push(r.end());
        }
    }
    cuts.extend((1..k).filter(|&i| assignment[i] != assignment[i - 1]));
    cuts.sort_unstable();
    cuts.dedup();
    cuts.windows(2)
        .map(|w| Atom {
            start: w[0],
            len: w[1] - w[0],
            class: assignment[w[0]],
            col_mass: classes.iter().map(|c| c.mass_at(w[0])).collect(),
        })
        .collect()
}

pub(crate) fn runs_from_dense(row: &[f64]) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    for (j, &m) in row.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        match runs.last_mut() {
            Some(r) if r.end() == j && r.mass == m => r.len += 1,
            _ => runs.push(Run::new(j, 1, m)),
        }
    }
    runs
}
