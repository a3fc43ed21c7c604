use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{BlockRow, Distribution, RowClassChain, Run};
use crate::error::{Error, Result};

/// The chain families used throughout the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Iid,
    Sticky,
    P1,
    P2,
    P3,
    Periodic,
    Reducible,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Iid,
        Family::Sticky,
        Family::P1,
        Family::P2,
        Family::P3,
        Family::Periodic,
        Family::Reducible,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Iid => "iid",
            Family::Sticky => "sticky",
            Family::P1 => "p1",
            Family::P2 => "p2",
            Family::P3 => "p3",
            Family::Periodic => "periodic",
            Family::Reducible => "reducible",
        }
    }

    /// Whether the family is parameterized by the connector count `K1`.
    pub fn uses_k1(self) -> bool {
        matches!(self, Family::P1 | Family::P2 | Family::P3)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown chain family `{s}`")))
    }
}

/// Connector count for `K = n` states and `K1 ~ n^kappa`: the even integer
/// nearest to `k^kappa`, clamped to `[2, k]`.
pub fn k1_for_kappa(k: usize, kappa: f64) -> usize {
    let target = (k as f64).powf(kappa);
    let even = 2.0 * (target / 2.0).round();
    let hi = k - k % 2;
    (even as usize).clamp(2, hi.max(2))
}

/// Builds a family member with `K = k` states.
///
/// `kappa` sets `K1` for P1-P3, `r` is the period of the Kronecker chain and
/// `eta` the leave probability of the sticky chain.
pub fn build_family(
    family: Family,
    k: usize,
    kappa: f64,
    r: usize,
    eta: f64,
) -> Result<RowClassChain> {
    match family {
        Family::Iid => build_iid(&Distribution::uniform(k)),
        Family::Sticky => build_sticky(k, eta),
        Family::P1 => build_p1(k, k1_for_kappa(k, kappa)),
        Family::P2 => build_p2(k, k1_for_kappa(k, kappa)),
        Family::P3 => build_p3(k, k1_for_kappa(k, kappa)),
        Family::Periodic => build_periodic_kronecker(k, r),
        Family::Reducible => build_reducible_two_block(k),
    }
}

/// Every row equal to `pi`.
pub fn build_iid(pi: &Distribution) -> Result<RowClassChain> {
    if pi.has_zero_support() {
        warn!("iid chain built from a distribution with zero-mass states");
    }
    let k = pi.len();
    let row = BlockRow::new(k, pi.to_runs())?;
    RowClassChain::new(k, vec![row], vec![0; k])
}

/// `P_ii = 1 - eta`, `P_ij = eta / (K - 1)` otherwise.
pub fn build_sticky(k: usize, eta: f64) -> Result<RowClassChain> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "sticky chain needs K >= 2, got {k}"
        )));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sticky chain needs eta in (0,1), got {eta}"
        )));
    }
    let off = eta / (k - 1) as f64;
    let classes = (0..k)
        .map(|i| {
            BlockRow::new(
                k,
                vec![
                    Run::new(0, i, off),
                    Run::new(i, 1, 1.0 - eta),
                    Run::new(i + 1, k - i - 1, off),
                ],
            )
        })
        .collect::<Result<Vec<_>>>()?;
    RowClassChain::new(k, classes, (0..k).collect())
}

fn check_connected_family(name: &str, k: usize, k1: usize) -> Result<()> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "{name} needs an even K >= 2, got {k}"
        )));
    }
    if k1 < 2 || !k1.is_multiple_of(2) || k1 > k {
        return Err(Error::InvalidParameter(format!(
            "{name} needs an even K1 with 2 <= K1 <= K, got K1 = {k1} for K = {k}"
        )));
    }
    Ok(())
}

/// Assembles a chain from consecutive row blocks `(class, row count)`,
/// dropping empty blocks and classes no state uses.
fn from_row_blocks(
    k: usize,
    classes: Vec<BlockRow>,
    blocks: &[(usize, usize)],
) -> Result<RowClassChain> {
    let mut remap = vec![usize::MAX; classes.len()];
    let mut kept = Vec::new();
    let mut assignment = Vec::with_capacity(k);
    for &(class, count) in blocks.iter().filter(|b| b.1 > 0) {
        if remap[class] == usize::MAX {
            remap[class] = kept.len();
            kept.push(classes[class].clone());
        }
        assignment.extend(std::iter::repeat_n(remap[class], count));
    }
    RowClassChain::new(k, kept, assignment)
}

/// States `1..K/2` spread mass `a = 2/(K+K1)` over columns `1..(K+K1)/2`;
/// the rest over columns `(K-K1)/2+1..K`.
pub fn build_p1(k: usize, k1: usize) -> Result<RowClassChain> {
    check_connected_family("P1", k, k1)?;
    let a = 2.0 / (k + k1) as f64;
    let width = (k + k1) / 2;
    let upper = BlockRow::new(k, vec![Run::new(0, width, a)])?;
    let lower = BlockRow::new(k, vec![Run::new((k - k1) / 2, width, a)])?;
    from_row_blocks(k, vec![upper, lower], &[(0, k / 2), (1, k / 2)])
}

/// Rows are uniform on one half of the columns; the `K1` middle states cross
/// over to the opposite half.
pub fn build_p2(k: usize, k1: usize) -> Result<RowClassChain> {
    check_connected_family("P2", k, k1)?;
    let first = BlockRow::uniform_block(k, 0, k / 2)?;
    let second = BlockRow::uniform_block(k, k / 2, k / 2)?;
    let outer = (k - k1) / 2;
    from_row_blocks(
        k,
        vec![first, second],
        &[(0, outer), (1, k1 / 2), (0, k1 / 2), (1, outer)],
    )
}

/// Outer states are uniform on their own half; the `K1` middle states are
/// uniform on all columns.
pub fn build_p3(k: usize, k1: usize) -> Result<RowClassChain> {
    check_connected_family("P3", k, k1)?;
    let first = BlockRow::uniform_block(k, 0, k / 2)?;
    let full = BlockRow::uniform_block(k, 0, k)?;
    let second = BlockRow::uniform_block(k, k / 2, k / 2)?;
    let outer = (k - k1) / 2;
    from_row_blocks(
        k,
        vec![first, full, second],
        &[(0, outer), (1, k1), (2, outer)],
    )
}

/// Right-shift permutation on `r` blocks, Kronecker with a uniform
/// `(n/r) x (n/r)` block of mass `r/n`.
pub fn build_periodic_kronecker(n_states: usize, r: usize) -> Result<RowClassChain> {
    if r < 2 {
        return Err(Error::InvalidParameter(format!(
            "period must be >= 2, got {r}"
        )));
    }
    if !n_states.is_multiple_of(r) {
        return Err(Error::InvalidParameter(format!(
            "period {r} does not divide {n_states} states"
        )));
    }
    let m = n_states / r;
    let classes = (0..r)
        .map(|b| BlockRow::uniform_block(n_states, ((b + 1) % r) * m, m))
        .collect::<Result<Vec<_>>>()?;
    let assignment = (0..n_states).map(|x| x / m).collect();
    RowClassChain::new(n_states, classes, assignment)
}

/// Two closed halves, each uniform within itself.
pub fn build_reducible_two_block(k: usize) -> Result<RowClassChain> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "two-block chain needs an even K >= 2, got {k}"
        )));
    }
    let first = BlockRow::uniform_block(k, 0, k / 2)?;
    let second = BlockRow::uniform_block(k, k / 2, k / 2)?;
    from_row_blocks(k, vec![first, second], &[(0, k / 2), (1, k / 2)])
}
