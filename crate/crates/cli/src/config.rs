use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use missing_mass::bounds::BoundConstants;
use missing_mass::chains::{
    build_family, build_iid, build_p1, build_p2, build_p3, build_periodic_kronecker,
    build_reducible_two_block, build_sticky, Distribution, Family, RowClassChain,
};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "MISSING_MASS_SEED";
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_TRIALS: usize = 10_000;
pub const DEFAULT_ETA: f64 = 0.1;
pub const DEFAULT_KAPPA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Iid,
    Sticky,
    P1,
    P2,
    P3,
    Periodic,
    Reducible,
    /// Chain read from `--file` (JSON, or a dense CSV matrix).
    File,
}

impl FamilyArg {
    pub fn name(self) -> &'static str {
        match self {
            FamilyArg::Iid => "iid",
            FamilyArg::Sticky => "sticky",
            FamilyArg::P1 => "p1",
            FamilyArg::P2 => "p2",
            FamilyArg::P3 => "p3",
            FamilyArg::Periodic => "periodic",
            FamilyArg::Reducible => "reducible",
            FamilyArg::File => "file",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Experiment knobs shared by every subcommand. Each one can also be set in
/// the JSON config file under the same (kebab-case) name.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Knobs {
    /// Chain family.
    #[arg(long, global = true, value_enum)]
    pub family: Option<FamilyArg>,
    /// Chain file for `--family file` (`.csv` for a dense matrix, JSON otherwise).
    #[arg(long, global = true)]
    pub file: Option<PathBuf>,
    /// Number of states; defaults to the sample size.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Connector count of P1-P3; overrides `--kappa`.
    #[arg(long, global = true)]
    pub k1: Option<usize>,
    /// Connector exponent: K1 is the even integer nearest K^kappa.
    #[arg(long, global = true)]
    pub kappa: Option<f64>,
    /// Sample size.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Sample sizes: `a..b` (doubling from a up to b) or a comma list.
    #[arg(long, global = true)]
    pub n_grid: Option<String>,
    /// Period of the Kronecker chain.
    #[arg(long, global = true)]
    pub r: Option<usize>,
    /// Leave probability of the sticky chain.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Base seed; falls back to the MISSING_MASS_SEED environment variable.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Exponent c in (0, 0.5) of the TV-gap corollary.
    #[arg(long, global = true)]
    pub c: Option<f64>,
    /// Moment order of the weighted-norm tail bound (default 3 ln n).
    #[arg(long, global = true)]
    pub q: Option<f64>,
    /// Constant of the weighted-norm tail bound.
    #[arg(long = "c-naor", visible_alias = "C", global = true)]
    #[serde(alias = "C")]
    pub c_naor: Option<f64>,
    #[arg(long, global = true)]
    pub c1: Option<f64>,
    #[arg(long, global = true)]
    pub c2: Option<f64>,
    /// Threshold for the general bound.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Emit one row per state class.
    #[arg(long, global = true)]
    pub per_state: bool,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Output path (stdout when absent).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( $dst.$f = $dst.$f.take().or($src.$f); )*
    };
}

impl Knobs {
    /// Fills every unset knob from `other`.
    pub fn merge(mut self, other: Knobs) -> Knobs {
        merge_fields!(self, other; family, file, k, k1, kappa, n, n_grid, r, eta, trials, seed, c, q, c_naor, c1, c2,
            delta, format, output);
        self.per_state |= other.per_state;
        self
    }

    pub fn from_file(path: &Path) -> Result<Knobs> {
        let file =
            File::open(path).with_context(|| format!("cannot open config {}", path.display()))?;
        serde_json::from_reader(BufReader::new(file))
            .with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}=`{v}` is not an unsigned integer")),
            Err(_) => Ok(DEFAULT_SEED),
        }
    }

    pub fn trials(&self) -> Result<usize> {
        let t = self.trials.unwrap_or(DEFAULT_TRIALS);
        if t < 2 {
            bail!("--trials must be at least 2, got {t}");
        }
        Ok(t)
    }

    pub fn kappa(&self) -> Result<f64> {
        let kappa = self.kappa.unwrap_or(DEFAULT_KAPPA);
        if !(kappa > 0.0 && kappa <= 1.0) {
            bail!("--kappa must lie in (0, 1], got {kappa}");
        }
        Ok(kappa)
    }

    pub fn family(&self) -> Result<FamilyArg> {
        self.family.context("--family is required")
    }

    pub fn require_n(&self) -> Result<usize> {
        self.n.context("--n is required")
    }

    /// `--n-grid` if given, else the single size `--n`, else `default`.
    pub fn grid(&self, default: Option<&str>) -> Result<Vec<usize>> {
        match (&self.n_grid, self.n, default) {
            (Some(spec), _, _) => parse_grid(spec),
            (None, Some(n), _) => Ok(vec![n]),
            (None, None, Some(spec)) => parse_grid(spec),
            (None, None, None) => bail!("--n or --n-grid is required"),
        }
    }

    pub fn constants(&self) -> Result<BoundConstants> {
        let d = BoundConstants::default();
        let consts = BoundConstants {
            c1: self.c1.unwrap_or(d.c1),
            c2: self.c2.unwrap_or(d.c2),
            c_naor: self.c_naor.unwrap_or(d.c_naor),
            c_exponent: self.c.unwrap_or(d.c_exponent),
            q: self.q,
        };
        consts.validate()?;
        Ok(consts)
    }

    /// Chain with `K = --k`, or `K = n` when `--k` is absent.
    pub fn chain(&self, n: Option<usize>) -> Result<RowClassChain> {
        let family = self.family()?;
        if family == FamilyArg::File {
            let path = self.file.as_ref().context("--family file needs --file")?;
            return load_chain(path);
        }
        let k = self
            .k
            .or(n)
            .context("--k or --n is required to size the chain")?;
        let chain = match family {
            FamilyArg::Iid => build_iid(&Distribution::uniform(k))?,
            FamilyArg::Sticky => build_sticky(k, self.eta.unwrap_or(DEFAULT_ETA))?,
            FamilyArg::P1 | FamilyArg::P2 | FamilyArg::P3 => match self.k1 {
                Some(k1) => match family {
                    FamilyArg::P1 => build_p1(k, k1)?,
                    FamilyArg::P2 => build_p2(k, k1)?,
                    _ => build_p3(k, k1)?,
                },
                None => {
                    let fam = match family {
                        FamilyArg::P1 => Family::P1,
                        FamilyArg::P2 => Family::P2,
                        _ => Family::P3,
                    };
                    build_family(fam, k, self.kappa()?, 2, DEFAULT_ETA)?
                }
            },
            FamilyArg::Periodic => build_periodic_kronecker(k, self.r.unwrap_or(2))?,
            FamilyArg::Reducible => build_reducible_two_block(k)?,
            FamilyArg::File => unreachable!(),
        };
        Ok(chain)
    }
}

pub fn load_chain(path: &Path) -> Result<RowClassChain> {
    let file =
        File::open(path).with_context(|| format!("cannot open chain file {}", path.display()))?;
    let reader = BufReader::new(file);
    let chain = if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        RowClassChain::from_csv_reader(reader)
    } else {
        RowClassChain::from_json_reader(reader)
    };
    chain.with_context(|| format!("invalid chain file {}", path.display()))
}

/// Parses `a..b` (a, 2a, 4a, ... up to b) or `a,b,c`.
pub fn parse_grid(spec: &str) -> Result<Vec<usize>> {
    let num = |s: &str| -> Result<usize> {
        s.trim()
            .parse::<usize>()
            .with_context(|| format!("bad grid entry `{}` in `{spec}`", s.trim()))
    };
    let grid: Vec<usize> = if let Some((a, b)) = spec.split_once("..") {
        let (mut n, hi) = (num(a)?, num(b)?);
        if n == 0 {
            bail!("grid `{spec}` must start above 0");
        }
        let mut out = Vec::new();
        while n <= hi {
            out.push(n);
            n *= 2;
        }
        out
    } else {
        spec.split(',').map(num).collect::<Result<_>>()?
    };
    if grid.is_empty() {
        bail!("grid `{spec}` is empty");
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        bail!("grid `{spec}` must be strictly increasing");
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("64..512").unwrap(), vec![64, 128, 256, 512]);
        assert_eq!(parse_grid("1024..16384").unwrap().len(), 5);
        assert_eq!(parse_grid("3, 5,9").unwrap(), vec![3, 5, 9]);
        assert!(parse_grid("5,3").is_err());
        assert!(parse_grid("0..8").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn flags_win_over_config() {
        let cli = Knobs {
            n: Some(10),
            ..Knobs::default()
        };
        let cfg: Knobs =
            serde_json::from_str(r#"{"n": 20, "k1": 4, "C": 2.0, "n-grid": "8..32"}"#).unwrap();
        let merged = cli.merge(cfg);
        assert_eq!(merged.n, Some(10));
        assert_eq!(merged.k1, Some(4));
        assert_eq!(merged.c_naor, Some(2.0));
        assert_eq!(merged.n_grid.as_deref(), Some("8..32"));
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let err = serde_json::from_str::<Knobs>("{\n  \"n\": 3,\n  \"nn\": 4\n}").unwrap_err();
        assert_eq!(err.line(), 3);
    }
}
