//! Configuration ingestion: an optional TOML file supplies the seed,
//! exactness cutoff, valency sequence and generator tables; command-line
//! flags override file values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use folner_core::dp::{Valencies, ValencyFormula};
use folner_core::mother::{DirectedSpec, LevelData};
use folner_core::perm::Permutation;
use folner_core::words::{Context, GroupWord, Letter, SignedLetter, ValencySequence};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub exact_index: Option<usize>,
    pub valencies: Option<ValencyTable>,
    #[serde(default)]
    pub rooted: Vec<RootedGen>,
    #[serde(default)]
    pub directed: Vec<DirectedGen>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValencyTable {
    pub constant: Option<usize>,
    pub prefix: Option<Vec<usize>>,
    pub period: Option<Vec<usize>>,
    pub formula: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootedGen {
    pub name: String,
    pub sigma: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectedGen {
    pub name: String,
    #[serde(default)]
    pub prefix: Vec<LevelTuple>,
    pub period: Vec<LevelTuple>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelTuple {
    pub a: Vec<String>,
    pub rho: String,
}

pub fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("cannot read config {p:?}: {e}")))?;
            toml::from_str(&text)
                .map_err(|e| CliError::usage(format!("cannot parse config {p:?}: {e}")))
        }
    }
}

/// Parses a valency argument: `constant:5`, `prefix:3,4;period:5,6`,
/// `period:5,6`, or `formula:sublog`.
pub fn parse_valencies_arg(s: &str) -> Result<Valencies, CliError> {
    if let Some(d) = s.strip_prefix("constant:") {
        let d: usize = d
            .parse()
            .map_err(|_| CliError::usage(format!("bad constant valency {d:?}")))?;
        return Ok(Valencies::Periodic(
            ValencySequence::constant(d).map_err(CliError::from_core)?,
        ));
    }
    if let Some(name) = s.strip_prefix("formula:") {
        return match name {
            "sublog" => Ok(Valencies::Formula(ValencyFormula::SublogRootLog)),
            other => Err(CliError::usage(format!(
                "unknown valency formula {other:?}; builtins: sublog = 5+floor(sqrt(ln(k+2)))"
            ))),
        };
    }
    let mut prefix = Vec::new();
    let mut period = Vec::new();
    for part in s.split(';') {
        if let Some(list) = part.strip_prefix("prefix:") {
            prefix = parse_usize_list(list)?;
        } else if let Some(list) = part.strip_prefix("period:") {
            period = parse_usize_list(list)?;
        } else {
            return Err(CliError::usage(format!(
                "bad valency spec {s:?}; expected constant:<d>, prefix:..;period:.., or formula:<name>"
            )));
        }
    }
    if period.is_empty() {
        return Err(CliError::usage("valency spec needs a period".into()));
    }
    Ok(Valencies::Periodic(
        ValencySequence::new(prefix, period).map_err(CliError::from_core)?,
    ))
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::usage(format!("bad integer {t:?}")))
        })
        .collect()
}

pub fn valencies_from_table(table: &ValencyTable) -> Result<Valencies, CliError> {
    if let Some(d) = table.constant {
        return Ok(Valencies::Periodic(
            ValencySequence::constant(d).map_err(CliError::from_core)?,
        ));
    }
    if let Some(name) = &table.formula {
        return match name.as_str() {
            "sublog" => Ok(Valencies::Formula(ValencyFormula::SublogRootLog)),
            other => Err(CliError::usage(format!("unknown valency formula {other:?}"))),
        };
    }
    let period = table
        .period
        .clone()
        .ok_or_else(|| CliError::usage("valencies table needs constant, period or formula".into()))?;
    Ok(Valencies::Periodic(
        ValencySequence::new(table.prefix.clone().unwrap_or_default(), period)
            .map_err(CliError::from_core)?,
    ))
}

/// A named generator table over a fixed valency sequence, for word input.
pub struct GeneratorTable {
    pub ctx: Arc<Context>,
    letters: BTreeMap<String, Letter>,
}

impl GeneratorTable {
    /// Builds the table from the config, or a small default family when
    /// the config declares no generators: `a` = rooted (1 2 3), `c` = a
    /// rooted full-support even cycle, `b` = a directed element with one
    /// nontrivial component and spine permutation.
    pub fn build(valencies: &ValencySequence, cfg: &FileConfig) -> Result<GeneratorTable, CliError> {
        let ctx = Context::new(valencies.clone());
        let mut letters = BTreeMap::new();
        if cfg.rooted.is_empty() && cfg.directed.is_empty() {
            let d = valencies.degree(0);
            if d < 4 {
                return Err(CliError::usage(format!(
                    "default generator table needs degree >= 4, got {d}; supply generators in the config"
                )));
            }
            let a = Permutation::from_cycles(d, &[vec![1, 2, 3]]).expect("valid cycle");
            letters.insert("a".to_string(), Letter::Rooted(a));
            let big: Vec<usize> = if d % 2 == 1 {
                (1..=d).collect()
            } else {
                (2..=d).collect()
            };
            let c = Permutation::from_cycles(d, &[big]).expect("valid cycle");
            debug_assert!(c.is_even());
            letters.insert("c".to_string(), Letter::Rooted(c));
            let span = valencies.prefix().len() + valencies.period().len();
            let mut data = Vec::with_capacity(span);
            for i in 0..span {
                let di = valencies.degree(i);
                let dn = valencies.degree(i + 1);
                let mut comps = vec![Permutation::identity(dn); di - 1];
                comps[0] = Permutation::from_cycles(dn, &[vec![1, 2, 3]]).expect("valid cycle");
                let rho = Permutation::from_cycles(di, &[vec![2, 3, 4]]).expect("valid cycle");
                data.push(LevelData { a: comps, rho });
            }
            let prefix = data[..valencies.prefix().len()].to_vec();
            let period = data[valencies.prefix().len()..].to_vec();
            let spec = DirectedSpec::new(valencies.clone(), prefix, period)
                .map_err(CliError::from_core)?;
            letters.insert("b".to_string(), Letter::Directed(Arc::new(spec)));
        } else {
            let d0 = valencies.degree(0);
            for gen in &cfg.rooted {
                let sigma = Permutation::parse(d0, &gen.sigma).map_err(CliError::from_core)?;
                if !sigma.is_even() {
                    return Err(CliError::usage(format!(
                        "rooted generator {} must be even, got {sigma}",
                        gen.name
                    )));
                }
                letters.insert(gen.name.clone(), Letter::Rooted(sigma));
            }
            for gen in &cfg.directed {
                let parse_level = |i: usize, tuple: &LevelTuple| -> Result<LevelData, CliError> {
                    let di = valencies.degree(i);
                    let dn = valencies.degree(i + 1);
                    if tuple.a.len() != di - 1 {
                        return Err(CliError::usage(format!(
                            "directed generator {}: level {i} needs {} components",
                            gen.name,
                            di - 1
                        )));
                    }
                    let a = tuple
                        .a
                        .iter()
                        .map(|s| Permutation::parse(dn, s).map_err(CliError::from_core))
                        .collect::<Result<Vec<_>, _>>()?;
                    let rho = Permutation::parse(di, &tuple.rho).map_err(CliError::from_core)?;
                    Ok(LevelData { a, rho })
                };
                let prefix = gen
                    .prefix
                    .iter()
                    .enumerate()
                    .map(|(i, t)| parse_level(i, t))
                    .collect::<Result<Vec<_>, _>>()?;
                let period = gen
                    .period
                    .iter()
                    .enumerate()
                    .map(|(i, t)| parse_level(gen.prefix.len() + i, t))
                    .collect::<Result<Vec<_>, _>>()?;
                let spec = DirectedSpec::new(valencies.clone(), prefix, period)
                    .map_err(CliError::from_core)?;
                letters.insert(gen.name.clone(), Letter::Directed(Arc::new(spec)));
            }
        }
        Ok(GeneratorTable { ctx, letters })
    }

    pub fn names(&self) -> Vec<&str> {
        self.letters.keys().map(|s| s.as_str()).collect()
    }

    /// Parses a word: whitespace-separated generator names, each with an
    /// optional `^-1` suffix.
    pub fn parse_word(&self, text: &str) -> Result<GroupWord, CliError> {
        let mut signed = Vec::new();
        for token in text.split_whitespace() {
            let (name, inverse) = match token.strip_suffix("^-1") {
                Some(base) => (base, true),
                None => (token, false),
            };
            let letter = self.letters.get(name).ok_or_else(|| {
                CliError::usage(format!(
                    "unknown generator {name:?}; table has {:?}",
                    self.names()
                ))
            })?;
            signed.push(SignedLetter::new(letter.clone(), inverse));
        }
        GroupWord::from_letters(&self.ctx, 0, signed).map_err(CliError::from_core)
    }
}
