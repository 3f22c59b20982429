//! Command-line front end: subcommand dispatch over the library, seeded
//! reproducible runs, and CSV/JSON report emission.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 usage error,
//! 3 resource limit exceeded.

mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num::{BigRational, One};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use folner_core::dp::{decay_report, epsilon_sequence, Valencies};
use folner_core::folner::{
    brute_force_counts, cardinalities, delta_sequence, folner_function_bound,
    profile_mul_generator, recognize_word, CardinalityEstimate, ExactnessPolicy, FolnerProfile,
    MulOutcome, ProfileFactor, ProfileSampler, Recognized, Stratum,
};
use folner_core::mother::{
    double_embed, find_quotient_twist, is_transitive, level_generators, orbit_of_point,
    random_directed_spec, MotherGroup,
};
use folner_core::words::{Context, GroupWord, Letter, SignedLetter, ValencySequence};

use config::{load_config, parse_valencies_arg, valencies_from_table, GeneratorTable};
use report::{check, ratio_fields, ratio_string, write_csv, Check, Report};

pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: String) -> Self {
        CliError { code, message }
    }

    pub fn usage(message: String) -> Self {
        CliError::new(2, message)
    }

    pub fn resource(message: String) -> Self {
        CliError::new(3, message)
    }

    pub fn from_core(e: folner_core::Error) -> Self {
        match e {
            folner_core::Error::ResourceLimit(_) => CliError::resource(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "folner",
    version,
    about = "Exact Folner-set combinatorics of directed tree-automorphism groups"
)]
struct Cli {
    /// Seed for all randomized subcommands (falls back to FOLNER_SEED,
    /// then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Also write the table rows as CSV to this path.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,

    /// TOML configuration file (seed, exactness, valencies, generators);
    /// flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Index past which ratio tables switch from exact rationals to
    /// floats.
    #[arg(long, global = true)]
    exact_index: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Boundary-ratio table of the constant-degree sets.
    Delta(DeltaArgs),
    /// Escape-ratio table over a valency sequence.
    Epsilon(EpsilonArgs),
    /// Exact interior/boundary/total cardinalities.
    Cardinality(CardinalityArgs),
    /// Stratified sampling with calibration against the exact ratio.
    Sample(SampleArgs),
    /// Membership/interior test for a word or a serialized profile.
    Member(MemberArgs),
    /// Sampled generator-multiplication equivalence suite.
    LemmaCheck(LemmaCheckArgs),
    /// Exhaustive direction-value oracle versus the exact recursion.
    Oracle(OracleArgs),
    /// Folner-function upper bound realized by the nested sets.
    Folfun(FolfunArgs),
    /// Index-doubling embedding checks.
    Embed(EmbedArgs),
    /// Orbit transitivity of generator level permutations.
    Orbit(OrbitArgs),
    /// Escape-ratio decay table over growing depth.
    Decay(DecayArgs),
}

#[derive(Args)]
struct DeltaArgs {
    #[arg(long, default_value_t = 5)]
    d: usize,
    #[arg(long, default_value_t = 10)]
    k_max: usize,
}

#[derive(Args)]
struct EpsilonArgs {
    /// `constant:<d>` | `prefix:a,b;period:c,d` | `formula:sublog`
    #[arg(long)]
    valencies: Option<String>,
    #[arg(long, alias = "K", default_value_t = 10)]
    big_k: usize,
}

#[derive(Args)]
struct CardinalityArgs {
    #[arg(long, default_value_t = 5)]
    d: usize,
    #[arg(long, default_value_t = 6)]
    k_max: usize,
    /// Bit budget for the exact integers.
    #[arg(long, default_value_t = 1 << 21)]
    max_bits: u64,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, default_value_t = 5)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// member | interior | boundary
    #[arg(long, default_value = "member")]
    stratum: String,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
}

#[derive(Args)]
struct MemberArgs {
    /// Word over the generator table, e.g. "a b^-1 c".
    #[arg(long)]
    word: Option<String>,
    /// Depth parameter of the target set.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Constant degree when no config supplies valencies.
    #[arg(long)]
    d: Option<usize>,
    /// Serialized profile file to test instead of a word.
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Args)]
struct LemmaCheckArgs {
    #[arg(long, default_value_t = 5)]
    d: usize,
    #[arg(long, alias = "k", default_value_t = 2)]
    k_max: usize,
    /// Trials per depth.
    #[arg(long, default_value_t = 1000)]
    n: usize,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Mixed internal degrees, e.g. "2,3" (overrides --d/--k).
    #[arg(long)]
    degrees: Option<String>,
    #[arg(long, default_value_t = 40_000_000)]
    max_assignments: u64,
}

#[derive(Args)]
struct FolfunArgs {
    #[arg(long, default_value_t = 5)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    n: usize,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 100)]
    count: usize,
}

#[derive(Args)]
struct OrbitArgs {
    #[arg(long, default_value_t = 5)]
    d: usize,
    #[arg(long, default_value_t = 3)]
    j_max: usize,
    /// Interpret the generators as level-stabilizer quotient generators
    /// (requires degree >= 6).
    #[arg(long, default_value_t = false)]
    quotient: bool,
    /// Also search for a spine-fixing twist element at each level.
    #[arg(long, default_value_t = false)]
    twist: bool,
}

#[derive(Args)]
struct DecayArgs {
    /// `constant:<d>` | `prefix:a,b;period:c,d` | `formula:sublog`
    #[arg(long, default_value = "formula:sublog")]
    valencies: String,
    #[arg(long, default_value_t = 2000)]
    k_max: usize,
    /// Normalization exponent for the eps * K^eta column.
    #[arg(long)]
    eta: Option<f64>,
}

struct CommandOutput {
    rows: serde_json::Value,
    checks: Vec<Check>,
    csv: Option<(String, Vec<Vec<String>>)>,
    config_echo: serde_json::Value,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(pass) => {
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let file_cfg = load_config(cli.config.as_deref())?;
    let seed = cli
        .seed
        .or(file_cfg.seed)
        .or_else(|| {
            std::env::var("FOLNER_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0);
    let policy = ExactnessPolicy {
        max_exact_index: cli
            .exact_index
            .or(file_cfg.exact_index)
            .unwrap_or(ExactnessPolicy::default().max_exact_index),
        ..ExactnessPolicy::default()
    };
    let started = Instant::now();
    let (name, output) = match &cli.command {
        Command::Delta(args) => ("delta", cmd_delta(args, &policy)?),
        Command::Epsilon(args) => ("epsilon", cmd_epsilon(args, &file_cfg, &policy)?),
        Command::Cardinality(args) => ("cardinality", cmd_cardinality(args, &policy)?),
        Command::Sample(args) => ("sample", cmd_sample(args, seed, &policy)?),
        Command::Member(args) => ("member", cmd_member(args, &file_cfg)?),
        Command::LemmaCheck(args) => ("lemma-check", cmd_lemma_check(args, seed)?),
        Command::Oracle(args) => ("oracle", cmd_oracle(args, &policy)?),
        Command::Folfun(args) => ("folfun", cmd_folfun(args, &policy)?),
        Command::Embed(args) => ("embed", cmd_embed(args, seed)?),
        Command::Orbit(args) => ("orbit", cmd_orbit(args, seed)?),
        Command::Decay(args) => ("decay", cmd_decay(args)?),
    };
    let report = Report::new(
        name,
        seed,
        output.config_echo,
        output.rows,
        output.checks,
        started.elapsed().as_millis(),
    );
    if let Some(csv_path) = &cli.csv {
        match &output.csv {
            Some((header, rows)) => write_csv(csv_path, header, rows)
                .map_err(|e| CliError::usage(format!("cannot write CSV: {e}")))?,
            None => {
                return Err(CliError::usage(
                    "this subcommand produces no CSV table".into(),
                ))
            }
        }
    }
    report
        .emit(cli.out.as_deref())
        .map_err(|e| CliError::usage(format!("cannot write report: {e}")))?;
    Ok(report.summary.pass)
}

fn cmd_delta(args: &DeltaArgs, policy: &ExactnessPolicy) -> Result<CommandOutput, CliError> {
    let seq = delta_sequence(args.d, args.k_max, policy).map_err(CliError::from_core)?;
    let mut rows = Vec::new();
    let mut csv_rows = Vec::new();
    for k in 0..=args.k_max {
        let v = seq.delta(k);
        let (num, den, float) = ratio_fields(v);
        rows.push(json!({
            "k": k,
            "delta": ratio_string(v),
            "delta_float": float,
        }));
        csv_rows.push(vec![k.to_string(), num, den, format!("{float:.17e}")]);
    }
    let decreasing = (1..=args.k_max).all(|k| seq.delta(k).as_f64() < seq.delta(k - 1).as_f64());
    let checks = vec![check(
        "strictly_decreasing",
        decreasing,
        format!("delta_k strictly decreasing for k <= {}", args.k_max),
    )];
    Ok(CommandOutput {
        rows: json!(rows),
        checks,
        csv: Some(("k,delta_num,delta_den,delta_float".into(), csv_rows)),
        config_echo: json!({"d": args.d, "k_max": args.k_max,
                            "exact_index": policy.max_exact_index}),
    })
}

fn cmd_epsilon(
    args: &EpsilonArgs,
    file_cfg: &config::FileConfig,
    policy: &ExactnessPolicy,
) -> Result<CommandOutput, CliError> {
    let valencies = resolve_valencies(args.valencies.as_deref(), file_cfg)?;
    let table = epsilon_sequence(&valencies, args.big_k, policy);
    let mut rows = Vec::new();
    let mut csv_rows = Vec::new();
    for k in 0..=args.big_k {
        let v = table.epsilon(k);
        let (num, den, float) = ratio_fields(v);
        rows.push(json!({
            "k": k,
            "eps": ratio_string(v),
            "eps_float": float,
        }));
        csv_rows.push(vec![k.to_string(), num, den, format!("{float:.17e}")]);
    }
    let decreasing =
        (1..=args.big_k).all(|k| table.epsilon(k).as_f64() < table.epsilon(k - 1).as_f64());
    let checks = vec![check(
        "strictly_decreasing",
        decreasing,
        format!("eps_k strictly decreasing for k <= {}", args.big_k),
    )];
    Ok(CommandOutput {
        rows: json!(rows),
        checks,
        csv: Some(("k,eps_num,eps_den,eps_float".into(), csv_rows)),
        config_echo: json!({"valencies": args.valencies, "big_k": args.big_k,
                            "exact_index": policy.max_exact_index}),
    })
}

fn cmd_cardinality(
    args: &CardinalityArgs,
    policy: &ExactnessPolicy,
) -> Result<CommandOutput, CliError> {
    let cards = cardinalities(args.d, args.k_max, args.max_bits).map_err(CliError::from_core)?;
    let deltas = delta_sequence(args.d, args.k_max, policy).map_err(CliError::from_core)?;
    let mut rows = Vec::new();
    let mut csv_rows = Vec::new();
    let mut consistent = true;
    for (k, pair) in cards.iter().enumerate() {
        rows.push(json!({
            "k": k,
            "interior": pair.interior.to_string(),
            "boundary": pair.boundary.to_string(),
            "total": pair.total().to_string(),
        }));
        csv_rows.push(vec![
            k.to_string(),
            pair.interior.to_string(),
            pair.boundary.to_string(),
            pair.total().to_string(),
        ]);
        if let Some(exact) = deltas.delta(k).exact() {
            if pair.interior_ratio() != BigRational::one() - exact {
                consistent = false;
            }
        }
    }
    let checks = vec![check(
        "ratio_consistency",
        consistent,
        "interior/total equals 1 - delta_k wherever the ratio table is exact".into(),
    )];
    Ok(CommandOutput {
        rows: json!(rows),
        checks,
        csv: Some(("k,interior,boundary,total".into(), csv_rows)),
        config_echo: json!({"d": args.d, "k_max": args.k_max, "max_bits": args.max_bits}),
    })
}

fn cmd_sample(
    args: &SampleArgs,
    seed: u64,
    policy: &ExactnessPolicy,
) -> Result<CommandOutput, CliError> {
    let stratum = Stratum::parse(&args.stratum).map_err(CliError::from_core)?;
    let sampler = ProfileSampler::new(args.d, args.k).map_err(CliError::from_core)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut csv_rows = Vec::new();
    match stratum {
        Stratum::Member => {
            // Independent streams derived from (seed, stream index); the
            // merged count is scheduling-independent.
            let hits =
                folner_core::folner::member_interior_census(&sampler, args.n, seed, 4);
            let deltas = delta_sequence(args.d, args.k, policy).map_err(CliError::from_core)?;
            let expected = 1.0 - deltas.delta(args.k).as_f64();
            let se = (expected * (1.0 - expected) / args.n as f64).sqrt();
            let freq = hits as f64 / args.n as f64;
            let tolerance = 4.0 * se;
            rows.push(json!({
                "k": args.k, "stratum": "member", "n": args.n, "interior_hits": hits,
                "frequency": freq, "expected": expected, "tolerance": tolerance,
            }));
            csv_rows.push(vec![
                args.k.to_string(),
                "member".into(),
                args.n.to_string(),
                hits.to_string(),
                format!("{freq:.10}"),
                format!("{expected:.10}"),
                format!("{tolerance:.10}"),
            ]);
            checks.push(check(
                "interior_fraction_within_4_se",
                (freq - expected).abs() <= tolerance,
                format!("frequency {freq:.6} vs exact {expected:.6}, tolerance {tolerance:.6}"),
            ));
        }
        Stratum::Interior | Stratum::Boundary => {
            let mut violations = 0usize;
            for _ in 0..args.n {
                let p = sampler.sample(stratum, &mut rng);
                let ok = match stratum {
                    Stratum::Interior => p.is_interior().map_err(CliError::from_core)?,
                    Stratum::Boundary => {
                        p.is_member() && !p.is_interior().map_err(CliError::from_core)?
                    }
                    Stratum::Member => unreachable!(),
                };
                if !ok {
                    violations += 1;
                }
            }
            rows.push(json!({
                "k": args.k, "stratum": args.stratum, "n": args.n, "violations": violations,
            }));
            csv_rows.push(vec![
                args.k.to_string(),
                args.stratum.clone(),
                args.n.to_string(),
                violations.to_string(),
                String::new(),
                String::new(),
                String::new(),
            ]);
            checks.push(check(
                "stratum_contract",
                violations == 0,
                format!(
                    "{violations} of {} draws violated the stratum contract",
                    args.n
                ),
            ));
        }
    }
    Ok(CommandOutput {
        rows: json!(rows),
        checks,
        csv: Some((
            "k,stratum,n,hits_or_violations,frequency,expected,tolerance".into(),
            csv_rows,
        )),
        config_echo: json!({"d": args.d, "k": args.k, "stratum": args.stratum, "n": args.n}),
    })
}

fn cmd_member(args: &MemberArgs, file_cfg: &config::FileConfig) -> Result<CommandOutput, CliError> {
    if let Some(path) = &args.profile {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read profile {path:?}: {e}")))?;
        let profile: FolnerProfile = text.parse().map_err(CliError::from_core)?;
        let member = profile.is_member();
        let interior = member && profile.is_interior().map_err(CliError::from_core)?;
        let rows = json!([{
            "source": "profile",
            "k": profile.k(),
            "member": member,
            "interior": interior,
            "root_direction": profile.root_direction() + 1,
            "root_open_set": profile.root_open_set().iter().map(|t| t + 1).collect::<Vec<_>>(),
            "spine": profile.spine().iter().map(|t| t + 1).collect::<Vec<_>>(),
        }]);
        return Ok(CommandOutput {
            rows,
            checks: vec![check("parsed", true, "profile parsed and validated".into())],
            csv: None,
            config_echo: json!({"profile": path.display().to_string()}),
        });
    }
    let word_text = args
        .word
        .as_ref()
        .ok_or_else(|| CliError::usage("member needs --word or --profile".into()))?;
    let valencies = match (&file_cfg.valencies, args.d) {
        (Some(table), _) => match valencies_from_table(table)? {
            Valencies::Periodic(v) => v,
            Valencies::Formula(_) => {
                return Err(CliError::usage(
                    "membership testing needs an eventually periodic valency table".into(),
                ))
            }
        },
        (None, Some(d)) => ValencySequence::constant(d).map_err(CliError::from_core)?,
        (None, None) => ValencySequence::constant(5).map_err(CliError::from_core)?,
    };
    let d = valencies
        .is_constant()
        .ok_or_else(|| CliError::usage("membership testing needs a constant degree".into()))?;
    let table = GeneratorTable::build(&valencies, file_cfg)?;
    let word = table.parse_word(word_text)?;
    let group = MotherGroup::new(d).map_err(CliError::from_core)?;
    let recognized = recognize_word(&group, &word, args.k).map_err(CliError::from_core)?;
    let rows = match recognized {
        Recognized::Member(profile) => {
            let interior = profile.is_interior().map_err(CliError::from_core)?;
            json!([{
                "source": "word",
                "word": word_text,
                "k": args.k,
                "member": true,
                "interior": interior,
                "profile": profile.to_string(),
            }])
        }
        Recognized::NotMember => json!([{
            "source": "word",
            "word": word_text,
            "k": args.k,
            "member": false,
        }]),
    };
    Ok(CommandOutput {
        rows,
        checks: vec![check(
            "evaluated",
            true,
            "word recognized against the set".into(),
        )],
        csv: None,
        config_echo: json!({"word": word_text, "k": args.k, "d": d,
                            "generators": table.names()}),
    })
}

fn cmd_lemma_check(args: &LemmaCheckArgs, seed: u64) -> Result<CommandOutput, CliError> {
    let group = MotherGroup::new(args.d).map_err(CliError::from_core)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut csv_rows = Vec::new();
    let mut checks = Vec::new();
    for k in 0..=args.k_max {
        let sampler = ProfileSampler::new(args.d, k).map_err(CliError::from_core)?;
        let mut violations = 0usize;
        let mut first_witness = String::new();
        for _ in 0..args.n {
            let g = sampler.sample(Stratum::Member, &mut rng);
            let a = group.random_even(&mut rng);
            let b = group.random_b(&mut rng);
            let rooted_ok = matches!(
                profile_mul_generator(&g, &ProfileFactor::Rooted(a.clone()))
                    .map_err(CliError::from_core)?,
                MulOutcome::Inside(_)
            );
            let root_open = g.root_open_set().contains(&g.root_direction());
            let interior = g.is_interior().map_err(CliError::from_core)?;
            let directed = profile_mul_generator(&g, &ProfileFactor::Directed(b.clone()))
                .map_err(CliError::from_core)?;
            let directed_ok = match directed {
                MulOutcome::Inside(q) => {
                    root_open && (!interior || q.is_interior().map_err(CliError::from_core)?)
                }
                MulOutcome::Outside => !root_open && !interior,
            };
            if !(rooted_ok && directed_ok) {
                violations += 1;
                if first_witness.is_empty() {
                    first_witness =
                        format!("k={k}; rooted a={a}; directed b={b}; profile:\n{g}");
                }
            }
        }
        rows.push(json!({"k": k, "trials": args.n, "violations": violations}));
        csv_rows.push(vec![
            k.to_string(),
            args.n.to_string(),
            violations.to_string(),
        ]);
        checks.push(check(
            &format!("multiplication_equivalences_k{k}"),
            violations == 0,
            if violations == 0 {
                format!("{} trials, no violations", args.n)
            } else {
                format!("{violations} violations; first witness: {first_witness}")
            },
        ));
    }
    Ok(CommandOutput {
        rows: json!(rows),
        checks,
        csv: Some(("k,trials,violations".into(), csv_rows)),
        config_echo: json!({"d": args.d, "k_max": args.k_max, "n": args.n}),
    })
}

fn cmd_oracle(args: &OracleArgs, policy: &ExactnessPolicy) -> Result<CommandOutput, CliError> {
    let mut rows = Vec::new();
    let mut csv_rows = Vec::new();
    let mut all_equal = true;
    let degrees: Vec<usize> = match &args.degrees {
        Some(list) => list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::usage(format!("bad degree {t:?}")))
            })
            .collect::<Result<_, _>>()?,
        None => {
            let d = args.d.unwrap_or(2);
            let k = args.k.unwrap_or(2);
            vec![d; k + 1]
        }
    };
    // Compare each truncation of the degree list against the recursion.
    let valencies = Valencies::Periodic(
        ValencySequence::new(degrees.clone(), vec![*degrees.last().unwrap()])
            .map_err(CliError::from_core)?,
    );
    let big_k = degrees.len() - 1;
    let table = epsilon_sequence(&valencies, big_k, policy);
    for k in 0..=big_k {
        let internal: Vec<usize> = degrees[big_k - k..=big_k].to_vec();
        let counts =
            brute_force_counts(&internal, args.max_assignments).map_err(CliError::from_core)?;
        let oracle = counts.interior_ratio();
        let recursion = table
            .epsilon(k)
            .exact()
            .map(|e| BigRational::one() - e)
            .ok_or_else(|| {
                CliError::usage("recursion left the exact regime; raise --exact-index".into())
            })?;
        let equal = oracle == recursion;
        all_equal &= equal;
        rows.push(json!({
            "k": k,
            "internal_degrees": internal,
            "member_count": counts.member,
            "interior_count": counts.interior,
            "oracle": format!("{}/{}", oracle.numer(), oracle.denom()),
            "recursion": format!("{}/{}", recursion.numer(), recursion.denom()),
            "equal": equal,
        }));
        csv_rows.push(vec![
            k.to_string(),
            counts.member.to_string(),
            counts.interior.to_string(),
            oracle.numer().to_string(),
            oracle.denom().to_string(),
            recursion.numer().to_string(),
            recursion.denom().to_string(),
            equal.to_string(),
        ]);
    }
    let checks = vec![check(
        "oracle_equals_recursion",
        all_equal,
        format!("exhaustive counts match the exact recursion over degrees {degrees:?}"),
    )];
    Ok(CommandOutput {
        rows: json!(rows),
        checks,
        csv: Some((
            "k,member_count,interior_count,oracle_num,oracle_den,recursion_num,recursion_den,equal"
                .into(),
            csv_rows,
        )),
        config_echo: json!({"degrees": degrees, "max_assignments": args.max_assignments}),
    })
}

fn cmd_folfun(args: &FolfunArgs, policy: &ExactnessPolicy) -> Result<CommandOutput, CliError> {
    let bound =
        folner_function_bound(args.d, args.n, policy, 1 << 21).map_err(CliError::from_core)?;
    let log2 = bound.cardinality.log2();
    let exact = match &bound.cardinality {
        CardinalityEstimate::Exact(v) => v.to_string(),
        CardinalityEstimate::Log2(_) => String::new(),
    };
    let rows = json!([{
        "d": args.d,
        "n": args.n,
        "k_star": bound.k_star,
        "cardinality": exact,
        "log2_cardinality": log2,
        "log2_log2_cardinality": log2.log2(),
    }]);
    let csv_rows = vec![vec![
        args.d.to_string(),
        args.n.to_string(),
        bound.k_star.to_string(),
        exact,
        format!("{log2:.6e}"),
        format!("{:.6}", log2.log2()),
    ]];
    Ok(CommandOutput {
        rows,
        checks: vec![check(
            "bound_computed",
            true,
            format!("k* = {} reaches ratio <= 1/{}", bound.k_star, args.n),
        )],
        csv: Some((
            "d,n,k_star,cardinality,log2_cardinality,log2_log2_cardinality".into(),
            csv_rows,
        )),
        config_echo: json!({"d": args.d, "n": args.n}),
    })
}

fn cmd_embed(args: &EmbedArgs, seed: u64) -> Result<CommandOutput, CliError> {
    let valencies = ValencySequence::constant(args.d).map_err(CliError::from_core)?;
    let ctx = Context::new(valencies.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut label_failures = 0usize;
    let mut support_failures = 0usize;
    let mut hom_failures = 0usize;
    let mut elements: Vec<GroupWord> = Vec::new();
    let depth = 3usize;
    for _ in 0..args.count {
        let spec =
            random_directed_spec(&valencies, false, &mut rng).map_err(CliError::from_core)?;
        let w = GroupWord::from_letters(
            &ctx,
            0,
            vec![SignedLetter::new(Letter::Directed(spec), false)],
        )
        .map_err(CliError::from_core)?;
        let image = double_embed(&w, depth + 1);
        if !image.is_alternate() {
            label_failures += 1;
        }
        if !image.has_directed_support() {
            support_failures += 1;
        }
        elements.push(w);
    }
    for pair in elements.chunks(2) {
        if pair.len() < 2 {
            break;
        }
        let prod = pair[0].mul(&pair[1]);
        for j in 1..=depth {
            let lhs = double_embed(&prod, depth)
                .level_permutation(j)
                .map_err(CliError::from_core)?;
            let rhs = double_embed(&pair[0], depth)
                .level_permutation(j)
                .map_err(CliError::from_core)?
                .compose(
                    &double_embed(&pair[1], depth)
                        .level_permutation(j)
                        .map_err(CliError::from_core)?,
                );
            if lhs != rhs {
                hom_failures += 1;
            }
        }
    }
    let rows = json!([{
        "count": args.count,
        "label_failures": label_failures,
        "support_failures": support_failures,
        "homomorphism_failures": hom_failures,
    }]);
    let csv_rows = vec![vec![
        args.count.to_string(),
        label_failures.to_string(),
        support_failures.to_string(),
        hom_failures.to_string(),
    ]];
    let checks = vec![
        check(
            "doubled_labels_even",
            label_failures == 0,
            format!(
                "{label_failures} of {} elements had odd image labels",
                args.count
            ),
        ),
        check(
            "directed_image",
            support_failures == 0,
            format!("{support_failures} images lost directed support"),
        ),
        check(
            "level_homomorphism",
            hom_failures == 0,
            format!("{hom_failures} level-permutation comparisons failed"),
        ),
    ];
    Ok(CommandOutput {
        rows,
        checks,
        csv: Some((
            "count,label_failures,support_failures,homomorphism_failures".into(),
            csv_rows,
        )),
        config_echo: json!({"d": args.d, "count": args.count}),
    })
}

fn cmd_orbit(args: &OrbitArgs, seed: u64) -> Result<CommandOutput, CliError> {
    if args.quotient && args.d < 6 {
        return Err(CliError::usage(
            "quotient generators need degree >= 6".into(),
        ));
    }
    let group = MotherGroup::new(args.d).map_err(CliError::from_core)?;
    let mut rows = Vec::new();
    let mut csv_rows = Vec::new();
    let mut checks = Vec::new();
    for j in 1..=args.j_max {
        let perms = level_generators(&group, j).map_err(CliError::from_core)?;
        let points = perms.first().map(|p| p.degree()).unwrap_or(0);
        let orbit = orbit_of_point(&perms, 0).len();
        let transitive = is_transitive(&perms);
        let twist = if args.twist {
            find_quotient_twist(&perms, seed).map(|t| t.to_string())
        } else {
            None
        };
        rows.push(json!({
            "j": j,
            "points": points,
            "orbit_size": orbit,
            "transitive": transitive,
            "twist": twist,
        }));
        csv_rows.push(vec![
            j.to_string(),
            points.to_string(),
            orbit.to_string(),
            transitive.to_string(),
            twist.clone().unwrap_or_default(),
        ]);
        checks.push(check(
            &format!("transitive_level_{j}"),
            transitive,
            format!("orbit of the first vertex covers {orbit} of {points} points"),
        ));
        if args.twist {
            checks.push(check(
                &format!("twist_level_{j}"),
                twist.is_some(),
                "spine-fixing twist with displaced second vertex".into(),
            ));
        }
    }
    Ok(CommandOutput {
        rows: json!(rows),
        checks,
        csv: Some(("j,points,orbit_size,transitive,twist".into(), csv_rows)),
        config_echo: json!({"d": args.d, "j_max": args.j_max,
                            "quotient": args.quotient, "twist": args.twist}),
    })
}

fn cmd_decay(args: &DecayArgs) -> Result<CommandOutput, CliError> {
    let valencies = parse_valencies_arg(&args.valencies)?;
    let rows_data = decay_report(&valencies, args.k_max, args.eta);
    let mut rows = Vec::new();
    let mut csv_rows = Vec::new();
    for row in &rows_data {
        rows.push(json!({
            "K": row.big_k,
            "eps": row.eps,
            "normalized": row.normalized,
        }));
        csv_rows.push(vec![
            row.big_k.to_string(),
            format!("{:.17e}", row.eps),
            row.normalized
                .map(|x| format!("{x:.17e}"))
                .unwrap_or_default(),
        ]);
    }
    Ok(CommandOutput {
        rows: json!(rows),
        checks: vec![check(
            "computed",
            true,
            format!("{} rows; no asymptotic claim asserted", rows_data.len()),
        )],
        csv: Some(("K,eps_float,normalized".into(), csv_rows)),
        config_echo: json!({"valencies": args.valencies, "k_max": args.k_max, "eta": args.eta}),
    })
}

fn resolve_valencies(
    arg: Option<&str>,
    file_cfg: &config::FileConfig,
) -> Result<Valencies, CliError> {
    match (arg, &file_cfg.valencies) {
        (Some(s), _) => parse_valencies_arg(s),
        (None, Some(table)) => valencies_from_table(table),
        (None, None) => Valencies::constant(5).map_err(CliError::from_core),
    }
}
