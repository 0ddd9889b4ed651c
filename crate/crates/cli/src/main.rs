use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hake_core::analysis::{
    entity_modulus_histogram, entity_polar_export, modulus_dispersion, pattern_residual, relation_modulus_histogram,
    relation_phase_histogram, sign_agreement_counts, write_pattern_csv, write_polar_csv, write_sign_csv, Pattern,
};
use hake_core::data::{build_bundle, compare_stats, load_dir, read_triple_file, reference_stats, DatasetBundle};
use hake_core::gradcheck::{run_gradient_check, TOLERANCE};
use hake_core::synth::{generate_synthetic_kg, SynthSpec};
use hake_core::trainer::{train_with, TrainConfig, TrainOptions};
use hake_core::{evaluate, Checkpoint, HakeError};

const TRIPLE_FORMAT: &str = "Triple files hold one fact per line as `head<TAB>relation<TAB>tail`. \
Blank lines are skipped. Entities and relations get ids in order of first appearance in train; \
a token that only appears in valid or test is an error.";

#[derive(Parser)]
#[command(name = "hake", version, about = "Polar knowledge graph embeddings: data, training, evaluation, analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count entities, relations and split sizes of a dataset
    #[command(after_help = TRIPLE_FORMAT)]
    Stats(StatsArgs),
    /// Write a synthetic tree-shaped graph as train/valid/test files
    #[command(after_help = "Writes train.txt, valid.txt, test.txt and levels.tsv (`entity<TAB>depth`).")]
    GenSynth(GenSynthArgs),
    /// Train a model and write checkpoints
    #[command(after_help = CONFIG_HELP)]
    Train(TrainArgs),
    /// Filtered MRR and Hits@{1,3,10} of a checkpoint
    #[command(after_help = TRIPLE_FORMAT)]
    Eval(EvalArgs),
    /// Write an embedding diagnostic as CSV
    #[command(after_help = ANALYZE_HELP)]
    Analyze(AnalyzeArgs),
    /// Compare analytic gradients with central finite differences
    CheckGrad(CheckGradArgs),
}

const CONFIG_HELP: &str = "Config files are flat `key = value` lines; `#` starts a comment. Keys: \
k, gamma, alpha, n_neg, lr, batch_size, max_steps, adam_beta1, adam_beta2, adam_eps, seed, \
variant (full|modulus_only|phase_only|mode), bias (true|false), lambda_mod, lambda_phase, \
trainable_lambda, neg_mode (head|tail|both), self_adversarial, log_every, checkpoint_every. \
Precedence: flags, then --set, then the config file, then defaults. \
The output directory receives config.cfg, step_N.ckpt every checkpoint_every steps, and latest.ckpt.";

const ANALYZE_HELP: &str = "CSV headers: histograms `bin_lo,bin_hi,count`; polar `entity,dim,radius,angle`; \
signs `pair_id,label,diff_signs`; pattern `pattern,dim,mod_residual,phase_residual`. \
Relations and entities are given by name (needs --data-dir) or by numeric id.";

#[derive(Args)]
struct StatsArgs {
    /// Directory with train.txt, valid.txt, test.txt
    #[arg(long, conflicts_with_all = ["train", "valid", "test"])]
    data_dir: Option<PathBuf>,
    #[arg(long, requires_all = ["valid", "test"])]
    train: Option<PathBuf>,
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Published dataset to cross-check against (WN18RR, FB15k-237, YAGO3-10).
    /// Defaults to the data directory name when it matches one.
    #[arg(long)]
    reference: Option<String>,
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 3)]
    branching: usize,
    /// Fraction of same-parent leaf pairs linked by `_similar_to`
    #[arg(long, default_value_t = 0.5)]
    sibling_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Config file (`key = value` lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// full, modulus_only, phase_only or mode
    #[arg(long)]
    variant: Option<String>,
    /// Threads computing per-sample gradients; results do not depend on it
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Leave timing out of log lines so runs compare byte for byte
    #[arg(long)]
    no_timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Valid,
    Test,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    RelModHist,
    RelPhaseHist,
    Polar,
    Signs,
    EntModHist,
    Pattern,
    Dispersion,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, value_enum)]
    what: What,
    /// Dataset the checkpoint was trained on; needed for names and `signs`
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Relation for rel-mod-hist / rel-phase-hist
    #[arg(long)]
    relation: Option<String>,
    /// Comma-separated relations for `pattern` (1, 2 or 3 of them)
    #[arg(long, value_delimiter = ',')]
    relations: Vec<String>,
    /// Comma-separated entities for `polar` (default: all)
    #[arg(long, value_delimiter = ',')]
    entities: Vec<String>,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Histogram range `lo,hi` (default: spans the data)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    range: Vec<f64>,
    /// symmetry, inversion or composition
    #[arg(long)]
    pattern: Option<String>,
    /// Seed for the unlinked-pair sample of `signs`
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Radius `-log10(max(|m|, 1e-8))` in polar output
    #[arg(long)]
    log_scale: bool,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckGradArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    draws: usize,
}

/// Errors mapped onto exit codes: 1 usage, 2 data, 3 numeric.
enum Failure {
    Usage(String),
    Core(HakeError),
    Numeric(String),
}

impl From<HakeError> for Failure {
    fn from(e: HakeError) -> Self {
        Failure::Core(e)
    }
}

type CmdResult = Result<(), Failure>;

fn io_err(path: &Path, e: io::Error) -> Failure {
    Failure::Core(HakeError::io(path, e))
}

fn stats(args: StatsArgs, out: &mut dyn Write) -> CmdResult {
    let (bundle, dir_name) = match (&args.data_dir, &args.train, &args.valid, &args.test) {
        (Some(dir), ..) => (load_dir(dir)?, dir.file_name().map(|n| n.to_string_lossy().into_owned())),
        (None, Some(tr), Some(va), Some(te)) => {
            let bundle = build_bundle(&read_triple_file(tr)?, &read_triple_file(va)?, &read_triple_file(te)?)?;
            (bundle, None)
        }
        _ => return Err(Failure::Usage("give --data-dir or all of --train, --valid, --test".into())),
    };
    let s = bundle.stats();
    let w = |out: &mut dyn Write, text: &str| out.write_all(text.as_bytes()).map_err(|e| io_err(Path::new("<stdout>"), e));
    w(out, &s.to_string())?;
    w(out, &s.to_kv())?;
    let reference = match &args.reference {
        Some(name) => match reference_stats(name) {
            Some(r) => Some(r),
            None => return Err(Failure::Usage(format!("--reference: no published counts for `{name}`"))),
        },
        None => dir_name.as_deref().and_then(reference_stats),
    };
    if let Some((name, reference)) = reference {
        let mismatches = compare_stats(&s, &reference);
        if mismatches.is_empty() {
            w(out, &format!("reference {name}: all counts match\n"))?;
        } else {
            for m in mismatches {
                w(out, &format!("reference {name}: MISMATCH {} file={} published={}\n", m.field, m.file, m.reference))?;
            }
        }
    }
    Ok(())
}

fn gen_synth(args: GenSynthArgs, out: &mut dyn Write) -> CmdResult {
    let spec = SynthSpec {
        depth: args.depth,
        branching: args.branching,
        seed: args.seed,
        sibling_fraction: args.sibling_fraction,
    };
    let kg = generate_synthetic_kg(&spec)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| io_err(&args.out_dir, e))?;
    kg.write_dir(&args.out_dir)?;
    let text = format!("wrote {}\n{}", args.out_dir.display(), kg.bundle.stats().to_kv());
    out.write_all(text.as_bytes()).map_err(|e| io_err(Path::new("<stdout>"), e))
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig, HakeError> {
    let mut config = match &args.config {
        Some(path) => TrainConfig::from_file(path)?,
        None => TrainConfig::default(),
    };
    for kv in &args.overrides {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| HakeError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        config.set(key, value)?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(k) = args.k {
        config.k = k;
    }
    if let Some(steps) = args.max_steps {
        config.max_steps = steps;
    }
    if let Some(v) = &args.variant {
        config.set("variant", v)?;
    }
    config.validate()?;
    Ok(config)
}

fn train_cmd(args: TrainArgs, out: &mut dyn Write) -> CmdResult {
    let config = train_config(&args)?;
    let bundle = load_dir(&args.data_dir)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| io_err(&args.out_dir, e))?;
    let cfg_path = args.out_dir.join("config.cfg");
    fs::write(&cfg_path, config.to_text()).map_err(|e| io_err(&cfg_path, e))?;
    let options = TrainOptions { out_dir: Some(args.out_dir.clone()), workers: args.workers };
    let mut write_err = None;
    train_with(&bundle, &config, &options, |entry| {
        if let Err(e) = writeln!(out, "{}", entry.format(!args.no_timing)) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(io_err(Path::new("<stdout>"), e));
    }
    writeln!(out, "saved {}", args.out_dir.join("latest.ckpt").display()).map_err(|e| io_err(Path::new("<stdout>"), e))
}

fn load_checked(ckpt: &Path, data_dir: &Path) -> Result<(Checkpoint, DatasetBundle), HakeError> {
    let ck = Checkpoint::load(ckpt)?;
    let bundle = load_dir(data_dir)?;
    ck.check_dims(bundle.num_entities(), bundle.num_relations())?;
    Ok((ck, bundle))
}

fn eval_cmd(args: EvalArgs, out: &mut dyn Write) -> CmdResult {
    let (ck, bundle) = load_checked(&args.ckpt, &args.data_dir)?;
    let split = match args.split {
        Split::Valid => &bundle.valid,
        Split::Test => &bundle.test,
    };
    let report = evaluate(&ck.params, split, &bundle, args.workers)?;
    write!(out, "{report}{}\n", report.to_kv()).map_err(|e| io_err(Path::new("<stdout>"), e))
}

/// Resolves names (with a vocabulary) or numeric ids (without one).
fn resolve(token: &str, kind: &str, bundle: Option<&DatasetBundle>) -> Result<usize, Failure> {
    match bundle {
        Some(b) if kind == "relation" => Ok(b.vocab.resolve_relation(token)?),
        Some(b) => Ok(b.vocab.resolve_entity(token)?),
        None => token
            .parse()
            .map_err(|_| Failure::Usage(format!("{kind} `{token}` is not an id; pass --data-dir to use names"))),
    }
}

fn histogram_range(args: &AnalyzeArgs) -> Result<Option<(f64, f64)>, Failure> {
    match args.range.as_slice() {
        [] => Ok(None),
        &[lo, hi] => Ok(Some((lo, hi))),
        _ => Err(Failure::Usage("--range expects `lo,hi`".into())),
    }
}

fn analyze(args: AnalyzeArgs, out: &mut dyn Write) -> CmdResult {
    let (ck, bundle) = match &args.data_dir {
        Some(dir) => {
            let (ck, b) = load_checked(&args.ckpt, dir)?;
            (ck, Some(b))
        }
        None => (Checkpoint::load(&args.ckpt)?, None),
    };
    let p = &ck.params;
    let mut buf: Vec<u8> = Vec::new();
    let single_relation = || -> Result<usize, Failure> {
        let r = args.relation.as_deref().ok_or_else(|| Failure::Usage("--relation is required".into()))?;
        resolve(r, "relation", bundle.as_ref())
    };
    match args.what {
        What::RelModHist => {
            relation_modulus_histogram(p, single_relation()?, args.bins, histogram_range(&args)?)?.write_csv(&mut buf)?
        }
        What::RelPhaseHist => relation_phase_histogram(p, single_relation()?, args.bins)?.write_csv(&mut buf)?,
        What::EntModHist => entity_modulus_histogram(p, args.bins, histogram_range(&args)?)?.write_csv(&mut buf)?,
        What::Polar => {
            let ids = if args.entities.is_empty() {
                (0..p.num_entities()).collect()
            } else {
                args.entities
                    .iter()
                    .map(|e| resolve(e, "entity", bundle.as_ref()))
                    .collect::<Result<Vec<_>, _>>()?
            };
            let rows = entity_polar_export(p, &ids, args.log_scale)?;
            write_polar_csv(&rows, bundle.as_ref().map(|b| b.vocab.entities.names()), &mut buf)?;
        }
        What::Signs => {
            let b = bundle.as_ref().ok_or_else(|| Failure::Usage("--what signs needs --data-dir".into()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            write_sign_csv(&sign_agreement_counts(p, b, &mut rng)?, &mut buf)?;
        }
        What::Pattern => {
            let pattern: Pattern = args
                .pattern
                .as_deref()
                .ok_or_else(|| Failure::Usage("--pattern is required".into()))?
                .parse()
                .map_err(|e: HakeError| Failure::Usage(e.to_string()))?;
            let rels = args
                .relations
                .iter()
                .map(|r| resolve(r, "relation", bundle.as_ref()))
                .collect::<Result<Vec<_>, _>>()?;
            if rels.len() != pattern.arity() {
                return Err(Failure::Usage(format!(
                    "--relations: {} takes {} relation(s), got {}",
                    pattern.name(),
                    pattern.arity(),
                    rels.len()
                )));
            }
            write_pattern_csv(&pattern_residual(p, &rels, pattern)?, &mut buf)?;
        }
        What::Dispersion => {
            let d = modulus_dispersion(p);
            if !d.is_finite() {
                return Err(Failure::Numeric(format!("modulus dispersion is {d} (all moduli zero?)")));
            }
            buf.extend_from_slice(format!("modulus_dispersion={d}\n").as_bytes());
        }
    }
    match &args.out {
        Some(path) => fs::write(path, &buf).map_err(|e| io_err(path, e)),
        None => out.write_all(&buf).map_err(|e| io_err(Path::new("<stdout>"), e)),
    }
}

fn check_grad(args: CheckGradArgs, out: &mut dyn Write) -> CmdResult {
    if args.k == 0 || args.draws == 0 {
        return Err(Failure::Usage("--k and --draws must be >= 1".into()));
    }
    let report = run_gradient_check(args.seed, args.k, args.draws)?;
    writeln!(
        out,
        "k={} draws={} max_score_rel_err={:.3e} max_loss_rel_err={:.3e}\nmax_rel_err={:.3e}",
        report.k,
        report.draws,
        report.max_score_error,
        report.max_loss_error,
        report.max_error()
    )
    .map_err(|e| io_err(Path::new("<stdout>"), e))?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Numeric(format!("max relative error {:.3e} exceeds {TOLERANCE:e}", report.max_error())))
    }
}

fn run(cli: Cli) -> CmdResult {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Stats(a) => stats(a, &mut out),
        Command::GenSynth(a) => gen_synth(a, &mut out),
        Command::Train(a) => train_cmd(a, &mut out),
        Command::Eval(a) => eval_cmd(a, &mut out),
        Command::Analyze(a) => analyze(a, &mut out),
        Command::CheckGrad(a) => check_grad(a, &mut out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                HakeError::Config(_) => 1,
                e if e.is_data_error() => 2,
                _ => 3,
            })
        }
    }
}
