//! Command-line front end.
//!
//! Every subcommand reads and writes the JSON formats of [`crate::io`] (trend
//! data is CSV). Results go to stdout or `--out`; summaries, statistics and
//! errors go to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::anonloss::{compute_loss_with, detect_coinjoins, BucketScheme, Clock, DetectionParams, Horizon, TxGraph};
use crate::enumerate::{enumerate, Constraints, EnumerationOptions, DEFAULT_SUBMAPPING_CAP};
use crate::error::{Error, Result};
use crate::fit::{fit_trend, read_trend_csv, write_trend_csv, Aggregate, Prediction, TrendFit};
use crate::generator::{generate, generate_sized, trend_dataset, GeneratorParams, GroundTruth};
use crate::io::{from_json, read_json, to_json, ResultFile};
use crate::metrics::{metrics_report, WeightTable};
use crate::model::{Coinjoin, Design};
use crate::multicj::{enumerate_linked, ArtificialTx, InternalCoin, Link, LinkedSet};
use crate::preprocess::{apply_knowledge, build_policy, normalize_fees, Knowledge, PolicyParams};

#[derive(Debug, Parser)]
#[command(name = "cjmap", version, about = "Enumerate coinjoin mappings and measure their privacy")]
pub struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "CJMAP_THREADS")]
    pub threads: Option<usize>,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Suppress the summary on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    /// Print search statistics on stderr.
    #[arg(long, global = true)]
    pub stats: bool,
    /// TOML file with [policy], [constraints], [generator] and [detection] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate the numeric mappings of one transaction.
    Enumerate(EnumerateArgs),
    /// Entropy, sub-mapping and link probabilities of an enumeration result.
    Metrics(MetricsArgs),
    /// Anonymity loss from post-mix consolidations.
    Anonloss(AnonlossArgs),
    /// Generate a coinjoin with known ground truth.
    Gen(GenArgs),
    /// Fit the exponential trend of mapping counts over size.
    Fit(FitArgs),
    /// Enumerate a set of coinjoins linked by spent outputs.
    Linked(LinkedArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct PolicyArgs {
    #[arg(long)]
    pub feerate: Option<i64>,
    #[arg(long)]
    pub min_out: Option<i64>,
    #[arg(long)]
    pub margin: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta_min: Option<i64>,
    #[arg(long)]
    pub delta_max: Option<i64>,
    #[arg(long)]
    pub pool: Option<i64>,
}

impl PolicyArgs {
    fn overlay(&self, mut p: PolicyParams) -> PolicyParams {
        p.feerate = self.feerate.or(p.feerate);
        p.min_out = self.min_out.or(p.min_out);
        p.margin = self.margin.or(p.margin);
        p.delta_min = self.delta_min.or(p.delta_min);
        p.delta_max = self.delta_max.or(p.delta_max);
        p.pool_denomination = self.pool.or(p.pool_denomination);
        p
    }
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    /// Transaction or ground-truth JSON; stdin when omitted or "-".
    #[arg(long)]
    pub tx: Option<PathBuf>,
    /// Overrides the design recorded in the transaction.
    #[arg(long)]
    pub design: Option<Design>,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Ownership knowledge JSON.
    #[arg(long)]
    pub knowledge: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SUBMAPPING_CAP)]
    pub cap: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Enumeration result JSON; stdin when omitted or "-".
    #[arg(long)]
    pub result: Option<PathBuf>,
    /// Per-signature weight table JSON.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Comma-separated input ids of one user; repeatable.
    #[arg(long = "user", value_delimiter = ';')]
    pub users: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnonlossArgs {
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Comma-separated horizons in days; "inf" for no limit.
    #[arg(long, default_value = "1,7,30,inf", value_delimiter = ',')]
    pub horizons: Vec<Horizon>,
    /// Design whose value buckets are reported.
    #[arg(long, default_value = "wasabi2")]
    pub buckets: Design,
    /// Measure days in blocks (144 per day) instead of timestamps.
    #[arg(long)]
    pub block_clock: bool,
    /// Flag coinjoins with the structural screen in addition to the listed ones.
    #[arg(long)]
    pub detect: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_conflicts_with_subcommands = true)]
pub struct GenArgs {
    #[command(subcommand)]
    pub trend: Option<GenCommand>,
    #[arg(long, default_value = "generic")]
    pub design: Design,
    #[arg(long, default_value_t = 5)]
    pub users: usize,
    /// Rejection-sample until the coin count equals this size.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Numeric-mapping counts of generated instances, as CSV.
    Trend(TrendArgs),
}

#[derive(Debug, Args)]
pub struct TrendArgs {
    #[arg(long, default_value = "generic")]
    pub design: Design,
    /// "A..B" (inclusive) or a comma-separated list.
    #[arg(long, default_value = "6..16")]
    pub sizes: String,
    #[arg(long, default_value_t = 10)]
    pub per_size: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Trend CSV with `size,count` rows; stdin when omitted or "-".
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub predict: Option<f64>,
    /// Fraction of coins removed by consolidations before predicting.
    #[arg(long, default_value_t = 0.0)]
    pub loss: f64,
    #[arg(long, default_value = "size-mean")]
    pub aggregate: Aggregate,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LinkedArgs {
    /// Linked-set JSON; member transactions may be inline or file paths.
    #[arg(long)]
    pub set: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value_t = DEFAULT_SUBMAPPING_CAP)]
    pub cap: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Contents of `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub threads: Option<usize>,
    pub policy: PolicyParams,
    /// Replaces the design defaults when present.
    pub constraints: Option<Constraints>,
    pub generator: GeneratorParams,
    pub detection: DetectionParams,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    fn constraints(&self, design: Design) -> Constraints {
        self.constraints.clone().unwrap_or_else(|| Constraints::for_design(design))
    }
}

/// A transaction file may hold a bare coinjoin or a generator document.
enum TxDocument {
    Truth(Box<GroundTruth>),
    Tx(Coinjoin),
}

impl TxDocument {
    fn parse(text: &str) -> Result<Self> {
        let v: serde_json::Value = from_json(text)?;
        let parse = |e: serde_json::Error| Error::Parse(e.to_string());
        if v.get("true_mapping").is_some() {
            Ok(TxDocument::Truth(serde_json::from_value(v).map_err(parse)?))
        } else {
            Ok(TxDocument::Tx(serde_json::from_value(v).map_err(parse)?))
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum MemberEntry {
    Path(PathBuf),
    Inline(Box<Coinjoin>),
}

#[derive(Debug, Clone, Deserialize)]
struct LinkedSetFile {
    txs: Vec<MemberEntry>,
    #[serde(default)]
    internal_coins: Vec<InternalCoin>,
    #[serde(default)]
    links: Vec<Link>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinkedReport {
    pub artificial: ArtificialTx,
    pub unfiltered_numeric_count: usize,
    pub result: ResultFile,
}

#[derive(Debug, Clone, Serialize)]
struct FitReport {
    fit: TrendFit,
    #[serde(skip_serializing_if = "Option::is_none")]
    prediction: Option<Prediction>,
}

fn read_text(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
        }
        _ => {
            let mut s = String::new();
            std::io::Read::read_to_string(&mut std::io::stdin(), &mut s)?;
            Ok(s)
        }
    }
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => Ok(stdout.write_all(text.as_bytes())?),
    }
}

/// Parses "6..16" (inclusive) or "6,8,10".
pub fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Parse(format!("bad size list {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

struct Ctx<'a> {
    cli: &'a Cli,
    config: Config,
    opts: EnumerationOptions,
    stdout: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn note(&self, msg: &str) {
        if !self.cli.quiet {
            eprintln!("{msg}");
        }
    }

    fn enumerate(&mut self, a: &EnumerateArgs) -> Result<()> {
        let doc = TxDocument::parse(&read_text(a.tx.as_deref())?)?;
        let (mut tx, truth) = match doc {
            TxDocument::Truth(gt) => (gt.tx.clone(), Some(gt)),
            TxDocument::Tx(tx) => (tx, None),
        };
        if let Some(d) = a.design {
            tx.design = d;
        }
        let mut params = a.policy.overlay(self.config.policy.clone());
        params.feerate = params.feerate.or(tx.declared_mining_feerate);
        let policy = build_policy(tx.design, &params)?;
        let mut ntx = normalize_fees(&tx, &policy)?;
        let knowledge: Option<Knowledge> = a.knowledge.as_deref().map(read_json).transpose()?;
        if let Some(k) = &knowledge {
            ntx = apply_knowledge(&ntx, k)?;
        }
        let constraints = self.config.constraints(tx.design);
        let opts = EnumerationOptions {
            submapping_cap: a.cap,
            ..self.opts.clone()
        };
        let res = enumerate(&ntx, &constraints, &opts)?;
        let mut file = ResultFile::new(&tx.txid, tx.design, &res);
        if let (Some(gt), None) = (&truth, &knowledge) {
            let sig = crate::numeric::ClassTable::from_normalized(&ntx).signature_of(&gt.true_mapping)?;
            file.truth_included = Some(res.contains(&sig));
        }
        self.note(&format!(
            "{}: {} concrete mappings, {} numeric, {} sub-mappings",
            tx.txid,
            res.total_concrete,
            res.numeric_count(),
            res.submappings.len()
        ));
        if let Some(t) = file.truth_included {
            self.note(&format!("ground truth included: {t}"));
        }
        if self.cli.stats {
            eprintln!("{}", serde_json::to_string(&res.stats)?);
        }
        emit(a.out.as_deref(), &to_json(&file)?, self.stdout)
    }

    fn metrics(&mut self, a: &MetricsArgs) -> Result<()> {
        let file: ResultFile = from_json(&read_text(a.result.as_deref())?)?;
        let res = file.to_result()?;
        let weights: Option<WeightTable> = a.weights.as_deref().map(read_json).transpose()?;
        let users: Vec<Vec<String>> = a
            .users
            .iter()
            .map(|u| u.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
            .collect();
        let report = self.opts_install(|| metrics_report(&res, weights.as_ref(), &users))?;
        self.note(&format!("entropy: {:.6} bits", report.entropy_bits));
        emit(a.out.as_deref(), &to_json(&report)?, self.stdout)
    }

    fn opts_install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.opts.install(f)
    }

    fn anonloss(&mut self, a: &AnonlossArgs) -> Result<()> {
        let mut g: TxGraph = from_json(&read_text(a.graph.as_deref())?)?;
        if a.detect {
            let found = detect_coinjoins(&g, &self.config.detection);
            self.note(&format!("detected {} coinjoins", found.len()));
            g.coinjoin_ids.extend(found);
        }
        let clock = if a.block_clock { Clock::BlockHeight } else { Clock::Timestamp };
        let buckets = BucketScheme::for_design(a.buckets);
        let report = self.opts_install(|| compute_loss_with(&g, &a.horizons, &buckets, clock))?;
        self.note(&format!(
            "{} coinjoins, {} outputs",
            report.per_tx.len(),
            report.per_output.len()
        ));
        emit(a.out.as_deref(), &to_json(&report)?, self.stdout)
    }

    fn gen(&mut self, a: &GenArgs) -> Result<()> {
        let params = &self.config.generator;
        if let Some(GenCommand::Trend(t)) = &a.trend {
            let sizes = parse_sizes(&t.sizes)?;
            let rows = trend_dataset(t.design, &sizes, t.per_size, self.cli.seed, params, &self.opts)?;
            let mut buf = Vec::new();
            write_trend_csv(&mut buf, &rows)?;
            self.note(&format!("{} rows", rows.len()));
            return emit(t.out.as_deref(), &String::from_utf8_lossy(&buf), self.stdout);
        }
        let gt = match a.size {
            Some(size) => generate_sized(a.design, size, self.cli.seed, 0, params)?,
            None => generate(a.design, a.users, self.cli.seed, params)?,
        };
        self.note(&format!(
            "{}: {} inputs, {} outputs, {} users",
            gt.tx.txid,
            gt.tx.inputs.len(),
            gt.tx.outputs.len(),
            gt.true_mapping.submappings.len()
        ));
        emit(a.out.as_deref(), &to_json(&gt)?, self.stdout)
    }

    fn fit(&mut self, a: &FitArgs) -> Result<()> {
        let text = read_text(a.csv.as_deref())?;
        let rows = read_trend_csv(text.as_bytes())?;
        let fit = fit_trend(&rows, a.aggregate)?;
        let prediction = a.predict.map(|s| fit.predict(s, a.loss)).transpose()?;
        self.note(&format!(
            "log2(count) = {:.6} * size + {:.6}, R^2 = {:.4}",
            fit.slope, fit.intercept, fit.r_squared
        ));
        if let Some(p) = &prediction {
            self.note(&format!(
                "size {} at loss {} -> effective size {}: log2(count) = {:.3}",
                p.size, p.loss, p.effective_size, p.log2_count
            ));
        }
        emit(a.out.as_deref(), &to_json(&FitReport { fit, prediction })?, self.stdout)
    }

    fn linked(&mut self, a: &LinkedArgs) -> Result<()> {
        let file: LinkedSetFile = read_json(&a.set)?;
        let dir = a.set.parent().unwrap_or(Path::new("."));
        let txs = file
            .txs
            .into_iter()
            .map(|e| match e {
                MemberEntry::Inline(tx) => Ok(*tx),
                MemberEntry::Path(p) => read_json(&dir.join(p)),
            })
            .collect::<Result<Vec<Coinjoin>>>()?;
        let set = LinkedSet {
            txs,
            internal_coins: file.internal_coins,
            links: file.links,
        };
        let params = a.policy.overlay(self.config.policy.clone());
        let mut setups = set.default_setups(&params)?;
        if let Some(c) = &self.config.constraints {
            for s in &mut setups {
                s.constraints = c.clone();
            }
        }
        let opts = EnumerationOptions {
            submapping_cap: a.cap,
            ..self.opts.clone()
        };
        let lr = enumerate_linked(&set, &setups, &opts)?;
        self.note(&format!(
            "{}: {} concrete mappings, {} of {} numeric mappings realizable",
            lr.artificial.tx.txid,
            lr.result.total_concrete,
            lr.result.numeric_count(),
            lr.unfiltered_count
        ));
        let report = LinkedReport {
            result: ResultFile::new(&lr.artificial.tx.txid, lr.artificial.tx.design, &lr.result),
            artificial: lr.artificial,
            unfiltered_numeric_count: lr.unfiltered_count,
        };
        emit(a.out.as_deref(), &to_json(&report)?, self.stdout)
    }
}

/// Runs a parsed command line, writing primary output to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let threads = cli.threads.or(config.threads).unwrap_or(0);
    let mut ctx = Ctx {
        cli,
        opts: EnumerationOptions::with_threads(threads),
        config,
        stdout,
    };
    match &cli.command {
        Command::Enumerate(a) => ctx.enumerate(a),
        Command::Metrics(a) => ctx.metrics(a),
        Command::Anonloss(a) => ctx.anonloss(a),
        Command::Gen(a) => ctx.gen(a),
        Command::Fit(a) => ctx.fit(a),
        Command::Linked(a) => ctx.linked(a),
    }
}

/// Entry point of the `cjmap` binary.
pub fn main_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("error: Usage: {}", e.to_string().trim_start_matches("error: ").trim_end());
            return ExitCode::from(2);
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::FAILURE
        }
    }
}
