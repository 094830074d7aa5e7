//! The `armour` command line.
//!
//! Exit codes: 0 on success, 1 on a domain error (including a failed
//! gradient check), 2 on a usage error. Usage errors print the relevant
//! help to standard error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{CommandFactory, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{
    model_flop_count, param_report, redundancy_layers, ArchSpec, RedundancyMode, RedundancyOptions,
    DEFAULT_EPSILON,
};
use crate::attention::{AttentionConfig, AttentionVariant, AttentionWeights};
use crate::bench::{run_interleaved, BenchOptions, BenchTarget, MIN_ITERS, MIN_WARMUP};
use crate::error::{ArmourError, Result};
use crate::gradcheck::{gradcheck_attention, gradcheck_levit};
use crate::io::{DType, WeightContainer};
use crate::levit::{LevitBlockConfig, LevitBlockWeights, LevitVariant};
use crate::report::{render, ContainerSummary, Format, TextReport};
use crate::tensor::Tensor;
use crate::train::{train, ToyTask, TrainOptions};

/// LeViT block dimensions used when a block variant is named without `--levit`.
const DEFAULT_LEVIT_DIMS: [usize; 5] = [2, 4, 2, 2, 8];

#[derive(Debug, Parser)]
#[command(name = "armour", version, about = "Compact self-attention toolkit")]
pub struct Cli {
    /// Seed for weights, inputs and data (each subcommand has its own default).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the report here instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Output format [default: text on standard output, jsonl into `--out`].
    #[arg(long, global = true, value_name = "text|jsonl")]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Weight redundancy of projection pairs in an ARMW container.
    Analyze(AnalyzeArgs),
    /// Per-layer parameter table and the saving of an attention variant.
    Paramcount(ParamcountArgs),
    /// Analytic multiply-accumulate counts.
    Flops(FlopsArgs),
    /// Wall-clock forward-pass timing, variants interleaved.
    Bench(BenchArgs),
    /// Train the toy classifier and record its curve.
    Train(TrainArgs),
    /// Write or validate ARMW weight containers.
    #[command(subcommand)]
    Weights(WeightsCommand),
}

/// An attention variant, a LeViT block variant, or `all`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariantArg {
    Attention(AttentionVariant),
    Levit(LevitVariant),
    All,
}

impl FromStr for VariantArg {
    type Err = ArmourError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(Self::All);
        }
        if let Ok(v) = s.parse() {
            return Ok(Self::Attention(v));
        }
        s.parse().map(Self::Levit).map_err(|_| {
            let names: Vec<_> = AttentionVariant::ALL
                .iter()
                .map(|v| v.as_str())
                .chain(LevitVariant::ALL.iter().map(|v| v.as_str()))
                .collect();
            ArmourError::Config(format!(
                "unknown variant `{s}` (expected all, {})",
                names.join(", ")
            ))
        })
    }
}

fn parse_dims<const N: usize>(s: &str) -> std::result::Result<[usize; N], String> {
    let parts: Vec<_> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated integers, got `{s}`"));
    }
    let mut out = [0; N];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p
            .parse()
            .map_err(|_| format!("`{p}` is not a non-negative integer"))?;
        if *o == 0 {
            return Err("dimensions must be positive".into());
        }
    }
    Ok(out)
}

fn parse_dims3(s: &str) -> std::result::Result<[usize; 3], String> {
    parse_dims::<3>(s)
}

fn parse_dims5(s: &str) -> std::result::Result<[usize; 5], String> {
    parse_dims::<5>(s)
}

fn parse_dtype(s: &str) -> std::result::Result<DType, String> {
    match s {
        "f32" => Ok(DType::F32),
        "f64" => Ok(DType::F64),
        _ => Err(format!("unknown dtype `{s}` (expected f32 or f64)")),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pair(pub String, pub String);

impl FromStr for Pair {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("pair `{s}` must look like wq:wk"))?;
        Ok(Pair(tensor_name(a)?, tensor_name(b)?))
    }
}

/// `wq` and `w_q` both name `w_q`; likewise `pq` names `p_q`.
fn tensor_name(short: &str) -> std::result::Result<String, String> {
    let full = match short.len() {
        2 => format!("{}_{}", &short[..1], &short[1..]),
        _ => short.to_string(),
    };
    let known = ["w_q", "w_k", "w_v", "w_o", "p_q", "p_k", "p_v", "p_o"];
    if known.contains(&full.as_str()) {
        Ok(full)
    } else {
        Err(format!(
            "unknown projection `{short}` (expected one of wq, wk, wv, wo, pq, pk, pv, po)"
        ))
    }
}

/// Shape selection shared by subcommands that build a single block.
#[derive(Debug, clap::Args)]
pub struct BlockArgs {
    /// Comma-separated variants, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "armour")]
    pub variant: Vec<VariantArg>,
    /// Attention dimensions `L,d,h`.
    #[arg(long, value_parser = parse_dims3, default_value = "4,8,2", value_name = "L,d,h")]
    pub dims: [usize; 3],
    /// LeViT block dimensions `N,D,H,W,C`; selects the block variants.
    #[arg(long, value_parser = parse_dims5, value_name = "N,D,H,W,C")]
    pub levit: Option<[usize; 5]>,
}

#[derive(Clone, Copy, Debug)]
enum Block {
    Attention(AttentionConfig),
    Levit(LevitBlockConfig),
}

impl BlockArgs {
    fn blocks(&self) -> std::result::Result<Vec<Block>, String> {
        let mut out = Vec::new();
        let attn = |v| {
            let [l, d, h] = self.dims;
            Block::Attention(AttentionConfig::new(v, l, d, h))
        };
        let levit = |v| {
            let [n, d, h, w, c] = self.levit.unwrap_or(DEFAULT_LEVIT_DIMS);
            Block::Levit(LevitBlockConfig::new(v, n, d, h, w, c))
        };
        for v in &self.variant {
            match *v {
                VariantArg::All if self.levit.is_some() => {
                    out.extend(LevitVariant::ALL.into_iter().map(levit))
                }
                VariantArg::All => out.extend(AttentionVariant::ALL.into_iter().map(attn)),
                VariantArg::Attention(a) if self.levit.is_none() => out.push(attn(a)),
                VariantArg::Attention(a) => {
                    return Err(format!(
                        "`{a}` is an attention variant but --levit was given"
                    ))
                }
                VariantArg::Levit(b) => out.push(levit(b)),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, clap::Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub block: BlockArgs,
    /// Number of consecutive seeds to check, starting at `--seed` (default 1).
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
}

#[derive(Debug, clap::Args)]
pub struct AnalyzeArgs {
    /// ARMW container to read.
    #[arg(long, value_name = "PATH")]
    pub weights: PathBuf,
    /// Comma-separated projection pairs.
    #[arg(long, value_delimiter = ',', default_value = "wq:wk,wq:wv")]
    pub pairs: Vec<Pair>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Break each layer down into this many column blocks.
    #[arg(long, value_name = "HEADS")]
    pub per_head: Option<usize>,
    /// Scale each matrix to unit max magnitude before comparing.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, clap::Args)]
#[group(multiple = false)]
pub struct ArchArgs {
    /// Built-in architecture: deit-ti, deit-s or deit-b.
    #[arg(long)]
    pub arch: Option<String>,
    /// JSON architecture description.
    #[arg(long, value_name = "PATH")]
    pub arch_file: Option<PathBuf>,
}

impl ArchArgs {
    fn spec(&self) -> Result<ArchSpec> {
        match (&self.arch, &self.arch_file) {
            (_, Some(path)) => ArchSpec::load(path),
            (Some(name), None) => ArchSpec::builtin(name),
            (None, None) => ArchSpec::builtin("deit-ti"),
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct ParamcountArgs {
    #[command(flatten)]
    pub arch: ArchArgs,
    /// Attention variant to compare against regular attention.
    #[arg(long, default_value = "armour")]
    pub variant: AttentionVariant,
}

#[derive(Debug, clap::Args)]
pub struct FlopsArgs {
    #[command(flatten)]
    pub arch: ArchArgs,
    /// Attention variant substituted into every attention layer.
    #[arg(long, default_value = "regular")]
    pub variant: AttentionVariant,
    /// Tokens per sequence, class token included.
    #[arg(long, default_value_t = 197)]
    pub seq_len: usize,
}

#[derive(Debug, clap::Args)]
pub struct BenchArgs {
    /// Comma-separated variants, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "regular,armour")]
    pub variant: Vec<VariantArg>,
    /// Attention dimensions `L,d,h`.
    #[arg(long, value_parser = parse_dims3, default_value = "197,192,3", value_name = "L,d,h")]
    pub dims: [usize; 3],
    /// LeViT block dimensions `N,D,H,W,C`; selects the block variants.
    #[arg(long, value_parser = parse_dims5, value_name = "N,D,H,W,C")]
    pub levit: Option<[usize; 5]>,
    #[arg(long, default_value_t = MIN_ITERS)]
    pub iters: usize,
    #[arg(long, default_value_t = MIN_WARMUP)]
    pub warmup: usize,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "armour")]
    pub variant: AttentionVariant,
    #[arg(long, default_value_t = TrainOptions::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainOptions::default().lr)]
    pub lr: f64,
    #[arg(long, default_value_t = TrainOptions::default().batch_size)]
    pub batch_size: usize,
    /// Seed of the generated dataset.
    #[arg(long, default_value_t = ToyTask::default().seed)]
    pub task_seed: u64,
    /// Where to write the trained weights; defaults to the record path with
    /// an `.armw` extension when `--out` is given.
    #[arg(long, value_name = "PATH")]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum WeightsCommand {
    /// Write seeded weights for one block per layer to `--out`.
    Export(ExportArgs),
    /// Read a container, check it against a variant, and optionally rewrite it to `--out`.
    Import(ImportArgs),
}

#[derive(Debug, clap::Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub block: BlockArgs,
    /// Number of layers (attention only).
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, value_parser = parse_dtype, default_value = "f64", value_name = "f32|f64")]
    pub dtype: DType,
}

#[derive(Debug, clap::Args)]
pub struct ImportArgs {
    #[arg(long, value_name = "PATH")]
    pub weights: PathBuf,
    #[command(flatten)]
    pub block: BlockArgs,
}

/// Where a failure should be reported and with which exit code.
enum Failure {
    Usage(String),
    Domain(ArmourError),
}

impl From<ArmourError> for Failure {
    fn from(e: ArmourError) -> Self {
        Self::Domain(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (program name first) and runs the subcommand.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            eprintln!();
            eprint!("{}", subcommand_help(&args));
            return 2;
        }
    };
    let sub = subcommand_path(&cli.command);
    match run(&cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            eprint!("{}", help_for(&sub));
            2
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn subcommand_path(cmd: &Command) -> Vec<&'static str> {
    match cmd {
        Command::Gradcheck(_) => vec!["gradcheck"],
        Command::Analyze(_) => vec!["analyze"],
        Command::Paramcount(_) => vec!["paramcount"],
        Command::Flops(_) => vec!["flops"],
        Command::Bench(_) => vec!["bench"],
        Command::Train(_) => vec!["train"],
        Command::Weights(WeightsCommand::Export(_)) => vec!["weights", "export"],
        Command::Weights(WeightsCommand::Import(_)) => vec!["weights", "import"],
    }
}

fn help_for(path: &[&str]) -> String {
    fn descend(cmd: &mut clap::Command, path: &[&str]) -> String {
        match path.split_first() {
            Some((name, rest)) => match cmd.find_subcommand_mut(name) {
                Some(sub) => descend(sub, rest),
                None => cmd.render_help().to_string(),
            },
            None => cmd.render_help().to_string(),
        }
    }
    let mut cmd = Cli::command().bin_name("armour");
    cmd.build();
    descend(&mut cmd, path)
}

/// Help for the deepest subcommand named in raw arguments.
fn subcommand_help(args: &[OsString]) -> String {
    let cmd = Cli::command();
    let mut path = Vec::new();
    let mut cur = &cmd;
    for a in args.iter().skip(1).filter_map(|a| a.to_str()) {
        if let Some(c) = cur.find_subcommand(a) {
            path.push(c.get_name().to_string());
            cur = c;
        }
    }
    let refs: Vec<&str> = path.iter().map(String::as_str).collect();
    help_for(&refs)
}

struct Output<'a> {
    format: Format,
    out: Option<&'a Path>,
    buf: String,
}

impl Output<'_> {
    fn emit<T: Serialize + TextReport>(&mut self, report: &T) -> Result<()> {
        self.buf.push_str(&render(report, self.format)?);
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.out {
            Some(path) => fs::write(path, self.buf)?,
            None => std::io::stdout().write_all(self.buf.as_bytes())?,
        }
        Ok(())
    }
}

fn run(cli: &Cli) -> CliResult<i32> {
    let default_format = if cli.out.is_some() {
        Format::Jsonl
    } else {
        Format::Text
    };
    let mut out = Output {
        format: cli.format.unwrap_or(default_format),
        out: cli.out.as_deref(),
        buf: String::new(),
    };
    let code = match &cli.command {
        Command::Gradcheck(a) => gradcheck(a, cli.seed.unwrap_or(1), &mut out)?,
        Command::Analyze(a) => analyze(a, &mut out)?,
        Command::Paramcount(a) => {
            out.emit(&param_report(&a.arch.spec()?, a.variant)?)?;
            0
        }
        Command::Flops(a) => {
            let spec = a.arch.spec()?.with_attention_variant(a.variant);
            out.emit(&model_flop_count(&spec, a.seq_len)?)?;
            0
        }
        Command::Bench(a) => bench(a, cli.seed.unwrap_or(0), &mut out)?,
        Command::Train(a) => train_cmd(a, cli, &mut out)?,
        // here --out names a container, so any listing goes to stdout
        Command::Weights(WeightsCommand::Export(a)) => {
            out.out = None;
            out.format = cli.format.unwrap_or(Format::Text);
            export(a, cli)?
        }
        Command::Weights(WeightsCommand::Import(a)) => {
            out.out = None;
            out.format = cli.format.unwrap_or(Format::Text);
            import(a, cli, &mut out)?
        }
    };
    out.finish()?;
    Ok(code)
}

fn gradcheck(a: &GradcheckArgs, seed: u64, out: &mut Output) -> CliResult<i32> {
    let blocks = a.block.blocks().map_err(Failure::Usage)?;
    let mut failed = false;
    for s in seed..seed + a.seeds {
        for b in &blocks {
            let r = match b {
                Block::Attention(c) => gradcheck_attention(c, s)?,
                Block::Levit(c) => gradcheck_levit(c, s)?,
            };
            failed |= !r.passed;
            out.emit(&r)?;
        }
    }
    Ok(i32::from(failed))
}

fn analyze(a: &AnalyzeArgs, out: &mut Output) -> CliResult<i32> {
    let container = WeightContainer::load(&a.weights)?;
    let opts = RedundancyOptions {
        mode: match a.per_head {
            Some(heads) => RedundancyMode::PerHead { heads },
            None => RedundancyMode::Whole,
        },
        normalize: a.normalize,
    };
    for Pair(first, second) in &a.pairs {
        let mut layers = Vec::new();
        for (name, t) in container.iter() {
            let prefix = if name == first {
                ""
            } else if let Some(p) = name.strip_suffix(&format!(".{first}")) {
                p
            } else {
                continue;
            };
            let other = if prefix.is_empty() {
                second.clone()
            } else {
                format!("{prefix}.{second}")
            };
            if let Some(u) = container.get(&other) {
                let label = if prefix.is_empty() { "0" } else { prefix };
                layers.push((label, t, u));
            }
        }
        if layers.is_empty() {
            return Err(ArmourError::Config(format!(
                "{} holds no `{first}` / `{second}` pair",
                a.weights.display()
            ))
            .into());
        }
        let label = format!("{}_{}", first.replace('_', ""), second.replace('_', ""));
        out.emit(&redundancy_layers(&label, &layers, a.epsilon, opts)?)?;
    }
    Ok(0)
}

fn bench(a: &BenchArgs, seed: u64, out: &mut Output) -> CliResult<i32> {
    let block = BlockArgs {
        variant: a.variant.clone(),
        dims: a.dims,
        levit: a.levit,
    };
    let opts = BenchOptions {
        warmup: a.warmup,
        iters: a.iters,
        seed,
    };
    let targets: Vec<BenchTarget> = block
        .blocks()
        .map_err(Failure::Usage)?
        .into_iter()
        .map(|b| match b {
            Block::Attention(c) => BenchTarget::Attention(c),
            Block::Levit(c) => BenchTarget::Levit(c),
        })
        .collect();
    for report in run_interleaved(&targets, &opts)? {
        out.emit(&report)?;
    }
    Ok(0)
}

fn train_cmd(a: &TrainArgs, cli: &Cli, out: &mut Output) -> CliResult<i32> {
    let task = ToyTask {
        seed: a.task_seed,
        ..ToyTask::default()
    };
    let opts = TrainOptions {
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch_size,
        seed: cli.seed.unwrap_or(TrainOptions::default().seed),
    };
    let record = train(a.variant, &task, &opts)?;
    let weights_path = a
        .weights
        .clone()
        .or_else(|| cli.out.as_ref().map(|p| p.with_extension("armw")));
    if let (Some(path), Some(model)) = (weights_path, &record.weights) {
        model.to_container(DType::F64)?.save(path)?;
    }
    out.emit(&record)?;
    Ok(0)
}

fn attention_prefix(layer: usize) -> String {
    format!("layer{layer}.")
}

const LEVIT_PREFIX: &str = "block.";

fn single_block(args: &BlockArgs) -> CliResult<Block> {
    let blocks = args.blocks().map_err(Failure::Usage)?;
    match blocks.as_slice() {
        [b] => Ok(*b),
        _ => Err(Failure::Usage("name exactly one variant".into())),
    }
}

fn export(a: &ExportArgs, cli: &Cli) -> CliResult<i32> {
    let path = cli
        .out
        .as_ref()
        .ok_or_else(|| Failure::Usage("weights export needs --out".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
    let mut container = WeightContainer::new();
    match single_block(&a.block)? {
        Block::Attention(cfg) => {
            cfg.validate()?;
            for layer in 0..a.layers {
                AttentionWeights::init(&cfg, &mut rng).export(
                    &mut container,
                    &attention_prefix(layer),
                    a.dtype,
                )?;
            }
        }
        Block::Levit(cfg) => {
            if a.layers != 1 {
                return Err(Failure::Usage("--layers applies to attention only".into()));
            }
            cfg.validate()?;
            LevitBlockWeights::init(&cfg, &mut rng).export(
                &mut container,
                LEVIT_PREFIX,
                a.dtype,
            )?;
        }
    }
    container.save(path)?;
    Ok(0)
}

fn import(a: &ImportArgs, cli: &Cli, out: &mut Output) -> CliResult<i32> {
    let container = WeightContainer::load(&a.weights)?;
    let dtype_of = |name: &str| container.entry(name).map_or(DType::F64, |e| e.dtype);
    let mut rewritten = WeightContainer::new();
    let mut push = |prefix: &str, named: Vec<(&'static str, &Tensor)>| -> Result<()> {
        for (n, t) in named {
            let full = format!("{prefix}{n}");
            let dtype = dtype_of(&full);
            rewritten.insert(full, t.clone(), dtype)?;
        }
        Ok(())
    };
    match single_block(&a.block)? {
        Block::Attention(cfg) => {
            let mut layer = 0;
            while container
                .names()
                .iter()
                .any(|n| n.starts_with(&attention_prefix(layer)))
            {
                let w = AttentionWeights::import(&container, &attention_prefix(layer), &cfg)?;
                push(&attention_prefix(layer), w.named())?;
                layer += 1;
            }
        }
        Block::Levit(cfg) => {
            let w = LevitBlockWeights::import(&container, LEVIT_PREFIX, &cfg)?;
            push(LEVIT_PREFIX, w.named())?;
        }
    }
    let known = rewritten.names();
    let stray: Vec<String> = container
        .names()
        .into_iter()
        .filter(|n| !known.contains(n))
        .map(str::to_string)
        .collect();
    if !stray.is_empty() || rewritten.is_empty() {
        return Err(ArmourError::Format(format!(
            "{} holds tensors outside the expected layout: {stray:?}",
            a.weights.display()
        ))
        .into());
    }
    let summary = ContainerSummary::new(&a.weights.display().to_string(), &rewritten);
    if let Some(path) = &cli.out {
        rewritten.save(path)?;
    }
    out.emit(&summary)?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_parsing() {
        assert_eq!(parse_dims3("4,8,2").unwrap(), [4, 8, 2]);
        assert!(parse_dims3("4,8").is_err());
        assert!(parse_dims3("4,0,2").is_err());
        assert!(parse_dims3("a,8,2").is_err());
    }

    #[test]
    fn pair_parsing() {
        let p: Pair = "wq:wk".parse().unwrap();
        assert_eq!(p, Pair("w_q".into(), "w_k".into()));
        assert!("wq".parse::<Pair>().is_err());
        assert!("wq:zz".parse::<Pair>().is_err());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("all".parse::<VariantArg>().unwrap(), VariantArg::All);
        assert!(matches!(
            "qk_replaces_v".parse::<VariantArg>().unwrap(),
            VariantArg::Levit(LevitVariant::QkReplacesV)
        ));
        assert!("nope".parse::<VariantArg>().is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
