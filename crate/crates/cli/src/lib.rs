//! Command implementations behind the `lgp` binary.
//!
//! Each `cmd_*` function takes fully resolved arguments and either writes files
//! or returns the text destined for standard output, so the binary stays a thin
//! dispatcher and the commands can be driven directly from tests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::Deserialize;

use lgp_core::duration::{neff_continuous, neff_discrete, neff_limit, DEFAULT_CORRELATION};
use lgp_core::io::{
    read_embedding_table, read_plda, read_rttm, read_sad, write_embedding_table, write_plda, write_rttm,
    write_sad,
};
use lgp_core::scoring::score_der;
use lgp_core::synth::{sample_conversation, SynthConfig};
use lgp_core::two_pass::{diarize, DiarizeOutput, FrameAggregator, WindowTable};
use lgp_core::{
    ClusterConfig, DerBreakdown, DerOptions, DiarizeConfig, DurationConfig, EmbeddingSource, EmbeddingTable,
    PassConfig, PldaParams, RttmRecord, SadRegion,
};

#[derive(Debug, Parser)]
#[command(name = "lgp", version, about = "Two-pass leave-one-out Gaussian PLDA speaker diarization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Diarize one recording, or every recording in a manifest.
    Diarize(DiarizeArgs),
    /// Sample a synthetic conversation with its ground truth.
    Synth(SynthArgs),
    /// Score hypothesis RTTM against reference RTTM.
    Score(ScoreArgs),
    /// Print effective sample counts for N = 1..max-n.
    Neff(NeffArgs),
}

/// How rows of an embedding table map onto analysis windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    /// Frame-level vectors averaged over each window.
    Frames,
    /// One precomputed vector per window, indexed by window start time.
    Windows,
}

/// Diarization flags. Every tunable is optional so that values resolve as
/// flags > `--config` file > built-in defaults.
#[derive(Debug, Default, Args)]
pub struct DiarizeArgs {
    /// TOML file supplying any of the settings below; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// PLDA parameter file.
    #[arg(long)]
    pub plda: Option<PathBuf>,
    /// Embedding table for the first pass (and the second, unless --table2).
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Embedding table for the second pass.
    #[arg(long)]
    pub table2: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub table_kind: Option<TableKind>,
    /// Speech activity file (`<rec> <start> <end>` per line).
    #[arg(long)]
    pub sad: Option<PathBuf>,
    /// Recording to diarize; required when the SAD file lists several.
    #[arg(long)]
    pub recording: Option<String>,
    /// Lines of `<rec> <sad> <table> [<table2>]`; recordings run in parallel.
    #[arg(long, conflicts_with_all = ["table", "table2", "sad", "recording"])]
    pub manifest: Option<PathBuf>,
    /// Output RTTM file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-iteration log file.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Correlation between successive segments [default: 0.9].
    #[arg(long)]
    pub r: Option<f64>,
    /// Target segment count per file, or "none" to leave counts unscaled [default: none].
    #[arg(long, value_parser = parse_n0)]
    pub n0: Option<N0>,
    /// Initial number of speakers [default: 10].
    #[arg(long)]
    pub max_speakers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 2.0]
    #[arg(long)]
    pub pass1_window: Option<f64>,
    /// [default: 2.0]
    #[arg(long)]
    pub pass1_step: Option<f64>,
    /// [default: 20]
    #[arg(long)]
    pub pass1_iterations: Option<usize>,
    /// [default: 1.25]
    #[arg(long)]
    pub pass2_window: Option<f64>,
    /// [default: 0.25]
    #[arg(long)]
    pub pass2_step: Option<f64>,
    /// [default: 2]
    #[arg(long)]
    pub pass2_iterations: Option<usize>,
    /// Stop after the coarse pass.
    #[arg(long)]
    pub no_pass2: bool,
}

/// Parsed `--n0` value; the inner `None` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct N0(pub Option<f64>);

fn parse_n0(s: &str) -> std::result::Result<N0, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(N0(None));
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(N0(Some(v))),
        _ => Err(format!("expected a positive number or \"none\", got {s:?}")),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilePass {
    window: Option<f64>,
    step: Option<f64>,
    iterations: Option<usize>,
    enabled: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(untagged)]
enum FileN0 {
    #[default]
    Unset,
    Value(f64),
    Word(String),
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    plda: Option<PathBuf>,
    table: Option<PathBuf>,
    table2: Option<PathBuf>,
    table_kind: Option<TableKind>,
    sad: Option<PathBuf>,
    recording: Option<String>,
    manifest: Option<PathBuf>,
    out: Option<PathBuf>,
    log: Option<PathBuf>,
    r: Option<f64>,
    #[serde(default)]
    n0: FileN0,
    max_speakers: Option<usize>,
    seed: Option<u64>,
    #[serde(default)]
    pass1: FilePass,
    #[serde(default)]
    pass2: FilePass,
}

/// Where the embeddings and speech regions of the recordings come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Inputs {
    Single {
        table: PathBuf,
        table2: Option<PathBuf>,
        sad: PathBuf,
        recording: Option<String>,
    },
    Manifest(PathBuf),
}

/// Fully resolved diarization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub plda: PathBuf,
    pub inputs: Inputs,
    pub table_kind: TableKind,
    pub out: PathBuf,
    pub log: Option<PathBuf>,
    pub r: f64,
    pub n0: Option<f64>,
    pub max_speakers: usize,
    pub seed: u64,
    pub pass1: PassConfig,
    pub pass2: PassConfig,
    pub pass2_enabled: bool,
}

impl RunConfig {
    /// Layers flags over the optional config file over defaults.
    pub fn resolve(args: &DiarizeArgs) -> Result<Self> {
        let file: FileConfig = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
            }
            None => FileConfig::default(),
        };
        let file_n0 = match file.n0 {
            FileN0::Unset => None,
            FileN0::Value(v) => Some(parse_n0(&v.to_string()).map_err(anyhow::Error::msg)?),
            FileN0::Word(w) => Some(parse_n0(&w).map_err(anyhow::Error::msg)?),
        };

        let require = |flag: &Option<PathBuf>, from_file: Option<PathBuf>, name: &str| -> Result<PathBuf> {
            flag.clone()
                .or(from_file)
                .with_context(|| format!("missing --{name} (flag or config file)"))
        };
        let plda = require(&args.plda, file.plda, "plda")?;
        let out = require(&args.out, file.out, "out")?;

        let single_given = args.table.is_some() || args.sad.is_some();
        let manifest = if single_given {
            None
        } else {
            args.manifest.clone().or(file.manifest)
        };
        let inputs = match manifest {
            Some(path) => Inputs::Manifest(path),
            None => Inputs::Single {
                table: require(&args.table, file.table, "table")?,
                table2: args.table2.clone().or(file.table2),
                sad: require(&args.sad, file.sad, "sad")?,
                recording: args.recording.clone().or(file.recording),
            },
        };

        let coarse = PassConfig::COARSE;
        let fine = PassConfig::FINE;
        let pass1 = PassConfig {
            window: args.pass1_window.or(file.pass1.window).unwrap_or(coarse.window),
            step: args.pass1_step.or(file.pass1.step).unwrap_or(coarse.step),
            max_iterations: args
                .pass1_iterations
                .or(file.pass1.iterations)
                .unwrap_or(coarse.max_iterations),
        };
        let pass2 = PassConfig {
            window: args.pass2_window.or(file.pass2.window).unwrap_or(fine.window),
            step: args.pass2_step.or(file.pass2.step).unwrap_or(fine.step),
            max_iterations: args
                .pass2_iterations
                .or(file.pass2.iterations)
                .unwrap_or(fine.max_iterations),
        };
        if file.pass1.enabled == Some(false) {
            bail!("pass1 cannot be disabled");
        }
        let pass2_enabled = !args.no_pass2 && file.pass2.enabled.unwrap_or(true);

        let cfg = RunConfig {
            plda,
            inputs,
            table_kind: args.table_kind.or(file.table_kind).unwrap_or(TableKind::Frames),
            out,
            log: args.log.clone().or(file.log),
            r: args.r.or(file.r).unwrap_or(DEFAULT_CORRELATION),
            n0: args.n0.or(file_n0).and_then(|n| n.0),
            max_speakers: args.max_speakers.or(file.max_speakers).unwrap_or(10),
            seed: args.seed.or(file.seed).unwrap_or(0),
            pass1,
            pass2,
            pass2_enabled,
        };
        validate(&cfg.diarize_config("check"))?;
        Ok(cfg)
    }

    fn diarize_config(&self, recording_id: &str) -> DiarizeConfig {
        DiarizeConfig {
            recording_id: recording_id.to_string(),
            pass1: self.pass1,
            pass2: self.pass2_enabled.then_some(self.pass2),
            cluster: ClusterConfig {
                max_speakers: self.max_speakers,
                duration: DurationConfig { r: self.r, n0: self.n0 },
                seed: self.seed,
                ..ClusterConfig::default()
            },
        }
    }
}

fn validate(cfg: &DiarizeConfig) -> Result<()> {
    cfg.pass1.validate()?;
    if let Some(p) = &cfg.pass2 {
        p.validate()?;
    }
    cfg.cluster.validate()?;
    Ok(())
}

/// One recording's inputs, already loaded.
struct Job {
    recording: String,
    sad: Vec<SadRegion>,
    table: EmbeddingTable,
    table2: Option<EmbeddingTable>,
}

fn load_table(path: &Path) -> Result<EmbeddingTable> {
    read_embedding_table(path).with_context(|| format!("reading embedding table {}", path.display()))
}

fn load_sad(path: &Path) -> Result<BTreeMap<String, Vec<SadRegion>>> {
    read_sad(path).with_context(|| format!("reading SAD file {}", path.display()))
}

fn pick_recording(
    mut sad: BTreeMap<String, Vec<SadRegion>>,
    wanted: Option<&str>,
    sad_path: &Path,
) -> Result<(String, Vec<SadRegion>)> {
    match wanted {
        Some(rec) => {
            let regions = sad
                .remove(rec)
                .with_context(|| format!("recording {rec:?} not found in {}", sad_path.display()))?;
            Ok((rec.to_string(), regions))
        }
        None if sad.len() == 1 => Ok(sad.pop_first().expect("one entry")),
        None if sad.is_empty() => bail!("no speech regions in {}", sad_path.display()),
        None => bail!(
            "{} lists {} recordings; choose one with --recording or use --manifest",
            sad_path.display(),
            sad.len()
        ),
    }
}

fn load_jobs(inputs: &Inputs) -> Result<Vec<Job>> {
    match inputs {
        Inputs::Single {
            table,
            table2,
            sad,
            recording,
        } => {
            let (recording, regions) = pick_recording(load_sad(sad)?, recording.as_deref(), sad)?;
            Ok(vec![Job {
                recording,
                sad: regions,
                table: load_table(table)?,
                table2: table2.as_deref().map(load_table).transpose()?,
            }])
        }
        Inputs::Manifest(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
            let base = path.parent().unwrap_or(Path::new("."));
            let resolve = |p: &str| base.join(p);
            let mut jobs = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let fields: Vec<&str> = line.split_whitespace().collect();
                if !(3..=4).contains(&fields.len()) {
                    bail!(
                        "{}:{}: expected `<rec> <sad> <table> [<table2>]`, got {} fields",
                        path.display(),
                        i + 1,
                        fields.len()
                    );
                }
                let sad_path = resolve(fields[1]);
                let (recording, regions) = pick_recording(load_sad(&sad_path)?, Some(fields[0]), &sad_path)?;
                jobs.push(Job {
                    recording,
                    sad: regions,
                    table: load_table(&resolve(fields[2]))?,
                    table2: fields.get(3).map(|p| load_table(&resolve(p))).transpose()?,
                });
            }
            if jobs.is_empty() {
                bail!("manifest {} lists no recordings", path.display());
            }
            Ok(jobs)
        }
    }
}

fn source(table: EmbeddingTable, kind: TableKind) -> Box<dyn EmbeddingSource + Send + Sync> {
    match kind {
        TableKind::Frames => Box::new(FrameAggregator { frames: table }),
        TableKind::Windows => Box::new(WindowTable { table }),
    }
}

/// Iteration log lines for one recording.
pub fn format_iteration_log(recording: &str, out: &DiarizeOutput) -> String {
    let mut text = String::new();
    let passes = [Some(&out.pass1), out.pass2.as_ref()];
    for (p, pass) in passes.iter().enumerate() {
        let Some(pass) = pass else { continue };
        for rec in &pass.output.log {
            writeln!(
                text,
                "{recording} pass{} iter {} active {} change {:.6e}",
                p + 1,
                rec.iteration,
                rec.active_speakers,
                rec.max_change
            )
            .expect("write to string");
        }
    }
    text
}

fn run_job(job: Job, plda: &PldaParams, cfg: &RunConfig) -> Result<(Vec<RttmRecord>, String)> {
    let check_dim = |t: &EmbeddingTable| -> Result<()> {
        if t.dim != plda.dim() {
            bail!(
                "recording {}: embedding dimension {} does not match PLDA dimension {}",
                job.recording,
                t.dim,
                plda.dim()
            );
        }
        Ok(())
    };
    check_dim(&job.table)?;
    if let Some(t) = &job.table2 {
        check_dim(t)?;
    }
    let coarse = source(job.table, cfg.table_kind);
    let fine = job.table2.map(|t| source(t, cfg.table_kind));
    let dcfg = cfg.diarize_config(&job.recording);
    let out = diarize(
        coarse.as_ref(),
        fine.as_deref().map(|f| f as &dyn EmbeddingSource),
        plda,
        &job.sad,
        &dcfg,
    )
    .with_context(|| format!("diarizing recording {}", job.recording))?;
    info!(
        "{}: {} speakers after pass 1, {} RTTM records",
        job.recording,
        out.pass1.output.responsibilities.num_active(),
        out.records.len()
    );
    let log = format_iteration_log(&job.recording, &out);
    Ok((out.records, log))
}

/// Runs diarization and writes the RTTM (and optional iteration log).
///
/// Recordings from a manifest are processed in parallel; output follows
/// manifest order.
pub fn cmd_diarize(cfg: &RunConfig) -> Result<()> {
    let plda = read_plda(&cfg.plda).with_context(|| format!("reading PLDA {}", cfg.plda.display()))?;
    let jobs = load_jobs(&cfg.inputs)?;
    let results: Vec<(Vec<RttmRecord>, String)> = jobs
        .into_par_iter()
        .map(|job| run_job(job, &plda, cfg))
        .collect::<Result<_>>()?;
    let records: Vec<RttmRecord> = results.iter().flat_map(|r| r.0.iter().cloned()).collect();
    write_rttm(&cfg.out, &records).with_context(|| format!("writing {}", cfg.out.display()))?;
    if let Some(log_path) = &cfg.log {
        let text: String = results.iter().map(|r| r.1.as_str()).collect();
        fs::write(log_path, text).with_context(|| format!("writing {}", log_path.display()))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output prefix; writes <prefix>.emb, .rttm, .sad and .plda.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "synth")]
    pub recording: String,
    #[arg(long, default_value_t = 2)]
    pub speakers: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Across-speaker variance, the same in every dimension.
    #[arg(long, default_value_t = 9.0)]
    pub psi: f64,
    /// Frame-level channel correlation.
    #[arg(long, default_value_t = 0.0)]
    pub r: f64,
    #[arg(long, default_value_t = 0.25)]
    pub frame_step: f64,
    #[arg(long, default_value_t = 8.0)]
    pub turn_mean: f64,
    #[arg(long, default_value_t = 60.0)]
    pub length: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Window length the written PLDA is calibrated for.
    #[arg(long, default_value_t = 2.0)]
    pub window: f64,
    /// Multiplier on the matched within-speaker covariance of the written PLDA.
    #[arg(long, default_value_t = 80.0)]
    pub wc_scale: f64,
}

/// Writes a synthetic conversation and a PLDA model for it.
pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        num_speakers: args.speakers,
        dim: args.dim,
        psi: vec![args.psi; args.dim],
        r: args.r,
        frame_step: args.frame_step,
        turn_mean: args.turn_mean,
        file_length: args.length,
        seed: args.seed,
    };
    let conv = sample_conversation(&cfg)?;
    let plda = cfg.calibrated_plda(args.window, args.wc_scale)?;
    let path = |ext: &str| {
        let mut p = args.out.clone().into_os_string();
        p.push(format!(".{ext}"));
        PathBuf::from(p)
    };
    write_embedding_table(path("emb"), &conv.frames)?;
    write_rttm(path("rttm"), &conv.rttm(&args.recording))?;
    write_sad(path("sad"), &args.recording, &conv.speech())?;
    write_plda(path("plda"), &plda)?;
    info!(
        "wrote {} frames, {} turns, {} speakers",
        conv.frames.rows.len(),
        conv.turns.len(),
        conv.num_speaking()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub hyp: PathBuf,
    /// Seconds forgiven on each side of reference boundaries.
    #[arg(long, default_value_t = 0.25)]
    pub collar: f64,
    /// Leave reference regions with overlapping speakers unscored.
    #[arg(long)]
    pub ignore_overlap: bool,
}

fn group_by_recording(records: Vec<RttmRecord>) -> BTreeMap<String, Vec<RttmRecord>> {
    let mut map: BTreeMap<String, Vec<RttmRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.recording_id.clone()).or_default().push(r);
    }
    map
}

fn breakdown_row(name: &str, b: &DerBreakdown) -> String {
    format!(
        "{name:<16} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>7.3}\n",
        b.missed, b.false_alarm, b.confusion, b.scored_total, b.der
    )
}

/// Scores every reference recording and returns the report text.
pub fn cmd_score(args: &ScoreArgs) -> Result<String> {
    let reference = group_by_recording(
        read_rttm(&args.reference).with_context(|| format!("reading {}", args.reference.display()))?,
    );
    let mut hypothesis =
        group_by_recording(read_rttm(&args.hyp).with_context(|| format!("reading {}", args.hyp.display()))?);
    if reference.is_empty() {
        bail!("reference {} has no records", args.reference.display());
    }
    let opts = DerOptions {
        collar: args.collar,
        score_overlap: !args.ignore_overlap,
    };
    let mut report = format!(
        "{:<16} {:>10} {:>10} {:>10} {:>10} {:>7}\n",
        "recording", "missed", "false_al", "confusion", "scored", "DER"
    );
    let mut parts = Vec::new();
    for (rec, refs) in &reference {
        let hyps = hypothesis.remove(rec).unwrap_or_default();
        let b = score_der(refs, &hyps, &opts).with_context(|| format!("scoring recording {rec}"))?;
        report.push_str(&breakdown_row(rec, &b));
        parts.push(b);
    }
    for rec in hypothesis.keys() {
        warn!("hypothesis recording {rec} has no reference; not scored");
    }
    report.push_str(&breakdown_row("TOTAL", &DerBreakdown::combine(&parts)));
    Ok(report)
}

#[derive(Debug, Args)]
pub struct NeffArgs {
    #[arg(long, default_value_t = DEFAULT_CORRELATION)]
    pub r: f64,
    #[arg(long, default_value_t = 50)]
    pub max_n: u64,
}

/// Table of N against the discrete, limit and continuous effective counts.
pub fn cmd_neff(args: &NeffArgs) -> Result<String> {
    if args.max_n < 1 {
        bail!("--max-n must be at least 1");
    }
    let mut text = format!("{:>5} {:>12} {:>12} {:>12}\n", "N", "discrete", "limit", "continuous");
    for n in 1..=args.max_n {
        writeln!(
            text,
            "{n:>5} {:>12.6} {:>12.6} {:>12.6}",
            neff_discrete(n, args.r)?,
            neff_limit(n, args.r)?,
            neff_continuous(n as f64, args.r)?
        )?;
    }
    Ok(text)
}

/// Runs a parsed command line; returns what should go to standard output.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Diarize(args) => {
            cmd_diarize(&RunConfig::resolve(&args)?)?;
            Ok(String::new())
        }
        Command::Synth(args) => {
            cmd_synth(&args)?;
            Ok(String::new())
        }
        Command::Score(args) => cmd_score(&args),
        Command::Neff(args) => cmd_neff(&args),
    }
}

