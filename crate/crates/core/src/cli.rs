//! Command-line front end.
//!
//! Every command resolves its flags into a serializable config, logs it, and
//! stamps its JSON and digest into the header of each file it writes.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dictionary::{load_dict, randdict, save_dict, Dictionary};
use crate::error::{Error, ErrorKind, Result};
use crate::learner::{Budget, LearnConfig, Learner};
use crate::metrics;
use crate::pursuit::{
    pursue_windows, quota, read_code_file, reconstruct_windows, write_code_file, write_residual, PursuitConfig, Variant,
};
use crate::report::{fmt_db, CsvReport};
use crate::signal_io::{cap_snr, load_wav, snr_db, write_wav, BlockSource, Signal, SynthSpec, WavFormat};

#[derive(Debug, Parser)]
#[command(name = "shiftdict", version, about = "Shift-invariant dictionary learning with equiprobable pursuit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a dictionary from a WAV file or a synthetic source.
    Learn(LearnArgs),
    /// Encode a signal into a sparse-code file.
    Encode(EncodeArgs),
    /// Rebuild a signal from a sparse-code file.
    Reconstruct(ReconstructArgs),
    /// Compute evaluation tables for a dictionary.
    Eval(EvalArgs),
    /// Time the four pursuit variants over a grid of window lengths.
    Profile(ProfileArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Input WAV file (mono or downmixed).
    #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
    pub input: Option<PathBuf>,
    /// Synthetic source description (TOML).
    #[arg(long)]
    pub synth: Option<PathBuf>,
}

impl InputArgs {
    fn load(&self) -> Result<Signal> {
        match (&self.input, &self.synth) {
            (Some(path), _) => load_wav(path),
            (None, Some(path)) => Ok(SynthSpec::load(path)?.generate()?.signal),
            (None, None) => Err(Error::InvalidArgument("need --input or --synth".into())),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LearnArgs {
    #[command(flatten)]
    pub source: InputArgs,
    /// Dictionary size M.
    #[arg(long, default_value_t = 32)]
    pub atoms: usize,
    /// Average atom selection probability; each block gets p·N events.
    #[arg(long, default_value_t = 0.05)]
    pub p: f64,
    /// Learning rate.
    #[arg(long, default_value_t = 1e-6)]
    pub eta: f64,
    /// Pursuit used while learning: mp, omp, emp or eomp.
    #[arg(long, default_value = "emp")]
    pub variant: Variant,
    /// Number of training blocks [default: 100].
    #[arg(long, conflicts_with = "seconds")]
    pub blocks: Option<usize>,
    /// Training budget in seconds of signal, rounded up to whole blocks.
    #[arg(long)]
    pub seconds: Option<f64>,
    /// Seeds the initial dictionary and block positions.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Block length in seconds.
    #[arg(long, default_value_t = 5.0)]
    pub block_secs: f64,
    /// Atom length cap in samples [default: a quarter of the block].
    #[arg(long)]
    pub max_atom_len: Option<usize>,
    /// Disable the cross-fade of the previous residual into each new block.
    #[arg(long)]
    pub no_carry: bool,
    /// Cross-faded fraction of each block.
    #[arg(long, default_value_t = 0.1)]
    pub overlap: f64,
    /// Output dictionary file.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Trace CSV; defaults to `<out>.trace.csv`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write a checkpoint every K blocks.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Directory for checkpoints; defaults to the output's directory.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EncodeArgs {
    #[arg(long)]
    pub dict: PathBuf,
    #[command(flatten)]
    pub source: InputArgs,
    #[arg(long, default_value = "emp")]
    pub variant: Variant,
    #[arg(long, default_value_t = 0.05)]
    pub p: f64,
    /// Explicit iteration budget for MP/OMP.
    #[arg(long, conflicts_with = "iters_from_equiprobable")]
    pub iters: Option<usize>,
    /// Set the MP/OMP iteration budget to M·Q, the number of events an
    /// equiprobable run would select.
    #[arg(long)]
    pub iters_from_equiprobable: bool,
    /// Window length in samples; defaults to the whole signal.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the residual as raw little-endian float64.
    #[arg(long)]
    pub residual: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutFormat {
    Pcm16,
    Pcm24,
    Float32,
}

impl From<OutFormat> for WavFormat {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Pcm16 => WavFormat::Pcm16,
            OutFormat::Pcm24 => WavFormat::Pcm24,
            OutFormat::Float32 => WavFormat::Float32,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long)]
    pub codes: PathBuf,
    #[arg(long, default_value_t = 16_000)]
    pub sample_rate: u32,
    #[arg(long, value_enum, default_value = "float32")]
    pub format: OutFormat,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Analysis {
    Entropy,
    Rates,
    Hist,
    Denoise,
    Psweep,
}

impl Analysis {
    fn name(self) -> &'static str {
        match self {
            Analysis::Entropy => "entropy",
            Analysis::Rates => "rates",
            Analysis::Hist => "hist",
            Analysis::Denoise => "denoise",
            Analysis::Psweep => "psweep",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub dict: PathBuf,
    #[command(flatten)]
    pub source: InputArgs,
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub analysis: Vec<Analysis>,
    #[arg(long, default_value = "emp")]
    pub variant: Variant,
    #[arg(long, default_value_t = 0.05)]
    pub p: f64,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// Noise-to-signal standard deviation ratios for the denoising sweep.
    #[arg(long, default_value = "0.05,0.1,0.2,0.3")]
    pub ratios: String,
    /// Number of noise seeds per ratio.
    #[arg(long, default_value_t = 5)]
    pub noise_seeds: u64,
    /// `start:step:stop` or a comma list.
    #[arg(long, default_value = "0.01:0.01:0.10")]
    pub p_grid: String,
    /// Number of most frequent atoms listed in the rates table; 0 lists all.
    #[arg(long, default_value_t = 25)]
    pub top: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProfileArgs {
    /// Dictionary to time; defaults to a random one.
    #[arg(long)]
    pub dict: Option<PathBuf>,
    #[command(flatten)]
    pub source: InputArgs,
    #[arg(long, value_delimiter = ',', default_value = "8192,32768,131072")]
    pub windows: Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub p: f64,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Atom count of the random dictionary used without `--dict`.
    #[arg(long, default_value_t = 32)]
    pub atoms: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Resolved configuration stamped into output headers.
struct Stamp {
    json: String,
    digest: String,
}

impl Stamp {
    fn new<T: Serialize>(command: &str, args: &T) -> Self {
        #[derive(Serialize)]
        struct Tagged<'a, T> {
            command: &'a str,
            version: &'a str,
            args: &'a T,
        }
        let json = serde_json::to_string(&Tagged { command, version: env!("CARGO_PKG_VERSION"), args })
            .expect("config serializes");
        let digest = crate::digest_hex(json.as_bytes());
        log::info!("{command} config {digest}: {json}");
        Stamp { json, digest }
    }

    fn report<S: Into<String>>(&self, columns: impl IntoIterator<Item = S>) -> CsvReport {
        CsvReport::new(columns).meta("config_digest", &self.digest).meta("config", &self.json)
    }

    fn write_sidecar(&self, out: &Path) -> Result<()> {
        let path = sidecar(out, "config.json");
        std::fs::write(&path, format!("{}\n", self.json)).map_err(|e| Error::io(&path, e))
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".{suffix}"));
    out.with_file_name(name)
}

fn pursuit_config(variant: Variant, p: f64, iters: Option<usize>) -> PursuitConfig {
    let cfg = PursuitConfig::new(variant, p);
    match iters {
        Some(n) => cfg.with_budget(n),
        None => cfg,
    }
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Learn(a) => cmd_learn(&a),
        Command::Encode(a) => cmd_encode(&a),
        Command::Reconstruct(a) => cmd_reconstruct(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Profile(a) => cmd_profile(&a),
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Usage => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

pub fn cmd_learn(a: &LearnArgs) -> Result<()> {
    let stamp = Stamp::new("learn", a);
    let signal = a.source.load()?;
    if !(a.block_secs > 0.0) {
        return Err(Error::InvalidArgument("block-secs must be positive".into()));
    }
    let block_len = ((a.block_secs * signal.sample_rate() as f64).round() as usize).min(signal.len());
    let budget = match (a.blocks, a.seconds) {
        (_, Some(s)) => Budget::SignalSeconds(s),
        (Some(n), None) => Budget::Blocks(n),
        (None, None) => Budget::Blocks(100),
    };
    let cfg = LearnConfig {
        atoms: a.atoms,
        p: a.p,
        eta: a.eta,
        variant: a.variant,
        budget,
        seed: a.seed,
        max_atom_len: a.max_atom_len,
    };
    let source = BlockSource::new(signal, block_len, a.seed)?.with_carry(!a.no_carry, a.overlap)?;
    let mut learner = Learner::new(source, cfg)?;
    let ckpt_dir = a
        .checkpoint_dir
        .clone()
        .unwrap_or_else(|| a.out.parent().map(Path::to_path_buf).unwrap_or_default());
    if let Some(k) = a.checkpoint_every {
        if k == 0 {
            return Err(Error::InvalidArgument("checkpoint-every must be positive".into()));
        }
        std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    }
    let stem = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dict".into());

    while let Some(rec) = learner.step()? {
        let block = rec.block;
        log::debug!("block {block} snr {:.2} dB", rec.snr_db);
        if let Some(k) = a.checkpoint_every {
            if (block + 1) % k == 0 {
                let mut d = learner.dictionary().clone();
                d.provenance = stamp.digest.clone();
                save_dict(&d, ckpt_dir.join(format!("{stem}.ckpt{:06}.json", block + 1)))?;
            }
        }
    }

    let (mut dict, trace) = learner.into_parts();
    dict.provenance = stamp.digest.clone();
    save_dict(&dict, &a.out)?;
    stamp.write_sidecar(&a.out)?;

    let mut table = stamp.report([
        "block",
        "signal_seconds",
        "snr_db",
        "residual_var",
        "min_atom_len",
        "max_atom_len",
        "reinitialized",
        "counts",
    ]);
    table.push_meta("dict_digest", dict.digest());
    for r in &trace.records {
        let counts: Vec<String> = r.counts.iter().map(usize::to_string).collect();
        table.row([
            r.block.to_string(),
            format!("{}", r.signal_seconds),
            fmt_db(r.snr_db),
            format!("{:e}", r.residual_var),
            r.min_atom_len.to_string(),
            r.max_atom_len.to_string(),
            r.reinitialized.to_string(),
            counts.join(","),
        ]);
    }
    table.write(a.trace.clone().unwrap_or_else(|| sidecar(&a.out, "trace.csv")))?;
    println!("wrote {} atoms to {} ({} blocks)", dict.len(), a.out.display(), trace.records.len());
    Ok(())
}

pub fn cmd_encode(a: &EncodeArgs) -> Result<()> {
    let stamp = Stamp::new("encode", a);
    let dict = load_dict(&a.dict)?;
    let signal = a.source.load()?;
    let window = a.window.unwrap_or(signal.len()).min(signal.len());
    let iters = if a.iters_from_equiprobable {
        Some(dict.len() * quota(a.p, window, dict.len()))
    } else {
        a.iters
    };
    let cfg = pursuit_config(a.variant, a.p, iters);
    let codes = pursue_windows(&dict, signal.samples(), &cfg, window)?;
    write_code_file(&a.out, &codes)?;
    stamp.write_sidecar(&a.out)?;
    if let Some(path) = &a.residual {
        let residual: Vec<f64> = codes.iter().flat_map(|(_, c)| c.residual.iter().copied()).collect();
        write_residual(path, &residual)?;
    }
    let events: usize = codes.iter().map(|(_, c)| c.events.len()).sum();
    let rec = reconstruct_windows(&codes, &dict, signal.len())?;
    println!("events={events}");
    match snr_db(signal.samples(), &rec) {
        Ok(snr) => println!("snr_db={}", fmt_db(cap_snr(snr))),
        Err(Error::ZeroReference) => println!("snr_db=degenerate (zero input)"),
        Err(e) => return Err(e),
    }
    Ok(())
}

pub fn cmd_reconstruct(a: &ReconstructArgs) -> Result<()> {
    Stamp::new("reconstruct", a);
    let dict = load_dict(&a.dict)?;
    let file = read_code_file(&a.codes)?;
    let total = file.windows.iter().map(|(s, c)| s + c.window_len).max().unwrap_or(0);
    let rec = reconstruct_windows(&file.windows, &dict, total)?;
    write_wav(&Signal::new(rec, a.sample_rate)?, &a.out, a.format.into())?;
    Ok(())
}

fn load_eval_dict(path: &Path) -> Result<Dictionary> {
    let dict = load_dict(path)?;
    log::info!("dictionary {} ({} atoms)", dict.digest(), dict.len());
    Ok(dict)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let stamp = Stamp::new("eval", a);
    let dict = load_eval_dict(&a.dict)?;
    let signal = a.source.load()?;
    let window = a.window.unwrap_or(signal.len()).min(signal.len());
    let cfg = PursuitConfig::new(a.variant, a.p);
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let needs_codes = a.analysis.iter().any(|x| matches!(x, Analysis::Entropy | Analysis::Rates | Analysis::Hist));
    let codes: Vec<_> = if needs_codes {
        pursue_windows(&dict, signal.samples(), &cfg, window)?.into_iter().map(|(_, c)| c).collect()
    } else {
        Vec::new()
    };

    for &analysis in &a.analysis {
        let mut table = match analysis {
            Analysis::Entropy => {
                let mut t = stamp.report(["measure", "bits"]);
                t.row(["index_entropy".to_string(), format!("{}", metrics::index_entropy(&codes, dict.len())?)]);
                t.row(["max_index_entropy".to_string(), format!("{}", (dict.len() as f64).log2())]);
                t.row(["coeff_entropy".to_string(), format!("{}", metrics::coeff_entropy(&codes, a.bins)?)]);
                t
            }
            Analysis::Rates => {
                let rates = metrics::event_rates(&codes, signal.sample_rate(), dict.len())?;
                let k = if a.top == 0 { rates.len() } else { a.top };
                let mut t = stamp.report(["atom", "events_per_second"]);
                for (i, r) in metrics::top_rates(&rates, k) {
                    t.row([i.to_string(), format!("{r}")]);
                }
                t
            }
            Analysis::Hist => {
                let h = metrics::coeff_histogram(&codes, a.bins)?;
                let edges = h.edges();
                let mut t = stamp.report(["lo", "hi", "count"]);
                for (k, c) in h.counts.iter().enumerate() {
                    t.row([format!("{}", edges[k]), format!("{}", edges[k + 1]), c.to_string()]);
                }
                t
            }
            Analysis::Denoise => {
                let ratios = metrics::parse_grid(&a.ratios)?;
                let seeds: Vec<u64> = (0..a.noise_seeds).collect();
                let points = metrics::denoise_sweep(&dict, &signal, &ratios, &cfg, &seeds, window)?;
                let mut t = stamp.report(["ratio", "median_snr_db", "snr_db_per_seed"]);
                for pt in points {
                    let each: Vec<String> = pt.snr_db.iter().map(|v| fmt_db(*v)).collect();
                    t.row([format!("{}", pt.ratio), fmt_db(pt.median()), each.join(",")]);
                }
                t
            }
            Analysis::Psweep => {
                let ps = metrics::parse_grid(&a.p_grid)?;
                let mut t = stamp.report(["p", "snr_db"]);
                for (p, snr) in metrics::p_sweep(&dict, signal.samples(), a.variant, &ps, window)? {
                    t.row([format!("{p}"), fmt_db(snr)]);
                }
                t
            }
        };
        table.push_meta("dict_digest", dict.digest());
        let path = a.out_dir.join(format!("{}.csv", analysis.name()));
        table.write(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn cmd_profile(a: &ProfileArgs) -> Result<()> {
    let stamp = Stamp::new("profile", a);
    let dict = match &a.dict {
        Some(path) => load_dict(path)?,
        None => randdict(a.atoms, a.seed)?,
    };
    let signal = a.source.load()?;
    let cells = metrics::timing_profile(&dict, signal.samples(), &a.windows, &Variant::ALL, a.p, a.repeats)?;
    let mut table = stamp.report(["variant", "window_len", "events", "seconds", "per_sample_per_iteration"]);
    table.push_meta("cpu", metrics::cpu_model());
    table.push_meta("dict_digest", dict.digest());
    for c in cells {
        table.row([
            c.variant.to_string(),
            c.window_len.to_string(),
            c.events.to_string(),
            format!("{:e}", c.seconds),
            format!("{:e}", c.per_sample_per_iteration),
        ]);
    }
    table.write(&a.out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_learn_example() {
        let cli = Cli::try_parse_from([
            "shiftdict", "learn", "--synth", "s.toml", "--atoms", "32", "--p", "0.05", "--eta", "1e-6", "--variant", "emp",
            "--blocks", "100", "--seed", "1", "--out", "d.json",
        ])
        .unwrap();
        let Command::Learn(a) = cli.command else { panic!() };
        assert_eq!((a.atoms, a.blocks, a.seed, a.variant), (32, Some(100), 1, Variant::Emp));
    }

    #[test]
    fn input_sources_are_exclusive() {
        assert!(Cli::try_parse_from(["shiftdict", "learn", "--out", "d.json"]).is_err());
        assert!(Cli::try_parse_from(["shiftdict", "learn", "--input", "a.wav", "--synth", "s.toml", "--out", "d"]).is_err());
    }

    #[test]
    fn analysis_list_is_comma_separated() {
        let cli = Cli::try_parse_from([
            "shiftdict", "eval", "--dict", "d", "--input", "a.wav", "--analysis", "entropy,psweep", "--out-dir", "o",
        ])
        .unwrap();
        let Command::Eval(a) = cli.command else { panic!() };
        assert_eq!(a.analysis, vec![Analysis::Entropy, Analysis::Psweep]);
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar(Path::new("out/d.json"), "trace.csv"), PathBuf::from("out/d.json.trace.csv"));
    }

    #[test]
    fn exit_codes_by_kind() {
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), 2);
        assert_eq!(exit_code(&Error::EmptySignal), 3);
        assert_eq!(exit_code(&Error::DegenerateAtom), 4);
    }
}
