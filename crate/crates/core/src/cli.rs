//! The `encore` command line.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analyze::{
    analyze_model, bias_curve, interleave_bias_check, kl_sandwich_check, next_bit_test, pipeline_bias_check,
    waste_check, BiasReport, CurveParams, PipelineBiasParams, SyntheticBits,
};
use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::interleave::InterleavePlan;
use crate::markov::sample_inverse_cdf;
use crate::model::{bytes_to_symbols, symbols_to_bytes, ModelFile};
use crate::pipeline::{ContainerReader, Decoder, EncodeOptions, Encoder, Encore, DEFAULT_FRAME_SIZE};
use crate::recon::{Cipher, CipherRegistry, NULL_CIPHER_ID, TEST_CIPHER_ID};
use crate::transform::{sample_transform, splitmix64, BuilderKind, EntropySource};

#[derive(Debug, Parser)]
#[command(name = "encore", version, about = "Compress and encrypt Markov symbol streams")]
pub struct CliConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to a byte corpus.
    Train {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Bytes per symbol.
        #[arg(short = 'w', long, default_value_t = 1)]
        width: u32,
        /// Pseudo-count added to every transition.
        #[arg(long, default_value_t = 0.5)]
        smoothing: f64,
    },
    /// Encode a file into a container.
    Encode {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        key: KeyArgs,
        /// Cipher id; defaults to 1 when a key is given and 0 otherwise.
        #[arg(long)]
        cipher: Option<u16>,
        #[arg(short, long, default_value_t = 8)]
        k: u32,
        #[arg(short, long, default_value_t = 1)]
        l: u32,
        #[arg(long, default_value_t = DEFAULT_FRAME_SIZE)]
        frame_size: u32,
        /// Seed for the deterministic entropy source; the OS source is used
        /// when absent.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Store X and Y side by side instead of interleaving.
        #[arg(long)]
        split: bool,
        #[arg(long, value_enum, default_value_t = Builder::Greedy)]
        builder: Builder,
    },
    /// Decode a whole container.
    Decode {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        key: KeyArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, value_enum, default_value_t = Builder::Greedy)]
        builder: Builder,
    },
    /// Decode a single frame.
    DecodeFrame {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        key: KeyArgs,
        #[arg(long)]
        frame: usize,
        #[arg(long, value_enum, default_value_t = Builder::Greedy)]
        builder: Builder,
    },
    /// Print the transform and bound quantities of a model.
    Analyze {
        #[arg(short, long)]
        model: PathBuf,
    },
    /// Run the statistical checks against a model.
    Verify {
        #[arg(short, long)]
        model: PathBuf,
        /// Directory for the CSV reports.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long, default_value_t = 8)]
        k: u32,
        #[arg(short, long, default_value_t = 1)]
        l: u32,
        /// Bits fed to the next-bit test.
        #[arg(long, default_value_t = 1_000_000)]
        bits: usize,
        #[arg(long, default_value_t = 12)]
        context: u32,
        /// Monte-Carlo paths for the bias curves.
        #[arg(long, default_value_t = 20_000)]
        paths: usize,
        /// Symbols per Monte-Carlo path.
        #[arg(long, default_value_t = 64)]
        path_len: usize,
        /// Multiplier on τ in the envelope; anything but 1 tests a wrong bound.
        #[arg(long, default_value_t = 1.0)]
        envelope_scale: f64,
        #[arg(long, value_enum, default_value_t = Builder::Greedy)]
        builder: Builder,
    },
}

#[derive(Debug, Args)]
pub struct IoArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(short, long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct KeyArgs {
    /// Key as hex.
    #[arg(long, env = "ENCORE_KEY", hide_env_values = true)]
    pub key: Option<String>,
    /// Nonce as hex; derived from the seed or drawn from the OS when absent.
    #[arg(long, env = "ENCORE_NONCE", hide_env_values = true)]
    pub nonce: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Builder {
    Greedy,
    Proportional,
}

impl From<Builder> for BuilderKind {
    fn from(b: Builder) -> Self {
        match b {
            Builder::Greedy => BuilderKind::Greedy,
            Builder::Proportional => BuilderKind::Proportional,
        }
    }
}

/// Parse arguments, run, and map the outcome to a process exit code.
pub fn main_entry() -> i32 {
    let cli = CliConfig::parse();
    match run(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("encore: {e}");
            e.exit_code()
        }
    }
}

/// Returns whether the command succeeded; `verify` reports failed checks
/// as `Ok(false)`.
pub fn run(cli: CliConfig) -> Result<bool> {
    match cli.command {
        Command::Train {
            input,
            output,
            width,
            smoothing,
        } => {
            let corpus = std::fs::read(&input)?;
            let model = ModelFile::train(&corpus, width, smoothing)?;
            std::fs::write(&output, model.to_text())?;
            eprintln!(
                "trained {} states, tau {}, H(sigma) {:.4}",
                model.chain().alphabet_size(),
                model.chain().mixing_time(),
                crate::dist::entropy(model.chain().stationary())
            );
            Ok(true)
        }
        Command::Encode {
            io,
            key,
            cipher,
            k,
            l,
            frame_size,
            seed,
            jobs,
            split,
            builder,
        } => {
            let encore = load(&io.model, builder)?;
            let width = byte_width(&encore)?;
            let source = match seed {
                Some(s) => EntropySource::test(s),
                None => EntropySource::os(),
            };
            let nonce = match &key.nonce {
                Some(h) => parse_hex(h)?,
                None => match seed {
                    Some(s) => splitmix64(s ^ 0x6e6f6e6365).to_le_bytes().to_vec(),
                    None => EntropySource::os().next_u64().to_le_bytes().to_vec(),
                },
            };
            let key_bytes = key.key.as_deref().map(parse_hex).transpose()?;
            let id = cipher.unwrap_or(if key_bytes.is_some() { TEST_CIPHER_ID } else { NULL_CIPHER_ID });
            let cipher = make_cipher(id, key_bytes.as_deref(), &nonce)?;
            let opts = EncodeOptions {
                plan: InterleavePlan::new(k, l)?,
                frame_size,
                split,
                jobs: jobs.max(1),
            };
            let out = BufWriter::new(File::create(&io.output)?);
            let mut enc = Encoder::new(&encore, cipher.as_ref(), &nonce, opts, source, out)?;
            let chunk = frame_size as usize * width as usize;
            let mut reader = BufReader::new(File::open(&io.input)?);
            let mut buf = vec![0u8; chunk];
            loop {
                let n = read_full(&mut reader, &mut buf)?;
                if n == 0 {
                    break;
                }
                enc.push(&bytes_to_symbols(&buf[..n], width)?)?;
                if n < chunk {
                    break;
                }
            }
            let (mut out, stats) = enc.finish()?;
            out.flush()?;
            eprintln!(
                "{} symbols in {} frames: {:.4} bits/symbol (X {:.4}, recon {:.4}), transform rate {:.4}, entropy {:.4} bits/symbol",
                stats.symbols,
                stats.frames,
                stats.container_bits_per_symbol(),
                stats.x_bits_per_symbol(),
                stats.recon_bits_per_symbol(),
                stats.transform_rate(),
                stats.entropy_per_symbol()
            );
            Ok(true)
        }
        Command::Decode { io, key, jobs, builder } => {
            let encore = load(&io.model, builder)?;
            let width = byte_width(&encore)?;
            let cipher = cipher_for_container(&io.input, &key)?;
            let mut dec = Decoder::new(&encore, cipher.as_ref(), BufReader::new(File::open(&io.input)?))?;
            let mut out = BufWriter::new(File::create(&io.output)?);
            dec.decode_all(jobs.max(1), |frame| {
                out.write_all(&symbols_to_bytes(&frame, width))?;
                Ok(())
            })?;
            out.flush()?;
            Ok(true)
        }
        Command::DecodeFrame { io, key, frame, builder } => {
            let encore = load(&io.model, builder)?;
            let width = byte_width(&encore)?;
            let cipher = cipher_for_container(&io.input, &key)?;
            let mut dec = Decoder::new(&encore, cipher.as_ref(), BufReader::new(File::open(&io.input)?))?;
            let symbols = dec.decode_frame(frame)?;
            std::fs::write(&io.output, symbols_to_bytes(&symbols, width))?;
            Ok(true)
        }
        Command::Analyze { model } => {
            let model = ModelFile::load(&model)?;
            println!("{}", analyze_model(&model)?);
            Ok(true)
        }
        Command::Verify {
            model,
            report,
            seed,
            k,
            l,
            bits,
            context,
            paths,
            path_len,
            envelope_scale,
            builder,
        } => {
            let encore = load(&model, builder)?;
            let settings = VerifySettings {
                plan: InterleavePlan::new(k, l)?,
                bits,
                context,
                paths,
                path_len,
                envelope_scale,
            };
            verify(&encore, &settings, seed, report.as_deref())
        }
    }
}

fn load(path: &Path, builder: Builder) -> Result<Encore> {
    Encore::new(ModelFile::load(path)?, builder.into())
}

fn byte_width(encore: &Encore) -> Result<u32> {
    match encore.model().width() {
        0 => Err(Error::InvalidArgument(
            "model has an abstract alphabet and cannot code byte files".into(),
        )),
        w => Ok(w),
    }
}

fn parse_hex(s: &str) -> Result<Vec<u8>> {
    hex::decode(s.trim()).map_err(|e| Error::InvalidArgument(format!("bad hex: {e}")))
}

fn make_cipher(id: u16, key: Option<&[u8]>, nonce: &[u8]) -> Result<Box<dyn Cipher>> {
    if id != NULL_CIPHER_ID && key.is_none() {
        return Err(Error::InvalidArgument(format!("cipher {id} needs --key")));
    }
    CipherRegistry::default().create(id, key.unwrap_or(&[]), nonce)
}

/// The cipher named by a container's header, keyed from the flags.
fn cipher_for_container(path: &Path, key: &KeyArgs) -> Result<Box<dyn Cipher>> {
    let reader = ContainerReader::open(BufReader::new(File::open(path)?))?;
    let header = reader.header();
    let key_bytes = key.key.as_deref().map(parse_hex).transpose()?;
    if header.cipher_id != NULL_CIPHER_ID && key_bytes.is_none() {
        return Err(Error::BadKey);
    }
    make_cipher(header.cipher_id, key_bytes.as_deref(), &header.nonce)
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifySettings {
    pub plan: InterleavePlan,
    pub bits: usize,
    pub context: u32,
    pub paths: usize,
    pub path_len: usize,
    pub envelope_scale: f64,
}

/// Run every check, print summaries, optionally write CSV reports, and
/// return whether all passed.
pub fn verify(encore: &Encore, s: &VerifySettings, seed: u64, report: Option<&Path>) -> Result<bool> {
    let model = encore.model();
    let sigma = model.chain().stationary();
    let mut all = true;

    let waste = waste_check(sigma)?;
    println!(
        "waste: {} ({} <= {})",
        if waste.pass { "PASS" } else { "FAIL" },
        waste.lhs,
        waste.rhs
    );
    all &= waste.pass;
    let sandwich = kl_sandwich_check(sigma)?;
    println!(
        "sandwich: {} (H {} <= E l {} <= E l' {}, KL {})",
        if sandwich.pass { "PASS" } else { "FAIL" },
        sandwich.entropy,
        sandwich.huffman,
        sandwich.shannon,
        sandwich.kl
    );
    all &= sandwich.pass;

    let mut source = EntropySource::test(seed);
    let mut reports: Vec<BiasReport> = Vec::new();
    let x = iid_x_stream(encore, s.bits, &mut source.for_frame(0))?;
    reports.push(next_bit_test(&x, s.context)?);
    let params = CurveParams {
        n_paths: s.paths,
        path_len: s.path_len,
        tau_scale: s.envelope_scale,
        ..Default::default()
    };
    let chain = model.chain();
    let mut raw = bias_curve(chain, encore.code(), None, &params, &mut source.for_frame(1))?;
    raw.name = "bias-curve-raw".into();
    reports.push(raw);
    let mut transformed = bias_curve(
        chain,
        encore.code(),
        Some(encore.transform()),
        &params,
        &mut source.for_frame(2),
    )?;
    transformed.name = "bias-curve-transformed".into();
    reports.push(transformed);
    let width = 4 * (s.plan.period() as usize);
    let mut fair = interleave_bias_check(
        &s.plan,
        &SyntheticBits::uniform(),
        &SyntheticBits::uniform(),
        s.paths,
        width,
        &mut source.for_frame(3),
    )?;
    fair.name = "interleave-uniform".into();
    reports.push(fair);
    let mut biased = interleave_bias_check(
        &s.plan,
        &SyntheticBits::new(|_| 0.1),
        &SyntheticBits::uniform(),
        s.paths,
        width,
        &mut source.for_frame(4),
    )?;
    biased.name = "interleave-biased".into();
    reports.push(biased);
    let pipeline = PipelineBiasParams {
        plan: s.plan,
        trials: s.paths,
        path_len: s.path_len,
        burn_in: 1.0,
        start: Some(0),
    };
    reports.push(pipeline_bias_check(encore, &pipeline, &mut source.for_frame(5))?);

    if let Some(dir) = report {
        std::fs::create_dir_all(dir)?;
    }
    for r in &reports {
        println!("{}", r.summary());
        all &= r.pass;
        if let Some(dir) = report {
            std::fs::write(dir.join(format!("{}.csv", r.name)), r.to_csv())?;
        }
    }
    println!("verify: {}", if all { "PASS" } else { "FAIL" });
    Ok(all)
}

/// Coded stream of independent σ draws after transformation, whose bits are
/// exactly uniform when the transform is correct.
pub fn iid_x_stream(encore: &Encore, bits: usize, source: &mut EntropySource) -> Result<Bits> {
    let sigma = encore.model().chain().stationary();
    let code = encore.code();
    let mut out = Bits::with_capacity(bits + 64);
    let mut batch = Vec::with_capacity(4096);
    while out.len() < bits {
        batch.clear();
        for _ in 0..4096 {
            let s = sample_inverse_cdf(sigma.probs(), source.next_unit()) as u32;
            batch.push(sample_transform(encore.transform(), s, source)?);
        }
        code.encode_into(&mut out, &batch)?;
    }
    out.truncate(bits);
    Ok(out)
}
