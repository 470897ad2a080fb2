//! Empirical checks of the uniformity and bias claims, and evaluators for
//! the closed-form bounds.
//!
//! Monte-Carlo checks gate each bucket with a binomial half-width of `z`
//! standard deviations of a fair bit. `z` is 3 for a single bucket and grows
//! with the number of simultaneously gated buckets so that the family-wise
//! false alarm rate stays at the single-bucket 3σ level (about 0.27%).

use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::bits::{BitStr, Bits};
use crate::dist::{cross_entropy, entropy, kl_divergence, SymbolDistribution};
use crate::error::{Error, Result};
use crate::huffman::{shannon_lengths, HuffmanCode};
use crate::interleave::{
    envelope_at, envelope_threshold, interleave, interleaved_bias_bound, stream_envelope, x_bit_count, EnvelopeParams,
    InterleavePlan,
};
use crate::markov::MarkovModel;
use crate::model::ModelFile;
use crate::pipeline::{Encore, Layout};
use crate::recon::TestCipher;
use crate::transform::{build_greedy, build_proportional, sample_transform, EntropySource, TransformMatrix};

/// Contexts with fewer samples are reported but not gated.
pub const MIN_CONTEXT_SAMPLES: u64 = 1000;
pub const MAX_CONTEXT: u32 = 16;
/// Float tolerance of the entropy sandwich checks.
pub const SANDWICH_TOLERANCE: f64 = 1e-9;

/// Gate width in standard deviations for `tests` simultaneous two-sided
/// tests at the family-wise level of a single 3σ test.
pub fn familywise_z(tests: usize) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let alpha = 2.0 * (1.0 - normal.cdf(3.0));
    if tests <= 1 {
        return 3.0;
    }
    normal.inverse_cdf(1.0 - alpha / (2.0 * tests as f64)).max(3.0)
}

/// Standard deviation of the zero frequency of `n` fair bits.
fn fair_sd(n: u64) -> f64 {
    (0.25 / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasRow {
    pub label: String,
    pub zeros: u64,
    pub samples: u64,
    /// `|Pr[bit = 0] − 1/2|` estimated from the samples.
    pub empirical: f64,
    /// Gate half-width, `z` fair-bit standard deviations.
    pub ci: f64,
    pub envelope: Option<f64>,
    /// Whether this row took part in the pass decision.
    pub gated: bool,
    pub pass: bool,
}

impl BiasRow {
    fn new(label: String, zeros: u64, samples: u64) -> Self {
        debug_assert!(samples > 0);
        BiasRow {
            label,
            zeros,
            samples,
            empirical: (zeros as f64 / samples as f64 - 0.5).abs(),
            ci: 0.0,
            envelope: None,
            gated: false,
            pass: true,
        }
    }

    fn gate(&mut self, z: f64, envelope: f64) {
        self.ci = z * fair_sd(self.samples);
        self.gated = true;
        self.pass = self.empirical <= envelope + self.ci;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub name: String,
    pub rows: Vec<BiasRow>,
    pub z: f64,
    pub pass: bool,
    pub warnings: Vec<String>,
}

impl BiasReport {
    fn finish(name: &str, mut rows: Vec<BiasRow>, envelopes: impl Fn(usize) -> Option<f64>, warnings: Vec<String>) -> Self {
        let gated: Vec<usize> = (0..rows.len()).filter(|&i| envelopes(i).is_some()).collect();
        let z = familywise_z(gated.len());
        for &i in &gated {
            let env = envelopes(i).unwrap();
            rows[i].gate(z, env);
            if env > 0.0 {
                rows[i].envelope = Some(env);
            }
        }
        let pass = rows.iter().all(|r| r.pass);
        BiasReport {
            name: name.into(),
            rows,
            z,
            pass,
            warnings,
        }
    }

    pub fn gated_count(&self) -> usize {
        self.rows.iter().filter(|r| r.gated).count()
    }

    pub fn failures(&self) -> impl Iterator<Item = &BiasRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    /// `index,empirical,ci,envelope,pass`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,empirical,ci,envelope,pass\n");
        for r in &self.rows {
            let env = r.envelope.map(|e| e.to_string()).unwrap_or_default();
            let verdict = if !r.gated {
                "skip"
            } else if r.pass {
                "pass"
            } else {
                "fail"
            };
            let _ = writeln!(s, "{},{},{},{},{}", r.label, r.empirical, r.ci, env, verdict);
        }
        s
    }

    pub fn summary(&self) -> String {
        let worst = self
            .rows
            .iter()
            .filter(|r| r.gated)
            .max_by(|a, b| {
                let ea = a.empirical - a.envelope.unwrap_or(0.0);
                let eb = b.empirical - b.envelope.unwrap_or(0.0);
                (ea / a.ci).total_cmp(&(eb / b.ci))
            });
        let mut s = format!(
            "{}: {} ({} of {} buckets gated at z = {:.3}, {} failures)",
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.gated_count(),
            self.rows.len(),
            self.z,
            self.failures().count()
        );
        if let Some(w) = worst {
            let _ = write!(
                s,
                "; tightest bucket {} bias {:.3e} vs envelope {:.3e} + {:.3e}",
                w.label,
                w.empirical,
                w.envelope.unwrap_or(0.0),
                w.ci
            );
        }
        for w in &self.warnings {
            let _ = write!(s, "\n  warning: {w}");
        }
        s
    }
}

/// Conditional zero frequencies of each bit given the previous `c` bits,
/// for every context length `c ≤ max_context`. Contexts seen at least
/// [`MIN_CONTEXT_SAMPLES`] times must sit within the gate of 1/2.
pub fn next_bit_test(bits: &BitStr, max_context: u32) -> Result<BiasReport> {
    if max_context > MAX_CONTEXT {
        return Err(Error::InvalidArgument(format!("context length above {MAX_CONTEXT}")));
    }
    if bits.is_empty() {
        return Err(Error::InvalidArgument("no bits to test".into()));
    }
    let levels = max_context as usize + 1;
    // counts[c][ctx] = (zeros, total)
    let mut counts: Vec<Vec<(u64, u64)>> = (0..levels).map(|c| vec![(0, 0); 1 << c]).collect();
    let mut history: u32 = 0;
    for (i, bit) in bits.iter().by_vals().enumerate() {
        let avail = i.min(max_context as usize);
        for (c, level) in counts.iter_mut().enumerate().take(avail + 1) {
            let slot = &mut level[(history & ((1u32 << c) - 1)) as usize];
            slot.0 += !bit as u64;
            slot.1 += 1;
        }
        history = (history << 1) | bit as u32;
    }
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (c, level) in counts.iter().enumerate() {
        let mut starved = 0;
        for (ctx, &(zeros, total)) in level.iter().enumerate() {
            if total == 0 {
                continue;
            }
            if total < MIN_CONTEXT_SAMPLES {
                starved += 1;
            }
            let label = if c == 0 {
                "0:".to_string()
            } else {
                format!("{c}:{ctx:0width$b}", width = c)
            };
            rows.push(BiasRow::new(label, zeros, total));
        }
        if starved > 0 {
            warnings.push(format!(
                "{starved} contexts of length {c} have fewer than {MIN_CONTEXT_SAMPLES} samples"
            ));
        }
    }
    let gated: Vec<bool> = rows.iter().map(|r| r.samples >= MIN_CONTEXT_SAMPLES).collect();
    Ok(BiasReport::finish(
        "next-bit",
        rows,
        |i| gated[i].then_some(0.0),
        warnings,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveParams {
    pub n_paths: usize,
    /// Symbols per path.
    pub path_len: usize,
    /// Burn-in `n` of the threshold `j > n·‖B‖₁·(2M − m)`.
    pub burn_in: f64,
    /// Start every path in this state, or draw the start from σ.
    pub start: Option<u32>,
    /// Multiplier on τ when evaluating the envelope; 1 for the real bound.
    pub tau_scale: f64,
}

impl Default for CurveParams {
    fn default() -> Self {
        CurveParams {
            n_paths: 100_000,
            path_len: 64,
            burn_in: 1.0,
            start: Some(0),
            tau_scale: 1.0,
        }
    }
}

/// Bias of bit `j` of the coded stream of sampled chain paths against the
/// mixing-time envelope `2·exp(−⌊j/(2M−m)⌋/τ')/(1 − e^{−1/τ'})`, where
/// `τ' = τ` for raw paths and `τ‖B‖₁` when `transform` is given.
pub fn bias_curve(
    model: &MarkovModel,
    code: &HuffmanCode,
    transform: Option<&TransformMatrix>,
    params: &CurveParams,
    source: &mut EntropySource,
) -> Result<BiasReport> {
    if params.n_paths == 0 || params.path_len == 0 {
        return Err(Error::InvalidArgument("bias curve needs paths and symbols".into()));
    }
    let (max_len, min_len) = (code.max_len(), code.min_len());
    let width = params.path_len * min_len as usize;
    let norm = transform.map_or(1.0, |b| *b.one_norm());
    let tau = model.mixing_time() as f64 * norm * params.tau_scale;
    let threshold = envelope_threshold(params.burn_in, max_len, min_len, norm);
    let mut zeros = vec![0u64; width];
    let mut bits = Bits::new();
    for p in 0..params.n_paths {
        let mut src = source.for_frame(p as u64);
        let mut path = match params.start {
            Some(s) => model.sample_path_from(s as usize, params.path_len, &mut src)?,
            None => model.sample_path(params.path_len, &mut src)?,
        };
        if let Some(b) = transform {
            for s in path.iter_mut() {
                *s = sample_transform(b, *s, &mut src)?;
            }
        }
        bits.clear();
        code.encode_into(&mut bits, &path)?;
        for (z, bit) in zeros.iter_mut().zip(bits.iter().by_vals()) {
            *z += !bit as u64;
        }
    }
    let rows = zeros
        .iter()
        .enumerate()
        .map(|(i, &z)| BiasRow::new((i + 1).to_string(), z, params.n_paths as u64))
        .collect();
    Ok(BiasReport::finish(
        "bias-curve",
        rows,
        |i| {
            let j = i as u64 + 1;
            (j as f64 > threshold).then(|| stream_envelope(j, max_len, min_len, tau))
        },
        vec![],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WasteCheck {
    /// `|H(σ, π) − H(π)|`.
    pub lhs: f64,
    /// `M·√(2 ln 2)`.
    pub rhs: f64,
    pub pass: bool,
}

pub fn waste_check(sigma: &SymbolDistribution) -> Result<WasteCheck> {
    let code = HuffmanCode::build(sigma)?;
    let pi = code.implied();
    let lhs = (cross_entropy(sigma, &pi)? - entropy(&pi)).abs();
    let rhs = code.max_len() as f64 * (2.0 * std::f64::consts::LN_2).sqrt();
    Ok(WasteCheck {
        lhs,
        rhs,
        pass: lhs <= rhs + SANDWICH_TOLERANCE,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichCheck {
    pub entropy: f64,
    /// Expected Huffman length.
    pub huffman: f64,
    /// Expected Shannon length `⌈−log₂ σ⌉`.
    pub shannon: f64,
    pub kl: f64,
    pub pass: bool,
}

/// `H(σ) ≤ E l' ≤ E l < H(σ) + 1` and `KL(σ‖π) ≤ 1`.
pub fn kl_sandwich_check(sigma: &SymbolDistribution) -> Result<SandwichCheck> {
    let code = HuffmanCode::build(sigma)?;
    let h = entropy(sigma);
    let huffman = code.expected_length(sigma);
    let shannon: f64 = shannon_lengths(sigma)
        .iter()
        .zip(sigma.probs())
        .map(|(&l, &p)| p * l as f64)
        .sum();
    let kl = kl_divergence(sigma, &code.implied(), crate::dist::LogBase::Two)?;
    let t = SANDWICH_TOLERANCE;
    let pass = h <= huffman + t && huffman <= shannon + t && shannon < h + 1.0 + t && kl <= 1.0 + t;
    Ok(SandwichCheck {
        entropy: h,
        huffman,
        shannon,
        kl,
        pass,
    })
}

/// Bits with a known per-index bias: bit `j` (1-based) is 0 with
/// probability `1/2 + bias(j)`.
pub struct SyntheticBits<'a> {
    bias: Box<dyn Fn(u64) -> f64 + 'a>,
}

impl<'a> SyntheticBits<'a> {
    pub fn new(bias: impl Fn(u64) -> f64 + 'a) -> Self {
        SyntheticBits { bias: Box::new(bias) }
    }

    pub fn uniform() -> Self {
        Self::new(|_| 0.0)
    }

    pub fn bias(&self, j: u64) -> f64 {
        (self.bias)(j)
    }

    pub fn generate(&self, len: usize, source: &mut EntropySource) -> Bits {
        (1..=len as u64)
            .map(|j| source.next_unit() >= 0.5 + self.bias(j))
            .collect()
    }
}

/// Monte-Carlo check that interleaving biased streams keeps each position's
/// bias within `max(a(k_j), b(j − k_j))`. With two fair streams this is the
/// exact-uniformity case.
pub fn interleave_bias_check(
    plan: &InterleavePlan,
    x: &SyntheticBits<'_>,
    y: &SyntheticBits<'_>,
    trials: usize,
    length: usize,
    source: &mut EntropySource,
) -> Result<BiasReport> {
    if trials == 0 || length == 0 {
        return Err(Error::InvalidArgument("interleave check needs trials and positions".into()));
    }
    let kx = x_bit_count(plan, length as u64) as usize;
    let mut zeros = vec![0u64; length];
    for t in 0..trials {
        let mut src = source.for_frame(t as u64);
        let xs = x.generate(kx, &mut src);
        let ys = y.generate(length - kx, &mut src);
        let z = interleave(plan, &xs, &ys)?;
        for (c, bit) in zeros.iter_mut().zip(z.iter().by_vals()) {
            *c += !bit as u64;
        }
    }
    let rows = zeros
        .iter()
        .enumerate()
        .map(|(i, &c)| BiasRow::new((i + 1).to_string(), c, trials as u64))
        .collect();
    Ok(BiasReport::finish(
        "interleave",
        rows,
        |i| Some(interleaved_bias_bound(plan, i as u64 + 1, |j| x.bias(j).abs(), |j| y.bias(j).abs())),
        vec![],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineBiasParams {
    pub plan: InterleavePlan,
    pub trials: usize,
    /// Symbols per trial frame.
    pub path_len: usize,
    pub burn_in: f64,
    pub start: Option<u32>,
}

/// Full-pipeline check of the interleaved-stream envelope: independent
/// frames are encoded with fresh test-cipher keys, the bias of each
/// encrypted Y position is measured, and each interleaved position is held
/// to `max(X envelope at j', measured Y bias at j − j' + its gate)`.
pub fn pipeline_bias_check(
    encore: &Encore,
    params: &PipelineBiasParams,
    source: &mut EntropySource,
) -> Result<BiasReport> {
    if params.trials == 0 || params.path_len == 0 {
        return Err(Error::InvalidArgument("pipeline check needs trials and symbols".into()));
    }
    let chain = encore.model().chain();
    let code = encore.code();
    let layout = Layout::Interleaved(params.plan);
    let mut z_counts: Vec<(u64, u64)> = Vec::new();
    let mut y_counts: Vec<(u64, u64)> = Vec::new();
    for t in 0..params.trials {
        let mut src = source.for_frame(t as u64);
        let path = match params.start {
            Some(s) => chain.sample_path_from(s as usize, params.path_len, &mut src)?,
            None => chain.sample_path(params.path_len, &mut src)?,
        };
        let key = src.next_u64().to_le_bytes();
        let cipher = TestCipher::new(&key, b"bias");
        let frame = encore.encode_frame(&path, 0, &cipher, layout, &mut src)?;
        let (xl, yl) = (frame.entry.x_bits, frame.entry.y_bits);
        let z = crate::bits::from_bytes(&frame.bytes, (xl + yl) as usize)?;
        // positions where both streams are still live follow the plan exactly
        let mut regular = 0u64;
        while regular < xl + yl {
            let j = regular + 1;
            let jp = x_bit_count(&params.plan, j);
            if jp > xl || j - jp > yl {
                break;
            }
            regular = j;
        }
        let (_, y) = crate::interleave::deinterleave(&params.plan, &z, xl as usize, yl as usize)?;
        tally(&mut z_counts, z[..regular as usize].iter().by_vals());
        tally(&mut y_counts, y.iter().by_vals());
    }
    let y_gate = familywise_z(y_counts.len());
    let y_bias: Vec<f64> = y_counts
        .iter()
        .map(|&(zeros, n)| (zeros as f64 / n as f64 - 0.5).abs() + y_gate * fair_sd(n))
        .collect();
    let env = EnvelopeParams {
        max_len: code.max_len(),
        min_len: code.min_len(),
        tau: chain.mixing_time() as f64,
        b_one_norm: *encore.transform().one_norm(),
        burn_in: params.burn_in,
    };
    let mut warnings = Vec::new();
    let keep: Vec<bool> = z_counts.iter().map(|&(_, n)| n >= MIN_CONTEXT_SAMPLES).collect();
    if keep.iter().any(|k| !k) {
        warnings.push(format!(
            "{} positions reached by fewer than {MIN_CONTEXT_SAMPLES} frames were not gated",
            keep.iter().filter(|k| !**k).count()
        ));
    }
    let rows = z_counts
        .iter()
        .enumerate()
        .map(|(i, &(c, n))| BiasRow::new((i + 1).to_string(), c, n))
        .collect();
    Ok(BiasReport::finish(
        "pipeline-interleave",
        rows,
        |i| {
            if !keep[i] {
                return None;
            }
            let j = i as u64 + 1;
            let jp = x_bit_count(&params.plan, j);
            let yb = |yi: u64| if yi == 0 { 0.0 } else { y_bias.get(yi as usize - 1).copied().unwrap_or(0.5) };
            envelope_at(jp, j - jp, &env, yb).value()
        },
        warnings,
    ))
}

fn tally(counts: &mut Vec<(u64, u64)>, bits: impl Iterator<Item = bool>) {
    for (i, bit) in bits.enumerate() {
        if i == counts.len() {
            counts.push((0, 0));
        }
        counts[i].0 += !bit as u64;
        counts[i].1 += 1;
    }
}

/// Closed-form and structural quantities of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelAnalysis {
    pub alphabet_size: usize,
    pub mixing_time: usize,
    pub over: usize,
    pub under: usize,
    pub one_norm_greedy: f64,
    pub one_norm_proportional: f64,
    /// `|O| + 1 − Σ_{ω∈O} π/σ`.
    pub one_norm_bound: f64,
    pub max_len: u32,
    pub min_len: u32,
    pub m_prime_greedy: f64,
    pub m_prime_proportional: f64,
    pub budget_greedy: f64,
    pub budget_proportional: f64,
    pub entropy: f64,
    pub cross_entropy: f64,
    pub implied_entropy: f64,
    pub waste: WasteCheck,
    pub sandwich: SandwichCheck,
    /// `H(σ, π) − H(σ)`, the reference recon rate.
    pub waste_rate: f64,
    /// `H(ω | ω')` under the greedy transform: the least any exact recon
    /// stream can spend per symbol on average.
    pub recon_floor: f64,
}

pub fn analyze_model(model: &ModelFile) -> Result<ModelAnalysis> {
    let sigma = model.chain().stationary();
    let code = model.code();
    let pi = code.implied();
    let greedy = build_greedy(sigma, &pi)?;
    let proportional = build_proportional(sigma, &pi)?;
    let bg = greedy.entropy_budget(sigma)?;
    let bp = proportional.entropy_budget(sigma)?;
    let cross = cross_entropy(sigma, &pi)?;
    let h = entropy(sigma);
    Ok(ModelAnalysis {
        alphabet_size: sigma.alphabet_size(),
        mixing_time: model.chain().mixing_time(),
        over: greedy.partition().over_count(),
        under: greedy.partition().under_count(),
        one_norm_greedy: *greedy.one_norm(),
        one_norm_proportional: *proportional.one_norm(),
        one_norm_bound: TransformMatrix::one_norm_bound(sigma, &pi)?,
        max_len: code.max_len(),
        min_len: code.min_len(),
        m_prime_greedy: bg.m_prime,
        m_prime_proportional: bp.m_prime,
        budget_greedy: bg.expected_bits,
        budget_proportional: bp.expected_bits,
        entropy: h,
        cross_entropy: cross,
        implied_entropy: entropy(&pi),
        waste: waste_check(sigma)?,
        sandwich: kl_sandwich_check(sigma)?,
        waste_rate: cross - h,
        recon_floor: recon_floor(sigma, &greedy)?,
    })
}

/// `H(ω | ω')` in bits when `ω ~ σ` and `ω' ~ B_ω`.
pub fn recon_floor(sigma: &SymbolDistribution, b: &TransformMatrix) -> Result<f64> {
    let n = sigma.alphabet_size();
    let mut joint: Vec<Vec<f64>> = vec![Vec::new(); n];
    for (from, row) in b.rows().iter().enumerate() {
        for &(to, p) in row {
            joint[to as usize].push(*sigma.prob(from) * p);
        }
    }
    Ok(joint
        .iter()
        .map(|col| {
            let total: f64 = col.iter().sum();
            col.iter()
                .filter(|&&w| w > 0.0)
                .map(|&w| -w * (w / total).log2())
                .sum::<f64>()
        })
        .sum())
}

impl std::fmt::Display for ModelAnalysis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "alphabet size          {}", self.alphabet_size)?;
        writeln!(f, "mixing time            {}", self.mixing_time)?;
        writeln!(f, "|O| / |U|              {} / {}", self.over, self.under)?;
        writeln!(f, "||B||_1 greedy         {}", self.one_norm_greedy)?;
        writeln!(f, "||B||_1 proportional   {}", self.one_norm_proportional)?;
        writeln!(f, "||B||_1 bound          {}", self.one_norm_bound)?;
        writeln!(f, "M / m                  {} / {}", self.max_len, self.min_len)?;
        writeln!(f, "M' greedy              {}", self.m_prime_greedy)?;
        writeln!(f, "M' proportional        {}", self.m_prime_proportional)?;
        writeln!(f, "budget greedy          {}", self.budget_greedy)?;
        writeln!(f, "budget proportional    {}", self.budget_proportional)?;
        writeln!(f, "H(sigma)               {}", self.entropy)?;
        writeln!(f, "H(sigma, pi)           {}", self.cross_entropy)?;
        writeln!(f, "H(pi)                  {}", self.implied_entropy)?;
        writeln!(f, "waste |H(s,p) - H(p)|  {} <= {} ({})", self.waste.lhs, self.waste.rhs, verdict(self.waste.pass))?;
        writeln!(
            f,
            "sandwich               {} <= {} <= {} < {} + 1, KL {} ({})",
            self.entropy,
            self.sandwich.huffman,
            self.sandwich.shannon,
            self.entropy,
            self.sandwich.kl,
            verdict(self.sandwich.pass)
        )?;
        writeln!(f, "H(sigma,pi) - H(sigma) {}", self.waste_rate)?;
        write!(f, "recon floor H(w | w')  {}", self.recon_floor)
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}
