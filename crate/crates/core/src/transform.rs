//! Transformation matrices that push the source distribution σ onto the
//! dyadic distribution π implied by its Huffman code, and the entropy source
//! used to sample them.
//!
//! A matrix `B` is valid when
//!
//! 1. every row sums to one,
//! 2. `Σ_ω σ(ω)·b(ω, ω') = π(ω')` for every `ω'`,
//! 3. underrepresented states (`σ < π`) map only to themselves,
//! 4. overrepresented states map only to themselves or to underrepresented
//!    states.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::fmt::Write as _;
use std::sync::OnceLock;

use rand::RngCore;

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::prob::Prob;

/// Float tolerance on property 2 and on row sums.
pub const FLOAT_TOLERANCE: f64 = 1e-10;

/// Overrepresented (`σ ≥ π`) / underrepresented (`σ < π`) split.
///
/// In float mode states with `|σ − π| ≤ 1e-12` count as perfectly
/// represented.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    over: Vec<bool>,
}

impl Partition {
    pub fn is_over(&self, symbol: usize) -> bool {
        self.over[symbol]
    }

    pub fn over(&self) -> Vec<u32> {
        (0..self.over.len() as u32).filter(|&s| self.over[s as usize]).collect()
    }

    pub fn under(&self) -> Vec<u32> {
        (0..self.over.len() as u32).filter(|&s| !self.over[s as usize]).collect()
    }

    pub fn over_count(&self) -> usize {
        self.over.iter().filter(|&&o| o).count()
    }

    pub fn under_count(&self) -> usize {
        self.over.len() - self.over_count()
    }
}

pub fn partition<P: Prob>(sigma: &Distribution<P>, pi: &Distribution<P>) -> Result<Partition> {
    if sigma.alphabet_size() != pi.alphabet_size() {
        return Err(Error::AlphabetMismatch(sigma.alphabet_size(), pi.alphabet_size()));
    }
    let over = sigma
        .probs()
        .iter()
        .zip(pi.probs())
        .map(|(s, p)| {
            let deficit = p.clone() - s.clone();
            !(deficit > P::zero()) || deficit.negligible()
        })
        .collect();
    Ok(Partition { over })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BuilderKind {
    /// Spread each state's excess over all underrepresented states in
    /// proportion to their deficits.
    Proportional,
    /// Saturate deficits one at a time, largest first.
    #[default]
    Greedy,
}

impl BuilderKind {
    pub fn id(self) -> u8 {
        match self {
            BuilderKind::Proportional => 0,
            BuilderKind::Greedy => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(BuilderKind::Proportional),
            1 => Some(BuilderKind::Greedy),
            _ => None,
        }
    }
}

/// Sparse row-stochastic matrix of transformation probabilities.
pub struct TransformMatrix<P: Prob = f64> {
    n: usize,
    /// Nonzero entries of each row, sorted by column.
    rows: Vec<Vec<(u32, P)>>,
    partition: Partition,
    one_norm: P,
    row_entropy: Vec<f64>,
    sampling: OnceLock<Vec<Option<QuantizedRow>>>,
}

impl<P: Prob> Clone for TransformMatrix<P> {
    fn clone(&self) -> Self {
        TransformMatrix {
            n: self.n,
            rows: self.rows.clone(),
            partition: self.partition.clone(),
            one_norm: self.one_norm.clone(),
            row_entropy: self.row_entropy.clone(),
            sampling: OnceLock::new(),
        }
    }
}

impl<P: Prob> fmt::Debug for TransformMatrix<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransformMatrix")
            .field("n", &self.n)
            .field("rows", &self.rows)
            .field("one_norm", &self.one_norm)
            .finish()
    }
}

impl<P: Prob> TransformMatrix<P> {
    pub fn build(kind: BuilderKind, sigma: &Distribution<P>, pi: &Distribution<P>) -> Result<Self> {
        match kind {
            BuilderKind::Proportional => build_proportional(sigma, pi),
            BuilderKind::Greedy => build_greedy(sigma, pi),
        }
    }

    fn assemble(n: usize, rows: Vec<Vec<(u32, P)>>, partition: Partition) -> Self {
        let mut col: Vec<Vec<&P>> = vec![Vec::new(); n];
        for row in &rows {
            for (c, p) in row {
                col[*c as usize].push(p);
            }
        }
        let one_norm = col
            .into_iter()
            .map(P::sum_all)
            .max_by(|a, b| a.cmp_total(b))
            .unwrap_or_else(P::zero);
        let row_entropy = rows
            .iter()
            .map(|row| {
                if row.len() <= 1 {
                    return 0.0;
                }
                -row.iter()
                    .map(|(_, p)| {
                        let x = p.to_f64();
                        if x > 0.0 {
                            x * x.log2()
                        } else {
                            0.0
                        }
                    })
                    .sum::<f64>()
            })
            .collect();
        TransformMatrix {
            n,
            rows,
            partition,
            one_norm,
            row_entropy,
            sampling: OnceLock::new(),
        }
    }

    pub fn alphabet_size(&self) -> usize {
        self.n
    }

    pub fn row(&self, symbol: usize) -> &[(u32, P)] {
        &self.rows[symbol]
    }

    pub fn rows(&self) -> &[Vec<(u32, P)>] {
        &self.rows
    }

    pub fn entry(&self, from: usize, to: usize) -> P {
        self.rows[from]
            .binary_search_by_key(&(to as u32), |(c, _)| *c)
            .map(|i| self.rows[from][i].1.clone())
            .unwrap_or_else(|_| P::zero())
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// `‖B‖₁`, the largest column sum.
    pub fn one_norm(&self) -> &P {
        &self.one_norm
    }

    /// `H(B_ω)` in bits for each row.
    pub fn row_entropy(&self) -> &[f64] {
        &self.row_entropy
    }

    /// Mean number of nonzero entries over overrepresented rows.
    pub fn mean_over_support(&self) -> f64 {
        let over = self.partition.over();
        if over.is_empty() {
            return 0.0;
        }
        over.iter().map(|&s| self.rows[s as usize].len()).sum::<usize>() as f64 / over.len() as f64
    }

    pub fn is_identity(&self) -> bool {
        self.rows
            .iter()
            .enumerate()
            .all(|(i, r)| r.len() == 1 && r[0].0 as usize == i)
    }

    /// `σᵀB`.
    pub fn push_forward(&self, sigma: &Distribution<P>) -> Result<Vec<P>> {
        if sigma.alphabet_size() != self.n {
            return Err(Error::AlphabetMismatch(sigma.alphabet_size(), self.n));
        }
        let mut out = vec![P::zero(); self.n];
        for (s, row) in sigma.probs().iter().zip(&self.rows) {
            for (c, p) in row {
                let slot = &mut out[*c as usize];
                *slot = slot.clone() + s.clone() * p.clone();
            }
        }
        Ok(out)
    }

    /// Check the four defining properties against `(σ, π)`; exact for
    /// rationals, within [`FLOAT_TOLERANCE`] for floats.
    pub fn check_properties(&self, sigma: &Distribution<P>, pi: &Distribution<P>) -> Result<()> {
        let fail = |m: String| Err(Error::Infeasible(m));
        let part = partition(sigma, pi)?;
        for (i, row) in self.rows.iter().enumerate() {
            let sum = row.iter().fold(P::zero(), |a, (_, p)| a + p.clone());
            if !sum.approx_eq(&P::one(), FLOAT_TOLERANCE) {
                return fail(format!("row {i} sums to {}", sum.to_f64()));
            }
            if row.iter().any(|(_, p)| p.is_negative()) {
                return fail(format!("row {i} has a negative entry"));
            }
            if part.is_over(i) {
                if let Some((c, _)) = row
                    .iter()
                    .find(|(c, p)| *c as usize != i && part.is_over(*c as usize) && !p.is_zero())
                {
                    return fail(format!("overrepresented row {i} maps to overrepresented {c}"));
                }
            } else if !(row.len() == 1 && row[0].0 as usize == i && row[0].1 == P::one()) {
                return fail(format!("underrepresented row {i} is not the identity"));
            }
        }
        for (j, (got, want)) in self.push_forward(sigma)?.iter().zip(pi.probs()).enumerate() {
            if !got.approx_eq(want, FLOAT_TOLERANCE) {
                return fail(format!(
                    "marginal of column {j} is {} instead of {}",
                    got.to_f64(),
                    want.to_f64()
                ));
            }
        }
        Ok(())
    }

    /// `|O| + 1 − Σ_{ω∈O} π(ω)/σ(ω)`, an upper bound on `‖B‖₁` that is itself
    /// at most `|Ω|`.
    pub fn one_norm_bound(sigma: &Distribution<P>, pi: &Distribution<P>) -> Result<P> {
        let part = partition(sigma, pi)?;
        let mut bound = P::from_ratio(part.over_count() as u64 + 1, 1);
        for s in part.over() {
            let (p, q) = (pi.prob(s as usize), sigma.prob(s as usize));
            bound = bound - p.clone() / q.clone();
        }
        Ok(bound)
    }

    /// `(Σ_ω σ(ω)·H(B_ω), M')` with `M'` the negative log of the smallest
    /// nonzero entry.
    pub fn entropy_budget(&self, sigma: &Distribution<P>) -> Result<EntropyBudget> {
        if sigma.alphabet_size() != self.n {
            return Err(Error::AlphabetMismatch(sigma.alphabet_size(), self.n));
        }
        let expected_bits = sigma
            .probs()
            .iter()
            .zip(&self.row_entropy)
            .map(|(s, h)| s.to_f64() * h)
            .sum();
        let m_prime = self
            .rows
            .iter()
            .flatten()
            .map(|(_, p)| -p.to_f64().log2())
            .fold(0.0, f64::max);
        Ok(EntropyBudget {
            expected_bits,
            m_prime,
        })
    }

    /// `tmat v1 <n>` then one `<row> <col> <prob>` line per nonzero entry.
    pub fn to_text(&self) -> String {
        let mut s = format!("tmat v1 {}\n", self.n);
        for (i, row) in self.rows.iter().enumerate() {
            for (c, p) in row {
                let _ = writeln!(s, "{i} {c} {}", p.to_literal());
            }
        }
        s
    }

    /// Inverse of [`to_text`](Self::to_text). The partition is recovered from
    /// the sparsity pattern: a state is underrepresented exactly when other
    /// states map onto it.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::parse(0, "missing `tmat v1` header"))?;
        let n = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["tmat", "v1", n] => n
                .parse::<usize>()
                .map_err(|_| Error::parse(hline, "bad alphabet size"))?,
            _ => return Err(Error::parse(hline, "expected `tmat v1 <n>`")),
        };
        let mut rows: Vec<Vec<(u32, P)>> = vec![Vec::new(); n];
        for (ln, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let [r, c, p] = f[..] else {
                return Err(Error::parse(ln, "expected `<row> <col> <prob>`"));
            };
            let r: usize = r.parse().map_err(|_| Error::parse(ln, "bad row"))?;
            let c: u32 = c.parse().map_err(|_| Error::parse(ln, "bad column"))?;
            let p = P::parse_literal(p).ok_or_else(|| Error::parse(ln, "bad probability"))?;
            if r >= n || c as usize >= n {
                return Err(Error::parse(ln, "index out of range"));
            }
            rows[r].push((c, p));
        }
        let mut receives = vec![false; n];
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|(c, _)| *c);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::parse(hline, format!("duplicate entry in row {i}")));
            }
            let sum = row.iter().fold(P::zero(), |a, (_, p)| a + p.clone());
            if !sum.approx_eq(&P::one(), FLOAT_TOLERANCE) {
                return Err(Error::parse(hline, format!("row {i} does not sum to one")));
            }
            for (c, p) in row.iter() {
                if *c as usize != i && !p.is_zero() {
                    receives[*c as usize] = true;
                }
            }
        }
        let partition = Partition {
            over: receives.iter().map(|r| !r).collect(),
        };
        Ok(Self::assemble(n, rows, partition))
    }
}

impl TransformMatrix<f64> {
    fn sampling_tables(&self) -> &[Option<QuantizedRow>] {
        self.sampling.get_or_init(|| {
            self.rows
                .iter()
                .map(|row| (row.len() > 1).then(|| QuantizedRow::new(row)))
                .collect()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyBudget {
    pub expected_bits: f64,
    pub m_prime: f64,
}

/// Explicit construction: excess of each overrepresented state is spread over
/// all underrepresented states proportionally to their deficits.
pub fn build_proportional<P: Prob>(
    sigma: &Distribution<P>,
    pi: &Distribution<P>,
) -> Result<TransformMatrix<P>> {
    let part = partition(sigma, pi)?;
    let n = sigma.alphabet_size();
    let under = part.under();
    let total_deficit = under.iter().fold(P::zero(), |acc, &u| {
        acc + (pi.prob(u as usize).clone() - sigma.prob(u as usize).clone())
    });
    // share of the total deficit owed to each underrepresented column
    let shares: Vec<P> = under
        .iter()
        .map(|&u| (pi.prob(u as usize).clone() - sigma.prob(u as usize).clone()) / total_deficit.clone())
        .collect();
    let rows = (0..n)
        .map(|i| {
            let (s, p) = (sigma.prob(i), pi.prob(i));
            let excess = s.clone() - p.clone();
            if !part.is_over(i) || under.is_empty() || !(excess > P::zero()) || excess.negligible() {
                return vec![(i as u32, P::one())];
            }
            let leave = excess / s.clone();
            let mut row: Vec<(u32, P)> = Vec::with_capacity(under.len() + 1);
            row.push((i as u32, P::one() - leave.clone()));
            for (&u, share) in under.iter().zip(&shares) {
                row.push((u, P::product(&leave, share)));
            }
            row.sort_by_key(|(c, _)| *c);
            row
        })
        .collect();
    Ok(TransformMatrix::assemble(n, rows, part))
}

struct Deficit<P: Prob> {
    amount: P,
    symbol: u32,
}

impl<P: Prob> PartialEq for Deficit<P> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<P: Prob> Eq for Deficit<P> {}
impl<P: Prob> PartialOrd for Deficit<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P: Prob> Ord for Deficit<P> {
    // max-heap: largest remaining deficit first, then smallest symbol id
    fn cmp(&self, other: &Self) -> Ordering {
        self.amount
            .cmp_total(&other.amount)
            .then(other.symbol.cmp(&self.symbol))
    }
}

/// Greedy construction: overrepresented states in decreasing order of excess
/// `σ − π` each pour their excess into the underrepresented state with the
/// largest remaining deficit until it is saturated, then the next.
pub fn build_greedy<P: Prob>(
    sigma: &Distribution<P>,
    pi: &Distribution<P>,
) -> Result<TransformMatrix<P>> {
    let part = partition(sigma, pi)?;
    let n = sigma.alphabet_size();
    let mut heap: BinaryHeap<Deficit<P>> = part
        .under()
        .into_iter()
        .map(|u| Deficit {
            amount: pi.prob(u as usize).clone() - sigma.prob(u as usize).clone(),
            symbol: u,
        })
        .collect();
    let mut sources: Vec<(u32, P)> = part
        .over()
        .into_iter()
        .map(|o| (o, sigma.prob(o as usize).clone() - pi.prob(o as usize).clone()))
        .filter(|(_, e)| e > &P::zero() && !e.negligible())
        .collect();
    sources.sort_by(|a, b| b.1.cmp_total(&a.1).then(a.0.cmp(&b.0)));

    let mut rows: Vec<Vec<(u32, P)>> = (0..n).map(|i| vec![(i as u32, P::one())]).collect();
    for (o, excess) in sources {
        let s = sigma.prob(o as usize).clone();
        let mut mass = excess;
        let mut row: Vec<(u32, P)> = Vec::new();
        let mut moved = P::zero();
        while mass > P::zero() && !mass.negligible() {
            let Some(mut top) = heap.pop() else {
                return Err(Error::Infeasible(format!(
                    "excess {} of state {o} has nowhere to go",
                    mass.to_f64()
                )));
            };
            let take = if top.amount < mass { top.amount.clone() } else { mass.clone() };
            mass = mass - take.clone();
            top.amount = top.amount - take.clone();
            moved = moved + take.clone();
            row.push((top.symbol, take / s.clone()));
            if top.amount > P::zero() && !top.amount.negligible() {
                heap.push(top);
            }
        }
        // diagonal keeps whatever was not moved: exactly π/σ in exact mode
        row.push((o, P::one() - moved / s));
        row.sort_by_key(|(c, _)| *c);
        rows[o as usize] = row;
    }
    if let Some(left) = heap.iter().find(|d| !d.amount.negligible()) {
        return Err(Error::Infeasible(format!(
            "deficit {} of state {} left unfilled",
            left.amount.to_f64(),
            left.symbol
        )));
    }
    Ok(TransformMatrix::assemble(n, rows, part))
}

pub fn one_norm<P: Prob>(b: &TransformMatrix<P>) -> P {
    b.one_norm().clone()
}

/// Draw `ω'` from row `ω` of `b`. Rows with a single entry consume no
/// entropy.
pub fn sample_transform(
    b: &TransformMatrix<f64>,
    symbol: u32,
    source: &mut EntropySource,
) -> Result<u32> {
    let s = symbol as usize;
    if s >= b.n {
        return Err(Error::UnknownSymbol { symbol, size: b.n });
    }
    match &b.sampling_tables()[s] {
        None => Ok(b.rows[s][0].0),
        Some(q) => Ok(q.targets[source.sample_quantized(&q.cumulative)]),
    }
}

const Q_BITS: u32 = 32;
const Q_TOTAL: u64 = 1 << Q_BITS;

/// Row probabilities rounded to integer frequencies summing to `2^32`, each
/// nonzero entry keeping at least one unit.
#[derive(Debug, Clone)]
struct QuantizedRow {
    targets: Vec<u32>,
    cumulative: Vec<u64>,
}

impl QuantizedRow {
    fn new(row: &[(u32, f64)]) -> Self {
        let mut freq: Vec<u64> = row
            .iter()
            .map(|(_, p)| ((p * Q_TOTAL as f64).round() as u64).max(1))
            .collect();
        let total: u64 = freq.iter().sum();
        let largest = (0..freq.len()).max_by_key(|&i| (freq[i], std::cmp::Reverse(i))).unwrap();
        freq[largest] = freq[largest] + Q_TOTAL - total;
        let mut cumulative = Vec::with_capacity(freq.len() + 1);
        let mut acc = 0;
        cumulative.push(0);
        for f in freq {
            acc += f;
            cumulative.push(acc);
        }
        QuantizedRow {
            targets: row.iter().map(|(c, _)| *c).collect(),
            cumulative,
        }
    }
}

enum Generator {
    /// xorshift64*, reproducible and NOT cryptographically secure.
    Test(u64),
    External(Box<dyn RngCore + Send>),
}

/// Random bit supply with exact accounting of the bits handed out.
///
/// Samples from quantized distributions are drawn with the interval
/// algorithm: a uniform real is revealed one bit at a time only as far as
/// needed to decide which cell it falls in, and the unrevealed remainder
/// carries over to the next draw. Over many draws the cost per sample
/// approaches the entropy of the sampled distribution.
pub struct EntropySource {
    seed: u64,
    generator: Generator,
    bits_consumed: u64,
    buffer: u64,
    buffered: u32,
    interval: Interval,
}

impl fmt::Debug for EntropySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EntropySource")
            .field("seed", &self.seed)
            .field("mode", &self.mode())
            .field("bits_consumed", &self.bits_consumed)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceMode {
    TestPrng,
    External,
}

/// Position of the partially revealed uniform real, in integer units:
/// consistent region `[0, range)`, revealed sub-interval `[low, low + width)`.
#[derive(Debug, Clone, Copy)]
struct Interval {
    range: u128,
    low: u128,
    width: u128,
}

impl Interval {
    const FRESH: Interval = Interval {
        range: Q_TOTAL as u128,
        low: 0,
        width: Q_TOTAL as u128,
    };

    fn double(&mut self) {
        self.range <<= 1;
        self.low <<= 1;
        self.width <<= 1;
    }
}

const XORSHIFT_MULT: u64 = 2685821657736338717;
const ZERO_STATE_REPLACEMENT: u64 = 0x9E37_79B9_7F4A_7C15;

/// One step of xorshift64*. Returns the new state and the output word.
#[inline]
pub fn xorshift64_star(mut x: u64) -> (u64, u64) {
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    (x, x.wrapping_mul(XORSHIFT_MULT))
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl EntropySource {
    /// Reproducible xorshift64* source. Not for production keys.
    pub fn test(seed: u64) -> Self {
        let state = if seed == 0 { ZERO_STATE_REPLACEMENT } else { seed };
        EntropySource {
            seed,
            generator: Generator::Test(state),
            bits_consumed: 0,
            buffer: 0,
            buffered: 0,
            interval: Interval::FRESH,
        }
    }

    /// Source backed by an external generator.
    pub fn external(rng: Box<dyn RngCore + Send>) -> Self {
        EntropySource {
            seed: 0,
            generator: Generator::External(rng),
            bits_consumed: 0,
            buffer: 0,
            buffered: 0,
            interval: Interval::FRESH,
        }
    }

    /// Operating-system entropy.
    pub fn os() -> Self {
        Self::external(Box::new(rand::rngs::OsRng))
    }

    /// Replay a test source from its seed after `bits` consumed bits.
    pub fn replay(seed: u64, bits: u64) -> Self {
        let mut s = Self::test(seed);
        for _ in 0..bits {
            s.next_bit();
        }
        s
    }

    /// Independent sub-source for one frame. Test sources derive it from
    /// `(seed, index)`; external sources draw a fresh seed.
    pub fn for_frame(&mut self, index: u64) -> EntropySource {
        match &mut self.generator {
            Generator::Test(_) => {
                EntropySource::test(splitmix64(self.seed ^ splitmix64(index.wrapping_add(1))))
            }
            Generator::External(rng) => {
                let mut seed = [0u8; 32];
                rng.fill_bytes(&mut seed);
                EntropySource::external(Box::new(<rand::rngs::StdRng as rand::SeedableRng>::from_seed(seed)))
            }
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> SourceMode {
        match self.generator {
            Generator::Test(_) => SourceMode::TestPrng,
            Generator::External(_) => SourceMode::External,
        }
    }

    pub fn bits_consumed(&self) -> u64 {
        self.bits_consumed
    }

    fn raw_word(&mut self) -> u64 {
        match &mut self.generator {
            Generator::Test(state) => {
                let (next, out) = xorshift64_star(*state);
                *state = next;
                out
            }
            Generator::External(rng) => rng.next_u64(),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.bits_consumed += 64;
        self.raw_word()
    }

    #[inline]
    pub fn next_bit(&mut self) -> bool {
        if self.buffered == 0 {
            self.buffer = self.raw_word();
            self.buffered = 64;
        }
        self.buffered -= 1;
        self.bits_consumed += 1;
        (self.buffer >> self.buffered) & 1 == 1
    }

    /// Uniform in `[0, 1)` with 53 bits of precision (charged 64 bits).
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Bernoulli draw with `Pr[true] = p` (charged 64 bits).
    pub fn next_bool(&mut self, p: f64) -> bool {
        self.next_unit() < p
    }

    /// Index `i` with probability `(cum[i+1] − cum[i]) / 2^32`, via the
    /// interval algorithm.
    fn sample_quantized(&mut self, cum: &[u64]) -> usize {
        debug_assert_eq!(*cum.last().unwrap(), Q_TOTAL);
        let cells = cum.len() - 1;
        loop {
            let iv = self.interval;
            let bound = |i: usize| (iv.range * cum[i] as u128) >> Q_BITS;
            // cell containing `low`: last i with bound(i) <= low
            let (mut i, mut hi_cell) = (0, cells - 1);
            while i < hi_cell {
                let mid = (i + hi_cell) / 2;
                if bound(mid + 1) <= iv.low {
                    i = mid + 1;
                } else {
                    hi_cell = mid;
                }
            }
            let (lo, hi) = (bound(i), bound(i + 1));
            if iv.low + iv.width <= hi {
                let mut next = Interval {
                    range: hi - lo,
                    low: iv.low - lo,
                    width: iv.width,
                };
                while next.range < Q_TOTAL as u128 {
                    next.double();
                }
                self.interval = next;
                return i;
            }
            if self.interval.width == 1 {
                self.interval.double();
            }
            self.interval.width >>= 1;
            if self.next_bit() {
                self.interval.low += self.interval.width;
            }
        }
    }
}
