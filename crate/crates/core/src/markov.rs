//! Ergodic Markov chains over a finite alphabet.

use std::fmt::Write as _;

use crate::dist::{total_variation, SymbolDistribution};
use crate::error::{Error, Result};
use crate::prob::{Prob, SUM_TOLERANCE};
use crate::transform::EntropySource;

/// `Δ(t) <= 1/(2e)` defines the mixing time.
pub const MIXING_THRESHOLD: f64 = 1.0 / (2.0 * std::f64::consts::E);

/// Upper limit for the mixing-time scan.
pub const MIXING_CAP: usize = 1_000_000;

/// Largest alphabet for which the dense transition matrix and exact matrix
/// powers are kept.
pub const MAX_STATES: usize = 1 << 12;

pub const DEFAULT_SMOOTHING: f64 = 0.5;

const STATIONARY_RESIDUAL: f64 = 1e-12;
const STATIONARY_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    n: usize,
    /// Row-major `n × n`; entry `(ω, ω')` is `Pr[next = ω' | current = ω]`.
    transition: Vec<f64>,
    stationary: SymbolDistribution,
    mixing_time: usize,
}

impl MarkovModel {
    /// Validate `transition`, then derive the stationary distribution and the
    /// mixing time.
    pub fn new(transition: Vec<Vec<f64>>) -> Result<Self> {
        let (n, transition) = flatten(transition)?;
        check_ergodic(n, &transition)?;
        let stationary = stationary_of(n, &transition)?;
        let mut model = MarkovModel {
            n,
            transition,
            stationary,
            mixing_time: 0,
        };
        model.mixing_time = model.compute_mixing_time()?;
        Ok(model)
    }

    /// Assemble a model whose stationary distribution and mixing time were
    /// computed elsewhere (for instance read back from a model file).
    pub fn from_parts(
        transition: Vec<Vec<f64>>,
        stationary: SymbolDistribution,
        mixing_time: usize,
    ) -> Result<Self> {
        let (n, transition) = flatten(transition)?;
        if stationary.alphabet_size() != n {
            return Err(Error::AlphabetMismatch(stationary.alphabet_size(), n));
        }
        if mixing_time == 0 {
            return Err(Error::InvalidModel("mixing time must be positive".into()));
        }
        check_ergodic(n, &transition)?;
        let residual = stationarity_residual(n, &transition, stationary.probs());
        if residual > 1e-10 {
            return Err(Error::InvalidModel(format!(
                "stationary distribution residual {residual:e} exceeds 1e-10"
            )));
        }
        Ok(MarkovModel {
            n,
            transition,
            stationary,
            mixing_time,
        })
    }

    /// Chain whose every row is `dist`: independent draws, mixing time 1.
    pub fn iid(dist: &SymbolDistribution) -> Result<Self> {
        Self::new(vec![dist.probs().to_vec(); dist.alphabet_size()])
    }

    /// Bigram estimate with additive smoothing.
    pub fn estimate(corpus: &[u32], n: usize, smoothing: f64) -> Result<Self> {
        if corpus.len() < 2 {
            return Err(Error::InvalidArgument(
                "corpus needs at least two symbols".into(),
            ));
        }
        if !(smoothing >= 0.0 && smoothing.is_finite()) {
            return Err(Error::InvalidArgument(format!("smoothing {smoothing}")));
        }
        if !(2..=MAX_STATES).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "alphabet size {n} outside 2..={MAX_STATES}"
            )));
        }
        let mut counts = vec![0u64; n * n];
        for w in corpus.windows(2) {
            let (a, b) = (w[0] as usize, w[1] as usize);
            if a >= n || b >= n {
                return Err(Error::UnknownSymbol {
                    symbol: w[0].max(w[1]),
                    size: n,
                });
            }
            counts[a * n + b] += 1;
        }
        let rows = counts
            .chunks(n)
            .enumerate()
            .map(|(i, row)| {
                let total = row.iter().sum::<u64>() as f64 + smoothing * n as f64;
                if total == 0.0 {
                    return Err(Error::NotErgodic(format!("state {i} has no successors")));
                }
                Ok(row.iter().map(|&c| (c as f64 + smoothing) / total).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Self::new(rows)
    }

    /// Chain over length-`width` words of this chain, read in
    /// non-overlapping blocks. Word `(s₁,…,s_w)` has id `Σ s_i · n^(w-i)`.
    pub fn blocked(&self, width: u32) -> Result<Self> {
        let n = self.n;
        let big = n
            .checked_pow(width)
            .filter(|&b| (2..=MAX_STATES).contains(&b) && width >= 1)
            .ok_or_else(|| Error::InvalidArgument(format!("block width {width}")))?;
        let digits = |mut id: usize| {
            let mut d = vec![0usize; width as usize];
            for slot in d.iter_mut().rev() {
                *slot = id % n;
                id /= n;
            }
            d
        };
        let words: Vec<Vec<usize>> = (0..big).map(digits).collect();
        let rows = words
            .iter()
            .map(|from| {
                let last = *from.last().unwrap();
                words
                    .iter()
                    .map(|to| {
                        let mut p = self.prob(last, to[0]);
                        for w in to.windows(2) {
                            p *= self.prob(w[0], w[1]);
                        }
                        p
                    })
                    .collect()
            })
            .collect();
        Self::new(rows)
    }

    pub fn alphabet_size(&self) -> usize {
        self.n
    }

    pub fn stationary(&self) -> &SymbolDistribution {
        &self.stationary
    }

    pub fn mixing_time(&self) -> usize {
        self.mixing_time
    }

    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.n + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.transition[from * self.n..(from + 1) * self.n]
    }

    /// `max_ω ‖σ − P^t_ω‖` using exact matrix powers.
    pub fn delta(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::InvalidArgument("delta requires t >= 1".into()));
        }
        let mut power = self.transition.clone();
        for _ in 1..t {
            power = mat_mul(self.n, &power, &self.transition);
        }
        Ok(self.max_row_distance(&power))
    }

    /// `Δ(1), …, Δ(t_max)`.
    pub fn delta_curve(&self, t_max: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(t_max);
        let mut power = self.transition.clone();
        for t in 1..=t_max {
            if t > 1 {
                power = mat_mul(self.n, &power, &self.transition);
            }
            out.push(self.max_row_distance(&power));
        }
        out
    }

    fn max_row_distance(&self, power: &[f64]) -> f64 {
        power
            .chunks(self.n)
            .map(|row| {
                0.5 * row
                    .iter()
                    .zip(self.stationary.probs())
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    fn compute_mixing_time(&self) -> Result<usize> {
        let mut power = self.transition.clone();
        for t in 1..=MIXING_CAP {
            if t > 1 {
                power = mat_mul(self.n, &power, &self.transition);
            }
            if self.max_row_distance(&power) <= MIXING_THRESHOLD {
                return Ok(t);
            }
        }
        Err(Error::MixingCapExceeded(MIXING_CAP))
    }

    /// Path whose first symbol is drawn from the stationary distribution.
    pub fn sample_path(&self, length: usize, source: &mut EntropySource) -> Result<Vec<u32>> {
        if length == 0 {
            return Err(Error::InvalidArgument("path length must be positive".into()));
        }
        let first = sample_inverse_cdf(self.stationary.probs(), source.next_unit());
        self.sample_path_from(first, length, source)
    }

    /// Path starting at `start`.
    pub fn sample_path_from(
        &self,
        start: usize,
        length: usize,
        source: &mut EntropySource,
    ) -> Result<Vec<u32>> {
        if start >= self.n {
            return Err(Error::UnknownSymbol {
                symbol: start as u32,
                size: self.n,
            });
        }
        let mut path = Vec::with_capacity(length);
        let mut cur = start;
        for i in 0..length {
            if i > 0 {
                cur = sample_inverse_cdf(self.row(cur), source.next_unit());
            }
            path.push(cur as u32);
        }
        Ok(path)
    }

    /// `mc v1 <n> <tau>`, the stationary distribution, then one block per row.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mc v1 {} {}", self.n, self.mixing_time);
        s.push_str(&self.stationary.to_text());
        for i in 0..self.n {
            let _ = writeln!(s, "dist v1 {}", self.n);
            for (j, p) in self.row(i).iter().enumerate() {
                let _ = writeln!(s, "{j} {}", p.to_literal());
            }
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let m = Self::parse_lines(&mut lines)?;
        if let Some((line, _)) = lines.next() {
            return Err(Error::parse(line, "trailing content after chain"));
        }
        Ok(m)
    }

    pub(crate) fn parse_lines<'a, I>(lines: &mut I) -> Result<Self>
    where
        I: Iterator<Item = (usize, &'a str)>,
    {
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::parse(0, "missing `mc v1` header"))?;
        let (n, tau) = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["mc", "v1", n, tau] => (
                n.parse::<usize>()
                    .map_err(|_| Error::parse(hline, "bad alphabet size"))?,
                tau.parse::<usize>()
                    .map_err(|_| Error::parse(hline, "bad mixing time"))?,
            ),
            _ => return Err(Error::parse(hline, "expected `mc v1 <n> <tau>`")),
        };
        if n > MAX_STATES {
            return Err(Error::parse(hline, format!("alphabet size {n} exceeds {MAX_STATES}")));
        }
        let stationary = SymbolDistribution::parse_lines(lines)?;
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            rows.push(SymbolDistribution::parse_lines(lines)?.probs().to_vec());
        }
        Self::from_parts(rows, stationary, tau)
    }
}

fn flatten(rows: Vec<Vec<f64>>) -> Result<(usize, Vec<f64>)> {
    let n = rows.len();
    if !(2..=MAX_STATES).contains(&n) {
        return Err(Error::InvalidModel(format!(
            "alphabet size {n} outside 2..={MAX_STATES}"
        )));
    }
    let mut flat = Vec::with_capacity(n * n);
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidModel(format!("row {i} has {} entries", row.len())));
        }
        if row.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidModel(format!("row {i} has a negative entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidModel(format!("row {i} sums to {sum}")));
        }
        flat.extend(row);
    }
    Ok((n, flat))
}

/// Strong connectivity of the positive-entry digraph plus aperiodicity, the
/// period being the gcd of `level(u) + 1 − level(v)` over edges `u → v` of a
/// breadth-first search from state 0.
fn check_ergodic(n: usize, a: &[f64]) -> Result<()> {
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| a[i * n + j] > 0.0).collect())
        .collect();
    let mut pred = vec![Vec::new(); n];
    for (i, s) in succ.iter().enumerate() {
        for &j in s {
            pred[j].push(i);
        }
    }
    let levels = bfs_levels(&succ);
    if let Some(u) = levels.iter().position(Option::is_none) {
        return Err(Error::NotErgodic(format!("state {u} unreachable from state 0")));
    }
    if let Some(u) = bfs_levels(&pred).iter().position(Option::is_none) {
        return Err(Error::NotErgodic(format!("state 0 unreachable from state {u}")));
    }
    let mut period = 0i64;
    for (u, s) in succ.iter().enumerate() {
        for &v in s {
            let d = levels[u].unwrap() as i64 + 1 - levels[v].unwrap() as i64;
            period = gcd(period, d.abs());
        }
    }
    if period != 1 {
        return Err(Error::NotErgodic(format!("chain has period {period}")));
    }
    Ok(())
}

fn bfs_levels(adj: &[Vec<usize>]) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    let mut queue = std::collections::VecDeque::from([0usize]);
    level[0] = Some(0);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if level[v].is_none() {
                level[v] = Some(level[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn row_times_matrix(n: usize, x: &[f64], a: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            for (o, &aij) in out.iter_mut().zip(&a[i * n..(i + 1) * n]) {
                *o += xi * aij;
            }
        }
    }
}

fn stationarity_residual(n: usize, a: &[f64], x: &[f64]) -> f64 {
    let mut y = vec![0.0; n];
    row_times_matrix(n, x, a, &mut y);
    x.iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Power iteration on the lazy chain `(A + I)/2`, which has the same
/// stationary distribution and no eigenvalue on the unit circle besides 1.
fn stationary_of(n: usize, a: &[f64]) -> Result<SymbolDistribution> {
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    // A small step residual bounds the error only up to the spectral gap, so
    // once it is reached the iteration runs as long again.
    let mut stop_at = None;
    for it in 0..STATIONARY_MAX_ITERS {
        row_times_matrix(n, &x, a, &mut y);
        let residual = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        if stop_at.is_none() && residual < STATIONARY_RESIDUAL {
            stop_at = Some((2 * it + 1).min(STATIONARY_MAX_ITERS - 1));
        }
        if stop_at.is_some_and(|s| it >= s) || residual == 0.0 {
            let total: f64 = y.iter().sum();
            y.iter_mut().for_each(|v| *v /= total);
            return SymbolDistribution::new(y);
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = 0.5 * (*xi + yi);
        }
    }
    Err(Error::NoConvergence(STATIONARY_MAX_ITERS))
}

/// Stationary distribution of a row-stochastic matrix given as rows.
pub fn stationary_distribution(transition: &[Vec<f64>]) -> Result<SymbolDistribution> {
    let (n, flat) = flatten(transition.to_vec())?;
    check_ergodic(n, &flat)?;
    stationary_of(n, &flat)
}

fn mat_mul(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let (src, dst) = (&a[i * n..(i + 1) * n], &mut out[i * n..(i + 1) * n]);
        for (k, &aik) in src.iter().enumerate() {
            if aik != 0.0 {
                for (o, &bkj) in dst.iter_mut().zip(&b[k * n..(k + 1) * n]) {
                    *o += aik * bkj;
                }
            }
        }
    }
    out
}

/// Smallest index whose cumulative mass exceeds `u`.
pub(crate) fn sample_inverse_cdf(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Total-variation distance between the empirical symbol frequencies of
/// `path` and the model's stationary distribution.
pub fn empirical_distance(model: &MarkovModel, path: &[u32]) -> Result<f64> {
    let mut counts = vec![0u64; model.alphabet_size()];
    for &s in path {
        counts[s as usize] += 1;
    }
    total_variation(&SymbolDistribution::from_weights(&counts)?, model.stationary())
}
