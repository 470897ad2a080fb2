//! Finite probability distributions and the information measures used by the
//! bound checks: entropy, cross-entropy, Kullback-Leibler divergence and total
//! variation.
//!
//! Logarithms are base 2 unless stated otherwise and `0 · log 0 = 0`
//! throughout.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::prob::{Prob, Rational, SUM_TOLERANCE};

/// Probability vector over the alphabet `0..n`, `n >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<P: Prob = f64> {
    probs: Vec<P>,
}

pub type SymbolDistribution = Distribution<f64>;
pub type ExactDistribution = Distribution<Rational>;

impl<P: Prob> Distribution<P> {
    pub fn new(probs: Vec<P>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(format!(
                "alphabet size {} < 2",
                probs.len()
            )));
        }
        let mut sum = P::zero();
        for (i, p) in probs.iter().enumerate() {
            if p.is_negative() || p.to_f64().is_nan() {
                return Err(Error::InvalidDistribution(format!(
                    "entry {i} is {p:?}"
                )));
            }
            sum = sum + p.clone();
        }
        if !sum.approx_eq(&P::one(), SUM_TOLERANCE) {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {}",
                sum.to_f64()
            )));
        }
        Ok(Distribution { probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![P::from_ratio(1, n.max(1) as u64); n])
    }

    /// Normalized nonnegative integer weights.
    pub fn from_weights(weights: &[u64]) -> Result<Self> {
        let total: u64 = weights.iter().sum();
        if total == 0 {
            return Err(Error::InvalidDistribution("all weights are zero".into()));
        }
        Self::new(weights.iter().map(|&w| P::from_ratio(w, total)).collect())
    }

    pub fn alphabet_size(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[P] {
        &self.probs
    }

    pub fn prob(&self, symbol: usize) -> &P {
        &self.probs[symbol]
    }

    pub fn to_f64(&self) -> SymbolDistribution {
        Distribution {
            probs: self.probs.iter().map(Prob::to_f64).collect(),
        }
    }

    /// Every entry is `2^-k` for some integer `k >= 0`.
    pub fn is_dyadic(&self) -> bool {
        self.probs.iter().all(|p| {
            let x = p.to_f64();
            x > 0.0 && {
                let k = (-x.log2()).round();
                (0.0..=1074.0).contains(&k) && *p == P::dyadic(k as u32)
            }
        })
    }

    /// `dist v1 <n>` followed by one `<id> <value>` line per symbol.
    pub fn to_text(&self) -> String {
        let mut s = format!("dist v1 {}\n", self.probs.len());
        for (i, p) in self.probs.iter().enumerate() {
            let _ = writeln!(s, "{i} {}", p.to_literal());
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let d = Self::parse_lines(&mut lines)?;
        if let Some((line, _)) = lines.next() {
            return Err(Error::parse(line, "trailing content after distribution"));
        }
        Ok(d)
    }

    /// Parse one distribution block from `(line_number, line)` pairs.
    pub(crate) fn parse_lines<'a, I>(lines: &mut I) -> Result<Self>
    where
        I: Iterator<Item = (usize, &'a str)>,
    {
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::parse(0, "missing `dist v1` header"))?;
        let n = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["dist", "v1", n] => n
                .parse::<usize>()
                .map_err(|_| Error::parse(hline, "bad alphabet size"))?,
            _ => return Err(Error::parse(hline, "expected `dist v1 <n>`")),
        };
        let mut probs: Vec<Option<P>> = vec![None; n];
        for _ in 0..n {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::parse(hline, "distribution block is short"))?;
            let mut it = line.split_whitespace();
            let (Some(id), Some(val), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::parse(ln, "expected `<symbol-id> <probability>`"));
            };
            let id: usize = id
                .parse()
                .map_err(|_| Error::parse(ln, "bad symbol id"))?;
            let val =
                P::parse_literal(val).ok_or_else(|| Error::parse(ln, "bad probability"))?;
            match probs.get_mut(id) {
                Some(slot @ None) => *slot = Some(val),
                Some(Some(_)) => return Err(Error::parse(ln, "duplicate symbol id")),
                None => return Err(Error::parse(ln, "symbol id out of range")),
            }
        }
        Self::new(probs.into_iter().map(|p| p.expect("all ids present")).collect())
            .map_err(|e| Error::parse(hline, e.to_string()))
    }
}

impl ExactDistribution {
    /// Exact rational image of a float distribution. Fails if the float
    /// entries do not sum to exactly one.
    pub fn from_f64(d: &SymbolDistribution) -> Result<Self> {
        Self::new(
            d.probs
                .iter()
                .map(|&p| crate::prob::rational_from_f64(p))
                .collect(),
        )
    }
}

fn check_same_alphabet<P: Prob, Q: Prob>(p: &Distribution<P>, q: &Distribution<Q>) -> Result<()> {
    if p.alphabet_size() != q.alphabet_size() {
        return Err(Error::AlphabetMismatch(p.alphabet_size(), q.alphabet_size()));
    }
    Ok(())
}

#[inline]
fn plog2(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Shannon entropy in bits.
pub fn entropy<P: Prob>(p: &Distribution<P>) -> f64 {
    -p.probs.iter().map(|x| plog2(x.to_f64())).sum::<f64>()
}

/// `H(p, q) = -Σ p(ω) log₂ q(ω)`.
pub fn cross_entropy<P: Prob, Q: Prob>(p: &Distribution<P>, q: &Distribution<Q>) -> Result<f64> {
    check_same_alphabet(p, q)?;
    let mut h = 0.0;
    for (i, (a, b)) in p.probs.iter().zip(&q.probs).enumerate() {
        let (a, b) = (a.to_f64(), b.to_f64());
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::SupportMismatch(i));
            }
            h -= a * b.log2();
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogBase {
    Two,
    E,
}

pub fn kl_divergence<P: Prob, Q: Prob>(
    p: &Distribution<P>,
    q: &Distribution<Q>,
    base: LogBase,
) -> Result<f64> {
    check_same_alphabet(p, q)?;
    let mut d = 0.0;
    for (i, (a, b)) in p.probs.iter().zip(&q.probs).enumerate() {
        let (a, b) = (a.to_f64(), b.to_f64());
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::SupportMismatch(i));
            }
            d += a * (a / b).log2();
        }
    }
    Ok(match base {
        LogBase::Two => d,
        LogBase::E => d * std::f64::consts::LN_2,
    })
}

/// Half the L1 distance. Exact for rational distributions.
pub fn total_variation<P: Prob>(p: &Distribution<P>, q: &Distribution<P>) -> Result<P> {
    check_same_alphabet(p, q)?;
    let mut sum = P::zero();
    for (a, b) in p.probs.iter().zip(&q.probs) {
        let diff = if a >= b {
            a.clone() - b.clone()
        } else {
            b.clone() - a.clone()
        };
        sum = sum + diff;
    }
    Ok(sum / P::from_ratio(2, 1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinskerCheck {
    pub total_variation: f64,
    /// `sqrt(KL_e(p‖q) / 2)`.
    pub bound: f64,
    pub holds: bool,
}

pub fn pinsker_check<P: Prob>(p: &Distribution<P>, q: &Distribution<P>) -> Result<PinskerCheck> {
    let tv = total_variation(p, q)?.to_f64();
    let bound = (kl_divergence(p, q, LogBase::E)? / 2.0).sqrt();
    Ok(PinskerCheck {
        total_variation: tv,
        bound,
        holds: tv <= bound + 1e-15,
    })
}
