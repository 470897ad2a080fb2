//! Huffman codes built from a symbol distribution, the dyadic distribution
//! they imply, and bit-level encoding and decoding.
//!
//! Lengths come from a deterministic merge order; codewords are then assigned
//! canonically (shorter first, ties by symbol id) so a code is fully described
//! by its length table.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use crate::bits::{push_bits, BitCursor, BitStr, Bits};
use crate::dist::{Distribution, ExactDistribution, SymbolDistribution};
use crate::error::{Error, Result};
use crate::prob::{Prob, Rational};

pub const MAX_CODE_LEN: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanCode {
    lengths: Vec<u8>,
    /// Right-aligned canonical codewords.
    codewords: Vec<u64>,
    max_len: u32,
    min_len: u32,
    // canonical decoding tables, indexed by length
    first_code: Vec<u64>,
    first_index: Vec<usize>,
    count: Vec<usize>,
    by_code: Vec<u32>,
}

struct HeapItem<P: Prob> {
    weight: P,
    first_symbol: u32,
    size: u32,
    node: usize,
}

impl<P: Prob> HeapItem<P> {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.weight
            .cmp_total(&other.weight)
            .then(self.first_symbol.cmp(&other.first_symbol))
            .then(self.size.cmp(&other.size))
    }
}

impl<P: Prob> PartialEq for HeapItem<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}
impl<P: Prob> Eq for HeapItem<P> {}
impl<P: Prob> PartialOrd for HeapItem<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P: Prob> Ord for HeapItem<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

impl HuffmanCode {
    /// Optimal prefix code for `sigma`.
    ///
    /// Merge order is by `(weight, smallest contained symbol id, subtree
    /// size)`, so equal inputs always produce identical codes.
    pub fn build<P: Prob>(sigma: &Distribution<P>) -> Result<Self> {
        let lengths = huffman_lengths(sigma.probs())?;
        Self::from_lengths(&lengths)
    }

    /// Canonical code for a length table satisfying Kraft's equality.
    pub fn from_lengths(lengths: &[u8]) -> Result<Self> {
        let n = lengths.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("alphabet size {n} < 2")));
        }
        if let Some(&l) = lengths.iter().find(|&&l| l == 0 || l as u32 > MAX_CODE_LEN) {
            return Err(if l == 0 {
                Error::InvalidModel("zero-length codeword".into())
            } else {
                Error::CodeTooLong(l as usize)
            });
        }
        let kraft: u128 = lengths.iter().map(|&l| 1u128 << (64 - l as u32)).sum();
        if kraft != 1u128 << 64 {
            return Err(Error::InvalidModel(
                "code lengths violate Kraft equality".into(),
            ));
        }
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_by_key(|&s| (lengths[s as usize], s));

        let max_len = *lengths.iter().max().unwrap() as u32;
        let min_len = *lengths.iter().min().unwrap() as u32;
        let mut codewords = vec![0u64; n];
        let mut first_code = vec![0u64; max_len as usize + 1];
        let mut first_index = vec![0usize; max_len as usize + 1];
        let mut count = vec![0usize; max_len as usize + 1];
        let mut code: u64 = 0;
        let mut prev_len = lengths[order[0] as usize] as u32;
        for (idx, &s) in order.iter().enumerate() {
            let len = lengths[s as usize] as u32;
            if idx > 0 {
                code += 1;
                code <<= len - prev_len;
            }
            if count[len as usize] == 0 {
                first_code[len as usize] = code;
                first_index[len as usize] = idx;
            }
            count[len as usize] += 1;
            codewords[s as usize] = code;
            prev_len = len;
        }
        Ok(HuffmanCode {
            lengths: lengths.to_vec(),
            codewords,
            max_len,
            min_len,
            first_code,
            first_index,
            count,
            by_code: order,
        })
    }

    pub fn alphabet_size(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[u8] {
        &self.lengths
    }

    pub fn len_of(&self, symbol: usize) -> u32 {
        self.lengths[symbol] as u32
    }

    /// Longest codeword length `M`.
    pub fn max_len(&self) -> u32 {
        self.max_len
    }

    /// Shortest codeword length `m`.
    pub fn min_len(&self) -> u32 {
        self.min_len
    }

    /// `(codeword, length)` with the codeword right-aligned.
    pub fn codeword(&self, symbol: u32) -> Result<(u64, u32)> {
        let s = symbol as usize;
        if s >= self.lengths.len() {
            return Err(Error::UnknownSymbol {
                symbol,
                size: self.lengths.len(),
            });
        }
        Ok((self.codewords[s], self.lengths[s] as u32))
    }

    /// Implied dyadic distribution `π(ω) = 2^-|C(ω)|`.
    pub fn implied(&self) -> SymbolDistribution {
        self.implied_generic::<f64>()
    }

    pub fn implied_exact(&self) -> ExactDistribution {
        self.implied_generic::<Rational>()
    }

    pub fn implied_generic<P: Prob>(&self) -> Distribution<P> {
        Distribution::new(self.lengths.iter().map(|&l| P::dyadic(l as u32)).collect())
            .expect("Kraft equality makes the implied distribution valid")
    }

    /// `Σ σ(ω)·|C(ω)|`.
    pub fn expected_length<P: Prob>(&self, sigma: &Distribution<P>) -> f64 {
        sigma
            .probs()
            .iter()
            .zip(&self.lengths)
            .map(|(p, &l)| p.to_f64() * l as f64)
            .sum()
    }

    pub fn encode_symbol(&self, symbol: u32) -> Result<Bits> {
        let mut bits = Bits::new();
        self.encode_into(&mut bits, &[symbol])?;
        Ok(bits)
    }

    /// Concatenation `C(x₁)C(x₂)…`.
    pub fn encode_stream(&self, symbols: &[u32]) -> Result<Bits> {
        let mut bits = Bits::new();
        self.encode_into(&mut bits, symbols)?;
        Ok(bits)
    }

    pub fn encode_into(&self, out: &mut Bits, symbols: &[u32]) -> Result<()> {
        for &s in symbols {
            let (code, len) = self.codeword(s)?;
            push_bits(out, code, len);
        }
        Ok(())
    }

    /// Decode `count` symbols; returns them with the number of bits consumed.
    pub fn decode_stream(&self, bits: &BitStr, count: usize) -> Result<(Vec<u32>, usize)> {
        let mut cursor = BitCursor::new(bits);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(self.decode_one(&mut cursor).ok_or(Error::Truncated {
                decoded: out.len(),
                consumed: cursor.position(),
            })?);
        }
        Ok((out, cursor.position()))
    }

    pub(crate) fn decode_one(&self, cursor: &mut BitCursor<'_>) -> Option<u32> {
        let mut code = 0u64;
        for len in 1..=self.max_len as usize {
            code = (code << 1) | cursor.read_bit()? as u64;
            let c = self.count[len];
            if c > 0 && code >= self.first_code[len] && code - self.first_code[len] < c as u64 {
                return Some(self.by_code[self.first_index[len] + (code - self.first_code[len]) as usize]);
            }
        }
        unreachable!("a complete prefix code always resolves within max_len bits")
    }

    /// Explicit code tree `T(C)`.
    pub fn tree(&self) -> CodeTree {
        let mut nodes = vec![TreeNode {
            depth: 0,
            children: None,
            symbol: None,
        }];
        for (s, (&code, &len)) in self.codewords.iter().zip(&self.lengths).enumerate() {
            let mut v = 0;
            for i in (0..len as u32).rev() {
                let bit = ((code >> i) & 1) as usize;
                let children = match nodes[v].children {
                    Some(c) => c,
                    None => {
                        let d = nodes[v].depth + 1;
                        let base = nodes.len();
                        for _ in 0..2 {
                            nodes.push(TreeNode {
                                depth: d,
                                children: None,
                                symbol: None,
                            });
                        }
                        nodes[v].children = Some([base, base + 1]);
                        [base, base + 1]
                    }
                };
                v = children[bit];
            }
            nodes[v].symbol = Some(s as u32);
        }
        CodeTree { nodes }
    }

    /// `huff v1 <n>` then `<id> <length>` per symbol.
    pub fn to_text(&self) -> String {
        let mut s = format!("huff v1 {}\n", self.lengths.len());
        for (i, l) in self.lengths.iter().enumerate() {
            let _ = writeln!(s, "{i} {l}");
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        Self::parse_lines(&mut lines)
    }

    pub(crate) fn parse_lines<'a, I>(lines: &mut I) -> Result<Self>
    where
        I: Iterator<Item = (usize, &'a str)>,
    {
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::parse(0, "missing `huff v1` header"))?;
        let n = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["huff", "v1", n] => n
                .parse::<usize>()
                .map_err(|_| Error::parse(hline, "bad alphabet size"))?,
            _ => return Err(Error::parse(hline, "expected `huff v1 <n>`")),
        };
        let mut lengths = vec![None; n];
        for _ in 0..n {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::parse(hline, "code table is short"))?;
            let mut it = line.split_whitespace();
            let (Some(id), Some(len), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::parse(ln, "expected `<symbol-id> <length>`"));
            };
            let id: usize = id.parse().map_err(|_| Error::parse(ln, "bad symbol id"))?;
            let len: u8 = len.parse().map_err(|_| Error::parse(ln, "bad length"))?;
            match lengths.get_mut(id) {
                Some(slot @ None) => *slot = Some(len),
                Some(Some(_)) => return Err(Error::parse(ln, "duplicate symbol id")),
                None => return Err(Error::parse(ln, "symbol id out of range")),
            }
        }
        let lengths: Vec<u8> = lengths.into_iter().map(Option::unwrap).collect();
        Self::from_lengths(&lengths).map_err(|e| Error::parse(hline, e.to_string()))
    }
}

/// Huffman code lengths for arbitrary nonnegative weights (at least two).
pub(crate) fn huffman_lengths<P: Prob>(weights: &[P]) -> Result<Vec<u8>> {
    let n = weights.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("alphabet size {n} < 2")));
    }
    // parent links of the merge tree; leaves are 0..n
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<HeapItem<P>>> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            Reverse(HeapItem {
                weight: w.clone(),
                first_symbol: i as u32,
                size: 1,
                node: i,
            })
        })
        .collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse(a) = heap.pop().unwrap();
        let Reverse(b) = heap.pop().unwrap();
        parent[a.node] = next;
        parent[b.node] = next;
        heap.push(Reverse(HeapItem {
            weight: a.weight + b.weight,
            first_symbol: a.first_symbol.min(b.first_symbol),
            size: a.size + b.size,
            node: next,
        }));
        next += 1;
    }
    // parents always have larger ids, so depths resolve top-down
    let root = 2 * n - 2;
    let mut depth = vec![0usize; 2 * n - 1];
    for v in (0..root).rev() {
        depth[v] = depth[parent[v]] + 1;
    }
    depth[..n]
        .iter()
        .map(|&d| {
            if d as u32 > MAX_CODE_LEN {
                Err(Error::CodeTooLong(d))
            } else {
                Ok(d as u8)
            }
        })
        .collect()
}

/// Shannon code lengths `⌈−log₂ σ(ω)⌉` (symbols with zero mass get 0).
pub fn shannon_lengths<P: Prob>(sigma: &Distribution<P>) -> Vec<u32> {
    sigma
        .probs()
        .iter()
        .map(|p| {
            let x = p.to_f64();
            if x <= 0.0 {
                return 0;
            }
            let l = -x.log2();
            // guard exact powers of two against rounding up
            let r = l.round();
            if (l - r).abs() < 1e-12 {
                r as u32
            } else {
                l.ceil() as u32
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub depth: u32,
    /// `[left (bit 0), right (bit 1)]`.
    pub children: Option<[usize; 2]>,
    pub symbol: Option<u32>,
}

/// Rooted binary code tree; node 0 is the root.
#[derive(Debug, Clone)]
pub struct CodeTree {
    nodes: Vec<TreeNode>,
}

impl CodeTree {
    pub const ROOT: usize = 0;

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    /// Node reached by following `path` from the root.
    pub fn find(&self, path: &[bool]) -> Option<usize> {
        let mut v = Self::ROOT;
        for &b in path {
            v = self.nodes[v].children?[b as usize];
        }
        Some(v)
    }

    pub fn leaves_below(&self, id: usize) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(v) = stack.pop() {
            match (&self.nodes[v].children, self.nodes[v].symbol) {
                (Some([l, r]), _) => {
                    stack.push(*r);
                    stack.push(*l);
                }
                (None, Some(s)) => out.push(s),
                (None, None) => {}
            }
        }
        out
    }
}

/// `Pr_π[E_v]`: implied mass of the leaves below `node`.
pub fn node_traversal_probability(code: &HuffmanCode, tree: &CodeTree, node: usize) -> Rational {
    let pi = code.implied_exact();
    tree.leaves_below(node)
        .into_iter()
        .fold(Rational::zero(), |acc, s| acc + pi.prob(s as usize).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{from_str01, to_str01};
    use crate::dist::{cross_entropy, entropy};
    use proptest::prelude::*;

    fn code_of(p: &[f64]) -> HuffmanCode {
        HuffmanCode::build(&SymbolDistribution::new(p.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn build_examples() {
        let c = code_of(&[0.5, 0.25, 0.25]);
        assert_eq!(c.lengths(), &[1, 2, 2]);
        assert_eq!(c.implied().probs(), &[0.5, 0.25, 0.25]);

        let c = HuffmanCode::build(&SymbolDistribution::uniform(3).unwrap()).unwrap();
        let mut l = c.lengths().to_vec();
        l.sort();
        assert_eq!(l, vec![1, 2, 2]);
        // merge order: symbols 0 and 1 merge first, leaving symbol 2 alone
        assert_eq!(c.lengths(), &[2, 2, 1]);

        let c = HuffmanCode::build(&SymbolDistribution::uniform(4).unwrap()).unwrap();
        assert_eq!(c.lengths(), &[2, 2, 2, 2]);
        assert_eq!((c.max_len(), c.min_len()), (2, 2));

        let c = code_of(&[0.3, 0.7]);
        assert_eq!((c.max_len(), c.min_len()), (1, 1));
        assert!(HuffmanCode::from_lengths(&[1]).is_err());
    }

    #[test]
    fn canonical_codewords() {
        let c = HuffmanCode::from_lengths(&[1, 2, 2]).unwrap();
        assert_eq!(to_str01(&c.encode_symbol(0).unwrap()), "0");
        assert_eq!(to_str01(&c.encode_symbol(1).unwrap()), "10");
        assert_eq!(to_str01(&c.encode_symbol(2).unwrap()), "11");
        assert!(HuffmanCode::from_lengths(&[1, 1, 2]).is_err());
        assert!(HuffmanCode::from_lengths(&[2, 2, 2]).is_err());
        assert!(HuffmanCode::from_lengths(&[0, 1]).is_err());
    }

    #[test]
    fn encode_examples() {
        let c = HuffmanCode::from_lengths(&[1, 2, 2]).unwrap();
        assert_eq!(to_str01(&c.encode_stream(&[0, 1, 2]).unwrap()), "01011");
        assert!(c.encode_stream(&[]).unwrap().is_empty());
        assert!(matches!(
            c.encode_stream(&[3]),
            Err(Error::UnknownSymbol { symbol: 3, size: 3 })
        ));
        let syms = [2u32, 0, 0, 1, 2, 1];
        let expected: usize = syms.iter().map(|&s| c.len_of(s as usize) as usize).sum();
        assert_eq!(c.encode_stream(&syms).unwrap().len(), expected);
    }

    #[test]
    fn decode_examples() {
        let c = HuffmanCode::from_lengths(&[1, 2, 2]).unwrap();
        let (syms, used) = c.decode_stream(&from_str01("01011"), 3).unwrap();
        assert_eq!((syms, used), (vec![0, 1, 2], 5));
        let (syms, used) = c.decode_stream(&from_str01("010111"), 3).unwrap();
        assert_eq!((syms, used), (vec![0, 1, 2], 5));
        assert!(matches!(
            c.decode_stream(&from_str01("0101"), 3),
            Err(Error::Truncated { decoded: 2, consumed: 4 })
        ));
    }

    #[test]
    fn node_probability_examples() {
        let c = HuffmanCode::from_lengths(&[1, 2, 2]).unwrap();
        let t = c.tree();
        assert_eq!(node_traversal_probability(&c, &t, CodeTree::ROOT), Rational::one());
        let leaf = t.find(&[true, false]).unwrap();
        assert_eq!(t.node(leaf).symbol, Some(1));
        assert_eq!(node_traversal_probability(&c, &t, leaf), Rational::dyadic(2));
    }

    #[test]
    fn text_round_trip() {
        let c = code_of(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(HuffmanCode::parse_text(&c.to_text()).unwrap(), c);
        assert!(HuffmanCode::parse_text("huff v1 2\n0 1\n1 2\n").is_err());
    }

    #[test]
    fn shannon_lengths_exact_powers() {
        let d = SymbolDistribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert_eq!(shannon_lengths(&d), vec![1, 2, 2]);
        let d = SymbolDistribution::uniform(3).unwrap();
        assert_eq!(shannon_lengths(&d), vec![2, 2, 2]);
    }

    fn arb_sigma() -> impl Strategy<Value = SymbolDistribution> {
        prop::collection::vec(1u64..10_000, 2..80)
            .prop_map(|w| SymbolDistribution::from_weights(&w).unwrap())
    }

    proptest! {
        #[test]
        fn structural_invariants(sigma in arb_sigma()) {
            let c = HuffmanCode::build(&sigma).unwrap();
            // Kraft equality, exactly
            let kraft = c.implied_exact().probs().iter().fold(Rational::zero(), |a, p| a + p.clone());
            prop_assert_eq!(kraft, Rational::one());
            // prefix-free via the tree: every symbol sits on its own leaf
            let t = c.tree();
            let mut leaves = t.leaves_below(CodeTree::ROOT);
            leaves.sort();
            prop_assert_eq!(leaves, (0..sigma.alphabet_size() as u32).collect::<Vec<_>>());
            for node in t.nodes() {
                prop_assert!(node.children.is_some() != node.symbol.is_some());
            }
            prop_assert!(c.min_len() >= 1 && c.max_len() >= c.min_len());
            // deterministic
            prop_assert_eq!(&HuffmanCode::build(&sigma).unwrap(), &c);
        }

        #[test]
        fn node_probability_at_every_node(sigma in arb_sigma()) {
            let c = HuffmanCode::build(&sigma).unwrap();
            let t = c.tree();
            for (id, node) in t.nodes().iter().enumerate() {
                let p = node_traversal_probability(&c, &t, id);
                prop_assert_eq!(&p, &Rational::dyadic(node.depth));
                if let Some([l, r]) = node.children {
                    let half = p / Rational::from_ratio(2, 1);
                    prop_assert_eq!(node_traversal_probability(&c, &t, l), half.clone());
                    prop_assert_eq!(node_traversal_probability(&c, &t, r), half);
                }
            }
        }

        #[test]
        fn optimality_and_bits_per_symbol(sigma in arb_sigma()) {
            let c = HuffmanCode::build(&sigma).unwrap();
            let huff = c.expected_length(&sigma);
            let shannon: f64 = shannon_lengths(&sigma).iter().zip(sigma.probs())
                .map(|(&l, p)| l as f64 * p).sum();
            let h = entropy(&sigma);
            prop_assert!(h <= huff + 1e-12);
            prop_assert!(huff <= shannon + 1e-12);
            prop_assert!(huff < h + 1.0);
            prop_assert!((cross_entropy(&sigma, &c.implied()).unwrap() - huff).abs() < 1e-10);
        }

        #[test]
        fn round_trip(sigma in arb_sigma(), seed in any::<u64>()) {
            let c = HuffmanCode::build(&sigma).unwrap();
            let n = sigma.alphabet_size() as u64;
            let mut x = seed | 1;
            let syms: Vec<u32> = (0..2000).map(|_| {
                x ^= x << 13; x ^= x >> 7; x ^= x << 17;
                (x % n) as u32
            }).collect();
            let bits = c.encode_stream(&syms).unwrap();
            let (back, used) = c.decode_stream(&bits, syms.len()).unwrap();
            prop_assert_eq!(back, syms);
            prop_assert_eq!(used, bits.len());
        }
    }

    #[test]
    fn round_trip_large() {
        let sigma = SymbolDistribution::from_weights(&(1..=300).collect::<Vec<u64>>()).unwrap();
        let c = HuffmanCode::build(&sigma).unwrap();
        let mut x = 0x1234_5678_9abc_def1u64;
        let syms: Vec<u32> = (0..100_000)
            .map(|_| {
                x ^= x << 13;
                x ^= x >> 7;
                x ^= x << 17;
                (x % 300) as u32
            })
            .collect();
        let bits = c.encode_stream(&syms).unwrap();
        assert_eq!(c.decode_stream(&bits, syms.len()).unwrap().0, syms);
    }

    #[test]
    fn exact_and_float_builds_agree_without_ties() {
        let w: Vec<u64> = (0..50).map(|i| 1000 + i * i * 7 + i).collect();
        let f = HuffmanCode::build(&SymbolDistribution::from_weights(&w).unwrap()).unwrap();
        let e = HuffmanCode::build(&ExactDistribution::from_weights(&w).unwrap()).unwrap();
        assert_eq!(f, e);
    }
}
