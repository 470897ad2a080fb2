use encore::analyze::next_bit_test;
use encore::bits::Bits;
use encore::transform::{build_greedy, build_proportional};
use encore::{EntropySource, ExactDistribution, HuffmanCode, Rational, SymbolDistribution, TransformMatrix};
use num_traits::{One, Zero};
use proptest::prelude::*;

fn arb_weights() -> impl Strategy<Value = Vec<u64>> {
    (2usize..40).prop_flat_map(|n| prop::collection::vec(1u64..1000, n))
}

fn ratio(w: u64, t: u64) -> Rational {
    Rational::new(w.into(), t.into())
}

/// Every defining property, checked entry by entry without the library's
/// own validator.
fn check_exact(b: &TransformMatrix<Rational>, sigma: &[Rational], pi: &[Rational]) -> Result<(), String> {
    let n = sigma.len();
    let mut column = vec![Rational::zero(); n];
    for i in 0..n {
        let mut sum = Rational::zero();
        for j in 0..n {
            let e = b.entry(i, j);
            if e < Rational::zero() {
                return Err(format!("negative entry ({i},{j})"));
            }
            let over_i = sigma[i] >= pi[i];
            let over_j = sigma[j] >= pi[j];
            if !over_i && i != j && !e.is_zero() {
                return Err(format!("underrepresented row {i} moves mass to {j}"));
            }
            if over_i && over_j && i != j && !e.is_zero() {
                return Err(format!("overrepresented {i} moves mass to overrepresented {j}"));
            }
            column[j] += &sigma[i] * &e;
            sum += e;
        }
        if !sum.is_one() {
            return Err(format!("row {i} sums to {sum}"));
        }
    }
    if column != pi {
        return Err("marginal differs from the implied distribution".into());
    }
    Ok(())
}

fn max_column_sum(b: &TransformMatrix<Rational>) -> Rational {
    let n = b.alphabet_size();
    (0..n)
        .map(|j| (0..n).fold(Rational::zero(), |a, i| a + b.entry(i, j)))
        .max()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn exact_builders_satisfy_every_property(weights in arb_weights()) {
        let total: u64 = weights.iter().sum();
        let sigma: Vec<Rational> = weights.iter().map(|&w| ratio(w, total)).collect();
        let dist = ExactDistribution::new(sigma.clone()).unwrap();
        let pi = HuffmanCode::build(&dist).unwrap().implied_exact();
        let n = weights.len();
        let mut bound = Rational::from_integer(1.into());
        for i in 0..n {
            if sigma[i] >= pi.probs()[i] {
                bound += Rational::one() - &pi.probs()[i] / &sigma[i];
            }
        }
        prop_assert!(bound <= Rational::from_integer(n.into()));
        for b in [build_proportional(&dist, &pi).unwrap(), build_greedy(&dist, &pi).unwrap()] {
            check_exact(&b, &sigma, pi.probs()).map_err(TestCaseError::fail)?;
            let norm = max_column_sum(&b);
            prop_assert_eq!(&norm, b.one_norm());
            prop_assert!(norm <= bound);
        }
    }

    #[test]
    fn float_builders_hold_within_tolerance(weights in arb_weights()) {
        let sigma = SymbolDistribution::from_weights(&weights).unwrap();
        let pi = HuffmanCode::build(&sigma).unwrap().implied();
        let n = weights.len();
        for b in [build_proportional(&sigma, &pi).unwrap(), build_greedy(&sigma, &pi).unwrap()] {
            for i in 0..n {
                let row: f64 = (0..n).map(|j| b.entry(i, j)).sum();
                prop_assert!((row - 1.0).abs() < 1e-10);
            }
            for j in 0..n {
                let col: f64 = (0..n).map(|i| sigma.probs()[i] * b.entry(i, j)).sum();
                prop_assert!((col - pi.probs()[j]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn dyadic_code_bits_are_unpredictable() {
    let sigma = SymbolDistribution::new(vec![0.25, 0.25, 0.125, 0.125, 0.0625, 0.0625, 0.0625, 0.0625]).unwrap();
    let code = HuffmanCode::build(&sigma).unwrap();
    let mut src = EntropySource::test(31);
    let mut bits = Bits::new();
    let cdf: Vec<f64> = sigma
        .probs()
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    while bits.len() < 2_000_000 {
        let u = src.next_unit();
        let s = cdf.iter().position(|&c| u < c).unwrap_or(7) as u32;
        code.encode_into(&mut bits, &[s]).unwrap();
    }
    let report = next_bit_test(&bits, 8).unwrap();
    assert!(report.pass, "{}", report.summary());
    assert!(report.warnings.is_empty());
}
