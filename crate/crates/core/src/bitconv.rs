//! Arithmetic equivalents of XOR-shared bits.
//!
//! For shares b_1..b_q of a bit b, the arithmetic value of their XOR is
//!
//! ```text
//! b̂ = Σ_{k=1..q} (−2)^{k−1} · e_k(b_1, …, b_q)
//! ```
//!
//! where e_k is the k-th elementary symmetric polynomial (the sum over all
//! size-k subsets of the product of their shares). The k = 1 block is the sum
//! term, the k = q block the product term, and everything in between the middle
//! term. The approximate conversion replaces the middle term by its expectation
//! over uniformly random sharings, which removes all cross-products except the
//! full product and keeps E[b̃] = b. The unbiasedness assumes honestly sampled
//! shares; adversarially chosen masks are not covered.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::{BooleanShares, FxpValue, RingElement, FRAC_BITS};

/// Rational number used by the oracle mode.
pub type Rational = Ratio<i64>;

/// Split of b̂ into sum, middle and product terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermDecomposition<T> {
    pub term_s: T,
    pub term_m: T,
    pub term_p: T,
    pub q: usize,
}

impl<T: Copy + std::ops::Add<Output = T>> TermDecomposition<T> {
    /// term_s + term_m + term_p.
    pub fn total(&self) -> T {
        self.term_s + self.term_m + self.term_p
    }
}

fn check_q(q: usize, min: usize) -> Result<()> {
    if q < min {
        Err(Error::Parameter(format!(
            "share count {q} is below the minimum {min}"
        )))
    } else {
        Ok(())
    }
}

/// Elementary symmetric polynomials e_0..e_q of the shares, evaluated in the ring.
fn elementary_symmetric_ring(shares: &[u8]) -> Vec<RingElement> {
    let mut e = vec![RingElement::ZERO; shares.len() + 1];
    e[0] = RingElement::ONE;
    for (i, &s) in shares.iter().enumerate() {
        let s = RingElement::from_bit(s);
        for k in (1..=i + 1).rev() {
            e[k] = e[k] + s * e[k - 1];
        }
    }
    e
}

/// Elementary symmetric polynomials evaluated over the integers.
fn elementary_symmetric_int(shares: &[u8]) -> Vec<i64> {
    let mut e = vec![0i64; shares.len() + 1];
    e[0] = 1;
    for (i, &s) in shares.iter().enumerate() {
        let s = (s & 1) as i64;
        for k in (1..=i + 1).rev() {
            e[k] += s * e[k - 1];
        }
    }
    e
}

fn neg_two_pow(k: usize) -> i64 {
    (-2i64).pow(k as u32)
}

/// Ring-valued term decomposition.
pub fn term_decomposition(shares: &BooleanShares) -> Result<TermDecomposition<RingElement>> {
    let q = shares.len();
    check_q(q, 1)?;
    let e = elementary_symmetric_ring(&shares.shares);
    let coeff = |k: usize| RingElement::from_i64(neg_two_pow(k - 1));
    if q == 1 {
        return Ok(TermDecomposition {
            term_s: e[1],
            term_m: RingElement::ZERO,
            term_p: RingElement::ZERO,
            q,
        });
    }
    let term_m = (2..q).map(|k| coeff(k) * e[k]).sum();
    Ok(TermDecomposition {
        term_s: e[1],
        term_m,
        term_p: coeff(q) * e[q],
        q,
    })
}

/// Rational term decomposition used by the oracles; free of ring wraparound.
pub fn term_decomposition_rational(shares: &BooleanShares) -> Result<TermDecomposition<Rational>> {
    let q = shares.len();
    check_q(q, 1)?;
    let e = elementary_symmetric_int(&shares.shares);
    let r = |v: i64| Rational::from_integer(v);
    if q == 1 {
        return Ok(TermDecomposition {
            term_s: r(e[1]),
            term_m: r(0),
            term_p: r(0),
            q,
        });
    }
    let term_m = (2..q).map(|k| neg_two_pow(k - 1) * e[k]).sum::<i64>();
    Ok(TermDecomposition {
        term_s: r(e[1]),
        term_m: r(term_m),
        term_p: r(neg_two_pow(q - 1) * e[q]),
        q,
    })
}

/// Exact arithmetic equivalent of XOR-shared bits, computed in Z_2^ℓ.
pub fn exact_bit_to_arith(shares: &BooleanShares) -> Result<RingElement> {
    Ok(term_decomposition(shares)?.total())
}

/// Replacement constant for the middle term: (q−1) mod 2 − q/2.
pub fn middle_constant(q: usize) -> Rational {
    Rational::new(((q - 1) % 2) as i64 * 2 - q as i64, 2)
}

/// Approximate conversion in oracle mode. For q = 1 there is no middle term
/// and the exact value is returned.
pub fn approx_bit_to_arith_rational(shares: &BooleanShares) -> Result<Rational> {
    let d = term_decomposition_rational(shares)?;
    if d.q == 1 {
        return Ok(d.total());
    }
    Ok(d.term_s + middle_constant(d.q) + d.term_p)
}

/// Approximate conversion in the ring, returned in fixed point (scaled by 2^f)
/// because q/2 is fractional for odd q.
pub fn approx_bit_to_arith(shares: &BooleanShares) -> Result<FxpValue> {
    Ok(FxpValue::from_raw(approx_bit_to_arith_scaled(
        shares, FRAC_BITS,
    )?))
}

/// Approximate conversion scaled by 2^k. For odd q the constant is a half
/// integer, so k ≥ 1 is required.
pub fn approx_bit_to_arith_scaled(shares: &BooleanShares, k: u32) -> Result<RingElement> {
    let d = term_decomposition(shares)?;
    if d.q == 1 {
        return Ok(d.total().shift_left(k));
    }
    let c = middle_constant(d.q) * Rational::from_integer(1i64 << k);
    if !c.is_integer() {
        return Err(Error::Parameter(format!(
            "scale 2^{k} cannot represent the constant for q = {}",
            d.q
        )));
    }
    Ok((d.term_s + d.term_p).shift_left(k) + RingElement::from_i64(c.to_integer()))
}

/// Smallest k such that the approximate conversion is integral at scale 2^k.
pub fn approx_scale_bits(q: usize) -> u32 {
    if q % 2 == 1 && q > 1 {
        1
    } else {
        0
    }
}

/// Value of the approximate conversion as a real number, given the number of
/// one-shares `w` among `q` shares. Used by fast plaintext simulations.
pub fn approx_value_from_weight(w: usize, q: usize) -> f64 {
    if q == 1 {
        return w as f64;
    }
    let product = if w == q {
        neg_two_pow(q - 1) as f64
    } else {
        0.0
    };
    let c = ((q - 1) % 2) as f64 - q as f64 / 2.0;
    w as f64 + c + product
}

/// Closed-form expectations of the three terms over uniformly random sharings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExpectedTerms {
    pub q: usize,
    /// E[term_s | b] = q/2, independent of b.
    pub sum: Rational,
    /// E[term_m | b] = (q−1) mod 2 − q/2, independent of b.
    pub middle: Rational,
}

impl ExpectedTerms {
    /// E[term_p | b] = b − (q−1) mod 2.
    pub fn product(&self, b: u8) -> Rational {
        Rational::from_integer(b as i64 - ((self.q - 1) % 2) as i64)
    }
}

/// Closed forms of the term expectations. Defined for q ≥ 2, where the sum and
/// product terms are distinct blocks.
pub fn expected_terms(q: usize) -> Result<ExpectedTerms> {
    check_q(q, 2)?;
    Ok(ExpectedTerms {
        q,
        sum: Rational::new(q as i64, 2),
        middle: middle_constant(q),
    })
}

/// All 2^(q−1) XOR sharings of bit `b` with `q` shares, in a fixed order.
pub fn all_sharings(b: u8, q: usize) -> impl Iterator<Item = BooleanShares> {
    (0..1u64 << (q - 1)).map(move |pattern| {
        let mut shares: Vec<u8> = (0..q - 1).map(|i| ((pattern >> i) & 1) as u8).collect();
        let parity = shares.iter().fold(0, |a, s| a ^ s);
        shares.push((b & 1) ^ parity);
        BooleanShares { shares }
    })
}

/// Mean term decomposition over all sharings of `b`, in exact rationals.
pub fn enumerate_expected_terms(q: usize, b: u8) -> Result<TermDecomposition<Rational>> {
    check_q(q, 1)?;
    let zero = Rational::from_integer(0);
    let mut acc = TermDecomposition {
        term_s: zero,
        term_m: zero,
        term_p: zero,
        q,
    };
    let mut count = 0i64;
    for s in all_sharings(b, q) {
        let d = term_decomposition_rational(&s)?;
        acc.term_s += d.term_s;
        acc.term_m += d.term_m;
        acc.term_p += d.term_p;
        count += 1;
    }
    let n = Rational::from_integer(count);
    Ok(TermDecomposition {
        term_s: acc.term_s / n,
        term_m: acc.term_m / n,
        term_p: acc.term_p / n,
        q,
    })
}

/// Mean of the approximate conversion over all sharings of `b`.
pub fn enumerate_approx_mean(q: usize, b: u8) -> Result<Rational> {
    check_q(q, 1)?;
    let mut acc = Rational::from_integer(0);
    let mut count = 0i64;
    for s in all_sharings(b, q) {
        acc += approx_bit_to_arith_rational(&s)?;
        count += 1;
    }
    Ok(acc / Rational::from_integer(count))
}

/// Mean of term_s + term_m (the product term dropped) over all sharings of `b`.
/// It does not depend on `b`, which is why only the product term can carry the
/// bit and must be kept.
pub fn enumerate_without_product_mean(q: usize, b: u8) -> Result<Rational> {
    let d = enumerate_expected_terms(q, b)?;
    Ok(d.term_s + d.term_m)
}

fn binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Checks the binomial identities Σ p·C(n,p) = n·2^(n−1) and
/// Σ 2p·C(n,2p) = n·2^(n−2) by direct summation, for 2 ≤ n ≤ 30.
pub fn binomial_identity_check(n: u32) -> Result<bool> {
    if !(2..=30).contains(&n) {
        return Err(Error::Parameter(format!("n = {n} outside 2..=30")));
    }
    let full: u128 = (0..=n).map(|p| p as u128 * binomial(n, p)).sum();
    let even: u128 = (0..=n / 2)
        .map(|h| 2 * h as u128 * binomial(n, 2 * h))
        .sum();
    Ok(full == n as u128 * (1u128 << (n - 1)) && even == n as u128 * (1u128 << (n - 2)))
}

/// Operation whose cross-term count is reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossTermOp {
    BitToArith,
    BitInjection,
}

/// Exact or approximate conversion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConversionMode {
    Exact,
    Approx,
}

impl std::fmt::Display for ConversionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConversionMode::Exact => "exact",
            ConversionMode::Approx => "approx",
        })
    }
}

impl std::str::FromStr for ConversionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(ConversionMode::Exact),
            "approx" | "approximate" => Ok(ConversionMode::Approx),
            other => Err(Error::Parameter(format!("unknown conversion mode {other}"))),
        }
    }
}

/// Number of cross-products the servers must evaluate jointly.
pub fn cross_term_count(q: usize, op: CrossTermOp, mode: ConversionMode) -> Result<u64> {
    check_q(q, 2)?;
    let q = q as u64;
    let pow = 1u64 << q;
    Ok(match (op, mode) {
        (CrossTermOp::BitToArith, ConversionMode::Exact) => pow - q - 1,
        (CrossTermOp::BitToArith, ConversionMode::Approx) => 1,
        (CrossTermOp::BitInjection, ConversionMode::Exact) => pow + q * q - 2 * q - 1,
        (CrossTermOp::BitInjection, ConversionMode::Approx) => q * q - q + 1,
    })
}
