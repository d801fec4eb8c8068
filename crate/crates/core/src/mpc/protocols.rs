//! Building blocks: bit-to-arithmetic preprocessing, bit conversion, inner
//! products, bit sums and bit injection.

use std::collections::BTreeMap;

use super::{MaskedBits, MaskedVec, PartySet, Phase, SharedVec};
use crate::bitconv::{approx_scale_bits, middle_constant, ConversionMode};
use crate::error::{ensure_len, Error, Result};
use crate::ring::RingElement;

/// Largest server count for which the exact conversion enumerates all
/// subsets of servers.
pub const MAX_EXACT_SERVERS: usize = 16;

/// Arithmetic shares Λ of the XOR of every bit's Boolean mask shares, scaled
/// by 2^`scale_bits`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitAPre {
    pub lambda: SharedVec,
    pub scale_bits: u32,
    pub mode: ConversionMode,
}

/// Scale exponent k of converted bits for `mode` and `q` servers.
pub fn conversion_scale_bits(mode: ConversionMode, q: usize) -> u32 {
    match mode {
        ConversionMode::Exact => 0,
        ConversionMode::Approx => approx_scale_bits(q),
    }
}

/// OT instances per converted bit.
///
/// Products of share bits are built incrementally: a product over a server
/// set S is the product over S without its last member t, held additively by
/// |S|−1 servers, times t's bit, costing one OT per holder. Exact conversion
/// needs every subset; the approximation only the chain {1,2}, {1,2,3}, ….
pub fn ots_per_bit(q: usize, mode: ConversionMode) -> u64 {
    let q = q as u64;
    match mode {
        ConversionMode::Exact => (2..=q).map(|d| binom(q, d) * (d - 1)).sum(),
        ConversionMode::Approx => q * q.saturating_sub(1) / 2,
    }
}

fn binom(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn neg_two_pow(e: u32) -> RingElement {
    let v = RingElement::ONE.shift_left(e);
    if e % 2 == 1 {
        -v
    } else {
        v
    }
}

/// Converts the Boolean mask shares `mask[j][i]` (server j, bit i) into
/// arithmetic shares of their XOR using ideal OTs among the servers.
pub fn pi_bita_pre(
    parties: &mut PartySet,
    mask: &[Vec<u8>],
    mode: ConversionMode,
) -> Result<BitAPre> {
    let q = parties.q();
    ensure_len(q, mask.len())?;
    let len = mask[0].len();
    for m in mask {
        ensure_len(len, m.len())?;
    }
    if mode == ConversionMode::Exact && q > MAX_EXACT_SERVERS {
        return Err(Error::Parameter(format!(
            "exact conversion supports at most {MAX_EXACT_SERVERS} servers"
        )));
    }
    parties.set_phase(Phase::Preprocessing);
    let k = conversion_scale_bits(mode, q);
    let tag = parties.fresh_tag();
    let mut rngs: Vec<_> = (0..q).map(|j| parties.party_rng(j, tag)).collect();

    let subsets: Vec<u32> = match mode {
        ConversionMode::Exact => (1u32..(1 << q)).filter(|s| s.count_ones() >= 2).collect(),
        ConversionMode::Approx => (2..=q).map(|d| (1u32 << d) - 1).collect(),
    };
    // products[S][j]: server j's share of Π_{i∈S} b_i (zero unless j ∈ S).
    let mut products: BTreeMap<u32, Vec<Vec<RingElement>>> = BTreeMap::new();
    for j in 0..q {
        let mut y = vec![vec![RingElement::ZERO; len]; q];
        y[j] = mask[j].iter().map(|b| RingElement::from_bit(*b)).collect();
        products.insert(1 << j, y);
    }
    for &s in &subsets {
        let t = 31 - s.leading_zeros() as usize;
        let prev = s & !(1 << t);
        let mut y = vec![vec![RingElement::ZERO; len]; q];
        for h in (0..q).filter(|h| prev & (1 << h) != 0) {
            let a = &products[&prev][h];
            let r: Vec<RingElement> = (0..len)
                .map(|_| RingElement::random(&mut rngs[h]))
                .collect();
            let m0: Vec<RingElement> = r.iter().map(|v| -*v).collect();
            let m1: Vec<RingElement> = a.iter().zip(&r).map(|(x, v)| *x - *v).collect();
            let got = parties
                .dealer
                .ot(&mut parties.ledger, h, t, &m0, &m1, &mask[t])?;
            y[h] = r;
            y[t].iter_mut().zip(got).for_each(|(acc, g)| *acc += g);
        }
        products.insert(s, y);
    }

    let mut lambda = SharedVec::zeros(q, len);
    for (&s, y) in &products {
        let size = s.count_ones();
        let coef = match mode {
            ConversionMode::Exact => neg_two_pow(size - 1),
            ConversionMode::Approx if size == 1 || size as usize == q => {
                neg_two_pow(size - 1).shift_left(k)
            }
            ConversionMode::Approx => continue,
        };
        for (acc, share) in lambda.shares.iter_mut().zip(y) {
            acc.iter_mut().zip(share).for_each(|(a, v)| *a += coef * *v);
        }
    }
    if mode == ConversionMode::Approx {
        let c = middle_constant(q) * crate::bitconv::Rational::from_integer(1i64 << k);
        let c = RingElement::from_i64(c.to_integer());
        lambda.shares[0].iter_mut().for_each(|a| *a += c);
    }
    Ok(BitAPre {
        lambda,
        scale_bits: k,
        mode,
    })
}

/// Local arithmetic shares of b̂ = 2^k·m_b + (1 − 2m_b)·Λ_b.
pub fn local_bita(bits: &MaskedBits, pre: &BitAPre) -> Result<SharedVec> {
    ensure_len(pre.lambda.len(), bits.len())?;
    let mut out = pre.lambda.clone();
    for (i, &m) in bits.masked.iter().enumerate() {
        if m & 1 == 1 {
            out.shares.iter_mut().for_each(|s| s[i] = -s[i]);
            out.shares[0][i] += RingElement::ONE.shift_left(pre.scale_bits);
        }
    }
    Ok(out)
}

fn sub_shares(a: &SharedVec, b: &SharedVec) -> SharedVec {
    SharedVec {
        shares: a
            .shares
            .iter()
            .zip(&b.shares)
            .map(|(x, y)| x.iter().zip(y).map(|(u, v)| *u - *v).collect())
            .collect(),
    }
}

/// Column sums of shares of a row-major `rows × cols` matrix.
pub(crate) fn column_sums(v: &SharedVec, rows: usize, cols: usize) -> SharedVec {
    SharedVec {
        shares: v
            .shares
            .iter()
            .map(|s| {
                (0..cols)
                    .map(|j| (0..rows).map(|i| s[i * cols + j]).sum())
                    .collect()
            })
            .collect(),
    }
}

/// Converts masked bits into masked arithmetic values scaled by 2^k, with
/// one opening per bit.
pub fn pi_bita(parties: &mut PartySet, bits: &MaskedBits, pre: &BitAPre) -> Result<MaskedVec> {
    let r = parties.random_shares(bits.len());
    let b = local_bita(bits, pre)?;
    parties.set_phase(Phase::Online);
    let masked = parties.open(&sub_shares(&b, &r))?;
    Ok(MaskedVec { masked, mask: r })
}

/// Sum of a column of masked bits (scaled by 2^k) with a single opening.
pub fn pi_bita_sum(parties: &mut PartySet, bits: &MaskedBits, pre: &BitAPre) -> Result<MaskedVec> {
    let r = parties.random_shares(1);
    let b = local_bita(bits, pre)?;
    let total = column_sums(&b, bits.len(), 1);
    parties.set_phase(Phase::Online);
    let masked = parties.open(&sub_shares(&total, &r))?;
    Ok(MaskedVec { masked, mask: r })
}

/// Shares of Σ x_i·y_i given the preprocessed mask products.
pub(crate) fn dotp_local(x: &MaskedVec, y: &MaskedVec, prods: &SharedVec) -> SharedVec {
    let q = x.mask.parties();
    let mut out = SharedVec::zeros(q, 1);
    for i in 0..x.len() {
        out.shares[0][0] += x.masked[i] * y.masked[i];
        for j in 0..q {
            out.shares[j][0] += x.masked[i] * y.mask.shares[j][i]
                + y.masked[i] * x.mask.shares[j][i]
                + prods.shares[j][i];
        }
    }
    out
}

/// Shares of Σ b_i·s_i for masked bits b (converted through `pre`) and masked
/// values s, given shares of the products Λ_{b_i}·λ_{s_i}.
pub(crate) fn bit_inj_local(
    bits: &MaskedBits,
    pre: &BitAPre,
    vals: &MaskedVec,
    prods: &SharedVec,
) -> SharedVec {
    let q = vals.mask.parties();
    let k = pre.scale_bits;
    let mut out = SharedVec::zeros(q, 1);
    for i in 0..bits.len() {
        let mb = bits.masked[i] & 1;
        let sign = if mb == 1 {
            -RingElement::ONE
        } else {
            RingElement::ONE
        };
        let mb = RingElement::from_bit(mb).shift_left(k);
        out.shares[0][0] += mb * vals.masked[i];
        for j in 0..q {
            out.shares[j][0] += mb * vals.mask.shares[j][i]
                + sign * (pre.lambda.shares[j][i] * vals.masked[i] + prods.shares[j][i]);
        }
    }
    out
}

/// Opens z − r for a truncation pair (or a fresh mask when `shift` is zero)
/// and returns ⟨z / 2^shift⟩.
fn open_truncated(parties: &mut PartySet, z: &SharedVec, shift: u32) -> Result<MaskedVec> {
    let q = parties.q();
    parties.set_phase(Phase::Preprocessing);
    let (r, r_shifted) = if shift == 0 {
        let r = parties.random_shares(z.len());
        (r.clone(), r)
    } else {
        let t = parties
            .dealer
            .truncation_pairs(&mut parties.ledger, q, z.len(), shift);
        (t.r, t.r_shifted)
    };
    parties.set_phase(Phase::Online);
    let c = parties.open(&sub_shares(z, &r))?;
    Ok(MaskedVec {
        masked: c.iter().map(|v| v.shr_signed(shift)).collect(),
        mask: r_shifted,
    })
}

/// Inner product ⟨Σ x_i·y_i / 2^shift⟩ with one opening for any length.
///
/// Truncation is exact up to one unit in the last place unless the opened
/// difference wraps around the ring, which happens with probability about
/// |z| / 2^31.
pub fn pi_dotp(
    parties: &mut PartySet,
    x: &MaskedVec,
    y: &MaskedVec,
    shift: u32,
) -> Result<MaskedVec> {
    if x.len() != y.len() {
        return Err(Error::Parameter(format!(
            "inner product of lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    parties.set_phase(Phase::Preprocessing);
    let prods = parties
        .dealer
        .mult_pre(&mut parties.ledger, &x.mask, &y.mask)?;
    let z = dotp_local(x, y, &prods);
    open_truncated(parties, &z, shift)
}

/// Bit injection ⟨Σ b_i·s_i / 2^shift⟩ with one opening for any length. The
/// product carries the conversion scale 2^k of `pre`, which `shift` may
/// remove.
pub fn pi_bit_inj(
    parties: &mut PartySet,
    bits: &MaskedBits,
    vals: &MaskedVec,
    pre: &BitAPre,
    shift: u32,
) -> Result<MaskedVec> {
    if bits.len() != vals.len() {
        return Err(Error::Parameter(format!(
            "bit injection of lengths {} and {}",
            bits.len(),
            vals.len()
        )));
    }
    ensure_len(pre.lambda.len(), bits.len())?;
    parties.set_phase(Phase::Preprocessing);
    let prods = parties
        .dealer
        .mult_pre(&mut parties.ledger, &pre.lambda, &vals.mask)?;
    let z = bit_inj_local(bits, pre, vals, &prods);
    open_truncated(parties, &z, shift)
}
