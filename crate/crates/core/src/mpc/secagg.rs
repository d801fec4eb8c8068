//! Secure aggregation of 1-bit quantized client updates.
//!
//! Client i uploads bits b_i1 … b_im and its scales U_i (low) and V_i (high)
//! as fixed-point values. The target is the mean
//! Y_j = (1/n) Σ_i (U_i + b_ij·(V_i − U_i)).
//!
//! All four pipelines leave the division by n (and by the conversion scale
//! 2^k) to S1 after the final result is revealed to it, so no secure division
//! or truncation is needed. Intermediate values must fit the signed 32-bit
//! ring: with scales bounded by |s| the revealed sums are at most about
//! n·2^(k+16)·|s| (Approaches I and II) and n²·2^(k+16)·|s| (Approach III).

use super::protocols::{
    bit_inj_local, column_sums, conversion_scale_bits, local_bita, pi_bita_pre,
};
use super::{MaskedBits, MaskedVec, PartySet, Phase, SharedVec};
use crate::bitconv::ConversionMode;
use crate::error::{ensure_len, Error, Result};
use crate::ring::{client_share_bits, client_share_input, fxp_encode, RingElement, FRAC_BITS};

/// Shared client inputs for `n` clients with `m` coordinates each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecAggInput {
    pub n: usize,
    pub m: usize,
    /// Row-major n × m masked bits.
    pub bits: MaskedBits,
    /// Low scales U_i.
    pub lo: MaskedVec,
    /// High scales V_i.
    pub hi: MaskedVec,
}

fn check_matrix(bits: &[Vec<u8>]) -> Result<usize> {
    let m = bits
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Parameter("no clients".into()))?;
    if m == 0 {
        return Err(Error::Parameter("clients hold no coordinates".into()));
    }
    for row in bits {
        ensure_len(m, row.len())?;
    }
    Ok(m)
}

/// Every client shares its bit row with the servers (1 bit per coordinate).
pub fn share_bits(parties: &mut PartySet, bits: &[Vec<u8>]) -> Result<MaskedBits> {
    check_matrix(bits)?;
    let q = parties.q();
    let mut out = MaskedBits {
        masked: Vec::new(),
        mask: vec![Vec::new(); q],
    };
    for (c, row) in bits.iter().enumerate() {
        let tag = parties.fresh_tag();
        let shared = *parties.shared();
        let input = client_share_bits(row, c, q, &shared, tag, &mut parties.ledger)?;
        out.masked.extend(input.masked);
        for (dst, src) in out.mask.iter_mut().zip(input.mask) {
            dst.extend(src);
        }
    }
    Ok(out)
}

/// Every client shares its bits and its two scales with the servers.
pub fn share_inputs(
    parties: &mut PartySet,
    bits: &[Vec<u8>],
    lo: &[f64],
    hi: &[f64],
) -> Result<SecAggInput> {
    let m = check_matrix(bits)?;
    let n = bits.len();
    ensure_len(n, lo.len())?;
    ensure_len(n, hi.len())?;
    let shared_bits = share_bits(parties, bits)?;
    let q = parties.q();
    let mut lo_v = MaskedVec {
        masked: Vec::new(),
        mask: SharedVec {
            shares: vec![Vec::new(); q],
        },
    };
    let mut hi_v = lo_v.clone();
    for c in 0..n {
        let vals = [fxp_encode(lo[c])?.raw, fxp_encode(hi[c])?.raw];
        let tag = parties.fresh_tag();
        let shared = *parties.shared();
        let input = client_share_input(&vals, c, q, &shared, tag, &mut parties.ledger)?;
        lo_v.masked.push(input.masked[0]);
        hi_v.masked.push(input.masked[1]);
        for j in 0..q {
            lo_v.mask.shares[j].push(input.mask[j][0]);
            hi_v.mask.shares[j].push(input.mask[j][1]);
        }
    }
    Ok(SecAggInput {
        n,
        m,
        bits: shared_bits,
        lo: lo_v,
        hi: hi_v,
    })
}

/// Repeats the mask shares of a per-client value for each of its m coordinates.
fn expand_rows(v: &SharedVec, m: usize) -> SharedVec {
    SharedVec {
        shares: v
            .shares
            .iter()
            .map(|s| s.iter().flat_map(|x| std::iter::repeat_n(*x, m)).collect())
            .collect(),
    }
}

/// Adds c·Σ_i U_i (a public multiple of the masked low scales) to every element.
fn add_scaled_sum(out: &mut SharedVec, lo: &MaskedVec, c: RingElement) {
    let total = lo.sum();
    for (j, share) in out.shares.iter_mut().enumerate() {
        let mut add = c * total.mask.shares[j][0];
        if j == 0 {
            add += c * total.masked[0];
        }
        share.iter_mut().for_each(|v| *v += add);
    }
}

fn decode(values: &[RingElement], denom: f64) -> Vec<f64> {
    values
        .iter()
        .map(|v| v.to_i32() as f64 / (1u64 << FRAC_BITS) as f64 / denom)
        .collect()
}

fn check_input(parties: &PartySet, input: &SecAggInput) -> Result<()> {
    ensure_len(parties.q(), input.bits.mask.len())?;
    ensure_len(input.n * input.m, input.bits.len())?;
    ensure_len(input.n, input.lo.len())?;
    ensure_len(input.n, input.hi.len())
}

/// Approach I: convert every bit, then one inner product per coordinate
/// between the converted bits and the scale differences.
pub fn secagg_approach1(
    parties: &mut PartySet,
    input: &SecAggInput,
    mode: ConversionMode,
) -> Result<Vec<f64>> {
    check_input(parties, input)?;
    let (n, m, q) = (input.n, input.m, parties.q());
    let k = conversion_scale_bits(mode, q);
    let pre = pi_bita_pre(parties, &input.bits.mask, mode)?;
    let s = input.hi.sub(&input.lo)?;
    let r = parties.random_shares(n * m);
    let ls = expand_rows(&s.mask, m);
    let prods = parties.dealer.mult_pre(&mut parties.ledger, &r, &ls)?;

    parties.set_phase(Phase::Online);
    let b = local_bita(&input.bits, &pre)?;
    let diff = SharedVec {
        shares: b
            .shares
            .iter()
            .zip(&r.shares)
            .map(|(x, y)| x.iter().zip(y).map(|(u, v)| *u - *v).collect())
            .collect(),
    };
    let c = parties.open(&diff)?;
    let mut out = SharedVec::zeros(q, m);
    for i in 0..n {
        for j in 0..m {
            let idx = i * m + j;
            out.shares[0][j] += c[idx] * s.masked[i];
            for h in 0..q {
                out.shares[h][j] += c[idx] * s.mask.shares[h][i]
                    + s.masked[i] * r.shares[h][idx]
                    + prods.shares[h][idx];
            }
        }
    }
    add_scaled_sum(&mut out, &input.lo, RingElement::ONE.shift_left(k));
    let revealed = parties.reveal_to_s1(&out)?;
    Ok(decode(&revealed, (1u64 << k) as f64 * n as f64))
}

/// Approach II: bit injection of every bit into its scale difference,
/// summed locally per coordinate.
pub fn secagg_approach2(
    parties: &mut PartySet,
    input: &SecAggInput,
    mode: ConversionMode,
) -> Result<Vec<f64>> {
    check_input(parties, input)?;
    let (n, m, q) = (input.n, input.m, parties.q());
    let k = conversion_scale_bits(mode, q);
    let pre = pi_bita_pre(parties, &input.bits.mask, mode)?;
    let s = input.hi.sub(&input.lo)?;
    let ls = expand_rows(&s.mask, m);
    let prods = parties
        .dealer
        .mult_pre(&mut parties.ledger, &pre.lambda, &ls)?;

    parties.set_phase(Phase::Online);
    let mut out = SharedVec::zeros(q, m);
    for j in 0..m {
        let idx: Vec<usize> = (0..n).map(|i| i * m + j).collect();
        let bits = MaskedBits {
            masked: idx.iter().map(|&x| input.bits.masked[x]).collect(),
            mask: input
                .bits
                .mask
                .iter()
                .map(|v| idx.iter().map(|&x| v[x]).collect())
                .collect(),
        };
        let col_pre = super::BitAPre {
            lambda: SharedVec {
                shares: pre
                    .lambda
                    .shares
                    .iter()
                    .map(|v| idx.iter().map(|&x| v[x]).collect())
                    .collect(),
            },
            scale_bits: pre.scale_bits,
            mode,
        };
        let col_prods = SharedVec {
            shares: prods
                .shares
                .iter()
                .map(|v| idx.iter().map(|&x| v[x]).collect())
                .collect(),
        };
        let z = bit_inj_local(&bits, &col_pre, &s, &col_prods);
        for h in 0..q {
            out.shares[h][j] = z.shares[h][0];
        }
    }
    add_scaled_sum(&mut out, &input.lo, RingElement::ONE.shift_left(k));
    let revealed = parties.reveal_to_s1(&out)?;
    Ok(decode(&revealed, (1u64 << k) as f64 * n as f64))
}

/// Approach III: aggregate bits and scale differences separately and
/// multiply the two sums once per coordinate.
pub fn secagg_approach3(
    parties: &mut PartySet,
    input: &SecAggInput,
    mode: ConversionMode,
) -> Result<Vec<f64>> {
    check_input(parties, input)?;
    let (n, m, q) = (input.n, input.m, parties.q());
    let k = conversion_scale_bits(mode, q);
    let pre = pi_bita_pre(parties, &input.bits.mask, mode)?;
    let s_tot = input.hi.sub(&input.lo)?.sum();
    let r = parties.random_shares(m);
    let ls = expand_rows(&s_tot.mask, m);
    let prods = parties.dealer.mult_pre(&mut parties.ledger, &r, &ls)?;

    parties.set_phase(Phase::Online);
    let t = column_sums(&local_bita(&input.bits, &pre)?, n, m);
    let diff = SharedVec {
        shares: t
            .shares
            .iter()
            .zip(&r.shares)
            .map(|(x, y)| x.iter().zip(y).map(|(u, v)| *u - *v).collect())
            .collect(),
    };
    let c = parties.open(&diff)?;
    let mut out = SharedVec::zeros(q, m);
    for (j, cj) in c.iter().enumerate() {
        out.shares[0][j] += *cj * s_tot.masked[0];
        for h in 0..q {
            out.shares[h][j] += *cj * s_tot.mask.shares[h][0]
                + s_tot.masked[0] * r.shares[h][j]
                + prods.shares[h][j];
        }
    }
    add_scaled_sum(
        &mut out,
        &input.lo,
        RingElement::from_i64(n as i64).shift_left(k),
    );
    let revealed = parties.reveal_to_s1(&out)?;
    Ok(decode(&revealed, (1u64 << k) as f64 * (n * n) as f64))
}

/// Aggregation with public scales shared by all clients:
/// Y_j = s_min + (1/n)·Σ_i b_ij·(s_max − s_min).
pub fn secagg_global(
    parties: &mut PartySet,
    bits: &MaskedBits,
    n: usize,
    s_min: f64,
    s_max: f64,
    mode: ConversionMode,
) -> Result<Vec<f64>> {
    if n == 0 || !bits.len().is_multiple_of(n) || bits.is_empty() {
        return Err(Error::Parameter(format!(
            "{} bits do not form {n} equal rows",
            bits.len()
        )));
    }
    ensure_len(parties.q(), bits.mask.len())?;
    let m = bits.len() / n;
    let k = conversion_scale_bits(mode, parties.q());
    let pre = pi_bita_pre(parties, &bits.mask, mode)?;
    parties.set_phase(Phase::Online);
    let t = column_sums(&local_bita(bits, &pre)?, n, m);
    let revealed = parties.reveal_to_s1(&t)?;
    let denom = (1u64 << k) as f64 * n as f64;
    Ok(revealed
        .iter()
        .map(|v| s_min + v.to_i32() as f64 / denom * (s_max - s_min))
        .collect())
}

/// Plaintext reference: mean over clients of U_i + b_ij·(V_i − U_i).
pub fn quantized_aggregation_oracle(bits: &[Vec<u8>], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    let m = check_matrix(bits)?;
    ensure_len(bits.len(), lo.len())?;
    ensure_len(bits.len(), hi.len())?;
    let n = bits.len() as f64;
    Ok((0..m)
        .map(|j| {
            bits.iter()
                .zip(lo.iter().zip(hi))
                .map(|(b, (u, v))| u + b[j] as f64 * (v - u))
                .sum::<f64>()
                / n
        })
        .collect())
}

/// Plaintext reference of separate aggregation:
/// mean(U) + mean_i(b_ij)·mean_i(V_i − U_i).
pub fn sepagg_oracle(bits: &[Vec<u8>], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    let m = check_matrix(bits)?;
    ensure_len(bits.len(), lo.len())?;
    ensure_len(bits.len(), hi.len())?;
    let n = bits.len() as f64;
    let mean_lo = lo.iter().sum::<f64>() / n;
    let mean_diff = hi.iter().zip(lo).map(|(v, u)| v - u).sum::<f64>() / n;
    Ok((0..m)
        .map(|j| mean_lo + bits.iter().map(|b| b[j] as f64).sum::<f64>() / n * mean_diff)
        .collect())
}
