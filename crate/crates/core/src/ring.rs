//! Fixed-point arithmetic over the ring Z_2^32 and the three secret-sharing
//! representations used by the protocols: additive arithmetic shares,
//! XOR-shared bits, and masked shares (a public masked value plus a
//! secret-shared random mask).

use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::ledger::{CostLedger, Endpoint, Phase};

/// Ring bit width ℓ.
pub const RING_BITS: u32 = 32;
/// Number of fractional bits f of the fixed-point encoding.
pub const FRAC_BITS: u32 = 16;
/// Largest magnitude accepted by [`fxp_encode`] (exclusive): 2^(ℓ-f-1).
pub const FXP_LIMIT: f64 = (1u64 << (RING_BITS - FRAC_BITS - 1)) as f64;
/// One unit in the last place of the fixed-point encoding, 2^-f.
pub const FXP_ULP: f64 = 1.0 / (1u64 << FRAC_BITS) as f64;

/// Element of Z_2^ℓ. All arithmetic wraps modulo 2^ℓ.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct RingElement(pub u32);

impl RingElement {
    pub const ZERO: RingElement = RingElement(0);
    pub const ONE: RingElement = RingElement(1);

    /// Embeds a signed integer, reducing modulo 2^ℓ.
    pub fn from_i64(v: i64) -> Self {
        RingElement(v as u32)
    }

    /// Embeds a bit as 0 or 1.
    pub fn from_bit(b: u8) -> Self {
        RingElement((b & 1) as u32)
    }

    /// Two's-complement signed interpretation.
    pub fn to_i32(self) -> i32 {
        self.0 as i32
    }

    /// Arithmetic (sign-preserving) right shift of the signed interpretation.
    pub fn shr_signed(self, k: u32) -> Self {
        RingElement((self.to_i32() >> k) as u32)
    }

    /// Logical left shift, i.e. multiplication by 2^k.
    pub fn shift_left(self, k: u32) -> Self {
        RingElement(self.0.wrapping_shl(k))
    }

    /// Uniformly random ring element.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        RingElement(rng.random::<u32>())
    }
}

impl Add for RingElement {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        RingElement(self.0.wrapping_add(rhs.0))
    }
}

impl Sub for RingElement {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        RingElement(self.0.wrapping_sub(rhs.0))
    }
}

impl Mul for RingElement {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        RingElement(self.0.wrapping_mul(rhs.0))
    }
}

impl Neg for RingElement {
    type Output = Self;
    fn neg(self) -> Self {
        RingElement(self.0.wrapping_neg())
    }
}

impl AddAssign for RingElement {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for RingElement {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl MulAssign for RingElement {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl Sum for RingElement {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(RingElement::ZERO, |a, b| a + b)
    }
}

impl<'a> Sum<&'a RingElement> for RingElement {
    fn sum<I: Iterator<Item = &'a RingElement>>(iter: I) -> Self {
        iter.fold(RingElement::ZERO, |a, b| a + *b)
    }
}

/// Fixed-point value: a ring element read as a signed integer scaled by 2^-f.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FxpValue {
    pub raw: RingElement,
}

impl FxpValue {
    pub fn from_raw(raw: RingElement) -> Self {
        FxpValue { raw }
    }

    /// Plaintext fixed-point product: the signed product is formed at double
    /// width and shifted back by f bits before reduction into the ring.
    pub fn mul_trunc(self, rhs: FxpValue) -> FxpValue {
        let p = self.raw.to_i32() as i64 * rhs.raw.to_i32() as i64;
        FxpValue::from_raw(RingElement::from_i64(p >> FRAC_BITS))
    }
}

impl Add for FxpValue {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        FxpValue::from_raw(self.raw + rhs.raw)
    }
}

impl Sub for FxpValue {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        FxpValue::from_raw(self.raw - rhs.raw)
    }
}

/// Encodes a real number with round-to-nearest scaling by 2^f.
pub fn fxp_encode(x: f64) -> Result<FxpValue> {
    if !x.is_finite() || x.abs() >= FXP_LIMIT {
        return Err(Error::Range(x));
    }
    let scaled = (x * (1u64 << FRAC_BITS) as f64).round() as i64;
    Ok(FxpValue::from_raw(RingElement::from_i64(scaled)))
}

/// Decodes a fixed-point value to a real number.
pub fn fxp_decode(v: FxpValue) -> f64 {
    v.raw.to_i32() as f64 * FXP_ULP
}

/// Additive shares of a ring element, one per server.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdditiveShares {
    pub shares: Vec<RingElement>,
}

impl AdditiveShares {
    pub fn reconstruct(&self) -> RingElement {
        self.shares.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }
}

/// XOR shares of a single bit, one per server.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BooleanShares {
    pub shares: Vec<u8>,
}

impl BooleanShares {
    pub fn reconstruct(&self) -> u8 {
        self.shares.iter().fold(0, |a, b| a ^ (b & 1))
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }
}

/// Masked arithmetic sharing: v = m_v + Σ λ_v shares.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedShare {
    pub masked: RingElement,
    pub mask: AdditiveShares,
}

impl MaskedShare {
    pub fn reconstruct(&self) -> RingElement {
        self.masked + self.mask.reconstruct()
    }
}

/// Masked Boolean sharing: b = m_b ⊕ XOR λ_b shares.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedBit {
    pub masked: u8,
    pub mask: BooleanShares,
}

impl MaskedBit {
    pub fn reconstruct(&self) -> u8 {
        self.masked ^ self.mask.reconstruct()
    }
}

fn check_share_count(q: usize, min: usize) -> Result<()> {
    if q < min {
        Err(Error::Parameter(format!(
            "share count {q} is below the minimum {min}"
        )))
    } else {
        Ok(())
    }
}

/// Splits `v` into `q` additive shares: the first q-1 are uniform, the last
/// completes the sum.
pub fn share_additive<R: Rng + ?Sized>(
    v: RingElement,
    q: usize,
    rng: &mut R,
) -> Result<AdditiveShares> {
    check_share_count(q, 2)?;
    let mut shares: Vec<RingElement> = (0..q - 1).map(|_| RingElement::random(rng)).collect();
    let partial: RingElement = shares.iter().sum();
    shares.push(v - partial);
    Ok(AdditiveShares { shares })
}

/// Splits bit `b` into `q` XOR shares: the first q-1 are uniform, the last
/// completes the parity.
pub fn share_boolean<R: Rng + ?Sized>(b: u8, q: usize, rng: &mut R) -> Result<BooleanShares> {
    check_share_count(q, 2)?;
    let mut shares: Vec<u8> = (0..q - 1)
        .map(|_| (rng.random::<u32>() & 1) as u8)
        .collect();
    let parity = shares.iter().fold(0, |a, s| a ^ s);
    shares.push((b & 1) ^ parity);
    Ok(BooleanShares { shares })
}

/// Samples a mask λ as `q` uniform additive shares and publishes m_v = v − λ.
pub fn share_masked<R: Rng + ?Sized>(v: RingElement, q: usize, rng: &mut R) -> Result<MaskedShare> {
    check_share_count(q, 1)?;
    let shares: Vec<RingElement> = (0..q).map(|_| RingElement::random(rng)).collect();
    let lambda: RingElement = shares.iter().sum();
    Ok(MaskedShare {
        masked: v - lambda,
        mask: AdditiveShares { shares },
    })
}

/// Boolean analogue of [`share_masked`]: m_b = b ⊕ λ_b.
pub fn share_masked_bit<R: Rng + ?Sized>(b: u8, q: usize, rng: &mut R) -> Result<MaskedBit> {
    check_share_count(q, 1)?;
    let shares: Vec<u8> = (0..q).map(|_| (rng.random::<u32>() & 1) as u8).collect();
    let mask = BooleanShares { shares };
    Ok(MaskedBit {
        masked: (b & 1) ^ mask.reconstruct(),
        mask,
    })
}

/// Participant whose randomness stream is derived from a [`SharedRandomness`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    /// Randomness known to every server.
    Public,
    /// Private randomness of one server.
    Server(usize),
    /// Private randomness of one client.
    Client(usize),
    /// Key shared between a client and one server.
    ClientServer { client: usize, server: usize },
    /// The preprocessing dealer.
    Dealer,
    /// Randomness of a client's quantizer (rotation seeds, Bernoulli draws).
    Quantizer(usize),
}

impl Role {
    fn code(self) -> u64 {
        match self {
            Role::Public => 0,
            Role::Server(i) => (1 << 56) | i as u64,
            Role::Client(c) => (2 << 56) | c as u64,
            Role::ClientServer { client, server } => {
                (3 << 56) | ((client as u64) << 8) | server as u64
            }
            Role::Dealer => 4 << 56,
            Role::Quantizer(c) => (5 << 56) | c as u64,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed from which every party derives identical, independent ChaCha20
/// streams keyed by (seed, role, tag).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedRandomness {
    pub seed: u64,
}

impl SharedRandomness {
    pub fn new(seed: u64) -> Self {
        SharedRandomness { seed }
    }

    /// Counter-mode stream for `role` and `tag`.
    pub fn stream(&self, role: Role, tag: u64) -> ChaCha20Rng {
        let mut key = [0u8; 32];
        let mut state = self.seed;
        for chunk in key.chunks_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(splitmix64(
            role.code() ^ splitmix64(tag.wrapping_add(0x5157_4147)),
        ));
        rng
    }

    /// Child seed for an independent sub-experiment.
    pub fn derive(&self, tag: u64) -> SharedRandomness {
        SharedRandomness::new(splitmix64(self.seed ^ splitmix64(tag)))
    }
}

/// Result of a client sharing a vector of inputs with the servers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientInput<T> {
    /// Masked values m_v, held by every server after the relay.
    pub masked: Vec<T>,
    /// Mask shares λ_v per server: `mask[j][i]` is server j's share of coordinate i.
    pub mask: Vec<Vec<T>>,
}

/// Mask shares a server derives locally from the key it shares with `client`.
pub fn client_mask_arith(
    shared: &SharedRandomness,
    client: usize,
    server: usize,
    tag: u64,
    len: usize,
) -> Vec<RingElement> {
    let mut rng = shared.stream(Role::ClientServer { client, server }, tag);
    (0..len).map(|_| RingElement::random(&mut rng)).collect()
}

/// Boolean mask shares a server derives locally from the key it shares with `client`.
pub fn client_mask_bool(
    shared: &SharedRandomness,
    client: usize,
    server: usize,
    tag: u64,
    len: usize,
) -> Vec<u8> {
    let mut rng = shared.stream(Role::ClientServer { client, server }, tag);
    (0..len).map(|_| (rng.random::<u32>() & 1) as u8).collect()
}

/// Client-side sharing of arithmetic inputs. The client sends one ℓ-bit masked
/// value per coordinate to server 1, which relays it to the other servers;
/// the mask shares never travel because each server derives its own.
pub fn client_share_input(
    values: &[RingElement],
    client: usize,
    q: usize,
    shared: &SharedRandomness,
    tag: u64,
    ledger: &mut CostLedger,
) -> Result<ClientInput<RingElement>> {
    check_share_count(q, 1)?;
    let mask: Vec<Vec<RingElement>> = (0..q)
        .map(|j| client_mask_arith(shared, client, j, tag, values.len()))
        .collect();
    let masked: Vec<RingElement> = values
        .iter()
        .enumerate()
        .map(|(i, v)| *v - mask.iter().map(|m| m[i]).sum::<RingElement>())
        .collect();
    charge_upload(ledger, client, q, values.len() as u64 * RING_BITS as u64);
    Ok(ClientInput { masked, mask })
}

/// Client-side sharing of bits: one masked bit per coordinate goes to server 1
/// and is relayed to the other servers.
pub fn client_share_bits(
    bits: &[u8],
    client: usize,
    q: usize,
    shared: &SharedRandomness,
    tag: u64,
    ledger: &mut CostLedger,
) -> Result<ClientInput<u8>> {
    check_share_count(q, 1)?;
    let mask: Vec<Vec<u8>> = (0..q)
        .map(|j| client_mask_bool(shared, client, j, tag, bits.len()))
        .collect();
    let masked: Vec<u8> = bits
        .iter()
        .enumerate()
        .map(|(i, b)| mask.iter().fold(b & 1, |acc, m| acc ^ m[i]))
        .collect();
    charge_upload(ledger, client, q, bits.len() as u64);
    Ok(ClientInput { masked, mask })
}

fn charge_upload(ledger: &mut CostLedger, client: usize, q: usize, bits: u64) {
    ledger.send(
        Phase::Input,
        Endpoint::Client(client),
        Endpoint::Server(0),
        bits,
    );
    for j in 1..q {
        ledger.send(Phase::Input, Endpoint::Server(0), Endpoint::Server(j), bits);
    }
    ledger.next_round();
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::RngCore;

    struct ConstRng(u32);

    impl RngCore for ConstRng {
        fn next_u32(&mut self) -> u32 {
            self.0
        }
        fn next_u64(&mut self) -> u64 {
            self.0 as u64
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            dst.fill(self.0 as u8);
        }
    }

    #[test]
    fn encode_examples() {
        assert_eq!(fxp_encode(0.0).unwrap().raw.0, 0);
        assert_eq!(fxp_encode(1.0).unwrap().raw.0, 65536);
        // −0.5·2^16 = −32768, reduced modulo 2^32.
        let oracle = (1u64 << 32) - 32768;
        assert_eq!(fxp_encode(-0.5).unwrap().raw.0 as u64, oracle);
    }

    #[test]
    fn encode_rejects_out_of_range() {
        assert!(matches!(fxp_encode(FXP_LIMIT), Err(Error::Range(_))));
        assert!(matches!(fxp_encode(-FXP_LIMIT), Err(Error::Range(_))));
        assert!(fxp_encode(f64::NAN).is_err());
        assert!(fxp_encode(FXP_LIMIT - 1.0).is_ok());
    }

    #[test]
    fn zero_rng_gives_zero_shares() {
        let s = share_additive(RingElement::ZERO, 3, &mut ConstRng(0)).unwrap();
        assert_eq!(s.shares, vec![RingElement::ZERO; 3]);
        let b = share_boolean(0, 3, &mut ConstRng(0)).unwrap();
        assert_eq!(b.shares, vec![0, 0, 0]);
    }

    #[test]
    fn forced_last_boolean_share() {
        let b = share_boolean(1, 2, &mut ConstRng(1)).unwrap();
        assert_eq!(b.shares, vec![1, 0]);
    }

    #[test]
    fn share_count_validated() {
        assert!(matches!(
            share_additive(RingElement::ONE, 1, &mut ConstRng(0)),
            Err(Error::Parameter(_))
        ));
        assert!(share_boolean(1, 0, &mut ConstRng(0)).is_err());
    }

    #[test]
    fn zero_mask_stream_leaves_value_public() {
        let m = share_masked(RingElement(1234), 3, &mut ConstRng(0)).unwrap();
        assert_eq!(m.masked, RingElement(1234));
    }

    /// Over a 4-bit ring with q = 2, the first share of a sharing of v is the
    /// uniform draw r and the second is v − r. Enumerating all (v, r) pairs,
    /// each share value must occur exactly 16 times in each position.
    #[test]
    fn additive_share_marginals_uniform_on_small_ring() {
        let modulus = 16u32;
        let mut first = [0u32; 16];
        let mut second = [0u32; 16];
        for v in 0..modulus {
            for r in 0..modulus {
                let s = share_additive(RingElement(v), 2, &mut ConstRng(r)).unwrap();
                first[(s.shares[0].0 % modulus) as usize] += 1;
                second[(s.shares[1].0 % modulus) as usize] += 1;
                assert_eq!(s.reconstruct().0 % modulus, v);
            }
        }
        assert!(first.iter().all(|&c| c == 16));
        assert!(second.iter().all(|&c| c == 16));
    }

    #[test]
    fn boolean_reconstruction_exhaustive() {
        for q in 2..=8usize {
            for b in 0..=1u8 {
                for pattern in 0..(1u32 << (q - 1)) {
                    let mut rng = PatternRng {
                        bits: pattern,
                        pos: 0,
                    };
                    let s = share_boolean(b, q, &mut rng).unwrap();
                    assert_eq!(s.reconstruct(), b);
                }
            }
        }
    }

    struct PatternRng {
        bits: u32,
        pos: u32,
    }

    impl RngCore for PatternRng {
        fn next_u32(&mut self) -> u32 {
            let b = (self.bits >> self.pos) & 1;
            self.pos += 1;
            b
        }
        fn next_u64(&mut self) -> u64 {
            self.next_u32() as u64
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            dst.iter_mut().for_each(|d| *d = self.next_u32() as u8);
        }
    }

    #[test]
    fn masked_bit_all_cases() {
        for b in 0..=1u8 {
            for pattern in 0..8u32 {
                let mut rng = PatternRng {
                    bits: pattern,
                    pos: 0,
                };
                let m = share_masked_bit(b, 3, &mut rng).unwrap();
                assert_eq!(m.reconstruct(), b);
            }
        }
    }

    #[test]
    fn client_upload_costs() {
        let shared = SharedRandomness::new(7);
        let mut ledger = CostLedger::new(3);
        let bits = client_share_bits(&[1], 0, 3, &shared, 0, &mut ledger).unwrap();
        assert_eq!(ledger.client_upload_bits(), 1);
        let v = fxp_encode(0.25).unwrap().raw;
        let mut ledger = CostLedger::new(3);
        let arith = client_share_input(&[v], 0, 3, &shared, 1, &mut ledger).unwrap();
        assert_eq!(ledger.client_upload_bits(), 32);
        assert_eq!(ledger.phase_bits(Phase::Input), 64);
        assert_eq!(
            bits.masked[0] ^ bits.mask.iter().fold(0, |a, m| a ^ m[0]),
            1
        );
        assert_eq!(
            arith.masked[0] + arith.mask.iter().map(|m| m[0]).sum::<RingElement>(),
            v
        );
    }

    #[test]
    fn client_input_round_trip() {
        let shared = SharedRandomness::new(99);
        let mut rng = shared.stream(Role::Public, 0);
        let values: Vec<RingElement> = (0..100).map(|_| RingElement::random(&mut rng)).collect();
        let mut ledger = CostLedger::new(3);
        let input = client_share_input(&values, 4, 3, &shared, 2, &mut ledger).unwrap();
        for (i, v) in values.iter().enumerate() {
            // Each server re-derives its own mask share without communication.
            let lambda: RingElement = (0..3)
                .map(|j| client_mask_arith(&shared, 4, j, 2, 100)[i])
                .sum();
            assert_eq!(input.masked[i] + lambda, *v);
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = SharedRandomness::new(5);
        let a: Vec<u32> = (0..4)
            .map({
                let mut r = s.stream(Role::Server(1), 3);
                move |_| rand::Rng::random(&mut r)
            })
            .collect();
        let b: Vec<u32> = (0..4)
            .map({
                let mut r = s.stream(Role::Server(1), 3);
                move |_| rand::Rng::random(&mut r)
            })
            .collect();
        let c: Vec<u32> = (0..4)
            .map({
                let mut r = s.stream(Role::Server(2), 3);
                move |_| rand::Rng::random(&mut r)
            })
            .collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn encode_decode_within_ulp(x in -32767.0f64..32767.0) {
            let v = fxp_encode(x).unwrap();
            prop_assert!((fxp_decode(v) - x).abs() <= FXP_ULP);
        }

        #[test]
        fn additive_round_trip(v in any::<u32>(), q in 2usize..8, seed in any::<u64>()) {
            let mut rng = SharedRandomness::new(seed).stream(Role::Public, 0);
            let s = share_additive(RingElement(v), q, &mut rng).unwrap();
            prop_assert_eq!(s.reconstruct(), RingElement(v));
        }

        #[test]
        fn masked_round_trip(v in any::<u32>(), q in 1usize..8, seed in any::<u64>()) {
            let mut rng = SharedRandomness::new(seed).stream(Role::Public, 1);
            let s = share_masked(RingElement(v), q, &mut rng).unwrap();
            prop_assert_eq!(s.reconstruct(), RingElement(v));
        }

        #[test]
        fn fxp_add_exact(a in -1000i32..1000, b in -1000i32..1000) {
            let x = a as f64 / 64.0;
            let y = b as f64 / 64.0;
            let s = fxp_encode(x).unwrap() + fxp_encode(y).unwrap();
            prop_assert_eq!(fxp_decode(s), x + y);
        }

        #[test]
        fn fxp_mul_within_two_ulp(x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let p = fxp_encode(x).unwrap().mul_trunc(fxp_encode(y).unwrap());
            prop_assert!((fxp_decode(p) - x * y).abs() <= 2.0 * FXP_ULP);
        }
    }
}
