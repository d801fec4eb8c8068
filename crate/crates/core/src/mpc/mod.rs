//! Simulated semi-honest q-server computation in the preprocessing model.
//!
//! Servers are simulated by a deterministic sequential scheduler: a
//! [`PartySet`] holds every server's randomness, the preprocessing dealer and
//! the [`CostLedger`]. Every opening charges its messages before the opened
//! value is handed back to the caller.
//!
//! Values use masked sharing: a public masked value m (known to all servers)
//! plus additive shares of a random mask λ, with v = m + λ. Server 0 is S1,
//! the server that collects and relays openings.

pub mod cost;
pub mod dealer;
pub mod ledger;
pub mod protocols;
pub mod secagg;

use rand_chacha::ChaCha20Rng;

use crate::error::{ensure_len, Error, Result};
use crate::ring::{RingElement, Role, SharedRandomness, RING_BITS};

pub use cost::{cost_report, symbolic_counts, Approach, CostReport, SymbolicCost};
pub use dealer::{Dealer, TruncationPair};
pub use ledger::{CostLedger, CostModel, Endpoint, Message, Phase, BITS_PER_MIB};
pub use protocols::{pi_bit_inj, pi_bita, pi_bita_pre, pi_bita_sum, pi_dotp, BitAPre};
pub use secagg::{
    quantized_aggregation_oracle, secagg_approach1, secagg_approach2, secagg_approach3,
    secagg_global, sepagg_oracle, share_inputs, SecAggInput,
};

/// Additive shares of a vector: `shares[j][i]` is server j's share of element i.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedVec {
    pub shares: Vec<Vec<RingElement>>,
}

impl SharedVec {
    pub fn zeros(q: usize, len: usize) -> Self {
        SharedVec {
            shares: vec![vec![RingElement::ZERO; len]; q],
        }
    }

    pub fn parties(&self) -> usize {
        self.shares.len()
    }

    pub fn len(&self) -> usize {
        self.shares.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn reconstruct(&self) -> Vec<RingElement> {
        (0..self.len())
            .map(|i| self.shares.iter().map(|s| s[i]).sum())
            .collect()
    }

    /// Share vector of one element per server for element `i`.
    pub fn element(&self, i: usize) -> Vec<RingElement> {
        self.shares.iter().map(|s| s[i]).collect()
    }
}

/// Masked arithmetic vector: element i equals `masked[i] + Σ_j mask.shares[j][i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedVec {
    pub masked: Vec<RingElement>,
    pub mask: SharedVec,
}

impl MaskedVec {
    pub fn len(&self) -> usize {
        self.masked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    pub fn reconstruct(&self) -> Vec<RingElement> {
        self.masked
            .iter()
            .zip(self.mask.reconstruct())
            .map(|(m, l)| *m + l)
            .collect()
    }

    /// Local subtraction `self − other`.
    pub fn sub(&self, other: &MaskedVec) -> Result<MaskedVec> {
        ensure_len(self.len(), other.len())?;
        Ok(MaskedVec {
            masked: self
                .masked
                .iter()
                .zip(&other.masked)
                .map(|(a, b)| *a - *b)
                .collect(),
            mask: SharedVec {
                shares: self
                    .mask
                    .shares
                    .iter()
                    .zip(&other.mask.shares)
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| *x - *y).collect())
                    .collect(),
            },
        })
    }

    /// Local sum of all elements as a length-one masked vector.
    pub fn sum(&self) -> MaskedVec {
        MaskedVec {
            masked: vec![self.masked.iter().sum()],
            mask: SharedVec {
                shares: self
                    .mask
                    .shares
                    .iter()
                    .map(|s| vec![s.iter().sum()])
                    .collect(),
            },
        }
    }
}

/// Masked Boolean vector: bit i equals `masked[i] ⊕ XOR_j mask[j][i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedBits {
    pub masked: Vec<u8>,
    pub mask: Vec<Vec<u8>>,
}

impl MaskedBits {
    pub fn len(&self) -> usize {
        self.masked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    pub fn reconstruct(&self) -> Vec<u8> {
        (0..self.len())
            .map(|i| self.mask.iter().fold(self.masked[i], |acc, m| acc ^ m[i]))
            .collect()
    }
}

/// The simulated servers.
pub struct PartySet {
    q: usize,
    shared: SharedRandomness,
    phase: Phase,
    next_tag: u64,
    pub(crate) dealer: Dealer,
    pub ledger: CostLedger,
}

impl PartySet {
    /// `q ≥ 2` servers whose randomness derives from `seed`.
    pub fn new(q: usize, seed: u64) -> Result<Self> {
        if q < 2 {
            return Err(Error::Parameter(format!(
                "need at least two servers, got {q}"
            )));
        }
        let shared = SharedRandomness::new(seed);
        Ok(PartySet {
            q,
            shared,
            phase: Phase::Preprocessing,
            next_tag: 0,
            dealer: Dealer::new(shared.stream(Role::Dealer, 0)),
            ledger: CostLedger::new(q),
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn shared(&self) -> &SharedRandomness {
        &self.shared
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    /// Fresh stream tag; every call returns a different value.
    pub fn fresh_tag(&mut self) -> u64 {
        self.next_tag += 1;
        self.next_tag
    }

    /// Private randomness of server `j` for `tag`.
    pub fn party_rng(&self, j: usize, tag: u64) -> ChaCha20Rng {
        self.shared.stream(Role::Server(j), tag)
    }

    /// Each server samples its own share of a fresh random vector; no messages.
    pub fn random_shares(&mut self, len: usize) -> SharedVec {
        let tag = self.fresh_tag();
        let shares = (0..self.q)
            .map(|j| {
                let mut rng = self.party_rng(j, tag);
                (0..len).map(|_| RingElement::random(&mut rng)).collect()
            })
            .collect();
        SharedVec { shares }
    }

    /// Opens `values` to every server: each server sends its shares to S1,
    /// which reconstructs and sends the result back.
    pub fn open(&mut self, values: &SharedVec) -> Result<Vec<RingElement>> {
        ensure_len(self.q, values.parties())?;
        let bits = values.len() as u64 * RING_BITS as u64;
        for j in 1..self.q {
            self.ledger
                .send(self.phase, Endpoint::Server(j), Endpoint::Server(0), bits);
        }
        self.ledger.next_round();
        for j in 1..self.q {
            self.ledger
                .send(self.phase, Endpoint::Server(0), Endpoint::Server(j), bits);
        }
        self.ledger.next_round();
        Ok(values.reconstruct())
    }

    /// Reveals `values` to S1 only.
    pub fn reveal_to_s1(&mut self, values: &SharedVec) -> Result<Vec<RingElement>> {
        ensure_len(self.q, values.parties())?;
        let bits = values.len() as u64 * RING_BITS as u64;
        for j in 1..self.q {
            self.ledger
                .send(self.phase, Endpoint::Server(j), Endpoint::Server(0), bits);
        }
        self.ledger.next_round();
        Ok(values.reconstruct())
    }

    pub fn into_ledger(self) -> CostLedger {
        self.ledger
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_costs_two_hops() {
        let mut p = PartySet::new(3, 1).unwrap();
        p.set_phase(Phase::Online);
        let v = p.random_shares(1);
        let opened = p.open(&v).unwrap();
        assert_eq!(opened, v.reconstruct());
        assert_eq!(p.ledger.phase_bits(Phase::Online), 128);
        assert_eq!(p.ledger.pair_bits(Phase::Online, 1, 0), 32);
        assert_eq!(p.ledger.pair_bits(Phase::Online, 0, 2), 32);
    }

    #[test]
    fn reveal_costs_one_hop() {
        let mut p = PartySet::new(3, 1).unwrap();
        p.set_phase(Phase::Online);
        let v = p.random_shares(10);
        p.reveal_to_s1(&v).unwrap();
        assert_eq!(p.ledger.phase_bits(Phase::Online), 640);
    }

    #[test]
    fn random_shares_need_no_messages() {
        let mut p = PartySet::new(4, 1).unwrap();
        let v = p.random_shares(100);
        assert_eq!(v.parties(), 4);
        assert_eq!(p.ledger.phase_bits(Phase::Preprocessing), 0);
    }

    #[test]
    fn rejects_single_server() {
        assert!(PartySet::new(1, 0).is_err());
    }
}
