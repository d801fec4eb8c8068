//! Ideal preprocessing functionalities: 1-out-of-2 OT, products of masks and
//! truncation pairs.
//!
//! The dealer sees the inputs in the clear and hands each server its output.
//! Nothing it does is charged as a message; instead the ledger counts
//! instances, which a [`CostModel`](super::CostModel) prices.

use rand_chacha::ChaCha20Rng;

use super::{CostLedger, SharedVec};
use crate::error::{ensure_len, Result};
use crate::ring::RingElement;

/// Truncation pair: shares of a random r and of r shifted right by `shift`
/// bits (arithmetic shift on the signed representative).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncationPair {
    pub r: SharedVec,
    pub r_shifted: SharedVec,
    pub shift: u32,
}

/// Trusted dealer standing in for the OT-based preprocessing.
pub struct Dealer {
    rng: ChaCha20Rng,
}

impl Dealer {
    pub fn new(rng: ChaCha20Rng) -> Self {
        Dealer { rng }
    }

    /// Batch of OTs from `sender` to `receiver`: the receiver obtains
    /// `m1[i]` if `choice[i] = 1` and `m0[i]` otherwise.
    pub fn ot(
        &mut self,
        ledger: &mut CostLedger,
        sender: usize,
        receiver: usize,
        m0: &[RingElement],
        m1: &[RingElement],
        choice: &[u8],
    ) -> Result<Vec<RingElement>> {
        ensure_len(m0.len(), m1.len())?;
        ensure_len(m0.len(), choice.len())?;
        ledger.record_ots(sender, receiver, m0.len() as u64);
        Ok(m0
            .iter()
            .zip(m1)
            .zip(choice)
            .map(|((a, b), c)| if c & 1 == 1 { *b } else { *a })
            .collect())
    }

    /// Uniform additive sharing of `values` among `q` servers.
    pub fn share(&mut self, values: &[RingElement], q: usize) -> SharedVec {
        let mut shares = SharedVec::zeros(q, values.len());
        for (i, v) in values.iter().enumerate() {
            let mut last = *v;
            for s in shares.shares.iter_mut().take(q - 1) {
                s[i] = RingElement::random(&mut self.rng);
                last -= s[i];
            }
            shares.shares[q - 1][i] = last;
        }
        shares
    }

    /// Shares of the element-wise products x_i·y_i of two shared vectors.
    pub fn mult_pre(
        &mut self,
        ledger: &mut CostLedger,
        x: &SharedVec,
        y: &SharedVec,
    ) -> Result<SharedVec> {
        ensure_len(x.len(), y.len())?;
        ensure_len(x.parties(), y.parties())?;
        let prod: Vec<RingElement> = x
            .reconstruct()
            .into_iter()
            .zip(y.reconstruct())
            .map(|(a, b)| a * b)
            .collect();
        ledger.record_mult_pre(prod.len() as u64);
        Ok(self.share(&prod, x.parties()))
    }

    /// `len` truncation pairs for a right shift by `shift` bits.
    pub fn truncation_pairs(
        &mut self,
        ledger: &mut CostLedger,
        q: usize,
        len: usize,
        shift: u32,
    ) -> TruncationPair {
        let r: Vec<RingElement> = (0..len)
            .map(|_| RingElement::random(&mut self.rng))
            .collect();
        let shifted: Vec<RingElement> = r.iter().map(|v| v.shr_signed(shift)).collect();
        ledger.record_trunc_pre(len as u64);
        TruncationPair {
            r: self.share(&r, q),
            r_shifted: self.share(&shifted, q),
            shift,
        }
    }
}
