//! Bit-exact communication accounting for the simulated servers.
//!
//! Every message is charged here before the receiving party reads it.
//! Messages a party addresses to itself carry no network traffic and are not
//! recorded. Preprocessing work done by the ideal dealer is counted in
//! instances (OTs, multiplication triples, truncation pairs) and converted to
//! bits by a [`CostModel`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Protocol phase a message belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Client uploads and their relay among servers.
    Input,
    /// Input-independent preprocessing.
    Preprocessing,
    /// Input-dependent online evaluation.
    Online,
}

/// Sender or receiver of a message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    /// Server with zero-based index (index 0 is server S1).
    Server(usize),
    /// Client with zero-based index.
    Client(usize),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Server(i) => write!(f, "S{}", i + 1),
            Endpoint::Client(c) => write!(f, "C{}", c + 1),
        }
    }
}

/// One transcript line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub round: u64,
    pub phase: Phase,
    pub from: String,
    pub to: String,
    pub bits: u64,
}

/// Conversion of preprocessing instance counts into bits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    /// Amortized bits per 1-out-of-2 OT instance.
    pub ot_bits: f64,
    /// Bits per preprocessed product of two masks.
    pub mult_pre_bits: f64,
    /// Bits per truncation pair.
    pub trunc_pre_bits: f64,
}

impl CostModel {
    /// Default constants. The OT constant is fitted to reported bit-sum totals
    /// (three OTs plus a two-bit relay per approximate conversion); a mask
    /// product is charged as ℓ correlated OTs of ℓ+1 bits for each of the
    /// three server pairs; a truncation pair as one ring element sent by the
    /// dealer-role server to each other server.
    pub const fn standard() -> Self {
        CostModel {
            ot_bits: 65.73,
            mult_pre_bits: 3.0 * 32.0 * 33.0,
            trunc_pre_bits: 64.0,
        }
    }
}

impl Default for CostModel {
    fn default() -> Self {
        Self::standard()
    }
}

/// Bits per mebibyte.
pub const BITS_PER_MIB: f64 = 8.0 * 1024.0 * 1024.0;

/// Per-phase, per-party-pair message counters plus preprocessing instance counts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CostLedger {
    q: usize,
    round: u64,
    server_bits: BTreeMap<(Phase, usize, usize), u64>,
    client_bits: u64,
    ot_counts: BTreeMap<(usize, usize), u64>,
    mult_pre: u64,
    trunc_pre: u64,
    transcript: Vec<Message>,
}

impl CostLedger {
    pub fn new(q: usize) -> Self {
        CostLedger {
            q,
            ..Default::default()
        }
    }

    pub fn parties(&self) -> usize {
        self.q
    }

    /// Charges a message; self-addressed messages are dropped.
    pub fn send(&mut self, phase: Phase, from: Endpoint, to: Endpoint, bits: u64) {
        if from == to || bits == 0 {
            return;
        }
        match (from, to) {
            (Endpoint::Server(a), Endpoint::Server(b)) => {
                *self.server_bits.entry((phase, a, b)).or_insert(0) += bits;
            }
            (Endpoint::Client(_), _) => self.client_bits += bits,
            (Endpoint::Server(_), Endpoint::Client(_)) => {}
        }
        self.transcript.push(Message {
            round: self.round,
            phase,
            from: from.to_string(),
            to: to.to_string(),
            bits,
        });
    }

    /// Starts a new synchronous communication round.
    pub fn next_round(&mut self) {
        self.round += 1;
    }

    pub fn record_ots(&mut self, sender: usize, receiver: usize, count: u64) {
        *self.ot_counts.entry((sender, receiver)).or_insert(0) += count;
    }

    pub fn record_mult_pre(&mut self, count: u64) {
        self.mult_pre += count;
    }

    pub fn record_trunc_pre(&mut self, count: u64) {
        self.trunc_pre += count;
    }

    /// Inter-server message bits in `phase`.
    pub fn phase_bits(&self, phase: Phase) -> u64 {
        self.server_bits
            .iter()
            .filter(|((p, _, _), _)| *p == phase)
            .map(|(_, b)| *b)
            .sum()
    }

    /// Inter-server message bits from `from` to `to` in `phase`.
    pub fn pair_bits(&self, phase: Phase, from: usize, to: usize) -> u64 {
        self.server_bits
            .get(&(phase, from, to))
            .copied()
            .unwrap_or(0)
    }

    pub fn client_upload_bits(&self) -> u64 {
        self.client_bits
    }

    pub fn ot_count(&self) -> u64 {
        self.ot_counts.values().sum()
    }

    pub fn ot_count_pair(&self, sender: usize, receiver: usize) -> u64 {
        self.ot_counts
            .get(&(sender, receiver))
            .copied()
            .unwrap_or(0)
    }

    pub fn mult_pre_count(&self) -> u64 {
        self.mult_pre
    }

    pub fn trunc_pre_count(&self) -> u64 {
        self.trunc_pre
    }

    /// Inter-server bits in `phase`, with preprocessing instances priced by `model`.
    pub fn total_bits(&self, phase: Phase, model: &CostModel) -> f64 {
        let direct = self.phase_bits(phase) as f64;
        match phase {
            Phase::Preprocessing => {
                direct
                    + self.ot_count() as f64 * model.ot_bits
                    + self.mult_pre as f64 * model.mult_pre_bits
                    + self.trunc_pre as f64 * model.trunc_pre_bits
            }
            _ => direct,
        }
    }

    pub fn total_mib(&self, phase: Phase, model: &CostModel) -> f64 {
        self.total_bits(phase, model) / BITS_PER_MIB
    }

    pub fn transcript(&self) -> &[Message] {
        &self.transcript
    }

    /// Transcript as JSON lines `{round, phase, from, to, bits}`.
    pub fn transcript_jsonl(&self) -> String {
        let mut out = String::new();
        for m in &self.transcript {
            out.push_str(&serde_json::to_string(m).expect("message serializes"));
            out.push('\n');
        }
        out
    }

    /// Adds every counter of `other` into `self`, renumbering its rounds after ours.
    pub fn absorb(&mut self, other: CostLedger) {
        for (k, v) in other.server_bits {
            *self.server_bits.entry(k).or_insert(0) += v;
        }
        self.client_bits += other.client_bits;
        for (k, v) in other.ot_counts {
            *self.ot_counts.entry(k).or_insert(0) += v;
        }
        self.mult_pre += other.mult_pre;
        self.trunc_pre += other.trunc_pre;
        let base = self.round;
        for mut m in other.transcript {
            m.round += base;
            self.transcript.push(m);
        }
        self.round += other.round;
    }
}
