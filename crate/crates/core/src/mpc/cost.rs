//! Closed-form communication cost of the aggregation pipelines.
//!
//! Two views are reported. The symbolic view counts, per coordinate, the
//! preprocessing and online instances of bit conversion (BitA) and
//! multiplication (Mult) that each pipeline needs. The protocol view is the
//! exact number of bits the simulated servers exchange, including the
//! opening of the column sums in Approach III that the symbolic view folds
//! into its single multiplication.
//!
//! Unit prices (q servers, ℓ-bit ring):
//!
//! | unit   | preprocessing                       | online       |
//! |--------|-------------------------------------|--------------|
//! | BitA   | OTs per bit × OT cost               | 2(q−1)ℓ      |
//! | Mult   | mask-product cost of the model      | (q−1)ℓ       |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ledger::{CostModel, BITS_PER_MIB};
use super::protocols::ots_per_bit;
use crate::bitconv::ConversionMode;
use crate::error::{Error, Result};
use crate::ring::RING_BITS;

/// Aggregation pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Approach {
    /// Convert every bit, then inner products with the scales.
    #[serde(rename = "I")]
    I,
    /// Bit injection into the scales.
    #[serde(rename = "II")]
    II,
    /// Separate aggregation of bits and scales.
    #[serde(rename = "III")]
    III,
    /// Public global scales; only bits are aggregated.
    #[serde(rename = "global")]
    Global,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::I, Approach::II, Approach::III, Approach::Global];
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Approach::I => "I",
            Approach::II => "II",
            Approach::III => "III",
            Approach::Global => "global",
        })
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(Approach::I),
            "ii" | "2" => Ok(Approach::II),
            "iii" | "3" | "sepagg" => Ok(Approach::III),
            "global" | "g" => Ok(Approach::Global),
            _ => Err(Error::Parameter(format!("unknown approach {s:?}"))),
        }
    }
}

/// Instance counts per coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicCost {
    pub bita_pre: u64,
    pub mult_pre: u64,
    pub bita_on: u64,
    pub mult_on: u64,
}

/// Symbolic per-coordinate counts for `n` clients. The output reveal of the
/// global-scale pipeline is counted as one online multiplication.
pub fn symbolic_counts(approach: Approach, n: u64) -> SymbolicCost {
    let (bita_pre, mult_pre, bita_on, mult_on) = match approach {
        Approach::I => (n, n, n, n),
        Approach::II => (n, n, 0, 1),
        Approach::III => (n, 1, 0, 1),
        Approach::Global => (n, 0, 0, 1),
    };
    SymbolicCost {
        bita_pre,
        mult_pre,
        bita_on,
        mult_on,
    }
}

/// Bits sent by the simulated online phase per coordinate.
pub fn protocol_online_bits_per_coordinate(approach: Approach, n: u64, q: usize) -> u64 {
    let open = 2 * (q as u64 - 1) * RING_BITS as u64;
    let reveal = (q as u64 - 1) * RING_BITS as u64;
    match approach {
        Approach::I => n * open + reveal,
        Approach::II | Approach::Global => reveal,
        Approach::III => open + reveal,
    }
}

/// Cost of one aggregation round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub approach: Approach,
    pub mode: ConversionMode,
    pub n: u64,
    pub m: u64,
    pub q: usize,
    /// Per-coordinate instance counts.
    pub symbolic: SymbolicCost,
    /// Preprocessing OT instances.
    pub ot_count: u64,
    /// Preprocessing MiB (symbolic and protocol views coincide).
    pub offline_mib: f64,
    /// Online MiB in the symbolic view.
    pub online_mib: f64,
    /// Online MiB exchanged by the simulated protocol.
    pub protocol_online_mib: f64,
}

/// Cost of aggregating `m` coordinates from `n` clients on `q` servers.
pub fn cost_report(
    approach: Approach,
    n: u64,
    m: u64,
    q: usize,
    mode: ConversionMode,
    model: &CostModel,
) -> Result<CostReport> {
    if q < 2 {
        return Err(Error::Parameter(format!(
            "need at least two servers, got {q}"
        )));
    }
    let symbolic = symbolic_counts(approach, n);
    let ots = ots_per_bit(q, mode);
    let bita_pre = ots as f64 * model.ot_bits;
    let bita_on = 2.0 * (q as f64 - 1.0) * RING_BITS as f64;
    let mult_on = (q as f64 - 1.0) * RING_BITS as f64;
    let offline =
        symbolic.bita_pre as f64 * bita_pre + symbolic.mult_pre as f64 * model.mult_pre_bits;
    let online = symbolic.bita_on as f64 * bita_on + symbolic.mult_on as f64 * mult_on;
    let m_f = m as f64;
    Ok(CostReport {
        approach,
        mode,
        n,
        m,
        q,
        symbolic,
        ot_count: n * m * ots,
        offline_mib: m_f * offline / BITS_PER_MIB,
        online_mib: m_f * online / BITS_PER_MIB,
        protocol_online_mib: m_f * protocol_online_bits_per_coordinate(approach, n, q) as f64
            / BITS_PER_MIB,
    })
}

/// Total MiB for summing `m` bits from each of `n` clients with the OT-based
/// conversion: preprocessing plus the relay of every masked bit to the other
/// q−1 servers.
pub fn bit_sum_cost_mib(n: u64, m: u64, q: usize, mode: ConversionMode, model: &CostModel) -> f64 {
    let per_bit = ots_per_bit(q, mode) as f64 * model.ot_bits + (q as f64 - 1.0);
    (n * m) as f64 * per_bit / BITS_PER_MIB
}

/// OT instances per bit of a two-server doubly-authenticated-bit conversion.
pub const PRIO_PLUS_OTS_PER_BIT: f64 = 12.0;
/// Opening bits per converted bit in that conversion.
pub const PRIO_PLUS_OPEN_BITS: f64 = 4.0;

/// Total MiB for the same bit sum with a doubly-authenticated-bit conversion.
pub fn prio_plus_cost_mib(n: u64, m: u64, model: &CostModel) -> f64 {
    (n * m) as f64 * (PRIO_PLUS_OTS_PER_BIT * model.ot_bits + PRIO_PLUS_OPEN_BITS) / BITS_PER_MIB
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::secagg::{secagg_approach1, secagg_approach2, secagg_approach3, share_inputs};
    use crate::mpc::{PartySet, Phase};

    const KSQ_LENET_BITS: u64 = 73024;

    #[test]
    fn symbolic_rows() {
        assert_eq!(
            symbolic_counts(Approach::I, 7),
            SymbolicCost {
                bita_pre: 7,
                mult_pre: 7,
                bita_on: 7,
                mult_on: 7
            }
        );
        assert_eq!(
            symbolic_counts(Approach::II, 7),
            SymbolicCost {
                bita_pre: 7,
                mult_pre: 7,
                bita_on: 0,
                mult_on: 1
            }
        );
        assert_eq!(
            symbolic_counts(Approach::III, 7),
            SymbolicCost {
                bita_pre: 7,
                mult_pre: 1,
                bita_on: 0,
                mult_on: 1
            }
        );
    }

    #[test]
    fn lenet_online_constant_in_n() {
        let model = CostModel::standard();
        for n in [20, 100, 500] {
            let r = cost_report(
                Approach::III,
                n,
                KSQ_LENET_BITS,
                3,
                ConversionMode::Approx,
                &model,
            )
            .unwrap();
            assert!(
                (r.online_mib - 0.59).abs() / 0.59 < 0.25,
                "{}",
                r.online_mib
            );
        }
    }

    #[test]
    fn lenet_offline_close_to_reported() {
        let r = cost_report(
            Approach::III,
            500,
            KSQ_LENET_BITS,
            3,
            ConversionMode::Approx,
            &CostModel::standard(),
        )
        .unwrap();
        assert!(
            (r.offline_mib - 937.85).abs() / 937.85 < 0.1,
            "{}",
            r.offline_mib
        );
        assert_eq!(r.ot_count, 500 * KSQ_LENET_BITS * 3);
    }

    #[test]
    fn bit_sum_versus_prio_plus() {
        let model = CostModel::standard();
        let approx = bit_sum_cost_mib(100_000, 1000, 3, ConversionMode::Approx, &model);
        let exact = bit_sum_cost_mib(100_000, 1000, 3, ConversionMode::Exact, &model);
        let prio = prio_plus_cost_mib(100_000, 1000, &model);
        assert!((approx - 2374.53).abs() < 1.0, "{approx}");
        assert!((exact - 3941.65).abs() < 1.0, "{exact}");
        assert!((prio - 9450.44).abs() < 1.0, "{prio}");
        assert!((prio / approx - 4.0).abs() < 0.05);
    }

    #[test]
    fn approach_names_round_trip() {
        for a in Approach::ALL {
            assert_eq!(a.to_string().parse::<Approach>().unwrap(), a);
        }
        assert!("IV".parse::<Approach>().is_err());
    }

    /// The simulated servers send exactly what the closed forms predict.
    #[test]
    fn simulation_matches_closed_form() {
        let model = CostModel::standard();
        let (n, m) = (4usize, 3usize);
        let bits: Vec<Vec<u8>> = (0..n)
            .map(|i| (0..m).map(|j| ((i + j) % 2) as u8).collect())
            .collect();
        let lo = vec![-1.0; n];
        let hi = vec![1.0; n];
        type Pipeline =
            fn(&mut PartySet, &crate::mpc::SecAggInput, ConversionMode) -> Result<Vec<f64>>;
        let cases: [(Approach, Pipeline); 3] = [
            (Approach::I, secagg_approach1),
            (Approach::II, secagg_approach2),
            (Approach::III, secagg_approach3),
        ];
        for mode in [ConversionMode::Exact, ConversionMode::Approx] {
            for (a, f) in cases {
                let mut p = PartySet::new(3, 1).unwrap();
                let input = share_inputs(&mut p, &bits, &lo, &hi).unwrap();
                f(&mut p, &input, mode).unwrap();
                let r = cost_report(a, n as u64, m as u64, 3, mode, &model).unwrap();
                let online = p.ledger.total_mib(Phase::Online, &model);
                let offline = p.ledger.total_mib(Phase::Preprocessing, &model);
                assert!((online - r.protocol_online_mib).abs() < 1e-12, "{a} {mode}");
                assert!((offline - r.offline_mib).abs() < 1e-12, "{a} {mode}");
                assert_eq!(p.ledger.ot_count(), r.ot_count);
            }
        }
    }
}
