//! Fast invariant checks run by the CLI in self-check mode.
//!
//! Each check is a reduced version of an acceptance property: exhaustive
//! conversion oracles on small share counts, the closed-form expectations,
//! MPC-versus-plaintext agreement on random instances, cost structure,
//! Min-Max feasibility and the single-client SepAgg identity.

use rand::Rng;
use serde::Serialize;

use super::nmse::nmse_trial;
use super::{ExperimentConfig, ScaleMode};
use crate::bitconv::{
    cross_term_count, enumerate_approx_mean, enumerate_expected_terms, exact_bit_to_arith,
    expected_terms, ConversionMode, CrossTermOp, Rational,
};
use crate::error::Result;
use crate::mpc::{
    cost_report, quantized_aggregation_oracle, secagg_approach1, secagg_approach2,
    secagg_approach3, sepagg_oracle, share_inputs, Approach, CostModel, PartySet,
};
use crate::quantize::Scheme;
use crate::ring::{BooleanShares, RingElement, Role, SharedRandomness, FXP_ULP};
use crate::robust::{max_distance, max_pairwise_distance, minmax_attack, AttackConfig};

/// Result of one invariant check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, r: Result<Option<String>>) -> CheckOutcome {
    match r {
        Ok(None) => CheckOutcome {
            name,
            passed: true,
            detail: "ok".into(),
        },
        Ok(Some(why)) => CheckOutcome {
            name,
            passed: false,
            detail: why,
        },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn exact_conversion() -> Result<Option<String>> {
    for q in 1..=12usize {
        for pattern in 0..1u32 << q {
            let shares: Vec<u8> = (0..q).map(|i| ((pattern >> i) & 1) as u8).collect();
            let xor = shares.iter().fold(0, |a, s| a ^ s);
            if exact_bit_to_arith(&BooleanShares { shares })? != RingElement::from_bit(xor) {
                return Ok(Some(format!("q={q} pattern={pattern:b}")));
            }
        }
    }
    Ok(None)
}

fn term_expectations() -> Result<Option<String>> {
    for q in 2..=10 {
        let closed = expected_terms(q)?;
        for b in 0..2u8 {
            let e = enumerate_expected_terms(q, b)?;
            if e.term_s != closed.sum || e.term_m != closed.middle || e.term_p != closed.product(b)
            {
                return Ok(Some(format!("q={q} b={b}")));
            }
            if enumerate_approx_mean(q, b)? != Rational::from_integer(b as i64) {
                return Ok(Some(format!("approximation biased at q={q} b={b}")));
            }
        }
    }
    Ok(None)
}

fn cross_terms() -> Result<Option<String>> {
    use ConversionMode::{Approx, Exact};
    let got = [
        cross_term_count(3, CrossTermOp::BitToArith, Exact)?,
        cross_term_count(3, CrossTermOp::BitToArith, Approx)?,
        cross_term_count(3, CrossTermOp::BitInjection, Exact)?,
        cross_term_count(3, CrossTermOp::BitInjection, Approx)?,
    ];
    Ok((got != [4, 1, 10, 7]).then(|| format!("q=3 counts {got:?}")))
}

fn mpc_equivalence() -> Result<Option<String>> {
    let tol = 3.0 * FXP_ULP;
    for seed in 0..20u64 {
        let mut rng = SharedRandomness::new(seed).stream(Role::Public, 11);
        let n = rng.random_range(1..=8usize);
        let m = rng.random_range(1..=8usize);
        let bits: Vec<Vec<u8>> = (0..n)
            .map(|_| (0..m).map(|_| rng.random::<bool>() as u8).collect())
            .collect();
        let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..0.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|u| u + rng.random_range(0.0..2.0)).collect();
        let plain = quantized_aggregation_oracle(&bits, &lo, &hi)?;
        let sep = sepagg_oracle(&bits, &lo, &hi)?;
        type Pipeline =
            fn(&mut PartySet, &crate::mpc::SecAggInput, ConversionMode) -> Result<Vec<f64>>;
        let cases: [(Pipeline, &Vec<f64>); 3] = [
            (secagg_approach1, &plain),
            (secagg_approach2, &plain),
            (secagg_approach3, &sep),
        ];
        for (k, (f, want)) in cases.iter().enumerate() {
            let mut p = PartySet::new(3, seed)?;
            let input = share_inputs(&mut p, &bits, &lo, &hi)?;
            let y = f(&mut p, &input, ConversionMode::Exact)?;
            if y.iter().zip(want.iter()).any(|(a, b)| (a - b).abs() > tol) {
                return Ok(Some(format!(
                    "approach {} seed {seed}: {y:?} vs {want:?}",
                    k + 1
                )));
            }
        }
    }
    Ok(None)
}

fn cost_structure() -> Result<Option<String>> {
    let model = CostModel::standard();
    for a in [Approach::II, Approach::III] {
        let online: Vec<f64> = [20, 100, 500]
            .iter()
            .map(|&n| {
                cost_report(a, n, 73024, 3, ConversionMode::Approx, &model)
                    .map(|r| r.protocol_online_mib)
            })
            .collect::<Result<_>>()?;
        if online.iter().any(|v| *v != online[0]) {
            return Ok(Some(format!(
                "approach {a} online cost varies with n: {online:?}"
            )));
        }
    }
    Ok(None)
}

fn minmax_feasibility() -> Result<Option<String>> {
    for seed in 0..20u64 {
        let mut rng = SharedRandomness::new(seed).stream(Role::Public, 12);
        let k = rng.random_range(2..=6usize);
        let benign: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0) + 0.5).collect())
            .collect();
        let r = minmax_attack(&benign, &AttackConfig::default())?;
        let slack = max_pairwise_distance(&benign) - max_distance(&r.gradient, &benign);
        if !(0.0..1e-4).contains(&slack) {
            return Ok(Some(format!("seed {seed}: slack {slack}")));
        }
    }
    Ok(None)
}

fn sepagg_single_client() -> Result<Option<String>> {
    for scheme in Scheme::ALL {
        let cfg = ExperimentConfig {
            scheme,
            scales: ScaleMode::Local,
            approach: Approach::II,
            trials: 1,
            ..Default::default()
        };
        let exact = nmse_trial(&cfg, 256, 1, 0)?;
        let sep = nmse_trial(
            &ExperimentConfig {
                approach: Approach::III,
                ..cfg
            },
            256,
            1,
            0,
        )?;
        if exact / sep != 1.0 {
            return Ok(Some(format!("{scheme}: ratio {}", exact / sep)));
        }
    }
    Ok(None)
}

/// Runs every check. The order is fixed.
pub fn self_check() -> Vec<CheckOutcome> {
    vec![
        outcome("exact conversion equals XOR (q <= 12)", exact_conversion()),
        outcome(
            "term expectations and unbiasedness (q <= 10)",
            term_expectations(),
        ),
        outcome("cross-term counts", cross_terms()),
        outcome("MPC pipelines match plaintext oracles", mpc_equivalence()),
        outcome("online cost independent of n", cost_structure()),
        outcome("Min-Max update is feasible and tight", minmax_feasibility()),
        outcome("SepAgg equals exact for one client", sepagg_single_client()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in self_check() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
