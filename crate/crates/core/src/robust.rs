//! The Aura defense (norm scaling plus cosine filtering over quantized
//! updates) and the Min-Max untargeted poisoning attack.
//!
//! Norms and inner products of a quantized vector are computed from its bits
//! and scales alone, in the coefficient domain (after the rotation or frame
//! decomposition). Updates that are compared with each other must therefore
//! share a layout and, for rotated schemes, a seed.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::quantize::{dequantize, QuantizedVector};
use crate::ring::{fxp_decode, fxp_encode, FxpValue, RingElement, FXP_ULP};

/// How many updates the filter removes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterCount {
    /// A fixed number of updates.
    Count(usize),
    /// ⌈fraction · n⌉ updates.
    Fraction(f64),
}

impl FilterCount {
    /// Number of updates removed out of `n`.
    pub fn resolve(self, n: usize) -> Result<usize> {
        let k = match self {
            FilterCount::Count(k) => k,
            FilterCount::Fraction(f) if (0.0..1.0).contains(&f) => (f * n as f64).ceil() as usize,
            FilterCount::Fraction(f) => {
                return Err(Error::Parameter(format!(
                    "filter fraction {f} outside [0, 1)"
                )))
            }
        };
        if k >= n {
            return Err(Error::Parameter(format!(
                "cannot filter {k} of {n} updates"
            )));
        }
        Ok(k)
    }
}

/// Defense parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenseConfig {
    /// Norm threshold μ_th relative to the average norm.
    pub mu_th: f64,
    /// Number of updates removed by the cosine filter (ψ).
    pub psi: FilterCount,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig {
            mu_th: 3.0,
            psi: FilterCount::Fraction(0.2),
        }
    }
}

/// Direction the Min-Max attacker pushes the benign mean in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    /// −mean / ‖mean‖.
    InverseUnit,
    /// −(coordinate-wise standard deviation).
    InverseStd,
    /// −sign(mean).
    InverseSign,
}

/// Min-Max attack parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub perturbation: Perturbation,
    /// First γ tried when bracketing.
    pub gamma_init: f64,
    /// Bisection stops once the bracket is narrower than this.
    pub tolerance: f64,
    /// Upper limit on bisection steps.
    pub max_bisections: u32,
    /// Fraction of the population that is malicious.
    pub malicious_fraction: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            perturbation: Perturbation::InverseUnit,
            gamma_init: 1.0,
            tolerance: 1e-5,
            max_bisections: 64,
            malicious_fraction: 0.2,
        }
    }
}

fn check_compatible(qvs: &[QuantizedVector]) -> Result<&QuantizedVector> {
    let first = qvs
        .first()
        .ok_or_else(|| Error::Parameter("no updates to aggregate".into()))?;
    if qvs.iter().any(|q| q.layout != first.layout) {
        return Err(Error::Parameter(
            "updates have different chunk layouts".into(),
        ));
    }
    Ok(first)
}

/// Mean of the dequantized updates in the input domain.
pub fn aggregate_quantized(qvs: &[QuantizedVector]) -> Result<Vec<f64>> {
    let first = check_compatible(qvs)?;
    let mut acc = vec![0.0; first.layout.m];
    for qv in qvs {
        acc.iter_mut()
            .zip(dequantize(qv)?)
            .for_each(|(a, v)| *a += v);
    }
    let n = qvs.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Mean of the dequantized coefficients; all updates must share layout and seed.
pub fn aggregate_coefficients(qvs: &[QuantizedVector]) -> Result<Vec<f64>> {
    let first = check_compatible(qvs)?;
    if qvs.iter().any(|q| q.seed != first.seed) {
        return Err(Error::Parameter(
            "updates use different rotation seeds".into(),
        ));
    }
    let mut acc = vec![0.0; first.bits.len()];
    for qv in qvs {
        acc.iter_mut()
            .zip(qv.dequantize_coefficients())
            .for_each(|(a, v)| *a += v);
    }
    let n = qvs.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Numbers of zero and one bits in every chunk.
fn bit_counts(qv: &QuantizedVector) -> Vec<(u64, u64)> {
    qv.layout
        .spans
        .iter()
        .map(|s| {
            let ones = qv.bits[s.offset..s.offset + s.len]
                .iter()
                .map(|b| *b as u64)
                .sum::<u64>();
            (s.len as u64 - ones, ones)
        })
        .collect()
}

/// L2 norm of the dequantized coefficients from bit counts only:
/// √(Σ_chunks N_zero·s_min² + N_one·s_max²).
pub fn l2_norm_q(qv: &QuantizedVector) -> f64 {
    bit_counts(qv)
        .iter()
        .zip(&qv.scales)
        .map(|(&(z, o), sc)| z as f64 * sc.s_min * sc.s_min + o as f64 * sc.s_max * sc.s_max)
        .sum::<f64>()
        .sqrt()
}

/// Squared norm computed in fixed point over the ring, as the servers would.
/// The result must stay below 2^15.
pub fn l2_norm_sq_fxp(qv: &QuantizedVector) -> Result<f64> {
    let mut acc = RingElement::ZERO;
    for (&(z, o), sc) in bit_counts(qv).iter().zip(&qv.scales) {
        let lo = fxp_encode(sc.s_min)?;
        let hi = fxp_encode(sc.s_max)?;
        let lo_total = FxpValue::from_raw(lo.raw * RingElement(z as u32));
        let hi_total = FxpValue::from_raw(hi.raw * RingElement(o as u32));
        acc += lo_total.mul_trunc(lo).raw + hi_total.mul_trunc(hi).raw;
    }
    Ok(fxp_decode(FxpValue::from_raw(acc)))
}

/// Rescales both scales of every chunk by μ_th·L2_avg / L2 when the norm
/// exceeds μ_th·L2_avg. Bits are untouched.
pub fn scale_by_norm(qv: &QuantizedVector, mu_th: f64, l2_avg: f64) -> Result<QuantizedVector> {
    if l2_avg.is_nan() || l2_avg <= 0.0 {
        return Err(Error::Parameter(format!(
            "average norm {l2_avg} is not positive"
        )));
    }
    let norm = l2_norm_q(qv);
    let limit = mu_th * l2_avg;
    let mut out = qv.clone();
    if norm > limit {
        let f = limit / norm;
        for sc in &mut out.scales {
            sc.s_min *= f;
            sc.s_max *= f;
        }
    }
    Ok(out)
}

/// Inner product ⟨dequantized coefficients, s⟩ from bits and scales:
/// Σ_chunks s_min·Σ s + (σ·s)·(s_max − s_min).
fn inner_q(qv: &QuantizedVector, s: &[f64]) -> f64 {
    qv.layout
        .spans
        .iter()
        .zip(&qv.scales)
        .map(|(span, sc)| {
            let r = span.offset..span.offset + span.len;
            let sum: f64 = s[r.clone()].iter().sum();
            let masked: f64 = qv.bits[r.clone()]
                .iter()
                .zip(&s[r])
                .filter(|(b, _)| **b == 1)
                .map(|(_, v)| v)
                .sum();
            sc.s_min * sum + masked * (sc.s_max - sc.s_min)
        })
        .sum()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity between the dequantized coefficients of `qv` and the
/// reference `s`.
pub fn cosine_distance_q(qv: &QuantizedVector, s: &[f64]) -> Result<f64> {
    ensure_len(qv.bits.len(), s.len())?;
    let (nq, ns) = (l2_norm_q(qv), l2(s));
    if nq == 0.0 || ns == 0.0 {
        return Err(Error::DivisionByZero("cosine of a zero vector".into()));
    }
    Ok(inner_q(qv, s) / (nq * ns))
}

/// Cosine similarity without the division by ‖s‖. It ranks updates exactly
/// as [`cosine_distance_q`] does for a fixed reference.
pub fn cosine_score_unnormalized(qv: &QuantizedVector, s: &[f64]) -> Result<f64> {
    ensure_len(qv.bits.len(), s.len())?;
    let nq = l2_norm_q(qv);
    if nq == 0.0 {
        return Err(Error::DivisionByZero("cosine of a zero vector".into()));
    }
    Ok(inner_q(qv, s) / nq)
}

/// Fixed-point inner product ⟨dequantized coefficients, s⟩ computed over the
/// ring. The result must stay below 2^15 in magnitude.
pub fn inner_q_fxp(qv: &QuantizedVector, s: &[f64]) -> Result<f64> {
    ensure_len(qv.bits.len(), s.len())?;
    let mut acc = FxpValue::from_raw(RingElement::ZERO);
    for (span, sc) in qv.layout.spans.iter().zip(&qv.scales) {
        let lo = fxp_encode(sc.s_min)?;
        let diff = fxp_encode(sc.s_max)? - lo;
        let mut sum = FxpValue::from_raw(RingElement::ZERO);
        let mut masked = FxpValue::from_raw(RingElement::ZERO);
        let range = span.offset..span.offset + span.len;
        for (x, b) in s[range.clone()].iter().zip(&qv.bits[range]) {
            let v = fxp_encode(*x)?;
            sum = sum + v;
            if *b == 1 {
                masked = masked + v;
            }
        }
        acc = acc + lo.mul_trunc(sum) + masked.mul_trunc(diff);
    }
    Ok(fxp_decode(acc))
}

/// Result of one defended aggregation.
#[derive(Clone, Debug, PartialEq)]
pub struct AuraOutcome {
    /// Mean of the retained, norm-scaled updates (input domain).
    pub aggregate: Vec<f64>,
    /// Indices removed by the cosine filter, ascending.
    pub excluded: Vec<usize>,
    /// Indices whose scales were reduced.
    pub scaled: Vec<usize>,
    /// Cosine similarity of every update with the reference.
    pub similarity: Vec<f64>,
}

/// Aura: build the reference from all updates, cap every norm at
/// μ_th times the average norm, drop the ψ updates least aligned with the
/// reference and average the rest.
///
/// Ties in similarity are broken towards the lower client index.
pub fn aura_defend(qvs: &[QuantizedVector], cfg: &DefenseConfig) -> Result<AuraOutcome> {
    let n = qvs.len();
    if n < 2 {
        return Err(Error::Parameter(format!(
            "defense needs at least two updates, got {n}"
        )));
    }
    let psi = cfg.psi.resolve(n)?;
    let reference = aggregate_coefficients(qvs)?;
    let norms: Vec<f64> = qvs.iter().map(l2_norm_q).collect();
    let avg = norms.iter().sum::<f64>() / n as f64;
    let mut scaled = Vec::new();
    let mut updated = Vec::with_capacity(n);
    for (i, qv) in qvs.iter().enumerate() {
        if avg > 0.0 {
            if norms[i] > cfg.mu_th * avg {
                scaled.push(i);
            }
            updated.push(scale_by_norm(qv, cfg.mu_th, avg)?);
        } else {
            updated.push(qv.clone());
        }
    }
    let ref_norm = l2(&reference);
    let similarity: Vec<f64> = updated
        .iter()
        .map(|qv| {
            if ref_norm == 0.0 || l2_norm_q(qv) == 0.0 {
                0.0
            } else {
                inner_q(qv, &reference) / (l2_norm_q(qv) * ref_norm)
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| similarity[a].total_cmp(&similarity[b]).then(a.cmp(&b)));
    let mut excluded: Vec<usize> = order[..psi].to_vec();
    excluded.sort_unstable();
    let kept: Vec<QuantizedVector> = updated
        .into_iter()
        .enumerate()
        .filter(|(i, _)| excluded.binary_search(i).is_err())
        .map(|(_, q)| q)
        .collect();
    Ok(AuraOutcome {
        aggregate: aggregate_quantized(&kept)?,
        excluded,
        scaled,
        similarity,
    })
}

/// Malicious update and its perturbation scale.
#[derive(Clone, Debug, PartialEq)]
pub struct MinMaxResult {
    pub gradient: Vec<f64>,
    pub gamma: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Perturbation vector for `kind` from the benign gradients.
pub fn perturbation_vector(benign: &[Vec<f64>], kind: Perturbation) -> Result<Vec<f64>> {
    let n = benign.len() as f64;
    let d = benign.first().map(Vec::len).unwrap_or(0);
    let mean: Vec<f64> = (0..d)
        .map(|j| benign.iter().map(|g| g[j]).sum::<f64>() / n)
        .collect();
    let p: Vec<f64> = match kind {
        Perturbation::InverseUnit => {
            let norm = l2(&mean);
            if norm == 0.0 {
                return Err(Error::Input("benign mean is zero".into()));
            }
            mean.iter().map(|v| -v / norm).collect()
        }
        Perturbation::InverseStd => (0..d)
            .map(|j| -(benign.iter().map(|g| (g[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
            .collect(),
        Perturbation::InverseSign => mean
            .iter()
            .map(|v| {
                if *v > 0.0 {
                    -1.0
                } else if *v < 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
    };
    if p.iter().all(|v| *v == 0.0) {
        return Err(Error::Input("perturbation vector is zero".into()));
    }
    Ok(p)
}

/// Largest distance from `x` to any benign gradient.
pub fn max_distance(x: &[f64], benign: &[Vec<f64>]) -> f64 {
    benign.iter().map(|g| dist(x, g)).fold(0.0, f64::max)
}

/// Largest pairwise distance among benign gradients.
pub fn max_pairwise_distance(benign: &[Vec<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for (i, a) in benign.iter().enumerate() {
        for b in &benign[i + 1..] {
            best = best.max(dist(a, b));
        }
    }
    best
}

/// Min-Max attack with an explicit perturbation vector: the largest γ such
/// that mean + γ·p stays within the largest pairwise benign distance of
/// every benign gradient.
pub fn minmax_with_perturbation(
    benign: &[Vec<f64>],
    p: &[f64],
    cfg: &AttackConfig,
) -> Result<MinMaxResult> {
    if benign.len() < 2 {
        return Err(Error::Parameter(
            "Min-Max needs at least two benign gradients".into(),
        ));
    }
    let d = benign[0].len();
    for g in benign {
        ensure_len(d, g.len())?;
    }
    ensure_len(d, p.len())?;
    if p.iter().all(|v| *v == 0.0) {
        return Err(Error::Input("perturbation vector is zero".into()));
    }
    let n = benign.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|j| benign.iter().map(|g| g[j]).sum::<f64>() / n)
        .collect();
    let bound = max_pairwise_distance(benign);
    let at = |gamma: f64| -> Vec<f64> { mean.iter().zip(p).map(|(m, v)| m + gamma * v).collect() };
    let feasible = |gamma: f64| max_distance(&at(gamma), benign) <= bound;

    let (mut lo, mut hi) = (0.0, cfg.gamma_init.max(f64::MIN_POSITIVE));
    while feasible(hi) {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Input("Min-Max constraint is unbounded".into()));
        }
    }
    for _ in 0..cfg.max_bisections {
        if hi - lo < cfg.tolerance {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MinMaxResult {
        gradient: at(lo),
        gamma: lo,
    })
}

/// Min-Max attack with the perturbation chosen by `cfg`.
pub fn minmax_attack(benign: &[Vec<f64>], cfg: &AttackConfig) -> Result<MinMaxResult> {
    if benign.len() < 2 {
        return Err(Error::Parameter(
            "Min-Max needs at least two benign gradients".into(),
        ));
    }
    let p = perturbation_vector(benign, cfg.perturbation)?;
    minmax_with_perturbation(benign, &p, cfg)
}

/// Accepted deviation of claimed·reciprocal from one, in fixed point.
pub const RECIPROCAL_TOLERANCE: f64 = 2.0 * FXP_ULP;
/// Accepted relative deviation of the squared claimed norm.
pub const NORM_TOLERANCE: f64 = 1.0 / 1024.0;

/// Checks a client's claimed norm and its reciprocal against the bit-count
/// norm of its update. Both claims are rounded to fixed point first; the
/// product must equal one within [`RECIPROCAL_TOLERANCE`] and the squared
/// claim must match the squared norm within [`NORM_TOLERANCE`] (relative).
pub fn verify_client_norm(claimed: f64, reciprocal: f64, qv: &QuantizedVector) -> bool {
    let (Ok(c), Ok(r)) = (fxp_encode(claimed), fxp_encode(reciprocal)) else {
        return false;
    };
    let product = fxp_decode(c.mul_trunc(r));
    if (product - 1.0).abs() > RECIPROCAL_TOLERANCE + 1e-12 {
        return false;
    }
    let norm_sq = l2_norm_q(qv).powi(2);
    let claim_sq = fxp_decode(c).powi(2);
    (claim_sq - norm_sq).abs() <= NORM_TOLERANCE * norm_sq.max(FXP_ULP)
}
