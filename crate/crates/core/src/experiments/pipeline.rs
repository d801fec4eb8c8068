//! Plaintext model of the secure aggregation pipelines.
//!
//! The simulated servers in [`crate::mpc`] reveal exactly the values computed
//! here, but sharing every bit of a thousand clients is slow. This model
//! reproduces the output distribution directly: in approximate mode each
//! converted bit is m + (1 − 2m)·Λ̃, where Λ̃ is the approximate conversion of
//! a freshly sampled Boolean sharing of the mask λ and m = b ⊕ λ is the
//! masked bit.

use rand::Rng;

use crate::bitconv::{approx_value_from_weight, ConversionMode};
use crate::error::{Error, Result};
use crate::mpc::Approach;
use crate::quantize::{quantize_coefficients, QuantizedVector, Scales, Transform};

/// Converted value of every bit in `bits`.
fn convert_bits<R: Rng + ?Sized>(
    bits: &[u8],
    q: usize,
    mode: ConversionMode,
    rng: &mut R,
) -> Vec<f64> {
    match mode {
        ConversionMode::Exact => bits.iter().map(|&b| b as f64).collect(),
        ConversionMode::Approx => {
            let by_weight: Vec<f64> = (0..=q).map(|w| approx_value_from_weight(w, q)).collect();
            let mask = if q >= 32 { u32::MAX } else { (1u32 << q) - 1 };
            bits.iter()
                .map(|&b| {
                    let w = (rng.random::<u32>() & mask).count_ones() as usize;
                    let m = (b as usize ^ w) & 1;
                    let lam = by_weight[w];
                    if m == 1 {
                        1.0 - lam
                    } else {
                        lam
                    }
                })
                .collect()
        }
    }
}

/// Mean update the pipeline reveals, decoded to the input domain.
///
/// All updates must share a layout and transform seed. The global-scale
/// pipeline also requires identical scales.
pub fn simulate_secure_mean<R: Rng + ?Sized>(
    qvs: &[QuantizedVector],
    approach: Approach,
    mode: ConversionMode,
    q: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let first = qvs
        .first()
        .ok_or_else(|| Error::Parameter("no updates to aggregate".into()))?;
    if !(2..=32).contains(&q) {
        return Err(Error::Parameter(format!(
            "server count {q} outside [2, 32]"
        )));
    }
    for qv in qvs {
        if qv.layout != first.layout || qv.seed != first.seed || qv.kashin != first.kashin {
            return Err(Error::Parameter(
                "updates differ in layout or transform seed".into(),
            ));
        }
        if approach == Approach::Global && qv.scales != first.scales {
            return Err(Error::Parameter(
                "the global-scale pipeline needs identical scales".into(),
            ));
        }
    }
    let n = qvs.len() as f64;
    let len = first.bits.len();
    let mut coeffs = vec![0.0; len];
    match approach {
        Approach::I | Approach::II => {
            for qv in qvs {
                let bits = convert_bits(&qv.bits, q, mode, rng);
                for (span, sc) in qv.layout.spans.iter().zip(&qv.scales) {
                    let diff = sc.s_max - sc.s_min;
                    for i in span.offset..span.offset + span.len {
                        coeffs[i] += sc.s_min + bits[i] * diff;
                    }
                }
            }
            coeffs.iter_mut().for_each(|c| *c /= n);
        }
        Approach::III | Approach::Global => {
            let mut bit_sums = vec![0.0; len];
            for qv in qvs {
                let bits = convert_bits(&qv.bits, q, mode, rng);
                bit_sums.iter_mut().zip(&bits).for_each(|(s, b)| *s += b);
            }
            for (c, span) in first.layout.spans.iter().enumerate() {
                let (lo, diff) = if approach == Approach::Global {
                    let sc = first.scales[c];
                    (sc.s_min, sc.s_max - sc.s_min)
                } else {
                    let lo: f64 = qvs.iter().map(|qv| qv.scales[c].s_min).sum::<f64>() / n;
                    let diff: f64 = qvs
                        .iter()
                        .map(|qv| qv.scales[c].s_max - qv.scales[c].s_min)
                        .sum::<f64>()
                        / n;
                    (lo, diff)
                };
                for i in span.offset..span.offset + span.len {
                    coeffs[i] = lo + (bit_sums[i] / n) * diff;
                }
            }
        }
    }
    first.transform()?.inverse(&coeffs)
}

/// Quantizes one round of client vectors with a common transform.
///
/// Global scales are the minimum and maximum over every client's
/// coefficients. `rng_for(i)` supplies client `i`'s Bernoulli randomness.
pub fn quantize_round<R: Rng>(
    transform: &Transform,
    xs: &[Vec<f64>],
    global: bool,
    rng_for: impl Fn(usize) -> R + Sync,
) -> Result<Vec<QuantizedVector>> {
    use rayon::prelude::*;
    let coeffs: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|x| transform.forward(x))
        .collect::<Result<_>>()?;
    let scales = if global {
        let (lo, hi) = coeffs
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Input("coefficients are not finite".into()));
        }
        Scales::Global {
            s_min: lo,
            s_max: hi,
        }
    } else {
        Scales::Local
    };
    let layout = transform.layout();
    let template = QuantizedVector {
        layout: layout.clone(),
        bits: Vec::new(),
        scales: Vec::new(),
        seed: transform.seed(),
        kashin: transform.kashin_params(),
    };
    coeffs
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let (bits, scales) = quantize_coefficients(layout, c, scales, &mut rng_for(i))?;
            Ok(QuantizedVector {
                bits,
                scales,
                ..template.clone()
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitconv::ConversionMode::{Approx, Exact};
    use crate::quantize::{dequantize, QuantizeConfig, Scheme};
    use crate::ring::{Role, SharedRandomness};
    use rand_chacha::ChaCha20Rng;

    fn round(
        scheme: Scheme,
        n: usize,
        d: usize,
        global: bool,
        seed: u64,
    ) -> (Vec<Vec<f64>>, Vec<QuantizedVector>) {
        let shared = SharedRandomness::new(seed);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..d)
                    .map(|j| ((i * 7 + j * 3) % 11) as f64 - 4.0)
                    .collect()
            })
            .collect();
        let t = Transform::new(scheme, d, 99, &QuantizeConfig::default()).unwrap();
        let qvs =
            quantize_round(&t, &xs, global, |i| shared.stream(Role::Quantizer(i), 0)).unwrap();
        (xs, qvs)
    }

    fn rng() -> ChaCha20Rng {
        SharedRandomness::new(1).stream(Role::Dealer, 0)
    }

    /// Exact conversion with Approaches I/II is the mean of the dequantized updates.
    #[test]
    fn exact_matches_dequantized_mean() {
        for scheme in Scheme::ALL {
            let (_, qvs) = round(scheme, 4, 40, false, 3);
            let got = simulate_secure_mean(&qvs, Approach::II, Exact, 3, &mut rng()).unwrap();
            let deq: Vec<Vec<f64>> = qvs.iter().map(|q| dequantize(q).unwrap()).collect();
            for (j, g) in got.iter().enumerate() {
                let want = deq.iter().map(|v| v[j]).sum::<f64>() / 4.0;
                assert!((g - want).abs() < 1e-9, "{scheme} {j}");
            }
        }
    }

    #[test]
    fn sepagg_matches_exact_for_one_client() {
        for scheme in Scheme::ALL {
            let (_, qvs) = round(scheme, 1, 40, false, 4);
            let a = simulate_secure_mean(&qvs, Approach::I, Exact, 3, &mut rng()).unwrap();
            let b = simulate_secure_mean(&qvs, Approach::III, Exact, 3, &mut rng()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn global_pipeline_matches_bit_sum_decoding() {
        let (_, qvs) = round(Scheme::Hsq, 5, 32, true, 5);
        let got = simulate_secure_mean(&qvs, Approach::Global, Exact, 3, &mut rng()).unwrap();
        let want = crate::quantize::dequantize_bit_sum(&qvs).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w / 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn global_pipeline_rejects_local_scales() {
        let (_, mut qvs) = round(Scheme::Sq, 3, 16, false, 6);
        qvs[1].scales[0].s_max += 1.0;
        assert!(simulate_secure_mean(&qvs, Approach::Global, Exact, 3, &mut rng()).is_err());
        assert!(simulate_secure_mean(&[], Approach::I, Exact, 3, &mut rng()).is_err());
        assert!(simulate_secure_mean(&qvs, Approach::I, Exact, 1, &mut rng()).is_err());
    }

    /// Averaged over masks, approximate conversion leaves the mean unchanged.
    #[test]
    fn approx_is_unbiased_over_masks() {
        let (_, qvs) = round(Scheme::Sq, 2, 8, false, 7);
        let exact = simulate_secure_mean(&qvs, Approach::II, Exact, 3, &mut rng()).unwrap();
        for q in [3, 4] {
            let mut r = rng();
            let trials = 20000;
            let mut sum = [0.0; 8];
            let mut sq = [0.0; 8];
            for _ in 0..trials {
                let v = simulate_secure_mean(&qvs, Approach::II, Approx, q, &mut r).unwrap();
                for j in 0..8 {
                    sum[j] += v[j];
                    sq[j] += v[j] * v[j];
                }
            }
            let t = trials as f64;
            for j in 0..8 {
                let mean = sum[j] / t;
                let stderr = ((sq[j] / t - mean * mean) / t).sqrt();
                assert!(
                    (mean - exact[j]).abs() < 5.0 * stderr + 1e-9,
                    "q={q}: {mean} vs {}",
                    exact[j]
                );
            }
        }
    }

    #[test]
    fn global_scales_bound_all_clients() {
        let (_, qvs) = round(Scheme::Sq, 3, 16, true, 8);
        let sc = qvs[0].scales[0];
        assert!(qvs.iter().all(|q| q.scales[0] == sc));
        assert_eq!(sc.s_min, -4.0);
        assert_eq!(sc.s_max, 6.0);
    }
}
