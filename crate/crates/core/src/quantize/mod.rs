//! One-bit stochastic quantization (SQ) and its rotated (HSQ) and Kashin
//! (KSQ) variants, plus the NMSE metric.
//!
//! A coordinate x with scales (s_min, s_max) becomes the bit
//! σ ~ Bernoulli((x − s_min)/(s_max − s_min)) and is reconstructed as
//! s_min + σ·(s_max − s_min), which is unbiased. HSQ and KSQ first apply a
//! linear, seed-derived transform per chunk, so sums of quantized vectors can
//! be decoded once after summation.

pub mod chunk;
pub mod hadamard;
pub mod kashin;
pub mod serial;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
pub use chunk::{chunk_overhead, chunk_plan, ChunkPlan, DEFAULT_MIN_CHUNK};
pub use hadamard::{fwht, hadamard_rotate, inverse_hadamard_rotate};
pub use kashin::{kashin_decompose, kashin_reconstruct, KashinFrame, KashinParams};

/// Bits used to transmit one scale.
pub const SCALE_BITS: u64 = 32;

/// Quantization scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "SQ")]
    Sq,
    #[serde(rename = "HSQ")]
    Hsq,
    #[serde(rename = "KSQ")]
    Ksq,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Sq, Scheme::Hsq, Scheme::Ksq];

    pub fn tag(self) -> u8 {
        match self {
            Scheme::Sq => 0,
            Scheme::Hsq => 1,
            Scheme::Ksq => 2,
        }
    }

    pub fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(Scheme::Sq),
            1 => Ok(Scheme::Hsq),
            2 => Ok(Scheme::Ksq),
            _ => Err(Error::Input(format!("unknown scheme tag {t}"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Sq => "SQ",
            Scheme::Hsq => "HSQ",
            Scheme::Ksq => "KSQ",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SQ" => Ok(Scheme::Sq),
            "HSQ" => Ok(Scheme::Hsq),
            "KSQ" => Ok(Scheme::Ksq),
            other => Err(Error::Parameter(format!("unknown scheme {other}"))),
        }
    }
}

/// Scale selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Scales {
    /// Per-chunk minimum and maximum of the client's own coefficients.
    Local,
    /// One pair shared by all clients; must bound every coefficient.
    Global { s_min: f64, s_max: f64 },
}

/// Shared settings of the quantizers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizeConfig {
    pub min_chunk: usize,
    pub kashin: KashinParams,
}

impl Default for QuantizeConfig {
    fn default() -> Self {
        QuantizeConfig {
            min_chunk: DEFAULT_MIN_CHUNK,
            kashin: KashinParams::default(),
        }
    }
}

/// Position of one chunk in the input and in the bit vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSpan {
    pub input_offset: usize,
    pub input_len: usize,
    pub offset: usize,
    pub len: usize,
}

/// Chunk layout of a scheme for input length m.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub scheme: Scheme,
    pub m: usize,
    pub spans: Vec<ChunkSpan>,
}

impl Layout {
    pub fn new(scheme: Scheme, m: usize, cfg: &QuantizeConfig) -> Result<Self> {
        if m == 0 {
            return Err(Error::Parameter("empty input".into()));
        }
        let sizes: Vec<(usize, usize)> = match scheme {
            Scheme::Sq => vec![(m, m)],
            Scheme::Hsq => chunk_plan(m, cfg.min_chunk)?
                .sizes
                .into_iter()
                .map(|s| (s, s))
                .collect(),
            Scheme::Ksq => chunk_plan(m, cfg.min_chunk)?
                .sizes
                .into_iter()
                .map(|s| (s, cfg.kashin.frame_len(s)))
                .collect(),
        };
        let mut spans = Vec::with_capacity(sizes.len());
        let (mut io, mut o) = (0, 0);
        for (input_len, len) in sizes {
            spans.push(ChunkSpan {
                input_offset: io,
                input_len,
                offset: o,
                len,
            });
            io += input_len;
            o += len;
        }
        Ok(Layout { scheme, m, spans })
    }

    /// Number of quantized coordinates m'.
    pub fn coeff_len(&self) -> usize {
        self.spans.last().map(|s| s.offset + s.len).unwrap_or(0)
    }

    /// Padded input length.
    pub fn padded_len(&self) -> usize {
        self.spans
            .last()
            .map(|s| s.input_offset + s.input_len)
            .unwrap_or(0)
    }

    /// Transmitted bits: payload plus two scales per chunk. Plain SQ is
    /// charged for the payload only.
    pub fn bit_count(&self) -> u64 {
        let payload = self.coeff_len() as u64;
        match self.scheme {
            Scheme::Sq => payload,
            _ => payload + 2 * SCALE_BITS * self.spans.len() as u64,
        }
    }
}

/// Transmitted bits of `scheme` for a gradient of length `m` (default settings).
pub fn bit_count(scheme: Scheme, m: usize) -> Result<u64> {
    Ok(Layout::new(scheme, m, &QuantizeConfig::default())?.bit_count())
}

fn chunk_seed(seed: u64, chunk: usize) -> u64 {
    crate::ring::SharedRandomness::new(seed)
        .derive(chunk as u64 + 1)
        .seed
}

/// Seeded linear transform of a scheme: identity, per-chunk randomized
/// Hadamard rotation, or per-chunk Kashin decomposition.
pub struct Transform {
    layout: Layout,
    seed: u64,
    hadamard_signs: Vec<Vec<f64>>,
    frames: Vec<KashinFrame>,
    kashin: KashinParams,
}

impl Transform {
    pub fn new(scheme: Scheme, m: usize, seed: u64, cfg: &QuantizeConfig) -> Result<Self> {
        let layout = Layout::new(scheme, m, cfg)?;
        let mut hadamard_signs = Vec::new();
        let mut frames = Vec::new();
        for (c, span) in layout.spans.iter().enumerate() {
            match scheme {
                Scheme::Sq => {}
                Scheme::Hsq => hadamard_signs.push(hadamard::rademacher_signs(
                    chunk_seed(seed, c),
                    span.input_len,
                )),
                Scheme::Ksq => frames.push(KashinFrame::new(
                    span.input_len,
                    span.len,
                    cfg.kashin.layers,
                    chunk_seed(seed, c),
                )),
            }
        }
        Ok(Transform {
            layout,
            seed,
            hadamard_signs,
            frames,
            kashin: cfg.kashin,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kashin_params(&self) -> KashinParams {
        self.kashin
    }

    /// Coefficients of length m'.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_len(self.layout.m, x.len())?;
        let mut padded = x.to_vec();
        padded.resize(self.layout.padded_len(), 0.0);
        let mut out = vec![0.0; self.layout.coeff_len()];
        for (c, span) in self.layout.spans.iter().enumerate() {
            let input = &padded[span.input_offset..span.input_offset + span.input_len];
            let coeffs = match self.layout.scheme {
                Scheme::Sq => input.to_vec(),
                Scheme::Hsq => hadamard::rotate_with_signs(input, &self.hadamard_signs[c])?,
                Scheme::Ksq => kashin_decompose(&self.frames[c], input, &self.kashin)?,
            };
            out[span.offset..span.offset + span.len].copy_from_slice(&coeffs);
        }
        Ok(out)
    }

    /// Inverse (synthesis) map from m' coefficients back to length m.
    pub fn inverse(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        ensure_len(self.layout.coeff_len(), coeffs.len())?;
        let mut out = vec![0.0; self.layout.padded_len()];
        for (c, span) in self.layout.spans.iter().enumerate() {
            let a = &coeffs[span.offset..span.offset + span.len];
            let x = match self.layout.scheme {
                Scheme::Sq => a.to_vec(),
                Scheme::Hsq => hadamard::inverse_with_signs(a, &self.hadamard_signs[c])?,
                Scheme::Ksq => kashin_reconstruct(&self.frames[c], a)?,
            };
            out[span.input_offset..span.input_offset + span.input_len].copy_from_slice(&x);
        }
        out.truncate(self.layout.m);
        Ok(out)
    }
}

/// Scales of one chunk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkScales {
    pub s_min: f64,
    pub s_max: f64,
}

/// A client's compressed gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedVector {
    pub layout: Layout,
    /// One entry (0 or 1) per coefficient.
    pub bits: Vec<u8>,
    pub scales: Vec<ChunkScales>,
    /// Seed of the rotation or frame (unused for SQ).
    pub seed: u64,
    pub kashin: KashinParams,
}

impl QuantizedVector {
    pub fn scheme(&self) -> Scheme {
        self.layout.scheme
    }

    /// Per-coefficient reconstruction s_min + σ·(s_max − s_min), before the inverse transform.
    pub fn dequantize_coefficients(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.bits.len()];
        for (span, sc) in self.layout.spans.iter().zip(&self.scales) {
            let range = span.offset..span.offset + span.len;
            for (o, b) in out[range.clone()].iter_mut().zip(&self.bits[range]) {
                *o = sc.s_min + *b as f64 * (sc.s_max - sc.s_min);
            }
        }
        out
    }

    pub fn config(&self) -> QuantizeConfig {
        QuantizeConfig {
            min_chunk: DEFAULT_MIN_CHUNK,
            kashin: self.kashin,
        }
    }

    /// Transform that decodes this vector.
    pub fn transform(&self) -> Result<Transform> {
        Transform::new(self.layout.scheme, self.layout.m, self.seed, &self.config())
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Input(format!("coordinate {i} is not finite"))),
        None => Ok(()),
    }
}

/// Stochastic one-bit quantization of already-transformed coefficients.
pub fn quantize_coefficients<R: Rng + ?Sized>(
    layout: &Layout,
    coeffs: &[f64],
    scales: Scales,
    rng: &mut R,
) -> Result<(Vec<u8>, Vec<ChunkScales>)> {
    ensure_len(layout.coeff_len(), coeffs.len())?;
    check_finite(coeffs)?;
    let mut bits = vec![0u8; coeffs.len()];
    let mut out_scales = Vec::with_capacity(layout.spans.len());
    for span in &layout.spans {
        let chunk = &coeffs[span.offset..span.offset + span.len];
        let (lo, hi) = chunk
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        let sc = match scales {
            Scales::Local => ChunkScales {
                s_min: lo,
                s_max: hi,
            },
            Scales::Global { s_min, s_max } => {
                if s_min > lo || s_max < hi {
                    return Err(Error::Input(format!(
                        "global scales [{s_min}, {s_max}] do not bound [{lo}, {hi}]"
                    )));
                }
                ChunkScales { s_min, s_max }
            }
        };
        let range = sc.s_max - sc.s_min;
        if range > 0.0 {
            for (b, &v) in bits[span.offset..span.offset + span.len]
                .iter_mut()
                .zip(chunk)
            {
                let p = (v - sc.s_min) / range;
                *b = (rng.random::<f64>() < p) as u8;
            }
        }
        out_scales.push(sc);
    }
    Ok((bits, out_scales))
}

/// Quantizes `x` with any scheme using a prepared transform.
pub fn quantize_with<R: Rng + ?Sized>(
    transform: &Transform,
    x: &[f64],
    scales: Scales,
    rng: &mut R,
) -> Result<QuantizedVector> {
    check_finite(x)?;
    let coeffs = transform.forward(x)?;
    let (bits, scales) = quantize_coefficients(transform.layout(), &coeffs, scales, rng)?;
    Ok(QuantizedVector {
        layout: transform.layout().clone(),
        bits,
        scales,
        seed: transform.seed(),
        kashin: transform.kashin,
    })
}

/// Quantizes `x` with `scheme`; `seed` keys the rotation or frame.
pub fn quantize<R: Rng + ?Sized>(
    scheme: Scheme,
    x: &[f64],
    scales: Scales,
    seed: u64,
    cfg: &QuantizeConfig,
    rng: &mut R,
) -> Result<QuantizedVector> {
    check_finite(x)?;
    let t = Transform::new(scheme, x.len(), seed, cfg)?;
    quantize_with(&t, x, scales, rng)
}

/// Plain stochastic quantization.
pub fn sq_quantize<R: Rng + ?Sized>(
    x: &[f64],
    scales: Scales,
    rng: &mut R,
) -> Result<QuantizedVector> {
    quantize(Scheme::Sq, x, scales, 0, &QuantizeConfig::default(), rng)
}

/// Randomized-Hadamard rotation followed by per-chunk SQ with local scales.
pub fn hsq_quantize<R: Rng + ?Sized>(x: &[f64], seed: u64, rng: &mut R) -> Result<QuantizedVector> {
    quantize(
        Scheme::Hsq,
        x,
        Scales::Local,
        seed,
        &QuantizeConfig::default(),
        rng,
    )
}

/// Kashin decomposition followed by per-chunk SQ with local scales.
pub fn ksq_quantize<R: Rng + ?Sized>(x: &[f64], seed: u64, rng: &mut R) -> Result<QuantizedVector> {
    quantize(
        Scheme::Ksq,
        x,
        Scales::Local,
        seed,
        &QuantizeConfig::default(),
        rng,
    )
}

/// Reconstruction of a quantized vector in the input domain.
pub fn dequantize(qv: &QuantizedVector) -> Result<Vec<f64>> {
    qv.transform()?.inverse(&qv.dequantize_coefficients())
}

/// Decodes the sum of vectors quantized with one layout, seed and global
/// scales from their per-coordinate bit counts only:
/// Σ x̂ = T⁻¹(n·s_min + count·(s_max − s_min)).
pub fn dequantize_bit_sum(qvs: &[QuantizedVector]) -> Result<Vec<f64>> {
    let first = qvs
        .first()
        .ok_or_else(|| Error::Parameter("no vectors to aggregate".into()))?;
    let mut counts = vec![0u32; first.bits.len()];
    for qv in qvs {
        if qv.layout != first.layout || qv.seed != first.seed || qv.scales != first.scales {
            return Err(Error::Parameter(
                "vectors differ in layout, seed or scales".into(),
            ));
        }
        counts
            .iter_mut()
            .zip(&qv.bits)
            .for_each(|(c, b)| *c += *b as u32);
    }
    let n = qvs.len() as f64;
    let mut coeffs = vec![0.0; counts.len()];
    for (span, sc) in first.layout.spans.iter().zip(&first.scales) {
        for i in span.offset..span.offset + span.len {
            coeffs[i] = n * sc.s_min + counts[i] as f64 * (sc.s_max - sc.s_min);
        }
    }
    first.transform()?.inverse(&coeffs)
}

/// Normalized mean squared error of an aggregate against the true mean:
/// ‖mean − agg‖² / (Σ‖v_i‖² / n).
pub fn nmse(agg: &[f64], originals: &[Vec<f64>]) -> Result<f64> {
    if originals.is_empty() {
        return Err(Error::Parameter("no original vectors".into()));
    }
    let d = agg.len();
    for v in originals {
        ensure_len(d, v.len())?;
    }
    let n = originals.len() as f64;
    let mut mean = vec![0.0; d];
    let mut energy = 0.0;
    for v in originals {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
            energy += x * x;
        }
    }
    if energy == 0.0 {
        return Err(Error::DivisionByZero(
            "all original vectors are zero".into(),
        ));
    }
    let err: f64 = mean.iter().zip(agg).map(|(m, a)| (m / n - a).powi(2)).sum();
    Ok(err / (energy / n))
}
