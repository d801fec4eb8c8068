//! Kashin representation over a randomized Hadamard tight frame.
//!
//! The frame for an input of length `s` has `D = ⌈λ·s / g⌉·g` columns
//! (g = 512 by default). It is the first `s` rows of an orthogonal D×D
//! operator Q, built as a product of layers. Each layer applies a random
//! permutation of the D coordinates and then a randomized Hadamard transform
//! to a power-of-two window (alternately the leading and the trailing P
//! coordinates, P the largest power of two ≤ D). The synthesis operator
//! U = Q[..s, ..] therefore has orthonormal rows, U·Uᵀ = I.
//!
//! Decomposition alternates between adding the clipped analysis coefficients
//! of the residual and recomputing the residual. The clipping level is
//! `level · ‖r‖ / √D`. A final unclipped correction step makes the
//! representation exact, so `reconstruct(decompose(x)) = x` up to rounding.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::hadamard::fwht_normalized;
use crate::error::{ensure_len, Result};
use crate::ring::{Role, SharedRandomness};

/// Parameters of the decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KashinParams {
    /// Redundancy factor λ.
    pub lambda: f64,
    /// Frame dimensions are rounded up to a multiple of this.
    pub granularity: usize,
    /// Number of clip-and-update iterations.
    pub iterations: usize,
    /// Clipping level relative to ‖r‖/√D.
    pub level: f64,
    /// Number of permutation + Hadamard layers in the frame.
    pub layers: usize,
}

impl Default for KashinParams {
    fn default() -> Self {
        KashinParams {
            lambda: 1.15,
            granularity: 512,
            iterations: 10,
            level: 1.0,
            layers: 6,
        }
    }
}

impl KashinParams {
    /// Number of frame coefficients for an input of length `s`.
    pub fn frame_len(&self, s: usize) -> usize {
        let g = self.granularity.max(1);
        let target = (self.lambda * s as f64).ceil() as usize;
        target.div_ceil(g) * g
    }
}

struct Layer {
    offset: usize,
    window: usize,
    signs: Vec<f64>,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
}

/// Seeded tight frame with `input_len` rows and `frame_len` columns.
pub struct KashinFrame {
    input_len: usize,
    frame_len: usize,
    layers: Vec<Layer>,
}

impl KashinFrame {
    pub fn new(input_len: usize, frame_len: usize, layers: usize, seed: u64) -> Self {
        assert!(
            frame_len >= input_len && input_len > 0,
            "frame must be at least as long as its input"
        );
        let window = if frame_len.is_power_of_two() {
            frame_len
        } else {
            frame_len.next_power_of_two() >> 1
        };
        let mut rng = SharedRandomness::new(seed).stream(Role::Public, 0x4B53);
        let layers = (0..layers.max(1))
            .map(|l| {
                let offset = if l % 2 == 0 { 0 } else { frame_len - window };
                let signs = (0..window)
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect();
                let mut perm: Vec<usize> = (0..frame_len).collect();
                perm.shuffle(&mut rng);
                let mut inv_perm = vec![0; frame_len];
                for (i, &p) in perm.iter().enumerate() {
                    inv_perm[p] = i;
                }
                Layer {
                    offset,
                    window,
                    signs,
                    perm,
                    inv_perm,
                }
            })
            .collect();
        KashinFrame {
            input_len,
            frame_len,
            layers,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    /// Analysis Uᵀ·x: coefficients of length D.
    pub fn analysis(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_len(self.input_len, x.len())?;
        let mut y = vec![0.0; self.frame_len];
        y[..self.input_len].copy_from_slice(x);
        let mut tmp = vec![0.0; self.frame_len];
        for layer in &self.layers {
            for (t, &p) in tmp.iter_mut().zip(&layer.perm) {
                *t = y[p];
            }
            std::mem::swap(&mut y, &mut tmp);
            let w = &mut y[layer.offset..layer.offset + layer.window];
            w.iter_mut().zip(&layer.signs).for_each(|(v, s)| *v *= s);
            fwht_normalized(w)?;
        }
        Ok(y)
    }

    /// Synthesis U·a: a vector of the input length.
    pub fn synthesis(&self, a: &[f64]) -> Result<Vec<f64>> {
        ensure_len(self.frame_len, a.len())?;
        let mut y = a.to_vec();
        let mut tmp = vec![0.0; self.frame_len];
        for layer in self.layers.iter().rev() {
            let w = &mut y[layer.offset..layer.offset + layer.window];
            fwht_normalized(w)?;
            w.iter_mut().zip(&layer.signs).for_each(|(v, s)| *v *= s);
            for (t, &p) in tmp.iter_mut().zip(&layer.inv_perm) {
                *t = y[p];
            }
            std::mem::swap(&mut y, &mut tmp);
        }
        y.truncate(self.input_len);
        Ok(y)
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Kashin coefficients of `x` over `frame`.
pub fn kashin_decompose(frame: &KashinFrame, x: &[f64], params: &KashinParams) -> Result<Vec<f64>> {
    ensure_len(frame.input_len(), x.len())?;
    let d = frame.frame_len() as f64;
    let mut a = vec![0.0; frame.frame_len()];
    let mut r = x.to_vec();
    for _ in 0..params.iterations {
        let norm = l2(&r);
        if norm == 0.0 {
            break;
        }
        let level = params.level * norm / d.sqrt();
        let b = frame.analysis(&r)?;
        a.iter_mut()
            .zip(&b)
            .for_each(|(ai, bi)| *ai += bi.clamp(-level, level));
        let rec = frame.synthesis(&a)?;
        r.iter_mut()
            .zip(x.iter().zip(&rec))
            .for_each(|(ri, (xi, yi))| *ri = xi - yi);
    }
    let correction = frame.analysis(&r)?;
    a.iter_mut().zip(&correction).for_each(|(ai, ci)| *ai += ci);
    Ok(a)
}

/// Linear frame synthesis of Kashin coefficients.
pub fn kashin_reconstruct(frame: &KashinFrame, a: &[f64]) -> Result<Vec<f64>> {
    frame.synthesis(a)
}
