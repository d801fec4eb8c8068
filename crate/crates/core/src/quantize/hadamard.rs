//! Fast Walsh–Hadamard transform and the randomized Hadamard rotation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ring::{Role, SharedRandomness};

/// In-place unnormalized Walsh–Hadamard transform (Sylvester ordering).
pub fn fwht(data: &mut [f64]) -> Result<()> {
    let n = data.len();
    if !n.is_power_of_two() {
        return Err(Error::Parameter(format!(
            "length {n} is not a power of two"
        )));
    }
    let mut h = 1;
    while h < n {
        for block in data.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    Ok(())
}

/// Orthonormal transform (1/√m)·H.
pub fn fwht_normalized(data: &mut [f64]) -> Result<()> {
    fwht(data)?;
    let s = 1.0 / (data.len() as f64).sqrt();
    data.iter_mut().for_each(|v| *v *= s);
    Ok(())
}

/// Random ±1 diagonal of length `m` derived from `seed`.
pub fn rademacher_signs(seed: u64, m: usize) -> Vec<f64> {
    let mut rng = SharedRandomness::new(seed).stream(Role::Public, 0x4844);
    (0..m)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

/// y = (1/√m)·H·D·x with D the seed-derived sign diagonal.
pub fn hadamard_rotate(x: &[f64], seed: u64) -> Result<Vec<f64>> {
    rotate_with_signs(x, &rademacher_signs(seed, x.len()))
}

/// x = D·(1/√m)·H·y, the inverse of [`hadamard_rotate`].
pub fn inverse_hadamard_rotate(y: &[f64], seed: u64) -> Result<Vec<f64>> {
    inverse_with_signs(y, &rademacher_signs(seed, y.len()))
}

/// Forward rotation with an explicit sign diagonal.
pub fn rotate_with_signs(x: &[f64], signs: &[f64]) -> Result<Vec<f64>> {
    crate::error::ensure_len(x.len(), signs.len())?;
    let mut y: Vec<f64> = x.iter().zip(signs).map(|(a, s)| a * s).collect();
    fwht_normalized(&mut y)?;
    Ok(y)
}

/// Inverse rotation with an explicit sign diagonal.
pub fn inverse_with_signs(y: &[f64], signs: &[f64]) -> Result<Vec<f64>> {
    crate::error::ensure_len(y.len(), signs.len())?;
    let mut x = y.to_vec();
    fwht_normalized(&mut x)?;
    x.iter_mut().zip(signs).for_each(|(v, s)| *v *= s);
    Ok(x)
}
