//! Decomposition of a gradient into power-of-two chunks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default smallest chunk.
pub const DEFAULT_MIN_CHUNK: usize = 512;

/// Fraction of the original length that padding may waste before the planner
/// prefers splitting the remainder further.
pub const DEFAULT_PAD_TOLERANCE: f64 = 0.005;

/// Chunk sizes covering a vector of length `m`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    /// Original length.
    pub m: usize,
    /// Non-increasing powers of two.
    pub sizes: Vec<usize>,
    /// Padded total Σ sizes.
    pub total: usize,
}

impl ChunkPlan {
    /// Start offset of every chunk.
    pub fn offsets(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .scan(0usize, |acc, s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }
}

/// Plans chunks for length `m` with the default padding tolerance.
pub fn chunk_plan(m: usize, min_chunk: usize) -> Result<ChunkPlan> {
    chunk_plan_with_tolerance(m, min_chunk, DEFAULT_PAD_TOLERANCE)
}

/// Greedy plan: repeatedly take the largest power of two not exceeding the
/// remainder, except that the remainder is padded up to the next power of two
/// (and the plan ends) as soon as that wastes at most `tolerance · m` entries
/// or the remainder is below `min_chunk`.
pub fn chunk_plan_with_tolerance(m: usize, min_chunk: usize, tolerance: f64) -> Result<ChunkPlan> {
    if m == 0 {
        return Err(Error::Parameter("chunk plan needs m ≥ 1".into()));
    }
    if !min_chunk.is_power_of_two() {
        return Err(Error::Parameter(format!(
            "min_chunk {min_chunk} is not a power of two"
        )));
    }
    let budget = tolerance * m as f64;
    let mut sizes = Vec::new();
    let mut rem = m;
    while rem > 0 {
        if rem <= min_chunk {
            sizes.push(min_chunk);
            break;
        }
        let up = rem.next_power_of_two();
        if (up - rem) as f64 <= budget {
            sizes.push(up);
            break;
        }
        let down = up >> 1;
        sizes.push(down);
        rem -= down;
    }
    let total = sizes.iter().sum();
    Ok(ChunkPlan { m, sizes, total })
}

/// Relative overhead (padded length plus two scales of `scale_bits` bits per
/// chunk, over m) of the default plan.
pub fn chunk_overhead(m: usize, min_chunk: usize, scale_bits: u32) -> Result<f64> {
    let plan = chunk_plan(m, min_chunk)?;
    let bits = plan.total as f64 + 2.0 * scale_bits as f64 * plan.len() as f64;
    Ok(bits / m as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lenet_plan() {
        let p = chunk_plan(61706, 512).unwrap();
        assert_eq!(p.sizes, vec![32768, 16384, 8192, 4096, 512]);
        assert_eq!(p.total, 61952);
        assert_eq!(p.offsets(), vec![0, 32768, 49152, 57344, 61440]);
    }

    #[test]
    fn power_of_two_is_single_chunk() {
        assert_eq!(chunk_plan(1024, 512).unwrap().sizes, vec![1024]);
    }

    #[test]
    fn small_inputs_pad_to_min_chunk() {
        assert_eq!(chunk_plan(3, 512).unwrap().sizes, vec![512]);
        assert!(chunk_plan(0, 512).is_err());
        assert!(chunk_plan(10, 500).is_err());
    }

    #[test]
    fn resnet9_plan_total() {
        let p = chunk_plan(4903242, 512).unwrap();
        assert_eq!(p.sizes, vec![4194304, 524288, 131072, 65536]);
        assert_eq!(p.total, 4915200);
    }

    /// Five chunks carrying two 64-bit scales each: (61952 + 640 − 61706)/61706.
    #[test]
    fn lenet_overhead() {
        let o = chunk_overhead(61706, 512, 64).unwrap();
        assert!((o - 886.0 / 61706.0).abs() < 1e-12);
        assert!((o * 100.0 - 1.44).abs() < 0.005);
    }

    proptest! {
        #[test]
        fn plan_invariants(m in 1usize..5_000_000) {
            let p = chunk_plan(m, 512).unwrap();
            prop_assert!(p.total >= m);
            prop_assert!(p.sizes.iter().all(|s| s.is_power_of_two() && *s >= 512));
            prop_assert!(p.sizes.windows(2).all(|w| w[0] >= w[1]));
            // Every chunk but the last lies entirely inside the original vector.
            let prefix: usize = p.sizes[..p.len() - 1].iter().sum();
            prop_assert!(prefix < m);
        }
    }
}
