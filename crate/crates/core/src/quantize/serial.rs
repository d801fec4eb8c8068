//! Byte-exact wire format of a [`QuantizedVector`].
//!
//! All integers are little-endian.
//!
//! | offset        | size | field                                          |
//! |---------------|------|------------------------------------------------|
//! | 0             | 4    | magic `QSAV`                                   |
//! | 4             | 1    | format version (1)                             |
//! | 5             | 1    | scheme tag: 0 = SQ, 1 = HSQ, 2 = KSQ           |
//! | 6             | 2    | Kashin frame layers (u16)                      |
//! | 8             | 8    | rotation / frame seed (u64)                    |
//! | 16            | 4    | original length m (u32)                        |
//! | 20            | 4    | chunk count c (u32)                            |
//! | 24 + 16·k     | 16   | chunk k: bit offset (u32), bit length (u32), s_min (i32), s_max (i32) |
//! | 24 + 16·c     | ⌈m'/8⌉ | payload: bit i in byte i/8 at position i mod 8 (LSB first) |
//!
//! Scales are sent as 32-bit fixed-point values (16 fractional bits), so a
//! decoded vector carries scales rounded to the nearest 2^-16. Kashin frames
//! are rebuilt with the default redundancy and granularity.

use crate::error::{Error, Result};
use crate::ring::{fxp_decode, fxp_encode, FxpValue, RingElement};

use super::{ChunkScales, Layout, QuantizeConfig, QuantizedVector, Scheme};

const MAGIC: &[u8; 4] = b"QSAV";
const VERSION: u8 = 1;
const HEADER: usize = 24;
const ENTRY: usize = 16;

/// Encodes `qv` in the wire format.
pub fn to_bytes(qv: &QuantizedVector) -> Result<Vec<u8>> {
    let c = qv.layout.spans.len();
    let payload = qv.bits.len().div_ceil(8);
    let mut out = Vec::with_capacity(HEADER + ENTRY * c + payload);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(qv.scheme().tag());
    out.extend_from_slice(&(qv.kashin.layers as u16).to_le_bytes());
    out.extend_from_slice(&qv.seed.to_le_bytes());
    out.extend_from_slice(&(qv.layout.m as u32).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    for (span, sc) in qv.layout.spans.iter().zip(&qv.scales) {
        out.extend_from_slice(&(span.offset as u32).to_le_bytes());
        out.extend_from_slice(&(span.len as u32).to_le_bytes());
        out.extend_from_slice(&fxp_encode(sc.s_min)?.raw.to_i32().to_le_bytes());
        out.extend_from_slice(&fxp_encode(sc.s_max)?.raw.to_i32().to_le_bytes());
    }
    let mut packed = vec![0u8; payload];
    for (i, b) in qv.bits.iter().enumerate() {
        packed[i / 8] |= (b & 1) << (i % 8);
    }
    out.extend_from_slice(&packed);
    Ok(out)
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("four bytes"))
}

fn read_i32(b: &[u8], at: usize) -> i32 {
    i32::from_le_bytes(b[at..at + 4].try_into().expect("four bytes"))
}

/// Decodes the wire format.
pub fn from_bytes(bytes: &[u8]) -> Result<QuantizedVector> {
    let bad = |msg: &str| Error::Input(format!("malformed quantized vector: {msg}"));
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(bad("missing header"));
    }
    if bytes[4] != VERSION {
        return Err(bad("unsupported version"));
    }
    let scheme = Scheme::from_tag(bytes[5])?;
    let layers = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let seed = u64::from_le_bytes(bytes[8..16].try_into().expect("eight bytes"));
    let m = read_u32(bytes, 16) as usize;
    let c = read_u32(bytes, 20) as usize;
    let mut cfg = QuantizeConfig::default();
    cfg.kashin.layers = layers;
    let layout = Layout::new(scheme, m, &cfg)?;
    if layout.spans.len() != c {
        return Err(bad("chunk count does not match the layout"));
    }
    let table_end = HEADER + ENTRY * c;
    let payload = layout.coeff_len().div_ceil(8);
    if bytes.len() != table_end + payload {
        return Err(bad("length does not match the chunk table"));
    }
    let mut scales = Vec::with_capacity(c);
    for (k, span) in layout.spans.iter().enumerate() {
        let at = HEADER + ENTRY * k;
        if read_u32(bytes, at) as usize != span.offset
            || read_u32(bytes, at + 4) as usize != span.len
        {
            return Err(bad("chunk table does not match the layout"));
        }
        let dec = |v: i32| fxp_decode(FxpValue::from_raw(RingElement(v as u32)));
        scales.push(ChunkScales {
            s_min: dec(read_i32(bytes, at + 8)),
            s_max: dec(read_i32(bytes, at + 12)),
        });
    }
    let bits = (0..layout.coeff_len())
        .map(|i| (bytes[table_end + i / 8] >> (i % 8)) & 1)
        .collect();
    Ok(QuantizedVector {
        layout,
        bits,
        scales,
        seed,
        kashin: cfg.kashin,
    })
}
