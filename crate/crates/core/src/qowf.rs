//! Classical-input → product-state one-way functions.
//!
//! The input bit string is expanded with SHA-256 in counter mode into a
//! stream of 64-bit words. Each output qubit consumes two words `u₁, u₂`
//! (mapped to `[0, 1)` with 53-bit precision) and is prepared as
//! `cos θ|0⟩ + e^{iφ} sin θ|1⟩` with `θ = arccos √u₁`, `φ = 2π u₂`, which
//! samples the Bloch sphere uniformly.
//!
//! Hash input for block `c`:
//! `"qcheque/qowf/v1" ‖ u64be(bit length) ‖ packed bits ‖ u64be(c)`.

use std::f64::consts::TAU;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::qsim::{c, Amplitude, Owner, QubitHandle, World};

pub const QOWF_DOMAIN: &[u8] = b"qcheque/qowf/v1";

/// Non-empty bit string, packed MSB-first; unused trailing bits are zero.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "BitStringRepr", into = "BitStringRepr")]
pub struct BitString {
    bytes: Vec<u8>,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct BitStringRepr {
    bits: usize,
    hex: String,
}

impl TryFrom<BitStringRepr> for BitString {
    type Error = Error;

    fn try_from(r: BitStringRepr) -> Result<Self> {
        let bytes = hex::decode(&r.hex).map_err(|e| Error::Encoding(e.to_string()))?;
        BitString::new(bytes, r.bits)
    }
}

impl From<BitString> for BitStringRepr {
    fn from(b: BitString) -> Self {
        BitStringRepr {
            bits: b.len,
            hex: b.to_hex(),
        }
    }
}

impl BitString {
    pub fn new(bytes: Vec<u8>, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidArgument(
                "bit strings must be non-empty".into(),
            ));
        }
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::InvalidArgument(format!(
                "{} bytes cannot hold exactly {len} bits",
                bytes.len()
            )));
        }
        let spare = bytes.len() * 8 - len;
        if spare > 0 && bytes[bytes.len() - 1] & ((1u8 << spare) - 1) != 0 {
            return Err(Error::InvalidArgument("padding bits must be zero".into()));
        }
        Ok(BitString { bytes, len })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::new(bytes.to_vec(), bytes.len() * 8)
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let mut bytes = vec![0u8; bits.len().div_ceil(8)];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                bytes[i / 8] |= 0x80 >> (i % 8);
            }
        }
        Self::new(bytes, bits.len())
    }

    /// Big-endian encoding of `value` in `width` bits (`1..=64`).
    pub fn from_u64(value: u64, width: usize) -> Result<Self> {
        if width == 0 || width > 64 || (width < 64 && value >> width != 0) {
            return Err(Error::InvalidArgument(format!(
                "{value} does not fit in {width} bits"
            )));
        }
        Self::from_bits(
            &(0..width)
                .map(|i| (value >> (width - 1 - i)) & 1 == 1)
                .collect::<Vec<_>>(),
        )
    }

    /// Uniformly random string of `len` bits.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidArgument(
                "bit strings must be non-empty".into(),
            ));
        }
        let mut bytes = vec![0u8; len.div_ceil(8)];
        rng.fill_bytes(&mut bytes);
        let spare = bytes.len() * 8 - len;
        if spare > 0 {
            let last = bytes.len() - 1;
            bytes[last] &= !((1u8 << spare) - 1);
        }
        Self::new(bytes, len)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range");
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn flip_bit(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range");
        self.bytes[i / 8] ^= 0x80 >> (i % 8);
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    /// Unambiguous concatenation: each part is written as its 64-bit
    /// big-endian bit length followed by its packed bytes.
    pub fn framed(parts: &[&BitString]) -> BitString {
        let mut bytes = Vec::new();
        for p in parts {
            bytes.extend_from_slice(&(p.len as u64).to_be_bytes());
            bytes.extend_from_slice(&p.bytes);
        }
        let len = bytes.len() * 8;
        BitString { bytes, len }
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({} bits, {})", self.len, self.to_hex())
    }
}

/// Amount `M`, encoded as the decimal string of an integer number of units.
pub fn amount_bits(units: u64) -> BitString {
    BitString::from_bytes(units.to_string().as_bytes()).expect("decimal strings are non-empty")
}

/// Deterministic expansion of a bit string into a stream of 64-bit words.
pub trait Expander {
    fn expand(&self, input: &BitString, words: usize) -> Vec<u64>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Sha256Counter;

impl Expander for Sha256Counter {
    fn expand(&self, input: &BitString, words: usize) -> Vec<u64> {
        let mut out = Vec::with_capacity(words.next_multiple_of(4));
        let mut counter = 0u64;
        while out.len() < words {
            let mut h = Sha256::new();
            h.update(QOWF_DOMAIN);
            h.update((input.len() as u64).to_be_bytes());
            h.update(input.as_bytes());
            h.update(counter.to_be_bytes());
            let block = h.finalize();
            out.extend(
                block
                    .chunks_exact(8)
                    .map(|w| u64::from_be_bytes(w.try_into().expect("8-byte chunk"))),
            );
            counter += 1;
        }
        out.truncate(words);
        out
    }
}

/// Polar angles of one output qubit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Angles {
    pub theta: f64,
    pub phi: f64,
}

impl Angles {
    pub fn amplitudes(self) -> [Amplitude; 2] {
        let (s, co) = self.theta.sin_cos();
        [c(co, 0.0), Amplitude::from_polar(s, self.phi)]
    }
}

pub type AngleList = Vec<Angles>;

fn unit_interval(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn derive_angles(input: &BitString, n: usize) -> Result<AngleList> {
    derive_angles_with(&Sha256Counter, input, n)
}

pub fn derive_angles_with<E: Expander + ?Sized>(
    expander: &E,
    input: &BitString,
    n: usize,
) -> Result<AngleList> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "at least one output qubit is required".into(),
        ));
    }
    let words = expander.expand(input, 2 * n);
    Ok(words
        .chunks_exact(2)
        .map(|w| Angles {
            theta: unit_interval(w[0]).sqrt().acos(),
            phi: TAU * unit_interval(w[1]),
        })
        .collect())
}

pub fn f_input(k: &BitString, id: &BitString, r: &BitString, m: &BitString) -> BitString {
    BitString::framed(&[k, id, r, m])
}

pub fn g_input(r: &BitString, m: &BitString, i: usize) -> BitString {
    let idx = BitString::from_u64(i as u64, 32).expect("cheque positions fit in 32 bits");
    BitString::framed(&[r, m, &idx])
}

/// Classical description of `f(k‖id‖r‖M)`: one amplitude pair per qubit.
pub fn f_states(
    k: &BitString,
    id: &BitString,
    r: &BitString,
    m: &BitString,
    n: usize,
) -> Result<Vec<[Amplitude; 2]>> {
    Ok(derive_angles(&f_input(k, id, r, m), n)?
        .into_iter()
        .map(Angles::amplitudes)
        .collect())
}

/// Classical description of `g(r‖M‖i)`.
pub fn g_state(r: &BitString, m: &BitString, i: usize) -> [Amplitude; 2] {
    derive_angles(&g_input(r, m, i), 1).expect("n = 1")[0].amplitudes()
}

/// Allocates `f(k‖id‖r‖M)` as `n` fresh qubits held by `owner`.
#[allow(clippy::too_many_arguments)]
pub fn eval_f(
    world: &mut World,
    owner: Owner,
    k: &BitString,
    id: &BitString,
    r: &BitString,
    m: &BitString,
    n: usize,
) -> Result<Vec<QubitHandle>> {
    let states = f_states(k, id, r, m, n)?;
    world.alloc_register(owner, &states)
}

/// Allocates `g(r‖M‖i)` for cheque position `i ∈ 1..=l`.
pub fn eval_g(
    world: &mut World,
    owner: Owner,
    r: &BitString,
    m: &BitString,
    i: usize,
    l: usize,
) -> Result<QubitHandle> {
    if i == 0 || i > l {
        return Err(Error::IndexOutOfRange { index: i, max: l });
    }
    world.alloc(owner, g_state(r, m, i))
}

/// |⟨a|b⟩| of two product states given qubit by qubit.
pub fn product_overlap(a: &[[Amplitude; 2]], b: &[[Amplitude; 2]]) -> f64 {
    assert_eq!(a.len(), b.len(), "product states of different length");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x[0].conj() * y[0] + x[1].conj() * y[1]).norm())
        .product()
}
