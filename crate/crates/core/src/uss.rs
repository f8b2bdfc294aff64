//! Signature black box used to sign cheque serial numbers.
//!
//! [`SignatureScheme`] is the pluggable interface; [`Lamport`] is the
//! default: a hash-based one-time scheme over SHA-256. For security
//! parameter λ it signs a `2λ`-bit message digest by revealing one λ-bit
//! preimage per digest bit. Public-key leaves are `2λ`-bit hashes.
//!
//! Keys and signatures serialize to length-prefixed binary:
//! `u16be(len) ‖ scheme id ‖ u32be(λ) ‖ u32be(len) ‖ material [‖ used flag]`.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::qowf::BitString;

pub const LAMPORT_SCHEME_ID: &str = "lamport-sha256";
pub const DEFAULT_SECURITY: u32 = 128;
pub const MIN_SECURITY: u32 = 64;
const MAX_SECURITY: u32 = 128;

const MSG_DOMAIN: &[u8] = b"qcheque/lamport/msg";
const LEAF_DOMAIN: &[u8] = b"qcheque/lamport/leaf";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SecretKey {
    scheme: String,
    security: u32,
    material: Vec<u8>,
    used: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PublicKey {
    scheme: String,
    security: u32,
    material: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Signature {
    scheme: String,
    payload: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureKeyPair {
    pub sk: SecretKey,
    pub pk: PublicKey,
}

pub trait SignatureScheme {
    fn id(&self) -> &'static str;
    fn generate(&self, security: u32, rng: &mut dyn RngCore) -> Result<SignatureKeyPair>;
    fn sign(&self, sk: &mut SecretKey, message: &BitString) -> Result<Signature>;
    /// Total: malformed keys or signatures verify as `false`.
    fn verify(&self, pk: &PublicKey, message: &BitString, signature: &Signature) -> bool;
}

/// Hash-based one-time signatures.
#[derive(Clone, Copy, Debug, Default)]
pub struct Lamport;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LamportSizes {
    pub digest_bits: usize,
    pub preimage_bytes: usize,
    pub leaf_bytes: usize,
}

impl LamportSizes {
    pub fn for_security(security: u32) -> Result<Self> {
        if !(MIN_SECURITY..=MAX_SECURITY).contains(&security) || !security.is_multiple_of(8) {
            return Err(Error::InvalidArgument(format!(
                "security parameter {security} must be a multiple of 8 in {MIN_SECURITY}..={MAX_SECURITY}"
            )));
        }
        let s = security as usize;
        Ok(LamportSizes {
            digest_bits: 2 * s,
            preimage_bytes: s / 8,
            leaf_bytes: 2 * s / 8,
        })
    }

    pub fn secret_key_bytes(&self) -> usize {
        self.digest_bits * 2 * self.preimage_bytes
    }

    pub fn public_key_bytes(&self) -> usize {
        self.digest_bits * 2 * self.leaf_bytes
    }

    pub fn signature_bytes(&self) -> usize {
        self.digest_bits * self.preimage_bytes
    }
}

fn message_digest(message: &BitString, bits: usize) -> Vec<bool> {
    let mut h = Sha256::new();
    h.update(MSG_DOMAIN);
    h.update((message.len() as u64).to_be_bytes());
    h.update(message.as_bytes());
    let d = h.finalize();
    (0..bits)
        .map(|i| d[i / 8] & (0x80 >> (i % 8)) != 0)
        .collect()
}

fn leaf(preimage: &[u8], out: usize) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(LEAF_DOMAIN);
    h.update(preimage);
    h.finalize()[..out].to_vec()
}

impl SignatureScheme for Lamport {
    fn id(&self) -> &'static str {
        LAMPORT_SCHEME_ID
    }

    fn generate(&self, security: u32, rng: &mut dyn RngCore) -> Result<SignatureKeyPair> {
        let sizes = LamportSizes::for_security(security)?;
        let mut sk = vec![0u8; sizes.secret_key_bytes()];
        rng.fill_bytes(&mut sk);
        let pk: Vec<u8> = sk
            .chunks_exact(sizes.preimage_bytes)
            .flat_map(|p| leaf(p, sizes.leaf_bytes))
            .collect();
        Ok(SignatureKeyPair {
            sk: SecretKey {
                scheme: LAMPORT_SCHEME_ID.into(),
                security,
                material: sk,
                used: false,
            },
            pk: PublicKey {
                scheme: LAMPORT_SCHEME_ID.into(),
                security,
                material: pk,
            },
        })
    }

    fn sign(&self, sk: &mut SecretKey, message: &BitString) -> Result<Signature> {
        if sk.scheme != LAMPORT_SCHEME_ID {
            return Err(Error::Encoding(format!(
                "key belongs to scheme `{}`",
                sk.scheme
            )));
        }
        let sizes = LamportSizes::for_security(sk.security)?;
        if sk.material.len() != sizes.secret_key_bytes() {
            return Err(Error::Encoding("secret key has the wrong length".into()));
        }
        if sk.used {
            return Err(Error::KeyReused);
        }
        sk.used = true;
        let p = sizes.preimage_bytes;
        let mut payload = Vec::with_capacity(sizes.signature_bytes());
        for (i, bit) in message_digest(message, sizes.digest_bits)
            .into_iter()
            .enumerate()
        {
            let slot = 2 * i + bit as usize;
            payload.extend_from_slice(&sk.material[slot * p..(slot + 1) * p]);
        }
        Ok(Signature {
            scheme: LAMPORT_SCHEME_ID.into(),
            payload,
        })
    }

    fn verify(&self, pk: &PublicKey, message: &BitString, signature: &Signature) -> bool {
        if pk.scheme != LAMPORT_SCHEME_ID || signature.scheme != LAMPORT_SCHEME_ID {
            return false;
        }
        let Ok(sizes) = LamportSizes::for_security(pk.security) else {
            return false;
        };
        if pk.material.len() != sizes.public_key_bytes()
            || signature.payload.len() != sizes.signature_bytes()
        {
            return false;
        }
        let (p, h) = (sizes.preimage_bytes, sizes.leaf_bytes);
        message_digest(message, sizes.digest_bits)
            .into_iter()
            .enumerate()
            .all(|(i, bit)| {
                let slot = 2 * i + bit as usize;
                leaf(&signature.payload[i * p..(i + 1) * p], h)
                    == pk.material[slot * h..(slot + 1) * h]
            })
    }
}

/// Key generation with the default scheme.
pub fn sig_gen(security: u32, rng: &mut dyn RngCore) -> Result<SignatureKeyPair> {
    Lamport.generate(security, rng)
}

pub fn sig_sign(sk: &mut SecretKey, message: &BitString) -> Result<Signature> {
    Lamport.sign(sk, message)
}

pub fn sig_verify(pk: &PublicKey, message: &BitString, signature: &Signature) -> bool {
    Lamport.verify(pk, message, signature)
}

// ---------------------------------------------------------------------------
// Binary encoding
// ---------------------------------------------------------------------------

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Encoding(format!("truncated at byte {}", self.pos)));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn scheme(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Encoding("scheme id is not UTF-8".into()))
    }

    fn blob(&mut self) -> Result<Vec<u8>> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Encoding(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn put_scheme(out: &mut Vec<u8>, scheme: &str) {
    out.extend_from_slice(&(scheme.len() as u16).to_be_bytes());
    out.extend_from_slice(scheme.as_bytes());
}

fn put_blob(out: &mut Vec<u8>, blob: &[u8]) {
    out.extend_from_slice(&(blob.len() as u32).to_be_bytes());
    out.extend_from_slice(blob);
}

macro_rules! hex_codec {
    ($t:ty) => {
        impl $t {
            pub fn to_hex(&self) -> String {
                hex::encode(self.to_bytes())
            }

            pub fn from_hex(s: &str) -> Result<Self> {
                Self::from_bytes(&hex::decode(s).map_err(|e| Error::Encoding(e.to_string()))?)
            }
        }

        impl TryFrom<String> for $t {
            type Error = Error;

            fn try_from(s: String) -> Result<Self> {
                Self::from_hex(&s)
            }
        }

        impl From<$t> for String {
            fn from(v: $t) -> String {
                v.to_hex()
            }
        }
    };
}

impl SecretKey {
    pub fn is_used(&self) -> bool {
        self.used
    }

    pub fn security(&self) -> u32 {
        self.security
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_scheme(&mut out, &self.scheme);
        out.extend_from_slice(&self.security.to_be_bytes());
        put_blob(&mut out, &self.material);
        out.push(self.used as u8);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let scheme = r.scheme()?;
        let security = r.u32()?;
        let material = r.blob()?;
        let used = match r.take(1)?[0] {
            0 => false,
            1 => true,
            b => return Err(Error::Encoding(format!("bad used flag {b}"))),
        };
        r.finish()?;
        Ok(SecretKey {
            scheme,
            security,
            material,
            used,
        })
    }
}

impl PublicKey {
    pub fn security(&self) -> u32 {
        self.security
    }

    pub fn scheme(&self) -> &str {
        &self.scheme
    }

    pub fn len(&self) -> usize {
        self.material.len()
    }

    pub fn is_empty(&self) -> bool {
        self.material.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_scheme(&mut out, &self.scheme);
        out.extend_from_slice(&self.security.to_be_bytes());
        put_blob(&mut out, &self.material);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let scheme = r.scheme()?;
        let security = r.u32()?;
        let material = r.blob()?;
        r.finish()?;
        Ok(PublicKey {
            scheme,
            security,
            material,
        })
    }
}

impl Signature {
    pub fn len(&self) -> usize {
        self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payload.is_empty()
    }

    pub fn flip_bit(&mut self, i: usize) {
        self.payload[i / 8] ^= 0x80 >> (i % 8);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_scheme(&mut out, &self.scheme);
        put_blob(&mut out, &self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let scheme = r.scheme()?;
        let payload = r.blob()?;
        r.finish()?;
        Ok(Signature { scheme, payload })
    }
}

hex_codec!(SecretKey);
hex_codec!(PublicKey);
hex_codec!(Signature);
