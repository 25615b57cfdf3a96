//! Byte and JSON encodings of ciphertext vectors.
//!
//! Binary layout (all integers big-endian):
//!
//! ```text
//! u8      scheme tag (0 = null, 1 = paillier)
//! u8      key id length k, then k bytes of key id (ASCII)
//! u32     element count
//! repeat: u32 byte length L, then L bytes of the element magnitude
//! ```

use num_bigint::BigUint;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::cipher::{CipherError, CipherVector, SchemeTag};

impl CipherVector {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.push(self.scheme.to_byte());
        let id = self.key_id.as_bytes();
        out.push(id.len() as u8);
        out.extend_from_slice(id);
        out.extend_from_slice(&(self.elements.len() as u32).to_be_bytes());
        for e in &self.elements {
            let bytes = e.to_bytes_be();
            out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(&bytes);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CipherError> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let scheme = SchemeTag::from_byte(cursor.take(1)?[0])
            .ok_or_else(|| CipherError::Malformed("unknown scheme tag".into()))?;
        let id_len = cursor.take(1)?[0] as usize;
        let key_id = String::from_utf8(cursor.take(id_len)?.to_vec())
            .map_err(|_| CipherError::Malformed("key id is not UTF-8".into()))?;
        let count = cursor.u32()? as usize;
        let mut elements = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let len = cursor.u32()? as usize;
            elements.push(BigUint::from_bytes_be(cursor.take(len)?));
        }
        if cursor.pos != bytes.len() {
            return Err(CipherError::Malformed("trailing bytes".into()));
        }
        Ok(Self {
            scheme,
            key_id,
            elements,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CipherError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|end| *end <= self.bytes.len())
            .ok_or_else(|| CipherError::Malformed("truncated ciphertext".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CipherError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[derive(Serialize, Deserialize)]
struct CipherVectorJson {
    scheme: SchemeTag,
    key_id: String,
    dim: usize,
    payload: String,
}

impl Serialize for CipherVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        CipherVectorJson {
            scheme: self.scheme,
            key_id: self.key_id.clone(),
            dim: self.dim(),
            payload: hex::encode(self.to_bytes()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CipherVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let json = CipherVectorJson::deserialize(deserializer)?;
        let bytes = hex::decode(&json.payload).map_err(D::Error::custom)?;
        let v = CipherVector::from_bytes(&bytes).map_err(D::Error::custom)?;
        if v.dim() != json.dim || v.scheme != json.scheme || v.key_id != json.key_id {
            return Err(D::Error::custom("ciphertext header disagrees with payload"));
        }
        Ok(v)
    }
}
