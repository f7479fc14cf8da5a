//! Binary container framing shared by all on-disk artifacts.
//!
//! Layout: `magic | u32 version | payload | u64 CRC64`, all integers
//! little-endian. The checksum covers every byte before it.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crc::{Crc, CRC_64_ECMA_182};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_ECMA_182);

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: String },
    #[error("unsupported version {found} (expected {expected})")]
    BadVersion { found: u32, expected: u32 },
    #[error("checksum mismatch or truncated file")]
    Checksum,
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl FormatError {
    pub fn code(&self) -> &'static str {
        match self {
            FormatError::BadMagic { .. } => "FMT_BAD_MAGIC",
            FormatError::BadVersion { .. } => "FMT_BAD_VERSION",
            FormatError::Checksum => "FMT_CHECKSUM",
            FormatError::Malformed(_) => "FMT_MALFORMED",
            FormatError::Io(_) => "FMT_IO",
        }
    }
}

/// 32-byte content hash used to tie artifacts to the model or vocabulary
/// that produced them.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn of(bytes: &[u8]) -> Self {
        Fingerprint(Sha256::digest(bytes).into())
    }

    pub fn hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn short(&self) -> String {
        self.hex()[..12].to_string()
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", self.short())
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex())
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.hex())
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 64 {
            return Err(serde::de::Error::custom("fingerprint must be 64 hex chars"));
        }
        let mut out = [0u8; 32];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
                .map_err(serde::de::Error::custom)?;
        }
        Ok(Fingerprint(out))
    }
}

/// Incremental hasher producing a [`Fingerprint`].
#[derive(Default, Clone)]
pub struct FingerprintHasher(Sha256);

impl FingerprintHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.update((b.len() as u64).to_le_bytes());
        self.0.update(b);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.update(v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.0.update(v.to_bits().to_le_bytes());
        self
    }

    pub fn finish(&self) -> Fingerprint {
        Fingerprint(self.0.clone().finalize().into())
    }
}

/// Little-endian payload builder.
#[derive(Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new(magic: &[u8], version: u32) -> Self {
        let mut buf = Vec::with_capacity(1 << 12);
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&version.to_le_bytes());
        ByteWriter { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn raw(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn u32_slice(&mut self, v: &[u32]) {
        self.u64(v.len() as u64);
        for x in v {
            self.u32(*x);
        }
    }

    pub fn u64_slice(&mut self, v: &[u64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.u64(*x);
        }
    }

    pub fn f32_slice_raw(&mut self, v: &[f32]) {
        for x in v {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
    }

    /// Appends the checksum and returns the finished container bytes.
    pub fn finish(mut self) -> Vec<u8> {
        let crc = CRC64.checksum(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

/// Cursor over a verified container payload.
pub struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    /// Verifies checksum, magic and version, returning a reader positioned
    /// at the start of the payload.
    pub fn open(bytes: &'a [u8], magic: &[u8], version: u32) -> Result<Self, FormatError> {
        let header = magic.len() + 4;
        if bytes.len() < header + 8 {
            return Err(FormatError::Checksum);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8-byte tail"));
        if CRC64.checksum(body) != stored {
            return Err(FormatError::Checksum);
        }
        if &body[..magic.len()] != magic {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        let found = u32::from_le_bytes(body[magic.len()..header].try_into().expect("u32"));
        if found != version {
            return Err(FormatError::BadVersion {
                found,
                expected: version,
            });
        }
        Ok(ByteReader {
            data: body,
            pos: header,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.data.len() - self.pos < n {
            return Err(FormatError::Malformed(format!(
                "payload ends early at byte {}",
                self.pos
            )));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn raw(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        self.take(n)
    }

    pub fn fingerprint(&mut self) -> Result<Fingerprint, FormatError> {
        Ok(Fingerprint(self.take(32)?.try_into().unwrap()))
    }

    pub fn str(&mut self) -> Result<String, FormatError> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|e| FormatError::Malformed(e.to_string()))
    }

    fn len_prefix(&mut self, elem: usize) -> Result<usize, FormatError> {
        let n = self.u64()? as usize;
        if n.saturating_mul(elem) > self.data.len() - self.pos {
            return Err(FormatError::Malformed("array length exceeds payload".into()));
        }
        Ok(n)
    }

    pub fn u32_vec(&mut self) -> Result<Vec<u32>, FormatError> {
        let n = self.len_prefix(4)?;
        let b = self.take(n * 4)?;
        Ok(b.chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn u64_vec(&mut self) -> Result<Vec<u64>, FormatError> {
        let n = self.len_prefix(8)?;
        let b = self.take(n * 8)?;
        Ok(b.chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn f32_vec_raw(&mut self, n: usize) -> Result<Vec<f32>, FormatError> {
        if n.saturating_mul(4) > self.data.len() - self.pos {
            return Err(FormatError::Malformed("matrix exceeds payload".into()));
        }
        let b = self.take(n * 4)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn finish(self) -> Result<(), FormatError> {
        if self.pos != self.data.len() {
            return Err(FormatError::Malformed(format!(
                "{} trailing bytes",
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Writes `bytes` to `path` through a temporary sibling so readers never
/// observe a partially written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<u64, FormatError> {
    let tmp = path.with_extension("partial");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(bytes.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_checksum() {
        let mut w = ByteWriter::new(b"TESTMAGC", 3);
        w.u32(7);
        w.str("hello");
        w.u32_slice(&[1, 2, 3]);
        let bytes = w.finish();

        let mut r = ByteReader::open(&bytes, b"TESTMAGC", 3).unwrap();
        assert_eq!(r.u32().unwrap(), 7);
        assert_eq!(r.str().unwrap(), "hello");
        assert_eq!(r.u32_vec().unwrap(), vec![1, 2, 3]);
        r.finish().unwrap();

        for cut in [0, 5, bytes.len() - 1] {
            assert!(matches!(
                ByteReader::open(&bytes[..cut], b"TESTMAGC", 3),
                Err(FormatError::Checksum)
            ));
        }
        let mut flipped = bytes.clone();
        flipped[14] ^= 1;
        assert!(matches!(
            ByteReader::open(&flipped, b"TESTMAGC", 3),
            Err(FormatError::Checksum)
        ));
        assert!(matches!(
            ByteReader::open(&bytes, b"OTHERMAG", 3),
            Err(FormatError::BadMagic { .. })
        ));
        assert!(matches!(
            ByteReader::open(&bytes, b"TESTMAGC", 4),
            Err(FormatError::BadVersion { found: 3, .. })
        ));
    }

    #[test]
    fn fingerprint_serde() {
        let fp = Fingerprint::of(b"abc");
        let s = serde_json::to_string(&fp).unwrap();
        let back: Fingerprint = serde_json::from_str(&s).unwrap();
        assert_eq!(fp, back);
    }
}
