//! Binary registry files.
//!
//! All integers and floats are little-endian; floats are IEEE-754 binary64
//! written bit for bit. See `docs/registry-format.md` for the byte layout.

use std::fs;
use std::io::Write;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};

use super::registry::FORMAT_VERSION;
use super::{AutoencoderModel, ClassCentroids, ExpertEntry, InputKind, Preprocessing, Registry, TrainFingerprint};
use crate::nn::{Activation, BatchNorm1d, Dense, Matrix};
use crate::preprocess::Standardization;
use crate::{Error, FormatError, Result};

pub const MAGIC: [u8; 4] = *b"EXRG";
const HEADER_LEN: usize = 12;
const CHECKSUM_LEN: usize = 8;
const CHECKSUM: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

pub fn registry_to_bytes(registry: &Registry) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(registry.len() as u32).to_le_bytes());
    for entry in registry.iter() {
        let mut section = Writer::default();
        section.entry(entry);
        out.extend_from_slice(&(section.buf.len() as u64).to_le_bytes());
        out.extend_from_slice(&section.buf);
    }
    let sum = CHECKSUM.checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

pub fn registry_from_bytes(bytes: &[u8]) -> Result<Registry> {
    let len = bytes.len();
    if len < 4 {
        return Err(FormatError::Truncated {
            offset: 0,
            needed: 4,
            len,
        }
        .into());
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(FormatError::BadMagic { found: magic }.into());
    }
    if len < 8 {
        return Err(FormatError::Truncated {
            offset: 4,
            needed: 4,
            len,
        }
        .into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(FormatError::Version {
            found: version,
            supported: FORMAT_VERSION,
        }
        .into());
    }
    if len < HEADER_LEN + CHECKSUM_LEN {
        return Err(FormatError::Truncated {
            offset: 8,
            needed: HEADER_LEN + CHECKSUM_LEN - 8,
            len,
        }
        .into());
    }
    let body_end = len - CHECKSUM_LEN;
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().expect("8 bytes"));
    let computed = CHECKSUM.checksum(&bytes[..body_end]);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed }.into());
    }

    let mut r = Reader {
        buf: &bytes[..body_end],
        pos: 8,
    };
    let count = r.u32()? as usize;
    let mut registry = Registry::new();
    for i in 0..count {
        let section_len = r.u64()? as usize;
        let start = r.pos;
        let end = start
            .checked_add(section_len)
            .filter(|&e| e <= r.buf.len())
            .ok_or(FormatError::Truncated {
                offset: start,
                needed: section_len,
                len: r.buf.len(),
            })?;
        let mut section = Reader {
            buf: &r.buf[..end],
            pos: start,
        };
        let entry = section.entry()?;
        if section.pos != end {
            return Err(FormatError::Malformed(format!("entry {i} has {} unread bytes", end - section.pos)).into());
        }
        r.pos = end;
        registry.push(entry).map_err(|e| match e {
            Error::DuplicateExpert(id) => FormatError::Malformed(format!("duplicate expert id `{id}`")).into(),
            Error::InvalidInput(msg) => FormatError::Malformed(msg).into(),
            other => other,
        })?;
    }
    if r.pos != r.buf.len() {
        return Err(FormatError::Malformed(format!("{} trailing bytes before checksum", r.buf.len() - r.pos)).into());
    }
    Ok(registry)
}

/// Writes the registry to `path` through a temporary file and a rename, so
/// readers never observe a partial file.
pub fn save_registry(registry: &Registry, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = registry_to_bytes(registry);
    let tmp = path.with_extension("tmp");
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::file(path, e))
}

pub fn load_registry(path: impl AsRef<Path>) -> Result<Registry> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    registry_from_bytes(&bytes)
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Sigmoid => 1,
        Activation::Identity => 2,
    }
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn dense(&mut self, d: &Dense) {
        self.u32(d.in_dim() as u32);
        self.u32(d.out_dim() as u32);
        self.f64s(d.weights().data());
        self.f64s(d.bias());
    }

    fn entry(&mut self, e: &ExpertEntry) {
        self.str(&e.expert_id);
        self.str(&e.display_name);
        match e.preprocessing.kind {
            InputKind::Image => self.u8(0),
            InputKind::PooledVector { source_len } => {
                self.u8(1);
                self.u64(source_len);
            }
        }
        match &e.preprocessing.standardization {
            None => self.u8(0),
            Some(s) => {
                self.u8(1);
                self.u32(s.mean.len() as u32);
                self.f64s(&s.mean);
                self.f64s(&s.std);
            }
        }
        self.u64(e.fingerprint.seed);
        self.u32(e.fingerprint.epochs);
        self.u64(e.fingerprint.samples);

        let ae = &e.autoencoder;
        self.u8(activation_code(ae.output_activation()));
        self.dense(ae.encoder());
        let bn = ae.norm();
        self.u32(bn.features() as u32);
        self.f64s(&[bn.momentum(), bn.epsilon()]);
        self.f64s(bn.gamma());
        self.f64s(bn.beta());
        self.f64s(bn.running_mean());
        self.f64s(bn.running_var());
        self.dense(ae.decoder());

        match &e.centroids {
            None => self.u8(0),
            Some(c) => {
                self.u8(1);
                self.u32(c.len() as u32);
                self.u32(c.dim() as u32);
                for &id in c.class_ids() {
                    self.u32(id);
                }
                for &n in c.counts() {
                    self.u64(n);
                }
                self.f64s(c.matrix().data());
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(FormatError::Truncated {
                offset: self.pos,
                needed: n,
                len: self.buf.len(),
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| malformed("array length overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| malformed("string is not UTF-8"))
    }

    fn dense(&mut self) -> Result<Dense> {
        let in_dim = self.u32()? as usize;
        let out_dim = self.u32()? as usize;
        let weights = Matrix::from_vec(out_dim, in_dim, self.f64s(in_dim * out_dim)?)?;
        let bias = self.f64s(out_dim)?;
        Dense::from_parts(weights, bias).map_err(|e| malformed(&e.to_string()))
    }

    fn entry(&mut self) -> Result<ExpertEntry> {
        let expert_id = self.str()?;
        let display_name = self.str()?;
        let kind = match self.u8()? {
            0 => InputKind::Image,
            1 => InputKind::PooledVector {
                source_len: self.u64()?,
            },
            t => return Err(malformed(&format!("unknown input kind tag {t}"))),
        };
        let standardization = match self.u8()? {
            0 => None,
            1 => {
                let n = self.u32()? as usize;
                Some(Standardization {
                    mean: self.f64s(n)?,
                    std: self.f64s(n)?,
                })
            }
            t => return Err(malformed(&format!("unknown standardization flag {t}"))),
        };
        let fingerprint = TrainFingerprint {
            seed: self.u64()?,
            epochs: self.u32()?,
            samples: self.u64()?,
        };

        let output = match self.u8()? {
            0 => Activation::Relu,
            1 => Activation::Sigmoid,
            2 => Activation::Identity,
            t => return Err(malformed(&format!("unknown activation tag {t}"))),
        };
        let encoder = self.dense()?;
        let features = self.u32()? as usize;
        let hyper = self.f64s(2)?;
        let norm = BatchNorm1d::from_parts(
            self.f64s(features)?,
            self.f64s(features)?,
            self.f64s(features)?,
            self.f64s(features)?,
            hyper[0],
            hyper[1],
        )
        .map_err(|e| malformed(&e.to_string()))?;
        let decoder = self.dense()?;
        let autoencoder =
            AutoencoderModel::from_parts(encoder, norm, decoder, output).map_err(|e| malformed(&e.to_string()))?;

        let centroids = match self.u8()? {
            0 => None,
            1 => {
                let n = self.u32()? as usize;
                let dim = self.u32()? as usize;
                let ids = (0..n).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
                let counts = (0..n).map(|_| self.u64()).collect::<Result<Vec<_>>>()?;
                let data = Matrix::from_vec(n, dim, self.f64s(n * dim)?)?;
                Some(ClassCentroids::new(ids, counts, data).map_err(|e| malformed(&e.to_string()))?)
            }
            t => return Err(malformed(&format!("unknown centroid flag {t}"))),
        };

        Ok(ExpertEntry {
            expert_id,
            display_name,
            autoencoder,
            centroids,
            preprocessing: Preprocessing { kind, standardization },
            fingerprint,
        })
    }
}

fn malformed(msg: &str) -> Error {
    FormatError::Malformed(msg.to_string()).into()
}
