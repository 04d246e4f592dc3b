//! Save/load of complete training artifacts.
//!
//! Binary layout, little-endian throughout:
//!
//! ```text
//! magic    b"AHLC"
//! version  u32 (currently 1)
//! config   string (JSON-serialized model config)
//! params   tensor table
//! vocabs   u32 count; per entry: string role, string path, 32-byte SHA-256
//! optim    u8 flag; if 1: f64 lr, f64 momentum, u32 epoch, f64 best_valid,
//!          then a tensor table of velocities
//! ```
//!
//! A *string* is a `u32` length followed by that many UTF-8 bytes; a *tensor
//! table* is a `u32` count of entries, each `string name, u32 ndim, ndim ×
//! u32 dims, raw f32 data`. Tensors are written in the canonical
//! [`ModelParams::visit`] order, and loading checks every name and shape
//! against the config, so a round trip is exact to the bit.

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::params::ModelParams;
use numkit::Tensor;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"AHLC";
const VERSION: u32 = 1;

/// Provenance of one vocabulary file the model was built against. The hash
/// is authoritative; the path is a hint for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabRef {
    /// What the vocabulary maps: e.g. "words", "phones", "target".
    pub role: String,
    pub path: String,
    pub sha256: [u8; 32],
}

impl VocabRef {
    /// Builds a reference by hashing the file's current content.
    pub fn for_file(role: &str, path: &Path) -> Result<Self> {
        Ok(VocabRef {
            role: role.to_string(),
            path: path.to_string_lossy().into_owned(),
            sha256: sha256_file(path)?,
        })
    }
}

/// SHA-256 of a file's raw bytes.
pub fn sha256_file(path: &Path) -> Result<[u8; 32]> {
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Sha256::digest(&bytes).into())
}

/// Optimizer state carried across save/load so training can resume.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub lr: f64,
    pub momentum: f64,
    /// Epochs completed when the snapshot was taken.
    pub epoch: u32,
    pub best_valid: f64,
    /// One velocity tensor per parameter, named and ordered identically to
    /// [`ModelParams::visit`].
    pub velocity: Vec<(String, Tensor<f32>)>,
}

/// Everything needed to reload a model: configuration, parameters, the
/// identity of the vocabularies it was trained with, and (for resumable
/// snapshots) optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams<f32>,
    pub vocab_refs: Vec<VocabRef>,
    pub optim: Option<OptimState>,
}

impl Checkpoint {
    /// Serializes to `path`, writing a sibling temp file first and renaming
    /// into place so a crash never leaves a half-written checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let buf = self.to_bytes()?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let io_err = |source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        };
        fs::write(&tmp, &buf).map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes).map_err(|detail| ModelError::BadCheckpoint {
            path: path.to_path_buf(),
            detail,
        })
    }

    fn to_bytes(&self) -> Result<Vec<u8>> {
        self.config.validate()?;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        put_u32(&mut buf, VERSION);

        let json = serde_json::to_string(&self.config)
            .expect("model config serializes infallibly");
        put_str(&mut buf, &json);

        let flat = self.params.to_flat();
        put_tensor_table(&mut buf, flat.iter().map(|(n, t)| (n.as_str(), t)));

        put_u32(&mut buf, self.vocab_refs.len() as u32);
        for v in &self.vocab_refs {
            put_str(&mut buf, &v.role);
            put_str(&mut buf, &v.path);
            buf.extend_from_slice(&v.sha256);
        }

        match &self.optim {
            None => buf.push(0),
            Some(o) => {
                buf.push(1);
                buf.extend_from_slice(&o.lr.to_le_bytes());
                buf.extend_from_slice(&o.momentum.to_le_bytes());
                put_u32(&mut buf, o.epoch);
                buf.extend_from_slice(&o.best_valid.to_le_bytes());
                put_tensor_table(&mut buf, o.velocity.iter().map(|(n, t)| (n.as_str(), t)));
            }
        }
        Ok(buf)
    }

    fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { buf: bytes, off: 0 };
        if r.take(4)? != MAGIC {
            return Err("not a checkpoint file (bad magic)".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!(
                "unsupported format version {version} (this build reads {VERSION})"
            ));
        }

        let json = r.str()?;
        let config: ModelConfig = serde_json::from_str(&json)
            .map_err(|e| format!("config block does not parse: {e}"))?;
        config
            .validate()
            .map_err(|e| format!("config block is invalid: {e}"))?;

        let mut params = ModelParams::<f32>::zeros(&config)
            .map_err(|e| format!("cannot allocate parameters: {e}"))?;
        read_tensor_table_into(&mut r, "parameter", &mut params)?;

        let n_vocabs = r.u32()? as usize;
        let mut vocab_refs = Vec::with_capacity(n_vocabs);
        for _ in 0..n_vocabs {
            let role = r.str()?;
            let path = r.str()?;
            let sha: [u8; 32] = r.take(32)?.try_into().expect("length checked");
            vocab_refs.push(VocabRef {
                role,
                path,
                sha256: sha,
            });
        }

        let optim = match r.u8()? {
            0 => None,
            1 => {
                let lr = r.f64()?;
                let momentum = r.f64()?;
                let epoch = r.u32()?;
                let best_valid = r.f64()?;
                let mut velocity = ModelParams::<f32>::zeros(&config)
                    .map_err(|e| format!("cannot allocate velocity: {e}"))?;
                read_tensor_table_into(&mut r, "velocity", &mut velocity)?;
                let velocity = velocity
                    .to_flat()
                    .into_iter()
                    .map(|(n, t)| (n, t.detached()))
                    .collect();
                Some(OptimState {
                    lr,
                    momentum,
                    epoch,
                    best_valid,
                    velocity,
                })
            }
            other => return Err(format!("optimizer flag must be 0 or 1, found {other}")),
        };

        if r.off != bytes.len() {
            return Err(format!(
                "{} trailing bytes after checkpoint payload",
                bytes.len() - r.off
            ));
        }
        Ok(Checkpoint {
            config,
            params,
            vocab_refs,
            optim,
        })
    }
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

fn put_tensor_table<'a>(buf: &mut Vec<u8>, entries: impl ExactSizeIterator<Item = (&'a str, &'a Tensor<f32>)>) {
    put_u32(buf, entries.len() as u32);
    for (name, t) in entries {
        put_str(buf, name);
        put_u32(buf, t.shape().len() as u32);
        for &d in t.shape() {
            put_u32(buf, d as u32);
        }
        for &v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Reads a tensor table directly into `target`'s tensors, enforcing the
/// canonical names, order, and shapes.
fn read_tensor_table_into(
    r: &mut Reader,
    what: &str,
    target: &mut ModelParams<f32>,
) -> std::result::Result<(), String> {
    let count = r.u32()? as usize;
    let expected = {
        let mut n = 0usize;
        target.visit(|_, _| n += 1);
        n
    };
    if count != expected {
        return Err(format!(
            "{what} table holds {count} tensors but the config calls for {expected}"
        ));
    }
    let mut pending: std::result::Result<(), String> = Ok(());
    target.visit_mut(|name, t| {
        if pending.is_err() {
            return;
        }
        pending = (|| {
            let found = r.str()?;
            if found != name {
                return Err(format!("{what} table: expected tensor {name:?}, found {found:?}"));
            }
            let ndim = r.u32()? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(r.u32()? as usize);
            }
            if dims != t.shape() {
                return Err(format!(
                    "{what} tensor {name:?} has shape {dims:?} but the config calls for {:?}",
                    t.shape()
                ));
            }
            let raw = r.take(4 * t.len())?;
            for (dst, src) in t.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
                *dst = f32::from_le_bytes(src.try_into().expect("chunk of 4"));
            }
            if !t.all_finite() {
                return Err(format!("{what} tensor {name:?} contains non-finite values"));
            }
            Ok(())
        })();
    });
    pending
}

struct Reader<'a> {
    buf: &'a [u8],
    off: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.buf.len() - self.off < n {
            return Err(format!(
                "file truncated: wanted {n} bytes at offset {}, have {}",
                self.off,
                self.buf.len() - self.off
            ));
        }
        let s = &self.buf[self.off..self.off + n];
        self.off += n;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> std::result::Result<String, String> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| "string field is not UTF-8".into())
    }
}
