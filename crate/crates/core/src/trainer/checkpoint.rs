//! Binary checkpoint format.
//!
//! ```text
//! "SFSR" | version u32 | sha256(arch json) [32]
//! record* : name_len u32 | name utf-8 | dtype u8 | dims 4 x u32 | payload (LE)
//! crc32 of everything before it, u32
//! ```
//!
//! All integers are little-endian. dtype 0 is f32, 1 is f64 and 2 is raw
//! bytes (used for the JSON metadata record).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::{AdamConfig, AdamState};
use super::config::{Stage, TrainConfig};
use crate::degradation::DegradeNetConfig;
use crate::error::{CheckpointError, Error, Result};
use crate::params::ParamStore;
use crate::srnet::{ProgressiveState, SrNetConfig};
use crate::tensor::{DType, Scalar, Shape, Tensor};

pub const MAGIC: [u8; 4] = *b"SFSR";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 32;
const BYTES_TAG: u8 = 2;
const META: &str = "meta";

/// Everything needed to rebuild the networks of a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub stage: Stage,
    pub scale_factor: u32,
    pub degrade_net: Option<DegradeNetConfig>,
    pub sr_net: Option<SrNetConfig>,
}

impl ArchConfig {
    pub fn from_train(cfg: &TrainConfig) -> Self {
        Self {
            stage: cfg.stage,
            scale_factor: cfg.scale_factor,
            degrade_net: (cfg.stage == Stage::Degrade).then_some(cfg.degrade_net),
            sr_net: cfg.stage.is_sr().then(|| cfg.sr_config()),
        }
    }

    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("arch serializes");
        Sha256::digest(&json).into()
    }

    pub fn degrade(&self) -> Result<&DegradeNetConfig> {
        self.degrade_net
            .as_ref()
            .ok_or_else(|| stage_mismatch("degrade", self.stage.name()))
    }

    pub fn sr(&self) -> Result<&SrNetConfig> {
        self.sr_net
            .as_ref()
            .ok_or_else(|| stage_mismatch("sr or sr_unpaired", self.stage.name()))
    }
}

fn stage_mismatch(expected: &str, found: &str) -> Error {
    CheckpointError::StageMismatch {
        expected: expected.into(),
        found: found.into(),
    }
    .into()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    arch: ArchConfig,
    iter: u64,
    progress: Option<ProgressiveState>,
    adam: BTreeMap<String, (u64, AdamConfig)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub arch: ArchConfig,
    /// Number of completed iterations.
    pub iter: u64,
    pub progress: Option<ProgressiveState>,
    pub params: ParamStore<T>,
    /// Optimizer state per network prefix (`"g."`, `"d."`).
    pub adam: BTreeMap<String, AdamState<T>>,
}

fn put_record(out: &mut Vec<u8>, name: &str, tag: u8, dims: [usize; 4], payload: &[u8]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(tag);
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(payload);
}

fn put_tensor<T: Scalar>(out: &mut Vec<u8>, name: &str, t: &Tensor<T>) {
    let mut payload = Vec::with_capacity(t.len() * 8);
    for &v in t.data() {
        match T::DTYPE {
            DType::F32 => payload.extend_from_slice(&(v.f64() as f32).to_le_bytes()),
            DType::F64 => payload.extend_from_slice(&v.f64().to_le_bytes()),
        }
    }
    put_record(out, name, T::DTYPE as u8, t.shape().0, &payload);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

enum Payload<T> {
    Tensor(Tensor<T>),
    Bytes(Vec<u8>),
}

fn read_record<T: Scalar>(
    r: &mut Reader,
) -> std::result::Result<(String, Payload<T>), CheckpointError> {
    let len = r.u32()? as usize;
    let name = std::str::from_utf8(r.take(len)?)
        .map_err(|_| CheckpointError::Malformed("record name is not UTF-8".into()))?
        .to_string();
    let tag = r.take(1)?[0];
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let numel = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| CheckpointError::Malformed(format!("{name}: dims overflow")))?;
    let bad = |m: &str| CheckpointError::Malformed(format!("{name}: {m}"));
    let payload = match tag {
        0 => {
            let raw = r.take(numel.checked_mul(4).ok_or_else(|| bad("size overflow"))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
                .collect();
            Payload::Tensor(Tensor::new(Shape(dims), data).map_err(|_| bad("shape"))?)
        }
        1 => {
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| bad("size overflow"))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
                .collect();
            Payload::Tensor(Tensor::new(Shape(dims), data).map_err(|_| bad("shape"))?)
        }
        BYTES_TAG => Payload::Bytes(r.take(numel)?.to_vec()),
        t => return Err(bad(&format!("unknown dtype tag {t}"))),
    };
    Ok((name, payload))
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.arch.digest());
        let meta = Meta {
            arch: self.arch.clone(),
            iter: self.iter,
            progress: self.progress.clone(),
            adam: self
                .adam
                .iter()
                .map(|(k, s)| (k.clone(), (s.t, s.cfg)))
                .collect(),
        };
        let json = serde_json::to_vec(&meta).expect("meta serializes");
        put_record(&mut out, META, BYTES_TAG, [1, 1, 1, json.len()], &json);
        for (name, p) in self.params.iter() {
            put_tensor(&mut out, &format!("p/{name}"), &p.value);
            put_tensor(&mut out, &format!("s/{name}"), &Tensor::scalar(p.scale));
        }
        for (net, s) in &self.adam {
            for (name, m) in &s.m {
                put_tensor(&mut out, &format!("m/{net}/{name}"), m);
            }
            for (name, v) in &s.v {
                put_tensor(&mut out, &format!("v/{net}/{name}"), v);
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic.into());
        }
        if bytes.len() < HEADER_LEN + 4 {
            return Err(CheckpointError::Truncated.into());
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(CheckpointError::Checksum { stored, computed }.into());
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version).into());
        }
        let digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");

        let mut meta: Option<Meta> = None;
        let mut values = BTreeMap::new();
        let mut scales = BTreeMap::new();
        let mut moments: BTreeMap<(String, bool), BTreeMap<String, Tensor<T>>> = BTreeMap::new();
        while !r.done() {
            let (name, payload) = read_record::<T>(&mut r)?;
            let malformed = |m: &str| CheckpointError::Malformed(format!("{name}: {m}"));
            match payload {
                Payload::Bytes(b) if name == META => {
                    meta = Some(serde_json::from_slice(&b).map_err(|e| malformed(&e.to_string()))?);
                }
                Payload::Tensor(t) => {
                    if let Some(p) = name.strip_prefix("p/") {
                        values.insert(p.to_string(), t);
                    } else if let Some(p) = name.strip_prefix("s/") {
                        if t.len() != 1 {
                            return Err(malformed("scale is not a scalar").into());
                        }
                        scales.insert(p.to_string(), t.item());
                    } else if let Some((first, rest)) = name
                        .strip_prefix("m/")
                        .map(|r| (true, r))
                        .or_else(|| name.strip_prefix("v/").map(|r| (false, r)))
                    {
                        let (net, pname) = rest
                            .split_once('/')
                            .ok_or_else(|| malformed("moment name"))?;
                        moments
                            .entry((net.to_string(), first))
                            .or_default()
                            .insert(pname.to_string(), t);
                    } else {
                        return Err(malformed("unknown record").into());
                    }
                }
                Payload::Bytes(_) => return Err(malformed("unexpected byte record").into()),
            }
        }
        let meta = meta.ok_or_else(|| CheckpointError::Malformed("missing metadata".into()))?;
        if meta.arch.digest() != digest {
            return Err(CheckpointError::DigestMismatch.into());
        }
        let mut params = ParamStore::new();
        for (name, value) in values {
            let scale = scales
                .remove(&name)
                .ok_or_else(|| CheckpointError::Malformed(format!("no scale for {name}")))?;
            params.insert(name, value, scale);
        }
        if let Some(name) = scales.keys().next() {
            return Err(CheckpointError::Malformed(format!("scale without value: {name}")).into());
        }
        let mut adam = BTreeMap::new();
        for (net, (t, cfg)) in meta.adam {
            let mut s = AdamState::new(cfg);
            s.t = t;
            s.m = moments.remove(&(net.clone(), true)).unwrap_or_default();
            s.v = moments.remove(&(net.clone(), false)).unwrap_or_default();
            adam.insert(net, s);
        }
        if let Some((net, _)) = moments.keys().next() {
            return Err(
                CheckpointError::Malformed(format!("moments for unknown network {net}")).into(),
            );
        }
        Ok(Self {
            arch: meta.arch,
            iter: meta.iter,
            progress: meta.progress,
            params,
            adam,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir).map_err(|e| Error::path(dir, e.to_string()))?;
            }
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::path(path, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::path(path, e.to_string()))?;
        Self::from_bytes(&bytes)
    }

    /// Fail unless this checkpoint is for `stage` (and `scale`, if given).
    pub fn expect(&self, stages: &[Stage], scale: Option<u32>) -> Result<()> {
        let found = format!("{} x{}", self.arch.stage.name(), self.arch.scale_factor);
        if !stages.contains(&self.arch.stage) || scale.is_some_and(|s| s != self.arch.scale_factor)
        {
            let names: Vec<_> = stages.iter().map(|s| s.name()).collect();
            let expected = match scale {
                Some(s) => format!("{} x{s}", names.join("|")),
                None => names.join("|"),
            };
            return Err(stage_mismatch(&expected, &found));
        }
        Ok(())
    }

    /// Fail unless the architecture equals the one `cfg` would build.
    pub fn expect_config(&self, cfg: &TrainConfig) -> Result<()> {
        self.expect(&[cfg.stage], Some(cfg.scale_factor))?;
        if self.arch.digest() != ArchConfig::from_train(cfg).digest() {
            return Err(CheckpointError::DigestMismatch.into());
        }
        Ok(())
    }
}
