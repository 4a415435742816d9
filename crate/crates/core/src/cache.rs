//! On-disk cache of traced channel matrices.
//!
//! File layout (little-endian): `"OWCM"`, `u32` format version, 32-byte
//! SHA-256 key, `u64` payload length, payload. The key covers the canonical
//! scenario JSON, the bounce configuration, the bandwidth convention and the
//! format version.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::metrics::{build_channel_matrix, Bandwidth, BandwidthConvention, ChannelMatrix, LinkMetrics, MetricsError};
use crate::raytrace::{BounceConfig, ImpulseResponse};
use crate::scene::Scenario;

pub const CACHE_MAGIC: [u8; 4] = *b"OWCM";
pub const CACHE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache I/O on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt cache file: {0}")]
    Corrupt(&'static str),
    #[error("cache format version {0} not supported")]
    Version(u32),
    #[error("cache key mismatch")]
    KeyMismatch,
}

pub type CacheKey = [u8; 32];

pub fn cache_key(scenario: &Scenario<f64>, cfg: &BounceConfig<f64>, convention: BandwidthConvention) -> CacheKey {
    let mut h = Sha256::new();
    h.update(scenario.to_canonical_json().as_bytes());
    h.update(b"\0");
    h.update(serde_json::to_string(cfg).expect("bounce config serializes").as_bytes());
    h.update(b"\0");
    h.update(serde_json::to_string(&convention).expect("convention serializes").as_bytes());
    h.update(CACHE_FORMAT_VERSION.to_le_bytes());
    h.finalize().into()
}

/// SHA-256 of the canonical scenario JSON alone.
pub fn scenario_digest(scenario: &Scenario<f64>) -> CacheKey {
    Sha256::digest(scenario.to_canonical_json().as_bytes()).into()
}

pub fn key_hex(key: &CacheKey) -> String {
    key.iter().map(|b| format!("{b:02x}")).collect()
}

/// Whether a matrix came from disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    Disabled,
}

impl CacheStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hit => "hit",
            Self::Miss => "miss",
            Self::Disabled => "disabled",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChannelCache {
    dir: PathBuf,
}

impl ChannelCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.owcm", key_hex(key)))
    }

    fn lock_path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.lock", key_hex(key)))
    }

    fn open_lock(&self, key: &CacheKey) -> Result<File, CacheError> {
        let path = self.lock_path(key);
        OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|source| CacheError::Io { path, source })
    }

    /// `Ok(None)` when no entry exists.
    pub fn load(&self, key: &CacheKey) -> Result<Option<ChannelMatrix<f64>>, CacheError> {
        let path = self.path_for(key);
        if !path.exists() {
            return Ok(None);
        }
        let lock = self.open_lock(key)?;
        lock.lock_shared().map_err(|source| CacheError::Io { path: self.lock_path(key), source })?;
        let mut bytes = Vec::new();
        let read = File::open(&path).and_then(|mut f| f.read_to_end(&mut bytes));
        drop(lock);
        match read {
            Ok(_) => decode_file(&bytes, key).map(Some),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(CacheError::Io { path, source }),
        }
    }

    pub fn store(&self, key: &CacheKey, matrix: &ChannelMatrix<f64>) -> Result<(), CacheError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CacheError::Io { path, source }
        };
        fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let lock = self.open_lock(key)?;
        lock.lock().map_err(io_err(&self.lock_path(key)))?;
        let path = self.path_for(key);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let bytes = encode_file(key, matrix);
        let written = File::create(&tmp)
            .and_then(|mut f| f.write_all(&bytes).and_then(|_| f.sync_all()))
            .and_then(|_| fs::rename(&tmp, &path));
        if written.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        written.map_err(io_err(&path))
    }

    /// Loads the matrix for this configuration, tracing and storing it on a
    /// miss. Cache failures are logged and fall back to tracing.
    pub fn load_or_build(
        &self,
        scenario: &Scenario<f64>,
        cfg: BounceConfig<f64>,
        convention: BandwidthConvention,
    ) -> Result<(ChannelMatrix<f64>, CacheStatus), MetricsError> {
        let key = cache_key(scenario, &cfg, convention);
        match self.load(&key) {
            Ok(Some(m)) => return Ok((m, CacheStatus::Hit)),
            Ok(None) => {}
            Err(e) => log::warn!("ignoring unreadable cache entry: {e}"),
        }
        let matrix = build_channel_matrix(scenario, cfg, convention)?;
        if let Err(e) = self.store(&key, &matrix) {
            log::warn!("could not write channel cache: {e}");
        }
        Ok((matrix, CacheStatus::Miss))
    }
}

fn encode_file(key: &CacheKey, matrix: &ChannelMatrix<f64>) -> Vec<u8> {
    let payload = encode_matrix(matrix);
    let mut out = Vec::with_capacity(48 + payload.len());
    out.extend_from_slice(&CACHE_MAGIC);
    out.extend_from_slice(&CACHE_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(key);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

fn decode_file(bytes: &[u8], key: &CacheKey) -> Result<ChannelMatrix<f64>, CacheError> {
    let mut r = Reader(bytes);
    if r.take(4)? != CACHE_MAGIC {
        return Err(CacheError::Corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != CACHE_FORMAT_VERSION {
        return Err(CacheError::Version(version));
    }
    if r.take(32)? != key {
        return Err(CacheError::KeyMismatch);
    }
    let len = r.u64()?;
    if len != r.0.len() as u64 {
        return Err(CacheError::Corrupt("payload length"));
    }
    decode_matrix(r.0)
}

pub fn encode_matrix(m: &ChannelMatrix<f64>) -> Vec<u8> {
    let mut w = Vec::new();
    let u32_ = |w: &mut Vec<u8>, v: u32| w.extend_from_slice(&v.to_le_bytes());
    let f64_ = |w: &mut Vec<u8>, v: f64| w.extend_from_slice(&v.to_le_bytes());
    u32_(&mut w, m.user_ids.len() as u32);
    u32_(&mut w, m.ap_ids.len() as u32);
    u32_(&mut w, m.num_branches as u32);
    m.user_ids.iter().for_each(|&v| u32_(&mut w, v));
    m.ap_ids.iter().for_each(|&v| u32_(&mut w, v));
    m.responsivity.iter().for_each(|&v| f64_(&mut w, v));
    m.unit_power.iter().flatten().for_each(|&v| f64_(&mut w, v));
    for link in &m.links {
        f64_(&mut w, link.dc_gain);
        match link.bw_3db {
            None => w.push(0),
            Some(Bandwidth::Finite(f)) => {
                w.push(1);
                f64_(&mut w, f);
            }
            Some(Bandwidth::Unbounded) => w.push(2),
        }
        match link.delay_spread {
            None => w.push(0),
            Some(t) => {
                w.push(1);
                f64_(&mut w, t);
            }
        }
        f64_(&mut w, link.ir.bin_width);
        f64_(&mut w, link.ir.t0);
        w.extend_from_slice(&(link.ir.bins.len() as u64).to_le_bytes());
        link.ir.bins.iter().for_each(|&v| f64_(&mut w, v));
    }
    w
}

pub fn decode_matrix(bytes: &[u8]) -> Result<ChannelMatrix<f64>, CacheError> {
    let mut r = Reader(bytes);
    let nu = r.u32()? as usize;
    let na = r.u32()? as usize;
    let nb = r.u32()? as usize;
    let user_ids = (0..nu).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let ap_ids = (0..na).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let mut responsivity = [0.0; 4];
    for v in &mut responsivity {
        *v = r.f64()?;
    }
    let mut unit_power = vec![[0.0; 4]; na];
    for v in unit_power.iter_mut().flatten() {
        *v = r.f64()?;
    }
    let total = nu
        .checked_mul(nb)
        .and_then(|x| x.checked_mul(na))
        .ok_or(CacheError::Corrupt("dimensions"))?;
    let mut links = Vec::with_capacity(total.min(1 << 16));
    for _ in 0..total {
        let dc_gain = r.f64()?;
        let bw_3db = match r.u8()? {
            0 => None,
            1 => Some(Bandwidth::Finite(r.f64()?)),
            2 => Some(Bandwidth::Unbounded),
            _ => return Err(CacheError::Corrupt("bandwidth tag")),
        };
        let delay_spread = match r.u8()? {
            0 => None,
            1 => Some(r.f64()?),
            _ => return Err(CacheError::Corrupt("delay spread tag")),
        };
        let bin_width = r.f64()?;
        let t0 = r.f64()?;
        let len = usize::try_from(r.u64()?).map_err(|_| CacheError::Corrupt("bin count"))?;
        if len > r.0.len() / 8 {
            return Err(CacheError::Corrupt("bin count"));
        }
        let bins = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        links.push(LinkMetrics { dc_gain, ir: ImpulseResponse { bin_width, t0, bins }, bw_3db, delay_spread });
    }
    if !r.0.is_empty() {
        return Err(CacheError::Corrupt("trailing bytes"));
    }
    Ok(ChannelMatrix { user_ids, ap_ids, num_branches: nb, links, responsivity, unit_power })
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CacheError> {
        if self.0.len() < n {
            return Err(CacheError::Corrupt("truncated"));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, CacheError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CacheError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CacheError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CacheError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
