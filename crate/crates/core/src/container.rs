//! Binary containers.
//!
//! TVFR layout (little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "TVFR0001"
//! 8       4     u32 L (links)
//! 12      4     u32 S (snapshots)
//! 16      4     u32 Q (frequency bins)
//! 20      8     f64 t_s
//! 28      8     f64 f_s
//! 36      8     f64 B
//! 44      8     f64 f_c
//! 52      ...   L*S*Q pairs of f32 (re, im); link slowest, bin fastest
//! ```
//!
//! The LSF dump uses the same style with magic "LSF00001", a header of
//! u32 K_t, K_f, N, M and f64 tau_s, nu_s, then f32 values in
//! `[k_t, k_f, n, p]` order.

use std::fs;
use std::path::Path;

use num_complex::Complex32;

use crate::error::{Error, FormatError, Result};
use crate::grid::{GridParams, TimeVariantFrequencyResponse};
use crate::lsf::LocalScatteringFunction;

pub const TVFR_MAGIC: &[u8; 8] = b"TVFR0001";
pub const LSF_MAGIC: &[u8; 8] = b"LSF00001";

const TVFR_HEADER_LEN: usize = 8 + 3 * 4 + 4 * 8;
const LSF_HEADER_LEN: usize = 8 + 4 * 4 + 2 * 8;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        out.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        out
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }

    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }
}

fn check_magic(bytes: &[u8], magic: &[u8; 8], header_len: usize) -> Result<()> {
    if bytes.len() < 8 || &bytes[..8] != magic {
        let found = &bytes[..bytes.len().min(8)];
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        }
        .into());
    }
    if bytes.len() < header_len {
        return Err(FormatError::Truncated {
            expected: header_len,
            found: bytes.len(),
        }
        .into());
    }
    Ok(())
}

fn payload_len(counts: &[usize], bytes_per_value: usize) -> Result<usize> {
    counts
        .iter()
        .try_fold(bytes_per_value, |acc, &c| acc.checked_mul(c))
        .ok_or_else(|| FormatError::ShapeMismatch("declared sizes overflow".into()).into())
}

fn check_payload(total: usize, header_len: usize, payload: usize) -> Result<()> {
    let expected = header_len + payload;
    if total < expected {
        return Err(FormatError::Truncated {
            expected,
            found: total,
        }
        .into());
    }
    if total > expected {
        return Err(FormatError::ShapeMismatch(format!(
            "{} trailing bytes after declared payload",
            total - expected
        ))
        .into());
    }
    Ok(())
}

/// Decodes a TVFR container from memory.
pub fn decode_tvfr(bytes: &[u8]) -> Result<TimeVariantFrequencyResponse> {
    check_magic(bytes, TVFR_MAGIC, TVFR_HEADER_LEN)?;
    let mut r = Reader::new(bytes);
    r.pos = 8;
    let links = r.u32() as usize;
    let snapshots = r.u32() as usize;
    let bins = r.u32() as usize;
    let t_s = r.f64();
    let f_s = r.f64();
    let bandwidth = r.f64();
    let carrier = r.f64();
    let payload = payload_len(&[links, snapshots, bins], 8)?;
    check_payload(bytes.len(), TVFR_HEADER_LEN, payload)?;

    let grid = GridParams::with_freq_bin(t_s, f_s, bandwidth, snapshots, bins, links, carrier)
        .map_err(|e| FormatError::ShapeMismatch(format!("invalid grid header: {e}")))?;

    let count = links * snapshots * bins;
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let re = r.f32();
        let im = r.f32();
        if !re.is_finite() || !im.is_finite() {
            return Err(FormatError::NonFinite(i).into());
        }
        samples.push(Complex32::new(re, im));
    }
    TimeVariantFrequencyResponse::new(grid, samples)
}

/// Encodes a TVFR container.
pub fn encode_tvfr(tvfr: &TimeVariantFrequencyResponse) -> Result<Vec<u8>> {
    let g = tvfr.grid();
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::domain(format!("{what} {v} exceeds u32 range")))
    };
    let mut out = Vec::with_capacity(TVFR_HEADER_LEN + 8 * g.sample_count());
    out.extend_from_slice(TVFR_MAGIC);
    out.extend_from_slice(&to_u32(g.num_links, "link count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(g.num_snapshots, "snapshot count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(g.num_freq_bins, "bin count")?.to_le_bytes());
    for v in [g.snapshot_interval, g.freq_bin, g.bandwidth, g.carrier] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for c in tvfr.samples() {
        out.extend_from_slice(&c.re.to_le_bytes());
        out.extend_from_slice(&c.im.to_le_bytes());
    }
    Ok(out)
}

pub fn read_container(path: impl AsRef<Path>) -> Result<TimeVariantFrequencyResponse> {
    let bytes = fs::read(path)?;
    decode_tvfr(&bytes)
}

pub fn write_container(tvfr: &TimeVariantFrequencyResponse, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_tvfr(tvfr)?)?;
    Ok(())
}

/// Contents of an LSF dump. Values are the stored single-precision powers.
#[derive(Debug, Clone, PartialEq)]
pub struct LsfDump {
    pub regions_time: usize,
    pub regions_freq: usize,
    pub delay_bins: usize,
    pub doppler_bins: usize,
    pub delay_scale: f64,
    pub doppler_scale: f64,
    pub values: Vec<f32>,
}

impl LsfDump {
    pub fn from_lsf(lsf: &LocalScatteringFunction) -> Self {
        LsfDump {
            regions_time: lsf.regions_time(),
            regions_freq: lsf.regions_freq(),
            delay_bins: lsf.region().freq_len,
            doppler_bins: lsf.region().time_len,
            delay_scale: lsf.delay_scale(),
            doppler_scale: lsf.doppler_scale(),
            values: lsf.values().iter().map(|&v| v as f32).collect(),
        }
    }
}

pub fn encode_lsf(dump: &LsfDump) -> Result<Vec<u8>> {
    let dims = [
        dump.regions_time,
        dump.regions_freq,
        dump.delay_bins,
        dump.doppler_bins,
    ];
    if payload_len(&dims, 1)? != dump.values.len() {
        return Err(Error::domain("LSF dump value count does not match its shape"));
    }
    let mut out = Vec::with_capacity(LSF_HEADER_LEN + 4 * dump.values.len());
    out.extend_from_slice(LSF_MAGIC);
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::domain("LSF dimension exceeds u32"))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&dump.delay_scale.to_le_bytes());
    out.extend_from_slice(&dump.doppler_scale.to_le_bytes());
    for v in &dump.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_lsf(bytes: &[u8]) -> Result<LsfDump> {
    check_magic(bytes, LSF_MAGIC, LSF_HEADER_LEN)?;
    let mut r = Reader::new(bytes);
    r.pos = 8;
    let dims = [r.u32(), r.u32(), r.u32(), r.u32()].map(|d| d as usize);
    let delay_scale = r.f64();
    let doppler_scale = r.f64();
    let count = payload_len(&dims, 1)?;
    check_payload(bytes.len(), LSF_HEADER_LEN, count * 4)?;
    let mut values = Vec::with_capacity(count);
    for i in 0..count {
        let v = r.f32();
        if !v.is_finite() {
            return Err(FormatError::NonFinite(i).into());
        }
        values.push(v);
    }
    Ok(LsfDump {
        regions_time: dims[0],
        regions_freq: dims[1],
        delay_bins: dims[2],
        doppler_bins: dims[3],
        delay_scale,
        doppler_scale,
        values,
    })
}

pub fn write_lsf(lsf: &LocalScatteringFunction, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_lsf(&LsfDump::from_lsf(lsf))?)?;
    Ok(())
}

pub fn read_lsf(path: impl AsRef<Path>) -> Result<LsfDump> {
    decode_lsf(&fs::read(path)?)
}
