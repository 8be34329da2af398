//! Binary artifact formats. Checkpoints ("LPW1") carry the architecture
//! and flat parameter vector; kernel files ("LPK1") carry the packed
//! upper triangle plus the fingerprint of the checkpoint that produced
//! them. Both end with a CRC32 over every preceding byte.

use std::fs;
use std::path::Path;

use lpntk_core::kernel::{KernelKind, KernelMatrix};
use lpntk_core::model::{Activation, NetworkSpec, ParamVector};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

const CKPT_MAGIC: &[u8; 4] = b"LPW1";
const KERNEL_MAGIC: &[u8; 4] = b"LPK1";

pub fn sha256_bytes(bytes: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().into()
}

/// Digest of a file's raw bytes; used to fingerprint checkpoints and to
/// stamp manifests. Unreadable paths count as configuration errors.
pub fn sha256_file(path: &Path) -> CliResult<[u8; 32]> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_bytes(&bytes))
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Tanh => 1,
    }
}

fn activation_from_code(c: u8) -> Option<Activation> {
    match c {
        0 => Some(Activation::Relu),
        1 => Some(Activation::Tanh),
        _ => None,
    }
}

pub fn kind_code(kind: KernelKind) -> u8 {
    match kind {
        KernelKind::Pntk => 0,
        KernelKind::Lpntk => 1,
        KernelKind::LpntkVariant => 2,
    }
}

pub fn kind_from_code(c: u8) -> Option<KernelKind> {
    match c {
        0 => Some(KernelKind::Pntk),
        1 => Some(KernelKind::Lpntk),
        2 => Some(KernelKind::LpntkVariant),
        _ => None,
    }
}

fn finish_with_crc(mut bytes: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    bytes
}

/// Cursor over a fully loaded artifact; every getter fails loudly on
/// truncation so corrupt files never parse partially.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], what: &'a str) -> Reader<'a> {
        Reader { bytes, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CliError::config(format!("{} is truncated", self.what)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> CliResult<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> CliResult<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self) -> CliResult<f64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(f64::from_le_bytes(a))
    }

    fn done(&self) -> CliResult<()> {
        if self.pos != self.bytes.len() {
            return Err(CliError::config(format!(
                "{} has {} trailing bytes",
                self.what,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Splits off and verifies the trailing checksum, returning the covered
/// payload.
fn checked_payload<'a>(bytes: &'a [u8], what: &str) -> CliResult<&'a [u8]> {
    if bytes.len() < 4 {
        return Err(CliError::config(format!("{what} is truncated")));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes([tail[0], tail[1], tail[2], tail[3]]);
    if crc32fast::hash(payload) != stored {
        return Err(CliError::config(format!("{what} fails its checksum")));
    }
    Ok(payload)
}

pub fn checkpoint_bytes(spec: &NetworkSpec, params: &ParamVector) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&(spec.layer_widths.len() as u32).to_le_bytes());
    for &w in &spec.layer_widths {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    out.push(activation_code(spec.activation));
    out.push(u8::from(spec.bias));
    for v in params.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    finish_with_crc(out)
}

pub fn write_checkpoint(
    path: &Path,
    spec: &NetworkSpec,
    params: &ParamVector,
) -> CliResult<()> {
    fs::write(path, checkpoint_bytes(spec, params))?;
    Ok(())
}

pub fn parse_checkpoint(bytes: &[u8], what: &str) -> CliResult<(NetworkSpec, ParamVector)> {
    let payload = checked_payload(bytes, what)?;
    let mut r = Reader::new(payload, what);
    if r.take(4)? != CKPT_MAGIC {
        return Err(CliError::config(format!("{what} is not a checkpoint file")));
    }
    let layers = r.u32()? as usize;
    let mut widths = Vec::with_capacity(layers);
    for _ in 0..layers {
        widths.push(r.u32()? as usize);
    }
    let activation = activation_from_code(r.u8()?)
        .ok_or_else(|| CliError::config(format!("{what} has an unknown activation code")))?;
    let bias = match r.u8()? {
        0 => false,
        1 => true,
        _ => return Err(CliError::config(format!("{what} has a bad bias flag"))),
    };
    let spec = NetworkSpec::new(widths, activation, bias)
        .map_err(|e| CliError::config(format!("{what}: {e}")))?;
    let d = spec.param_count();
    let mut values = Vec::with_capacity(d);
    for _ in 0..d {
        values.push(r.f64()?);
    }
    r.done()?;
    let params = ParamVector::from_vec(values)
        .map_err(|e| CliError::config(format!("{what}: {e}")))?;
    Ok((spec, params))
}

pub fn read_checkpoint(path: &Path) -> CliResult<(NetworkSpec, ParamVector)> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    parse_checkpoint(&bytes, &format!("checkpoint {}", path.display()))
}

pub fn kernel_bytes(kernel: &KernelMatrix) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(KERNEL_MAGIC);
    out.push(kind_code(kernel.kind()));
    out.extend_from_slice(&(kernel.n() as u32).to_le_bytes());
    out.extend_from_slice(&(kernel.classes() as u32).to_le_bytes());
    out.extend_from_slice(kernel.fingerprint());
    for v in kernel.upper() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    finish_with_crc(out)
}

pub fn write_kernel(path: &Path, kernel: &KernelMatrix) -> CliResult<()> {
    fs::write(path, kernel_bytes(kernel))?;
    Ok(())
}

/// Rows keep the order of the producing dataset, so loaded matrices get
/// positional ids `0..n`.
pub fn parse_kernel(bytes: &[u8], what: &str) -> CliResult<KernelMatrix> {
    let payload = checked_payload(bytes, what)?;
    let mut r = Reader::new(payload, what);
    if r.take(4)? != KERNEL_MAGIC {
        return Err(CliError::config(format!("{what} is not a kernel file")));
    }
    let kind = kind_from_code(r.u8()?)
        .ok_or_else(|| CliError::config(format!("{what} has an unknown kind code")))?;
    let n = r.u32()? as usize;
    let classes = r.u32()? as usize;
    let mut fingerprint = [0u8; 32];
    fingerprint.copy_from_slice(r.take(32)?);
    let len = n * (n + 1) / 2;
    let mut upper = Vec::with_capacity(len);
    for _ in 0..len {
        upper.push(r.f64()?);
    }
    r.done()?;
    let ids = (0..n as u64).collect();
    let mut kernel = KernelMatrix::from_upper(kind, classes, ids, upper)
        .map_err(|e| CliError::config(format!("{what}: {e}")))?;
    kernel.set_fingerprint(fingerprint);
    Ok(kernel)
}

pub fn read_kernel(path: &Path) -> CliResult<KernelMatrix> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    parse_kernel(&bytes, &format!("kernel {}", path.display()))
}

/// Full square matrix as CSV: a config-hash comment line, a header of
/// sample ids, then one row per sample led by its id.
pub fn kernel_csv(kernel: &KernelMatrix, config_hash: &str) -> String {
    let n = kernel.n();
    let mut out = String::new();
    out.push_str(&format!("# config_hash={config_hash}\n"));
    out.push_str("id");
    for id in kernel.ids() {
        out.push_str(&format!(",{id}"));
    }
    out.push('\n');
    for i in 0..n {
        out.push_str(&format!("{}", kernel.ids()[i]));
        for j in 0..n {
            out.push_str(&format!(",{}", kernel.get(i, j)));
        }
        out.push('\n');
    }
    out
}
