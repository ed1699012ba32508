//! File formats: kernel matrices (text and binary), rectangular test-kernel
//! rows, label files, and the trained-model format.
//!
//! Floats are written with 17 significant decimal digits, which round-trips
//! every f64 bit-exactly. All writers go through [`write_atomic`], so an
//! interrupted run never leaves a truncated artifact behind.

use std::fs;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::mkl::{MklConfig, MklModel, PNorm, TrainingReport};

/// Magic bytes of the binary kernel format.
pub const KERNEL_MAGIC: &[u8; 8] = b"KMATRIX1";

/// Formats a float with 17 significant digits (bit-exact round trip).
pub fn format_f64(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{v:.16e}")
}

fn parse_f64(s: &str, path: &Path, what: &str) -> Result<f64> {
    match s {
        "inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    s.parse::<f64>().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        message: format!("cannot parse {what} from '{s}'"),
    })
}

/// Writes a file atomically: the contents land in a sibling temp file that
/// is renamed over the target.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::validation(format!("invalid output path {}", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Serializes a kernel to the text format: a header `n <n> name <label>`
/// followed by n rows of n floats.
pub fn kernel_to_text(k: &KernelMatrix) -> String {
    let n = k.n();
    let mut out = format!("n {} name {}\n", n, k.name());
    for i in 0..n {
        let row: Vec<String> = k.row(i).iter().map(|&v| format_f64(v)).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_kernel_text(path: &Path, k: &KernelMatrix) -> Result<()> {
    write_atomic(path, kernel_to_text(k).as_bytes())
}

pub fn read_kernel_text(path: &Path) -> Result<KernelMatrix> {
    let contents = fs::read_to_string(path)?;
    let mut lines = contents.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_error(path, "empty kernel file"))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some("n") {
        return Err(parse_error(path, "header must start with 'n <n>'"));
    }
    let n: usize = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_error(path, "cannot parse sample count"))?;
    if tokens.next() != Some("name") {
        return Err(parse_error(path, "header must contain 'name <label>'"));
    }
    let name = tokens.collect::<Vec<_>>().join(" ");
    let mut values = Array2::<f64>::zeros((n, n));
    let mut rows = 0usize;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if rows >= n {
            return Err(parse_error(path, format!("more than {n} rows of data")));
        }
        let entries: Vec<&str> = line.split_whitespace().collect();
        if entries.len() != n {
            return Err(parse_error(
                path,
                format!("row {} has {} entries, expected {n}", i + 1, entries.len()),
            ));
        }
        for (j, e) in entries.iter().enumerate() {
            values[[rows, j]] = parse_f64(e, path, "kernel entry")?;
        }
        rows += 1;
    }
    if rows != n {
        return Err(parse_error(path, format!("found {rows} rows, expected {n}")));
    }
    KernelMatrix::new(values, name)
}

/// Writes the binary format: 8-byte magic, little-endian u64 n, then n*n
/// little-endian f64 values in row-major order.
pub fn write_kernel_binary(path: &Path, k: &KernelMatrix) -> Result<()> {
    let n = k.n();
    let mut bytes = Vec::with_capacity(16 + 8 * n * n);
    bytes.extend_from_slice(KERNEL_MAGIC);
    bytes.extend_from_slice(&(n as u64).to_le_bytes());
    for i in 0..n {
        for &v in k.row(i).iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path, &bytes)
}

pub fn read_kernel_binary(path: &Path) -> Result<KernelMatrix> {
    let mut file = fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)
        .map_err(|_| parse_error(path, "file too short for the magic header"))?;
    if &magic != KERNEL_MAGIC {
        return Err(parse_error(path, "bad magic; not a binary kernel file"));
    }
    let mut n_bytes = [0u8; 8];
    file.read_exact(&mut n_bytes)
        .map_err(|_| parse_error(path, "file too short for the sample count"))?;
    let n = u64::from_le_bytes(n_bytes) as usize;
    let mut data = Vec::new();
    file.read_to_end(&mut data)?;
    if data.len() != 8 * n * n {
        return Err(parse_error(
            path,
            format!("expected {} value bytes for n = {n}, found {}", 8 * n * n, data.len()),
        ));
    }
    let mut values = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let off = 8 * (i * n + j);
            values[[i, j]] = f64::from_le_bytes(data[off..off + 8].try_into().unwrap());
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "kernel".into());
    KernelMatrix::new(values, name)
}

/// Reads a kernel, choosing the binary format for the `.kmb` extension and
/// the text format otherwise.
pub fn read_kernel_auto(path: &Path) -> Result<KernelMatrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("kmb") => read_kernel_binary(path),
        _ => read_kernel_text(path),
    }
}

/// Writes a kernel, choosing the format from the extension as in
/// [`read_kernel_auto`].
pub fn write_kernel_auto(path: &Path, k: &KernelMatrix) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("kmb") => write_kernel_binary(path, k),
        _ => write_kernel_text(path, k),
    }
}

/// Writes rectangular test-kernel rows: header `rows <r> cols <c> name
/// <label>` followed by r rows of c floats. Row t holds the evaluations of
/// every training point against test point t.
pub fn write_kernel_rows_text(path: &Path, rows: &Array2<f64>, name: &str) -> Result<()> {
    let (r, c) = rows.dim();
    let mut out = format!("rows {r} cols {c} name {name}\n");
    for i in 0..r {
        let line: Vec<String> = rows.row(i).iter().map(|&v| format_f64(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_kernel_rows_text(path: &Path) -> Result<(Array2<f64>, String)> {
    let contents = fs::read_to_string(path)?;
    let mut lines = contents.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_error(path, "empty kernel-rows file"))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some("rows") {
        return Err(parse_error(path, "header must start with 'rows <r>'"));
    }
    let r: usize = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_error(path, "cannot parse row count"))?;
    if tokens.next() != Some("cols") {
        return Err(parse_error(path, "header must contain 'cols <c>'"));
    }
    let c: usize = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_error(path, "cannot parse column count"))?;
    if tokens.next() != Some("name") {
        return Err(parse_error(path, "header must contain 'name <label>'"));
    }
    let name = tokens.collect::<Vec<_>>().join(" ");
    let mut values = Array2::<f64>::zeros((r, c));
    let mut seen = 0usize;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        if seen >= r {
            return Err(parse_error(path, format!("more than {r} rows of data")));
        }
        let entries: Vec<&str> = line.split_whitespace().collect();
        if entries.len() != c {
            return Err(parse_error(
                path,
                format!("row {} has {} entries, expected {c}", seen + 1, entries.len()),
            ));
        }
        for (j, e) in entries.iter().enumerate() {
            values[[seen, j]] = parse_f64(e, path, "kernel entry")?;
        }
        seen += 1;
    }
    if seen != r {
        return Err(parse_error(path, format!("found {seen} rows, expected {r}")));
    }
    Ok((values, name))
}

/// Reads a label file: one +1/-1 per line.
pub fn read_labels(path: &Path) -> Result<Vec<f64>> {
    let contents = fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v = parse_f64(t, path, "label")?;
        if v != 1.0 && v != -1.0 {
            return Err(parse_error(
                path,
                format!("label on line {} must be +1 or -1, got {t}", i + 1),
            ));
        }
        labels.push(v);
    }
    if labels.is_empty() {
        return Err(parse_error(path, "no labels found"));
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, y: &[f64]) -> Result<()> {
    let mut out = String::new();
    for &v in y {
        out.push_str(if v > 0.0 { "1\n" } else { "-1\n" });
    }
    write_atomic(path, out.as_bytes())
}

/// Serializes a trained model to the text format with lines
/// `p`, `C`, `b`, `theta`, `alpha`, `support` (plus `q_block` when set).
pub fn model_to_text(model: &MklModel) -> String {
    let mut out = String::new();
    out.push_str(&format!("p {}\n", model.config.p));
    if let Some(q) = model.config.q_block {
        out.push_str(&format!("q_block {}\n", format_f64(q)));
    }
    out.push_str(&format!("C {}\n", format_f64(model.config.c)));
    out.push_str(&format!("b {}\n", format_f64(model.bias)));
    let theta: Vec<String> = model.theta.iter().map(|&v| format_f64(v)).collect();
    out.push_str(&format!("theta {}\n", theta.join(" ")));
    let alpha: Vec<String> = model.alpha.iter().map(|&v| format_f64(v)).collect();
    out.push_str(&format!("alpha {}\n", alpha.join(" ")));
    let support: Vec<String> = model
        .support_indices()
        .iter()
        .map(|i| i.to_string())
        .collect();
    out.push_str(&format!("support {}\n", support.join(" ")));
    out
}

pub fn write_model(path: &Path, model: &MklModel) -> Result<()> {
    write_atomic(path, model_to_text(model).as_bytes())
}

pub fn read_model(path: &Path) -> Result<MklModel> {
    let contents = fs::read_to_string(path)?;
    let mut p: Option<PNorm> = None;
    let mut q_block: Option<f64> = None;
    let mut c: Option<f64> = None;
    let mut b: Option<f64> = None;
    let mut theta: Option<Vec<f64>> = None;
    let mut alpha: Option<Vec<f64>> = None;
    let mut support: Option<Vec<usize>> = None;
    for line in contents.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        match key {
            "p" => p = Some(PNorm::parse(rest)?),
            "q_block" => q_block = Some(parse_f64(rest, path, "q_block")?),
            "C" => c = Some(parse_f64(rest, path, "C")?),
            "b" => b = Some(parse_f64(rest, path, "b")?),
            "theta" => {
                theta = Some(
                    rest.split_whitespace()
                        .map(|t| parse_f64(t, path, "theta entry"))
                        .collect::<Result<_>>()?,
                )
            }
            "alpha" => {
                alpha = Some(
                    rest.split_whitespace()
                        .map(|t| parse_f64(t, path, "alpha entry"))
                        .collect::<Result<_>>()?,
                )
            }
            "support" => {
                support = Some(
                    rest.split_whitespace()
                        .map(|t| {
                            t.parse::<usize>().map_err(|_| {
                                parse_error(path, format!("bad support index '{t}'"))
                            })
                        })
                        .collect::<Result<_>>()?,
                )
            }
            other => {
                return Err(parse_error(path, format!("unknown model field '{other}'")));
            }
        }
    }
    let p = p.ok_or_else(|| parse_error(path, "missing field 'p'"))?;
    let c = c.ok_or_else(|| parse_error(path, "missing field 'C'"))?;
    let bias = b.ok_or_else(|| parse_error(path, "missing field 'b'"))?;
    let theta = theta.ok_or_else(|| parse_error(path, "missing field 'theta'"))?;
    let alpha = alpha.ok_or_else(|| parse_error(path, "missing field 'alpha'"))?;
    let support = support.ok_or_else(|| parse_error(path, "missing field 'support'"))?;
    for &i in &support {
        if i >= alpha.len() {
            return Err(parse_error(
                path,
                format!("support index {i} out of range for {} coefficients", alpha.len()),
            ));
        }
    }
    let config = MklConfig {
        p,
        q_block,
        c,
        ..MklConfig::default()
    };
    Ok(MklModel {
        theta,
        alpha,
        bias,
        config,
        report: TrainingReport::new(),
    })
}
