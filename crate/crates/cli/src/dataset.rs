//! Binary file formats: the SPDS dataset container and raw `.f64` matrix
//! dumps with a plain-text `.dims` sidecar. All integers and floats are
//! little-endian.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use spdc_core::spd::{default_floor, make_spd, SpdMatrix};

use crate::{CliError, CliResult};

const MAGIC: &[u8; 4] = b"SPDS";
const VERSION: u32 = 1;

/// An SPD dataset with optional ground-truth labels.
#[derive(Debug, Clone)]
pub struct SpdDataset {
    pub matrices: Vec<SpdMatrix>,
    pub labels: Option<Vec<usize>>,
}

/// Header fields of an SPDS file: (N, d, has_labels).
pub fn describe_dataset(path: &Path) -> CliResult<(usize, usize, bool)> {
    let bytes = read_file(path)?;
    let (n, d, has_labels, _) = parse_header(&bytes, path)?;
    Ok((n, d, has_labels))
}

/// Reads an SPDS file. Every stored matrix is passed through `make_spd`
/// with the given floor (scale-aware default when `None`), so the loaded
/// dataset always satisfies the SPD invariants.
pub fn read_dataset(path: &Path, floor: Option<f64>) -> CliResult<SpdDataset> {
    let bytes = read_file(path)?;
    let (n, d, has_labels, mut cursor) = parse_header(&bytes, path)?;

    let matrix_bytes = d * d * 8;
    let labels_bytes = if has_labels { n * 4 } else { 0 };
    let expected = cursor + n * matrix_bytes + labels_bytes;
    if bytes.len() < expected {
        return Err(CliError::Input(format!(
            "{}: payload truncated, expected {expected} bytes, got {}",
            path.display(),
            bytes.len()
        )));
    }

    let mut matrices = Vec::with_capacity(n);
    for index in 0..n {
        let mut raw = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let v = f64::from_le_bytes(
                    bytes[cursor..cursor + 8].try_into().unwrap(),
                );
                raw[(i, j)] = v;
                cursor += 8;
            }
        }
        let f = floor.unwrap_or_else(|| default_floor(&raw));
        let spd = make_spd(&raw, f).map_err(|e| {
            CliError::Input(format!(
                "{}: matrix {index} is invalid: {e}",
                path.display()
            ))
        })?;
        matrices.push(spd);
    }

    let labels = if has_labels {
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let v = u32::from_le_bytes(bytes[cursor..cursor + 4].try_into().unwrap());
            labels.push(v as usize);
            cursor += 4;
        }
        Some(labels)
    } else {
        None
    };

    Ok(SpdDataset { matrices, labels })
}

/// Writes an SPDS file; the exact inverse of [`read_dataset`] up to the
/// eigenvalue flooring applied on load.
pub fn write_dataset(
    path: &Path,
    matrices: &[SpdMatrix],
    labels: Option<&[usize]>,
) -> CliResult<()> {
    if matrices.is_empty() {
        return Err(CliError::Config("cannot write an empty dataset".into()));
    }
    let d = matrices[0].dim();
    if matrices.iter().any(|m| m.dim() != d) {
        return Err(CliError::Config(
            "all matrices in a dataset must share one dimension".into(),
        ));
    }
    if let Some(l) = labels {
        if l.len() != matrices.len() {
            return Err(CliError::Config(format!(
                "label count {} does not match matrix count {}",
                l.len(),
                matrices.len()
            )));
        }
    }

    let n = matrices.len();
    let mut out = Vec::with_capacity(17 + n * d * d * 8 + n * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.push(labels.is_some() as u8);
    for m in matrices {
        for i in 0..d {
            for j in 0..d {
                out.extend_from_slice(&m.matrix()[(i, j)].to_le_bytes());
            }
        }
    }
    if let Some(l) = labels {
        for &v in l {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
    }
    write_file(path, &out)
}

/// Dumps a matrix as raw little-endian f64 values in row-major order plus
/// a `<name>.dims` sidecar holding "rows cols".
pub fn write_matrix_f64(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    let mut out = Vec::with_capacity(m.len() * 8);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    write_file(path, &out)?;
    let sidecar = sidecar_path(path);
    write_file(&sidecar, format!("{} {}\n", m.nrows(), m.ncols()).as_bytes())
}

/// Loads a `.f64` dump back via its `.dims` sidecar; bit-exact inverse of
/// [`write_matrix_f64`].
pub fn read_matrix_f64(path: &Path) -> CliResult<DMatrix<f64>> {
    let dims_text = fs::read_to_string(sidecar_path(path)).map_err(|e| {
        CliError::Input(format!("{}: missing dims sidecar: {e}", path.display()))
    })?;
    let mut parts = dims_text.split_whitespace();
    let rows: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CliError::Input(format!("{}: bad dims sidecar", path.display())))?;
    let cols: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CliError::Input(format!("{}: bad dims sidecar", path.display())))?;

    let bytes = read_file(path)?;
    if bytes.len() != rows * cols * 8 {
        return Err(CliError::Input(format!(
            "{}: expected {} bytes for {rows}x{cols}, got {}",
            path.display(),
            rows * cols * 8,
            bytes.len()
        )));
    }
    let mut m = DMatrix::zeros(rows, cols);
    let mut cursor = 0;
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = f64::from_le_bytes(bytes[cursor..cursor + 8].try_into().unwrap());
            cursor += 8;
        }
    }
    Ok(m)
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".dims");
    std::path::PathBuf::from(name)
}

fn parse_header(bytes: &[u8], path: &Path) -> CliResult<(usize, usize, bool, usize)> {
    if bytes.len() < 17 || &bytes[0..4] != MAGIC {
        return Err(CliError::Input(format!(
            "{}: not an SPDS dataset (bad magic)",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CliError::Input(format!(
            "{}: unsupported SPDS version {version}",
            path.display()
        )));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let has_labels = bytes[16] != 0;
    if n == 0 || d == 0 {
        return Err(CliError::Input(format!(
            "{}: empty dataset (N={n}, d={d})",
            path.display()
        )));
    }
    Ok((n, d, has_labels, 17))
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| {
                CliError::Input(format!("{}: {e}", parent.display()))
            })?;
        }
    }
    fs::write(path, bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
