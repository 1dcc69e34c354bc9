//! Minimal NPY (version 1.0) reader/writer for little-endian `f32` arrays.
//!
//! The episode frame files use this layout: shape `(T, H, W, 3)`, dtype
//! `<f4` (little-endian IEEE 754 single precision), C order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NpyError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed npy file: {0}")]
    Format(String),
}

pub fn write_npy(path: &Path, array: &ArrayD<f32>) -> Result<(), NpyError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let shape = array
        .shape()
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    let shape_str = if array.ndim() == 1 {
        format!("({},)", shape)
    } else {
        format!("({})", shape)
    };
    let mut header = format!(
        "{{'descr': '<f4', 'fortran_order': False, 'shape': {}, }}",
        shape_str
    );
    // pad so magic + version + len + header is a multiple of 64, ending in \n
    let base = 10 + header.len();
    let pad = (64 - (base + 1) % 64) % 64;
    header.push_str(&" ".repeat(pad));
    header.push('\n');

    file.write_all(b"\x93NUMPY\x01\x00")?;
    file.write_all(&(header.len() as u16).to_le_bytes())?;
    file.write_all(header.as_bytes())?;
    let data = array.as_standard_layout();
    for &v in data.iter() {
        file.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_npy(path: &Path) -> Result<ArrayD<f32>, NpyError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic[..6] != b"\x93NUMPY" {
        return Err(NpyError::Format("bad magic".into()));
    }
    let mut len_bytes = [0u8; 2];
    file.read_exact(&mut len_bytes)?;
    let header_len = u16::from_le_bytes(len_bytes) as usize;
    let mut header = vec![0u8; header_len];
    file.read_exact(&mut header)?;
    let header = String::from_utf8_lossy(&header);

    if !header.contains("'<f4'") {
        return Err(NpyError::Format("expected dtype <f4".into()));
    }
    if header.contains("'fortran_order': True") {
        return Err(NpyError::Format("fortran order unsupported".into()));
    }
    let shape_part = header
        .split("'shape':")
        .nth(1)
        .and_then(|s| s.split('(').nth(1))
        .and_then(|s| s.split(')').next())
        .ok_or_else(|| NpyError::Format("missing shape".into()))?;
    let shape: Vec<usize> = shape_part
        .split(',')
        .filter_map(|tok| {
            let tok = tok.trim();
            if tok.is_empty() {
                None
            } else {
                Some(tok.parse::<usize>())
            }
        })
        .collect::<Result<_, _>>()
        .map_err(|e| NpyError::Format(format!("bad shape: {e}")))?;

    let n: usize = shape.iter().product();
    let mut buf = vec![0u8; n * 4];
    file.read_exact(&mut buf)?;
    let data: Vec<f32> = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ArrayD::from_shape_vec(IxDyn(&shape), data)
        .map_err(|e| NpyError::Format(format!("shape mismatch: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_array, rng_from_seed};

    #[test]
    fn round_trip() {
        let dir = std::env::temp_dir().join(format!("npy_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.npy");
        let mut rng = rng_from_seed(1);
        let a: ArrayD<f32> = normal_array(&mut rng, &[3, 4, 5]);
        write_npy(&path, &a).unwrap();
        let b = read_npy(&path).unwrap();
        assert_eq!(a, b);
        std::fs::remove_dir_all(&dir).ok();
    }
}
