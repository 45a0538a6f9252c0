//! Reading and writing 2D float matrices in the numpy `.npy` format.
//!
//! Only the subset used for feature matrices is supported: format versions
//! 1.0 and 2.0, little-endian `f4`/`f8` descriptors, C order, two
//! dimensions. Reading widens `f4` to `f64`; writing always emits version
//! 1.0 `<f8`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::{FppError, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone, Copy, PartialEq)]
enum Dtype {
    F4,
    F8,
}

#[derive(Debug)]
struct Header {
    dtype: Dtype,
    fortran_order: bool,
    shape: Vec<usize>,
}

fn err(msg: impl Into<String>) -> FppError {
    FppError::Npy(msg.into())
}

pub fn read_npy(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| FppError::io(path, e))?;
    read_npy_from(&mut BufReader::new(file))
}

pub fn read_npy_from<R: Read>(reader: &mut R) -> Result<Array2<f64>> {
    let mut magic = [0u8; 6];
    reader
        .read_exact(&mut magic)
        .map_err(|_| err("truncated magic string"))?;
    if &magic != MAGIC {
        return Err(err("bad magic string"));
    }
    let mut version = [0u8; 2];
    reader
        .read_exact(&mut version)
        .map_err(|_| err("truncated version"))?;
    let header_len = match version[0] {
        1 => {
            let mut b = [0u8; 2];
            reader.read_exact(&mut b).map_err(|_| err("truncated header"))?;
            u16::from_le_bytes(b) as usize
        }
        2 => {
            let mut b = [0u8; 4];
            reader.read_exact(&mut b).map_err(|_| err("truncated header"))?;
            u32::from_le_bytes(b) as usize
        }
        v => return Err(err(format!("unsupported format version {v}.{}", version[1]))),
    };
    let mut raw = vec![0u8; header_len];
    reader
        .read_exact(&mut raw)
        .map_err(|_| err("truncated header"))?;
    let text = std::str::from_utf8(&raw).map_err(|_| err("header is not ASCII"))?;
    let header = parse_header(text)?;

    if header.fortran_order {
        return Err(err("unsupported order (Fortran)"));
    }
    let (rows, cols) = match header.shape[..] {
        [r, c] => (r, c),
        _ => {
            return Err(err(format!(
                "expected a 2-dimensional array, got shape {:?}",
                header.shape
            )))
        }
    };
    if rows == 0 || cols == 0 {
        return Err(FppError::EmptyDataset);
    }
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| err("shape overflows"))?;
    let width = match header.dtype {
        Dtype::F4 => 4,
        Dtype::F8 => 8,
    };
    let mut payload = vec![0u8; count * width];
    reader
        .read_exact(&mut payload)
        .map_err(|_| err("payload shorter than shape implies"))?;
    let data: Vec<f64> = match header.dtype {
        Dtype::F8 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F4 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    Array2::from_shape_vec((rows, cols), data).map_err(|e| err(e.to_string()))
}

pub fn write_npy(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| FppError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_npy_to(&mut w, m).map_err(|e| FppError::io(path, e))?;
    w.flush().map_err(|e| FppError::io(path, e))
}

pub fn write_npy_to<W: Write>(w: &mut W, m: &Array2<f64>) -> std::io::Result<()> {
    let (r, c) = m.dim();
    let dict = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': ({r}, {c}), }}");
    // magic(6) + version(2) + len(2) + dict + padding + '\n' is a multiple of 64
    let unpadded = 10 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    let header_len = dict.len() + pad + 1;
    w.write_all(MAGIC)?;
    w.write_all(&[1, 0])?;
    w.write_all(&(header_len as u16).to_le_bytes())?;
    w.write_all(dict.as_bytes())?;
    w.write_all(&vec![b' '; pad])?;
    w.write_all(b"\n")?;
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Parse the Python dict literal of an npy header.
fn parse_header(text: &str) -> Result<Header> {
    let body = text.trim().trim_end_matches('\n').trim();
    let body = body
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or_else(|| err("header is not a dict"))?;

    let descr = dict_value(body, "descr")?;
    let descr = descr.trim().trim_matches(|c| c == '\'' || c == '"');
    let dtype = match descr {
        "<f8" | "f8" => Dtype::F8,
        "<f4" | "f4" => Dtype::F4,
        other => return Err(err(format!("unsupported dtype '{other}'"))),
    };

    let fortran_order = match dict_value(body, "fortran_order")?.trim() {
        "True" => true,
        "False" => false,
        other => return Err(err(format!("bad fortran_order value '{other}'"))),
    };

    let shape_text = dict_value(body, "shape")?.trim();
    let inner = shape_text
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| err("shape is not a tuple"))?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim_end_matches('L')
                .parse::<usize>()
                .map_err(|_| err(format!("bad shape entry '{s}'")))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Header {
        dtype,
        fortran_order,
        shape,
    })
}

/// Raw text of the value for `key`, up to the next top-level comma.
fn dict_value<'a>(body: &'a str, key: &str) -> Result<&'a str> {
    let quoted = [format!("'{key}'"), format!("\"{key}\"")];
    let start = quoted
        .iter()
        .find_map(|q| body.find(q.as_str()).map(|i| i + q.len()))
        .ok_or_else(|| err(format!("header lacks '{key}'")))?;
    let rest = body[start..].trim_start();
    let rest = rest
        .strip_prefix(':')
        .ok_or_else(|| err(format!("malformed entry for '{key}'")))?;
    let mut depth = 0i32;
    for (i, ch) in rest.char_indices() {
        match ch {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' if depth == 0 => return Ok(&rest[..i]),
            _ => {}
        }
    }
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn raw_npy(dict: &str, payload: &[u8], version: u8) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&[version, 0]);
        let header = format!("{dict}\n");
        if version == 1 {
            out.extend_from_slice(&(header.len() as u16).to_le_bytes());
        } else {
            out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        }
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn reads_f8_3x5() {
        let payload: Vec<u8> = (0..15).flat_map(|i| (i as f64).to_le_bytes()).collect();
        let bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (3, 5), }",
            &payload,
            1,
        );
        let m = read_npy_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(m.dim(), (3, 5));
        assert_eq!(m[[2, 4]], 14.0);
        assert_eq!(m[[1, 0]], 5.0);
    }

    #[test]
    fn widens_f4_version_2() {
        let payload: Vec<u8> = [1.5f32, -2.25].iter().flat_map(|v| v.to_le_bytes()).collect();
        let bytes = raw_npy(
            "{'descr': '<f4', 'fortran_order': False, 'shape': (1, 2), }",
            &payload,
            2,
        );
        let m = read_npy_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(m, array![[1.5, -2.25]]);
    }

    #[test]
    fn rejects_fortran_order() {
        let payload = vec![0u8; 16];
        let bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': True, 'shape': (2, 1), }",
            &payload,
            1,
        );
        let e = read_npy_from(&mut bytes.as_slice()).unwrap_err();
        assert!(e.to_string().contains("unsupported order"), "{e}");
    }

    #[test]
    fn rejects_empty_rows() {
        let bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (0, 5), }",
            &[],
            1,
        );
        let e = read_npy_from(&mut bytes.as_slice()).unwrap_err();
        assert!(matches!(e, FppError::EmptyDataset));
        assert_eq!(e.to_string(), "empty dataset");
    }

    #[test]
    fn rejects_bad_magic_dtype_and_rank() {
        let mut bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1), }",
            &[0; 8],
            1,
        );
        bytes[1] = b'X';
        assert!(read_npy_from(&mut bytes.as_slice())
            .unwrap_err()
            .to_string()
            .contains("magic"));

        let bytes = raw_npy(
            "{'descr': '<i8', 'fortran_order': False, 'shape': (1, 1), }",
            &[0; 8],
            1,
        );
        assert!(read_npy_from(&mut bytes.as_slice())
            .unwrap_err()
            .to_string()
            .contains("dtype"));

        let bytes = raw_npy(
            "{'descr': '>f8', 'fortran_order': False, 'shape': (1, 1), }",
            &[0; 8],
            1,
        );
        assert!(read_npy_from(&mut bytes.as_slice()).is_err());

        let bytes = raw_npy(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (4,), }",
            &[0; 32],
            1,
        );
        assert!(read_npy_from(&mut bytes.as_slice())
            .unwrap_err()
            .to_string()
            .contains("2-dimensional"));
    }

    #[test]
    fn written_header_is_aligned_and_readable() {
        let m = array![[1.0, 2.0, 3.0], [4.0, 5.0, f64::MIN_POSITIVE]];
        let mut buf = Vec::new();
        write_npy_to(&mut buf, &m).unwrap();
        let header_len = u16::from_le_bytes([buf[8], buf[9]]) as usize;
        assert_eq!((10 + header_len) % 64, 0);
        assert_eq!(buf.len(), 10 + header_len + 6 * 8);
        let back = read_npy_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }
}
