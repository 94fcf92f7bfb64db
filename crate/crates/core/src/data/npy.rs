//! NPY format version 1.0, restricted to the `uint8` arrays the archive uses.

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";

/// A C-ordered `uint8` array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct U8Array {
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

fn header_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let start = header.find(&format!("'{key}'"))? + key.len() + 2;
    let rest = header[start..].trim_start().strip_prefix(':')?.trim_start();
    if let Some(tuple) = rest.strip_prefix('(') {
        return Some(&tuple[..tuple.find(')')?]);
    }
    let end = rest.find([',', '}']).unwrap_or(rest.len());
    Some(rest[..end].trim())
}

pub fn parse(bytes: &[u8]) -> std::result::Result<U8Array, String> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err("missing NPY magic".into());
    }
    if bytes[6..8] != [1, 0] {
        return Err(format!("unsupported NPY version {}.{}", bytes[6], bytes[7]));
    }
    let len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let body = 10 + len;
    let header = bytes
        .get(10..body)
        .and_then(|h| std::str::from_utf8(h).ok())
        .ok_or("truncated or non-text NPY header")?;
    let descr = header_value(header, "descr").ok_or("header lacks descr")?;
    if !matches!(descr.trim_matches(['\'', '"']), "|u1" | "u1" | "<u1" | ">u1") {
        return Err(format!("dtype {descr} is not uint8"));
    }
    if header_value(header, "fortran_order") != Some("False") {
        return Err("fortran-ordered arrays are not supported".into());
    }
    let shape = header_value(header, "shape")
        .ok_or("header lacks shape")?
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.trim_end_matches('L').parse::<usize>().map_err(|_| format!("bad dimension {s:?}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let n: usize = shape.iter().product();
    let data = &bytes[body..];
    if data.len() != n {
        return Err(format!("shape {shape:?} needs {n} bytes, found {}", data.len()));
    }
    Ok(U8Array {
        shape,
        data: data.to_vec(),
    })
}

pub fn write(array: &U8Array) -> Vec<u8> {
    let dims: Vec<String> = array.shape.iter().map(usize::to_string).collect();
    let shape = match dims.len() {
        1 => format!("({},)", dims[0]),
        _ => format!("({})", dims.join(", ")),
    };
    let mut header = format!("{{'descr': '|u1', 'fortran_order': False, 'shape': {shape}, }}");
    // pad so the data starts on a 64-byte boundary, header ends in '\n'
    while (10 + header.len() + 1) % 64 != 0 {
        header.push(' ');
    }
    header.push('\n');
    let mut out = Vec::with_capacity(10 + header.len() + array.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&array.data);
    out
}

pub(crate) fn parse_member(path: &std::path::Path, member: &str, bytes: &[u8]) -> Result<U8Array> {
    parse(bytes).map_err(|msg| Error::Load {
        path: path.to_path_buf(),
        msg: format!("{member}: {msg}"),
    })
}
