//! Binary token stream.
//!
//! Little-endian throughout. Header: magic `SATA`, version `u16`, `d_K`
//! `u16`, `d_V` `u16`, token count `u64`. Then per token: `d_K` query
//! floats, `d_K` key floats, `d_V` value floats, all `f64`.

use std::io::{Read, Write};

use crate::attention::TokenTriple;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SATA";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub key_width: u16,
    pub value_width: u16,
    pub count: u64,
}

fn io(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_header<W: Write>(w: &mut W, header: StreamHeader) -> Result<()> {
    let mut buf = [0u8; HEADER_LEN];
    buf[..4].copy_from_slice(&MAGIC);
    buf[4..6].copy_from_slice(&VERSION.to_le_bytes());
    buf[6..8].copy_from_slice(&header.key_width.to_le_bytes());
    buf[8..10].copy_from_slice(&header.value_width.to_le_bytes());
    buf[10..18].copy_from_slice(&header.count.to_le_bytes());
    w.write_all(&buf).map_err(io)
}

pub fn read_header<R: Read>(r: &mut R) -> Result<StreamHeader> {
    let mut buf = [0u8; HEADER_LEN];
    r.read_exact(&mut buf).map_err(io)?;
    if buf[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let header = StreamHeader {
        key_width: u16::from_le_bytes([buf[6], buf[7]]),
        value_width: u16::from_le_bytes([buf[8], buf[9]]),
        count: u64::from_le_bytes(buf[10..18].try_into().unwrap()),
    };
    if header.key_width == 0 || header.value_width == 0 {
        return Err(Error::Format("zero width in header".into()));
    }
    Ok(header)
}

pub fn write_token<W: Write>(w: &mut W, token: &TokenTriple) -> Result<()> {
    for x in token.query.iter().chain(&token.key).chain(&token.value) {
        w.write_all(&x.to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

pub fn write_tokens<W: Write>(w: &mut W, tokens: &[TokenTriple]) -> Result<()> {
    let first = tokens
        .first()
        .ok_or_else(|| Error::Format("refusing to write an empty stream".into()))?;
    let narrow = |x: usize| u16::try_from(x).map_err(|_| Error::Format(format!("width {x} exceeds u16")));
    let header = StreamHeader {
        key_width: narrow(first.key_width())?,
        value_width: narrow(first.value_width())?,
        count: tokens.len() as u64,
    };
    write_header(w, header)?;
    for t in tokens {
        if t.key_width() != header.key_width as usize
            || t.query.len() != header.key_width as usize
            || t.value_width() != header.value_width as usize
        {
            return Err(Error::Format("token widths are inconsistent".into()));
        }
        write_token(w, t)?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes).map_err(io)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_tokens<R: Read>(r: &mut R) -> Result<(StreamHeader, Vec<TokenTriple>)> {
    let header = read_header(r)?;
    let (dk, dv) = (header.key_width as usize, header.value_width as usize);
    let mut tokens = Vec::new();
    for _ in 0..header.count {
        let query = read_f64s(r, dk)?;
        let key = read_f64s(r, dk)?;
        let value = read_f64s(r, dv)?;
        tokens.push(TokenTriple { query, key, value });
    }
    Ok((header, tokens))
}
