//! Shared binary layout for motion files and checkpoints:
//!
//! ```text
//! magic[8] | version: u32 LE | header_len: u64 LE | header JSON | f64 LE payload
//! ```
//!
//! The JSON header must carry `"payload_values"`, the exact number of
//! floats that follow it.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, FormatErrorCode, Result};

const PREFIX: usize = 8 + 4 + 8;

pub(crate) fn encode<H: Serialize>(
    magic: &[u8; 8],
    version: u32,
    header: &H,
    payload: &[f64],
) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(PREFIX + header.len() + payload.len() * 8);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

#[derive(serde::Deserialize)]
struct Declared {
    payload_values: usize,
}

pub(crate) fn decode<H: DeserializeOwned>(
    magic: &[u8; 8],
    version: u32,
    bytes: &[u8],
) -> Result<(H, Vec<f64>)> {
    if bytes.len() < PREFIX {
        if bytes.len() >= 8 && &bytes[..8] != magic {
            return Err(Error::format(FormatErrorCode::BadMagic, "unrecognized file"));
        }
        return Err(Error::format(
            FormatErrorCode::Truncated,
            format!("{} bytes is shorter than the fixed prefix", bytes.len()),
        ));
    }
    if &bytes[..8] != magic {
        return Err(Error::format(FormatErrorCode::BadMagic, "unrecognized file"));
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if found != version {
        return Err(Error::format(
            FormatErrorCode::VersionMismatch,
            format!("expected version {version}, found {found}"),
        ));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let rest = &bytes[PREFIX..];
    if header_len > rest.len() {
        return Err(Error::format(
            FormatErrorCode::Truncated,
            format!("header declares {header_len} bytes, {} available", rest.len()),
        ));
    }
    let (header_bytes, payload) = rest.split_at(header_len);
    let declared: Declared = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::format(FormatErrorCode::HeaderInvalid, e.to_string()))?;
    let header: H = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::format(FormatErrorCode::HeaderInvalid, e.to_string()))?;
    let want = declared.payload_values * 8;
    if payload.len() < want {
        return Err(Error::format(
            FormatErrorCode::Truncated,
            format!("payload has {} bytes, header declares {want}", payload.len()),
        ));
    }
    if payload.len() > want {
        return Err(Error::format(
            FormatErrorCode::LengthMismatch,
            format!("payload has {} bytes, header declares {want}", payload.len()),
        ));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}
