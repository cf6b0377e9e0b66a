use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClipLabel, MotionClip, MotionSet, Skeleton};
use crate::container;
use crate::error::{Error, FormatErrorCode, Result};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"DMOTION\0";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClipEntry {
    offset: usize,
    frames: usize,
    #[serde(flatten)]
    label: ClipLabel,
}

/// JSON header of a motion file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionFile {
    pub format_version: u32,
    pub skeleton: Skeleton,
    pub frame_rate: f64,
    pub joints: usize,
    clips: Vec<ClipEntry>,
    pub payload_values: usize,
    /// Configuration of the run that produced the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl MotionFile {
    fn describe(set: &MotionSet) -> Result<Self> {
        let joints = set.skeleton.joints();
        let mut offset = 0;
        let mut clips = Vec::with_capacity(set.clips.len());
        for (i, c) in set.clips.iter().enumerate() {
            if c.joints() != joints {
                return Err(Error::InvalidArgument(format!(
                    "clip {i} has {} joints, skeleton has {joints}",
                    c.joints()
                )));
            }
            clips.push(ClipEntry {
                offset,
                frames: c.len(),
                label: c.label,
            });
            offset += c.frames.numel();
        }
        Ok(MotionFile {
            format_version: FORMAT_VERSION,
            skeleton: set.skeleton.clone(),
            frame_rate: set.frame_rate,
            joints,
            clips,
            payload_values: offset,
            provenance: None,
        })
    }
}

pub fn encode_motion(set: &MotionSet) -> Result<Vec<u8>> {
    encode_motion_with(set, None)
}

/// Encodes `set` with an optional provenance document in the header.
pub fn encode_motion_with(set: &MotionSet, provenance: Option<serde_json::Value>) -> Result<Vec<u8>> {
    let mut header = MotionFile::describe(set)?;
    header.provenance = provenance;
    let mut payload = Vec::with_capacity(header.payload_values);
    for c in &set.clips {
        payload.extend_from_slice(c.frames.data());
    }
    container::encode(MAGIC, FORMAT_VERSION, &header, &payload)
}

pub fn decode_motion(bytes: &[u8]) -> Result<MotionSet> {
    decode_motion_with(bytes).map(|(set, _)| set)
}

/// Decodes a motion file together with its provenance, if any.
pub fn decode_motion_with(bytes: &[u8]) -> Result<(MotionSet, Option<serde_json::Value>)> {
    let (header, payload): (MotionFile, Vec<f64>) =
        container::decode(MAGIC, FORMAT_VERSION, bytes)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::format(
            FormatErrorCode::VersionMismatch,
            format!("header format_version {}", header.format_version),
        ));
    }
    if header.joints != header.skeleton.joints() {
        return Err(Error::format(
            FormatErrorCode::HeaderInvalid,
            "joint count disagrees with skeleton",
        ));
    }
    let per_frame = header.joints * 3;
    let mut expected_offset = 0;
    let mut clips = Vec::with_capacity(header.clips.len());
    for (i, entry) in header.clips.iter().enumerate() {
        let len = entry.frames * per_frame;
        if entry.offset != expected_offset || entry.frames == 0 {
            return Err(Error::format(
                FormatErrorCode::LengthMismatch,
                format!("clip {i} index entry is inconsistent"),
            ));
        }
        expected_offset += len;
        if expected_offset > payload.len() {
            return Err(Error::format(
                FormatErrorCode::LengthMismatch,
                format!("clip {i} runs past the payload"),
            ));
        }
        let data = payload[entry.offset..expected_offset].to_vec();
        let frames = Tensor::new(&[entry.frames, header.joints, 3], data)?;
        clips.push(
            MotionClip::new(frames, entry.label)
                .map_err(|e| Error::format(FormatErrorCode::HeaderInvalid, e.to_string()))?,
        );
    }
    if expected_offset != payload.len() {
        return Err(Error::format(
            FormatErrorCode::LengthMismatch,
            format!(
                "clip index covers {expected_offset} values, payload holds {}",
                payload.len()
            ),
        ));
    }
    let set = MotionSet {
        skeleton: header.skeleton,
        frame_rate: header.frame_rate,
        clips,
    };
    Ok((set, header.provenance))
}

pub fn save_motion(set: &MotionSet, path: &Path) -> Result<()> {
    let bytes = encode_motion(set)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_motion(path: &Path) -> Result<MotionSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_motion(&bytes)
}

/// Plain CSV export with columns `clip,frame,joint,x,y,z`.
pub fn write_csv(set: &MotionSet, path: &Path) -> Result<()> {
    let mut s = String::from("clip,frame,joint,x,y,z\n");
    for (ci, c) in set.clips.iter().enumerate() {
        let j = c.joints();
        for (i, p) in c.frames.data().chunks_exact(3).enumerate() {
            let _ = writeln!(s, "{ci},{},{},{},{},{}", i / j, i % j, p[0], p[1], p[2]);
        }
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
