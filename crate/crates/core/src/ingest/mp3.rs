//! MPEG audio duration by walking frame headers.
//!
//! Works for CBR and VBR streams alike since every frame is visited. Leading
//! ID3v2 tags, a trailing ID3v1 tag and junk between frames are skipped.

use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Version {
    Mpeg1,
    Mpeg2,
    Mpeg25,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layer {
    L1,
    L2,
    L3,
}

// kbit/s, indexed by the 4-bit bitrate field; 0 = free format (unsupported)
const BITRATES_V1: [[u32; 16]; 3] = [
    [0, 32, 64, 96, 128, 160, 192, 224, 256, 288, 320, 352, 384, 416, 448, 0],
    [0, 32, 48, 56, 64, 80, 96, 112, 128, 160, 192, 224, 256, 320, 384, 0],
    [0, 32, 40, 48, 56, 64, 80, 96, 112, 128, 160, 192, 224, 256, 320, 0],
];
const BITRATES_V2: [[u32; 16]; 3] = [
    [0, 32, 48, 56, 64, 80, 96, 112, 128, 144, 160, 176, 192, 224, 256, 0],
    [0, 8, 16, 24, 32, 40, 48, 56, 64, 80, 96, 112, 128, 144, 160, 0],
    [0, 8, 16, 24, 32, 40, 48, 56, 64, 80, 96, 112, 128, 144, 160, 0],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    version: Version,
    layer: Layer,
    bitrate_kbps: u32,
    pub sample_rate: u32,
    padding: bool,
}

impl FrameHeader {
    pub fn parse(bytes: &[u8]) -> Option<Self> {
        let h = u32::from_be_bytes(bytes.get(..4)?.try_into().ok()?);
        if h >> 21 != 0x7ff {
            return None;
        }
        let version = match (h >> 19) & 0b11 {
            0b00 => Version::Mpeg25,
            0b10 => Version::Mpeg2,
            0b11 => Version::Mpeg1,
            _ => return None,
        };
        let layer = match (h >> 17) & 0b11 {
            0b01 => Layer::L3,
            0b10 => Layer::L2,
            0b11 => Layer::L1,
            _ => return None,
        };
        let layer_row = match layer {
            Layer::L1 => 0,
            Layer::L2 => 1,
            Layer::L3 => 2,
        };
        let bitrate_index = ((h >> 12) & 0xf) as usize;
        let bitrate_kbps = match version {
            Version::Mpeg1 => BITRATES_V1[layer_row][bitrate_index],
            _ => BITRATES_V2[layer_row][bitrate_index],
        };
        if bitrate_kbps == 0 {
            return None;
        }
        let base_rate = match (h >> 10) & 0b11 {
            0 => 44_100,
            1 => 48_000,
            2 => 32_000,
            _ => return None,
        };
        let sample_rate = match version {
            Version::Mpeg1 => base_rate,
            Version::Mpeg2 => base_rate / 2,
            Version::Mpeg25 => base_rate / 4,
        };
        Some(Self {
            version,
            layer,
            bitrate_kbps,
            sample_rate,
            padding: (h >> 9) & 1 == 1,
        })
    }

    pub fn samples(&self) -> u32 {
        match (self.layer, self.version) {
            (Layer::L1, _) => 384,
            (Layer::L2, _) => 1152,
            (Layer::L3, Version::Mpeg1) => 1152,
            (Layer::L3, _) => 576,
        }
    }

    /// Total frame size in bytes, header included.
    pub fn frame_len(&self) -> usize {
        let bitrate = self.bitrate_kbps * 1000;
        let pad = self.padding as u32;
        let len = match (self.layer, self.version) {
            (Layer::L1, _) => (12 * bitrate / self.sample_rate + pad) * 4,
            (Layer::L3, Version::Mpeg2 | Version::Mpeg25) => 72 * bitrate / self.sample_rate + pad,
            _ => 144 * bitrate / self.sample_rate + pad,
        };
        len as usize
    }
}

/// Size of an ID3v2 tag starting at `bytes[0]`, header and footer included.
fn id3v2_len(bytes: &[u8]) -> Option<usize> {
    if bytes.len() < 10 || &bytes[..3] != b"ID3" {
        return None;
    }
    let size = &bytes[6..10];
    if size.iter().any(|b| b & 0x80 != 0) {
        return None;
    }
    let body = size.iter().fold(0usize, |acc, &b| (acc << 7) | b as usize);
    let footer = if bytes[5] & 0x10 != 0 { 10 } else { 0 };
    Some(10 + body + footer)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no MPEG audio frames found")]
pub struct UnsupportedAudio;

/// Total play time in seconds.
pub fn mp3_duration(bytes: &[u8]) -> Result<f64, UnsupportedAudio> {
    let mut end = bytes.len();
    if end >= 128 && &bytes[end - 128..end - 125] == b"TAG" {
        end -= 128;
    }
    let data = &bytes[..end];

    // samples per sample rate, so the sum stays exact until the final division
    let mut samples: BTreeMap<u32, u64> = BTreeMap::new();
    let mut pos = 0;
    while pos + 4 <= data.len() {
        if let Some(len) = id3v2_len(&data[pos..]) {
            pos += len;
            continue;
        }
        match FrameHeader::parse(&data[pos..]) {
            Some(header) if pos + header.frame_len() <= data.len() => {
                *samples.entry(header.sample_rate).or_default() += header.samples() as u64;
                pos += header.frame_len();
            }
            _ => pos += 1,
        }
    }
    if samples.is_empty() {
        return Err(UnsupportedAudio);
    }
    Ok(samples
        .iter()
        .map(|(&rate, &count)| count as f64 / rate as f64)
        .sum())
}
