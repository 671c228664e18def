//! Fixed 48-byte little-endian controller datagram.
//!
//! | offset | size | field                                   |
//! |-------:|-----:|-----------------------------------------|
//! |      0 |    4 | magic `MVW1`                            |
//! |      4 |    1 | version (1)                             |
//! |      5 |    1 | device (0 main controller, 1 Nav-Pad)   |
//! |      6 |    2 | sequence number, wrapping               |
//! |      8 |    8 | timestamp, microseconds                 |
//! |     16 |   12 | position x, y, z (f32, meters)          |
//! |     28 |   16 | orientation w, x, y, z (f32)            |
//! |     44 |    2 | button bitmask                          |
//! |     46 |    1 | trigger, 0..=255 over [0, 1]            |
//! |     47 |    1 | reserved, 0                             |

use thiserror::Error;

use crate::interaction::{Buttons, ControllerSample, Device};

pub const PACKET_LEN: usize = 48;
pub const MAGIC: [u8; 4] = *b"MVW1";
pub const VERSION: u8 = 1;

pub type WirePacket = [u8; PACKET_LEN];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("datagram is {0} bytes, expected {PACKET_LEN}")]
    BadLength(usize),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("unknown device id {0}")]
    UnknownDevice(u8),
    #[error("non-finite value in field `{0}`")]
    NonFinite(&'static str),
    #[error("orientation quaternion has zero length")]
    DegenerateOrientation,
}

/// A decoded datagram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub seq: u16,
    pub sample: ControllerSample,
}

pub fn trigger_to_byte(trigger: f64) -> u8 {
    (trigger.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn trigger_from_byte(b: u8) -> f64 {
    b as f64 / 255.0
}

pub fn encode(sample: &ControllerSample, seq: u16) -> WirePacket {
    let mut out = [0u8; PACKET_LEN];
    out[0..4].copy_from_slice(&MAGIC);
    out[4] = VERSION;
    out[5] = match sample.device {
        Device::MainController => 0,
        Device::NavPad => 1,
    };
    out[6..8].copy_from_slice(&seq.to_le_bytes());
    out[8..16].copy_from_slice(&sample.timestamp_us.to_le_bytes());
    let floats = sample.position.iter().chain(&sample.orientation);
    for (i, v) in floats.enumerate() {
        let at = 16 + 4 * i;
        out[at..at + 4].copy_from_slice(&(*v as f32).to_le_bytes());
    }
    out[44..46].copy_from_slice(&sample.buttons.bits().to_le_bytes());
    out[46] = trigger_to_byte(sample.trigger);
    out
}

/// Decodes one datagram. Never panics. Unknown button bits are dropped and
/// an orientation further than 1e-3 from unit length is renormalized, so
/// re-encoding a decoded packet reproduces its bytes.
pub fn decode(bytes: &[u8]) -> Result<Packet, DecodeError> {
    let bytes: &[u8; PACKET_LEN] = bytes
        .try_into()
        .map_err(|_| DecodeError::BadLength(bytes.len()))?;
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if magic != MAGIC {
        return Err(DecodeError::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(DecodeError::BadVersion(bytes[4]));
    }
    let device = match bytes[5] {
        0 => Device::MainController,
        1 => Device::NavPad,
        other => return Err(DecodeError::UnknownDevice(other)),
    };
    let seq = u16::from_le_bytes([bytes[6], bytes[7]]);
    let mut ts = [0u8; 8];
    ts.copy_from_slice(&bytes[8..16]);
    let timestamp_us = u64::from_le_bytes(ts);

    const NAMES: [&str; 7] = [
        "position.x",
        "position.y",
        "position.z",
        "orientation.w",
        "orientation.x",
        "orientation.y",
        "orientation.z",
    ];
    let mut floats = [0f64; 7];
    for (i, slot) in floats.iter_mut().enumerate() {
        let at = 16 + 4 * i;
        let v = f32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]);
        if !v.is_finite() {
            return Err(DecodeError::NonFinite(NAMES[i]));
        }
        *slot = v as f64;
    }
    let q = [floats[3], floats[4], floats[5], floats[6]];
    let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm <= 1e-6 || !norm.is_finite() {
        return Err(DecodeError::DegenerateOrientation);
    }

    Ok(Packet {
        seq,
        sample: ControllerSample {
            device,
            timestamp_us,
            position: [floats[0], floats[1], floats[2]],
            orientation: if (norm - 1.0).abs() > 1e-3 { q.map(|c| c / norm) } else { q },
            buttons: Buttons::from_bits_truncate(u16::from_le_bytes([bytes[44], bytes[45]])),
            trigger: trigger_from_byte(bytes[46]),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ControllerSample {
        ControllerSample {
            device: Device::NavPad,
            timestamp_us: 1_234_567_890_123,
            position: [0.25, -1.5, 3.0],
            orientation: [0.5, 0.5, 0.5, 0.5],
            buttons: Buttons::ADD | Buttons::CYCLE_COLOR,
            trigger: 1.0,
        }
    }

    #[test]
    fn layout_is_fixed() {
        let p = encode(&sample(), 0xBEEF);
        assert_eq!(&p[0..4], b"MVW1");
        assert_eq!(p[4], 1);
        assert_eq!(p[5], 1);
        assert_eq!(&p[6..8], &[0xEF, 0xBE]);
        assert_eq!(&p[8..16], &1_234_567_890_123u64.to_le_bytes());
        assert_eq!(&p[16..20], &0.25f32.to_le_bytes());
        assert_eq!(&p[28..32], &0.5f32.to_le_bytes());
        // ADD = bit 8, CYCLE_COLOR = bit 12
        assert_eq!(&p[44..46], &[0x00, 0x11]);
        assert_eq!(p[46], 255);
        assert_eq!(p[47], 0);
    }

    #[test]
    fn round_trip() {
        let s = sample();
        let back = decode(&encode(&s, 7)).unwrap();
        assert_eq!(back.seq, 7);
        assert_eq!(back.sample, s);
    }

    #[test]
    fn trigger_quantization() {
        assert_eq!(trigger_from_byte(255), 1.0);
        assert!((trigger_from_byte(128) - 0.50196).abs() < 1e-5);
        assert_eq!(trigger_to_byte(128.0 / 255.0), 128);
        assert_eq!(trigger_to_byte(0.5), 128);
    }

    #[test]
    fn distinct_errors() {
        let good = encode(&sample(), 1);
        assert_eq!(decode(&good[..47]), Err(DecodeError::BadLength(47)));
        assert_eq!(decode(&[]), Err(DecodeError::BadLength(0)));

        let mut b = good;
        b[0] = b'X';
        assert!(matches!(decode(&b), Err(DecodeError::BadMagic(_))));

        let mut b = good;
        b[4] = 2;
        assert_eq!(decode(&b), Err(DecodeError::BadVersion(2)));

        let mut b = good;
        b[5] = 9;
        assert_eq!(decode(&b), Err(DecodeError::UnknownDevice(9)));

        let mut b = good;
        b[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(decode(&b), Err(DecodeError::NonFinite("position.y")));

        let mut b = good;
        b[28..44].fill(0);
        assert_eq!(decode(&b), Err(DecodeError::DegenerateOrientation));
    }

    #[test]
    fn unknown_button_bits_dropped() {
        let mut b = encode(&sample(), 1);
        b[44] |= 0x80;
        assert_eq!(decode(&b).unwrap().sample.buttons, sample().buttons);
    }
}
