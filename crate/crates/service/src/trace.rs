//! Recorded datagram traces: an 8-byte header `MVTRACE1`, then one record
//! per datagram of a little-endian `u64` send offset in microseconds followed
//! by the 48 datagram bytes.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, UdpSocket};
use std::path::Path;
use std::time::{Duration, Instant};

use peakvol_core::net::{WirePacket, PACKET_LEN};
use thiserror::Error;

pub const TRACE_MAGIC: [u8; 8] = *b"MVTRACE1";
const RECORD_LEN: usize = 8 + PACKET_LEN;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a datagram trace (bad header)")]
    BadHeader,
    #[error("trace is truncated: {0} trailing bytes")]
    Truncated(usize),
}

pub type TraceRecord = (u64, WirePacket);

pub fn encode_trace(records: impl IntoIterator<Item = TraceRecord>) -> Vec<u8> {
    let mut out = TRACE_MAGIC.to_vec();
    for (t, p) in records {
        out.extend_from_slice(&t.to_le_bytes());
        out.extend_from_slice(&p);
    }
    out
}

pub fn decode_trace(bytes: &[u8]) -> Result<Vec<TraceRecord>, TraceError> {
    let body = bytes.strip_prefix(&TRACE_MAGIC).ok_or(TraceError::BadHeader)?;
    if body.len() % RECORD_LEN != 0 {
        return Err(TraceError::Truncated(body.len() % RECORD_LEN));
    }
    Ok(body
        .chunks_exact(RECORD_LEN)
        .map(|r| {
            let t = u64::from_le_bytes(r[..8].try_into().expect("8 bytes"));
            let p: WirePacket = r[8..].try_into().expect("packet bytes");
            (t, p)
        })
        .collect())
}

pub fn write_trace(path: &Path, records: impl IntoIterator<Item = TraceRecord>) -> Result<(), TraceError> {
    std::fs::File::create(path)?.write_all(&encode_trace(records))?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_trace(&bytes)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub sent: u64,
    pub errors: u64,
    pub last_error: Option<String>,
}

/// Sends recorded datagrams in order, optionally honoring their offsets.
pub fn replay(records: &[TraceRecord], sink: SocketAddr, paced: bool) -> io::Result<ReplayReport> {
    let bind = if sink.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" };
    let socket = UdpSocket::bind(bind)?;
    let start = Instant::now();
    let mut report = ReplayReport {
        sent: 0,
        errors: 0,
        last_error: None,
    };
    for (t, p) in records {
        if paced {
            if let Some(wait) = Duration::from_micros(*t).checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        match socket.send_to(p, sink) {
            Ok(_) => report.sent += 1,
            Err(e) => {
                report.errors += 1;
                report.last_error = Some(e.to_string());
            }
        }
    }
    Ok(report)
}
