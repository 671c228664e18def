use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use super::queue::DropOldestQueue;
use super::wire::{decode, PACKET_LEN};
use crate::interaction::ControllerSample;

pub const DEFAULT_PORT: u16 = 7741;
pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;

const POLL: Duration = Duration::from_millis(50);

#[derive(Debug, Default)]
pub struct ReceiverStats {
    pub received: AtomicU64,
    pub malformed: AtomicU64,
    pub reordered: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct ReceiverCounts {
    pub received: u64,
    pub malformed: u64,
    pub reordered: u64,
}

impl ReceiverStats {
    pub fn snapshot(&self) -> ReceiverCounts {
        ReceiverCounts {
            received: self.received.load(Ordering::Relaxed),
            malformed: self.malformed.load(Ordering::Relaxed),
            reordered: self.reordered.load(Ordering::Relaxed),
        }
    }
}

/// True if `seq` does not come after `last` in wrapping order.
pub fn is_reordered(last: u16, seq: u16) -> bool {
    (seq.wrapping_sub(last) as i16) <= 0
}

/// Background UDP listener feeding decoded samples into a queue. Malformed
/// datagrams are dropped and counted; out-of-order ones are counted but
/// still delivered. Stops on drop.
pub struct Receiver {
    addr: SocketAddr,
    queue: Arc<DropOldestQueue<ControllerSample>>,
    stats: Arc<ReceiverStats>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Receiver {
    pub fn bind(addr: SocketAddr, queue: Arc<DropOldestQueue<ControllerSample>>) -> io::Result<Self> {
        let socket = UdpSocket::bind(addr)?;
        socket.set_read_timeout(Some(POLL))?;
        let addr = socket.local_addr()?;
        let stats = Arc::new(ReceiverStats::default());
        let stop = Arc::new(AtomicBool::new(false));
        let thread = {
            let (queue, stats, stop) = (Arc::clone(&queue), Arc::clone(&stats), Arc::clone(&stop));
            std::thread::Builder::new()
                .name("udp-receiver".into())
                .spawn(move || run(socket, &queue, &stats, &stop))?
        };
        Ok(Self {
            addr,
            queue,
            stats,
            stop,
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn queue(&self) -> &Arc<DropOldestQueue<ControllerSample>> {
        &self.queue
    }

    pub fn stats(&self) -> ReceiverCounts {
        self.stats.snapshot()
    }

    pub fn shutdown(mut self) {
        self.stop_thread();
    }

    fn stop_thread(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Receiver {
    fn drop(&mut self) {
        self.stop_thread();
    }
}

/// Listens on all interfaces at `port` with a fresh queue.
pub fn receiver_loop(port: u16) -> io::Result<Receiver> {
    let queue = Arc::new(DropOldestQueue::new(DEFAULT_QUEUE_CAPACITY));
    Receiver::bind(SocketAddr::from(([0, 0, 0, 0], port)), queue)
}

fn run(
    socket: UdpSocket,
    queue: &DropOldestQueue<ControllerSample>,
    stats: &ReceiverStats,
    stop: &AtomicBool,
) {
    // Oversized buffer so long datagrams are seen whole and rejected.
    let mut buf = [0u8; PACKET_LEN * 4];
    let mut last_seq: HashMap<SocketAddr, u16> = HashMap::new();
    while !stop.load(Ordering::Relaxed) {
        let (n, from) = match socket.recv_from(&mut buf) {
            Ok(x) => x,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
            Err(e) => {
                tracing::warn!("udp receive failed: {e}");
                std::thread::sleep(POLL);
                continue;
            }
        };
        match decode(&buf[..n]) {
            Ok(packet) => {
                stats.received.fetch_add(1, Ordering::Relaxed);
                if let Some(&last) = last_seq.get(&from) {
                    if is_reordered(last, packet.seq) {
                        stats.reordered.fetch_add(1, Ordering::Relaxed);
                    }
                }
                last_seq.insert(from, packet.seq);
                queue.push(packet.sample);
            }
            Err(e) => {
                stats.malformed.fetch_add(1, Ordering::Relaxed);
                tracing::debug!("dropped datagram from {from}: {e}");
            }
        }
    }
}
