//! Controller transport: wire format, UDP receiver, scripted simulator.

mod queue;
mod receiver;
mod sim;
mod wire;

pub use queue::DropOldestQueue;
pub use receiver::{
    is_reordered, receiver_loop, Receiver, ReceiverCounts, ReceiverStats, DEFAULT_PORT,
    DEFAULT_QUEUE_CAPACITY,
};
pub use sim::{
    simulate, simulator_run, Emission, Keyframe, ScriptedTrajectory, SimConfig, SimError,
    SimReport, MAX_RATE_HZ, MIN_RATE_HZ,
};
pub use wire::{
    decode, encode, trigger_from_byte, trigger_to_byte, DecodeError, Packet, WirePacket, MAGIC,
    PACKET_LEN, VERSION,
};
