//! Scripted controller simulator.
//!
//! A script is a list of keyframes per device. The simulator samples every
//! device track at a fixed rate (linear position and trigger, slerp for
//! orientation, held buttons) and emits one datagram per device per tick.

use std::net::{SocketAddr, UdpSocket};
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::wire::{encode, WirePacket};
use crate::interaction::{Buttons, ControllerSample, Device};

pub const MIN_RATE_HZ: f64 = 1.0;
pub const MAX_RATE_HZ: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("rate {0} Hz outside [1, 1000]")]
    BadRate(f64),
    #[error("keyframe {index}: {message}")]
    BadKeyframe { index: usize, message: String },
    #[error("script has no keyframes")]
    Empty,
    #[error("cannot parse script: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("script i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

/// Script file entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    /// Seconds from the start of the script.
    pub t: f64,
    pub device: Device,
    #[serde(default)]
    pub pos: [f64; 3],
    #[serde(default = "identity_quat")]
    pub quat: [f64; 4],
    #[serde(default)]
    pub buttons: Buttons,
    #[serde(default)]
    pub trigger: f64,
}

impl Keyframe {
    pub fn at(t: f64, device: Device) -> Self {
        Self {
            t,
            device,
            pos: [0.0; 3],
            quat: identity_quat(),
            buttons: Buttons::empty(),
            trigger: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TrackKey {
    t_us: u64,
    pos: [f64; 3],
    rot: UnitQuaternion<f64>,
    buttons: Buttons,
    trigger: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Track {
    device: Device,
    keys: Vec<TrackKey>,
}

impl Track {
    fn sample_at(&self, t_us: u64, timestamp_us: u64) -> ControllerSample {
        let keys = &self.keys;
        let i = keys.partition_point(|k| k.t_us <= t_us);
        let (pos, rot, buttons, trigger) = if i == 0 {
            let k = &keys[0];
            (k.pos, k.rot, k.buttons, k.trigger)
        } else if i == keys.len() {
            let k = &keys[i - 1];
            (k.pos, k.rot, k.buttons, k.trigger)
        } else {
            let (a, b) = (&keys[i - 1], &keys[i]);
            let s = (t_us - a.t_us) as f64 / (b.t_us - a.t_us) as f64;
            let lerp = |x: f64, y: f64| x + (y - x) * s;
            let rot = a
                .rot
                .try_slerp(&b.rot, s, 1e-9)
                .unwrap_or_else(|| a.rot.nlerp(&b.rot, s));
            (
                [lerp(a.pos[0], b.pos[0]), lerp(a.pos[1], b.pos[1]), lerp(a.pos[2], b.pos[2])],
                rot,
                a.buttons,
                lerp(a.trigger, b.trigger),
            )
        };
        let q = rot.quaternion();
        ControllerSample {
            device: self.device,
            timestamp_us,
            position: pos,
            orientation: [q.w, q.i, q.j, q.k],
            buttons,
            trigger: trigger.clamp(0.0, 1.0),
        }
    }
}

fn seconds_to_us(t: f64) -> u64 {
    (t * 1e6).round() as u64
}

/// Validated script: one keyframe track per device, times strictly
/// increasing within each track.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedTrajectory {
    tracks: Vec<Track>,
    end_us: u64,
}

impl ScriptedTrajectory {
    pub fn new(keyframes: &[Keyframe]) -> Result<Self, SimError> {
        if keyframes.is_empty() {
            return Err(SimError::Empty);
        }
        let mut tracks: Vec<Track> = Vec::new();
        for (index, k) in keyframes.iter().enumerate() {
            let bad = |message: String| SimError::BadKeyframe { index, message };
            if !(k.t >= 0.0 && k.t.is_finite()) {
                return Err(bad(format!("time {} must be finite and >= 0", k.t)));
            }
            if !k.pos.iter().chain(&k.quat).all(|v| v.is_finite()) {
                return Err(bad("non-finite pose".into()));
            }
            if !(0.0..=1.0).contains(&k.trigger) {
                return Err(bad(format!("trigger {} outside [0, 1]", k.trigger)));
            }
            let [w, x, y, z] = k.quat;
            let q = Quaternion::new(w, x, y, z);
            if q.norm() < 1e-9 {
                return Err(bad("zero-length quaternion".into()));
            }
            let key = TrackKey {
                t_us: seconds_to_us(k.t),
                pos: k.pos,
                rot: UnitQuaternion::new_normalize(q),
                buttons: k.buttons,
                trigger: k.trigger,
            };
            let track = match tracks.iter_mut().find(|tr| tr.device == k.device) {
                Some(tr) => tr,
                None => {
                    tracks.push(Track {
                        device: k.device,
                        keys: Vec::new(),
                    });
                    tracks.last_mut().expect("just pushed")
                }
            };
            if let Some(prev) = track.keys.last() {
                if key.t_us <= prev.t_us {
                    return Err(bad("time offsets must be strictly increasing per device".into()));
                }
            }
            track.keys.push(key);
        }
        // Main controller first within a tick, for a fixed emission order.
        tracks.sort_by_key(|t| t.device != Device::MainController);
        let end_us = tracks
            .iter()
            .map(|t| t.keys.last().expect("nonempty track").t_us)
            .max()
            .unwrap_or(0);
        Ok(Self { tracks, end_us })
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let keys: Vec<Keyframe> = serde_json::from_str(text)?;
        Self::new(&keys)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Time of the last keyframe.
    pub fn duration(&self) -> Duration {
        Duration::from_micros(self.end_us)
    }

    pub fn devices(&self) -> Vec<Device> {
        self.tracks.iter().map(|t| t.device).collect()
    }

    /// Interpolated sample of `device` at script time `t_us`.
    pub fn sample(&self, device: Device, t_us: u64) -> Option<ControllerSample> {
        self.tracks
            .iter()
            .find(|t| t.device == device)
            .map(|t| t.sample_at(t_us, t_us))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub rate_hz: f64,
    /// Emission window; defaults to the script's last keyframe time.
    pub duration: Option<Duration>,
    pub start_seq: u16,
    /// Added to every emitted timestamp.
    pub start_timestamp_us: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            rate_hz: 60.0,
            duration: None,
            start_seq: 0,
            start_timestamp_us: 0,
        }
    }
}

/// One emitted datagram and the script time it belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emission {
    pub t_us: u64,
    pub seq: u16,
    pub sample: ControllerSample,
    pub bytes: WirePacket,
}

fn tick_us(k: u64, rate_hz: f64) -> u64 {
    (k as f64 * 1e6 / rate_hz).round() as u64
}

/// Deterministic packet sequence for a script. Ticks run at `k / rate` for
/// every `k` with tick time before the end of the window; a zero-length
/// window still produces one tick.
pub fn simulate(traj: &ScriptedTrajectory, cfg: &SimConfig) -> Result<Vec<Emission>, SimError> {
    if !(MIN_RATE_HZ..=MAX_RATE_HZ).contains(&cfg.rate_hz) {
        return Err(SimError::BadRate(cfg.rate_hz));
    }
    let window_us = cfg
        .duration
        .map(|d| d.as_micros() as u64)
        .unwrap_or(traj.end_us);
    let mut out = Vec::new();
    let mut seq = cfg.start_seq;
    let mut k = 0u64;
    loop {
        let t = tick_us(k, cfg.rate_hz);
        if k > 0 && t >= window_us {
            break;
        }
        for track in &traj.tracks {
            let sample = track.sample_at(t, cfg.start_timestamp_us + t);
            out.push(Emission {
                t_us: t,
                seq,
                sample,
                bytes: encode(&sample, seq),
            });
            seq = seq.wrapping_add(1);
        }
        k += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub packets_sent: u64,
    pub send_errors: u64,
    pub first_seq: u16,
    pub last_seq: u16,
    pub last_error: Option<String>,
}

/// Sends the script to `sink`, optionally paced in real time. Send failures
/// are counted and emission continues.
pub fn simulator_run(
    traj: &ScriptedTrajectory,
    cfg: &SimConfig,
    sink: SocketAddr,
    paced: bool,
) -> Result<SimReport, SimError> {
    let emissions = simulate(traj, cfg)?;
    let bind: SocketAddr = if sink.is_ipv4() {
        "0.0.0.0:0".parse().expect("literal addr")
    } else {
        "[::]:0".parse().expect("literal addr")
    };
    let socket = UdpSocket::bind(bind)?;
    let start = Instant::now();
    let mut report = SimReport {
        packets_sent: 0,
        send_errors: 0,
        first_seq: emissions.first().map(|e| e.seq).unwrap_or(cfg.start_seq),
        last_seq: emissions.last().map(|e| e.seq).unwrap_or(cfg.start_seq),
        last_error: None,
    };
    for e in &emissions {
        if paced {
            let due = Duration::from_micros(e.t_us);
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        match socket.send_to(&e.bytes, sink) {
            Ok(_) => report.packets_sent += 1,
            Err(err) => {
                report.send_errors += 1;
                report.last_error = Some(err.to_string());
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_script() -> ScriptedTrajectory {
        let a = Keyframe::at(0.0, Device::MainController);
        let b = Keyframe {
            pos: [1.0, 2.0, -1.0],
            ..Keyframe::at(1.0, Device::MainController)
        };
        ScriptedTrajectory::new(&[a, b]).unwrap()
    }

    #[test]
    fn linear_positions_at_10hz() {
        let cfg = SimConfig {
            rate_hz: 10.0,
            ..SimConfig::default()
        };
        let out = simulate(&linear_script(), &cfg).unwrap();
        assert_eq!(out.len(), 10);
        for (k, e) in out.iter().enumerate() {
            let s = k as f64 / 10.0;
            assert_eq!(e.seq, k as u16);
            assert_eq!(e.sample.timestamp_us, k as u64 * 100_000);
            let expected = [s, 2.0 * s, -s];
            for (got, want) in e.sample.position.iter().zip(expected) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_keyframe_is_constant() {
        let k = Keyframe {
            pos: [0.1, 0.2, 0.3],
            trigger: 0.25,
            ..Keyframe::at(0.0, Device::NavPad)
        };
        let traj = ScriptedTrajectory::new(&[k]).unwrap();
        assert_eq!(simulate(&traj, &SimConfig::default()).unwrap().len(), 1);
        let cfg = SimConfig {
            rate_hz: 20.0,
            duration: Some(Duration::from_millis(500)),
            ..SimConfig::default()
        };
        let out = simulate(&traj, &cfg).unwrap();
        assert_eq!(out.len(), 10);
        assert!(out.iter().all(|e| e.sample.position == [0.1, 0.2, 0.3] && e.sample.trigger == 0.25));
    }

    #[test]
    fn button_step_interpolation() {
        let keys = [
            Keyframe::at(0.0, Device::NavPad),
            Keyframe {
                buttons: Buttons::ADD,
                ..Keyframe::at(0.5, Device::NavPad)
            },
            Keyframe::at(1.0, Device::NavPad),
        ];
        let traj = ScriptedTrajectory::new(&keys).unwrap();
        let cfg = SimConfig {
            rate_hz: 10.0,
            ..SimConfig::default()
        };
        for e in simulate(&traj, &cfg).unwrap() {
            let has = e.sample.buttons.contains(Buttons::ADD);
            assert_eq!(has, e.sample.timestamp_us >= 500_000, "at {}", e.sample.timestamp_us);
        }
    }

    #[test]
    fn orientation_slerps() {
        let q = UnitQuaternion::from_axis_angle(&nalgebra::Vector3::z_axis(), 1.0);
        let keys = [
            Keyframe::at(0.0, Device::MainController),
            Keyframe {
                quat: [q.w, q.i, q.j, q.k],
                ..Keyframe::at(1.0, Device::MainController)
            },
        ];
        let traj = ScriptedTrajectory::new(&keys).unwrap();
        let s = traj.sample(Device::MainController, 250_000).unwrap();
        let expected = UnitQuaternion::from_axis_angle(&nalgebra::Vector3::z_axis(), 0.25);
        assert!((s.rotation().angle_to(&expected)).abs() < 1e-9);
    }

    #[test]
    fn two_devices_interleave() {
        let keys = [
            Keyframe::at(0.0, Device::NavPad),
            Keyframe::at(0.0, Device::MainController),
            Keyframe::at(0.2, Device::MainController),
        ];
        let traj = ScriptedTrajectory::new(&keys).unwrap();
        let cfg = SimConfig {
            rate_hz: 10.0,
            start_seq: u16::MAX,
            ..SimConfig::default()
        };
        let out = simulate(&traj, &cfg).unwrap();
        let devices: Vec<Device> = out.iter().map(|e| e.sample.device).collect();
        use Device::*;
        assert_eq!(devices, vec![MainController, NavPad, MainController, NavPad]);
        let seqs: Vec<u16> = out.iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![u16::MAX, 0, 1, 2]);
    }

    #[test]
    fn rejects_bad_scripts_and_rates() {
        assert!(matches!(ScriptedTrajectory::new(&[]), Err(SimError::Empty)));
        let dup = [Keyframe::at(0.5, Device::NavPad), Keyframe::at(0.5, Device::NavPad)];
        assert!(matches!(ScriptedTrajectory::new(&dup), Err(SimError::BadKeyframe { index: 1, .. })));
        let bad_trigger = Keyframe {
            trigger: 2.0,
            ..Keyframe::at(0.0, Device::NavPad)
        };
        assert!(ScriptedTrajectory::new(&[bad_trigger]).is_err());
        for rate in [0.5, 1000.5, f64::NAN] {
            let cfg = SimConfig {
                rate_hz: rate,
                ..SimConfig::default()
            };
            assert!(matches!(simulate(&linear_script(), &cfg), Err(SimError::BadRate(_))));
        }
    }

    #[test]
    fn parses_script_json() {
        let text = r#"[
            {"t": 0.0, "device": "NavPad", "pos": [0,0,0], "quat": [1,0,0,0], "buttons": [], "trigger": 0},
            {"t": 0.5, "device": "NavPad", "buttons": ["ADD"]}
        ]"#;
        let traj = ScriptedTrajectory::from_json(text).unwrap();
        assert_eq!(traj.devices(), vec![Device::NavPad]);
        assert_eq!(traj.duration(), Duration::from_millis(500));
        assert!(ScriptedTrajectory::from_json(r#"[{"t": 0, "device": "Wiimote"}]"#).is_err());
    }

    #[test]
    fn unreachable_sink_keeps_going() {
        // Port 9 on an unroutable documentation address; sends may fail or
        // vanish, but every packet is attempted.
        let cfg = SimConfig {
            rate_hz: 100.0,
            ..SimConfig::default()
        };
        let report = simulator_run(&linear_script(), &cfg, "127.0.0.1:9".parse().unwrap(), false).unwrap();
        assert_eq!(report.packets_sent + report.send_errors, 100);
    }
}
