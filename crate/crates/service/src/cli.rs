//! Command-line front end shared by the `peakvol` binary and tests.

use std::fmt;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use nalgebra::{Rotation3, Vector3};
use peakvol_core::interaction::Gains;
use peakvol_core::net::{simulate, simulator_run, ScriptedTrajectory, SimConfig, SimError};
use peakvol_core::raycast::{render_frame_in, Camera, ClipPlane, VolumeTransform};
use peakvol_core::transfer::{Rgba, TransferFunction};
use peakvol_core::volume::{generate_phantom, save_volume, VolumeError};

use crate::config::{RenderOverrides, ServiceConfig, VolumeSource, DEFAULT_HTTP_PORT};
use crate::trace;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Usage error (bad flags or values).
    pub const USAGE: i32 = 64;
    /// An input file is missing or unreadable.
    pub const INPUT_MISSING: i32 = 2;
    /// An input file exists but its content is invalid.
    pub const INPUT_INVALID: i32 = 3;
    /// Output could not be written, or a socket could not be used.
    pub const OUTPUT: i32 = 4;
    /// Service failed to start.
    pub const STARTUP: i32 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn volume_error(e: VolumeError) -> CliError {
    match e {
        VolumeError::Io { .. } => CliError::new(exit::INPUT_MISSING, e.to_string()),
        _ => CliError::new(exit::INPUT_INVALID, e.to_string()),
    }
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Io(_) => CliError::new(exit::INPUT_MISSING, e.to_string()),
        SimError::BadRate(_) => CliError::new(exit::USAGE, e.to_string()),
        _ => CliError::new(exit::INPUT_INVALID, e.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "peakvol", version, about = "Peak transfer-function volume renderer and session service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the session service (UDP controller input, HTTP and WebSocket output).
    Serve(ServeArgs),
    /// Render one frame to a PNG or PPM file.
    Render(RenderArgs),
    /// Send a scripted controller trajectory or a recorded trace over UDP.
    Simulate(SimulateArgs),
    /// Write the synthetic three-material phantom volume.
    Phantom(PhantomArgs),
}

#[derive(Debug, Clone, Args)]
pub struct VolumeArgs {
    /// Volume header (`.meta`) to load.
    #[arg(long, value_name = "META", conflicts_with = "phantom", required_unless_present = "phantom")]
    pub volume: Option<PathBuf>,
    /// Use the synthetic phantom with this edge length instead of a file.
    #[arg(long, value_name = "N")]
    pub phantom: Option<usize>,
}

impl VolumeArgs {
    fn source(&self) -> VolumeSource {
        match (&self.volume, self.phantom) {
            (Some(p), _) => VolumeSource::File(p.clone()),
            (None, Some(n)) => VolumeSource::Phantom([n; 3]),
            (None, None) => unreachable!("clap requires one of --volume/--phantom"),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SettingsArgs {
    /// Ray step in world units [default: half the smallest voxel spacing].
    #[arg(long)]
    pub step: Option<f64>,
    /// Step at which opacities are taken literally [default: smallest voxel spacing].
    #[arg(long)]
    pub reference_step: Option<f64>,
    /// Accumulated alpha at which rays stop; 1 disables early termination [default: 0.99].
    #[arg(long)]
    pub early_termination: Option<f64>,
    /// Background color as r,g,b,a in [0, 1] [default: 0,0,0,1].
    #[arg(long, value_parser = parse_vec::<4>)]
    pub background: Option<[f64; 4]>,
}

impl SettingsArgs {
    pub fn overrides(&self) -> RenderOverrides {
        RenderOverrides {
            step_size: self.step,
            reference_step: self.reference_step,
            early_termination_alpha: self.early_termination,
            background: self.background.map(|[r, g, b, a]| Rgba::new(r, g, b, a)),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub volume: VolumeArgs,
    /// Transfer-function JSON file.
    #[arg(long)]
    pub tf: PathBuf,
    /// Output image; `.png` writes PNG, anything else binary PPM.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    /// Camera position as x,y,z [default: on +z, framing the volume].
    #[arg(long, value_parser = parse_vec::<3>)]
    pub eye: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_vec::<3>, default_value = "0,0,0")]
    pub look_at: [f64; 3],
    #[arg(long, value_parser = parse_vec::<3>, default_value = "0,1,0")]
    pub up: [f64; 3],
    /// Vertical field of view in degrees.
    #[arg(long, default_value_t = 40.0)]
    pub fov: f64,
    /// Volume rotation as Euler angles roll,pitch,yaw in degrees.
    #[arg(long, value_parser = parse_vec::<3>, default_value = "0,0,0")]
    pub rotate: [f64; 3],
    /// Volume translation as x,y,z.
    #[arg(long, value_parser = parse_vec::<3>, default_value = "0,0,0")]
    pub translate: [f64; 3],
    /// Clip plane in volume space as nx,ny,nz,offset; keeps n.p >= offset.
    #[arg(long, value_parser = parse_vec::<4>, allow_hyphen_values = true)]
    pub clip: Option<[f64; 4]>,
    #[command(flatten)]
    pub settings: SettingsArgs,
    /// Render threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub volume: VolumeArgs,
    /// Initial transfer function [default: material preset for the phantom, else empty].
    #[arg(long)]
    pub tf: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    /// Controller datagram port; 0 picks a free port.
    #[arg(long, default_value_t = peakvol_core::net::DEFAULT_PORT)]
    pub udp_port: u16,
    /// HTTP and WebSocket port; 0 picks a free port.
    #[arg(long, default_value_t = DEFAULT_HTTP_PORT)]
    pub http_port: u16,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    /// Maximum published frames per second, in [1, 120].
    #[arg(long, default_value_t = 30.0)]
    pub frame_cap: f64,
    #[command(flatten)]
    pub settings: SettingsArgs,
    /// Gains as a JSON object, e.g. '{"rotation": 1.5}'; unset keys keep defaults.
    #[arg(long)]
    pub gains: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Keyframe script (JSON array).
    #[arg(long, conflicts_with = "trace", required_unless_present = "trace")]
    pub script: Option<PathBuf>,
    /// Previously recorded datagram trace to replay verbatim.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Datagrams per second per device, in [1, 1000].
    #[arg(long, default_value_t = 60.0)]
    pub rate: f64,
    /// Emission window in seconds [default: last keyframe time].
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub start_seq: u16,
    /// Destination address.
    #[arg(long, default_value = "127.0.0.1:7741")]
    pub sink: SocketAddr,
    /// Send as fast as possible instead of in real time.
    #[arg(long)]
    pub fast: bool,
    /// Also write the emitted datagrams to this trace file.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Do not send anything (useful with --record).
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PhantomArgs {
    /// Edge length in voxels (at least 16).
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Output header path; the raw data goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `a,b,c` into a fixed-size array.
pub fn parse_vec<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated numbers, got `{s}`"));
    }
    let mut out = [0.0f64; N];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| format!("`{p}` is not a number"))?;
        if !slot.is_finite() {
            return Err(format!("`{p}` is not finite"));
        }
    }
    Ok(out)
}

pub fn read_tf(path: &Path) -> Result<TransferFunction, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new(exit::INPUT_MISSING, format!("cannot read {}: {e}", path.display())))?;
    TransferFunction::from_json(&text)
        .map_err(|e| CliError::new(exit::INPUT_INVALID, format!("{}: {e}", path.display())))
}

/// Offline render. Output is bit-identical for identical arguments.
pub fn render_once(args: &RenderArgs) -> Result<(), CliError> {
    let volume = crate::service::load_source(&args.volume.source()).map_err(volume_error)?;
    let tf = read_tf(&args.tf)?;
    let meta = volume.meta();
    let camera = match args.eye {
        None => Camera {
            vertical_fov: args.fov.to_radians(),
            ..Camera::framing(meta.extent(), args.width, args.height)
        },
        Some(eye) => Camera {
            eye: eye.into(),
            look_at: args.look_at.into(),
            up: args.up.into(),
            vertical_fov: args.fov.to_radians(),
            width: args.width,
            height: args.height,
        },
    };
    let [roll, pitch, yaw] = args.rotate.map(f64::to_radians);
    let transform = VolumeTransform {
        rotation: *Rotation3::from_euler_angles(roll, pitch, yaw).matrix(),
        translation: Vector3::from(args.translate),
    };
    let plane = match args.clip {
        None => ClipPlane::disabled(),
        Some([x, y, z, d]) => ClipPlane::new(Vector3::new(x, y, z), d)
            .map_err(|e| CliError::new(exit::USAGE, format!("--clip: {e}")))?,
    };
    let settings = args.settings.overrides().resolve(meta);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| CliError::new(exit::STARTUP, e.to_string()))?;
    let frame = render_frame_in(&pool, &volume, &tf, &camera, &transform, &plane, &settings)
        .map_err(|e| CliError::new(exit::USAGE, e.to_string()))?;
    frame
        .write_to(&args.out)
        .map_err(|e| CliError::new(exit::OUTPUT, format!("cannot write {}: {e}", args.out.display())))
}

pub fn write_phantom(args: &PhantomArgs) -> Result<PathBuf, CliError> {
    let v = generate_phantom([args.size; 3]).map_err(|e| CliError::new(exit::USAGE, e.to_string()))?;
    save_volume(&v, &args.out).map_err(|e| CliError::new(exit::OUTPUT, e.to_string()))
}

pub fn run_simulate(args: &SimulateArgs) -> Result<serde_json::Value, CliError> {
    let packets = match (&args.script, &args.trace) {
        (Some(script), _) => {
            let traj = ScriptedTrajectory::load(script).map_err(sim_error)?;
            let cfg = SimConfig {
                rate_hz: args.rate,
                duration: args.duration.map(Duration::from_secs_f64),
                start_seq: args.start_seq,
                start_timestamp_us: 0,
            };
            if let (Some(path), false) = (&args.record, args.dry_run) {
                // Record exactly what will be sent.
                let emissions = simulate(&traj, &cfg).map_err(sim_error)?;
                trace::write_trace(path, emissions.iter().map(|e| (e.t_us, e.bytes)))
                    .map_err(|e| CliError::new(exit::OUTPUT, e.to_string()))?;
                let report = simulator_run(&traj, &cfg, args.sink, !args.fast).map_err(sim_error)?;
                return Ok(serde_json::json!({
                    "packets_sent": report.packets_sent,
                    "send_errors": report.send_errors,
                    "first_seq": report.first_seq,
                    "last_seq": report.last_seq,
                    "last_error": report.last_error,
                    "recorded": emissions.len(),
                }));
            }
            if !args.dry_run {
                let report = simulator_run(&traj, &cfg, args.sink, !args.fast).map_err(sim_error)?;
                return Ok(serde_json::json!({
                    "packets_sent": report.packets_sent,
                    "send_errors": report.send_errors,
                    "first_seq": report.first_seq,
                    "last_seq": report.last_seq,
                    "last_error": report.last_error,
                }));
            }
            let emissions = simulate(&traj, &cfg).map_err(sim_error)?;
            emissions.iter().map(|e| (e.t_us, e.bytes)).collect::<Vec<_>>()
        }
        (None, Some(path)) => trace::read_trace(path).map_err(|e| match e {
            trace::TraceError::Io(_) => CliError::new(exit::INPUT_MISSING, e.to_string()),
            _ => CliError::new(exit::INPUT_INVALID, e.to_string()),
        })?,
        (None, None) => unreachable!("clap requires --script or --trace"),
    };
    if let Some(path) = &args.record {
        trace::write_trace(path, packets.iter().copied()).map_err(|e| CliError::new(exit::OUTPUT, e.to_string()))?;
    }
    if args.dry_run {
        return Ok(serde_json::json!({ "packets_sent": 0, "recorded": packets.len() }));
    }
    let report = trace::replay(&packets, args.sink, !args.fast).map_err(|e| CliError::new(exit::OUTPUT, e.to_string()))?;
    Ok(serde_json::json!({
        "packets_sent": report.sent,
        "send_errors": report.errors,
        "last_error": report.last_error,
    }))
}

pub fn serve_config(args: &ServeArgs) -> Result<ServiceConfig, CliError> {
    let gains = match &args.gains {
        None => Gains::default(),
        Some(text) => serde_json::from_str(text).map_err(|e| CliError::new(exit::USAGE, format!("--gains: {e}")))?,
    };
    let config = ServiceConfig {
        volume: args.volume.source(),
        tf_path: args.tf.clone(),
        bind: args.bind,
        udp_port: args.udp_port,
        http_port: args.http_port,
        width: args.width,
        height: args.height,
        render: args.settings.overrides(),
        gains,
        frame_cap: args.frame_cap,
        render_threads: args.threads,
        ..ServiceConfig::default()
    };
    config.validate().map_err(|e| CliError::new(exit::USAGE, e))?;
    Ok(config)
}
