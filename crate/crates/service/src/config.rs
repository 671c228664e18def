use std::net::IpAddr;
use std::path::PathBuf;

use peakvol_core::interaction::Gains;
use peakvol_core::raycast::RenderSettings;
use peakvol_core::transfer::Rgba;
use peakvol_core::volume::VolumeMeta;

pub const DEFAULT_HTTP_PORT: u16 = 8741;
pub const MIN_FRAME_CAP: f64 = 1.0;
pub const MAX_FRAME_CAP: f64 = 120.0;

#[derive(Debug, Clone, PartialEq)]
pub enum VolumeSource {
    /// Path to a `.meta` header.
    File(PathBuf),
    /// Synthetic phantom with the given dimensions.
    Phantom([usize; 3]),
}

/// Render settings left unset fall back to volume-scaled defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RenderOverrides {
    pub step_size: Option<f64>,
    pub reference_step: Option<f64>,
    pub early_termination_alpha: Option<f64>,
    pub background: Option<Rgba>,
}

impl RenderOverrides {
    pub fn resolve(&self, meta: &VolumeMeta) -> RenderSettings {
        let base = RenderSettings::for_volume(meta);
        RenderSettings {
            step_size: self.step_size.unwrap_or(base.step_size),
            reference_step: self.reference_step.unwrap_or(base.reference_step),
            early_termination_alpha: self.early_termination_alpha.unwrap_or(base.early_termination_alpha),
            background: self.background.unwrap_or(base.background),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub volume: VolumeSource,
    pub tf_path: Option<PathBuf>,
    pub bind: IpAddr,
    /// 0 picks an ephemeral port.
    pub udp_port: u16,
    /// 0 picks an ephemeral port.
    pub http_port: u16,
    pub width: usize,
    pub height: usize,
    pub render: RenderOverrides,
    pub gains: Gains,
    /// Upper bound on published frames per second.
    pub frame_cap: f64,
    /// Render worker threads; 0 uses every available core.
    pub render_threads: usize,
    pub queue_capacity: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            volume: VolumeSource::Phantom([64; 3]),
            tf_path: None,
            bind: IpAddr::from([127, 0, 0, 1]),
            udp_port: peakvol_core::net::DEFAULT_PORT,
            http_port: DEFAULT_HTTP_PORT,
            width: 256,
            height: 256,
            render: RenderOverrides::default(),
            gains: Gains::default(),
            frame_cap: 30.0,
            render_threads: 0,
            queue_capacity: peakvol_core::net::DEFAULT_QUEUE_CAPACITY,
        }
    }
}

impl ServiceConfig {
    /// Same defaults, ephemeral ports on loopback.
    pub fn ephemeral(volume: VolumeSource) -> Self {
        Self {
            volume,
            udp_port: 0,
            http_port: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.udp_port != 0 && self.udp_port == self.http_port {
            return Err(format!("UDP and HTTP ports must differ (both {})", self.udp_port));
        }
        if !(MIN_FRAME_CAP..=MAX_FRAME_CAP).contains(&self.frame_cap) {
            return Err(format!("frame cap {} outside [1, 120]", self.frame_cap));
        }
        if self.width == 0 || self.height == 0 {
            return Err("frame size must be at least 1x1".into());
        }
        if self.queue_capacity == 0 {
            return Err("queue capacity must be positive".into());
        }
        // Any positive spacing exercises every range check.
        let probe = VolumeMeta::new([1, 1, 1], [1.0; 3], peakvol_core::volume::ValueType::U8).expect("valid meta");
        self.render.resolve(&probe).validate().map_err(|e| e.to_string())?;
        Ok(())
    }
}
