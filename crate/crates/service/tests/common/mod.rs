#![allow(dead_code)]

use std::time::Duration;

use nalgebra::Vector3;
use peakvol_core::raycast::{Camera, FrameBuffer};
use peakvol_core::volume::PhantomShells;
use peakvol_service::{start, ServiceConfig, ServiceHandle, VolumeSource};

pub fn phantom_service(n: usize, size: usize) -> ServiceHandle {
    let config = ServiceConfig {
        width: size,
        height: size,
        frame_cap: 120.0,
        ..ServiceConfig::ephemeral(VolumeSource::Phantom([n; 3]))
    };
    let handle = start(config).expect("service starts");
    assert!(handle.wait_idle(Duration::from_secs(20)), "first frame");
    handle
}

pub fn url(h: &ServiceHandle, path: &str) -> String {
    format!("http://{}{}", h.http_addr(), path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Core,
    Middle,
    Outer,
}

/// Mean RGB over the interior of each phantom material as seen on the z = 0
/// cut face, for a cube phantom of edge `n` framed by the default camera.
/// Pixels within a margin of any shell boundary are skipped.
pub fn region_means(frame: &FrameBuffer, n: usize) -> Vec<(Region, [f64; 3], usize)> {
    let half = n as f64 / 2.0;
    let cam = Camera::framing(Vector3::from_element(n as f64), frame.width(), frame.height());
    let basis = cam.basis();
    let margin = 0.06;
    let bands = [
        (Region::Core, 0.0, PhantomShells::CORE_LIMIT),
        (Region::Middle, PhantomShells::CORE_LIMIT, PhantomShells::MIDDLE_LIMIT),
        (Region::Outer, PhantomShells::MIDDLE_LIMIT, PhantomShells::OUTER_LIMIT),
    ];
    let mut sums = [([0.0; 3], 0usize); 3];
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            let ray = basis.ray(x, y);
            if ray.direction.z.abs() < 1e-12 {
                continue;
            }
            let t = -ray.origin.z / ray.direction.z;
            let p = ray.at(t);
            let d = p.x.abs().max(p.y.abs()) / half;
            for (i, &(_, lo, hi)) in bands.iter().enumerate() {
                let lo = if lo == 0.0 { 0.0 } else { lo + margin };
                if d >= lo && d < hi - margin {
                    let px = frame.pixel(x, y);
                    for (sum, &v) in sums[i].0.iter_mut().zip(&px) {
                        *sum += v as f64;
                    }
                    sums[i].1 += 1;
                }
            }
        }
    }
    bands
        .iter()
        .zip(sums)
        .map(|(&(r, _, _), (s, count))| (r, s.map(|v| v / count.max(1) as f64), count))
        .collect()
}

/// Channel expected to dominate each region under the material preset.
pub fn expected_channel(r: Region) -> usize {
    match r {
        Region::Core => 0,
        Region::Middle => 1,
        Region::Outer => 2,
    }
}

pub fn dominant(mean: [f64; 3], channel: usize) -> bool {
    (0..3).filter(|&c| c != channel).all(|c| mean[channel] > 2.0 * mean[c])
}
