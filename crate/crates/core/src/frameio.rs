//! Frames on disk: 16-bit PGM rasters with a JSON sidecar carrying timing
//! and ground truth.

use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CameraIntrinsics, LocationId, RobotPose};
use crate::shutter::{native_to_display, EllipseProjection, FrameScan};

/// Ground-truth image of one LED.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEllipse {
    pub id: LocationId,
    /// Native read-out `[u, v]` (px).
    pub center_native: [f64; 2],
    /// Displayed `[x, y]` (px).
    pub center_display: [f64; 2],
    pub major_r: f64,
    pub minor_r: f64,
    /// Major-axis direction in native coordinates (rad).
    pub angle: f64,
    pub area_px: f64,
}

impl TruthEllipse {
    pub fn new(id: LocationId, p: &EllipseProjection, cam: &CameraIntrinsics) -> Self {
        Self {
            id,
            center_native: p.center_px,
            center_display: native_to_display(cam, p.center_px),
            major_r: p.major_r,
            minor_r: p.minor_r,
            angle: p.angle,
            area_px: p.area_px,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSidecar {
    pub width: usize,
    pub height: usize,
    /// Clockwise rotation of the stored raster from the read-out order.
    pub rotation: u16,
    /// Exposure start of read-out row 0 (s).
    pub capture_t0: f64,
    pub row_time: f64,
    pub exposure: f64,
    #[serde(default)]
    pub pose: Option<RobotPose>,
    #[serde(default)]
    pub ellipses: Vec<TruthEllipse>,
}

impl FrameSidecar {
    pub fn of(frame: &FrameScan) -> Self {
        Self {
            width: frame.width,
            height: frame.height,
            rotation: frame.rotation,
            capture_t0: frame.capture_t0,
            row_time: frame.row_time,
            exposure: frame.exposure,
            pose: None,
            ellipses: vec![],
        }
    }
}

pub fn sidecar_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("json")
}

/// Write `frame` as `<stem>.pgm` and its sidecar as `<stem>.json`.
pub fn write_frame(dir: &Path, stem: &str, frame: &FrameScan, sidecar: &FrameSidecar) -> Result<PathBuf> {
    let pgm = dir.join(format!("{stem}.pgm"));
    let data: Vec<u16> = frame
        .pixels
        .iter()
        .map(|&p| (p.clamp(0.0, 1.0) * u16::MAX as f32).round() as u16)
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(frame.width as u32, frame.height as u32, data)
        .ok_or_else(|| Error::domain("pixel buffer does not match frame size"))?;
    img.save_with_format(&pgm, image::ImageFormat::Pnm)?;
    let json = serde_json::to_string_pretty(sidecar)?;
    let side = sidecar_path(&pgm);
    std::fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))?;
    Ok(pgm)
}

/// Read a PGM frame. Timing comes from the sidecar when present, otherwise
/// from `cam` with the raster assumed to be in display orientation.
pub fn read_frame(pgm: &Path, cam: &CameraIntrinsics) -> Result<FrameScan> {
    let img = image::open(pgm)?.to_luma32f();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let side = sidecar_path(pgm);
    let meta = if side.exists() {
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        serde_json::from_str::<FrameSidecar>(&text)?
    } else {
        FrameSidecar {
            width: w,
            height: h,
            rotation: cam.rotation,
            capture_t0: 0.0,
            row_time: cam.row_time(),
            exposure: cam.exposure,
            pose: None,
            ellipses: vec![],
        }
    };
    if (meta.width, meta.height) != (w, h) {
        return Err(Error::domain(format!(
            "{}: raster is {w}x{h} but the sidecar says {}x{}",
            pgm.display(),
            meta.width,
            meta.height
        )));
    }
    Ok(FrameScan {
        width: w,
        height: h,
        pixels: img.into_raw(),
        capture_t0: meta.capture_t0,
        row_time: meta.row_time,
        exposure: meta.exposure,
        rotation: meta.rotation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shutter::apply_rotation;

    #[test]
    fn pgm_round_trip() {
        let mut f = FrameScan::blank(6, 4, 0.25, 62.5e-6, 125e-6);
        for (k, p) in f.pixels.iter_mut().enumerate() {
            *p = k as f32 / 23.0;
        }
        let f = apply_rotation(&f, 270).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write_frame(dir.path(), "f", &f, &FrameSidecar::of(&f)).unwrap();
        let g = read_frame(&path, &CameraIntrinsics::default()).unwrap();
        assert_eq!((g.width, g.height, g.rotation), (4, 6, 270));
        assert_eq!(g.capture_t0, 0.25);
        for (a, b) in f.pixels.iter().zip(&g.pixels) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
