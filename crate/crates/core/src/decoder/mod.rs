//! Receiver: blob detection, geometry, and ID demodulation.
//!
//! An acquisition is a burst of frames of a static scene. Blobs are found
//! once on the per-pixel maximum of the burst, then each blob's rows are
//! normalized by their exposure level so that the same rows yield both the
//! ellipse geometry (chord lengths) and the chip stream (levels over time).

pub mod demod;
pub mod fit;
pub mod roi;
pub mod stripes;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LocationId;
use crate::shutter::FrameScan;
use crate::txcodec::Chips;

pub use demod::{Clock, Demodulated, RowSample};
pub use fit::{fit_ellipse, EllipseFit, RowChord};
pub use roi::{detect_rois, BBox, Roi};
pub use stripes::{measure_stripes, widths_to_chips};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    /// Luminance above which a pixel belongs to a blob.
    pub lum_threshold: f64,
    /// Stripe widths above this many rows read as ON.
    pub pivot: usize,
    /// Candidate LED chip rates (Hz).
    pub chip_rates: Vec<f64>,
    pub min_blob_pixels: usize,
    /// Longest dark gap (rows) bridged inside one blob.
    pub max_gap_rows: usize,
    /// Shortest row chord used for geometry (px).
    pub min_chord_px: f64,
    /// Minimum per-slot vote agreement for a valid codeword.
    pub min_agreement: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            lum_threshold: 0.05,
            pivot: 4,
            chip_rates: vec![2000.0, 4000.0],
            min_blob_pixels: 12,
            max_gap_rows: 12,
            min_chord_px: 3.0,
            min_agreement: 0.9,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lum_threshold > 0.0 && self.lum_threshold < 1.0) {
            return Err(Error::domain("lum_threshold must lie in (0, 1)"));
        }
        if self.chip_rates.is_empty() || self.chip_rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::domain("chip_rates must be positive and non-empty"));
        }
        if !(0.5..=1.0).contains(&self.min_agreement) {
            return Err(Error::domain("min_agreement must lie in [0.5, 1]"));
        }
        Ok(())
    }
}

/// Image quadrant in the displayed (rotated) image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "LFR")]
    LeftFront,
    #[serde(rename = "FRR")]
    FrontRight,
    #[serde(rename = "RBR")]
    RightBack,
    #[serde(rename = "BLR")]
    BackLeft,
}

impl Region {
    /// Quadrant of a displayed point; the image top is the robot's front.
    pub fn of(display: [f64; 2], width: usize, height: usize) -> Region {
        let left = display[0] < width as f64 / 2.0;
        let front = display[1] < height as f64 / 2.0;
        match (left, front) {
            (true, true) => Region::LeftFront,
            (false, true) => Region::FrontRight,
            (false, false) => Region::RightBack,
            (true, false) => Region::BackLeft,
        }
    }

    pub fn diagonal(self) -> Region {
        match self {
            Region::LeftFront => Region::RightBack,
            Region::FrontRight => Region::BackLeft,
            Region::RightBack => Region::LeftFront,
            Region::BackLeft => Region::FrontRight,
        }
    }
}

/// Native read-out raster point to the displayed image (270° clockwise).
pub fn display_point(native_width: usize, uv: [f64; 2]) -> [f64; 2] {
    [uv[1], native_width as f64 - uv[0]]
}

/// Geometry and stripe data of one LED image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobDetection {
    pub bbox: BBox,
    /// Native `[u, v]` (px).
    pub center_px: [f64; 2],
    /// Displayed `[x, y]` (px).
    pub center_display: [f64; 2],
    /// Fitted `π r r'` (px²).
    pub area_px: f64,
    /// Thresholded pixel count of the accumulated image.
    pub lit_pixels: usize,
    pub major_r: f64,
    pub minor_r: f64,
    pub angle: f64,
    /// Binarized row levels of every frame, top to bottom.
    pub row_profiles: Vec<Vec<bool>>,
    /// Interior stripe widths of the first frame (rows).
    pub stripe_widths: Vec<usize>,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedLed {
    pub id: LocationId,
    pub blob: BlobDetection,
    pub region: Region,
    pub chip_rate: f64,
    pub chips: Chips,
}

/// A blob that was found but not decoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobFailure {
    pub bbox: BBox,
    pub blob: Option<BlobDetection>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameDecode {
    pub leds: Vec<DecodedLed>,
    pub failures: Vec<BlobFailure>,
}

/// Per-pixel maximum of a burst.
pub fn accumulate_max(frames: &[FrameScan]) -> Result<FrameScan> {
    let first = frames.first().ok_or(Error::EmptyScan)?;
    let mut acc = first.clone();
    for f in &frames[1..] {
        if (f.width, f.height) != (acc.width, acc.height) {
            return Err(Error::domain("frames in a burst differ in size"));
        }
        for (a, &p) in acc.pixels.iter_mut().zip(&f.pixels) {
            *a = a.max(p);
        }
    }
    Ok(acc)
}

/// Blob analysis shared by decoding and ranging.
struct BlobRows {
    blob: BlobDetection,
    samples: Vec<RowSample>,
}

/// Pixels of row `v` fully inside the fitted chord.
fn full_pixels(fit: &EllipseFit, v: usize, width: usize) -> Option<(usize, usize)> {
    let e = crate::shutter::EllipseProjection::new(fit.center, fit.major_r, fit.minor_r, fit.angle);
    let (a0, b0) = e.span_at(v as f64 + 0.02)?;
    let (a1, b1) = e.span_at(v as f64 + 0.98)?;
    let lo = (a0.max(a1) + 0.25).ceil().max(0.0) as usize;
    let hi = ((b0.min(b1) - 0.25).floor().max(0.0) as usize).min(width);
    (hi > lo).then_some((lo, hi))
}

fn analyze_blob(frames: &[FrameScan], roi: &Roi, cfg: &DecoderConfig) -> Result<BlobRows> {
    let (w, h) = (frames[0].width, frames[0].height);
    let bb = roi.bbox.expand(2, w, h);
    let nb = bb.width();
    let in_blob = |u: usize, v: usize| {
        roi.member(u, v) || (u > 0 && roi.member(u - 1, v)) || roi.member(u + 1, v)
    };
    let cols: Vec<Vec<usize>> = (bb.v0..bb.v1)
        .map(|v| (bb.u0..bb.u1).filter(|&u| in_blob(u, v)).collect())
        .collect();

    // Row levels: first the brightest member pixel, later the mean over
    // pixels the fitted ellipse covers completely.
    let mut level: Vec<Vec<Option<f64>>> = frames
        .iter()
        .map(|f| {
            cols.iter()
                .enumerate()
                .map(|(r, cs)| {
                    let v = bb.v0 + r;
                    cs.iter().map(|&u| f.get(u, v) as f64).reduce(f64::max)
                })
                .collect()
        })
        .collect();

    let mut fit = None;
    for _pass in 0..2 {
        let mut chords = Vec::new();
        for (r, cs) in cols.iter().enumerate() {
            let v = bb.v0 + r;
            let mut cov = vec![0.0; nb];
            let mut n = 0usize;
            for (k, f) in frames.iter().enumerate() {
                let Some(l) = level[k][r] else { continue };
                if l < 0.5 {
                    continue;
                }
                n += 1;
                for &u in cs {
                    cov[u - bb.u0] += f.get(u, v) as f64 / l;
                }
            }
            if n == 0 {
                continue;
            }
            let (mut s, mut m) = (0.0, 0.0);
            for (i, c) in cov.iter().enumerate() {
                let c = c / n as f64;
                s += c;
                m += c * (bb.u0 + i) as f64 + 0.5 * c;
            }
            if s >= cfg.min_chord_px {
                chords.push(RowChord { y: v as f64 + 0.5, length: s, mid: m / s });
            }
        }
        let f = fit_ellipse(&chords)?;
        for (r, _) in cols.iter().enumerate() {
            let v = bb.v0 + r;
            let span = full_pixels(&f, v, w);
            for (k, fr) in frames.iter().enumerate() {
                level[k][r] = span.map(|(lo, hi)| {
                    (lo..hi).map(|u| fr.get(u, v) as f64).sum::<f64>() / (hi - lo) as f64
                });
            }
        }
        fit = Some(f);
    }
    let fit = fit.expect("two passes ran");

    let mut samples = Vec::new();
    for (k, fr) in frames.iter().enumerate() {
        for (r, l) in level[k].iter().enumerate() {
            if let Some(l) = *l {
                let v = bb.v0 + r;
                samples.push(RowSample { frame: k, row: v, t: fr.row_start(v), level: l });
            }
        }
    }
    let row_profiles: Vec<Vec<bool>> = level
        .iter()
        .map(|rows| rows.iter().flatten().map(|&l| l > cfg.lum_threshold).collect())
        .collect();
    let stripe_widths = measure_stripes(&row_profiles[0]).unwrap_or_default();
    Ok(BlobRows {
        blob: BlobDetection {
            bbox: roi.bbox,
            center_px: fit.center,
            center_display: display_point(w, fit.center),
            area_px: fit.area(),
            lit_pixels: roi.lit_pixels,
            major_r: fit.major_r,
            minor_r: fit.minor_r,
            angle: fit.angle,
            row_profiles,
            stripe_widths,
            frames: frames.len(),
        },
        samples,
    })
}

fn to_native(frames: &[FrameScan]) -> Vec<FrameScan> {
    frames.iter().map(FrameScan::to_native).collect()
}

/// Geometry of every blob in a burst, without decoding.
pub fn detect_blobs(frames: &[FrameScan], cfg: &DecoderConfig) -> Result<Vec<Result<BlobDetection>>> {
    let native = to_native(frames);
    let acc = accumulate_max(&native)?;
    let rois = detect_rois(&acc, cfg.lum_threshold, cfg.max_gap_rows, cfg.min_blob_pixels);
    Ok(rois
        .iter()
        .map(|roi| analyze_blob(&native, roi, cfg).map(|b| b.blob))
        .collect())
}

/// Decode every LED visible in a burst of frames of a static scene.
///
/// Results are ordered by region, then by ID.
pub fn decode_frames(frames: &[FrameScan], cfg: &DecoderConfig) -> Result<FrameDecode> {
    let native = to_native(frames);
    let acc = accumulate_max(&native)?;
    let (w, h) = (acc.width, acc.height);
    let (exposure, row_time) = (acc.exposure, acc.row_time);
    let mut out = FrameDecode::default();
    for roi in detect_rois(&acc, cfg.lum_threshold, cfg.max_gap_rows, cfg.min_blob_pixels) {
        let rows = match analyze_blob(&native, &roi, cfg) {
            Ok(r) => r,
            Err(e) => {
                out.failures.push(BlobFailure { bbox: roi.bbox, blob: None, reason: e.to_string() });
                continue;
            }
        };
        match demod::demodulate(
            &rows.samples,
            &cfg.chip_rates,
            exposure,
            row_time,
            cfg.lum_threshold,
            cfg.min_agreement,
        ) {
            Ok(d) => out.leds.push(DecodedLed {
                id: d.id,
                region: Region::of(rows.blob.center_display, h, w),
                blob: rows.blob,
                chip_rate: d.clock.rate,
                chips: d.chips,
            }),
            Err(e) => out.failures.push(BlobFailure {
                bbox: roi.bbox,
                blob: Some(rows.blob),
                reason: e.to_string(),
            }),
        }
    }
    out.leds.sort_by(|a, b| (a.region, a.id).cmp(&(b.region, b.id)));
    Ok(out)
}

/// Single-frame decode. Blobs shorter than a codeword period fail and are
/// reported in `failures`.
pub fn decode_frame(frame: &FrameScan, cfg: &DecoderConfig) -> FrameDecode {
    decode_frames(std::slice::from_ref(frame), cfg).expect("one frame is never empty")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions_partition_equally() {
        let (w, h) = (800, 600);
        let mut counts = std::collections::HashMap::new();
        for y in 0..h {
            for x in 0..w {
                *counts.entry(Region::of([x as f64 + 0.5, y as f64 + 0.5], w, h)).or_insert(0) += 1;
            }
        }
        assert_eq!(counts.len(), 4);
        assert!(counts.values().all(|&c| c == 120_000));
        assert_eq!(Region::of([10.0, 10.0], w, h), Region::LeftFront);
        assert_eq!(Region::LeftFront.diagonal(), Region::RightBack);
    }

    #[test]
    fn empty_frame_decodes_to_nothing() {
        let f = FrameScan::blank(600, 800, 0.0, 62.5e-6, 125e-6);
        let d = decode_frame(&f, &DecoderConfig::default());
        assert!(d.leds.is_empty() && d.failures.is_empty());
        assert!(decode_frames(&[], &DecoderConfig::default()).is_err());
    }
}
