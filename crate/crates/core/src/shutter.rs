//! Rolling-shutter camera model.
//!
//! LEDs are projected onto the sensor as ellipses and every read-out row
//! integrates the LED waveform over its own exposure window, which turns
//! the flicker into stripes across the blob.
//!
//! Raster coordinates are native read-out coordinates: column `u` runs along
//! a row, row `v` is the read-out index. The displayed image is the native
//! raster rotated by the camera's `rotation` (270° clockwise by default),
//! so stripes show up vertically on screen.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CameraIntrinsics, Point3, RobotPose};
use crate::txcodec::Waveform;

/// Sub-rows per pixel row used to integrate ellipse coverage.
const COVERAGE_SUBROWS: usize = 16;

/// Elliptical image of a circular LED, in native raster coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseProjection {
    /// `[u, v]` (px).
    pub center_px: [f64; 2],
    pub major_r: f64,
    pub minor_r: f64,
    /// Direction of the major axis in the `(u, v)` plane (radians).
    pub angle: f64,
    pub area_px: f64,
}

impl EllipseProjection {
    pub fn new(center_px: [f64; 2], major_r: f64, minor_r: f64, angle: f64) -> Self {
        Self {
            center_px,
            major_r,
            minor_r,
            angle,
            area_px: std::f64::consts::PI * major_r * minor_r,
        }
    }

    /// Coefficients of `A du² + B du dv + C dv² = 1`.
    fn quadratic(&self) -> (f64, f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let ia = 1.0 / (self.major_r * self.major_r);
        let ib = 1.0 / (self.minor_r * self.minor_r);
        (c * c * ia + s * s * ib, 2.0 * c * s * (ia - ib), s * s * ia + c * c * ib)
    }

    /// Column interval covered at row coordinate `v`.
    pub fn span_at(&self, v: f64) -> Option<(f64, f64)> {
        let (a, b, c) = self.quadratic();
        let dv = v - self.center_px[1];
        let disc = (b * dv).powi(2) - 4.0 * a * (c * dv * dv - 1.0);
        if disc <= 0.0 {
            return None;
        }
        let root = disc.sqrt();
        let u0 = (-b * dv - root) / (2.0 * a);
        let u1 = (-b * dv + root) / (2.0 * a);
        Some((self.center_px[0] + u0, self.center_px[0] + u1))
    }

    /// Half extents of the bounding box along `u` and `v`.
    pub fn half_extents(&self) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        let (a, b) = (self.major_r, self.minor_r);
        [
            ((a * c).powi(2) + (b * s).powi(2)).sqrt(),
            ((a * s).powi(2) + (b * c).powi(2)).sqrt(),
        ]
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        let (a, b, c) = self.quadratic();
        let (du, dv) = (u - self.center_px[0], v - self.center_px[1]);
        a * du * du + b * du * dv + c * dv * dv <= 1.0
    }
}

/// Native raster coordinates `[u, v]` to displayed `[x, y]` for the default
/// 270° rotation.
pub fn native_to_display(cam: &CameraIntrinsics, uv: [f64; 2]) -> [f64; 2] {
    [uv[1], cam.img_h as f64 - uv[0]]
}

pub fn display_to_native(cam: &CameraIntrinsics, xy: [f64; 2]) -> [f64; 2] {
    [cam.img_h as f64 - xy[1], xy[0]]
}

/// Body-frame offset `(right, front)` of a ceiling point at height `h`
/// seen at native raster position `uv`.
pub fn native_to_body(cam: &CameraIntrinsics, uv: [f64; 2], h: f64) -> [f64; 2] {
    let f = cam.focal_px();
    let [x, y] = native_to_display(cam, uv);
    [
        (x - cam.img_w as f64 / 2.0) * h / f,
        (cam.img_h as f64 / 2.0 - y) * h / f,
    ]
}

/// Pinhole projection of a ceiling LED for an upward-looking camera.
///
/// The major radius follows the pinhole scale `f / D`; the radius along the
/// radial image direction is foreshortened by `cos θ = h / D`. Returns
/// `None` when the LED center falls outside the image.
pub fn project_led(
    pose: &RobotPose,
    cam: &CameraIntrinsics,
    led_pos: Point3,
    led_diameter: f64,
) -> Option<EllipseProjection> {
    let h = led_pos.z;
    if h <= 0.0 {
        return None;
    }
    let f = cam.focal_px();
    let [right, front] = pose.to_body(led_pos.x - pose.x, led_pos.y - pose.y);
    let x = cam.img_w as f64 / 2.0 + f * right / h;
    let y = cam.img_h as f64 / 2.0 - f * front / h;
    if !(0.0..cam.img_w as f64).contains(&x) || !(0.0..cam.img_h as f64).contains(&y) {
        return None;
    }
    let uv = display_to_native(cam, [x, y]);
    let d = (h * h + right * right + front * front).sqrt();
    let major = f * led_diameter / 2.0 / d;
    let minor = major * h / d;
    // Radial direction in native coordinates is (front, right) scaled by f/h.
    let radial = right.atan2(front);
    let angle = if right == 0.0 && front == 0.0 {
        0.0
    } else {
        radial + std::f64::consts::FRAC_PI_2
    };
    Some(EllipseProjection::new(uv, major, minor, angle))
}

/// One luminous source in a rendered scene.
#[derive(Debug, Clone)]
pub struct Emitter {
    pub projection: EllipseProjection,
    pub waveform: Waveform,
}

/// A captured frame: row-major luminance in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScan {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
    /// Start of the exposure of read-out row 0 (s).
    pub capture_t0: f64,
    pub row_time: f64,
    pub exposure: f64,
    /// Clockwise rotation of this raster relative to the native read-out
    /// orientation, degrees.
    pub rotation: u16,
}

impl FrameScan {
    pub fn blank(width: usize, height: usize, capture_t0: f64, row_time: f64, exposure: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
            capture_t0,
            row_time,
            exposure,
            rotation: 0,
        }
    }

    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.pixels[v * self.width + u]
    }

    pub fn row(&self, v: usize) -> &[f32] {
        &self.pixels[v * self.width..(v + 1) * self.width]
    }

    /// Start time of the exposure of native row `v`.
    pub fn row_start(&self, v: usize) -> f64 {
        self.capture_t0 + v as f64 * self.row_time
    }

    /// Rotate back to the native read-out orientation.
    pub fn to_native(&self) -> FrameScan {
        if self.rotation == 0 {
            return self.clone();
        }
        apply_rotation(self, 360 - self.rotation).expect("stored rotation is valid")
    }
}

/// Integrate `scene` over every row's exposure window.
///
/// `noise_sigma` adds zero-mean Gaussian noise per pixel, drawn from a
/// generator seeded with `seed`, before clamping to `[0, 1]`.
pub fn render_frame(
    scene: &[Emitter],
    cam: &CameraIntrinsics,
    t0: f64,
    noise_sigma: f64,
    seed: u64,
) -> FrameScan {
    let (w, h) = (cam.readout_cols(), cam.readout_rows());
    let mut frame = FrameScan::blank(w, h, t0, cam.row_time(), cam.exposure);
    let mut acc = vec![0.0f64; w * h];
    for em in scene {
        let p = &em.projection;
        let [_, ext_v] = p.half_extents();
        let v_lo = (p.center_px[1] - ext_v).floor().max(0.0) as usize;
        let v_hi = ((p.center_px[1] + ext_v).ceil().max(0.0) as usize).min(h);
        for v in v_lo..v_hi {
            let level = em.waveform.mean_level(frame.row_start(v), cam.exposure);
            if level <= 0.0 {
                continue;
            }
            let row = &mut acc[v * w..(v + 1) * w];
            for s in 0..COVERAGE_SUBROWS {
                let y = v as f64 + (s as f64 + 0.5) / COVERAGE_SUBROWS as f64;
                let Some((x0, x1)) = p.span_at(y) else { continue };
                let (x0, x1) = (x0.max(0.0), x1.min(w as f64));
                if x1 <= x0 {
                    continue;
                }
                let weight = level / COVERAGE_SUBROWS as f64;
                for (u, px) in row.iter_mut().enumerate().take(x1.ceil() as usize).skip(x0.floor() as usize) {
                    let lo = x0.max(u as f64);
                    let hi = x1.min(u as f64 + 1.0);
                    if hi > lo {
                        *px += (hi - lo) * weight;
                    }
                }
            }
        }
    }
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).expect("finite sigma");
        for px in &mut acc {
            *px += normal.sample(&mut rng);
        }
    }
    for (dst, src) in frame.pixels.iter_mut().zip(&acc) {
        *dst = src.clamp(0.0, 1.0) as f32;
    }
    frame
}

/// Rotate a raster clockwise by a multiple of 90°.
///
/// For 270° a pixel `(u, v)` of an `H×W` raster lands at `(v, W−1−u)`.
pub fn apply_rotation(frame: &FrameScan, degrees: u16) -> Result<FrameScan> {
    let (w, h) = (frame.width, frame.height);
    let mut out = frame.clone();
    match degrees % 360 {
        0 => return Ok(out),
        180 => {
            for v in 0..h {
                for u in 0..w {
                    out.pixels[(h - 1 - v) * w + (w - 1 - u)] = frame.get(u, v);
                }
            }
        }
        90 | 270 => {
            out.width = h;
            out.height = w;
            let cw = degrees % 360 == 90;
            for v in 0..h {
                for u in 0..w {
                    let (nu, nv) = if cw { (h - 1 - v, u) } else { (v, w - 1 - u) };
                    out.pixels[nv * h + nu] = frame.get(u, v);
                }
            }
        }
        other => return Err(Error::domain(format!("unsupported rotation {other}°"))),
    }
    out.rotation = (frame.rotation + degrees) % 360;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LocationId;
    use crate::txcodec::{codeword, Chips};

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::default()
    }

    fn overhead(h: f64) -> Point3 {
        Point3::new(0.0, 0.0, h)
    }

    #[test]
    fn circle_when_directly_below() {
        let p = project_led(&RobotPose::new(0.0, 0.0, 0.0), &cam(), overhead(255.5), 9.5).unwrap();
        assert_eq!(p.major_r, p.minor_r);
        assert!((p.center_px[0] - 300.0).abs() < 1e-9 && (p.center_px[1] - 400.0).abs() < 1e-9);
        assert!((p.major_r - 525.0 * 4.75 / 255.5).abs() < 1e-12);
    }

    #[test]
    fn foreshortening_at_table_geometry() {
        let p = project_led(&RobotPose::new(-100.0, 0.0, 0.0), &cam(), overhead(255.5), 9.5).unwrap();
        let ratio = p.minor_r / p.major_r;
        let d = (255.5f64.powi(2) + 100.0f64.powi(2)).sqrt();
        assert!((ratio - 255.5 / d).abs() < 1e-12);
        assert!((ratio - 0.931).abs() < 2e-3);
        // Offset along world x is along the display x axis, which is the
        // read-out axis, so the minor axis is along v.
        assert!((p.half_extents()[1] - p.minor_r).abs() < 1e-9);
    }

    #[test]
    fn pinhole_scale_is_inverse_distance() {
        let near = project_led(&RobotPose::new(0.0, 0.0, 0.0), &cam(), overhead(200.0), 9.5).unwrap();
        let far = project_led(&RobotPose::new(0.0, 0.0, 0.0), &cam(), overhead(400.0), 9.5).unwrap();
        assert!((near.major_r / far.major_r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn outside_fov_is_not_visible() {
        assert!(project_led(&RobotPose::new(0.0, 0.0, 0.0), &cam(), Point3::new(400.0, 0.0, 256.0), 9.5).is_none());
    }

    #[test]
    fn ellipse_span_matches_containment() {
        let e = EllipseProjection::new([50.0, 40.0], 12.0, 7.0, 0.6);
        for k in 0..50 {
            let v = 40.0 - 12.0 + k as f64 * 0.5;
            if let Some((a, b)) = e.span_at(v) {
                assert!(e.contains(a + 1e-6, v) && e.contains(b - 1e-6, v));
                assert!(!e.contains(a - 1e-6, v) && !e.contains(b + 1e-6, v));
            }
        }
        let [eu, ev] = e.half_extents();
        assert!(e.span_at(40.0 + ev + 1e-6).is_none());
        assert!(e.span_at(40.0 + ev - 1e-3).is_some());
        assert!(eu > 7.0 && eu < 12.0);
    }

    fn steady(center: [f64; 2], r: f64) -> Emitter {
        Emitter {
            projection: EllipseProjection::new(center, r, r, 0.0),
            waveform: Waveform::steady_on(),
        }
    }

    #[test]
    fn steady_led_renders_uniform_disc() {
        let f = render_frame(&[steady([300.0, 400.0], 20.0)], &cam(), 0.0, 0.0, 1);
        let total: f64 = f.pixels.iter().map(|&p| p as f64).sum();
        assert!((total - std::f64::consts::PI * 400.0).abs() < 0.5);
        for v in 385..415 {
            assert_eq!(f.get(300, v), 1.0);
        }
        assert_eq!(f.get(10, 10), 0.0);
    }

    #[test]
    fn stripe_period_at_two_kilohertz() {
        // 500 µs chips over 62.5 µs rows: 8 rows per chip. The phase keeps
        // window centres off the chip boundaries.
        let wave = Waveform::new(Chips(vec![true, false]), 2000.0, 15e-6).unwrap();
        let em = Emitter {
            projection: EllipseProjection::new([300.0, 400.0], 150.0, 150.0, 0.0),
            waveform: wave,
        };
        let f = render_frame(&[em], &cam(), 0.0, 0.0, 0);
        let rows: Vec<bool> = (300..500).map(|v| f.get(300, v) > 0.5).collect();
        let mut edges = vec![];
        for k in 1..rows.len() {
            if rows[k] != rows[k - 1] {
                edges.push(k);
            }
        }
        assert!(edges.windows(2).all(|w| w[1] - w[0] == 8), "{edges:?}");
    }

    #[test]
    fn mean_luminance_tracks_duty_cycle() {
        let word = codeword(LocationId::new(0b10110).unwrap());
        let em = Emitter {
            projection: EllipseProjection::new([300.0, 400.0], 200.0, 200.0, 0.0),
            waveform: Waveform::new(word.clone(), 4000.0, 0.0).unwrap(),
        };
        let f = render_frame(&[em], &cam(), 0.0, 0.0, 0);
        let col: Vec<f64> = (220..580).map(|v| f.get(300, v) as f64).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        assert!((mean - word.duty_cycle()).abs() < 0.05 * word.duty_cycle().max(0.1), "{mean}");
    }

    #[test]
    fn noisy_render_is_deterministic() {
        let scene = [steady([200.0, 300.0], 10.0)];
        let a = render_frame(&scene, &cam(), 0.1, 0.05, 42);
        let b = render_frame(&scene, &cam(), 0.1, 0.05, 42);
        let c = render_frame(&scene, &cam(), 0.1, 0.05, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn rotation_group() {
        let mut f = FrameScan::blank(3, 2, 0.0, 1.0, 0.5);
        for (k, p) in f.pixels.iter_mut().enumerate() {
            *p = k as f32;
        }
        let r = apply_rotation(&f, 270).unwrap();
        assert_eq!((r.width, r.height), (2, 3));
        // (u, v) -> (v, W-1-u)
        for v in 0..2 {
            for u in 0..3 {
                assert_eq!(r.get(v, 3 - 1 - u), f.get(u, v));
            }
        }
        let back = apply_rotation(&apply_rotation(&r, 270).unwrap(), 180).unwrap();
        assert_eq!(back.pixels, f.pixels);
        assert_eq!(back.rotation, 0);
        assert_eq!(r.to_native().pixels, f.pixels);
        assert!(apply_rotation(&f, 45).is_err());
    }

    #[test]
    fn stripes_turn_vertical() {
        let mut f = FrameScan::blank(4, 6, 0.0, 1.0, 0.5);
        for v in (0..6).step_by(2) {
            for u in 0..4 {
                f.pixels[v * 4 + u] = 1.0;
            }
        }
        let r = apply_rotation(&f, 270).unwrap();
        for y in 0..r.height {
            for x in 0..r.width {
                assert_eq!(r.get(x, y), r.get(x, 0));
            }
        }
    }
}
