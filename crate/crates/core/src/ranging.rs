//! Field of view, LED counts, and camera-to-LED distance estimation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::BlobDetection;
use crate::error::{Error, Result};
use crate::model::{CameraIntrinsics, LedLattice, Point3, RobotPose};
use crate::shutter::project_led;

const TABLE1_CSV: &str = include_str!("../fixtures/table1.csv");

/// Ceiling height of the reference table (cm).
pub const TABLE1_HEIGHT: f64 = 255.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovSpec {
    pub phi_h: f64,
    pub phi_v: f64,
    /// FOV area on the LED plane, `4 h² tan φv tan φh` (cm²).
    pub area_afov: f64,
    pub n_led_expected: f64,
}

/// Full horizontal and vertical angles of view (radians).
pub fn fov_angles(cam: &CameraIntrinsics) -> (f64, f64) {
    let f = cam.focal_length_mm;
    (
        2.0 * (cam.sensor_w_mm / (2.0 * f)).atan(),
        2.0 * (cam.sensor_h_mm / (2.0 * f)).atan(),
    )
}

fn check_angle(phi: f64) -> Result<()> {
    if !(phi > 0.0 && phi < std::f64::consts::FRAC_PI_2) {
        return Err(Error::Singular(format!("tan of FOV angle {phi} rad is undefined or negative")));
    }
    Ok(())
}

/// FOV area with the full angle inside the tangent.
pub fn fov_area(h: f64, phi_h: f64, phi_v: f64) -> Result<f64> {
    check_angle(phi_h)?;
    check_angle(phi_v)?;
    Ok(4.0 * h * h * phi_v.tan() * phi_h.tan())
}

/// LEDs expected in `area`, one per `a²`.
pub fn expected_led_count(h: f64, phi_h: f64, phi_v: f64, a: f64) -> Result<f64> {
    Ok(fov_area(h, phi_h, phi_v)? / (a * a))
}

/// Rectangle seen on a plane at distance `h`: `2 h tan(φ/2)` per side.
pub fn footprint_dims(h: f64, phi_h: f64, phi_v: f64) -> (f64, f64) {
    (2.0 * h * (phi_h / 2.0).tan(), 2.0 * h * (phi_v / 2.0).tan())
}

/// Area of the pinhole footprint at distance `h`.
pub fn fov_footprint_geometric(h: f64, phi_h: f64, phi_v: f64) -> f64 {
    let (w, l) = footprint_dims(h, phi_h, phi_v);
    w * l
}

/// Bound on the count error from LEDs straddling the footprint edge.
pub fn boundary_term(h: f64, phi_h: f64, phi_v: f64, a: f64) -> f64 {
    let (w, l) = footprint_dims(h, phi_h, phi_v);
    (w + l) / a + 1.0
}

pub fn fov_spec(cam: &CameraIntrinsics, h: f64, a: f64) -> Result<FovSpec> {
    let (phi_h, phi_v) = fov_angles(cam);
    let area_afov = fov_area(h, phi_h, phi_v)?;
    Ok(FovSpec { phi_h, phi_v, area_afov, n_led_expected: area_afov / (a * a) })
}

/// LEDs whose image centre falls inside the frame.
pub fn brute_force_led_count(lattice: &LedLattice, cam: &CameraIntrinsics, pose: &RobotPose) -> usize {
    lattice
        .positions()
        .filter(|&p| project_led(pose, cam, p, 1.0).is_some())
        .count()
}

/// The `K` in `D = K / sqrt(a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub k: f64,
}

impl Calibration {
    /// Fit from one on-axis observation.
    pub fn fit(distance: f64, area_px: f64) -> Result<Self> {
        if !(distance > 0.0 && area_px > 0.0) {
            return Err(Error::domain("calibration needs positive distance and area"));
        }
        Ok(Self { k: distance * area_px.sqrt() })
    }

    /// Calibrated on the on-axis row of the reference table.
    pub fn table1() -> Self {
        Self::fit(TABLE1_HEIGHT, 348.0).expect("positive")
    }
}

/// Distance from detected area, `D = K / sqrt(a)`.
pub fn direct_distance(area_px: f64, cal: &Calibration) -> Result<f64> {
    if !(area_px > 0.0) {
        return Err(Error::domain(format!("area must be positive, got {area_px}")));
    }
    Ok(cal.k / area_px.sqrt())
}

/// Distance from the unforeshortened radius, `D = f R / r`.
pub fn geometric_distance(major_r_px: f64, focal_px: f64, led_radius: f64) -> Result<f64> {
    if !(major_r_px > 0.0) {
        return Err(Error::domain(format!("radius must be positive, got {major_r_px}")));
    }
    Ok(focal_px * led_radius / major_r_px)
}

/// Floor distance to the point below the LED.
pub fn horizontal_distance(d: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) || d < h {
        return Err(Error::domain(format!("direct distance {d} shorter than height {h}")));
    }
    Ok(((d - h) * (d + h)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub horizontal_cm: f64,
    pub measured_cm: f64,
    pub actual_cm: f64,
    pub error_cm: f64,
    pub area_px: f64,
    pub major_r_px: Option<f64>,
    pub minor_r_px: f64,
}

/// Measured distance against detected geometry over a horizontal sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusCorrectionTable {
    pub rows: Vec<Table1Row>,
}

impl RadiusCorrectionTable {
    /// The bundled reference table.
    pub fn table1() -> Self {
        Self::from_reader(TABLE1_CSV.as_bytes()).expect("bundled table is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<Table1Row>, _>>()?;
        let t = Self { rows };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::domain("correction table is empty"));
        }
        for w in self.rows.windows(2) {
            if w[1].horizontal_cm <= w[0].horizontal_cm {
                return Err(Error::domain("horizontal distances must strictly increase"));
            }
            if w[1].area_px > w[0].area_px {
                return Err(Error::domain("detected area must not increase with offset"));
            }
        }
        Ok(())
    }

    /// Measured distance for a blob with minor radius `minor_r` and area
    /// `area_px`.
    ///
    /// The printed minor radii are whole pixels and repeat, so rows within
    /// one pixel of `minor_r` are selected first and the distance is then
    /// interpolated on detected area among them, clamped at the ends.
    pub fn lookup(&self, minor_r: f64, area_px: f64) -> Result<f64> {
        if !(minor_r > 0.0) {
            return Err(Error::domain("degenerate blob: minor radius is zero"));
        }
        let mut rows: Vec<&Table1Row> = self
            .rows
            .iter()
            .filter(|r| (r.minor_r_px - minor_r).abs() < 1.0)
            .collect();
        if rows.is_empty() {
            let nearest = self
                .rows
                .iter()
                .map(|r| (r.minor_r_px - minor_r).abs())
                .fold(f64::INFINITY, f64::min);
            rows = self
                .rows
                .iter()
                .filter(|r| (r.minor_r_px - minor_r).abs() == nearest)
                .collect();
        }
        // Areas fall as the offset grows; walk in that order.
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.area_px, r.measured_cm)).collect();
        Ok(interp_descending(&pts, area_px))
    }
}

/// Linear interpolation over points whose abscissa is non-increasing,
/// clamped outside the range. Equal abscissae resolve to the first point.
fn interp_descending(pts: &[(f64, f64)], x: f64) -> f64 {
    let first = pts[0];
    let last = pts[pts.len() - 1];
    if x >= first.0 {
        return first.1;
    }
    if x <= last.0 {
        return last.1;
    }
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x <= x0 && x >= x1 {
            if x0 == x1 {
                return y0;
            }
            return y0 + (y1 - y0) * (x0 - x) / (x0 - x1);
        }
    }
    last.1
}

/// Correction table keyed on the continuous minor radius the camera model
/// predicts at each tabulated offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedCorrection {
    pub height: f64,
    /// `(minor radius px, measured distance cm)`, radius decreasing.
    pub points: Vec<(f64, f64)>,
}

impl CalibratedCorrection {
    pub fn new(table: &RadiusCorrectionTable, cam: &CameraIntrinsics, led_diameter: f64, height: f64) -> Result<Self> {
        let points = table
            .rows
            .iter()
            .map(|r| {
                let pose = RobotPose::new(-r.horizontal_cm, 0.0, 0.0);
                project_led(&pose, cam, Point3::new(0.0, 0.0, height), led_diameter)
                    .map(|p| (p.minor_r, r.measured_cm))
                    .ok_or_else(|| Error::domain(format!("offset {} cm outside FOV", r.horizontal_cm)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { height, points })
    }

    pub fn lookup(&self, minor_r: f64) -> Result<f64> {
        if !(minor_r > 0.0) {
            return Err(Error::domain("degenerate blob: minor radius is zero"));
        }
        Ok(interp_descending(&self.points, minor_r))
    }

    /// As [`lookup`](Self::lookup), but continues the outermost segment for
    /// radii smaller than the table covers.
    pub fn lookup_extrapolated(&self, minor_r: f64) -> Result<f64> {
        let n = self.points.len();
        if n < 2 {
            return self.lookup(minor_r);
        }
        let (x0, y0) = self.points[n - 2];
        let (x1, y1) = self.points[n - 1];
        if minor_r < x1 && x0 != x1 {
            return Ok(y1 + (y1 - y0) * (minor_r - x1) / (x1 - x0));
        }
        self.lookup(minor_r)
    }
}

/// Table-corrected distance of a detected blob.
pub fn ellipse_corrected_distance(blob: &BlobDetection, table: &RadiusCorrectionTable) -> Result<f64> {
    table.lookup(blob.minor_r, blob.area_px)
}

pub fn accuracy_pct(measured: f64, actual: f64) -> f64 {
    100.0 * (1.0 - (measured - actual).abs() / actual)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub horizontal_cm: f64,
    pub measured_cm: f64,
    pub actual_cm: f64,
    pub accuracy_pct: f64,
}

/// Per-row accuracy of measured against actual distance.
pub fn accuracy_report(table: &RadiusCorrectionTable) -> Vec<AccuracyRow> {
    table
        .rows
        .iter()
        .map(|r| AccuracyRow {
            horizontal_cm: r.horizontal_cm,
            measured_cm: r.measured_cm,
            actual_cm: r.actual_cm,
            accuracy_pct: accuracy_pct(r.measured_cm, r.actual_cm),
        })
        .collect()
}

/// Distance estimator used while navigating.
#[derive(Debug, Clone, PartialEq)]
pub enum Ranger {
    /// `D = f R / r` from the fitted major radius.
    Geometric { focal_px: f64, led_radius: f64 },
    /// Table correction near its calibration height, geometric elsewhere.
    Corrected {
        correction: CalibratedCorrection,
        focal_px: f64,
        led_radius: f64,
    },
}

impl Ranger {
    pub fn distance(&self, blob: &BlobDetection, height: f64) -> Result<f64> {
        match self {
            Ranger::Geometric { focal_px, led_radius } => geometric_distance(blob.major_r, *focal_px, *led_radius),
            Ranger::Corrected { correction, focal_px, led_radius } => {
                if (correction.height - height).abs() <= 1.0 {
                    correction.lookup(blob.minor_r)
                } else {
                    geometric_distance(blob.major_r, *focal_px, *led_radius)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn fov_angle_examples() {
        let square = CameraIntrinsics { focal_length_mm: 3.2, ..Default::default() };
        assert_relative_eq!(fov_angles(&square).0, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        let (ph, _) = fov_angles(&CameraIntrinsics::default());
        // 2 atan(6.4 / 8.4)
        assert_relative_eq!(ph.to_degrees(), 74.608, epsilon = 0.001);
        let mut last = f64::INFINITY;
        for f in 1..40 {
            let cam = CameraIntrinsics { focal_length_mm: f as f64 * 0.5, ..Default::default() };
            let (p, _) = fov_angles(&cam);
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn fov_area_examples() {
        let q = std::f64::consts::FRAC_PI_4;
        assert_relative_eq!(fov_area(100.0, q, q).unwrap(), 40_000.0, epsilon = 1e-6);
        assert_relative_eq!(fov_area(200.0, q, q).unwrap(), 4.0 * fov_area(100.0, q, q).unwrap());
        assert_relative_eq!(expected_led_count(100.0, q, q, 50.0).unwrap(), 16.0, epsilon = 1e-9);
        assert!(matches!(fov_area(1.0, std::f64::consts::FRAC_PI_2, q), Err(Error::Singular(_))));
    }

    #[test]
    fn brute_force_counts() {
        let cam = CameraIntrinsics::default();
        let empty = LedLattice { origin_xy: [0.0; 2], spacing: 50.0, nx: 0, ny: 0, height: 256.0 };
        assert_eq!(brute_force_led_count(&empty, &cam, &RobotPose::new(0.0, 0.0, 0.0)), 0);
        let lat = LedLattice { origin_xy: [0.0; 2], spacing: 50.0, nx: 4, ny: 8, height: 256.0 };
        for (x, y) in [(0.0, 0.0), (75.0, 175.0), (150.0, 350.0), (25.0, 25.0)] {
            assert!(brute_force_led_count(&lat, &cam, &RobotPose::new(x, y, 0.0)) >= 4);
        }
    }

    #[test]
    fn direct_distance_examples() {
        let cal = Calibration::table1();
        assert_relative_eq!(cal.k, 4766.29, epsilon = 0.01);
        assert_relative_eq!(direct_distance(348.0, &cal).unwrap(), 255.5, epsilon = 1e-9);
        assert_relative_eq!(direct_distance(4.0 * 348.0, &cal).unwrap(), 255.5 / 2.0, epsilon = 1e-9);
        assert_relative_eq!(direct_distance(288.0, &cal).unwrap(), 280.86, epsilon = 0.01);
        assert!(direct_distance(0.0, &cal).is_err());
    }

    #[test]
    fn pinhole_self_consistency() {
        let cam = CameraIntrinsics::default();
        let on_axis = |d: f64| project_led(&RobotPose::new(0.0, 0.0, 0.0), &cam, Point3::new(0.0, 0.0, d), 9.5).unwrap();
        let cal = Calibration::fit(200.0, on_axis(200.0).area_px).unwrap();
        for d in (150..=480).step_by(10) {
            let p = on_axis(d as f64);
            assert!((direct_distance(p.area_px, &cal).unwrap() / d as f64 - 1.0).abs() < 0.01);
            assert_relative_eq!(geometric_distance(p.major_r, cam.focal_px(), 4.75).unwrap(), d as f64, epsilon = 1e-9);
        }
    }

    #[test]
    fn table_lookup_examples() {
        let t = RadiusCorrectionTable::table1();
        assert_eq!(t.rows.len(), 11);
        assert_eq!(t.lookup(11.0, 348.0).unwrap(), 255.5);
        assert_eq!(t.lookup(8.0, 288.0).unwrap(), 272.5);
        let mid = t.lookup(8.5, 293.0).unwrap();
        assert!(mid > 269.5 && mid < 272.5, "{mid}");
        assert!(t.lookup(0.0, 300.0).is_err());
    }

    #[test]
    fn calibrated_correction_hits_rows() {
        let t = RadiusCorrectionTable::table1();
        let cam = CameraIntrinsics::default();
        let c = CalibratedCorrection::new(&t, &cam, 9.5, TABLE1_HEIGHT).unwrap();
        assert!(c.points.windows(2).all(|w| w[1].0 < w[0].0));
        for (p, row) in c.points.iter().zip(&t.rows) {
            assert_eq!(c.lookup(p.0).unwrap(), row.measured_cm);
        }
        let between = c.lookup((c.points[9].0 + c.points[10].0) / 2.0).unwrap();
        assert_relative_eq!(between, 271.0, epsilon = 1e-9);
    }

    #[test]
    fn horizontal_distance_examples() {
        assert_eq!(horizontal_distance(255.5, 255.5).unwrap(), 0.0);
        assert_relative_eq!(horizontal_distance(274.5, 255.5).unwrap(), 100.35, epsilon = 0.01);
        assert_relative_eq!(horizontal_distance(260.2, 255.5).unwrap(), 49.2, epsilon = 0.05);
        assert!(horizontal_distance(250.0, 255.5).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let rep = accuracy_report(&RadiusCorrectionTable::table1());
        assert_eq!(rep[0].accuracy_pct, 100.0);
        assert_relative_eq!(rep[10].accuracy_pct, 99.27, epsilon = 0.01);
        assert!(rep.iter().all(|r| r.accuracy_pct >= 98.0));
        assert!(rep.windows(2).all(|w| w[1].accuracy_pct <= w[0].accuracy_pct));
    }

    #[test]
    fn table_validation() {
        let bad = "horizontal_cm,measured_cm,actual_cm,error_cm,area_px,major_r_px,minor_r_px\n0,1,1,0,10,,1\n0,1,1,0,9,,1\n";
        assert!(RadiusCorrectionTable::from_reader(bad.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn pythagoras_round_trip(s in 0.0f64..1000.0, h in 1.0f64..1000.0) {
            let back = horizontal_distance((h * h + s * s).sqrt(), h).unwrap();
            prop_assert!((back - s).abs() <= 1e-9 * s.max(1.0));
        }
    }
}
