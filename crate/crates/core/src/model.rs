//! World model shared by every stage: the ceiling LED grid, the camera and
//! the robot pose.
//!
//! Units: world lengths in cm, focal length and sensor size in mm, image
//! coordinates in px. Conversions happen in the methods that cross those
//! boundaries (`CameraIntrinsics::focal_px`, `RobotPose::to_body`).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of distinct location IDs carried by a 5-bit payload.
pub const ID_SPACE: usize = 32;

/// A point in world coordinates (cm). `z` is measured upwards from the
/// camera plane, so a ceiling LED sits at `z = h_r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// Grid indices of a ceiling LED.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub i: u32,
    pub j: u32,
}

impl Cell {
    pub const fn new(i: u32, j: u32) -> Self {
        Self { i, j }
    }

    /// Chebyshev distance in grid steps.
    pub fn chebyshev(self, other: Cell) -> u32 {
        self.i.abs_diff(other.i).max(self.j.abs_diff(other.j))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

/// A 5-bit LED identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct LocationId(u8);

impl LocationId {
    pub fn new(bits: u8) -> Result<Self> {
        if (bits as usize) < ID_SPACE {
            Ok(Self(bits))
        } else {
            Err(Error::domain(format!("location id {bits} does not fit in 5 bits")))
        }
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    /// All 32 identities in ascending order.
    pub fn all() -> impl Iterator<Item = LocationId> {
        (0..ID_SPACE as u8).map(LocationId)
    }
}

impl TryFrom<u8> for LocationId {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Self::new(value)
    }
}

impl From<LocationId> for u8 {
    fn from(id: LocationId) -> u8 {
        id.0
    }
}

impl fmt::Display for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:05b}", self.0)
    }
}

/// A regular square lattice of ceiling LEDs. Unlike [`LedGridConfig`] it is
/// not limited to the 5-bit ID space, which makes it usable for FOV counting
/// over large ceilings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedLattice {
    pub origin_xy: [f64; 2],
    pub spacing: f64,
    pub nx: u32,
    pub ny: u32,
    pub height: f64,
}

impl LedLattice {
    pub fn positions(&self) -> impl Iterator<Item = Point3> + '_ {
        (0..self.ny).flat_map(move |j| {
            (0..self.nx).map(move |i| {
                Point3::new(
                    self.origin_xy[0] + i as f64 * self.spacing,
                    self.origin_xy[1] + j as f64 * self.spacing,
                    self.height,
                )
            })
        })
    }
}

/// Ceiling LED grid with row-major ID assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LedGridConfig {
    /// Floor coordinates (cm) of LED (0, 0).
    pub origin_xy: [f64; 2],
    /// Inter-LED distance (cm).
    pub spacing_a: f64,
    pub nx: u32,
    pub ny: u32,
    /// Vertical distance from the camera plane to the LED plane (cm).
    pub ceiling_height_hr: f64,
    /// LED diameter (cm).
    pub led_diameter: f64,
    /// LED emitting surface (cm²).
    pub led_area: f64,
}

impl Default for LedGridConfig {
    fn default() -> Self {
        Self {
            origin_xy: [0.0, 0.0],
            spacing_a: 50.0,
            nx: 4,
            ny: 8,
            ceiling_height_hr: 256.0,
            led_diameter: 9.5,
            led_area: 71.0,
        }
    }
}

impl LedGridConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("spacing_a", self.spacing_a),
            ("ceiling_height_hr", self.ceiling_height_hr),
            ("led_diameter", self.led_diameter),
            ("led_area", self.led_area),
        ];
        for (name, v) in dims {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("grid.{name} must be positive, got {v}")));
            }
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::domain("grid must contain at least one LED"));
        }
        if self.len() > ID_SPACE {
            return Err(Error::domain(format!(
                "grid of {}x{} LEDs exceeds the {ID_SPACE}-ID space",
                self.nx, self.ny
            )));
        }
        if self.spacing_a <= self.led_diameter {
            return Err(Error::domain("spacing_a must exceed the LED diameter"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx as usize * self.ny as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn led_radius(&self) -> f64 {
        self.led_diameter / 2.0
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.i < self.nx && cell.j < self.ny
    }

    /// Row-major: `i = bits mod nx`, `j = bits div nx`.
    pub fn cell_of(&self, id: LocationId) -> Result<Cell> {
        let bits = id.bits() as u32;
        if bits as usize >= self.len() {
            return Err(Error::domain(format!(
                "id {bits} outside a grid of {} LEDs",
                self.len()
            )));
        }
        Ok(Cell::new(bits % self.nx, bits / self.nx))
    }

    pub fn id_of(&self, cell: Cell) -> Result<LocationId> {
        if !self.contains(cell) {
            return Err(Error::domain(format!("cell {cell} outside the grid")));
        }
        LocationId::new((cell.j * self.nx + cell.i) as u8)
    }

    pub fn ids(&self) -> impl Iterator<Item = LocationId> + '_ {
        LocationId::all().take(self.len())
    }

    /// Floor point directly below the LED at `cell`.
    pub fn floor_xy(&self, cell: Cell) -> [f64; 2] {
        [
            self.origin_xy[0] + cell.i as f64 * self.spacing_a,
            self.origin_xy[1] + cell.j as f64 * self.spacing_a,
        ]
    }

    pub fn lattice(&self) -> LedLattice {
        LedLattice {
            origin_xy: self.origin_xy,
            spacing: self.spacing_a,
            nx: self.nx,
            ny: self.ny,
            height: self.ceiling_height_hr,
        }
    }
}

/// Position of an LED in world coordinates: `(origin + i·a, origin + j·a, h_r)`.
pub fn led_world_position(grid: &LedGridConfig, id: LocationId) -> Result<Point3> {
    let cell = grid.cell_of(id)?;
    let [x, y] = grid.floor_xy(cell);
    Ok(Point3::new(x, y, grid.ceiling_height_hr))
}

/// Pinhole camera mounted on the robot, looking straight up.
///
/// The sensor is read out along the long image axis: the native raster has
/// `img_w` read-out rows of `img_h` pixels each, and the displayed image is
/// that raster rotated by `rotation` degrees clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraIntrinsics {
    pub focal_length_mm: f64,
    /// Sensor extent along the displayed width (mm).
    pub sensor_w_mm: f64,
    /// Sensor extent along the displayed height (mm).
    pub sensor_h_mm: f64,
    pub img_w: u32,
    pub img_h: u32,
    pub fps: f64,
    /// Exposure time (s).
    pub exposure: f64,
    /// Display rotation in degrees clockwise.
    pub rotation: u16,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            focal_length_mm: 4.2,
            sensor_w_mm: 6.4,
            sensor_h_mm: 4.8,
            img_w: 800,
            img_h: 600,
            fps: 20.0,
            exposure: 1.0 / 8000.0,
            rotation: 270,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("focal_length_mm", self.focal_length_mm),
            ("sensor_w_mm", self.sensor_w_mm),
            ("sensor_h_mm", self.sensor_h_mm),
            ("fps", self.fps),
            ("exposure", self.exposure),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("camera.{name} must be positive, got {v}")));
            }
        }
        if self.img_w == 0 || self.img_h == 0 {
            return Err(Error::domain("camera image size must be non-zero"));
        }
        if self.exposure >= 1.0 / self.fps {
            return Err(Error::domain("exposure must be shorter than the frame period"));
        }
        if !matches!(self.rotation, 0 | 90 | 180 | 270) {
            return Err(Error::domain(format!("unsupported rotation {}", self.rotation)));
        }
        Ok(())
    }

    /// Focal length in pixels, from the horizontal pixel pitch.
    pub fn focal_px(&self) -> f64 {
        self.focal_length_mm * self.img_w as f64 / self.sensor_w_mm
    }

    /// Rows of the native (read-out) raster.
    pub fn readout_rows(&self) -> usize {
        self.img_w as usize
    }

    /// Pixels per read-out row.
    pub fn readout_cols(&self) -> usize {
        self.img_h as usize
    }

    pub fn frame_period(&self) -> f64 {
        1.0 / self.fps
    }

    /// Time between the start of consecutive read-out rows.
    pub fn row_time(&self) -> f64 {
        1.0 / (self.fps * self.readout_rows() as f64)
    }
}

/// Robot position on the floor. The camera height is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotPose {
    pub x: f64,
    pub y: f64,
    /// Rotation of the camera frame relative to the world, radians.
    #[serde(default)]
    pub heading: f64,
}

impl RobotPose {
    pub const fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    /// Unit vectors of the image "right" and "front" directions in world
    /// coordinates.
    pub fn axes(&self) -> ([f64; 2], [f64; 2]) {
        let (s, c) = self.heading.sin_cos();
        ([c, s], [-s, c])
    }

    /// World-frame floor offset expressed as (right, front) in the body frame.
    pub fn to_body(&self, dx: f64, dy: f64) -> [f64; 2] {
        let (right, front) = self.axes();
        [dx * right[0] + dy * right[1], dx * front[0] + dy * front[1]]
    }

    /// Body-frame (right, front) offset expressed in world coordinates.
    pub fn to_world(&self, right_off: f64, front_off: f64) -> [f64; 2] {
        let (right, front) = self.axes();
        [
            right_off * right[0] + front_off * front[0],
            right_off * right[1] + front_off * front[1],
        ]
    }

    pub fn floor_distance(&self, xy: [f64; 2]) -> f64 {
        (self.x - xy[0]).hypot(self.y - xy[1])
    }
}
