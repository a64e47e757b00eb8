//! Grid navigation from decoded ceiling LEDs.
//!
//! Each macro-step captures a burst, decodes the visible IDs, picks a floor
//! waypoint below one of them and drives there. The target is reached when
//! its own LED is overhead.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::decoder::{decode_frames, DecodedLed, Region};
use crate::error::{Error, Result};
use crate::model::{Cell, LedGridConfig, LocationId, RobotPose};
use crate::ranging::{CalibratedCorrection, RadiusCorrectionTable, Ranger, TABLE1_HEIGHT};
use crate::scenario::{sub_seed, Capture, RangingMode, Scenario, Simulator, STREAM_ACTUATION};
use crate::shutter::native_to_body;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lateral {
    Right,
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Longitudinal {
    Front,
    Back,
}

/// Directions in the camera frame along which grid indices grow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisOrientation {
    pub x_increases: Lateral,
    pub y_increases: Longitudinal,
}

impl AxisOrientation {
    /// Body-frame `(right, front)` unit offset of one grid step.
    fn body_step(&self, di: i32, dj: i32) -> [f64; 2] {
        let sx = if self.x_increases == Lateral::Right { 1.0 } else { -1.0 };
        let sy = if self.y_increases == Longitudinal::Front { 1.0 } else { -1.0 };
        [di as f64 * sx, dj as f64 * sy]
    }
}

/// Orientation from diagonally opposite image regions.
///
/// The first cell listed for each region represents it. Each axis is taken
/// from the first diagonal pair whose cells differ along it.
pub fn infer_orientation(seen: &[(Region, Cell)]) -> Result<AxisOrientation> {
    let first = |r: Region| seen.iter().find(|(q, _)| *q == r).map(|(_, c)| *c);
    let lf_rb = first(Region::LeftFront).zip(first(Region::RightBack));
    let fr_bl = first(Region::FrontRight).zip(first(Region::BackLeft));
    if lf_rb.is_none() && fr_bl.is_none() {
        return Err(Error::OrientationUnknown("no diagonal pair of regions".into()));
    }
    // x grows to the right when the left-hand LED has the smaller index.
    let x = lf_rb
        .filter(|(lf, rb)| lf.i != rb.i)
        .map(|(lf, rb)| lf.i < rb.i)
        .or_else(|| fr_bl.filter(|(fr, bl)| fr.i != bl.i).map(|(fr, bl)| fr.i > bl.i));
    let y = lf_rb
        .filter(|(lf, rb)| lf.j != rb.j)
        .map(|(lf, rb)| lf.j > rb.j)
        .or_else(|| fr_bl.filter(|(fr, bl)| fr.j != bl.j).map(|(fr, bl)| fr.j > bl.j));
    match (x, y) {
        (Some(x), Some(y)) => Ok(AxisOrientation {
            x_increases: if x { Lateral::Right } else { Lateral::Left },
            y_increases: if y { Longitudinal::Front } else { Longitudinal::Back },
        }),
        _ => Err(Error::OrientationUnknown("diagonal cells share a coordinate".into())),
    }
}

/// A decoded LED placed on the grid and ranged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sighting {
    pub id: LocationId,
    pub cell: Cell,
    pub region: Region,
    pub area_px: f64,
    /// Direct camera-to-LED distance (cm).
    pub distance_cm: f64,
    /// Floor distance to the point below the LED (cm).
    pub floor_cm: f64,
    /// Unit `(right, front)` direction towards that point, zero when overhead.
    pub direction: [f64; 2],
}

/// Range and place every decoded LED that belongs to the grid.
pub fn sightings(
    decoded: &[DecodedLed],
    grid: &LedGridConfig,
    cam: &crate::model::CameraIntrinsics,
    ranger: &Ranger,
) -> Vec<Sighting> {
    let h = grid.ceiling_height_hr;
    decoded
        .iter()
        .filter_map(|led| {
            let cell = grid.cell_of(led.id).ok()?;
            let d = ranger.distance(&led.blob, h).ok()?;
            // Directly overhead the estimate may dip under the height.
            let s = ((d.max(h) - h) * (d.max(h) + h)).sqrt();
            let [r, f] = native_to_body(cam, led.blob.center_px, h);
            let norm = r.hypot(f);
            let direction = if norm > 0.0 { [r / norm, f / norm] } else { [0.0, 0.0] };
            Some(Sighting {
                id: led.id,
                cell,
                region: led.region,
                area_px: led.blob.area_px,
                distance_cm: d,
                floor_cm: s,
                direction,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    /// The target LED is overhead.
    Done,
    /// Drive to the floor point below a visible LED. `terminal` marks the
    /// final approach to the target.
    MoveToFloorOf {
        id: LocationId,
        distance_cm: f64,
        right_cm: f64,
        front_cm: f64,
        terminal: bool,
    },
    /// Blind move by whole grid cells, used when no visible LED is closer
    /// to the target than the one overhead.
    GridStep { di: i32, dj: i32, right_cm: f64, front_cm: f64 },
}

impl Action {
    /// Body-frame displacement.
    pub fn displacement(&self) -> [f64; 2] {
        match *self {
            Action::Done => [0.0, 0.0],
            Action::MoveToFloorOf { right_cm, front_cm, .. } | Action::GridStep { right_cm, front_cm, .. } => {
                [right_cm, front_cm]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitRecord {
    pub step: usize,
    /// Simulated capture time (s).
    pub time_s: f64,
    pub pose: RobotPose,
    pub decoded: Vec<LocationId>,
    pub orientation: Option<AxisOrientation>,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavState {
    pub pose: RobotPose,
    pub target: LocationId,
    pub orientation: Option<AxisOrientation>,
    pub arrival_tolerance_cm: f64,
    visited_log: Vec<VisitRecord>,
}

impl NavState {
    pub fn new(pose: RobotPose, target: LocationId, arrival_tolerance_cm: f64) -> Self {
        Self { pose, target, orientation: None, arrival_tolerance_cm, visited_log: vec![] }
    }

    pub fn visited_log(&self) -> &[VisitRecord] {
        &self.visited_log
    }

    /// Append a record; times must not run backwards.
    pub fn record(&mut self, rec: VisitRecord) -> Result<()> {
        if let Some(last) = self.visited_log.last() {
            if rec.time_s < last.time_s {
                return Err(Error::domain("visit log times must be non-decreasing"));
            }
        }
        self.visited_log.push(rec);
        Ok(())
    }
}

fn move_to(s: &Sighting, terminal: bool) -> Action {
    Action::MoveToFloorOf {
        id: s.id,
        distance_cm: s.floor_cm,
        right_cm: s.direction[0] * s.floor_cm,
        front_cm: s.direction[1] * s.floor_cm,
        terminal,
    }
}

/// Larger image first, then lower ID.
fn by_area(a: &&Sighting, b: &&Sighting) -> std::cmp::Ordering {
    b.area_px.total_cmp(&a.area_px).then(a.id.cmp(&b.id))
}

/// Two-LED branch: go below the nearer LED that is not already overhead.
fn fallback(state: &NavState, seen: &[Sighting]) -> Result<Action> {
    let tol = state.arrival_tolerance_cm;
    let mut order: Vec<&Sighting> = seen.iter().collect();
    order.sort_by(by_area);
    order
        .into_iter()
        .find(|s| s.floor_cm > tol)
        .map(|s| move_to(s, false))
        .ok_or_else(|| Error::OrientationUnknown("only the overhead LED is visible".into()))
}

/// One decision of the navigation loop. Updates the state's orientation
/// when it can be inferred.
pub fn next_action(state: &mut NavState, seen: &[Sighting], grid: &LedGridConfig) -> Result<Action> {
    if seen.is_empty() {
        return Err(Error::EmptyScan);
    }
    if let Some(t) = seen.iter().find(|s| s.id == state.target) {
        if t.floor_cm <= state.arrival_tolerance_cm {
            return Ok(Action::Done);
        }
        return Ok(move_to(t, true));
    }
    if seen.len() < 3 {
        return fallback(state, seen);
    }
    let cells: Vec<(Region, Cell)> = {
        // Represent each region by its LED nearest the image centre.
        let mut near: Vec<&Sighting> = seen.iter().collect();
        near.sort_by(|a, b| a.floor_cm.total_cmp(&b.floor_cm).then(a.id.cmp(&b.id)));
        near.iter().map(|s| (s.region, s.cell)).collect()
    };
    if let Ok(o) = infer_orientation(&cells) {
        state.orientation = Some(o);
    }
    // Decoded cells and image directions suffice to pick and reach a
    // waypoint; orientation is only needed to step blind.
    let goal = grid.cell_of(state.target)?;
    let best = seen
        .iter()
        .min_by(|a, b| {
            (a.cell.chebyshev(goal), a.floor_cm, a.id)
                .partial_cmp(&(b.cell.chebyshev(goal), b.floor_cm, b.id))
                .expect("finite distances")
        })
        .expect("non-empty");
    if best.floor_cm > state.arrival_tolerance_cm {
        return Ok(move_to(best, false));
    }
    let Some(o) = state.orientation else {
        return fallback(state, seen);
    };
    let di = (goal.i as i32 - best.cell.i as i32).signum();
    let dj = (goal.j as i32 - best.cell.j as i32).signum();
    let [r, f] = o.body_step(di, dj);
    Ok(Action::GridStep { di, dj, right_cm: r * grid.spacing_a, front_cm: f * grid.spacing_a })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Arrived,
    NonConvergence,
}

/// Trajectory and outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavRun {
    pub outcome: Outcome,
    pub moves: usize,
    pub final_pose: RobotPose,
    pub log: Vec<VisitRecord>,
}

impl NavRun {
    pub fn ensure_arrived(&self) -> Result<&Self> {
        match self.outcome {
            Outcome::Arrived => Ok(self),
            Outcome::NonConvergence => Err(Error::NonConvergence { steps: self.moves }),
        }
    }
}

/// Distance estimator selected by the scenario.
pub fn scenario_ranger(s: &Scenario) -> Result<Ranger> {
    let focal_px = s.camera.focal_px();
    let led_radius = s.grid.led_radius();
    Ok(match s.navigation.ranging {
        RangingMode::Geometric => Ranger::Geometric { focal_px, led_radius },
        RangingMode::Corrected => Ranger::Corrected {
            correction: CalibratedCorrection::new(
                &RadiusCorrectionTable::table1(),
                &s.camera,
                s.grid.led_diameter,
                TABLE1_HEIGHT,
            )?,
            focal_px,
            led_radius,
        },
    })
}

/// Empty scans tolerated in a row before giving up.
const RESCANS: usize = 3;

/// Run the navigation loop against any frame source.
pub fn navigate<C: Capture>(s: &Scenario, capture: &mut C, ranger: &Ranger) -> Result<NavRun> {
    let mut state = NavState::new(s.start, s.target, s.navigation.arrival_tolerance_cm);
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(s.seed, STREAM_ACTUATION, 0));
    let act_noise = Normal::new(0.0, s.noise.actuation_sigma).map_err(|e| Error::domain(e.to_string()))?;
    let max_steps = s.max_steps();
    let (mut moves, mut empty) = (0, 0);
    for step in 0.. {
        let frames = capture.acquire(&state.pose)?;
        let decoded = decode_frames(&frames, &s.decoder)?;
        let seen = sightings(&decoded.leds, &s.grid, &s.camera, ranger);
        let action = match next_action(&mut state, &seen, &s.grid) {
            Ok(a) => a,
            Err(Error::EmptyScan) if empty < RESCANS => {
                empty += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        empty = 0;
        state.record(VisitRecord {
            step,
            time_s: capture.elapsed(),
            pose: state.pose,
            decoded: seen.iter().map(|x| x.id).collect(),
            orientation: state.orientation,
            action,
        })?;
        if action == Action::Done {
            return Ok(NavRun { outcome: Outcome::Arrived, moves, final_pose: state.pose, log: state.visited_log });
        }
        if moves == max_steps {
            break;
        }
        let [r, f] = action.displacement();
        let [dx, dy] = state.pose.to_world(r, f);
        let (nx, ny) = if s.noise.actuation_sigma > 0.0 {
            (act_noise.sample(&mut rng), act_noise.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        state.pose = RobotPose::new(state.pose.x + dx + nx, state.pose.y + dy + ny, state.pose.heading);
        moves += 1;
    }
    Ok(NavRun { outcome: Outcome::NonConvergence, moves, final_pose: state.pose, log: state.visited_log })
}

/// Simulate a full run of the scenario.
pub fn run_navigation(s: &Scenario) -> Result<NavRun> {
    s.validate()?;
    let mut sim = Simulator::from_scenario(s)?;
    navigate(s, &mut sim, &scenario_ranger(s)?)
}

/// Append records to a JSON-lines log.
pub fn append_jsonl(path: &Path, records: &[VisitRecord]) -> Result<()> {
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<VisitRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    std::io::BufReader::new(file)
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l.map_err(|e| Error::io(path, e))?)?))
        .collect()
}

/// Re-simulate the scenario and check that it retraces `log`. Returns the
/// index of the first diverging record, if any.
pub fn replay(s: &Scenario, log: &[VisitRecord]) -> Result<Option<usize>> {
    let run = run_navigation(s)?;
    let n = run.log.len().max(log.len());
    Ok((0..n).find(|&i| run.log.get(i) != log.get(i)))
}
