//! Scenario configuration and the frame simulator that stands in for the
//! robot's camera.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::DecoderConfig;
use crate::error::{Error, Result};
use crate::model::{led_world_position, CameraIntrinsics, LedGridConfig, LocationId, Point3, RobotPose};
use crate::shutter::{project_led, render_frame, Emitter, FrameScan};
use crate::txcodec::{codeword, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Per-pixel Gaussian noise on the `[0, 1]` luminance scale.
    pub pixel_sigma: f64,
    /// Per-axis Gaussian error on every executed move (cm).
    pub actuation_sigma: f64,
    /// Half-width of the uniform frame start jitter (s).
    pub frame_jitter_s: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { pixel_sigma: 0.0, actuation_sigma: 0.0, frame_jitter_s: 5e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransmitterConfig {
    /// Chip rate shared by every ceiling LED (Hz).
    pub chip_rate: f64,
}

impl Default for TransmitterConfig {
    fn default() -> Self {
        Self { chip_rate: 4000.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangingMode {
    /// Pinhole distance from the fitted major radius.
    Geometric,
    /// Table correction on the minor radius.
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavigationConfig {
    /// Floor distance at which the target counts as reached (cm).
    pub arrival_tolerance_cm: f64,
    /// Macro-step cap; `nx + ny + 2` when absent.
    pub max_steps: Option<usize>,
    pub ranging: RangingMode,
}

impl Default for NavigationConfig {
    fn default() -> Self {
        Self { arrival_tolerance_cm: 5.0, max_steps: None, ranging: RangingMode::Geometric }
    }
}

fn default_frames() -> usize {
    20
}

fn origin_pose() -> RobotPose {
    RobotPose::new(0.0, 0.0, 0.0)
}

/// A complete simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    pub target: LocationId,
    #[serde(default)]
    pub grid: LedGridConfig,
    #[serde(default)]
    pub camera: CameraIntrinsics,
    #[serde(default = "origin_pose")]
    pub start: RobotPose,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub transmitter: TransmitterConfig,
    #[serde(default)]
    pub decoder: DecoderConfig,
    #[serde(default)]
    pub navigation: NavigationConfig,
    /// Frames per acquisition burst.
    #[serde(default = "default_frames")]
    pub frames_per_acquisition: usize,
}

impl Scenario {
    pub fn new(target: LocationId) -> Self {
        Self {
            seed: 0,
            target,
            grid: LedGridConfig::default(),
            camera: CameraIntrinsics::default(),
            start: origin_pose(),
            noise: NoiseConfig::default(),
            transmitter: TransmitterConfig::default(),
            decoder: DecoderConfig::default(),
            navigation: NavigationConfig::default(),
            frames_per_acquisition: default_frames(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let section = |path: &str| {
            let path = path.to_string();
            move |e: Error| Error::Config { path: path.clone(), message: e.to_string() }
        };
        self.grid.validate().map_err(section("grid"))?;
        self.camera.validate().map_err(section("camera"))?;
        self.decoder.validate().map_err(section("decoder"))?;
        self.grid.cell_of(self.target).map_err(section("target"))?;
        let cfg = |path: &str, message: String| Error::Config { path: path.into(), message };
        let rate = self.transmitter.chip_rate;
        if !self.decoder.chip_rates.contains(&rate) {
            return Err(cfg(
                "transmitter.chip_rate",
                format!("{rate} Hz is not among the decoder's candidate rates"),
            ));
        }
        let n = &self.noise;
        for (name, v) in [
            ("noise.pixel_sigma", n.pixel_sigma),
            ("noise.actuation_sigma", n.actuation_sigma),
            ("noise.frame_jitter_s", n.frame_jitter_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(cfg(name, format!("must be non-negative, got {v}")));
            }
        }
        if !(self.navigation.arrival_tolerance_cm > 0.0) {
            return Err(cfg("navigation.arrival_tolerance_cm", "must be positive".into()));
        }
        if self.frames_per_acquisition == 0 {
            return Err(cfg("frames_per_acquisition", "must be at least 1".into()));
        }
        if !(self.start.x.is_finite() && self.start.y.is_finite() && self.start.heading.is_finite()) {
            return Err(cfg("start", "pose must be finite".into()));
        }
        Ok(())
    }

    pub fn max_steps(&self) -> usize {
        self.navigation
            .max_steps
            .unwrap_or((self.grid.nx + self.grid.ny + 2) as usize)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config { path: String::new(), message: e.to_string() })
    }
}

/// Parse and validate a scenario from TOML text.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Config {
        path: String::new(),
        message: e.to_string(),
    })?;
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().message().to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text)
}

/// Derive an independent stream seed: splitmix64 over the inputs.
pub fn sub_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed;
    for v in [stream, index] {
        z = z.wrapping_add(v.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

const STREAM_PHASE: u64 = 1;
const STREAM_JITTER: u64 = 2;
const STREAM_PIXEL: u64 = 3;
pub(crate) const STREAM_ACTUATION: u64 = 4;

/// A ceiling LED as the simulator sees it.
#[derive(Debug, Clone)]
pub struct SceneLed {
    pub id: LocationId,
    pub position: Point3,
    pub waveform: Waveform,
}

/// Source of frame bursts for a given pose.
pub trait Capture {
    fn acquire(&mut self, pose: &RobotPose) -> Result<Vec<FrameScan>>;
    /// Simulated time consumed so far (s).
    fn elapsed(&self) -> f64;
}

/// Renders native-orientation bursts of a static LED scene.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub camera: CameraIntrinsics,
    pub leds: Vec<SceneLed>,
    pub led_diameter: f64,
    pub pixel_sigma: f64,
    pub frame_jitter: f64,
    pub frames_per_acquisition: usize,
    seed: u64,
    clock: f64,
    bursts: u64,
}

impl Simulator {
    pub fn new(camera: CameraIntrinsics, leds: Vec<SceneLed>, led_diameter: f64, seed: u64) -> Self {
        Self {
            camera,
            leds,
            led_diameter,
            pixel_sigma: 0.0,
            frame_jitter: NoiseConfig::default().frame_jitter_s,
            frames_per_acquisition: default_frames(),
            seed,
            clock: 0.0,
            bursts: 0,
        }
    }

    /// LEDs at arbitrary positions, each transmitting its ID with a phase
    /// drawn from `(seed, id)`.
    pub fn with_positions(
        camera: CameraIntrinsics,
        placed: &[(LocationId, Point3)],
        chip_rate: f64,
        led_diameter: f64,
        seed: u64,
    ) -> Result<Self> {
        let leds = placed
            .iter()
            .map(|&(id, position)| {
                let cw = codeword(id);
                let period = cw.len() as f64 / chip_rate;
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, STREAM_PHASE, id.bits() as u64));
                let phase = rng.random::<f64>() * period;
                Ok(SceneLed { id, position, waveform: Waveform::new(cw, chip_rate, phase)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(camera, leds, led_diameter, seed))
    }

    pub fn from_scenario(s: &Scenario) -> Result<Self> {
        let placed = s
            .grid
            .ids()
            .map(|id| Ok((id, led_world_position(&s.grid, id)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut sim = Self::with_positions(
            s.camera.clone(),
            &placed,
            s.transmitter.chip_rate,
            s.grid.led_diameter,
            s.seed,
        )?;
        sim.pixel_sigma = s.noise.pixel_sigma;
        sim.frame_jitter = s.noise.frame_jitter_s;
        sim.frames_per_acquisition = s.frames_per_acquisition;
        Ok(sim)
    }

    /// Visible LEDs at `pose`, with their image ellipses.
    pub fn emitters(&self, pose: &RobotPose) -> Vec<(LocationId, Emitter)> {
        self.leds
            .iter()
            .filter_map(|l| {
                project_led(pose, &self.camera, l.position, self.led_diameter)
                    .map(|projection| (l.id, Emitter { projection, waveform: l.waveform.clone() }))
            })
            .collect()
    }

    /// One burst of frames. Frame `k` starts one frame period after frame
    /// `k - 1`, shifted by uniform jitter.
    pub fn capture_burst(&mut self, pose: &RobotPose) -> Vec<FrameScan> {
        let scene: Vec<Emitter> = self.emitters(pose).into_iter().map(|(_, e)| e).collect();
        let period = self.camera.frame_period();
        let mut jitter = ChaCha8Rng::seed_from_u64(sub_seed(self.seed, STREAM_JITTER, self.bursts));
        let frames = (0..self.frames_per_acquisition)
            .map(|k| {
                let dt = if self.frame_jitter > 0.0 {
                    jitter.random_range(-self.frame_jitter..=self.frame_jitter)
                } else {
                    0.0
                };
                let t0 = self.clock + k as f64 * period + dt;
                let noise_seed = sub_seed(self.seed, STREAM_PIXEL, self.bursts << 16 | k as u64);
                render_frame(&scene, &self.camera, t0, self.pixel_sigma, noise_seed)
            })
            .collect();
        self.clock += self.frames_per_acquisition as f64 * period;
        self.bursts += 1;
        frames
    }
}

impl Capture for Simulator {
    fn acquire(&mut self, pose: &RobotPose) -> Result<Vec<FrameScan>> {
        Ok(self.capture_burst(pose))
    }

    fn elapsed(&self) -> f64 {
        self.clock
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::decode_frames;

    #[test]
    fn minimal_config_takes_defaults() {
        let s = parse_scenario("target = 5\n").unwrap();
        assert_eq!(s.target.bits(), 5);
        assert_eq!(s.grid.spacing_a, 50.0);
        assert_eq!(s.grid.ceiling_height_hr, 256.0);
        assert_eq!(s.camera.fps, 20.0);
        assert_eq!(s.camera.exposure, 1.0 / 8000.0);
        assert_eq!((s.camera.img_w, s.camera.img_h), (800, 600));
        assert_eq!(s.camera.focal_length_mm, 4.2);
        assert_eq!(s.max_steps(), 14);
    }

    #[test]
    fn overrides_and_rejections() {
        let s = parse_scenario("target = 3\n[grid]\nspacing_a = 100.0\n").unwrap();
        assert_eq!(s.grid.spacing_a, 100.0);

        let e = parse_scenario("target = 3\n[grid]\nnx = 3\nny = 11\n").unwrap_err();
        assert!(matches!(&e, Error::Config { path, .. } if path == "grid"), "{e}");

        let e = parse_scenario("target = 3\n[camera]\nfps = \"fast\"\n").unwrap_err();
        assert!(matches!(&e, Error::Config { path, .. } if path == "camera.fps"), "{e}");

        let e = parse_scenario("target = 3\n[grid]\nspacing = 1.0\n").unwrap_err();
        assert!(e.to_string().contains("spacing"), "{e}");

        assert!(parse_scenario("seed = 1\n").is_err());
        assert!(parse_scenario("target = 40\n").is_err());
        assert!(parse_scenario("target = 31\n[grid]\nnx = 2\nny = 2\n").is_err());
        assert!(parse_scenario("target = 1\n[transmitter]\nchip_rate = 3000.0\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut s = Scenario::new(LocationId::new(7).unwrap());
        s.start = RobotPose::new(12.0, 40.0, 0.0);
        s.navigation.max_steps = Some(9);
        assert_eq!(parse_scenario(&s.to_toml().unwrap()).unwrap(), s);
    }

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(sub_seed(1, 1, 0), sub_seed(1, 1, 1));
        assert_ne!(sub_seed(1, 1, 0), sub_seed(1, 2, 0));
        assert_eq!(sub_seed(9, 3, 4), sub_seed(9, 3, 4));
    }

    #[test]
    fn bursts_are_seeded() {
        let s = Scenario::new(LocationId::new(0).unwrap());
        let pose = RobotPose::new(75.0, 175.0, 0.0);
        let a = Simulator::from_scenario(&s).unwrap().capture_burst(&pose);
        let b = Simulator::from_scenario(&s).unwrap().capture_burst(&pose);
        assert_eq!(a, b);
        let mut s2 = s.clone();
        s2.seed = 1;
        assert_ne!(a, Simulator::from_scenario(&s2).unwrap().capture_burst(&pose));
    }

    #[test]
    fn simulated_burst_decodes_visible_grid() {
        let s = Scenario::new(LocationId::new(0).unwrap());
        let mut sim = Simulator::from_scenario(&s).unwrap();
        let pose = RobotPose::new(75.0, 175.0, 0.0);
        let visible = sim.emitters(&pose).len();
        let d = decode_frames(&sim.capture_burst(&pose), &s.decoder).unwrap();
        assert_eq!(d.leds.len(), visible, "{:?}", d.failures);
        for led in &d.leds {
            let p = led_world_position(&s.grid, led.id).unwrap();
            let proj = project_led(&pose, &s.camera, p, s.grid.led_diameter).unwrap();
            assert!((led.blob.center_px[0] - proj.center_px[0]).abs() < 0.05);
            assert!((led.blob.center_px[1] - proj.center_px[1]).abs() < 0.05);
        }
    }
}
