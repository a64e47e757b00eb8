use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use occ_nav::decoder::{decode_frames, FrameDecode};
use occ_nav::frameio::{read_frame, write_frame, FrameSidecar, TruthEllipse};
use occ_nav::model::{LocationId, RobotPose};
use occ_nav::navigator::{append_jsonl, run_navigation, Outcome};
use occ_nav::ranging::{
    accuracy_pct, direct_distance, geometric_distance, horizontal_distance, Calibration, CalibratedCorrection,
    RadiusCorrectionTable, TABLE1_HEIGHT,
};
use occ_nav::report::{reproduce_sweeps, reproduce_table1, write_csv, write_json, RunReport};
use occ_nav::scenario::{load_scenario, Scenario, Simulator};
use occ_nav::shutter::apply_rotation;
use occ_nav::txcodec::{codeword, encode_manchester, Waveform};

#[derive(Parser)]
#[command(name = "occnav", version, about = "LED-to-camera link, ranging and navigation simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Scenario TOML file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files; tables go to stdout when absent.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Print the chip stream and waveform timing of an ID.
    Encode {
        id: u8,
        #[arg(long, default_value_t = 4000.0)]
        chip_rate: f64,
    },
    /// Decode LEDs from one or more PGM frames of a static scene.
    Decode {
        #[arg(required = true)]
        frames: Vec<PathBuf>,
    },
    /// Render a burst of frames as PGM files with JSON sidecars.
    SimulateFrame {
        /// Robot floor position (cm); defaults to the scenario start.
        #[arg(long, num_args = 2, value_names = ["X", "Y"], allow_negative_numbers = true)]
        pose: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1)]
        frames: usize,
    },
    /// Range blobs from decoder JSON output.
    Range {
        input: PathBuf,
        /// True direct distance (cm), for the accuracy column.
        #[arg(long)]
        actual: Option<f64>,
    },
    /// Run the navigation loop of a scenario.
    Navigate,
    /// MFSK error probability against SNR.
    Ber {
        #[arg(long, value_delimiter = ',', default_values_t = [2u32, 4, 8])]
        orders: Vec<u32>,
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        #[arg(long, default_value_t = 12.0)]
        hi: f64,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
    },
    /// Re-derive the reference ranging table through the simulator.
    ReproduceTable1 {
        /// Alternative reference table CSV.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Accuracy, multi-LED error and error-rate sweeps.
    ReproduceSweeps,
}

fn scenario(g: &Global) -> Result<Scenario> {
    let mut s = match &g.config {
        Some(p) => load_scenario(p).with_context(|| format!("loading {}", p.display()))?,
        None => Scenario::new(LocationId::new(0)?),
    };
    if let Some(seed) = g.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn out_dir(g: &Global) -> Result<PathBuf> {
    let dir = g.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Emit a table to `<out-dir>/<name>.<ext>` or stdout.
fn emit<T: Serialize>(g: &Global, name: &str, rows: &[T]) -> Result<()> {
    match (&g.out_dir, g.format) {
        (Some(_), Format::Csv) => write_csv(&out_dir(g)?.join(format!("{name}.csv")), rows)?,
        (Some(_), Format::Json) => write_json(&out_dir(g)?.join(format!("{name}.json")), rows)?,
        (None, Format::Csv) => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        (None, Format::Json) => {
            let mut out = std::io::stdout();
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ChipRow {
    index: usize,
    start_s: f64,
    end_s: f64,
    level: u8,
}

fn encode(g: &Global, bits: u8, chip_rate: f64) -> Result<()> {
    let id = LocationId::new(bits)?;
    let cw = codeword(id);
    let w = Waveform::new(cw.clone(), chip_rate, 0.0)?;
    eprintln!("id {id} payload {} codeword {} period {:.6} s", encode_manchester(id), cw, w.period());
    let rows: Vec<ChipRow> = cw
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &c)| ChipRow {
            index: i,
            start_s: i as f64 * w.chip_duration(),
            end_s: (i + 1) as f64 * w.chip_duration(),
            level: c as u8,
        })
        .collect();
    emit(g, &format!("codeword_{bits}"), &rows)
}

fn decode(g: &Global, paths: &[PathBuf]) -> Result<FrameDecode> {
    let s = scenario(g)?;
    let frames = paths
        .iter()
        .map(|p| read_frame(p, &s.camera).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    Ok(decode_frames(&frames, &s.decoder)?)
}

fn simulate(g: &Global, pose: Option<Vec<f64>>, frames: usize) -> Result<()> {
    let mut s = scenario(g)?;
    if frames == 0 {
        bail!("--frames must be at least 1");
    }
    s.frames_per_acquisition = frames;
    let pose = match pose.as_deref() {
        Some([x, y]) => RobotPose::new(*x, *y, s.start.heading),
        _ => s.start,
    };
    let dir = out_dir(g)?;
    let mut sim = Simulator::from_scenario(&s)?;
    let ellipses: Vec<TruthEllipse> = sim
        .emitters(&pose)
        .iter()
        .map(|(id, e)| TruthEllipse::new(*id, &e.projection, &s.camera))
        .collect();
    for (k, frame) in sim.capture_burst(&pose).iter().enumerate() {
        let shown = apply_rotation(frame, s.camera.rotation)?;
        let mut side = FrameSidecar::of(&shown);
        side.pose = Some(pose);
        side.ellipses = ellipses.clone();
        let path = write_frame(&dir, &format!("frame_{k:03}"), &shown, &side)?;
        println!("{}", path.display());
    }
    Ok(())
}

#[derive(Deserialize)]
struct BlobGeometry {
    major_r: f64,
    minor_r: f64,
    area_px: f64,
}

#[derive(Serialize)]
struct RangeRow {
    blob: usize,
    id: Option<u8>,
    area_px: f64,
    major_r_px: f64,
    minor_r_px: f64,
    area_distance_cm: f64,
    geometric_distance_cm: f64,
    corrected_distance_cm: Option<f64>,
    floor_distance_cm: f64,
    accuracy_pct: Option<f64>,
}

/// Blob objects in decoder output, a blob list, or a single blob.
fn blob_values(v: &serde_json::Value) -> Vec<serde_json::Value> {
    let unwrap = |x: &serde_json::Value| x.get("blob").cloned().unwrap_or_else(|| x.clone());
    if let Some(leds) = v.get("leds").and_then(|l| l.as_array()) {
        return leds.to_vec();
    }
    match v.as_array() {
        Some(items) => items.to_vec(),
        None => vec![unwrap(v)],
    }
}

fn range(g: &Global, input: &Path, actual: Option<f64>) -> Result<()> {
    let s = scenario(g)?;
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let h = s.grid.ceiling_height_hr;
    let correction = if (h - TABLE1_HEIGHT).abs() <= 1.0 {
        Some(CalibratedCorrection::new(&RadiusCorrectionTable::table1(), &s.camera, s.grid.led_diameter, TABLE1_HEIGHT)?)
    } else {
        None
    };
    let cal = Calibration::table1();
    let mut rows = vec![];
    for (k, item) in blob_values(&value).iter().enumerate() {
        let id = item.get("id").and_then(|v| v.as_u64()).map(|v| v as u8);
        let blob_json = item.get("blob").unwrap_or(item);
        let b: BlobGeometry = serde_json::from_value(blob_json.clone()).with_context(|| format!("blob {k}"))?;
        let geometric = geometric_distance(b.major_r, s.camera.focal_px(), s.grid.led_radius())?;
        let corrected = correction.as_ref().map(|c| c.lookup(b.minor_r)).transpose()?;
        let best = corrected.unwrap_or(geometric);
        rows.push(RangeRow {
            blob: k,
            id,
            area_px: b.area_px,
            major_r_px: b.major_r,
            minor_r_px: b.minor_r,
            area_distance_cm: direct_distance(b.area_px, &cal)?,
            geometric_distance_cm: geometric,
            corrected_distance_cm: corrected,
            floor_distance_cm: horizontal_distance(best.max(h), h)?,
            accuracy_pct: actual.map(|a| accuracy_pct(best, a)),
        });
    }
    emit(g, "range", &rows)
}

fn navigate(g: &Global) -> Result<ExitCode> {
    let s = scenario(g)?;
    let run = run_navigation(&s)?;
    let report = RunReport::new(&s, &run)?;
    let dir = out_dir(g)?;
    write_csv(&dir.join("trajectory.csv"), &report.trajectory())?;
    append_jsonl(&dir.join("visits.jsonl"), &run.log)?;
    write_json(&dir.join("report.json"), &report)?;
    println!(
        "{:?} after {} moves; final error {:.2} cm",
        report.outcome, report.moves, report.final_error_cm
    );
    Ok(match run.outcome {
        Outcome::Arrived => ExitCode::SUCCESS,
        Outcome::NonConvergence => ExitCode::from(2),
    })
}

fn reproduce_t1(g: &Global, table: Option<PathBuf>) -> Result<ExitCode> {
    let table = match table {
        Some(p) => RadiusCorrectionTable::load(&p)?,
        None => RadiusCorrectionTable::table1(),
    };
    let r = reproduce_table1(&table, scenario(g)?.seed)?;
    emit(g, "table1_reproduction", &r.rows)?;
    for f in &r.failures {
        eprintln!("FAIL {f}");
    }
    Ok(if r.passed() { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn sweeps(g: &Global) -> Result<()> {
    let sw = reproduce_sweeps(scenario(g)?.seed)?;
    let dir = out_dir(g)?;
    let ext = if g.format == Format::Json { "json" } else { "csv" };
    let write = |name: &str, f: &dyn Fn(&Path) -> occ_nav::Result<()>| -> Result<()> {
        let path = dir.join(format!("{name}.{ext}"));
        f(&path)?;
        println!("{}", path.display());
        Ok(())
    };
    let json = g.format == Format::Json;
    macro_rules! table {
        ($name:expr, $rows:expr) => {
            write($name, &|p| if json { write_json(p, &$rows) } else { write_csv(p, &$rows) })?
        };
    }
    table!("accuracy_vs_offset", sw.accuracy);
    table!("error_vs_leds", sw.multi_led);
    table!("error_vs_leds_summary", sw.multi_led_summary);
    table!("ber", sw.ber);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let g = &cli.global;
    match cli.command {
        Command::Encode { id, chip_rate } => encode(g, id, chip_rate)?,
        Command::Decode { frames } => {
            let d = decode(g, &frames)?;
            match &g.out_dir {
                Some(_) => write_json(&out_dir(g)?.join("decode.json"), &d)?,
                None => println!("{}", serde_json::to_string_pretty(&d)?),
            }
            if d.leds.is_empty() {
                return Ok(ExitCode::from(4));
            }
        }
        Command::SimulateFrame { pose, frames } => simulate(g, pose, frames)?,
        Command::Range { input, actual } => range(g, &input, actual)?,
        Command::Navigate => return navigate(g),
        Command::Ber { orders, lo, hi, step } => emit(g, "ber", &occ_nav::channel::ber_sweep(&orders, lo, hi, step)?)?,
        Command::ReproduceTable1 { table } => return reproduce_t1(g, table),
        Command::ReproduceSweeps => sweeps(g)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
