use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use vrsverb_core::analysis::{
    correspondence_limit, envelope_limit, estimate_rt60_channels, full_circle, rotation_sweep, simulate_coherence,
    ReceiverPair, SimulationOptions,
};
use vrsverb_core::csv::{format_sig, row};
use vrsverb_core::geometry::{az_el_deg, min_pairwise_angle, sphericity};
use vrsverb_core::ism::reflections_csv;
use vrsverb_core::pipeline::{render_scene, RenderOptions};
use vrsverb_core::scene::{build_vrs_layout, OCTAVE_BANDS};

use crate::config::{Cell, CoherenceConfig, LayoutConfig, Mode, RenderConfig};
use crate::error::{CliError, CliResult};
use crate::output::{ExperimentManifest, OutputDir, MANIFEST_NAME};

/// Values given on the command line that take precedence over the config.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub duration: Option<f64>,
    pub jobs: Option<usize>,
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

fn thread_pool(jobs: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Infeasible(format!("cannot start worker threads: {e}")))
}

#[derive(Serialize)]
struct BandRt60 {
    band_hz: f64,
    target_s: f64,
    estimate_s: Option<f64>,
}

#[derive(Serialize)]
struct RenderSidecar {
    scene: String,
    array: String,
    channels: usize,
    samples: usize,
    sample_rate: f64,
    latency_samples: usize,
    n_reflections: usize,
    n_vrs: usize,
    layout: String,
    vrs_gains: Vec<f64>,
    rt60: Vec<BandRt60>,
    calibration: f64,
    fit_residual_db: f64,
    seed: u64,
}

pub fn render(mut cfg: RenderConfig, overrides: Overrides, out: &Path) -> CliResult<ExperimentManifest> {
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(d) = overrides.duration {
        cfg.duration = Some(d);
    }
    cfg.validate()?;
    let (room, placement) = cfg.scene()?;
    let mut options = RenderOptions::new(cfg.n_vrs, cfg.sample_rate, cfg.array.build()?);
    options.ism_order = cfg.ism_order;
    options.duration = cfg.duration;
    options.seed = cfg.seed;
    let pool = thread_pool(overrides.jobs)?;
    let rendered = render_scene(&room, &placement, &options)?;
    let mrir = &rendered.mrir;
    let estimates: Vec<Option<f64>> = pool.install(|| {
        OCTAVE_BANDS
            .par_iter()
            .map(|&band| {
                (band < cfg.sample_rate / 2.0)
                    .then(|| estimate_rt60_channels(&mrir.channels, cfg.sample_rate, band).ok())
                    .flatten()
            })
            .collect()
    });

    let mut dir = OutputDir::create(out)?;
    dir.write("mrir.wav", &crate::output::wav_bytes(&mrir.channels, cfg.sample_rate)?)?;

    let mut rt = row(["band_hz", "target_s", "estimate_s"].map(String::from));
    let mut bands = Vec::new();
    for (b, &band) in OCTAVE_BANDS.iter().enumerate() {
        let target = rendered.target_rt60[b];
        rt.push_str(&row([format_sig(band), format_sig(target), estimates[b].map_or_else(String::new, format_sig)]));
        bands.push(BandRt60 { band_hz: band, target_s: target, estimate_s: estimates[b] });
    }
    dir.write("rt60.csv", rt.as_bytes())?;
    dir.write("reflections.csv", reflections_csv(&rendered.reflections).as_bytes())?;

    let mut vrs = row(["vrs", "azimuth_deg", "elevation_deg", "gain"].map(String::from));
    for (v, d) in rendered.layout.dirs().iter().enumerate() {
        let (az, el) = az_el_deg(d);
        vrs.push_str(&row([v.to_string(), format_sig(az), format_sig(el), format_sig(rendered.layout.gains[v])]));
    }
    dir.write("vrs.csv", vrs.as_bytes())?;

    let sidecar = RenderSidecar {
        scene: cfg.label(),
        array: mrir.meta.array_label.clone(),
        channels: mrir.channels.len(),
        samples: mrir.len(),
        sample_rate: cfg.sample_rate,
        latency_samples: mrir.meta.latency_samples,
        n_reflections: rendered.reflections.len(),
        n_vrs: cfg.n_vrs,
        layout: rendered.layout.construction.clone(),
        vrs_gains: rendered.layout.gains.clone(),
        rt60: bands,
        calibration: rendered.calibration,
        fit_residual_db: rendered.fit_residual_db,
        seed: cfg.seed,
    };
    dir.write_json("mrir.json", &sidecar)?;
    dir.finish("render", to_value(&cfg), cfg.seed)
}

enum CellResult {
    Static(vrsverb_core::analysis::CoherenceCurve),
    Sweep(vrsverb_core::analysis::RotationEnvelope),
}

fn run_cell(cell: &Cell, cfg: &CoherenceConfig) -> CliResult<(String, f64)> {
    let options = SimulationOptions {
        sample_rate: cfg.sample_rate,
        radius: cfg.radius,
        speed_of_sound: vrsverb_core::scene::DEFAULT_SPEED_OF_SOUND,
        method: cfg.method,
    };
    let pair = ReceiverPair::interaural(cell.spacing, 0.0);
    let result = match cell.mode {
        Mode::Static => {
            CellResult::Static(simulate_coherence(cell.arrangement, cell.n_vrs, &pair, cfg.duration, cfg.seed, &options)?)
        }
        Mode::Sweep => CellResult::Sweep(rotation_sweep(
            cell.arrangement,
            cell.n_vrs,
            &pair,
            &full_circle(),
            cfg.duration,
            cfg.seed,
            &options,
        )?),
    };
    Ok(match result {
        CellResult::Static(c) => (c.to_csv(), correspondence_limit(&c, cfg.tolerance)),
        CellResult::Sweep(e) => (e.to_csv(), envelope_limit(&e, cfg.tolerance)),
    })
}

pub fn coherence(mut cfg: CoherenceConfig, overrides: Overrides, out: &Path) -> CliResult<ExperimentManifest> {
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(d) = overrides.duration {
        cfg.duration = d;
    }
    cfg.validate()?;
    let cells = cfg.cells();
    let pool = thread_pool(overrides.jobs)?;
    let results: Vec<(String, f64)> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let r = run_cell(cell, &cfg);
                eprintln!("finished {}", cell.file_name());
                r
            })
            .collect::<CliResult<_>>()
    })?;

    let mut dir = OutputDir::create(out)?;
    let mut summary =
        row(["arrangement", "n_vrs", "spacing_m", "mode", "duration_s", "seed", "limit_hz", "file"].map(String::from));
    for (cell, (csv, limit)) in cells.iter().zip(&results) {
        let name = cell.file_name();
        dir.write(&name, csv.as_bytes())?;
        let mode = match cell.mode {
            Mode::Static => "static",
            Mode::Sweep => "sweep",
        };
        let n = if cell.arrangement == vrsverb_core::analysis::Arrangement::Fib { 87 } else { cell.n_vrs };
        summary.push_str(&row([
            cell.arrangement.label().to_string(),
            n.to_string(),
            format_sig(cell.spacing),
            mode.to_string(),
            format_sig(cfg.duration),
            cfg.seed.to_string(),
            format_sig(*limit),
            name,
        ]));
    }
    dir.write("summary.csv", summary.as_bytes())?;
    dir.finish("coherence", to_value(&cfg), cfg.seed)
}

pub fn layout(cfg: LayoutConfig, out: &Path) -> CliResult<ExperimentManifest> {
    cfg.validate()?;
    let layout = build_vrs_layout(cfg.n_vrs)?;
    let dirs = layout.dirs();
    let sph = sphericity(&dirs)?;
    let n = cfg.n_vrs;

    let mut dir = OutputDir::create(out)?;
    let mut csv = row(["vrs", "azimuth_deg", "elevation_deg", "x", "y", "z", "fine_channels"].map(String::from));
    for (v, d) in dirs.iter().enumerate() {
        let (az, el) = az_el_deg(d);
        let members: Vec<String> = layout.members(v).iter().map(usize::to_string).collect();
        csv.push_str(&row([
            v.to_string(),
            format_sig(az),
            format_sig(el),
            format_sig(d.x),
            format_sig(d.y),
            format_sig(d.z),
            members.join(" "),
        ]));
    }
    dir.write(&format!("layout_{n}.csv"), csv.as_bytes())?;

    let mut assign = row(["fine_channel", "vrs"].map(String::from));
    for (f, v) in layout.assignment.iter().enumerate() {
        assign.push_str(&row([f.to_string(), v.to_string()]));
    }
    dir.write(&format!("assignment_{n}.csv"), assign.as_bytes())?;

    let mut summary = row(["n_vrs", "sphericity", "min_angle_deg", "construction"].map(String::from));
    summary.push_str(&row([
        n.to_string(),
        format_sig(sph),
        format_sig(min_pairwise_angle(&dirs).to_degrees()),
        format!("\"{}\"", layout.construction),
    ]));
    dir.write(&format!("layout_{n}_summary.csv"), summary.as_bytes())?;
    dir.finish("layout", to_value(&cfg), 0)
}

/// Repeats the run recorded in `manifest_path` into `out` and checks that
/// every CSV output is byte-identical. Other files that differ are
/// reported but do not fail the check.
pub fn rerun(manifest_path: &Path, jobs: Option<usize>, out: &Path) -> CliResult<ExperimentManifest> {
    let path = if manifest_path.is_dir() { manifest_path.join(MANIFEST_NAME) } else { manifest_path.to_path_buf() };
    let old = ExperimentManifest::load(&path)?;
    let text = old.config.to_string();
    let overrides = Overrides { jobs, ..Default::default() };
    let new = match old.command.as_str() {
        "render" => render(crate::config::parse(&text)?, overrides, out)?,
        "coherence" => coherence(crate::config::parse(&text)?, overrides, out)?,
        "layout" => layout(crate::config::parse(&text)?, out)?,
        other => return Err(CliError::Config(format!("manifest names unknown command {other:?}"))),
    };
    let mut failures = Vec::new();
    for file in &old.outputs {
        let now = new.outputs.iter().find(|f| f.path == file.path);
        match now {
            Some(f) if f.sha256 == file.sha256 => eprintln!("identical {}", file.path),
            _ if file.path.ends_with(".csv") => failures.push(file.path.clone()),
            _ => eprintln!("differs   {} (not a CSV; float environment may differ)", file.path),
        }
    }
    if failures.is_empty() {
        Ok(new)
    } else {
        Err(CliError::Mismatch(failures.join(", ")))
    }
}
