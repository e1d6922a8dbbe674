use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use serde::Serialize;

use sbd_core::config::PipelineConfig;
use sbd_core::energy::GisRaster;
use sbd_core::eval::{stability_clusters, stability_report, threshold_sweep};
use sbd_core::geo::GridSpec;
use sbd_core::io::{self, sha256_hex};
use sbd_core::pipeline::{self, PipelineError};
use sbd_core::sbd::{run, RunOutcome, Termination};
use sbd_core::simulator::LayoutParams;
use sbd_core::{GeoPoint, NoiseProfile, Schedule};

use crate::{Cli, Command};

pub enum Status {
    Done,
    NoImprovement,
}

pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) => Failure::Usage(e.into()),
            other => Failure::Data(other.into()),
        }
    }
}

impl From<io::FormatError> for Failure {
    fn from(e: io::FormatError) -> Self {
        Failure::Data(e.into())
    }
}

type CmdResult = Result<Status, Failure>;

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow!("{msg}"))
}

pub fn dispatch(cli: Cli) -> CmdResult {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| Failure::Usage(e.into()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Simulate { out, noise_level } => {
            if let Some(level) = noise_level {
                cfg.simulation.noise_level = level;
            }
            simulate(&cfg, &out.out)
        }
        Command::RasterizeGis { geojson, out } => {
            let src = geojson
                .or_else(|| cfg.paths.gis.clone())
                .ok_or_else(|| usage("no GeoJSON given (use --geojson or paths.gis)"))?;
            rasterize(&cfg, &src, &out.out)
        }
        Command::Energy { scenario, gis, out } => {
            energy(&cfg, &scenario, gis.or_else(|| cfg.paths.gis.clone()).as_deref(), &out.out)
        }
        Command::Run { energy, schedule, out } => {
            apply_schedule(&mut cfg, schedule);
            run_once(&cfg, &energy, &out.out)
        }
        Command::Eval {
            predictions,
            truth,
            noise_level,
            out,
        } => evaluate(&cfg, &predictions, &truth, noise_level, &out.out),
        Command::Stability {
            truth,
            energy,
            run_dirs,
            runs,
            schedule,
            noise_level,
            out,
        } => {
            apply_schedule(&mut cfg, schedule);
            let source = match energy {
                Some(e) => RunSource::Execute { energy: e, runs },
                None if run_dirs.len() >= 2 => RunSource::Existing(run_dirs),
                None => return Err(usage("stability needs --energy or at least two --run-dirs")),
            };
            stability(&cfg, &truth, source, noise_level, &out.out)
        }
    }
}

fn apply_schedule(cfg: &mut PipelineConfig, schedule: Option<Schedule>) {
    if let Some(s) = schedule {
        cfg.sbd.schedule = s;
    }
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(Failure::Data)
}

fn file_sha(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Data)?;
    Ok(sha256_hex(&bytes))
}

/// Records the command, effective config and input/output checksums of a directory.
#[derive(Serialize)]
struct Provenance<'a> {
    command: &'a str,
    config_hash: String,
    seed: u64,
    config: &'a PipelineConfig,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn write_provenance(
    dir: &Path,
    command: &str,
    cfg: &PipelineConfig,
    inputs: &[&Path],
    outputs: &[&str],
) -> Result<(), Failure> {
    let mut ins = BTreeMap::new();
    for p in inputs {
        ins.insert(p.display().to_string(), file_sha(p)?);
    }
    let mut outs = BTreeMap::new();
    for name in outputs {
        outs.insert((*name).to_string(), file_sha(&dir.join(name))?);
    }
    let prov = Provenance {
        command,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        config: cfg,
        inputs: ins,
        outputs: outs,
    };
    io::write_json(&dir.join("provenance.json"), &prov)?;
    Ok(())
}

#[derive(Serialize)]
struct ScenarioManifest {
    config_hash: String,
    seed: u64,
    grid: GridSpec,
    noise: NoiseProfile,
    confidence_rate: f64,
    layout: LayoutParams,
    n_objects: usize,
    n_cameras: usize,
    n_detections: usize,
    n_contaminant_detections: usize,
    n_phantoms: usize,
    n_buildings: usize,
}

fn simulate(cfg: &PipelineConfig, out: &Path) -> CmdResult {
    prepare_out(out)?;
    let sc = pipeline::simulate_scenario(cfg)?;
    io::write_objects(&out.join("objects.csv"), &sc.layout.objects)?;
    io::write_cameras(&out.join("cameras.csv"), &sc.layout.cameras)?;
    io::write_detections(&out.join("detections.csv"), &sc.detections)?;
    let buildings = io::polygons_to_geojson(&sc.buildings, &sc.grid);
    io::write_json(&out.join("buildings.geojson"), &buildings)?;
    let manifest = ScenarioManifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        grid: sc.grid,
        noise: sc.noise,
        confidence_rate: cfg.simulation.confidence_rate,
        layout: cfg.simulation.layout,
        n_objects: sc.layout.objects.len(),
        n_cameras: sc.layout.cameras.len(),
        n_detections: sc.detections.len(),
        n_contaminant_detections: sc.contaminant_count(),
        n_phantoms: sc.phantoms.len(),
        n_buildings: sc.buildings.len(),
    };
    io::write_json(&out.join("manifest.json"), &manifest)?;
    log::info!(
        "simulated {} objects, {} cameras, {} detections ({} contaminant)",
        manifest.n_objects,
        manifest.n_cameras,
        manifest.n_detections,
        manifest.n_contaminant_detections
    );
    write_provenance(
        out,
        "simulate",
        cfg,
        &[],
        &["objects.csv", "cameras.csv", "detections.csv", "buildings.geojson", "manifest.json"],
    )?;
    Ok(Status::Done)
}

fn load_geojson(path: &Path, grid: &GridSpec) -> Result<GisRaster, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Data)?;
    io::rasterize_geojson(&text, grid).map_err(|e| data(anyhow!("{}: {e}", path.display())))
}

fn rasterize(cfg: &PipelineConfig, src: &Path, out: &Path) -> CmdResult {
    let grid = cfg.grid_spec().map_err(|e| Failure::Usage(e.into()))?;
    prepare_out(out)?;
    let gis = load_geojson(src, &grid)?;
    io::save_gis(out, "gis", &gis, Some(cfg.hash()))?;
    log::info!("rasterized {} occupied pixels", gis.occupied_count());
    write_provenance(out, "rasterize-gis", cfg, &[src], &["gis.json", "gis.f32"])?;
    Ok(Status::Done)
}

fn is_geojson(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("geojson") | Some("GeoJSON")
    )
}

fn energy(cfg: &PipelineConfig, scenario: &Path, gis_path: Option<&Path>, out: &Path) -> CmdResult {
    let grid = cfg.grid_spec().map_err(|e| Failure::Usage(e.into()))?;
    let det_path = scenario.join("detections.csv");
    let cam_path = scenario.join("cameras.csv");
    let detections = io::read_detections(&det_path)?;
    let cameras = io::read_cameras(&cam_path)?;
    let gis = match gis_path {
        None => GisRaster::empty(grid),
        Some(p) if is_geojson(p) => load_geojson(p, &grid)?,
        Some(p) => {
            let gis = io::load_gis(p)?;
            if gis.grid() != &grid {
                return Err(data(anyhow!(
                    "{}: GIS grid {:?} differs from the configured grid {:?}",
                    p.display(),
                    gis.grid(),
                    grid
                )));
            }
            gis
        }
    };
    prepare_out(out)?;
    let (map, n) = pipeline::energy_from_detections(&detections, &cameras, &gis, &cfg.weights)?;
    log::info!("{} detections gave {n} ray intersections", detections.len());
    io::save_energy_map(out, "energy", &map, &cfg.weights, Some(n), Some(cfg.hash()))?;
    let mut inputs: Vec<&Path> = vec![&det_path, &cam_path];
    if let Some(p) = gis_path {
        inputs.push(p);
    }
    write_provenance(out, "energy", cfg, &inputs, &["energy.json", "energy.f32"])?;
    Ok(Status::Done)
}

fn load_energy(cfg: &PipelineConfig, path: &Path) -> Result<sbd_core::EnergyMap, Failure> {
    let (map, sidecar) = io::load_energy_map(path)?;
    if let Some(w) = sidecar.weights {
        if w.alpha != cfg.weights.alpha {
            log::warn!(
                "energy map built with alpha = {}, optimizing with alpha = {}",
                w.alpha,
                cfg.weights.alpha
            );
        }
    }
    Ok(map)
}

#[derive(Serialize)]
struct RunSummary {
    seed: u64,
    iterations: usize,
    termination: Termination,
    no_improvement: bool,
    best_energy: f64,
    objects: usize,
}

/// Writes a run's outputs into `dir` and returns the summary.
fn write_run(dir: &Path, outcome: &RunOutcome, grid: &GridSpec) -> Result<RunSummary, Failure> {
    if !outcome.trace.best_energy_is_monotone() {
        return Err(data(anyhow!("run trace has an increasing H_min")));
    }
    prepare_out(dir)?;
    io::write_predictions(&dir.join("detections_out.csv"), &io::prediction_rows(&outcome.best, grid))?;
    io::write_trace(&dir.join("trace.csv"), &outcome.trace)?;
    let summary = RunSummary {
        seed: outcome.trace.seed,
        iterations: outcome.trace.iterations(),
        termination: outcome.trace.termination,
        no_improvement: outcome.trace.no_improvement,
        best_energy: outcome.best_energy,
        objects: outcome.best.len(),
    };
    io::write_json(&dir.join("run.json"), &summary)?;
    Ok(summary)
}

const RUN_OUTPUTS: [&str; 3] = ["detections_out.csv", "trace.csv", "run.json"];

fn run_once(cfg: &PipelineConfig, energy_path: &Path, out: &Path) -> CmdResult {
    let map = load_energy(cfg, energy_path)?;
    let started = Instant::now();
    let outcome = run(&map, cfg.weights.alpha, &cfg.sbd_params(0)).map_err(|e| Failure::Usage(e.into()))?;
    let summary = write_run(out, &outcome, map.grid())?;
    log::info!(
        "{} iterations in {:.1?}: {} objects, H_min = {:.4}",
        summary.iterations,
        started.elapsed(),
        summary.objects,
        summary.best_energy
    );
    let raw = energy_path.with_extension("f32");
    write_provenance(out, "run", cfg, &[energy_path, &raw], &RUN_OUTPUTS)?;
    Ok(if summary.no_improvement {
        Status::NoImprovement
    } else {
        Status::Done
    })
}

fn read_prediction_points(path: &Path) -> Result<Vec<GeoPoint>, Failure> {
    Ok(io::read_predictions(path)?
        .into_iter()
        .map(|r| GeoPoint { lat: r.lat, lon: r.lon })
        .collect())
}

fn read_truth_points(path: &Path) -> Result<Vec<GeoPoint>, Failure> {
    Ok(io::read_objects(path)?.into_iter().map(|o| o.position).collect())
}

#[derive(Serialize)]
struct MetricRow {
    noise_level: u8,
    tau_m: f64,
    precision: f64,
    recall: f64,
    f1: f64,
}

#[derive(Serialize)]
struct CurveRow {
    noise_level: u8,
    tau_m: f64,
    metric: &'static str,
    value: f64,
}

fn evaluate(
    cfg: &PipelineConfig,
    predictions: &Path,
    truth: &Path,
    noise_level: Option<u8>,
    out: &Path,
) -> CmdResult {
    let level = noise_level.unwrap_or(cfg.simulation.noise_level);
    let pred = read_prediction_points(predictions)?;
    let gt = read_truth_points(truth)?;
    let sweep = threshold_sweep(&pred, &gt, &cfg.eval.thresholds_m).map_err(data)?;
    prepare_out(out)?;
    let metrics: Vec<MetricRow> = sweep
        .iter()
        .map(|r| MetricRow {
            noise_level: level,
            tau_m: r.tau_m,
            precision: r.scores.precision,
            recall: r.scores.recall,
            f1: r.scores.f1,
        })
        .collect();
    let curves: Vec<CurveRow> = sweep
        .iter()
        .flat_map(|r| {
            [
                ("precision", r.scores.precision),
                ("recall", r.scores.recall),
                ("f1", r.scores.f1),
            ]
            .map(|(metric, value)| CurveRow {
                noise_level: level,
                tau_m: r.tau_m,
                metric,
                value,
            })
        })
        .collect();
    io::write_rows(&out.join("metrics.csv"), &metrics)?;
    io::write_rows(&out.join("curves.csv"), &curves)?;
    for r in &metrics {
        log::info!("tau {} m: P {:.3} R {:.3} F1 {:.3}", r.tau_m, r.precision, r.recall, r.f1);
    }
    write_provenance(out, "eval", cfg, &[predictions, truth], &["metrics.csv", "curves.csv"])?;
    Ok(Status::Done)
}

enum RunSource {
    Execute { energy: PathBuf, runs: u64 },
    Existing(Vec<PathBuf>),
}

fn stability(
    cfg: &PipelineConfig,
    truth: &Path,
    source: RunSource,
    noise_level: Option<u8>,
    out: &Path,
) -> CmdResult {
    let level = noise_level.unwrap_or(cfg.simulation.noise_level);
    let gt = read_truth_points(truth)?;
    prepare_out(out)?;
    let mut inputs: Vec<PathBuf> = vec![truth.to_path_buf()];
    let mut outputs: Vec<String> = Vec::new();
    let mut runs = Vec::new();
    match source {
        RunSource::Execute { energy, runs: n } => {
            if n < 2 {
                return Err(usage("--runs must be at least 2"));
            }
            let map = load_energy(cfg, &energy)?;
            let outcomes = pipeline::run_campaign(&map, cfg, n)?;
            for (k, o) in outcomes.iter().enumerate() {
                let name = format!("run_{k:03}");
                let s = write_run(&out.join(&name), o, map.grid())?;
                if s.no_improvement {
                    log::warn!("{name} never improved on the empty configuration");
                }
                runs.push(pipeline::configuration_centres(&o.best, map.grid()));
                outputs.extend(RUN_OUTPUTS.iter().map(|f| format!("{name}/{f}")));
            }
            inputs.push(energy.clone());
            inputs.push(energy.with_extension("f32"));
        }
        RunSource::Existing(dirs) => {
            for d in dirs {
                let p = d.join("detections_out.csv");
                runs.push(read_prediction_points(&p)?);
                inputs.push(p);
            }
        }
    }
    let clusters = stability_clusters(&runs, &gt, cfg.eval.cluster_radius_m).map_err(data)?;
    log::info!(
        "{} runs, {} pooled within-cluster pairs",
        runs.len(),
        clusters.distances.len()
    );
    let report = stability_report(level, &runs, &gt, cfg.eval.cluster_radius_m).map_err(data)?;
    io::write_rows(&out.join("stability.csv"), &[report])?;
    outputs.push("stability.csv".into());
    let ins: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let outs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    write_provenance(out, "stability", cfg, &ins, &outs)?;
    Ok(Status::Done)
}
