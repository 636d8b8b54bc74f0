//! `deform` and `edit`: one optimization run with its artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use jacdeform::field::save_field;
use jacdeform::guidance_client::{HttpGuidance, RetryPolicy, GUIDANCE_URL_ENV};
use jacdeform::mesh::{load_face_mask, load_landmarks, load_obj, load_region_labels};
use jacdeform::objectives::{Guidance, RegionScaleGuidance, TargetLandmarkGuidance, TargetSilhouetteGuidance};
use jacdeform::optimizer::{camera_at, save_loss_csv, OptimConfig, Optimizer, RunState};
use jacdeform::raster::{render_diagnostic, save_png, Camera, DiagnosticMode};
use jacdeform::{TriMesh, Vec3};
use log::info;

use crate::args::{EditArgs, GuidanceArgs, GuidanceTuning, RunArgs};
use crate::config::resolve_config;
use crate::error::{CliError, CliResult};
use crate::manifest::{self, FileRecord, FinalLosses, RunManifest, MANIFEST_NAME};

pub const MESH_NAME: &str = "deformed.obj";
pub const FIELD_NAME: &str = "field.jfld";
pub const RUN_NAME: &str = "run.jrun";
pub const LOSS_NAME: &str = "loss.csv";
pub const RENDER_DIR: &str = "renders";

pub fn run(args: &RunArgs, tuning: &GuidanceTuning, edit: Option<&EditArgs>, argv: &[String]) -> CliResult<()> {
    let started = Instant::now();
    let mut inputs: Vec<(&str, PathBuf)> = vec![("mesh", args.mesh.clone())];

    let mut mesh = load_obj(&args.mesh)?;
    if let Some(path) = &args.regions {
        mesh = mesh.with_region_labels(load_region_labels(path)?)?;
        inputs.push(("regions", path.clone()));
    }
    let mut landmarks = mesh.landmarks().to_vec();
    if let Some(path) = &args.landmarks {
        landmarks.extend(load_landmarks(path)?);
        inputs.push(("landmarks", path.clone()));
    }
    let mut config = resolve_config(args.config.as_deref(), &args.overrides, args.iterations, args.seed)?;
    if let Some(path) = &args.config {
        inputs.push(("config", path.clone()));
    }

    if let Some(edit) = edit {
        let (mask, seeds) = edit_mask(&mesh, edit)?;
        if let Some(path) = &edit.mask {
            inputs.push(("mask", path.clone()));
        }
        if let Some(rings) = edit.anchor_rings {
            let near = mesh.k_ring(&seeds, rings);
            landmarks.extend((0..mesh.vertex_count()).filter(|&v| !near[v]));
        }
        config.face_mask = Some(mask);
    }
    landmarks.sort_unstable();
    landmarks.dedup();
    let mesh = mesh.with_landmarks(landmarks)?;

    let opt = Optimizer::new(&mesh, config.clone())?;
    let (mut guidance, endpoint_env) = build_guidance(&args.guidance, tuning, &mesh, &opt, &mut inputs)?;

    let mut state = match &args.resume {
        Some(path) => {
            inputs.push(("resume", path.clone()));
            jacdeform::optimizer::load_run(path, &config)?
        }
        None => opt.initial_state(),
    };
    // hash inputs before anything in the output directory is overwritten
    let input_records = inputs
        .iter()
        .map(|(role, path)| manifest::record(role, path))
        .collect::<CliResult<Vec<FileRecord>>>()?;

    let out = &args.out;
    let renders = out.join(RENDER_DIR);
    fs::create_dir_all(&renders).map_err(|e| CliError::io(format!("creating {}", renders.display()), e))?;
    let camera = diagnostic_camera(&opt)?;

    info!(
        "{} faces, {} landmarks, guidance {}, iterations {} -> {}",
        mesh.face_count(),
        mesh.landmarks().len(),
        guidance.name(),
        state.iteration,
        config.iterations
    );
    let interval = config.diagnostic_interval;
    let mut last_render = None;
    opt.run(&mut state, guidance.as_mut(), Some(&out.join(RUN_NAME)), |s| {
        if interval > 0 && s.iteration % interval == 0 {
            write_diagnostics(&opt, s, &camera, &renders)?;
            last_render = Some(s.iteration);
        }
        if let Some(r) = s.history.last() {
            log::debug!("step {}: total {:e}", r.iteration, r.total);
        }
        Ok(())
    })?;
    if last_render != Some(state.iteration) {
        write_diagnostics(&opt, &state, &camera, &renders)?;
    }

    let deformed = opt.deformed_mesh(&state)?;
    jacdeform::mesh::save_obj(&deformed, out.join(MESH_NAME))?;
    save_field(out.join(FIELD_NAME), &state.field)?;
    save_loss_csv(out.join(LOSS_NAME), &state.history)?;

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: argv.to_vec(),
        cwd: std::env::current_dir()
            .map_err(|e| CliError::io("reading the working directory", e))?
            .display()
            .to_string(),
        config: config.to_kv_string()?,
        config_hash: manifest::hex(&config.hash()),
        guidance_endpoint_env: endpoint_env,
        inputs: input_records,
        outputs: manifest::output_records(out)?,
        elapsed_seconds: started.elapsed().as_secs_f64(),
        final_losses: state.history.last().map(FinalLosses::from),
    };
    manifest.save(&out.join(MANIFEST_NAME))?;
    let summary = serde_json::json!({
        "out": out.display().to_string(),
        "iterations": state.iteration,
        "final_losses": manifest.final_losses,
        "elapsed_seconds": manifest.elapsed_seconds,
    });
    println!("{summary}");
    Ok(())
}

/// Face mask of an edit and the vertices the anchor rings grow from.
fn edit_mask(mesh: &TriMesh, args: &EditArgs) -> CliResult<(Vec<bool>, Vec<usize>)> {
    let (mask, seeds) = match (args.region, &args.mask) {
        (Some(label), _) => {
            if mesh.region_labels().is_none() {
                return Err(CliError::usage("--region needs per-vertex labels from --regions"));
            }
            let seeds = mesh.region_vertices(label);
            if seeds.is_empty() {
                return Err(CliError::usage(format!("unknown region id {label}")));
            }
            let mask = mesh.region_touching_face_mask(label).expect("labels present");
            (mask, seeds)
        }
        (None, Some(path)) => {
            let mask = load_face_mask(path)?;
            if mask.len() != mesh.face_count() {
                return Err(CliError::usage(format!(
                    "mask {} has {} entries for {} faces",
                    path.display(),
                    mask.len(),
                    mesh.face_count()
                )));
            }
            let mut seeds: Vec<usize> = mesh
                .faces()
                .iter()
                .zip(&mask)
                .filter(|(_, &m)| m)
                .flat_map(|(f, _)| *f)
                .collect();
            seeds.sort_unstable();
            seeds.dedup();
            (mask, seeds)
        }
        (None, None) => return Err(CliError::usage("edit needs --region or --mask")),
    };
    if !mask.iter().any(|&m| m) {
        return Err(CliError::usage("edit region covers no faces"));
    }
    Ok((mask, seeds))
}

type GuidanceChoice = (Box<dyn Guidance>, Option<String>);

fn build_guidance(
    args: &GuidanceArgs,
    tuning: &GuidanceTuning,
    mesh: &TriMesh,
    opt: &Optimizer<'_>,
    inputs: &mut Vec<(&str, PathBuf)>,
) -> CliResult<GuidanceChoice> {
    let config = opt.config();
    if let Some(path) = &args.guidance_landmarks {
        inputs.push(("guidance-landmarks", path.clone()));
        let targets = load_targets(path)?;
        return Ok((Box::new(TargetLandmarkGuidance::new(targets, mesh)?), None));
    }
    if let Some(path) = &args.guidance_silhouette {
        inputs.push(("guidance-silhouette", path.clone()));
        let target = load_obj(path)?;
        let cameras = silhouette_cameras(config, opt.system().source_centroid(), tuning.silhouette_views)?;
        let guidance = TargetSilhouetteGuidance::from_mesh(&target, cameras, config.sigma)?;
        return Ok((Box::new(guidance), None));
    }
    if let Some(label) = args.guidance_region {
        if mesh.region_labels().is_none() {
            return Err(CliError::usage("--guidance-region needs per-vertex labels from --regions"));
        }
        if mesh.region_vertices(label).is_empty() {
            return Err(CliError::usage(format!("unknown region id {label}")));
        }
        return Ok((Box::new(RegionScaleGuidance::new(mesh, label, tuning.region_scale)?), None));
    }
    let (url, from_env) = match &args.guidance_url {
        Some(url) => (url.clone(), false),
        None => match std::env::var(GUIDANCE_URL_ENV) {
            Ok(url) if !url.is_empty() => (url, true),
            _ => {
                return Err(CliError::usage(format!(
                    "one of --guidance-landmarks, --guidance-silhouette, --guidance-region or --guidance-url \
                     is required (or set {GUIDANCE_URL_ENV})"
                )))
            }
        },
    };
    if !(tuning.guidance_timeout.is_finite() && tuning.guidance_timeout > 0.0) {
        return Err(CliError::usage("--guidance-timeout must be positive"));
    }
    let policy = RetryPolicy {
        timeout: Duration::from_secs_f64(tuning.guidance_timeout),
        retries: tuning.guidance_retries,
        ..Default::default()
    };
    let env = from_env.then(|| url.clone());
    Ok((Box::new(HttpGuidance::new(url, config.prompt.clone(), policy)), env))
}

/// Lines of `vertex x y z`; blank lines and `#` comments are skipped.
pub fn load_targets(path: &Path) -> CliResult<Vec<(usize, Vec3)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let mut targets = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || CliError::usage(format!("{}:{}: expected 'vertex x y z'", path.display(), n + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(bad());
        }
        let vertex: usize = fields[0].parse().map_err(|_| bad())?;
        let mut p = [0.0; 3];
        for (slot, text) in p.iter_mut().zip(&fields[1..]) {
            *slot = text.parse().map_err(|_| bad())?;
        }
        targets.push((vertex, Vec3::new(p[0], p[1], p[2])));
    }
    Ok(targets)
}

/// `views` cameras at evenly spaced azimuths, middle of the configured
/// elevation and distance ranges.
pub fn silhouette_cameras(config: &OptimConfig, look_at: Vec3, views: usize) -> CliResult<Vec<Camera>> {
    if views == 0 {
        return Err(CliError::usage("--silhouette-views must be at least 1"));
    }
    let c = &config.cameras;
    let el = 0.5 * (c.elevation.0 + c.elevation.1);
    let dist = 0.5 * (c.distance.0 + c.distance.1);
    (0..views)
        .map(|i| {
            let az = 360.0 * i as f64 / views as f64;
            camera_at(
                look_at,
                az.to_radians(),
                el.to_radians(),
                dist,
                c.fov_deg.to_radians(),
                config.width,
                config.height,
            )
            .map_err(CliError::from)
        })
        .collect()
}

fn diagnostic_camera(opt: &Optimizer<'_>) -> CliResult<Camera> {
    let c = opt.config();
    let dist = 0.5 * (c.cameras.distance.0 + c.cameras.distance.1);
    Ok(camera_at(
        opt.system().source_centroid(),
        0.0,
        0.0,
        dist,
        c.cameras.fov_deg.to_radians(),
        c.width,
        c.height,
    )?)
}

fn write_diagnostics(opt: &Optimizer<'_>, state: &RunState, camera: &Camera, dir: &Path) -> jacdeform::Result<()> {
    let vertices = opt.vertices(state)?;
    let faces = opt.source().faces();
    let normals = render_diagnostic(&vertices, faces, camera, DiagnosticMode::Normals, None)?;
    save_png(&normals, dir.join(format!("normals_{:05}.png", state.iteration)))?;
    let weights = render_diagnostic(
        &vertices,
        faces,
        camera,
        DiagnosticMode::WeightColormap,
        Some(&state.field.weights),
    )?;
    save_png(&weights, dir.join(format!("weights_{:05}.png", state.iteration)))
}
