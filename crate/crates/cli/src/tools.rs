//! Commands that work on a mesh and fields without optimizing.

use std::fs;
use std::path::Path;

use jacdeform::field::{interpolate, load_field, Pinning};
use jacdeform::mesh::{load_obj, save_obj};
use jacdeform::metrics::{quality_report, IntersectionMode};
use jacdeform::optimizer::camera_at;
use jacdeform::raster::{render_diagnostic, render_opacity, save_opacity_f32, save_opacity_pgm, save_png, DiagnosticMode};
use jacdeform::{JacobianField, PoissonSystem, TriMesh, Vec3};

use crate::args::{MetricsArgs, MorphArgs, RenderArgs, RenderMode};
use crate::error::{CliError, CliResult};

fn load_matching_field(path: &Path, mesh: &TriMesh) -> CliResult<JacobianField> {
    let field = load_field(path)?;
    if field.len() != mesh.face_count() {
        return Err(CliError::MeshInput(format!(
            "field {} has {} faces but the mesh has {}",
            path.display(),
            field.len(),
            mesh.face_count()
        )));
    }
    Ok(field)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

pub fn cmd_morph(args: &MorphArgs) -> CliResult<()> {
    if args.steps < 2 {
        return Err(CliError::usage("--steps must be at least 2"));
    }
    let mesh = load_obj(&args.mesh)?;
    let a = load_matching_field(&args.field_a, &mesh)?;
    let b = load_matching_field(&args.field_b, &mesh)?;
    let system = PoissonSystem::assemble(&mesh, Pinning::default())?;
    create_dir(&args.out)?;
    let mut frames = Vec::with_capacity(args.steps);
    for i in 0..args.steps {
        let t = i as f64 / (args.steps - 1) as f64;
        let vertices = system.forward_solve(&interpolate(&a, &b, t)?)?;
        let path = args.out.join(format!("frame_{i:03}.obj"));
        save_obj(&mesh.with_vertices(vertices)?, &path)?;
        frames.push(path.display().to_string());
    }
    println!("{}", serde_json::json!({ "frames": frames }));
    Ok(())
}

pub fn cmd_metrics(args: &MetricsArgs) -> CliResult<()> {
    let mesh = load_obj(&args.mesh)?;
    let mode = if args.brute {
        IntersectionMode::Brute
    } else {
        IntersectionMode::Bvh
    };
    let report = quality_report(&mesh, mode);
    if let Some(path) = &args.out {
        fs::write(path, report.to_json() + "\n").map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    }
    println!("{}", serde_json::to_string(&report).expect("report is plain data"));
    Ok(())
}

pub fn cmd_render(args: &RenderArgs) -> CliResult<()> {
    if args.mode == RenderMode::Weights && args.field.is_none() {
        return Err(CliError::usage("--mode weights needs --field"));
    }
    let mesh = load_obj(&args.mesh)?;
    let (vertices, field): (Vec<Vec3>, Option<JacobianField>) = match &args.field {
        Some(path) => {
            let field = load_matching_field(path, &mesh)?;
            let system = PoissonSystem::assemble(&mesh, Pinning::default())?;
            (system.forward_solve(&field)?, Some(field))
        }
        None => (mesh.vertices().to_vec(), None),
    };
    let c = &args.camera;
    let camera = camera_at(
        mesh.centroid(),
        c.azimuth.to_radians(),
        c.elevation.to_radians(),
        c.distance,
        c.fov.to_radians(),
        c.width,
        c.height,
    )?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let mode = match args.mode {
        RenderMode::Opacity => {
            let map = render_opacity(&vertices, mesh.faces(), &camera, args.sigma)?;
            if args.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
                save_opacity_pgm(&map, &args.out)?;
            } else {
                save_opacity_f32(&map, &args.out)?;
            }
            let summary = serde_json::json!({
                "out": args.out.display().to_string(),
                "width": map.width,
                "height": map.height,
                "mean": map.mean(),
            });
            println!("{summary}");
            return Ok(());
        }
        RenderMode::Normals => DiagnosticMode::Normals,
        RenderMode::Flat => DiagnosticMode::Flat,
        RenderMode::Weights => DiagnosticMode::WeightColormap,
    };
    let weights = field.as_ref().map(|f| f.weights.as_slice());
    let image = render_diagnostic(&vertices, mesh.faces(), &camera, mode, weights)?;
    save_png(&image, &args.out)?;
    println!("{}", serde_json::json!({ "out": args.out.display().to_string() }));
    Ok(())
}
