//! Command-line front end. Exit codes: 0 on success, 1 on processing or
//! validation failures, 2 on I/O failures.

mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::attention::{attention_maps, hierarchy_update, masked_attention_matrix, Direction, HierarchyVariant, LatentStack};
use crate::error::{Error, Result};
use crate::kinematics::{representative_visual, sample_pose, JointConfiguration, PoseMode, PoseOptions};
use crate::mesh::{is_watertight, merge_meshes, read_obj, simplify, write_obj, TriMesh};
use crate::metrics::{axis_err, pivot_err, shape_metrics, type_err, AxisLine, DEFAULT_SAMPLES};
use crate::optimize::{optimize_joint, OptimizeConfig};
use crate::render::{camera_on_sphere, soft_silhouette, Camera, SilhouetteImage, SoftRasterSettings};
use crate::scene::{assemble, normalize_mesh, reference_normalization, JointScene};
use crate::urdf::{link_mesh_groups, parse_urdf, write_urdf, JointKind, UrdfModel};
use crate::voxel::{make_watertight, WatertightOptions, WatertightReport};

pub use manifest::{Manifest, PartEntry};

pub const DEFAULT_AUGMENT_RESOLUTION: usize = 512;
pub const DEFAULT_AZIMUTH: f64 = 45.0;
pub const DEFAULT_ELEVATION: f64 = 25.0;
pub const DEFAULT_PROXY_ERROR: f64 = 5e-3;

#[derive(Debug, Parser)]
#[command(name = "artikit", version, about = "Articulated-object preprocessing, joint refinement and evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every random choice (surface sampling, optimizer).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Square image side in pixels.
    #[arg(long, global = true)]
    pub resolution: Option<usize>,
    /// Camera distance from the origin.
    #[arg(long, global = true, default_value_t = crate::render::DEFAULT_RADIUS)]
    pub radius: f64,
    /// Vertical field of view in degrees.
    #[arg(long, global = true, default_value_t = crate::render::DEFAULT_FOV_Y)]
    pub fov: f64,
    /// Voxel resolution along the longest extent.
    #[arg(long = "R", global = true, default_value_t = crate::voxel::DEFAULT_RESOLUTION)]
    pub voxel_resolution: u32,
    /// Minimum voxel count across the thinnest extent.
    #[arg(long, global = true, default_value_t = crate::voxel::DEFAULT_MIN_CELLS)]
    pub nmin: u32,
    /// Voxel grid memory budget in MiB.
    #[arg(long, global = true, default_value_t = 400)]
    pub mem_cap_mb: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a URDF and list its diagnostics.
    Validate { urdf: PathBuf },
    /// Merge each link's OBJs into one part mesh and write a manifest.
    Merge {
        urdf: PathBuf,
        /// Directory holding the referenced OBJ files.
        #[arg(long)]
        mesh_dir: PathBuf,
    },
    /// Replace every part with a watertight version.
    Watertight { manifest: PathBuf },
    /// Render silhouettes at the reference, mid and max poses.
    Augment {
        manifest: PathBuf,
        /// URDF to use instead of the one recorded in the manifest.
        #[arg(long)]
        urdf: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "reference,mid,max")]
        modes: Vec<PoseMode>,
        /// Drive prismatic joints as well as revolute ones.
        #[arg(long)]
        include_prismatic: bool,
        #[arg(long, default_value_t = DEFAULT_AZIMUTH, allow_negative_numbers = true)]
        azimuth: f64,
        #[arg(long, default_value_t = DEFAULT_ELEVATION, allow_negative_numbers = true)]
        elevation: f64,
        #[arg(long, default_value_t = 16)]
        bit_depth: u8,
        /// Simplify the parts within this normalized distance before rendering; 0 keeps them as is.
        #[arg(long, default_value_t = DEFAULT_PROXY_ERROR)]
        proxy_error: f64,
    },
    /// Refine one joint against an observed open-state silhouette.
    Optimize {
        manifest: PathBuf,
        #[arg(long)]
        urdf: Option<PathBuf>,
        #[arg(long)]
        joint: String,
        /// Grayscale silhouette of the open state.
        #[arg(long)]
        image: PathBuf,
        /// Optimizer settings as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_AZIMUTH, allow_negative_numbers = true)]
        azimuth: f64,
        #[arg(long, default_value_t = DEFAULT_ELEVATION, allow_negative_numbers = true)]
        elevation: f64,
        /// Simplify the parts within this normalized distance before fitting; 0 keeps them as is.
        #[arg(long, default_value_t = DEFAULT_PROXY_ERROR)]
        proxy_error: f64,
    },
    /// Score a predicted mesh (and optionally joints) against ground truth.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        /// JSON with "pred" and "gt" lists of {direction, point, type}.
        #[arg(long)]
        axes: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        /// Treat opposite axis directions as equal.
        #[arg(long)]
        sign_invariant: bool,
    },
    /// Print attention maps for a small latent stack given as JSON.
    Attention { input: PathBuf },
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_io() {
        2
    } else {
        1
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let g = &cli.global;
    match &cli.command {
        Command::Validate { urdf } => cmd_validate(urdf),
        Command::Merge { urdf, mesh_dir } => {
            let out = g.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            let m = cmd_merge(urdf, mesh_dir, &out)?;
            println!("wrote {} parts to {}", m.parts.len(), out.display());
            Ok(0)
        }
        Command::Watertight { manifest } => {
            let opts = WatertightOptions {
                resolution: g.voxel_resolution,
                min_cells: g.nmin,
                mem_cap_bytes: g.mem_cap_mb.saturating_mul(1024 * 1024),
            };
            let out = out_dir_for(g, manifest);
            let (_, failed) = cmd_watertight(manifest, &out, &opts)?;
            Ok(i32::from(failed > 0))
        }
        Command::Augment {
            manifest,
            urdf,
            modes,
            include_prismatic,
            azimuth,
            elevation,
            bit_depth,
            proxy_error,
        } => {
            let camera = camera_on_sphere(
                *azimuth,
                *elevation,
                g.radius,
                g.fov,
                g.resolution.unwrap_or(DEFAULT_AUGMENT_RESOLUTION),
            )?;
            let written = cmd_augment(
                manifest,
                urdf.as_deref(),
                modes,
                &PoseOptions {
                    include_prismatic: *include_prismatic,
                },
                &camera,
                *bit_depth,
                *proxy_error,
                &out_dir_for(g, manifest),
            )?;
            for p in written {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::Optimize {
            manifest,
            urdf,
            joint,
            image,
            config,
            azimuth,
            elevation,
            proxy_error,
        } => {
            let mut cfg = match config {
                Some(p) => OptimizeConfig::read(p)?,
                None => OptimizeConfig::default(),
            };
            if let Some(r) = g.resolution {
                cfg.resolution = r;
            }
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            let camera = camera_on_sphere(*azimuth, *elevation, g.radius, g.fov, cfg.resolution)?;
            let report = cmd_optimize(
                manifest,
                urdf.as_deref(),
                joint,
                image,
                &cfg,
                &camera,
                *proxy_error,
                &out_dir_for(g, manifest),
            )?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            Ok(0)
        }
        Command::Eval {
            pred,
            gt,
            axes,
            samples,
            sign_invariant,
        } => {
            let report = cmd_eval(pred, gt, axes.as_deref(), *samples, *sign_invariant, g.seed.unwrap_or(0))?;
            let text = serde_json::to_string_pretty(&report).expect("serializable");
            if let Some(dir) = &g.out_dir {
                create_dir(dir)?;
                write_text(&dir.join("metrics.json"), &text)?;
            }
            println!("{text}");
            Ok(0)
        }
        Command::Attention { input } => {
            let report = cmd_attention(input)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            Ok(0)
        }
    }
}

fn out_dir_for(g: &GlobalArgs, manifest: &Path) -> PathBuf {
    g.out_dir.clone().unwrap_or_else(|| manifest_dir(manifest))
}

fn manifest_dir(manifest: &Path) -> PathBuf {
    match manifest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn read_urdf(path: &Path) -> Result<UrdfModel> {
    let (model, diags) = parse_urdf(&read_text(path)?)?;
    for d in diags {
        eprintln!("warning: {d}");
    }
    Ok(model)
}

/// Print diagnostics one per line; exit 0 only when the model parses cleanly.
pub fn cmd_validate(urdf: &Path) -> Result<i32> {
    let text = read_text(urdf)?;
    match parse_urdf(&text) {
        Ok((model, diags)) => {
            for d in &diags {
                println!("{d}");
            }
            println!(
                "ok: {} links, {} joints, {} diagnostics",
                model.links.len(),
                model.joints.len(),
                diags.len()
            );
            Ok(0)
        }
        Err(e) => {
            println!("{e}");
            Ok(1)
        }
    }
}

fn load_component(mesh_dir: &Path, basename: &str) -> Result<TriMesh> {
    let direct = mesh_dir.join(basename);
    let path = if direct.exists() {
        direct
    } else {
        mesh_dir.join("textured_objs").join(basename)
    };
    read_obj(&path)
}

/// Concatenate each non-base link's OBJs into `out_dir/parts/<link>.obj`.
pub fn cmd_merge(urdf: &Path, mesh_dir: &Path, out_dir: &Path) -> Result<Manifest> {
    let text = read_text(urdf)?;
    let (model, diags) = parse_urdf(&text)?;
    for d in diags {
        eprintln!("warning: {d}");
    }
    let parts_dir = out_dir.join("parts");
    create_dir(&parts_dir)?;

    let mut meshes = BTreeMap::new();
    let mut entries = Vec::new();
    for (link, basenames) in link_mesh_groups(&model) {
        let li = model.links.iter().position(|l| l.name == link).expect("grouped link exists");
        let rep_inv = representative_visual(&model, li).inverse();
        let mut loaded = Vec::new();
        let mut sources = Vec::new();
        for (k, base) in basenames.iter().enumerate() {
            match load_component(mesh_dir, base) {
                Ok(mesh) => {
                    let local = rep_inv.compose(&model.links[li].visuals[k].origin);
                    loaded.push(mesh.transformed(&local));
                    sources.push(base.clone());
                }
                Err(e) => eprintln!("warning: skipping {base} for link {link}: {e}"),
            }
        }
        if loaded.is_empty() {
            eprintln!("warning: link {link} has no loadable meshes");
            continue;
        }
        let merged = merge_meshes(&loaded)?;
        let file = parts_dir.join(format!("{link}.obj"));
        write_obj(&merged, &file)?;
        entries.push(PartEntry::new(link.clone(), file, sources));
        meshes.insert(link, merged);
    }
    if meshes.is_empty() {
        return Err(Error::Processing("no loadable meshes for any link".into()));
    }

    let urdf_copy = out_dir.join("object.urdf");
    write_text(&urdf_copy, &text)?;
    let mut manifest = Manifest::new(model.name.clone());
    manifest.urdf = Some(urdf_copy);
    manifest.parts = entries;
    manifest.normalization = Some(reference_normalization(&model, &meshes)?);
    manifest.poses = pose_table(&model, &PoseOptions::default());
    manifest.stamp("merge");
    manifest.write(&out_dir.join("manifest.json"), out_dir)?;
    Ok(manifest)
}

fn pose_table(model: &UrdfModel, options: &PoseOptions) -> BTreeMap<String, BTreeMap<String, f64>> {
    PoseMode::ALL
        .iter()
        .map(|m| (m.as_str().to_string(), sample_pose(model, *m, options).0))
        .collect()
}

/// Run `make_watertight` on every part; failures are recorded and counted.
pub fn cmd_watertight(manifest_path: &Path, out_dir: &Path, opts: &WatertightOptions) -> Result<(Manifest, usize)> {
    let mut manifest = Manifest::read(manifest_path)?;
    let dir = out_dir.join("watertight");
    create_dir(&dir)?;
    let mut failed = 0;
    let mut fixed = BTreeMap::new();
    for part in manifest.parts.iter_mut() {
        let outcome = read_obj(&part.obj).and_then(|m| make_watertight(&m, opts));
        match outcome {
            Ok((mesh, report)) => {
                let file = dir.join(format!("{}.obj", part.link));
                write_obj(&mesh, &file)?;
                let summary = match &report {
                    WatertightReport::EarlyExit => "early exit".to_string(),
                    WatertightReport::Voxelized { pitch, .. } => {
                        format!("voxelized, pitch {:.6}, relaxed {}", pitch.pitch, pitch.relaxed)
                    }
                };
                println!("{}: {summary}", part.link);
                part.obj = file;
                part.extra
                    .insert("watertight".into(), serde_json::to_value(&report).expect("serializable"));
                fixed.insert(part.link.clone(), mesh);
            }
            Err(e) => {
                if e.is_io() {
                    return Err(e);
                }
                failed += 1;
                eprintln!("error: {}: {e}", part.link);
                part.extra
                    .insert("watertight".into(), json!({ "path": "failed", "error": e.to_string() }));
            }
        }
    }
    if failed == 0 {
        if let Some(urdf) = &manifest.urdf {
            let model = read_urdf(urdf)?;
            manifest.normalization = Some(reference_normalization(&model, &fixed)?);
        }
    }
    manifest.stamp("watertight");
    manifest.write(&out_dir.join("manifest.json"), out_dir)?;
    Ok((manifest, failed))
}

fn load_parts(manifest: &Manifest) -> Result<BTreeMap<String, TriMesh>> {
    manifest
        .parts
        .iter()
        .map(|p| Ok((p.link.clone(), read_obj(&p.obj)?)))
        .collect()
}

fn load_model(manifest: &Manifest, urdf: Option<&Path>) -> Result<UrdfModel> {
    let path = urdf
        .map(Path::to_path_buf)
        .or_else(|| manifest.urdf.clone())
        .ok_or_else(|| Error::Argument("no URDF given and none recorded in the manifest".into()))?;
    read_urdf(&path)
}

#[derive(Debug, Clone, Serialize)]
struct PoseRecord<'a> {
    object_id: &'a str,
    mode: PoseMode,
    joints: &'a JointConfiguration,
    normalization: crate::kinematics::Normalization,
    camera: &'a Camera,
}

/// Render one silhouette per requested pose mode. Objects without a driven joint
/// only get the reference pose. Parts go through the same simplified proxies as
/// `cmd_optimize`, since soft coverage depends on tessellation.
pub fn cmd_augment(
    manifest_path: &Path,
    urdf: Option<&Path>,
    modes: &[PoseMode],
    options: &PoseOptions,
    camera: &Camera,
    bit_depth: u8,
    proxy_error: f64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let manifest = Manifest::read(manifest_path)?;
    let model = load_model(&manifest, urdf)?;
    let parts = load_parts(&manifest)?;
    let normalization = reference_normalization(&model, &parts)?;
    let driven = model.joints.iter().any(|j| {
        j.kind == JointKind::Revolute || (options.include_prismatic && j.kind == JointKind::Prismatic)
    });
    let dir = out_dir.join("augment");
    create_dir(&dir)?;
    let settings = SoftRasterSettings::default();
    let mut written = Vec::new();
    for &mode in modes {
        if mode != PoseMode::Reference && !driven {
            continue;
        }
        let cfg = sample_pose(&model, mode, options);
        let placed: Vec<TriMesh> = assemble(&model, &parts, &cfg)?
            .iter()
            .map(|(_, m)| simplify(&normalize_mesh(m, &normalization), proxy_error))
            .collect::<Result<_>>()?;
        let image = soft_silhouette(camera, &placed, &settings)?;
        let stem = format!("{}_{}", manifest.object_id, mode.as_str());
        let png = dir.join(format!("{stem}.png"));
        image.write_png(&png, bit_depth)?;
        let record = PoseRecord {
            object_id: &manifest.object_id,
            mode,
            joints: &cfg,
            normalization,
            camera,
        };
        let pose = dir.join(format!("{stem}.json"));
        write_text(&pose, &serde_json::to_string_pretty(&record).expect("serializable"))?;
        written.push(png);
        written.push(pose);
    }
    Ok(written)
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeReport {
    pub joint: String,
    /// Pivot offset in the normalized world frame.
    pub delta_t: [f64; 3],
    /// Joint-origin offset applied to the URDF, in the parent frame.
    pub origin_offset: [f64; 3],
    pub delta_theta: f64,
    pub best_loss: f64,
    pub iterations: usize,
    pub refined_urdf: PathBuf,
    pub trace_csv: PathBuf,
}

/// Fit `(Δt, Δθ)` for `joint` to the open-state image and write the refined URDF
/// and the loss trace. Parts are rendered through simplified proxies whose
/// deviation stays within `proxy_error` normalized units.
pub fn cmd_optimize(
    manifest_path: &Path,
    urdf: Option<&Path>,
    joint: &str,
    image: &Path,
    config: &OptimizeConfig,
    camera: &Camera,
    proxy_error: f64,
    out_dir: &Path,
) -> Result<OptimizeReport> {
    let manifest = Manifest::read(manifest_path)?;
    let mut model = load_model(&manifest, urdf)?;
    if model.joint(joint).is_none() {
        return Err(Error::Argument(format!("unknown joint {joint:?}")));
    }
    let parts = load_parts(&manifest)?;
    let target = SilhouetteImage::read_png(image)?;
    let normalization = reference_normalization(&model, &parts)?;
    let scene = JointScene::new(&model, &parts, joint, &normalization)?;
    let statics = scene
        .static_parts
        .iter()
        .map(|m| simplify(m, proxy_error))
        .collect::<Result<Vec<_>>>()?;
    let moving = simplify(&scene.moving_part, proxy_error)?;
    let (delta, trace) = optimize_joint(
        &statics,
        &moving,
        &scene.world_joint,
        camera,
        &target,
        config,
    )?;
    let offset = scene.origin_offset(&delta);
    model.joint_mut(joint).expect("checked above").origin.translation += offset;

    create_dir(out_dir)?;
    let refined = out_dir.join(format!("{}_refined.urdf", manifest.object_id));
    write_text(&refined, &write_urdf(&model))?;
    let csv = out_dir.join(format!("{}_{joint}_trace.csv", manifest.object_id));
    trace.write_csv(&csv)?;
    let report = OptimizeReport {
        joint: joint.to_string(),
        delta_t: delta.delta_t.into(),
        origin_offset: offset.into(),
        delta_theta: delta.delta_theta,
        best_loss: trace.best_loss,
        iterations: trace.records.len(),
        refined_urdf: refined,
        trace_csv: csv,
    };
    write_text(
        &out_dir.join(format!("{}_{joint}_optimize.json", manifest.object_id)),
        &serde_json::to_string_pretty(&report).expect("serializable"),
    )?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxisRecord {
    pub direction: [f64; 3],
    pub point: [f64; 3],
    #[serde(rename = "type")]
    pub kind: JointKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxesFile {
    pub pred: Vec<AxisRecord>,
    pub gt: Vec<AxisRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub chamfer: f64,
    pub fscore_0_1: f64,
    pub fscore_0_5: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis_err: Option<f64>,
    /// Mean over revolute ground-truth joints, in normalized units; null if none.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pivot_err: Option<Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub type_err: Option<f64>,
}

/// Shape metrics, plus joint metrics when an axes file is given. Pivots are scored
/// after the ground-truth mesh's normalization.
pub fn cmd_eval(
    pred: &Path,
    gt: &Path,
    axes: Option<&Path>,
    samples: usize,
    sign_invariant: bool,
    seed: u64,
) -> Result<EvalReport> {
    let (pm, gm) = (read_obj(pred)?, read_obj(gt)?);
    let axes: Option<AxesFile> = match axes {
        Some(p) => Some(
            serde_json::from_str(&read_text(p)?).map_err(|e| Error::Argument(format!("invalid axes file: {e}")))?,
        ),
        None => None,
    };
    let shape = shape_metrics(&pm, &gm, samples, seed)?;
    let mut report = EvalReport {
        chamfer: shape.chamfer,
        fscore_0_1: shape.fscore_0_1,
        fscore_0_5: shape.fscore_0_5,
        axis_err: None,
        pivot_err: None,
        type_err: None,
    };
    if let Some(axes) = axes {
        let kinds = |v: &[AxisRecord]| v.iter().map(|a| a.kind).collect::<Vec<_>>();
        report.type_err = Some(type_err(&kinds(&axes.pred), &kinds(&axes.gt))?);
        let (lo, hi) = gm.bounds().ok_or_else(|| Error::Argument("ground-truth mesh is empty".into()))?;
        let norm = crate::kinematics::normalization_from_bbox(lo, hi)?;
        let line = |a: &AxisRecord| AxisLine::new(Vector3::from(a.direction), norm.apply(&Vector3::from(a.point)));
        let mut angles = Vec::new();
        let mut pivots = Vec::new();
        for (p, g) in axes.pred.iter().zip(&axes.gt) {
            let (pl, gl) = (line(p)?, line(g)?);
            angles.push(axis_err(&pl, &gl, sign_invariant));
            if g.kind == JointKind::Revolute {
                pivots.push(pivot_err(&pl, &gl));
            }
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        report.axis_err = mean(&angles);
        report.pivot_err = Some(mean(&pivots));
    }
    Ok(report)
}

#[derive(Debug, Clone, Deserialize)]
struct AttentionInput {
    /// Token rows, each with C channels.
    values: Vec<Vec<f64>>,
    #[serde(default)]
    part_of: Option<Vec<usize>>,
    #[serde(default)]
    tokens_per_part: Option<usize>,
    parents: Vec<Option<usize>>,
    #[serde(default)]
    variant: HierarchyVariant,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Local, global and masked hierarchy maps plus the updated latents.
pub fn cmd_attention(input: &Path) -> Result<Value> {
    let spec: AttentionInput =
        serde_json::from_str(&read_text(input)?).map_err(|e| Error::Argument(format!("invalid attention input: {e}")))?;
    let n = spec.values.len();
    let c = spec.values.first().map_or(0, Vec::len);
    if n == 0 || c == 0 || spec.values.iter().any(|r| r.len() != c) {
        return Err(Error::Argument("values must be a nonempty rectangular matrix".into()));
    }
    let values = DMatrix::from_fn(n, c, |i, j| spec.values[i][j]);
    let stack = match (spec.part_of, spec.tokens_per_part) {
        (Some(part_of), _) => LatentStack::new(values, part_of, spec.parents)?,
        (None, Some(k)) => LatentStack::uniform(values, k, spec.parents)?,
        (None, None) => return Err(Error::Argument("give either part_of or tokens_per_part".into())),
    };
    let maps = attention_maps(&stack)?;
    let c2p = masked_attention_matrix(&stack, &stack.values, Direction::ChildToParent)?;
    let updated = hierarchy_update(&stack, spec.variant)?;
    Ok(json!({
        "local": maps.local.iter().map(rows).collect::<Vec<_>>(),
        "global": rows(&maps.global),
        "child_to_parent": rows(&c2p),
        "updated": rows(&updated),
    }))
}

/// True when every output mesh in the manifest is closed.
pub fn manifest_is_watertight(manifest: &Manifest) -> Result<bool> {
    for p in &manifest.parts {
        if !is_watertight(&read_obj(&p.obj)?) {
            return Ok(false);
        }
    }
    Ok(true)
}
