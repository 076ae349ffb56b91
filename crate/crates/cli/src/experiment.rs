use crate::config::ExperimentConfig;
use crate::CliError;
use nalgebra::Matrix3;
use planloc_core::eval::{
    average_executions, compute_report, ground_truth_correction, report_csv, MetricsReport,
    TrialRecord,
};
use planloc_core::fusion::{
    fuse_densities, weights_binary, weights_linear, CameraView, FusionConfig, FusionError, Scan,
};
use planloc_core::geometry::Vec3;
use planloc_core::model::{
    apply_deviation, extrude_floorplan, sample_model, save_model, validate_reference_set,
    BuildingModel, DeviationSpec, Floorplan2D, ReferenceSet, ValidatedReferenceSet,
};
use planloc_core::registration::{
    localize, LocalizationMaps, LocalizationRecord, MapIndex, Method, ScanMode,
};
use planloc_core::rng::derive_seed;
use planloc_core::sensor_sim::{
    generate_trial_sequence, prism_position, CameraSpec, Scene, TrialFrame,
};
use serde::Serialize;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Seed path of the model point sampling.
pub(crate) const MAP_STREAM: u64 = 0;
const TRIAL_STREAM: u64 = 1;

pub struct BuiltScene {
    pub as_planned: BuildingModel,
    pub as_built: BuildingModel,
    pub references: ValidatedReferenceSet,
    pub scene: Scene,
}

pub fn build_scene(cfg: &ExperimentConfig) -> Result<BuiltScene, CliError> {
    let plan = Floorplan2D::load(&cfg.floorplan).map_err(|e| CliError::input(&cfg.floorplan, e))?;
    let as_planned = extrude_floorplan(&plan).map_err(|e| CliError::input(&cfg.floorplan, e))?;
    let refs =
        ReferenceSet::load(&cfg.references).map_err(|e| CliError::input(&cfg.references, e))?;
    let references = validate_reference_set(&as_planned, &refs)
        .map_err(|e| CliError::input(&cfg.references, e))?;
    let dev = cfg
        .deviation_spec()
        .map_err(|e| CliError::invalid(format!("deviation: {e}")))?;
    let as_built = apply_deviation(&as_planned, &dev)
        .map_err(|e| CliError::invalid(format!("deviation: {e}")))?;
    let clutter = cfg.clutter_surfaces().map_err(CliError::invalid)?;
    let actors = cfg.actor_list().map_err(CliError::invalid)?;
    let scene = Scene::new(as_built.clone(), clutter, actors).map_err(CliError::invalid)?;
    Ok(BuiltScene {
        as_planned,
        as_built,
        references,
        scene,
    })
}

/// Writes `as_planned.obj`, `as_built.obj` and `references.obj`.
pub fn write_scene(built: &BuiltScene, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let refs = built
        .as_planned
        .subset(built.references.surface_ids())
        .map_err(CliError::invalid)?;
    let mut written = Vec::new();
    for (name, model) in [
        ("as_planned.obj", &built.as_planned),
        ("as_built.obj", &built.as_built),
        ("references.obj", &refs),
    ] {
        let path = dir.join(name);
        save_model(model, &path).map_err(|e| CliError::input(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Offset that moves surveyed ground truth into the frame of the reference
/// surfaces: minus the translation `o` that best explains how far each
/// reference moved along its own normal, `nᵢ·o = nᵢ·dᵢ` in least squares.
/// Directions no reference constrains stay at zero.
pub fn reference_offset(
    model: &BuildingModel,
    reference_ids: &[String],
    dev: &DeviationSpec,
) -> Vec3 {
    let mut a = Matrix3::zeros();
    let mut b = Vec3::zeros();
    for id in reference_ids {
        let Some(s) = model.surface(id) else { continue };
        let n = s.dominant_normal();
        let d = dev
            .groups
            .iter()
            .find(|g| g.surface_ids.contains(id))
            .map_or(Vec3::zeros(), |g| *g.offset.translation());
        a += n * n.transpose();
        b += n * n.dot(&d);
    }
    let o = a
        .svd(true, true)
        .solve(&b, 1e-9)
        .unwrap_or_else(|_| Vec3::zeros());
    -o
}

/// The three scan variants of one frame.
pub struct PreparedScans {
    pub full: Scan,
    pub filtered: Scan,
    pub weighted: Scan,
}

impl PreparedScans {
    pub fn get(&self, mode: ScanMode) -> &Scan {
        match mode {
            ScanMode::Full => &self.full,
            ScanMode::Filtered => &self.filtered,
            ScanMode::Weighted => &self.weighted,
        }
    }
}

pub fn prepare_scans(
    frame: &TrialFrame,
    cameras: &[CameraSpec],
    cfg: &ExperimentConfig,
) -> Result<PreparedScans, CliError> {
    let views: Vec<CameraView<'_>> = frame
        .images
        .iter()
        .zip(cameras)
        .map(|(image, spec)| CameraView {
            image,
            spec,
            pose: spec.extrinsic,
        })
        .collect();
    let fusion = FusionConfig {
        rule: cfg.fusion.rule,
        occlusion_check: cfg.fusion.occlusion_check,
        occlusion_tolerance: cfg.fusion.occlusion_tolerance,
    };
    let fused = fuse_densities(&frame.scan, &views, &fusion).scan;
    let frame_err = |e| CliError::invalid(format!("scan {}: {e}", frame.index));
    Ok(PreparedScans {
        full: Scan::from_points(frame.scan.points.clone()),
        filtered: weights_binary(&fused, cfg.fusion.delta).map_err(frame_err)?,
        // nothing to normalize against: every point gets weight 0 and the
        // trial fails by starvation instead of aborting the run
        weighted: match weights_linear(&fused, cfg.fusion.delta_prime) {
            Err(FusionError::DegenerateDensities(_)) => {
                let n = fused.len();
                fused.clone().with_weights(vec![0.0; n])
            }
            other => other.map_err(frame_err)?,
        },
    })
}

#[derive(Debug, Clone)]
pub struct TrialLog {
    pub execution: usize,
    pub method: Method,
    pub record: TrialRecord,
}

pub struct MatrixRun {
    /// One averaged row per method, in [`Method::matrix`] order.
    pub rows: Vec<(Method, MetricsReport)>,
    /// `per_execution[e][m]`
    pub per_execution: Vec<Vec<MetricsReport>>,
    pub trials: Vec<TrialLog>,
    pub csv: String,
}

#[derive(Serialize)]
struct TrialLine {
    execution: usize,
    scan: usize,
    #[serde(flatten)]
    record: LocalizationRecord,
    gt_prism: [f64; 3],
    est_prism: Option<[f64; 3]>,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Runs all six methods over `n_executions` simulated sequences, writes
/// `report.csv` and `trials.jsonl` to `output` when given.
pub fn run_matrix(cfg: &ExperimentConfig, output: Option<&Path>) -> Result<MatrixRun, CliError> {
    let built = build_scene(cfg)?;
    let full_cloud = sample_model(
        &built.as_planned,
        cfg.map_density,
        derive_seed(cfg.seed, &[MAP_STREAM]),
    )
    .map_err(CliError::invalid)?;
    let ref_cloud = full_cloud.restrict_to(built.references.surface_ids());
    let maps = LocalizationMaps {
        full: MapIndex::new(full_cloud),
        reference: MapIndex::new(ref_cloud),
    };
    let robot = cfg.robot_pose_transform().map_err(CliError::invalid)?;
    let init = cfg.initial_pose_transform().map_err(CliError::invalid)?;
    let offset = match cfg.ground_truth_offset {
        Some(o) => Vec3::from(o),
        None => reference_offset(
            &built.as_planned,
            built.references.surface_ids(),
            &cfg.deviation_spec().map_err(CliError::invalid)?,
        ),
    };
    let gt_prism = ground_truth_correction(&prism_position(&robot, &cfg.prism), &offset);
    let rig = cfg.rig();
    let methods = Method::matrix();

    let mut log = match output {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
                path: dir.to_path_buf(),
                source,
            })?;
            let path = dir.join("trials.jsonl");
            let file = std::fs::File::create(&path).map_err(|source| CliError::Write {
                path: path.clone(),
                source,
            })?;
            Some((path, BufWriter::new(file)))
        }
        None => None,
    };

    let mut trials = Vec::new();
    let mut per_execution = Vec::new();
    for execution in 0..cfg.n_executions {
        let seed = derive_seed(cfg.seed, &[TRIAL_STREAM, execution as u64]);
        let frames = generate_trial_sequence(&built.scene, &robot, cfg.n_scans, &rig, seed)
            .map_err(CliError::invalid)?;
        let mut prev = vec![init; methods.len()];
        let mut records: Vec<Vec<TrialRecord>> = vec![Vec::new(); methods.len()];
        for frame in &frames {
            let scans = prepare_scans(frame, &rig.cameras, cfg)?;
            for (m, method) in methods.iter().enumerate() {
                let result = localize(
                    scans.get(method.scan),
                    &maps,
                    &prev[m],
                    method.icp,
                    &cfg.localization,
                );
                if let Some(t) = result.transform() {
                    prev[m] = t;
                }
                let record = TrialRecord::new(frame.index, result, robot, gt_prism, &cfg.prism);
                if let Some((path, w)) = log.as_mut() {
                    let line = TrialLine {
                        execution,
                        scan: frame.index,
                        record: LocalizationRecord::new(*method, &record.result),
                        gt_prism: arr(&record.ground_truth_prism),
                        est_prism: record.estimated_prism.as_ref().map(arr),
                    };
                    serde_json::to_writer(&mut *w, &line)
                        .map_err(std::io::Error::from)
                        .and_then(|_| w.write_all(b"\n"))
                        .map_err(|source| CliError::Write {
                            path: path.clone(),
                            source,
                        })?;
                }
                records[m].push(record);
            }
        }
        if let Some((path, w)) = log.as_mut() {
            w.flush().map_err(|source| CliError::Write {
                path: path.clone(),
                source,
            })?;
        }
        per_execution.push(
            records
                .iter()
                .map(|r| compute_report(r))
                .collect::<Vec<_>>(),
        );
        for (m, recs) in records.into_iter().enumerate() {
            trials.extend(recs.into_iter().map(|record| TrialLog {
                execution,
                method: methods[m],
                record,
            }));
        }
    }

    let rows = methods
        .iter()
        .enumerate()
        .map(|(m, method)| {
            let reports: Vec<MetricsReport> = per_execution
                .iter()
                .map(|e: &Vec<MetricsReport>| e[m])
                .collect();
            average_executions(&reports)
                .map(|r| (*method, r))
                .map_err(CliError::invalid)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let csv = report_csv(&rows);
    if let Some(dir) = output {
        let path = dir.join("report.csv");
        std::fs::write(&path, &csv).map_err(|source| CliError::Write { path, source })?;
    }
    Ok(MatrixRun {
        rows,
        per_execution,
        trials,
        csv,
    })
}
