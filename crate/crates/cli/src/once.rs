use crate::config::FusionParams;
use crate::experiment::MAP_STREAM;
use crate::CliError;
use planloc_core::formats::{read_pgm, read_scan_csv};
use planloc_core::fusion::{
    fuse_densities, weights_binary, weights_linear, CameraView, FusionConfig, Scan,
};
use planloc_core::geometry::{PoseRecord, RigidTransform};
use planloc_core::model::{load_model, sample_model, validate_reference_set, ReferenceSet};
use planloc_core::registration::{
    localize, IcpMethod, LocalizationMaps, LocalizationRecord, MapIndex, Method, ScanMode,
    SelectiveConfig,
};
use planloc_core::rng::derive_seed;
use planloc_core::sensor_sim::{CameraSpec, HitClass, RawScan};
use std::path::{Path, PathBuf};

/// Inputs of a single localization from files.
#[derive(Debug, Clone)]
pub struct OnceRequest {
    pub model: PathBuf,
    /// Required for selective ICP.
    pub refs: Option<PathBuf>,
    /// Scan CSV in the sensor frame.
    pub scan: PathBuf,
    /// Density images, one per camera in rig order.
    pub images: Vec<PathBuf>,
    pub cameras: Vec<CameraSpec>,
    pub init: RigidTransform,
    pub method: Method,
    pub fusion: FusionParams,
    pub localization: SelectiveConfig,
    pub map_density: f64,
    pub seed: u64,
}

/// Accepts an inline `{"t": [...], "q": [...]}` object or a path to one.
pub fn parse_pose(arg: &str) -> Result<RigidTransform, CliError> {
    let (text, origin) = if arg.trim_start().starts_with('{') {
        (arg.to_string(), PathBuf::from("--init"))
    } else {
        let path = PathBuf::from(arg);
        (
            std::fs::read_to_string(&path).map_err(|e| CliError::input(&path, e))?,
            path,
        )
    };
    let rec: PoseRecord = serde_json::from_str(&text).map_err(|e| CliError::input(&origin, e))?;
    rec.to_transform()
        .ok_or_else(|| CliError::input(&origin, "quaternion is not a rotation"))
}

fn scan_variant(
    req: &OnceRequest,
    points: Vec<planloc_core::geometry::Vec3>,
) -> Result<Scan, CliError> {
    if req.method.scan == ScanMode::Full {
        return Ok(Scan::from_points(points));
    }
    if req.images.is_empty() {
        return Err(CliError::invalid(format!(
            "--scan-mode {} needs at least one --image",
            req.method.scan.as_str()
        )));
    }
    if req.images.len() > req.cameras.len() {
        return Err(CliError::invalid(format!(
            "{} images given but the rig has {} cameras",
            req.images.len(),
            req.cameras.len()
        )));
    }
    let images = req
        .images
        .iter()
        .map(|p| read_pgm(p).map_err(|e| CliError::input(p, e)))
        .collect::<Result<Vec<_>, _>>()?;
    for ((img, spec), path) in images.iter().zip(&req.cameras).zip(&req.images) {
        if img.width != spec.width || img.height != spec.height {
            return Err(CliError::input(
                path,
                format!(
                    "image is {}x{}, camera expects {}x{}",
                    img.width, img.height, spec.width, spec.height
                ),
            ));
        }
    }
    let views: Vec<CameraView<'_>> = images
        .iter()
        .zip(&req.cameras)
        .map(|(image, spec)| CameraView {
            image,
            spec,
            pose: spec.extrinsic,
        })
        .collect();
    let n = points.len();
    let raw = RawScan {
        points,
        classes: vec![HitClass::Building; n],
        pose: RigidTransform::identity(),
    };
    let cfg = FusionConfig {
        rule: req.fusion.rule,
        occlusion_check: req.fusion.occlusion_check,
        occlusion_tolerance: req.fusion.occlusion_tolerance,
    };
    let fused = fuse_densities(&raw, &views, &cfg).scan;
    match req.method.scan {
        ScanMode::Filtered => weights_binary(&fused, req.fusion.delta),
        _ => weights_linear(&fused, req.fusion.delta_prime),
    }
    .map_err(CliError::invalid)
}

fn load_refs(path: &Path) -> Result<ReferenceSet, CliError> {
    ReferenceSet::load(path).map_err(|e| CliError::input(path, e))
}

/// Localizes one scan file; input problems are errors, a failed
/// localization is a normal result.
pub fn localize_once(req: &OnceRequest) -> Result<LocalizationRecord, CliError> {
    let model = load_model(&req.model).map_err(|e| CliError::input(&req.model, e))?;
    let scan_file = read_scan_csv(&req.scan).map_err(|e| CliError::input(&req.scan, e))?;
    if scan_file.points.is_empty() {
        return Err(CliError::input(&req.scan, "scan has no points"));
    }
    let reference_ids = match (&req.refs, req.method.icp) {
        (Some(path), _) => {
            let refs = load_refs(path)?;
            validate_reference_set(&model, &refs)
                .map_err(|e| CliError::input(path, e))?
                .surface_ids()
                .to_vec()
        }
        (None, IcpMethod::Selective) => {
            return Err(CliError::invalid("selective ICP needs --refs"))
        }
        (None, IcpMethod::Full) => Vec::new(),
    };
    let scan = scan_variant(req, scan_file.points)?;
    let cloud = sample_model(
        &model,
        req.map_density,
        derive_seed(req.seed, &[MAP_STREAM]),
    )
    .map_err(CliError::invalid)?;
    let maps = LocalizationMaps {
        reference: MapIndex::new(cloud.restrict_to(&reference_ids)),
        full: MapIndex::new(cloud),
    };
    let result = localize(&scan, &maps, &req.init, req.method.icp, &req.localization);
    Ok(LocalizationRecord::new(req.method, &result))
}
