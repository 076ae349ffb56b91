//! As-planned building models: triangle surfaces, floorplan extrusion,
//! reference subsets, deviation injection and conversion into a sampled
//! point map with normals.

mod obj;

pub use obj::{load_model, parse_model, save_model, write_model};

use crate::geometry::{RigidTransform, Vec3};
use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use thiserror::Error;

/// Minimum triangle area accepted by [`Surface::new`] in m².
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Two normals with `|a·b| ≥ 1 − PARALLEL_EPS` count as parallel.
pub const PARALLEL_EPS: f64 = 1e-3;

/// Map sampling density used when none is configured, points/m².
pub const DEFAULT_MAP_DENSITY: f64 = 400.0;

pub const FLOOR_ID: &str = "floor";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("floorplan has no wall segments")]
    EmptyPlan,
    #[error("invalid floorplan: {0}")]
    InvalidPlan(String),
    #[error("unknown surface id `{0}`")]
    UnknownSurfaceId(String),
    #[error("duplicate surface id `{0}`")]
    DuplicateSurfaceId(String),
    #[error("surface `{id}`: degenerate triangle {index} (area {area:e} m²)")]
    DegenerateTriangle { id: String, index: usize, area: f64 },
    #[error("surface `{0}` has no triangles")]
    EmptySurface(String),
    #[error("reference set is empty")]
    EmptyReferenceSet,
    #[error("reference set has no three pairwise non-parallel surfaces")]
    InsufficientConstraints,
    #[error("sampling density must be positive, got {0}")]
    InvalidDensity(f64),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("faces at line {line} are not inside a named group")]
    MissingGroupNames { line: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub vertices: [Vec3; 3],
    pub normal: Vec3,
}

impl Triangle {
    pub fn area(&self) -> f64 {
        let [a, b, c] = &self.vertices;
        0.5 * (b - a).cross(&(c - a)).norm()
    }
}

/// A named closed (or, for floors, open) triangulated surface.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    id: String,
    triangles: Vec<Triangle>,
}

impl Surface {
    /// Builds a surface, deriving each normal from the vertex winding.
    pub fn new(id: impl Into<String>, triangles: Vec<[Vec3; 3]>) -> Result<Self, ModelError> {
        let id = id.into();
        if triangles.is_empty() {
            return Err(ModelError::EmptySurface(id));
        }
        let mut out = Vec::with_capacity(triangles.len());
        for (index, [a, b, c]) in triangles.into_iter().enumerate() {
            let cross = (b - a).cross(&(c - a));
            let area = 0.5 * cross.norm();
            if !(area > MIN_TRIANGLE_AREA) {
                return Err(ModelError::DegenerateTriangle { id, index, area });
            }
            out.push(Triangle {
                vertices: [a, b, c],
                normal: cross / cross.norm(),
            });
        }
        Ok(Self { id, triangles: out })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(Triangle::area).sum()
    }

    pub fn transformed(&self, t: &RigidTransform) -> Surface {
        let triangles = self
            .triangles
            .iter()
            .map(|tri| {
                let vertices = tri.vertices.map(|v| t.apply(&v));
                let cross = (vertices[1] - vertices[0]).cross(&(vertices[2] - vertices[0]));
                Triangle {
                    vertices,
                    normal: cross / cross.norm(),
                }
            })
            .collect();
        Surface {
            id: self.id.clone(),
            triangles,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Principal axis of the area-weighted normal scatter `Σ Aᵢ nᵢ nᵢᵀ`.
    ///
    /// Closed surfaces have a zero mean normal, so the sign-free scatter
    /// matrix is used instead. For a thin wall this is the wall-face normal.
    pub fn dominant_normal(&self) -> Vec3 {
        let mut scatter = Matrix3::zeros();
        for tri in &self.triangles {
            scatter += tri.area() * tri.normal * tri.normal.transpose();
        }
        let eig = SymmetricEigen::new(scatter);
        let (idx, _) =
            eig.eigenvalues
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                });
        let n = eig.eigenvectors.column(idx).into_owned();
        n / n.norm()
    }

    /// Counts edges used by exactly one triangle, welding vertices that are
    /// bitwise equal.
    pub fn boundary_edge_count(&self) -> usize {
        type Key = (u64, u64, u64);
        let key = |v: &Vec3| -> Key { (v.x.to_bits(), v.y.to_bits(), v.z.to_bits()) };
        let mut edges: BTreeMap<(Key, Key), usize> = BTreeMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let a = key(&tri.vertices[k]);
                let b = key(&tri.vertices[(k + 1) % 3]);
                let e = if a < b { (a, b) } else { (b, a) };
                *edges.entry(e).or_default() += 1;
            }
        }
        edges.values().filter(|&&c| c == 1).count()
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for tri in &self.triangles {
            for v in &tri.vertices {
                lo = lo.inf(v);
                hi = hi.sup(v);
            }
        }
        (lo, hi)
    }

    /// Closed axis-aligned box between two corners.
    pub fn axis_aligned_box(
        id: impl Into<String>,
        min: Vec3,
        max: Vec3,
    ) -> Result<Self, ModelError> {
        let b = [
            Vec3::new(min.x, min.y, min.z),
            Vec3::new(max.x, min.y, min.z),
            Vec3::new(max.x, max.y, min.z),
            Vec3::new(min.x, max.y, min.z),
        ];
        Surface::new(id, prism_triangles(&b, max.z - min.z))
    }
}

/// Triangles of a closed prism over a counter-clockwise base quad.
fn prism_triangles(base: &[Vec3; 4], height: f64) -> Vec<[Vec3; 3]> {
    let up = Vec3::new(0.0, 0.0, height);
    let top = base.map(|v| v + up);
    let mut tris = vec![
        [base[0], base[2], base[1]],
        [base[0], base[3], base[2]],
        [top[0], top[1], top[2]],
        [top[0], top[2], top[3]],
    ];
    for i in 0..4 {
        let j = (i + 1) % 4;
        tris.push([base[i], base[j], top[j]]);
        tris.push([base[i], top[j], top[i]]);
    }
    tris
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingModel {
    surfaces: Vec<Surface>,
    frame: String,
}

impl BuildingModel {
    pub fn new(surfaces: Vec<Surface>, frame: impl Into<String>) -> Result<Self, ModelError> {
        let mut seen = HashSet::new();
        for s in &surfaces {
            if !seen.insert(s.id.as_str()) {
                return Err(ModelError::DuplicateSurfaceId(s.id.clone()));
            }
        }
        Ok(Self {
            surfaces,
            frame: frame.into(),
        })
    }

    pub fn surfaces(&self) -> &[Surface] {
        &self.surfaces
    }

    pub fn frame(&self) -> &str {
        &self.frame
    }

    pub fn surface(&self, id: &str) -> Option<&Surface> {
        self.surfaces.iter().find(|s| s.id == id)
    }

    pub fn surface_ids(&self) -> Vec<&str> {
        self.surfaces.iter().map(|s| s.id.as_str()).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.surfaces.iter().map(Surface::area).sum()
    }

    pub fn triangle_count(&self) -> usize {
        self.surfaces.iter().map(|s| s.triangles.len()).sum()
    }

    /// Keeps only the listed surfaces, in model order.
    pub fn subset(&self, ids: &[String]) -> Result<BuildingModel, ModelError> {
        for id in ids {
            if self.surface(id).is_none() {
                return Err(ModelError::UnknownSurfaceId(id.clone()));
            }
        }
        let surfaces = self
            .surfaces
            .iter()
            .filter(|s| ids.contains(&s.id))
            .cloned()
            .collect();
        Ok(BuildingModel {
            surfaces,
            frame: self.frame.clone(),
        })
    }
}

/// One straight wall, given by its centre line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallSegment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub thickness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Floorplan2D {
    pub walls: Vec<WallSegment>,
    pub wall_height: f64,
    pub floor: Vec<[f64; 2]>,
}

impl Floorplan2D {
    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ModelError::Json {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Turns each wall segment into a closed box of uniform height and adds a
/// planar floor at z = 0 spanning the outline.
pub fn extrude_floorplan(plan: &Floorplan2D) -> Result<BuildingModel, ModelError> {
    if plan.walls.is_empty() {
        return Err(ModelError::EmptyPlan);
    }
    if !(plan.wall_height > 0.0) || !plan.wall_height.is_finite() {
        return Err(ModelError::InvalidPlan(format!(
            "wall_height must be positive, got {}",
            plan.wall_height
        )));
    }
    let mut surfaces = Vec::with_capacity(plan.walls.len() + 1);
    for (i, wall) in plan.walls.iter().enumerate() {
        let finite = wall.start.iter().chain(&wall.end).all(|v| v.is_finite());
        if !finite || !(wall.thickness > 0.0) {
            return Err(ModelError::InvalidPlan(format!(
                "wall {i} is not finite or has no thickness"
            )));
        }
        let s = Vec3::new(wall.start[0], wall.start[1], 0.0);
        let e = Vec3::new(wall.end[0], wall.end[1], 0.0);
        let len = (e - s).norm();
        if len < 1e-9 {
            return Err(ModelError::InvalidPlan(format!("wall {i} has zero length")));
        }
        let dir = (e - s) / len;
        let side = Vec3::new(-dir.y, dir.x, 0.0) * (0.5 * wall.thickness);
        let base = [s - side, e - side, e + side, s + side];
        let id = wall.id.clone().unwrap_or_else(|| format!("wall_{i}"));
        surfaces.push(Surface::new(id, prism_triangles(&base, plan.wall_height))?);
    }
    if plan.floor.len() >= 3 {
        let tris = triangulate_polygon(&plan.floor).ok_or_else(|| {
            ModelError::InvalidPlan("floor outline is not a simple polygon".into())
        })?;
        surfaces.push(Surface::new(FLOOR_ID, tris)?);
    } else if !plan.floor.is_empty() {
        return Err(ModelError::InvalidPlan(
            "floor outline needs at least 3 vertices".into(),
        ));
    }
    BuildingModel::new(surfaces, "plan")
}

/// Ear-clipping triangulation of a simple polygon at z = 0; triangles face +z.
fn triangulate_polygon(outline: &[[f64; 2]]) -> Option<Vec<[Vec3; 3]>> {
    let mut pts: Vec<[f64; 2]> = outline.to_vec();
    if pts.first() == pts.last() && pts.len() > 3 {
        pts.pop();
    }
    let signed_area: f64 = (0..pts.len())
        .map(|i| {
            let [x0, y0] = pts[i];
            let [x1, y1] = pts[(i + 1) % pts.len()];
            x0 * y1 - x1 * y0
        })
        .sum::<f64>()
        * 0.5;
    if signed_area.abs() < MIN_TRIANGLE_AREA {
        return None;
    }
    if signed_area < 0.0 {
        pts.reverse();
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    let mut tris = Vec::with_capacity(pts.len() - 2);
    while idx.len() > 3 {
        let n = idx.len();
        let ear = (0..n).find(|&k| {
            let (a, b, c) = (
                pts[idx[(k + n - 1) % n]],
                pts[idx[k]],
                pts[idx[(k + 1) % n]],
            );
            if cross(a, b, c) <= 1e-12 {
                return false;
            }
            idx.iter().all(|&j| {
                let p = pts[j];
                if p == a || p == b || p == c {
                    return true;
                }
                !(cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0)
            })
        })?;
        let (a, b, c) = (idx[(ear + n - 1) % n], idx[ear], idx[(ear + 1) % n]);
        tris.push([a, b, c]);
        idx.remove(ear);
    }
    tris.push([idx[0], idx[1], idx[2]]);
    let v = |i: usize| Vec3::new(pts[i][0], pts[i][1], 0.0);
    Some(
        tris.into_iter()
            .map(|[a, b, c]| [v(a), v(b), v(c)])
            .collect(),
    )
}

/// Task reference surfaces, unvalidated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReferenceSet {
    pub surface_ids: Vec<String>,
}

impl ReferenceSet {
    pub fn new<S: Into<String>>(ids: impl IntoIterator<Item = S>) -> Self {
        Self {
            surface_ids: ids.into_iter().map(Into::into).collect(),
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ModelError::Json {
            path: path.display().to_string(),
            source,
        })
    }
}

/// A reference set known to contain three pairwise non-parallel surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedReferenceSet {
    surface_ids: Vec<String>,
}

impl ValidatedReferenceSet {
    pub fn surface_ids(&self) -> &[String] {
        &self.surface_ids
    }
}

pub fn validate_reference_set(
    model: &BuildingModel,
    refs: &ReferenceSet,
) -> Result<ValidatedReferenceSet, ModelError> {
    if refs.surface_ids.is_empty() {
        return Err(ModelError::EmptyReferenceSet);
    }
    let mut normals = Vec::with_capacity(refs.surface_ids.len());
    for id in &refs.surface_ids {
        let s = model
            .surface(id)
            .ok_or_else(|| ModelError::UnknownSurfaceId(id.clone()))?;
        normals.push(s.dominant_normal());
    }
    let non_parallel = |a: &Vec3, b: &Vec3| a.dot(b).abs() < 1.0 - PARALLEL_EPS;
    let n = normals.len();
    for i in 0..n {
        for j in i + 1..n {
            if !non_parallel(&normals[i], &normals[j]) {
                continue;
            }
            for k in j + 1..n {
                if non_parallel(&normals[i], &normals[k]) && non_parallel(&normals[j], &normals[k])
                {
                    return Ok(ValidatedReferenceSet {
                        surface_ids: refs.surface_ids.clone(),
                    });
                }
            }
        }
    }
    Err(ModelError::InsufficientConstraints)
}

/// Sampled model points with their surface normals.
#[derive(Debug, Clone, PartialEq)]
pub struct MapCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    /// Index into `surface_names` for each point.
    pub surface_index: Vec<u32>,
    pub surface_names: Vec<String>,
    pub sampling_density: f64,
}

impl MapCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn surface_of(&self, i: usize) -> &str {
        &self.surface_names[self.surface_index[i] as usize]
    }

    /// Points belonging to the listed surfaces, order preserved.
    pub fn restrict_to(&self, ids: &[String]) -> MapCloud {
        let keep: Vec<bool> = self
            .surface_names
            .iter()
            .map(|name| ids.iter().any(|id| id == name))
            .collect();
        let mut out = MapCloud {
            points: Vec::new(),
            normals: Vec::new(),
            surface_index: Vec::new(),
            surface_names: self.surface_names.clone(),
            sampling_density: self.sampling_density,
        };
        for i in 0..self.points.len() {
            if keep[self.surface_index[i] as usize] {
                out.points.push(self.points[i]);
                out.normals.push(self.normals[i]);
                out.surface_index.push(self.surface_index[i]);
            }
        }
        out
    }
}

/// Uniformly samples every triangle; the expected count per triangle is
/// exactly `area × density` (stochastic rounding of the fractional part).
pub fn sample_model(
    model: &BuildingModel,
    density: f64,
    seed: u64,
) -> Result<MapCloud, ModelError> {
    if !(density > 0.0) || !density.is_finite() {
        return Err(ModelError::InvalidDensity(density));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = MapCloud {
        points: Vec::new(),
        normals: Vec::new(),
        surface_index: Vec::new(),
        surface_names: model.surface_ids().into_iter().map(String::from).collect(),
        sampling_density: density,
    };
    for (si, surface) in model.surfaces().iter().enumerate() {
        for tri in surface.triangles() {
            let expected = tri.area() * density;
            let mut count = expected.floor() as usize;
            if rng.random::<f64>() < expected - expected.floor() {
                count += 1;
            }
            let [a, b, c] = tri.vertices;
            for _ in 0..count {
                let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
                if u + v > 1.0 {
                    u = 1.0 - u;
                    v = 1.0 - v;
                }
                cloud.points.push(a + (b - a) * u + (c - a) * v);
                cloud.normals.push(tri.normal);
                cloud.surface_index.push(si as u32);
            }
        }
    }
    Ok(cloud)
}

/// A rigid offset applied to a group of surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationGroup {
    pub surface_ids: Vec<String>,
    pub offset: RigidTransform,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeviationSpec {
    pub groups: Vec<DeviationGroup>,
}

/// Rigidly moves the listed surfaces; every other surface is copied as is.
pub fn apply_deviation(
    model: &BuildingModel,
    dev: &DeviationSpec,
) -> Result<BuildingModel, ModelError> {
    let mut surfaces = model.surfaces.clone();
    for group in &dev.groups {
        for id in &group.surface_ids {
            let s = surfaces
                .iter_mut()
                .find(|s| s.id == *id)
                .ok_or_else(|| ModelError::UnknownSurfaceId(id.clone()))?;
            if group.offset != RigidTransform::identity() {
                *s = s.transformed(&group.offset);
            }
        }
    }
    Ok(BuildingModel {
        surfaces,
        frame: model.frame.clone(),
    })
}
