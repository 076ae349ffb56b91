//! OBJ-style mesh text: `g <surface_id>` groups, `v x y z` vertices and
//! triangle `f` records with 1-based (or negative, relative) indices.

use super::{BuildingModel, ModelError, Surface};
use crate::geometry::Vec3;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

pub fn write_model(model: &BuildingModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# frame {}", model.frame());
    let mut next_index = 1usize;
    for surface in model.surfaces() {
        let _ = writeln!(out, "g {}", surface.id());
        let mut index: HashMap<(u64, u64, u64), usize> = HashMap::new();
        let mut order = Vec::new();
        let mut faces = Vec::with_capacity(surface.triangles().len());
        for tri in surface.triangles() {
            let mut face = [0usize; 3];
            for (k, v) in tri.vertices.iter().enumerate() {
                let key = (v.x.to_bits(), v.y.to_bits(), v.z.to_bits());
                face[k] = *index.entry(key).or_insert_with(|| {
                    order.push(*v);
                    next_index + order.len() - 1
                });
            }
            faces.push(face);
        }
        for v in &order {
            // `{}` prints the shortest representation that round-trips exactly
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for [a, b, c] in faces {
            let _ = writeln!(out, "f {a} {b} {c}");
        }
        next_index += order.len();
    }
    out
}

pub fn save_model(model: &BuildingModel, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, write_model(model)).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<BuildingModel, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_model(&text)
}

pub fn parse_model(text: &str) -> Result<BuildingModel, ModelError> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut groups: Vec<(String, Vec<[usize; 3]>)> = Vec::new();
    let mut frame = String::from("plan");
    let mut current: Option<usize> = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix("# frame ") {
            frame = rest.trim().to_string();
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let tag = tokens.next().unwrap_or_default();
        let args: Vec<&str> = tokens.collect();
        let parse_err = |message: String| ModelError::Parse {
            line: line_no,
            message,
        };
        match tag {
            "v" => {
                if args.len() < 3 {
                    return Err(parse_err(format!(
                        "vertex needs 3 coordinates, found {}",
                        args.len()
                    )));
                }
                let mut xyz = [0.0; 3];
                for (k, a) in args.iter().take(3).enumerate() {
                    xyz[k] = a
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| parse_err(format!("bad coordinate `{a}`")))?;
                }
                vertices.push(Vec3::from(xyz));
            }
            "g" | "o" => {
                let name = args.join(" ");
                if name.is_empty() {
                    return Err(ModelError::MissingGroupNames { line: line_no });
                }
                current = match groups.iter().position(|(n, _)| *n == name) {
                    Some(p) => Some(p),
                    None => {
                        groups.push((name, Vec::new()));
                        Some(groups.len() - 1)
                    }
                };
            }
            "f" => {
                let group = current.ok_or(ModelError::MissingGroupNames { line: line_no })?;
                if args.len() < 3 {
                    return Err(parse_err(format!(
                        "face needs at least 3 vertices, found {}",
                        args.len()
                    )));
                }
                let mut idx = Vec::with_capacity(args.len());
                for a in &args {
                    let first = a.split('/').next().unwrap_or_default();
                    let raw: i64 = first
                        .parse()
                        .map_err(|_| parse_err(format!("bad face index `{a}`")))?;
                    let resolved = if raw > 0 {
                        raw - 1
                    } else if raw < 0 {
                        vertices.len() as i64 + raw
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(parse_err(format!("face index {raw} out of range")));
                    }
                    idx.push(resolved as usize);
                }
                // fan triangulation for polygons
                for k in 1..idx.len() - 1 {
                    groups[group].1.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            "vn" | "vt" | "s" | "usemtl" | "mtllib" | "l" => {}
            other => return Err(parse_err(format!("unknown record `{other}`"))),
        }
    }

    let mut surfaces = Vec::with_capacity(groups.len());
    for (name, faces) in groups {
        if faces.is_empty() {
            continue;
        }
        let tris = faces
            .into_iter()
            .map(|[a, b, c]| [vertices[a], vertices[b], vertices[c]])
            .collect();
        surfaces.push(Surface::new(name, tris)?);
    }
    BuildingModel::new(surfaces, frame)
}
