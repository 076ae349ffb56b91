//! Plain-text scan files and 16-bit PGM density images.
//!
//! Scan CSV: header `x,y,z[,class]`. Fused scan CSV: `x,y,z,d,w`.
//! PGM: binary P5, maxval 65535, big-endian; score = value / 65535.

use crate::fusion::Scan;
use crate::geometry::Vec3;
use crate::sensor_sim::{DensityImage, HitClass};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("pgm: {0}")]
    Pgm(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Points with optional per-point labels, as read from a scan CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanFile {
    pub points: Vec<Vec3>,
    pub classes: Option<Vec<HitClass>>,
}

pub fn format_scan_csv(points: &[Vec3], classes: Option<&[HitClass]>) -> String {
    let mut out = String::from(if classes.is_some() {
        "x,y,z,class\n"
    } else {
        "x,y,z\n"
    });
    for (i, p) in points.iter().enumerate() {
        let _ = write!(out, "{},{},{}", p.x, p.y, p.z);
        if let Some(c) = classes {
            let _ = write!(out, ",{}", c[i].as_str());
        }
        out.push('\n');
    }
    out
}

fn parse_f64(s: &str, line: usize) -> Result<f64, FormatError> {
    s.trim().parse().map_err(|_| FormatError::Csv {
        line,
        message: format!("not a number: {s:?}"),
    })
}

fn header_columns(text: &str) -> Result<Vec<String>, FormatError> {
    let header = text.lines().next().ok_or(FormatError::Csv {
        line: 1,
        message: "missing header".into(),
    })?;
    Ok(header
        .split(',')
        .map(|c| c.trim().to_ascii_lowercase())
        .collect())
}

pub fn parse_scan_csv(text: &str) -> Result<ScanFile, FormatError> {
    let cols = header_columns(text)?;
    let with_class = match cols
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .as_slice()
    {
        ["x", "y", "z"] => false,
        ["x", "y", "z", "class"] => true,
        _ => {
            return Err(FormatError::Csv {
                line: 1,
                message: format!("expected header x,y,z[,class], got {:?}", cols.join(",")),
            })
        }
    };
    let mut points = Vec::new();
    let mut classes = Vec::new();
    for (i, raw) in text.lines().enumerate().skip(1) {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != cols.len() {
            return Err(FormatError::Csv {
                line,
                message: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        points.push(Vec3::new(
            parse_f64(fields[0], line)?,
            parse_f64(fields[1], line)?,
            parse_f64(fields[2], line)?,
        ));
        if with_class {
            classes.push(
                HitClass::parse(fields[3].trim()).ok_or_else(|| FormatError::Csv {
                    line,
                    message: format!("unknown class {:?}", fields[3]),
                })?,
            );
        }
    }
    Ok(ScanFile {
        points,
        classes: with_class.then_some(classes),
    })
}

pub fn read_scan_csv(path: &Path) -> Result<ScanFile, FormatError> {
    parse_scan_csv(&std::fs::read_to_string(path).map_err(io_err(path))?)
}

pub fn write_scan_csv(
    path: &Path,
    points: &[Vec3],
    classes: Option<&[HitClass]>,
) -> Result<(), FormatError> {
    std::fs::write(path, format_scan_csv(points, classes)).map_err(io_err(path))
}

/// `x,y,z,d,w`; missing densities or weights are written as 1.
pub fn format_fused_csv(scan: &Scan) -> String {
    let mut out = String::from("x,y,z,d,w\n");
    for (i, p) in scan.points.iter().enumerate() {
        let d = scan.densities.as_ref().map_or(1.0, |d| d[i]);
        let _ = writeln!(out, "{},{},{},{},{}", p.x, p.y, p.z, d, scan.weight(i));
    }
    out
}

pub fn parse_fused_csv(text: &str) -> Result<Scan, FormatError> {
    let cols = header_columns(text)?;
    if cols != ["x", "y", "z", "d", "w"] {
        return Err(FormatError::Csv {
            line: 1,
            message: "expected header x,y,z,d,w".into(),
        });
    }
    let (mut points, mut densities, mut weights) = (Vec::new(), Vec::new(), Vec::new());
    for (i, raw) in text.lines().enumerate().skip(1) {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = raw
            .split(',')
            .map(|f| parse_f64(f, line))
            .collect::<Result<_, _>>()?;
        if v.len() != 5 {
            return Err(FormatError::Csv {
                line,
                message: format!("expected 5 fields, got {}", v.len()),
            });
        }
        points.push(Vec3::new(v[0], v[1], v[2]));
        densities.push(v[3]);
        weights.push(v[4]);
    }
    Ok(Scan {
        points,
        densities: Some(densities),
        weights: Some(weights),
    })
}

pub fn write_fused_csv(path: &Path, scan: &Scan) -> Result<(), FormatError> {
    std::fs::write(path, format_fused_csv(scan)).map_err(io_err(path))
}

pub fn encode_pgm(image: &DensityImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", image.width, image.height).into_bytes();
    out.reserve(image.data.len() * 2);
    for &v in &image.data {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<DensityImage, FormatError> {
    // header: magic, width, height, maxval separated by whitespace; comments start with '#'
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(FormatError::Pgm("truncated header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if tokens[0] != "P5" {
        return Err(FormatError::Pgm(format!(
            "unsupported magic {:?}",
            tokens[0]
        )));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| FormatError::Pgm(format!("bad number {s:?}")))
    };
    let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(FormatError::Pgm("invalid dimensions or maxval".into()));
    }
    let wide = maxval > 255;
    let bpp = if wide { 2 } else { 1 };
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() < width * height * bpp {
        return Err(FormatError::Pgm(format!(
            "expected {} raster bytes, found {}",
            width * height * bpp,
            raster.len()
        )));
    }
    let data = (0..width * height)
        .map(|i| {
            let v = if wide {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as f64
            } else {
                raster[i] as f64
            };
            v / maxval as f64
        })
        .collect();
    Ok(DensityImage {
        width,
        height,
        data,
    })
}

pub fn read_pgm(path: &Path) -> Result<DensityImage, FormatError> {
    decode_pgm(&std::fs::read(path).map_err(io_err(path))?)
}

pub fn write_pgm(path: &Path, image: &DensityImage) -> Result<(), FormatError> {
    std::fs::write(path, encode_pgm(image)).map_err(io_err(path))
}
