//! File formats: ASCII PLY point clouds, PGM images and the depth sidecar JSON.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CameraIntrinsics, DepthImage, GeometryError, GrayImage, PointCloud, Vec3};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed {kind} file: {msg}")]
    Format { kind: &'static str, msg: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("sidecar json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn ply_err(msg: impl Into<String>) -> IoError {
    IoError::Format { kind: "PLY", msg: msg.into() }
}

fn pgm_err(msg: impl Into<String>) -> IoError {
    IoError::Format { kind: "PGM", msg: msg.into() }
}

pub fn write_ply(cloud: &PointCloud, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", cloud.len())?;
    writeln!(out, "property float x")?;
    writeln!(out, "property float y")?;
    writeln!(out, "property float z")?;
    if cloud.colors().is_some() {
        writeln!(out, "property uchar red")?;
        writeln!(out, "property uchar green")?;
        writeln!(out, "property uchar blue")?;
    }
    writeln!(out, "end_header")?;
    for (i, p) in cloud.points().iter().enumerate() {
        match cloud.colors() {
            Some(c) => writeln!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, c[i][0], c[i][1], c[i][2])?,
            None => writeln!(out, "{} {} {}", p.x, p.y, p.z)?,
        }
    }
    Ok(())
}

pub fn save_ply(cloud: &PointCloud, path: &Path) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_ply(cloud, &mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn read_ply(input: impl Read) -> Result<PointCloud, IoError> {
    let mut lines = BufReader::new(input).lines();
    let mut next_line = || -> Result<Option<String>, IoError> {
        lines
            .next()
            .transpose()
            .map_err(|source| IoError::Io { path: PathBuf::from("<ply>"), source })
    };
    if next_line()?.as_deref().map(str::trim) != Some("ply") {
        return Err(ply_err("missing 'ply' magic"));
    }
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    loop {
        let line = next_line()?.ok_or_else(|| ply_err("unexpected end of header"))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "ascii", "1.0"] => {}
            ["format", other, ..] => return Err(ply_err(format!("unsupported format '{other}'"))),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| ply_err("bad vertex count"))?);
            }
            ["element", name, _] => return Err(ply_err(format!("unsupported element '{name}'"))),
            ["property", ty, name] => {
                let ok = match *name {
                    "x" | "y" | "z" => matches!(*ty, "float" | "double" | "float32" | "float64"),
                    "red" | "green" | "blue" => matches!(*ty, "uchar" | "uint8"),
                    _ => return Err(ply_err(format!("unsupported property '{name}'"))),
                };
                if !ok {
                    return Err(ply_err(format!("property '{name}' has unsupported type '{ty}'")));
                }
                props.push(name.to_string());
            }
            ["end_header"] => break,
            [] => {}
            _ => return Err(ply_err(format!("unexpected header line '{line}'"))),
        }
    }
    let count = count.ok_or_else(|| ply_err("missing vertex element"))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (xi, yi, zi) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(ply_err("x, y and z properties are required")),
    };
    let rgb = match (col("red"), col("green"), col("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        (None, None, None) => None,
        _ => return Err(ply_err("partial color properties")),
    };
    let mut points = Vec::with_capacity(count);
    let mut colors = Vec::with_capacity(if rgb.is_some() { count } else { 0 });
    while points.len() < count {
        let line = next_line()?.ok_or_else(|| ply_err("fewer vertices than declared"))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != props.len() {
            return Err(ply_err(format!("vertex line has {} fields, expected {}", fields.len(), props.len())));
        }
        let num = |i: usize| fields[i].parse::<f64>().map_err(|_| ply_err(format!("bad number '{}'", fields[i])));
        points.push(Vec3::new(num(xi)?, num(yi)?, num(zi)?));
        if let Some([r, g, b]) = rgb {
            let byte = |i: usize| fields[i].parse::<u8>().map_err(|_| ply_err(format!("bad color '{}'", fields[i])));
            colors.push([byte(r)?, byte(g)?, byte(b)?]);
        }
    }
    Ok(match rgb {
        Some(_) => PointCloud::with_colors(points, colors)?,
        None => PointCloud::new(points)?,
    })
}

pub fn load_ply(path: &Path) -> Result<PointCloud, IoError> {
    read_ply(fs::File::open(path).map_err(io_err(path))?)
}

/// Raw PGM contents: samples in file units plus the declared maximum value.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

fn pgm_header_token(bytes: &[u8], pos: &mut usize) -> Result<String, IoError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(pgm_err("truncated header"));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Parses P2 (ASCII) or P5 (binary, 8- or 16-bit big-endian) graymaps.
pub fn parse_pgm(bytes: &[u8]) -> Result<Pgm, IoError> {
    let mut pos = 0;
    let magic = pgm_header_token(bytes, &mut pos)?;
    let mut num = |what: &str| -> Result<usize, IoError> {
        pgm_header_token(bytes, &mut pos)?.parse().map_err(|_| pgm_err(format!("bad {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(pgm_err(format!("maxval {maxval} out of range")));
    }
    let n = width * height;
    let samples = match magic.as_str() {
        "P2" => {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let v: usize = pgm_header_token(bytes, &mut pos)?
                    .parse()
                    .map_err(|_| pgm_err("bad sample"))?;
                if v > maxval {
                    return Err(pgm_err("sample exceeds maxval"));
                }
                out.push(v as u16);
            }
            out
        }
        "P5" => {
            // exactly one whitespace byte separates the header from the raster
            let data = &bytes[(pos + 1).min(bytes.len())..];
            let bpp = if maxval < 256 { 1 } else { 2 };
            if data.len() < n * bpp {
                return Err(pgm_err("raster truncated"));
            }
            if bpp == 1 {
                data[..n].iter().map(|&b| b as u16).collect()
            } else {
                data[..2 * n].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
            }
        }
        other => return Err(pgm_err(format!("unsupported magic '{other}'"))),
    };
    Ok(Pgm { width, height, maxval: maxval as u16, samples })
}

pub fn encode_pgm_p5(pgm: &Pgm) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", pgm.width, pgm.height, pgm.maxval).into_bytes();
    if pgm.maxval < 256 {
        out.extend(pgm.samples.iter().map(|&s| s as u8));
    } else {
        for s in &pgm.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    out
}

pub fn gray_to_pgm(img: &GrayImage) -> Pgm {
    let samples = img.data().iter().map(|&v| (v * 255.0).round() as u16).collect();
    Pgm { width: img.width(), height: img.height(), maxval: 255, samples }
}

pub fn pgm_to_gray(pgm: &Pgm) -> GrayImage {
    let scale = 1.0 / pgm.maxval as f32;
    let data = pgm.samples.iter().map(|&s| (s as f32 * scale).min(1.0)).collect();
    GrayImage::new(pgm.width, pgm.height, data).expect("samples are bounded by maxval")
}

pub fn save_gray(img: &GrayImage, path: &Path) -> Result<(), IoError> {
    fs::write(path, encode_pgm_p5(&gray_to_pgm(img))).map_err(io_err(path))
}

pub fn load_gray(path: &Path) -> Result<GrayImage, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(pgm_to_gray(&parse_pgm(&bytes)?))
}

/// Sidecar describing how to turn a 16-bit depth PGM into meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthSidecar {
    /// Meters per PGM unit.
    pub depth_scale: f64,
    pub intrinsics: CameraIntrinsics,
}

/// Sidecar path for a depth PGM: `depth.pgm` → `depth.json`.
pub fn sidecar_path(pgm_path: &Path) -> PathBuf {
    pgm_path.with_extension("json")
}

pub fn save_depth(depth: &DepthImage, sidecar: &DepthSidecar, pgm_path: &Path) -> Result<(), IoError> {
    let samples = depth
        .data()
        .iter()
        .map(|&d| (d as f64 / sidecar.depth_scale).round().clamp(0.0, 65535.0) as u16)
        .collect();
    let pgm = Pgm { width: depth.width(), height: depth.height(), maxval: 65535, samples };
    fs::write(pgm_path, encode_pgm_p5(&pgm)).map_err(io_err(pgm_path))?;
    let json_path = sidecar_path(pgm_path);
    fs::write(&json_path, serde_json::to_vec_pretty(sidecar)?).map_err(io_err(&json_path))
}

pub fn load_depth(pgm_path: &Path) -> Result<(DepthImage, DepthSidecar), IoError> {
    let json_path = sidecar_path(pgm_path);
    let sidecar: DepthSidecar =
        serde_json::from_slice(&fs::read(&json_path).map_err(io_err(&json_path))?)?;
    sidecar.intrinsics.validate()?;
    if !(sidecar.depth_scale > 0.0) {
        return Err(IoError::Format { kind: "depth sidecar", msg: "depth_scale must be positive".into() });
    }
    let pgm = parse_pgm(&fs::read(pgm_path).map_err(io_err(pgm_path))?)?;
    let data = pgm.samples.iter().map(|&s| (s as f64 * sidecar.depth_scale) as f32).collect();
    Ok((DepthImage::new(pgm.width, pgm.height, data)?, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ply_round_trip_with_colors() {
        let cloud = PointCloud::with_colors(
            vec![Vec3::new(0.5, -1.25, 2.0), Vec3::new(1e-3, 0.0, 3.5)],
            vec![[1, 2, 3], [255, 0, 128]],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_ply(&cloud, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\n"));
        assert_eq!(read_ply(&buf[..]).unwrap(), cloud);
    }

    #[test]
    fn ply_rejects_garbage() {
        assert!(read_ply(&b"plx\n"[..]).is_err());
        let short = b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n";
        assert!(read_ply(&short[..]).is_err());
        let binary = b"ply\nformat binary_little_endian 1.0\nend_header\n";
        assert!(read_ply(&binary[..]).is_err());
    }

    #[test]
    fn pgm_p2_and_p5() {
        let p2 = b"P2\n# comment\n3 1\n10\n0 5 10\n";
        let pgm = parse_pgm(p2).unwrap();
        assert_eq!(pgm.samples, vec![0, 5, 10]);
        let gray = pgm_to_gray(&pgm);
        assert_eq!(gray.get(2, 0), 1.0);

        let wide = Pgm { width: 2, height: 1, maxval: 65535, samples: vec![1, 65000] };
        assert_eq!(parse_pgm(&encode_pgm_p5(&wide)).unwrap(), wide);
        let narrow = Pgm { width: 2, height: 2, maxval: 255, samples: vec![0, 10, 200, 255] };
        assert_eq!(parse_pgm(&encode_pgm_p5(&narrow)).unwrap(), narrow);
        assert!(parse_pgm(b"P5\n4 4\n255\n\x00\x01").is_err());
    }

    #[test]
    fn depth_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("depth.pgm");
        let depth = DepthImage::new(2, 2, vec![0.0, 0.4, 0.4123, 1.5]).unwrap();
        let sidecar = DepthSidecar { depth_scale: 1e-4, intrinsics: CameraIntrinsics::vga() };
        save_depth(&depth, &sidecar, &path).unwrap();
        let (back, sc) = load_depth(&path).unwrap();
        assert_eq!(sc, sidecar);
        for (a, b) in depth.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-4);
        }
        assert_eq!(back.get(0, 0), None);
    }
}
