//! Height field to colored triangle mesh, with PLY/OBJ export.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::HeightField;

pub const DEFAULT_VERTICAL_SCALE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub colors: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 3]>,
    /// Per-vertex colors in [0, 1].
    pub colors: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

/// Vertex `(i, j)` sits at `(j/(N-1), i/(N-1), scale * dem[i, j])`.
pub fn point_cloud(dem: &HeightField, rgb: &Tensor, vertical_scale: f64) -> Result<PointCloud> {
    let n = dem.size();
    if rgb.shape() != [3, n, n] {
        return Err(Error::Contract(format!(
            "colors {:?} do not match a {n}x{n} height field",
            rgb.shape()
        )));
    }
    if !(vertical_scale > 0.0) {
        return Err(Error::Contract(format!("vertical scale must be positive, got {vertical_scale}")));
    }
    let step = 1.0 / (n - 1) as f64;
    let h = dem.values().data();
    let c = rgb.data();
    let plane = n * n;
    let mut points = Vec::with_capacity(plane);
    let mut colors = Vec::with_capacity(plane);
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            points.push([j as f64 * step, i as f64 * step, vertical_scale * h[k] as f64]);
            colors.push([0, 1, 2].map(|ch| ((c[ch * plane + k] as f64 + 1.0) / 2.0).clamp(0.0, 1.0)));
        }
    }
    Ok(PointCloud { points, colors })
}

/// Each grid cell becomes `(v00, v01, v11)` and `(v00, v11, v10)`, both
/// counter-clockwise seen from +z.
pub fn build_mesh(dem: &HeightField, rgb: &Tensor, vertical_scale: f64) -> Result<TriMesh> {
    let cloud = point_cloud(dem, rgb, vertical_scale)?;
    let n = dem.size();
    let mut triangles = Vec::with_capacity(2 * (n - 1) * (n - 1));
    let idx = |i: usize, j: usize| (i * n + j) as u32;
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            let (v00, v01, v10, v11) = (idx(i, j), idx(i, j + 1), idx(i + 1, j), idx(i + 1, j + 1));
            triangles.push([v00, v01, v11]);
            triangles.push([v00, v11, v10]);
        }
    }
    Ok(TriMesh {
        vertices: cloud.points,
        colors: cloud.colors,
        triangles,
    })
}

impl TriMesh {
    /// Unnormalized normal of triangle `t` (right-hand rule).
    pub fn face_normal(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i as usize]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
    }
}

/// `[0,1]` color to an 8-bit channel.
pub fn to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeshFormat {
    #[default]
    PlyAscii,
    Obj,
}

impl FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ply" | "ply_ascii" | "ply-ascii" => Ok(MeshFormat::PlyAscii),
            "obj" => Ok(MeshFormat::Obj),
            other => Err(Error::Config(format!("unknown mesh format {other:?} (expected ply or obj)"))),
        }
    }
}

impl fmt::Display for MeshFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeshFormat::PlyAscii => "ply",
            MeshFormat::Obj => "obj",
        })
    }
}

pub fn write_ply(mesh: &TriMesh, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "comment heightfield mesh, unit square xy")?;
    writeln!(w, "element vertex {}", mesh.vertices.len())?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property float {p}")?;
    }
    for p in ["red", "green", "blue"] {
        writeln!(w, "property uchar {p}")?;
    }
    writeln!(w, "element face {}", mesh.triangles.len())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    writeln!(w, "end_header")?;
    for (v, c) in mesh.vertices.iter().zip(&mesh.colors) {
        writeln!(
            w,
            "{:.6} {:.6} {:.6} {} {} {}",
            v[0],
            v[1],
            v[2],
            to_u8(c[0]),
            to_u8(c[1]),
            to_u8(c[2])
        )?;
    }
    for t in &mesh.triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

pub fn write_obj(mesh: &TriMesh, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "# heightfield mesh")?;
    writeln!(w, "# vertex colors follow positions: v x y z r g b, channels in [0,1]")?;
    for (v, c) in mesh.vertices.iter().zip(&mesh.colors) {
        writeln!(
            w,
            "v {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
            v[0], v[1], v[2], c[0], c[1], c[2]
        )?;
    }
    for t in &mesh.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

pub fn export_mesh(mesh: &TriMesh, path: &Path, format: MeshFormat) -> Result<()> {
    if mesh.vertices.is_empty() || mesh.triangles.is_empty() {
        return Err(Error::Contract("refusing to export an empty mesh".into()));
    }
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    match format {
        MeshFormat::PlyAscii => write_ply(mesh, &mut w),
        MeshFormat::Obj => write_obj(mesh, &mut w),
    }
    .and_then(|_| w.flush())
    .map_err(io)
}

/// Contents of an ASCII PLY file with the vertex layout written by
/// [`write_ply`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlyMesh {
    pub vertices: Vec<[f32; 3]>,
    pub colors: Vec<[u8; 3]>,
    pub faces: Vec<Vec<u32>>,
}

/// Minimal reader for ASCII PLY with `x y z red green blue` vertices and
/// list faces.
pub fn read_ply(r: impl BufRead) -> Result<PlyMesh> {
    let mut lines = r.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((i, Err(e))) => Err(Error::Parse {
                line: i + 1,
                message: e.to_string(),
            }),
            None => Err(Error::Parse {
                line: 0,
                message: format!("unexpected end of file, expected {what}"),
            }),
        }
    };
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let (n, magic) = next("magic")?;
    if magic.trim() != "ply" {
        return Err(parse_err(n, "missing ply magic".into()));
    }
    let (mut vertex_count, mut face_count) = (None, None);
    loop {
        let (n, line) = next("end_header")?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "ascii", _] => {}
            ["format", ..] => return Err(parse_err(n, "only ascii PLY is supported".into())),
            ["element", "vertex", c] => vertex_count = Some(c.parse::<usize>().map_err(|e| parse_err(n, e.to_string()))?),
            ["element", "face", c] => face_count = Some(c.parse::<usize>().map_err(|e| parse_err(n, e.to_string()))?),
            ["end_header"] => break,
            _ => {}
        }
    }
    let vertex_count = vertex_count.ok_or_else(|| parse_err(0, "no vertex element".into()))?;
    let face_count = face_count.unwrap_or(0);
    let mut vertices = Vec::with_capacity(vertex_count);
    let mut colors = Vec::with_capacity(vertex_count);
    for _ in 0..vertex_count {
        let (n, line) = next("vertex")?;
        let w: Vec<&str> = line.split_whitespace().collect();
        if w.len() != 6 {
            return Err(parse_err(n, format!("expected 6 vertex fields, found {}", w.len())));
        }
        let f = |s: &str| s.parse::<f32>().map_err(|e| parse_err(n, e.to_string()));
        let b = |s: &str| s.parse::<u8>().map_err(|e| parse_err(n, e.to_string()));
        vertices.push([f(w[0])?, f(w[1])?, f(w[2])?]);
        colors.push([b(w[3])?, b(w[4])?, b(w[5])?]);
    }
    let mut faces = Vec::with_capacity(face_count);
    for _ in 0..face_count {
        let (n, line) = next("face")?;
        let nums = line
            .split_whitespace()
            .map(|s| s.parse::<u32>().map_err(|e| parse_err(n, e.to_string())))
            .collect::<Result<Vec<u32>>>()?;
        let (&k, rest) = nums.split_first().ok_or_else(|| parse_err(n, "empty face".into()))?;
        if rest.len() != k as usize || rest.iter().any(|&i| i as usize >= vertex_count) {
            return Err(parse_err(n, "malformed face".into()));
        }
        faces.push(rest.to_vec());
    }
    Ok(PlyMesh { vertices, colors, faces })
}

pub fn read_ply_file(path: &Path) -> Result<PlyMesh> {
    read_ply(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(n: usize, v: Vec<f32>) -> HeightField {
        HeightField::new(Tensor::from_vec(&[n, n], v).unwrap()).unwrap()
    }

    #[test]
    fn three_by_three_counts() {
        let mesh = build_mesh(&field(3, vec![0.0; 9]), &Tensor::zeros(&[3, 3, 3]), 0.25).unwrap();
        assert_eq!(mesh.vertices.len(), 9);
        assert_eq!(mesh.triangles.len(), 8);
    }

    #[test]
    fn flat_field_faces_up() {
        let mesh = build_mesh(&field(4, vec![0.0; 16]), &Tensor::zeros(&[3, 4, 4]), 0.25).unwrap();
        assert!(mesh.vertices.iter().all(|v| v[2] == 0.0));
        for t in 0..mesh.triangles.len() {
            let n = mesh.face_normal(t);
            assert!(n[2] > 0.0 && n[0] == 0.0 && n[1] == 0.0);
        }
    }

    #[test]
    fn two_by_two_direct() {
        let mesh = build_mesh(&field(2, vec![0.0, 0.0, 0.0, 1.0]), &Tensor::zeros(&[3, 2, 2]), 0.5).unwrap();
        assert_eq!(mesh.triangles, vec![[0, 1, 3], [0, 3, 2]]);
        let max_z = mesh.vertices.iter().map(|v| v[2]).fold(f64::MIN, f64::max);
        assert_eq!(max_z, 0.5);
        assert_eq!(mesh.vertices[3], [1.0, 1.0, 0.5]);
    }

    #[test]
    fn size_mismatch_and_bad_scale() {
        let f = field(2, vec![0.0; 4]);
        assert!(build_mesh(&f, &Tensor::zeros(&[3, 3, 3]), 0.25).is_err());
        assert!(build_mesh(&f, &Tensor::zeros(&[3, 2, 2]), 0.0).is_err());
    }

    #[test]
    fn color_mapping() {
        let mesh = build_mesh(&field(2, vec![0.0; 4]), &Tensor::full(&[3, 2, 2], -1.0f32), 0.25).unwrap();
        assert_eq!(mesh.colors[0].map(to_u8), [0, 0, 0]);
        assert_eq!(to_u8(1.0), 255);
        assert_eq!(to_u8(0.5), 128);
    }

    #[test]
    fn ply_round_trip_and_obj_layout() {
        let mesh = build_mesh(&field(3, (0..9).map(|v| v as f32 / 9.0).collect()), &Tensor::zeros(&[3, 3, 3]), 0.25)
            .unwrap();
        let mut buf = Vec::new();
        write_ply(&mesh, &mut buf).unwrap();
        let back = read_ply(buf.as_slice()).unwrap();
        assert_eq!(back.vertices.len(), 9);
        assert_eq!(back.faces.len(), 8);
        assert_eq!(back.faces[0], vec![0, 1, 4]);
        assert_eq!(back.colors[0], [128, 128, 128]);

        let mut obj = Vec::new();
        write_obj(&mesh, &mut obj).unwrap();
        let text = String::from_utf8(obj).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 9);
        assert!(text.lines().any(|l| l == "f 1 2 5"));
        assert_eq!(text.lines().find(|l| l.starts_with("v ")).unwrap().split_whitespace().count(), 7);
    }

    #[test]
    fn empty_mesh_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let empty = TriMesh {
            vertices: vec![],
            colors: vec![],
            triangles: vec![],
        };
        assert!(matches!(
            export_mesh(&empty, &dir.path().join("m.ply"), MeshFormat::PlyAscii),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn malformed_ply_reports_line() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nend_header\n0 0 zero 1 2 3\n";
        match read_ply(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }
}
