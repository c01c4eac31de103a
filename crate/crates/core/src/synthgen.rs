//! Synthetic axis-of-rotation generation.
//!
//! A unit cube is built face by face as a regular vertex grid, and every
//! vertex is pushed onto the unit sphere. Two projections are available:
//! plain Euclidean normalisation, which clumps vertices near the cube
//! corners, and the ellipsoidal face projection, which spreads them out.
//! Crossing the resulting axes with a descending set of rotation angles
//! gives the synthetic axis-angle dataset.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{KidsError, Result};
use crate::kinematics::AxisAngleOrientation;

const SURFACE_TOL: f64 = 1e-9;

/// One of the six outward cube face normals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum FaceNormal {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl FaceNormal {
    /// Face order used when assembling the cube mesh.
    pub const ALL: [FaceNormal; 6] = [
        FaceNormal::PosX,
        FaceNormal::NegX,
        FaceNormal::PosY,
        FaceNormal::NegY,
        FaceNormal::PosZ,
        FaceNormal::NegZ,
    ];

    pub fn vector(self) -> Vector3<f64> {
        match self {
            FaceNormal::PosX => Vector3::x(),
            FaceNormal::NegX => -Vector3::x(),
            FaceNormal::PosY => Vector3::y(),
            FaceNormal::NegY => -Vector3::y(),
            FaceNormal::PosZ => Vector3::z(),
            FaceNormal::NegZ => -Vector3::z(),
        }
    }

    /// In-plane basis `(u, v)` with `u × v = normal`.
    pub fn tangents(self) -> (Vector3<f64>, Vector3<f64>) {
        let (x, y, z) = (Vector3::x(), Vector3::y(), Vector3::z());
        match self {
            FaceNormal::PosX => (y, z),
            FaceNormal::NegX => (z, y),
            FaceNormal::PosY => (z, x),
            FaceNormal::NegY => (x, z),
            FaceNormal::PosZ => (x, y),
            FaceNormal::NegZ => (y, x),
        }
    }
}

/// A cube face: its normal plus the number of vertices along each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceSpec {
    pub normal: FaceNormal,
    pub resolution: usize,
}

impl FaceSpec {
    pub fn new(normal: FaceNormal, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(KidsError::invalid(format!(
                "face resolution must be at least 2, got {resolution}"
            )));
        }
        Ok(Self { normal, resolution })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeVertex {
    pub position: Vector3<f64>,
    pub face: FaceNormal,
    /// Row-major index within the face grid.
    pub index: usize,
}

/// A direction on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitAxis(Vector3<f64>);

impl UnitAxis {
    /// Normalises `v`; fails on the zero vector.
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(KidsError::invalid("cannot normalise a zero or non-finite vector"));
        }
        Ok(UnitAxis(v / n))
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Vector3<f64> {
        self.0
    }
}

/// Build the `resolution²` vertex grid of one face.
///
/// Vertex `(i, j)` sits at `normal + a·u + b·v` with
/// `a = -1 + 2i/(Υ-1)`, `b = -1 + 2j/(Υ-1)`; indices run row-major (`j` inner).
pub fn build_face_grid(face: FaceSpec) -> Result<Vec<CubeVertex>> {
    let n = face.resolution;
    if n < 2 {
        return Err(KidsError::invalid(format!(
            "face resolution must be at least 2, got {n}"
        )));
    }
    let normal = face.normal.vector();
    let (u, v) = face.normal.tangents();
    let step = 2.0 / (n - 1) as f64;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let a = -1.0 + step * i as f64;
        for j in 0..n {
            let b = -1.0 + step * j as f64;
            out.push(CubeVertex {
                position: normal + u * a + v * b,
                face: face.normal,
                index: i * n + j,
            });
        }
    }
    Ok(out)
}

/// All six face grids concatenated (+x, -x, +y, -y, +z, -z).
///
/// Shared edge and corner vertices appear once per face that owns them, so the
/// result always holds `6·Υ²` vertices.
pub fn build_cube_mesh(resolution: usize) -> Result<Vec<CubeVertex>> {
    let mut out = Vec::with_capacity(6 * resolution * resolution);
    for normal in FaceNormal::ALL {
        out.extend(build_face_grid(FaceSpec::new(normal, resolution)?)?);
    }
    Ok(out)
}

/// Drop vertices that coincide (within 1e-9) with an earlier one.
pub fn dedupe_vertices(vertices: &[CubeVertex]) -> Vec<CubeVertex> {
    let mut keep: Vec<CubeVertex> = Vec::with_capacity(vertices.len());
    for v in vertices {
        if !keep
            .iter()
            .any(|k| (k.position - v.position).amax() <= SURFACE_TOL)
        {
            keep.push(*v);
        }
    }
    keep
}

pub fn project_euclidean(v: &Vector3<f64>) -> Result<UnitAxis> {
    UnitAxis::new(*v)
}

/// Ellipsoidal projection of a cube-surface point onto the unit sphere.
///
/// Each coordinate is scaled by `sqrt(1 - p²/2 - q²/2 + p²q²/3)` where `p, q`
/// are the other two coordinates. Face centres are fixed points and the
/// result has unit norm whenever one coordinate is ±1.
pub fn project_ellipsoidal(v: &Vector3<f64>) -> Result<UnitAxis> {
    if v.iter().any(|c| !c.is_finite() || c.abs() > 1.0 + SURFACE_TOL) {
        return Err(KidsError::invalid(format!(
            "point {v:?} lies outside the cube [-1, 1]³"
        )));
    }
    if !v.iter().any(|c| (c.abs() - 1.0).abs() <= SURFACE_TOL) {
        return Err(KidsError::invalid(format!(
            "point {v:?} is not on the cube surface"
        )));
    }
    let (x2, y2, z2) = (v.x * v.x, v.y * v.y, v.z * v.z);
    let scale = |a2: f64, b2: f64| (1.0 - 0.5 * a2 - 0.5 * b2 + a2 * b2 / 3.0).max(0.0).sqrt();
    let e = Vector3::new(v.x * scale(y2, z2), v.y * scale(x2, z2), v.z * scale(x2, y2));
    Ok(UnitAxis(e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Projection {
    Euclidean,
    #[default]
    Ellipsoidal,
}

/// Project every vertex with the chosen method.
pub fn project_vertices(vertices: &[CubeVertex], projection: Projection) -> Result<Vec<UnitAxis>> {
    vertices
        .iter()
        .map(|v| match projection {
            Projection::Euclidean => project_euclidean(&v.position),
            Projection::Ellipsoidal => project_ellipsoidal(&v.position),
        })
        .collect()
}

/// `{kπ/n : k = n, n-1, ..., 1}`, descending.
pub fn generate_angle_set(n: usize) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(KidsError::invalid("angle count must be at least 1"));
    }
    Ok((1..=n).rev().map(|k| k as f64 * PI / n as f64).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOrientationDataset {
    pub rows: Vec<AxisAngleOrientation>,
    pub axis_count: usize,
    pub angle_count: usize,
}

impl SyntheticOrientationDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Cartesian product of axes and angles, axis-major.
pub fn generate_synthetic_dataset(
    axes: &[UnitAxis],
    angles: &[f64],
) -> Result<SyntheticOrientationDataset> {
    if axes.is_empty() || angles.is_empty() {
        return Err(KidsError::invalid("axes and angles must both be nonempty"));
    }
    let mut rows = Vec::with_capacity(axes.len() * angles.len());
    for axis in axes {
        for &angle in angles {
            rows.push(AxisAngleOrientation::new(*axis.as_vector(), angle)?);
        }
    }
    Ok(SyntheticOrientationDataset {
        rows,
        axis_count: axes.len(),
        angle_count: angles.len(),
    })
}

/// Write `a1,a2,a3,angle_rad` rows. Returns the number of data rows written.
pub fn export_dataset_csv(dataset: &SyntheticOrientationDataset, path: &Path) -> Result<usize> {
    if path.as_os_str().is_empty() {
        return Err(KidsError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty output path"),
        ));
    }
    let file = File::create(path).map_err(|e| KidsError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write_all = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "a1,a2,a3,angle_rad")?;
        for row in &dataset.rows {
            let a = row.axis();
            writeln!(w, "{},{},{},{}", a.x, a.y, a.z, row.angle())?;
        }
        w.flush()
    };
    write_all(&mut w).map_err(|e| KidsError::io(path, e))?;
    Ok(dataset.rows.len())
}

/// Write the axes alone as `a1,a2,a3`.
pub fn export_axes_csv(axes: &[UnitAxis], path: &Path) -> Result<usize> {
    let file = File::create(path).map_err(|e| KidsError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write_all = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "a1,a2,a3")?;
        for a in axes {
            let v = a.as_vector();
            writeln!(w, "{},{},{}", v.x, v.y, v.z)?;
        }
        w.flush()
    };
    write_all(&mut w).map_err(|e| KidsError::io(path, e))?;
    Ok(axes.len())
}

/// Smallest great-circle angle between any two axes, in radians.
pub fn min_pairwise_angle(axes: &[UnitAxis]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in axes.iter().enumerate() {
        for b in &axes[i + 1..] {
            let cross = a.0.cross(&b.0).norm();
            let dot = a.0.dot(&b.0);
            best = best.min(cross.atan2(dot));
        }
    }
    best
}
