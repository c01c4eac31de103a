//! CSV ingestion and the on-disk formats emitted by the pipeline.
//!
//! Orientation inputs are recognised by their header:
//! `t,qw,qx,qy,qz` (quaternions), `t,x1,x2,x3,x4` (unit axis then angle in
//! radians) or `t,o1,o2,o3` (precomputed 3D embeddings). Every writer builds
//! the whole file in memory and renames it into place, so readers never see a
//! half-written file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{KidsError, Result};
use crate::kinematics::{
    quaternions_to_axis_angle_series, AxisAngleOrientation, EmbeddingSeries, EmbeddingSource,
    Quaternion,
};
use crate::metrics::GroundTruthSegment;
use crate::segmentation::Segment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputLayout {
    Quaternion,
    AxisAngle,
    Embedding,
}

impl InputLayout {
    pub fn header(self) -> &'static [&'static str] {
        match self {
            InputLayout::Quaternion => &["t", "qw", "qx", "qy", "qz"],
            InputLayout::AxisAngle => &["t", "x1", "x2", "x3", "x4"],
            InputLayout::Embedding => &["t", "o1", "o2", "o3"],
        }
    }

    fn detect(header: &[String]) -> Option<Self> {
        [InputLayout::Quaternion, InputLayout::AxisAngle, InputLayout::Embedding]
            .into_iter()
            .find(|l| l.header().iter().copied().eq(header.iter().map(String::as_str)))
    }
}

/// Rows of numbers from a CSV with the expected header.
fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    KidsError::parse(path, format!("row {}: `{f}` is not a number", n + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn csv_error(path: &Path, e: csv::Error) -> KidsError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => KidsError::io(path, source),
        other => KidsError::parse(path, format!("{other:?}")),
    }
}

/// A parsed orientation file at its native rate.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationInput {
    pub layout: InputLayout,
    pub series: EmbeddingSeries,
}

/// Read any of the three input layouts and embed it.
///
/// Quaternion and axis-angle inputs go through the ADR map. Embedding files are
/// taken as-is and tagged with `embedding_source`; tagging them `Adr` checks
/// every point against the shell.
pub fn read_orientation_csv(
    path: &Path,
    embedding_source: EmbeddingSource,
) -> Result<OrientationInput> {
    let (header, rows) = read_numeric_csv(path)?;
    let layout = InputLayout::detect(&header).ok_or_else(|| {
        KidsError::parse(
            path,
            format!(
                "unrecognised header `{}`; expected `t,qw,qx,qy,qz`, `t,x1,x2,x3,x4` or `t,o1,o2,o3`",
                header.join(",")
            ),
        )
    })?;
    if rows.is_empty() {
        return Err(KidsError::parse(path, "no data rows"));
    }
    let timestamps: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let with_row = |n: usize, e: KidsError| match e {
        KidsError::InvalidInput(m) => KidsError::parse(path, format!("row {}: {m}", n + 1)),
        other => other,
    };
    let series = match layout {
        InputLayout::Quaternion => {
            let qs = rows
                .iter()
                .enumerate()
                .map(|(n, r)| {
                    Quaternion::new(r[1], r[2], r[3], r[4])
                        .normalized()
                        .map_err(|e| with_row(n, e))
                })
                .collect::<Result<Vec<_>>>()?;
            let aa = quaternions_to_axis_angle_series(&qs)
                .map_err(|e| KidsError::parse(path, e.to_string()))?;
            EmbeddingSeries::from_axis_angle(&aa, timestamps)
        }
        InputLayout::AxisAngle => {
            let aa = rows
                .iter()
                .enumerate()
                .map(|(n, r)| {
                    AxisAngleOrientation::new(Vector3::new(r[1], r[2], r[3]), r[4])
                        .map_err(|e| with_row(n, e))
                })
                .collect::<Result<Vec<_>>>()?;
            EmbeddingSeries::from_axis_angle(&aa, timestamps)
        }
        InputLayout::Embedding => {
            let pts = rows.iter().map(|r| Vector3::new(r[1], r[2], r[3])).collect();
            EmbeddingSeries::new(pts, timestamps, embedding_source)
        }
    }
    .map_err(|e| match e {
        KidsError::InvalidInput(m) => KidsError::parse(path, m),
        other => other,
    })?;
    Ok(OrientationInput { layout, series })
}

fn push_row(out: &mut String, fields: &[f64]) {
    for (n, f) in fields.iter().enumerate() {
        if n > 0 {
            out.push(',');
        }
        write!(out, "{f}").expect("writing to a String");
    }
    out.push('\n');
}

pub fn render_axis_angle_csv(samples: &[AxisAngleOrientation], timestamps: &[f64]) -> String {
    let mut out = String::from("t,x1,x2,x3,x4\n");
    for (x, t) in samples.iter().zip(timestamps) {
        let a = x.axis();
        push_row(&mut out, &[*t, a.x, a.y, a.z, x.angle()]);
    }
    out
}

pub fn render_quaternion_csv(samples: &[Quaternion], timestamps: &[f64]) -> String {
    let mut out = String::from("t,qw,qx,qy,qz\n");
    for (q, t) in samples.iter().zip(timestamps) {
        push_row(&mut out, &[*t, q.w, q.i, q.j, q.k]);
    }
    out
}

pub fn render_embedding_csv(series: &EmbeddingSeries) -> String {
    let mut out = String::from("t,o1,o2,o3\n");
    for (o, t) in series.points.iter().zip(&series.timestamps) {
        push_row(&mut out, &[*t, o.x, o.y, o.z]);
    }
    out
}

pub fn render_labels_csv(gt: &[GroundTruthSegment]) -> String {
    let mut out = String::from("segment_start,segment_end\n");
    for g in gt {
        writeln!(out, "{},{}", g.start, g.end).expect("writing to a String");
    }
    out
}

fn parse_index(path: &Path, row: usize, field: &str) -> Result<usize> {
    field.trim().parse::<usize>().map_err(|_| {
        KidsError::parse(path, format!("row {row}: `{field}` is not a non-negative integer"))
    })
}

fn read_table(path: &Path, expected: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if !header.iter().eq(expected.iter().copied()) {
        return Err(KidsError::parse(
            path,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    reader
        .records()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<GroundTruthSegment>> {
    read_table(path, &["segment_start", "segment_end"])?
        .iter()
        .enumerate()
        .map(|(n, r)| {
            let start = parse_index(path, n + 1, &r[0])?;
            let end = parse_index(path, n + 1, &r[1])?;
            GroundTruthSegment::new(start, end)
                .map_err(|e| KidsError::parse(path, format!("row {}: {e}", n + 1)))
        })
        .collect()
}

pub fn render_segments_csv(segments: &[Segment]) -> String {
    let mut out = String::from("changepoint_idx,duration,start_idx\n");
    for s in segments {
        writeln!(out, "{},{},{}", s.changepoint, s.duration, s.start).expect("writing to a String");
    }
    out
}

pub fn read_segments_csv(path: &Path) -> Result<Vec<Segment>> {
    read_table(path, &["changepoint_idx", "duration", "start_idx"])?
        .iter()
        .enumerate()
        .map(|(n, r)| {
            let num = |f: &str| {
                f.parse::<f64>().map_err(|_| {
                    KidsError::parse(path, format!("row {}: `{f}` is not a number", n + 1))
                })
            };
            Ok(Segment {
                changepoint: parse_index(path, n + 1, &r[0])?,
                duration: num(&r[1])?,
                start: num(&r[2])?,
            })
        })
        .collect()
}

/// `k,raw,postprocessed` for `k = 0..=T`.
pub fn render_trace_csv(raw: &[f64], postprocessed: &[f64]) -> String {
    let mut out = String::from("k,raw,postprocessed\n");
    for (k, (r, p)) in raw.iter().zip(postprocessed).enumerate() {
        writeln!(out, "{k},{r},{p}").expect("writing to a String");
    }
    out
}

/// Write `contents` to a sibling temp file and rename it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = temp_path(path);
    fs::write(&tmp, contents).map_err(|e| KidsError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        KidsError::io(path, e)
    })
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Stage a batch of files and move them into `dir` only once every file has
/// been written.
pub fn write_all_atomic(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| KidsError::io(dir, e))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let target = dir.join(name);
        let tmp = temp_path(&target);
        if let Err(e) = fs::write(&tmp, bytes) {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(KidsError::io(&tmp, e));
        }
        staged.push((tmp, target));
    }
    for (tmp, target) in &staged {
        fs::rename(tmp, target).map_err(|e| KidsError::io(target, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn layouts_by_header() {
        let dir = tempfile::tempdir().unwrap();
        let q = write(dir.path(), "q.csv", "t,qw,qx,qy,qz\n0,1,0,0,0\n0.1,0.7071067811865476,0,0,0.7071067811865476\n");
        let inp = read_orientation_csv(&q, EmbeddingSource::Adr).unwrap();
        assert_eq!(inp.layout, InputLayout::Quaternion);
        assert!((inp.series.points[1] - Vector3::new(0.0, 0.0, 1.5)).norm() < 1e-12);

        let a = write(dir.path(), "a.csv", &format!("t,x1,x2,x3,x4\n0,0,0,1,{PI}\n"));
        let inp = read_orientation_csv(&a, EmbeddingSource::Adr).unwrap();
        assert_eq!(inp.layout, InputLayout::AxisAngle);
        assert!((inp.series.points[0] - Vector3::new(0.0, 0.0, 2.0)).norm() < 1e-12);

        let e = write(dir.path(), "e.csv", "t, o1, o2, o3\n0,5,-3,0.5\n1,4,4,4\n");
        let inp = read_orientation_csv(&e, EmbeddingSource::External).unwrap();
        assert_eq!(inp.layout, InputLayout::Embedding);
        assert!(inp.series.is_unconstrained());
        assert!(read_orientation_csv(&e, EmbeddingSource::Adr).is_err());
    }

    #[test]
    fn bad_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let h = write(dir.path(), "h.csv", "time,a,b\n0,1,2\n");
        assert!(matches!(read_orientation_csv(&h, EmbeddingSource::Adr), Err(KidsError::Parse { .. })));
        let n = write(dir.path(), "n.csv", "t,o1,o2,o3\n0,x,1,1\n");
        assert!(matches!(read_orientation_csv(&n, EmbeddingSource::External), Err(KidsError::Parse { .. })));
        let z = write(dir.path(), "z.csv", "t,qw,qx,qy,qz\n0,0,0,0,0\n");
        assert!(matches!(read_orientation_csv(&z, EmbeddingSource::Adr), Err(KidsError::Parse { .. })));
        let t = write(dir.path(), "t.csv", "t,o1,o2,o3\n1,1,0,0\n1,1,0,0\n");
        assert!(matches!(read_orientation_csv(&t, EmbeddingSource::External), Err(KidsError::Parse { .. })));
        let e = write(dir.path(), "e.csv", "t,o1,o2,o3\n");
        assert!(read_orientation_csv(&e, EmbeddingSource::External).is_err());
        let missing = dir.path().join("missing.csv");
        assert!(matches!(read_orientation_csv(&missing, EmbeddingSource::Adr), Err(KidsError::Io { .. })));
    }

    #[test]
    fn labels_and_segments_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let gt = vec![GroundTruthSegment::new(1, 31).unwrap(), GroundTruthSegment::new(33, 60).unwrap()];
        let p = dir.path().join("labels.csv");
        write_atomic(&p, render_labels_csv(&gt).as_bytes()).unwrap();
        assert_eq!(read_labels_csv(&p).unwrap(), gt);

        let segs = vec![Segment { changepoint: 31, duration: 29.75, start: 1.25 }];
        let p = dir.path().join("segments.csv");
        write_atomic(&p, render_segments_csv(&segs).as_bytes()).unwrap();
        assert_eq!(read_segments_csv(&p).unwrap(), segs);
        assert!(read_labels_csv(&p).is_err());
    }

    #[test]
    fn axis_angle_render_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let xs = vec![
            AxisAngleOrientation::new(Vector3::new(0.6, 0.0, 0.8), 1.0).unwrap(),
            AxisAngleOrientation::new(Vector3::new(0.0, 1.0, 0.0), 3.0).unwrap(),
        ];
        let p = dir.path().join("aa.csv");
        fs::write(&p, render_axis_angle_csv(&xs, &[0.0, 1.0 / 30.0])).unwrap();
        let back = read_orientation_csv(&p, EmbeddingSource::Adr).unwrap();
        let direct = EmbeddingSeries::from_axis_angle(&xs, vec![0.0, 1.0 / 30.0]).unwrap();
        assert_eq!(back.series, direct);
    }

    #[test]
    fn staged_writes_leave_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        write_all_atomic(&out, &[("a.txt", b"1".to_vec()), ("b.txt", b"2".to_vec())]).unwrap();
        let mut names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(names, vec!["a.txt", "b.txt"]);
    }
}
