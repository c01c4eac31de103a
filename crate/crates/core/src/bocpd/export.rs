//! Dense CSV and portable-graymap exports of the run-length posterior.

use std::fmt::Write as _;
use std::path::Path;

use super::RunLengthPosterior;
use crate::error::Result;

impl RunLengthPosterior {
    /// Dense `(T+1)×(T+1)` matrix, rows = run length `ζ`, columns = step `k`.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.columns.len();
        let mut rows = vec![vec![0.0; n]; n];
        for (k, col) in self.columns.iter().enumerate() {
            for &(z, p) in &col.entries {
                rows[z][k] = p;
            }
        }
        rows
    }

    /// Header `zeta,0,1,...,T`, then one row per run length.
    pub fn render_csv(&self) -> String {
        let n = self.columns.len();
        let mut out = String::from("zeta");
        for k in 0..n {
            write!(out, ",{k}").expect("writing to a String");
        }
        out.push('\n');
        for (z, row) in self.to_dense().iter().enumerate() {
            write!(out, "{z}").expect("writing to a String");
            for v in row {
                write!(out, ",{v}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.render_csv().as_bytes())
    }

    /// Binary PGM (P5) image of the posterior, one pixel per `(ζ, k)` with
    /// `ζ = 0` on the top row. Each row is scaled by its own maximum; darker
    /// pixels mean more probability.
    pub fn graymap(&self) -> Vec<u8> {
        let n = self.columns.len();
        let dense = self.to_dense();
        let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
        for row in &dense {
            let max = row.iter().copied().fold(0.0, f64::max);
            out.extend(row.iter().map(|&v| {
                if max > 0.0 {
                    255 - (255.0 * v / max).round().clamp(0.0, 255.0) as u8
                } else {
                    255
                }
            }));
        }
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.graymap())
    }
}

#[cfg(test)]
mod tests {
    use crate::bocpd::{run_inference, HazardConfig, NormalWishartParams};
    use nalgebra::Vector3;

    #[test]
    fn dense_layout_and_graymap() {
        let pts: Vec<_> = (0..5).map(|i| Vector3::new(1.0 + 0.1 * i as f64, 0.0, 0.0)).collect();
        let post = run_inference(&pts, &NormalWishartParams::informative(), &HazardConfig::default(), None).unwrap();
        let dense = post.to_dense();
        assert_eq!(dense.len(), 6);
        for (z, row) in dense.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                if z > k {
                    assert_eq!(*v, 0.0);
                }
            }
        }
        let pgm = post.graymap();
        assert!(pgm.starts_with(b"P5\n6 6\n255\n"));
        assert_eq!(pgm.len(), b"P5\n6 6\n255\n".len() + 36);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("post.csv");
        post.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("zeta,0,1,2,3,4,5\n0,1,"));
    }
}
