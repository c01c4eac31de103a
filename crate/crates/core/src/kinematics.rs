//! Orientation conversions and the analytical dimension reduction (ADR).
//!
//! ADR places an axis-angle orientation on a thick spherical shell: the axis
//! gives the direction and the angle `[0, π]` maps linearly to a radius in
//! `[1, 2]`.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{KidsError, Result};

/// Angles at or below this are treated as the identity rotation.
pub const DEGENERATE_ANGLE: f64 = 1e-8;
pub const INNER_RADIUS: f64 = 1.0;
pub const OUTER_RADIUS: f64 = 2.0;
const SHELL_TOL: f64 = 1e-9;

/// A point in the 3D embedding space.
pub type Embedding3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub i: f64,
    pub j: f64,
    pub k: f64,
}

impl Quaternion {
    pub fn new(w: f64, i: f64, j: f64, k: f64) -> Self {
        Self { w, i, j, k }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.i * self.i + self.j * self.j + self.k * self.k).sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(KidsError::invalid("zero or non-finite quaternion"));
        }
        Ok(Self::new(self.w / n, self.i / n, self.j / n, self.k / n))
    }

    /// `q` and `-q` encode the same rotation; pick the one with `w ≥ 0`
    /// (and, when `w = 0`, a positive first nonzero vector component).
    pub fn canonical(&self) -> Self {
        let flip = if self.w != 0.0 {
            self.w < 0.0
        } else {
            [self.i, self.j, self.k]
                .into_iter()
                .find(|c| *c != 0.0)
                .is_some_and(|c| c < 0.0)
        };
        if flip {
            Self::new(-self.w, -self.i, -self.j, -self.k)
        } else {
            *self
        }
    }
}

/// Unit rotation axis plus rotation angle in `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisAngleOrientation {
    axis: Vector3<f64>,
    angle: f64,
}

impl AxisAngleOrientation {
    /// Validates the angle range and normalises the axis. Axes further than
    /// 1e-6 from unit length are rejected rather than silently rescaled.
    pub fn new(axis: Vector3<f64>, angle: f64) -> Result<Self> {
        if !angle.is_finite() || !(-SHELL_TOL..=PI + SHELL_TOL).contains(&angle) {
            return Err(KidsError::invalid(format!("angle {angle} outside [0, π]")));
        }
        let n = axis.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
            return Err(KidsError::invalid(format!(
                "rotation axis norm {n} is not 1"
            )));
        }
        Ok(Self {
            axis: axis / n,
            angle: angle.clamp(0.0, PI),
        })
    }

    pub fn axis(&self) -> Vector3<f64> {
        self.axis
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn to_quaternion(&self) -> Quaternion {
        let (s, c) = (0.5 * self.angle).sin_cos();
        Quaternion::new(c, self.axis.x * s, self.axis.y * s, self.axis.z * s)
    }
}

fn convert(q: &Quaternion, fallback_axis: Vector3<f64>) -> Result<AxisAngleOrientation> {
    let q = q.normalized()?.canonical();
    let v = Vector3::new(q.i, q.j, q.k);
    let s = v.norm();
    let angle = 2.0 * s.atan2(q.w);
    if angle <= DEGENERATE_ANGLE {
        return Ok(AxisAngleOrientation {
            axis: fallback_axis,
            angle: angle.max(0.0),
        });
    }
    Ok(AxisAngleOrientation {
        axis: v / s,
        angle: angle.min(PI),
    })
}

/// Convert one quaternion. The identity rotation gets the axis `(0, 0, 1)`.
pub fn quaternion_to_axis_angle(q: &Quaternion) -> Result<AxisAngleOrientation> {
    convert(q, Vector3::z())
}

/// Convert a quaternion timeseries; near-identity samples reuse the axis of
/// the previous sample so the ADR embedding does not jump.
pub fn quaternions_to_axis_angle_series(qs: &[Quaternion]) -> Result<Vec<AxisAngleOrientation>> {
    let mut prev_axis = Vector3::z();
    qs.iter()
        .enumerate()
        .map(|(n, q)| {
            let aa = convert(q, prev_axis).map_err(|e| match e {
                KidsError::InvalidInput(m) => KidsError::invalid(format!("sample {n}: {m}")),
                other => other,
            })?;
            prev_axis = aa.axis;
            Ok(aa)
        })
        .collect()
}

pub fn adr_radius(angle: f64) -> f64 {
    angle / PI + INNER_RADIUS
}

pub fn adr_embed(x: &AxisAngleOrientation) -> Embedding3 {
    x.axis * adr_radius(x.angle)
}

/// Inverse of [`adr_embed`] for points inside the `[1, 2]` shell.
pub fn adr_invert(o: &Embedding3) -> Result<AxisAngleOrientation> {
    let r = o.norm();
    if !r.is_finite() || !(INNER_RADIUS - SHELL_TOL..=OUTER_RADIUS + SHELL_TOL).contains(&r) {
        return Err(KidsError::invalid(format!(
            "embedding norm {r} outside the ADR shell [1, 2]"
        )));
    }
    Ok(AxisAngleOrientation {
        axis: o / r,
        angle: ((r - INNER_RADIUS) * PI).clamp(0.0, PI),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingSource {
    Adr,
    /// Precomputed embeddings (e.g. UMAP) taken as-is; no shell constraint.
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSeries {
    pub points: Vec<Embedding3>,
    pub timestamps: Vec<f64>,
    pub sample_rate_hz: Option<f64>,
    pub source: EmbeddingSource,
}

impl EmbeddingSeries {
    pub fn new(
        points: Vec<Embedding3>,
        timestamps: Vec<f64>,
        source: EmbeddingSource,
    ) -> Result<Self> {
        if points.len() != timestamps.len() {
            return Err(KidsError::invalid(format!(
                "{} points but {} timestamps",
                points.len(),
                timestamps.len()
            )));
        }
        if let Some(n) = timestamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(KidsError::invalid(format!(
                "timestamps not strictly increasing at sample {}",
                n + 1
            )));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(KidsError::invalid("non-finite embedding coordinate"));
        }
        if source == EmbeddingSource::Adr {
            if let Some(n) = points.iter().position(|p| {
                let r = p.norm();
                !(INNER_RADIUS - SHELL_TOL..=OUTER_RADIUS + SHELL_TOL).contains(&r)
            }) {
                return Err(KidsError::invalid(format!(
                    "ADR embedding at sample {n} lies outside the [1, 2] shell"
                )));
            }
        }
        let sample_rate_hz = estimate_rate(&timestamps);
        Ok(Self {
            points,
            timestamps,
            sample_rate_hz,
            source,
        })
    }

    /// Samples at a fixed rate starting at `t = 0`.
    pub fn uniform(points: Vec<Embedding3>, rate_hz: f64, source: EmbeddingSource) -> Result<Self> {
        if !(rate_hz > 0.0) {
            return Err(KidsError::invalid("sample rate must be positive"));
        }
        let ts = (0..points.len()).map(|n| n as f64 / rate_hz).collect();
        Self::new(points, ts, source)
    }

    pub fn from_axis_angle(
        samples: &[AxisAngleOrientation],
        timestamps: Vec<f64>,
    ) -> Result<Self> {
        Self::new(samples.iter().map(adr_embed).collect(), timestamps, EmbeddingSource::Adr)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_unconstrained(&self) -> bool {
        self.source == EmbeddingSource::External
    }
}

fn estimate_rate(ts: &[f64]) -> Option<f64> {
    if ts.len() < 2 {
        return None;
    }
    let span = ts[ts.len() - 1] - ts[0];
    Some((ts.len() - 1) as f64 / span)
}

/// Keep samples `0, factor, 2·factor, ...`.
pub fn decimate(series: &EmbeddingSeries, factor: usize) -> Result<EmbeddingSeries> {
    if factor < 1 {
        return Err(KidsError::invalid("decimation factor must be at least 1"));
    }
    let points: Vec<_> = series.points.iter().step_by(factor).copied().collect();
    let timestamps: Vec<_> = series.timestamps.iter().step_by(factor).copied().collect();
    Ok(EmbeddingSeries {
        points,
        sample_rate_hz: series.sample_rate_hz.map(|r| r / factor as f64),
        timestamps,
        source: series.source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn identity_quaternion() {
        let aa = quaternion_to_axis_angle(&Quaternion::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(aa.angle(), 0.0);
        assert_eq!(aa.axis(), Vector3::z());
        let aa = quaternion_to_axis_angle(&Quaternion::new(-1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(aa.angle(), 0.0);
    }

    #[test]
    fn quarter_turn_about_z() {
        let h = 0.5f64.sqrt();
        let aa = quaternion_to_axis_angle(&Quaternion::new(h, 0.0, 0.0, h)).unwrap();
        assert_abs_diff_eq!(aa.axis(), Vector3::z(), epsilon = 1e-12);
        assert_abs_diff_eq!(aa.angle(), PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_w_is_canonicalised() {
        let h = 0.5f64.sqrt();
        let aa = quaternion_to_axis_angle(&Quaternion::new(-h, 0.0, -h, 0.0)).unwrap();
        assert_abs_diff_eq!(aa.axis(), Vector3::y(), epsilon = 1e-12);
        assert_abs_diff_eq!(aa.angle(), PI / 2.0, epsilon = 1e-12);
        // w = 0: first nonzero vector component made positive
        let aa = quaternion_to_axis_angle(&Quaternion::new(0.0, 0.0, -1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(aa.axis(), Vector3::y(), epsilon = 1e-12);
        assert_abs_diff_eq!(aa.angle(), PI, epsilon = 1e-12);
    }

    #[test]
    fn rejects_zero_quaternion() {
        assert!(quaternion_to_axis_angle(&Quaternion::new(0.0, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn unnormalised_input_is_normalised() {
        let aa = quaternion_to_axis_angle(&Quaternion::new(2.0, 0.0, 0.0, 2.0)).unwrap();
        assert_abs_diff_eq!(aa.angle(), PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn series_carries_axis_through_identity() {
        let h = 0.5f64.sqrt();
        let qs = [
            Quaternion::new(h, h, 0.0, 0.0),
            Quaternion::new(1.0, 0.0, 0.0, 0.0),
            Quaternion::new(1.0, 1e-12, 0.0, 0.0),
        ];
        let out = quaternions_to_axis_angle_series(&qs).unwrap();
        assert_abs_diff_eq!(out[1].axis(), Vector3::x(), epsilon = 1e-12);
        assert_abs_diff_eq!(out[2].axis(), Vector3::x(), epsilon = 1e-12);
        assert!(quaternions_to_axis_angle_series(&[Quaternion::new(0.0, 0.0, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn adr_examples() {
        let e = adr_embed(&AxisAngleOrientation::new(Vector3::x(), 0.0).unwrap());
        assert_eq!(e, Vector3::new(1.0, 0.0, 0.0));
        let e = adr_embed(&AxisAngleOrientation::new(Vector3::z(), PI).unwrap());
        assert_eq!(e, Vector3::new(0.0, 0.0, 2.0));
        let e = adr_embed(&AxisAngleOrientation::new(Vector3::y(), PI / 2.0).unwrap());
        assert_abs_diff_eq!(e, Vector3::new(0.0, 1.5, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn adr_inverse_examples() {
        let x = adr_invert(&Vector3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(x.axis(), Vector3::z());
        assert_abs_diff_eq!(x.angle(), PI, epsilon = 1e-15);
        let x = adr_invert(&Vector3::new(1.5, 0.0, 0.0)).unwrap();
        assert_eq!(x.axis(), Vector3::x());
        assert_abs_diff_eq!(x.angle(), PI / 2.0, epsilon = 1e-15);
        assert!(adr_invert(&Vector3::new(0.5, 0.0, 0.0)).is_err());
        assert!(adr_invert(&Vector3::new(2.1, 0.0, 0.0)).is_err());
    }

    #[test]
    fn axis_angle_validation() {
        assert!(AxisAngleOrientation::new(Vector3::x(), -0.1).is_err());
        assert!(AxisAngleOrientation::new(Vector3::x(), 3.5).is_err());
        assert!(AxisAngleOrientation::new(Vector3::new(2.0, 0.0, 0.0), 1.0).is_err());
    }

    fn series(n: usize) -> EmbeddingSeries {
        let pts = (0..n).map(|i| Vector3::new(1.0 + (i % 7) as f64 / 10.0, 0.0, 0.0)).collect();
        EmbeddingSeries::uniform(pts, 30.0, EmbeddingSource::Adr).unwrap()
    }

    #[test]
    fn decimation_lengths() {
        assert_eq!(decimate(&series(1000), 100).unwrap().len(), 10);
        let s = series(205);
        let d = decimate(&s, 100).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.points, vec![s.points[0], s.points[100], s.points[200]]);
        assert_eq!(d.timestamps, vec![s.timestamps[0], s.timestamps[100], s.timestamps[200]]);
        assert_eq!(decimate(&s, 1).unwrap(), s);
        assert!(decimate(&s, 0).is_err());
    }

    #[test]
    fn decimation_composes() {
        let s = series(997);
        for (a, b) in [(2, 5), (10, 10), (4, 25), (3, 7)] {
            let two = decimate(&decimate(&s, a).unwrap(), b).unwrap();
            let one = decimate(&s, a * b).unwrap();
            assert_eq!(two.points, one.points);
            assert_eq!(two.timestamps, one.timestamps);
        }
    }

    #[test]
    fn series_validation() {
        let p = vec![Vector3::x(), Vector3::x()];
        assert!(EmbeddingSeries::new(p.clone(), vec![0.0, 0.0], EmbeddingSource::Adr).is_err());
        assert!(EmbeddingSeries::new(p.clone(), vec![0.0], EmbeddingSource::Adr).is_err());
        let far = vec![Vector3::new(5.0, 0.0, 0.0)];
        assert!(EmbeddingSeries::new(far.clone(), vec![0.0], EmbeddingSource::Adr).is_err());
        let ext = EmbeddingSeries::new(far, vec![0.0], EmbeddingSource::External).unwrap();
        assert!(ext.is_unconstrained());
    }

    fn unit_axis() -> impl Strategy<Value = Vector3<f64>> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 1e-3)
            .prop_map(|(x, y, z)| Vector3::new(x, y, z).normalize())
    }

    proptest! {
        #[test]
        fn adr_norm_and_round_trip(axis in unit_axis(), angle in 1e-6f64..PI) {
            let x = AxisAngleOrientation::new(axis, angle).unwrap();
            let o = adr_embed(&x);
            prop_assert!((o.norm() - (1.0 + angle / PI)).abs() < 1e-12);
            let back = adr_invert(&o).unwrap();
            prop_assert!((adr_embed(&back) - o).amax() < 1e-12);
            prop_assert!((back.angle() - angle).abs() < 1e-12);
            prop_assert!((back.axis() - axis).amax() < 1e-12);
        }

        #[test]
        fn adr_radius_is_monotone(a in 0.0f64..PI, b in 0.0f64..PI) {
            prop_assert_eq!(a < b, adr_radius(a) < adr_radius(b));
        }

        #[test]
        fn quaternion_round_trip(w in -1.0f64..1.0, i in -1.0f64..1.0, j in -1.0f64..1.0, k in -1.0f64..1.0) {
            let q = Quaternion::new(w, i, j, k);
            prop_assume!(q.norm() > 1e-3);
            let q = q.normalized().unwrap();
            let aa = quaternion_to_axis_angle(&q).unwrap();
            prop_assert!((0.0..=PI).contains(&aa.angle()));
            let r = aa.to_quaternion();
            let same = (r.w - q.w).abs().max((r.i - q.i).abs()).max((r.j - q.j).abs()).max((r.k - q.k).abs());
            let flipped = (r.w + q.w).abs().max((r.i + q.i).abs()).max((r.j + q.j).abs()).max((r.k + q.k).abs());
            prop_assert!(same.min(flipped) < 1e-9);
        }
    }
}
