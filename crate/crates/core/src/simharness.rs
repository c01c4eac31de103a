//! Seeded synthetic sleep sessions with exact ground truth.
//!
//! A session is a shuffled sequence of postures, each replicated a fixed
//! number of times. Every posture is a fixed point on the ADR shell; while it
//! is held the embedding jitters around it with isotropic Gaussian noise.
//! Between postures a short burst of samples drifts linearly from one mean to
//! the next with doubled noise. All randomness comes from ChaCha8 seeded with
//! the config seed, so a config always yields the same session on every
//! platform.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{KidsError, Result};
use crate::kinematics::{
    adr_invert, AxisAngleOrientation, Embedding3, EmbeddingSeries, EmbeddingSource, INNER_RADIUS,
    OUTER_RADIUS,
};
use crate::metrics::GroundTruthSegment;

/// Raw sensor rate the axis-angle sessions are emitted at.
pub const RAW_RATE_HZ: f64 = 30.0;
const PLACEMENT_ATTEMPTS: usize = 20_000;
const SHUFFLE_ATTEMPTS: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub postures: usize,
    pub replications: usize,
    /// Inclusive range of posture durations, in downsampled samples.
    pub duration_min: usize,
    pub duration_max: usize,
    /// Inclusive range of transition lengths, in downsampled samples.
    pub transition_min: usize,
    pub transition_max: usize,
    /// Per-axis standard deviation of within-posture jitter.
    pub noise_sigma: f64,
    /// Minimum distance between any two posture means, in units of `noise_sigma`.
    pub min_separation: f64,
    /// Samples held after the final transition so the last changepoint is observed.
    pub tail: usize,
    /// Decimation factor relating raw samples to downsampled ones.
    pub decimation: usize,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            postures: 12,
            replications: 2,
            duration_min: 20,
            duration_max: 60,
            transition_min: 1,
            transition_max: 3,
            noise_sigma: 0.05,
            min_separation: 3.0,
            tail: 5,
            decimation: 100,
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(KidsError::Config(m));
        if self.postures == 0 || self.replications == 0 {
            return bad("posture and replication counts must be positive".into());
        }
        if self.postures == 1 && self.replications > 1 {
            return bad("a single posture cannot be replicated without repeating itself".into());
        }
        if self.duration_min == 0 || self.duration_min > self.duration_max {
            return bad(format!(
                "invalid duration range {}..={}",
                self.duration_min, self.duration_max
            ));
        }
        if self.transition_min == 0 || self.transition_min > self.transition_max {
            return bad(format!(
                "invalid transition range {}..={}",
                self.transition_min, self.transition_max
            ));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma must be positive, got {}", self.noise_sigma));
        }
        if !(self.min_separation >= 0.0 && self.min_separation.is_finite()) {
            return bad(format!(
                "separation must be non-negative, got {}",
                self.min_separation
            ));
        }
        if self.decimation == 0 {
            return bad("decimation factor must be at least 1".into());
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Axis-angle rendering of a session at the raw rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RawAxisAngle {
    pub samples: Vec<AxisAngleOrientation>,
    pub timestamps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSession {
    /// Downsampled ADR embeddings; sample `i` is time step `k = i + 1`.
    pub series: EmbeddingSeries,
    pub raw: Option<RawAxisAngle>,
    pub ground_truth: Vec<GroundTruthSegment>,
    pub changepoints: Vec<usize>,
    /// Regime centre behind each downsampled sample.
    pub centers: Vec<Embedding3>,
    /// Noise scale behind each downsampled sample.
    pub noise: Vec<f64>,
}

fn gaussian3(rng: &mut impl Rng) -> Vector3<f64> {
    Vector3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    )
}

fn into_shell(p: Vector3<f64>) -> Vector3<f64> {
    let r = p.norm();
    if r < INNER_RADIUS {
        if r == 0.0 {
            return Vector3::new(INNER_RADIUS, 0.0, 0.0);
        }
        p * (INNER_RADIUS / r)
    } else if r > OUTER_RADIUS {
        p * (OUTER_RADIUS / r)
    } else {
        p
    }
}

fn jitter(rng: &mut impl Rng, center: &Vector3<f64>, sigma: f64) -> Embedding3 {
    into_shell(center + gaussian3(rng) * sigma)
}

fn random_posture(rng: &mut impl Rng) -> Vector3<f64> {
    let axis = loop {
        let g = gaussian3(rng);
        let n = g.norm();
        if n > 1e-9 {
            break g / n;
        }
    };
    // keep means off the shell boundaries so jitter is rarely clamped
    let angle = rng.random_range(0.1 * PI..=0.9 * PI);
    axis * (1.0 + angle / PI)
}

fn place_postures(rng: &mut impl Rng, config: &SessionConfig) -> Result<Vec<Vector3<f64>>> {
    let min_dist = config.min_separation * config.noise_sigma;
    let mut means: Vec<Vector3<f64>> = Vec::with_capacity(config.postures);
    let mut attempts = 0;
    while means.len() < config.postures {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS {
            return Err(KidsError::Config(format!(
                "cannot place {} postures {:.3} apart on the ADR shell",
                config.postures, min_dist
            )));
        }
        let cand = random_posture(rng);
        if means.iter().all(|m| (m - cand).norm() >= min_dist) {
            means.push(cand);
        }
    }
    Ok(means)
}

fn posture_order(rng: &mut impl Rng, config: &SessionConfig) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = Vec::with_capacity(config.postures * config.replications);
    for _ in 0..config.replications {
        let mut block: Vec<usize> = (0..config.postures).collect();
        let mut tries = 0;
        loop {
            block.shuffle(rng);
            if order.last() != block.first() {
                break;
            }
            tries += 1;
            if tries > SHUFFLE_ATTEMPTS {
                return Err(KidsError::Config("cannot avoid repeating a posture".into()));
            }
        }
        order.extend(block);
    }
    Ok(order)
}

/// Downsampled-time-step duration of one raw sample block.
fn step_seconds(config: &SessionConfig) -> f64 {
    config.decimation as f64 / RAW_RATE_HZ
}

/// Generate a labelled session at the embedding level.
pub fn generate_session(config: &SessionConfig) -> Result<LabeledSession> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let means = place_postures(&mut rng, config)?;
    let order = posture_order(&mut rng, config)?;
    let tail_posture = {
        let last = *order.last().expect("at least one segment");
        let others: Vec<usize> = (0..config.postures).filter(|&p| p != last).collect();
        if others.is_empty() {
            None
        } else {
            Some(others[rng.random_range(0..others.len())])
        }
    };
    let tail_mean = match tail_posture {
        Some(p) => means[p],
        None => loop {
            let cand = random_posture(&mut rng);
            if (cand - means[0]).norm() >= config.min_separation * config.noise_sigma {
                break cand;
            }
        },
    };

    let sigma = config.noise_sigma;
    let mut points = Vec::new();
    let mut centers = Vec::new();
    let mut noise = Vec::new();
    let mut ground_truth = Vec::with_capacity(order.len());
    for (n, &posture) in order.iter().enumerate() {
        let mean = means[posture];
        let duration = rng.random_range(config.duration_min..=config.duration_max);
        let start = points.len() + 1;
        for _ in 0..duration {
            points.push(jitter(&mut rng, &mean, sigma));
            centers.push(mean);
            noise.push(sigma);
        }
        ground_truth.push(GroundTruthSegment::new(start, start + duration)?);

        let next = order.get(n + 1).map_or(tail_mean, |&p| means[p]);
        let len = rng.random_range(config.transition_min..=config.transition_max);
        for i in 1..=len {
            let c = mean.lerp(&next, i as f64 / (len + 1) as f64);
            points.push(jitter(&mut rng, &c, 2.0 * sigma));
            centers.push(c);
            noise.push(2.0 * sigma);
        }
    }
    for _ in 0..config.tail {
        points.push(jitter(&mut rng, &tail_mean, sigma));
        centers.push(tail_mean);
        noise.push(sigma);
    }

    let dt = step_seconds(config);
    let timestamps = (0..points.len()).map(|i| i as f64 * dt).collect();
    let series = EmbeddingSeries::new(points, timestamps, EmbeddingSource::Adr)?;
    let changepoints = ground_truth.iter().map(|g| g.end).collect();
    Ok(LabeledSession {
        series,
        raw: None,
        ground_truth,
        changepoints,
        centers,
        noise,
    })
}

/// Generate the same session as [`generate_session`] plus a raw 30 Hz
/// axis-angle rendering. Raw sample `i·decimation` is the exact inverse ADR of
/// downsampled sample `i`; the samples in between are fresh jitter around the
/// same regime centre, drawn from a separate stream.
pub fn generate_session_axis_angle(config: &SessionConfig) -> Result<LabeledSession> {
    let mut session = generate_session(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let factor = config.decimation;
    let n = session.series.len();
    let mut samples = Vec::with_capacity(n * factor);
    for i in 0..n {
        samples.push(adr_invert(&session.series.points[i])?);
        for _ in 1..factor {
            let o = jitter(&mut rng, &session.centers[i], session.noise[i]);
            samples.push(adr_invert(&o)?);
        }
    }
    let timestamps = (0..samples.len()).map(|j| j as f64 / RAW_RATE_HZ).collect();
    session.raw = Some(RawAxisAngle {
        samples,
        timestamps,
    });
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{adr_embed, decimate};

    #[test]
    fn protocol_counts() {
        let s = generate_session(&SessionConfig::default().with_seed(3)).unwrap();
        assert_eq!(s.ground_truth.len(), 24);
        assert_eq!(s.changepoints.len(), 24);
        for g in &s.ground_truth {
            assert!((20..=60).contains(&g.duration()));
        }
        for (g, c) in s.ground_truth.iter().zip(&s.changepoints) {
            assert_eq!(g.end, *c);
        }
        // segments are ordered and separated by 1..=3 transition samples
        for w in s.ground_truth.windows(2) {
            assert!((1..=3).contains(&(w[1].start - w[0].end)));
        }
        let last = s.ground_truth.last().unwrap();
        assert!(s.series.len() >= last.end + 5);
    }

    #[test]
    fn embeddings_stay_in_shell() {
        for seed in 0..5 {
            let cfg = SessionConfig { noise_sigma: 0.3, min_separation: 1.0, ..SessionConfig::default().with_seed(seed) };
            let s = generate_session(&cfg).unwrap();
            for p in &s.series.points {
                let r = p.norm();
                assert!((1.0 - 1e-12..=2.0 + 1e-12).contains(&r));
            }
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SessionConfig::default().with_seed(42);
        assert_eq!(generate_session(&cfg).unwrap(), generate_session(&cfg).unwrap());
        assert_ne!(
            generate_session(&cfg).unwrap().series.points,
            generate_session(&cfg.with_seed(43)).unwrap().series.points
        );
    }

    #[test]
    fn invalid_configs() {
        let d = SessionConfig::default();
        assert!(generate_session(&SessionConfig { noise_sigma: 0.0, ..d.clone() }).is_err());
        assert!(generate_session(&SessionConfig { duration_min: 70, ..d.clone() }).is_err());
        assert!(generate_session(&SessionConfig { postures: 1, ..d.clone() }).is_err());
        // twelve points pairwise 3 apart cannot fit in a radius-2 ball
        let err = generate_session(&SessionConfig { noise_sigma: 1.0, min_separation: 3.0, ..d }).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn consecutive_postures_differ() {
        for seed in 0..20 {
            let s = generate_session(&SessionConfig::default().with_seed(seed)).unwrap();
            for w in s.ground_truth.windows(2) {
                let a = s.centers[w[0].start - 1];
                let b = s.centers[w[1].start - 1];
                assert!((a - b).norm() >= 3.0 * 0.05);
            }
        }
    }

    #[test]
    fn axis_angle_rendering_matches_embedding() {
        let cfg = SessionConfig { postures: 3, replications: 2, ..SessionConfig::default().with_seed(8) };
        let s = generate_session_axis_angle(&cfg).unwrap();
        let raw = s.raw.as_ref().unwrap();
        assert_eq!(raw.samples.len(), s.series.len() * 100);
        let emb = EmbeddingSeries::from_axis_angle(&raw.samples, raw.timestamps.clone()).unwrap();
        let dec = decimate(&emb, 100).unwrap();
        assert_eq!(dec.len(), s.series.len());
        for (a, b) in dec.points.iter().zip(&s.series.points) {
            assert!((a - b).amax() < 1e-9);
        }
        for (i, x) in raw.samples.iter().step_by(100).enumerate() {
            assert!((adr_embed(x) - s.series.points[i]).amax() < 1e-9);
        }
        assert_eq!(generate_session_axis_angle(&cfg).unwrap(), s);
    }
}
