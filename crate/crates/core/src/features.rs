//! Derived pair quantities and the 16-slot network input representation.
//!
//! Slot order: `[duration_or_t, p1x, p1y, p1z, p2x, p2y, p2z, v1x, v1y, v2x, v2y,
//! vt1, vt2, dist, vel_rel, vel_tot]`. Averaged vectors carry the experiment duration
//! in slot 0; sequence steps carry the raw detection time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Experiment, RelationshipLabel, TrajectoryReading};

pub const FEATURE_DIM: usize = 16;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "duration", "p1x", "p1y", "p1z", "p2x", "p2y", "p2z", "v1x", "v1y", "v2x", "v2y", "vt1", "vt2",
    "dist", "vel_rel", "vel_tot",
];

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("EmptyInput: cannot fit a standardizer on zero vectors")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub steps: Vec<FeatureVector>,
    pub label: RelationshipLabel,
}

/// Pair distance, speed difference and mean pair speed of one reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derived {
    pub dist: f64,
    pub vel_relative: f64,
    pub vel_total: f64,
}

pub fn derived_features(r: &TrajectoryReading) -> Derived {
    let dx = r.p2[0] - r.p1[0];
    let dy = r.p2[1] - r.p1[1];
    let dz = r.p2[2] - r.p1[2];
    Derived {
        dist: (dx * dx + dy * dy + dz * dz).sqrt(),
        vel_relative: (r.vt1 - r.vt2).abs(),
        vel_total: (r.vt1 + r.vt2) / 2.0,
    }
}

fn reading_slots(r: &TrajectoryReading) -> [f64; FEATURE_DIM] {
    let raw = r.to_array();
    let d = derived_features(r);
    let mut v = [0.0; FEATURE_DIM];
    v[..13].copy_from_slice(&raw);
    v[13] = d.dist;
    v[14] = d.vel_relative;
    v[15] = d.vel_total;
    v
}

/// Averages every slot over the readings; slot 0 becomes `t_last - t_first`.
pub fn experiment_to_vector(e: &Experiment) -> FeatureVector {
    let mut sum = [0.0; FEATURE_DIM];
    for r in &e.readings {
        for (s, v) in sum.iter_mut().zip(reading_slots(r)) {
            *s += v;
        }
    }
    let n = e.readings.len() as f64;
    for s in sum.iter_mut() {
        *s /= n;
    }
    sum[0] = e.duration();
    FeatureVector(sum)
}

/// One vector per reading, raw `t` in slot 0.
pub fn experiment_to_sequence(e: &Experiment) -> FeatureSequence {
    FeatureSequence {
        steps: e
            .readings
            .iter()
            .map(|r| FeatureVector(reading_slots(r)))
            .collect(),
        label: e.label,
    }
}

pub fn dataset_vectors(ds: &Dataset) -> Vec<FeatureVector> {
    ds.experiments().iter().map(experiment_to_vector).collect()
}

pub fn dataset_sequences(ds: &Dataset) -> Vec<FeatureSequence> {
    ds.experiments().iter().map(experiment_to_sequence).collect()
}

/// Z-score transform with population statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; FEATURE_DIM],
    pub std: [f64; FEATURE_DIM],
}

impl Standardizer {
    /// Identity transform.
    pub fn identity() -> Self {
        Standardizer {
            mean: [0.0; FEATURE_DIM],
            std: [1.0; FEATURE_DIM],
        }
    }

    pub fn apply(&self, v: &FeatureVector) -> FeatureVector {
        let mut out = [0.0; FEATURE_DIM];
        for k in 0..FEATURE_DIM {
            out[k] = (v.0[k] - self.mean[k]) / self.std[k];
        }
        FeatureVector(out)
    }
}

/// Components with zero variance get a deviation of 1.
pub fn fit_standardizer<'a, I>(vectors: I) -> Result<Standardizer, FeatureError>
where
    I: IntoIterator<Item = &'a FeatureVector>,
    I::IntoIter: Clone,
{
    let iter = vectors.into_iter();
    let mut n = 0usize;
    let mut mean = [0.0; FEATURE_DIM];
    for v in iter.clone() {
        n += 1;
        for k in 0..FEATURE_DIM {
            mean[k] += v.0[k];
        }
    }
    if n == 0 {
        return Err(FeatureError::EmptyInput);
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut var = [0.0; FEATURE_DIM];
    for v in iter {
        for k in 0..FEATURE_DIM {
            let d = v.0[k] - mean[k];
            var[k] += d * d;
        }
    }
    let mut std = [1.0; FEATURE_DIM];
    for k in 0..FEATURE_DIM {
        let s = (var[k] / n as f64).sqrt();
        if s > 0.0 && s.is_finite() {
            std[k] = s;
        }
    }
    Ok(Standardizer { mean, std })
}

pub fn apply_standardizer(s: &Standardizer, v: &FeatureVector) -> FeatureVector {
    s.apply(v)
}
