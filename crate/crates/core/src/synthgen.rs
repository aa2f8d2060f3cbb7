//! Seeded generator of labeled synthetic pair walks.
//!
//! Each experiment is a straight walk along the x axis (in either direction). The two
//! pedestrians stay side by side at `y = ±d/2` around the corridor centerline, so the
//! pair distance is exactly `d` at every reading. Per experiment we draw a distance, a
//! pair speed, a speed asymmetry and a duration from the label's [`CategoryProfile`];
//! per reading a small jitter (a quarter of the profile jitter) perturbs distance,
//! speed and lateral sway. Heights are a constant 1.0.
//!
//! Profile numbers live in TOML files under `profiles/`; they are test instrumentation.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::data::{Dataset, Experiment, LabelCounts, RelationshipLabel, TrajectoryReading};

pub const PROFILE_FORMAT_VERSION: u32 = 1;
pub const NOMINAL_HEIGHT: f64 = 1.0;
const MIN_DISTANCE: f64 = 0.05;

const SEPARABLE_TOML: &str = include_str!("../profiles/separable.toml");
const OVERLAPPING_TOML: &str = include_str!("../profiles/overlapping.toml");

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("InvalidProfile: {0}")]
    InvalidProfile(String),
    #[error("InvalidCounts: {0}")]
    InvalidCounts(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryProfile {
    pub distance_mean: f64,
    pub distance_jitter: f64,
    pub speed_mean: f64,
    pub speed_jitter: f64,
    pub asymmetry_mean: f64,
    pub duration_min: f64,
    pub duration_max: f64,
    pub period: f64,
}

impl CategoryProfile {
    pub fn validate(&self, label: RelationshipLabel) -> Result<(), SynthError> {
        let fields = [
            ("distance_mean", self.distance_mean),
            ("distance_jitter", self.distance_jitter),
            ("speed_mean", self.speed_mean),
            ("speed_jitter", self.speed_jitter),
            ("asymmetry_mean", self.asymmetry_mean),
            ("duration_min", self.duration_min),
            ("duration_max", self.duration_max),
            ("period", self.period),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(SynthError::InvalidProfile(format!(
                    "{label}: {name} = {v} must be finite and non-negative"
                )));
            }
        }
        if self.period <= 0.0 || self.duration_min <= 0.0 {
            return Err(SynthError::InvalidProfile(format!(
                "{label}: period and duration_min must be positive"
            )));
        }
        if self.duration_max < self.duration_min {
            return Err(SynthError::InvalidProfile(format!(
                "{label}: duration range [{}, {}] is empty",
                self.duration_min, self.duration_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileMode {
    Separable,
    Overlapping,
}

impl FromStr for ProfileMode {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "separable" => Ok(ProfileMode::Separable),
            "overlapping" => Ok(ProfileMode::Overlapping),
            other => Err(SynthError::InvalidProfile(format!(
                "unknown mode {other:?}, expected separable or overlapping"
            ))),
        }
    }
}

/// One optional profile per relationship label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileSet([Option<CategoryProfile>; 4]);

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile<T> {
    version: u32,
    colleagues: Option<T>,
    couple: Option<T>,
    family: Option<T>,
    friendship: Option<T>,
}

impl<T> ProfileFile<T> {
    fn parse(text: &str) -> Result<Self, SynthError>
    where
        T: serde::de::DeserializeOwned,
    {
        let f: ProfileFile<T> =
            toml::from_str(text).map_err(|e| SynthError::InvalidProfile(e.to_string()))?;
        if f.version != PROFILE_FORMAT_VERSION {
            return Err(SynthError::InvalidProfile(format!(
                "profile file version {} (expected {PROFILE_FORMAT_VERSION})",
                f.version
            )));
        }
        Ok(f)
    }

    fn into_array(self) -> [Option<T>; 4] {
        [self.colleagues, self.couple, self.family, self.friendship]
    }
}

/// Partial profile used by override files; absent keys keep the base value.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfilePatch {
    distance_mean: Option<f64>,
    distance_jitter: Option<f64>,
    speed_mean: Option<f64>,
    speed_jitter: Option<f64>,
    asymmetry_mean: Option<f64>,
    duration_min: Option<f64>,
    duration_max: Option<f64>,
    period: Option<f64>,
}

impl ProfilePatch {
    fn apply(self, base: Option<CategoryProfile>, label: RelationshipLabel) -> Result<CategoryProfile, SynthError> {
        let missing = |name: &str| {
            SynthError::InvalidProfile(format!("{label}: {name} missing and no base profile"))
        };
        let pick = |v: Option<f64>, b: Option<f64>, name: &str| v.or(b).ok_or_else(|| missing(name));
        Ok(CategoryProfile {
            distance_mean: pick(self.distance_mean, base.map(|b| b.distance_mean), "distance_mean")?,
            distance_jitter: pick(self.distance_jitter, base.map(|b| b.distance_jitter), "distance_jitter")?,
            speed_mean: pick(self.speed_mean, base.map(|b| b.speed_mean), "speed_mean")?,
            speed_jitter: pick(self.speed_jitter, base.map(|b| b.speed_jitter), "speed_jitter")?,
            asymmetry_mean: pick(self.asymmetry_mean, base.map(|b| b.asymmetry_mean), "asymmetry_mean")?,
            duration_min: pick(self.duration_min, base.map(|b| b.duration_min), "duration_min")?,
            duration_max: pick(self.duration_max, base.map(|b| b.duration_max), "duration_max")?,
            period: pick(self.period, base.map(|b| b.period), "period")?,
        })
    }
}

impl ProfileSet {
    /// Parses a complete profile file (`version = 1` plus one table per label).
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let set = ProfileSet(ProfileFile::<CategoryProfile>::parse(text)?.into_array());
        set.validate()?;
        Ok(set)
    }

    /// Overlays a profile file whose tables may list only some keys.
    pub fn with_overrides(&self, text: &str) -> Result<Self, SynthError> {
        let patches = ProfileFile::<ProfilePatch>::parse(text)?.into_array();
        let mut out = self.clone();
        for (label, patch) in RelationshipLabel::ALL.into_iter().zip(patches) {
            if let Some(p) = patch {
                out.0[label.index()] = Some(p.apply(self.get(label).copied(), label)?);
            }
        }
        out.validate()?;
        Ok(out)
    }

    pub fn get(&self, label: RelationshipLabel) -> Option<&CategoryProfile> {
        self.0[label.index()].as_ref()
    }

    pub fn set(&mut self, label: RelationshipLabel, profile: CategoryProfile) {
        self.0[label.index()] = Some(profile);
    }

    fn validate(&self) -> Result<(), SynthError> {
        for label in RelationshipLabel::ALL {
            if let Some(p) = self.get(label) {
                p.validate(label)?;
            }
        }
        Ok(())
    }
}

pub fn default_profiles(mode: ProfileMode) -> ProfileSet {
    let text = match mode {
        ProfileMode::Separable => SEPARABLE_TOML,
        ProfileMode::Overlapping => OVERLAPPING_TOML,
    };
    ProfileSet::from_toml(text).expect("bundled profile files are valid")
}

/// Parses `colleagues=267,couple=96,...`; unlisted labels get 0.
pub fn parse_counts(s: &str) -> Result<LabelCounts, SynthError> {
    let mut counts = LabelCounts::default();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, n) = part
            .split_once('=')
            .ok_or_else(|| SynthError::InvalidCounts(format!("{part:?} is not label=count")))?;
        let label: RelationshipLabel = name
            .trim()
            .parse()
            .map_err(|_| SynthError::InvalidCounts(format!("unknown label {name:?}")))?;
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| SynthError::InvalidCounts(format!("bad count {n:?} for {label}")))?;
        counts.0[label.index()] = n;
    }
    Ok(counts)
}

fn normal<R: Rng>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + sd * z
}

/// Number of readings for a duration: one at t=0 plus the duration in periods,
/// rounded to the nearest whole period.
pub fn step_count(duration: f64, period: f64) -> usize {
    (duration / period).round() as usize + 1
}

/// Generates experiment number `index` of the run. Each experiment owns the ChaCha
/// stream `index` of `seed`, so the result does not depend on generation order.
pub fn generate_experiment(
    profile: &CategoryProfile,
    label: RelationshipLabel,
    id: String,
    seed: u64,
    index: u64,
) -> Result<Experiment, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let p = profile;

    let duration = if p.duration_max > p.duration_min {
        rng.random_range(p.duration_min..=p.duration_max)
    } else {
        p.duration_min
    };
    let d_exp = normal(&mut rng, p.distance_mean, p.distance_jitter).max(MIN_DISTANCE);
    let s_exp = normal(&mut rng, p.speed_mean, p.speed_jitter).max(0.0);
    let asym = normal(&mut rng, p.asymmetry_mean, p.speed_jitter).abs();
    let dir = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let mut x = rng.random_range(-5.0..=5.0);

    let n = step_count(duration, p.period);
    let mut readings = Vec::with_capacity(n);
    for k in 0..n {
        let d = normal(&mut rng, d_exp, p.distance_jitter / 4.0).max(MIN_DISTANCE);
        let s = normal(&mut rng, s_exp, p.speed_jitter / 4.0).max(0.0);
        let sway1 = normal(&mut rng, 0.0, p.speed_jitter / 4.0);
        let sway2 = normal(&mut rng, 0.0, p.speed_jitter / 4.0);
        let s1 = s + asym / 2.0;
        let s2 = (s - asym / 2.0).max(0.0);
        let v1 = [dir * s1, sway1];
        let v2 = [dir * s2, sway2];
        readings.push(TrajectoryReading {
            t: k as f64 * p.period,
            p1: [x, d / 2.0, NOMINAL_HEIGHT],
            p2: [x, -d / 2.0, NOMINAL_HEIGHT],
            v1,
            v2,
            vt1: v1[0].hypot(v1[1]),
            vt2: v2[0].hypot(v2[1]),
        });
        x += dir * s * p.period;
    }
    Experiment::new(id, readings, label)
        .map_err(|e| SynthError::InvalidProfile(format!("{label}: generated invalid data: {e}")))
}

/// Generates `counts` experiments per label, grouped by label in canonical order.
/// Ids are `<label>-<nnnn>`. Experiments are produced in parallel on the current rayon
/// pool; the output is identical for any thread count.
pub fn generate(
    profiles: &ProfileSet,
    counts: &LabelCounts,
    seed: u64,
) -> Result<Dataset, SynthError> {
    let mut jobs = Vec::with_capacity(counts.total());
    for label in RelationshipLabel::ALL {
        let n = counts.get(label);
        if n == 0 {
            continue;
        }
        let profile = profiles.get(label).ok_or_else(|| {
            SynthError::InvalidProfile(format!("no profile for requested label {label}"))
        })?;
        profile.validate(label)?;
        for k in 0..n {
            jobs.push((profile, label, format!("{label}-{:04}", k + 1)));
        }
    }
    let experiments = jobs
        .into_par_iter()
        .enumerate()
        .map(|(i, (p, label, id))| generate_experiment(p, label, id, seed, i as u64))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::new(experiments))
}
