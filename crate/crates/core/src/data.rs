//! Trajectory data model, relationship labels, CSV ingestion and seeded splitting.
//!
//! A dataset file is a UTF-8 CSV with the header
//! `exp_id,t,p1x,p1y,p1z,p2x,p2y,p2z,v1x,v1y,v2x,v2y,vt1,vt2,label`.
//! Rows of one experiment are contiguous and sorted by strictly increasing `t`.
//! Positions are treated as meters and velocities as meters per second.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Column names of the dataset CSV, in file order.
pub const CSV_HEADER: [&str; 15] = [
    "exp_id", "t", "p1x", "p1y", "p1z", "p2x", "p2y", "p2z", "v1x", "v1y", "v2x", "v2y", "vt1",
    "vt2", "label",
];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("EmptyFile: {0} contains no data rows")]
    EmptyFile(String),
    #[error("MalformedRow: line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("UnknownLabel: line {line}: {label:?} is not one of colleagues, couple, family, friendship")]
    UnknownLabel { line: u64, label: String },
    #[error("NonMonotonicTime: line {line}: experiment {exp_id} has t={t} after t={previous}")]
    NonMonotonicTime {
        line: u64,
        exp_id: String,
        t: f64,
        previous: f64,
    },
    #[error("NonContiguousExperiment: line {line}: rows of experiment {exp_id} are not contiguous")]
    NonContiguousExperiment { line: u64, exp_id: String },
    #[error("InconsistentLabel: line {line}: experiment {exp_id} changes label")]
    InconsistentLabel { line: u64, exp_id: String },
    #[error("InvalidReading: {0}")]
    InvalidReading(String),
    #[error("InvalidExperiment: {0}")]
    InvalidExperiment(String),
    #[error("EmptySplit: splitting {total} experiments at fraction {fraction} leaves {train} train / {test} test")]
    EmptySplit {
        total: usize,
        fraction: f64,
        train: usize,
        test: usize,
    },
    #[error("InvalidFraction: train fraction {0} is outside (0, 1)")]
    InvalidFraction(f64),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
    #[error("MalformedRow: {0}")]
    Csv(#[from] csv::Error),
}

/// The four relationship categories, encoded 0..3 in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationshipLabel {
    Colleagues,
    Couple,
    Family,
    Friendship,
}

impl RelationshipLabel {
    pub const ALL: [RelationshipLabel; 4] = [
        RelationshipLabel::Colleagues,
        RelationshipLabel::Couple,
        RelationshipLabel::Family,
        RelationshipLabel::Friendship,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Lowercase name used in files.
    pub fn as_str(self) -> &'static str {
        match self {
            RelationshipLabel::Colleagues => "colleagues",
            RelationshipLabel::Couple => "couple",
            RelationshipLabel::Family => "family",
            RelationshipLabel::Friendship => "friendship",
        }
    }
}

impl fmt::Display for RelationshipLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationshipLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// Two-class coarsening: colleagues against every closer relationship.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryLabel {
    Acquaintances,
    Intimate,
}

impl BinaryLabel {
    pub const ALL: [BinaryLabel; 2] = [BinaryLabel::Acquaintances, BinaryLabel::Intimate];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLabel::Acquaintances => "acquaintances",
            BinaryLabel::Intimate => "intimate",
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Colleagues become acquaintances; couple, family and friendship become intimate.
pub fn merge_to_binary(label: RelationshipLabel) -> BinaryLabel {
    match label {
        RelationshipLabel::Colleagues => BinaryLabel::Acquaintances,
        RelationshipLabel::Couple | RelationshipLabel::Family | RelationshipLabel::Friendship => {
            BinaryLabel::Intimate
        }
    }
}

/// One tracker sample of both pedestrians (13 scalars).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryReading {
    pub t: f64,
    pub p1: [f64; 3],
    pub p2: [f64; 3],
    pub v1: [f64; 2],
    pub v2: [f64; 2],
    pub vt1: f64,
    pub vt2: f64,
}

impl TrajectoryReading {
    pub const SCALARS: usize = 13;

    /// Scalars in file column order.
    pub fn to_array(&self) -> [f64; 13] {
        [
            self.t, self.p1[0], self.p1[1], self.p1[2], self.p2[0], self.p2[1], self.p2[2],
            self.v1[0], self.v1[1], self.v2[0], self.v2[1], self.vt1, self.vt2,
        ]
    }

    pub fn from_array(a: [f64; 13]) -> Self {
        TrajectoryReading {
            t: a[0],
            p1: [a[1], a[2], a[3]],
            p2: [a[4], a[5], a[6]],
            v1: [a[7], a[8]],
            v2: [a[9], a[10]],
            vt1: a[11],
            vt2: a[12],
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if let Some(pos) = self.to_array().iter().position(|v| !v.is_finite()) {
            return Err(DataError::InvalidReading(format!(
                "column {} is not finite",
                CSV_HEADER[pos + 1]
            )));
        }
        if self.vt1 < 0.0 || self.vt2 < 0.0 {
            return Err(DataError::InvalidReading(format!(
                "negative total velocity (vt1={}, vt2={})",
                self.vt1, self.vt2
            )));
        }
        Ok(())
    }
}

/// A labeled, time-ordered recording of one pedestrian pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub id: String,
    pub readings: Vec<TrajectoryReading>,
    pub label: RelationshipLabel,
}

impl Experiment {
    pub fn new(
        id: impl Into<String>,
        readings: Vec<TrajectoryReading>,
        label: RelationshipLabel,
    ) -> Result<Self, DataError> {
        let e = Experiment {
            id: id.into(),
            readings,
            label,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.readings.is_empty() {
            return Err(DataError::InvalidExperiment(format!(
                "experiment {} has no readings",
                self.id
            )));
        }
        for r in &self.readings {
            r.validate()
                .map_err(|e| DataError::InvalidExperiment(format!("experiment {}: {e}", self.id)))?;
        }
        for w in self.readings.windows(2) {
            if w[1].t <= w[0].t {
                return Err(DataError::InvalidExperiment(format!(
                    "experiment {}: t={} does not follow t={}",
                    self.id, w[1].t, w[0].t
                )));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        match (self.readings.first(), self.readings.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// Per-category experiment counts, indexed by [`RelationshipLabel::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts(pub [usize; 4]);

impl LabelCounts {
    pub fn get(&self, label: RelationshipLabel) -> usize {
        self.0[label.index()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Counts after merging into acquaintances / intimate.
    pub fn merged(&self) -> [usize; 2] {
        let mut out = [0; 2];
        for label in RelationshipLabel::ALL {
            out[merge_to_binary(label).index()] += self.get(label);
        }
        out
    }
}

/// An immutable collection of experiments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    experiments: Vec<Experiment>,
    counts: LabelCounts,
}

impl Dataset {
    pub fn new(experiments: Vec<Experiment>) -> Self {
        let mut counts = LabelCounts::default();
        for e in &experiments {
            counts.0[e.label.index()] += 1;
        }
        Dataset {
            experiments,
            counts,
        }
    }

    pub fn experiments(&self) -> &[Experiment] {
        &self.experiments
    }

    pub fn into_experiments(self) -> Vec<Experiment> {
        self.experiments
    }

    pub fn counts(&self) -> LabelCounts {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.experiments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiments.is_empty()
    }
}

fn parse_label(s: &str, line: u64) -> Result<RelationshipLabel, DataError> {
    s.parse().map_err(|label| DataError::UnknownLabel { line, label })
}

/// Parses dataset CSV text. Line numbers in errors are 1-based file lines.
pub fn parse_dataset(text: &str, source: &str) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());

    let header = reader.headers()?.clone();
    if header.iter().map(str::trim).ne(CSV_HEADER.iter().copied()) {
        return Err(DataError::MalformedRow {
            line: 1,
            reason: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }

    let mut experiments: Vec<Experiment> = Vec::new();
    let mut seen = std::collections::HashSet::new();

    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != CSV_HEADER.len() {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("expected {} columns, found {}", CSV_HEADER.len(), record.len()),
            });
        }
        let exp_id = record[0].trim();
        if exp_id.is_empty() {
            return Err(DataError::MalformedRow {
                line,
                reason: "empty exp_id".into(),
            });
        }
        let mut values = [0.0; 13];
        for (k, v) in values.iter_mut().enumerate() {
            let field = record[k + 1].trim();
            *v = field.parse().map_err(|_| DataError::MalformedRow {
                line,
                reason: format!("column {} is not numeric: {field:?}", CSV_HEADER[k + 1]),
            })?;
        }
        let label = parse_label(record[14].trim(), line)?;
        let reading = TrajectoryReading::from_array(values);
        reading.validate().map_err(|e| DataError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;

        match experiments.last_mut() {
            Some(current) if current.id == exp_id => {
                if current.label != label {
                    return Err(DataError::InconsistentLabel {
                        line,
                        exp_id: exp_id.to_string(),
                    });
                }
                let previous = current.readings.last().map_or(f64::NEG_INFINITY, |r| r.t);
                if reading.t <= previous {
                    return Err(DataError::NonMonotonicTime {
                        line,
                        exp_id: exp_id.to_string(),
                        t: reading.t,
                        previous,
                    });
                }
                current.readings.push(reading);
            }
            _ => {
                if !seen.insert(exp_id.to_string()) {
                    return Err(DataError::NonContiguousExperiment {
                        line,
                        exp_id: exp_id.to_string(),
                    });
                }
                experiments.push(Experiment {
                    id: exp_id.to_string(),
                    readings: vec![reading],
                    label,
                });
            }
        }
    }

    if experiments.is_empty() {
        return Err(DataError::EmptyFile(source.to_string()));
    }
    Ok(Dataset::new(experiments))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_dataset(&text, &path.display().to_string())
}

/// Canonical CSV text: header, then one row per reading with shortest round-trip floats.
pub fn format_dataset(ds: &Dataset) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for e in ds.experiments() {
        for r in &e.readings {
            out.push_str(&e.id);
            for v in r.to_array() {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push(',');
            out.push_str(e.label.as_str());
            out.push('\n');
        }
    }
    out
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut f = fs::File::create(path)?;
    f.write_all(format_dataset(ds).as_bytes())?;
    Ok(())
}

/// Experiment indices in the order the seeded shuffle places them.
pub fn split_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
}

/// Number of training experiments: floor(n * fraction).
pub fn train_size(n: usize, train_fraction: f64) -> usize {
    (n as f64 * train_fraction).floor() as usize
}

/// Shuffles experiments with ChaCha8 seeded by `seed` (Fisher-Yates), then cuts the
/// first `floor(n * train_fraction)` into the training set.
pub fn split_dataset(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidFraction(train_fraction));
    }
    let n = ds.len();
    let n_train = train_size(n, train_fraction);
    if n_train == 0 || n_train == n {
        return Err(DataError::EmptySplit {
            total: n,
            fraction: train_fraction,
            train: n_train,
            test: n - n_train,
        });
    }
    let order = split_permutation(n, seed);
    let pick = |idx: &[usize]| {
        Dataset::new(idx.iter().map(|&i| ds.experiments[i].clone()).collect())
    };
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}
