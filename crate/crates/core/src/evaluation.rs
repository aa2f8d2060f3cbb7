//! Confusion matrices, accuracy, binary merging, fixed-width rendering and the
//! predictions TSV.
//!
//! Percentages are rounded half-up to two decimals using integer arithmetic on
//! hundredths: `round(10000·c/n) = (20000·c + n) / (2n)`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::data::{merge_to_binary, BinaryLabel, RelationshipLabel};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("LabelOutOfSpace: label index {index} is outside the {size}-class label space")]
    LabelOutOfSpace { index: usize, size: usize },
    #[error("NotFourClass: merging needs a 4-class matrix, got {0} classes")]
    NotFourClass(usize),
    #[error("MalformedPredictions: line {line}: {reason}")]
    MalformedPredictions { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSpace {
    /// Colleagues, Couple, Family, Friendship.
    Four,
    /// Acquaintances, Intimate.
    Two,
}

impl LabelSpace {
    pub fn size(self) -> usize {
        match self {
            LabelSpace::Four => 4,
            LabelSpace::Two => 2,
        }
    }

    pub fn for_outputs(n: usize) -> Option<Self> {
        match n {
            4 => Some(LabelSpace::Four),
            2 => Some(LabelSpace::Two),
            _ => None,
        }
    }

    /// Lower-case names as used in data files.
    pub fn name(self, index: usize) -> &'static str {
        match self {
            LabelSpace::Four => RelationshipLabel::ALL[index].as_str(),
            LabelSpace::Two => BinaryLabel::ALL[index].as_str(),
        }
    }

    /// Capitalized names as used in rendered tables.
    pub fn title(self, index: usize) -> &'static str {
        match self {
            LabelSpace::Four => ["Colleagues", "Couple", "Family", "Friendship"][index],
            LabelSpace::Two => ["Acquaintances", "Intimate"][index],
        }
    }

    pub fn index_of(self, name: &str) -> Option<usize> {
        (0..self.size()).find(|&i| self.name(i) == name)
    }

    /// Class index of a relationship label in this space.
    pub fn class_of(self, label: RelationshipLabel) -> usize {
        match self {
            LabelSpace::Four => label.index(),
            LabelSpace::Two => merge_to_binary(label).index(),
        }
    }
}

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    space: LabelSpace,
    counts: Vec<Vec<u64>>,
}

/// `100·correct/total`, or 0 for an empty set.
pub fn accuracy_percent(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * correct as f64 / total as f64
    }
}

/// Half-up rounding of `10000·c/n`.
pub fn hundredths(c: u64, n: u64) -> u64 {
    (20000 * c + n) / (2 * n)
}

pub fn confusion(pairs: &[(usize, usize)], space: LabelSpace) -> Result<ConfusionMatrix, EvalError> {
    let size = space.size();
    let mut counts = vec![vec![0u64; size]; size];
    for &(t, p) in pairs {
        for index in [t, p] {
            if index >= size {
                return Err(EvalError::LabelOutOfSpace { index, size });
            }
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { space, counts })
}

/// Block sums of a 4-class matrix under the acquaintances/intimate mapping.
pub fn merge_confusion(cm: &ConfusionMatrix) -> Result<ConfusionMatrix, EvalError> {
    if cm.space != LabelSpace::Four {
        return Err(EvalError::NotFourClass(cm.space.size()));
    }
    let mut counts = vec![vec![0u64; 2]; 2];
    for (i, row) in cm.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            let bi = merge_to_binary(RelationshipLabel::ALL[i]).index();
            let bj = merge_to_binary(RelationshipLabel::ALL[j]).index();
            counts[bi][bj] += c;
        }
    }
    Ok(ConfusionMatrix {
        space: LabelSpace::Two,
        counts,
    })
}

impl ConfusionMatrix {
    pub fn from_counts(space: LabelSpace, counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        let size = space.size();
        if counts.len() != size || counts.iter().any(|r| r.len() != size) {
            return Err(EvalError::LabelOutOfSpace {
                index: counts.len().max(counts.iter().map(Vec::len).max().unwrap_or(0)),
                size,
            });
        }
        Ok(ConfusionMatrix { space, counts })
    }

    pub fn space(&self) -> LabelSpace {
        self.space
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_support(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        accuracy_percent(self.trace() as usize, self.total() as usize)
    }

    /// Recall of class `i` as a fraction; `None` when the class has no examples.
    pub fn recall(&self, i: usize) -> Option<f64> {
        let n = self.row_support(i);
        (n > 0).then(|| self.counts[i][i] as f64 / n as f64)
    }

    /// Unrounded row-normalized percentages; zero-support rows are all zero.
    pub fn percentages(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let n: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 })
                    .collect()
            })
            .collect()
    }

    /// Row percentages in hundredths, rounded half-up.
    pub fn percent_hundredths(&self) -> Vec<Vec<u64>> {
        self.counts
            .iter()
            .map(|row| {
                let n: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if n == 0 { 0 } else { hundredths(c, n) })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderStyle {
    Counts,
    Percent,
}

const CORNER: &str = "Real \\ Predicted";
const EMPTY_ROW_MARK: &str = " *";
const EMPTY_ROW_NOTE: &str = "* no examples of this class; row shown as zeros";

fn fmt_hundredths(h: u64) -> String {
    format!("{}.{:02}", h / 100, h % 100)
}

fn render_cells(space: LabelSpace, cells: &[Vec<String>], empty: &[bool]) -> String {
    let n = space.size();
    let first = (0..n)
        .map(|i| space.title(i).len() + EMPTY_ROW_MARK.len())
        .chain([CORNER.len()])
        .max()
        .unwrap_or(0);
    let width = (0..n)
        .map(|i| space.title(i).len())
        .chain(cells.iter().flatten().map(String::len))
        .max()
        .unwrap_or(0)
        + 2;
    let mut out = String::new();
    let _ = write!(out, "{CORNER:<first$}");
    for j in 0..n {
        let _ = write!(out, "{:>width$}", space.title(j));
    }
    out.push('\n');
    for (i, row) in cells.iter().enumerate() {
        let label = if empty[i] {
            format!("{}{EMPTY_ROW_MARK}", space.title(i))
        } else {
            space.title(i).to_string()
        };
        let _ = write!(out, "{label:<first$}");
        for cell in row {
            let _ = write!(out, "{cell:>width$}");
        }
        out.push('\n');
    }
    if empty.iter().any(|&e| e) {
        out.push_str(EMPTY_ROW_NOTE);
        out.push('\n');
    }
    out
}

/// Fixed-width table, rows = real value, columns = predicted value.
pub fn render(cm: &ConfusionMatrix, style: RenderStyle) -> String {
    let cells: Vec<Vec<String>> = match style {
        RenderStyle::Counts => cm
            .counts
            .iter()
            .map(|r| r.iter().map(u64::to_string).collect())
            .collect(),
        RenderStyle::Percent => cm
            .percent_hundredths()
            .iter()
            .map(|r| r.iter().map(|&h| fmt_hundredths(h)).collect())
            .collect(),
    };
    let empty: Vec<bool> = (0..cm.space.size()).map(|i| cm.row_support(i) == 0).collect();
    render_cells(cm.space, &cells, &empty)
}

/// Renders a table that exists only as published percentages (hundredths per cell).
pub fn render_percent_table(space: LabelSpace, rows: &[[u64; 4]]) -> String {
    let n = space.size();
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r[..n].iter().map(|&h| fmt_hundredths(h)).collect())
        .collect();
    render_cells(space, &cells, &vec![false; n])
}

/// Published 4-class percentages of an external trajectory-based method, in
/// hundredths. Shipped for side-by-side display only.
pub const REFERENCE_METHOD_PERCENT: [[u64; 4]; 4] = [
    [6831, 729, 537, 1903],
    [1810, 3892, 2066, 2232],
    [1358, 3111, 3657, 1875],
    [3419, 1666, 1274, 3641],
];

pub fn render_reference() -> String {
    render_percent_table(LabelSpace::Four, &REFERENCE_METHOD_PERCENT)
}

/// Overall accuracy and per-class recall, one line each.
pub fn render_accuracy(cm: &ConfusionMatrix) -> String {
    let mut out = format!(
        "accuracy {:.2}% ({}/{})\n",
        cm.accuracy(),
        cm.trace(),
        cm.total()
    );
    for i in 0..cm.space.size() {
        match cm.recall(i) {
            Some(r) => {
                let _ = writeln!(out, "recall {} {:.2}%", cm.space.name(i), 100.0 * r);
            }
            None => {
                let _ = writeln!(out, "recall {} n/a", cm.space.name(i));
            }
        }
    }
    out
}

/// One evaluated experiment; labels are indices in `space`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub id: String,
    pub truth: usize,
    pub predicted: usize,
}

pub const PREDICTIONS_FORMAT: &str = "# format: predictions/1";

pub fn format_predictions(space: LabelSpace, preds: &[Prediction]) -> String {
    let mut out = format!("{PREDICTIONS_FORMAT}\nexp_id\ttrue\tpred\n");
    for p in preds {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            p.id,
            space.name(p.truth),
            space.name(p.predicted)
        );
    }
    out
}

/// Parses a predictions TSV. The label space is inferred from the label names, so
/// every row must use the same space.
pub fn parse_predictions(text: &str) -> Result<(LabelSpace, Vec<Prediction>), EvalError> {
    let bad = |line: usize, reason: String| EvalError::MalformedPredictions { line, reason };
    let mut space: Option<LabelSpace> = None;
    let mut preds = Vec::new();
    let mut seen_header = false;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.starts_with('#') || raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != 3 {
            return Err(bad(line, format!("expected 3 tab-separated columns, got {}", cols.len())));
        }
        if !seen_header {
            seen_header = true;
            if cols == ["exp_id", "true", "pred"] {
                continue;
            }
        }
        let s = match space {
            Some(s) => s,
            None => {
                let s = [LabelSpace::Four, LabelSpace::Two]
                    .into_iter()
                    .find(|s| s.index_of(cols[1]).is_some())
                    .ok_or_else(|| bad(line, format!("unknown label {:?}", cols[1])))?;
                space = Some(s);
                s
            }
        };
        let idx = |name: &str| {
            s.index_of(name)
                .ok_or_else(|| bad(line, format!("label {name:?} is not in the {}-class space", s.size())))
        };
        preds.push(Prediction {
            id: cols[0].to_string(),
            truth: idx(cols[1])?,
            predicted: idx(cols[2])?,
        });
    }
    let space = space.ok_or_else(|| bad(0, "no prediction rows".into()))?;
    Ok((space, preds))
}

/// Maps 4-class predictions to the acquaintances/intimate space.
pub fn merge_predictions(preds: &[Prediction]) -> Vec<Prediction> {
    let m = |i: usize| merge_to_binary(RelationshipLabel::ALL[i]).index();
    preds
        .iter()
        .map(|p| Prediction {
            id: p.id.clone(),
            truth: m(p.truth),
            predicted: m(p.predicted),
        })
        .collect()
}

pub fn prediction_pairs(preds: &[Prediction]) -> Vec<(usize, usize)> {
    preds.iter().map(|p| (p.truth, p.predicted)).collect()
}
