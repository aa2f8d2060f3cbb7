use std::fmt::Write as _;

use serde::Deserialize;

use super::ModelError;
use crate::features::FEATURE_DIM;

/// Architecture and training hyperparameters of one network.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub name: String,
    #[serde(default = "default_input")]
    pub input_size: usize,
    pub hidden_sizes: Vec<usize>,
    #[serde(default)]
    pub first_hidden_is_lstm: bool,
    pub output_size: usize,
    #[serde(default)]
    pub l2_enabled: bool,
    #[serde(default)]
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

fn default_input() -> usize {
    FEATURE_DIM
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |why: String| Err(ModelError::InvalidSpec(format!("{}: {why}", self.name)));
        if self.input_size != FEATURE_DIM {
            return fail(format!("input_size must be {FEATURE_DIM}, got {}", self.input_size));
        }
        if self.output_size != 2 && self.output_size != 4 {
            return fail(format!("output_size must be 2 or 4, got {}", self.output_size));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return fail("hidden layer sizes must be non-empty and positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        Ok(())
    }

    /// Hidden widths joined with `-`, e.g. `1500-600`.
    pub fn hidden_string(&self) -> String {
        join_sizes(&self.hidden_sizes)
    }

    /// Total number of trainable scalars implied by the layer shapes.
    pub fn param_count(&self) -> usize {
        let mut total = 0;
        let mut prev = self.input_size;
        for (k, &h) in self.hidden_sizes.iter().enumerate() {
            total += if k == 0 && self.first_hidden_is_lstm {
                4 * (h * prev + h * h + h)
            } else {
                h * prev + h
            };
            prev = h;
        }
        total + self.output_size * prev + self.output_size
    }

    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        let spec: NetworkSpec =
            toml::from_str(text).map_err(|e| ModelError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

pub fn join_sizes(sizes: &[usize]) -> String {
    sizes
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("-")
}

pub fn parse_sizes(s: &str) -> Result<Vec<usize>, ModelError> {
    s.split('-')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| ModelError::InvalidSpec(format!("bad layer sizes {s:?}")))
        })
        .collect()
}

/// Which published group a registry entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegistryGroup {
    FeedForward,
    Recurrent,
    TwoClass,
}

impl RegistryGroup {
    pub fn title(self) -> &'static str {
        match self {
            RegistryGroup::FeedForward => "Standard feed-forward models (4 classes)",
            RegistryGroup::Recurrent => "Recurrent models, first hidden layer LSTM (4 classes)",
            RegistryGroup::TwoClass => "Models for two categories (acquaintances / intimate)",
        }
    }
}

struct Entry {
    name: &'static str,
    group: RegistryGroup,
    hidden: &'static [usize],
    lstm: bool,
    epochs: usize,
    learning_rate: f64,
    l2: bool,
    dropout: f64,
    output: usize,
}

const REGISTRY: [Entry; 11] = [
    Entry { name: "RN2-1", group: RegistryGroup::FeedForward, hidden: &[25, 12], lstm: false, epochs: 1500, learning_rate: 0.00015, l2: false, dropout: 0.0, output: 4 },
    Entry { name: "RN2-2", group: RegistryGroup::FeedForward, hidden: &[1500, 600], lstm: false, epochs: 2500, learning_rate: 0.00011, l2: false, dropout: 0.0, output: 4 },
    Entry { name: "RN2-3", group: RegistryGroup::FeedForward, hidden: &[1500, 600], lstm: false, epochs: 2500, learning_rate: 0.00011, l2: true, dropout: 0.0, output: 4 },
    Entry { name: "RN2-4", group: RegistryGroup::FeedForward, hidden: &[1800, 2500, 1600, 600], lstm: false, epochs: 2500, learning_rate: 0.00011, l2: true, dropout: 0.0, output: 4 },
    Entry { name: "RN2-5", group: RegistryGroup::FeedForward, hidden: &[1500, 600], lstm: false, epochs: 2500, learning_rate: 0.00011, l2: true, dropout: 0.15, output: 4 },
    Entry { name: "RNR2-1", group: RegistryGroup::Recurrent, hidden: &[25, 12], lstm: true, epochs: 1500, learning_rate: 0.00015, l2: true, dropout: 0.0, output: 4 },
    Entry { name: "RNR2-2", group: RegistryGroup::Recurrent, hidden: &[2500, 1800, 1200, 600], lstm: true, epochs: 10, learning_rate: 0.00011, l2: true, dropout: 0.0, output: 4 },
    Entry { name: "RNR2-3", group: RegistryGroup::Recurrent, hidden: &[1500, 600], lstm: true, epochs: 25, learning_rate: 0.00011, l2: true, dropout: 0.0, output: 4 },
    Entry { name: "RN2-6", group: RegistryGroup::TwoClass, hidden: &[1500, 600], lstm: false, epochs: 2500, learning_rate: 0.00011, l2: false, dropout: 0.0, output: 2 },
    Entry { name: "RN2-7", group: RegistryGroup::TwoClass, hidden: &[1500, 600], lstm: false, epochs: 2500, learning_rate: 0.00011, l2: true, dropout: 0.0, output: 2 },
    Entry { name: "RNR2-4", group: RegistryGroup::TwoClass, hidden: &[25, 12], lstm: true, epochs: 500, learning_rate: 0.00011, l2: true, dropout: 0.0, output: 2 },
];

impl Entry {
    fn spec(&self) -> NetworkSpec {
        NetworkSpec {
            name: self.name.to_string(),
            input_size: FEATURE_DIM,
            hidden_sizes: self.hidden.to_vec(),
            first_hidden_is_lstm: self.lstm,
            output_size: self.output,
            l2_enabled: self.l2,
            dropout_rate: self.dropout,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
        }
    }
}

pub fn registry_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|e| e.name).collect()
}

pub fn registry_lookup(name: &str) -> Result<NetworkSpec, ModelError> {
    REGISTRY
        .iter()
        .find(|e| e.name == name)
        .map(Entry::spec)
        .ok_or_else(|| ModelError::UnknownModelName(name.to_string()))
}

/// All registry entries with their group, in listing order.
pub fn registry() -> Vec<(RegistryGroup, NetworkSpec)> {
    REGISTRY.iter().map(|e| (e.group, e.spec())).collect()
}

fn yes_no(flag: bool) -> &'static str {
    if flag {
        "Yes"
    } else {
        "No"
    }
}

/// Fixed-width listing of the registry, one block per group.
pub fn render_registry() -> String {
    let mut out = String::new();
    let mut current = None;
    for (group, spec) in registry() {
        if current != Some(group) {
            if current.is_some() {
                out.push('\n');
            }
            current = Some(group);
            let _ = writeln!(out, "{}", group.title());
            let _ = writeln!(
                out,
                "{:<8} {:>6} {:<31} {:>6} {:>13} {:>4} {:>8} {:>7}",
                "Model", "Layers", "Neurons", "Epochs", "Learning rate", "L2", "Dropout", "Outputs"
            );
        }
        let neurons = if spec.first_hidden_is_lstm {
            format!("{} (LSTM first)", spec.hidden_string())
        } else {
            spec.hidden_string()
        };
        let dropout = if spec.dropout_rate > 0.0 {
            format!("{:.0}%", spec.dropout_rate * 100.0)
        } else {
            "No".to_string()
        };
        let _ = writeln!(
            out,
            "{:<8} {:>6} {:<31} {:>6} {:>13} {:>4} {:>8} {:>7}",
            spec.name,
            spec.hidden_sizes.len(),
            neurons,
            spec.epochs,
            format!("{:.5}", spec.learning_rate),
            yes_no(spec.l2_enabled),
            dropout,
            spec.output_size
        );
    }
    out
}
