//! Model-variant parameterisation: contact functions, delay distributions,
//! Noisy-OR evaluation and conjugation-weight normalisation.

mod contact;
mod delay;

pub use contact::{contact_raw_weight, contact_raw_weight_with_separation, ContactFn};
pub use delay::{delay_edge_weights, DelayModel, DelayShape, DelayWeights};
pub use crate::inference::maturity::maturity_bias_normalizer;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Contact range used when a model entry does not specify one, in micrometers.
pub const DEFAULT_CONTACT_RANGE_UM: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CpdError {
    #[error("degenerate delay CDF: {0}")]
    DegenerateCdf(String),
    #[error("invalid delay model: {0}")]
    BadDelay(String),
    #[error("no candidate conjugation edges: every raw weight is zero")]
    NoCandidateEdges,
    #[error("normalisation budget must be positive, got {0}")]
    BadBudget(f64),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One model variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub contact_fn: ContactFn,
    pub expression_delay: DelayModel,
    pub maturation_delay: DelayModel,
    pub contact_range: f64,
    /// Target sum of conjugation weights; `None` uses the trial's event count.
    pub normalization_budget: Option<f64>,
    pub maturity_bias_correction: bool,
}

impl ModelConfig {
    pub fn new(contact_fn: ContactFn, expression_delay: DelayModel, maturation_delay: DelayModel) -> Self {
        let mut m = Self {
            name: String::new(),
            contact_fn,
            expression_delay,
            maturation_delay,
            contact_range: DEFAULT_CONTACT_RANGE_UM,
            normalization_budget: None,
            maturity_bias_correction: true,
        };
        m.name = m.conventional_name();
        m
    }

    /// `Contact_R(l,u)_M(l,u)`.
    pub fn conventional_name(&self) -> String {
        format!(
            "{}_R{}_M{}",
            self.contact_fn.name(),
            self.expression_delay.label(),
            self.maturation_delay.label()
        )
    }

    pub fn validate(&self, frame_interval: f64) -> Result<(), CpdError> {
        self.expression_delay.validate(frame_interval)?;
        self.maturation_delay.validate(frame_interval)?;
        if !(self.contact_range > 0.0) {
            return Err(CpdError::Config(format!(
                "{}: contact range must be positive",
                self.name
            )));
        }
        if let Some(b) = self.normalization_budget {
            if !(b > 0.0) {
                return Err(CpdError::BadBudget(b));
            }
        }
        Ok(())
    }
}

/// The eight variants: two contact functions, two expression ranges and two
/// maturation ranges, all uniform.
pub fn default_model_grid() -> Vec<ModelConfig> {
    let mut grid = Vec::with_capacity(8);
    for contact in [ContactFn::Base, ContactFn::Edge] {
        for (el, eu) in [(30.0, 150.0), (30.0, 120.0)] {
            for (ml, mu) in [(15.0, 75.0), (30.0, 90.0)] {
                grid.push(ModelConfig::new(
                    contact,
                    DelayModel::uniform(el, eu),
                    DelayModel::uniform(ml, mu),
                ));
            }
        }
    }
    grid
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct GridEntry {
    #[serde(default)]
    name: Option<String>,
    contact_fn: ContactFn,
    expr_range: [f64; 2],
    mat_range: [f64; 2],
    #[serde(default)]
    contact_range_um: Option<f64>,
    #[serde(default)]
    budget: Option<f64>,
    #[serde(default = "default_true")]
    bias_correction: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    model: Vec<GridEntry>,
}

/// Parses a model-grid TOML document (`[[model]]` tables).
pub fn parse_model_grid(text: &str) -> Result<Vec<ModelConfig>, CpdError> {
    let file: GridFile = toml::from_str(text).map_err(|e| CpdError::Config(e.to_string()))?;
    if file.model.is_empty() {
        return Err(CpdError::Config("model grid is empty".into()));
    }
    let mut out = Vec::with_capacity(file.model.len());
    for e in file.model {
        let mut m = ModelConfig::new(
            e.contact_fn,
            DelayModel::uniform(e.expr_range[0], e.expr_range[1]),
            DelayModel::uniform(e.mat_range[0], e.mat_range[1]),
        );
        m.contact_range = e.contact_range_um.unwrap_or(DEFAULT_CONTACT_RANGE_UM);
        m.normalization_budget = e.budget;
        m.maturity_bias_correction = e.bias_correction;
        if let Some(n) = e.name {
            m.name = n;
        }
        out.push(m);
    }
    let mut names: Vec<&str> = out.iter().map(|m| m.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(CpdError::Config("duplicate model names in grid".into()));
    }
    Ok(out)
}

pub fn read_model_grid(path: &Path) -> Result<Vec<ModelConfig>, CpdError> {
    parse_model_grid(&std::fs::read_to_string(path)?)
}

/// Serialises a grid back to the TOML layout read by [`parse_model_grid`].
/// Only uniform delays are representable.
pub fn model_grid_to_toml(models: &[ModelConfig]) -> String {
    let file = GridFile {
        model: models
            .iter()
            .map(|m| GridEntry {
                name: Some(m.name.clone()),
                contact_fn: m.contact_fn,
                expr_range: [m.expression_delay.lower, m.expression_delay.upper],
                mat_range: [m.maturation_delay.lower, m.maturation_delay.upper],
                contact_range_um: Some(m.contact_range),
                budget: m.normalization_budget,
                bias_correction: m.maturity_bias_correction,
            })
            .collect(),
    };
    toml::to_string(&file).expect("grid serialises")
}

/// Leak-free Noisy-OR: probability that at least one active cause fires.
pub fn noisy_or(active_weights: &[f64]) -> f64 {
    1.0 - active_weights.iter().map(|p| 1.0 - p).product::<f64>()
}

/// Normalised conjugation weights plus how many had to be clamped to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedWeights {
    pub weights: Vec<f64>,
    pub clamped: usize,
}

/// Scales raw conjugation weights so they sum to `budget`, clamping at 1.
///
/// Zero raw weights stay zero; callers drop those edges.
pub fn normalize_conjugation(raw: &[f64], budget: f64) -> Result<NormalizedWeights, CpdError> {
    if !(budget > 0.0) {
        return Err(CpdError::BadBudget(budget));
    }
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(CpdError::NoCandidateEdges);
    }
    let mut clamped = 0;
    let weights = raw
        .iter()
        .map(|&r| {
            let w = budget * (r / total);
            if w > 1.0 {
                clamped += 1;
                1.0
            } else {
                w
            }
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} conjugation weight(s) clamped to 1 (budget {budget})");
    }
    Ok(NormalizedWeights { weights, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn noisy_or_basics() {
        assert_eq!(noisy_or(&[]), 0.0);
        assert!((noisy_or(&[0.3]) - 0.3).abs() < 1e-15);
        // four outcomes of two fair causes; only "neither fires" is off
        let enumerated = 1.0 - 0.5 * 0.5;
        assert_eq!(noisy_or(&[0.5, 0.5]), enumerated);
        assert_eq!(noisy_or(&[0.2, 1.0, 0.4]), 1.0);
    }

    #[test]
    fn proportional_split() {
        let n = normalize_conjugation(&[2.0, 2.0, 4.0], 1.0).unwrap();
        assert_eq!(n.weights, vec![0.25, 0.25, 0.5]);
        let n = normalize_conjugation(&[1.0, 1.0, 2.0], 1.0).unwrap();
        assert_eq!(n.weights, vec![0.25, 0.25, 0.5]);
        assert_eq!(n.clamped, 0);
    }

    #[test]
    fn clamping_is_reported() {
        let n = normalize_conjugation(&[1.0], 5.0).unwrap();
        assert_eq!(n.weights, vec![1.0]);
        assert_eq!(n.clamped, 1);
    }

    #[test]
    fn all_zero_raw_weights() {
        assert!(matches!(normalize_conjugation(&[0.0, 0.0], 1.0), Err(CpdError::NoCandidateEdges)));
        assert!(matches!(normalize_conjugation(&[1.0], 0.0), Err(CpdError::BadBudget(_))));
    }

    #[test]
    fn default_grid_names() {
        let names: Vec<String> = default_model_grid().into_iter().map(|m| m.name).collect();
        assert_eq!(names.len(), 8);
        assert!(names.contains(&"Base_R(30,150)_M(15,75)".to_string()));
        assert!(names.contains(&"Edge_R(30,120)_M(30,90)".to_string()));
    }

    #[test]
    fn grid_round_trip() {
        let grid = default_model_grid();
        let back = parse_model_grid(&model_grid_to_toml(&grid)).unwrap();
        assert_eq!(back, grid);
    }

    #[test]
    fn grid_parse_defaults() {
        let text = r#"
            [[model]]
            contact_fn = "Edge"
            expr_range = [30, 150]
            mat_range = [30, 90]
        "#;
        let g = parse_model_grid(text).unwrap();
        assert_eq!(g[0].name, "Edge_R(30,150)_M(30,90)");
        assert_eq!(g[0].contact_range, DEFAULT_CONTACT_RANGE_UM);
        assert!(g[0].maturity_bias_correction);
        assert!(parse_model_grid("model = []").is_err());
    }

    proptest! {
        #[test]
        fn noisy_or_commutative_and_monotone(ws in prop::collection::vec(0.0f64..1.0, 0..6), extra in 0.0f64..1.0) {
            let mut rev = ws.clone();
            rev.reverse();
            prop_assert!((noisy_or(&ws) - noisy_or(&rev)).abs() < 1e-12);
            let mut more = ws.clone();
            more.push(extra);
            prop_assert!(noisy_or(&more) >= noisy_or(&ws) - 1e-15);
            if !ws.is_empty() {
                let mut bumped = ws.clone();
                bumped[0] = (bumped[0] + extra).min(1.0);
                prop_assert!(noisy_or(&bumped) >= noisy_or(&ws) - 1e-15);
            }
        }

        #[test]
        fn normalisation_preserves_order_and_scale(raw in prop::collection::vec(0.01f64..10.0, 1..12), c in 1e-6f64..1e6) {
            let budget = 1.0;
            let a = normalize_conjugation(&raw, budget).unwrap();
            let scaled: Vec<f64> = raw.iter().map(|r| r * c).collect();
            let b = normalize_conjugation(&scaled, budget).unwrap();
            for (x, y) in a.weights.iter().zip(&b.weights) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            for i in 0..raw.len() {
                for j in 0..raw.len() {
                    if raw[i] < raw[j] {
                        prop_assert!(a.weights[i] <= a.weights[j]);
                    }
                }
            }
            let total: f64 = a.weights.iter().sum();
            prop_assert!((total - budget).abs() < 1e-9);
        }
    }
}
