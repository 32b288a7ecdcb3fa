//! Design-variable domains, raw design vectors and their unit-cube images.
//!
//! Kernels only ever see [`UnitVector`]s; raw [`DesignVector`]s are in the
//! units a designer works with (px, point sizes, color codes).

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use thiserror::Error;

use crate::seed;

const LATTICE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariableKind {
    Continuous,
    DiscreteStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

impl VariableSpec {
    pub fn continuous(name: &str, min: f64, max: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: VariableKind::Continuous,
            min,
            max,
            step: None,
        }
    }

    pub fn discrete(name: &str, min: f64, max: f64, step: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: VariableKind::DiscreteStep,
            min,
            max,
            step: Some(step),
        }
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    /// Number of lattice points for a discrete-step variable.
    fn lattice_len(&self) -> Option<u64> {
        self.step
            .map(|s| ((self.max - self.min) / s).round() as u64 + 1)
    }

    fn check(&self, field: &str) -> Result<(), SpaceError> {
        let err = |message: String| SpaceError::Field {
            field: field.to_string(),
            message,
        };
        if self.name.trim().is_empty() {
            return Err(err("name must not be empty".into()));
        }
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(err("min and max must be finite".into()));
        }
        if !(self.min < self.max) {
            return Err(err(format!("min ({}) must be < max ({})", self.min, self.max)));
        }
        match (self.kind, self.step) {
            (VariableKind::Continuous, Some(_)) => {
                Err(err("step is only allowed for discrete-step variables".into()))
            }
            (VariableKind::Continuous, None) => Ok(()),
            (VariableKind::DiscreteStep, None) => {
                Err(err("discrete-step variable requires a step".into()))
            }
            (VariableKind::DiscreteStep, Some(step)) => {
                if !(step > 0.0) || !step.is_finite() {
                    return Err(err(format!("step must be positive, got {step}")));
                }
                let k = self.range() / step;
                if ((k - k.round()) * step).abs() > LATTICE_TOL {
                    return Err(err(format!(
                        "range {} is not a multiple of step {step}",
                        self.range()
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("invalid design-space JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("dimension mismatch: space has {expected} variables, vector has {got}")]
    Dimension { expected: usize, got: usize },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationReason {
    NotFinite,
    OutOfRange { min: f64, max: f64 },
    OffLattice { step: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Zero-based variable index.
    pub index: usize,
    pub variable: String,
    pub value: f64,
    pub reason: ViolationReason,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.reason {
            ViolationReason::NotFinite => write!(f, "{}: value is not finite", self.variable),
            ViolationReason::OutOfRange { min, max } => write!(
                f,
                "{}: {} is outside [{min}, {max}]",
                self.variable, self.value
            ),
            ViolationReason::OffLattice { step } => write!(
                f,
                "{}: {} is not on the step-{step} lattice",
                self.variable, self.value
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error(transparent)]
    Dimension(SpaceError),
    #[error("invalid design vector: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Violations(Vec<Violation>),
}

/// A design solution in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignVector(pub Vec<f64>);

/// A design solution mapped into the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitVector(pub Vec<f64>);

impl DesignVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl UnitVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sq_distance(&self, other: &UnitVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn distance(&self, other: &UnitVector) -> f64 {
        self.sq_distance(other).sqrt()
    }
}

#[derive(Deserialize)]
struct RawSpace {
    name: String,
    variables: Vec<VariableSpec>,
}

/// An ordered, validated list of design variables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignSpace {
    name: String,
    variables: Vec<VariableSpec>,
}

impl<'de> Deserialize<'de> for DesignSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawSpace::deserialize(d)?;
        DesignSpace::new(&raw.name, raw.variables).map_err(serde::de::Error::custom)
    }
}

impl DesignSpace {
    pub fn new(name: &str, variables: Vec<VariableSpec>) -> Result<Self, SpaceError> {
        if variables.is_empty() {
            return Err(SpaceError::Field {
                field: "variables".into(),
                message: "at least one variable is required".into(),
            });
        }
        let mut seen = BTreeSet::new();
        for (i, v) in variables.iter().enumerate() {
            let field = format!("variables[{i}]");
            v.check(&field)?;
            if !seen.insert(v.name.as_str()) {
                return Err(SpaceError::Field {
                    field: format!("{field}.name"),
                    message: format!("duplicate variable name '{}'", v.name),
                });
            }
        }
        Ok(Self {
            name: name.to_string(),
            variables,
        })
    }

    /// Parses the `{name, variables:[...]}` document. Syntax errors carry the
    /// line and column; semantic errors carry the offending field path.
    pub fn from_json_str(text: &str) -> Result<Self, SpaceError> {
        let raw: RawSpace = serde_json::from_str(text).map_err(|e| SpaceError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::new(&raw.name, raw.variables)
    }

    pub fn from_file(path: &Path) -> Result<Self, SpaceError> {
        let text = std::fs::read_to_string(path).map_err(|e| SpaceError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&text)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    fn check_dim(&self, got: usize) -> Result<(), SpaceError> {
        if got != self.dim() {
            return Err(SpaceError::Dimension {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    pub fn validate(&self, v: &DesignVector) -> Result<(), ValidationError> {
        self.check_dim(v.len()).map_err(ValidationError::Dimension)?;
        let mut violations = Vec::new();
        for (index, (spec, &value)) in self.variables.iter().zip(&v.0).enumerate() {
            let reason = if !value.is_finite() {
                Some(ViolationReason::NotFinite)
            } else if value < spec.min - LATTICE_TOL || value > spec.max + LATTICE_TOL {
                Some(ViolationReason::OutOfRange {
                    min: spec.min,
                    max: spec.max,
                })
            } else if let Some(step) = spec.step {
                let k = (value - spec.min) / step;
                ((k - k.round()).abs() * step > LATTICE_TOL)
                    .then_some(ViolationReason::OffLattice { step })
            } else {
                None
            };
            if let Some(reason) = reason {
                violations.push(Violation {
                    index,
                    variable: spec.name.clone(),
                    value,
                    reason,
                });
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ValidationError::Violations(violations))
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> DesignVector {
        DesignVector(
            self.variables
                .iter()
                .map(|spec| match (spec.step, spec.lattice_len()) {
                    (Some(step), Some(len)) => {
                        spec.min + rng.random_range(0..len) as f64 * step
                    }
                    _ => spec.min + rng.random::<f64>() * spec.range(),
                })
                .collect(),
        )
    }

    /// `count` independent uniform draws, deterministic in `seed`.
    pub fn sample_uniform(&self, seed: u64, count: usize) -> Vec<DesignVector> {
        let mut rng = seed::rng(seed);
        (0..count).map(|_| self.sample_one(&mut rng)).collect()
    }

    pub fn normalize(&self, v: &DesignVector) -> Result<UnitVector, SpaceError> {
        self.check_dim(v.len())?;
        Ok(UnitVector(
            self.variables
                .iter()
                .zip(&v.0)
                .map(|(s, x)| (x - s.min) / s.range())
                .collect(),
        ))
    }

    pub fn denormalize(&self, u: &UnitVector) -> Result<DesignVector, SpaceError> {
        self.check_dim(u.len())?;
        Ok(DesignVector(
            self.variables
                .iter()
                .zip(&u.0)
                .map(|(s, x)| s.min + x * s.range())
                .collect(),
        ))
    }

    /// Validates and normalizes in one step.
    pub fn to_unit(&self, v: &DesignVector) -> Result<UnitVector, ValidationError> {
        self.validate(v)?;
        self.normalize(v).map_err(ValidationError::Dimension)
    }

    /// Two-variable reference space used by the synthetic pipeline.
    pub fn toy_2d() -> Self {
        Self::new(
            "toy-2d",
            vec![
                VariableSpec::continuous("box_height", 40.0, 100.0),
                VariableSpec::continuous("font_size", 12.0, 24.0),
            ],
        )
        .expect("fixture is valid")
    }

    /// Nine-variable space shaped like a search box module.
    pub fn search_box_9d() -> Self {
        Self::new(
            "search-box",
            vec![
                VariableSpec::continuous("icon_size", 60.0, 100.0),
                VariableSpec::continuous("font_size", 40.0, 64.0),
                VariableSpec::continuous("box_height", 80.0, 140.0),
                VariableSpec::continuous("corner_radius", 0.0, 40.0),
                VariableSpec::continuous("padding_left", 8.0, 40.0),
                VariableSpec::continuous("tag_spacing", 8.0, 32.0),
                VariableSpec::continuous("tag_font_size", 24.0, 44.0),
                VariableSpec::discrete("tag_color_a", 0.0, 5.0, 1.0),
                VariableSpec::discrete("tag_color_b", 0.0, 5.0, 1.0),
            ],
        )
        .expect("fixture is valid")
    }

    /// Eight-variable space shaped like a news feed card.
    pub fn news_feed_8d() -> Self {
        Self::new(
            "news-feed",
            vec![
                VariableSpec::continuous("title_font_size", 32.0, 56.0),
                VariableSpec::continuous("line_spacing", 4.0, 24.0),
                VariableSpec::continuous("image_height", 120.0, 240.0),
                VariableSpec::continuous("image_width", 160.0, 320.0),
                VariableSpec::continuous("margin_left", 16.0, 48.0),
                VariableSpec::continuous("margin_top", 8.0, 40.0),
                VariableSpec::continuous("abstract_font_size", 24.0, 40.0),
                VariableSpec::continuous("source_font_size", 18.0, 32.0),
            ],
        )
        .expect("fixture is valid")
    }
}
