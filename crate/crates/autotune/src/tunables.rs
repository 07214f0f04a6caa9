//! Tunable parameter declarations and the unit-hypercube mapping.
//!
//! A component declares its tunables once, at startup, as a [`ComponentSpec`].
//! The same document serialized as JSON is the search-space file consumed by
//! the CLI and the payload of a REGISTER frame. Optimizers never see concrete
//! values: [`encode_unit`] maps a valid assignment onto `[0,1]^d` and
//! [`decode_unit`] maps back, one coordinate per tunable in declaration order.
//!
//! Definitions are immutable after construction and can be shared freely
//! across threads. Applying an assignment inside an instrumented component
//! must be torn-free per parameter (see [`crate::component::ParamTable`]);
//! nothing here promises atomicity across parameters.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Value kind of a tunable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TunableKind {
    Integer,
    Real,
    Boolean,
    Categorical,
}

impl fmt::Display for TunableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TunableKind::Integer => "integer",
            TunableKind::Real => "real",
            TunableKind::Boolean => "boolean",
            TunableKind::Categorical => "categorical",
        };
        f.write_str(s)
    }
}

/// Scale used when mapping a numeric tunable onto the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

/// A concrete value of some tunable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TunableValue {
    Bool(bool),
    Int(i64),
    Real(f64),
    Category(String),
}

impl TunableValue {
    pub fn kind(&self) -> TunableKind {
        match self {
            TunableValue::Bool(_) => TunableKind::Boolean,
            TunableValue::Int(_) => TunableKind::Integer,
            TunableValue::Real(_) => TunableKind::Real,
            TunableValue::Category(_) => TunableKind::Categorical,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            TunableValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    /// Numeric view: integers widen to f64, reals pass through.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            TunableValue::Int(v) => Some(*v as f64),
            TunableValue::Real(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            TunableValue::Bool(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            TunableValue::Category(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for TunableValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TunableValue::Bool(v) => write!(f, "{v}"),
            TunableValue::Int(v) => write!(f, "{v}"),
            TunableValue::Real(v) => write!(f, "{v}"),
            TunableValue::Category(v) => f.write_str(v),
        }
    }
}

/// Declaration of one tunable parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunableDef {
    pub name: String,
    /// Unique within one component; carried on CONFIG_UPDATE frames.
    pub param_id: u32,
    pub kind: TunableKind,
    /// Inclusive bounds; integer and real kinds only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default)]
    pub scale: Scale,
    /// Ordered category identifiers; categorical kind only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    pub default: TunableValue,
}

impl TunableDef {
    pub fn integer(name: &str, param_id: u32, lower: i64, upper: i64, default: i64) -> Self {
        TunableDef {
            name: name.to_string(),
            param_id,
            kind: TunableKind::Integer,
            lower: Some(lower as f64),
            upper: Some(upper as f64),
            scale: Scale::Linear,
            categories: Vec::new(),
            default: TunableValue::Int(default),
        }
    }

    pub fn real(name: &str, param_id: u32, lower: f64, upper: f64, default: f64) -> Self {
        TunableDef {
            name: name.to_string(),
            param_id,
            kind: TunableKind::Real,
            lower: Some(lower),
            upper: Some(upper),
            scale: Scale::Linear,
            categories: Vec::new(),
            default: TunableValue::Real(default),
        }
    }

    pub fn boolean(name: &str, param_id: u32, default: bool) -> Self {
        TunableDef {
            name: name.to_string(),
            param_id,
            kind: TunableKind::Boolean,
            lower: None,
            upper: None,
            scale: Scale::Linear,
            categories: Vec::new(),
            default: TunableValue::Bool(default),
        }
    }

    pub fn categorical(name: &str, param_id: u32, categories: &[&str], default: &str) -> Self {
        TunableDef {
            name: name.to_string(),
            param_id,
            kind: TunableKind::Categorical,
            lower: None,
            upper: None,
            scale: Scale::Linear,
            categories: categories.iter().map(|s| s.to_string()).collect(),
            default: TunableValue::Category(default.to_string()),
        }
    }

    pub fn log_scale(mut self) -> Self {
        self.scale = Scale::Log;
        self
    }

    fn bounds(&self) -> Option<(f64, f64)> {
        Some((self.lower?, self.upper?))
    }

    /// Does `v` satisfy this definition's kind and bounds?
    fn check(&self, v: &TunableValue) -> Result<(), AssignmentError> {
        let name = self.name.clone();
        match self.kind {
            TunableKind::Integer | TunableKind::Real => {
                let ok_kind = match (self.kind, v) {
                    (TunableKind::Integer, TunableValue::Int(_)) => true,
                    (TunableKind::Real, TunableValue::Real(_) | TunableValue::Int(_)) => true,
                    _ => false,
                };
                if !ok_kind {
                    return Err(AssignmentError::KindMismatch {
                        name,
                        expected: self.kind,
                        got: v.kind(),
                    });
                }
                let (lower, upper) = self.bounds().expect("validated spec has bounds");
                let x = v.as_f64().expect("numeric kind");
                if x < lower || x > upper {
                    return Err(AssignmentError::OutOfBounds {
                        name,
                        value: v.to_string(),
                        lower,
                        upper,
                    });
                }
                Ok(())
            }
            TunableKind::Boolean => match v {
                TunableValue::Bool(_) => Ok(()),
                _ => Err(AssignmentError::KindMismatch {
                    name,
                    expected: self.kind,
                    got: v.kind(),
                }),
            },
            TunableKind::Categorical => match v {
                TunableValue::Category(c) => {
                    if self.categories.iter().any(|k| k == c) {
                        Ok(())
                    } else {
                        Err(AssignmentError::UnknownCategory {
                            name,
                            value: c.clone(),
                        })
                    }
                }
                _ => Err(AssignmentError::KindMismatch {
                    name,
                    expected: self.kind,
                    got: v.kind(),
                }),
            },
        }
    }
}

/// Declared metric of a component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDef {
    pub metric_id: u32,
    pub name: String,
    pub unit: String,
}

/// Everything a component declares at registration: identity, tunables,
/// metrics. Serialized as JSON this is the search-space document, the
/// REGISTER payload, and the `--space` CLI input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub component_id: u32,
    pub name: String,
    pub tunables: Vec<TunableDef>,
    #[serde(default)]
    pub metrics: Vec<MetricDef>,
}

/// A defect in a spec document itself.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("tunable `{name}`: missing lower/upper bounds")]
    MissingBounds { name: String },
    #[error("tunable `{name}`: lower bound {lower} exceeds upper bound {upper}")]
    BoundsOrder { name: String, lower: f64, upper: f64 },
    #[error("tunable `{name}`: integer bounds must be whole numbers")]
    NonIntegerBounds { name: String },
    #[error("tunable `{name}`: log scale requires lower > 0 (got {lower})")]
    LogScaleBounds { name: String, lower: f64 },
    #[error("tunable `{name}`: categorical kind needs at least one category")]
    EmptyCategories { name: String },
    #[error("tunable `{name}`: duplicate category `{category}`")]
    DuplicateCategory { name: String, category: String },
    #[error("tunable `{name}`: default {default} violates the declaration: {source}")]
    BadDefault {
        name: String,
        default: String,
        source: AssignmentError,
    },
    #[error("duplicate param_id {id} (tunables `{first}` and `{second}`)")]
    DuplicateParamId {
        id: u32,
        first: String,
        second: String,
    },
    #[error("duplicate tunable name `{name}`")]
    DuplicateTunableName { name: String },
    #[error("duplicate metric_id {id}")]
    DuplicateMetricId { id: u32 },
}

/// One violation found while validating an assignment against a spec.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignmentError {
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("parameter `{name}`: value {value} out of bounds [{lower}, {upper}]")]
    OutOfBounds {
        name: String,
        value: String,
        lower: f64,
        upper: f64,
    },
    #[error("parameter `{name}`: expected {expected} value, got {got}")]
    KindMismatch {
        name: String,
        expected: TunableKind,
        got: TunableKind,
    },
    #[error("parameter `{name}`: unknown category `{value}`")]
    UnknownCategory { name: String, value: String },
}

/// Error from [`decode_unit`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("unit vector has {got} coordinates, spec declares {expected} tunables")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {index} = {value} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
}

impl ComponentSpec {
    pub fn new(component_id: u32, name: &str) -> Self {
        ComponentSpec {
            component_id,
            name: name.to_string(),
            tunables: Vec::new(),
            metrics: Vec::new(),
        }
    }

    pub fn with_tunable(mut self, def: TunableDef) -> Self {
        self.tunables.push(def);
        self
    }

    pub fn with_metric(mut self, metric_id: u32, name: &str, unit: &str) -> Self {
        self.metrics.push(MetricDef {
            metric_id,
            name: name.to_string(),
            unit: unit.to_string(),
        });
        self
    }

    /// Check every invariant of the declaration itself.
    pub fn validate(&self) -> Result<(), SpecError> {
        let mut seen_ids: BTreeMap<u32, &str> = BTreeMap::new();
        let mut seen_names: Vec<&str> = Vec::new();
        for t in &self.tunables {
            if let Some(first) = seen_ids.insert(t.param_id, &t.name) {
                return Err(SpecError::DuplicateParamId {
                    id: t.param_id,
                    first: first.to_string(),
                    second: t.name.clone(),
                });
            }
            if seen_names.contains(&t.name.as_str()) {
                return Err(SpecError::DuplicateTunableName {
                    name: t.name.clone(),
                });
            }
            seen_names.push(&t.name);

            match t.kind {
                TunableKind::Integer | TunableKind::Real => {
                    let (lower, upper) = t.bounds().ok_or(SpecError::MissingBounds {
                        name: t.name.clone(),
                    })?;
                    if lower > upper {
                        return Err(SpecError::BoundsOrder {
                            name: t.name.clone(),
                            lower,
                            upper,
                        });
                    }
                    if t.kind == TunableKind::Integer
                        && (lower.fract() != 0.0 || upper.fract() != 0.0)
                    {
                        return Err(SpecError::NonIntegerBounds {
                            name: t.name.clone(),
                        });
                    }
                    if t.scale == Scale::Log && lower <= 0.0 {
                        return Err(SpecError::LogScaleBounds {
                            name: t.name.clone(),
                            lower,
                        });
                    }
                }
                TunableKind::Boolean => {}
                TunableKind::Categorical => {
                    if t.categories.is_empty() {
                        return Err(SpecError::EmptyCategories {
                            name: t.name.clone(),
                        });
                    }
                    for (i, c) in t.categories.iter().enumerate() {
                        if t.categories[..i].contains(c) {
                            return Err(SpecError::DuplicateCategory {
                                name: t.name.clone(),
                                category: c.clone(),
                            });
                        }
                    }
                }
            }
            t.check(&t.default).map_err(|source| SpecError::BadDefault {
                name: t.name.clone(),
                default: t.default.to_string(),
                source,
            })?;
        }

        let mut metric_ids = Vec::new();
        for m in &self.metrics {
            if metric_ids.contains(&m.metric_id) {
                return Err(SpecError::DuplicateMetricId { id: m.metric_id });
            }
            metric_ids.push(m.metric_id);
        }
        Ok(())
    }

    pub fn tunable(&self, name: &str) -> Option<&TunableDef> {
        self.tunables.iter().find(|t| t.name == name)
    }

    pub fn metric_by_name(&self, name: &str) -> Option<&MetricDef> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn metric_by_id(&self, id: u32) -> Option<&MetricDef> {
        self.metrics.iter().find(|m| m.metric_id == id)
    }

    /// The assignment made of every tunable's declared default.
    pub fn default_assignment(&self) -> TunableAssignment {
        TunableAssignment {
            component_id: self.component_id,
            values: self
                .tunables
                .iter()
                .map(|t| (t.name.clone(), t.default.clone()))
                .collect(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.tunables.len()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// One concrete setting of every tunable of a component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunableAssignment {
    pub component_id: u32,
    /// Keyed by tunable name; BTreeMap so serialization order is stable.
    pub values: BTreeMap<String, TunableValue>,
}

impl TunableAssignment {
    pub fn get(&self, name: &str) -> Option<&TunableValue> {
        self.values.get(name)
    }

    pub fn set(&mut self, name: &str, value: TunableValue) {
        self.values.insert(name.to_string(), value);
    }
}

/// Validate `a` against `spec`, reporting *every* violation rather than the
/// first: one entry per unknown name, one per missing tunable, one per
/// bounds/kind failure.
pub fn validate_assignment(
    spec: &ComponentSpec,
    a: &TunableAssignment,
) -> Result<(), Vec<AssignmentError>> {
    let mut errors = Vec::new();
    for name in a.values.keys() {
        if spec.tunable(name).is_none() {
            errors.push(AssignmentError::UnknownParameter(name.clone()));
        }
    }
    for t in &spec.tunables {
        match a.values.get(&t.name) {
            None => errors.push(AssignmentError::MissingParameter(t.name.clone())),
            Some(v) => {
                if let Err(e) = t.check(v) {
                    errors.push(e);
                }
            }
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

fn encode_one(t: &TunableDef, v: &TunableValue) -> f64 {
    match t.kind {
        TunableKind::Integer | TunableKind::Real => {
            let (lower, upper) = t.bounds().expect("validated spec has bounds");
            if lower == upper {
                return 0.0;
            }
            let x = v.as_f64().expect("validated value is numeric");
            match t.scale {
                Scale::Linear => (x - lower) / (upper - lower),
                Scale::Log => (x.ln() - lower.ln()) / (upper.ln() - lower.ln()),
            }
        }
        TunableKind::Boolean => {
            if v.as_bool().expect("validated value is boolean") {
                1.0
            } else {
                0.0
            }
        }
        TunableKind::Categorical => {
            let k = t.categories.len();
            if k <= 1 {
                return 0.0;
            }
            let c = v.as_category().expect("validated value is a category");
            let index = t
                .categories
                .iter()
                .position(|x| x == c)
                .expect("validated category exists");
            index as f64 / (k - 1) as f64
        }
    }
}

/// Round to nearest, ties toward +inf.
fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

fn decode_one(t: &TunableDef, u: f64) -> TunableValue {
    match t.kind {
        TunableKind::Integer | TunableKind::Real => {
            let (lower, upper) = t.bounds().expect("validated spec has bounds");
            let x = match t.scale {
                Scale::Linear => lower + u * (upper - lower),
                Scale::Log => (lower.ln() + u * (upper.ln() - lower.ln())).exp(),
            };
            match t.kind {
                TunableKind::Integer => {
                    let v = round_half_up(x).clamp(lower, upper);
                    TunableValue::Int(v as i64)
                }
                _ => TunableValue::Real(x.clamp(lower, upper)),
            }
        }
        TunableKind::Boolean => TunableValue::Bool(u >= 0.5),
        TunableKind::Categorical => {
            let k = t.categories.len();
            let index = if k <= 1 {
                0
            } else {
                (round_half_up(u * (k - 1) as f64) as usize).min(k - 1)
            };
            TunableValue::Category(t.categories[index].clone())
        }
    }
}

/// Map a valid assignment onto `[0,1]^d`, one coordinate per tunable in
/// declaration order. Linear: `(v-lo)/(hi-lo)`; log: the same in ln-space;
/// boolean: 0 or 1; categorical with k categories: `index/(k-1)`. Degenerate
/// tunables (single category, `lo == hi`) pin their coordinate at 0.
pub fn encode_unit(
    spec: &ComponentSpec,
    a: &TunableAssignment,
) -> Result<Vec<f64>, Vec<AssignmentError>> {
    validate_assignment(spec, a)?;
    Ok(spec
        .tunables
        .iter()
        .map(|t| encode_one(t, &a.values[&t.name]))
        .collect())
}

/// Inverse of [`encode_unit`]. Integers and category indexes round to
/// nearest (ties half up); the result always validates against `spec`.
pub fn decode_unit(spec: &ComponentSpec, u: &[f64]) -> Result<TunableAssignment, DecodeError> {
    if u.len() != spec.tunables.len() {
        return Err(DecodeError::DimensionMismatch {
            expected: spec.tunables.len(),
            got: u.len(),
        });
    }
    for (index, &value) in u.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(DecodeError::OutOfRange { index, value });
        }
    }
    let values = spec
        .tunables
        .iter()
        .zip(u)
        .map(|(t, &coord)| (t.name.clone(), decode_one(t, coord)))
        .collect();
    Ok(TunableAssignment {
        component_id: spec.component_id,
        values,
    })
}
