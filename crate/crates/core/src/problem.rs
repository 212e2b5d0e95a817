//! Problem definitions: design variables, design-space constraints and
//! objectives, plus the continuous encoding every model and solver works in.
//!
//! Encoding layout, in declaration order of the variables:
//!
//! | kind        | encoded width | rule                                  |
//! |-------------|---------------|---------------------------------------|
//! | continuous  | 1             | `(v - lo) / (hi - lo)`                |
//! | discrete    | 1             | `(k - lo) / (hi - lo)`                |
//! | binary      | 1             | `0.0` / `1.0`                         |
//! | categorical | `k` labels    | one-hot block                         |
//!
//! Linear constraints are expressed over this encoded vector (`a·u + b <= 0`).
//! A constraint may instead be written with `terms` in user units; it is then
//! converted into encoded units by [`Problem::linear_rows`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::program::{self, ProgramError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Continuous,
    Discrete,
    Binary,
    Categorical,
}

/// One design variable. Which optional fields are meaningful depends on `kind`;
/// [`Problem::validate`] reports combinations that make no sense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

impl VariableSpec {
    pub fn continuous(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Continuous,
            bounds: Some([lo, hi]),
            categories: None,
        }
    }

    pub fn discrete(name: impl Into<String>, lo: i64, hi: i64) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Discrete,
            bounds: Some([lo as f64, hi as f64]),
            categories: None,
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Binary,
            bounds: None,
            categories: None,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        labels: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Categorical,
            bounds: None,
            categories: Some(labels.into_iter().map(Into::into).collect()),
        }
    }

    /// Number of encoded dimensions this variable occupies.
    pub fn encoded_width(&self) -> usize {
        match self.kind {
            VariableKind::Categorical => self.categories.as_ref().map_or(0, Vec::len),
            _ => 1,
        }
    }

    fn range(&self) -> (f64, f64) {
        let [lo, hi] = self.bounds.unwrap_or([0.0, 1.0]);
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConstraintForm {
    /// `coefficients · u + offset <= 0` over the encoded vector `u`.
    Linear {
        coefficients: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `Σ terms[v] · value(v) <= rhs` in user units; numeric variables only.
    LinearTerms {
        terms: BTreeMap<String, f64>,
        rhs: f64,
    },
    /// Feasibility decided by an external program speaking the evaluation
    /// program protocol and answering `{"feasible": bool}`.
    Blackbox {
        program: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timeout_secs: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub name: String,
    #[serde(flatten)]
    pub form: ConstraintForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub name: String,
    pub sense: Sense,
}

impl ObjectiveSpec {
    pub fn minimize(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            sense: Sense::Minimize,
        }
    }

    pub fn maximize(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            sense: Sense::Maximize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub variables: Vec<VariableSpec>,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    pub objectives: Vec<ObjectiveSpec>,
}

/// A single variable value as entered by a user or produced by decoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Label(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(x) => write!(f, "{x}"),
            Value::Label(s) => f.write_str(s),
        }
    }
}

/// A concrete point in the design space, keyed by variable name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Design(pub BTreeMap<String, Value>);

impl Design {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: Value) -> Self {
        self.0.insert(name.into(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Value) {
        self.0.insert(name.into(), value);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One failed invariant; `field` is a dotted path such as `variables.x.bounds`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid problem: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("variable `{0}` has no value in the design")]
    MissingValue(String),
    #[error("design names unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("value for `{variable}` has the wrong type: {detail}")]
    WrongType { variable: String, detail: String },
    #[error("value for `{0}` is out of bounds")]
    OutOfBounds(String),
    #[error("encoded vector has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("objective vector has length {got}, expected {expected}")]
    ObjectiveArity { expected: usize, got: usize },
    #[error("constraint `{constraint}` could not be evaluated: {source}")]
    ConstraintEvaluation {
        constraint: String,
        #[source]
        source: ProgramError,
    },
    #[error("cannot parse problem document: {0}")]
    Parse(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Result of a feasibility check, one entry per constraint in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub constraints: Vec<ConstraintReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub name: String,
    /// `g(u)` for linear constraints; absent for blackbox ones.
    pub value: Option<f64>,
    pub satisfied: bool,
}

/// A compiled linear constraint over the encoded vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub name: String,
    pub coefficients: Vec<f64>,
    pub offset: f64,
}

impl LinearRow {
    pub fn value(&self, encoded: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(encoded)
            .map(|(a, u)| a * u)
            .sum::<f64>()
            + self.offset
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl Problem {
    pub fn new(variables: Vec<VariableSpec>, objectives: Vec<ObjectiveSpec>) -> Self {
        Self {
            variables,
            constraints: Vec::new(),
            objectives,
        }
    }

    pub fn with_constraint(mut self, name: impl Into<String>, form: ConstraintForm) -> Self {
        self.constraints.push(ConstraintSpec {
            name: name.into(),
            form,
        });
        self
    }

    pub fn from_toml_str(doc: &str) -> Result<Self, ProblemError> {
        toml::from_str(doc).map_err(|e| ProblemError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("problem serializes to TOML")
    }

    pub fn n_objectives(&self) -> usize {
        self.objectives.len()
    }

    /// Encoded length: `#continuous + #discrete + #binary + Σ category counts`.
    pub fn encoded_dim(&self) -> usize {
        self.variables.iter().map(VariableSpec::encoded_width).sum()
    }

    pub fn variable(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// Offset of each variable's block inside the encoded vector.
    pub fn offsets(&self) -> Vec<usize> {
        self.variables
            .iter()
            .scan(0, |acc, v| {
                let start = *acc;
                *acc += v.encoded_width();
                Some(start)
            })
            .collect()
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let mut check_name = |section: &str, name: &str, out: &mut Vec<Violation>| {
            if !is_identifier(name) {
                out.push(Violation::new(
                    format!("{section}.{name}.name"),
                    "not a valid identifier",
                ));
            }
            if !seen.insert(name.to_string()) {
                out.push(Violation::new(
                    format!("{section}.{name}.name"),
                    "duplicate name",
                ));
            }
        };

        if self.variables.is_empty() {
            out.push(Violation::new("variables", "at least one variable required"));
        }
        for v in &self.variables {
            check_name("variables", &v.name, &mut out);
            let field = |f: &str| format!("variables.{}.{f}", v.name);
            match v.kind {
                VariableKind::Continuous | VariableKind::Discrete => {
                    match v.bounds {
                        None => out.push(Violation::new(field("bounds"), "bounds required")),
                        Some([lo, hi]) if !lo.is_finite() || !hi.is_finite() => {
                            out.push(Violation::new(field("bounds"), "bounds must be finite"))
                        }
                        Some([lo, hi]) if lo > hi => {
                            out.push(Violation::new(field("bounds"), "bounds reversed"))
                        }
                        Some([lo, hi]) if lo == hi => {
                            out.push(Violation::new(field("bounds"), "bounds empty (lo == hi)"))
                        }
                        Some([lo, hi])
                            if v.kind == VariableKind::Discrete
                                && (lo.fract() != 0.0 || hi.fract() != 0.0) =>
                        {
                            out.push(Violation::new(field("bounds"), "discrete bounds must be integers"))
                        }
                        Some(_) => {}
                    }
                    if v.categories.is_some() {
                        out.push(Violation::new(field("categories"), "only categorical variables take categories"));
                    }
                }
                VariableKind::Binary => {
                    if v.bounds.is_some() {
                        out.push(Violation::new(field("bounds"), "binary variables take no bounds"));
                    }
                    if v.categories.is_some() {
                        out.push(Violation::new(field("categories"), "binary variables take no categories"));
                    }
                }
                VariableKind::Categorical => {
                    if v.bounds.is_some() {
                        out.push(Violation::new(field("bounds"), "categorical variables take no bounds"));
                    }
                    match &v.categories {
                        None => out.push(Violation::new(field("categories"), "categories required")),
                        Some(c) if c.is_empty() => {
                            out.push(Violation::new(field("categories"), "categories empty"))
                        }
                        Some(c) => {
                            let unique: HashSet<_> = c.iter().collect();
                            if unique.len() != c.len() {
                                out.push(Violation::new(field("categories"), "duplicate category"));
                            }
                        }
                    }
                }
            }
        }

        let variables_ok = out.is_empty();
        let dim = self.encoded_dim();
        let offsets = self.offsets();
        for c in &self.constraints {
            check_name("constraints", &c.name, &mut out);
            let field = |f: &str| format!("constraints.{}.{f}", c.name);
            match &c.form {
                ConstraintForm::Linear {
                    coefficients,
                    offset,
                } => {
                    if !offset.is_finite() || coefficients.iter().any(|a| !a.is_finite()) {
                        out.push(Violation::new(field("coefficients"), "coefficients must be finite"));
                    }
                    if variables_ok && coefficients.len() != dim {
                        out.push(Violation::new(
                            field("coefficients"),
                            format!("expected {dim} coefficients (encoded dimension), got {}", coefficients.len()),
                        ));
                    } else if variables_ok {
                        for (v, &start) in self.variables.iter().zip(&offsets) {
                            if v.kind == VariableKind::Categorical
                                && coefficients[start..start + v.encoded_width()]
                                    .iter()
                                    .any(|&a| a != 0.0)
                            {
                                out.push(Violation::new(
                                    field("coefficients"),
                                    format!("linear constraints may not involve categorical variable `{}`", v.name),
                                ));
                            }
                        }
                    }
                }
                ConstraintForm::LinearTerms { terms, rhs } => {
                    if !rhs.is_finite() || terms.values().any(|a| !a.is_finite()) {
                        out.push(Violation::new(field("terms"), "coefficients must be finite"));
                    }
                    for name in terms.keys() {
                        match self.variable(name) {
                            None => out.push(Violation::new(
                                field("terms"),
                                format!("unknown variable `{name}`"),
                            )),
                            Some(v) if v.kind == VariableKind::Categorical => {
                                out.push(Violation::new(
                                    field("terms"),
                                    format!("linear constraints may not involve categorical variable `{name}`"),
                                ))
                            }
                            Some(_) => {}
                        }
                    }
                }
                ConstraintForm::Blackbox {
                    program,
                    timeout_secs,
                } => {
                    if program.as_os_str().is_empty() {
                        out.push(Violation::new(field("program"), "program path empty"));
                    }
                    if matches!(timeout_secs, Some(t) if !(*t > 0.0)) {
                        out.push(Violation::new(field("timeout_secs"), "timeout must be positive"));
                    }
                }
            }
        }

        if self.objectives.len() < 2 {
            out.push(Violation::new("objectives", "fewer than 2 objectives"));
        }
        for o in &self.objectives {
            check_name("objectives", &o.name, &mut out);
        }
        out
    }

    /// Validates and returns `self`, or all violations as one error.
    pub fn validated(self) -> Result<Self, ProblemError> {
        self.validate_ok()?;
        Ok(self)
    }

    pub fn validate_ok(&self) -> Result<(), ProblemError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ProblemError::Invalid(v))
        }
    }

    /// Checks a design against the variable specs without encoding it.
    pub fn check_design(&self, design: &Design) -> Result<(), ProblemError> {
        self.encode(design).map(|_| ())
    }

    pub fn encode(&self, design: &Design) -> Result<Vec<f64>, ProblemError> {
        if let Some(name) = design.0.keys().find(|k| self.variable(k).is_none()) {
            return Err(ProblemError::UnknownVariable(name.clone()));
        }
        let mut out = Vec::with_capacity(self.encoded_dim());
        for v in &self.variables {
            let value = design
                .get(&v.name)
                .ok_or_else(|| ProblemError::MissingValue(v.name.clone()))?;
            let wrong = |detail: &str| ProblemError::WrongType {
                variable: v.name.clone(),
                detail: detail.to_string(),
            };
            match v.kind {
                VariableKind::Continuous => {
                    let x = match value {
                        Value::Real(x) => *x,
                        Value::Int(i) => *i as f64,
                        _ => return Err(wrong("expected a number")),
                    };
                    let (lo, hi) = v.range();
                    if !x.is_finite() || x < lo || x > hi {
                        return Err(ProblemError::OutOfBounds(v.name.clone()));
                    }
                    out.push((x - lo) / (hi - lo));
                }
                VariableKind::Discrete => {
                    let k = match value {
                        Value::Int(i) => *i as f64,
                        Value::Real(x) if x.fract() == 0.0 => *x,
                        _ => return Err(wrong("expected an integer")),
                    };
                    let (lo, hi) = v.range();
                    if k < lo || k > hi {
                        return Err(ProblemError::OutOfBounds(v.name.clone()));
                    }
                    out.push((k - lo) / (hi - lo));
                }
                VariableKind::Binary => match value {
                    Value::Bool(b) => out.push(if *b { 1.0 } else { 0.0 }),
                    Value::Int(0) => out.push(0.0),
                    Value::Int(1) => out.push(1.0),
                    _ => return Err(wrong("expected a boolean")),
                },
                VariableKind::Categorical => {
                    let Value::Label(label) = value else {
                        return Err(wrong("expected a category label"));
                    };
                    let cats = v.categories.as_deref().unwrap_or_default();
                    let idx = cats
                        .iter()
                        .position(|c| c == label)
                        .ok_or_else(|| ProblemError::OutOfBounds(v.name.clone()))?;
                    out.extend((0..cats.len()).map(|i| if i == idx { 1.0 } else { 0.0 }));
                }
            }
        }
        Ok(out)
    }

    /// Validates `design` and converts each value to the canonical type of
    /// its variable kind (real, integer, boolean, label).
    pub fn normalize(&self, design: &Design) -> Result<Design, ProblemError> {
        self.encode(design)?;
        let mut out = Design::new();
        for v in &self.variables {
            let value = &design.0[&v.name];
            let canonical = match (v.kind, value) {
                (VariableKind::Continuous, Value::Int(i)) => Value::Real(*i as f64),
                (VariableKind::Discrete, Value::Real(x)) => Value::Int(*x as i64),
                (VariableKind::Binary, Value::Int(i)) => Value::Bool(*i == 1),
                _ => value.clone(),
            };
            out.insert(v.name.clone(), canonical);
        }
        Ok(out)
    }

    /// Parses the text form (as written by `Value`'s `Display`) of a value
    /// for variable `name`.
    pub fn parse_value(&self, name: &str, text: &str) -> Result<Value, ProblemError> {
        let v = self
            .variable(name)
            .ok_or_else(|| ProblemError::UnknownVariable(name.to_string()))?;
        let wrong = |detail: &str| ProblemError::WrongType {
            variable: name.to_string(),
            detail: format!("{detail}, got `{text}`"),
        };
        Ok(match v.kind {
            VariableKind::Continuous => Value::Real(text.trim().parse().map_err(|_| wrong("expected a number"))?),
            VariableKind::Discrete => Value::Int(text.trim().parse().map_err(|_| wrong("expected an integer"))?),
            VariableKind::Binary => match text.trim() {
                "true" | "1" => Value::Bool(true),
                "false" | "0" => Value::Bool(false),
                _ => return Err(wrong("expected a boolean")),
            },
            VariableKind::Categorical => Value::Label(text.to_string()),
        })
    }

    /// Inverse of [`encode`](Self::encode). Accepts relaxed vectors: values are
    /// clamped to the box, discrete values snap to the nearest integer, binary
    /// thresholds at 0.5 and categorical blocks take the argmax (lowest index
    /// wins ties).
    pub fn decode(&self, encoded: &[f64]) -> Result<Design, ProblemError> {
        let dim = self.encoded_dim();
        if encoded.len() != dim {
            return Err(ProblemError::Dimension {
                expected: dim,
                got: encoded.len(),
            });
        }
        let mut design = Design::new();
        let mut pos = 0;
        for v in &self.variables {
            let value = match v.kind {
                VariableKind::Continuous => {
                    let (lo, hi) = v.range();
                    let u = encoded[pos].clamp(0.0, 1.0);
                    Value::Real((lo + u * (hi - lo)).clamp(lo, hi))
                }
                VariableKind::Discrete => {
                    let (lo, hi) = v.range();
                    let u = encoded[pos].clamp(0.0, 1.0);
                    Value::Int((lo + u * (hi - lo)).round().clamp(lo, hi) as i64)
                }
                VariableKind::Binary => Value::Bool(encoded[pos] > 0.5),
                VariableKind::Categorical => {
                    let cats = v.categories.as_deref().unwrap_or_default();
                    let block = &encoded[pos..pos + cats.len()];
                    let mut best = 0;
                    for (i, &x) in block.iter().enumerate() {
                        if x > block[best] {
                            best = i;
                        }
                    }
                    Value::Label(cats[best].clone())
                }
            };
            pos += v.encoded_width();
            design.insert(v.name.clone(), value);
        }
        Ok(design)
    }

    /// `encode(decode(u))`: the encoded vector of the design `u` stands for.
    pub fn canonicalize(&self, encoded: &[f64]) -> Result<Vec<f64>, ProblemError> {
        let design = self.decode(encoded)?;
        self.encode(&design)
    }

    /// Linear constraints compiled into encoded units, in declaration order.
    pub fn linear_rows(&self) -> Vec<LinearRow> {
        let dim = self.encoded_dim();
        let offsets = self.offsets();
        self.constraints
            .iter()
            .filter_map(|c| match &c.form {
                ConstraintForm::Linear {
                    coefficients,
                    offset,
                } => Some(LinearRow {
                    name: c.name.clone(),
                    coefficients: coefficients.clone(),
                    offset: *offset,
                }),
                ConstraintForm::LinearTerms { terms, rhs } => {
                    let mut coefficients = vec![0.0; dim];
                    let mut offset = -rhs;
                    for (name, a) in terms {
                        let Some(i) = self.variables.iter().position(|v| &v.name == name) else {
                            continue;
                        };
                        // value = lo + (hi - lo) * u
                        let (lo, hi) = self.variables[i].range();
                        coefficients[offsets[i]] += a * (hi - lo);
                        offset += a * lo;
                    }
                    Some(LinearRow {
                        name: c.name.clone(),
                        coefficients,
                        offset,
                    })
                }
                ConstraintForm::Blackbox { .. } => None,
            })
            .collect()
    }

    pub fn has_blackbox_constraints(&self) -> bool {
        self.constraints
            .iter()
            .any(|c| matches!(c.form, ConstraintForm::Blackbox { .. }))
    }

    /// Total linear constraint violation `Σ max(0, g(u))` of an encoded vector.
    pub fn linear_violation(&self, encoded: &[f64]) -> f64 {
        self.linear_rows()
            .iter()
            .map(|row| row.value(encoded).max(0.0))
            .sum()
    }

    /// Linear constraints only; blackbox constraints are reported as
    /// unsatisfied-unknown by omission from the result.
    pub fn check_linear(&self, design: &Design) -> Result<bool, ProblemError> {
        let u = self.encode(design)?;
        Ok(self.linear_rows().iter().all(|row| row.value(&u) <= 0.0))
    }

    /// Full feasibility check, running blackbox constraint programs. A program
    /// failure is an error: the design is never silently treated as feasible.
    pub fn check_feasible(&self, design: &Design) -> Result<FeasibilityReport, ProblemError> {
        let u = self.encode(design)?;
        let rows = self.linear_rows();
        let mut rows = rows.iter();
        let mut reports = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            let report = match &c.form {
                ConstraintForm::Blackbox {
                    program,
                    timeout_secs,
                } => {
                    let timeout = std::time::Duration::from_secs_f64(
                        timeout_secs.unwrap_or(program::DEFAULT_TIMEOUT_SECS),
                    );
                    let feasible = program::run_feasibility(program, design, 0, timeout)
                        .map_err(|source| ProblemError::ConstraintEvaluation {
                            constraint: c.name.clone(),
                            source,
                        })?;
                    ConstraintReport {
                        name: c.name.clone(),
                        value: None,
                        satisfied: feasible,
                    }
                }
                _ => {
                    let row = rows.next().expect("one compiled row per linear constraint");
                    let g = row.value(&u);
                    ConstraintReport {
                        name: c.name.clone(),
                        value: Some(g),
                        satisfied: g <= 0.0,
                    }
                }
            };
            reports.push(report);
        }
        Ok(FeasibilityReport {
            feasible: reports.iter().all(|r| r.satisfied),
            constraints: reports,
        })
    }

    /// User-sense objective values into the internal minimization convention.
    pub fn to_internal(&self, objectives: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.flip_senses(objectives)
    }

    /// Internal (minimized) objective values back into user senses.
    pub fn to_user(&self, objectives: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.flip_senses(objectives)
    }

    fn flip_senses(&self, y: &[f64]) -> Result<Vec<f64>, ProblemError> {
        if y.len() != self.objectives.len() {
            return Err(ProblemError::ObjectiveArity {
                expected: self.objectives.len(),
                got: y.len(),
            });
        }
        Ok(y.iter()
            .zip(&self.objectives)
            .map(|(v, o)| match o.sense {
                Sense::Minimize => *v,
                Sense::Maximize => -*v,
            })
            .collect())
    }
}
