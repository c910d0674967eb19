//! Bounded mixed-type search spaces and their unit-cube latent encoding.
//!
//! Real and integer variables occupy one latent coordinate each, scaled
//! affinely onto `[0, 1]`. A categorical variable with `k` labels occupies a
//! one-hot block of `k` coordinates. Models never see raw latent vectors:
//! they [`snap`](LatentLayout::snap) them first, rounding integer coordinates
//! to their grid and projecting one-hot blocks onto a vertex, so anything
//! computed from the latent vector is constant inside a discrete cell.

use std::collections::HashSet;
use std::fmt;
use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VarKind {
    Real { lower: f64, upper: f64 },
    Integer { lower: i64, upper: i64 },
    Categorical { labels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: VarKind,
}

impl VariableSpec {
    pub fn real(name: &str, lower: f64, upper: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: VarKind::Real { lower, upper },
        }
    }

    pub fn integer(name: &str, lower: i64, upper: i64) -> Self {
        Self {
            name: name.to_string(),
            kind: VarKind::Integer { lower, upper },
        }
    }

    pub fn categorical(name: &str, labels: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: VarKind::Categorical {
                labels: labels.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    /// Number of latent coordinates this variable occupies.
    pub fn latent_width(&self) -> usize {
        match &self.kind {
            VarKind::Real { .. } | VarKind::Integer { .. } => 1,
            VarKind::Categorical { labels } => labels.len(),
        }
    }

    pub fn is_numeric(&self) -> bool {
        !matches!(self.kind, VarKind::Categorical { .. })
    }

    /// Numeric bounds as floats; `None` for categoricals.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self.kind {
            VarKind::Real { lower, upper } => Some((lower, upper)),
            VarKind::Integer { lower, upper } => Some((lower as f64, upper as f64)),
            VarKind::Categorical { .. } => None,
        }
    }

    fn check(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidVariable {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.name.is_empty() {
            return fail("empty name");
        }
        match &self.kind {
            VarKind::Real { lower, upper } => {
                if !lower.is_finite() || !upper.is_finite() {
                    return fail("non-finite bounds");
                }
                if lower >= upper {
                    return fail(&format!("inverted bounds [{lower}, {upper}]"));
                }
            }
            VarKind::Integer { lower, upper } => {
                if lower >= upper {
                    return fail(&format!("inverted bounds [{lower}, {upper}]"));
                }
            }
            VarKind::Categorical { labels } => {
                if labels.len() < 2 {
                    return fail("categorical needs at least 2 labels");
                }
                let distinct: HashSet<&String> = labels.iter().collect();
                if distinct.len() != labels.len() {
                    return fail("categorical labels must be distinct");
                }
            }
        }
        Ok(())
    }
}

/// A concrete value of one variable, in domain units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Integer(i64),
    Real(f64),
    Label(String),
}

impl Value {
    /// Numeric view of the value; `None` for labels.
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Real(x) => Some(x),
            Value::Integer(i) => Some(i as f64),
            Value::Label(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(x) => write!(f, "{x}"),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Label(s) => f.write_str(s),
        }
    }
}

/// One configuration: a value per variable, in space order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<Value>);

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}

/// Coordinates in the unit cube, one block per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(bad) = coords.iter().find(|c| !c.is_finite() || **c < 0.0 || **c > 1.0) {
            return Err(Error::InvalidPoint(format!("latent coordinate {bad} outside [0, 1]")));
        }
        Ok(Self(coords))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for LatentVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Block {
    Continuous,
    Integer { lower: i64, upper: i64 },
    OneHot { len: usize },
}

/// Latent structure of a space, detached from names and labels. This is all
/// the models need to snap their inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentLayout {
    blocks: Vec<Block>,
    dim: usize,
}

impl LatentLayout {
    /// A purely continuous layout of `dim` coordinates.
    pub fn continuous(dim: usize) -> Self {
        Self {
            blocks: vec![Block::Continuous; dim],
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Snaps `v` in place: integer coordinates to their rounded grid value,
    /// one-hot blocks to the vertex of their largest coordinate.
    pub fn snap(&self, v: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim);
        let mut at = 0;
        for block in &self.blocks {
            match *block {
                Block::Continuous => at += 1,
                Block::Integer { lower, upper } => {
                    let value = decode_integer(v[at], lower, upper);
                    v[at] = encode_integer(value, lower, upper);
                    at += 1;
                }
                Block::OneHot { len } => {
                    let hot = argmax_first(&v[at..at + len]);
                    for (j, c) in v[at..at + len].iter_mut().enumerate() {
                        *c = if j == hot { 1.0 } else { 0.0 };
                    }
                    at += len;
                }
            }
        }
    }

    pub fn snapped(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.snap(&mut out);
        out
    }

    /// Mask of latent coordinates that belong to real-valued variables.
    pub fn continuous_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.dim);
        for block in &self.blocks {
            match *block {
                Block::Continuous => mask.push(true),
                Block::Integer { .. } => mask.push(false),
                Block::OneHot { len } => mask.extend(std::iter::repeat_n(false, len)),
            }
        }
        mask
    }

    /// Draws a uniformly random snapped latent vector: uniform reals, uniform
    /// integers and uniform labels.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim);
        for block in &self.blocks {
            match *block {
                Block::Continuous => v.push(rng.random::<f64>()),
                Block::Integer { lower, upper } => {
                    let value = rng.random_range(lower..=upper);
                    v.push(encode_integer(value, lower, upper));
                }
                Block::OneHot { len } => {
                    let hot = rng.random_range(0..len);
                    v.extend((0..len).map(|j| if j == hot { 1.0 } else { 0.0 }));
                }
            }
        }
        v
    }
}

/// Half-up rounding.
pub(crate) fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

fn decode_integer(c: f64, lower: i64, upper: i64) -> i64 {
    let span = (upper - lower) as f64;
    let raw = round_half_up(lower as f64 + c * span) as i64;
    raw.clamp(lower, upper)
}

fn encode_integer(value: i64, lower: i64, upper: i64) -> f64 {
    (value - lower) as f64 / (upper - lower) as f64
}

fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Deserialize)]
struct RawSpace {
    variables: Vec<VariableSpec>,
}

/// An ordered, validated list of variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct SearchSpace {
    variables: Vec<VariableSpec>,
    #[serde(skip_serializing)]
    layout: LatentLayout,
}

impl TryFrom<RawSpace> for SearchSpace {
    type Error = Error;

    fn try_from(raw: RawSpace) -> Result<Self> {
        SearchSpace::new(raw.variables)
    }
}

/// Checks every structural invariant of a variable list: unique names,
/// ordered bounds, at least two distinct labels per categorical.
pub fn validate(variables: &[VariableSpec]) -> Result<()> {
    let mut seen = HashSet::new();
    for var in variables {
        var.check()?;
        if !seen.insert(var.name.as_str()) {
            return Err(Error::DuplicateVariable(var.name.clone()));
        }
    }
    Ok(())
}

impl SearchSpace {
    pub fn new(variables: Vec<VariableSpec>) -> Result<Self> {
        validate(&variables)?;
        let blocks: Vec<Block> = variables
            .iter()
            .map(|v| match &v.kind {
                VarKind::Real { .. } => Block::Continuous,
                VarKind::Integer { lower, upper } => Block::Integer {
                    lower: *lower,
                    upper: *upper,
                },
                VarKind::Categorical { labels } => Block::OneHot { len: labels.len() },
            })
            .collect();
        let dim = variables.iter().map(VariableSpec::latent_width).sum();
        Ok(Self {
            variables,
            layout: LatentLayout { blocks, dim },
        })
    }

    /// Parses a `{"variables": [...]}` document. Unknown top-level keys are
    /// ignored so benchmark files double as space files.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn layout(&self) -> &LatentLayout {
        &self.layout
    }

    pub fn latent_dim(&self) -> usize {
        self.layout().dim()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Checks that `point` has one in-bounds value of the right kind per
    /// variable.
    pub fn check_point(&self, point: &Point) -> Result<()> {
        if point.0.len() != self.variables.len() {
            return Err(Error::InvalidPoint(format!(
                "expected {} values, got {}",
                self.variables.len(),
                point.0.len()
            )));
        }
        for (var, value) in self.variables.iter().zip(&point.0) {
            check_value(var, value)?;
        }
        Ok(())
    }

    pub fn to_latent(&self, point: &Point) -> Result<LatentVector> {
        self.check_point(point)?;
        let mut out = Vec::with_capacity(self.latent_dim());
        for (var, value) in self.variables.iter().zip(&point.0) {
            match (&var.kind, value) {
                (VarKind::Real { lower, upper }, v) => {
                    let x = v.as_f64().expect("checked numeric");
                    out.push(((x - lower) / (upper - lower)).clamp(0.0, 1.0));
                }
                (VarKind::Integer { lower, upper }, Value::Integer(i)) => {
                    out.push(encode_integer(*i, *lower, *upper));
                }
                (VarKind::Categorical { labels }, Value::Label(s)) => {
                    out.extend(labels.iter().map(|l| if l == s { 1.0 } else { 0.0 }));
                }
                _ => unreachable!("check_point rejects kind mismatches"),
            }
        }
        Ok(LatentVector(out))
    }

    pub fn from_latent(&self, v: &[f64]) -> Result<Point> {
        self.check_latent_len(v)?;
        let mut values = Vec::with_capacity(self.variables.len());
        let mut at = 0;
        for var in &self.variables {
            match &var.kind {
                VarKind::Real { lower, upper } => {
                    let c = v[at].clamp(0.0, 1.0);
                    values.push(Value::Real(lower + c * (upper - lower)));
                    at += 1;
                }
                VarKind::Integer { lower, upper } => {
                    values.push(Value::Integer(decode_integer(v[at], *lower, *upper)));
                    at += 1;
                }
                VarKind::Categorical { labels } => {
                    let hot = argmax_first(&v[at..at + labels.len()]);
                    values.push(Value::Label(labels[hot].clone()));
                    at += labels.len();
                }
            }
        }
        Ok(Point(values))
    }

    pub fn snap_latent(&self, v: &[f64]) -> Result<LatentVector> {
        self.check_latent_len(v)?;
        Ok(LatentVector(self.layout().snapped(v)))
    }

    fn check_latent_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `n` independent uniform points. Reals are uniform on their interval,
    /// integers and labels uniform over their values.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Point> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let values = self
            .variables
            .iter()
            .map(|var| match &var.kind {
                VarKind::Real { lower, upper } => Value::Real(lower + (upper - lower) * rng.random::<f64>()),
                VarKind::Integer { lower, upper } => Value::Integer(rng.random_range(*lower..=*upper)),
                VarKind::Categorical { labels } => Value::Label(labels[rng.random_range(0..labels.len())].clone()),
            })
            .collect();
        Point(values)
    }

    /// Cartesian product of per-variable equispaced values, last variable
    /// varying fastest. Reals include both endpoints (a resolution of 1
    /// yields the midpoint); integers are spread evenly and rounded;
    /// categoricals must list every label.
    pub fn uniform_grid(&self, resolution: &[usize]) -> Result<Vec<Point>> {
        if resolution.len() != self.variables.len() {
            return Err(Error::DimensionMismatch {
                expected: self.variables.len(),
                got: resolution.len(),
            });
        }
        let mut axes: Vec<Vec<Value>> = Vec::with_capacity(resolution.len());
        for (var, &res) in self.variables.iter().zip(resolution) {
            let invalid = |reason: String| Error::InvalidVariable {
                name: var.name.clone(),
                reason,
            };
            if res == 0 {
                return Err(invalid("grid resolution must be at least 1".into()));
            }
            let axis = match &var.kind {
                VarKind::Real { lower, upper } => {
                    equispaced(*lower, *upper, res).into_iter().map(Value::Real).collect()
                }
                VarKind::Integer { lower, upper } => {
                    let count = (upper - lower + 1) as usize;
                    if res > count {
                        return Err(invalid(format!(
                            "grid resolution {res} exceeds the {count} integer values"
                        )));
                    }
                    equispaced(*lower as f64, *upper as f64, res)
                        .into_iter()
                        .map(|x| Value::Integer(round_half_up(x) as i64))
                        .collect()
                }
                VarKind::Categorical { labels } => {
                    if res != labels.len() {
                        return Err(invalid(format!(
                            "grid resolution {res} must equal the label count {}",
                            labels.len()
                        )));
                    }
                    labels.iter().cloned().map(Value::Label).collect()
                }
            };
            axes.push(axis);
        }
        let total: usize = axes.iter().map(Vec::len).product();
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; axes.len()];
        for _ in 0..total {
            points.push(Point(axes.iter().zip(&idx).map(|(a, &i)| a[i].clone()).collect()));
            for k in (0..axes.len()).rev() {
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(points)
    }

    /// Builds a point from a name → value map, accepting integral reals for
    /// integer variables.
    pub fn point_from_map(&self, map: &serde_json::Map<String, serde_json::Value>) -> Result<Point> {
        for key in map.keys() {
            if self.index_of(key).is_none() {
                return Err(Error::InvalidPoint(format!("unknown variable `{key}`")));
            }
        }
        let mut values = Vec::with_capacity(self.variables.len());
        for var in &self.variables {
            let raw = map
                .get(&var.name)
                .ok_or_else(|| Error::InvalidPoint(format!("missing variable `{}`", var.name)))?;
            values.push(self.parse_value(var, &json_scalar(raw))?);
        }
        let point = Point(values);
        self.check_point(&point)?;
        Ok(point)
    }

    /// Parses a textual value for `var`.
    pub fn parse_value(&self, var: &VariableSpec, text: &str) -> Result<Value> {
        let text = text.trim();
        let bad = |what: &str| Error::InvalidPoint(format!("variable `{}`: {what} `{text}`", var.name));
        let value = match &var.kind {
            VarKind::Real { .. } => Value::Real(text.parse().map_err(|_| bad("malformed number"))?),
            VarKind::Integer { .. } => {
                let x: f64 = text.parse().map_err(|_| bad("malformed number"))?;
                if x.fract() != 0.0 {
                    return Err(bad("non-integer value"));
                }
                Value::Integer(x as i64)
            }
            VarKind::Categorical { labels } => {
                if !labels.iter().any(|l| l == text) {
                    return Err(bad("unknown label"));
                }
                Value::Label(text.to_string())
            }
        };
        check_value(var, &value)?;
        Ok(value)
    }
}

fn json_scalar(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn check_value(var: &VariableSpec, value: &Value) -> Result<()> {
    let bad = |reason: String| Err(Error::InvalidPoint(format!("variable `{}`: {reason}", var.name)));
    match (&var.kind, value) {
        (VarKind::Real { lower, upper }, v) if v.as_f64().is_some() => {
            let x = v.as_f64().unwrap();
            if !x.is_finite() || x < *lower || x > *upper {
                return bad(format!("value {x} outside [{lower}, {upper}]"));
            }
        }
        (VarKind::Integer { lower, upper }, Value::Integer(i)) => {
            if i < lower || i > upper {
                return bad(format!("value {i} outside [{lower}, {upper}]"));
            }
        }
        (VarKind::Categorical { labels }, Value::Label(s)) => {
            if !labels.contains(s) {
                return bad(format!("unknown label `{s}`"));
            }
        }
        (_, v) => return bad(format!("value `{v}` has the wrong kind")),
    }
    Ok(())
}

fn equispaced(lower: f64, upper: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lower + upper)];
    }
    let step = (upper - lower) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { upper } else { lower + step * i as f64 })
        .collect()
}
