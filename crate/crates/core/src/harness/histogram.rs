//! Binning of recommended recipes and the most-voted recipe.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expert::Condition;
use crate::space::{Point, SearchSpace, Value, VarKind, VariableSpec};

pub const DEFAULT_BINS: usize = 10;

/// One bin of a variable: a numeric interval or a categorical label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bin {
    /// `[lower, upper)`, closed on the right for the last bin.
    Interval {
        lower: f64,
        upper: f64,
        last: bool,
    },
    Label(String),
}

impl Bin {
    pub fn label(&self) -> String {
        match self {
            Bin::Interval { lower, upper, last } => {
                let close = if *last { ']' } else { ')' };
                format!("[{},{}{close}", tidy(*lower), tidy(*upper))
            }
            Bin::Label(l) => l.clone(),
        }
    }

    /// Whether any value in the bin lies in `cond`.
    pub fn overlaps(&self, cond: &Condition) -> bool {
        match (self, cond) {
            (Bin::Interval { lower, upper, last }, Condition::Interval([lo, hi])) => {
                *lower <= *hi && if *last { *lo <= *upper } else { *lo < *upper }
            }
            (Bin::Label(l), Condition::Labels(set)) => set.contains(l),
            _ => false,
        }
    }
}

/// Drops float noise from bin edges, e.g. `2.6000000000000001`.
fn tidy(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// All bins of `var`: `bins` equal-width intervals over a numeric
/// variable's bounds, or one bin per label.
pub fn bins_of(var: &VariableSpec, bins: usize) -> Result<Vec<Bin>> {
    match &var.kind {
        VarKind::Categorical { labels } => Ok(labels.iter().cloned().map(Bin::Label).collect()),
        _ => {
            if bins == 0 {
                return Err(Error::Config("histogram needs at least one bin".into()));
            }
            let (lo, hi) = var.bounds().expect("numeric");
            Ok((0..bins)
                .map(|i| Bin::Interval {
                    lower: lo + (hi - lo) * i as f64 / bins as f64,
                    upper: lo + (hi - lo) * (i + 1) as f64 / bins as f64,
                    last: i + 1 == bins,
                })
                .collect())
        }
    }
}

/// Index of the bin holding `value`.
pub fn bin_index(var: &VariableSpec, value: &Value, bins: usize) -> Result<usize> {
    let bad = || Error::InvalidPoint(format!("value {value} does not belong to `{}`", var.name));
    match (&var.kind, value) {
        (VarKind::Categorical { labels }, Value::Label(l)) => labels.iter().position(|x| x == l).ok_or_else(bad),
        (VarKind::Categorical { .. }, _) | (_, Value::Label(_)) => Err(bad()),
        _ => {
            let (lo, hi) = var.bounds().expect("numeric");
            let x = value.as_f64().ok_or_else(bad)?;
            if !(lo..=hi).contains(&x) || bins == 0 {
                return Err(bad());
            }
            let idx = ((x - lo) / (hi - lo) * bins as f64).floor() as usize;
            Ok(idx.min(bins - 1))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub variable: String,
    pub bins: Vec<Bin>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Index of the modal bin; the lowest index wins ties.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }
}

pub fn histogram(space: &SearchSpace, recommendations: &[Point], variable: &str, bins: usize) -> Result<Histogram> {
    if recommendations.is_empty() {
        return Err(Error::Config("histogram needs at least one recommendation".into()));
    }
    let idx = space
        .index_of(variable)
        .ok_or_else(|| Error::Config(format!("unknown variable `{variable}`")))?;
    let var = &space.variables()[idx];
    let all = bins_of(var, bins)?;
    let mut counts = vec![0; all.len()];
    for p in recommendations {
        let v = p.0.get(idx).ok_or(Error::DimensionMismatch {
            expected: space.len(),
            got: p.0.len(),
        })?;
        counts[bin_index(var, v, bins)?] += 1;
    }
    Ok(Histogram {
        variable: variable.to_string(),
        bins: all,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeEntry {
    pub variable: String,
    pub bin: Bin,
    pub votes: usize,
}

/// The modal bin of every variable, in space order.
pub fn most_voted_recipe(space: &SearchSpace, recommendations: &[Point], bins: usize) -> Result<Vec<RecipeEntry>> {
    space
        .variables()
        .iter()
        .map(|v| {
            let h = histogram(space, recommendations, &v.name, bins)?;
            let m = h.mode();
            Ok(RecipeEntry {
                variable: v.name.clone(),
                bin: h.bins[m].clone(),
                votes: h.counts[m],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> SearchSpace {
        SearchSpace::new(vec![
            VariableSpec::real("t", 0.0, 200.0),
            VariableSpec::integer("k", 1, 9),
            VariableSpec::categorical("brand", &["X", "Y"]),
        ])
        .unwrap()
    }

    fn p(t: f64, k: i64, b: &str) -> Point {
        Point(vec![Value::Real(t), Value::Integer(k), Value::Label(b.into())])
    }

    #[test]
    fn real_bin_examples() {
        let s = space();
        let t = &s.variables()[0];
        assert_eq!(bin_index(t, &Value::Real(45.0), 10).unwrap(), 2);
        assert_eq!(bins_of(t, 10).unwrap()[2].label(), "[40,60)");
        assert_eq!(bin_index(t, &Value::Real(200.0), 10).unwrap(), 9);
        assert_eq!(bins_of(t, 10).unwrap()[9].label(), "[180,200]");
        assert_eq!(bin_index(t, &Value::Real(0.0), 10).unwrap(), 0);
        assert!(bin_index(t, &Value::Real(201.0), 10).is_err());
    }

    #[test]
    fn integer_bins_hold_one_value_each() {
        let s = space();
        let k = &s.variables()[1];
        let idx: Vec<usize> = (1..=9).map(|v| bin_index(k, &Value::Integer(v), 10).unwrap()).collect();
        let mut dedup = idx.clone();
        dedup.dedup();
        assert_eq!(dedup, idx);
        assert_eq!(bins_of(k, 10).unwrap()[3].label(), "[3.4,4.2)");
    }

    #[test]
    fn categorical_counts() {
        let s = space();
        let all_x: Vec<Point> = (0..100).map(|_| p(1.0, 1, "X")).collect();
        let h = histogram(&s, &all_x, "brand", 10).unwrap();
        assert_eq!(h.counts, vec![100, 0]);
        let mixed: Vec<Point> = (0..100).map(|i| p(1.0, 1, if i < 60 { "X" } else { "Y" })).collect();
        let r = most_voted_recipe(&s, &mixed, 10).unwrap();
        assert_eq!(r[2].bin, Bin::Label("X".into()));
        assert_eq!(r[2].votes, 60);
        assert!(histogram(&s, &mixed, "nope", 10).is_err());
        assert!(histogram(&s, &[], "brand", 10).is_err());
    }

    #[test]
    fn ties_go_to_lower_bin() {
        let s = space();
        let recs = vec![p(150.0, 9, "Y"), p(10.0, 1, "X")];
        let r = most_voted_recipe(&s, &recs, 10).unwrap();
        assert_eq!(r[0].bin.label(), "[0,20)");
        assert_eq!(r[1].bin.label(), "[1,1.8)");
        assert_eq!(r[2].bin, Bin::Label("X".into()));
    }

    #[test]
    fn identical_recommendations() {
        let s = space();
        let recs = vec![p(47.0, 8, "Y"); 5];
        let r = most_voted_recipe(&s, &recs, 10).unwrap();
        assert_eq!(r.iter().map(|e| e.votes).collect::<Vec<_>>(), vec![5, 5, 5]);
        assert_eq!(r[0].bin.label(), "[40,60)");
        assert_eq!(r[1].bin.label(), "[7.4,8.2)");
    }

    #[test]
    fn overlap_rules() {
        let bin = |lower, upper, last| Bin::Interval { lower, upper, last };
        assert!(bin(40.0, 60.0, false).overlaps(&Condition::Interval([45.0, 55.0])));
        assert!(bin(60.0, 80.0, false).overlaps(&Condition::Interval([45.0, 60.0])));
        assert!(!bin(20.0, 40.0, false).overlaps(&Condition::Interval([40.0, 55.0])));
        assert!(bin(8.2, 9.0, true).overlaps(&Condition::Interval([9.0, 9.0])));
        assert!(!bin(8.2, 9.0, true).overlaps(&Condition::Interval([8.0, 8.0])));
        assert!(Bin::Label("pan".into()).overlaps(&Condition::Labels(vec!["pan".into()])));
        assert!(!Bin::Label("pan".into()).overlaps(&Condition::Interval([0.0, 1.0])));
    }
}
