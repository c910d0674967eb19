//! Expert knowledge as conditional quality distributions, jury simulation,
//! dataset generation and the two shipped recipe benchmarks.
//!
//! A [`QualityModel`] is a list of [`ExpertRule`]s. Each rule pairs a
//! conjunctive region of the search space with a distribution over the
//! quality contribution it makes there. A simulated taster draws one
//! contribution from every rule that fires, and scores the recipe with the
//! weighted mean of those draws, clipped to `[0, 10]`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution as _, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Point, SearchSpace, Value, VarKind, VariableSpec};

pub const QUALITY_MIN: f64 = 0.0;
pub const QUALITY_MAX: f64 = 10.0;
pub const DEFAULT_JURY: usize = 3;
pub const DEFAULT_N_SIM: usize = 500;

/// Quality contribution distribution of one rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Distribution {
    Gaussian { mean: f64, sd: f64 },
    Gamma { shape: f64, scale: f64 },
}

impl Distribution {
    pub fn check(&self) -> Result<()> {
        let ok = match *self {
            Distribution::Gaussian { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            Distribution::Gamma { shape, scale } => {
                shape.is_finite() && scale.is_finite() && shape > 0.0 && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid distribution parameters: {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Gaussian { mean, .. } => mean,
            Distribution::Gamma { shape, scale } => shape * scale,
        }
    }

    /// Parameters are checked on construction of the owning model.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Gaussian { mean, sd } => Normal::new(mean, sd).expect("checked").sample(rng),
            Distribution::Gamma { shape, scale } => Gamma::new(shape, scale).expect("checked").sample(rng),
        }
    }
}

/// Membership test for one variable: a closed numeric interval or a label
/// set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Condition {
    Interval([f64; 2]),
    Labels(Vec<String>),
}

impl Condition {
    fn check(&self, var: &VariableSpec) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidVariable {
                name: var.name.clone(),
                reason,
            })
        };
        match (self, &var.kind) {
            (Condition::Interval([lo, hi]), VarKind::Real { .. } | VarKind::Integer { .. }) => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return fail(format!("invalid rule interval [{lo}, {hi}]"));
                }
            }
            (Condition::Labels(set), VarKind::Categorical { labels }) => {
                if set.is_empty() {
                    return fail("empty rule label set".into());
                }
                if let Some(bad) = set.iter().find(|l| !labels.contains(l)) {
                    return fail(format!("rule references unknown label `{bad}`"));
                }
            }
            (Condition::Interval(_), _) => return fail("interval condition on a categorical".into()),
            (Condition::Labels(_), _) => return fail("label condition on a numeric variable".into()),
        }
        Ok(())
    }

    pub fn contains(&self, value: &Value) -> bool {
        match (self, value) {
            (Condition::Labels(set), Value::Label(l)) => set.contains(l),
            (Condition::Interval([lo, hi]), v) => v.as_f64().is_some_and(|x| *lo <= x && x <= *hi),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertRule {
    /// Conjunction of per-variable conditions. Empty means always.
    pub when: BTreeMap<String, Condition>,
    pub dist: Distribution,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone)]
struct Compiled {
    conds: Vec<(usize, Condition)>,
    dist: Distribution,
    weight: f64,
}

/// Rules bound to a search space.
#[derive(Debug, Clone)]
pub struct QualityModel {
    space: SearchSpace,
    rules: Vec<ExpertRule>,
    compiled: Vec<Compiled>,
    fallback: Distribution,
}

impl QualityModel {
    pub fn new(space: SearchSpace, rules: Vec<ExpertRule>, fallback: Distribution) -> Result<Self> {
        fallback.check()?;
        let mut compiled = Vec::with_capacity(rules.len());
        for (k, rule) in rules.iter().enumerate() {
            rule.dist.check()?;
            if !(rule.weight.is_finite() && rule.weight > 0.0) {
                return Err(Error::Config(format!("rule {k}: weight must be positive")));
            }
            let mut conds = Vec::with_capacity(rule.when.len());
            for (name, cond) in &rule.when {
                let idx = space
                    .index_of(name)
                    .ok_or_else(|| Error::Config(format!("rule {k}: unknown variable `{name}`")))?;
                cond.check(&space.variables()[idx])?;
                conds.push((idx, cond.clone()));
            }
            compiled.push(Compiled {
                conds,
                dist: rule.dist,
                weight: rule.weight,
            });
        }
        Ok(Self {
            space,
            rules,
            compiled,
            fallback,
        })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn rules(&self) -> &[ExpertRule] {
        &self.rules
    }

    pub fn fallback(&self) -> &Distribution {
        &self.fallback
    }

    /// Indices of the rules that fire at `point`.
    pub fn firing(&self, point: &Point) -> Vec<usize> {
        self.compiled
            .iter()
            .enumerate()
            .filter(|(_, r)| r.conds.iter().all(|(i, c)| c.contains(&point.0[*i])))
            .map(|(k, _)| k)
            .collect()
    }

    /// One simulated taster's score of `point`.
    pub fn sample<R: Rng + ?Sized>(&self, point: &Point, rng: &mut R) -> Result<f64> {
        self.space.check_point(point)?;
        let firing = self.firing(point);
        let y = if firing.is_empty() {
            self.fallback.sample(rng)
        } else {
            let (mut num, mut den) = (0.0, 0.0);
            for k in firing {
                let r = &self.compiled[k];
                num += r.weight * r.dist.sample(rng);
                den += r.weight;
            }
            num / den
        };
        Ok(y.clamp(QUALITY_MIN, QUALITY_MAX))
    }

    /// Mean score of a jury of `size` tasters.
    pub fn jury<R: Rng + ?Sized>(&self, point: &Point, size: usize, rng: &mut R) -> Result<f64> {
        let scores = (0..size).map(|_| self.sample(point, rng)).collect::<Result<Vec<_>>>()?;
        jury_mean(&scores)
    }
}

/// Free-function form of [`QualityModel::sample`].
pub fn sample_quality<R: Rng + ?Sized>(model: &QualityModel, point: &Point, rng: &mut R) -> Result<f64> {
    model.sample(point, rng)
}

pub fn jury_mean(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Config("jury needs at least one evaluation".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Simulated,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::Simulated => "simulated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub point: Point,
    pub quality: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Row>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.rows.iter().filter(|r| r.provenance == provenance).count()
    }

    /// Snapped latent encodings of every row, for the surrogate.
    pub fn inputs(&self, space: &SearchSpace) -> Result<Vec<Vec<f64>>> {
        self.rows
            .iter()
            .map(|r| space.to_latent(&r.point).map(|v| v.into_inner()))
            .collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.quality).collect()
    }

    pub fn extend(&mut self, other: Dataset) {
        self.rows.extend(other.rows);
    }

    /// CSV with one column per variable, then `quality` and `provenance`.
    pub fn write_csv<W: Write>(&self, space: &SearchSpace, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = space.variables().iter().map(|v| v.name.as_str()).collect();
        header.extend(["quality", "provenance"]);
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.point.0.iter().map(|v| v.to_string()).collect();
            rec.push(row.quality.to_string());
            rec.push(row.provenance.as_str().to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Parses a dataset CSV. Rows are tagged `real` unless a `provenance`
    /// column says otherwise. Row numbers in errors count data rows from 1.
    pub fn read_csv<R: Read>(space: &SearchSpace, input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let mut var_cols = vec![None; space.len()];
        let (mut quality_col, mut prov_col) = (None, None);
        for (c, name) in header.iter().enumerate() {
            match name {
                "quality" => quality_col = Some(c),
                "provenance" => prov_col = Some(c),
                other => match space.index_of(other) {
                    Some(i) => var_cols[i] = Some(c),
                    None => return Err(Error::Config(format!("unknown column `{other}`"))),
                },
            }
        }
        let quality_col = quality_col.ok_or_else(|| Error::Config("missing `quality` column".into()))?;
        let var_cols: Vec<usize> = var_cols
            .iter()
            .zip(space.variables())
            .map(|(c, v)| c.ok_or_else(|| Error::Config(format!("missing column `{}`", v.name))))
            .collect::<Result<_>>()?;

        let mut rows = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let row = r + 1;
            let rec = rec?;
            let field = |c: usize| rec.get(c).unwrap_or("");
            let row_err = |e: Error| Error::DataRow {
                row,
                reason: e.to_string(),
            };
            let values = space
                .variables()
                .iter()
                .zip(&var_cols)
                .map(|(var, &c)| space.parse_value(var, field(c)))
                .collect::<Result<Vec<_>>>()
                .map_err(row_err)?;
            let text = field(quality_col).trim();
            let quality: f64 = text.parse().map_err(|_| Error::DataRow {
                row,
                reason: format!("malformed quality `{text}`"),
            })?;
            if !(QUALITY_MIN..=QUALITY_MAX).contains(&quality) {
                return Err(Error::DataRow {
                    row,
                    reason: format!("quality {quality} outside [{QUALITY_MIN}, {QUALITY_MAX}]"),
                });
            }
            let provenance = match prov_col.map(|c| field(c).trim()) {
                None | Some("real") => Provenance::Real,
                Some("simulated") => Provenance::Simulated,
                Some(other) => {
                    return Err(Error::DataRow {
                        row,
                        reason: format!("unknown provenance `{other}`"),
                    })
                }
            };
            rows.push(Row {
                point: Point(values),
                quality,
                provenance,
            });
        }
        Ok(Self { rows })
    }
}

/// Real-tagged jury scores on a uniform grid plus `n_sim` single-taster
/// scores at uniform random points. Grid rows come first.
pub fn generate_dataset<R: Rng + ?Sized>(
    model: &QualityModel,
    grid_resolution: &[usize],
    n_sim: usize,
    jury_size: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if jury_size == 0 {
        return Err(Error::Config("jury size must be at least 1".into()));
    }
    let space = model.space();
    let grid = space.uniform_grid(grid_resolution)?;
    let mut rows = Vec::with_capacity(grid.len() + n_sim);
    for point in grid {
        let quality = model.jury(&point, jury_size, rng)?;
        rows.push(Row {
            point,
            quality,
            provenance: Provenance::Real,
        });
    }
    for _ in 0..n_sim {
        let point = space.sample_one(rng);
        let quality = model.sample(&point, rng)?;
        rows.push(Row {
            point,
            quality,
            provenance: Provenance::Simulated,
        });
    }
    Ok(Dataset { rows })
}

/// Reads user-collected tastings. Every row is validated against `space`.
pub fn load_real_dataset(path: &Path, space: &SearchSpace) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut data = Dataset::read_csv(space, file)?;
    data.rows.iter_mut().for_each(|r| r.provenance = Provenance::Real);
    Ok(data)
}

/// On-disk benchmark grammar: a search space extended with rules and
/// protocol metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct BenchmarkFile {
    name: String,
    variables: Vec<VariableSpec>,
    fallback: Distribution,
    rules: Vec<ExpertRule>,
    expert_point: serde_json::Map<String, serde_json::Value>,
    reference: BTreeMap<String, Condition>,
    grid_resolution: Vec<usize>,
}

/// A search space, its simulated tasters, a fixed expert recipe and the
/// region a good optimizer should recommend.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: String,
    pub model: QualityModel,
    pub expert_point: Point,
    /// Target region per variable, in space order.
    pub reference: Vec<Condition>,
    pub grid_resolution: Vec<usize>,
}

impl Benchmark {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: BenchmarkFile = serde_json::from_str(text)?;
        let space = SearchSpace::new(file.variables)?;
        let expert_point = space.point_from_map(&file.expert_point)?;
        let mut reference = Vec::with_capacity(space.len());
        for var in space.variables() {
            let cond = file
                .reference
                .get(&var.name)
                .ok_or_else(|| Error::Config(format!("reference missing variable `{}`", var.name)))?;
            cond.check(var)?;
            reference.push(cond.clone());
        }
        if let Some(extra) = file.reference.keys().find(|k| space.index_of(k).is_none()) {
            return Err(Error::Config(format!("reference names unknown variable `{extra}`")));
        }
        space.uniform_grid(&file.grid_resolution)?;
        Ok(Self {
            name: file.name,
            model: QualityModel::new(space, file.rules, file.fallback)?,
            expert_point,
            reference,
            grid_resolution: file.grid_resolution,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "hotdog" => Ok(hotdog_benchmark()),
            "cesar" => Ok(cesar_benchmark()),
            other => Err(Error::Config(format!(
                "unknown benchmark `{other}` (expected hotdog or cesar)"
            ))),
        }
    }

    pub fn space(&self) -> &SearchSpace {
        self.model.space()
    }

    pub fn dataset<R: Rng + ?Sized>(&self, n_sim: usize, jury_size: usize, rng: &mut R) -> Result<Dataset> {
        generate_dataset(&self.model, &self.grid_resolution, n_sim, jury_size, rng)
    }

    /// Uniform draw from the reference region.
    pub fn sample_reference<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let values = self
            .space()
            .variables()
            .iter()
            .zip(&self.reference)
            .map(|(var, cond)| match (cond, &var.kind) {
                (Condition::Labels(set), _) => Value::Label(set[rng.random_range(0..set.len())].clone()),
                (Condition::Interval([lo, hi]), VarKind::Integer { lower, upper }) => {
                    let a = (lo.ceil() as i64).max(*lower);
                    let b = (hi.floor() as i64).min(*upper);
                    Value::Integer(rng.random_range(a..=b))
                }
                (Condition::Interval([lo, hi]), _) => Value::Real(rng.random_range(*lo..=*hi)),
            })
            .collect();
        Point(values)
    }
}

const HOTDOG_JSON: &str = include_str!("../configs/hotdog.json");
const CESAR_JSON: &str = include_str!("../configs/cesar.json");

pub fn hotdog_benchmark() -> Benchmark {
    Benchmark::from_json(HOTDOG_JSON).expect("shipped hotdog config is valid")
}

pub fn cesar_benchmark() -> Benchmark {
    Benchmark::from_json(CESAR_JSON).expect("shipped cesar config is valid")
}

/// Raw text of a shipped benchmark config.
pub fn shipped_config(name: &str) -> Option<&'static str> {
    match name {
        "hotdog" => Some(HOTDOG_JSON),
        "cesar" => Some(CESAR_JSON),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn line_space() -> SearchSpace {
        SearchSpace::new(vec![
            VariableSpec::real("t", 0.0, 10.0),
            VariableSpec::categorical("c", &["a", "b"]),
        ])
        .unwrap()
    }

    fn rule(lo: f64, hi: f64, dist: Distribution, weight: f64) -> ExpertRule {
        ExpertRule {
            when: BTreeMap::from([("t".to_string(), Condition::Interval([lo, hi]))]),
            dist,
            weight,
        }
    }

    fn gauss(mean: f64, sd: f64) -> Distribution {
        Distribution::Gaussian { mean, sd }
    }

    fn pt(t: f64, c: &str) -> Point {
        Point(vec![Value::Real(t), Value::Label(c.into())])
    }

    #[test]
    fn single_rule_mean() {
        let m = QualityModel::new(
            line_space(),
            vec![rule(0.0, 10.0, gauss(8.0, 0.5), 1.0)],
            gauss(5.0, 1.0),
        )
        .unwrap();
        let mut rng = seed::rng(5);
        let mean: f64 = (0..10_000)
            .map(|_| m.sample(&pt(3.0, "a"), &mut rng).unwrap())
            .sum::<f64>()
            / 1e4;
        assert!((7.97..=8.03).contains(&mean), "{mean}");
    }

    #[test]
    fn clips_to_ten() {
        let m = QualityModel::new(
            line_space(),
            vec![rule(0.0, 10.0, gauss(11.0, 0.1), 1.0)],
            gauss(5.0, 1.0),
        )
        .unwrap();
        let mut rng = seed::rng(6);
        assert!((0..1000).all(|_| m.sample(&pt(1.0, "b"), &mut rng).unwrap() == 10.0));
    }

    #[test]
    fn weighted_mean_of_firing_rules() {
        let rules = vec![
            rule(0.0, 5.0, gauss(4.0, 1e-9), 1.0),
            rule(2.0, 10.0, gauss(8.0, 1e-9), 3.0),
        ];
        let m = QualityModel::new(line_space(), rules, gauss(1.0, 1e-9)).unwrap();
        let mut rng = seed::rng(7);
        assert!((m.sample(&pt(3.0, "a"), &mut rng).unwrap() - 7.0).abs() < 1e-6);
        assert!((m.sample(&pt(1.0, "a"), &mut rng).unwrap() - 4.0).abs() < 1e-6);
        assert!((m.sample(&pt(9.0, "a"), &mut rng).unwrap() - 8.0).abs() < 1e-6);
    }

    #[test]
    fn fallback_when_nothing_fires() {
        let mut labels = rule(0.0, 10.0, gauss(9.0, 1e-9), 1.0);
        labels.when.insert("c".into(), Condition::Labels(vec!["b".into()]));
        let m = QualityModel::new(line_space(), vec![labels], gauss(2.0, 1e-9)).unwrap();
        let mut rng = seed::rng(8);
        assert!((m.sample(&pt(3.0, "a"), &mut rng).unwrap() - 2.0).abs() < 1e-6);
        assert!((m.sample(&pt(3.0, "b"), &mut rng).unwrap() - 9.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_rules() {
        let bad = |r: ExpertRule| QualityModel::new(line_space(), vec![r], gauss(5.0, 1.0)).is_err();
        assert!(bad(rule(0.0, 1.0, gauss(5.0, 0.0), 1.0)));
        assert!(bad(rule(0.0, 1.0, Distribution::Gamma { shape: 0.0, scale: 1.0 }, 1.0)));
        assert!(bad(rule(0.0, 1.0, gauss(5.0, 1.0), 0.0)));
        assert!(bad(rule(2.0, 1.0, gauss(5.0, 1.0), 1.0)));
        let mut unknown = rule(0.0, 1.0, gauss(5.0, 1.0), 1.0);
        unknown.when.insert("zzz".into(), Condition::Interval([0.0, 1.0]));
        assert!(bad(unknown));
        let mut label = rule(0.0, 1.0, gauss(5.0, 1.0), 1.0);
        label.when.insert("c".into(), Condition::Labels(vec!["q".into()]));
        assert!(bad(label));
    }

    #[test]
    fn jury_examples() {
        assert_eq!(jury_mean(&[7.0, 8.0, 9.0]).unwrap(), 8.0);
        assert_eq!(jury_mean(&[4.25]).unwrap(), 4.25);
        assert!(jury_mean(&[]).is_err());
    }

    #[test]
    fn jury_mean_matches_long_run_average() {
        let b = cesar_benchmark();
        let p = &b.expert_point;
        let mut rng = seed::rng(9);
        let draws: Vec<f64> = (0..100_000).map(|_| b.model.sample(p, &mut rng).unwrap()).collect();
        let mu = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|y| (y - mu).powi(2)).sum::<f64>() / draws.len() as f64).sqrt();
        let n = 400;
        let jury = b.model.jury(p, n, &mut rng).unwrap();
        assert!((jury - mu).abs() < 4.0 * sd / (n as f64).sqrt(), "{jury} vs {mu}");
    }

    #[test]
    fn dataset_shapes() {
        let b = hotdog_benchmark();
        let mut rng = seed::rng(10);
        let grid_only = b.dataset(0, 3, &mut rng).unwrap();
        let grid_size: usize = b.grid_resolution.iter().product();
        assert_eq!(grid_only.len(), grid_size);
        assert_eq!(grid_only.count(Provenance::Real), grid_size);
        let full = b.dataset(50, 3, &mut rng).unwrap();
        assert_eq!(full.count(Provenance::Simulated), 50);
        assert!(full.rows.iter().all(|r| (0.0..=10.0).contains(&r.quality)));
        assert!(full.rows.iter().all(|r| b.space().check_point(&r.point).is_ok()));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let space = line_space();
        let data = Dataset {
            rows: vec![
                Row {
                    point: pt(1.5, "a"),
                    quality: 7.25,
                    provenance: Provenance::Real,
                },
                Row {
                    point: pt(9.0, "b"),
                    quality: 3.0,
                    provenance: Provenance::Simulated,
                },
            ],
        };
        let mut buf = Vec::new();
        data.write_csv(&space, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone())
            .unwrap()
            .starts_with("t,c,quality,provenance\n"));
        assert_eq!(Dataset::read_csv(&space, buf.as_slice()).unwrap(), data);

        let read = |text: &str| Dataset::read_csv(&space, text.as_bytes());
        assert_eq!(read("t,c,quality\n1,a,5\n2,b,6\n").unwrap().len(), 2);
        let err = read("t,c,quality\n1,a,5\n2,b,12\n").unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        let err = read("t,c,quality\n1,zz,5\n").unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("zz"), "{err}");
        let err = read("t,c,quality\n1,a,x5\n").unwrap_err().to_string();
        assert!(err.contains("malformed"), "{err}");
        let err = read("t,c,quality\n11,a,5\n").unwrap_err().to_string();
        assert!(err.contains("row 1"), "{err}");
        assert!(read("t,c,quality,extra\n1,a,5,0\n")
            .unwrap_err()
            .to_string()
            .contains("extra"));
    }

    #[test]
    fn load_real_tags_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "c,t,quality\nb,2.5,6\na,0,1\n").unwrap();
        let d = load_real_dataset(&path, &line_space()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.rows[0].point, pt(2.5, "b"));
        assert!(d.rows.iter().all(|r| r.provenance == Provenance::Real));
    }

    #[test]
    fn shipped_spaces() {
        let cesar = cesar_benchmark();
        assert_eq!(cesar.space().latent_dim(), 7);
        assert_eq!(cesar.space().len(), 6);
        let hotdog = hotdog_benchmark();
        assert_eq!(hotdog.space().latent_dim(), 10);
        assert_eq!(hotdog.space().len(), 6);
        for b in [&cesar, &hotdog] {
            crate::space::validate(b.space().variables()).unwrap();
            b.space().check_point(&b.expert_point).unwrap();
            assert!(b.model.rules().len() > 6);
        }
        assert!(Benchmark::by_name("pizza").is_err());
    }

    #[test]
    fn optimum_beats_expert_recipe() {
        for b in [cesar_benchmark(), hotdog_benchmark()] {
            let mut rng = seed::rng(11);
            let opt: f64 = (0..1000)
                .map(|_| {
                    let p = b.sample_reference(&mut rng);
                    b.model.sample(&p, &mut rng).unwrap()
                })
                .sum::<f64>()
                / 1000.0;
            let expert: f64 = (0..1000)
                .map(|_| b.model.sample(&b.expert_point, &mut rng).unwrap())
                .sum::<f64>()
                / 1000.0;
            assert!(opt > expert + 0.5, "{}: {opt} vs {expert}", b.name);
        }
    }
}
