//! Model populations: the hyperparameter grid, one record per trained model,
//! and the complexity measures attached to those records.
//!
//! A population is built once (usually from a manifest) and never mutated
//! afterwards, so any number of scoring workers can share it by reference.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A literal hyperparameter value as written in the manifest.
///
/// Values are only ever compared by their index within an axis, so floats
/// are kept exactly as parsed and never matched numerically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Bool(b) => write!(f, "{b}"),
            AxisValue::Int(i) => write!(f, "{i}"),
            AxisValue::Float(x) => write!(f, "{x:?}"),
            AxisValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<i64> for AxisValue {
    fn from(v: i64) -> Self {
        AxisValue::Int(v)
    }
}

impl From<f64> for AxisValue {
    fn from(v: f64) -> Self {
        AxisValue::Float(v)
    }
}

impl From<bool> for AxisValue {
    fn from(v: bool) -> Self {
        AxisValue::Bool(v)
    }
}

impl From<&str> for AxisValue {
    fn from(v: &str) -> Self {
        AxisValue::Text(v.to_owned())
    }
}

/// One hyperparameter axis and its discrete values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<AxisValue>,
}

impl Axis {
    pub fn new<V: Into<AxisValue>>(
        name: impl Into<String>,
        values: impl IntoIterator<Item = V>,
    ) -> Self {
        Axis {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }
}

/// The grid of hyperparameter settings: the Cartesian product of its axes.
///
/// Cells are numbered in row-major order, the last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct HyperparamSpace {
    axes: Vec<Axis>,
    #[serde(skip)]
    grid_size: usize,
}

impl HyperparamSpace {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Axis {
                axis: String::new(),
                message: "a space needs at least one axis".into(),
            });
        }
        let mut grid_size = 1usize;
        for (i, axis) in axes.iter().enumerate() {
            let err = |message: String| Error::Axis {
                axis: axis.name.clone(),
                message,
            };
            if axes[..i].iter().any(|a| a.name == axis.name) {
                return Err(err("duplicate axis name".into()));
            }
            if axis.values.is_empty() {
                return Err(err("axis has no values".into()));
            }
            for (j, v) in axis.values.iter().enumerate() {
                if let AxisValue::Float(x) = v {
                    if !x.is_finite() {
                        return Err(err(format!("value {j} is not finite")));
                    }
                }
                if axis.values[..j].contains(v) {
                    return Err(err(format!("value {v} listed twice")));
                }
            }
            grid_size = grid_size
                .checked_mul(axis.values.len())
                .ok_or_else(|| err("grid size overflows".into()))?;
        }
        Ok(HyperparamSpace { axes, grid_size })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    /// Number of axes.
    pub fn len(&self) -> usize {
        self.axes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::cardinality).collect()
    }

    /// |Θ|, the number of cells in the grid.
    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn axis_index(&self, name: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAxis(name.to_owned()))
    }

    pub fn axis_name(&self, index: usize) -> &str {
        &self.axes[index].name
    }

    /// Indices of axes with at least two values.
    pub fn multi_valued_axes(&self) -> Vec<usize> {
        (0..self.axes.len())
            .filter(|&i| self.axes[i].cardinality() >= 2)
            .collect()
    }

    pub fn cell_index(&self, coord: &[usize]) -> usize {
        coord
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&c, axis)| acc * axis.cardinality() + c)
    }

    pub fn cell_coord(&self, mut cell: usize) -> Vec<usize> {
        let mut coord = vec![0; self.axes.len()];
        for (slot, axis) in coord.iter_mut().zip(&self.axes).rev() {
            *slot = cell % axis.cardinality();
            cell /= axis.cardinality();
        }
        coord
    }

    /// Renders a coordinate as `name=value` pairs.
    pub fn describe(&self, coord: &[usize]) -> String {
        coord
            .iter()
            .zip(&self.axes)
            .map(|(&c, a)| format!("{}={}", a.name, a.values[c]))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// One trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    /// Value index per axis.
    pub coord: Vec<usize>,
    pub train_err: f64,
    pub val_err: f64,
    /// Distinguishes several models trained at the same grid cell.
    #[serde(default)]
    pub replica: u32,
    /// Path of the model's tensor archive, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
}

impl ModelRecord {
    pub fn new(coord: Vec<usize>, train_err: f64, val_err: f64) -> Self {
        ModelRecord {
            coord,
            train_err,
            val_err,
            replica: 0,
            weights: None,
        }
    }

    pub fn with_replica(mut self, replica: u32) -> Self {
        self.replica = replica;
        self
    }

    pub fn gap(&self) -> f64 {
        gap(self)
    }
}

/// Generalization gap: validation error minus training error.
pub fn gap(record: &ModelRecord) -> f64 {
    record.val_err - record.train_err
}

/// Per-model values of one named complexity measure.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureVector {
    pub name: String,
    pub values: Vec<f64>,
}

impl MeasureVector {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        MeasureVector {
            name: name.into(),
            values,
        }
    }
}

/// Models that share the same values on a set of conditioning axes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    /// Value index for each conditioning axis, in axis order.
    pub key: Vec<usize>,
    /// Record indices, ascending.
    pub members: Vec<usize>,
}

impl Group {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Coverage diagnostics for a population's grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub grid_size: usize,
    /// Coordinates of cells that hold no model, in cell order.
    pub missing_cells: Vec<Vec<usize>>,
    /// Number of models in a cell → number of cells with that many models.
    pub replica_histogram: BTreeMap<usize, usize>,
    pub single_valued_axes: Vec<String>,
}

/// A task's dataset of trained models together with the measures being scored.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    task_id: String,
    space: HyperparamSpace,
    records: Vec<ModelRecord>,
    measures: IndexMap<String, Vec<f64>>,
    gaps: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestIn {
    task_id: String,
    axes: Vec<Axis>,
    models: Vec<ModelRecord>,
    #[serde(default)]
    measures: IndexMap<String, Vec<f64>>,
}

#[derive(Serialize)]
struct ManifestOut<'a> {
    task_id: &'a str,
    axes: &'a [Axis],
    models: &'a [ModelRecord],
    measures: &'a IndexMap<String, Vec<f64>>,
}

impl Population {
    pub fn new(
        task_id: impl Into<String>,
        space: HyperparamSpace,
        records: Vec<ModelRecord>,
        measures: IndexMap<String, Vec<f64>>,
    ) -> Result<Self> {
        let cards = space.cardinalities();
        let mut seen: HashMap<(&[usize], u32), usize> = HashMap::with_capacity(records.len());
        for (index, rec) in records.iter().enumerate() {
            if rec.coord.len() != cards.len() {
                return Err(Error::record(
                    index,
                    "coord",
                    format!(
                        "has {} entries, space has {} axes",
                        rec.coord.len(),
                        cards.len()
                    ),
                ));
            }
            for (axis, (&c, &card)) in rec.coord.iter().zip(&cards).enumerate() {
                if c >= card {
                    return Err(Error::record(
                        index,
                        "coord",
                        format!(
                            "value index {c} out of range for axis {:?} with {card} values",
                            space.axis_name(axis)
                        ),
                    ));
                }
            }
            for (field, v) in [("train_err", rec.train_err), ("val_err", rec.val_err)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::record(
                        index,
                        field,
                        format!("{v} is outside [0, 1]"),
                    ));
                }
            }
            if let Some(first) = seen.insert((&rec.coord, rec.replica), index) {
                return Err(Error::DuplicateRecord { index, first });
            }
        }
        for (name, values) in &measures {
            check_measure(name, values, records.len())?;
        }
        let gaps = records.iter().map(gap).collect();
        Ok(Population {
            task_id: task_id.into(),
            space,
            records,
            measures,
            gaps,
        })
    }

    /// Parses and validates a manifest document.
    pub fn parse_manifest(bytes: &[u8]) -> Result<Self> {
        let doc: ManifestIn = serde_json::from_slice(bytes)?;
        let space = HyperparamSpace::new(doc.axes)?;
        Population::new(doc.task_id, space, doc.models, doc.measures)
    }

    pub fn read_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Population::parse_manifest(&bytes)
    }

    /// Serializes back to the manifest schema (pretty-printed, trailing newline).
    pub fn to_manifest_json(&self) -> String {
        let doc = ManifestOut {
            task_id: &self.task_id,
            axes: self.space.axes(),
            models: &self.records,
            measures: &self.measures,
        };
        let mut out =
            serde_json::to_string_pretty(&doc).expect("manifest serialization cannot fail");
        out.push('\n');
        out
    }

    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_manifest_json()).map_err(|e| Error::io(path, e))
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn space(&self) -> &HyperparamSpace {
        &self.space
    }

    pub fn records(&self) -> &[ModelRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Cached generalization gap of every record, in record order.
    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn measures(&self) -> &IndexMap<String, Vec<f64>> {
        &self.measures
    }

    pub fn measure(&self, name: &str) -> Result<&[f64]> {
        self.measures
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownMeasure(name.to_owned()))
    }

    /// Returns a copy with one more measure attached.
    pub fn with_measure(&self, measure: MeasureVector) -> Result<Self> {
        if self.measures.contains_key(&measure.name) {
            return Err(Error::MeasureCollision(measure.name));
        }
        check_measure(&measure.name, &measure.values, self.records.len())?;
        let mut out = self.clone();
        out.measures.insert(measure.name, measure.values);
        Ok(out)
    }

    /// Partitions the records by their values on the named axes.
    ///
    /// Returns one group per value combination of the conditioning axes
    /// (empty groups included), in lexicographic order of value indices with
    /// axes taken in space order. An empty `cond` yields a single group.
    pub fn group_by<S: AsRef<str>>(&self, cond: &[S]) -> Result<Vec<Group>> {
        let mut axes = cond
            .iter()
            .map(|n| self.space.axis_index(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        axes.sort_unstable();
        axes.dedup();
        Ok(self.partition(&axes))
    }

    /// [`group_by`](Self::group_by) on axis indices, which must be sorted and distinct.
    pub fn partition(&self, axes: &[usize]) -> Vec<Group> {
        let cards: Vec<usize> = axes
            .iter()
            .map(|&a| self.space.axes[a].cardinality())
            .collect();
        let n_groups: usize = cards.iter().product();
        let mut groups: Vec<Group> = (0..n_groups)
            .map(|mut g| {
                let mut key = vec![0; cards.len()];
                for (slot, &card) in key.iter_mut().zip(&cards).rev() {
                    *slot = g % card;
                    g /= card;
                }
                Group {
                    key,
                    members: Vec::new(),
                }
            })
            .collect();
        for (index, rec) in self.records.iter().enumerate() {
            let g = axes
                .iter()
                .zip(&cards)
                .fold(0, |acc, (&a, &card)| acc * card + rec.coord[a]);
            groups[g].members.push(index);
        }
        groups
    }

    pub fn validate_grid(&self) -> GridReport {
        let mut per_cell = vec![0usize; self.space.grid_size()];
        for rec in &self.records {
            per_cell[self.space.cell_index(&rec.coord)] += 1;
        }
        let mut replica_histogram = BTreeMap::new();
        let mut missing_cells = Vec::new();
        for (cell, &count) in per_cell.iter().enumerate() {
            *replica_histogram.entry(count).or_insert(0) += 1;
            if count == 0 {
                missing_cells.push(self.space.cell_coord(cell));
            }
        }
        let single_valued_axes = self
            .space
            .axes()
            .iter()
            .filter(|a| a.cardinality() == 1)
            .map(|a| a.name.clone())
            .collect();
        GridReport {
            grid_size: self.space.grid_size(),
            missing_cells,
            replica_histogram,
            single_valued_axes,
        }
    }
}

fn check_measure(name: &str, values: &[f64], n_records: usize) -> Result<()> {
    if values.len() != n_records {
        return Err(Error::Measure {
            name: name.to_owned(),
            message: format!("has {} values for {} records", values.len(), n_records),
        });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Measure {
            name: name.to_owned(),
            message: format!("value for record {i} is not finite"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cell_manifest(extra_model: &str) -> String {
        format!(
            r#"{{
  "task_id": "t",
  "axes": [{{"name": "bs", "values": [32, 512]}}],
  "models": [
    {{"coord": [0], "train_err": 0.0, "val_err": 0.1}},
    {{"coord": [1], "train_err": 0.01, "val_err": 0.3}}{extra_model}
  ],
  "measures": {{"mu": [1.0, 2.0{}]}}
}}"#,
            if extra_model.is_empty() { "" } else { ", 3.0" }
        )
    }

    #[test]
    fn parses_minimal_manifest() {
        let pop = Population::parse_manifest(two_cell_manifest("").as_bytes()).unwrap();
        assert_eq!(pop.space().grid_size(), 2);
        assert_eq!(pop.len(), 2);
        assert_eq!(pop.measure("mu").unwrap(), &[1.0, 2.0]);
        assert_eq!(pop.space().axes()[0].values[1], AxisValue::Int(512));
    }

    #[test]
    fn rejects_duplicate_record() {
        let doc = two_cell_manifest(r#", {"coord": [1], "train_err": 0.0, "val_err": 0.2}"#);
        let err = Population::parse_manifest(doc.as_bytes()).unwrap_err();
        assert!(
            matches!(err, Error::DuplicateRecord { index: 2, first: 1 }),
            "{err}"
        );
    }

    #[test]
    fn replicas_at_one_cell_are_distinct() {
        let doc = two_cell_manifest(
            r#", {"coord": [1], "train_err": 0.0, "val_err": 0.2, "replica": 1}"#,
        );
        let pop = Population::parse_manifest(doc.as_bytes()).unwrap();
        assert_eq!(pop.len(), 3);
    }

    #[test]
    fn reports_record_and_field() {
        let doc = two_cell_manifest("").replace(r#""val_err": 0.3"#, r#""val_err": 1.5"#);
        match Population::parse_manifest(doc.as_bytes()).unwrap_err() {
            Error::Record { index, field, .. } => assert_eq!((index, field), (1, "val_err")),
            e => panic!("unexpected {e}"),
        }
        let doc = two_cell_manifest("").replace(r#""coord": [1]"#, r#""coord": [2]"#);
        match Population::parse_manifest(doc.as_bytes()).unwrap_err() {
            Error::Record { index, field, .. } => assert_eq!((index, field), (1, "coord")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(
            Population::parse_manifest(b"{not json"),
            Err(Error::Json(_))
        ));
        let doc = two_cell_manifest("").replacen('{', r#"{"extra": 1, "#, 1);
        assert!(matches!(
            Population::parse_manifest(doc.as_bytes()),
            Err(Error::Json(_))
        ));
        let doc = two_cell_manifest("").replace("[1.0, 2.0]", "[1.0]");
        assert!(matches!(
            Population::parse_manifest(doc.as_bytes()),
            Err(Error::Measure { .. })
        ));
        let doc = two_cell_manifest("").replace("[32, 512]", "[32, 32]");
        assert!(matches!(
            Population::parse_manifest(doc.as_bytes()),
            Err(Error::Axis { .. })
        ));
    }

    #[test]
    fn gap_examples() {
        assert_eq!(ModelRecord::new(vec![0], 0.0, 0.0).gap(), 0.0);
        assert_eq!(ModelRecord::new(vec![0], 0.0, 0.30).gap(), 0.30);
        assert!((ModelRecord::new(vec![0], 0.02, 0.22).gap() - 0.20).abs() < 1e-15);
        let r = ModelRecord::new(vec![0], 0.13, 0.57);
        let swapped = ModelRecord::new(vec![0], 0.57, 0.13);
        assert_eq!(r.gap(), -swapped.gap());
    }

    fn grid_2x2x3() -> Population {
        let space = HyperparamSpace::new(vec![
            Axis::new("lr", [0.1, 0.01]),
            Axis::new("depth", [8i64, 16]),
            Axis::new("bs", [32i64, 64, 128]),
        ])
        .unwrap();
        let records = (0..space.grid_size())
            .map(|c| ModelRecord::new(space.cell_coord(c), 0.0, 0.01 * c as f64))
            .collect();
        Population::new("g", space, records, IndexMap::new()).unwrap()
    }

    #[test]
    fn group_by_counts() {
        let pop = grid_2x2x3();
        let none: [&str; 0] = [];
        let all = pop.group_by(&none).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].members, (0..12).collect::<Vec<_>>());

        let groups = pop.group_by(&["depth", "lr"]).unwrap();
        assert_eq!(groups.len(), 4);
        let keys: Vec<_> = groups.iter().map(|g| g.key.clone()).collect();
        assert_eq!(keys, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert!(groups.iter().all(|g| g.len() == 3));
        for g in &groups {
            for &m in &g.members {
                assert_eq!(pop.records()[m].coord[..2], g.key[..]);
            }
        }

        assert!(matches!(
            pop.group_by(&["nope"]),
            Err(Error::UnknownAxis(_))
        ));
    }

    #[test]
    fn cell_numbering_round_trips() {
        let pop = grid_2x2x3();
        let space = pop.space();
        for c in 0..space.grid_size() {
            assert_eq!(space.cell_index(&space.cell_coord(c)), c);
        }
        assert_eq!(space.cell_coord(5), vec![0, 1, 2]);
    }

    #[test]
    fn grid_report_flags_gaps_and_constant_axes() {
        let space =
            HyperparamSpace::new(vec![Axis::new("wd", [0.0]), Axis::new("bs", [1i64, 2, 3])])
                .unwrap();
        let records = vec![
            ModelRecord::new(vec![0, 0], 0.0, 0.1),
            ModelRecord::new(vec![0, 0], 0.0, 0.1).with_replica(1),
            ModelRecord::new(vec![0, 2], 0.0, 0.1),
        ];
        let pop = Population::new("c", space, records, IndexMap::new()).unwrap();
        let report = pop.validate_grid();
        assert_eq!(report.missing_cells, vec![vec![0, 1]]);
        assert_eq!(report.single_valued_axes, vec!["wd".to_string()]);
        assert_eq!(
            report.replica_histogram,
            BTreeMap::from([(0, 1), (1, 1), (2, 1)])
        );
    }

    #[test]
    fn measure_collision() {
        let pop = Population::parse_manifest(two_cell_manifest("").as_bytes()).unwrap();
        let err = pop
            .with_measure(MeasureVector::new("mu", vec![0.0, 0.0]))
            .unwrap_err();
        assert!(matches!(err, Error::MeasureCollision(_)));
        let pop = pop
            .with_measure(MeasureVector::new("nu", vec![0.0, 1.0]))
            .unwrap();
        assert_eq!(pop.measures().len(), 2);
    }

    #[test]
    fn manifest_round_trip() {
        let pop = Population::parse_manifest(two_cell_manifest("").as_bytes()).unwrap();
        let again = Population::parse_manifest(pop.to_manifest_json().as_bytes()).unwrap();
        assert_eq!(pop, again);
    }
}
