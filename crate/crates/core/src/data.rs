//! Grouped datasets and the sampling oracle.
//!
//! A dataset holds one empirical distribution per group. The oracle draws
//! i.i.d. points uniformly with replacement from a requested group. Datasets
//! are either generated synthetically or ingested from CSV with an explicit
//! schema.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GdroError, Result};
use crate::problem::{norm2, DataPoint};
use crate::rng::{group_stream, standard_normal, stream_rng, uniform_index};

/// Points of one group, stored row-major.
#[derive(Debug, Clone, PartialEq)]
struct GroupData {
    features: Vec<f64>,
    labels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    dim: usize,
    names: Vec<String>,
    groups: Vec<GroupData>,
}

impl GroupedDataset {
    /// Builds a dataset from explicit groups. Every group must be nonempty,
    /// every label ±1 and every feature vector of the same finite dimension.
    pub fn from_groups(names: Vec<String>, groups: Vec<Vec<DataPoint>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(GdroError::Dataset("no groups".into()));
        }
        if names.len() != groups.len() {
            return Err(GdroError::DimensionMismatch {
                expected: groups.len(),
                got: names.len(),
            });
        }
        let dim = groups
            .iter()
            .find_map(|g| g.first())
            .map(|p| p.features.len())
            .unwrap_or(0);
        if dim == 0 {
            return Err(GdroError::Dataset("feature dimension must be positive".into()));
        }
        let mut out = Vec::with_capacity(groups.len());
        for (name, points) in names.iter().zip(groups) {
            if points.is_empty() {
                return Err(GdroError::Dataset(format!("group `{name}` is empty")));
            }
            let mut data = GroupData {
                features: Vec::with_capacity(points.len() * dim),
                labels: Vec::with_capacity(points.len()),
            };
            for p in points {
                if p.features.len() != dim {
                    return Err(GdroError::DimensionMismatch {
                        expected: dim,
                        got: p.features.len(),
                    });
                }
                if p.features.iter().any(|v| !v.is_finite()) {
                    return Err(GdroError::NonFinite("features"));
                }
                if p.label != 1.0 && p.label != -1.0 {
                    return Err(GdroError::Dataset(format!(
                        "label must be +1 or -1, got {}",
                        p.label
                    )));
                }
                data.features.extend_from_slice(&p.features);
                data.labels.push(p.label);
            }
            out.push(data);
        }
        Ok(Self {
            dim,
            names,
            groups: out,
        })
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn group_names(&self) -> &[String] {
        &self.names
    }

    pub fn group_size(&self, group: usize) -> usize {
        self.groups[group].labels.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.labels.len()).collect()
    }

    pub fn total_points(&self) -> usize {
        self.groups.iter().map(|g| g.labels.len()).sum()
    }

    /// Features and label of point `index` of `group`.
    #[inline]
    pub fn point(&self, group: usize, index: usize) -> (&[f64], f64) {
        let g = &self.groups[group];
        (&g.features[index * self.dim..(index + 1) * self.dim], g.labels[index])
    }

    pub fn points(&self, group: usize) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        let g = &self.groups[group];
        g.features.chunks_exact(self.dim).zip(g.labels.iter().copied())
    }

    pub fn max_feature_norm(&self) -> f64 {
        (0..self.num_groups())
            .flat_map(|g| self.points(g).map(|(a, _)| norm2(a)))
            .fold(0.0, f64::max)
    }

    /// Feeds a canonical little-endian byte encoding of the dataset to `sink`
    /// (for content fingerprints).
    pub fn visit_canonical_bytes(&self, mut sink: impl FnMut(&[u8])) {
        sink(&(self.num_groups() as u64).to_le_bytes());
        sink(&(self.dim as u64).to_le_bytes());
        for (name, g) in self.names.iter().zip(&self.groups) {
            sink(&(name.len() as u64).to_le_bytes());
            sink(name.as_bytes());
            sink(&(g.labels.len() as u64).to_le_bytes());
            for (row, label) in g.features.chunks_exact(self.dim).zip(&g.labels) {
                for v in row {
                    sink(&v.to_bits().to_le_bytes());
                }
                sink(&label.to_bits().to_le_bytes());
            }
        }
    }

    /// Writes the dataset as CSV with columns `group,label,x0,…`. Reading it
    /// back with [`CsvSchema::for_exported`] reproduces the dataset up to the
    /// decimal round trip.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
        let mut header = vec!["group".to_string(), "label".to_string()];
        header.extend((0..self.dim).map(|j| format!("x{j}")));
        w.write_record(&header).map_err(csv_io)?;
        for (g, name) in self.names.iter().enumerate() {
            for (a, b) in self.points(g) {
                let mut rec = vec![name.clone(), format!("{b}")];
                rec.extend(a.iter().map(|v| format!("{v:?}")));
                w.write_record(&rec).map_err(csv_io)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> GdroError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => GdroError::Io(io),
        other => GdroError::Dataset(format!("{other:?}")),
    }
}

/// Synthetic instance: group `i` has a direction `θ*_i` uniform on the unit
/// sphere, features `a ∼ N(0, I_n)` and labels `sign(aᵀθ*_i)`, each flipped
/// independently with probability `flip_prob`.
pub fn gen_synthetic(
    groups: usize,
    dim: usize,
    points_per_group: usize,
    flip_prob: f64,
    seed: u64,
) -> Result<GroupedDataset> {
    if groups == 0 || dim == 0 || points_per_group == 0 {
        return Err(GdroError::InvalidArgument(
            "groups, dimension and points per group must be positive".into(),
        ));
    }
    if !(0.0..0.5).contains(&flip_prob) {
        return Err(GdroError::InvalidArgument(format!(
            "flip probability must lie in [0, 0.5), got {flip_prob}"
        )));
    }
    let mut names = Vec::with_capacity(groups);
    let mut data = Vec::with_capacity(groups);
    for i in 0..groups {
        let mut rng = stream_rng(seed, group_stream(i));
        let direction = unit_vector(&mut rng, dim);
        let mut points = Vec::with_capacity(points_per_group);
        for _ in 0..points_per_group {
            let features: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
            let margin: f64 = features.iter().zip(&direction).map(|(a, t)| a * t).sum();
            let mut label = if margin >= 0.0 { 1.0 } else { -1.0 };
            if rng.gen::<f64>() < flip_prob {
                label = -label;
            }
            points.push(DataPoint { features, label });
        }
        names.push(format!("g{i}"));
        data.push(points);
    }
    GroupedDataset::from_groups(names, data)
}

/// The direction used for synthetic group `group` (for tests and reports).
pub fn synthetic_direction(dim: usize, group: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, group_stream(group));
    unit_vector(&mut rng, dim)
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        let n = norm2(&v);
        if n > 1e-300 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `batch_size` i.i.d. uniform draws with replacement from `group`.
pub fn oracle_sample<R: Rng + ?Sized>(
    dataset: &GroupedDataset,
    group: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<DataPoint>> {
    if group >= dataset.num_groups() {
        return Err(GdroError::GroupOutOfRange {
            index: group,
            groups: dataset.num_groups(),
        });
    }
    let size = dataset.group_size(group);
    Ok((0..batch_size)
        .map(|_| {
            let (a, b) = dataset.point(group, uniform_index(rng, size));
            DataPoint {
                features: a.to_vec(),
                label: b,
            }
        })
        .collect())
}

/// Column roles for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub label_column: String,
    /// Label value mapped to `+1`; every other value maps to `−1`. Without it
    /// labels must be numeric `1` / `0` / `−1`.
    #[serde(default)]
    pub positive_label: Option<String>,
    pub group_columns: Vec<String>,
    /// Optional per-column value renaming applied before partitioning; the
    /// key `*` is the fallback for unlisted values.
    #[serde(default)]
    pub group_aliases: BTreeMap<String, BTreeMap<String, String>>,
    /// Numeric features, used as is (optionally standardized).
    #[serde(default)]
    pub feature_columns: Vec<String>,
    /// Categorical features, expanded to indicators in sorted value order.
    #[serde(default)]
    pub categorical_columns: Vec<String>,
    /// Standardize numeric features to zero mean and unit variance.
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_true() -> bool {
    true
}

impl CsvSchema {
    /// Schema reading files produced by [`GroupedDataset::write_csv`].
    pub fn for_exported(dim: usize) -> Self {
        Self {
            label_column: "label".into(),
            positive_label: None,
            group_columns: vec!["group".into()],
            group_aliases: BTreeMap::new(),
            feature_columns: (0..dim).map(|j| format!("x{j}")).collect(),
            categorical_columns: Vec::new(),
            standardize: false,
        }
    }
}

/// Summary of a CSV ingestion, for manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub feature_names: Vec<String>,
    /// `(mean, std)` applied to each numeric column, when standardized.
    pub standardization: Vec<(String, f64, f64)>,
}

/// Loads a CSV file (header row, comma separated, quoting allowed).
///
/// Rows are partitioned by the cross product of the (aliased) values observed
/// in `group_columns`; groups are ordered lexicographically by their value
/// tuples. A combination with no rows is an error.
pub fn load_csv_dataset(path: &Path, schema: &CsvSchema) -> Result<(GroupedDataset, IngestReport)> {
    let reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_io)?;
    load_csv_reader(reader, schema)
}

/// [`load_csv_dataset`] over an in-memory buffer.
pub fn load_csv_bytes(bytes: &[u8], schema: &CsvSchema) -> Result<(GroupedDataset, IngestReport)> {
    let reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    load_csv_reader(reader, schema)
}

fn load_csv_reader<R: std::io::Read>(
    mut reader: csv::Reader<R>,
    schema: &CsvSchema,
) -> Result<(GroupedDataset, IngestReport)> {
    if schema.group_columns.is_empty() {
        return Err(GdroError::Dataset("at least one group column is required".into()));
    }
    if schema.feature_columns.is_empty() && schema.categorical_columns.is_empty() {
        return Err(GdroError::Dataset("no feature columns given".into()));
    }
    let headers = reader.headers().map_err(csv_io)?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| GdroError::Dataset(format!("missing column `{name}`")))
    };
    let label_col = column(&schema.label_column)?;
    let group_cols: Vec<usize> = schema.group_columns.iter().map(|c| column(c)).collect::<Result<_>>()?;
    let num_cols: Vec<usize> = schema.feature_columns.iter().map(|c| column(c)).collect::<Result<_>>()?;
    let cat_cols: Vec<usize> = schema
        .categorical_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<_>>()?;

    let mut keys: Vec<Vec<String>> = Vec::new();
    let mut labels = Vec::new();
    let mut numeric: Vec<Vec<f64>> = Vec::new();
    let mut categorical: Vec<Vec<String>> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        // header is line 1
        let row = k + 2;
        let rec = rec.map_err(|e| GdroError::Csv {
            row,
            message: e.to_string(),
        })?;
        let field = |c: usize| -> Result<&str> {
            rec.get(c).ok_or_else(|| GdroError::Csv {
                row,
                message: format!("missing field for column `{}`", &headers[c]),
            })
        };
        let raw_label = field(label_col)?;
        let label = match &schema.positive_label {
            Some(pos) => {
                if raw_label == pos {
                    1.0
                } else {
                    -1.0
                }
            }
            None => match raw_label.parse::<f64>() {
                Ok(v) if v == 1.0 => 1.0,
                Ok(v) if v == 0.0 || v == -1.0 => -1.0,
                _ => {
                    return Err(GdroError::Csv {
                        row,
                        message: format!("label `{raw_label}` is not one of 1, 0, -1"),
                    })
                }
            },
        };
        let mut key = Vec::with_capacity(group_cols.len());
        for (&c, name) in group_cols.iter().zip(&schema.group_columns) {
            let v = field(c)?;
            let aliased = match schema.group_aliases.get(name) {
                Some(map) => map
                    .get(v)
                    .or_else(|| map.get("*"))
                    .cloned()
                    .unwrap_or_else(|| v.to_string()),
                None => v.to_string(),
            };
            key.push(aliased);
        }
        let mut nums = Vec::with_capacity(num_cols.len());
        for &c in &num_cols {
            let v = field(c)?;
            let x: f64 = v.parse().map_err(|_| GdroError::Csv {
                row,
                message: format!("column `{}`: `{v}` is not numeric", &headers[c]),
            })?;
            if !x.is_finite() {
                return Err(GdroError::Csv {
                    row,
                    message: format!("column `{}` is not finite", &headers[c]),
                });
            }
            nums.push(x);
        }
        let cats = cat_cols
            .iter()
            .map(|&c| field(c).map(str::to_string))
            .collect::<Result<Vec<_>>>()?;
        keys.push(key);
        labels.push(label);
        numeric.push(nums);
        categorical.push(cats);
    }
    let rows = labels.len();
    if rows == 0 {
        return Err(GdroError::Dataset("no data rows".into()));
    }

    let mut feature_names: Vec<String> = schema.feature_columns.clone();
    let mut standardization = Vec::new();
    let mut shift = vec![0.0; num_cols.len()];
    let mut scale = vec![1.0; num_cols.len()];
    if schema.standardize {
        for (j, name) in schema.feature_columns.iter().enumerate() {
            let mean = numeric.iter().map(|r| r[j]).sum::<f64>() / rows as f64;
            let var = numeric.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / rows as f64;
            let sd = var.sqrt();
            shift[j] = mean;
            scale[j] = if sd > 0.0 { sd } else { 1.0 };
            standardization.push((name.clone(), mean, scale[j]));
        }
    }
    let levels: Vec<Vec<String>> = (0..cat_cols.len())
        .map(|j| {
            categorical
                .iter()
                .map(|r| r[j].clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        })
        .collect();
    for (name, lv) in schema.categorical_columns.iter().zip(&levels) {
        feature_names.extend(lv.iter().map(|v| format!("{name}={v}")));
    }

    let per_column: Vec<BTreeSet<String>> = (0..group_cols.len())
        .map(|j| keys.iter().map(|k| k[j].clone()).collect())
        .collect();
    let mut combos: Vec<Vec<String>> = vec![Vec::new()];
    for values in &per_column {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut c = prefix.clone();
                    c.push(v.clone());
                    c
                })
            })
            .collect();
    }
    let index: BTreeMap<&Vec<String>, usize> = combos.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut groups: Vec<Vec<DataPoint>> = vec![Vec::new(); combos.len()];
    for r in 0..rows {
        let mut features = Vec::with_capacity(feature_names.len());
        for j in 0..num_cols.len() {
            features.push((numeric[r][j] - shift[j]) / scale[j]);
        }
        for (j, lv) in levels.iter().enumerate() {
            for v in lv {
                features.push(if *v == categorical[r][j] { 1.0 } else { 0.0 });
            }
        }
        groups[index[&keys[r]]].push(DataPoint {
            features,
            label: labels[r],
        });
    }
    let names: Vec<String> = combos
        .iter()
        .map(|c| {
            schema
                .group_columns
                .iter()
                .zip(c)
                .map(|(col, v)| format!("{col}={v}"))
                .collect::<Vec<_>>()
                .join("|")
        })
        .collect();
    if let Some(empty) = groups.iter().position(Vec::is_empty) {
        return Err(GdroError::Dataset(format!("group `{}` has no rows", names[empty])));
    }
    let dataset = GroupedDataset::from_groups(names, groups)?;
    Ok((
        dataset,
        IngestReport {
            rows,
            feature_names,
            standardization,
        },
    ))
}
