//! Tabular datasets: CSV ingestion, train/test splits, standardization and
//! the dataset registry.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::config::{parse_list, Ini};
use crate::error::{io_err, usage, Error, Result};
use crate::lens::{Matrix, Task};
use crate::stochastics::Rng;

/// Categoricals with at most this many levels are one-hot encoded.
pub const ONE_HOT_MAX_LEVELS: usize = 16;

const MISSING: &[&str] = &["", "?", "NA", "na", "N/A", "NaN", "nan", "null", "NULL"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Regression,
    Classification,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "regression" => Ok(Self::Regression),
            "classification" => Ok(Self::Classification),
            other => Err(usage(format!("unknown task '{other}'"))),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Regression => "regression",
            TaskKind::Classification => "classification",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub target_column: String,
    pub task: TaskKind,
    pub categorical_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    /// Regression values, or class indices stored as `f64`.
    pub targets: Vec<f64>,
    pub task: Task,
    pub feature_names: Vec<String>,
    /// Original label of each class index (classification only).
    pub class_labels: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            task: self.task,
            feature_names: self.feature_names.clone(),
            class_labels: self.class_labels.clone(),
        }
    }

    pub fn classes(&self) -> Vec<usize> {
        self.targets.iter().map(|&t| t as usize).collect()
    }
}

fn ingest(path: &Path, message: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Sorted distinct values, numerically when every value is a number.
fn sorted_levels<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    let set: BTreeSet<&str> = values.collect();
    let mut levels: Vec<String> = set.into_iter().map(str::to_string).collect();
    let numeric: Option<Vec<f64>> = levels.iter().map(|v| v.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut paired: Vec<(f64, String)> = nums.into_iter().zip(levels).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        levels = paired.into_iter().map(|(_, s)| s).collect();
    }
    levels
}

pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    if !path.is_file() {
        return Err(ingest(path, "file not found"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ingest(path, e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| ingest(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let target_idx = headers
        .iter()
        .position(|h| *h == schema.target_column)
        .ok_or_else(|| ingest(path, format!("target column '{}' not in header", schema.target_column)))?;
    for c in &schema.categorical_columns {
        if !headers.contains(c) {
            return Err(ingest(path, format!("categorical column '{c}' not in header")));
        }
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut dropped = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ingest(path, format!("row {}: {e}", i + 2)))?;
        if record.iter().any(|f| MISSING.contains(&f)) {
            dropped += 1;
            continue;
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    if dropped > 0 {
        log::info!("{}: dropped {dropped} rows with missing values", path.display());
    }
    if rows.is_empty() {
        return Err(ingest(path, "no complete rows"));
    }

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut feature_names = Vec::new();
    for (c, name) in headers.iter().enumerate() {
        if c == target_idx {
            continue;
        }
        if schema.categorical_columns.contains(name) {
            let levels = sorted_levels(rows.iter().map(|r| r[c].as_str()));
            let code = |v: &str| levels.iter().position(|l| l == v).expect("level seen");
            if levels.len() <= ONE_HOT_MAX_LEVELS {
                for level in &levels {
                    columns.push(rows.iter().map(|r| f64::from(u8::from(r[c] == *level))).collect());
                    feature_names.push(format!("{name}={level}"));
                }
            } else {
                columns.push(rows.iter().map(|r| code(&r[c]) as f64).collect());
                feature_names.push(name.clone());
            }
        } else {
            let col = rows
                .iter()
                .enumerate()
                .map(|(i, r)| match r[c].parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(ingest(path, format!("row {}, column '{name}': '{}' is not a finite number", i + 2, r[c]))),
                })
                .collect::<Result<Vec<f64>>>()?;
            columns.push(col);
            feature_names.push(name.clone());
        }
    }

    let (targets, task, class_labels) = match schema.task {
        TaskKind::Regression => {
            let t = rows
                .iter()
                .enumerate()
                .map(|(i, r)| match r[target_idx].parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(ingest(path, format!("row {}, target: '{}' is not a finite number", i + 2, r[target_idx]))),
                })
                .collect::<Result<Vec<f64>>>()?;
            (t, Task::Regression, Vec::new())
        }
        TaskKind::Classification => {
            let labels = sorted_levels(rows.iter().map(|r| r[target_idx].as_str()));
            if labels.len() < 2 {
                return Err(ingest(path, "classification target has fewer than two labels"));
            }
            let t = rows
                .iter()
                .map(|r| labels.iter().position(|l| *l == r[target_idx]).expect("label seen") as f64)
                .collect();
            let classes = labels.len();
            (t, Task::Classification { classes }, labels)
        }
    };

    let n = rows.len();
    let d = columns.len();
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        data.extend(columns.iter().map(|col| col[i]));
    }
    Ok(Dataset {
        features: Matrix::from_vec(n, d, data)?,
        targets,
        task,
        feature_names,
        class_labels,
    })
}

/// Shuffled train/test split, stratified by class for classification.
pub fn split(dataset: &Dataset, fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(usage(format!("split fraction {fraction} must lie in (0, 1)")));
    }
    let groups: Vec<Vec<usize>> = match dataset.task {
        Task::Regression => vec![(0..dataset.len()).collect()],
        Task::Classification { classes } => {
            let mut g = vec![Vec::new(); classes];
            for (i, &t) in dataset.targets.iter().enumerate() {
                g[t as usize].push(i);
            }
            g
        }
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut group in groups {
        rng.shuffle(&mut group);
        let n_train = (fraction * group.len() as f64).round() as usize;
        test.extend_from_slice(&group[n_train..]);
        group.truncate(n_train);
        train.extend(group);
    }
    if train.is_empty() || test.is_empty() {
        return Err(usage(format!(
            "split of {} rows at {fraction} leaves an empty side",
            dataset.len()
        )));
    }
    rng.shuffle(&mut train);
    rng.shuffle(&mut test);
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn standardize_fit(train: &Dataset) -> Result<Standardizer> {
    if train.is_empty() {
        return Err(usage("cannot fit a standardizer on an empty dataset"));
    }
    let f = &train.features;
    let (means, stds) = (0..f.cols())
        .map(|c| {
            let (m, s) = mean_std((0..f.rows()).map(|r| f.get(r, c)));
            (m, if s > 0.0 { s } else { 1.0 })
        })
        .unzip();
    Ok(Standardizer { means, stds })
}

pub fn standardize_apply(std: &Standardizer, dataset: &Dataset) -> Result<Dataset> {
    if dataset.num_features() != std.means.len() {
        return Err(usage(format!(
            "standardizer fitted on {} features, dataset has {}",
            std.means.len(),
            dataset.num_features()
        )));
    }
    let mut out = dataset.clone();
    for r in 0..out.features.rows() {
        for ((x, m), s) in out.features.row_mut(r).iter_mut().zip(&std.means).zip(&std.stds) {
            *x = (*x - m) / s;
        }
    }
    Ok(out)
}

/// Population standard deviation of the targets.
pub fn target_sigma(train: &Dataset) -> Result<f64> {
    if train.is_empty() {
        return Err(usage("target sigma of an empty dataset"));
    }
    Ok(mean_std(train.targets.iter().copied()).1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub name: String,
    pub path: PathBuf,
    pub schema: Schema,
}

/// Named datasets, one `[name]` section each:
///
/// ```text
/// [wine_quality]
/// path = wine_quality.csv
/// target = quality
/// task = regression
/// categorical = type
/// ```
///
/// Relative paths resolve against the registry file's directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    pub entries: Vec<RegistryEntry>,
}

const REGISTRY_KEYS: &[&str] = &["path", "target", "task", "categorical"];

impl Registry {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let ini = Ini::parse(text)?;
        let mut entries = Vec::new();
        for s in &ini.sections {
            if s.name.is_empty() {
                return Err(usage("registry entries must sit under a [dataset] section"));
            }
            for e in &s.entries {
                if !REGISTRY_KEYS.contains(&e.key.as_str()) {
                    return Err(usage(format!("unknown registry key '{}' in [{}]", e.key, s.name)));
                }
            }
            let need = |k: &str| {
                s.get(k)
                    .ok_or_else(|| usage(format!("registry entry [{}] lacks '{k}'", s.name)))
            };
            let path = PathBuf::from(need("path")?);
            entries.push(RegistryEntry {
                name: s.name.clone(),
                path: if path.is_absolute() { path } else { base_dir.join(path) },
                schema: Schema {
                    target_column: need("target")?.to_string(),
                    task: need("task")?.parse()?,
                    categorical_columns: s
                        .get("categorical")
                        .map(|v| parse_list("categorical", v))
                        .transpose()?
                        .unwrap_or_default(),
                },
            });
        }
        Ok(Self { entries })
    }

    /// A missing file is an empty registry.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn get(&self, name: &str) -> Option<&RegistryEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn resolve(&self, name: &str) -> Result<&RegistryEntry> {
        let entry = self
            .get(name)
            .ok_or_else(|| usage(format!("dataset '{name}' is not registered")))?;
        if !entry.path.is_file() {
            return Err(ingest(&entry.path, format!("file for dataset '{name}' not found")));
        }
        Ok(entry)
    }

    pub fn load_dataset(&self, name: &str) -> Result<Dataset> {
        let e = self.resolve(name)?;
        load_csv(&e.path, &e.schema)
    }

    pub fn add(&mut self, entry: RegistryEntry) -> Result<()> {
        if self.get(&entry.name).is_some() {
            return Err(usage(format!("dataset '{}' already registered", entry.name)));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut ini = Ini::default();
        for e in &self.entries {
            ini.set(&e.name, "path", e.path.display().to_string());
            ini.set(&e.name, "target", e.schema.target_column.clone());
            ini.set(&e.name, "task", e.schema.task.to_string());
            if !e.schema.categorical_columns.is_empty() {
                ini.set(&e.name, "categorical", e.schema.categorical_columns.join(","));
            }
        }
        ini.render()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(io_err(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    fn regression_schema(target: &str) -> Schema {
        Schema {
            target_column: target.into(),
            task: TaskKind::Regression,
            categorical_columns: vec![],
        }
    }

    fn toy(n: usize, task: Task) -> Dataset {
        let features = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let targets = match task {
            Task::Regression => (0..n).map(|i| i as f64 * 0.5).collect(),
            Task::Classification { classes } => (0..n).map(|i| (i % classes) as f64).collect(),
        };
        Dataset {
            features,
            targets,
            task,
            feature_names: vec!["x".into()],
            class_labels: vec![],
        }
    }

    #[test]
    fn loads_numeric_csv() {
        let f = csv_file("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let d = load_csv(f.path(), &regression_schema("y")).unwrap();
        assert_eq!(d.features.rows(), 3);
        assert_eq!(d.feature_names, vec!["a", "b"]);
        assert_eq!(d.targets, vec![3.0, 6.0, 9.0]);
        assert_eq!(d, load_csv(f.path(), &regression_schema("y")).unwrap());
    }

    #[test]
    fn classification_labels_become_indices() {
        let f = csv_file("x,label\n1,cat\n2,dog\n3,cat\n4,emu\n");
        let schema = Schema {
            target_column: "label".into(),
            task: TaskKind::Classification,
            categorical_columns: vec![],
        };
        let d = load_csv(f.path(), &schema).unwrap();
        assert_eq!(d.task, Task::Classification { classes: 3 });
        assert_eq!(d.targets, vec![0.0, 1.0, 0.0, 2.0]);
        assert_eq!(d.class_labels, vec!["cat", "dog", "emu"]);

        let f = csv_file("x,q\n1,10\n2,9\n3,3\n");
        let d = load_csv(f.path(), &Schema { target_column: "q".into(), ..schema }).unwrap();
        assert_eq!(d.class_labels, vec!["3", "9", "10"]);
    }

    #[test]
    fn categoricals_and_missing_rows() {
        let f = csv_file("color,size,y\nred,1,0.5\nblue,?,1.0\ngreen,3,1.5\nred,,2\nblue,5,2.5\n");
        let schema = Schema {
            target_column: "y".into(),
            task: TaskKind::Regression,
            categorical_columns: vec!["color".into()],
        };
        let d = load_csv(f.path(), &schema).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.feature_names, vec!["color=blue", "color=green", "color=red", "size"]);
        assert_eq!(d.features.row(0), &[0.0, 0.0, 1.0, 1.0]);

        let many: String = (0..20).map(|i| format!("v{i:02},{i}\n")).collect();
        let f = csv_file(&format!("c,y\n{many}"));
        let d = load_csv(f.path(), &Schema { categorical_columns: vec!["c".into()], ..regression_schema("y") }).unwrap();
        assert_eq!(d.num_features(), 1);
        assert_eq!(d.features.get(19, 0), 19.0);
    }

    #[test]
    fn ingestion_errors_carry_context() {
        let missing = load_csv(Path::new("/nonexistent/x.csv"), &regression_schema("y"));
        assert!(matches!(missing, Err(Error::Ingestion { .. })));

        let f = csv_file("a,y\n1,2\n");
        let err = load_csv(f.path(), &regression_schema("nope")).unwrap_err().to_string();
        assert!(err.contains("nope"), "{err}");

        let f = csv_file("a,y\n1,2\nabc,3\n");
        let err = load_csv(f.path(), &regression_schema("y")).unwrap_err().to_string();
        assert!(err.contains("row 3") && err.contains("'a'"), "{err}");

        let f = csv_file("a,y\n1,2\n1,2,3\n");
        assert!(load_csv(f.path(), &regression_schema("y")).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = toy(100, Task::Regression);
        let (tr, te) = split(&d, 0.8, &mut Rng::new(1)).unwrap();
        assert_eq!((tr.len(), te.len()), (80, 20));
        let (tr2, _) = split(&d, 0.8, &mut Rng::new(1)).unwrap();
        assert_eq!(tr, tr2);
        assert!(split(&d, 1.0, &mut Rng::new(1)).is_err());
        assert!(split(&toy(1, Task::Regression), 0.5, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn split_is_stratified() {
        let mut d = toy(103, Task::Classification { classes: 3 });
        d.targets[..40].iter_mut().for_each(|t| *t = 0.0);
        let (tr, te) = split(&d, 0.8, &mut Rng::new(5)).unwrap();
        for c in 0..3 {
            let total = d.targets.iter().filter(|&&t| t == c as f64).count() as f64;
            let in_train = tr.targets.iter().filter(|&&t| t == c as f64).count() as f64;
            assert!((in_train - 0.8 * total).abs() <= 1.0, "class {c}");
        }
        assert_eq!(tr.len() + te.len(), 103);
    }

    #[test]
    fn standardizer_examples() {
        let mut d = toy(2, Task::Regression);
        d.features = Matrix::from_rows(&[vec![0.0, 5.0], vec![2.0, 5.0]]).unwrap();
        let s = standardize_fit(&d).unwrap();
        assert_eq!(s.stds[1], 1.0);
        let t = standardize_apply(&s, &d).unwrap();
        assert_eq!(t.features.as_slice(), &[-1.0, 0.0, 1.0, 0.0]);

        let mut rng = Rng::new(3);
        let n = 257;
        let mut big = toy(n, Task::Regression);
        big.features = Matrix::from_vec(n, 3, (0..n * 3).map(|_| rng.unit() * 40.0 - 7.0).collect()).unwrap();
        let t = standardize_apply(&standardize_fit(&big).unwrap(), &big).unwrap();
        for c in 0..3 {
            let (m, sd) = mean_std((0..n).map(|r| t.features.get(r, c)));
            assert!(m.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
        }
        assert!(standardize_fit(&toy(0, Task::Regression)).is_err());
    }

    #[test]
    fn target_sigma_examples() {
        let mut d = toy(3, Task::Regression);
        d.targets = vec![4.0; 3];
        assert_eq!(target_sigma(&d).unwrap(), 0.0);
        d.targets = vec![1.0, 2.0, 3.0];
        assert!((target_sigma(&d).unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let mut d = toy(2, Task::Regression);
        d.targets = vec![0.0, 2.0];
        assert_eq!(target_sigma(&d).unwrap(), 1.0);
    }

    #[test]
    fn registry_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let text = "[wine]\npath = w.csv\ntarget = quality\ntask = regression\n\n[car]\npath = /abs/car.csv\ntarget = class\ntask = classification\ncategorical = a, b\n";
        let reg = Registry::parse(text, dir.path()).unwrap();
        assert_eq!(reg.get("wine").unwrap().path, dir.path().join("w.csv"));
        assert_eq!(reg.get("car").unwrap().schema.categorical_columns, vec!["a", "b"]);
        assert_eq!(Registry::parse(&reg.render(), dir.path()).unwrap(), reg);
        assert!(reg.resolve("wine").is_err());
        assert!(reg.resolve("unknown").is_err());
        assert!(Registry::parse("[x]\npath=a\ntarget=y\ntask=regression\ncolour=1\n", dir.path()).is_err());
        assert!(Registry::load(&dir.path().join("none.ini")).unwrap().entries.is_empty());
    }
}
