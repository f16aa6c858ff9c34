//! Run configuration: INI file parsing, validation and the resolved echo.
//!
//! ```ini
//! [data]
//! path = housing.csv
//! target = MEDV
//! task = regression
//! categorical = CHAS, RAD
//!
//! [split]
//! train = 0.7
//! valid = 0.1
//! test = 0.2
//! seed = 0
//!
//! [train]
//! learning_rate = 0.1
//! early_stopping_patience = 100
//!
//! [bins]
//! n_bins_degree0 = 256
//! n_bins_higher = 20
//!
//! [constraints]
//! default: S=-1 D=3
//! feature.LSTAT: monotone=-1 curvature=+1 S=2 D=3 outputs=[0]
//!
//! [output]
//! dir = out
//! ```
//!
//! Relative paths are taken from the config file's directory. Comments go
//! on their own lines, starting with `;` or `#`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ini::{EscapePolicy, Ini, WriteOption};
use polygam::{ConstraintSpec, Dataset, FeatureConstraint, FeatureKind, SplitScheme, TaskKind, TrainConfig};

/// Shape settings for one feature as written in the config.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintEntry {
    pub smoothness: Option<i8>,
    pub max_degree: Option<u8>,
    pub monotone: Option<i8>,
    pub curvature: Option<i8>,
    /// Zero-based outputs the feature may enter; `None` means all.
    pub outputs: Option<Vec<usize>>,
}

impl ConstraintEntry {
    fn apply(&self, base: FeatureConstraint) -> FeatureConstraint {
        FeatureConstraint {
            smoothness: self.smoothness.unwrap_or(base.smoothness),
            max_degree: self.max_degree.unwrap_or(base.max_degree),
            monotone: self.monotone.unwrap_or(base.monotone),
            curvature: self.curvature.unwrap_or(base.curvature),
        }
    }

    fn parse(text: &str) -> Result<Self, String> {
        let mut e = ConstraintEntry::default();
        for token in text.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| format!("`{token}` is not key=value"))?;
            let int = |v: &str| {
                v.trim_start_matches('+')
                    .parse::<i64>()
                    .map_err(|_| format!("{key}: `{v}` is not an integer"))
            };
            let small = |v: i64| i8::try_from(v).map_err(|_| format!("{key}: {v} out of range"));
            match key {
                "S" => e.smoothness = Some(small(int(value)?)?),
                "D" => e.max_degree = Some(u8::try_from(int(value)?).map_err(|_| format!("D: `{value}` out of range"))?),
                "monotone" => e.monotone = Some(small(int(value)?)?),
                "curvature" => e.curvature = Some(small(int(value)?)?),
                "outputs" => {
                    let inner = value
                        .strip_prefix('[')
                        .and_then(|v| v.strip_suffix(']'))
                        .ok_or_else(|| format!("outputs: `{value}` must look like [0,2]"))?;
                    let list = inner
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| s.trim().parse::<usize>().map_err(|_| format!("outputs: `{s}` is not an index")))
                        .collect::<Result<Vec<_>, _>>()?;
                    e.outputs = Some(list);
                }
                other => return Err(format!("unknown constraint key `{other}`")),
            }
        }
        Ok(e)
    }

    fn render(&self) -> String {
        let mut parts = Vec::new();
        if let Some(v) = self.monotone {
            parts.push(format!("monotone={v:+}").replace("+0", "0"));
        }
        if let Some(v) = self.curvature {
            parts.push(format!("curvature={v:+}").replace("+0", "0"));
        }
        if let Some(v) = self.smoothness {
            parts.push(format!("S={v}"));
        }
        if let Some(v) = self.max_degree {
            parts.push(format!("D={v}"));
        }
        if let Some(o) = &self.outputs {
            let list: Vec<String> = o.iter().map(usize::to_string).collect();
            parts.push(format!("outputs=[{}]", list.join(",")));
        }
        parts.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_path: PathBuf,
    pub target: String,
    pub task: TaskKind,
    pub categorical: Vec<String>,
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub train: TrainConfig,
    pub scheme: SplitScheme,
    pub default_constraint: ConstraintEntry,
    /// Per-feature entries, in file order.
    pub constraints: Vec<(String, ConstraintEntry)>,
    pub output_dir: PathBuf,
}

fn task_name(t: TaskKind) -> &'static str {
    match t {
        TaskKind::Regression => "regression",
        TaskKind::Binary => "binary",
        TaskKind::Multiclass => "multiclass",
    }
}

/// Collects problems instead of stopping at the first one.
struct Reader<'a> {
    values: BTreeMap<(String, String), String>,
    problems: &'a mut Vec<String>,
}

impl Reader<'_> {
    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.values.remove(&(section.to_string(), key.to_string()))
    }

    fn parse<T: std::str::FromStr>(&mut self, section: &str, key: &str, default: T) -> T {
        match self.take(section, key) {
            None => default,
            Some(v) => v.parse().unwrap_or_else(|_| {
                self.problems
                    .push(format!("[{section}] {key}: cannot parse `{v}`"));
                default
            }),
        }
    }
}

impl RunConfig {
    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, Vec<String>> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| vec![format!("syntax error: {e}")])?;
        let mut problems = Vec::new();
        let mut values = BTreeMap::new();
        let mut constraint_lines = Vec::new();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("").to_string();
            for (key, value) in props.iter() {
                if section == "constraints" {
                    constraint_lines.push((key.to_string(), value.to_string()));
                } else {
                    values.insert((section.clone(), key.to_string()), value.to_string());
                }
            }
        }
        let mut r = Reader {
            values,
            problems: &mut problems,
        };

        let data_path = match r.take("data", "path") {
            Some(p) => base.join(p),
            None => {
                r.problems.push("[data] path is required".into());
                PathBuf::new()
            }
        };
        let target = r.take("data", "target").unwrap_or_else(|| {
            r.problems.push("[data] target is required".into());
            String::new()
        });
        let task = match r.take("data", "task").as_deref() {
            None | Some("regression") => TaskKind::Regression,
            Some("binary") => TaskKind::Binary,
            Some("multiclass") => TaskKind::Multiclass,
            Some(other) => {
                r.problems.push(format!(
                    "[data] task: `{other}` is not regression, binary or multiclass"
                ));
                TaskKind::Regression
            }
        };
        let categorical = r
            .take("data", "categorical")
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default();

        let d = TrainConfig::default();
        let test_fraction = r.parse("split", "test", 0.2);
        let valid_default = d.validation_fraction * (1.0 - test_fraction);
        let valid_fraction = r.parse("split", "valid", valid_default);
        let train_fraction = r.parse("split", "train", 1.0 - valid_fraction - test_fraction);
        let seed = r.parse("split", "seed", d.seed);
        for (name, v) in [("train", train_fraction), ("valid", valid_fraction), ("test", test_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                r.problems.push(format!("[split] {name} = {v} outside [0, 1]"));
            }
        }
        if (train_fraction + valid_fraction + test_fraction - 1.0).abs() > 1e-9 {
            r.problems.push(format!(
                "[split] fractions sum to {}, not 1",
                train_fraction + valid_fraction + test_fraction
            ));
        }

        let patience: usize = r.parse("train", "early_stopping_patience", d.early_stopping_patience.unwrap_or(0));
        let train = TrainConfig {
            learning_rate: r.parse("train", "learning_rate", d.learning_rate),
            l1: r.parse("train", "l1", d.l1),
            l2: r.parse("train", "l2", d.l2),
            min_data_in_leaf: r.parse("train", "min_data_in_leaf", d.min_data_in_leaf),
            max_iterations: r.parse("train", "max_iterations", d.max_iterations),
            early_stopping_patience: (patience > 0).then_some(patience),
            validation_fraction: if train_fraction + valid_fraction > 0.0 {
                valid_fraction / (train_fraction + valid_fraction)
            } else {
                0.0
            },
            seed,
            snapshot_every: r.parse("train", "snapshot_every", d.snapshot_every),
        };
        if let Err(e) = train.validate() {
            r.problems.push(e.to_string());
        }
        if train.early_stopping_patience.is_some() && valid_fraction == 0.0 {
            r.problems
                .push("[train] early stopping needs [split] valid > 0 (set early_stopping_patience = 0 to disable)".into());
        }
        let ds = SplitScheme::default();
        let scheme = SplitScheme {
            n_bins_degree0: r.parse("bins", "n_bins_degree0", ds.n_bins_degree0),
            n_bins_higher: r.parse("bins", "n_bins_higher", ds.n_bins_higher),
        };
        if let Err(e) = scheme.validate() {
            r.problems.push(e.to_string());
        }
        let output_dir = base.join(r.take("output", "dir").unwrap_or_else(|| "out".into()));

        let leftover: Vec<String> = r.values.keys().map(|(s, k)| format!("[{s}] {k}")).collect();
        for key in leftover {
            problems.push(format!("unknown setting {key}"));
        }

        let mut default_constraint = ConstraintEntry {
            smoothness: Some(-1),
            max_degree: Some(3),
            monotone: Some(0),
            curvature: Some(0),
            outputs: None,
        };
        let mut constraints = Vec::new();
        for (key, value) in constraint_lines {
            let parsed = ConstraintEntry::parse(&value);
            match (key.as_str(), parsed) {
                ("default", Ok(e)) => {
                    if e.outputs.is_some() {
                        problems.push("[constraints] default: outputs= belongs on feature lines".into());
                    }
                    default_constraint = ConstraintEntry {
                        smoothness: e.smoothness.or(default_constraint.smoothness),
                        max_degree: e.max_degree.or(default_constraint.max_degree),
                        monotone: e.monotone.or(default_constraint.monotone),
                        curvature: e.curvature.or(default_constraint.curvature),
                        outputs: None,
                    };
                }
                (k, Ok(e)) => match k.strip_prefix("feature.") {
                    Some(name) if !name.is_empty() => {
                        if constraints.iter().any(|(n, _)| n == name) {
                            problems.push(format!("[constraints] feature `{name}` listed twice"));
                        }
                        constraints.push((name.to_string(), e));
                    }
                    _ => problems.push(format!("[constraints] `{k}`: expected `default` or `feature.<name>`")),
                },
                (k, Err(msg)) => problems.push(format!("[constraints] {k}: {msg}")),
            }
        }

        if problems.is_empty() {
            Ok(Self {
                data_path,
                target,
                task,
                categorical,
                train_fraction,
                valid_fraction,
                test_fraction,
                seed,
                train,
                scheme,
                default_constraint,
                constraints,
                output_dir,
            })
        } else {
            Err(problems)
        }
    }

    /// Builds the constraint spec for a loaded dataset, reporting every
    /// problem at once.
    pub fn constraint_spec(&self, data: &Dataset) -> Result<ConstraintSpec, Vec<String>> {
        let n_outputs = data.task().n_outputs();
        let base = self.default_constraint.apply(FeatureConstraint::free(3));
        let mut spec = ConstraintSpec::uniform(data.feature_kinds(), n_outputs, base);
        let mut problems = Vec::new();
        for (name, entry) in &self.constraints {
            let Some(k) = data.feature_index(name) else {
                problems.push(format!("[constraints] unknown feature `{name}`"));
                continue;
            };
            let start = if data.feature_kinds()[k] == FeatureKind::Categorical {
                spec.features[k]
            } else {
                base
            };
            spec.features[k] = entry.apply(start);
            if let Some(outputs) = &entry.outputs {
                if let Some(&bad) = outputs.iter().find(|&&i| i >= n_outputs) {
                    problems.push(format!(
                        "[constraints] feature `{name}`: output {bad} does not exist (task has {n_outputs})"
                    ));
                    continue;
                }
                for (i, row) in spec.allow_mask.iter_mut().enumerate() {
                    row[k] = outputs.contains(&i);
                }
            }
        }
        if let Err(e) = spec.validate(data.feature_names(), data.feature_kinds(), n_outputs) {
            problems.push(e.to_string());
        }
        for i in 0..n_outputs {
            if spec.allow_mask[i].iter().all(|&a| !a) {
                problems.push(format!("output {i} has no allowed features"));
            }
        }
        if problems.is_empty() {
            Ok(spec)
        } else {
            Err(problems)
        }
    }

    /// The config with every default filled in. Paths are written as given
    /// to this process, so the echo reloads from any directory.
    pub fn to_ini(&self) -> String {
        let mut ini = Ini::new();
        let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf()).display().to_string();
        ini.with_section(Some("data"))
            .set("path", abs(&self.data_path))
            .set("target", &self.target)
            .set("task", task_name(self.task))
            .set("categorical", self.categorical.join(", "));
        ini.with_section(Some("split"))
            .set("train", self.train_fraction.to_string())
            .set("valid", self.valid_fraction.to_string())
            .set("test", self.test_fraction.to_string())
            .set("seed", self.seed.to_string());
        let t = &self.train;
        ini.with_section(Some("train"))
            .set("learning_rate", t.learning_rate.to_string())
            .set("l1", t.l1.to_string())
            .set("l2", t.l2.to_string())
            .set("min_data_in_leaf", t.min_data_in_leaf.to_string())
            .set("max_iterations", t.max_iterations.to_string())
            .set("early_stopping_patience", t.early_stopping_patience.unwrap_or(0).to_string())
            .set("snapshot_every", t.snapshot_every.to_string());
        ini.with_section(Some("bins"))
            .set("n_bins_degree0", self.scheme.n_bins_degree0.to_string())
            .set("n_bins_higher", self.scheme.n_bins_higher.to_string());
        {
            let mut c = ini.with_section(Some("constraints"));
            c.set("default", self.default_constraint.render());
            for (name, e) in &self.constraints {
                c.set(format!("feature.{name}"), e.render());
            }
        }
        ini.with_section(Some("output")).set("dir", abs(&self.output_dir));
        let mut buf = Vec::new();
        let opt = WriteOption {
            escape_policy: EscapePolicy::Nothing,
            kv_separator: " = ",
            ..WriteOption::default()
        };
        ini.write_to_opt(&mut buf, opt).expect("writing to memory");
        String::from_utf8(buf).expect("config text is UTF-8")
    }
}
