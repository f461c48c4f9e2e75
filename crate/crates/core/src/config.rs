//! `key = value` configuration files. Sections are key prefixes
//! (`gam.lambdas = 0.001, 0.01`); `#` starts a comment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::curves::read_curve_header;
use crate::error::{Error, Result};
use crate::gamfit::{default_lambdas, GamConfig};
use crate::metrics::Metric;
use crate::rng::{hash_str, mix64};
use crate::schedule::ScheduleParams;

/// Raw key/value pairs, keyed in sorted order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    pub entries: BTreeMap<String, String>,
    /// Directory that relative paths resolve against.
    pub base: PathBuf,
}

impl KeyValues {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut errs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() => {
                    if entries.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                        errs.push(format!("line {}: duplicate key `{}`", i + 1, k.trim()));
                    }
                }
                _ => errs.push(format!("line {}: expected `key = value`", i + 1)),
            }
        }
        if errs.is_empty() {
            Ok(Self {
                entries,
                base: base.to_path_buf(),
            })
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| self.base.join(v))
    }
}

/// Typed getters that collect every problem instead of stopping at the first.
struct Reader<'a> {
    kv: &'a KeyValues,
    errs: Vec<String>,
    used: Vec<&'static str>,
}

impl<'a> Reader<'a> {
    fn parse<T: std::str::FromStr>(&mut self, key: &'static str) -> Option<T> {
        self.used.push(key);
        let v = self.kv.get(key)?;
        match v.parse() {
            Ok(x) => Some(x),
            Err(_) => {
                self.errs.push(format!("`{key}`: cannot parse `{v}`"));
                None
            }
        }
    }

    fn or<T: std::str::FromStr>(&mut self, key: &'static str, default: T) -> T {
        self.parse(key).unwrap_or(default)
    }

    fn required<T: std::str::FromStr>(&mut self, key: &'static str) -> Option<T> {
        if self.kv.get(key).is_none() {
            self.used.push(key);
            self.errs.push(format!("missing required key `{key}`"));
            return None;
        }
        self.parse(key)
    }

    fn path(&mut self, key: &'static str) -> Option<PathBuf> {
        self.used.push(key);
        self.kv.path(key)
    }

    fn list<T: std::str::FromStr>(&mut self, key: &'static str) -> Option<Vec<T>> {
        self.used.push(key);
        let v = self.kv.get(key)?;
        let mut out = Vec::new();
        for part in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match part.parse() {
                Ok(x) => out.push(x),
                Err(_) => {
                    self.errs.push(format!("`{key}`: cannot parse list item `{part}`"));
                    return None;
                }
            }
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub schedule: ScheduleParams,
    pub vocab_size: usize,
    pub runs: Vec<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub sequence_length: usize,
    pub ngram_order: usize,
    pub features: Option<PathBuf>,
    pub pos: Option<PathBuf>,
    pub regress_pos: bool,
    pub targets: Vec<Metric>,
    pub gam: GamConfig,
    pub diversity_window: usize,
    pub diversity_top_k: usize,
    pub clip: bool,
    pub rise_threshold: f64,
}

impl PipelineConfig {
    /// Parse and check a configuration. All problems are reported together.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut r = Reader {
            kv,
            errs: Vec::new(),
            used: Vec::new(),
        };
        let seed = r.or("seed", 0u64);
        let out_dir = r.path("out_dir");
        if out_dir.is_none() {
            r.errs.push("missing required key `out_dir`".into());
        }
        let reference = ScheduleParams::reference();
        let s0 = r.or("schedule.s0", reference.s0);
        let s1 = r.or("schedule.s1", reference.s1);
        let t1 = r.or("schedule.t1", reference.t1);
        let schedule = ScheduleParams { s0, s1, t1 };
        if let Err(e) = schedule.validate() {
            r.errs.push(format!("schedule: {e}"));
        }
        let vocab_size = r.required::<usize>("vocab_size").unwrap_or(0);
        if kv.get("vocab_size").is_some() && vocab_size < 2 {
            r.errs.push("`vocab_size` must be at least 2".into());
        }
        let runs: Vec<PathBuf> = r
            .list::<String>("curves.runs")
            .unwrap_or_default()
            .into_iter()
            .map(|p| kv.base.join(p))
            .collect();
        if runs.len() < 2 {
            r.errs.push("`curves.runs` must list at least two curve files".into());
        }
        let corpus = r.path("corpus.path");
        let sequence_length = r.or("corpus.sequence_length", 0usize);
        let ngram_order = r.or("ngram.order", 5usize);
        if !(1..=5).contains(&ngram_order) {
            r.errs.push("`ngram.order` must lie in 1..=5".into());
        }
        let features = r.path("features.path");
        let pos = r.path("pos.path");
        let regress_pos = r.or("regress.pos", false);
        let targets = match r.list::<String>("regress.targets") {
            Some(v) => v
                .iter()
                .filter_map(|t| match t.parse::<Metric>() {
                    Ok(m) => Some(m),
                    Err(_) => {
                        r.errs.push(format!("`regress.targets`: unknown metric `{t}`"));
                        None
                    }
                })
                .collect(),
            None => Metric::ALL.to_vec(),
        };
        let gam = GamConfig {
            n_basis: r.or("gam.n_basis", 25usize),
            lambdas: r.list("gam.lambdas").unwrap_or_else(default_lambdas),
        };
        if let Err(e) = gam.validate() {
            r.errs.push(format!("gam: {e}"));
        }
        let diversity_window = r.or("diversity.window", 30usize);
        let diversity_top_k = r.or("diversity.top_k", 10_000usize);
        let clip = r.or("features.clip", true);
        let rise_threshold = r.or("cohort.rise_threshold", 2.5f64);

        for key in kv.entries.keys() {
            if !r.used.contains(&key.as_str()) {
                r.errs.push(format!("unknown key `{key}`"));
            }
        }
        // Static file checks.
        if corpus.is_some() && sequence_length == 0 {
            r.errs.push("`corpus.sequence_length` is required with `corpus.path`".into());
        }
        if corpus.is_none() && features.is_none() {
            r.errs.push("either `corpus.path` or `features.path` is required".into());
        }
        if regress_pos && pos.is_none() && features.is_none() {
            r.errs.push("`regress.pos = true` requires `pos.path`".into());
        }
        for (key, p) in [("corpus.path", &corpus), ("features.path", &features), ("pos.path", &pos)] {
            if let Some(p) = p {
                if !p.is_file() {
                    r.errs.push(format!("`{key}`: file {} does not exist", p.display()));
                }
            }
        }
        let mut first_grid: Option<(PathBuf, Vec<u64>)> = None;
        for p in &runs {
            if !p.is_file() {
                r.errs.push(format!("curve file {} does not exist", p.display()));
                continue;
            }
            match read_curve_header(p) {
                Err(e) => r.errs.push(format!("curve file {}: {e}", p.display())),
                Ok(h) => {
                    // The final checkpoint may fall short of t1 but must lie in the late window.
                    let last = h.steps.last().copied().unwrap_or(0);
                    if last > t1 || (last as f64) < 0.75 * t1 as f64 {
                        r.errs.push(format!(
                            "curve file {}: last checkpoint {last} is inconsistent with schedule t1 {t1}",
                            p.display()
                        ));
                    }
                    match &first_grid {
                        None => first_grid = Some((p.clone(), h.steps)),
                        Some((q, steps)) if *steps != h.steps => r.errs.push(format!(
                            "checkpoint grid of {} differs from {}",
                            p.display(),
                            q.display()
                        )),
                        _ => {}
                    }
                }
            }
        }
        if !r.errs.is_empty() {
            return Err(Error::Config(r.errs));
        }
        Ok(Self {
            seed,
            out_dir: out_dir.unwrap(),
            schedule,
            vocab_size,
            runs,
            corpus,
            sequence_length,
            ngram_order,
            features,
            pos,
            regress_pos,
            targets,
            gam,
            diversity_window,
            diversity_top_k,
            clip,
            rise_threshold,
        })
    }

    /// Seed for a named stage, stable across runs and platforms.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        mix64(self.seed ^ hash_str(stage))
    }
}

/// Check a config file without running anything.
pub fn validate_config(path: &Path) -> Result<PipelineConfig> {
    PipelineConfig::from_kv(&KeyValues::load(path)?)
}
