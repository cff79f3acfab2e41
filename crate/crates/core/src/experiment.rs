//! Declarative experiment configs and the sweep runner behind `hyperspeaker run`.
//!
//! Config files are flat `key = value` text with `#` comments. Unknown or
//! repeated keys are rejected. [`ExperimentConfig`]'s `Display` output is the
//! canonical form: it lists every key and parses back to an equal config.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use thiserror::Error;

use crate::geometry::{Curvature, StabilityPolicy};
use crate::losses::{LossConfig, LossKind};
use crate::synthdata::{generate, load_embeddings, split_with, DataError, LabeledDataset, SplitSpec, TreeSpec};
use crate::trainer::{train, Activation, EmbedderSpec, OptimSpec, ScoringBackend, TrainError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{origin}:{line}: {msg}")]
    Syntax { origin: String, line: usize, msg: String },
    #[error("config field `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn field_err(field: &str, msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config {
        field: field.to_string(),
        msg: msg.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Hyperparameter varied along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Curvature,
    Scale,
    Margin,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Curvature => "c",
            SweepParam::Scale => "s",
            SweepParam::Margin => "m",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "c" | "curvature" => Ok(SweepParam::Curvature),
            "s" | "scale" => Ok(SweepParam::Scale),
            "m" | "margin" => Ok(SweepParam::Margin),
            other => Err(format!("unknown sweep parameter `{other}` (expected c, s, m or none)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(TreeSpec),
    /// Embedding file in the synthdata text format.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub split: SplitSpec,
    /// Each loss is run at every sweep point.
    pub losses: Vec<LossKind>,
    /// `None` picks the per-loss default curvature.
    pub curvature: Option<f64>,
    pub scale: f64,
    pub margin: f64,
    pub euclidean_weight: f64,
    pub share_centers: bool,
    pub policy: StabilityPolicy<f64>,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    /// `seed` is ignored; each entry of `seeds` seeds both the embedder and the shuffle.
    pub optim: OptimSpec,
    pub seeds: Vec<u64>,
    /// `None` uses hyperbolic scoring for hyperbolic losses, cosine otherwise.
    pub scoring: Option<ScoringBackend>,
    pub sweep: Option<Sweep>,
    pub output_dir: PathBuf,
    /// When false, `wall_time_s` is written as 0 so repeated runs are byte-identical.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let optim = OptimSpec::default();
        Self {
            data: DataSource::Synthetic(TreeSpec::default()),
            split: SplitSpec::default(),
            losses: vec![LossKind::Ham],
            curvature: None,
            scale: 30.0,
            margin: 0.2,
            euclidean_weight: 0.3,
            share_centers: false,
            policy: StabilityPolicy::default(),
            hidden_dim: 64,
            output_dim: 16,
            activation: Activation::Relu,
            optim,
            seeds: vec![7],
            scoring: None,
            sweep: None,
            output_dir: PathBuf::from("results"),
            record_wall_time: true,
        }
    }
}

struct Entries {
    map: BTreeMap<String, String>,
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, ExperimentError>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>().map_err(|e| field_err(key, format!("cannot parse `{raw}`: {e}")))
}

impl Entries {
    fn parse(text: &str, origin: &str) -> Result<Self, ExperimentError> {
        let mut map = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let syntax = |msg: String| ExperimentError::Syntax {
                origin: origin.to_string(),
                line: idx + 1,
                msg,
            };
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected `key = value`, found `{body}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(syntax("missing key".into()));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(syntax(format!("key `{k}` given twice")));
            }
        }
        Ok(Self { map })
    }

    fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ExperimentError>
    where
        T::Err: fmt::Display,
    {
        match self.map.remove(key) {
            Some(raw) => parse_value(key, &raw),
            None => Ok(default),
        }
    }

    fn take_raw(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn take_list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>, ExperimentError>
    where
        T::Err: fmt::Display,
    {
        match self.map.remove(key) {
            Some(raw) => raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_value(key, s))
                .collect(),
            None => Ok(default),
        }
    }

    fn take_auto<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ExperimentError>
    where
        T::Err: fmt::Display,
    {
        match self.map.remove(key) {
            Some(raw) if raw != "auto" => parse_value(key, &raw).map(Some),
            _ => Ok(None),
        }
    }
}

const TREE_KEYS: [&str; 7] = [
    "tree_depth",
    "tree_branching",
    "data_dim",
    "level_scales",
    "noise_sigma",
    "samples_per_class",
    "data_seed",
];

impl ExperimentConfig {
    /// Parses and validates config text. Missing keys take their defaults.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ExperimentError> {
        let mut e = Entries::parse(text, origin)?;
        let d = Self::default();
        let data = match e.take_raw("data_path") {
            Some(p) => {
                if let Some(k) = TREE_KEYS.iter().find(|k| e.map.contains_key(**k)) {
                    return Err(field_err(k, "cannot be combined with data_path"));
                }
                DataSource::File(PathBuf::from(p))
            }
            None => {
                let t = TreeSpec::default();
                DataSource::Synthetic(TreeSpec {
                    depth: e.take("tree_depth", t.depth)?,
                    branching: e.take("tree_branching", t.branching)?,
                    dim: e.take("data_dim", t.dim)?,
                    level_scales: e.take_list("level_scales", t.level_scales)?,
                    noise_sigma: e.take("noise_sigma", t.noise_sigma)?,
                    samples_per_class: e.take("samples_per_class", t.samples_per_class)?,
                    seed: e.take("data_seed", t.seed)?,
                })
            }
        };
        let split = SplitSpec {
            train_frac: e.take("train_frac", d.split.train_frac)?,
            trials_per_class: e.take("trials_per_class", d.split.trials_per_class)?,
            seed: e.take("split_seed", d.split.seed)?,
        };
        let losses = e.take_list("losses", d.losses)?;
        let curvature = e.take_auto("curvature")?;
        let policy = StabilityPolicy {
            eps_boundary: e.take("eps_boundary", d.policy.eps_boundary)?,
            delta_norm: e.take("delta_norm", d.policy.delta_norm)?,
            arcosh_floor: e.take("arcosh_floor", d.policy.arcosh_floor)?,
        };
        let optim = OptimSpec {
            lr0: e.take("lr0", d.optim.lr0)?,
            decay: e.take("decay", d.optim.decay)?,
            beta1: e.take("beta1", d.optim.beta1)?,
            beta2: e.take("beta2", d.optim.beta2)?,
            eps_opt: e.take("eps_opt", d.optim.eps_opt)?,
            epochs: e.take("epochs", d.optim.epochs)?,
            batch_size: e.take("batch_size", d.optim.batch_size)?,
            seed: d.optim.seed,
        };
        let sweep_param = match e.take_raw("sweep_param") {
            Some(p) if p != "none" => Some(parse_value::<SweepParam>("sweep_param", &p)?),
            _ => None,
        };
        let sweep_values: Vec<f64> = e.take_list("sweep_values", Vec::new())?;
        let sweep = match sweep_param {
            Some(param) => Some(Sweep {
                param,
                values: sweep_values,
            }),
            None if !sweep_values.is_empty() => {
                return Err(field_err("sweep_values", "given without sweep_param"));
            }
            None => None,
        };
        let cfg = Self {
            data,
            split,
            losses,
            curvature,
            scale: e.take("scale", d.scale)?,
            margin: e.take("margin", d.margin)?,
            euclidean_weight: e.take("euclidean_weight", d.euclidean_weight)?,
            share_centers: e.take("share_centers", d.share_centers)?,
            policy,
            hidden_dim: e.take("hidden_dim", d.hidden_dim)?,
            output_dim: e.take("output_dim", d.output_dim)?,
            activation: e.take("activation", d.activation)?,
            optim,
            seeds: e.take_list("seeds", d.seeds)?,
            scoring: e.take_auto("scoring")?,
            sweep,
            output_dir: PathBuf::from(e.take_raw("output_dir").unwrap_or_else(|| "results".into())),
            record_wall_time: e.take("record_wall_time", d.record_wall_time)?,
        };
        if let Some(k) = e.map.keys().next() {
            return Err(field_err(k, "unknown key"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Range checks, each reported against the offending key.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(field_err(name, format!("must be positive, got {v}")))
            }
        };
        let unit_open = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(field_err(name, format!("must lie in (0, 1), got {v}")))
            }
        };
        match &self.data {
            DataSource::Synthetic(t) => {
                t.validate().map_err(|e| match e {
                    DataError::Argument(msg) => field_err(tree_field(&msg), msg),
                    other => ExperimentError::Data(other),
                })?;
            }
            DataSource::File(p) => {
                if !p.is_file() {
                    return Err(field_err("data_path", format!("{} does not exist", p.display())));
                }
            }
        }
        unit_open("train_frac", self.split.train_frac)?;
        if self.split.trials_per_class == 0 {
            return Err(field_err("trials_per_class", "must be at least 1"));
        }
        if self.losses.is_empty() {
            return Err(field_err("losses", "needs at least one loss"));
        }
        if let Some(c) = self.curvature {
            positive("curvature", c)?;
        }
        positive("scale", self.scale)?;
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(field_err("margin", format!("must be nonnegative, got {}", self.margin)));
        }
        if !(0.0..=1.0).contains(&self.euclidean_weight) {
            return Err(field_err(
                "euclidean_weight",
                format!("must lie in [0, 1], got {}", self.euclidean_weight),
            ));
        }
        unit_open("eps_boundary", self.policy.eps_boundary)?;
        positive("delta_norm", self.policy.delta_norm)?;
        positive("arcosh_floor", self.policy.arcosh_floor)?;
        if self.hidden_dim == 0 {
            return Err(field_err("hidden_dim", "must be at least 1"));
        }
        if self.output_dim == 0 {
            return Err(field_err("output_dim", "must be at least 1"));
        }
        positive("lr0", self.optim.lr0)?;
        if !(self.optim.decay > 0.0 && self.optim.decay <= 1.0) {
            return Err(field_err("decay", format!("must lie in (0, 1], got {}", self.optim.decay)));
        }
        unit_open("beta1", self.optim.beta1)?;
        unit_open("beta2", self.optim.beta2)?;
        positive("eps_opt", self.optim.eps_opt)?;
        if self.optim.epochs == 0 {
            return Err(field_err("epochs", "must be at least 1"));
        }
        if self.optim.batch_size == 0 {
            return Err(field_err("batch_size", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(field_err("seeds", "needs at least one seed"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(field_err("sweep_values", "needs at least one value"));
            }
            for &v in &sweep.values {
                match sweep.param {
                    SweepParam::Curvature | SweepParam::Scale => positive("sweep_values", v)?,
                    SweepParam::Margin if !(v >= 0.0 && v.is_finite()) => {
                        return Err(field_err("sweep_values", format!("margins must be nonnegative, got {v}")));
                    }
                    SweepParam::Margin => {}
                }
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(field_err("output_dir", "must not be empty"));
        }
        Ok(())
    }

    /// Sweep points in execution order: loss, then sweep value, then seed.
    pub fn points(&self) -> Vec<SweepPoint> {
        let values: Vec<Option<f64>> = match &self.sweep {
            Some(s) => s.values.iter().copied().map(Some).collect(),
            None => vec![None],
        };
        let mut out = Vec::new();
        for &loss in &self.losses {
            for &value in &values {
                for &seed in &self.seeds {
                    out.push(SweepPoint { loss, value, seed });
                }
            }
        }
        out
    }

    /// Loss hyperparameters at one sweep point.
    pub fn loss_config(&self, point: &SweepPoint, num_classes: usize) -> Result<LossConfig<f64>, ExperimentError> {
        let mut cfg = LossConfig::recommended(point.loss, num_classes, self.output_dim);
        if let Some(c) = self.curvature {
            cfg.curvature = Curvature::new(c).map_err(|e| field_err("curvature", e.to_string()))?;
        }
        cfg.scale = self.scale;
        cfg.margin = self.margin;
        cfg.euclidean_weight = self.euclidean_weight;
        cfg.share_centers = self.share_centers;
        cfg.policy = self.policy;
        if let (Some(sweep), Some(v)) = (&self.sweep, point.value) {
            match sweep.param {
                SweepParam::Curvature => {
                    cfg.curvature = Curvature::new(v).map_err(|e| field_err("sweep_values", e.to_string()))?;
                }
                SweepParam::Scale => cfg.scale = v,
                SweepParam::Margin => cfg.margin = v,
            }
        }
        Ok(cfg)
    }

    pub fn scoring_for(&self, loss: LossKind) -> ScoringBackend {
        self.scoring.unwrap_or_else(|| ScoringBackend::for_loss(loss))
    }
}

fn tree_field(msg: &str) -> &'static str {
    let table = [
        ("depth", "tree_depth"),
        ("branching", "tree_branching"),
        ("level_scales", "level_scales"),
        ("noise_sigma", "noise_sigma"),
        ("samples_per_class", "samples_per_class"),
        ("dim", "data_dim"),
    ];
    table
        .iter()
        .find(|(needle, _)| msg.starts_with(needle))
        .map_or("tree_branching", |(_, key)| key)
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn auto<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), ToString::to_string)
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# data")?;
        match &self.data {
            DataSource::Synthetic(t) => {
                writeln!(f, "tree_depth = {}", t.depth)?;
                writeln!(f, "tree_branching = {}", t.branching)?;
                writeln!(f, "data_dim = {}", t.dim)?;
                writeln!(f, "level_scales = {}", join(&t.level_scales))?;
                writeln!(f, "noise_sigma = {}", t.noise_sigma)?;
                writeln!(f, "samples_per_class = {}", t.samples_per_class)?;
                writeln!(f, "data_seed = {}", t.seed)?;
            }
            DataSource::File(p) => writeln!(f, "data_path = {}", p.display())?,
        }
        writeln!(f, "train_frac = {}", self.split.train_frac)?;
        writeln!(f, "trials_per_class = {}", self.split.trials_per_class)?;
        writeln!(f, "split_seed = {}", self.split.seed)?;
        writeln!(f, "\n# loss")?;
        writeln!(f, "losses = {}", join(&self.losses))?;
        writeln!(f, "curvature = {}", auto(&self.curvature))?;
        writeln!(f, "scale = {}", self.scale)?;
        writeln!(f, "margin = {}", self.margin)?;
        writeln!(f, "euclidean_weight = {}", self.euclidean_weight)?;
        writeln!(f, "share_centers = {}", self.share_centers)?;
        writeln!(f, "eps_boundary = {}", self.policy.eps_boundary)?;
        writeln!(f, "delta_norm = {}", self.policy.delta_norm)?;
        writeln!(f, "arcosh_floor = {}", self.policy.arcosh_floor)?;
        writeln!(f, "\n# embedder")?;
        writeln!(f, "hidden_dim = {}", self.hidden_dim)?;
        writeln!(f, "output_dim = {}", self.output_dim)?;
        writeln!(f, "activation = {}", self.activation)?;
        writeln!(f, "\n# optimizer")?;
        writeln!(f, "lr0 = {}", self.optim.lr0)?;
        writeln!(f, "decay = {}", self.optim.decay)?;
        writeln!(f, "beta1 = {}", self.optim.beta1)?;
        writeln!(f, "beta2 = {}", self.optim.beta2)?;
        writeln!(f, "eps_opt = {}", self.optim.eps_opt)?;
        writeln!(f, "epochs = {}", self.optim.epochs)?;
        writeln!(f, "batch_size = {}", self.optim.batch_size)?;
        writeln!(f, "\n# run")?;
        writeln!(f, "seeds = {}", join(&self.seeds))?;
        writeln!(f, "scoring = {}", auto(&self.scoring))?;
        match &self.sweep {
            Some(s) => {
                writeln!(f, "sweep_param = {}", s.param)?;
                writeln!(f, "sweep_values = {}", join(&s.values))?;
            }
            None => writeln!(f, "sweep_param = none")?,
        }
        writeln!(f, "output_dir = {}", self.output_dir.display())?;
        writeln!(f, "record_wall_time = {}", self.record_wall_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub loss: LossKind,
    /// Value of the swept parameter, `None` without a sweep.
    pub value: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMetrics {
    pub final_loss: f64,
    pub eer: f64,
    pub min_dcf: f64,
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub point: SweepPoint,
    pub param: Option<SweepParam>,
    pub scoring: ScoringBackend,
    /// `Err` carries the divergence diagnostic.
    pub metrics: Result<PointMetrics, String>,
    pub wall_time_s: f64,
}

pub const RESULTS_HEADER: &str = "loss,scoring,param,value,seed,final_loss,eer,min_dcf,wall_time_s";

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        let param = self.param.map_or("none", SweepParam::name);
        let value = self.point.value.map_or_else(String::new, |v| v.to_string());
        let metrics = match &self.metrics {
            Ok(m) => format!("{},{},{}", m.final_loss, m.eer, m.min_dcf),
            Err(_) => "diverged,diverged,diverged".to_string(),
        };
        format!(
            "{},{},{},{},{},{},{}",
            self.point.loss, self.scoring, param, value, self.point.seed, metrics, self.wall_time_s
        )
    }

    /// File name of the per-epoch report for this point.
    pub fn report_name(&self) -> String {
        let mut name = self.point.loss.to_string();
        if let (Some(p), Some(v)) = (self.param, self.point.value) {
            name.push_str(&format!("_{p}{v}"));
        }
        format!("{name}_seed{}.csv", self.point.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub rows: Vec<ResultRow>,
}

impl RunOutcome {
    pub fn diverged(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| r.metrics.is_err())
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{RESULTS_HEADER}\n");
        for r in &self.rows {
            s.push_str(&r.to_csv_line());
            s.push('\n');
        }
        s
    }
}

fn load_data(cfg: &ExperimentConfig) -> Result<LabeledDataset, ExperimentError> {
    match &cfg.data {
        DataSource::Synthetic(spec) => Ok(generate(spec)?),
        DataSource::File(p) => Ok(load_embeddings(p)?),
    }
}

/// Runs every sweep point and writes `manifest.cfg`, `results.csv` and one
/// per-epoch report per point under the output directory.
///
/// A diverged point is recorded in its row and does not stop the sweep.
/// `on_row` sees each row as it completes.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    mut on_row: impl FnMut(&ResultRow),
) -> Result<RunOutcome, ExperimentError> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let (train_set, trials) = split_with(&data, &cfg.split)?;
    let num_classes = data.num_classes();
    let out_dir = &cfg.output_dir;
    let reports = out_dir.join("reports");
    fs::create_dir_all(&reports).map_err(io_err(&reports))?;
    let manifest = out_dir.join("manifest.cfg");
    fs::write(&manifest, cfg.to_string()).map_err(io_err(&manifest))?;

    let mut rows = Vec::new();
    for point in cfg.points() {
        let loss_cfg = cfg.loss_config(&point, num_classes)?;
        let scoring = cfg.scoring_for(point.loss);
        let embedder = EmbedderSpec {
            input_dim: data.dim(),
            hidden_dim: cfg.hidden_dim,
            output_dim: cfg.output_dim,
            activation: cfg.activation,
            seed: point.seed,
        };
        let optim = OptimSpec {
            seed: point.seed,
            ..cfg.optim
        };
        let started = Instant::now();
        let result = train(&train_set, &trials, embedder, &optim, &loss_cfg, point.loss, scoring);
        let wall = if cfg.record_wall_time {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        let mut row = ResultRow {
            point,
            param: cfg.sweep.as_ref().map(|s| s.param),
            scoring,
            metrics: Err(String::new()),
            wall_time_s: wall,
        };
        match result {
            Ok(out) => {
                let report_path = reports.join(row.report_name());
                fs::write(&report_path, out.report.to_csv()).map_err(io_err(&report_path))?;
                row.metrics = Ok(PointMetrics {
                    final_loss: out.report.final_loss().unwrap_or(f64::NAN),
                    eer: out.report.final_eval.eer,
                    min_dcf: out.report.final_eval.min_dcf,
                });
                info!("{} done in {wall:.2}s", row.report_name());
            }
            Err(e @ TrainError::Divergence { .. }) => {
                warn!("{}: {e}", row.report_name());
                row.metrics = Err(e.to_string());
            }
            Err(e) => return Err(e.into()),
        }
        on_row(&row);
        rows.push(row);
    }
    let outcome = RunOutcome { rows };
    let results = out_dir.join("results.csv");
    fs::write(&results, outcome.to_csv()).map_err(io_err(&results))?;
    Ok(outcome)
}

/// `key = value` record of a generated dataset, in config-file syntax.
pub fn tree_manifest(spec: &TreeSpec) -> String {
    let cfg = ExperimentConfig {
        data: DataSource::Synthetic(spec.clone()),
        ..ExperimentConfig::default()
    };
    cfg.to_string()
        .lines()
        .filter(|l| TREE_KEYS.iter().any(|k| l.starts_with(&format!("{k} ="))))
        .map(|l| format!("{l}\n"))
        .collect()
}
