//! Run configuration: a TOML file plus command-line overrides (flags win).

use std::path::{Path, PathBuf};

use dprobe_core::corpus::SynthConfig;
use dprobe_core::textmetrics::SelectionMetric;
use dprobe_core::{CheckpointTag, ModelConfig, ModelKind, ProbeKind, ProbeTask, Style};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Bleu2,
    #[value(name = "rouge_f1")]
    RougeF1,
    Meteor,
}

impl Metric {
    pub fn selection(self) -> SelectionMetric {
        match self {
            Metric::Bleu2 => SelectionMetric::Bleu2,
            Metric::RougeF1 => SelectionMetric::RougeF1,
            Metric::Meteor => SelectionMetric::Meteor,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    Linear,
    Mlp,
}

impl Probe {
    pub fn kind(self) -> ProbeKind {
        match self {
            Probe::Linear => ProbeKind::Linear,
            Probe::Mlp => ProbeKind::Mlp,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CorpusStyle {
    Goal,
    Chitchat,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub dialogues: usize,
    pub topics: usize,
    pub slots_per_topic: usize,
    pub values_per_slot: usize,
    pub max_turns: usize,
    pub style: CorpusStyle,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        SynthSection {
            dialogues: d.n_dialogues,
            topics: d.topics,
            slots_per_topic: d.slots_per_topic,
            values_per_slot: d.values_per_slot,
            max_turns: d.max_turns,
            style: CorpusStyle::Goal,
        }
    }
}

impl SynthSection {
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_dialogues: self.dialogues,
            topics: self.topics,
            slots_per_topic: self.slots_per_topic,
            values_per_slot: self.values_per_slot,
            max_turns: self.max_turns,
            style: match self.style {
                CorpusStyle::Goal => Style::GoalOriented,
                CorpusStyle::Chitchat => Style::ChitChat,
            },
        }
    }
}

/// Frequency band and size of the WordCont answer vocabulary. Unset fields
/// follow the scale: 1000–3000 occurrences at full scale, 10–300 at desk
/// scale, 500 words either way.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WordContSection {
    pub min_count: Option<u64>,
    pub max_count: Option<u64>,
    pub max_words: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Corpus file or split directory.
    pub corpus: Option<PathBuf>,
    /// Directory of training runs.
    pub runs: Option<PathBuf>,
    /// Probe report consumed by `report`.
    pub probe_report: Option<PathBuf>,
    /// Annotation CSV consumed by `humaneval`.
    pub annotations: Option<PathBuf>,
    pub out: PathBuf,
    /// Model names, or `all`.
    pub models: Vec<String>,
    pub scale: Scale,
    /// Overrides the preset epoch count.
    pub epochs: Option<usize>,
    pub seeds: Vec<u64>,
    pub metric: Metric,
    pub probe: Probe,
    /// Task names, or `all` for every task of the corpus style.
    pub tasks: Vec<String>,
    /// Checkpoint labels to probe: `untrained`, `last`, `best`, `epoch-NN`,
    /// `epochs` (every per-epoch checkpoint) or `all`.
    pub checkpoints: Vec<String>,
    pub keep_epoch_checkpoints: bool,
    pub dump_probe_data: bool,
    pub bootstrap_sets: usize,
    pub bootstrap_set_size: usize,
    pub synth: SynthSection,
    pub word_cont: WordContSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            corpus: None,
            runs: None,
            probe_report: None,
            annotations: None,
            out: PathBuf::from("out"),
            models: vec!["all".into()],
            scale: Scale::Desk,
            epochs: None,
            seeds: vec![1, 2, 3],
            metric: Metric::Bleu2,
            probe: Probe::Linear,
            tasks: vec!["all".into()],
            checkpoints: vec!["untrained".into(), "last".into(), "best".into()],
            keep_epoch_checkpoints: false,
            dump_probe_data: false,
            bootstrap_sets: dprobe_core::humaneval::DEFAULT_SETS,
            bootstrap_set_size: dprobe_core::humaneval::DEFAULT_SET_SIZE,
            synth: SynthSection::default(),
            word_cont: WordContSection::default(),
        }
    }
}

/// Flags shared by every command; set ones override the config file.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// One or more seeds, comma separated.
    #[arg(long, alias = "seeds", value_delimiter = ',')]
    pub seed: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scale: Option<Scale>,
    /// Checkpoint-selection metric.
    #[arg(long, value_enum)]
    pub metric: Option<Metric>,
    /// Probe classifier.
    #[arg(long, value_enum)]
    pub probe: Option<Probe>,
    /// Corpus file or split directory.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Directory of training runs.
    #[arg(long)]
    pub runs: Option<PathBuf>,
    /// Model names (comma separated) or `all`.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Task names (comma separated) or `all`.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Vec<String>,
    /// Checkpoints to use (comma separated): untrained, last, best, epoch-NN, epochs, all.
    #[arg(long, value_delimiter = ',')]
    pub checkpoint: Vec<String>,
    /// Keep a checkpoint after every epoch.
    #[arg(long)]
    pub keep_epochs: bool,
    /// Also write the probe datasets.
    #[arg(long)]
    pub dump: bool,
    /// Probe report for `report`.
    #[arg(long)]
    pub probe_report: Option<PathBuf>,
    /// Annotation CSV for `humaneval`.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Bootstrap sample count.
    #[arg(long)]
    pub sets: Option<usize>,
    /// Bootstrap sample size.
    #[arg(long)]
    pub set_size: Option<usize>,
    /// Synthetic dialogue count.
    #[arg(long)]
    pub dialogues: Option<usize>,
    /// Synthetic turns per dialogue, at most.
    #[arg(long)]
    pub max_turns: Option<usize>,
    /// Synthetic corpus style.
    #[arg(long, value_enum)]
    pub style: Option<CorpusStyle>,
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Config file (if any) with the flags applied on top.
    pub fn resolve(o: &Overrides) -> Result<Config> {
        let mut c = match &o.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Config::from_toml(&text, p)?
            }
            None => Config::default(),
        };
        if !o.seed.is_empty() {
            c.seeds = o.seed.clone();
        }
        macro_rules! set {
            ($($field:ident <- $flag:ident),*) => {$(
                if let Some(v) = &o.$flag {
                    c.$field = v.clone().into();
                }
            )*};
        }
        set!(out <- out, scale <- scale, metric <- metric, probe <- probe, corpus <- corpus, runs <- runs,
             epochs <- epochs, probe_report <- probe_report, annotations <- annotations,
             bootstrap_sets <- sets, bootstrap_set_size <- set_size);
        if let Some(v) = o.dialogues {
            c.synth.dialogues = v;
        }
        if let Some(v) = o.max_turns {
            c.synth.max_turns = v;
        }
        if let Some(v) = o.style {
            c.synth.style = v;
        }
        if !o.models.is_empty() {
            c.models = o.models.clone();
        }
        if !o.tasks.is_empty() {
            c.tasks = o.tasks.clone();
        }
        if !o.checkpoint.is_empty() {
            c.checkpoints = o.checkpoint.clone();
        }
        c.keep_epoch_checkpoints |= o.keep_epochs;
        c.dump_probe_data |= o.dump;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Usage("--seed: at least one seed is required".into()));
        }
        self.model_kinds()?;
        self.checkpoint_filter()?;
        for t in &self.tasks {
            if t != "all" && ProbeTask::parse(t).is_none() {
                return Err(Error::Usage(format!("--tasks: unknown task {t:?}")));
            }
        }
        Ok(())
    }

    pub fn model_kinds(&self) -> Result<Vec<ModelKind>> {
        let mut out = Vec::new();
        for m in &self.models {
            if m == "all" {
                out.extend(ModelKind::ALL);
            } else {
                out.push(ModelKind::parse(m).ok_or_else(|| Error::Usage(format!("--models: unknown model {m:?}")))?);
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Tasks to probe on a corpus of `style`.
    pub fn task_list(&self, style: Style) -> Vec<ProbeTask> {
        let mut out: Vec<ProbeTask> = if self.tasks.iter().any(|t| t == "all") {
            ProbeTask::for_style(style).collect()
        } else {
            self.tasks.iter().filter_map(|t| ProbeTask::parse(t)).filter(|t| t.applies_to(style)).collect()
        };
        out.sort();
        out.dedup();
        out
    }

    pub fn checkpoint_filter(&self) -> Result<CheckpointFilter> {
        let metric = self.metric.selection();
        let mut f = CheckpointFilter::default();
        for c in &self.checkpoints {
            match c.as_str() {
                "all" => f.all = true,
                "epochs" => f.epochs = true,
                s => f.tags.push(CheckpointTag::parse(s, metric).ok_or_else(|| Error::Usage(format!("--checkpoint: unknown checkpoint {s:?}")))?),
            }
        }
        Ok(f)
    }

    pub fn model_config(&self, kind: ModelKind, vocab_size: usize) -> ModelConfig {
        let mut c = match self.scale {
            Scale::Desk => ModelConfig::desk(kind, vocab_size),
            Scale::Full => ModelConfig::full(kind, vocab_size),
        };
        if let Some(e) = self.epochs {
            c.epochs = e;
        }
        c
    }

    /// `(min_count, max_count, max_words)` of the WordCont vocabulary.
    pub fn word_cont_band(&self) -> (u64, u64, usize) {
        let (lo, hi) = match self.scale {
            Scale::Desk => (10, 300),
            Scale::Full => (1000, 3000),
        };
        let w = &self.word_cont;
        (w.min_count.unwrap_or(lo), w.max_count.unwrap_or(hi), w.max_words.unwrap_or(500))
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf> {
        path.as_ref().ok_or_else(|| Error::Usage(format!("{flag} is required")))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckpointFilter {
    pub all: bool,
    pub epochs: bool,
    pub tags: Vec<CheckpointTag>,
}

impl CheckpointFilter {
    pub fn accepts(&self, tag: CheckpointTag) -> bool {
        self.all || (self.epochs && matches!(tag, CheckpointTag::Epoch(_) | CheckpointTag::Untrained)) || self.tags.contains(&tag)
    }
}
