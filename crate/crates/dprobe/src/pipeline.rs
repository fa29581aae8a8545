//! The commands. Each resolves its inputs, writes its manifest, does the
//! work (in parallel where independent) and writes every output from the
//! calling thread.

use std::path::{Path, PathBuf};

use dprobe_core::analysis::{aggregate_by_difficulty, difficulty_grade, evolution_curves, info_distribution, pca2, score_table};
use dprobe_core::corpus::synthesize_corpus;
use dprobe_core::humaneval::{bootstrap_one, group_by_pass, summarize};
use dprobe_core::models::{train as train_model, TrainOptions};
use dprobe_core::probeclf::{result_for, score_dataset, sort_results};
use dprobe_core::probes::{embed_split, mid_frequency_words, probe_dataset_from_embeddings, LabelOptions, ProbeError};
use dprobe_core::{Checkpoint, CheckpointTag, Corpus, ProbeResult, Split};
use log::{info, warn};
use rayon::prelude::*;

use crate::checkpoint_io::{decode_checkpoint, encode_checkpoint};
use crate::config::Config;
use crate::corpus_io::{corpus_files, load_corpus, render_corpus};
use crate::error::{Error, Result};
use crate::manifest::{write_atomic, RunManifest};
use crate::reports;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Synth,
    Train,
    Probe,
    Report,
    HumanEval,
    Pca,
    Distributions,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Probe => "probe",
            Command::Report => "report",
            Command::HumanEval => "humaneval",
            Command::Pca => "pca",
            Command::Distributions => "distributions",
        }
    }
}

/// Runs `command` and returns the files it wrote, manifest first.
pub fn run(command: Command, cfg: &Config) -> Result<Vec<PathBuf>> {
    match command {
        Command::Synth => synth(cfg),
        Command::Train => train(cfg),
        Command::Probe => probe(cfg),
        Command::Report => report(cfg),
        Command::HumanEval => humaneval(cfg),
        Command::Pca => pca(cfg),
        Command::Distributions => distributions(cfg),
    }
}

fn write(path: PathBuf, body: impl AsRef<[u8]>, written: &mut Vec<PathBuf>) -> Result<()> {
    write_atomic(&path, body.as_ref())?;
    written.push(path);
    Ok(())
}

fn corpus_input(cfg: &Config, manifest: &mut RunManifest) -> Result<Corpus> {
    let path = cfg.require(&cfg.corpus, "--corpus")?;
    for (_, f) in corpus_files(path)? {
        manifest.input(&f)?;
    }
    let corpus = load_corpus(path)?;
    info!(
        "corpus {}: {} dialogues ({} train, {} valid), vocabulary {}",
        path.display(),
        corpus.dialogues().len(),
        corpus.count(Split::Train),
        corpus.count(Split::Valid),
        corpus.vocab().len()
    );
    Ok(corpus)
}

pub fn synth(cfg: &Config) -> Result<Vec<PathBuf>> {
    let mut manifest = RunManifest::new("synth", cfg);
    let seed = cfg.seeds[0];
    let synth = synthesize_corpus(seed, &cfg.synth.synth_config()).map_err(|e| Error::Corpus {
        path: cfg.out.clone(),
        source: e,
    })?;
    let files = render_corpus(&synth.corpus);
    for (name, _) in &files {
        manifest.output(&cfg.out.join(name));
    }
    let mut written = vec![manifest.write(&cfg.out)?];
    for (name, body) in files {
        write(cfg.out.join(name), body, &mut written)?;
    }
    Ok(written)
}

/// `<runs>/<model>-s<seed>`.
pub fn run_dir(runs: &Path, kind: dprobe_core::ModelKind, seed: u64) -> PathBuf {
    runs.join(format!("{}-s{seed}", kind.name()))
}

pub fn train(cfg: &Config) -> Result<Vec<PathBuf>> {
    let mut manifest = RunManifest::new("train", cfg);
    let corpus = corpus_input(cfg, &mut manifest)?;
    let kinds = cfg.model_kinds()?;
    let jobs: Vec<_> = kinds.iter().flat_map(|&k| cfg.seeds.iter().map(move |&s| (k, s))).collect();
    for &(k, s) in &jobs {
        manifest.output(&run_dir(&cfg.out, k, s));
    }
    let mut written = vec![manifest.write(&cfg.out)?];

    let options = TrainOptions {
        metric: cfg.metric.selection(),
        target_loss: None,
        keep_epoch_checkpoints: cfg.keep_epoch_checkpoints,
    };
    let records: Vec<_> = jobs
        .par_iter()
        .map(|&(kind, seed)| {
            let mc = cfg.model_config(kind, corpus.vocab().len());
            info!("training {kind} seed {seed} for {} epochs", mc.epochs);
            train_model(&corpus, &mc, seed, &options).map(|r| (kind, seed, r))
        })
        .collect();
    for rec in records {
        let (kind, seed, record) = rec?;
        let dir = run_dir(&cfg.out, kind, seed);
        for ck in &record.checkpoints {
            write(dir.join(format!("{}.ckpt", ck.tag.label())), encode_checkpoint(ck), &mut written)?;
        }
        write(dir.join("metrics.csv"), reports::metrics_csv(kind, &record, options.metric), &mut written)?;
    }
    Ok(written)
}

/// Every `*.ckpt` one directory below `runs`, sorted by path.
pub fn checkpoint_files(runs: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let read = |p: &Path| std::fs::read_dir(p).map_err(|e| Error::io(p, e));
    for entry in read(runs)? {
        let dir = entry.map_err(|e| Error::io(runs, e))?.path();
        if !dir.is_dir() {
            continue;
        }
        for f in read(&dir)? {
            let f = f.map_err(|e| Error::io(&dir, e))?.path();
            if f.extension().is_some_and(|e| e == "ckpt") {
                out.push(f);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Checkpoints under the runs directory that pass the model and checkpoint
/// filters, in path order.
fn selected_checkpoints(cfg: &Config, manifest: &mut RunManifest) -> Result<Vec<Checkpoint>> {
    let runs = cfg.runs.as_ref().unwrap_or(&cfg.out);
    let kinds = cfg.model_kinds()?;
    let filter = cfg.checkpoint_filter()?;
    let mut out = Vec::new();
    for f in checkpoint_files(runs)? {
        let bytes = std::fs::read(&f).map_err(|e| Error::io(&f, e))?;
        let ck = decode_checkpoint(&bytes).map_err(|e| Error::format(&f, e.to_string()))?;
        let tag = match ck.tag {
            // Stored best tags carry their own metric; filter by label.
            CheckpointTag::BestMetric(_) => CheckpointTag::BestMetric(cfg.metric.selection()),
            t => t,
        };
        if kinds.contains(&ck.config.kind) && filter.accepts(tag) {
            manifest.input(&f)?;
            out.push(ck);
        }
    }
    if out.is_empty() {
        return Err(Error::Usage(format!("no checkpoints under {} match --models/--checkpoint", runs.display())));
    }
    Ok(out)
}

fn label_options(cfg: &Config, corpus: &Corpus) -> LabelOptions {
    let (lo, hi, n) = cfg.word_cont_band();
    LabelOptions {
        mid_frequency: mid_frequency_words(corpus.vocab(), lo, hi, n),
        topics_prefix_scope: false,
    }
}

struct CheckpointProbe {
    results: Vec<ProbeResult>,
    dumps: Vec<(String, String)>,
}

fn probe_checkpoint(cfg: &Config, corpus: &Corpus, ck: &Checkpoint, opts: &LabelOptions, dump: bool) -> Result<CheckpointProbe> {
    let train = embed_split(corpus, ck, Split::Train).map_err(dprobe_core::probeclf::EvaluateError::from)?;
    let eval = embed_split(corpus, ck, Split::Valid).map_err(dprobe_core::probeclf::EvaluateError::from)?;
    let mut out = CheckpointProbe {
        results: Vec::new(),
        dumps: Vec::new(),
    };
    for task in cfg.task_list(corpus.style()) {
        let ds = match probe_dataset_from_embeddings(corpus, task, &train, &eval, opts) {
            Ok(ds) => ds,
            Err(e @ (ProbeError::EmptyTrainingSplit(_) | ProbeError::EmptyEvaluationSplit(_))) => {
                warn!("skipping {task}: {e}");
                continue;
            }
            Err(e) => return Err(dprobe_core::probeclf::EvaluateError::from(e).into()),
        };
        let (f1, _) = score_dataset(&ds, cfg.probe.kind()).map_err(dprobe_core::probeclf::EvaluateError::from)?;
        out.results.push(result_for(ck, task, f1, &ds));
        if dump {
            out.dumps.push((task.name().to_string(), reports::probe_dump_csv(&ds)));
        }
    }
    Ok(out)
}

pub fn probe(cfg: &Config) -> Result<Vec<PathBuf>> {
    let mut manifest = RunManifest::new("probe", cfg);
    let corpus = corpus_input(cfg, &mut manifest)?;
    let checkpoints = selected_checkpoints(cfg, &mut manifest)?;
    let report_path = cfg.out.join("probe_report.csv");
    manifest.output(&report_path);
    let mut written = vec![manifest.write(&cfg.out)?];

    let opts = label_options(cfg, &corpus);
    let per_checkpoint: Vec<Result<CheckpointProbe>> = checkpoints
        .par_iter()
        .enumerate()
        .map(|(i, ck)| {
            info!("probing {} seed {} at {}", ck.config.kind, ck.seed, ck.tag);
            probe_checkpoint(cfg, &corpus, ck, &opts, cfg.dump_probe_data && i == 0)
        })
        .collect();
    let mut results = Vec::new();
    for p in per_checkpoint {
        let p = p?;
        results.extend(p.results);
        for (task, body) in p.dumps {
            write(cfg.out.join("probe_data").join(format!("{task}.csv")), body, &mut written)?;
        }
    }
    sort_results(&mut results);
    write(report_path, reports::probe_report_csv(&results), &mut written)?;
    Ok(written)
}

pub fn report(cfg: &Config) -> Result<Vec<PathBuf>> {
    let mut manifest = RunManifest::new("report", cfg);
    let input = cfg.probe_report.clone().unwrap_or_else(|| cfg.out.join("probe_report.csv"));
    manifest.input(&input)?;
    let text = std::fs::read_to_string(&input).map_err(|e| Error::io(&input, e))?;
    let results = reports::read_probe_report(&text, cfg.metric.selection(), &input)?;
    let outputs = ["grading.json", "aggregate.csv", "evolution.csv"].map(|n| cfg.out.join(n));
    outputs.iter().for_each(|p| manifest.output(p));
    let mut written = vec![manifest.write(&cfg.out)?];

    let untrained = score_table(&results, |t| t == CheckpointTag::Untrained);
    let best = score_table(&results, |t| matches!(t, CheckpointTag::BestMetric(_)));
    let grading = difficulty_grade(&untrained)?;
    let aggregate = aggregate_by_difficulty(&best, &grading)?;
    let [g, a, e] = outputs;
    write(g, reports::grading_json(&grading), &mut written)?;
    write(a, reports::aggregate_csv(&aggregate), &mut written)?;
    write(e, reports::evolution_csv(&evolution_curves(&results)), &mut written)?;
    Ok(written)
}

pub fn humaneval(cfg: &Config) -> Result<Vec<PathBuf>> {
    let mut manifest = RunManifest::new("humaneval", cfg);
    let input = cfg.require(&cfg.annotations, "--annotations")?;
    manifest.input(input)?;
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let records = reports::read_annotations(&text, input)?;
    let passes: Vec<_> = group_by_pass(&records)?.into_iter().collect();
    let (hist, summary) = (cfg.out.join("tie_histogram.csv"), cfg.out.join("tie_summary.json"));
    manifest.output(&hist);
    manifest.output(&summary);
    let mut written = vec![manifest.write(&cfg.out)?];

    let seed = cfg.seeds[0];
    let (sets, size) = (cfg.bootstrap_sets, cfg.bootstrap_set_size);
    let dists: Vec<_> = passes
        .par_iter()
        .map(|(pass, choices)| {
            let d = bootstrap_one(*pass, choices, sets, size, seed)?;
            let s = summarize(&d.fractions)?;
            Ok((d, s))
        })
        .collect::<Result<_, dprobe_core::humaneval::HumanEvalError>>()?;
    write(hist, reports::tie_histogram_csv(&dists), &mut written)?;
    write(summary, reports::tie_summary_json(&dists, sets, size, seed), &mut written)?;
    Ok(written)
}

pub fn pca(cfg: &Config) -> Result<Vec<PathBuf>> {
    let mut manifest = RunManifest::new("pca", cfg);
    let corpus = corpus_input(cfg, &mut manifest)?;
    let checkpoints = selected_checkpoints(cfg, &mut manifest)?;
    let split = if corpus.count(Split::Valid) > 0 { Split::Valid } else { Split::Train };
    let stems: Vec<String> = checkpoints
        .iter()
        .map(|ck| format!("{}-s{}-{}", ck.config.kind.name(), ck.seed, ck.tag.label()))
        .collect();
    for s in &stems {
        manifest.output(&cfg.out.join("pca").join(format!("{s}.csv")));
    }
    let mut written = vec![manifest.write(&cfg.out)?];

    let projections: Vec<Result<(String, String)>> = checkpoints
        .par_iter()
        .map(|ck| {
            let embs = embed_split(&corpus, ck, split).map_err(dprobe_core::probeclf::EvaluateError::from)?;
            let points: Vec<Vec<f64>> = embs.iter().map(|e| e.values.clone()).collect();
            let p = pca2(&points)?;
            let ids: Vec<(String, usize)> = embs.iter().map(|e| (e.dialogue_id.clone(), e.turn_index)).collect();
            Ok((reports::pca_csv(&ids, &p), reports::pca_summary_json(&p)))
        })
        .collect();
    for (stem, p) in stems.iter().zip(projections) {
        let (csv, json) = p?;
        write(cfg.out.join("pca").join(format!("{stem}.csv")), csv, &mut written)?;
        write(cfg.out.join("pca").join(format!("{stem}.json")), json, &mut written)?;
    }
    Ok(written)
}

pub fn distributions(cfg: &Config) -> Result<Vec<PathBuf>> {
    let mut manifest = RunManifest::new("distributions", cfg);
    let corpus = corpus_input(cfg, &mut manifest)?;
    let files = reports::distribution_csvs(&info_distribution(&corpus));
    for (name, _) in &files {
        manifest.output(&cfg.out.join("distributions").join(format!("{name}.csv")));
    }
    let mut written = vec![manifest.write(&cfg.out)?];
    for (name, body) in files {
        write(cfg.out.join("distributions").join(format!("{name}.csv")), body, &mut written)?;
    }
    Ok(written)
}
