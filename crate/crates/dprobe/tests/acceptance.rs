//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test fails
//! if any blocking criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use dprobe::reports::read_probe_report;
use dprobe::{run, Command, Config};
use dprobe_core::analysis::{aggregate_by_difficulty, difficulty_grade, score_table, Grade};
use dprobe_core::corpus::{synthesize_corpus, SynthConfig};
use dprobe_core::humaneval::{bootstrap_tie_fraction, summarize};
use dprobe_core::probeclf::{fit, micro_f1};
use dprobe_core::probes::{Label, LabelKind};
use dprobe_core::textmetrics::{SelectionMetric, SelectionMetric as M};
use dprobe_core::{CheckpointTag, ModelKind, ProbeKind, ProbeTask};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Duration,
    blocking: bool,
    run: fn() -> Check,
}

/// Reference per-grade F1 (percent): mean and std for easy, medium, hard.
const REFERENCE_GRADES: [(ModelKind, [(f64, f64); 3]); 5] = [
    (ModelKind::Seq2SeqAttn, [(77.6, 6.2), (65.7, 7.6), (44.4, 23.7)]),
    (ModelKind::Hred, [(72.1, 2.7), (39.3, 5.1), (25.4, 13.6)]),
    (ModelKind::Seq2Seq, [(77.2, 5.3), (65.7, 7.6), (44.9, 23.5)]),
    (ModelKind::BiLstmAttn, [(78.5, 6.2), (65.6, 8.7), (44.2, 23.3)]),
    (ModelKind::Transformer, [(77.2, 4.9), (43.3, 14.7), (24.4, 16.4)]),
];

const EASY: [ProbeTask; 4] = [ProbeTask::RepeatInfo, ProbeTask::NumRepeatInfo, ProbeTask::NumAllTopics, ProbeTask::IsMultiTopic];
const MEDIUM: [ProbeTask; 4] = [ProbeTask::UtteranceLoc, ProbeTask::RecentSlots, ProbeTask::NumRecentInfo, ProbeTask::AllTopics];

fn reference_results() -> Vec<dprobe_core::ProbeResult> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/reference_scores.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut report = String::from("model,seed,checkpoint,task,f1,n_train,n_eval\n");
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let pct: f64 = f[3].parse().unwrap();
        report += &format!("{},1,{},{},{},0,0\n", f[0], f[1], f[2], pct / 100.0);
    }
    read_probe_report(&report, SelectionMetric::Bleu2, &path).unwrap()
}

fn grade_cells() -> Check {
    let results = reference_results();
    let untrained = score_table(&results, |t| t == CheckpointTag::Untrained);
    let best = score_table(&results, |t| matches!(t, CheckpointTag::BestMetric(_)));
    let grading = difficulty_grade(&untrained).map_err(|e| e.to_string())?;
    let agg = aggregate_by_difficulty(&best, &grading).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (model, cells) in REFERENCE_GRADES {
        for (grade, (mean, std)) in Grade::ALL.into_iter().zip(cells) {
            let c = agg.get(&(model, grade)).ok_or(format!("no cell for {model} {grade}"))?;
            worst = worst.max((100.0 * c.mean - mean).abs()).max((100.0 * c.std - std).abs());
        }
    }
    let detail = format!("15 cells, worst deviation {worst:.3} points");
    if worst <= 0.1 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn grade_partition() -> Check {
    let untrained = score_table(&reference_results(), |t| t == CheckpointTag::Untrained);
    let grading = difficulty_grade(&untrained).map_err(|e| e.to_string())?;
    let mut counts: BTreeMap<Grade, usize> = BTreeMap::new();
    for (task, g) in &grading {
        let want = if EASY.contains(task) {
            Grade::Easy
        } else if MEDIUM.contains(task) {
            Grade::Medium
        } else {
            Grade::Hard
        };
        if g.grade != want {
            return Err(format!("{task} graded {} (average {:.4})", g.grade, g.avg_untrained));
        }
        *counts.entry(g.grade).or_default() += 1;
    }
    let got = Grade::ALL.map(|g| counts.get(&g).copied().unwrap_or(0));
    let detail = format!("easy/medium/hard = {}/{}/{}", got[0], got[1], got[2]);
    if got == [4, 4, 8] {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradients() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for kind in ModelKind::ALL {
        let err = support::directional_worst(kind, 20);
        ok &= err < 1e-4;
        parts.push(format!("{kind} {err:.1e}"));
    }
    let detail = format!("worst relative error over 20 draws: {}", parts.join(", "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn overfit() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for kind in ModelKind::ALL {
        let o = support::overfit(kind);
        ok &= o.epochs <= 200 && o.running <= 0.1 && o.settled <= 0.1;
        parts.push(format!("{kind} {:.3} in {} epochs", o.settled, o.epochs));
    }
    let detail = parts.join(", ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn label_oracle() -> Check {
    let cfg = SynthConfig {
        n_dialogues: 500,
        ..Default::default()
    };
    let corpus = synthesize_corpus(11, &cfg).map_err(|e| e.to_string())?.corpus;
    let (checked, mismatches) = support::goal_mismatches(&corpus);
    match mismatches.first() {
        None => Ok(format!("{checked} labels agree")),
        Some(first) => Err(format!("{} of {checked} disagree; first: {first}", mismatches.len())),
    }
}

fn classes(ys: &[usize]) -> Vec<Label> {
    ys.iter().map(|&c| Label::Class(c)).collect()
}

fn held_out(kind: ProbeKind, xs: &[Vec<f64>], ys: &[Label], split: usize, lk: LabelKind) -> Result<f64, String> {
    let probe = fit(kind, &xs[..split], &ys[..split], lk).map_err(|e| e.to_string())?;
    Ok(micro_f1(&probe.predict_all(&xs[split..]), &ys[split..]))
}

fn classifiers() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (xs, ys) = support::clustered(&mut rng, 600, 5, 12);
    let labels = classes(&ys);
    let linear = held_out(ProbeKind::Linear, &xs, &labels, 400, LabelKind::MultiClass(5))?;
    let mlp = held_out(ProbeKind::Mlp, &xs, &labels, 400, LabelKind::MultiClass(5))?;

    let (xs, mut ys) = support::clustered(&mut rng, 3000, 3, 8);
    ys.shuffle(&mut rng);
    let shuffled = classes(&ys);
    let eval = &ys[2000..];
    let majority = (0..3).map(|c| eval.iter().filter(|&&y| y == c).count()).max().unwrap() as f64 / eval.len() as f64;
    let noise = held_out(ProbeKind::Linear, &xs, &shuffled, 2000, LabelKind::MultiClass(3))?;

    let mut equal = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..60);
        let k = rng.gen_range(2..8);
        let p: Vec<Label> = (0..n).map(|_| Label::Class(rng.gen_range(0..k))).collect();
        let g: Vec<Label> = (0..n).map(|_| Label::Class(rng.gen_range(0..k))).collect();
        let acc = p.iter().zip(&g).filter(|(a, b)| a == b).count() as f64 / n as f64;
        equal += usize::from(micro_f1(&p, &g) == acc);
    }
    let detail = format!(
        "separable linear {linear:.4} mlp {mlp:.4}; shuffled {noise:.4} vs majority {majority:.4}; f1 == accuracy {equal}/1000"
    );
    if linear >= 0.99 && mlp >= 0.99 && (noise - majority).abs() <= 0.05 && equal == 1000 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn flip_case(s: &str) -> String {
    s.chars().map(|c| if c.is_lowercase() { c.to_ascii_uppercase() } else { c.to_ascii_lowercase() }).collect()
}

fn random_sentence(rng: &mut ChaCha8Rng) -> String {
    let words: Vec<String> = (0..rng.gen_range(1..10))
        .map(|_| (0..rng.gen_range(1..4)).map(|_| *b"abcdABCD".choose(rng).unwrap() as char).collect())
        .collect();
    words.join(" ")
}

fn metrics() -> Check {
    let mut worst: f64 = 0.0;
    for (name, got, want) in support::hand_examples() {
        let d = (got - want).abs();
        if d > 1e-6 {
            return Err(format!("{name}: {got} vs {want}"));
        }
        worst = worst.max(d);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..100 {
        let (c, r) = (random_sentence(&mut rng), random_sentence(&mut rng));
        for m in [M::Bleu2, M::RougeF1, M::Meteor] {
            let base = m.score(&[c.as_str()], &[r.as_str()]).map_err(|e| e.to_string())?.value;
            let flipped = m.score(&[flip_case(&c)], &[r.to_uppercase()]).map_err(|e| e.to_string())?.value;
            if base != flipped {
                return Err(format!("pair {i} {m}: {base} vs {flipped}"));
            }
        }
    }
    Ok(format!("{} hand examples (worst {worst:.1e}), 100 case-flipped pairs", support::hand_examples().len()))
}

fn bootstrap() -> Check {
    let records = support::tie_annotations(2000, 0.35, 9);
    let dists = bootstrap_tie_fraction(&records, 50_000, 200, 1).map_err(|e| e.to_string())?;
    let s = summarize(&dists[0].fractions).map_err(|e| e.to_string())?;
    let detail = format!("mean {:.4}, std {:.4}", s.mean, s.std);
    if (s.mean - 0.35).abs() <= 0.005 && (s.std - 0.0337).abs() <= 0.005 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pca() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut agree, mut ortho): (f64, f64) = (0.0, 0.0);
    for dim in 2..=10 {
        let points = support::anisotropic(&mut rng, 200, dim);
        let (a, o) = support::pca_errors(&points);
        agree = agree.max(a);
        ortho = ortho.max(o);
    }
    let detail = format!("dims 2..=10: agreement {agree:.1e}, orthonormality {ortho:.1e}");
    if agree < 1e-8 && ortho < 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn stage(command: Command, cfg: &Config) -> Result<(), String> {
    run(command, cfg).map(|_| ()).map_err(|e| format!("{}: {e}", command.name()))
}

/// synth -> train -> probe; returns the probe report path.
fn pipeline(root: &Path, base: &Config) -> Result<PathBuf, String> {
    let (corpus, runs, out) = (root.join("corpus"), root.join("runs"), root.join("report"));
    stage(Command::Synth, &Config { out: corpus.clone(), ..base.clone() })?;
    stage(Command::Train, &Config { corpus: Some(corpus.clone()), out: runs.clone(), ..base.clone() })?;
    let probe = Config {
        corpus: Some(corpus),
        runs: Some(runs),
        out: out.clone(),
        ..base.clone()
    };
    stage(Command::Probe, &probe)?;
    Ok(out)
}

fn trend() -> Check {
    let mut base = Config {
        models: ["seq2seq", "seq2seq_attn", "hred", "bilstm_attn"].map(String::from).to_vec(),
        epochs: Some(3),
        seeds: vec![1, 2, 3],
        tasks: vec!["RecentTopic".into(), "AllSlots".into()],
        checkpoints: vec!["untrained".into(), "best".into()],
        ..Config::default()
    };
    base.synth.dialogues = 500;
    base.synth.max_turns = 4;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = pipeline(dir.path(), &base)?;
    let path = out.join("probe_report.csv");
    let results = read_probe_report(&std::fs::read_to_string(&path).map_err(|e| e.to_string())?, SelectionMetric::Bleu2, &path)
        .map_err(|e| e.to_string())?;
    let f1 = |m: ModelKind, s: u64, t: ProbeTask, untrained: bool| {
        results
            .iter()
            .find(|r| r.model == m && r.seed == s && r.task == t && (r.checkpoint == CheckpointTag::Untrained) == untrained)
            .map(|r| r.f1)
    };
    let mut parts = Vec::new();
    let mut ok = true;
    for m in ModelKind::RECURRENT {
        for t in [ProbeTask::RecentTopic, ProbeTask::AllSlots] {
            let pairs: Vec<(f64, f64)> = [1, 2, 3].into_iter().filter_map(|s| Some((f1(m, s, t, false)?, f1(m, s, t, true)?))).collect();
            let wins = pairs.iter().filter(|(b, u)| b > u).count();
            let mean = |f: fn(&(f64, f64)) -> f64| pairs.iter().map(f).sum::<f64>() / pairs.len().max(1) as f64;
            ok &= wins >= 2;
            parts.push(format!("{m}/{t} {wins}/3 (best {:.2} vs untrained {:.2})", mean(|p| p.0), mean(|p| p.1)));
        }
    }
    let detail = format!("seeds where trained beats untrained: {}", parts.join(", "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const REPORT_FILES: [&str; 4] = ["probe_report.csv", "grading.json", "aggregate.csv", "evolution.csv"];

fn deterministic_pipeline() -> Check {
    let base = Config {
        epochs: Some(5),
        seeds: vec![1],
        ..Config::default()
    };
    let mut bodies: Vec<Vec<Vec<u8>>> = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out = pipeline(dir.path(), &base)?;
        stage(Command::Report, &Config { out: out.clone(), ..base.clone() })?;
        let files = REPORT_FILES
            .iter()
            .map(|f| std::fs::read(out.join(f)).map_err(|e| format!("{f}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        bodies.push(files);
    }
    let differing: Vec<&str> = REPORT_FILES.iter().zip(bodies[0].iter().zip(&bodies[1])).filter(|(_, (a, b))| a != b).map(|(f, _)| *f).collect();
    if differing.is_empty() {
        let bytes: usize = bodies[0].iter().map(Vec::len).sum();
        Ok(format!("{} report files ({bytes} bytes) identical across runs", REPORT_FILES.len()))
    } else {
        Err(format!("differ: {}", differing.join(", ")))
    }
}

const CRITERIA: [Criterion; 11] = [
    Criterion { id: 1, name: "per-grade aggregates of the reference scores", limit: Duration::from_secs(1), blocking: true, run: grade_cells },
    Criterion { id: 2, name: "difficulty partition of the reference scores", limit: Duration::from_secs(1), blocking: true, run: grade_partition },
    Criterion { id: 3, name: "reverse-mode gradients vs central differences", limit: Duration::from_secs(120), blocking: true, run: gradients },
    Criterion { id: 4, name: "every architecture memorizes 16 dialogues", limit: Duration::from_secs(300), blocking: true, run: overfit },
    Criterion { id: 5, name: "probe labels vs text re-derivation", limit: Duration::from_secs(30), blocking: true, run: label_oracle },
    Criterion { id: 6, name: "probe classifier sanity", limit: Duration::from_secs(60), blocking: true, run: classifiers },
    Criterion { id: 7, name: "text metrics", limit: Duration::from_secs(10), blocking: true, run: metrics },
    Criterion { id: 8, name: "bootstrap tie fractions", limit: Duration::from_secs(30), blocking: true, run: bootstrap },
    Criterion { id: 9, name: "power-iteration PCA vs dense eigensolver", limit: Duration::from_secs(10), blocking: true, run: pca },
    Criterion { id: 10, name: "trained recurrent encoders beat untrained (informational)", limit: Duration::MAX, blocking: false, run: trend },
    Criterion { id: 11, name: "pipeline reports are byte-identical across runs", limit: Duration::from_secs(900), blocking: true, run: deterministic_pipeline },
];

#[test]
fn acceptance() {
    let mut failed = Vec::new();
    for c in &CRITERIA {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; took {elapsed:.1?}, limit {:?}", c.limit)),
            Err(d) => (false, d),
        };
        let status = match (pass, c.blocking) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (non-blocking)",
        };
        // Bypasses the harness's capture so each line shows without --nocapture.
        let mut out = std::io::stdout().lock();
        writeln!(out, "[{status}] {:>2}. {} ({elapsed:.1?}): {detail}", c.id, c.name).unwrap();
        out.flush().unwrap();
        if !pass && c.blocking {
            failed.push(c.id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
