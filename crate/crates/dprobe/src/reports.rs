//! CSV and JSON report files.

use std::collections::BTreeMap;
use std::path::Path;

use dprobe_core::analysis::{DifficultyAggregate, DifficultyGrading, InfoDistribution, PcaProjection};
use dprobe_core::humaneval::{AnnotationRecord, Choice, TieDistribution, TieSummary, BINS};
use dprobe_core::models::RunRecord;
use dprobe_core::probes::ProbeDataset;
use dprobe_core::textmetrics::SelectionMetric;
use dprobe_core::{CheckpointTag, ModelKind, ProbeResult, ProbeTask};
use serde_json::json;

use crate::error::{Error, Result};

pub const PROBE_HEADER: [&str; 7] = ["model", "seed", "checkpoint", "task", "f1", "n_train", "n_eval"];

/// Fixed six decimals so reports are byte-stable.
pub fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Records of a CSV whose header must equal `header`.
fn read_records(text: &str, header: &[&str], path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let got = r.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    if got.iter().collect::<Vec<_>>() != header {
        return Err(Error::format(path, format!("expected header `{}`", header.join(","))));
    }
    r.records()
        .map(|rec| rec.map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

pub fn probe_report_csv(results: &[ProbeResult]) -> String {
    csv_string(
        &PROBE_HEADER,
        results.iter().map(|r| {
            vec![
                r.model.name().into(),
                r.seed.to_string(),
                r.checkpoint.label(),
                r.task.name().into(),
                num(r.f1),
                r.n_train.to_string(),
                r.n_eval.to_string(),
            ]
        }),
    )
}

/// `best` rows are read as best-by-`metric`.
pub fn read_probe_report(text: &str, metric: SelectionMetric, path: &Path) -> Result<Vec<ProbeResult>> {
    read_records(text, &PROBE_HEADER, path)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let bad = |what: &str| Error::format(path, format!("row {}: bad {what}", i + 1));
            let checkpoint = CheckpointTag::parse(&rec[2], metric).ok_or_else(|| bad("checkpoint"))?;
            Ok(ProbeResult {
                model: ModelKind::parse(&rec[0]).ok_or_else(|| bad("model"))?,
                seed: rec[1].parse().map_err(|_| bad("seed"))?,
                checkpoint,
                epoch: match checkpoint {
                    CheckpointTag::Epoch(n) => n,
                    _ => 0,
                },
                task: ProbeTask::parse(&rec[3]).ok_or_else(|| bad("task"))?,
                f1: rec[4].parse().map_err(|_| bad("f1"))?,
                n_train: rec[5].parse().map_err(|_| bad("n_train"))?,
                n_eval: rec[6].parse().map_err(|_| bad("n_eval"))?,
            })
        })
        .collect()
}

/// Per-epoch training loss and validation metric.
pub fn metrics_csv(model: ModelKind, record: &RunRecord, metric: SelectionMetric) -> String {
    let rows = record.train_loss.iter().zip(&record.valid_metric).enumerate().flat_map(|(e, (loss, m))| {
        let base = [model.name().to_string(), record.seed.to_string(), (e + 1).to_string()];
        [
            base.iter().cloned().chain(["train_loss".into(), num(*loss)]).collect::<Vec<_>>(),
            base.iter().cloned().chain([metric.name().into(), num(*m)]).collect(),
        ]
    });
    csv_string(&["model", "seed", "epoch", "metric", "value"], rows)
}

pub fn probe_dump_csv(dataset: &ProbeDataset) -> String {
    let rows = dataset.train.examples.iter().chain(&dataset.eval.examples).map(|ex| {
        vec![
            ex.dialogue_id.clone(),
            ex.turn_index.to_string(),
            dataset.task.name().into(),
            dataset.space.render(&ex.label),
        ]
    });
    csv_string(&["dialogue_id", "turn_index", "task", "label"], rows)
}

pub fn aggregate_csv(agg: &DifficultyAggregate) -> String {
    csv_string(
        &["model", "grade", "mean", "std", "n_tasks"],
        agg.iter().map(|((m, g), c)| vec![m.name().into(), g.name().into(), num(c.mean), num(c.std), c.n_tasks.to_string()]),
    )
}

/// JSON numbers carry the same 6 decimals as CSV cells.
fn round6(x: f64) -> f64 {
    num(x).parse().unwrap_or(x)
}

pub fn grading_json(grading: &DifficultyGrading) -> String {
    let obj: serde_json::Map<String, serde_json::Value> = grading
        .iter()
        .map(|(t, g)| (t.name().to_string(), json!({"grade": g.grade.name(), "avg_untrained": round6(g.avg_untrained)})))
        .collect();
    let mut s = serde_json::to_string_pretty(&obj).expect("serializes");
    s.push('\n');
    s
}

pub fn evolution_csv(curves: &BTreeMap<(ProbeTask, ModelKind, u64), Vec<(usize, f64)>>) -> String {
    let rows = curves.iter().flat_map(|((t, m, s), pts)| {
        pts.iter()
            .map(move |(e, f)| vec![t.name().to_string(), m.name().to_string(), s.to_string(), e.to_string(), num(*f)])
    });
    csv_string(&["task", "model", "seed", "epoch", "f1"], rows)
}

pub fn pca_csv(ids: &[(String, usize)], pca: &PcaProjection) -> String {
    csv_string(
        &["dialogue_id", "turn_index", "x", "y"],
        ids.iter().zip(&pca.coords).map(|((d, t), c)| vec![d.clone(), t.to_string(), num(c[0]), num(c[1])]),
    )
}

pub fn pca_summary_json(pca: &PcaProjection) -> String {
    let v = json!({
        "explained_variance_ratio": pca.explained_variance_ratio.map(round6),
        "eigenvalues": pca.eigenvalues.map(round6),
        "x_range": [round6(pca.ranges[0].0), round6(pca.ranges[0].1)],
        "y_range": [round6(pca.ranges[1].0), round6(pca.ranges[1].1)],
    });
    let mut s = serde_json::to_string_pretty(&v).expect("serializes");
    s.push('\n');
    s
}

/// One `key,count` CSV per histogram, named after the histogram.
pub fn distribution_csvs(d: &InfoDistribution) -> Vec<(&'static str, String)> {
    fn h<K: ToString>(m: &BTreeMap<K, u64>) -> String {
        csv_string(&["key", "count"], m.iter().map(|(k, c)| vec![k.to_string(), c.to_string()]))
    }
    vec![
        ("topic_frequency", h(&d.topic_frequency)),
        ("topics_per_dialogue", h(&d.topics_per_dialogue)),
        ("info_per_user_turn", h(&d.info_per_user_turn)),
        ("repeats_per_context", h(&d.repeats_per_context)),
        ("single_vs_multi", h(&d.single_vs_multi)),
        ("utterance_location", h(&d.utterance_location)),
        ("response_length", h(&d.response_length)),
        ("info_load", h(&d.info_load)),
    ]
}

pub fn read_annotations(text: &str, path: &Path) -> Result<Vec<AnnotationRecord>> {
    read_records(text, &["pair_id", "pass_id", "choice"], path)?
        .iter()
        .map(|rec| {
            Ok(AnnotationRecord {
                pair_id: rec[0].to_string(),
                pass_id: dprobe_core::humaneval::parse_pass(&rec[1])?,
                choice: Choice::parse(&rec[2])?,
            })
        })
        .collect()
}

pub fn annotations_csv(records: &[AnnotationRecord]) -> String {
    csv_string(
        &["pair_id", "pass_id", "choice"],
        records.iter().map(|r| vec![r.pair_id.clone(), r.pass_id.to_string(), r.choice.as_str().into()]),
    )
}

pub fn tie_histogram_csv(dists: &[(TieDistribution, TieSummary)]) -> String {
    let rows = dists.iter().flat_map(|(d, s)| {
        (0..BINS).map(move |b| vec![d.pass_id.to_string(), format!("{:.2}", b as f64 / 100.0), s.histogram[b].to_string()])
    });
    csv_string(&["pass_id", "bin_low", "count"], rows)
}

pub fn tie_summary_json(dists: &[(TieDistribution, TieSummary)], sets: usize, set_size: usize, seed: u64) -> String {
    let passes: Vec<_> = dists
        .iter()
        .map(|(d, s)| {
            json!({
                "pass_id": d.pass_id,
                "tie_rate": round6(d.tie_rate),
                "mean": round6(s.mean),
                "std": round6(s.std),
                "mass_at_most_half": round6(s.mass_at_most_half),
            })
        })
        .collect();
    let v = json!({
        "sampling": "with replacement",
        "sets": sets,
        "set_size": set_size,
        "seed": seed,
        "passes": passes,
    });
    let mut s = serde_json::to_string_pretty(&v).expect("serializes");
    s.push('\n');
    s
}
