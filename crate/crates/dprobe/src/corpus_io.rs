//! Corpus file formats: goal-oriented JSON and line-based chit-chat text,
//! either as one file or as a directory with one file per split.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dprobe_core::corpus::{persona_keywords, stop_words, CorpusError, DialogueAct, SlotValue, Speaker};
use dprobe_core::seed::fnv1a;
use dprobe_core::{Corpus, Dialogue, Split, Style, Turn};
use serde_json::{json, Value};

use crate::error::{Error, Result};

const PERSONA_PREFIX: &str = "your persona:";

fn schema(path: impl Into<String>, message: impl Into<String>) -> CorpusError {
    CorpusError::schema(path, message)
}

fn field<'a>(obj: &'a Value, key: &str, path: &str) -> std::result::Result<&'a Value, CorpusError> {
    obj.as_object()
        .ok_or_else(|| schema(path, "expected an object"))?
        .get(key)
        .ok_or_else(|| schema(format!("{path}.{key}"), "missing field"))
}

fn string(v: &Value, path: &str) -> std::result::Result<String, CorpusError> {
    v.as_str().map(String::from).ok_or_else(|| schema(path, "expected a string"))
}

fn array<'a>(v: &'a Value, path: &str) -> std::result::Result<&'a Vec<Value>, CorpusError> {
    v.as_array().ok_or_else(|| schema(path, "expected an array"))
}

fn strings(v: &Value, path: &str) -> std::result::Result<Vec<String>, CorpusError> {
    array(v, path)?
        .iter()
        .enumerate()
        .map(|(i, s)| string(s, &format!("{path}[{i}]")))
        .collect()
}

fn optional<'a>(obj: &'a Value, key: &str) -> Option<&'a Value> {
    obj.get(key).filter(|v| !v.is_null())
}

fn slot_values(v: &Value, path: &str) -> std::result::Result<Vec<SlotValue>, CorpusError> {
    array(v, path)?
        .iter()
        .enumerate()
        .map(|(i, sv)| {
            let p = format!("{path}[{i}]");
            let get = |k: &str| field(sv, k, &p).and_then(|x| string(x, &format!("{p}.{k}")));
            SlotValue::new(&get("topic")?, &get("slot")?, &get("value")?).map_err(|_| schema(p.clone(), "empty topic, slot or value"))
        })
        .collect()
}

/// Dialogues of one goal-oriented JSON document, all assigned to `split`.
pub fn parse_goal_oriented(bytes: &[u8], split: Split) -> std::result::Result<Vec<Dialogue>, CorpusError> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| schema("$", e.to_string()))?;
    let dialogues = array(field(&doc, "dialogues", "$")?, "$.dialogues")?;
    let mut out = Vec::with_capacity(dialogues.len());
    for (di, d) in dialogues.iter().enumerate() {
        let dp = format!("dialogues[{di}]");
        let id = string(field(d, "id", &dp)?, &format!("{dp}.id"))?;
        let goal_topics: BTreeSet<String> = strings(field(d, "goal_topics", &dp)?, &format!("{dp}.goal_topics"))?
            .iter()
            .map(|t| dprobe_core::corpus::normalize_value(t))
            .collect();
        let mut turns = Vec::new();
        for (ti, t) in array(field(d, "turns", &dp)?, &format!("{dp}.turns"))?.iter().enumerate() {
            let tp = format!("{dp}.turns[{ti}]");
            let speaker = match string(field(t, "speaker", &tp)?, &format!("{tp}.speaker"))?.to_ascii_lowercase().as_str() {
                "user" => Speaker::User,
                "system" => Speaker::System,
                other => return Err(schema(format!("{tp}.speaker"), format!("unknown speaker {other:?}"))),
            };
            let text = string(field(t, "text", &tp)?, &format!("{tp}.text"))?;
            let info = match optional(t, "info") {
                Some(v) => slot_values(v, &format!("{tp}.info"))?,
                None => Vec::new(),
            };
            let topics = match optional(t, "topics") {
                Some(v) => strings(v, &format!("{tp}.topics"))?,
                None => Vec::new(),
            };
            let act = match optional(t, "act") {
                Some(a) => {
                    let ap = format!("{tp}.act");
                    let name = string(field(a, "name", &ap)?, &format!("{ap}.name"))?;
                    let args = match optional(a, "args") {
                        Some(v) => slot_values(v, &format!("{ap}.args"))?,
                        None => Vec::new(),
                    };
                    Some(DialogueAct { name, args })
                }
                None => None,
            };
            // Mis-attributed annotations are kept so corpus validation can
            // name the offending turn.
            let turn = match speaker {
                Speaker::User => {
                    let mut turn = Turn::user(&text, info, topics);
                    turn.system_act = act;
                    turn
                }
                Speaker::System => {
                    let mut turn = Turn::system(&text, topics, act);
                    turn.user_info = info;
                    turn
                }
            };
            turns.push(turn);
        }
        out.push(Dialogue {
            id,
            turns,
            goal_topics,
            persona: None,
            split,
        });
    }
    Ok(out)
}

fn slot_json(sv: &SlotValue) -> Value {
    json!({"topic": sv.topic, "slot": sv.slot, "value": sv.value})
}

/// Inverse of [`parse_goal_oriented`] for tokenized text.
pub fn write_goal_oriented<'a>(dialogues: impl IntoIterator<Item = &'a Dialogue>) -> String {
    let ds: Vec<Value> = dialogues
        .into_iter()
        .map(|d| {
            let turns: Vec<Value> = d
                .turns
                .iter()
                .map(|t| {
                    json!({
                        "speaker": if t.speaker == Speaker::User { "user" } else { "system" },
                        "text": t.text(),
                        "info": t.user_info.iter().map(slot_json).collect::<Vec<_>>(),
                        "topics": t.topics,
                        "act": t.system_act.as_ref().map(|a| json!({
                            "name": a.name,
                            "args": a.args.iter().map(slot_json).collect::<Vec<_>>(),
                        })),
                    })
                })
                .collect();
            json!({"id": d.id, "goal_topics": d.goal_topics, "turns": turns})
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&json!({ "dialogues": ds })).expect("values serialize");
    s.push('\n');
    s
}

/// Strips a leading line number, as in `3 your persona: ...`.
fn strip_number(line: &str) -> (Option<&str>, &str) {
    match line.split_once(' ') {
        Some((n, rest)) if !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) => (Some(n), rest),
        _ => (None, line),
    }
}

/// Chit-chat dialogues. A dialogue ends at a blank line or when a persona
/// line follows utterance lines. Utterance lines are `<n> user\tsystem`;
/// further tab-separated columns are ignored.
pub fn parse_chitchat(text: &str, id_prefix: &str, split: Split) -> std::result::Result<Vec<Dialogue>, CorpusError> {
    let stop = stop_words();
    let mut out = Vec::new();
    let mut persona: Vec<String> = Vec::new();
    let mut turns: Vec<Turn> = Vec::new();
    let mut flush = |persona: &mut Vec<String>, turns: &mut Vec<Turn>, line_no: usize| -> std::result::Result<(), CorpusError> {
        if persona.is_empty() && turns.is_empty() {
            return Ok(());
        }
        if turns.is_empty() {
            return Err(schema(format!("line {line_no}"), "persona without utterances"));
        }
        out.push(Dialogue {
            id: format!("{id_prefix}-{:05}", out.len()),
            turns: std::mem::take(turns),
            goal_topics: BTreeSet::new(),
            persona: Some(persona_keywords(persona.iter(), &stop)),
            split,
        });
        persona.clear();
        Ok(())
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut persona, &mut turns, i + 1)?;
            continue;
        }
        let (number, rest) = strip_number(line.trim_start());
        if let Some(p) = rest.strip_prefix(PERSONA_PREFIX) {
            if !turns.is_empty() {
                flush(&mut persona, &mut turns, i + 1)?;
            }
            persona.push(p.trim().to_string());
            continue;
        }
        if number.is_none() {
            return Err(schema(format!("line {}", i + 1), "expected `<n> user<TAB>system`"));
        }
        let mut cols = rest.split('\t');
        let (user, system) = match (cols.next(), cols.next()) {
            (Some(u), Some(s)) => (u, s),
            _ => return Err(schema(format!("line {}", i + 1), "missing tab between user and system utterance")),
        };
        turns.push(Turn::user(user, Vec::new(), Vec::new()));
        turns.push(Turn::system(system, Vec::new(), None));
    }
    flush(&mut persona, &mut turns, text.lines().count())?;
    Ok(out)
}

/// Writes dialogues in the chit-chat format; persona keywords become a
/// single persona line.
pub fn write_chitchat<'a>(dialogues: impl IntoIterator<Item = &'a Dialogue>) -> String {
    let mut s = String::new();
    for d in dialogues {
        if let Some(p) = &d.persona {
            let words: Vec<&str> = p.iter().map(String::as_str).collect();
            let _ = writeln!(s, "{PERSONA_PREFIX} {}", words.join(" "));
        }
        for (k, pair) in d.turns.chunks(2).enumerate() {
            let system = pair.get(1).map(Turn::text).unwrap_or_default();
            let _ = writeln!(s, "{} {}\t{}", k + 1, pair[0].text(), system);
        }
        s.push('\n');
    }
    s
}

fn style_of(path: &Path) -> Option<Style> {
    match path.extension()?.to_str()? {
        "json" => Some(Style::GoalOriented),
        "txt" => Some(Style::ChitChat),
        _ => None,
    }
}

fn parse_file(path: &Path, style: Style, split: Split) -> Result<Vec<Dialogue>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let prefix = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dialogue");
    let ds = match style {
        Style::GoalOriented => parse_goal_oriented(&bytes, split),
        Style::ChitChat => parse_chitchat(&String::from_utf8_lossy(&bytes), prefix, split),
    };
    ds.map_err(|e| Error::Corpus { path: path.to_path_buf(), source: e })
}

/// Split of a dialogue in a single-file corpus: 80/10/10 by a stable hash
/// of its id.
pub fn hashed_split(id: &str) -> Split {
    match fnv1a(id.as_bytes()) % 10 {
        0 => Split::Valid,
        1 => Split::Test,
        _ => Split::Train,
    }
}

/// The files a corpus at `path` consists of, with their splits.
pub fn corpus_files(path: &Path) -> Result<Vec<(Split, PathBuf)>> {
    if path.is_dir() {
        let mut files = Vec::new();
        for split in Split::ALL {
            for ext in ["json", "txt"] {
                let p = path.join(format!("{}.{ext}", split.as_str()));
                if p.is_file() {
                    files.push((split, p));
                }
            }
        }
        if files.iter().all(|(s, _)| *s != Split::Train) {
            return Err(Error::Usage(format!("{} has no train.json or train.txt", path.display())));
        }
        Ok(files)
    } else if path.is_file() {
        Ok(vec![(Split::Train, path.to_path_buf())])
    } else {
        Err(Error::Usage(format!("corpus path {} does not exist", path.display())))
    }
}

/// Loads a corpus from a split directory (`train`, `valid`, `test` files
/// with `.json` or `.txt` extension) or from a single file whose dialogues
/// are split by [`hashed_split`].
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let files = corpus_files(path)?;
    let styles: Vec<Style> = files
        .iter()
        .map(|(_, p)| style_of(p).ok_or_else(|| Error::Usage(format!("{}: expected a .json or .txt corpus", p.display()))))
        .collect::<Result<_>>()?;
    let style = styles[0];
    if styles.iter().any(|s| *s != style) {
        return Err(Error::Usage(format!("{} mixes corpus formats", path.display())));
    }
    let mut parts = Vec::new();
    for (split, p) in &files {
        let mut ds = parse_file(p, style, *split)?;
        if !path.is_dir() {
            ds.iter_mut().for_each(|d| d.split = hashed_split(&d.id));
        }
        parts.extend(ds);
    }
    Corpus::new(style, parts).map_err(|e| Error::Corpus {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Corpus files keyed by split, in the format of its style.
pub fn render_corpus(corpus: &Corpus) -> Vec<(String, String)> {
    let ext = match corpus.style() {
        Style::GoalOriented => "json",
        Style::ChitChat => "txt",
    };
    Split::ALL
        .iter()
        .map(|&split| {
            let ds = corpus.in_split(split);
            let body = match corpus.style() {
                Style::GoalOriented => write_goal_oriented(ds),
                Style::ChitChat => write_chitchat(ds),
            };
            (format!("{}.{ext}", split.as_str()), body)
        })
        .collect()
}
