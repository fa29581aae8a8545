//! Probe labels against a re-derivation from utterance text.

mod support;

use dprobe_core::corpus::{synthesize_corpus, SynthConfig};
use dprobe_core::probes::{build_labels, mid_frequency_words, LabelError, LabelOptions};
use dprobe_core::{Corpus, ProbeTask, Style};
use proptest::prelude::*;
use support::{band_words, chitchat_label, goal_mismatches};

fn check_goal(corpus: &Corpus) -> usize {
    let (checked, mismatches) = goal_mismatches(corpus);
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
    checked
}

fn check_chitchat(corpus: &Corpus, lo: u64, hi: u64, limit: usize) -> usize {
    let opts = LabelOptions {
        mid_frequency: mid_frequency_words(corpus.vocab(), lo, hi, limit),
        topics_prefix_scope: false,
    };
    let band = band_words(corpus, lo, hi, limit);
    let mut checked = 0;
    for d in corpus.dialogues() {
        for i in d.system_turns() {
            for task in ProbeTask::for_style(Style::ChitChat) {
                let ours = match build_labels(task, d, i, Style::ChitChat, &opts) {
                    Ok(l) => Some(l),
                    Err(LabelError::Skip) => None,
                    Err(e) => panic!("{task} {} turn {i}: {e}", d.id),
                };
                assert_eq!(ours, chitchat_label(task, d, i, &band), "{task} {} turn {i}", d.id);
                checked += 1;
            }
        }
    }
    checked
}

#[test]
fn goal_labels_match_text_oracle() {
    let cfg = SynthConfig {
        n_dialogues: 500,
        ..Default::default()
    };
    let corpus = synthesize_corpus(11, &cfg).unwrap().corpus;
    assert!(check_goal(&corpus) > 500 * 15);
}

#[test]
fn chitchat_labels_match_text_oracle() {
    let cfg = SynthConfig {
        n_dialogues: 300,
        style: Style::ChitChat,
        ..Default::default()
    };
    let corpus = synthesize_corpus(3, &cfg).unwrap().corpus;
    assert!(check_chitchat(&corpus, 10, 300, 500) > 0);
    // A narrow band forces many skipped contexts.
    check_chitchat(&corpus, 20, 40, 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn labels_match_for_any_schema(
        seed in 0u64..1000,
        topics in 1usize..6,
        slots in 1usize..5,
        values in 1usize..4,
        max_turns in 2usize..14,
    ) {
        let cfg = SynthConfig { n_dialogues: 30, topics, slots_per_topic: slots, values_per_slot: values, max_turns, style: Style::GoalOriented };
        let corpus = synthesize_corpus(seed, &cfg).unwrap().corpus;
        check_goal(&corpus);
    }

    #[test]
    fn wordcont_matches_for_any_band(seed in 0u64..1000, lo in 1u64..60, width in 0u64..200, limit in 1usize..40) {
        let cfg = SynthConfig { n_dialogues: 40, style: Style::ChitChat, ..Default::default() };
        let corpus = synthesize_corpus(seed, &cfg).unwrap().corpus;
        check_chitchat(&corpus, lo, lo + width, limit);
    }
}
