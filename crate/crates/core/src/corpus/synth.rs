use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{persona_keywords, stop_words, Corpus, CorpusError, Dialogue, DialogueAct, SlotValue, Split, Style, Turn};
use crate::analysis::InfoDistribution;
use crate::seed::rng_for;

const TOPIC_NAMES: [&str; 8] = [
    "hotel", "restaurant", "train", "taxi", "attraction", "hospital", "police", "bus",
];
const SLOT_NAMES: [&str; 12] = [
    "area", "price", "stars", "day", "people", "time", "food", "parking", "internet", "type",
    "destination", "departure",
];
const USER_OPENERS: [&str; 3] = ["i need a", "please find me a", "i am looking for a"];

/// Generator settings. `max_turns` bounds the number of turns per dialogue
/// (at least one user/system pair is always produced).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthConfig {
    pub n_dialogues: usize,
    pub topics: usize,
    pub slots_per_topic: usize,
    pub values_per_slot: usize,
    pub max_turns: usize,
    pub style: Style,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_dialogues: 100,
            topics: 4,
            slots_per_topic: 4,
            values_per_slot: 5,
            max_turns: 10,
            style: Style::GoalOriented,
        }
    }
}

/// A generated corpus together with the generator's own bookkeeping of the
/// corpus statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Synthesized {
    pub corpus: Corpus,
    pub tallies: InfoDistribution,
}

/// Deterministic in `seed`. Utterances are templated and mention every
/// slot-value pair as adjacent `slot value` tokens.
pub fn synthesize_corpus(seed: u64, config: &SynthConfig) -> Result<Synthesized, CorpusError> {
    if config.n_dialogues == 0 {
        return Err(CorpusError::InvalidConfig("n_dialogues must be at least 1"));
    }
    if config.topics == 0 || config.slots_per_topic == 0 || config.values_per_slot == 0 {
        return Err(CorpusError::InvalidConfig("topics, slots and values must be at least 1"));
    }
    if config.max_turns == 0 {
        return Err(CorpusError::InvalidConfig("max_turns must be at least 1"));
    }
    let mut rng = rng_for(seed, "synth");
    let schema = Schema::new(config);
    let mut tallies = InfoDistribution::default();
    let splits = assign_splits(config.n_dialogues, &mut rng);

    let dialogues = (0..config.n_dialogues)
        .map(|i| {
            let id = format!("synth-{i:05}");
            match config.style {
                Style::GoalOriented => goal_dialogue(id, splits[i], config, &schema, &mut rng, &mut tallies),
                Style::ChitChat => chitchat_dialogue(id, splits[i], config, &mut rng, &mut tallies),
            }
        })
        .collect();
    let corpus = Corpus::new(config.style, dialogues)?;
    Ok(Synthesized { corpus, tallies })
}

fn assign_splits(n: usize, rng: &mut ChaCha8Rng) -> Vec<Split> {
    let (valid, test) = match n {
        1 => (0, 0),
        2 => (1, 0),
        _ => {
            let k = ((n as f64) * 0.1 + 0.5) as usize;
            (k.max(1), k.max(1))
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut splits = vec![Split::Train; n];
    for (rank, &i) in order.iter().enumerate() {
        if rank < valid {
            splits[i] = Split::Valid;
        } else if rank < valid + test {
            splits[i] = Split::Test;
        }
    }
    splits
}

struct Schema {
    topics: Vec<String>,
    slots: Vec<Vec<String>>,
    values_per_slot: usize,
}

impl Schema {
    fn new(config: &SynthConfig) -> Self {
        let topics: Vec<String> = (0..config.topics)
            .map(|t| match TOPIC_NAMES.get(t) {
                Some(n) => n.to_string(),
                None => format!("topic{t}"),
            })
            .collect();
        // Topics share slot names, as real schemas do (e.g. "area").
        let slots = (0..config.topics)
            .map(|t| {
                (0..config.slots_per_topic)
                    .map(|k| {
                        if config.slots_per_topic <= SLOT_NAMES.len() {
                            SLOT_NAMES[(2 * t + k) % SLOT_NAMES.len()].to_string()
                        } else {
                            format!("slot{k}")
                        }
                    })
                    .collect()
            })
            .collect();
        Schema {
            topics,
            slots,
            values_per_slot: config.values_per_slot,
        }
    }

    fn value(&self, slot: &str, k: usize) -> String {
        format!("{slot}{k}")
    }
}

struct Utterance {
    words: Vec<String>,
}

impl Utterance {
    fn new() -> Self {
        Utterance { words: Vec::new() }
    }

    fn push(&mut self, piece: &str) {
        self.words.extend(piece.split(' ').map(String::from));
    }

    fn text(&self) -> String {
        self.words.join(" ")
    }
}

fn mention_pairs(u: &mut Utterance, info: &[SlotValue]) {
    for (k, sv) in info.iter().enumerate() {
        if k > 0 {
            u.push("and");
        }
        u.push(&sv.slot);
        u.push(&sv.value);
    }
}

fn utterance_bucket(turn_index: usize, n_turns: usize) -> usize {
    (5 * turn_index / n_turns).min(4)
}

fn goal_dialogue(
    id: String,
    split: Split,
    config: &SynthConfig,
    schema: &Schema,
    rng: &mut ChaCha8Rng,
    tallies: &mut InfoDistribution,
) -> Dialogue {
    let max_pairs = (config.max_turns / 2).max(1);
    let closing = max_pairs >= 2 && rng.gen_bool(0.3);
    let content_pairs = max_pairs - usize::from(closing);
    let n_topics = rng.gen_range(1..=config.topics.min(3).min(content_pairs));
    let n_content = rng.gen_range(n_topics..=content_pairs);

    let mut topic_ids: Vec<usize> = (0..config.topics).collect();
    topic_ids.shuffle(rng);
    topic_ids.truncate(n_topics);
    let mut per_topic = vec![1usize; n_topics];
    for _ in n_topics..n_content {
        per_topic[rng.gen_range(0..n_topics)] += 1;
    }
    let schedule: Vec<usize> = topic_ids
        .iter()
        .zip(&per_topic)
        .flat_map(|(&t, &n)| core::iter::repeat_n(t, n))
        .collect();

    let n_pairs = n_content + usize::from(closing);
    let n_turns = 2 * n_pairs;
    let mut mentioned: BTreeMap<String, String> = BTreeMap::new();
    let mut turns = Vec::with_capacity(n_turns);
    let mut info_load = 0usize;

    for &t in &schedule {
        let topic = &schema.topics[t];
        let topic_slots = &schema.slots[t];
        let n_info = rng.gen_range(0..=topic_slots.len().min(3));
        let mut info: Vec<SlotValue> = Vec::with_capacity(n_info);
        let mut used: BTreeSet<&str> = BTreeSet::new();

        let earlier: Vec<&String> = topic_slots.iter().filter(|s| mentioned.contains_key(*s)).collect();
        if n_info > 0 && !earlier.is_empty() && rng.gen_bool(0.35) {
            let slot = earlier[rng.gen_range(0..earlier.len())];
            let value = mentioned[slot].clone();
            info.push(SlotValue {
                topic: topic.clone(),
                slot: slot.clone(),
                value,
            });
            used.insert(slot.as_str());
        }
        while info.len() < n_info {
            let slot = &topic_slots[rng.gen_range(0..topic_slots.len())];
            if !used.insert(slot.as_str()) {
                continue;
            }
            let value = schema.value(slot, rng.gen_range(0..schema.values_per_slot));
            info.push(SlotValue {
                topic: topic.clone(),
                slot: slot.clone(),
                value,
            });
        }
        let repeats = info.iter().filter(|sv| mentioned.contains_key(&sv.slot)).count();
        for sv in &info {
            mentioned.insert(sv.slot.clone(), sv.value.clone());
        }
        info_load += info.len();

        let mut user = Utterance::new();
        user.push(USER_OPENERS[rng.gen_range(0..USER_OPENERS.len())]);
        user.push(topic);
        if !info.is_empty() {
            user.push("with");
            mention_pairs(&mut user, &info);
        }
        user.push(".");

        let mut system = Utterance::new();
        let act = if info.is_empty() {
            system.push("what would you like for the");
            system.push(topic);
            system.push("?");
            DialogueAct {
                name: format!("{topic}-request"),
                args: Vec::new(),
            }
        } else {
            system.push("the");
            system.push(topic);
            system.push("i found has");
            mention_pairs(&mut system, &info);
            system.push(".");
            DialogueAct {
                name: format!("{topic}-inform"),
                args: info.clone(),
            }
        };

        *tallies.info_per_user_turn.entry(info.len()).or_default() += 1;
        *tallies.repeats_per_context.entry(repeats).or_default() += 1;
        *tallies.response_length.entry(system.words.len()).or_default() += 1;
        *tallies
            .utterance_location
            .entry(utterance_bucket(turns.len() + 1, n_turns))
            .or_default() += 1;

        turns.push(Turn::user(&user.text(), info, vec![topic.clone()]));
        turns.push(Turn::system(&system.text(), vec![topic.clone()], Some(act)));
    }

    if closing {
        let mut user = Utterance::new();
        user.push("thank you , that is all .");
        let mut system = Utterance::new();
        system.push("you are welcome , goodbye .");
        *tallies.info_per_user_turn.entry(0).or_default() += 1;
        *tallies.repeats_per_context.entry(0).or_default() += 1;
        *tallies.response_length.entry(system.words.len()).or_default() += 1;
        *tallies
            .utterance_location
            .entry(utterance_bucket(turns.len() + 1, n_turns))
            .or_default() += 1;
        turns.push(Turn::user(&user.text(), Vec::new(), Vec::new()));
        turns.push(Turn::system(&system.text(), Vec::new(), None));
    }

    let goal_topics: BTreeSet<String> = topic_ids.iter().map(|&t| schema.topics[t].clone()).collect();
    for t in &goal_topics {
        *tallies.topic_frequency.entry(t.clone()).or_default() += 1;
    }
    *tallies.topics_per_dialogue.entry(n_topics).or_default() += 1;
    let kind = if n_topics > 1 { "multi" } else { "single" };
    *tallies.single_vs_multi.entry(kind.to_string()).or_default() += 1;
    *tallies.info_load.entry(info_load).or_default() += 1;

    Dialogue {
        id,
        turns,
        goal_topics,
        persona: None,
        split,
    }
}

const HOBBIES: [&str; 6] = ["hiking", "painting", "swimming", "chess", "cooking", "surfing"];
const PETS: [&str; 5] = ["dog", "cat", "parrot", "hamster", "turtle"];
const COLORS: [&str; 5] = ["red", "blue", "green", "purple", "yellow"];
const JOBS: [&str; 5] = ["teacher", "nurse", "pilot", "chef", "lawyer"];
const PLACES: [&str; 5] = ["texas", "paris", "tokyo", "canada", "london"];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str], limit: usize) -> &'a str {
    xs[rng.gen_range(0..xs.len().min(limit).max(1))]
}

fn chitchat_dialogue(
    id: String,
    split: Split,
    config: &SynthConfig,
    rng: &mut ChaCha8Rng,
    tallies: &mut InfoDistribution,
) -> Dialogue {
    let lim = config.values_per_slot;
    let facts: [(String, String, String); 5] = [
        (format!("i enjoy {} on weekends .", pick(rng, &HOBBIES, lim)), "hobby".into(), "what do you do for fun ?".into()),
        (format!("i have a {} .", pick(rng, &PETS, lim)), "pet".into(), "do you have any pets ?".into()),
        (format!("my favorite color is {} .", pick(rng, &COLORS, lim)), "color".into(), "what is your favorite color ?".into()),
        (format!("i work as a {} .", pick(rng, &JOBS, lim)), "job".into(), "what do you do for work ?".into()),
        (format!("i live in {} .", pick(rng, &PLACES, lim)), "home".into(), "where do you live ?".into()),
    ];
    let mut order: Vec<usize> = (0..facts.len()).collect();
    order.shuffle(rng);
    let n_facts = 3.min(facts.len());
    let persona_sentences: Vec<&str> = order[..n_facts].iter().map(|&k| facts[k].0.as_str()).collect();
    let persona = persona_keywords(persona_sentences.iter().copied(), &stop_words());

    let max_pairs = (config.max_turns / 2).max(1);
    let n_pairs = rng.gen_range(1..=max_pairs);
    let n_turns = 2 * n_pairs;
    let mut turns = Vec::with_capacity(n_turns);
    for p in 0..n_pairs {
        let k = order[p % order.len()];
        let (answer, _, question) = &facts[k];
        let answer = if p < n_facts {
            answer.clone()
        } else {
            "that is all i can say about it .".to_string()
        };
        let system_words = answer.split(' ').count();
        *tallies.info_per_user_turn.entry(0).or_default() += 1;
        *tallies.repeats_per_context.entry(0).or_default() += 1;
        *tallies.response_length.entry(system_words).or_default() += 1;
        *tallies
            .utterance_location
            .entry(utterance_bucket(turns.len() + 1, n_turns))
            .or_default() += 1;
        turns.push(Turn::user(question, Vec::new(), Vec::new()));
        turns.push(Turn::system(&answer, Vec::new(), None));
    }
    *tallies.topics_per_dialogue.entry(0).or_default() += 1;
    *tallies.single_vs_multi.entry("single".to_string()).or_default() += 1;
    *tallies.info_load.entry(0).or_default() += 1;

    Dialogue {
        id,
        turns,
        goal_topics: BTreeSet::new(),
        persona: Some(persona),
        split,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_corpus() {
        let cfg = SynthConfig {
            n_dialogues: 5,
            ..Default::default()
        };
        let a = synthesize_corpus(7, &cfg).unwrap();
        let b = synthesize_corpus(7, &cfg).unwrap();
        assert_eq!(a, b);
        let c = synthesize_corpus(8, &cfg).unwrap();
        assert_ne!(a.corpus, c.corpus);
    }

    #[test]
    fn goal_topics_stay_within_configured_topics() {
        let cfg = SynthConfig {
            n_dialogues: 40,
            topics: 2,
            ..Default::default()
        };
        let s = synthesize_corpus(1, &cfg).unwrap();
        for d in s.corpus.dialogues() {
            assert!(!d.goal_topics.is_empty());
            assert!(d.goal_topics.iter().all(|t| t == "hotel" || t == "restaurant"));
        }
    }

    #[test]
    fn splits_are_exhaustive_and_nonempty() {
        let cfg = SynthConfig {
            n_dialogues: 16,
            ..Default::default()
        };
        let s = synthesize_corpus(3, &cfg).unwrap();
        let c = &s.corpus;
        assert_eq!(c.count(Split::Train) + c.count(Split::Valid) + c.count(Split::Test), 16);
        assert!(c.count(Split::Valid) >= 1);
        assert!(c.count(Split::Train) >= 12);
    }

    #[test]
    fn turn_budget_respected() {
        let cfg = SynthConfig {
            n_dialogues: 50,
            max_turns: 6,
            ..Default::default()
        };
        let s = synthesize_corpus(5, &cfg).unwrap();
        assert!(s.corpus.dialogues().iter().all(|d| d.turns.len() <= 6 && d.turns.len() % 2 == 0));
    }

    #[test]
    fn chitchat_has_persona() {
        let cfg = SynthConfig {
            n_dialogues: 6,
            style: Style::ChitChat,
            ..Default::default()
        };
        let s = synthesize_corpus(2, &cfg).unwrap();
        assert_eq!(s.corpus.style(), Style::ChitChat);
        for d in s.corpus.dialogues() {
            let p = d.persona.as_ref().unwrap();
            assert!(!p.is_empty());
            assert!(!p.contains("i") && !p.contains("."));
        }
    }

    #[test]
    fn zero_sized_config_rejected() {
        let cfg = SynthConfig {
            topics: 0,
            ..Default::default()
        };
        assert!(synthesize_corpus(0, &cfg).is_err());
    }
}
