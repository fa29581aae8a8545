//! Annotated dialogue corpora: domain types, validation, vocabulary,
//! training examples and a synthetic generator with ground-truth tallies.

mod examples;
mod synth;
mod text;
mod vocab;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use examples::{make_examples, TrainingExample, CONTEXT_WINDOW};
pub use synth::{synthesize_corpus, SynthConfig, Synthesized};
pub use text::{normalize_value, persona_keywords, stop_words, tokenize, STOP_WORDS};
pub use vocab::{Vocab, EOS, PAD, RESERVED, SOS, UNK};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("corpus contains no dialogues")]
    EmptyCorpus,
    #[error("invalid generator config: {0}")]
    InvalidConfig(&'static str),
}

impl CorpusError {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        CorpusError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Speaker {
    User,
    System,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "valid" | "validation" | "val" => Some(Split::Valid),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Style {
    GoalOriented,
    ChitChat,
}

/// One unit of user-provided information, e.g. `hotel/price=cheap`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotValue {
    pub topic: String,
    pub slot: String,
    pub value: String,
}

impl SlotValue {
    /// Normalizes all three fields; none may be empty afterwards.
    pub fn new(topic: &str, slot: &str, value: &str) -> Result<Self, CorpusError> {
        let sv = SlotValue {
            topic: normalize_value(topic),
            slot: normalize_value(slot),
            value: normalize_value(value),
        };
        if sv.topic.is_empty() || sv.slot.is_empty() || sv.value.is_empty() {
            return Err(CorpusError::schema(
                "slot_value",
                format!("empty field in {topic:?}/{slot:?}={value:?}"),
            ));
        }
        Ok(sv)
    }
}

impl fmt::Display for SlotValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}={}", self.topic, self.slot, self.value)
    }
}

/// A system action with its slot-value arguments.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DialogueAct {
    pub name: String,
    pub args: Vec<SlotValue>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Turn {
    pub speaker: Speaker,
    /// Normalized surface tokens.
    pub words: Vec<String>,
    /// Vocabulary ids of `words`; filled when the corpus is assembled.
    pub tokens: Vec<u32>,
    pub user_info: Vec<SlotValue>,
    /// Active topics in annotation order, without duplicates.
    pub topics: Vec<String>,
    pub system_act: Option<DialogueAct>,
}

impl Turn {
    pub fn user(text: &str, info: Vec<SlotValue>, topics: Vec<String>) -> Self {
        Turn {
            speaker: Speaker::User,
            words: tokenize(text),
            tokens: Vec::new(),
            user_info: info,
            topics: dedup_in_order(topics),
            system_act: None,
        }
    }

    pub fn system(text: &str, topics: Vec<String>, act: Option<DialogueAct>) -> Self {
        Turn {
            speaker: Speaker::System,
            words: tokenize(text),
            tokens: Vec::new(),
            user_info: Vec::new(),
            topics: dedup_in_order(topics),
            system_act: act,
        }
    }

    /// Space-joined tokens; re-tokenizing yields `words` again.
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

pub(crate) fn dedup_in_order(items: Vec<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    items
        .into_iter()
        .map(|t| normalize_value(&t))
        .filter(|t| !t.is_empty() && seen.insert(t.clone()))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Turn>,
    pub goal_topics: BTreeSet<String>,
    pub persona: Option<BTreeSet<String>>,
    pub split: Split,
}

impl Dialogue {
    /// Indices of System turns.
    pub fn system_turns(&self) -> impl Iterator<Item = usize> + '_ {
        self.turns
            .iter()
            .enumerate()
            .filter(|(_, t)| t.speaker == Speaker::System)
            .map(|(i, _)| i)
    }

    fn validate(&self, style: Style) -> Result<(), CorpusError> {
        let path = |i: usize| format!("dialogues[{}].turns[{}]", self.id, i);
        if self.turns.is_empty() {
            return Err(CorpusError::schema(format!("dialogues[{}]", self.id), "no turns"));
        }
        for (i, turn) in self.turns.iter().enumerate() {
            let expected = if i % 2 == 0 { Speaker::User } else { Speaker::System };
            if turn.speaker != expected {
                return Err(CorpusError::schema(
                    path(i),
                    "turns must alternate user/system starting with user",
                ));
            }
            if turn.words.is_empty() {
                return Err(CorpusError::schema(path(i), "empty utterance"));
            }
            if turn.speaker == Speaker::System && !turn.user_info.is_empty() {
                return Err(CorpusError::schema(path(i), "system turn carries user info"));
            }
            if turn.speaker == Speaker::User && turn.system_act.is_some() {
                return Err(CorpusError::schema(path(i), "user turn carries a system act"));
            }
            if let Some(act) = &turn.system_act {
                if act.name.is_empty() {
                    return Err(CorpusError::schema(path(i), "empty act name"));
                }
            }
        }
        let union: BTreeSet<String> = self
            .turns
            .iter()
            .flat_map(|t| t.topics.iter().cloned())
            .collect();
        if union != self.goal_topics {
            return Err(CorpusError::schema(
                format!("dialogues[{}].goal_topics", self.id),
                format!(
                    "goal topics {:?} differ from the union of turn topics {:?}",
                    self.goal_topics, union
                ),
            ));
        }
        match (style, &self.persona) {
            (Style::ChitChat, None) => Err(CorpusError::schema(
                format!("dialogues[{}]", self.id),
                "chit-chat dialogue without persona",
            )),
            (Style::GoalOriented, Some(_)) => Err(CorpusError::schema(
                format!("dialogues[{}]", self.id),
                "goal-oriented dialogue with persona",
            )),
            _ => Ok(()),
        }
    }
}

/// Validated dialogues with a Train-split vocabulary. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    style: Style,
    dialogues: Vec<Dialogue>,
    vocab: Vocab,
}

impl Corpus {
    /// Validates the dialogues, builds the vocabulary over the Train split
    /// and encodes every turn (out-of-vocabulary words become UNK).
    pub fn new(style: Style, mut dialogues: Vec<Dialogue>) -> Result<Self, CorpusError> {
        if dialogues.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut ids = BTreeSet::new();
        for d in &dialogues {
            if !ids.insert(d.id.as_str()) {
                return Err(CorpusError::schema(
                    format!("dialogues[{}]", d.id),
                    "duplicate dialogue id",
                ));
            }
            d.validate(style)?;
        }
        let vocab = Vocab::build(
            dialogues
                .iter()
                .filter(|d| d.split == Split::Train)
                .flat_map(|d| d.turns.iter())
                .flat_map(|t| t.words.iter().map(String::as_str)),
        );
        for d in &mut dialogues {
            for t in &mut d.turns {
                t.tokens = t.words.iter().map(|w| vocab.encode(w)).collect();
            }
        }
        Ok(Corpus {
            style,
            dialogues,
            vocab,
        })
    }

    pub fn style(&self) -> Style {
        self.style
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn dialogues(&self) -> &[Dialogue] {
        &self.dialogues
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &Dialogue> {
        self.dialogues.iter().filter(move |d| d.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.in_split(split).count()
    }

    /// Merges per-split dialogue lists (e.g. one file per split).
    pub fn from_splits(
        style: Style,
        parts: impl IntoIterator<Item = (Split, Vec<Dialogue>)>,
    ) -> Result<Self, CorpusError> {
        let mut all = Vec::new();
        for (split, ds) in parts {
            all.extend(ds.into_iter().map(|mut d| {
                d.split = split;
                d
            }));
        }
        Corpus::new(style, all)
    }
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Style::GoalOriented => "goal-oriented",
            Style::ChitChat => "chit-chat",
        })
    }
}
