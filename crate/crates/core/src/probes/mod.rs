//! The 18 probe tasks: label rules, label spaces and probe datasets.
//!
//! Labels are pure functions of the annotated dialogue; nothing here looks
//! at model parameters except [`build_probe_dataset`], which pairs labels
//! with context embeddings.

mod dataset;
mod labels;

use core::fmt;

pub use dataset::{
    build_probe_dataset, embed_split, probe_dataset_from_embeddings, Label, LabelSpace, ProbeDataset,
    ProbeError, ProbeExample, ProbeSplit,
};
pub use labels::{build_labels, mid_frequency_words, LabelError, LabelOptions, RawLabel};

use crate::corpus::Style;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProbeTask {
    UtteranceLoc,
    WordCont,
    IsMultiTopic,
    NumAllTopics,
    RepeatInfo,
    NumRepeatInfo,
    AllTopics,
    RecentSlots,
    NumRecentInfo,
    RecentValues,
    AllSlots,
    AllValues,
    RecentTopic,
    NumAllInfo,
    PersonalInfo,
    ActionSelect,
    EntitySlots,
    EntityValues,
}

/// Shape of a task's answer before the label space is known.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelShape {
    /// Two classes, 0 and 1.
    Binary,
    /// Count capped at `classes - 1`.
    Count { classes: usize },
    /// One name out of a Train-derived vocabulary.
    Categorical,
    /// A set of names out of a Train-derived vocabulary.
    Set,
}

/// Resolved answer type with its class count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelKind {
    Binary,
    MultiClass(usize),
    MultiLabel(usize),
}

impl LabelKind {
    pub fn classes(self) -> usize {
        match self {
            LabelKind::Binary => 2,
            LabelKind::MultiClass(k) | LabelKind::MultiLabel(k) => k,
        }
    }

    pub fn is_multi_label(self) -> bool {
        matches!(self, LabelKind::MultiLabel(_))
    }
}

impl ProbeTask {
    pub const ALL: [ProbeTask; 18] = [
        ProbeTask::UtteranceLoc,
        ProbeTask::WordCont,
        ProbeTask::IsMultiTopic,
        ProbeTask::NumAllTopics,
        ProbeTask::RepeatInfo,
        ProbeTask::NumRepeatInfo,
        ProbeTask::AllTopics,
        ProbeTask::RecentSlots,
        ProbeTask::NumRecentInfo,
        ProbeTask::RecentValues,
        ProbeTask::AllSlots,
        ProbeTask::AllValues,
        ProbeTask::RecentTopic,
        ProbeTask::NumAllInfo,
        ProbeTask::PersonalInfo,
        ProbeTask::ActionSelect,
        ProbeTask::EntitySlots,
        ProbeTask::EntityValues,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProbeTask::UtteranceLoc => "UtteranceLoc",
            ProbeTask::WordCont => "WordCont",
            ProbeTask::IsMultiTopic => "IsMultiTopic",
            ProbeTask::NumAllTopics => "NumAllTopics",
            ProbeTask::RepeatInfo => "RepeatInfo",
            ProbeTask::NumRepeatInfo => "NumRepeatInfo",
            ProbeTask::AllTopics => "AllTopics",
            ProbeTask::RecentSlots => "RecentSlots",
            ProbeTask::NumRecentInfo => "NumRecentInfo",
            ProbeTask::RecentValues => "RecentValues",
            ProbeTask::AllSlots => "AllSlots",
            ProbeTask::AllValues => "AllValues",
            ProbeTask::RecentTopic => "RecentTopic",
            ProbeTask::NumAllInfo => "NumAllInfo",
            ProbeTask::PersonalInfo => "PersonalInfo",
            ProbeTask::ActionSelect => "ActionSelect",
            ProbeTask::EntitySlots => "EntitySlots",
            ProbeTask::EntityValues => "EntityValues",
        }
    }

    /// Accepts the task name case-insensitively; `IsMultiTask` is an alias.
    pub fn parse(s: &str) -> Option<ProbeTask> {
        if s.eq_ignore_ascii_case("IsMultiTask") {
            return Some(ProbeTask::IsMultiTopic);
        }
        ProbeTask::ALL.into_iter().find(|t| t.name().eq_ignore_ascii_case(s))
    }

    pub fn shape(self) -> LabelShape {
        use ProbeTask::*;
        match self {
            UtteranceLoc => LabelShape::Count { classes: 5 },
            IsMultiTopic => LabelShape::Binary,
            NumAllTopics => LabelShape::Count { classes: 6 },
            NumRepeatInfo => LabelShape::Count { classes: 7 },
            NumRecentInfo => LabelShape::Count { classes: 10 },
            NumAllInfo => LabelShape::Count { classes: 20 },
            WordCont | RecentTopic | ActionSelect => LabelShape::Categorical,
            RepeatInfo | AllTopics | RecentSlots | RecentValues | AllSlots | AllValues | PersonalInfo
            | EntitySlots | EntityValues => LabelShape::Set,
        }
    }

    pub fn applies_to(self, style: Style) -> bool {
        match self {
            ProbeTask::UtteranceLoc => true,
            ProbeTask::WordCont | ProbeTask::PersonalInfo => style == Style::ChitChat,
            _ => style == Style::GoalOriented,
        }
    }

    /// Tasks applicable to `style`, in canonical order.
    pub fn for_style(style: Style) -> impl Iterator<Item = ProbeTask> {
        ProbeTask::ALL.into_iter().filter(move |t| t.applies_to(style))
    }
}

impl fmt::Display for ProbeTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
