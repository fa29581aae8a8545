use alloc::collections::BTreeSet;
use alloc::string::String;

use super::{LabelShape, ProbeTask};
use crate::corpus::{Dialogue, SlotValue, Speaker, Style, Turn, Vocab, CONTEXT_WINDOW};

/// A label before it is indexed into a [`super::LabelSpace`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RawLabel {
    Count(usize),
    Name(String),
    Names(BTreeSet<String>),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LabelError {
    #[error("task {task} does not apply to {style} corpora")]
    NotApplicable { task: ProbeTask, style: Style },
    #[error("turn {0} is not a system turn")]
    NotSystemTurn(usize),
    /// The context carries no answer for this task; the example is dropped.
    #[error("no label for this context")]
    Skip,
}

/// Corpus-level inputs some rules need.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelOptions {
    /// Token ids eligible as WordCont answers.
    pub mid_frequency: BTreeSet<u32>,
    /// Count NumAllTopics over the context prefix instead of the whole
    /// dialogue.
    pub topics_prefix_scope: bool,
}

/// Up to `max_words` corpus tokens whose Train frequency lies in
/// `[min_count, max_count]`, most frequent first.
pub fn mid_frequency_words(vocab: &Vocab, min_count: u64, max_count: u64, max_words: usize) -> BTreeSet<u32> {
    vocab
        .entries()
        .filter(|(_, tok, c)| *c >= min_count && *c <= max_count && tok.chars().any(char::is_alphanumeric))
        .take(max_words)
        .map(|(id, _, _)| id)
        .collect()
}

fn capped(n: usize, task: ProbeTask) -> RawLabel {
    match task.shape() {
        LabelShape::Count { classes } => RawLabel::Count(n.min(classes - 1)),
        _ => RawLabel::Count(n),
    }
}

fn slots<'a>(info: impl IntoIterator<Item = &'a SlotValue>) -> BTreeSet<String> {
    info.into_iter().map(|sv| sv.slot.clone()).collect()
}

fn values<'a>(info: impl IntoIterator<Item = &'a SlotValue>) -> BTreeSet<String> {
    info.into_iter().map(|sv| sv.value.clone()).collect()
}

/// Label of `task` for the context preceding System turn `turn_index`.
pub fn build_labels(
    task: ProbeTask,
    dialogue: &Dialogue,
    turn_index: usize,
    style: Style,
    options: &LabelOptions,
) -> Result<RawLabel, LabelError> {
    if !task.applies_to(style) {
        return Err(LabelError::NotApplicable { task, style });
    }
    match dialogue.turns.get(turn_index) {
        Some(t) if t.speaker == Speaker::System => {}
        _ => return Err(LabelError::NotSystemTurn(turn_index)),
    }
    let context = &dialogue.turns[..turn_index];
    let user_turns = || context.iter().filter(|t| t.speaker == Speaker::User);
    let recent: Option<&Turn> = user_turns().next_back();
    let recent_info: &[SlotValue] = recent.map(|t| t.user_info.as_slice()).unwrap_or(&[]);
    let act = dialogue.turns[turn_index].system_act.as_ref();
    let context_topics = || -> BTreeSet<String> { context.iter().flat_map(|t| t.topics.iter().cloned()).collect() };

    let label = match task {
        ProbeTask::UtteranceLoc => RawLabel::Count((5 * turn_index / dialogue.turns.len()).min(4)),
        ProbeTask::WordCont => {
            let total: usize = context.iter().map(|t| t.tokens.len()).sum();
            let skip = total.saturating_sub(CONTEXT_WINDOW);
            let latest = context
                .iter()
                .flat_map(|t| t.tokens.iter())
                .skip(skip)
                .filter(|id| options.mid_frequency.contains(id))
                .last();
            match latest {
                Some(&id) => RawLabel::Name(word_for(context, id)),
                None => return Err(LabelError::Skip),
            }
        }
        ProbeTask::IsMultiTopic => RawLabel::Count(usize::from(context_topics().len() > 1)),
        ProbeTask::NumAllTopics => {
            let n = if options.topics_prefix_scope {
                context_topics().len()
            } else {
                dialogue.goal_topics.len()
            };
            capped(n, task)
        }
        ProbeTask::AllTopics => RawLabel::Names(context_topics()),
        ProbeTask::RecentTopic => match recent.and_then(|t| t.topics.last()) {
            Some(topic) => RawLabel::Name(topic.clone()),
            None => return Err(LabelError::Skip),
        },
        ProbeTask::RecentSlots => RawLabel::Names(slots(recent_info)),
        ProbeTask::RecentValues => RawLabel::Names(values(recent_info)),
        ProbeTask::NumRecentInfo => capped(recent_info.len(), task),
        ProbeTask::AllSlots => RawLabel::Names(slots(user_turns().flat_map(|t| &t.user_info))),
        ProbeTask::AllValues => RawLabel::Names(values(user_turns().flat_map(|t| &t.user_info))),
        ProbeTask::NumAllInfo => capped(user_turns().map(|t| t.user_info.len()).sum(), task),
        ProbeTask::RepeatInfo | ProbeTask::NumRepeatInfo => {
            let n_user = user_turns().count();
            let earlier = slots(user_turns().take(n_user.saturating_sub(1)).flat_map(|t| &t.user_info));
            let repeated: BTreeSet<String> = slots(recent_info).into_iter().filter(|s| earlier.contains(s)).collect();
            if task == ProbeTask::RepeatInfo {
                RawLabel::Names(repeated)
            } else {
                capped(repeated.len(), task)
            }
        }
        ProbeTask::PersonalInfo => RawLabel::Names(dialogue.persona.clone().unwrap_or_default()),
        ProbeTask::ActionSelect => match act {
            Some(a) => RawLabel::Name(a.name.clone()),
            None => return Err(LabelError::Skip),
        },
        ProbeTask::EntitySlots => match act {
            Some(a) => RawLabel::Names(slots(&a.args)),
            None => return Err(LabelError::Skip),
        },
        ProbeTask::EntityValues => match act {
            Some(a) => RawLabel::Names(values(&a.args)),
            None => return Err(LabelError::Skip),
        },
    };
    Ok(label)
}

// Surface form of a token id; labels are named by words, not ids.
fn word_for(context: &[Turn], id: u32) -> String {
    context
        .iter()
        .flat_map(|t| t.tokens.iter().zip(&t.words))
        .find(|(t, _)| **t == id)
        .map(|(_, w)| w.clone())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, DialogueAct, Split};
    use alloc::string::ToString;
    use alloc::vec;

    fn sv(t: &str, s: &str, v: &str) -> SlotValue {
        SlotValue::new(t, s, v).unwrap()
    }

    fn hotel() -> Vec<String> {
        vec!["hotel".to_string()]
    }

    fn repeat_dialogue() -> Dialogue {
        Dialogue {
            id: "d".into(),
            turns: vec![
                Turn::user("hotel area centre", vec![sv("hotel", "area", "centre")], hotel()),
                Turn::system("ok", hotel(), None),
                Turn::user(
                    "hotel area centre price cheap",
                    vec![sv("hotel", "area", "centre"), sv("hotel", "price", "cheap")],
                    hotel(),
                ),
                Turn::system(
                    "booked",
                    hotel(),
                    Some(DialogueAct {
                        name: "hotel-book".into(),
                        args: vec![sv("hotel", "price", "cheap")],
                    }),
                ),
            ],
            goal_topics: hotel().into_iter().collect(),
            persona: None,
            split: Split::Train,
        }
    }

    fn names(xs: &[&str]) -> RawLabel {
        RawLabel::Names(xs.iter().map(|s| s.to_string()).collect())
    }

    fn label(task: ProbeTask, d: &Dialogue, i: usize) -> Result<RawLabel, LabelError> {
        build_labels(task, d, i, Style::GoalOriented, &LabelOptions::default())
    }

    #[test]
    fn repeat_example() {
        let d = repeat_dialogue();
        assert_eq!(label(ProbeTask::RepeatInfo, &d, 3), Ok(names(&["area"])));
        assert_eq!(label(ProbeTask::NumRepeatInfo, &d, 3), Ok(RawLabel::Count(1)));
        assert_eq!(label(ProbeTask::AllSlots, &d, 3), Ok(names(&["area", "price"])));
        assert_eq!(label(ProbeTask::NumAllInfo, &d, 3), Ok(RawLabel::Count(3)));
        assert_eq!(label(ProbeTask::RecentValues, &d, 3), Ok(names(&["centre", "cheap"])));
        assert_eq!(label(ProbeTask::EntitySlots, &d, 3), Ok(names(&["price"])));
        assert_eq!(label(ProbeTask::ActionSelect, &d, 1), Err(LabelError::Skip));
        assert_eq!(label(ProbeTask::RepeatInfo, &d, 1), Ok(names(&[])));
    }

    #[test]
    fn utterance_bucket_formula() {
        let mut d = repeat_dialogue();
        while d.turns.len() < 10 {
            let n = d.turns.len();
            d.turns.push(d.turns[n - 2].clone());
        }
        assert_eq!(label(ProbeTask::UtteranceLoc, &d, 7), Ok(RawLabel::Count(3)));
    }

    #[test]
    fn wrong_turn_and_style() {
        let d = repeat_dialogue();
        assert_eq!(label(ProbeTask::AllSlots, &d, 2), Err(LabelError::NotSystemTurn(2)));
        assert!(matches!(
            label(ProbeTask::PersonalInfo, &d, 1),
            Err(LabelError::NotApplicable { .. })
        ));
    }

    #[test]
    fn word_cont_takes_latest_mid_frequency_word() {
        let c = Corpus::new(Style::GoalOriented, vec![repeat_dialogue()]).unwrap();
        let d = &c.dialogues()[0];
        let mid = [c.vocab().encode("centre"), c.vocab().encode("price")].into_iter().collect();
        let opts = LabelOptions {
            mid_frequency: mid,
            ..Default::default()
        };
        assert_eq!(
            build_labels(ProbeTask::WordCont, d, 3, Style::ChitChat, &opts),
            Ok(RawLabel::Name("price".into()))
        );
        assert_eq!(
            build_labels(ProbeTask::WordCont, d, 1, Style::ChitChat, &opts),
            Ok(RawLabel::Name("centre".into()))
        );
        let none = LabelOptions::default();
        assert_eq!(
            build_labels(ProbeTask::WordCont, d, 1, Style::ChitChat, &none),
            Err(LabelError::Skip)
        );
    }

    #[test]
    fn mid_frequency_bounds() {
        let v = Vocab::build(["a", "a", "a", "b", "b", "c", "."]);
        let ids = mid_frequency_words(&v, 1, 2, 10);
        assert_eq!(ids, [v.encode("b"), v.encode("c")].into_iter().collect());
        assert_eq!(mid_frequency_words(&v, 1, 3, 1), [v.encode("a")].into_iter().collect());
    }
}
