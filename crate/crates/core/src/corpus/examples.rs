use alloc::string::String;
use alloc::vec::Vec;

use super::{Corpus, Speaker, Split, EOS};

/// Maximum number of context tokens kept (the most recent ones).
pub const CONTEXT_WINDOW: usize = 100;

/// Teacher-forcing pair for one System turn.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingExample {
    pub dialogue_id: String,
    /// Position of the dialogue in [`Corpus::dialogues`].
    pub dialogue_index: usize,
    /// Index of the System turn whose text is the target.
    pub turn_index: usize,
    /// All preceding turns concatenated, truncated to the last
    /// [`CONTEXT_WINDOW`] tokens.
    pub context: Vec<u32>,
    /// Lengths of the (possibly truncated) turns that make up `context`.
    pub segments: Vec<usize>,
    /// System turn tokens followed by EOS.
    pub target: Vec<u32>,
}

/// One example per System turn of `split`, in dialogue order.
pub fn make_examples(corpus: &Corpus, split: Split) -> Vec<TrainingExample> {
    let mut out = Vec::new();
    for (di, d) in corpus.dialogues().iter().enumerate() {
        if d.split != split {
            continue;
        }
        for (ti, turn) in d.turns.iter().enumerate() {
            if turn.speaker != Speaker::System {
                continue;
            }
            let prefix = &d.turns[..ti];
            let total: usize = prefix.iter().map(|t| t.tokens.len()).sum();
            let mut skip = total.saturating_sub(CONTEXT_WINDOW);
            let mut context = Vec::with_capacity(total.min(CONTEXT_WINDOW));
            let mut segments = Vec::new();
            for t in prefix {
                let n = t.tokens.len();
                if skip >= n {
                    skip -= n;
                    continue;
                }
                context.extend_from_slice(&t.tokens[skip..]);
                segments.push(n - skip);
                skip = 0;
            }
            let mut target = turn.tokens.clone();
            target.push(EOS);
            out.push(TrainingExample {
                dialogue_id: d.id.clone(),
                dialogue_index: di,
                turn_index: ti,
                context,
                segments,
                target,
            });
        }
    }
    out
}
