use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::seed::{fnv1a, fnv1a_extend};

pub const PAD: u32 = 0;
pub const SOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;

/// Reserved token strings in id order.
pub const RESERVED: [&str; 4] = ["<pad>", "<sos>", "<eos>", "<unk>"];

/// Token/id mapping with frequencies. Ids 0..4 are reserved; corpus tokens
/// follow in order of descending frequency, ties broken lexicographically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: BTreeMap<String, u32>,
    id_to_token: Vec<String>,
    counts: Vec<u64>,
}

impl Vocab {
    pub fn build<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
        for w in words {
            if !RESERVED.contains(&w) {
                *freq.entry(w).or_insert(0) += 1;
            }
        }
        let mut ordered: Vec<(&str, u64)> = freq.into_iter().collect();
        ordered.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

        let mut vocab = Vocab {
            token_to_id: BTreeMap::new(),
            id_to_token: RESERVED.iter().map(|s| s.to_string()).collect(),
            counts: alloc::vec![0; RESERVED.len()],
        };
        for (w, c) in ordered {
            let id = vocab.id_to_token.len() as u32;
            vocab.token_to_id.insert(w.to_string(), id);
            vocab.id_to_token.push(w.to_string());
            vocab.counts.push(c);
        }
        vocab
    }

    /// Number of ids, reserved ones included.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_to_id.is_empty()
    }

    /// Reserved strings map to their own ids, unknown words to `UNK`.
    pub fn encode(&self, word: &str) -> u32 {
        if let Some(i) = RESERVED.iter().position(|r| *r == word) {
            return i as u32;
        }
        self.token_to_id.get(word).copied().unwrap_or(UNK)
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.token_to_id.get(word).copied()
    }

    pub fn decode(&self, id: u32) -> &str {
        self.id_to_token
            .get(id as usize)
            .map(String::as_str)
            .unwrap_or(RESERVED[UNK as usize])
    }

    /// Train-split frequency of `id` (0 for reserved ids).
    pub fn count(&self, id: u32) -> u64 {
        self.counts.get(id as usize).copied().unwrap_or(0)
    }

    /// Corpus tokens (reserved ids excluded) with their frequencies, in id order.
    pub fn entries(&self) -> impl Iterator<Item = (u32, &str, u64)> {
        self.id_to_token
            .iter()
            .zip(&self.counts)
            .enumerate()
            .skip(RESERVED.len())
            .map(|(i, (t, c))| (i as u32, t.as_str(), *c))
    }

    /// Stable digest of the id assignment.
    pub fn fingerprint(&self) -> u64 {
        self.id_to_token
            .iter()
            .fold(fnv1a(b"vocab"), |h, t| fnv1a_extend(fnv1a_extend(h, t.as_bytes()), &[0]))
    }
}
