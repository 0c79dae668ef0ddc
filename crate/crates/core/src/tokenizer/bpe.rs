use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use super::Vocabulary;

type Pair = (u32, u32);

/// Heap entry: higher count first, then the lexicographically smaller
/// (left, right) token strings.
#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: String,
    right: String,
    pair: Pair,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| (&other.left, &other.right).cmp(&(&self.left, &self.right)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn candidate(vocab: &Vocabulary, pair: Pair, count: u64) -> Candidate {
    Candidate {
        count,
        left: vocab.id_to_token[pair.0 as usize].clone(),
        right: vocab.id_to_token[pair.1 as usize].clone(),
        pair,
    }
}

/// Learns merges over weighted words, adding merged tokens to `vocab`.
///
/// Stale heap entries are skipped when popped: an entry is current only if
/// its count still equals the live pair count.
pub(super) fn learn_merges(
    mut words: Vec<(Vec<u32>, u64)>,
    vocab: &mut Vocabulary,
    joiner: &str,
    vocab_size: usize,
) -> Vec<Pair> {
    let mut counts: HashMap<Pair, u64> = HashMap::new();
    let mut where_: HashMap<Pair, BTreeSet<usize>> = HashMap::new();
    for (wi, (w, c)) in words.iter().enumerate() {
        for p in w.windows(2) {
            let pair = (p[0], p[1]);
            *counts.entry(pair).or_default() += c;
            where_.entry(pair).or_default().insert(wi);
        }
    }
    let mut heap: BinaryHeap<Candidate> = counts
        .iter()
        .map(|(&pair, &c)| candidate(vocab, pair, c))
        .collect();

    let mut merges = Vec::new();
    while vocab.len() < vocab_size {
        let Some(top) = heap.pop() else { break };
        if counts.get(&top.pair).copied().unwrap_or(0) != top.count {
            continue;
        }
        if top.count < 2 {
            break;
        }
        let (l, r) = top.pair;
        let merged = vocab.insert(format!("{}{joiner}{}", top.left, top.right));
        merges.push(top.pair);

        let mut delta: HashMap<Pair, i64> = HashMap::new();
        let affected = where_.remove(&top.pair).unwrap_or_default();
        for wi in affected {
            let (word, c) = &mut words[wi];
            let c = *c as i64;
            let mut next = Vec::with_capacity(word.len());
            let mut i = 0;
            let mut changed = false;
            while i < word.len() {
                if i + 1 < word.len() && word[i] == l && word[i + 1] == r {
                    next.push(merged);
                    i += 2;
                    changed = true;
                } else {
                    next.push(word[i]);
                    i += 1;
                }
            }
            if !changed {
                continue;
            }
            for p in word.windows(2) {
                *delta.entry((p[0], p[1])).or_default() -= c;
            }
            for p in next.windows(2) {
                let pair = (p[0], p[1]);
                *delta.entry(pair).or_default() += c;
                where_.entry(pair).or_default().insert(wi);
            }
            *word = next;
        }
        let mut touched: Vec<(Pair, i64)> = delta.into_iter().filter(|&(_, d)| d != 0).collect();
        touched.sort_unstable();
        for (pair, d) in touched {
            let entry = counts.entry(pair).or_default();
            *entry = (*entry as i64 + d) as u64;
            let now = *entry;
            if now == 0 {
                counts.remove(&pair);
            } else {
                heap.push(candidate(vocab, pair, now));
            }
        }
    }
    merges
}
