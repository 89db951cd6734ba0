//! Synthetic planted-segment benchmark.
//!
//! Dialogues are built from blocks of consecutive turns that share a
//! topic, with topics cycling block by block. Topic vocabularies are
//! disjoint, so a query drawn from one topic's vocabulary has a known
//! gold set: exactly the turns of that topic's block(s). That makes the
//! generator a recall oracle — any retriever worth its salt should find
//! the planted blocks — at a scale where a whole benchmark run takes
//! seconds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{DialogueSource, TestCase};

/// Generation parameters. Defaults give 20 dialogues × 60 turns with six
/// 10-turn topic blocks each, mild vocabulary noise, and one test query
/// per topic per dialogue.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub seed: u64,
    pub dialogues: usize,
    pub turns_per_dialogue: usize,
    /// Number of distinct topics; blocks cycle through them in order.
    pub topics: usize,
    /// Consecutive turns per topic block.
    pub block_len: usize,
    /// Words in each topic's (disjoint) vocabulary.
    pub vocab_size: usize,
    /// Words drawn per utterance (user and agent alike).
    pub words_per_utterance: usize,
    /// Words per test query.
    pub query_words: usize,
    /// Probability that one word of a user utterance is replaced by a
    /// word from a random (possibly different) topic.
    pub noise: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            seed: 7,
            dialogues: 20,
            turns_per_dialogue: 60,
            topics: 6,
            block_len: 10,
            vocab_size: 24,
            words_per_utterance: 8,
            query_words: 6,
            noise: 0.10,
        }
    }
}

/// Topic of a 1-based turn index: blocks of `block_len` cycling through
/// `topics`. Returns a 0-based topic id.
fn topic_of_turn(turn: usize, block_len: usize, topics: usize) -> usize {
    ((turn - 1) / block_len) % topics
}

/// Deterministically generates the benchmark: the same config (seed
/// included) always produces identical dialogues, down to the byte once
/// serialized.
pub fn generate_planted_benchmark(cfg: &PlantedConfig) -> Vec<DialogueSource> {
    assert!(cfg.topics >= 2, "need at least two topics to plant distractors");
    assert!(
        cfg.dialogues >= 1
            && cfg.turns_per_dialogue >= 1
            && cfg.block_len >= 1
            && cfg.vocab_size >= 1
            && cfg.words_per_utterance >= 1
            && cfg.query_words >= 1,
        "all counts must be positive"
    );
    assert!((0.0..=1.0).contains(&cfg.noise), "noise is a probability");

    // Topic vocabularies are disjoint by construction: words carry their
    // 1-based topic number.
    let vocab: Vec<Vec<String>> = (1..=cfg.topics)
        .map(|t| (0..cfg.vocab_size).map(|j| format!("topic{t}word{j}")).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dialogues = Vec::with_capacity(cfg.dialogues);
    for d in 0..cfg.dialogues {
        let mut turns = Vec::with_capacity(cfg.turns_per_dialogue);
        for i in 1..=cfg.turns_per_dialogue {
            let topic = topic_of_turn(i, cfg.block_len, cfg.topics);
            let mut user_words: Vec<&str> = (0..cfg.words_per_utterance)
                .map(|_| vocab[topic][rng.gen_range(0..cfg.vocab_size)].as_str())
                .collect();
            if rng.gen::<f64>() < cfg.noise {
                let at = rng.gen_range(0..cfg.words_per_utterance);
                let other = rng.gen_range(0..cfg.topics);
                user_words[at] = vocab[other][rng.gen_range(0..cfg.vocab_size)].as_str();
            }
            let agent_words: Vec<&str> = (0..cfg.words_per_utterance)
                .map(|_| vocab[topic][rng.gen_range(0..cfg.vocab_size)].as_str())
                .collect();
            turns.push((user_words.join(" "), agent_words.join(" ")));
        }

        let tests = (0..cfg.topics)
            .map(|topic| {
                let query_words: Vec<&str> = (0..cfg.query_words)
                    .map(|_| vocab[topic][rng.gen_range(0..cfg.vocab_size)].as_str())
                    .collect();
                let gold_turns = (1..=cfg.turns_per_dialogue)
                    .filter(|&i| topic_of_turn(i, cfg.block_len, cfg.topics) == topic)
                    .collect();
                TestCase {
                    query: query_words.join(" "),
                    gold_answer: format!("topic-{}", topic + 1),
                    gold_turns,
                    asked_after_turn: cfg.turns_per_dialogue,
                }
            })
            .collect();

        dialogues.push(DialogueSource {
            dialogue_id: format!("planted-{:03}", d + 1),
            turns,
            tests,
        });
    }
    dialogues
}
