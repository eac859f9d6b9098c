//! Seeded toy corpora used by tests, benches and desk-scale runs.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{QueryReplyPair, TokenSeq};

const TOPICS: [(&[&str; 6], &[&str; 6]); 10] = [
    (
        &["rain", "cloud", "umbrella", "storm", "forecast", "wind"],
        &["wet", "grey", "dry", "thunder", "sunny", "breezy"],
    ),
    (
        &["phone", "camera", "battery", "screen", "charger", "photo"],
        &["crush", "pixels", "lasts", "bright", "cable", "pretty"],
    ),
    (
        &["pizza", "noodle", "spicy", "dinner", "recipe", "soup"],
        &["cheese", "broth", "chili", "tasty", "cook", "warm"],
    ),
    (
        &["football", "match", "goal", "coach", "team", "league"],
        &["score", "win", "kick", "tactics", "fans", "season"],
    ),
    (
        &["movie", "actor", "ticket", "cinema", "sequel", "trailer"],
        &["popcorn", "oscar", "seat", "screening", "franchise", "teaser"],
    ),
    (
        &["exam", "teacher", "homework", "grade", "library", "class"],
        &["study", "lesson", "essay", "pass", "books", "notes"],
    ),
    (
        &["travel", "flight", "hotel", "beach", "passport", "luggage"],
        &["trip", "airport", "booking", "sand", "visa", "suitcase"],
    ),
    (
        &["cat", "puppy", "kitten", "vet", "leash", "pet"],
        &["meow", "bark", "cute", "checkup", "walk", "cuddle"],
    ),
    (
        &["guitar", "song", "concert", "piano", "album", "band"],
        &["chords", "melody", "stage", "keys", "tracks", "drummer"],
    ),
    (
        &["pregnant", "baby", "vitamin", "nurse", "diaper", "stroller"],
        &["maternity", "infant", "supplement", "clinic", "nappy", "pram"],
    ),
];

const QUERY_FILLERS: [&str; 8] = ["i", "the", "my", "is", "so", "what", "about", "really"];
const REPLY_LEADS: [&str; 4] = ["yes", "wow", "hmm", "oh"];

/// Topic-structured query/reply pairs.
///
/// Each query mixes two filler words with three words of one topic; the
/// reply maps each topic word to a fixed partner word, so replies are a
/// learnable function of queries and same-topic pairs share vocabulary.
pub fn desk_corpus(n_pairs: usize, seed: u64) -> Vec<QueryReplyPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_pairs)
        .map(|id| {
            let (qwords, rwords) = TOPICS[rng.random_range(0..TOPICS.len())];
            let mut picks: Vec<usize> = (0..qwords.len()).collect();
            picks.shuffle(&mut rng);
            picks.truncate(3);
            let mut query: Vec<&str> = picks.iter().map(|&i| qwords[i]).collect();
            for _ in 0..2 {
                let filler = *QUERY_FILLERS.choose(&mut rng).expect("non-empty");
                let at = rng.random_range(0..=query.len());
                query.insert(at, filler);
            }
            let mut reply = vec![*REPLY_LEADS.choose(&mut rng).expect("non-empty")];
            reply.extend(picks.iter().map(|&i| rwords[i]));
            QueryReplyPair {
                id,
                query: TokenSeq::from_whitespace(&query.join(" ")),
                reply: TokenSeq::from_whitespace(&reply.join(" ")),
            }
        })
        .collect()
}

fn random_sentence(rng: &mut ChaCha8Rng, words: &[String], min_len: usize, max_len: usize) -> TokenSeq {
    let len = rng.random_range(min_len..=max_len);
    let toks: Vec<String> = (0..len)
        .map(|_| words.choose(rng).expect("non-empty").clone())
        .collect();
    TokenSeq::new(toks).expect("generated tokens are well formed")
}

fn word_list(n_words: usize) -> Vec<String> {
    (0..n_words).map(|i| format!("w{i}")).collect()
}

/// Reply equals query; sentences of 3–6 tokens over `n_words` words.
pub fn copy_task(n_pairs: usize, n_words: usize, seed: u64) -> Vec<QueryReplyPair> {
    let words = word_list(n_words);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_pairs)
        .map(|id| {
            let q = random_sentence(&mut rng, &words, 3, 6);
            QueryReplyPair {
                id,
                query: q.clone(),
                reply: q,
            }
        })
        .collect()
}

/// Each query is paired with an independent random reply that must be
/// memorized.
pub fn fixed_pair_task(n_pairs: usize, n_words: usize, seed: u64) -> Vec<QueryReplyPair> {
    let words = word_list(n_words);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_pairs)
        .map(|id| QueryReplyPair {
            id,
            query: random_sentence(&mut rng, &words, 3, 6),
            reply: random_sentence(&mut rng, &words, 2, 5),
        })
        .collect()
}
