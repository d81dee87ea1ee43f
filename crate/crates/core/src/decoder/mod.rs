//! CTC decoding: lexicon beam search with n-gram fusion, and greedy
//! decoding with word timestamps.

mod beam;
mod greedy;
mod lexicon;
mod lm;
mod tokens;

pub use beam::{
    acoustic_prune, Decoder, DecoderConfig, DecoderState, HypScore, MergeRule, PartialTranscript,
    Transcript, Word,
};
pub use greedy::{greedy_decode, greedy_words, TimedToken, TimedWord};
pub use lexicon::Lexicon;
pub use lm::{LmState, LmWord, NgramLm, UNKNOWN_LOG10};
pub use tokens::TokenSet;
