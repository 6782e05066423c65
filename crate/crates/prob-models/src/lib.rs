//! Probability estimators over quantized-symbol alphabets.
//!
//! Three interchangeable sources feed the entropy coder: a context-free
//! factorized model of symbol marginals, a decoder-only transformer over
//! byte tokens, and an external next-token provider reached over a small
//! JSON/HTTP protocol (with an in-repo mock server). All of them satisfy
//! the [`ProbabilityProvider`] contract: prefix in, distribution over the
//! alphabet out.

mod alphabet;
mod error;
mod fm;
mod llm;
mod lm;
pub mod mock;
mod provider;

pub use alphabet::{ascii_detokenize, ascii_tokenize, Alphabet, TokenSequence};
pub use error::ProbError;
pub use fm::{fit_fm, FactorizedModel};
pub use llm::{build_prompt, LlmClient, LlmClientConfig, LlmProvider};
pub use lm::{
    lm_cross_entropy_bits, lm_forward, restrict_to_alphabet, train_lm, LmConfig, LmModel,
    LmProvider, LmState, LM_VOCAB,
};
pub use provider::{FmProvider, ProbabilityProvider};

pub type Result<T> = std::result::Result<T, ProbError>;
