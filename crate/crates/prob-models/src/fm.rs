//! Factorized (context-free) marginal model with additive smoothing.

use serde::{Deserialize, Serialize};

use crate::{Alphabet, ProbError, Result, TokenSequence};

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedModel {
    pi: Vec<f64>,
    alphabet: Alphabet,
}

/// Serialized form (JSON sidecar next to the checkpoints).
#[derive(Serialize, Deserialize)]
struct FmFile {
    n_bits: u8,
    pi: Vec<f64>,
}

impl FactorizedModel {
    pub fn from_probabilities(pi: Vec<f64>, alphabet: Alphabet) -> Result<Self> {
        if pi.len() != alphabet.size() {
            return Err(ProbError::InvalidParameter(format!(
                "probability vector length {} does not match alphabet size {}",
                pi.len(),
                alphabet.size()
            )));
        }
        if pi.iter().any(|p| !(*p > 0.0)) {
            return Err(ProbError::InvalidParameter("marginals must be strictly positive".into()));
        }
        let sum: f64 = pi.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ProbError::InvalidParameter(format!("marginals sum to {sum}")));
        }
        Ok(Self { pi, alphabet })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Context-free next-symbol distribution (the prefix is irrelevant).
    pub fn next_dist(&self) -> &[f64] {
        &self.pi
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FmFile { n_bits: self.alphabet.n_bits(), pi: self.pi.clone() })
            .expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: FmFile =
            serde_json::from_str(text).map_err(|e| ProbError::Format(format!("fm json: {e}")))?;
        Self::from_probabilities(f.pi, Alphabet::new(f.n_bits)?)
    }
}

/// `pi_i = (count_i + 1) / (total + size)`: strictly positive for entropy
/// coding no matter the corpus.
pub fn fit_fm(corpus: &[TokenSequence], alphabet: Alphabet) -> Result<FactorizedModel> {
    if corpus.is_empty() || corpus.iter().all(|s| s.tokens.is_empty()) {
        return Err(ProbError::InvalidParameter("empty corpus".into()));
    }
    let size = alphabet.size();
    let mut counts = vec![0u64; size];
    let mut total = 0u64;
    for seq in corpus {
        for &t in &seq.tokens {
            if t as usize >= size {
                return Err(ProbError::InvalidParameter(format!(
                    "corpus token {t} outside alphabet of size {size}"
                )));
            }
            counts[t as usize] += 1;
            total += 1;
        }
    }
    let denom = (total + size as u64) as f64;
    let pi = counts.iter().map(|&c| (c + 1) as f64 / denom).collect();
    FactorizedModel::from_probabilities(pi, alphabet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ascii_tokenize;

    #[test]
    fn all_zero_corpus_hand_case() {
        let a = Alphabet::new(1).unwrap();
        let corpus = vec![ascii_tokenize(&[0; 8], a).unwrap()];
        let fm = fit_fm(&corpus, a).unwrap();
        assert_eq!(fm.pi(), &[9.0 / 10.0, 1.0 / 10.0]);
    }

    #[test]
    fn uniform_corpus_gives_uniform_marginals() {
        let a = Alphabet::new(2).unwrap();
        let corpus = vec![ascii_tokenize(&[0, 1, 2, 3, 0, 1, 2, 3], a).unwrap()];
        let fm = fit_fm(&corpus, a).unwrap();
        for p in fm.pi() {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn marginals_always_sum_to_one() {
        let a = Alphabet::new(3).unwrap();
        let corpus = vec![ascii_tokenize(&[7, 7, 7, 1], a).unwrap()];
        let fm = fit_fm(&corpus, a).unwrap();
        let sum: f64 = fm.pi().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_corpus_rejected() {
        let a = Alphabet::new(2).unwrap();
        assert!(matches!(fit_fm(&[], a), Err(ProbError::InvalidParameter(_))));
    }

    #[test]
    fn next_dist_ignores_any_prefix() {
        use crate::{FmProvider, ProbabilityProvider};
        let a = Alphabet::new(2).unwrap();
        let fm = fit_fm(&[ascii_tokenize(&[0, 1, 1, 3], a).unwrap()], a).unwrap();
        let mut p = FmProvider::new(&fm);
        assert_eq!(p.next_dist(&[]).unwrap(), p.next_dist(&[3, 2, 1]).unwrap());
        assert_eq!(p.next_dist(&[0]).unwrap(), fm.pi().to_vec());
    }

    #[test]
    fn json_round_trip() {
        let a = Alphabet::new(2).unwrap();
        let fm = fit_fm(&[ascii_tokenize(&[0, 1, 2, 3, 3], a).unwrap()], a).unwrap();
        let back = FactorizedModel::from_json(&fm.to_json()).unwrap();
        assert_eq!(fm, back);
    }
}
