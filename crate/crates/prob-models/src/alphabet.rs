//! Symbol alphabets and the byte-token bijection.

use crate::{ProbError, Result};

/// A `2^n_bits`-symbol alphabet, `1 <= n_bits <= 8`, so every symbol maps
/// onto one byte token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alphabet {
    n_bits: u8,
}

impl Alphabet {
    pub fn new(n_bits: u8) -> Result<Self> {
        if !(1..=8).contains(&n_bits) {
            return Err(ProbError::InvalidParameter(format!(
                "n_bits must be in [1, 8], got {n_bits}"
            )));
        }
        Ok(Self { n_bits })
    }

    pub fn n_bits(&self) -> u8 {
        self.n_bits
    }

    pub fn size(&self) -> usize {
        1usize << self.n_bits
    }
}

/// Byte tokens drawn from an alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<u8>,
    pub alphabet: Alphabet,
}

/// Symbol value `k` maps to byte `k`.
pub fn ascii_tokenize(symbols: &[u8], alphabet: Alphabet) -> Result<TokenSequence> {
    let size = alphabet.size();
    if let Some(bad) = symbols.iter().find(|&&s| s as usize >= size) {
        return Err(ProbError::Format(format!(
            "symbol {bad} outside alphabet of size {size}"
        )));
    }
    Ok(TokenSequence { tokens: symbols.to_vec(), alphabet })
}

/// Inverse of [`ascii_tokenize`]; rejects bytes outside the alphabet.
pub fn ascii_detokenize(t: &TokenSequence) -> Result<Vec<u8>> {
    let size = t.alphabet.size();
    if let Some(bad) = t.tokens.iter().find(|&&b| b as usize >= size) {
        return Err(ProbError::Format(format!(
            "byte {bad} outside alphabet of size {size}"
        )));
    }
    Ok(t.tokens.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn identity_embedding() {
        let a = Alphabet::new(7).unwrap();
        let t = ascii_tokenize(&[0, 5, 127], a).unwrap();
        assert_eq!(t.tokens, vec![0, 5, 127]);
        assert_eq!(ascii_detokenize(&t).unwrap(), vec![0, 5, 127]);
    }

    #[test]
    fn round_trip_random_sequences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let n_bits = rng.gen_range(1..=8);
            let a = Alphabet::new(n_bits).unwrap();
            let len = rng.gen_range(0..64);
            let symbols: Vec<u8> = (0..len).map(|_| rng.gen_range(0..a.size()) as u8).collect();
            let t = ascii_tokenize(&symbols, a).unwrap();
            assert_eq!(ascii_detokenize(&t).unwrap(), symbols);
        }
    }

    #[test]
    fn out_of_alphabet_byte_is_a_format_error() {
        let a = Alphabet::new(7).unwrap();
        assert!(matches!(ascii_tokenize(&[200], a), Err(ProbError::Format(_))));
        let t = TokenSequence { tokens: vec![200], alphabet: a };
        assert!(matches!(ascii_detokenize(&t), Err(ProbError::Format(_))));
    }

    #[test]
    fn n_bits_bounds_enforced() {
        assert!(Alphabet::new(0).is_err());
        assert!(Alphabet::new(9).is_err());
    }
}
