//! The shared contract: anything that maps a symbol prefix to a
//! distribution over the alphabet for the next position.

use crate::{Alphabet, FactorizedModel, Result};

pub trait ProbabilityProvider {
    fn alphabet(&self) -> Alphabet;

    /// Distribution over the alphabet for the position following `prefix`.
    /// Entries are nonnegative and sum to 1 within 1e-6.
    fn next_dist(&mut self, prefix: &[u8]) -> Result<Vec<f64>>;
}

/// Context-free provider view of a factorized model.
pub struct FmProvider<'a> {
    fm: &'a FactorizedModel,
}

impl<'a> FmProvider<'a> {
    pub fn new(fm: &'a FactorizedModel) -> Self {
        Self { fm }
    }
}

impl ProbabilityProvider for FmProvider<'_> {
    fn alphabet(&self) -> Alphabet {
        self.fm.alphabet()
    }

    fn next_dist(&mut self, _prefix: &[u8]) -> Result<Vec<f64>> {
        Ok(self.fm.pi().to_vec())
    }
}
