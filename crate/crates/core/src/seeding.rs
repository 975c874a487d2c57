//! Deterministic RNG derivation.
//!
//! Every random draw in the pipeline comes from a ChaCha stream keyed by a
//! base seed plus a purpose label and coordinates (iteration, record, ...).
//! Streams never depend on scheduling order, so parallel fan-out does not
//! change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::digest;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream for `(seed, label, coords)`.
pub fn derived(seed: u64, label: &str, coords: &[u64]) -> Rng {
    let mut fields: Vec<Vec<u8>> = vec![seed.to_le_bytes().to_vec(), label.as_bytes().to_vec()];
    fields.extend(coords.iter().map(|c| c.to_le_bytes().to_vec()));
    let refs: Vec<&[u8]> = fields.iter().map(Vec::as_slice).collect();
    ChaCha8Rng::from_seed(digest::fields_raw(&refs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derived_streams_are_reproducible_and_distinct() {
        let a: u64 = derived(7, "e-step", &[1, 2]).random();
        let b: u64 = derived(7, "e-step", &[1, 2]).random();
        let c: u64 = derived(7, "e-step", &[2, 1]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
