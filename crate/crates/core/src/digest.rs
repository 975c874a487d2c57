//! SHA-256 helpers shared by the cache, manifests and seed derivation.

use sha2::{Digest, Sha256};

/// Hex digest of a sequence of byte fields. Each field is length-prefixed so
/// that `("ab", "c")` and `("a", "bc")` hash differently.
pub fn fields_hex(fields: &[&[u8]]) -> String {
    hex::encode(fields_raw(fields))
}

pub fn fields_raw(fields: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for field in fields {
        hasher.update((field.len() as u64).to_le_bytes());
        hasher.update(field);
    }
    hasher.finalize().into()
}

pub fn bytes_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
