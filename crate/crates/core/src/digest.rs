//! Content hashing used for provenance (census files, prompts, assets).

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a chat prompt. System and user text are separated by a NUL byte
/// so that moving text between the two parts changes the digest.
pub fn prompt_digest(system_text: &str, user_text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(system_text.as_bytes());
    hasher.update([0u8]);
    hasher.update(user_text.as_bytes());
    hex::encode(hasher.finalize())
}

/// A 64-bit value derived from a list of string parts, for seeding per-item RNG
/// streams independently of evaluation order.
pub fn seed_from_parts(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let out = hasher.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 output is 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn prompt_digest_separates_parts() {
        assert_ne!(prompt_digest("ab", "c"), prompt_digest("a", "bc"));
        assert_eq!(prompt_digest("a", "b"), prompt_digest("a", "b"));
    }

    #[test]
    fn seed_parts_are_length_prefixed() {
        assert_ne!(seed_from_parts(&["ab", "c"]), seed_from_parts(&["a", "bc"]));
    }
}
