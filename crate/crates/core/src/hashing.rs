//! Content hashing used for identifiers and deterministic jitter.

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of several string parts; parts are separated so that
/// `["ab", "c"]` and `["a", "bc"]` differ.
pub fn digest_parts(parts: &[&str]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hasher.finalize().into()
}

pub fn stable_u64(parts: &[&str]) -> u64 {
    let digest = digest_parts(parts);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Uniform value in `[0, 1)` derived from the parts.
pub fn unit_interval(parts: &[&str]) -> f64 {
    (stable_u64(parts) >> 11) as f64 / (1u64 << 53) as f64
}

pub fn short_hex(parts: &[&str], len: usize) -> String {
    let mut s = hex::encode(digest_parts(parts));
    s.truncate(len);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parts_are_length_prefixed() {
        assert_ne!(stable_u64(&["ab", "c"]), stable_u64(&["a", "bc"]));
    }

    #[test]
    fn unit_interval_in_range() {
        for i in 0..200 {
            let v = unit_interval(&["x", &i.to_string()]);
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
