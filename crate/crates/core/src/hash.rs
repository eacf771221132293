//! Small deterministic hashing utilities.
//!
//! Experiments need stable pseudo-random quantities that survive process
//! restarts and platform changes: per-object corruption directions, sub-seeds
//! for parallel scene batches, tie-broken orderings. `std::hash` makes no
//! cross-version stability promise, so we pin FNV-1a (64 bit) here and hash
//! explicit little-endian byte strings.

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// FNV-1a over a byte slice.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Hashes a sequence of u64 words (each contributing its 8 little-endian
/// bytes). Used to derive per-entity values from a scene seed plus ids.
pub fn hash64(words: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    for &w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// Derives an independent sub-seed from a master seed and a stream index.
/// Equal inputs give equal outputs; distinct streams decorrelate.
pub fn split_seed(master: u64, stream: u64) -> u64 {
    hash64(&[master, stream])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_offset_basis() {
        assert_eq!(fnv1a(&[]), FNV_OFFSET);
        assert_eq!(hash64(&[]), FNV_OFFSET);
    }

    #[test]
    fn known_vectors() {
        // Reference values for the classic 64-bit FNV-1a test strings.
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn word_hash_matches_byte_hash() {
        let words = [3u64, 0xdeadbeef, 42];
        let mut bytes = Vec::new();
        for w in words {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        assert_eq!(hash64(&words), fnv1a(&bytes));
    }

    #[test]
    fn split_seed_decorrelates_streams() {
        let a = split_seed(7, 0);
        let b = split_seed(7, 1);
        let c = split_seed(8, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, split_seed(7, 0));
    }
}
