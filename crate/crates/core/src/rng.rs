use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over a sequence of byte strings, each followed by a separator so
/// that `["ab", "c"]` and `["a", "bc"]` hash differently.
pub fn mix_key(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// ChaCha8 generator on stream `stream` of key `seed`. Streams are
/// independent, so `(seed, stream)` behaves like a counter-based generator.
pub fn keyed_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
