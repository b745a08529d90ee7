//! Keyed random streams.
//!
//! Every random draw in the toolkit comes from a [`RngStream`] obtained from a
//! [`StreamKey`]. Keys are derived by hashing `(master seed, purpose tag, index)`
//! and, inside a tree, by hashing the Ulam–Harris path of a node. A stream is
//! therefore a pure function of *what* it is used for, never of *when* or on
//! which thread it is created, so any parallel schedule reproduces the same
//! numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// The generator behind every stream.
pub type RngStream = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// A 64-bit key identifying one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    /// Root key for a master seed.
    pub fn new(seed: u64) -> Self {
        StreamKey(mix64(seed ^ 0x5EED_5EED_5EED_5EED))
    }

    /// Sub-key for a named purpose ("martingale", "leaf", ...).
    pub fn tag(self, purpose: &str) -> Self {
        StreamKey(mix64(self.0 ^ mix64(fnv1a(purpose))))
    }

    /// Sub-key for the `index`-th item of a family (sample, path, tree).
    pub fn index(self, index: u64) -> Self {
        StreamKey(mix64(self.0.rotate_left(17) ^ mix64(index.wrapping_add(0xA5A5))))
    }

    /// Key of the `i`-th child (zero based) of the tree node with this key.
    pub fn child(self, i: usize) -> Self {
        StreamKey(mix64(self.0.wrapping_mul(GOLDEN) ^ (i as u64 + 1)))
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(self) -> RngStream {
        let mut seed = [0u8; 32];
        let mut z = self.0;
        for chunk in seed.chunks_exact_mut(8) {
            z = mix64(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// Evaluates `f` on `0..n` in parallel and returns the results in index order.
///
/// Reductions over the returned vector are sequential, so sums are identical
/// for any thread count.
pub fn par_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_key_same_stream() {
        let a: Vec<u64> = (0..8).map(|_| 0).scan(StreamKey::new(7).tag("x").rng(), |r, _: u64| Some(r.random())).collect();
        let b: Vec<u64> = (0..8).map(|_| 0).scan(StreamKey::new(7).tag("x").rng(), |r, _: u64| Some(r.random())).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn derivations_are_distinct() {
        let root = StreamKey::new(1);
        let keys = [
            root,
            root.tag("a"),
            root.tag("b"),
            root.index(0),
            root.index(1),
            root.child(0),
            root.child(1),
            root.child(0).child(0),
            StreamKey::new(2),
        ];
        for i in 0..keys.len() {
            for j in i + 1..keys.len() {
                assert_ne!(keys[i], keys[j], "{i} vs {j}");
            }
        }
    }

    #[test]
    fn par_map_is_thread_count_independent() {
        let f = |i: u64| -> f64 { StreamKey::new(3).index(i).rng().random::<f64>() };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| par_map_indexed(500, f));
        let many = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap().install(|| par_map_indexed(500, f));
        assert_eq!(one, many);
    }
}
