//! Counter-based random streams.
//!
//! A stream is a `(base_seed, stream_index)` pair mapped onto a ChaCha8
//! generator seeded by `base_seed` and positioned on stream `stream_index`.
//! Child streams derive a fresh base seed by mixing the parent pair, so a
//! tree of streams (sweep cell → dataset → episode) never needs shared state.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub base_seed: u64,
    pub stream_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub const fn new(base_seed: u64, stream_index: u64) -> Self {
        Self {
            base_seed,
            stream_index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// Stream `index` under this one. Distinct parents give distinct families.
    pub fn child(&self, index: u64) -> RngStream {
        let mixed = splitmix64(self.base_seed ^ splitmix64(self.stream_index ^ 0x5851_F42D_4C95_7F2D));
        RngStream::new(mixed, index)
    }
}

/// Inverse-CDF draw from a probability row. The last positive-probability
/// bucket absorbs rounding slack in the cumulative sum.
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cum += p;
        last_positive = i;
        if u < cum {
            return i;
        }
    }
    last_positive
}

/// Uniform point on the simplex (Dirichlet with unit concentration).
pub fn uniform_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> alloc::vec::Vec<f64> {
    let mut w: alloc::vec::Vec<f64> = (0..n)
        .map(|_| -crate::num::ln(1.0 - rng.random::<f64>()))
        .collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    } else {
        w.iter_mut().for_each(|x| *x = 1.0 / n as f64);
    }
    w
}
