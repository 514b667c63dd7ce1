//! Counter-based random numbers: every value is a hash of its coordinates, so
//! the result for a pixel never depends on which thread rendered it.

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn hash(parts: &[u64]) -> u64 {
    parts.iter().fold(0x9e37_79b9_7f4a_7c15, |acc, &p| mix(acc ^ mix(p.wrapping_add(0x632b_e59b_d9b4_e019))))
}

/// Stream of uniform numbers for one (seed, frame, pixel, sample) coordinate.
#[derive(Clone, Debug)]
pub struct PathRng {
    key: u64,
    dimension: u64,
}

impl PathRng {
    pub fn new(seed: u64, frame: u64, pixel: u64, sample: u64) -> Self {
        Self { key: hash(&[seed, frame, pixel, sample]), dimension: 0 }
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        let bits = mix(self.key ^ mix(self.dimension));
        self.dimension += 1;
        (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_pair(&mut self) -> (f64, f64) {
        (self.next_f64(), self.next_f64())
    }
}
