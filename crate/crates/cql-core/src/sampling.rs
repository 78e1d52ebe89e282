//! Deterministic low-discrepancy and pseudo-random sampling.
//!
//! The threshold estimators in [`crate::expulsion`] and [`crate::transfer`]
//! maximise field norms over sample clouds. Reproducibility of the certified
//! constants requires the exact same clouds on every run and platform, so the
//! generators live here rather than behind an external RNG crate: a Halton
//! sequence for space-filling clouds and a SplitMix64 stream for the
//! randomized equivalence checks.

/// First `dim` coordinates of the Halton sequence, skipping the first
/// `skip` points (the leading points of a Halton sequence are poorly
/// distributed). Bases are the first five primes; `dim <= 5`.
pub fn halton(n: usize, dim: usize, skip: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 5] = [2, 3, 5, 7, 11];
    assert!(dim <= PRIMES.len(), "halton supports at most 5 dimensions");
    let mut out = vec![vec![0.0; dim]; n];
    for (d, &p) in PRIMES[..dim].iter().enumerate() {
        for (j, row) in out.iter_mut().enumerate() {
            let mut i = (skip + 1 + j) as u64;
            let mut f = 1.0;
            let mut r = 0.0;
            while i > 0 {
                f /= p as f64;
                r += f * (i % p) as f64;
                i /= p;
            }
            row[d] = r;
        }
    }
    out
}

/// Quasi-uniform cloud in the closed ball of the given radius.
///
/// Radial coordinate uses the volume-uniform cube-root law, but every other
/// sample is pushed to the boundary sphere: the cloud feeds suprema of norms
/// over the ball and maxima are typically attained at the boundary.
pub fn ball_samples(radius: f64, n: usize) -> Vec<[f64; 3]> {
    let h = halton(n, 4, 20);
    let mut out = Vec::with_capacity(n);
    for (j, row) in h.iter().enumerate() {
        let cos_t = 2.0 * row[0] - 1.0;
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        let phi = 2.0 * std::f64::consts::PI * row[1];
        let r = if j % 2 == 0 {
            radius
        } else {
            radius * row[2].cbrt()
        };
        out.push([r * sin_t * phi.cos(), r * sin_t * phi.sin(), r * cos_t]);
    }
    out
}

/// SplitMix64 pseudo-random stream. Tiny, seedable, and stable across
/// platforms — used wherever a check calls for "random" probe points.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform in the cube [-half, half]^3.
    pub fn cube3(&mut self, half: f64) -> [f64; 3] {
        [
            self.uniform(-half, half),
            self.uniform(-half, half),
            self.uniform(-half, half),
        ]
    }

    /// Uniform direction on the unit sphere (normalized cube rejection).
    pub fn unit3(&mut self) -> [f64; 3] {
        loop {
            let v = self.cube3(1.0);
            let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            if n2 > 1e-4 && n2 <= 1.0 {
                let n = n2.sqrt();
                return [v[0] / n, v[1] / n, v[2] / n];
            }
        }
    }
}
