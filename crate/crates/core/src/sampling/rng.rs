//! Reproducible random streams.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::FieldKind;

/// ChaCha20 keyed by `seed`, with `stream` selecting an independent
/// substream. The same `(seed, stream)` yields the same sequence on every
/// platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng, spare: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Standard normal by the Marsaglia polar method.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * m);
                return u * m;
            }
        }
    }

    /// Complex normal with independent parts of variance ½, so `E|t|² = 1`.
    pub fn complex_normal(&mut self) -> Complex64 {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let re = self.normal() * r;
        let im = self.normal() * r;
        Complex64::new(re, im)
    }

    /// Standard normal of the given kind, as a complex number.
    pub fn standard(&mut self, kind: FieldKind) -> Complex64 {
        match kind {
            FieldKind::Real => Complex64::new(self.normal(), 0.0),
            FieldKind::Complex => self.complex_normal(),
        }
    }
}
