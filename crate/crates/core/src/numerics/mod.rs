//! Numeric kernels shared by the physics and analysis modules.

pub mod eigen;
pub mod fourier;
pub mod linalg;
pub mod optimize;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use eigen::{symmetric_eigen, symmetric_eigenvalues, tridiagonal_eigen, SymmetricEigen, SymmetricMatrix};
pub use fourier::{autocorrelation, average_spectra, fast_len, periodogram, periodogram_owned, Estimator, SpectralDensity};
pub use linalg::{least_squares, LeastSquares};
pub use optimize::{nelder_mead, Minimum, NelderMeadOptions};

/// Master seed for every stochastic routine.
///
/// Parallel workers never share a generator: each takes its own ChaCha stream
/// via [`RngSeed::stream`], so results do not depend on scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Independent generator number `index` derived from this seed.
    pub fn stream(self, index: u64) -> ChaCha8Rng {
        let mut rng = self.rng();
        rng.set_stream(index.wrapping_add(1));
        rng
    }
}

impl Default for RngSeed {
    fn default() -> Self {
        RngSeed(0x5eed)
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        RngSeed(seed)
    }
}
