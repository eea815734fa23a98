//! Document clustering with the K-tree.
//!
//! The K-tree is a height-balanced cluster tree in the spirit of a B⁺-tree:
//! data vectors live in the leaves, internal nodes hold centroid keys that
//! form a nearest-neighbour search tree, and full nodes are split with
//! 2-means. Around it sit the pieces needed to run clustering experiments on
//! text and link data:
//!
//! * [`corpus`]: TF-IDF, BM25 and LF-IDF weighting, feature culling and
//!   representation concatenation over a sparse document matrix.
//! * [`kmeans`]: Lloyd iterations, k-means++ seeding and best-of-n restarts.
//! * [`ktree`]: the tree itself, cluster extraction and rearrangement.
//! * [`nmf`]: projected-gradient non-negative matrix factorization.
//! * [`eval`]: purity, entropy and negentropy.
//! * [`classify`]: a one-vs-rest linear SVM with committee fusion.
//! * [`synth`]: a seeded synthetic labelled corpus with a planted link graph.

pub mod classify;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod kmeans;
pub mod ktree;
pub mod nmf;
pub mod synth;
pub mod vectors;

pub use error::{Error, Result};
pub use eval::{Clustering, LabelSet};
pub use ktree::{KTree, KTreeConfig};
pub use vectors::DenseVector;

/// The random generator used throughout the crate.
///
/// ChaCha with 8 rounds, seeded through `SeedableRng::seed_from_u64`. Every
/// randomized operation takes one explicitly so runs are reproducible.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
