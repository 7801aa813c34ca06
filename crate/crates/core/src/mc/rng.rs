//! Seeded random streams.
//!
//! Every experiment draws from a ChaCha20 stream keyed by the root seed and
//! an experiment label, with the trial index selecting the stream, so any
//! trial can be replayed on its own and trials may run in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// FNV-1a, used only to turn an experiment label into key bytes.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn stream(seed: u64, experiment: &str, trial: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&label_hash(experiment).to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(trial);
    rng
}
