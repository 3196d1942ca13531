//! Random instances for unit tests.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{generate_channels, ChannelModelParams};
use crate::linalg::{c, CMat};
use crate::model::{ChannelSet, PrecoderSet, SystemConfig, ValidatedConfig};
use crate::solver::{initialize_precoders, InitStrategy};

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

/// Default powers (10 dBm total, −90 dBm noise), seeded channels and a
/// random PAPC-feasible precoder set.
pub fn random_instance(
    nt: usize,
    nr: usize,
    users: usize,
    d: usize,
    seed: u64,
) -> (ValidatedConfig, ChannelSet, PrecoderSet) {
    let cfg = SystemConfig::uniform(nt, nr, users, d, 10.0).validate().unwrap();
    let draw = generate_channels(&cfg, &ChannelModelParams::with_seed(seed)).unwrap();
    let v = initialize_precoders(&draw.channels, &cfg, InitStrategy::Random, seed ^ 0x5eed).unwrap();
    (cfg, draw.channels, v)
}
