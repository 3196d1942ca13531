//! Seeded Rayleigh-fading channel ensembles with distance-based pathloss, and
//! their binary file format.
//!
//! Random streams: a ChaCha20 generator seeded with `rng_seed`; stream 0 draws
//! the user distances, stream `k + 1` draws user `k`'s small-scale fading. A
//! user's channel therefore depends only on `(seed, k, distance)` and not on
//! how many other users are drawn or in which order.
//!
//! # File layout (little-endian, version 1)
//!
//! | offset | type | field |
//! |---|---|---|
//! | 0 | `[u8; 4]` | magic `b"MQPC"` |
//! | 4 | `u32` | version (1) |
//! | 8 | `u32` | K |
//! | 12 | `u32` | N_r |
//! | 16 | `u32` | N_t |
//! | 20 | `u64` | seed |
//! | 28 | `K × f64` | user distances, km |
//! | 28 + 8K | `K·N_r·N_t × 2 × f64` | entries: user-major, then row-major, each as (re, im) |

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat};
use crate::model::{ChannelSet, ValidatedConfig};

pub const MAGIC: &[u8; 4] = b"MQPC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelModelParams {
    pub pathloss_intercept_db: f64,
    pub pathloss_slope: f64,
    pub distance_range_km: [f64; 2],
    pub rng_seed: u64,
}

impl Default for ChannelModelParams {
    fn default() -> Self {
        ChannelModelParams {
            pathloss_intercept_db: 128.1,
            pathloss_slope: 37.6,
            distance_range_km: [0.1, 0.2],
            rng_seed: 0,
        }
    }
}

impl ChannelModelParams {
    pub fn with_seed(seed: u64) -> Self {
        ChannelModelParams {
            rng_seed: seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.distance_range_km;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Spec(format!(
                "distance range must be positive and ordered, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Linear power gain `10^(−(a + b·log10 d)/10)` for a distance in km.
pub fn pathloss_linear(distance_km: f64, params: &ChannelModelParams) -> Result<f64> {
    if !(distance_km > 0.0 && distance_km.is_finite()) {
        return Err(Error::Spec(format!("distance must be positive, got {distance_km}")));
    }
    let loss_db = params.pathloss_intercept_db + params.pathloss_slope * distance_km.log10();
    Ok(10f64.powf(-loss_db / 10.0))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draws from `distance_range_km`, one per user.
pub fn draw_distances(users: usize, params: &ChannelModelParams) -> Result<Vec<f64>> {
    params.validate()?;
    let [lo, hi] = params.distance_range_km;
    let mut rng = stream_rng(params.rng_seed, 0);
    Ok((0..users)
        .map(|_| {
            let u: f64 = rng.random();
            lo + (hi - lo) * u
        })
        .collect())
}

/// A channel realization plus the distances it was drawn at.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    pub channels: ChannelSet,
    pub distances_km: Vec<f64>,
    pub seed: u64,
}

/// Draws distances and channels from `params.rng_seed`.
pub fn generate_channels(cfg: &ValidatedConfig, params: &ChannelModelParams) -> Result<ChannelDraw> {
    let distances = draw_distances(cfg.users(), params)?;
    generate_channels_at(cfg, params, &distances)
}

/// Channels for fixed user distances; fading still comes from `params.rng_seed`.
pub fn generate_channels_at(
    cfg: &ValidatedConfig,
    params: &ChannelModelParams,
    distances_km: &[f64],
) -> Result<ChannelDraw> {
    if distances_km.len() != cfg.users() {
        return Err(Error::Dimension(format!(
            "{} distances for {} users",
            distances_km.len(),
            cfg.users()
        )));
    }
    let (nr, nt) = (cfg.nr(), cfg.nt());
    let mut channels = Vec::with_capacity(cfg.users());
    for (k, &dist) in distances_km.iter().enumerate() {
        let amp = pathloss_linear(dist, params)?.sqrt() * std::f64::consts::FRAC_1_SQRT_2;
        let mut rng = stream_rng(params.rng_seed, k as u64 + 1);
        // Row-major fill.
        let mut h = CMat::zeros(nr, nt);
        for r in 0..nr {
            for col in 0..nt {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                h[(r, col)] = c(amp * re, amp * im);
            }
        }
        channels.push(h);
    }
    Ok(ChannelDraw {
        channels: ChannelSet::new(channels)?,
        distances_km: distances_km.to_vec(),
        seed: params.rng_seed,
    })
}

pub fn write_channels<W: Write>(mut w: W, draw: &ChannelDraw) -> Result<()> {
    let ch = &draw.channels;
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(ch.users() as u32)?;
    w.write_u32::<LittleEndian>(ch.nr() as u32)?;
    w.write_u32::<LittleEndian>(ch.nt() as u32)?;
    w.write_u64::<LittleEndian>(draw.seed)?;
    for &d in &draw.distances_km {
        w.write_f64::<LittleEndian>(d)?;
    }
    for h in ch.iter() {
        for r in 0..h.nrows() {
            for col in 0..h.ncols() {
                w.write_f64::<LittleEndian>(h[(r, col)].re)?;
                w.write_f64::<LittleEndian>(h[(r, col)].im)?;
            }
        }
    }
    Ok(())
}

pub fn read_channels<R: Read>(mut r: R) -> Result<ChannelDraw> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::ChannelFormat(format!("bad magic {magic:?}")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(Error::ChannelFormat(format!("unsupported version {version}")));
    }
    let k = r.read_u32::<LittleEndian>()? as usize;
    let nr = r.read_u32::<LittleEndian>()? as usize;
    let nt = r.read_u32::<LittleEndian>()? as usize;
    if k == 0 || nr == 0 || nt == 0 {
        return Err(Error::ChannelFormat(format!("empty dimensions {k}×{nr}×{nt}")));
    }
    let seed = r.read_u64::<LittleEndian>()?;
    let distances_km = (0..k)
        .map(|_| r.read_f64::<LittleEndian>())
        .collect::<std::io::Result<Vec<_>>>()?;
    let mut channels = Vec::with_capacity(k);
    for _ in 0..k {
        let mut h = CMat::zeros(nr, nt);
        for row in 0..nr {
            for col in 0..nt {
                let re = r.read_f64::<LittleEndian>()?;
                let im = r.read_f64::<LittleEndian>()?;
                h[(row, col)] = c(re, im);
            }
        }
        channels.push(h);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::ChannelFormat(format!("{} trailing bytes", rest.len())));
    }
    Ok(ChannelDraw {
        channels: ChannelSet::new(channels)?,
        distances_km,
        seed,
    })
}

pub fn save_channels(path: &Path, draw: &ChannelDraw) -> Result<()> {
    let mut buf = Vec::new();
    write_channels(&mut buf, draw)?;
    crate::experiment::write_atomic(path, &buf)
}

pub fn load_channels(path: &Path) -> Result<ChannelDraw> {
    let bytes = std::fs::read(path)?;
    read_channels(bytes.as_slice())
}
