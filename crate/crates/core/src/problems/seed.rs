use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which independent noise stream a draw belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Gradient,
    HessianNoise,
    Probe,
}

impl Channel {
    fn tag(self) -> u64 {
        match self {
            Channel::Gradient => 0x6772_6164,
            Channel::HessianNoise => 0x6865_7373,
            Channel::Probe => 0x7072_6f62,
        }
    }
}

/// Addresses one reproducible noise draw: the same triple always yields the
/// same stream, and distinct triples yield independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BatchSeed {
    pub base_seed: u64,
    pub step_index: u64,
    pub channel: Channel,
}

impl BatchSeed {
    pub fn new(base_seed: u64, step_index: u64, channel: Channel) -> Self {
        Self {
            base_seed,
            step_index,
            channel,
        }
    }

    pub fn with_channel(self, channel: Channel) -> Self {
        Self { channel, ..self }
    }

    /// RNG for a named sub-stream of this seed (e.g. batch selection vs.
    /// additive noise), so that consumers of one seed never alias.
    pub fn rng(&self, substream: u64) -> ChaCha8Rng {
        let mut h = mix64(self.base_seed ^ 0x9e37_79b9_7f4a_7c15);
        h = mix64(h ^ self.step_index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        h = mix64(h ^ self.channel.tag());
        h = mix64(h ^ substream.wrapping_mul(0x94d0_49bb_1331_11eb));
        ChaCha8Rng::seed_from_u64(h)
    }
}

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(mix64(seed) ^ stream))
}
