//! Procedural streetscapes: sky gradient, textured ground, rectangular
//! buildings and elliptical trees.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::{round_to_u8, ImageBuffer};
use super::DatasetError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ground {
    Grass,
    Concrete,
    Gravel,
}

impl Ground {
    pub const ALL: [Ground; 3] = [Ground::Grass, Ground::Concrete, Ground::Gravel];

    /// Base colour and per-pixel noise amplitude.
    fn palette(self) -> ([f64; 3], f64) {
        match self {
            Ground::Grass => (GRASS, 14.0),
            Ground::Concrete => (CONCRETE, 6.0),
            Ground::Gravel => (GRAVEL, 22.0),
        }
    }
}

const SKY_TOP: [f64; 3] = [72.0, 128.0, 206.0];
const SKY_HORIZON: [f64; 3] = [178.0, 206.0, 232.0];
const GRASS: [f64; 3] = [78.0, 168.0, 58.0];
const CONCRETE: [f64; 3] = [104.0, 104.0, 108.0];
const GRAVEL: [f64; 3] = [128.0, 120.0, 110.0];
const FACADES: [[f64; 3]; 4] = [
    [156.0, 84.0, 70.0],
    [172.0, 166.0, 156.0],
    [104.0, 106.0, 118.0],
    [190.0, 174.0, 140.0],
];
const WINDOW: [f64; 3] = [44.0, 52.0, 66.0];
const CANOPY: [f64; 3] = [46.0, 124.0, 42.0];
const TRUNK: [f64; 3] = [92.0, 66.0, 40.0];

/// What each pixel of a scene depicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    Sky,
    Ground,
    Building,
    Tree,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub ground: Ground,
    /// 0..=4
    pub building_count: u8,
    /// Building height relative to the sky band, in (0, 1).
    pub building_height_frac: f64,
    /// 0..=4
    pub tree_count: u8,
    /// Horizon row as a fraction of image height, in (0.3, 0.7).
    pub horizon_frac: f64,
    pub seed: u64,
}

impl SceneParams {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |what: &str| Err(DatasetError::InvalidParams(what.to_string()));
        if self.building_count > 4 {
            return bad("building_count must be in 0..=4");
        }
        if self.tree_count > 4 {
            return bad("tree_count must be in 0..=4");
        }
        if !(self.building_height_frac > 0.0 && self.building_height_frac < 1.0) {
            return bad("building_height_frac must be in (0, 1)");
        }
        if !(self.horizon_frac > 0.3 && self.horizon_frac < 0.7) {
            return bad("horizon_frac must be in (0.3, 0.7)");
        }
        Ok(())
    }
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|c| a[c] + (b[c] - a[c]) * t)
}

fn to_rgb(c: [f64; 3]) -> [u8; 3] {
    c.map(round_to_u8)
}

fn jitter(rng: &mut ChaCha8Rng, c: [f64; 3], amp: f64) -> [f64; 3] {
    if amp == 0.0 {
        return c;
    }
    let shade = rng.random_range(-amp..=amp);
    c.map(|v| v + shade)
}

/// Renders a scene and its per-pixel region labels.
pub fn synth_scene_with_regions(
    params: &SceneParams,
    size: u32,
) -> Result<(ImageBuffer, Vec<Region>), DatasetError> {
    params.validate()?;
    if size < 4 {
        return Err(DatasetError::Dimensions("scene size must be ≥ 4".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let s = size as usize;
    let sf = size as f64;
    let horizon = ((params.horizon_frac * sf).round() as usize).clamp(1, s - 1);
    let mut img = ImageBuffer::filled(size, size, [0, 0, 0]);
    let mut regions = vec![Region::Sky; s * s];

    for y in 0..horizon {
        let t = if horizon > 1 { y as f64 / (horizon - 1) as f64 } else { 1.0 };
        let c = to_rgb(lerp3(SKY_TOP, SKY_HORIZON, t));
        for x in 0..s {
            img.set_pixel(x as u32, y as u32, c);
        }
    }
    let (base, amp) = params.ground.palette();
    for y in horizon..s {
        // slightly darker towards the viewer
        let depth = (y - horizon) as f64 / (s - horizon) as f64;
        let row = base.map(|v| v * (1.0 - 0.12 * depth));
        for x in 0..s {
            let mut c = jitter(&mut rng, row, amp);
            if params.ground == Ground::Gravel && rng.random_bool(0.15) {
                c = c.map(|v| v + 40.0);
            }
            img.set_pixel(x as u32, y as u32, to_rgb(c));
            regions[y * s + x] = Region::Ground;
        }
    }

    for _ in 0..params.building_count {
        let width = rng.random_range(sf / 6.0..=sf / 2.5).round().max(2.0) as usize;
        let left = rng.random_range(0..=s - width.min(s));
        let height = (params.building_height_frac * horizon as f64 * rng.random_range(0.75..=1.0))
            .round()
            .max(1.0) as usize;
        let bottom = (horizon + s / 16).min(s);
        let top = bottom.saturating_sub(height + s / 16);
        let facade = FACADES[rng.random_range(0..FACADES.len())];
        let pitch = (s / 8).max(3);
        for y in top..bottom {
            for x in left..(left + width).min(s) {
                let (dy, dx) = (y - top, x - left);
                let window = dy % pitch == pitch / 2 && dx % pitch == pitch / 2 && y + pitch / 2 < horizon;
                let c = if window { WINDOW } else { jitter(&mut rng, facade, 4.0) };
                img.set_pixel(x as u32, y as u32, to_rgb(c));
                regions[y * s + x] = Region::Building;
            }
        }
    }

    for _ in 0..params.tree_count {
        let rx = rng.random_range(sf / 14.0..=sf / 7.0);
        let ry = rx * rng.random_range(1.0..=1.4);
        let cx = rng.random_range(0.0..sf);
        let base_y = horizon as f64 + rng.random_range(0.0..=sf / 10.0);
        let cy = base_y - ry - sf / 16.0;
        let trunk_w = (rx / 3.0).max(1.0);
        for y in 0..s {
            for x in 0..s {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let inside = ((px - cx) / rx).powi(2) + ((py - cy) / ry).powi(2) <= 1.0;
                let trunk = (px - cx).abs() <= trunk_w / 2.0 && py > cy && py <= base_y;
                let c = if inside {
                    jitter(&mut rng, CANOPY, 16.0)
                } else if trunk {
                    TRUNK
                } else {
                    continue;
                };
                img.set_pixel(x as u32, y as u32, to_rgb(c));
                regions[y * s + x] = Region::Tree;
            }
        }
    }
    Ok((img, regions))
}

pub fn synth_scene(params: &SceneParams, size: u32) -> Result<ImageBuffer, DatasetError> {
    synth_scene_with_regions(params, size).map(|(img, _)| img)
}

/// Bounds from which [`SceneParams`] are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDistribution {
    /// Relative weights for grass, concrete, gravel.
    pub ground_weights: [f64; 3],
    /// Inclusive range.
    pub building_count: [u8; 2],
    pub building_height_frac: [f64; 2],
    /// Inclusive range.
    pub tree_count: [u8; 2],
    pub horizon_frac: [f64; 2],
}

impl SceneDistribution {
    /// Parkland: grass, few low buildings, many trees.
    pub fn green() -> Self {
        SceneDistribution {
            ground_weights: [1.0, 0.0, 0.0],
            building_count: [0, 1],
            building_height_frac: [0.15, 0.4],
            tree_count: [2, 4],
            horizon_frac: [0.4, 0.55],
        }
    }

    /// Built-up streets: sealed ground, tall buildings, few trees.
    pub fn grey() -> Self {
        SceneDistribution {
            ground_weights: [0.0, 0.7, 0.3],
            building_count: [3, 4],
            building_height_frac: [0.55, 0.95],
            tree_count: [0, 1],
            horizon_frac: [0.4, 0.55],
        }
    }

    /// Pointwise blend; `t = 0` gives `self`, `t = 1` gives `other`.
    pub fn blend(&self, other: &SceneDistribution, t: f64) -> SceneDistribution {
        let mix = |a: f64, b: f64| a + (b - a) * t;
        let mix_u8 = |a: u8, b: u8| mix(a as f64, b as f64).round() as u8;
        SceneDistribution {
            ground_weights: [0, 1, 2].map(|i| mix(self.ground_weights[i], other.ground_weights[i])),
            building_count: [0, 1].map(|i| mix_u8(self.building_count[i], other.building_count[i])),
            building_height_frac: [0, 1]
                .map(|i| mix(self.building_height_frac[i], other.building_height_frac[i])),
            tree_count: [0, 1].map(|i| mix_u8(self.tree_count[i], other.tree_count[i])),
            horizon_frac: [0, 1].map(|i| mix(self.horizon_frac[i], other.horizon_frac[i])),
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |what: &str| Err(DatasetError::InvalidParams(what.to_string()));
        if self.ground_weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite())
            || self.ground_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("ground_weights must be non-negative with a positive sum");
        }
        let counts_ok = |[lo, hi]: [u8; 2]| lo <= hi && hi <= 4;
        if !counts_ok(self.building_count) || !counts_ok(self.tree_count) {
            return bad("counts must be ordered ranges within 0..=4");
        }
        let [lo, hi] = self.building_height_frac;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return bad("building_height_frac range must lie in (0, 1)");
        }
        let [lo, hi] = self.horizon_frac;
        if !(lo > 0.3 && lo <= hi && hi < 0.7) {
            return bad("horizon_frac range must lie in (0.3, 0.7)");
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng, seed: u64) -> SceneParams {
        let total: f64 = self.ground_weights.iter().sum();
        let mut pick = rng.random_range(0.0..total);
        let mut ground = Ground::Grass;
        for (g, w) in Ground::ALL.iter().zip(self.ground_weights) {
            if w > 0.0 {
                ground = *g;
                if pick < w {
                    break;
                }
                pick -= w;
            }
        }
        let range = |rng: &mut dyn RngCore, [lo, hi]: [f64; 2]| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        };
        SceneParams {
            ground,
            building_count: rng.random_range(self.building_count[0]..=self.building_count[1]),
            building_height_frac: range(rng, self.building_height_frac),
            tree_count: rng.random_range(self.tree_count[0]..=self.tree_count[1]),
            horizon_frac: range(rng, self.horizon_frac),
            seed,
        }
    }
}

/// Seed of the `index`-th scene drawn from `master`.
pub fn derived_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// Scene parameters of the `index`-th draw.
pub fn domain_params(dist: &SceneDistribution, master: u64, index: u64) -> SceneParams {
    let seed = derived_seed(master, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dist.sample(&mut rng, seed)
}

/// `n` scenes drawn from `dist`, each from a seed derived from `master` by counter.
pub fn synth_domain(
    n: usize,
    dist: &SceneDistribution,
    master: u64,
    size: u32,
) -> Result<Vec<ImageBuffer>, DatasetError> {
    if n == 0 {
        return Err(DatasetError::InvalidParams("domain size must be ≥ 1".into()));
    }
    dist.validate()?;
    (0..n as u64)
        .map(|i| synth_scene(&domain_params(dist, master, i), size))
        .collect()
}
