//! Seeded synthetic surveillance scenes.
//!
//! A scene is a fixed camera: four appearance prototypes (one per motion
//! regime, a shared base plus a regime offset) and a smooth
//! location-to-context map made of random plane waves. Objects enter one
//! per arrival slot of `frames / n_objects` frames, each following a single
//! regime:
//!
//! * `waiting`: stationary;
//! * `slow`: constant velocity, 0.3 to 1 px/frame;
//! * `fast`: constant velocity, 4 to 7 px/frame;
//! * `turning`: 2 to 3.5 px/frame, heading rotated by 60 to 120 degrees at
//!   mid-trajectory.
//!
//! Boxes bounce off the frame border. A frame's feature is the regime
//! prototype followed by the context of the box center, plus Gaussian
//! noise; both blocks lie in roughly `[0, 1]`, like pooled CNN activations.
//! `fast` and `turning` objects are the anomalous ones; the number of
//! anomalous objects is `round(anomaly_fraction * n_objects)` and each
//! contributes one ground-truth clip covering its whole trajectory.

use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::formats::{DatasetFile, DatasetMeta};
use crate::error::{Error, Result};
use crate::eval::GroundTruthClip;
use crate::pipeline::{BoundingBox, FrameRange, Trajectory};

pub const SCENE_WIDTH: f64 = 1280.0;
pub const SCENE_HEIGHT: f64 = 720.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Waiting,
    Slow,
    Fast,
    Turning,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Waiting, Regime::Slow, Regime::Fast, Regime::Turning];

    pub fn is_anomalous(self) -> bool {
        matches!(self, Regime::Fast | Regime::Turning)
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Waiting => "waiting",
            Regime::Slow => "slow",
            Regime::Fast => "fast",
            Regime::Turning => "turning",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == name)
    }

    fn index(self) -> usize {
        self as usize
    }

    /// Speed band in px/frame.
    fn speed(self) -> (f64, f64) {
        match self {
            Regime::Waiting => (0.0, 0.0),
            Regime::Slow => (0.3, 1.0),
            Regime::Fast => (4.0, 7.0),
            Regime::Turning => (2.0, 3.5),
        }
    }

    /// Trajectory length band in frames.
    fn length(self) -> (usize, usize) {
        match self {
            Regime::Waiting | Regime::Slow => (60, 100),
            Regime::Fast => (40, 80),
            Regime::Turning => (60, 100),
        }
    }
}

/// Probability of each regime. Within the common (waiting, slow) and the
/// anomalous (fast, turning) group, the weights pick the regime of each
/// object of that group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeMix {
    pub waiting: f64,
    pub slow: f64,
    pub fast: f64,
    pub turning: f64,
}

impl Default for RegimeMix {
    fn default() -> Self {
        Self {
            waiting: 0.4,
            slow: 0.35,
            fast: 0.15,
            turning: 0.1,
        }
    }
}

impl RegimeMix {
    fn weight(&self, r: Regime) -> f64 {
        match r {
            Regime::Waiting => self.waiting,
            Regime::Slow => self.slow,
            Regime::Fast => self.fast,
            Regime::Turning => self.turning,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Seed for the objects of this video.
    pub seed: u64,
    /// Seed for the camera: prototypes and the context map. Videos sharing
    /// it are recordings of the same scene.
    pub scene_seed: u64,
    pub n_objects: usize,
    pub frames: usize,
    pub regime_mix: RegimeMix,
    pub anomaly_fraction: f64,
    /// Total feature size: appearance block then context block, half each.
    pub feature_dim: usize,
    pub noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scene_seed: 7,
            n_objects: 20,
            frames: 3000,
            regime_mix: RegimeMix::default(),
            anomaly_fraction: 0.25,
            feature_dim: 64,
            noise_sigma: 0.02,
        }
    }
}

impl SynthConfig {
    pub fn anomalous_count(&self) -> usize {
        (self.anomaly_fraction * self.n_objects as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let mix = &self.regime_mix;
        let weights = Regime::ALL.map(|r| mix.weight(r));
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad(format!("regime probabilities must be >= 0, got {mix:?}"));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("regime probabilities must sum to 1, got {mix:?}"));
        }
        if !(0.0..=1.0).contains(&self.anomaly_fraction) {
            return bad(format!(
                "anomaly_fraction must lie in [0,1], got {}",
                self.anomaly_fraction
            ));
        }
        let anomalous = self.anomalous_count();
        if anomalous > 0 && mix.fast + mix.turning == 0.0 {
            return bad(
                "anomalous objects requested but fast and turning have zero probability".into(),
            );
        }
        if anomalous < self.n_objects && mix.waiting + mix.slow == 0.0 {
            return bad(
                "common objects requested but waiting and slow have zero probability".into(),
            );
        }
        if self.feature_dim < 2 || !self.feature_dim.is_multiple_of(2) {
            return bad(format!(
                "feature_dim must be even and >= 2, got {}",
                self.feature_dim
            ));
        }
        if self.frames == 0 {
            return bad("frames must be >= 1".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        Ok(())
    }
}

/// The fixed part of a scene shared by all its videos.
#[derive(Debug, Clone)]
pub struct Scene {
    prototypes: Vec<Vec<f64>>,
    /// Plane waves `(kx, ky, phase)` in radians per pixel.
    waves: Vec<(f64, f64, f64)>,
}

impl Scene {
    pub fn new(scene_seed: u64, feature_dim: usize) -> Self {
        let half = feature_dim / 2;
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
        let base: Vec<f64> = (0..half).map(|_| rng.random_range(0.3..0.7)).collect();
        let prototypes = Regime::ALL
            .iter()
            .map(|_| {
                base.iter()
                    .map(|b| b + rng.random_range(-0.25..0.25))
                    .collect()
            })
            .collect();
        let waves = (0..half)
            .map(|_| {
                let wavelength = rng.random_range(300.0..700.0);
                let angle = rng.random_range(0.0..2.0 * PI);
                let k = 2.0 * PI / wavelength;
                (
                    k * angle.cos(),
                    k * angle.sin(),
                    rng.random_range(0.0..2.0 * PI),
                )
            })
            .collect();
        Self { prototypes, waves }
    }

    pub fn context(&self, b: &BoundingBox) -> impl Iterator<Item = f64> + '_ {
        let (cx, cy) = b.center();
        self.waves
            .iter()
            .map(move |&(kx, ky, ph)| 0.5 + 0.25 * (kx * cx + ky * cy + ph).sin())
    }

    pub fn feature(&self, regime: Regime, b: &BoundingBox) -> Vec<f64> {
        self.prototypes[regime.index()]
            .iter()
            .copied()
            .chain(self.context(b))
            .collect()
    }
}

fn bounce(pos: &mut f64, vel: &mut f64, size: f64, limit: f64) {
    if *pos < 0.0 {
        *pos = -*pos;
        *vel = -*vel;
    } else if *pos + size > limit {
        *pos = 2.0 * (limit - size) - *pos;
        *vel = -*vel;
    }
}

fn pick_regime<R: Rng + ?Sized>(mix: &RegimeMix, anomalous: bool, rng: &mut R) -> Regime {
    let group: Vec<Regime> = Regime::ALL
        .into_iter()
        .filter(|r| r.is_anomalous() == anomalous)
        .collect();
    let dist = WeightedIndex::new(group.iter().map(|&r| mix.weight(r))).expect("validated weights");
    group[dist.sample(rng)]
}

/// Box path of one object.
fn simulate<R: Rng + ?Sized>(regime: Regime, len: usize, rng: &mut R) -> Vec<BoundingBox> {
    let w = rng.random_range(40.0..120.0);
    let h = rng.random_range(40.0..120.0);
    let mut x = rng.random_range(0.0..SCENE_WIDTH - w);
    let mut y = rng.random_range(0.0..SCENE_HEIGHT - h);
    let (lo, hi) = regime.speed();
    let speed = if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    };
    let heading = rng.random_range(0.0..2.0 * PI);
    let (mut vx, mut vy) = (speed * heading.cos(), speed * heading.sin());
    let turn =
        if rng.random_bool(0.5) { 1.0 } else { -1.0 } * rng.random_range(PI / 3.0..2.0 * PI / 3.0);

    let mut boxes = Vec::with_capacity(len);
    for k in 0..len {
        if regime == Regime::Turning && k == len / 2 {
            let (s, c) = turn.sin_cos();
            (vx, vy) = (vx * c - vy * s, vx * s + vy * c);
        }
        if k > 0 {
            x += vx;
            y += vy;
            bounce(&mut x, &mut vx, w, SCENE_WIDTH);
            bounce(&mut y, &mut vy, h, SCENE_HEIGHT);
        }
        boxes.push(BoundingBox::new(x, y, w, h));
    }
    boxes
}

/// Generates one video. Identical configs give identical datasets.
pub fn generate(cfg: &SynthConfig) -> Result<DatasetFile> {
    cfg.validate()?;
    let scene = Scene::new(cfg.scene_seed, cfg.feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");

    let mut anomalous = vec![false; cfg.n_objects];
    anomalous[..cfg.anomalous_count()].fill(true);
    anomalous.shuffle(&mut rng);

    let slot = cfg.frames as f64 / cfg.n_objects.max(1) as f64;
    let mut trajectories = Vec::with_capacity(cfg.n_objects);
    let mut ground_truth = Vec::new();
    for (i, &is_anomalous) in anomalous.iter().enumerate() {
        let regime = pick_regime(&cfg.regime_mix, is_anomalous, &mut rng);
        let start = ((i as f64 + rng.random_range(0.0..0.3)) * slot) as usize;
        let start = start.min(cfg.frames - 1);
        let (lo, hi) = regime.length();
        let len = rng.random_range(lo..=hi).min(cfg.frames - start);
        let boxes = simulate(regime, len, &mut rng);
        let features = boxes
            .iter()
            .map(|b| {
                scene
                    .feature(regime, b)
                    .into_iter()
                    .map(|v| v + noise.sample(&mut rng))
                    .collect()
            })
            .collect();
        if is_anomalous {
            ground_truth.push(GroundTruthClip {
                frames: FrameRange::new(start, start + len - 1),
                b_start: boxes[0],
                b_end: boxes[len - 1],
            });
        }
        trajectories.push(Trajectory {
            object_id: i as u64,
            start_frame: start,
            boxes,
            features,
            regime: Some(regime.name().to_string()),
        });
    }
    Ok(DatasetFile {
        metadata: DatasetMeta {
            feature_dim: cfg.feature_dim,
            total_frames: cfg.frames,
            fps: Some(30.0),
        },
        trajectories,
        ground_truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig::default();
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = generate(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(other, generate(&SynthConfig::default()).unwrap());
    }

    #[test]
    fn no_anomalies_no_ground_truth() {
        let ds = generate(&SynthConfig {
            anomaly_fraction: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert!(ds.ground_truth.is_empty());
        assert!(ds
            .trajectories
            .iter()
            .all(|t| !Regime::from_name(t.regime.as_deref().unwrap())
                .unwrap()
                .is_anomalous()));
    }

    #[test]
    fn dataset_is_valid_and_in_scene() {
        let ds = generate(&SynthConfig::default()).unwrap();
        ds.validate().unwrap();
        assert_eq!(ds.trajectories.len(), 20);
        for t in &ds.trajectories {
            for b in &t.boxes {
                assert!(b.x >= 0.0 && b.x + b.w <= SCENE_WIDTH, "{b:?}");
                assert!(b.y >= 0.0 && b.y + b.h <= SCENE_HEIGHT, "{b:?}");
            }
        }
    }

    #[test]
    fn regime_speeds_follow_bands() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for regime in Regime::ALL {
            let boxes = simulate(regime, 50, &mut rng);
            let step = |k: usize| {
                let (a, b) = (boxes[k].center(), boxes[k + 1].center());
                (a.0 - b.0).hypot(a.1 - b.1)
            };
            let (lo, hi) = regime.speed();
            // Bounces shorten a step, so only the upper bound is exact.
            for k in 0..49 {
                assert!(step(k) <= hi + 1e-9, "{regime:?}");
            }
            assert!(step(0) >= lo - 1e-9 || regime == Regime::Waiting);
        }
    }

    #[test]
    fn invalid_mix_rejected() {
        let mut cfg = SynthConfig::default();
        cfg.regime_mix.fast = 0.5;
        assert!(generate(&cfg).is_err());
        let cfg = SynthConfig {
            regime_mix: RegimeMix {
                waiting: 0.5,
                slow: 0.5,
                fast: 0.0,
                turning: 0.0,
            },
            ..Default::default()
        };
        assert!(generate(&cfg).is_err());
        assert!(generate(&SynthConfig {
            anomaly_fraction: 1.5,
            ..Default::default()
        })
        .is_err());
    }
}
