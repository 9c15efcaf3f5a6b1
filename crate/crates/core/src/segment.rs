//! Motion-based super-segmentation of object trajectories.
//!
//! A trajectory is cut where its smoothed motion magnitude reaches a
//! sufficiently prominent local minimum, i.e. where the motion state
//! changes. Over-long pieces are split uniformly and over-short ones merged
//! into a neighbor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{BoundingBox, FrameRange};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub smooth_window: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Minimum prominence of a cut, relative to the profile's range.
    pub boundary_threshold: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            smooth_window: 5,
            min_len: 5,
            max_len: 60,
            boundary_threshold: 0.2,
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.smooth_window == 0 || self.smooth_window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "smooth_window must be odd and >= 1, got {}",
                self.smooth_window
            )));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= min_len <= max_len, got {} and {}",
                self.min_len, self.max_len
            )));
        }
        // Below this a long range can have no split with every piece in
        // [min_len, max_len].
        if self.max_len + 1 < 2 * self.min_len {
            return Err(Error::InvalidConfig(format!(
                "max_len must be >= 2 * min_len - 1, got {} and {}",
                self.max_len, self.min_len
            )));
        }
        if !(0.0..=1.0).contains(&self.boundary_threshold) {
            return Err(Error::InvalidConfig(format!(
                "boundary_threshold must lie in [0,1], got {}",
                self.boundary_threshold
            )));
        }
        Ok(())
    }
}

/// Per-frame center displacement from the previous frame, normalized by
/// `sqrt(w * h)` of the current box, then smoothed with a centered moving
/// average whose window is truncated at the edges.
pub fn motion_profile(boxes: &[BoundingBox], smooth_window: usize) -> Vec<f64> {
    let raw: Vec<f64> = boxes
        .iter()
        .enumerate()
        .map(|(t, b)| {
            if t == 0 {
                return 0.0;
            }
            let (px, py) = boxes[t - 1].center();
            let (cx, cy) = b.center();
            (cx - px).hypot(cy - py) / (b.w * b.h).sqrt()
        })
        .collect();
    smooth(&raw, smooth_window)
}

fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(values.len() - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Local minima of `profile` (plateaus report their floor-midpoint) with
/// their topographic prominence.
fn minima_with_prominence(profile: &[f64]) -> Vec<(usize, f64)> {
    let n = profile.len();
    let mut out = Vec::new();
    let mut a = 1;
    while a + 1 < n {
        let v = profile[a];
        let mut b = a;
        while b + 1 < n && profile[b + 1] == v {
            b += 1;
        }
        if b + 1 < n && profile[a - 1] > v && profile[b + 1] > v {
            let left = profile[..a]
                .iter()
                .rev()
                .take_while(|&&p| p >= v)
                .fold(v, |m, &p| m.max(p));
            let right = profile[b + 1..]
                .iter()
                .take_while(|&&p| p >= v)
                .fold(v, |m, &p| m.max(p));
            out.push(((a + b) / 2, left.min(right) - v));
        }
        a = b + 1;
    }
    out
}

/// Cuts a profile into inclusive ranges that partition `0..profile.len()`.
pub fn segment_trajectory(profile: &[f64], config: &SegmentConfig) -> Vec<FrameRange> {
    let n = profile.len();
    if n == 0 {
        return Vec::new();
    }
    if n < config.min_len {
        return vec![FrameRange::new(0, n - 1)];
    }

    let lo = profile.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let needed = config.boundary_threshold * (hi - lo);
    let mut starts = vec![0];
    starts.extend(
        minima_with_prominence(profile)
            .into_iter()
            .filter(|&(_, prom)| prom > 0.0 && prom >= needed)
            .map(|(t, _)| t),
    );
    let mut lens: Vec<usize> = starts
        .iter()
        .zip(starts.iter().skip(1).chain(std::iter::once(&n)))
        .map(|(s, e)| e - s)
        .collect();

    merge_short(&mut lens, config.min_len);

    let mut ranges = Vec::new();
    let mut start = 0;
    for len in lens {
        let pieces = len.div_ceil(config.max_len);
        for k in 0..pieces {
            let a = start + k * len / pieces;
            let b = start + (k + 1) * len / pieces;
            ranges.push(FrameRange::new(a, b - 1));
        }
        start += len;
    }
    ranges
}

/// Folds every range shorter than `min_len` into its shorter neighbor
/// (the left one on ties) until none remain or one range is left.
fn merge_short(lens: &mut Vec<usize>, min_len: usize) {
    while lens.len() > 1 {
        let Some(i) = lens.iter().position(|&l| l < min_len) else {
            break;
        };
        let target = match (i.checked_sub(1), lens.get(i + 1)) {
            (Some(l), Some(&r)) => {
                if lens[l] <= r {
                    l
                } else {
                    i + 1
                }
            }
            (Some(l), None) => l,
            (None, _) => i + 1,
        };
        let merged = lens[i] + lens[target];
        let keep = i.min(target);
        lens[keep] = merged;
        lens.remove(i.max(target));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn moving(n: usize, dx: f64) -> Vec<BoundingBox> {
        (0..n)
            .map(|t| BoundingBox::new(t as f64 * dx, 40.0, 100.0, 100.0))
            .collect()
    }

    #[test]
    fn stationary_boxes_have_no_motion() {
        assert!(motion_profile(&moving(10, 0.0), 5)
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn constant_velocity_profile() {
        let p = motion_profile(&moving(8, 10.0), 1);
        assert_eq!(p[0], 0.0);
        assert!(p[1..].iter().all(|&v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn unit_window_is_identity() {
        let v = vec![0.3, 1.0, 0.0, 2.5];
        assert_eq!(smooth(&v, 1), v);
        let s = smooth(&v, 3);
        assert!((s[0] - 0.65).abs() < 1e-15);
        assert!((s[1] - 1.3 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn short_trajectory_is_one_clip() {
        let cfg = SegmentConfig::default();
        assert_eq!(
            segment_trajectory(&[0.1, 0.0, 0.3], &cfg),
            vec![FrameRange::new(0, 2)]
        );
    }

    #[test]
    fn constant_motion_splits_uniformly() {
        let cfg = SegmentConfig {
            max_len: 30,
            ..Default::default()
        };
        let got = segment_trajectory(&vec![0.1; 90], &cfg);
        assert_eq!(
            got,
            vec![
                FrameRange::new(0, 29),
                FrameRange::new(30, 59),
                FrameRange::new(60, 89)
            ]
        );
    }

    #[test]
    fn deep_minimum_becomes_boundary() {
        let profile: Vec<f64> = (0..100)
            .map(|t| (t as f64 - 50.0).abs() / 50.0 + 0.2)
            .collect();
        let cfg = SegmentConfig::default();
        let got = segment_trajectory(&profile, &cfg);
        assert_eq!(got, vec![FrameRange::new(0, 49), FrameRange::new(50, 99)]);
    }

    #[test]
    fn shallow_minimum_is_ignored() {
        let mut profile = vec![1.0; 40];
        profile[0] = 0.0;
        profile[20] = 0.95;
        let got = segment_trajectory(&profile, &SegmentConfig::default());
        assert_eq!(got, vec![FrameRange::new(0, 39)]);
    }

    #[test]
    fn short_pieces_merge_into_shorter_neighbor() {
        let mut lens = vec![20, 2, 10];
        merge_short(&mut lens, 5);
        assert_eq!(lens, vec![20, 12]);
        let mut lens = vec![10, 2, 10];
        merge_short(&mut lens, 5);
        assert_eq!(lens, vec![12, 10]);
        let mut lens = vec![3, 20];
        merge_short(&mut lens, 5);
        assert_eq!(lens, vec![23]);
    }

    #[test]
    fn config_validation() {
        assert!(SegmentConfig::default().validate().is_ok());
        assert!(SegmentConfig {
            smooth_window: 4,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SegmentConfig {
            min_len: 30,
            max_len: 59,
            ..Default::default()
        }
        .validate()
        .is_ok());
        assert!(SegmentConfig {
            min_len: 31,
            max_len: 60,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SegmentConfig {
            boundary_threshold: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn ranges_partition_and_respect_bounds(
            profile in prop::collection::vec(0.0f64..1.0, 1..300),
            min_len in 1usize..12,
            extra in 0usize..40,
            threshold in 0.0f64..1.0,
        ) {
            let cfg = SegmentConfig {
                smooth_window: 3,
                min_len,
                max_len: 2 * min_len - 1 + extra,
                boundary_threshold: threshold,
            };
            cfg.validate().unwrap();
            let ranges = segment_trajectory(&profile, &cfg);
            prop_assert_eq!(ranges[0].start, 0);
            prop_assert_eq!(ranges.last().unwrap().end, profile.len() - 1);
            for w in ranges.windows(2) {
                prop_assert_eq!(w[0].end + 1, w[1].start);
            }
            let floor = min_len.min(profile.len());
            for r in &ranges {
                prop_assert!(r.len() >= floor && r.len() <= cfg.max_len, "{:?}", r);
            }
            prop_assert_eq!(ranges.clone(), segment_trajectory(&profile, &cfg));
        }
    }
}
