//! Piecewise-linear monotone mappings between timelines (reference, rehearsed,
//! live), derived from warp paths. Lookup clamps outside the knot range so
//! nothing is ever scheduled before the piece starts.

use std::fmt::Write as _;

use crate::dtw::WarpPath;
use crate::error::{Error, Result};

/// Monotone mapping between two timelines in milliseconds.
///
/// Knots are strictly increasing in source and non-decreasing in target.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMap {
    knots: Vec<(f64, f64)>,
}

impl TimeMap {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::EmptyPath);
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidParam(format!(
                    "knot sources must strictly increase ({} then {})",
                    w[0].0, w[1].0
                )));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::InvalidParam(format!(
                    "knot targets must not decrease ({} then {})",
                    w[0].1, w[1].1
                )));
            }
        }
        Ok(Self { knots })
    }

    pub fn identity(span_ms: f64) -> Self {
        Self {
            knots: vec![(0.0, 0.0), (span_ms.max(1.0), span_ms.max(1.0))],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn source_range(&self) -> (f64, f64) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }

    pub fn target_range(&self) -> (f64, f64) {
        (self.knots[0].1, self.knots[self.knots.len() - 1].1)
    }

    /// Piecewise-linear interpolation, clamped outside the knot range.
    pub fn lookup(&self, t_source_ms: f64) -> f64 {
        let knots = &self.knots;
        if t_source_ms <= knots[0].0 {
            return knots[0].1;
        }
        let last = knots[knots.len() - 1];
        if t_source_ms >= last.0 {
            return last.1;
        }
        let idx = knots.partition_point(|&(s, _)| s <= t_source_ms);
        let (s0, t0) = knots[idx - 1];
        let (s1, t1) = knots[idx];
        t0 + (t1 - t0) * (t_source_ms - s0) / (s1 - s0)
    }

    /// Swap source and target. Target plateaus collapse to a single knot at
    /// the plateau midpoint.
    pub fn invert(&self) -> TimeMap {
        let mut knots: Vec<(f64, f64)> = Vec::with_capacity(self.knots.len());
        let mut i = 0;
        while i < self.knots.len() {
            let target = self.knots[i].1;
            let mut j = i;
            while j + 1 < self.knots.len() && self.knots[j + 1].1 == target {
                j += 1;
            }
            let mid = (self.knots[i].0 + self.knots[j].0) / 2.0;
            knots.push((target, mid));
            i = j + 1;
        }
        TimeMap { knots }
    }

    /// Compose with a following map: self maps A→B, `next` maps B→C; the
    /// result maps A→C by evaluating `next` at each of self's knot targets.
    pub fn compose(&self, next: &TimeMap) -> Result<TimeMap> {
        let (lo, hi) = self.target_range();
        let (nlo, nhi) = next.source_range();
        const TOL: f64 = 1e-6;
        if lo < nlo - TOL || hi > nhi + TOL {
            return Err(Error::DomainMismatch(format!(
                "target range [{lo}, {hi}] not covered by next map's source [{nlo}, {nhi}]"
            )));
        }
        let knots = self
            .knots
            .iter()
            .map(|&(s, t)| (s, next.lookup(t)))
            .collect();
        TimeMap::new(knots)
    }

    /// CSV with a `t_source_ms,t_target_ms` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_source_ms,t_target_ms\n");
        for &(s, t) in &self.knots {
            let _ = writeln!(out, "{s},{t}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "t_source_ms,t_target_ms" => {}
            _ => {
                return Err(Error::MalformedFile(
                    "time map CSV must start with 't_source_ms,t_target_ms'".into(),
                ))
            }
        }
        let mut knots = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (s, t) = line
                .split_once(',')
                .ok_or_else(|| Error::MalformedFile(format!("bad knot row: {line}")))?;
            let s: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::MalformedFile(format!("bad time: {s}")))?;
            let t: f64 = t
                .trim()
                .parse()
                .map_err(|_| Error::MalformedFile(format!("bad time: {t}")))?;
            knots.push((s, t));
        }
        TimeMap::new(knots)
    }
}

/// Build a time map from a warp path. Index pairs become (p·src_period,
/// q·tgt_period); duplicate source times (vertical path runs) collapse to the
/// mean target.
pub fn from_warp_path(path: &WarpPath, src_period_ms: f64, tgt_period_ms: f64) -> Result<TimeMap> {
    if path.pairs.is_empty() {
        return Err(Error::EmptyPath);
    }
    let mut knots: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < path.pairs.len() {
        let p = path.pairs[i].0;
        let mut j = i;
        let mut sum_q = 0.0f64;
        while j < path.pairs.len() && path.pairs[j].0 == p {
            sum_q += path.pairs[j].1 as f64;
            j += 1;
        }
        let mean_q = sum_q / (j - i) as f64;
        knots.push((p as f64 * src_period_ms, mean_q * tgt_period_ms));
        i = j;
    }
    TimeMap::new(knots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diagonal_path_gives_identity_map() {
        let path = WarpPath {
            pairs: (1..=5).map(|i| (i, i)).collect(),
            cost: 0.0,
        };
        let map = from_warp_path(&path, 20.0, 20.0).unwrap();
        for t in [20.0, 35.0, 60.0, 100.0] {
            assert_eq!(map.lookup(t), t);
        }
    }

    #[test]
    fn vertical_run_collapses_to_mean_target() {
        let path = WarpPath {
            pairs: vec![(1, 1), (1, 2), (2, 3)],
            cost: 0.0,
        };
        let map = from_warp_path(&path, 20.0, 20.0).unwrap();
        assert_eq!(map.lookup(20.0), 30.0);
        assert_eq!(map.lookup(40.0), 60.0);
    }

    #[test]
    fn lookup_interpolates_and_clamps() {
        let map = TimeMap::new(vec![(0.0, 0.0), (100.0, 200.0)]).unwrap();
        assert_eq!(map.lookup(50.0), 100.0);
        assert_eq!(map.lookup(-10.0), 0.0);
        assert_eq!(map.lookup(500.0), 200.0);
    }

    #[test]
    fn compose_with_identity_is_unchanged_at_knots() {
        let m = TimeMap::new(vec![(0.0, 0.0), (50.0, 80.0), (100.0, 120.0)]).unwrap();
        let id = TimeMap::identity(100.0);
        let composed = id.compose(&m).unwrap();
        for t in [0.0, 25.0, 50.0, 75.0, 100.0] {
            assert!((composed.lookup(t) - m.lookup(t)).abs() < 1e-9);
        }
    }

    #[test]
    fn compose_double_and_half_is_identity() {
        let double = TimeMap::new(vec![(0.0, 0.0), (100.0, 200.0)]).unwrap();
        let half = TimeMap::new(vec![(0.0, 0.0), (200.0, 100.0)]).unwrap();
        let composed = double.compose(&half).unwrap();
        for t in [0.0, 30.0, 99.0] {
            assert!((composed.lookup(t) - t).abs() < 1e-9);
        }
    }

    #[test]
    fn compose_domain_mismatch_is_rejected() {
        let a = TimeMap::new(vec![(0.0, 0.0), (100.0, 500.0)]).unwrap();
        let b = TimeMap::new(vec![(0.0, 0.0), (200.0, 100.0)]).unwrap();
        assert!(matches!(a.compose(&b), Err(Error::DomainMismatch(_))));
    }

    #[test]
    fn invert_swaps_and_collapses_plateaus() {
        let id = TimeMap::identity(100.0);
        assert_eq!(id.invert(), id);
        let m = TimeMap::new(vec![(0.0, 0.0), (100.0, 200.0)]).unwrap();
        assert_eq!(m.invert().knots(), &[(0.0, 0.0), (200.0, 100.0)]);
        // plateau in target: (10,50),(20,50) -> single knot (50,15)
        let p = TimeMap::new(vec![(0.0, 0.0), (10.0, 50.0), (20.0, 50.0), (30.0, 80.0)]).unwrap();
        let inv = p.invert();
        assert_eq!(inv.knots(), &[(0.0, 0.0), (50.0, 15.0), (80.0, 30.0)]);
    }

    #[test]
    fn csv_roundtrip() {
        let m = TimeMap::new(vec![(0.0, 0.0), (12.5, 30.0), (50.0, 31.5)]).unwrap();
        let back = TimeMap::from_csv(&m.to_csv()).unwrap();
        assert_eq!(m, back);
    }

    fn monotone_path() -> impl Strategy<Value = WarpPath> {
        proptest::collection::vec(0u8..3, 1..40).prop_map(|steps| {
            let mut pairs = vec![(1usize, 1usize)];
            for s in steps {
                let &(p, q) = pairs.last().unwrap();
                let next = match s % 3 {
                    0 => (p + 1, q + 1),
                    1 => (p + 1, q),
                    _ => (p, q + 1),
                };
                pairs.push(next);
            }
            WarpPath { pairs, cost: 0.0 }
        })
    }

    proptest! {
        #[test]
        fn lookup_is_monotone_on_random_paths(path in monotone_path(),
                                              probes in proptest::collection::vec(0f64..2000.0, 2..20)) {
            let map = from_warp_path(&path, 20.0, 20.0).unwrap();
            let mut sorted = probes.clone();
            sorted.sort_by(f64::total_cmp);
            let mut last = f64::NEG_INFINITY;
            for t in sorted {
                let v = map.lookup(t);
                prop_assert!(v >= last);
                last = v;
            }
        }

        #[test]
        fn strictly_increasing_maps_roundtrip_within_one_period(
            deltas in proptest::collection::vec(1u32..5, 1..30), probe in 0f64..1.0) {
            // build a strictly increasing map
            let mut knots = vec![(0.0, 0.0)];
            for (i, d) in deltas.iter().enumerate() {
                let &(_, t) = knots.last().unwrap();
                knots.push(((i + 1) as f64 * 20.0, t + *d as f64 * 20.0));
            }
            let map = TimeMap::new(knots).unwrap();
            let (lo, hi) = map.source_range();
            let t = lo + probe * (hi - lo);
            let back = map.invert().lookup(map.lookup(t));
            prop_assert!((back - t).abs() <= 20.0 + 1e-9);
        }
    }
}
