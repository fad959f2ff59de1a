//! Offline dynamic time warping: cumulative-cost recursion over the three
//! monotone steps, path recovery, and alignment cost.
//!
//! The path is recovered with 2-bit step codes (one pass of suffix costs, then
//! a forward walk from (1,1)), which keeps memory at 2 bits per cell for long
//! rehearsal alignments. Ties prefer diagonal, then vertical (advance X), then
//! horizontal (advance Y); the forward walk takes diagonal steps at the
//! earliest opportunity.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::features::FeatureSequence;

/// A monotone alignment between two sequences: 1-based index pairs from (1,1)
/// to (P,Q) plus the summed pairwise distance along the path.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpPath {
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

impl WarpPath {
    /// CSV with a `p,q` header, one index pair per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,q\n");
        for &(p, q) in &self.pairs {
            let _ = writeln!(out, "{p},{q}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "p,q" => {}
            _ => return Err(Error::MalformedFile("warp path CSV must start with 'p,q'".into())),
        }
        let mut pairs = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (p, q) = line
                .split_once(',')
                .ok_or_else(|| Error::MalformedFile(format!("bad warp path row: {line}")))?;
            let p: usize = p
                .trim()
                .parse()
                .map_err(|_| Error::MalformedFile(format!("bad index: {p}")))?;
            let q: usize = q
                .trim()
                .parse()
                .map_err(|_| Error::MalformedFile(format!("bad index: {q}")))?;
            pairs.push((p, q));
        }
        if pairs.is_empty() {
            return Err(Error::EmptyPath);
        }
        Ok(Self { pairs, cost: 0.0 })
    }
}

/// Euclidean distance between two feature vectors.
pub fn pairwise_distance(x: &[f32], y: &[f32]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of dim {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(dist(x, y))
}

#[inline]
pub(crate) fn dist(x: &[f32], y: &[f32]) -> f64 {
    let mut acc = 0f32;
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        acc += d * d;
    }
    (acc as f64).sqrt()
}

fn check_inputs(x: &FeatureSequence, y: &FeatureSequence) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyInput("dtw requires non-empty sequences".into()));
    }
    if x.dim != y.dim {
        return Err(Error::DimensionMismatch(format!(
            "sequence dims {} vs {}",
            x.dim, y.dim
        )));
    }
    if x.kind != y.kind {
        return Err(Error::DimensionMismatch(format!(
            "sequence kinds {} vs {}",
            x.kind, y.kind
        )));
    }
    Ok(())
}

const STEP_DIAG: u8 = 0;
const STEP_X: u8 = 1; // advance X only (vertical)
const STEP_Y: u8 = 2; // advance Y only (horizontal)
const STEP_END: u8 = 3;

struct StepCodes {
    bits: Vec<u8>,
    cols: usize,
}

impl StepCodes {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            bits: vec![0u8; (rows * cols + 3) / 4],
            cols,
        }
    }

    #[inline]
    fn set(&mut self, p: usize, q: usize, code: u8) {
        let idx = p * self.cols + q;
        let shift = (idx & 3) * 2;
        let slot = &mut self.bits[idx >> 2];
        *slot = (*slot & !(0b11 << shift)) | (code << shift);
    }

    #[inline]
    fn get(&self, p: usize, q: usize) -> u8 {
        let idx = p * self.cols + q;
        (self.bits[idx >> 2] >> ((idx & 3) * 2)) & 0b11
    }
}

/// Minimal-cost monotone alignment of `x` to `y` with the warp path.
pub fn dtw_align(x: &FeatureSequence, y: &FeatureSequence) -> Result<WarpPath> {
    check_inputs(x, y)?;
    let p_len = x.len();
    let q_len = y.len();
    let xr: Vec<&[f32]> = x.rows().collect();
    let yr: Vec<&[f32]> = y.rows().collect();

    let mut codes = StepCodes::new(p_len, q_len);
    // Suffix costs: remaining[q] holds the best cost from (p, q) to the end.
    let mut next = vec![0f64; q_len];
    let mut cur = vec![0f64; q_len];
    for p in (0..p_len).rev() {
        for q in (0..q_len).rev() {
            let d = dist(xr[p], yr[q]);
            let last_p = p + 1 == p_len;
            let last_q = q + 1 == q_len;
            let (code, tail) = if last_p && last_q {
                (STEP_END, 0.0)
            } else {
                // Preference order on ties: diagonal, advance-X, advance-Y.
                let mut best = f64::INFINITY;
                let mut code = STEP_END;
                if !last_p && !last_q && next[q + 1] < best {
                    best = next[q + 1];
                    code = STEP_DIAG;
                }
                if !last_p && next[q] < best {
                    best = next[q];
                    code = STEP_X;
                }
                if !last_q && cur[q + 1] < best {
                    best = cur[q + 1];
                    code = STEP_Y;
                }
                (code, best)
            };
            cur[q] = d + tail;
            codes.set(p, q, code);
        }
        std::mem::swap(&mut next, &mut cur);
    }
    let cost = next[0];

    let mut pairs = Vec::with_capacity(p_len.max(q_len));
    let (mut p, mut q) = (0usize, 0usize);
    loop {
        pairs.push((p + 1, q + 1));
        match codes.get(p, q) {
            STEP_DIAG => {
                p += 1;
                q += 1;
            }
            STEP_X => p += 1,
            STEP_Y => q += 1,
            _ => break,
        }
    }
    debug_assert_eq!(pairs.last(), Some(&(p_len, q_len)));
    Ok(WarpPath { pairs, cost })
}

/// Alignment cost only, in O(min(P,Q)) memory.
pub fn dtw_cost(x: &FeatureSequence, y: &FeatureSequence) -> Result<f64> {
    check_inputs(x, y)?;
    let (a, b) = if y.len() <= x.len() { (x, y) } else { (y, x) };
    let ar: Vec<&[f32]> = a.rows().collect();
    let br: Vec<&[f32]> = b.rows().collect();
    let q_len = br.len();
    let mut next = vec![0f64; q_len];
    let mut cur = vec![0f64; q_len];
    for p in (0..ar.len()).rev() {
        for q in (0..q_len).rev() {
            let d = dist(ar[p], br[q]);
            let last_p = p + 1 == ar.len();
            let last_q = q + 1 == q_len;
            let tail = if last_p && last_q {
                0.0
            } else {
                let mut best = f64::INFINITY;
                if !last_p && !last_q {
                    best = next[q + 1];
                }
                if !last_p && next[q] < best {
                    best = next[q];
                }
                if !last_q && cur[q + 1] < best {
                    best = cur[q + 1];
                }
                best
            };
            cur[q] = d + tail;
        }
        std::mem::swap(&mut next, &mut cur);
    }
    Ok(next[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use proptest::prelude::*;

    pub(crate) fn seq_1d(values: &[f32]) -> FeatureSequence {
        FeatureSequence::from_rows(
            FeatureKind::SemitoneSpectrum,
            20.0,
            1,
            values.iter().map(|&v| vec![v]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn distance_identity_and_triangle() {
        let v = [1.0f32, -2.0, 3.5];
        assert_eq!(pairwise_distance(&v, &v).unwrap(), 0.0);
        assert_eq!(pairwise_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn distance_rejects_dim_mismatch() {
        assert!(pairwise_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn self_alignment_is_the_diagonal_with_zero_cost() {
        let x = seq_1d(&[0.0, 1.0, 2.0, 5.0]);
        let path = dtw_align(&x, &x).unwrap();
        assert_eq!(path.cost, 0.0);
        assert_eq!(path.pairs, vec![(1, 1), (2, 2), (3, 3), (4, 4)]);
    }

    #[test]
    fn two_three_example_ties_resolve_to_early_diagonal() {
        let x = seq_1d(&[0.0, 2.0]);
        let y = seq_1d(&[0.0, 1.0, 2.0]);
        let path = dtw_align(&x, &y).unwrap();
        assert_eq!(path.cost, 1.0);
        assert_eq!(path.pairs, vec![(1, 1), (2, 2), (2, 3)]);
    }

    #[test]
    fn repeated_start_aligns_at_zero_cost() {
        let x = seq_1d(&[0.0, 1.0, 2.0, 3.0]);
        let y = seq_1d(&[0.0, 0.0, 1.0, 2.0, 3.0]);
        let path = dtw_align(&x, &y).unwrap();
        assert_eq!(path.cost, 0.0);
        assert_eq!(path.pairs, vec![(1, 1), (1, 2), (2, 3), (3, 4), (4, 5)]);
    }

    #[test]
    fn cost_matches_align_and_is_symmetric() {
        let x = seq_1d(&[0.0, 2.0, 1.0, 1.0]);
        let y = seq_1d(&[0.0, 1.0, 2.0]);
        let c = dtw_cost(&x, &y).unwrap();
        assert_eq!(c, dtw_align(&x, &y).unwrap().cost);
        assert_eq!(c, dtw_cost(&y, &x).unwrap());
    }

    #[test]
    fn empty_and_mismatched_inputs_error() {
        let x = seq_1d(&[0.0]);
        let empty = FeatureSequence::new(FeatureKind::SemitoneSpectrum, 20.0, 1);
        assert!(matches!(dtw_align(&x, &empty), Err(Error::EmptyInput(_))));
        let y2 = FeatureSequence::from_rows(
            FeatureKind::SemitoneSpectrum,
            20.0,
            2,
            vec![vec![0.0, 0.0]],
        )
        .unwrap();
        assert!(matches!(dtw_align(&x, &y2), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn warp_path_csv_roundtrip() {
        let path = WarpPath {
            pairs: vec![(1, 1), (2, 1), (3, 2)],
            cost: 1.5,
        };
        let csv = path.to_csv();
        assert!(csv.starts_with("p,q\n"));
        let back = WarpPath::from_csv(&csv).unwrap();
        assert_eq!(back.pairs, path.pairs);
    }

    fn prop_seq() -> impl Strategy<Value = Vec<f32>> {
        proptest::collection::vec((0i32..4).prop_map(|v| v as f32), 1..8)
    }

    proptest! {
        #[test]
        fn paths_are_monotone_and_bounded(xs in prop_seq(), ys in prop_seq()) {
            let x = seq_1d(&xs);
            let y = seq_1d(&ys);
            let path = dtw_align(&x, &y).unwrap();
            prop_assert_eq!(path.pairs[0], (1, 1));
            prop_assert_eq!(*path.pairs.last().unwrap(), (xs.len(), ys.len()));
            for w in path.pairs.windows(2) {
                let (dp, dq) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                prop_assert!(matches!((dp, dq), (1, 0) | (0, 1) | (1, 1)));
            }
            // cost equals the sum of distances along the path
            let sum: f64 = path.pairs.iter()
                .map(|&(p, q)| dist(x.row(p - 1), y.row(q - 1)))
                .sum();
            prop_assert!((sum - path.cost).abs() < 1e-9);
        }

        #[test]
        fn cost_is_symmetric_and_matches_align(xs in prop_seq(), ys in prop_seq()) {
            let x = seq_1d(&xs);
            let y = seq_1d(&ys);
            let c = dtw_cost(&x, &y).unwrap();
            prop_assert_eq!(c, dtw_cost(&y, &x).unwrap());
            prop_assert_eq!(c, dtw_align(&x, &y).unwrap().cost);
            prop_assert!(c >= 0.0);
        }
    }
}
