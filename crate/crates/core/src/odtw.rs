//! Online dynamic time warping: incremental alignment of a growing live
//! sequence against a fixed reference with a bounded search depth and
//! run-length-limited direction choice.
//!
//! Per consumed live frame the frontier advances along the live axis, the
//! reference axis, or both. The direction comes from the minimum-cost cell on
//! the band border (newest live row vs. newest reference column): a minimum on
//! the newest row means the reference frontier is ahead, so the live axis
//! advances; a minimum on the newest column means the reference lags, so the
//! reference axis advances; a minimum at the corner advances both. A run of
//! same-direction steps longer than `max_run_count` forces the other axis.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::dtw::{dist, WarpPath};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdtwConfig {
    /// Search depth c: maximum band extent per axis, in frames.
    pub search_depth_c: usize,
    /// Maximum consecutive same-direction steps before the other axis is forced.
    pub max_run_count: usize,
    /// Window for the local tempo estimate, in live frames (3 s at 20 ms).
    pub tempo_window_frames: usize,
}

impl Default for OdtwConfig {
    fn default() -> Self {
        Self {
            search_depth_c: 500,
            max_run_count: 3,
            tempo_window_frames: 150,
        }
    }
}

/// Output of one ODTW step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedPoint {
    /// Current reference frame (1-based, in the full reference sequence).
    pub ref_frame: usize,
    /// Cumulative alignment cost at the frontier.
    pub cumulative_cost: f64,
    /// Cumulative cost divided by path length; comparable across trackers
    /// that started at different times.
    pub normalized_cost: f64,
    /// Local reference-per-live tempo ratio, clamped to [0.25, 4].
    pub tempo_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    Live,
    Ref,
    Both,
}

#[derive(Debug)]
struct BandRow {
    start_q: usize, // first evaluated internal ref index (1-based)
    costs: Vec<f64>,
}

impl BandRow {
    #[inline]
    fn get(&self, q: usize) -> Option<f64> {
        if q >= self.start_q {
            self.costs.get(q - self.start_q).copied()
        } else {
            None
        }
    }

    #[inline]
    fn end_q(&self) -> usize {
        self.start_q + self.costs.len() - 1
    }
}

#[inline]
fn accumulate(d: f64, preds: [Option<f64>; 3]) -> f64 {
    let mut best = f64::INFINITY;
    for p in preds.into_iter().flatten() {
        if p < best {
            best = p;
        }
    }
    if best.is_finite() {
        d + best
    } else {
        // unreachable cells poison themselves, not the band
        f64::INFINITY
    }
}

/// Incremental alignment state of one live stream against one reference.
pub struct OdtwState {
    reference: Arc<FeatureSequence>,
    cfg: OdtwConfig,
    start_ref: usize, // 1-based global offset of internal ref index 1
    ref_len: usize,   // internal reference length
    live: Vec<Vec<f32>>,
    t: usize, // live frames consumed
    j: usize, // internal reference frontier (1-based)
    rows: VecDeque<BandRow>, // band rows for live indices [t - rows.len() + 1, t]
    prev_dir: Option<Dir>,
    run_count: usize,
    history: VecDeque<(usize, usize)>, // (t, j) after each step
    cells_last_step: usize,
}

impl OdtwState {
    pub fn new(
        reference: Arc<FeatureSequence>,
        cfg: OdtwConfig,
        start_ref_frame: usize,
    ) -> Result<Self> {
        if cfg.search_depth_c < 2 {
            return Err(Error::InvalidParam("search_depth_c must be >= 2".into()));
        }
        if cfg.max_run_count < 1 {
            return Err(Error::InvalidParam("max_run_count must be >= 1".into()));
        }
        if reference.is_empty() {
            return Err(Error::EmptyInput("reference sequence is empty".into()));
        }
        if start_ref_frame < 1 || start_ref_frame > reference.len() {
            return Err(Error::OutOfBounds(format!(
                "start_ref_frame {} not in [1, {}]",
                start_ref_frame,
                reference.len()
            )));
        }
        let ref_len = reference.len() - start_ref_frame + 1;
        Ok(Self {
            reference,
            cfg,
            start_ref: start_ref_frame,
            ref_len,
            live: Vec::new(),
            t: 0,
            j: 1,
            rows: VecDeque::new(),
            prev_dir: None,
            run_count: 0,
            history: VecDeque::new(),
            cells_last_step: 0,
        })
    }

    /// Live frames consumed so far.
    pub fn live_len(&self) -> usize {
        self.t
    }

    /// Current (live_frame, global_ref_frame) pair.
    pub fn current_pair(&self) -> (usize, usize) {
        (self.t, self.start_ref + self.j - 1)
    }

    /// Global reference frame the tracker started from.
    pub fn start_ref_frame(&self) -> usize {
        self.start_ref
    }

    /// Cells evaluated by the most recent step (band-bound diagnostics).
    pub fn cells_last_step(&self) -> usize {
        self.cells_last_step
    }

    #[inline]
    fn ref_row(&self, q: usize) -> &[f32] {
        self.reference.row(self.start_ref - 1 + q - 1)
    }

    /// Band cell (a, b); `None` outside the evaluated band.
    #[inline]
    fn cell(&self, a: usize, b: usize) -> Option<f64> {
        if a == 0 || b == 0 || a > self.t || self.rows.is_empty() {
            return None;
        }
        let oldest = self.t + 1 - self.rows.len();
        if a < oldest {
            return None;
        }
        self.rows[a - oldest].get(b)
    }

    /// Consume the frame as live row t+1, evaluating cells (t+1, j-c+1 ..= j).
    fn advance_live(&mut self, frame: &[f32]) {
        let new_t = self.t + 1;
        let lo = self.j.saturating_sub(self.cfg.search_depth_c - 1).max(1);
        let mut row = BandRow {
            start_q: lo,
            costs: Vec::with_capacity(self.j - lo + 1),
        };
        for b in lo..=self.j {
            let d = dist(frame, self.ref_row(b));
            let v = if new_t == 1 && b == 1 {
                d
            } else {
                let left = if b > lo { row.get(b - 1) } else { None };
                accumulate(d, [self.cell(self.t, b - 1), self.cell(self.t, b), left])
            };
            row.costs.push(v);
            self.cells_last_step += 1;
        }
        self.live.push(frame.to_vec());
        self.t = new_t;
        self.rows.push_back(row);
        while self.rows.len() > self.cfg.search_depth_c + 1 {
            self.rows.pop_front();
        }
    }

    /// Advance the reference frontier, evaluating cells (t-c+1 ..= t, j+1).
    fn advance_ref(&mut self) {
        debug_assert!(self.j < self.ref_len);
        let new_j = self.j + 1;
        let lo = (self.t + 1).saturating_sub(self.cfg.search_depth_c).max(1);
        let oldest = self.t + 1 - self.rows.len();
        for a in lo.max(oldest)..=self.t {
            let d = dist(&self.live[a - 1], self.ref_row(new_j));
            // rows below a were already extended to new_j this round
            let v = accumulate(
                d,
                [
                    self.cell(a - 1, new_j - 1),
                    self.cell(a - 1, new_j),
                    self.cell(a, new_j - 1),
                ],
            );
            let idx = a - oldest;
            debug_assert_eq!(self.rows[idx].end_q(), new_j - 1);
            self.rows[idx].costs.push(v);
            self.cells_last_step += 1;
        }
        self.j = new_j;
    }

    /// Direction choice from the band border minimum.
    fn decide(&self) -> Dir {
        if self.j >= self.ref_len {
            return Dir::Live;
        }
        if self.run_count >= self.cfg.max_run_count {
            match self.prev_dir {
                Some(Dir::Live) => return Dir::Ref,
                Some(Dir::Ref) => return Dir::Live,
                _ => {}
            }
        }
        // corner first so exact ties step diagonally
        let mut best = self.cell(self.t, self.j).unwrap_or(f64::INFINITY);
        let mut choice = Dir::Both;
        let row = self.rows.back().expect("decide() before the first frame");
        for b in (row.start_q..self.j).rev() {
            if let Some(v) = row.get(b) {
                if v < best {
                    best = v;
                    choice = Dir::Live;
                }
            }
        }
        let lo = self.t.saturating_sub(self.cfg.search_depth_c - 1).max(1);
        for a in (lo..self.t).rev() {
            if let Some(v) = self.cell(a, self.j) {
                if v < best {
                    best = v;
                    choice = Dir::Ref;
                }
            }
        }
        choice
    }

    fn update_run(&mut self, dir: Dir) {
        if dir == Dir::Both {
            // any direction change resets the counter
            self.run_count = 0;
            self.prev_dir = None;
        } else if self.prev_dir == Some(dir) {
            self.run_count += 1;
        } else {
            self.prev_dir = Some(dir);
            self.run_count = 1;
        }
    }

    /// Consume one live frame and return the new frontier.
    pub fn step(&mut self, live_frame: &[f32]) -> Result<TrackedPoint> {
        if live_frame.len() != self.reference.dim {
            return Err(Error::DimensionMismatch(format!(
                "live frame dim {} vs reference dim {}",
                live_frame.len(),
                self.reference.dim
            )));
        }
        self.cells_last_step = 0;
        if self.t == 0 {
            self.advance_live(live_frame);
            self.update_run(Dir::Both);
        } else {
            loop {
                match self.decide() {
                    Dir::Ref => {
                        self.advance_ref();
                        self.update_run(Dir::Ref);
                    }
                    Dir::Live => {
                        self.advance_live(live_frame);
                        self.update_run(Dir::Live);
                        break;
                    }
                    Dir::Both => {
                        self.advance_live(live_frame);
                        self.advance_ref();
                        self.update_run(Dir::Both);
                        break;
                    }
                }
            }
        }

        self.history.push_back((self.t, self.j));
        while self.history.len() > self.cfg.tempo_window_frames.max(2) {
            self.history.pop_front();
        }
        let tempo_ratio = if self.history.len() >= 2 {
            let &(t0, j0) = self.history.front().unwrap();
            let dt = (self.t - t0) as f64;
            if dt > 0.0 {
                ((self.j - j0) as f64 / dt).clamp(0.25, 4.0)
            } else {
                1.0
            }
        } else {
            1.0
        };

        let cumulative_cost = self
            .cell(self.t, self.j)
            .expect("frontier cell is always evaluated");
        let path_len = (self.t + self.j - 1) as f64;
        Ok(TrackedPoint {
            ref_frame: self.start_ref + self.j - 1,
            cumulative_cost,
            normalized_cost: cumulative_cost / path_len,
            tempo_ratio,
        })
    }
}

/// Mean absolute deviation, in frames, between an online trajectory and an
/// offline warp path over the same live range. The offline reference position
/// for live frame p is the furthest q paired with p (frontier semantics).
pub fn odtw_path_deviation(online: &[TrackedPoint], offline: &WarpPath) -> Result<f64> {
    if online.is_empty() || offline.pairs.is_empty() {
        return Err(Error::EmptyInput("empty path".into()));
    }
    let live_len = offline.pairs.last().unwrap().0;
    if online.len() != live_len {
        return Err(Error::RangeMismatch(format!(
            "online covers {} live frames, offline covers {}",
            online.len(),
            live_len
        )));
    }
    let mut offline_ref = vec![0usize; live_len + 1];
    for &(p, q) in &offline.pairs {
        offline_ref[p] = offline_ref[p].max(q);
    }
    let sum: f64 = online
        .iter()
        .enumerate()
        .map(|(i, pt)| (pt.ref_frame as f64 - offline_ref[i + 1] as f64).abs())
        .sum();
    Ok(sum / live_len as f64)
}
