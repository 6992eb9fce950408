//! Evaluation metrics: Hungarian-matched DOA error, frame recall,
//! segment-based detection F-score / error rate, and the same-class
//! overlap statistic.
//!
//! DOA error is pair-weighted: matched-pair distances accumulate across
//! frames and divide by the total number of matched pairs. Frames where
//! either side is empty contribute nothing to DE; cardinality mismatches
//! are only visible through frame recall.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angular_distance_deg, Doa};
use crate::music::FramewiseDoas;
use crate::scene::SceneSpec;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cost matrix rows have unequal lengths")]
    RaggedCostMatrix,
    #[error("cost matrix contains a non-finite entry at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },
    #[error("frame count mismatch: predictions {pred}, reference {reference}")]
    FrameCountMismatch { pred: usize, reference: usize },
    #[error("invalid segment length {0}")]
    InvalidSegmentLength(f64),
    #[error("event with onset {onset} >= offset {offset}")]
    InvalidEventInterval { onset: f64, offset: f64 },
}

/// A minimum-cost partial matching of rows to columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Matched (row, col) pairs in lexicographic order; `min(R, C)` of them.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

/// Minimum-cost assignment of a rectangular cost matrix (Jonker–Volgenant
/// shortest augmenting paths with potentials). The optimal cost is unique;
/// among equal-cost matchings the algorithm is deterministic and pairs are
/// reported in lexicographic row order.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Assignment, MetricsError> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, |r| r.len());
    for (row, r) in cost.iter().enumerate() {
        if r.len() != cols {
            return Err(MetricsError::RaggedCostMatrix);
        }
        for (col, &v) in r.iter().enumerate() {
            if !v.is_finite() {
                return Err(MetricsError::NonFiniteCost { row, col });
            }
        }
    }
    if rows == 0 || cols == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            total_cost: 0.0,
        });
    }

    let assignment = if rows <= cols {
        solve_rows_le_cols(&|r, c| cost[r][c], rows, cols)
    } else {
        let transposed = solve_rows_le_cols(&|r, c| cost[c][r], cols, rows);
        transposed.into_iter().map(|(r, c)| (c, r)).collect()
    };

    let mut pairs: Vec<(usize, usize)> = assignment;
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|&(r, c)| cost[r][c]).sum();
    Ok(Assignment { pairs, total_cost })
}

/// Shortest-augmenting-path assignment for `rows <= cols`.
fn solve_rows_le_cols(
    cost: &dyn Fn(usize, usize) -> f64,
    rows: usize,
    cols: usize,
) -> Vec<(usize, usize)> {
    // column `cols` is the virtual root of each augmenting search
    let mut row_potential = vec![0.0f64; rows];
    let mut col_potential = vec![0.0f64; cols + 1];
    let mut assigned_row: Vec<Option<usize>> = vec![None; cols + 1];

    for row in 0..rows {
        let mut current_col = cols;
        assigned_row[cols] = Some(row);
        let mut min_reduced = vec![f64::INFINITY; cols + 1];
        let mut previous = vec![cols; cols + 1];
        let mut visited = vec![false; cols + 1];

        while let Some(active_row) = assigned_row[current_col] {
            visited[current_col] = true;
            let mut delta = f64::INFINITY;
            let mut next_col = cols;
            for col in 0..cols {
                if visited[col] {
                    continue;
                }
                let reduced = cost(active_row, col) - row_potential[active_row] - col_potential[col];
                if reduced < min_reduced[col] {
                    min_reduced[col] = reduced;
                    previous[col] = current_col;
                }
                if min_reduced[col] < delta {
                    delta = min_reduced[col];
                    next_col = col;
                }
            }
            for col in 0..=cols {
                if visited[col] {
                    if let Some(r) = assigned_row[col] {
                        row_potential[r] += delta;
                    }
                    col_potential[col] -= delta;
                } else {
                    min_reduced[col] -= delta;
                }
            }
            current_col = next_col;
        }

        while current_col != cols {
            let prev = previous[current_col];
            assigned_row[current_col] = assigned_row[prev];
            current_col = prev;
        }
    }

    (0..cols)
        .filter_map(|col| assigned_row[col].map(|row| (row, col)))
        .collect()
}

/// Pair-weighted DOA error accumulator; mergeable across recordings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DoaErrorStats {
    pub total_deg: f64,
    pub matched_pairs: usize,
}

impl DoaErrorStats {
    /// Mean matched angular distance; `None` when nothing matched
    /// (explicit no-match outcome, never silently zero).
    pub fn mean_deg(&self) -> Option<f64> {
        (self.matched_pairs > 0).then(|| self.total_deg / self.matched_pairs as f64)
    }

    pub fn merge(&mut self, other: &DoaErrorStats) {
        self.total_deg += other.total_deg;
        self.matched_pairs += other.matched_pairs;
    }
}

/// Per-frame Hungarian matching of predicted to reference DOAs on the
/// angular-distance cost matrix. `min(|pred|, |ref|)` pairs match per frame.
pub fn doa_error(
    pred: &FramewiseDoas,
    reference: &FramewiseDoas,
) -> Result<DoaErrorStats, MetricsError> {
    if pred.n_frames() != reference.n_frames() {
        return Err(MetricsError::FrameCountMismatch {
            pred: pred.n_frames(),
            reference: reference.n_frames(),
        });
    }
    let mut stats = DoaErrorStats::default();
    for (p_frame, r_frame) in pred.frames.iter().zip(&reference.frames) {
        if p_frame.is_empty() || r_frame.is_empty() {
            continue;
        }
        let cost: Vec<Vec<f64>> = p_frame
            .iter()
            .map(|p| r_frame.iter().map(|r| angular_distance_deg(p, r)).collect())
            .collect();
        let assignment = hungarian(&cost)?;
        stats.total_deg += assignment.total_cost;
        stats.matched_pairs += assignment.pairs.len();
    }
    Ok(stats)
}

/// Frame recall accumulator; mergeable across recordings (frame-weighted).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameRecallStats {
    pub matching_frames: usize,
    pub total_frames: usize,
}

impl FrameRecallStats {
    pub fn value(&self) -> f64 {
        if self.total_frames == 0 {
            1.0
        } else {
            self.matching_frames as f64 / self.total_frames as f64
        }
    }

    pub fn merge(&mut self, other: &FrameRecallStats) {
        self.matching_frames += other.matching_frames;
        self.total_frames += other.total_frames;
    }
}

/// Fraction of frames where the predicted DOA count equals the reference
/// count (empty equals empty).
pub fn frame_recall(
    pred: &FramewiseDoas,
    reference: &FramewiseDoas,
) -> Result<FrameRecallStats, MetricsError> {
    if pred.n_frames() != reference.n_frames() {
        return Err(MetricsError::FrameCountMismatch {
            pred: pred.n_frames(),
            reference: reference.n_frames(),
        });
    }
    let matching_frames = pred
        .frames
        .iter()
        .zip(&reference.frames)
        .filter(|(p, r)| p.len() == r.len())
        .count();
    Ok(FrameRecallStats {
        matching_frames,
        total_frames: pred.n_frames(),
    })
}

/// A detection event for segment-based scoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SedEvent {
    pub class_id: usize,
    pub onset_s: f64,
    pub offset_s: f64,
}

/// Segment-based detection tallies; mergeable across recordings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_actives: usize,
    /// Set when scoring activity counts without class labels.
    pub class_agnostic: bool,
}

impl SegmentStats {
    /// `F = 2·TP / (2·TP + FP + FN)`; undefined when nothing is active.
    pub fn f_score(&self) -> Option<f64> {
        let denom = 2 * self.true_positives + self.false_positives + self.false_negatives;
        (denom > 0).then(|| 2.0 * self.true_positives as f64 / denom as f64)
    }

    /// `ER = (S + D + I) / N_ref`; undefined for zero reference activity.
    pub fn error_rate(&self) -> Option<f64> {
        (self.reference_actives > 0).then(|| {
            (self.substitutions + self.deletions + self.insertions) as f64
                / self.reference_actives as f64
        })
    }

    pub fn merge(&mut self, other: &SegmentStats) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.reference_actives += other.reference_actives;
        self.class_agnostic |= other.class_agnostic;
    }
}

fn validate_events(events: &[SedEvent]) -> Result<(), MetricsError> {
    for e in events {
        if !(e.onset_s < e.offset_s) {
            return Err(MetricsError::InvalidEventInterval {
                onset: e.onset_s,
                offset: e.offset_s,
            });
        }
    }
    Ok(())
}

fn intersects_segment(onset: f64, offset: f64, seg_start: f64, seg_end: f64) -> bool {
    onset < seg_end && offset > seg_start
}

/// Class-aware segment metrics over non-overlapping segments of
/// `segment_s` seconds: a (segment, class) cell is active iff any event of
/// that class intersects the segment. Per segment, `S = min(FP, FN)`,
/// `D = max(0, FN-FP)`, `I = max(0, FP-FN)`.
pub fn segment_detection_metrics(
    pred: &[SedEvent],
    reference: &[SedEvent],
    duration_s: f64,
    segment_s: f64,
) -> Result<SegmentStats, MetricsError> {
    if !(segment_s > 0.0) {
        return Err(MetricsError::InvalidSegmentLength(segment_s));
    }
    validate_events(pred)?;
    validate_events(reference)?;

    let n_segments = (duration_s / segment_s).ceil() as usize;
    let n_classes = pred
        .iter()
        .chain(reference)
        .map(|e| e.class_id + 1)
        .max()
        .unwrap_or(0);

    let mut stats = SegmentStats::default();
    for seg in 0..n_segments {
        let start = seg as f64 * segment_s;
        let end = start + segment_s;
        let mut seg_fp = 0usize;
        let mut seg_fn = 0usize;
        for class in 0..n_classes {
            let in_ref = reference.iter().any(|e| {
                e.class_id == class && intersects_segment(e.onset_s, e.offset_s, start, end)
            });
            let in_pred = pred.iter().any(|e| {
                e.class_id == class && intersects_segment(e.onset_s, e.offset_s, start, end)
            });
            match (in_ref, in_pred) {
                (true, true) => stats.true_positives += 1,
                (false, true) => {
                    stats.false_positives += 1;
                    seg_fp += 1;
                }
                (true, false) => {
                    stats.false_negatives += 1;
                    seg_fn += 1;
                }
                (false, false) => {}
            }
            if in_ref {
                stats.reference_actives += 1;
            }
        }
        stats.substitutions += seg_fp.min(seg_fn);
        stats.deletions += seg_fn.saturating_sub(seg_fp);
        stats.insertions += seg_fp.saturating_sub(seg_fn);
    }
    Ok(stats)
}

/// Class-agnostic segment metrics over activity counts, for predictions
/// without class labels (tracker output). Per segment the reference and
/// predicted active-event counts are compared; count surpluses become
/// insertions, deficits become deletions.
pub fn segment_detection_metrics_class_agnostic(
    pred: &[(f64, f64)],
    reference: &[(f64, f64)],
    duration_s: f64,
    segment_s: f64,
) -> Result<SegmentStats, MetricsError> {
    if !(segment_s > 0.0) {
        return Err(MetricsError::InvalidSegmentLength(segment_s));
    }
    for &(onset, offset) in pred.iter().chain(reference) {
        if !(onset < offset) {
            return Err(MetricsError::InvalidEventInterval { onset, offset });
        }
    }

    let n_segments = (duration_s / segment_s).ceil() as usize;
    let mut stats = SegmentStats {
        class_agnostic: true,
        ..SegmentStats::default()
    };
    for seg in 0..n_segments {
        let start = seg as f64 * segment_s;
        let end = start + segment_s;
        let active = |events: &[(f64, f64)]| {
            events
                .iter()
                .filter(|&&(onset, offset)| intersects_segment(onset, offset, start, end))
                .count()
        };
        let n_ref = active(reference);
        let n_pred = active(pred);
        stats.true_positives += n_ref.min(n_pred);
        let seg_fp = n_pred.saturating_sub(n_ref);
        let seg_fn = n_ref.saturating_sub(n_pred);
        stats.false_positives += seg_fp;
        stats.false_negatives += seg_fn;
        stats.substitutions += seg_fp.min(seg_fn);
        stats.deletions += seg_fn.saturating_sub(seg_fp);
        stats.insertions += seg_fp.saturating_sub(seg_fn);
        stats.reference_actives += n_ref;
    }
    Ok(stats)
}

/// Percentage of frames in which at least two simultaneously active events
/// share a class (the same-class-overlap statistic).
pub fn scof(scene: &SceneSpec, frame_rate_hz: f64) -> f64 {
    let n_frames = (scene.duration_s * frame_rate_hz).round() as usize;
    if n_frames == 0 {
        return 0.0;
    }
    let mut overlapping = 0usize;
    for f in 0..n_frames {
        let t = f as f64 / frame_rate_hz;
        let mut counts = std::collections::HashMap::new();
        for e in scene.events.iter().filter(|e| e.is_active_at(t)) {
            *counts.entry(e.class_id).or_insert(0usize) += 1;
        }
        if counts.values().any(|&c| c >= 2) {
            overlapping += 1;
        }
    }
    100.0 * overlapping as f64 / n_frames as f64
}

/// One scored unit (a recording, or an aggregate over recordings).
///
/// Undefined metrics serialize as nulls accompanied by a reason string.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub doa_error_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub doa_error_reason: Option<String>,
    pub frame_recall: Option<f64>,
    pub f_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_score_reason: Option<String>,
    pub error_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_rate_reason: Option<String>,
    pub scof_percent: Option<f64>,
    pub n_frames: usize,
    pub n_matched_pairs: usize,
    /// Set when segment metrics were computed without class labels.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub class_agnostic_detection: bool,
}

impl MetricsReport {
    /// Assembles a report from metric accumulators.
    pub fn from_parts(
        doa: &DoaErrorStats,
        recall: &FrameRecallStats,
        segments: Option<&SegmentStats>,
        scof_percent: Option<f64>,
    ) -> Self {
        let mut report = MetricsReport {
            doa_error_deg: doa.mean_deg(),
            frame_recall: Some(recall.value()),
            scof_percent,
            n_frames: recall.total_frames,
            n_matched_pairs: doa.matched_pairs,
            ..MetricsReport::default()
        };
        if report.doa_error_deg.is_none() {
            report.doa_error_reason = Some("no matched prediction/reference pairs".into());
        }
        match segments {
            Some(s) => {
                report.f_score = s.f_score();
                if report.f_score.is_none() {
                    report.f_score_reason = Some("no activity in reference or prediction".into());
                }
                report.error_rate = s.error_rate();
                if report.error_rate.is_none() {
                    report.error_rate_reason = Some("zero reference activity".into());
                }
                report.class_agnostic_detection = s.class_agnostic;
            }
            None => {
                report.f_score_reason =
                    Some("segment metrics require event predictions".into());
                report.error_rate_reason =
                    Some("segment metrics require event predictions".into());
            }
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn doa(az: f64, el: f64) -> Doa {
        Doa::new(az, el).unwrap()
    }

    fn framewise(frames: Vec<Vec<Doa>>) -> FramewiseDoas {
        FramewiseDoas {
            frames,
            frame_rate_hz: 50.0,
        }
    }

    /// exhaustive minimum over all injective row-to-column maps
    fn brute_force_min_cost(cost: &[Vec<f64>]) -> f64 {
        fn recurse(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            let rows = cost.len();
            let cols = used.len();
            if row == rows || (0..cols).all(|c| used[c]) {
                *best = best.min(acc);
                return;
            }
            for col in 0..cols {
                if !used[col] {
                    used[col] = true;
                    recurse(cost, row + 1, used, acc + cost[row][col], best);
                    used[col] = false;
                }
            }
        }
        let rows = cost.len();
        let cols = cost[0].len();
        let mut best = f64::INFINITY;
        if rows <= cols {
            let mut used = vec![false; cols];
            recurse(cost, 0, &mut used, 0.0, &mut best);
        } else {
            let t: Vec<Vec<f64>> = (0..cols)
                .map(|c| (0..rows).map(|r| cost[r][c]).collect())
                .collect();
            let mut used = vec![false; rows];
            recurse(&t, 0, &mut used, 0.0, &mut best);
        }
        best
    }

    #[test]
    fn hungarian_reference_cases() {
        let a = hungarian(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 0.0);

        let a = hungarian(&[vec![5.0, 2.0, 7.0]]).unwrap();
        assert_eq!(a.pairs, vec![(0, 1)]);
        assert_eq!(a.total_cost, 2.0);

        let a = hungarian(&[]).unwrap();
        assert!(a.pairs.is_empty());
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn hungarian_matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..300 {
            let rows = rng.gen_range(1..=5);
            let cols = rng.gen_range(1..=5);
            let cost: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..cols).map(|_| rng.gen_range(0.0..100.0)).collect())
                .collect();
            let got = hungarian(&cost).unwrap();
            assert_eq!(got.pairs.len(), rows.min(cols));
            let expected = brute_force_min_cost(&cost);
            assert_abs_diff_eq!(got.total_cost, expected, epsilon = 1e-9);
            let _ = trial;
        }
    }

    #[test]
    fn hungarian_beats_greedy_on_larger_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let n = 50;
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect();
            let optimal = hungarian(&cost).unwrap().total_cost;
            let mut greedy = 0.0;
            let mut used = vec![false; n];
            for row in &cost {
                let (col, v) = row
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| !used[*c])
                    .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap();
                used[col] = true;
                greedy += v;
            }
            assert!(optimal <= greedy + 1e-12);
        }
    }

    #[test]
    fn hungarian_rejects_bad_input() {
        assert!(matches!(
            hungarian(&[vec![1.0, 2.0], vec![3.0]]),
            Err(MetricsError::RaggedCostMatrix)
        ));
        assert!(matches!(
            hungarian(&[vec![f64::NAN]]),
            Err(MetricsError::NonFiniteCost { row: 0, col: 0 })
        ));
    }

    #[test]
    fn doa_error_identity_and_offset() {
        let frames = vec![vec![doa(10.0, 0.0)], vec![doa(20.0, 5.0)], vec![]];
        let reference = framewise(frames.clone());
        let stats = doa_error(&framewise(frames), &reference).unwrap();
        assert_eq!(stats.matched_pairs, 2);
        // acos of a dot product one ulp under 1.0 leaves ~1e-7 deg of dust
        assert_abs_diff_eq!(stats.mean_deg().unwrap(), 0.0, epsilon = 1e-6);

        let pred = framewise(vec![vec![doa(15.0, 0.0)], vec![doa(-40.0, 0.0)]]);
        let reference = framewise(vec![vec![doa(5.0, 0.0)], vec![doa(-50.0, 0.0)]]);
        let stats = doa_error(&pred, &reference).unwrap();
        assert_abs_diff_eq!(stats.mean_deg().unwrap(), 10.0, epsilon = 1e-9);
    }

    #[test]
    fn doa_error_picks_the_optimal_cross_matching() {
        let pred = framewise(vec![vec![doa(0.0, 0.0), doa(90.0, 0.0)]]);
        let reference = framewise(vec![vec![doa(92.0, 0.0), doa(-3.0, 0.0)]]);
        let stats = doa_error(&pred, &reference).unwrap();
        assert_eq!(stats.matched_pairs, 2);
        assert_abs_diff_eq!(stats.mean_deg().unwrap(), 2.5, epsilon = 1e-9);
    }

    #[test]
    fn doa_error_no_match_is_explicit() {
        let pred = framewise(vec![vec![], vec![doa(0.0, 0.0)]]);
        let reference = framewise(vec![vec![doa(1.0, 0.0)], vec![]]);
        let stats = doa_error(&pred, &reference).unwrap();
        assert_eq!(stats.matched_pairs, 0);
        assert_eq!(stats.mean_deg(), None);

        assert!(matches!(
            doa_error(&framewise(vec![vec![]]), &framewise(vec![vec![], vec![]])),
            Err(MetricsError::FrameCountMismatch { .. })
        ));
    }

    #[test]
    fn doa_error_is_symmetric_and_permutation_invariant() {
        let a = framewise(vec![vec![doa(0.0, 10.0), doa(100.0, -20.0)], vec![doa(50.0, 0.0)]]);
        let b = framewise(vec![vec![doa(5.0, 12.0), doa(95.0, -15.0)], vec![doa(55.0, 5.0)]]);
        let ab = doa_error(&a, &b).unwrap();
        let ba = doa_error(&b, &a).unwrap();
        assert_abs_diff_eq!(ab.mean_deg().unwrap(), ba.mean_deg().unwrap(), epsilon = 1e-12);

        let a_permuted = framewise(vec![
            vec![doa(100.0, -20.0), doa(0.0, 10.0)],
            vec![doa(50.0, 0.0)],
        ]);
        let pab = doa_error(&a_permuted, &b).unwrap();
        assert_abs_diff_eq!(ab.mean_deg().unwrap(), pab.mean_deg().unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn doa_error_is_rotation_invariant() {
        let a = framewise(vec![vec![doa(170.0, 10.0), doa(-100.0, -20.0)]]);
        let b = framewise(vec![vec![doa(175.0, 12.0), doa(-95.0, -15.0)]]);
        let base = doa_error(&a, &b).unwrap().mean_deg().unwrap();
        let rot = |fw: &FramewiseDoas| {
            framewise(
                fw.frames
                    .iter()
                    .map(|f| f.iter().map(|d| d.rotated_azimuth(123.0)).collect())
                    .collect(),
            )
        };
        let rotated = doa_error(&rot(&a), &rot(&b)).unwrap().mean_deg().unwrap();
        assert_abs_diff_eq!(base, rotated, epsilon = 1e-9);
    }

    #[test]
    fn frame_recall_cases() {
        let reference = framewise(vec![vec![doa(0.0, 0.0)], vec![], vec![doa(1.0, 1.0)], vec![]]);
        let perfect = frame_recall(&reference, &reference).unwrap();
        assert_abs_diff_eq!(perfect.value(), 1.0, epsilon = 1e-12);

        let empty = framewise(vec![vec![], vec![], vec![], vec![]]);
        let half = frame_recall(&empty, &reference).unwrap();
        assert_abs_diff_eq!(half.value(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn segment_metrics_identities() {
        let events = vec![
            SedEvent { class_id: 0, onset_s: 0.5, offset_s: 2.5 },
            SedEvent { class_id: 1, onset_s: 4.0, offset_s: 6.0 },
        ];
        let stats = segment_detection_metrics(&events, &events, 10.0, 1.0).unwrap();
        assert_abs_diff_eq!(stats.f_score().unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.error_rate().unwrap(), 0.0, epsilon = 1e-12);

        let stats = segment_detection_metrics(&[], &events, 10.0, 1.0).unwrap();
        assert_abs_diff_eq!(stats.f_score().unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.error_rate().unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn segment_substitution_hand_example() {
        // one segment: reference class A, prediction class B
        let reference = vec![SedEvent { class_id: 0, onset_s: 0.1, offset_s: 0.9 }];
        let pred = vec![SedEvent { class_id: 1, onset_s: 0.2, offset_s: 0.8 }];
        let stats = segment_detection_metrics(&pred, &reference, 1.0, 1.0).unwrap();
        assert_eq!(stats.true_positives, 0);
        assert_eq!(stats.false_positives, 1);
        assert_eq!(stats.false_negatives, 1);
        assert_eq!(stats.substitutions, 1);
        assert_eq!(stats.deletions, 0);
        assert_eq!(stats.insertions, 0);
        assert_abs_diff_eq!(stats.f_score().unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.error_rate().unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn segment_error_rate_undefined_without_reference() {
        let pred = vec![SedEvent { class_id: 0, onset_s: 0.0, offset_s: 1.0 }];
        let stats = segment_detection_metrics(&pred, &[], 2.0, 1.0).unwrap();
        assert_eq!(stats.error_rate(), None);
        assert_eq!(stats.f_score(), Some(0.0));
    }

    #[test]
    fn class_agnostic_counts() {
        let reference = vec![(0.0, 3.0), (1.0, 2.0)];
        let pred = vec![(0.0, 3.0)];
        let stats =
            segment_detection_metrics_class_agnostic(&pred, &reference, 3.0, 1.0).unwrap();
        // segments: [0,1): ref 1 pred 1; [1,2): ref 2 pred 1; [2,3): ref 1 pred 1
        assert_eq!(stats.true_positives, 3);
        assert_eq!(stats.false_negatives, 1);
        assert_eq!(stats.deletions, 1);
        assert_eq!(stats.reference_actives, 4);
        assert!(stats.class_agnostic);
    }

    #[test]
    fn scof_cases() {
        use crate::scene::{EventSpec, MotionMode, SceneSpec, SCENE_DURATION_S};
        let event = |class_id: usize, onset: f64, offset: f64| EventSpec {
            class_id,
            onset_s: onset,
            offset_s: offset,
            start_doa: doa(0.0, 0.0),
            angular_velocity_deg_s: 0.0,
            motion_mode: MotionMode::Stationary,
            distance_m: 1.0,
        };
        let scene = |events: Vec<EventSpec>, max_overlap: usize| SceneSpec {
            duration_s: SCENE_DURATION_S,
            max_overlap,
            n_classes: 11,
            elevation_range: (-60.0, 60.0),
            events,
            seed: 0,
        };

        // any O1 scene has zero same-class overlap
        let o1 = scene(vec![event(3, 0.0, 5.0), event(3, 6.0, 10.0)], 1);
        assert_eq!(scof(&o1, 50.0), 0.0);

        // two same-class events fully overlapping for 3 s of 30 s
        let same = scene(vec![event(2, 10.0, 13.0), event(2, 10.0, 13.0)], 2);
        assert_abs_diff_eq!(scof(&same, 50.0), 10.0, epsilon = 1e-9);

        // different classes never count
        let diff = scene(vec![event(1, 10.0, 13.0), event(2, 10.0, 13.0)], 2);
        assert_eq!(scof(&diff, 50.0), 0.0);
    }

    #[test]
    fn report_serializes_undefined_metrics_as_null() {
        let report = MetricsReport::from_parts(
            &DoaErrorStats::default(),
            &FrameRecallStats { matching_frames: 3, total_frames: 4 },
            None,
            Some(0.0),
        );
        let json = serde_json::to_value(&report).unwrap();
        assert!(json["doa_error_deg"].is_null());
        assert!(json["doa_error_reason"].is_string());
        assert_abs_diff_eq!(json["frame_recall"].as_f64().unwrap(), 0.75, epsilon = 1e-12);
        assert!(json["f_score"].is_null());
        assert!(json["error_rate"].is_null());
        assert_eq!(json["n_frames"], 4);
        assert_eq!(json["n_matched_pairs"], 0);
    }
}
