//! RPN label assignment, the Best of Two merge of RGB and radar positives,
//! and positive/negative sampling.

use std::collections::HashSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSource;
use crate::error::TargetError;
use crate::geometry::{iou, Box2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssignmentConfig {
    /// Positive iff best IoU is strictly above this.
    pub pos_iou: f64,
    /// Negative iff best IoU is strictly below this.
    pub neg_iou: f64,
    pub num_pos: usize,
    pub num_neg: usize,
    pub seed: u64,
    /// Force each gt's best anchor positive when no anchor cleared `pos_iou` for it.
    pub low_quality_fallback: bool,
}

impl Default for AssignmentConfig {
    fn default() -> Self {
        Self {
            pos_iou: 0.7,
            neg_iou: 0.3,
            num_pos: 128,
            num_neg: 128,
            seed: 0,
            low_quality_fallback: true,
        }
    }
}

impl AssignmentConfig {
    pub fn validate(&self) -> Result<(), TargetError> {
        let ok = 0.0 <= self.neg_iou && self.neg_iou <= self.pos_iou && self.pos_iou <= 1.0;
        if !ok {
            return Err(TargetError::InvalidConfig(format!(
                "need 0 <= neg_iou ({}) <= pos_iou ({}) <= 1",
                self.neg_iou, self.pos_iou
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RpnTargets {
    pub labels: Vec<Label>,
    /// Gt index each positive anchor regresses toward; `None` otherwise.
    pub matched_gt: Vec<Option<usize>>,
    /// Best IoU of each anchor over all gts (0 with no gts).
    pub max_iou: Vec<f64>,
    /// Anchors made positive by the per-gt fallback.
    pub forced: Vec<usize>,
    pub sampled_positive_indices: Vec<usize>,
    pub sampled_negative_indices: Vec<usize>,
}

impl RpnTargets {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn indices_with(&self, label: Label) -> Vec<usize> {
        const BLOCK: usize = 64;
        let mut out = Vec::new();
        for (b, chunk) in self.labels.chunks(BLOCK).enumerate() {
            // branch-free test first; positives are sparse in large grids
            if !chunk.iter().fold(false, |acc, l| acc | (*l == label)) {
                continue;
            }
            out.extend(
                chunk
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| **l == label)
                    .map(|(i, _)| b * BLOCK + i),
            );
        }
        out
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }

    /// Positive anchors whose regression target is `gt`.
    pub fn positives_for(&self, gt: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .zip(&self.matched_gt)
            .enumerate()
            .filter(move |(_, (l, m))| **l == Label::Positive && **m == Some(gt))
            .map(|(i, _)| i)
    }
}

/// `(iou, index)` ordering: higher IoU wins, lower index breaks ties.
#[inline]
fn better(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

const NONE: (f64, usize) = (f64::NEG_INFINITY, usize::MAX);
const CHUNK: usize = 2048;

struct Scores {
    max_iou: Vec<f64>,
    argmax: Vec<usize>,
    /// Best anchor per gt.
    gt_best: Vec<(f64, usize)>,
}

fn score(anchors: &[Box2D], gts: &[Box2D]) -> Scores {
    let n = anchors.len();
    let mut max_iou = vec![0.0; n];
    let mut argmax = vec![0usize; n];
    let gt_best = max_iou
        .par_chunks_mut(CHUNK)
        .zip(argmax.par_chunks_mut(CHUNK))
        .enumerate()
        .map(|(chunk, (mx, am))| {
            let base = chunk * CHUNK;
            let mut local = vec![NONE; gts.len()];
            for (k, (m, a)) in mx.iter_mut().zip(am.iter_mut()).enumerate() {
                let i = base + k;
                let mut best = NONE;
                for (j, g) in gts.iter().enumerate() {
                    let v = iou(&anchors[i], g);
                    best = better(best, (v, j));
                    local[j] = better(local[j], (v, i));
                }
                *m = best.0;
                *a = best.1;
            }
            local
        })
        .reduce(
            || vec![NONE; gts.len()],
            |a, b| a.into_iter().zip(b).map(|(x, y)| better(x, y)).collect(),
        );
    Scores {
        max_iou,
        argmax,
        gt_best,
    }
}

/// Labels every anchor against the gts.
///
/// Positive when the best IoU exceeds `pos_iou` (matched to the argmax gt,
/// lowest gt index on ties), negative when it is below `neg_iou`, neutral
/// otherwise. With the fallback enabled, each gt that ends up with no positive
/// anchor gets its highest-IoU anchor (lowest index on ties) forced positive
/// and matched to it, provided that IoU is above zero and the anchor is not
/// already positive for another gt. With no gts every anchor is negative.
pub fn assign_labels(anchors: &[Box2D], gts: &[Box2D], cfg: &AssignmentConfig) -> RpnTargets {
    let n = anchors.len();
    if gts.is_empty() {
        return RpnTargets {
            labels: vec![Label::Negative; n],
            matched_gt: vec![None; n],
            max_iou: vec![0.0; n],
            ..RpnTargets::default()
        };
    }
    let Scores {
        max_iou,
        argmax,
        gt_best,
    } = score(anchors, gts);

    let mut labels = Vec::with_capacity(n);
    let mut matched_gt = Vec::with_capacity(n);
    for (m, a) in max_iou.iter().zip(&argmax) {
        if *m > cfg.pos_iou {
            labels.push(Label::Positive);
            matched_gt.push(Some(*a));
        } else if *m < cfg.neg_iou {
            labels.push(Label::Negative);
            matched_gt.push(None);
        } else {
            labels.push(Label::Neutral);
            matched_gt.push(None);
        }
    }

    let mut forced = Vec::new();
    if cfg.low_quality_fallback && n > 0 {
        let mut covered = vec![false; gts.len()];
        for g in matched_gt.iter().flatten() {
            covered[*g] = true;
        }
        for (g, &(best, anchor)) in gt_best.iter().enumerate() {
            if covered[g] || best <= 0.0 || labels[anchor] == Label::Positive {
                continue;
            }
            labels[anchor] = Label::Positive;
            matched_gt[anchor] = Some(g);
            forced.push(anchor);
        }
    }

    RpnTargets {
        labels,
        matched_gt,
        max_iou,
        forced,
        ..RpnTargets::default()
    }
}

/// How radar positives may replace RGB positives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BestOfTwoMode {
    /// Compare only against the IoU with the RGB anchor's own gt, using that
    /// gt's best positive radar anchor.
    #[default]
    PerGt,
    /// Literal nested loop: a radar positive replaces an RGB positive when its
    /// IoU with its own gt beats the RGB anchor's IoU with its own gt.
    Pairwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergedPositive {
    pub source: AnchorSource,
    /// Index into the grid or radar anchor set named by `source`.
    pub index: usize,
    pub bbox: Box2D,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BestOfTwo {
    pub positives: Vec<MergedPositive>,
    /// RGB positives swapped for a radar anchor.
    pub replaced: usize,
    /// Radar positives added for gts that had no RGB positive.
    pub added: usize,
}

fn box_key(b: &Box2D) -> [u64; 4] {
    b.to_array().map(f64::to_bits)
}

/// Merges RGB and radar positives.
///
/// Each positive RGB anchor matched to gt `g` is swapped for `g`'s
/// highest-IoU positive radar anchor when that anchor's IoU with `g` is
/// strictly higher. Under [`BestOfTwoMode::PerGt`], a gt with radar positives
/// matched to it but no RGB positive also receives its best radar anchor.
/// Radar entries whose box duplicates one already in the set are dropped.
pub fn best_of_two(
    rgb_boxes: &[Box2D],
    rgb: &RpnTargets,
    radar_boxes: &[Box2D],
    radar: &RpnTargets,
    gts: &[Box2D],
    mode: BestOfTwoMode,
) -> BestOfTwo {
    let rgb_pos = rgb.indices_with(Label::Positive);
    let radar_pos = radar.indices_with(Label::Positive);
    let mut raw = Vec::with_capacity(rgb_pos.len());
    let mut replaced = 0;
    let mut added = 0;

    match mode {
        BestOfTwoMode::PerGt => {
            let mut best_radar = vec![None::<(f64, usize)>; gts.len()];
            let mut radar_covers = vec![false; gts.len()];
            for &r in &radar_pos {
                if let Some(g) = radar.matched_gt[r] {
                    radar_covers[g] = true;
                }
                for (g, gt) in gts.iter().enumerate() {
                    let v = iou(&radar_boxes[r], gt);
                    if v > 0.0 && best_radar[g].is_none_or(|(b, _)| v > b) {
                        best_radar[g] = Some((v, r));
                    }
                }
            }
            let mut rgb_covers = vec![false; gts.len()];
            for &i in &rgb_pos {
                let g = rgb.matched_gt[i].expect("positive anchors are matched");
                rgb_covers[g] = true;
                let own = iou(&rgb_boxes[i], &gts[g]);
                match best_radar[g] {
                    Some((v, r)) if v > own => {
                        replaced += 1;
                        raw.push(MergedPositive {
                            source: AnchorSource::Radar,
                            index: r,
                            bbox: radar_boxes[r],
                            gt: g,
                            iou: v,
                        });
                    }
                    _ => raw.push(MergedPositive {
                        source: AnchorSource::Grid,
                        index: i,
                        bbox: rgb_boxes[i],
                        gt: g,
                        iou: own,
                    }),
                }
            }
            for g in 0..gts.len() {
                if rgb_covers[g] || !radar_covers[g] {
                    continue;
                }
                if let Some((v, r)) = best_radar[g] {
                    added += 1;
                    raw.push(MergedPositive {
                        source: AnchorSource::Radar,
                        index: r,
                        bbox: radar_boxes[r],
                        gt: g,
                        iou: v,
                    });
                }
            }
        }
        BestOfTwoMode::Pairwise => {
            let radar_scored: Vec<(usize, usize, f64)> = radar_pos
                .iter()
                .map(|&r| {
                    let g = radar.matched_gt[r].expect("positive anchors are matched");
                    (r, g, iou(&radar_boxes[r], &gts[g]))
                })
                .collect();
            for &i in &rgb_pos {
                let g = rgb.matched_gt[i].expect("positive anchors are matched");
                let mut cur = MergedPositive {
                    source: AnchorSource::Grid,
                    index: i,
                    bbox: rgb_boxes[i],
                    gt: g,
                    iou: iou(&rgb_boxes[i], &gts[g]),
                };
                for &(r, rg, v) in &radar_scored {
                    if v > cur.iou {
                        cur = MergedPositive {
                            source: AnchorSource::Radar,
                            index: r,
                            bbox: radar_boxes[r],
                            gt: rg,
                            iou: v,
                        };
                    }
                }
                if cur.source == AnchorSource::Radar {
                    replaced += 1;
                }
                raw.push(cur);
            }
        }
    }

    let mut seen: HashSet<[u64; 4]> = raw
        .iter()
        .filter(|m| m.source == AnchorSource::Grid)
        .map(|m| box_key(&m.bbox))
        .collect();
    let positives = raw
        .into_iter()
        .filter(|m| m.source == AnchorSource::Grid || seen.insert(box_key(&m.bbox)))
        .collect();
    BestOfTwo {
        positives,
        replaced,
        added,
    }
}

/// Targets over the concatenation `grid ++ radar` (radar indices offset by the
/// grid count): merged entries are positive, anchors negative in their own
/// assignment stay negative, everything else is neutral. Reuses the grid
/// buffers.
pub fn combine_targets(grid: RpnTargets, radar: &RpnTargets, merged: &BestOfTwo) -> RpnTargets {
    let offset = grid.len();
    let grid_pos = grid.indices_with(Label::Positive);
    let RpnTargets {
        mut labels,
        mut matched_gt,
        mut max_iou,
        forced,
        ..
    } = grid;
    for i in grid_pos {
        labels[i] = Label::Neutral;
        matched_gt[i] = None;
    }
    labels.extend(radar.labels.iter().map(|l| {
        if *l == Label::Negative {
            Label::Negative
        } else {
            Label::Neutral
        }
    }));
    matched_gt.resize(offset + radar.len(), None);
    max_iou.extend_from_slice(&radar.max_iou);
    for m in &merged.positives {
        let i = match m.source {
            AnchorSource::Grid => m.index,
            AnchorSource::Radar => offset + m.index,
        };
        labels[i] = Label::Positive;
        matched_gt[i] = Some(m.gt);
    }
    let forced = forced
        .into_iter()
        .chain(radar.forced.iter().map(|i| i + offset))
        .filter(|&i| labels[i] == Label::Positive)
        .collect();
    RpnTargets {
        labels,
        matched_gt,
        max_iou,
        forced,
        ..RpnTargets::default()
    }
}

/// Uniformly samples `min(num_pos, #positive)` positives and
/// `min(num_neg, #negative)` negatives without replacement. A positive
/// shortfall is not backfilled with negatives. Indices come back sorted.
pub fn sample_targets(targets: &RpnTargets, cfg: &AssignmentConfig) -> Result<RpnTargets, TargetError> {
    if targets.is_empty() {
        return Err(TargetError::InsufficientAnchors);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = |pool: Vec<usize>, k: usize| -> Vec<usize> {
        let k = k.min(pool.len());
        let mut picked: Vec<usize> = index::sample(&mut rng, pool.len(), k)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        picked.sort_unstable();
        picked
    };
    let pos = draw(targets.indices_with(Label::Positive), cfg.num_pos);
    let neg = draw(targets.indices_with(Label::Negative), cfg.num_neg);
    Ok(RpnTargets {
        sampled_positive_indices: pos,
        sampled_negative_indices: neg,
        ..targets.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> Box2D {
        Box2D::new(x1, y1, x2, y2)
    }

    fn cfg() -> AssignmentConfig {
        AssignmentConfig::default()
    }

    #[test]
    fn identical_anchor_positive() {
        let t = assign_labels(&[b(0.0, 0.0, 10.0, 10.0)], &[b(0.0, 0.0, 10.0, 10.0)], &cfg());
        assert_eq!(t.labels, vec![Label::Positive]);
        assert_eq!(t.matched_gt, vec![Some(0)]);
        assert!(t.forced.is_empty());
    }

    #[test]
    fn fallback_promotes_best_anchor() {
        let gt = b(0.0, 0.0, 100.0, 100.0);
        // IoU 0.5 and 0.25
        let anchors = [b(0.0, 0.0, 100.0, 50.0), b(0.0, 0.0, 50.0, 50.0), b(200.0, 200.0, 210.0, 210.0)];
        let t = assign_labels(&anchors, &[gt], &cfg());
        assert_eq!(t.labels, vec![Label::Positive, Label::Negative, Label::Negative]);
        assert_eq!(t.forced, vec![0]);
        assert!((t.max_iou[0] - 0.5).abs() < 1e-15);
        let off = AssignmentConfig {
            low_quality_fallback: false,
            ..cfg()
        };
        assert_eq!(assign_labels(&anchors, &[gt], &off).labels[0], Label::Neutral);
    }

    #[test]
    fn no_fallback_for_unreachable_gt() {
        let t = assign_labels(&[b(0.0, 0.0, 1.0, 1.0)], &[b(50.0, 50.0, 60.0, 60.0)], &cfg());
        assert_eq!(t.labels, vec![Label::Negative]);
        assert!(t.forced.is_empty());
    }

    #[test]
    fn boundaries_are_neutral() {
        let gt = b(0.0, 0.0, 10.0, 10.0);
        // IoU exactly 0.3: 30 / 100
        let a03 = b(0.0, 0.0, 3.0, 10.0);
        // IoU exactly 0.7
        let a07 = b(0.0, 0.0, 7.0, 10.0);
        let exact = AssignmentConfig {
            low_quality_fallback: false,
            ..cfg()
        };
        let t = assign_labels(&[a03, a07], &[gt], &exact);
        assert_eq!(t.labels, vec![Label::Neutral, Label::Neutral]);
    }

    #[test]
    fn empty_gts_all_negative() {
        let t = assign_labels(&[b(0.0, 0.0, 1.0, 1.0); 3], &[], &cfg());
        assert_eq!(t.labels, vec![Label::Negative; 3]);
        let t = assign_labels(&[], &[b(0.0, 0.0, 1.0, 1.0)], &cfg());
        assert!(t.is_empty());
    }

    #[test]
    fn ties_pick_lowest_index() {
        let gt = b(0.0, 0.0, 10.0, 10.0);
        let a = b(0.0, 0.0, 10.0, 5.0);
        let t = assign_labels(&[a, a], &[gt], &cfg());
        assert_eq!(t.forced, vec![0]);
        let t = assign_labels(&[a], &[gt, gt], &AssignmentConfig { pos_iou: 0.4, ..cfg() });
        assert_eq!(t.matched_gt, vec![Some(0)]);
    }

    #[test]
    fn config_bounds() {
        assert!(cfg().validate().is_ok());
        assert!(AssignmentConfig { neg_iou: 0.8, ..cfg() }.validate().is_err());
        assert!(AssignmentConfig { pos_iou: 1.2, ..cfg() }.validate().is_err());
    }

    fn targets_for(boxes: &[Box2D], gts: &[Box2D]) -> RpnTargets {
        assign_labels(boxes, gts, &cfg())
    }

    #[test]
    fn bot_empty_radar_keeps_rgb() {
        let gts = [b(0.0, 0.0, 100.0, 100.0)];
        let rgb = [b(0.0, 0.0, 100.0, 80.0), b(300.0, 0.0, 310.0, 10.0)];
        let rt = targets_for(&rgb, &gts);
        let m = best_of_two(&rgb, &rt, &[], &targets_for(&[], &gts), &gts, BestOfTwoMode::PerGt);
        assert_eq!(m.positives.len(), 1);
        assert_eq!(m.positives[0].source, AnchorSource::Grid);
        assert_eq!(m.positives[0].index, 0);
        assert_eq!((m.replaced, m.added), (0, 0));
    }

    #[test]
    fn bot_identical_radar_is_noop() {
        let gts = [b(0.0, 0.0, 100.0, 100.0)];
        let rgb = [b(0.0, 0.0, 100.0, 80.0)];
        let m = best_of_two(&rgb, &targets_for(&rgb, &gts), &rgb, &targets_for(&rgb, &gts), &gts, BestOfTwoMode::PerGt);
        assert_eq!(m.positives.len(), 1);
        assert_eq!(m.positives[0].source, AnchorSource::Grid);
        assert_eq!(m.replaced, 0);
    }

    #[test]
    fn bot_better_radar_replaces() {
        let gts = [b(0.0, 0.0, 100.0, 100.0)];
        // IoU 0.72 and 0.90
        let rgb = [b(0.0, 0.0, 100.0, 72.0)];
        let radar = [b(0.0, 0.0, 100.0, 90.0)];
        let rt = targets_for(&rgb, &gts);
        let dt = targets_for(&radar, &gts);
        assert!((rt.max_iou[0] - 0.72).abs() < 1e-12 && (dt.max_iou[0] - 0.9).abs() < 1e-12);
        for mode in [BestOfTwoMode::PerGt, BestOfTwoMode::Pairwise] {
            let m = best_of_two(&rgb, &rt, &radar, &dt, &gts, mode);
            assert_eq!(m.positives.len(), 1);
            assert_eq!(m.positives[0].source, AnchorSource::Radar);
            assert_eq!(m.positives[0].bbox, radar[0]);
            assert_eq!(m.replaced, 1);
        }
    }

    #[test]
    fn bot_replacements_collapse() {
        let gts = [b(0.0, 0.0, 100.0, 100.0)];
        let rgb = [b(0.0, 0.0, 100.0, 72.0), b(0.0, 0.0, 72.0, 100.0), b(0.0, 0.0, 100.0, 95.0)];
        let radar = [b(0.0, 0.0, 100.0, 90.0)];
        let m = best_of_two(&rgb, &targets_for(&rgb, &gts), &radar, &targets_for(&radar, &gts), &gts, BestOfTwoMode::PerGt);
        // first two swapped for the same radar box, collapsed; third kept
        assert_eq!(m.replaced, 2);
        assert_eq!(m.positives.len(), 2);
        assert_eq!(m.positives[1].source, AnchorSource::Grid);
        assert_eq!(m.positives[1].index, 2);
    }

    #[test]
    fn bot_modes_differ_across_gts() {
        let gts = [b(0.0, 0.0, 100.0, 100.0), b(500.0, 500.0, 540.0, 540.0)];
        let rgb = [b(0.0, 0.0, 100.0, 80.0)];
        let radar = [b(500.0, 500.0, 540.0, 540.0)];
        let rt = targets_for(&rgb, &gts);
        let dt = targets_for(&radar, &gts);
        let per_gt = best_of_two(&rgb, &rt, &radar, &dt, &gts, BestOfTwoMode::PerGt);
        assert_eq!(per_gt.replaced, 0);
        // second gt had no RGB positive
        assert_eq!(per_gt.added, 1);
        assert_eq!(per_gt.positives.len(), 2);
        let pairwise = best_of_two(&rgb, &rt, &radar, &dt, &gts, BestOfTwoMode::Pairwise);
        assert_eq!(pairwise.replaced, 1);
        assert_eq!(pairwise.positives[0].gt, 1);
    }

    #[test]
    fn combine_offsets_radar() {
        let gts = [b(0.0, 0.0, 100.0, 100.0)];
        let rgb = [b(0.0, 0.0, 100.0, 72.0), b(300.0, 300.0, 310.0, 310.0)];
        let radar = [b(0.0, 0.0, 100.0, 90.0)];
        let rt = targets_for(&rgb, &gts);
        let dt = targets_for(&radar, &gts);
        let m = best_of_two(&rgb, &rt, &radar, &dt, &gts, BestOfTwoMode::PerGt);
        let c = combine_targets(rt.clone(), &dt, &m);
        assert_eq!(c.labels, vec![Label::Neutral, Label::Negative, Label::Positive]);
        assert_eq!(c.matched_gt[2], Some(0));
    }

    #[test]
    fn sampling_counts() {
        let mut labels = vec![Label::Positive; 300];
        labels.extend(vec![Label::Negative; 5000]);
        labels.extend(vec![Label::Neutral; 10]);
        let t = RpnTargets {
            matched_gt: vec![None; labels.len()],
            max_iou: vec![0.0; labels.len()],
            labels,
            ..RpnTargets::default()
        };
        let s = sample_targets(&t, &cfg()).unwrap();
        assert_eq!(s.sampled_positive_indices.len(), 128);
        assert_eq!(s.sampled_negative_indices.len(), 128);
        assert!(s.sampled_positive_indices.iter().all(|&i| i < 300));
        assert!(s.sampled_negative_indices.iter().all(|&i| (300..5300).contains(&i)));
        assert_eq!(s, sample_targets(&t, &cfg()).unwrap());
        let other = sample_targets(&t, &AssignmentConfig { seed: 1, ..cfg() }).unwrap();
        assert_ne!(s.sampled_positive_indices, other.sampled_positive_indices);

        let mut few = t.clone();
        few.labels[10..300].fill(Label::Neutral);
        let s = sample_targets(&few, &cfg()).unwrap();
        assert_eq!(s.sampled_positive_indices, (0..10).collect::<Vec<_>>());
        assert_eq!(s.sampled_negative_indices.len(), 128);
    }

    #[test]
    fn sampling_empty_is_error() {
        assert!(matches!(
            sample_targets(&RpnTargets::default(), &cfg()),
            Err(TargetError::InsufficientAnchors)
        ));
    }

    fn arb_boxes(max: usize) -> impl Strategy<Value = Vec<Box2D>> {
        prop::collection::vec((0.0..200.0f64, 0.0..200.0f64, 5.0..80.0f64, 5.0..80.0f64), 0..max)
            .prop_map(|v| v.into_iter().map(|(x, y, w, h)| b(x, y, x + w, y + h)).collect())
    }

    proptest! {
        #[test]
        fn raising_pos_iou_never_adds_positives(anchors in arb_boxes(60), gts in arb_boxes(6),
                                                lo in 0.3..0.9f64, bump in 0.0..0.1f64) {
            let c = |p: f64| AssignmentConfig { pos_iou: p, low_quality_fallback: false, ..cfg() };
            let a = assign_labels(&anchors, &gts, &c(lo)).count(Label::Positive);
            let b = assign_labels(&anchors, &gts, &c(lo + bump)).count(Label::Positive);
            prop_assert!(b <= a);
        }

        #[test]
        fn sampled_subsets_consistent(anchors in arb_boxes(80), gts in arb_boxes(5), seed in 0u64..1000) {
            prop_assume!(!anchors.is_empty());
            let c = AssignmentConfig { num_pos: 7, num_neg: 9, seed, ..cfg() };
            let s = sample_targets(&assign_labels(&anchors, &gts, &c), &c).unwrap();
            prop_assert!(s.sampled_positive_indices.len() <= 7);
            prop_assert!(s.sampled_negative_indices.len() <= 9);
            for &i in &s.sampled_positive_indices {
                prop_assert_eq!(s.labels[i], Label::Positive);
            }
            for &i in &s.sampled_negative_indices {
                prop_assert_eq!(s.labels[i], Label::Negative);
            }
        }

        #[test]
        fn merged_dominates_and_is_bounded(rgb in arb_boxes(40), radar in arb_boxes(40), gts in arb_boxes(5)) {
            let rt = assign_labels(&rgb, &gts, &cfg());
            let dt = assign_labels(&radar, &gts, &cfg());
            let m = best_of_two(&rgb, &rt, &radar, &dt, &gts, BestOfTwoMode::PerGt);
            prop_assert!(m.positives.len() <= rt.count(Label::Positive) + dt.count(Label::Positive));
            for (g, gt) in gts.iter().enumerate() {
                let merged = m.positives.iter().map(|p| iou(&p.bbox, gt)).fold(0.0, f64::max);
                let base = rt.positives_for(g).map(|i| iou(&rgb[i], gt)).fold(0.0, f64::max);
                let radar_only = dt.positives_for(g).map(|i| iou(&radar[i], gt)).fold(0.0, f64::max);
                prop_assert!(merged >= base);
                prop_assert!(merged >= radar_only);
            }
        }
    }
}
