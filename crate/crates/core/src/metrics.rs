//! COCO-style detection scoring (with the extra 0.85 IoU threshold) and
//! proposal recall.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{iou, Box2D};
use crate::scene_io::{ObjectClass, SceneRecord};

pub const IOU_THRESHOLDS: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];
pub const RECALL_POINTS: usize = 101;
pub const MAX_DETS: usize = 100;
const SMALL_AREA: f64 = 32.0 * 32.0;
const LARGE_AREA: f64 = 96.0 * 96.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub scene_id: String,
    #[serde(rename = "box")]
    pub bbox: Box2D,
    pub class_id: ObjectClass,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scene_id: String,
    #[serde(rename = "box")]
    pub bbox: Box2D,
    pub class_id: ObjectClass,
}

pub fn ground_truths(scenes: &[SceneRecord]) -> Vec<GroundTruth> {
    scenes
        .iter()
        .flat_map(|s| {
            s.gt_boxes.iter().map(|g| GroundTruth {
                scene_id: s.scene_id.clone(),
                bbox: g.bbox,
                class_id: g.class_id,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AreaRange {
    All,
    /// area < 32^2
    Small,
    /// 32^2 <= area < 96^2
    Medium,
    /// area >= 96^2
    Large,
}

impl AreaRange {
    pub const ALL: [AreaRange; 4] = [AreaRange::All, AreaRange::Small, AreaRange::Medium, AreaRange::Large];

    pub fn contains(self, area: f64) -> bool {
        match self {
            AreaRange::All => true,
            AreaRange::Small => area < SMALL_AREA,
            AreaRange::Medium => (SMALL_AREA..LARGE_AREA).contains(&area),
            AreaRange::Large => area >= LARGE_AREA,
        }
    }
}

/// Matching outcome of one detection at one threshold.
#[derive(Debug, Clone, Copy)]
struct DetOutcome {
    score: f64,
    matched: bool,
    ignored: bool,
}

/// Per-threshold outcomes for one class and area range, pooled over scenes.
struct ClassEval {
    outcomes: Vec<Vec<DetOutcome>>,
    /// Gts inside the area range.
    positives: usize,
}

struct Grouped<'a> {
    /// (scene, class) -> detections sorted by descending score
    dets: BTreeMap<(&'a str, ObjectClass), Vec<&'a Detection>>,
    gts: BTreeMap<(&'a str, ObjectClass), Vec<&'a GroundTruth>>,
}

fn sort_by_score(v: &mut [&Detection]) {
    // stable: equal scores keep input order
    v.sort_by(|a, b| b.score.total_cmp(&a.score));
}

fn group<'a>(dets: &'a [Detection], gts: &'a [GroundTruth], max_dets: usize) -> Grouped<'a> {
    let mut per_scene: BTreeMap<&str, Vec<&Detection>> = BTreeMap::new();
    for d in dets {
        per_scene.entry(d.scene_id.as_str()).or_default().push(d);
    }
    let mut grouped = BTreeMap::<_, Vec<&Detection>>::new();
    for (scene, mut list) in per_scene {
        sort_by_score(&mut list);
        list.truncate(max_dets);
        for d in list {
            grouped.entry((scene, d.class_id)).or_default().push(d);
        }
    }
    let mut gt_map = BTreeMap::<_, Vec<&GroundTruth>>::new();
    for g in gts {
        gt_map.entry((g.scene_id.as_str(), g.class_id)).or_default().push(g);
    }
    Grouped {
        dets: grouped,
        gts: gt_map,
    }
}

/// Greedy match of score-sorted detections against one scene/class gt list.
fn match_scene(
    dets: &[&Detection],
    gts: &[&GroundTruth],
    range: AreaRange,
    threshold: f64,
) -> Vec<DetOutcome> {
    // in-range gts first, so a match to an out-of-range gt is only a last resort
    let mut order: Vec<usize> = (0..gts.len()).collect();
    order.sort_by_key(|&g| !range.contains(gts[g].bbox.area()));
    let ignore: Vec<bool> = order.iter().map(|&g| !range.contains(gts[g].bbox.area())).collect();
    let mut taken = vec![false; gts.len()];

    dets.iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (k, &g) in order.iter().enumerate() {
                if taken[k] {
                    continue;
                }
                if let Some((m, _)) = best {
                    if !ignore[m] && ignore[k] {
                        break;
                    }
                }
                let v = iou(&d.bbox, &gts[g].bbox);
                let beats = match best {
                    None => v >= threshold,
                    Some((_, b)) => v > b,
                };
                if beats {
                    best = Some((k, v));
                }
            }
            match best {
                Some((k, _)) => {
                    taken[k] = true;
                    DetOutcome {
                        score: d.score,
                        matched: true,
                        ignored: ignore[k],
                    }
                }
                None => DetOutcome {
                    score: d.score,
                    matched: false,
                    ignored: !range.contains(d.bbox.area()),
                },
            }
        })
        .collect()
}

fn evaluate_class(grouped: &Grouped<'_>, class: ObjectClass, range: AreaRange, thresholds: &[f64]) -> ClassEval {
    let mut scenes: Vec<&str> = grouped
        .dets
        .keys()
        .chain(grouped.gts.keys())
        .filter(|(_, c)| *c == class)
        .map(|(s, _)| *s)
        .collect();
    scenes.sort_unstable();
    scenes.dedup();

    let mut outcomes = vec![Vec::new(); thresholds.len()];
    let mut positives = 0;
    for scene in scenes {
        let dets = grouped.dets.get(&(scene, class)).map(Vec::as_slice).unwrap_or(&[]);
        let gts = grouped.gts.get(&(scene, class)).map(Vec::as_slice).unwrap_or(&[]);
        positives += gts.iter().filter(|g| range.contains(g.bbox.area())).count();
        for (t, &thr) in thresholds.iter().enumerate() {
            outcomes[t].extend(match_scene(dets, gts, range, thr));
        }
    }
    ClassEval { outcomes, positives }
}

/// 101-point interpolated AP and final recall for one pooled outcome list.
fn precision_recall(outcomes: &[DetOutcome], positives: usize) -> (f64, f64) {
    let mut ranked: Vec<&DetOutcome> = outcomes.iter().filter(|o| !o.ignored).collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut recall = Vec::with_capacity(ranked.len());
    let mut precision = Vec::with_capacity(ranked.len());
    for o in ranked {
        if o.matched {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / positives as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut sum = 0.0;
    for k in 0..RECALL_POINTS {
        let r = k as f64 / (RECALL_POINTS - 1) as f64;
        let i = recall.partition_point(|&v| v < r);
        if i < precision.len() {
            sum += precision[i];
        }
    }
    let final_recall = recall.last().copied().unwrap_or(0.0);
    (sum / RECALL_POINTS as f64, final_recall)
}

/// Per (threshold, class) AP and recall, `None` where the class has no gts.
struct Table {
    ap: Vec<Vec<Option<f64>>>,
    recall: Vec<Vec<Option<f64>>>,
}

fn table(grouped: &Grouped<'_>, range: AreaRange, thresholds: &[f64]) -> Table {
    let mut ap = vec![Vec::new(); thresholds.len()];
    let mut recall = vec![Vec::new(); thresholds.len()];
    for class in ObjectClass::ALL {
        let ev = evaluate_class(grouped, class, range, thresholds);
        for t in 0..thresholds.len() {
            if ev.positives == 0 {
                ap[t].push(None);
                recall[t].push(None);
            } else {
                let (a, r) = precision_recall(&ev.outcomes[t], ev.positives);
                ap[t].push(Some(a));
                recall[t].push(Some(r));
            }
        }
    }
    Table { ap, recall }
}

fn mean_defined<'a>(values: impl Iterator<Item = &'a Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Class-averaged AP at a single IoU threshold over all object sizes; `None`
/// when there are no gts at all.
pub fn average_precision(dets: &[Detection], gts: &[GroundTruth], iou_thresh: f64) -> Option<f64> {
    let grouped = group(dets, gts, MAX_DETS);
    let t = table(&grouped, AreaRange::All, &[iou_thresh]);
    mean_defined(t.ap[0].iter())
}

/// The Table-1 style summary. Fields are `None` where no gts fall in scope.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "AP")]
    pub ap: Option<f64>,
    #[serde(rename = "AP50")]
    pub ap50: Option<f64>,
    #[serde(rename = "AP75")]
    pub ap75: Option<f64>,
    #[serde(rename = "AP85")]
    pub ap85: Option<f64>,
    #[serde(rename = "AP(s)")]
    pub ap_small: Option<f64>,
    #[serde(rename = "AP(m)")]
    pub ap_medium: Option<f64>,
    #[serde(rename = "AP(l)")]
    pub ap_large: Option<f64>,
    #[serde(rename = "AR")]
    pub ar: Option<f64>,
    #[serde(rename = "AR(s)")]
    pub ar_small: Option<f64>,
    #[serde(rename = "AR(m)")]
    pub ar_medium: Option<f64>,
    #[serde(rename = "AR(l)")]
    pub ar_large: Option<f64>,
}

impl EvalReport {
    /// False for the vacuous case of no gts anywhere.
    pub fn is_defined(&self) -> bool {
        self.ap.is_some()
    }

    pub fn fields(&self) -> [(&'static str, Option<f64>); 11] {
        [
            ("AP", self.ap),
            ("AP50", self.ap50),
            ("AP75", self.ap75),
            ("AP85", self.ap85),
            ("AP(s)", self.ap_small),
            ("AP(m)", self.ap_medium),
            ("AP(l)", self.ap_large),
            ("AR", self.ar),
            ("AR(s)", self.ar_small),
            ("AR(m)", self.ar_medium),
            ("AR(l)", self.ar_large),
        ]
    }
}

fn threshold_index(t: f64) -> usize {
    IOU_THRESHOLDS.iter().position(|&v| v == t).expect("threshold in sweep")
}

pub fn eval_report(dets: &[Detection], gts: &[GroundTruth]) -> EvalReport {
    let grouped = group(dets, gts, MAX_DETS);
    let all = table(&grouped, AreaRange::All, &IOU_THRESHOLDS);
    let sized: Vec<Table> = [AreaRange::Small, AreaRange::Medium, AreaRange::Large]
        .iter()
        .map(|&r| table(&grouped, r, &IOU_THRESHOLDS))
        .collect();
    let ap_mean = |t: &Table| mean_defined(t.ap.iter().flatten());
    let ar_mean = |t: &Table| mean_defined(t.recall.iter().flatten());
    let at = |thr: f64| mean_defined(all.ap[threshold_index(thr)].iter());
    EvalReport {
        ap: ap_mean(&all),
        ap50: at(0.5),
        ap75: at(0.75),
        ap85: at(0.85),
        ap_small: ap_mean(&sized[0]),
        ap_medium: ap_mean(&sized[1]),
        ap_large: ap_mean(&sized[2]),
        ar: ar_mean(&all),
        ar_small: ar_mean(&sized[0]),
        ar_medium: ar_mean(&sized[1]),
        ar_large: ar_mean(&sized[2]),
    }
}

/// Number of gts whose best IoU against `anchors` is at least `iou_thresh`.
pub fn proposal_hits(anchors: &[Box2D], gts: &[Box2D], iou_thresh: f64) -> usize {
    gts.iter()
        .filter(|g| anchors.iter().any(|a| iou(a, g) >= iou_thresh))
        .count()
}

/// Fraction of gts covered by at least one anchor at `iou_thresh`. An empty
/// gt list has nothing to miss and scores 1.
pub fn proposal_recall(anchors: &[Box2D], gts: &[Box2D], iou_thresh: f64) -> f64 {
    if gts.is_empty() {
        return 1.0;
    }
    proposal_hits(anchors, gts, iou_thresh) as f64 / gts.len() as f64
}
