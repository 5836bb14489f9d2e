//! Slow reference implementations. Each one follows its definition directly
//! and shares no code with the optimized path, so it can be used to check that
//! path.

#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::anchors::{self, AnchorSpec};
use crate::featblocks::{self, Combine, ConvParams, FeatureMap, ScseParams, Shape};
use crate::geometry::{self, Box2D};
use crate::metrics::{self, Detection, GroundTruth};
use crate::roialign::{self, RoiSpec};
use crate::rpn_targets::{self, AssignmentConfig, Label};
use crate::scene_io::{ObjectClass, SceneRecord};

/// IoU computed by arithmetic on raw corner arrays.
pub fn iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let area = |r: [f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    if area(a) <= 0.0 || area(b) <= 0.0 {
        return 0.0;
    }
    let ix = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let iy = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = ix * iy;
    inter / (area(a) + area(b) - inter)
}

/// "Same"-padded strided convolution, one output value at a time.
pub fn conv2d(input: &FeatureMap, p: &ConvParams) -> FeatureMap {
    let (h, w) = (input.height() as isize, input.width() as isize);
    let s = p.stride as isize;
    let oh = (h + s - 1) / s;
    let ow = (w + s - 1) / s;
    let py = (p.kh as isize - 1) / 2;
    let px = (p.kw as isize - 1) / 2;
    let mut out = FeatureMap::zeros(Shape::new(p.out_ch, oh as usize, ow as usize));
    for o in 0..p.out_ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = p.bias[o];
                for i in 0..p.in_ch {
                    for ky in 0..p.kh as isize {
                        for kx in 0..p.kw as isize {
                            let y = oy * s + ky - py;
                            let x = ox * s + kx - px;
                            if y < 0 || x < 0 || y >= h || x >= w {
                                continue;
                            }
                            acc += p.weight[((o * p.in_ch + i) * p.kh + ky as usize) * p.kw + kx as usize]
                                * input.get(i, y as usize, x as usize);
                        }
                    }
                }
                out.set(o, oy as usize, ox as usize, acc);
            }
        }
    }
    out
}

/// Bilinear read: weights over the four surrounding integer cells, with
/// coordinates in `[-1, dim]` clamped onto the grid and zero beyond.
pub fn bilinear(fm: &FeatureMap, c: usize, y: f64, x: f64) -> f64 {
    let (h, w) = (fm.height() as f64, fm.width() as f64);
    if !(-1.0..=h).contains(&y) || !(-1.0..=w).contains(&x) {
        return 0.0;
    }
    let yc = y.clamp(0.0, h - 1.0);
    let xc = x.clamp(0.0, w - 1.0);
    let mut acc = 0.0;
    for cy in [yc.floor(), yc.floor() + 1.0] {
        for cx in [xc.floor(), xc.floor() + 1.0] {
            let wy = 1.0 - (yc - cy).abs();
            let wx = 1.0 - (xc - cx).abs();
            if wy <= 0.0 || wx <= 0.0 || cy >= h || cx >= w {
                continue;
            }
            acc += wy * wx * fm.get(c, cy as usize, cx as usize);
        }
    }
    acc
}

pub fn roi_align(fm: &FeatureMap, roi: &Box2D, spec: &RoiSpec) -> FeatureMap {
    let mut out = FeatureMap::zeros(Shape::new(fm.channels(), spec.pooled_h, spec.pooled_w));
    let s = spec.spatial_scale;
    let n = spec.sampling as f64;
    for c in 0..fm.channels() {
        for by in 0..spec.pooled_h {
            for bx in 0..spec.pooled_w {
                let mut acc = 0.0;
                for iy in 0..spec.sampling {
                    for ix in 0..spec.sampling {
                        let fy = (by as f64 + (iy as f64 + 0.5) / n) / spec.pooled_h as f64;
                        let fx = (bx as f64 + (ix as f64 + 0.5) / n) / spec.pooled_w as f64;
                        let y = (roi.y1 + fy * (roi.y2 - roi.y1)) * s - 0.5;
                        let x = (roi.x1 + fx * (roi.x2 - roi.x1)) * s - 0.5;
                        acc += bilinear(fm, c, y, x);
                    }
                }
                out.set(c, by, bx, acc / (n * n));
            }
        }
    }
    out
}

/// Labels and matches from the full IoU matrix.
pub fn assign(anchors: &[Box2D], gts: &[Box2D], cfg: &AssignmentConfig) -> (Vec<Label>, Vec<Option<usize>>) {
    let m: Vec<Vec<f64>> = anchors
        .iter()
        .map(|a| gts.iter().map(|g| iou(a.to_array(), g.to_array())).collect())
        .collect();
    let mut labels = vec![Label::Negative; anchors.len()];
    let mut matched = vec![None; anchors.len()];
    if gts.is_empty() {
        return (labels, matched);
    }
    for (i, row) in m.iter().enumerate() {
        let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let arg = row.iter().position(|&v| v == best).unwrap();
        if best > cfg.pos_iou {
            labels[i] = Label::Positive;
            matched[i] = Some(arg);
        } else if best >= cfg.neg_iou {
            labels[i] = Label::Neutral;
        }
    }
    if cfg.low_quality_fallback && !anchors.is_empty() {
        let covered: Vec<bool> = (0..gts.len()).map(|g| matched.contains(&Some(g))).collect();
        for g in 0..gts.len() {
            if covered[g] {
                continue;
            }
            let best = m.iter().map(|r| r[g]).fold(f64::NEG_INFINITY, f64::max);
            let arg = m.iter().position(|r| r[g] == best).unwrap();
            if best > 0.0 && labels[arg] != Label::Positive {
                labels[arg] = Label::Positive;
                matched[arg] = Some(g);
            }
        }
    }
    (labels, matched)
}

/// Best IoU of each gt over all anchors (0 with no anchors).
pub fn best_iou_per_gt(anchors: &[Box2D], gts: &[Box2D]) -> Vec<f64> {
    gts.iter()
        .map(|g| {
            anchors
                .iter()
                .map(|a| iou(a.to_array(), g.to_array()))
                .fold(0.0, f64::max)
        })
        .collect()
}

pub fn proposal_recall(anchors: &[Box2D], gts: &[Box2D], thresh: f64) -> f64 {
    if gts.is_empty() {
        return 1.0;
    }
    let best = best_iou_per_gt(anchors, gts);
    best.iter().filter(|&&v| v >= thresh).count() as f64 / gts.len() as f64
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Scalar scSE: returns the output and the (channel, spatial) gates.
pub fn scse(input: &FeatureMap, p: &ScseParams) -> (FeatureMap, Vec<f64>, Vec<f64>) {
    let (c, h, w) = (input.channels(), input.height(), input.width());
    let hidden = c / p.reduction;
    let mut z = vec![0.0; c];
    for (ch, zc) in z.iter_mut().enumerate() {
        for y in 0..h {
            for x in 0..w {
                *zc += input.get(ch, y, x);
            }
        }
        *zc /= (h * w) as f64;
    }
    let mut a = vec![0.0; hidden];
    for (j, aj) in a.iter_mut().enumerate() {
        let mut t = p.fc1_bias[j];
        for (k, zk) in z.iter().enumerate() {
            t += p.fc1_weight[j * c + k] * zk;
        }
        *aj = t.max(0.0);
    }
    let mut gc = vec![0.0; c];
    for (k, g) in gc.iter_mut().enumerate() {
        let mut t = p.fc2_bias[k];
        for (j, aj) in a.iter().enumerate() {
            t += p.fc2_weight[k * hidden + j] * aj;
        }
        *g = sigmoid(t);
    }
    let mut gs = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut t = p.sse_bias;
            for ch in 0..c {
                t += p.sse_weight[ch] * input.get(ch, y, x);
            }
            gs[y * w + x] = sigmoid(t);
        }
    }
    let mut out = FeatureMap::zeros(input.shape());
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let v = input.get(ch, y, x);
                let u = v * gc[ch];
                let s = v * gs[y * w + x];
                out.set(
                    ch,
                    y,
                    x,
                    match p.combine {
                        Combine::Max => u.max(s),
                        Combine::Add => u + s,
                    },
                );
            }
        }
    }
    (out, gc, gs)
}

/// Interpolated AP by definition: at each of the 101 recall levels the
/// precision is the best precision over every cut-off reaching that recall.
/// `ranked` lists detections by descending score as (is true positive), and
/// ignored detections are already removed.
pub fn interpolated_ap(ranked: &[bool], positives: usize) -> f64 {
    let mut points = Vec::new();
    let mut tp = 0usize;
    for (k, &hit) in ranked.iter().enumerate() {
        tp += usize::from(hit);
        points.push((tp as f64 / positives as f64, tp as f64 / (k + 1) as f64));
    }
    (0..101)
        .map(|i| {
            let r = i as f64 / 100.0;
            points
                .iter()
                .filter(|(rc, _)| *rc >= r)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 101.0
}

/// Single-class greedy match at one threshold, then [`interpolated_ap`].
/// Detections are `(box, score)`; ties in score keep input order.
pub fn single_class_ap(dets: &[(Box2D, f64)], gts: &[Box2D], thresh: f64) -> f64 {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].1.partial_cmp(&dets[a].1).unwrap());
    let mut used = vec![false; gts.len()];
    let mut ranked = Vec::new();
    for i in order {
        let mut pick: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            let v = iou(dets[i].0.to_array(), gt.to_array());
            if used[g] || v < thresh {
                continue;
            }
            if pick.is_none_or(|(_, b)| v > b) {
                pick = Some((g, v));
            }
        }
        if let Some((g, _)) = pick {
            used[g] = true;
        }
        ranked.push(pick.is_some());
    }
    interpolated_ap(&ranked, gts.len())
}

/// Result of comparing one optimized routine against its oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// Description of the first case over tolerance.
    pub first_failure: Option<String>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.first_failure.is_none()
    }
}

struct Tracker {
    out: CheckOutcome,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            out: CheckOutcome {
                name,
                cases: 0,
                max_error: 0.0,
                tolerance,
                first_failure: None,
            },
        }
    }

    fn record(&mut self, err: f64, describe: impl FnOnce() -> String) {
        self.out.cases += 1;
        self.out.max_error = self.out.max_error.max(err);
        if (err.is_nan() || err > self.out.tolerance) && self.out.first_failure.is_none() {
            self.out.first_failure = Some(describe());
        }
    }
}

fn max_diff(a: &FeatureMap, b: &FeatureMap) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Runs every optimized routine against its oracle on `scenes` plus
/// `random_cases` seeded random inputs per routine.
pub fn self_check(scenes: &[SceneRecord], random_cases: usize, seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rand_box = |rng: &mut ChaCha8Rng| {
        let x = rng.random_range(0.0..200.0);
        let y = rng.random_range(0.0..200.0);
        Box2D::new(x, y, x + rng.random_range(0.0..80.0), y + rng.random_range(0.0..80.0))
    };

    let mut t_iou = Tracker::new("iou", 1e-12);
    for s in scenes {
        let gts = s.gt_rects();
        for a in &gts {
            for b in &gts {
                let e = (geometry::iou(a, b) - iou(a.to_array(), b.to_array())).abs();
                t_iou.record(e, || format!("scene {}: {a:?} vs {b:?}", s.scene_id));
            }
        }
    }
    for k in 0..random_cases * 10 {
        let (a, b) = (rand_box(&mut rng), rand_box(&mut rng));
        let e = (geometry::iou(&a, &b) - iou(a.to_array(), b.to_array())).abs();
        t_iou.record(e, || format!("random pair {k}: {a:?} vs {b:?}"));
    }

    let mut t_conv = Tracker::new("conv2d", 1e-9);
    for k in 0..random_cases {
        let (ic, oc) = (rng.random_range(1..4), rng.random_range(1..4));
        let kernel = [1, 3, 5, 7][rng.random_range(0..4)];
        let stride = rng.random_range(1..4);
        let x = FeatureMap::random(Shape::new(ic, rng.random_range(1..12), rng.random_range(1..12)), &mut rng);
        let p = ConvParams::random(oc, ic, kernel, stride, &mut rng).expect("valid random conv");
        let e = match featblocks::conv2d(&x, &p) {
            Ok(y) => max_diff(&y, &conv2d(&x, &p)),
            Err(_) => f64::INFINITY,
        };
        t_conv.record(e, || format!("case {k}: input {}, kernel {kernel}, stride {stride}", x.shape()));
    }

    let mut t_roi = Tracker::new("roi_align", 1e-9);
    for k in 0..random_cases {
        let fm = FeatureMap::random(Shape::new(rng.random_range(1..3), rng.random_range(2..12), rng.random_range(2..12)), &mut rng);
        let spec = RoiSpec {
            pooled_h: rng.random_range(1..8),
            pooled_w: rng.random_range(1..8),
            sampling: rng.random_range(1..4),
            spatial_scale: [1.0, 0.5, 0.25][rng.random_range(0..3)],
        };
        let extent = fm.width().max(fm.height()) as f64 / spec.spatial_scale;
        let x1 = rng.random_range(-3.0..extent);
        let y1 = rng.random_range(-3.0..extent);
        let roi = Box2D::new(x1, y1, x1 + rng.random_range(0.0..extent), y1 + rng.random_range(0.0..extent));
        let e = max_diff(&roialign::roi_align(&fm, &roi, &spec), &roi_align(&fm, &roi, &spec));
        t_roi.record(e, || format!("case {k}: map {}, roi {roi:?}, {spec:?}", fm.shape()));
    }

    let mut t_assign = Tracker::new("assign_labels", 0.0);
    let cfg = AssignmentConfig::default();
    for s in scenes {
        let spec = AnchorSpec::for_image(s.image_size);
        let mut boxes = anchors::grid_anchors(&spec, s.image_size).boxes().to_vec();
        boxes.extend_from_slice(anchors::radar_anchors(&s.radar_points, &spec, s.image_size).boxes());
        let gts = s.gt_rects();
        let fast = rpn_targets::assign_labels(&boxes, &gts, &cfg);
        let (labels, matched) = assign(&boxes, &gts, &cfg);
        let bad = (0..boxes.len()).find(|&i| fast.labels[i] != labels[i] || fast.matched_gt[i] != matched[i]);
        let e = if bad.is_some() { 1.0 } else { 0.0 };
        t_assign.record(e, || {
            let i = bad.unwrap_or(0);
            format!(
                "scene {} anchor {i}: {:?}/{:?} vs oracle {:?}/{:?}",
                s.scene_id, fast.labels[i], fast.matched_gt[i], labels[i], matched[i]
            )
        });
    }

    let mut t_scse = Tracker::new("scse", 1e-9);
    for k in 0..random_cases {
        let combine = if k % 2 == 0 { Combine::Max } else { Combine::Add };
        let x = FeatureMap::random(Shape::new(4, rng.random_range(1..7), rng.random_range(1..7)), &mut rng);
        let p = ScseParams::random(4, 2, combine, &mut rng).expect("valid random scse");
        let e = match featblocks::scse(&x, &p) {
            Ok(y) => max_diff(&y, &scse(&x, &p).0),
            Err(_) => f64::INFINITY,
        };
        t_scse.record(e, || format!("case {k}: input {}, {combine:?}", x.shape()));
    }

    let mut t_ap = Tracker::new("average_precision", 1e-9);
    for s in scenes {
        let gts = s.gt_rects();
        if gts.is_empty() {
            continue;
        }
        let dets: Vec<(Box2D, f64)> = gts
            .iter()
            .map(|g| (g.translate(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)), rng.random_range(0.0..1.0)))
            .collect();
        let d: Vec<Detection> = dets
            .iter()
            .map(|(b, sc)| Detection {
                scene_id: s.scene_id.clone(),
                bbox: *b,
                class_id: ObjectClass::Car,
                score: *sc,
            })
            .collect();
        let g: Vec<GroundTruth> = gts
            .iter()
            .map(|b| GroundTruth {
                scene_id: s.scene_id.clone(),
                bbox: *b,
                class_id: ObjectClass::Car,
            })
            .collect();
        for t in metrics::IOU_THRESHOLDS {
            let fast = metrics::average_precision(&d, &g, t).unwrap_or(f64::NAN);
            let e = (fast - single_class_ap(&dets, &gts, t)).abs();
            t_ap.record(e, || format!("scene {} at IoU {t}", s.scene_id));
        }
    }

    vec![t_iou.out, t_conv.out, t_roi.out, t_assign.out, t_scse.out, t_ap.out]
}
