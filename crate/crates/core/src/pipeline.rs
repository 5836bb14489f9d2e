//! Scene-level orchestration: rasterize, extract and fuse features, generate
//! anchors, assign and sample targets, pool RoI features.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::{grid_anchors, radar_anchors, AnchorSet, AnchorSpec};
use crate::error::{Error, FeatError, PipelineError};
use crate::featblocks::{
    fuse_add, radar_branch, scse, Combine, FeatureMap, FeatureProvider, NoiseConfig, RadarBranchParams,
    ScseParams, TinyConvStack, WeightFile,
};
use crate::geometry::{iou, Box2D, RadarPoint};
use crate::metrics::proposal_hits;
use crate::roialign::{roi_align, RoiSpec};
use crate::rpn_targets::{
    assign_labels, best_of_two, combine_targets, sample_targets, AssignmentConfig, BestOfTwo, BestOfTwoMode,
    Label, RpnTargets,
};
use crate::scene_io::{rasterize_radar_scaled, render_rgb, resize_points, ImageSize, SceneRecord};

/// IoU levels reported by experiments.
pub const RECALL_IOUS: [f64; 3] = [0.5, 0.7, 0.85];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Grid anchors on RGB features only.
    Ffpn,
    /// Radar point anchors only.
    Ranet,
    /// Grid and radar anchors merged by Best of Two.
    #[default]
    Biranet,
}

impl Mode {
    pub fn uses_grid(self) -> bool {
        matches!(self, Mode::Ffpn | Mode::Biranet)
    }

    pub fn uses_radar(self) -> bool {
        matches!(self, Mode::Ranet | Mode::Biranet)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    /// Random init from the pipeline seed.
    #[default]
    Seeded,
    Zero,
    /// JSON weight file with `rgb`, `radar` and `scse` prefixes.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// Model input size; scenes of another size are rescaled. `None` keeps
    /// each scene's own size.
    pub image_size: Option<ImageSize>,
    pub anchors: AnchorSpec,
    pub assignment: AssignmentConfig,
    pub best_of_two: BestOfTwoMode,
    pub weights: WeightSource,
    /// Forces every radar-branch weight to zero regardless of `weights`.
    pub zero_radar_branch: bool,
    pub channels: usize,
    pub scse_reduction: usize,
    pub combine: Combine,
    pub noise: NoiseConfig,
    pub roi: RoiSpec,
    /// Multiplier from radar range in metres to raster value.
    pub z_scale: f64,
    /// Run the convolutional path. Off gives the geometric path only.
    pub compute_features: bool,
    pub dump_intermediates: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Biranet,
            image_size: None,
            anchors: AnchorSpec::default(),
            assignment: AssignmentConfig::default(),
            best_of_two: BestOfTwoMode::default(),
            weights: WeightSource::Seeded,
            zero_radar_branch: false,
            channels: 8,
            scse_reduction: 2,
            combine: Combine::Max,
            noise: NoiseConfig::default(),
            roi: RoiSpec::default(),
            z_scale: 1.0 / 80.0,
            compute_features: true,
            dump_intermediates: false,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Geometric path only: anchors and targets, no convolutions.
    pub fn geometric(mode: Mode) -> Self {
        Self {
            mode,
            compute_features: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if let Err(e) = self.anchors.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.assignment.validate() {
            return bad(e.to_string());
        }
        if self.channels == 0 || self.scse_reduction == 0 || !self.channels.is_multiple_of(self.scse_reduction) {
            return bad(format!(
                "channels ({}) must be a positive multiple of scse_reduction ({})",
                self.channels, self.scse_reduction
            ));
        }
        if !self.roi.is_valid() {
            return bad(format!("invalid roi spec {:?}", self.roi));
        }
        if !(self.noise.gaussian_sigma.is_finite() && self.noise.gaussian_sigma >= 0.0) {
            return bad("noise.gaussian_sigma must be finite and >= 0".into());
        }
        if !(self.z_scale.is_finite() && self.z_scale > 0.0) {
            return bad("z_scale must be finite and > 0".into());
        }
        if let Some(s) = self.image_size {
            if s.width == 0 || s.height == 0 {
                return bad(format!("image_size must be positive, got {s}"));
            }
        }
        Ok(())
    }
}

struct Networks {
    rgb: Box<dyn FeatureProvider>,
    radar: RadarBranchParams,
    scse: ScseParams,
}

fn build_networks(cfg: &PipelineConfig) -> Result<Networks, Error> {
    let c = cfg.channels;
    let (rgb, mut radar, gate) = match &cfg.weights {
        WeightSource::Seeded => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_f00d);
            let rgb = TinyConvStack::random(c, &mut rng);
            let radar = RadarBranchParams::random(c, &mut rng);
            let gate = ScseParams::random(c, cfg.scse_reduction, cfg.combine, &mut rng)?;
            (rgb, radar, gate)
        }
        WeightSource::Zero => {
            let mut rgb = TinyConvStack::random(c, &mut ChaCha8Rng::seed_from_u64(0));
            for conv in [&mut rgb.conv1, &mut rgb.conv2] {
                conv.weight.iter_mut().for_each(|v| *v = 0.0);
                conv.bias.iter_mut().for_each(|v| *v = 0.0);
            }
            (
                rgb,
                RadarBranchParams::zeros(c),
                ScseParams::zeros(c, cfg.scse_reduction, cfg.combine)?,
            )
        }
        WeightSource::File(path) => {
            let file = WeightFile::load(path)?;
            (
                file.get_tiny_stack("rgb")?,
                file.get_radar_branch("radar")?,
                file.get_scse("scse", cfg.combine)?,
            )
        }
    };
    if rgb.channels() != c || radar.channels() != c || gate.channels != c {
        return Err(FeatError::Weights(format!("weights do not match channels = {c}")).into());
    }
    if cfg.zero_radar_branch {
        radar = RadarBranchParams::zeros(c);
    }
    Ok(Networks {
        rgb: Box::new(rgb),
        radar,
        scse: gate,
    })
}

/// Per-stage timings of one scene.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub features: Duration,
    pub anchors: Duration,
    /// Threshold assignment over every anchor set.
    pub assignment: Duration,
    /// Merging and combining targets.
    pub best_of_two: Duration,
    pub sampling: Duration,
    pub roi: Duration,
}

impl Timings {
    /// Whole target-generation time: assignment, merge and sampling.
    pub fn targets(&self) -> Duration {
        self.assignment + self.best_of_two + self.sampling
    }

    fn add(&mut self, o: &Timings) {
        self.features += o.features;
        self.anchors += o.anchors;
        self.assignment += o.assignment;
        self.best_of_two += o.best_of_two;
        self.sampling += o.sampling;
        self.roi += o.roi;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intermediates {
    pub rgb_image: FeatureMap,
    pub radar_map: FeatureMap,
    pub rgb_features: FeatureMap,
    pub radar_features: Option<FeatureMap>,
    pub gated_radar: Option<FeatureMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiFeature {
    /// Index into [`SceneOutput::anchors`].
    pub anchor: usize,
    pub gt: usize,
    pub features: FeatureMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneOutput {
    pub scene_id: String,
    pub image_size: ImageSize,
    /// Gt boxes in model coordinates.
    pub gts: Vec<Box2D>,
    pub fused: Option<FeatureMap>,
    /// Grid anchors first (when used), then radar anchors.
    pub anchors: AnchorSet,
    pub grid_count: usize,
    pub targets: RpnTargets,
    pub best_of_two: Option<BestOfTwo>,
    pub roi_features: Vec<RoiFeature>,
    pub intermediates: Option<Intermediates>,
    /// Excluded from equality.
    #[serde(skip)]
    pub timings: Timings,
}

impl SceneOutput {
    pub fn positive_boxes(&self) -> Vec<Box2D> {
        self.targets
            .indices_with(Label::Positive)
            .into_iter()
            .map(|i| self.anchors.boxes()[i])
            .collect()
    }

    /// Outputs compared field by field, ignoring timings.
    pub fn same_result(&self, other: &SceneOutput) -> bool {
        let strip = |o: &SceneOutput| SceneOutput {
            timings: Timings::default(),
            ..o.clone()
        };
        strip(self) == strip(other)
    }
}

/// 64-bit FNV-1a, used to derive per-scene seeds.
fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn rescale(scene: &SceneRecord, to: ImageSize) -> (Vec<RadarPoint>, Vec<Box2D>) {
    let from = scene.image_size;
    if from == to {
        return (scene.radar_points.clone(), scene.gt_rects());
    }
    let sx = to.width as f64 / from.width as f64;
    let sy = to.height as f64 / from.height as f64;
    let gts = scene
        .gt_boxes
        .iter()
        .map(|g| Box2D::new(g.bbox.x1 * sx, g.bbox.y1 * sy, g.bbox.x2 * sx, g.bbox.y2 * sy))
        .collect();
    (resize_points(&scene.radar_points, from, to), gts)
}

pub struct Pipeline {
    cfg: PipelineConfig,
    nets: Networks,
    grid: Option<(ImageSize, AnchorSet)>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, Error> {
        cfg.validate()?;
        let nets = build_networks(&cfg)?;
        let grid = match (cfg.mode.uses_grid(), cfg.image_size) {
            (true, Some(size)) => Some((size, grid_anchors(&cfg.anchors, size))),
            _ => None,
        };
        Ok(Self { cfg, nets, grid })
    }

    /// Replaces the RGB feature extractor.
    pub fn with_provider(mut self, provider: Box<dyn FeatureProvider>) -> Result<Self, Error> {
        if provider.channels() != self.cfg.channels {
            return Err(FeatError::Weights(format!(
                "provider has {} channels, pipeline expects {}",
                provider.channels(),
                self.cfg.channels
            ))
            .into());
        }
        self.nets.rgb = provider;
        Ok(self)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn run_scene(&self, scene: &SceneRecord) -> Result<SceneOutput, PipelineError> {
        self.run_inner(scene).map_err(|e| PipelineError::Scene {
            scene_id: scene.scene_id.clone(),
            source: Box::new(e),
        })
    }

    fn run_inner(&self, scene: &SceneRecord) -> Result<SceneOutput, Error> {
        scene.validate()?;
        let cfg = &self.cfg;
        let size = cfg.image_size.unwrap_or(scene.image_size);
        let (points, gts) = rescale(scene, size);
        let scene_seed = cfg.seed ^ fnv1a(&scene.scene_id);
        let mut timings = Timings::default();

        let t = Instant::now();
        let (fused, intermediates) = if cfg.compute_features {
            let (f, i) = self.features(scene, &points, size, scene_seed)?;
            (Some(f), i)
        } else {
            (None, None)
        };
        timings.features = t.elapsed();

        let t = Instant::now();
        let mut anchors = if cfg.mode.uses_grid() {
            match &self.grid {
                Some((s, set)) if *s == size => set.clone(),
                _ => grid_anchors(&cfg.anchors, size),
            }
        } else {
            AnchorSet::new()
        };
        let grid_count = anchors.len();
        if cfg.mode.uses_radar() {
            anchors.extend_from(&radar_anchors(&points, &cfg.anchors, size));
        }
        timings.anchors = t.elapsed();
        let (grid_boxes, radar_boxes) = anchors.boxes().split_at(grid_count);

        let mut assignment = cfg.assignment.clone();
        assignment.seed = cfg.assignment.seed ^ fnv1a(&scene.scene_id);

        let t = Instant::now();
        let grid_targets = cfg
            .mode
            .uses_grid()
            .then(|| assign_labels(grid_boxes, &gts, &assignment));
        let radar_targets = cfg
            .mode
            .uses_radar()
            .then(|| assign_labels(radar_boxes, &gts, &assignment));
        timings.assignment = t.elapsed();

        let t = Instant::now();
        let (targets, merged) = match (grid_targets, radar_targets) {
            (Some(gt), Some(rt)) => {
                let merged = best_of_two(grid_boxes, &gt, radar_boxes, &rt, &gts, cfg.best_of_two);
                (combine_targets(gt, &rt, &merged), Some(merged))
            }
            (Some(gt), None) => (gt, None),
            (None, Some(rt)) => (rt, None),
            (None, None) => unreachable!("mode selects at least one anchor source"),
        };
        timings.best_of_two = t.elapsed();

        let t = Instant::now();
        let targets = if targets.is_empty() {
            targets
        } else {
            sample_targets(&targets, &assignment)?
        };
        timings.sampling = t.elapsed();

        let t = Instant::now();
        let roi_features = match &fused {
            Some(map) => targets
                .sampled_positive_indices
                .iter()
                .map(|&i| RoiFeature {
                    anchor: i,
                    gt: targets.matched_gt[i].expect("positive anchors are matched"),
                    features: roi_align(map, &anchors.boxes()[i], &cfg.roi),
                })
                .collect(),
            None => Vec::new(),
        };
        timings.roi = t.elapsed();

        Ok(SceneOutput {
            scene_id: scene.scene_id.clone(),
            image_size: size,
            gts,
            fused,
            anchors,
            grid_count,
            targets,
            best_of_two: merged,
            roi_features,
            intermediates,
            timings,
        })
    }

    fn features(
        &self,
        scene: &SceneRecord,
        points: &[RadarPoint],
        size: ImageSize,
        seed: u64,
    ) -> Result<(FeatureMap, Option<Intermediates>), Error> {
        let cfg = &self.cfg;
        let mut render_scene = scene.clone();
        if render_scene.image_size != size {
            let (_, gts) = rescale(scene, size);
            render_scene.image_size = size;
            for (g, b) in render_scene.gt_boxes.iter_mut().zip(gts) {
                g.bbox = b;
            }
        }
        let image = cfg.noise.apply(&render_rgb(&render_scene), seed);
        let rgb_features = self.nets.rgb.extract(&image)?;
        let radar_map = rasterize_radar_scaled(points, size, cfg.z_scale);

        let (fused, radar_features, gated) = if cfg.mode.uses_radar() {
            let rf = radar_branch(&radar_map, &self.nets.radar)?;
            let g = scse(&rf, &self.nets.scse)?;
            let fused = fuse_add(&g, &rgb_features)?;
            (fused, Some(rf), Some(g))
        } else {
            (rgb_features.clone(), None, None)
        };
        let inter = cfg.dump_intermediates.then_some(Intermediates {
            rgb_image: image,
            radar_map,
            rgb_features,
            radar_features,
            gated_radar: gated,
        });
        Ok((fused, inter))
    }
}

pub fn run_scene(scene: &SceneRecord, cfg: &PipelineConfig) -> Result<SceneOutput, Error> {
    Ok(Pipeline::new(cfg.clone())?.run_scene(scene)?)
}

/// Per-scene quantities an experiment aggregates. Deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneStats {
    pub scene_id: String,
    pub gts: usize,
    pub anchors: usize,
    pub positives: usize,
    /// Gts covered by any anchor, per [`RECALL_IOUS`] level.
    pub anchor_hits: Vec<usize>,
    /// Per gt, the best IoU among all anchors.
    pub best_anchor_iou: Vec<f64>,
    /// Per gt, the best IoU among positive anchors.
    pub best_positive_iou: Vec<f64>,
}

fn stats(out: &SceneOutput) -> SceneStats {
    let boxes = out.anchors.boxes();
    let positives = out.positive_boxes();
    let best = |set: &[Box2D], g: &Box2D| set.iter().map(|a| iou(a, g)).fold(0.0, f64::max);
    SceneStats {
        scene_id: out.scene_id.clone(),
        gts: out.gts.len(),
        anchors: boxes.len(),
        positives: positives.len(),
        anchor_hits: RECALL_IOUS.iter().map(|&t| proposal_hits(boxes, &out.gts, t)).collect(),
        best_anchor_iou: out.gts.iter().map(|g| best(boxes, g)).collect(),
        best_positive_iou: out.gts.iter().map(|g| best(&positives, g)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallPoint {
    pub iou: f64,
    pub recall: f64,
}

/// Summed wall-clock, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub features_s: f64,
    pub anchors_s: f64,
    pub assignment_s: f64,
    pub best_of_two_s: f64,
    pub sampling_s: f64,
    pub roi_s: f64,
    /// Best of Two share of total target-generation time.
    pub best_of_two_fraction: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub label: String,
    pub config: PipelineConfig,
    pub scenes: usize,
    pub gts: usize,
    pub anchor_recall: Vec<RecallPoint>,
    pub mean_best_anchor_iou: f64,
    pub mean_best_positive_iou: f64,
    pub mean_anchors: f64,
    pub mean_positives: f64,
    pub timings: TimingSummary,
    pub per_scene: Vec<SceneStats>,
}

impl ConfigSummary {
    pub fn recall_at(&self, iou: f64) -> Option<f64> {
        self.anchor_recall.iter().find(|p| p.iou == iou).map(|p| p.recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    /// `b - a` per IoU level.
    pub anchor_recall: Vec<RecallPoint>,
    pub mean_best_anchor_iou: f64,
    pub mean_best_positive_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub a: ConfigSummary,
    pub b: ConfigSummary,
    pub delta: Deltas,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))
}

/// Runs every scene on `workers` threads (0 means one per core). Results come
/// back sorted by scene id.
pub fn run_all(scenes: &[SceneRecord], cfg: &PipelineConfig, workers: usize) -> Result<Vec<SceneOutput>, Error> {
    let pipeline = Pipeline::new(cfg.clone())?;
    let mut out = pool(workers)?.install(|| {
        scenes
            .par_iter()
            .map(|s| pipeline.run_scene(s))
            .collect::<Result<Vec<_>, _>>()
    })?;
    out.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    Ok(out)
}

/// Aggregate statistics for one configuration.
pub fn summarize(
    label: &str,
    scenes: &[SceneRecord],
    cfg: &PipelineConfig,
    workers: usize,
) -> Result<ConfigSummary, Error> {
    let pipeline = Pipeline::new(cfg.clone())?;
    let start = Instant::now();
    let mut rows: Vec<(SceneStats, Timings)> = pool(workers)?.install(|| {
        scenes
            .par_iter()
            .map(|s| pipeline.run_scene(s).map(|o| (stats(&o), o.timings)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let wall = start.elapsed();
    rows.sort_by(|a, b| a.0.scene_id.cmp(&b.0.scene_id));

    let mut total = Timings::default();
    for (_, t) in &rows {
        total.add(t);
    }
    let gts: usize = rows.iter().map(|(s, _)| s.gts).sum();
    let mean_over_gts = |f: &dyn Fn(&SceneStats) -> f64| if gts == 0 { 0.0 } else { rows.iter().map(|(s, _)| f(s)).sum::<f64>() / gts as f64 };
    let per_scene_mean = |f: &dyn Fn(&SceneStats) -> usize| {
        if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|(s, _)| f(s)).sum::<usize>() as f64 / rows.len() as f64
        }
    };
    let anchor_recall = RECALL_IOUS
        .iter()
        .enumerate()
        .map(|(k, &t)| RecallPoint {
            iou: t,
            recall: if gts == 0 {
                1.0
            } else {
                rows.iter().map(|(s, _)| s.anchor_hits[k]).sum::<usize>() as f64 / gts as f64
            },
        })
        .collect();
    let target_s = total.targets().as_secs_f64();
    Ok(ConfigSummary {
        label: label.to_string(),
        config: cfg.clone(),
        scenes: rows.len(),
        gts,
        anchor_recall,
        mean_best_anchor_iou: mean_over_gts(&|s| s.best_anchor_iou.iter().sum()),
        mean_best_positive_iou: mean_over_gts(&|s| s.best_positive_iou.iter().sum()),
        mean_anchors: per_scene_mean(&|s| s.anchors),
        mean_positives: per_scene_mean(&|s| s.positives),
        timings: TimingSummary {
            features_s: total.features.as_secs_f64(),
            anchors_s: total.anchors.as_secs_f64(),
            assignment_s: total.assignment.as_secs_f64(),
            best_of_two_s: total.best_of_two.as_secs_f64(),
            sampling_s: total.sampling.as_secs_f64(),
            roi_s: total.roi.as_secs_f64(),
            best_of_two_fraction: if target_s > 0.0 {
                total.best_of_two.as_secs_f64() / target_s
            } else {
                0.0
            },
            wall_s: wall.as_secs_f64(),
        },
        per_scene: rows.into_iter().map(|(s, _)| s).collect(),
    })
}

/// Runs the scenes under two configurations and reports `b - a`.
pub fn run_experiment(
    scenes: &[SceneRecord],
    cfg_a: &PipelineConfig,
    cfg_b: &PipelineConfig,
    workers: usize,
) -> Result<ExperimentReport, Error> {
    let a = summarize("a", scenes, cfg_a, workers)?;
    let b = summarize("b", scenes, cfg_b, workers)?;
    let delta = Deltas {
        anchor_recall: a
            .anchor_recall
            .iter()
            .zip(&b.anchor_recall)
            .map(|(x, y)| RecallPoint {
                iou: x.iou,
                recall: y.recall - x.recall,
            })
            .collect(),
        mean_best_anchor_iou: b.mean_best_anchor_iou - a.mean_best_anchor_iou,
        mean_best_positive_iou: b.mean_best_positive_iou - a.mean_best_positive_iou,
    };
    Ok(ExperimentReport { a, b, delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_io::{generate_synthetic_scenes, GtBox, ObjectClass, SynthConfig};

    fn small_cfg(mode: Mode) -> PipelineConfig {
        PipelineConfig {
            mode,
            channels: 4,
            ..PipelineConfig::default()
        }
    }

    fn scenes(n: usize, seed: u64) -> Vec<SceneRecord> {
        let cfg = SynthConfig {
            scene_count: n,
            image_size: ImageSize::square(128),
            ..SynthConfig::default()
        };
        generate_synthetic_scenes(&cfg, seed).unwrap()
    }

    fn empty_scene() -> SceneRecord {
        SceneRecord {
            scene_id: "empty".into(),
            image_size: ImageSize::square(128),
            radar_points: vec![],
            gt_boxes: vec![GtBox {
                bbox: Box2D::new(10.0, 10.0, 60.0, 50.0),
                class_id: ObjectClass::Car,
            }],
        }
    }

    #[test]
    fn ranet_without_radar_is_empty() {
        let out = run_scene(&empty_scene(), &small_cfg(Mode::Ranet)).unwrap();
        assert!(out.anchors.is_empty());
        assert!(out.targets.is_empty());
        assert!(out.roi_features.is_empty());
        assert_eq!(out.fused.unwrap().shape(), crate::featblocks::Shape::new(4, 32, 32));
    }

    #[test]
    fn biranet_without_radar_matches_grid_only() {
        let scene = empty_scene();
        let bi = PipelineConfig {
            zero_radar_branch: true,
            ..small_cfg(Mode::Biranet)
        };
        let a = run_scene(&scene, &bi).unwrap();
        let b = run_scene(&scene, &small_cfg(Mode::Ffpn)).unwrap();
        assert_eq!(a.targets, b.targets);
        assert_eq!(a.fused, b.fused);
        assert_eq!(a.anchors, b.anchors);
        assert_eq!(a.roi_features, b.roi_features);
    }

    #[test]
    fn seeded_runs_repeat() {
        let s = &scenes(1, 4)[0];
        let cfg = PipelineConfig {
            noise: NoiseConfig::evaluation(),
            ..small_cfg(Mode::Biranet)
        };
        let a = run_scene(s, &cfg).unwrap();
        let b = run_scene(s, &cfg).unwrap();
        assert!(a.same_result(&b));
        assert!(!a.roi_features.is_empty());
        assert_eq!(a.roi_features[0].features.shape(), crate::featblocks::Shape::new(4, 7, 7));
    }

    #[test]
    fn output_order_independent_of_workers() {
        let sc = scenes(12, 9);
        let cfg = PipelineConfig::geometric(Mode::Biranet);
        let one = run_all(&sc, &cfg, 1).unwrap();
        let many = run_all(&sc, &cfg, 4).unwrap();
        assert_eq!(one.len(), many.len());
        assert!(one.iter().zip(&many).all(|(a, b)| a.same_result(b)));
        assert!(one.windows(2).all(|w| w[0].scene_id < w[1].scene_id));
    }

    #[test]
    fn identical_configs_zero_deltas() {
        let sc = scenes(8, 2);
        let cfg = PipelineConfig::geometric(Mode::Biranet);
        let r = run_experiment(&sc, &cfg, &cfg, 2).unwrap();
        assert!(r.delta.anchor_recall.iter().all(|p| p.recall == 0.0));
        assert_eq!(r.delta.mean_best_anchor_iou, 0.0);
        assert_eq!(r.a.per_scene, r.b.per_scene);
    }

    #[test]
    fn biranet_recall_covers_ranet() {
        let sc = scenes(10, 5);
        let r = run_experiment(
            &sc,
            &PipelineConfig::geometric(Mode::Ranet),
            &PipelineConfig::geometric(Mode::Biranet),
            2,
        )
        .unwrap();
        assert!(r.delta.anchor_recall.iter().all(|p| p.recall >= 0.0));
    }

    #[test]
    fn errors_carry_scene_id() {
        let mut bad = empty_scene();
        bad.radar_points.push(RadarPoint { x: 5.0, y: 5.0, z: -1.0 });
        let err = Pipeline::new(small_cfg(Mode::Ffpn)).unwrap().run_scene(&bad).unwrap_err();
        assert!(err.to_string().contains("empty"), "{err}");
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = PipelineConfig {
            channels: 5,
            scse_reduction: 2,
            ..PipelineConfig::default()
        };
        assert!(Pipeline::new(cfg).is_err());
    }

    #[test]
    fn rescales_to_model_size() {
        let s = empty_scene();
        let cfg = PipelineConfig {
            image_size: Some(ImageSize::square(256)),
            ..PipelineConfig::geometric(Mode::Ffpn)
        };
        let out = run_scene(&s, &cfg).unwrap();
        assert_eq!(out.gts[0], Box2D::new(20.0, 20.0, 120.0, 100.0));
        assert_eq!(out.image_size, ImageSize::square(256));
    }

    #[test]
    fn config_json_roundtrip() {
        let cfg = PipelineConfig {
            weights: WeightSource::File("w.json".into()),
            image_size: Some(ImageSize::square(512)),
            ..PipelineConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), cfg);
        let partial: PipelineConfig = serde_json::from_str(r#"{"mode": "ranet"}"#).unwrap();
        assert_eq!(partial.mode, Mode::Ranet);
    }
}
