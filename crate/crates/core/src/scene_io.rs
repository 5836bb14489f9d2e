//! Scene files, radar rasterization and the synthetic scene generator.

use std::fmt;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::anchors::{anchor_dims, Placement};
use crate::error::SceneError;
use crate::featblocks::{FeatureMap, Shape};
use crate::geometry::{Box2D, RadarPoint};

pub const MAX_OBJECTS: usize = 100;

/// Single-channel map holding radar range at each hit cell, zero elsewhere.
pub type RadarFeatureMap = FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ObjectClass {
    Car = 0,
    Truck = 1,
    Person = 2,
    Motorcycle = 3,
    Bicycle = 4,
    Bus = 5,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 6] = [
        ObjectClass::Car,
        ObjectClass::Truck,
        ObjectClass::Person,
        ObjectClass::Motorcycle,
        ObjectClass::Bicycle,
        ObjectClass::Bus,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: i64) -> Option<Self> {
        usize::try_from(id).ok().and_then(|i| Self::ALL.get(i).copied())
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Car => "Car",
            ObjectClass::Truck => "Truck",
            ObjectClass::Person => "Person",
            ObjectClass::Motorcycle => "Motorcycle",
            ObjectClass::Bicycle => "Bicycle",
            ObjectClass::Bus => "Bus",
        }
    }
}

impl TryFrom<u8> for ObjectClass {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::from_id(v as i64).ok_or_else(|| format!("class_id {v} outside 0..=5"))
    }
}

impl From<ObjectClass> for u8 {
    fn from(c: ObjectClass) -> u8 {
        c.id()
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct ImageSize {
    pub width: usize,
    pub height: usize,
}

impl ImageSize {
    pub const fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn square(side: usize) -> Self {
        Self::new(side, side)
    }

    pub fn as_f64(self) -> (f64, f64) {
        (self.width as f64, self.height as f64)
    }
}

impl From<[usize; 2]> for ImageSize {
    fn from(v: [usize; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<ImageSize> for [usize; 2] {
    fn from(s: ImageSize) -> Self {
        [s.width, s.height]
    }
}

impl fmt::Display for ImageSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    #[serde(rename = "box")]
    pub bbox: Box2D,
    pub class_id: ObjectClass,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub image_size: ImageSize,
    pub radar_points: Vec<RadarPoint>,
    pub gt_boxes: Vec<GtBox>,
}

impl SceneRecord {
    pub fn gt_rects(&self) -> Vec<Box2D> {
        self.gt_boxes.iter().map(|g| g.bbox).collect()
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let fail = |reason: String| SceneError::Invariant {
            scene_id: self.scene_id.clone(),
            reason,
        };
        if self.image_size.width == 0 || self.image_size.height == 0 {
            return Err(fail(format!("image size {} must be positive", self.image_size)));
        }
        if self.gt_boxes.len() > MAX_OBJECTS {
            return Err(fail(format!(
                "{} gt boxes exceeds the {MAX_OBJECTS}-object cap",
                self.gt_boxes.len()
            )));
        }
        for (i, p) in self.radar_points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) || p.z < 0.0 {
                return Err(fail(format!("radar point {i} needs finite x, y and z >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawGt {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    class_id: i64,
}

#[derive(Deserialize)]
struct RawScene {
    scene_id: String,
    image_size: [usize; 2],
    radar_points: Vec<[f64; 3]>,
    gt_boxes: Vec<RawGt>,
}

impl RawScene {
    fn into_record(self) -> Result<SceneRecord, SceneError> {
        let fail = |reason: String| SceneError::Invariant {
            scene_id: self.scene_id.clone(),
            reason,
        };
        let mut gt_boxes = Vec::with_capacity(self.gt_boxes.len());
        for (i, g) in self.gt_boxes.iter().enumerate() {
            let bbox = Box2D::try_from(g.bbox).map_err(|e| fail(format!("gt box {i}: {e}")))?;
            let class_id = ObjectClass::from_id(g.class_id)
                .ok_or_else(|| fail(format!("gt box {i}: class_id {} outside 0..=5", g.class_id)))?;
            gt_boxes.push(GtBox { bbox, class_id });
        }
        let rec = SceneRecord {
            radar_points: self.radar_points.iter().map(|&p| p.into()).collect(),
            image_size: self.image_size.into(),
            gt_boxes,
            scene_id: self.scene_id,
        };
        rec.validate()?;
        Ok(rec)
    }
}

/// Parses a scene file body: a JSON array of scene objects.
pub fn parse_scenes(text: &str) -> Result<Vec<SceneRecord>, SceneError> {
    let raw: Vec<RawScene> = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => SceneError::Schema(e.to_string()),
        _ => SceneError::Parse(e.to_string()),
    })?;
    raw.into_iter().map(RawScene::into_record).collect()
}

pub fn load_scenes(path: &Path) -> Result<Vec<SceneRecord>, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenes(&text)
}

pub fn scenes_to_json(scenes: &[SceneRecord]) -> String {
    serde_json::to_string_pretty(scenes).expect("scenes serialize")
}

pub fn save_scenes(path: &Path, scenes: &[SceneRecord]) -> Result<(), SceneError> {
    std::fs::write(path, scenes_to_json(scenes)).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes each in-bounds point's range at cell `(floor(y), floor(x))`.
/// When several points share a cell the smallest range wins.
pub fn rasterize_radar(points: &[RadarPoint], image_size: ImageSize) -> RadarFeatureMap {
    rasterize_radar_scaled(points, image_size, 1.0)
}

/// As [`rasterize_radar`], multiplying each stored range by `z_scale`.
pub fn rasterize_radar_scaled(
    points: &[RadarPoint],
    image_size: ImageSize,
    z_scale: f64,
) -> RadarFeatureMap {
    let (w, h) = (image_size.width, image_size.height);
    let mut best: Vec<Option<f64>> = vec![None; w * h];
    for p in points {
        if !p.in_bounds(w as f64, h as f64) {
            continue;
        }
        let cell = p.y.floor() as usize * w + p.x.floor() as usize;
        best[cell] = Some(match best[cell] {
            Some(z) => z.min(p.z),
            None => p.z,
        });
    }
    let data = best
        .into_iter()
        .map(|z| z.map_or(0.0, |z| z * z_scale))
        .collect();
    FeatureMap::from_vec(Shape::new(1, h, w), data).expect("raster dims")
}

/// Rescales pixel coordinates for an image resized from `from` to `to`;
/// ranges are left untouched.
pub fn resize_points(points: &[RadarPoint], from: ImageSize, to: ImageSize) -> Vec<RadarPoint> {
    let sx = to.width as f64 / from.width as f64;
    let sy = to.height as f64 / from.height as f64;
    points
        .iter()
        .map(|p| RadarPoint::new(p.x * sx, p.y * sy, p.z))
        .collect()
}

const BACKGROUND: f64 = 0.5;
const CLASS_COLOURS: [[f64; 3]; 6] = [
    [0.85, 0.15, 0.15],
    [0.15, 0.25, 0.85],
    [0.95, 0.85, 0.20],
    [0.20, 0.80, 0.30],
    [0.75, 0.30, 0.80],
    [0.10, 0.70, 0.75],
];

/// Flat-shaded `(3, H, W)` stand-in image in `[0, 1]`: grey background with
/// each gt box painted in its class colour, later boxes on top.
pub fn render_rgb(scene: &SceneRecord) -> FeatureMap {
    let ImageSize { width, height } = scene.image_size;
    let mut img = FeatureMap::filled(Shape::new(3, height, width), BACKGROUND);
    for g in &scene.gt_boxes {
        let b = g.bbox;
        // cells whose centre lies in the half-open box
        let x0 = (b.x1 - 0.5).ceil().max(0.0) as usize;
        let x1 = ((b.x2 - 0.5).ceil().max(0.0) as usize).min(width);
        let y0 = (b.y1 - 0.5).ceil().max(0.0) as usize;
        let y1 = ((b.y2 - 0.5).ceil().max(0.0) as usize).min(height);
        let colour = CLASS_COLOURS[g.class_id.id() as usize];
        for (c, &v) in colour.iter().enumerate() {
            for y in y0..y1 {
                for x in x0..x1 {
                    img.set(c, y, x, v);
                }
            }
        }
    }
    img
}

/// How synthetic box dimensions are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeModel {
    /// Width and height independently uniform in `[min, max]`.
    Uniform { min: f64, max: f64 },
    /// Anchor-shaped boxes: a random scale and ratio, each side then scaled
    /// by a factor uniform in `[1 - size_jitter, 1 + size_jitter]`.
    AnchorLike {
        scales: Vec<f64>,
        ratios: Vec<f64>,
        size_jitter: f64,
    },
}

/// Relative weights over the five radar placements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementMix {
    pub top: f64,
    pub bottom: f64,
    pub left: f64,
    pub right: f64,
    pub center: f64,
}

impl PlacementMix {
    pub fn uniform() -> Self {
        Self {
            top: 1.0,
            bottom: 1.0,
            left: 1.0,
            right: 1.0,
            center: 1.0,
        }
    }

    pub fn only(p: Placement) -> Self {
        let mut m = Self {
            top: 0.0,
            bottom: 0.0,
            left: 0.0,
            right: 0.0,
            center: 0.0,
        };
        *m.weight_mut(p) = 1.0;
        m
    }

    /// Equal weight on the four edges, none on the centre.
    pub fn edges() -> Self {
        Self {
            center: 0.0,
            ..Self::uniform()
        }
    }

    fn weight_mut(&mut self, p: Placement) -> &mut f64 {
        match p {
            Placement::Top => &mut self.top,
            Placement::Bottom => &mut self.bottom,
            Placement::Left => &mut self.left,
            Placement::Right => &mut self.right,
            Placement::Center => &mut self.center,
        }
    }

    /// Weights in top, bottom, left, right, centre order.
    pub fn weights(&self) -> [f64; 5] {
        [self.top, self.bottom, self.left, self.right, self.center]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub scene_count: usize,
    pub image_size: ImageSize,
    /// Inclusive `[min, max]` objects per scene.
    pub boxes_per_scene: [usize; 2],
    pub shape: ShapeModel,
    pub p_hit: f64,
    pub placement_mix: PlacementMix,
    /// Std of the Gaussian jitter added to each radar point, in pixels.
    pub jitter_sigma: f64,
    /// Inclusive range of simulated radar ranges in meters.
    pub range_m: [f64; 2],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            scene_count: 100,
            image_size: ImageSize::square(512),
            boxes_per_scene: [1, 8],
            shape: ShapeModel::Uniform {
                min: 16.0,
                max: 160.0,
            },
            p_hit: 0.7,
            placement_mix: PlacementMix::uniform(),
            jitter_sigma: 2.0,
            range_m: [2.0, 80.0],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::Config(m));
        if !(0.0..=1.0).contains(&self.p_hit) {
            return bad(format!("p_hit must lie in [0, 1], got {}", self.p_hit));
        }
        let [lo, hi] = self.boxes_per_scene;
        if lo > hi || hi > MAX_OBJECTS {
            return bad(format!(
                "boxes_per_scene [{lo}, {hi}] must satisfy min <= max <= {MAX_OBJECTS}"
            ));
        }
        if self.image_size.width < 4 || self.image_size.height < 4 {
            return bad(format!("image size {} too small", self.image_size));
        }
        if !(self.jitter_sigma.is_finite() && self.jitter_sigma >= 0.0) {
            return bad(format!("jitter_sigma must be >= 0, got {}", self.jitter_sigma));
        }
        let w = self.placement_mix.weights();
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return bad("placement weights must be >= 0 with a positive sum".into());
        }
        let [r0, r1] = self.range_m;
        if !(r0.is_finite() && r1.is_finite() && 0.0 <= r0 && r0 <= r1) {
            return bad(format!("range_m [{r0}, {r1}] must satisfy 0 <= min <= max"));
        }
        match &self.shape {
            ShapeModel::Uniform { min, max } => {
                if !(min.is_finite() && *min > 0.0 && min <= max && max.is_finite()) {
                    return bad(format!("box size range [{min}, {max}] invalid"));
                }
            }
            ShapeModel::AnchorLike {
                scales,
                ratios,
                size_jitter,
            } => {
                if scales.is_empty() || ratios.is_empty() {
                    return bad("anchor-like shape needs scales and ratios".into());
                }
                if scales.iter().chain(ratios).any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad("anchor-like scales and ratios must be > 0".into());
                }
                if !(0.0..1.0).contains(size_jitter) {
                    return bad(format!("size_jitter must lie in [0, 1), got {size_jitter}"));
                }
            }
        }
        Ok(())
    }
}

fn draw_dims(shape: &ShapeModel, rng: &mut ChaCha8Rng) -> (f64, f64) {
    match shape {
        ShapeModel::Uniform { min, max } => {
            let mut side = || {
                if min == max {
                    *min
                } else {
                    rng.random_range(*min..=*max)
                }
            };
            let w = side();
            (w, side())
        }
        ShapeModel::AnchorLike {
            scales,
            ratios,
            size_jitter,
        } => {
            let scale = scales[rng.random_range(0..scales.len())];
            let ratio = ratios[rng.random_range(0..ratios.len())];
            let (w, h) = anchor_dims(scale, ratio);
            let mut factor = || {
                if *size_jitter == 0.0 {
                    1.0
                } else {
                    rng.random_range(1.0 - size_jitter..=1.0 + size_jitter)
                }
            };
            (w * factor(), h * factor())
        }
    }
}

/// Seeded scene generator. Each box gets, with probability `p_hit`, one radar
/// point at a placement drawn from `placement_mix` plus `N(0, jitter_sigma^2)`
/// offsets in x and y.
pub fn generate_synthetic_scenes(
    config: &SynthConfig,
    seed: u64,
) -> Result<Vec<SceneRecord>, SceneError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let placement_dist = WeightedIndex::new(config.placement_mix.weights())
        .map_err(|e| SceneError::Config(e.to_string()))?;
    let jitter = Normal::new(0.0, config.jitter_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| SceneError::Config(e.to_string()))?;
    let (iw, ih) = config.image_size.as_f64();
    let [lo, hi] = config.boxes_per_scene;
    let [r0, r1] = config.range_m;

    let mut scenes = Vec::with_capacity(config.scene_count);
    for index in 0..config.scene_count {
        let n = rng.random_range(lo..=hi);
        let mut gt_boxes = Vec::with_capacity(n);
        let mut radar_points = Vec::new();
        for _ in 0..n {
            let (w, h) = draw_dims(&config.shape, &mut rng);
            // keep a one-pixel margin so edge points stay inside the image
            let w = w.min(iw - 2.0);
            let h = h.min(ih - 2.0);
            let x1 = rng.random_range(1.0..=iw - 1.0 - w);
            let y1 = rng.random_range(1.0..=ih - 1.0 - h);
            let bbox = Box2D::new(x1, y1, x1 + w, y1 + h);
            let class_id = ObjectClass::ALL[rng.random_range(0..ObjectClass::ALL.len())];
            gt_boxes.push(GtBox { bbox, class_id });

            if rng.random_bool(config.p_hit) {
                let placement = Placement::ALL[placement_dist.sample(&mut rng)];
                let (mut px, mut py) = placement.anchor_point(&bbox);
                if config.jitter_sigma > 0.0 {
                    px += jitter.sample(&mut rng);
                    py += jitter.sample(&mut rng);
                }
                let z = if r0 == r1 { r0 } else { rng.random_range(r0..=r1) };
                radar_points.push(RadarPoint::new(px, py, z));
            }
        }
        scenes.push(SceneRecord {
            scene_id: format!("synth-{seed}-{index:05}"),
            image_size: config.image_size,
            radar_points,
            gt_boxes,
        });
    }
    Ok(scenes)
}
