//! Grid anchors (one per feature cell per ratio and level) and radar-point
//! anchors, which put each radar return at the top, bottom, left or right
//! edge midpoint or at the centre of the anchor box.

use serde::{Deserialize, Serialize};

use crate::error::AnchorError;
use crate::geometry::{Box2D, RadarPoint};
use crate::scene_io::ImageSize;

/// Where the radar point sits on an anchor box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Point on the top edge midpoint; the box extends downward.
    Top,
    /// Point on the bottom edge midpoint; the box extends upward.
    Bottom,
    /// Point on the left edge midpoint; the box extends rightward.
    Left,
    /// Point on the right edge midpoint; the box extends leftward.
    Right,
    Center,
}

impl Placement {
    /// Emission order: top, bottom, left, right, centre.
    pub const ALL: [Placement; 5] = [
        Placement::Top,
        Placement::Bottom,
        Placement::Left,
        Placement::Right,
        Placement::Center,
    ];

    /// Box of size `width x height` positioned so `(px, py)` lands on this placement.
    pub fn place(self, px: f64, py: f64, width: f64, height: f64) -> Box2D {
        let (hw, hh) = (width / 2.0, height / 2.0);
        let (x1, y1, x2, y2) = match self {
            Placement::Top => (px - hw, py, px + hw, py + height),
            Placement::Bottom => (px - hw, py - height, px + hw, py),
            Placement::Left => (px, py - hh, px + width, py + hh),
            Placement::Right => (px - width, py - hh, px, py + hh),
            Placement::Center => (px - hw, py - hh, px + hw, py + hh),
        };
        Box2D::new(x1, y1, x2, y2)
    }

    /// The point on `b` that this placement pins to the radar return.
    pub fn anchor_point(self, b: &Box2D) -> (f64, f64) {
        let (cx, cy) = b.center();
        match self {
            Placement::Top => (cx, b.y1),
            Placement::Bottom => (cx, b.y2),
            Placement::Left => (b.x1, cy),
            Placement::Right => (b.x2, cy),
            Placement::Center => (cx, cy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchorSpec {
    pub ratios: Vec<f64>,
    /// One anchor scale per pyramid level.
    pub scales_per_level: Vec<f64>,
    pub level_strides: Vec<usize>,
    /// Radar placements to emit; grid anchors ignore this.
    pub placements: Vec<Placement>,
}

impl Default for AnchorSpec {
    fn default() -> Self {
        Self::for_512()
    }
}

impl AnchorSpec {
    pub const DEFAULT_RATIOS: [f64; 3] = [0.5, 1.0, 2.0];
    pub const DEFAULT_STRIDES: [usize; 5] = [4, 8, 16, 32, 64];

    pub fn for_512() -> Self {
        Self {
            ratios: Self::DEFAULT_RATIOS.to_vec(),
            scales_per_level: vec![8.0, 16.0, 32.0, 64.0, 128.0],
            level_strides: Self::DEFAULT_STRIDES.to_vec(),
            placements: Placement::ALL.to_vec(),
        }
    }

    pub fn for_1024() -> Self {
        Self {
            scales_per_level: vec![16.0, 32.0, 64.0, 128.0, 256.0],
            ..Self::for_512()
        }
    }

    /// Default spec for an image size; sizes other than 1024 use the 512 scales.
    pub fn for_image(size: ImageSize) -> Self {
        if size.width.max(size.height) >= 1024 {
            Self::for_1024()
        } else {
            Self::for_512()
        }
    }

    pub fn center_only(mut self) -> Self {
        self.placements = vec![Placement::Center];
        self
    }

    pub fn num_levels(&self) -> usize {
        self.level_strides.len()
    }

    pub fn validate(&self) -> Result<(), AnchorError> {
        if self.scales_per_level.len() != self.level_strides.len() {
            return Err(AnchorError::InvalidSpec(format!(
                "{} scales for {} levels",
                self.scales_per_level.len(),
                self.level_strides.len()
            )));
        }
        if self
            .ratios
            .iter()
            .chain(&self.scales_per_level)
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(AnchorError::InvalidSpec(
                "ratios and scales must be finite and > 0".into(),
            ));
        }
        if self.level_strides.contains(&0) {
            return Err(AnchorError::InvalidSpec("strides must be >= 1".into()));
        }
        Ok(())
    }
}

/// Width and height of an anchor with area `scale^2` and `height / width = ratio`.
#[inline]
pub fn anchor_dims(scale: f64, ratio: f64) -> (f64, f64) {
    let root = ratio.sqrt();
    (scale / root, scale * root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorSource {
    Grid,
    Radar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorMeta {
    pub source: AnchorSource,
    pub level: usize,
    pub ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub placement: Option<Placement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point_index: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    boxes: Vec<Box2D>,
    meta: Vec<AnchorMeta>,
}

impl AnchorSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, b: Box2D, meta: AnchorMeta) {
        self.boxes.push(b);
        self.meta.push(meta);
    }

    pub fn boxes(&self) -> &[Box2D] {
        &self.boxes
    }

    pub fn meta(&self) -> &[AnchorMeta] {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Appends `other`, returning the index offset its anchors start at.
    pub fn extend_from(&mut self, other: &AnchorSet) -> usize {
        let offset = self.len();
        self.boxes.extend_from_slice(&other.boxes);
        self.meta.extend_from_slice(&other.meta);
        offset
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Box2D, &AnchorMeta)> {
        self.boxes.iter().zip(&self.meta)
    }
}

/// Whether boxes are intersected with the image rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clipping {
    Clip,
    Raw,
}

/// Radar anchors in the order point, level, placement, ratio.
///
/// Points outside the image emit nothing. With [`Clipping::Clip`] each box is
/// intersected with the image and dropped if no area survives.
pub fn radar_anchors_with(
    points: &[RadarPoint],
    spec: &AnchorSpec,
    image_size: ImageSize,
    clipping: Clipping,
) -> AnchorSet {
    let (w, h) = image_size.as_f64();
    let mut set = AnchorSet::new();
    for (point_index, p) in points.iter().enumerate() {
        if !p.in_bounds(w, h) {
            continue;
        }
        for (level, &scale) in spec.scales_per_level.iter().enumerate() {
            for &placement in &spec.placements {
                for &ratio in &spec.ratios {
                    let (aw, ah) = anchor_dims(scale, ratio);
                    let raw = placement.place(p.x, p.y, aw, ah);
                    let b = match clipping {
                        Clipping::Raw => raw,
                        Clipping::Clip => match raw.clip(w, h) {
                            Some(b) => b,
                            None => continue,
                        },
                    };
                    set.push(
                        b,
                        AnchorMeta {
                            source: AnchorSource::Radar,
                            level,
                            ratio,
                            placement: Some(placement),
                            point_index: Some(point_index),
                        },
                    );
                }
            }
        }
    }
    set
}

pub fn radar_anchors(points: &[RadarPoint], spec: &AnchorSpec, image_size: ImageSize) -> AnchorSet {
    radar_anchors_with(points, spec, image_size, Clipping::Clip)
}

/// Feature grid size at a stride: `ceil(dim / stride)` cells, the same as a
/// same-padded strided convolution.
pub fn grid_dims(image_size: ImageSize, stride: usize) -> (usize, usize) {
    (
        image_size.width.div_ceil(stride),
        image_size.height.div_ceil(stride),
    )
}

/// One anchor per feature-cell centre `((i + 0.5) s, (j + 0.5) s)` per ratio,
/// ordered level, row, column, ratio; clipped to the image.
pub fn grid_anchors(spec: &AnchorSpec, image_size: ImageSize) -> AnchorSet {
    let (w, h) = image_size.as_f64();
    let mut set = AnchorSet::new();
    for (level, (&scale, &stride)) in spec
        .scales_per_level
        .iter()
        .zip(&spec.level_strides)
        .enumerate()
    {
        let (nx, ny) = grid_dims(image_size, stride);
        let s = stride as f64;
        for j in 0..ny {
            let cy = (j as f64 + 0.5) * s;
            for i in 0..nx {
                let cx = (i as f64 + 0.5) * s;
                for &ratio in &spec.ratios {
                    let (aw, ah) = anchor_dims(scale, ratio);
                    if let Some(b) = Box2D::from_center(cx, cy, aw, ah).clip(w, h) {
                        set.push(
                            b,
                            AnchorMeta {
                                source: AnchorSource::Grid,
                                level,
                                ratio,
                                placement: None,
                                point_index: None,
                            },
                        );
                    }
                }
            }
        }
    }
    set
}
