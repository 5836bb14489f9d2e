//! Box and point primitives, IoU scoring and the vehicle-to-camera projection.
//!
//! Boxes use half-open continuous pixel coordinates: `(x1, y1)` is the top-left
//! corner, `(x2, y2)` the exclusive bottom-right edge, and the area is
//! `(x2 - x1) * (y2 - y1)` with no "+1" pixel correction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Axis-aligned box in pixel coordinates, y growing downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Box2D {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Box2D {
    /// Builds a box, panicking if the corners are inverted or non-finite.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        match Self::try_new(x1, y1, x2, y2) {
            Ok(b) => b,
            Err(e) => panic!("{e}"),
        }
    }

    pub fn try_new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        let finite = x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite();
        if !finite || x1 > x2 || y1 > y2 {
            return Err(GeometryError::InvalidBox([x1, y1, x2, y2]));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Box of the given size centred on `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Self::new(
            cx - width / 2.0,
            cy - height / 2.0,
            cx + width / 2.0,
            cy + height / 2.0,
        )
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    /// Area of the overlap with `other`, zero when disjoint.
    #[inline]
    pub fn intersection_area(&self, other: &Box2D) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Intersects the box with the image rectangle `[0, width) x [0, height)`.
    /// Returns `None` when nothing with positive area survives.
    pub fn clip(&self, width: f64, height: f64) -> Option<Box2D> {
        let x1 = self.x1.clamp(0.0, width);
        let y1 = self.y1.clamp(0.0, height);
        let x2 = self.x2.clamp(0.0, width);
        let y2 = self.y2.clamp(0.0, height);
        if x2 - x1 > 0.0 && y2 - y1 > 0.0 {
            Some(Box2D { x1, y1, x2, y2 })
        } else {
            None
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

impl TryFrom<[f64; 4]> for Box2D {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        Box2D::try_new(v[0], v[1], v[2], v[3])
    }
}

impl From<Box2D> for [f64; 4] {
    fn from(b: Box2D) -> Self {
        b.to_array()
    }
}

/// Intersection over union. Zero when the union is empty, so degenerate boxes
/// score 0 against everything, themselves included.
#[inline]
pub fn iou(a: &Box2D, b: &Box2D) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Dense row-major `rows x cols` matrix of IoU scores.
#[derive(Debug, Clone, PartialEq)]
pub struct IouMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl IouMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }
}

const PAR_ROWS: usize = 4096;

/// Entry `(i, j)` is `iou(&anchors[i], &gts[j])`.
pub fn iou_matrix(anchors: &[Box2D], gts: &[Box2D]) -> IouMatrix {
    let cols = gts.len();
    let mut data = vec![0.0; anchors.len() * cols];
    if cols > 0 {
        let fill = |(row, a): (&mut [f64], &Box2D)| {
            for (cell, g) in row.iter_mut().zip(gts) {
                *cell = iou(a, g);
            }
        };
        if anchors.len() >= PAR_ROWS {
            data.par_chunks_mut(cols).zip(anchors.par_iter()).for_each(fill);
        } else {
            data.chunks_mut(cols).zip(anchors.iter()).for_each(fill);
        }
    }
    IouMatrix {
        rows: anchors.len(),
        cols,
        data,
    }
}

/// Radar return after projection: pixel location plus range in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct RadarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl RadarPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// True when the point falls inside `[0, width) x [0, height)`.
    pub fn in_bounds(&self, width: f64, height: f64) -> bool {
        self.x >= 0.0 && self.x < width && self.y >= 0.0 && self.y < height
    }
}

impl From<[f64; 3]> for RadarPoint {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<RadarPoint> for [f64; 3] {
    fn from(p: RadarPoint) -> Self {
        [p.x, p.y, p.z]
    }
}

/// Pre-composed intrinsics * extrinsics, mapping homogeneous vehicle-frame
/// points `[x, y, z, 1]` to `[u*w, v*w, w]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraProjection {
    pub matrix: [[f64; 4]; 3],
}

impl CameraProjection {
    pub fn new(matrix: [[f64; 4]; 3]) -> Result<Self, GeometryError> {
        if matrix.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFiniteProjection);
        }
        Ok(Self { matrix })
    }

    /// Pinhole camera looking down the vehicle +z axis with no rotation.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self {
            matrix: [
                [fx, 0.0, cx, 0.0],
                [0.0, fy, cy, 0.0],
                [0.0, 0.0, 1.0, 0.0],
            ],
        }
    }

    /// Homogeneous image of a vehicle-frame point.
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let h = [p[0], p[1], p[2], 1.0];
        let mut out = [0.0; 3];
        for (o, row) in out.iter_mut().zip(&self.matrix) {
            *o = row.iter().zip(&h).map(|(m, v)| m * v).sum();
        }
        out
    }
}

/// Projects vehicle-frame radar returns into the camera view.
///
/// The range stored in `z` is the Euclidean distance of the vehicle-frame point
/// from the sensor origin. Points landing behind the camera are dropped; a zero
/// homogeneous scale is reported as [`GeometryError::DegenerateProjection`].
pub fn project_to_camera(
    points: &[[f64; 3]],
    proj: &CameraProjection,
) -> Result<Vec<RadarPoint>, GeometryError> {
    let mut out = Vec::with_capacity(points.len());
    for (index, p) in points.iter().enumerate() {
        let [u, v, w] = proj.apply(*p);
        if w == 0.0 {
            return Err(GeometryError::DegenerateProjection { index });
        }
        if w < 0.0 {
            continue;
        }
        let range = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        out.push(RadarPoint::new(u / w, v / w, range));
    }
    Ok(out)
}
