use nalgebra::{Unit, Vector3};

use super::RigidTransform;
use crate::error::{Error, Result};

/// Infinite plane through `point` with unit `normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub point: Vector3<f64>,
    pub normal: Unit<Vector3<f64>>,
}

impl Plane {
    pub fn new(point: Vector3<f64>, normal: Vector3<f64>) -> Self {
        Self {
            point,
            normal: Unit::new_normalize(normal),
        }
    }

    pub fn signed_distance(&self, x: &Vector3<f64>) -> f64 {
        (x - self.point).dot(&self.normal)
    }

    /// Offset `n · p` of the plane along its normal.
    pub fn offset(&self) -> f64 {
        self.normal.dot(&self.point)
    }

    pub fn transformed(&self, t: &RigidTransform) -> Plane {
        Plane {
            point: t.transform_point(&self.point),
            normal: Unit::new_unchecked(t.transform_vector(&self.normal)),
        }
    }

    /// Unsigned angle between the two normals' lines, in radians.
    pub fn angle_to(&self, other: &Plane) -> f64 {
        self.normal.dot(&other.normal).abs().min(1.0).acos()
    }
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn from_pixels(pixels: &[[u32; 2]]) -> Option<Self> {
        let first = pixels.first()?;
        let mut r = PixelRect {
            x0: first[0],
            y0: first[1],
            x1: first[0],
            y1: first[1],
        };
        for p in pixels {
            r.x0 = r.x0.min(p[0]);
            r.y0 = r.y0.min(p[1]);
            r.x1 = r.x1.max(p[0]);
            r.y1 = r.y1.max(p[1]);
        }
        Some(r)
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0 + 1
    }
}

/// Reference to a patch: frame index and patch index within that frame.
/// Extracted and synthetic patches use their index as `PlanePatch::id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchKey {
    pub frame: usize,
    pub patch: usize,
}

impl PatchKey {
    pub fn new(frame: usize, patch: usize) -> Self {
        Self { frame, patch }
    }
}

/// Planar segment of one frame. Geometry is stored in camera coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanePatch {
    pub id: u32,
    pub frame_id: usize,
    pub plane: Plane,
    pub samples: Vec<Vector3<f64>>,
    pub pixel_count: usize,
    pub area: f64,
    pub centroid: Vector3<f64>,
    pub bbox_px: PixelRect,
    /// Pixel support `(x, y)`; may be empty for patches not tied to an image.
    pub pixels: Vec<[u32; 2]>,
}

impl PlanePatch {
    pub fn ensure_samples(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::DegeneratePatch(format!(
                "patch {} of frame {} has no samples",
                self.id, self.frame_id
            )));
        }
        Ok(())
    }

    /// Copy of this patch with all geometry moved by `t`.
    pub fn transformed(&self, t: &RigidTransform) -> PlanePatch {
        PlanePatch {
            plane: self.plane.transformed(t),
            samples: self.samples.iter().map(|v| t.transform_point(v)).collect(),
            centroid: t.transform_point(&self.centroid),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for Intrinsics {
    /// TUM fr1 defaults.
    fn default() -> Self {
        Self {
            fx: 517.3,
            fy: 516.5,
            cx: 318.6,
            cy: 255.3,
        }
    }
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidParameter(
                "focal lengths must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Ray direction with unit z through pixel center `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        self.ray(u, v) * depth
    }

    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Surface area imaged by one pixel at depth `z` on a plane with unit
    /// normal `n`.
    pub fn pixel_footprint(&self, u: f64, v: f64, depth: f64, normal: &Vector3<f64>) -> f64 {
        let m = self.ray(u, v);
        let cos = normal.dot(&m).abs().max(1e-3 * m.norm());
        depth * depth / (self.fx * self.fy * cos)
    }
}

/// Row-major 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                left: data.len(),
                right: width * height,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// One RGB-D frame. Depth in meters, 0 marks invalid pixels; a zero normal
/// marks a pixel without a normal estimate.
#[derive(Debug, Clone)]
pub struct Frame {
    pub index: usize,
    pub depth: Grid<f64>,
    pub normals: Option<Grid<Vector3<f64>>>,
    pub color: Option<Grid<[u8; 3]>>,
    pub intrinsics: Intrinsics,
    pub pose: RigidTransform,
}

impl Frame {
    pub fn new(index: usize, depth: Grid<f64>, intrinsics: Intrinsics) -> Self {
        Self {
            index,
            depth,
            normals: None,
            color: None,
            intrinsics,
            pose: RigidTransform::identity(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if let Some(n) = &self.normals {
            if !n.same_shape(&self.depth) {
                return Err(Error::DimensionMismatch {
                    left: n.data.len(),
                    right: self.depth.data.len(),
                });
            }
        }
        if let Some(c) = &self.color {
            if !c.same_shape(&self.depth) {
                return Err(Error::DimensionMismatch {
                    left: c.data.len(),
                    right: self.depth.data.len(),
                });
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.depth.width
    }

    pub fn height(&self) -> usize {
        self.depth.height
    }

    /// Back-projected 3D point of pixel `(x, y)`, or `None` for invalid depth.
    pub fn point(&self, x: usize, y: usize) -> Option<Vector3<f64>> {
        let z = *self.depth.get(x, y);
        (z > 0.0 && z.is_finite()).then(|| self.intrinsics.back_project(x as f64, y as f64, z))
    }
}
