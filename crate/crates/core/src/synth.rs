//! Synthetic indoor scenes with exact ground truth.
//!
//! A scene is a set of textured rectangles observed by a pinhole camera along
//! a known trajectory. Every frame is ray cast, so the per-frame patches, the
//! optional depth/colour images and the coplanarity labels all agree.

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::correspondence::CoplanarPair;
use crate::descriptor::pair_confidence;
use crate::error::{Error, Result};
use crate::geometry::{
    farthest_point_sampling, Frame, Grid, Intrinsics, PatchKey, PixelRect, Plane, PlanePatch, RigidTransform,
};

/// Bounded rectangle `center + a·u_axis + b·v_axis`, `|a| ≤ half_u`, `|b| ≤ half_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePlane {
    pub center: Vector3<f64>,
    pub normal: Unit<Vector3<f64>>,
    pub u_axis: Vector3<f64>,
    pub v_axis: Vector3<f64>,
    pub half_u: f64,
    pub half_v: f64,
    pub color: [u8; 3],
}

impl ScenePlane {
    /// Rectangle with the given normal; the in-plane axes are derived from it.
    pub fn new(center: Vector3<f64>, normal: Vector3<f64>, half_u: f64, half_v: f64, color: [u8; 3]) -> Self {
        let normal = Unit::new_normalize(normal);
        let helper = if normal.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
        let u_axis = helper.cross(&normal).normalize();
        let v_axis = normal.cross(&u_axis);
        Self {
            center,
            normal,
            u_axis,
            v_axis,
            half_u,
            half_v,
            color,
        }
    }

    pub fn plane(&self) -> Plane {
        Plane {
            point: self.center,
            normal: self.normal,
        }
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_u * self.half_v
    }

    /// Ray parameter of the hit, if the ray meets the rectangle in front of the origin.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let denom = dir.dot(&self.normal);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.center - origin).dot(&self.normal) / denom;
        if t <= 1e-9 {
            return None;
        }
        let d = origin + dir * t - self.center;
        let eps = 1e-9;
        (d.dot(&self.u_axis).abs() <= self.half_u + eps && d.dot(&self.v_axis).abs() <= self.half_v + eps)
            .then_some(t)
    }

    fn texture(&self, hit: &Vector3<f64>) -> [u8; 3] {
        let d = hit - self.center;
        let a = (d.dot(&self.u_axis) / 0.25).floor() as i64;
        let b = (d.dot(&self.v_axis) / 0.25).floor() as i64;
        let shade: i32 = if (a + b).rem_euclid(2) == 0 { 20 } else { -20 };
        let mut c = self.color;
        for ch in c.iter_mut() {
            *ch = (*ch as i32 + shade).clamp(0, 255) as u8;
        }
        c
    }
}

/// Camera-to-world rotation for a camera looking along `forward` with the
/// image y axis pointing against `up`.
pub fn look_rotation(forward: &Vector3<f64>, up: &Vector3<f64>) -> Rotation3<f64> {
    let f = forward.normalize();
    let right = f.cross(up).normalize();
    let down = f.cross(&right);
    Rotation3::from_basis_unchecked(&[right, down, f])
}

fn box_faces(min: Vector3<f64>, max: Vector3<f64>, color: [u8; 3], skip_bottom: bool) -> Vec<ScenePlane> {
    let c = (min + max) / 2.0;
    let h = (max - min) / 2.0;
    let mut faces = vec![
        ScenePlane::new(Vector3::new(max.x, c.y, c.z), Vector3::x(), h.y, h.z, color),
        ScenePlane::new(Vector3::new(min.x, c.y, c.z), -Vector3::x(), h.y, h.z, color),
        ScenePlane::new(Vector3::new(c.x, max.y, c.z), Vector3::y(), h.x, h.z, color),
        ScenePlane::new(Vector3::new(c.x, min.y, c.z), -Vector3::y(), h.x, h.z, color),
        ScenePlane::new(Vector3::new(c.x, c.y, max.z), Vector3::z(), h.x, h.y, color),
    ];
    if !skip_bottom {
        faces.push(ScenePlane::new(Vector3::new(c.x, c.y, min.z), -Vector3::z(), h.x, h.y, color));
    }
    faces
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    /// Closed corridor along +x starting at x = −1 with boxes against both walls.
    Corridor { length: f64, width: f64, height: f64 },
    /// Closed room centred on the origin in x/y, floor at z = 0, with furniture.
    BoxRoom { size: [f64; 3] },
    /// One large wall at x = 3 facing −x.
    SingleWall,
    /// Floor z = 0 and walls x = 3, y = 1.5: three mutually orthogonal planes.
    Corner,
    Custom(Vec<ScenePlane>),
}

impl Layout {
    pub fn planes(&self) -> Vec<ScenePlane> {
        match self {
            Layout::Corridor { length, width, height } => {
                let (l, w, h) = (*length, *width, *height);
                let cx = l / 2.0;
                let hx = l / 2.0 + 1.0;
                let mut planes = vec![
                    ScenePlane::new(Vector3::new(cx, 0.0, 0.0), Vector3::z(), hx, w / 2.0, [150, 120, 90]),
                    ScenePlane::new(Vector3::new(cx, 0.0, h), -Vector3::z(), hx, w / 2.0, [230, 230, 220]),
                    ScenePlane::new(Vector3::new(cx, w / 2.0, h / 2.0), -Vector3::y(), hx, h / 2.0, [200, 180, 160]),
                    ScenePlane::new(Vector3::new(cx, -w / 2.0, h / 2.0), Vector3::y(), hx, h / 2.0, [160, 180, 200]),
                    ScenePlane::new(Vector3::new(l + 1.0, 0.0, h / 2.0), -Vector3::x(), w / 2.0, h / 2.0, [120, 160, 120]),
                    ScenePlane::new(Vector3::new(-1.0, 0.0, h / 2.0), Vector3::x(), w / 2.0, h / 2.0, [160, 120, 160]),
                ];
                let colors = [[200, 60, 60], [60, 60, 200], [220, 200, 60], [60, 180, 180]];
                let mut k = 0;
                let mut x = 0.6;
                while x + 0.4 < l + 0.8 {
                    let side = if k % 2 == 0 { 1.0 } else { -1.0 };
                    let depth = 0.3 + 0.1 * (k % 3) as f64;
                    let tall = 0.5 + 0.25 * (k % 4) as f64;
                    let y_wall = side * w / 2.0;
                    let (y0, y1) = if side > 0.0 { (y_wall - depth, y_wall) } else { (y_wall, y_wall + depth) };
                    let faces = box_faces(
                        Vector3::new(x, y0, 0.0),
                        Vector3::new(x + 0.4, y1, tall),
                        colors[k % colors.len()],
                        true,
                    );
                    // drop the face flush with the wall
                    planes.extend(faces.into_iter().filter(|f| (f.center.y - y_wall).abs() > 1e-9));
                    x += 1.1;
                    k += 1;
                }
                planes
            }
            Layout::BoxRoom { size } => {
                let (sx, sy, sz) = (size[0] / 2.0, size[1] / 2.0, size[2]);
                let mut planes = vec![
                    ScenePlane::new(Vector3::new(0.0, 0.0, 0.0), Vector3::z(), sx, sy, [150, 120, 90]),
                    ScenePlane::new(Vector3::new(0.0, 0.0, sz), -Vector3::z(), sx, sy, [230, 230, 220]),
                    ScenePlane::new(Vector3::new(sx, 0.0, sz / 2.0), -Vector3::x(), sy, sz / 2.0, [200, 180, 160]),
                    ScenePlane::new(Vector3::new(-sx, 0.0, sz / 2.0), Vector3::x(), sy, sz / 2.0, [160, 180, 200]),
                    ScenePlane::new(Vector3::new(0.0, sy, sz / 2.0), -Vector3::y(), sx, sz / 2.0, [120, 160, 120]),
                    ScenePlane::new(Vector3::new(0.0, -sy, sz / 2.0), Vector3::y(), sx, sz / 2.0, [160, 120, 160]),
                ];
                // table, cabinet and small boxes spread along the walls
                let items = [
                    (Vector3::new(sx - 0.9, -0.6, 0.0), Vector3::new(sx - 0.1, 0.6, 0.75), [140, 90, 50]),
                    (Vector3::new(-sx + 0.1, -1.0, 0.0), Vector3::new(-sx + 0.6, 0.2, 1.6), [90, 90, 140]),
                    (Vector3::new(-0.5, sy - 0.5, 0.0), Vector3::new(0.5, sy - 0.1, 0.9), [60, 140, 60]),
                    (Vector3::new(0.2, -sy + 0.1, 0.0), Vector3::new(0.4, -sy + 0.3, 0.2), [220, 60, 60]),
                    (Vector3::new(sx - 0.6, -0.15, 0.75), Vector3::new(sx - 0.4, 0.05, 0.95), [60, 60, 220]),
                    (Vector3::new(-0.2, sy - 0.4, 0.9), Vector3::new(0.0, sy - 0.2, 1.1), [220, 220, 60]),
                ];
                for (min, max, color) in items {
                    planes.extend(box_faces(min, max, color, true));
                }
                planes
            }
            Layout::SingleWall => vec![ScenePlane::new(
                Vector3::new(3.0, 0.0, 1.0),
                -Vector3::x(),
                4.0,
                3.0,
                [180, 180, 180],
            )],
            Layout::Corner => vec![
                ScenePlane::new(Vector3::new(1.5, 0.0, 0.0), Vector3::z(), 1.5, 1.5, [150, 120, 90]),
                ScenePlane::new(Vector3::new(3.0, 0.0, 1.5), -Vector3::x(), 1.5, 1.5, [200, 180, 160]),
                ScenePlane::new(Vector3::new(1.5, 1.5, 1.5), -Vector3::y(), 1.5, 1.5, [160, 180, 200]),
            ],
            Layout::Custom(planes) => planes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryShape {
    /// Walk along +x from `start`, yawing sinusoidally by up to
    /// `yaw_amplitude_deg` and swaying sideways by up to `sway` meters.
    Line {
        frames: usize,
        start: Vector3<f64>,
        step: f64,
        yaw_amplitude_deg: f64,
        pitch_deg: f64,
        sway: f64,
    },
    /// Camera on a horizontal circle looking outward, covering `arc_deg`.
    Orbit {
        frames: usize,
        center: Vector3<f64>,
        radius: f64,
        arc_deg: f64,
        pitch_deg: f64,
    },
    Explicit(Vec<RigidTransform>),
}

impl TrajectoryShape {
    pub fn poses(&self) -> Vec<RigidTransform> {
        let up = Vector3::z();
        match self {
            TrajectoryShape::Line {
                frames,
                start,
                step,
                yaw_amplitude_deg,
                pitch_deg,
                sway,
            } => (0..*frames)
                .map(|k| {
                    let s = k as f64;
                    let yaw = yaw_amplitude_deg.to_radians() * (0.7 * s).sin();
                    let pitch = pitch_deg.to_radians();
                    let fwd = Vector3::new(yaw.cos() * pitch.cos(), yaw.sin() * pitch.cos(), -pitch.sin());
                    let pos = start + Vector3::new(step * s, sway * (0.9 * s).sin(), 0.02 * (1.3 * s).sin());
                    RigidTransform::new(look_rotation(&fwd, &up), pos)
                })
                .collect(),
            TrajectoryShape::Orbit {
                frames,
                center,
                radius,
                arc_deg,
                pitch_deg,
            } => (0..*frames)
                .map(|k| {
                    let frac = if *frames > 1 { k as f64 / (*frames - 1) as f64 } else { 0.0 };
                    let a = arc_deg.to_radians() * frac;
                    let dir = Vector3::new(a.cos(), a.sin(), 0.0);
                    let pitch = pitch_deg.to_radians();
                    let fwd = dir * pitch.cos() - up * pitch.sin();
                    RigidTransform::new(look_rotation(&fwd, &up), center + dir * *radius)
                })
                .collect(),
            TrajectoryShape::Explicit(p) => p.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub intrinsics: Intrinsics,
    pub width: usize,
    pub height: usize,
    pub max_range: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            intrinsics: Intrinsics {
                fx: 100.0,
                fy: 100.0,
                cx: 79.5,
                cy: 59.5,
            },
            width: 160,
            height: 120,
            max_range: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub layout: Layout,
    pub trajectory: TrajectoryShape,
    pub camera: CameraModel,
    /// Gaussian depth noise (m) applied to rendered depth images.
    pub depth_sigma: f64,
    /// Noise scale for oracle descriptors.
    pub descriptor_sigma: f64,
    /// Depth quantization (units per meter); 0 disables quantization.
    pub depth_scale: f64,
    pub seed: u64,
    pub render_images: bool,
    pub min_patch_pixels: usize,
    pub samples_per_patch: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            layout: Layout::Corridor {
                length: 4.0,
                width: 2.0,
                height: 2.5,
            },
            trajectory: TrajectoryShape::Line {
                frames: 10,
                start: Vector3::new(0.0, 0.0, 1.3),
                step: 0.1,
                yaw_amplitude_deg: 8.0,
                pitch_deg: 10.0,
                sway: 0.05,
            },
            camera: CameraModel::default(),
            depth_sigma: 0.0,
            descriptor_sigma: 0.0,
            depth_scale: 0.0,
            seed: 0,
            render_images: false,
            min_patch_pixels: 30,
            samples_per_patch: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneFrame {
    pub index: usize,
    pub pose: RigidTransform,
    pub patches: Vec<PlanePatch>,
    /// Scene plane observed by each patch.
    pub patch_planes: Vec<usize>,
    pub depth: Option<Grid<f64>>,
    pub color: Option<Grid<[u8; 3]>>,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub planes: Vec<ScenePlane>,
    /// Planes lying on the same infinite plane share a group.
    pub plane_groups: Vec<usize>,
    pub trajectory: Vec<RigidTransform>,
    pub frames: Vec<SceneFrame>,
    pub camera: CameraModel,
    pub depth_sigma: f64,
    pub descriptor_sigma: f64,
    pub seed: u64,
    pub warnings: Vec<String>,
}

fn coplanar_groups(planes: &[ScenePlane]) -> Vec<usize> {
    let mut groups: Vec<usize> = Vec::with_capacity(planes.len());
    for (k, p) in planes.iter().enumerate() {
        let found = (0..k).find(|&m| {
            let q = &planes[m];
            p.normal.dot(&q.normal) > 1.0 - 1e-12 && (p.plane().offset() - q.plane().offset()).abs() < 1e-9
        });
        groups.push(found.map_or(k, |m| groups[m]));
    }
    groups
}

struct RenderedFrame {
    depth: Grid<f64>,
    label: Grid<i32>,
    color: Grid<[u8; 3]>,
}

fn render(planes: &[ScenePlane], pose: &RigidTransform, camera: &CameraModel) -> RenderedFrame {
    let mut depth = Grid::new(camera.width, camera.height, 0.0);
    let mut label = Grid::new(camera.width, camera.height, -1);
    let mut color = Grid::new(camera.width, camera.height, [0u8; 3]);
    let origin = pose.translation;
    for y in 0..camera.height {
        for x in 0..camera.width {
            let ray = camera.intrinsics.ray(x as f64, y as f64);
            let dir = pose.transform_vector(&ray);
            let mut best: Option<(f64, usize)> = None;
            for (k, plane) in planes.iter().enumerate() {
                if let Some(t) = plane.intersect(&origin, &dir) {
                    if best.is_none_or(|(bt, _)| t < bt) {
                        best = Some((t, k));
                    }
                }
            }
            if let Some((t, k)) = best {
                // `ray` has unit z, so the ray parameter is the depth
                if t <= camera.max_range {
                    depth.set(x, y, t);
                    label.set(x, y, k as i32);
                    color.set(x, y, planes[k].texture(&(origin + dir * t)));
                }
            }
        }
    }
    RenderedFrame { depth, label, color }
}

/// Builds the analytic patch of plane `k` from its rendered pixel support.
fn analytic_patch(
    id: u32,
    frame_id: usize,
    pixels: Vec<[u32; 2]>,
    depth: &Grid<f64>,
    plane_cam: Plane,
    intr: &Intrinsics,
    samples_per_patch: usize,
) -> PlanePatch {
    let points: Vec<Vector3<f64>> = pixels
        .iter()
        .map(|p| intr.back_project(p[0] as f64, p[1] as f64, *depth.get(p[0] as usize, p[1] as usize)))
        .collect();
    let area = pixels
        .iter()
        .map(|p| {
            let (u, v) = (p[0] as f64, p[1] as f64);
            intr.pixel_footprint(u, v, *depth.get(p[0] as usize, p[1] as usize), &plane_cam.normal)
        })
        .sum();
    let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let samples = farthest_point_sampling(&points, samples_per_patch)
        .into_iter()
        .map(|i| points[i])
        .collect();
    let bbox_px = PixelRect::from_pixels(&pixels).unwrap_or_default();
    PlanePatch {
        id,
        frame_id,
        plane: Plane {
            point: centroid,
            normal: plane_cam.normal,
        },
        samples,
        pixel_count: pixels.len(),
        area,
        centroid,
        bbox_px,
        pixels,
    }
}

pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.camera.intrinsics.validate()?;
    let planes = spec.layout.planes();
    if planes.iter().any(|p| !(p.half_u > 0.0 && p.half_v > 0.0)) {
        return Err(Error::InvalidParameter("scene plane extents must be positive".into()));
    }
    let trajectory = spec.trajectory.poses();
    if trajectory.is_empty() {
        return Err(Error::InvalidParameter("trajectory must be nonempty".into()));
    }
    let plane_groups = coplanar_groups(&planes);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.depth_sigma.max(0.0))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut frames = Vec::with_capacity(trajectory.len());
    let mut warnings = Vec::new();
    for (index, pose) in trajectory.iter().enumerate() {
        let rendered = render(&planes, pose, &spec.camera);
        let mut support: Vec<Vec<[u32; 2]>> = vec![Vec::new(); planes.len()];
        for y in 0..spec.camera.height {
            for x in 0..spec.camera.width {
                let l = *rendered.label.get(x, y);
                if l >= 0 {
                    support[l as usize].push([x as u32, y as u32]);
                }
            }
        }
        let inv = pose.inverse();
        let mut patches = Vec::new();
        let mut patch_planes = Vec::new();
        for (k, pixels) in support.into_iter().enumerate() {
            if pixels.len() < spec.min_patch_pixels.max(3) {
                continue;
            }
            let mut plane_cam = planes[k].plane().transformed(&inv);
            if plane_cam.normal.dot(&plane_cam.point) > 0.0 {
                plane_cam.normal = -plane_cam.normal;
            }
            patches.push(analytic_patch(
                patches.len() as u32,
                index,
                pixels,
                &rendered.depth,
                plane_cam,
                &spec.camera.intrinsics,
                spec.samples_per_patch,
            ));
            patch_planes.push(k);
        }
        if patches.is_empty() {
            warnings.push(format!("frame {index}: no plane visible"));
        }
        let (depth, color) = if spec.render_images {
            let mut depth = rendered.depth;
            for z in depth.data.iter_mut().filter(|z| **z > 0.0) {
                if spec.depth_sigma > 0.0 {
                    *z += noise.sample(&mut rng);
                }
                if spec.depth_scale > 0.0 {
                    *z = (*z * spec.depth_scale).round().clamp(0.0, 65535.0) / spec.depth_scale;
                }
                if *z < 0.0 {
                    *z = 0.0;
                }
            }
            (Some(depth), Some(rendered.color))
        } else {
            (None, None)
        };
        frames.push(SceneFrame {
            index,
            pose: *pose,
            patches,
            patch_planes,
            depth,
            color,
        });
    }
    Ok(SyntheticScene {
        planes,
        plane_groups,
        trajectory,
        frames,
        camera: spec.camera,
        depth_sigma: spec.depth_sigma,
        descriptor_sigma: spec.descriptor_sigma,
        seed: spec.seed,
        warnings,
    })
}

impl SyntheticScene {
    pub fn patch(&self, r: PatchKey) -> &PlanePatch {
        &self.frames[r.frame].patches[r.patch]
    }

    pub fn group_of(&self, r: PatchKey) -> usize {
        self.plane_groups[self.frames[r.frame].patch_planes[r.patch]]
    }

    /// Exact coplanarity by scene-plane identity.
    pub fn is_coplanar(&self, a: PatchKey, b: PatchKey) -> bool {
        self.group_of(a) == self.group_of(b)
    }

    pub fn patches_by_frame(&self) -> Vec<Vec<PlanePatch>> {
        self.frames.iter().map(|f| f.patches.clone()).collect()
    }

    /// Frames with rendered images, for the extraction stage.
    pub fn rendered_frames(&self) -> Vec<Frame> {
        self.frames
            .iter()
            .filter_map(|f| {
                let depth = f.depth.clone()?;
                let mut frame = Frame::new(f.index, depth, self.camera.intrinsics);
                frame.color = f.color.clone();
                frame.pose = f.pose;
                Some(frame)
            })
            .collect()
    }

    /// All cross-frame patch pairs `(a, b)` with `a.frame < b.frame`, split
    /// into coplanar and non-coplanar lists.
    pub fn cross_frame_pairs(&self) -> (Vec<(PatchKey, PatchKey)>, Vec<(PatchKey, PatchKey)>) {
        let refs: Vec<PatchKey> = self
            .frames
            .iter()
            .flat_map(|f| (0..f.patches.len()).map(move |p| PatchKey { frame: f.index, patch: p }))
            .collect();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (i, a) in refs.iter().enumerate() {
            for b in &refs[i + 1..] {
                if a.frame == b.frame {
                    continue;
                }
                if self.is_coplanar(*a, *b) {
                    pos.push((*a, *b));
                } else {
                    neg.push((*a, *b));
                }
            }
        }
        (pos, neg)
    }

    /// Rigidly moves the whole scene (geometry and trajectory) by `g`.
    /// Camera-space observations are unchanged up to rounding.
    pub fn transformed_spec(spec: &SceneSpec, g: &RigidTransform) -> SceneSpec {
        let planes: Vec<ScenePlane> = spec
            .layout
            .planes()
            .into_iter()
            .map(|p| ScenePlane {
                center: g.transform_point(&p.center),
                normal: Unit::new_unchecked(g.transform_vector(&p.normal)),
                u_axis: g.transform_vector(&p.u_axis),
                v_axis: g.transform_vector(&p.v_axis),
                ..p
            })
            .collect();
        let poses = spec.trajectory.poses().iter().map(|t| g * t).collect();
        SceneSpec {
            layout: Layout::Custom(planes),
            trajectory: TrajectoryShape::Explicit(poses),
            ..spec.clone()
        }
    }
}

/// Proposal set with a controlled fraction of planted false pairs, plus the
/// truth label of each returned pair.
///
/// Inliers are drawn from coplanar cross-frame pairs, outliers from
/// non-coplanar ones. Both classes receive descriptor distances drawn
/// uniformly below `d_f_threshold`, so the weights carry no label information.
pub fn planted_proposals(
    scene: &SyntheticScene,
    n_pairs: usize,
    outlier_ratio: f64,
    d_f_threshold: f64,
    seed: u64,
) -> Result<(Vec<CoplanarPair>, Vec<bool>)> {
    if !(0.0..=1.0).contains(&outlier_ratio) {
        return Err(Error::InvalidParameter("outlier ratio must lie in [0, 1]".into()));
    }
    let (mut pos, mut neg) = scene.cross_frame_pairs();
    let n_out = (outlier_ratio * n_pairs as f64).round() as usize;
    let n_in = n_pairs - n_out;
    if pos.len() < n_in {
        return Err(Error::InsufficientPositives(format!(
            "scene has {} coplanar pairs, {n_in} requested",
            pos.len()
        )));
    }
    if neg.len() < n_out {
        return Err(Error::InvalidParameter(format!(
            "scene has {} non-coplanar pairs, {n_out} requested",
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    partial_shuffle(&mut pos, n_in, &mut rng);
    partial_shuffle(&mut neg, n_out, &mut rng);
    let mut picked: Vec<((PatchKey, PatchKey), bool)> = pos[..n_in]
        .iter()
        .map(|p| (*p, true))
        .chain(neg[..n_out].iter().map(|p| (*p, false)))
        .collect();
    picked.sort_by_key(|(p, _)| *p);
    let d_f: Vec<f64> = picked.iter().map(|_| rng.gen::<f64>() * d_f_threshold).collect();
    let d_fm = d_f.iter().copied().fold(0.0, f64::max);
    let mut pairs = Vec::with_capacity(picked.len());
    let mut labels = Vec::with_capacity(picked.len());
    for (((a, b), label), d) in picked.into_iter().zip(d_f) {
        let weight = if d_fm > 0.0 { pair_confidence(d, d_fm, 0.6)? } else { 1.0 };
        pairs.push(CoplanarPair::new(a, b, d, weight));
        labels.push(label);
    }
    Ok((pairs, labels))
}

fn partial_shuffle<T>(v: &mut [T], k: usize, rng: &mut impl Rng) {
    for i in 0..k.min(v.len()) {
        let j = rng.gen_range(i..v.len());
        v.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::coplanarity_distance;

    fn small_room() -> SceneSpec {
        SceneSpec {
            layout: Layout::BoxRoom { size: [6.0, 5.0, 2.6] },
            trajectory: TrajectoryShape::Orbit {
                frames: 8,
                center: Vector3::new(0.0, 0.0, 1.4),
                radius: 0.5,
                arc_deg: 315.0,
                pitch_deg: 15.0,
            },
            ..SceneSpec::default()
        }
    }

    #[test]
    fn box_room_labels_follow_plane_identity() {
        let scene = generate_scene(&small_room()).unwrap();
        let (pos, neg) = scene.cross_frame_pairs();
        assert!(!pos.is_empty() && !neg.is_empty());
        for (a, b) in pos.iter().take(200) {
            let d = coplanarity_distance(
                &scene.trajectory[a.frame],
                &scene.trajectory[b.frame],
                scene.patch(*a),
                scene.patch(*b),
            )
            .unwrap();
            assert!(d < 1e-9, "coplanar pair has δ = {d}");
        }
        for (a, b) in neg.iter().take(200) {
            let d = coplanarity_distance(
                &scene.trajectory[a.frame],
                &scene.trajectory[b.frame],
                scene.patch(*a),
                scene.patch(*b),
            )
            .unwrap();
            assert!(d > 1e-3, "non-coplanar pair has δ = {d}");
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let mut spec = small_room();
        spec.render_images = true;
        spec.depth_sigma = 0.005;
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.patches, fb.patches);
            assert_eq!(fa.depth, fb.depth);
        }
    }

    #[test]
    fn planted_outlier_ratio_is_exact() {
        let scene = generate_scene(&SceneSpec::default()).unwrap();
        let (pairs, labels) = planted_proposals(&scene, 200, 0.8, 2.5, 3).unwrap();
        assert_eq!(pairs.len(), 200);
        let false_count = labels.iter().filter(|l| !**l).count();
        assert!((false_count as i64 - 160).abs() <= 1);
        for (pair, label) in pairs.iter().zip(&labels) {
            assert_eq!(scene.is_coplanar(pair.p, pair.q), *label);
            assert!(pair.d_f < 2.5 && pair.weight > 0.0 && pair.weight <= 1.0);
        }
    }

    #[test]
    fn patch_samples_lie_on_their_plane() {
        let scene = generate_scene(&SceneSpec::default()).unwrap();
        for f in &scene.frames {
            assert!(!f.patches.is_empty());
            for p in &f.patches {
                assert!(p.area > 0.0);
                for v in &p.samples {
                    assert!(p.plane.signed_distance(v).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn invisible_frame_is_kept_with_warning() {
        let spec = SceneSpec {
            layout: Layout::SingleWall,
            trajectory: TrajectoryShape::Explicit(vec![
                RigidTransform::new(look_rotation(&Vector3::x(), &Vector3::z()), Vector3::zeros()),
                RigidTransform::new(look_rotation(&-Vector3::x(), &Vector3::z()), Vector3::zeros()),
            ]),
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).unwrap();
        assert_eq!(scene.frames.len(), 2);
        assert!(!scene.frames[0].patches.is_empty());
        assert!(scene.frames[1].patches.is_empty());
        assert_eq!(scene.warnings.len(), 1);
    }
}
