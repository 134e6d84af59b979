//! Planar patch extraction from depth frames and the crop/mask inputs for a
//! coplanarity descriptor network.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt::Write as _;
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use imageproc::distance_transform::euclidean_squared_distance_transform;
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{farthest_point_sampling, Frame, Grid, PixelRect, Plane, PlanePatch, PointMoments};

const CELL_PX: usize = 4;
pub const CROP_SIZE: usize = 224;
pub const LOCAL_SCALE: f64 = 1.5;
pub const GLOBAL_SCALE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionParams {
    pub normal_window_px: usize,
    pub merge_normal_angle_deg: f64,
    pub merge_plane_rms_m: f64,
    pub min_valid_pixels: usize,
    pub samples_per_patch: usize,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            normal_window_px: 5,
            merge_normal_angle_deg: 10.0,
            merge_plane_rms_m: 0.01,
            min_valid_pixels: 300,
            samples_per_patch: 64,
        }
    }
}

impl ExtractionParams {
    pub fn validate(&self) -> Result<()> {
        if self.normal_window_px < 3 || self.normal_window_px % 2 == 0 {
            return Err(Error::InvalidParameter("normal window must be odd and at least 3".into()));
        }
        if !(self.merge_normal_angle_deg > 0.0 && self.merge_normal_angle_deg < 90.0) {
            return Err(Error::InvalidParameter("merge angle must lie in (0, 90) degrees".into()));
        }
        if !(self.merge_plane_rms_m > 0.0) {
            return Err(Error::InvalidParameter("merge RMS must be positive".into()));
        }
        if self.min_valid_pixels == 0 || self.samples_per_patch == 0 {
            return Err(Error::InvalidParameter("min_valid_pixels and samples_per_patch must be positive".into()));
        }
        Ok(())
    }
}

fn orient_to_camera(n: Vector3<f64>, at: &Vector3<f64>) -> Vector3<f64> {
    if n.dot(at) > 0.0 {
        -n
    } else {
        n
    }
}

/// Per-pixel normals from a least-squares plane over the window of valid
/// back-projected neighbours, oriented toward the camera. A zero vector marks
/// pixels with invalid depth or fewer than half the window valid.
pub fn estimate_normals(frame: &Frame, params: &ExtractionParams) -> Result<Grid<Vector3<f64>>> {
    params.validate()?;
    let (w, h) = (frame.width(), frame.height());
    let points: Vec<Option<Vector3<f64>>> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| frame.point(x, y)).collect();
    if points.iter().all(Option::is_none) {
        return Err(Error::NoValidDepth);
    }
    let r = params.normal_window_px / 2;
    let need = (params.normal_window_px * params.normal_window_px).div_ceil(2);
    let mut out = Grid::new(w, h, Vector3::zeros());
    for y in 0..h {
        for x in 0..w {
            let Some(center) = points[y * w + x] else { continue };
            let mut m = PointMoments::default();
            for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
                for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                    if let Some(p) = &points[yy * w + xx] {
                        m.push(p);
                    }
                }
            }
            if m.count < need {
                continue;
            }
            if let Some((plane, _)) = m.fit_plane() {
                out.set(x, y, orient_to_camera(plane.normal.into_inner(), &center));
            }
        }
    }
    Ok(out)
}

struct Region {
    moments: PointMoments,
    normal: Vector3<f64>,
    rms: f64,
    neighbors: BTreeSet<usize>,
    version: u32,
}

fn region_fit(m: &PointMoments) -> Option<(Vector3<f64>, f64)> {
    let (plane, rms) = m.fit_plane()?;
    Some((orient_to_camera(plane.normal.into_inner(), &plane.point), rms))
}

/// Agglomerative segmentation: 4×4 pixel cells that are planar seed the
/// regions, adjacent regions merge greedily (lowest merged RMS first) while
/// the normals agree within `merge_normal_angle_deg` and the merged RMS
/// stays within `merge_plane_rms_m`. Regions then absorb neighbouring pixels
/// close to their plane whose normal agrees or is unknown. Patches are ordered by decreasing size and their id
/// is that index.
pub fn segment_planar_patches(frame: &Frame, params: &ExtractionParams) -> Result<Vec<PlanePatch>> {
    params.validate()?;
    let normals = match &frame.normals {
        Some(n) => n.clone(),
        None => match estimate_normals(frame, params) {
            Ok(n) => n,
            Err(Error::NoValidDepth) => return Ok(Vec::new()),
            Err(e) => return Err(e),
        },
    };
    let (w, h) = (frame.width(), frame.height());
    let cos_tol = params.merge_normal_angle_deg.to_radians().cos();
    let eps = params.merge_plane_rms_m;
    let valid = |x: usize, y: usize| frame.point(x, y).filter(|_| normals.get(x, y).norm_squared() > 0.0);

    let (cw, ch) = (w.div_ceil(CELL_PX), h.div_ceil(CELL_PX));
    let mut regions: Vec<Option<Region>> = Vec::with_capacity(cw * ch);
    for cy in 0..ch {
        for cx in 0..cw {
            let mut m = PointMoments::default();
            let mut nsum = Vector3::zeros();
            for y in cy * CELL_PX..((cy + 1) * CELL_PX).min(h) {
                for x in cx * CELL_PX..((cx + 1) * CELL_PX).min(w) {
                    if let Some(p) = valid(x, y) {
                        m.push(&p);
                        nsum += normals.get(x, y);
                    }
                }
            }
            let seed = (m.count * 2 >= CELL_PX * CELL_PX)
                .then(|| region_fit(&m))
                .flatten()
                .filter(|(n, rms)| *rms <= eps && n.dot(&nsum.normalize()) >= cos_tol);
            regions.push(seed.map(|(normal, rms)| Region {
                moments: m,
                normal,
                rms,
                neighbors: BTreeSet::new(),
                version: 0,
            }));
        }
    }
    let cell = |cx: usize, cy: usize| cy * cw + cx;
    for cy in 0..ch {
        for cx in 0..cw {
            let a = cell(cx, cy);
            if regions[a].is_none() {
                continue;
            }
            for (nx, ny) in [(cx + 1, cy), (cx, cy + 1)] {
                if nx < cw && ny < ch && regions[cell(nx, ny)].is_some() {
                    let b = cell(nx, ny);
                    regions[a].as_mut().map(|r| r.neighbors.insert(b));
                    regions[b].as_mut().map(|r| r.neighbors.insert(a));
                }
            }
        }
    }
    let mut parent: Vec<usize> = (0..regions.len()).collect();

    // Candidate merge: (rms, a, b, version a, version b).
    type Candidate = Reverse<(OrderedRms, usize, usize, u32, u32)>;
    let try_pair = |regions: &[Option<Region>], a: usize, b: usize| -> Option<Candidate> {
        let (ra, rb) = (regions[a].as_ref()?, regions[b].as_ref()?);
        if a == b || ra.normal.dot(&rb.normal) < cos_tol {
            return None;
        }
        let (n, rms) = region_fit(&ra.moments.merged(&rb.moments))?;
        if rms > eps || n.dot(&ra.normal) < cos_tol || n.dot(&rb.normal) < cos_tol {
            return None;
        }
        Some(Reverse((OrderedRms(rms), a, b, ra.version, rb.version)))
    };
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::new();
    for a in 0..regions.len() {
        let Some(r) = &regions[a] else { continue };
        for &b in r.neighbors.iter().filter(|&&b| b > a) {
            if let Some(c) = try_pair(&regions, a, b) {
                heap.push(c);
            }
        }
    }
    while let Some(Reverse((_, a, b, va, vb))) = heap.pop() {
        let current = |k: usize, v: u32| regions[k].as_ref().is_some_and(|r| r.version == v);
        if !current(a, va) || !current(b, vb) {
            continue;
        }
        let Some(rb) = regions[b].take() else { continue };
        let Some(ra) = regions[a].as_mut() else { continue };
        ra.moments = ra.moments.merged(&rb.moments);
        let (n, rms) = region_fit(&ra.moments).unwrap_or((ra.normal, ra.rms));
        ra.normal = n;
        ra.rms = rms;
        ra.version += 1;
        ra.neighbors.extend(rb.neighbors.iter().copied());
        ra.neighbors.remove(&a);
        ra.neighbors.remove(&b);
        parent[b] = a;
        let neighbors: Vec<usize> = ra.neighbors.iter().copied().collect();
        for k in &neighbors {
            if let Some(rk) = regions[*k].as_mut() {
                rk.neighbors.remove(&b);
                rk.neighbors.insert(a);
            }
        }
        for k in neighbors {
            if let Some(c) = try_pair(&regions, a, k) {
                heap.push(c);
            }
        }
    }
    let find = |mut k: usize| {
        while parent[k] != k {
            k = parent[k];
        }
        k
    };

    // Pixel labels: seed cells carry their root; then grow.
    const NONE: usize = usize::MAX;
    let mut label = vec![NONE; w * h];
    let mut planes: Vec<Option<Plane>> = vec![None; regions.len()];
    for (k, r) in regions.iter().enumerate() {
        if let Some(r) = r {
            if let Some((plane, _)) = r.moments.fit_plane() {
                planes[k] = Some(Plane::new(plane.point, r.normal));
            }
        }
    }
    let mut queue = std::collections::VecDeque::new();
    for cy in 0..ch {
        for cx in 0..cw {
            let root = find(cell(cx, cy));
            let Some(plane) = planes[root] else { continue };
            for y in cy * CELL_PX..((cy + 1) * CELL_PX).min(h) {
                for x in cx * CELL_PX..((cx + 1) * CELL_PX).min(w) {
                    if let Some(p) = valid(x, y) {
                        if plane.signed_distance(&p).abs() <= eps {
                            label[y * w + x] = root;
                            queue.push_back((x, y));
                        }
                    }
                }
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        let root = label[y * w + x];
        let Some(plane) = planes[root] else { continue };
        let n = plane.normal.into_inner();
        let mut visit = |xx: usize, yy: usize| {
            if label[yy * w + xx] != NONE {
                return;
            }
            if let Some(p) = frame.point(xx, yy) {
                let nv = normals.get(xx, yy);
                let agrees = nv.norm_squared() == 0.0 || nv.dot(&n) >= cos_tol;
                if plane.signed_distance(&p).abs() <= eps && agrees {
                    label[yy * w + xx] = root;
                    queue.push_back((xx, yy));
                }
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }

    let mut groups: std::collections::BTreeMap<usize, Vec<[u32; 2]>> = Default::default();
    for y in 0..h {
        for x in 0..w {
            let l = label[y * w + x];
            if l != NONE {
                groups.entry(l).or_default().push([x as u32, y as u32]);
            }
        }
    }
    let mut groups: Vec<Vec<[u32; 2]>> = groups.into_values().filter(|g| g.len() >= params.min_valid_pixels).collect();
    groups.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0][1].cmp(&b[0][1])).then(a[0][0].cmp(&b[0][0])));
    Ok(groups
        .into_iter()
        .enumerate()
        .filter_map(|(id, pixels)| build_patch(frame, id as u32, pixels, params.samples_per_patch))
        .collect())
}

/// Total order on finite RMS values for the merge heap.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OrderedRms(f64);

impl Eq for OrderedRms {}

impl PartialOrd for OrderedRms {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedRms {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Patch from a pixel set: plane fitted to all pixels, samples taken by
/// farthest-point subsampling and projected onto that plane.
pub fn build_patch(frame: &Frame, id: u32, pixels: Vec<[u32; 2]>, samples_per_patch: usize) -> Option<PlanePatch> {
    let points: Vec<Vector3<f64>> = pixels.iter().filter_map(|[x, y]| frame.point(*x as usize, *y as usize)).collect();
    if points.len() != pixels.len() {
        return None;
    }
    let (plane, _) = crate::geometry::fit_plane(&points)?;
    let n = plane.normal.into_inner();
    let area = pixels
        .iter()
        .zip(&points)
        .map(|([x, y], p)| frame.intrinsics.pixel_footprint(*x as f64, *y as f64, p.z, &n))
        .sum();
    let samples = farthest_point_sampling(&points, samples_per_patch)
        .into_iter()
        .map(|k| points[k] - n * plane.signed_distance(&points[k]))
        .collect();
    Some(PlanePatch {
        id,
        frame_id: frame.index,
        plane,
        centroid: plane.point,
        samples,
        pixel_count: pixels.len(),
        area,
        bbox_px: PixelRect::from_pixels(&pixels)?,
        pixels,
    })
}

/// Eight 224×224 channels: RGB, depth, normals and mask at the local and
/// global crop scales.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleInputs {
    pub rgb: RgbImage,
    /// Meters, 0 for padding or invalid depth.
    pub depth: ImageBuffer<Luma<f32>, Vec<f32>>,
    /// Unit normals, 0 for padding or invalid pixels.
    pub normals: ImageBuffer<Rgb<f32>, Vec<f32>>,
    pub mask: ImageBuffer<Luma<f32>, Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchInputBundle {
    pub local: ScaleInputs,
    pub global: ScaleInputs,
}

/// Crop window in pixel-edge coordinates, clamped to the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropWindow {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl CropWindow {
    /// `scale` times the bbox around its center, clamped to `width × height`.
    pub fn around(bbox: &PixelRect, scale: f64, width: usize, height: usize) -> Self {
        let (bx0, by0) = (bbox.x0 as f64, bbox.y0 as f64);
        let (bw, bh) = (bbox.width() as f64, bbox.height() as f64);
        let (cx, cy) = (bx0 + bw / 2.0, by0 + bh / 2.0);
        Self {
            x0: (cx - scale * bw / 2.0).max(0.0),
            y0: (cy - scale * bh / 2.0).max(0.0),
            x1: (cx + scale * bw / 2.0).min(width as f64),
            y1: (cy + scale * bh / 2.0).min(height as f64),
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    /// Integer pixel range `[first, last]` covered by the window.
    fn pixel_range(&self) -> (usize, usize, usize, usize) {
        let first = |v: f64| v.floor().max(0.0) as usize;
        let last = |v: f64| (v.ceil() as usize).saturating_sub(1);
        (first(self.x0), first(self.y0), last(self.x1), last(self.y1))
    }
}

fn bilinear<T: Copy, const N: usize>(
    get: impl Fn(usize, usize) -> Option<[T; N]>,
    to_f: impl Fn(T) -> f64,
    x: f64,
    y: f64,
    range: (usize, usize, usize, usize),
) -> Option<[f64; N]> {
    let (xa, ya, xb, yb) = range;
    let xf = x.clamp(xa as f64, xb as f64);
    let yf = y.clamp(ya as f64, yb as f64);
    let (x0, y0) = (xf.floor() as usize, yf.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(xb), (y0 + 1).min(yb));
    let (fx, fy) = (xf - x0 as f64, yf - y0 as f64);
    let mut acc = [0.0; N];
    let mut wsum = 0.0;
    for (xx, yy, wgt) in [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ] {
        if wgt <= 0.0 {
            continue;
        }
        if let Some(v) = get(xx, yy) {
            for (a, c) in acc.iter_mut().zip(v) {
                *a += wgt * to_f(c);
            }
            wsum += wgt;
        }
    }
    (wsum > 0.0).then(|| acc.map(|a| a / wsum))
}

fn scale_inputs(frame: &Frame, patch: &PlanePatch, in_patch: &GrayImage, scale: f64, global: bool) -> ScaleInputs {
    let (w, h) = (frame.width(), frame.height());
    let win = CropWindow::around(&patch.bbox_px, scale, w, h);
    let range = win.pixel_range();
    let side = win.width().max(win.height());
    let (sx0, sy0) = (win.x0 + win.width() / 2.0 - side / 2.0, win.y0 + win.height() / 2.0 - side / 2.0);
    let n = CROP_SIZE as u32;
    let mut rgb = RgbImage::from_pixel(n, n, Rgb([128, 128, 128]));
    let mut depth = ImageBuffer::<Luma<f32>, Vec<f32>>::new(n, n);
    let mut normals = ImageBuffer::<Rgb<f32>, Vec<f32>>::new(n, n);
    let mut mask = ImageBuffer::<Luma<f32>, Vec<f32>>::new(n, n);

    // Distance to the patch inside the crop, and to the crop border, for the
    // global ramp.
    let dist = global.then(|| euclidean_squared_distance_transform(in_patch));
    let (xa, ya, xb, yb) = range;
    for j in 0..CROP_SIZE {
        for i in 0..CROP_SIZE {
            // align corners: the first and last output pixel centers land on
            // the first and last source pixel centers of the square
            let t = |k: usize| k as f64 * (side - 1.0).max(0.0) / (CROP_SIZE - 1) as f64;
            let (x, y) = (sx0 + t(i), sy0 + t(j));
            let tol = 1e-9;
            let inside = x >= win.x0 - tol && x <= win.x1 - 1.0 + tol && y >= win.y0 - tol && y <= win.y1 - 1.0 + tol;
            if !inside {
                continue;
            }
            let (ui, uj) = (i as u32, j as u32);
            if let Some(c) = &frame.color {
                if let Some(v) = bilinear(|xx, yy| Some(*c.get(xx, yy)), f64::from, x, y, range) {
                    rgb.put_pixel(ui, uj, Rgb(v.map(|c| c.round().clamp(0.0, 255.0) as u8)));
                }
            }
            let valid_depth = |xx: usize, yy: usize| Some(*frame.depth.get(xx, yy)).filter(|d| *d > 0.0).map(|d| [d]);
            if let Some([d]) = bilinear(valid_depth, |d| d, x, y, range) {
                depth.put_pixel(ui, uj, Luma([d as f32]));
            }
            if let Some(nm) = &frame.normals {
                let get = |xx: usize, yy: usize| {
                    let v = nm.get(xx, yy);
                    (v.norm_squared() > 0.0).then(|| [v.x, v.y, v.z])
                };
                if let Some(v) = bilinear(get, |c| c, x, y, range) {
                    let v = Vector3::from(v).normalize();
                    normals.put_pixel(ui, uj, Rgb([v.x as f32, v.y as f32, v.z as f32]));
                }
            }
            let px = x.round().clamp(xa as f64, xb as f64) as u32;
            let py = y.round().clamp(ya as f64, yb as f64) as u32;
            let on_patch = in_patch.get_pixel(px, py)[0] > 0;
            let m = if on_patch {
                1.0
            } else if let Some(dist) = &dist {
                let d = dist.get_pixel(px, py)[0].sqrt();
                let (px, py) = (px as usize, py as usize);
                let e = (px - xa).min(xb - px).min(py - ya).min(yb - py) as f64;
                if d + e > 0.0 {
                    e / (d + e)
                } else {
                    0.0
                }
            } else {
                0.0
            };
            mask.put_pixel(ui, uj, Luma([m as f32]));
        }
    }
    ScaleInputs { rgb, depth, normals, mask }
}

/// Crops the patch surroundings at 1.5× and 5× its bbox, pads to square
/// (gray RGB, zero depth/normals) and resamples to 224×224. RGB, depth and
/// normals are bilinear; masks are nearest-neighbour. The global mask is 1
/// on the patch and ramps linearly to 0 at the crop border.
pub fn build_patch_inputs(frame: &Frame, patch: &PlanePatch) -> Result<PatchInputBundle> {
    if patch.pixels.is_empty() {
        return Err(Error::EmptyBoundingBox);
    }
    let (w, h) = (frame.width(), frame.height());
    let b = patch.bbox_px;
    if b.x1 as usize >= w || b.y1 as usize >= h || b.x0 > b.x1 || b.y0 > b.y1 {
        return Err(Error::EmptyBoundingBox);
    }
    let mut in_patch = GrayImage::new(w as u32, h as u32);
    for [x, y] in &patch.pixels {
        if (*x as usize) < w && (*y as usize) < h {
            in_patch.put_pixel(*x, *y, Luma([255]));
        }
    }
    Ok(PatchInputBundle {
        local: scale_inputs(frame, patch, &in_patch, LOCAL_SCALE, false),
        global: scale_inputs(frame, patch, &in_patch, GLOBAL_SCALE, true),
    })
}

/// Writes the eight channels as PNGs (depth as 16-bit with `depth_scale`
/// units per meter, normals mapped to `(n + 1) / 2`) plus `meta.txt`.
pub fn write_patch_bundle(dir: &Path, patch: &PlanePatch, bundle: &PatchInputBundle, depth_scale: f64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, s) in [("local", &bundle.local), ("global", &bundle.global)] {
        let save = |file: String, img: image::DynamicImage| {
            let path = dir.join(file);
            img.save(&path).map_err(|e| Error::Image { path, source: e })
        };
        save(format!("{name}_rgb.png"), s.rgb.clone().into())?;
        let depth = ImageBuffer::<Luma<u16>, Vec<u16>>::from_fn(s.depth.width(), s.depth.height(), |x, y| {
            Luma([(s.depth.get_pixel(x, y)[0] as f64 * depth_scale).round().clamp(0.0, 65535.0) as u16])
        });
        save(format!("{name}_depth.png"), depth.into())?;
        let normals = RgbImage::from_fn(s.normals.width(), s.normals.height(), |x, y| {
            let n = s.normals.get_pixel(x, y).0;
            if n == [0.0; 3] {
                Rgb([0, 0, 0])
            } else {
                Rgb(n.map(|c| ((c + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0) as u8))
            }
        });
        save(format!("{name}_normal.png"), normals.into())?;
        let mask = GrayImage::from_fn(s.mask.width(), s.mask.height(), |x, y| {
            Luma([(s.mask.get_pixel(x, y)[0] * 255.0).round().clamp(0.0, 255.0) as u8])
        });
        save(format!("{name}_mask.png"), mask.into())?;
    }
    let b = patch.bbox_px;
    let (p, n) = (patch.plane.point, patch.plane.normal);
    let mut meta = String::new();
    let _ = writeln!(meta, "patch_id {}", patch.id);
    let _ = writeln!(meta, "frame_id {}", patch.frame_id);
    let _ = writeln!(meta, "bbox {} {} {} {}", b.x0, b.y0, b.x1, b.y1);
    let _ = writeln!(meta, "plane_point {:?} {:?} {:?}", p.x, p.y, p.z);
    let _ = writeln!(meta, "plane_normal {:?} {:?} {:?}", n.x, n.y, n.z);
    let path = dir.join("meta.txt");
    std::fs::write(&path, meta).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests;
