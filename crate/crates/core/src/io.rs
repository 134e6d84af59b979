//! Dataset ingestion and tabular outputs: 16-bit depth PNGs, TUM
//! association files and the patch table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb, RgbImage};
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{Frame, Grid, Intrinsics, PixelRect, Plane, PlanePatch};

/// TUM convention: raw 16-bit value / 5000 = meters.
pub const DEFAULT_DEPTH_SCALE: f64 = 5000.0;

pub fn read_depth_png(path: &Path, depth_scale: f64) -> Result<Grid<f64>> {
    let img = image::open(path)
        .map_err(|e| Error::Image { path: path.to_path_buf(), source: e })?
        .into_luma16();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p[0] as f64 / depth_scale).collect();
    Grid::from_vec(w as usize, h as usize, data)
}

/// Writes depth (meters) as 16-bit PNG; values that do not fit become 0.
pub fn write_depth_png(path: &Path, depth: &Grid<f64>, depth_scale: f64) -> Result<()> {
    let img = ImageBuffer::<Luma<u16>, Vec<u16>>::from_fn(depth.width as u32, depth.height as u32, |x, y| {
        let raw = (depth.get(x as usize, y as usize) * depth_scale).round();
        Luma([if (0.0..=65535.0).contains(&raw) { raw as u16 } else { 0 }])
    });
    img.save(path).map_err(|e| Error::Image { path: path.to_path_buf(), source: e })
}

pub fn read_color(path: &Path) -> Result<Grid<[u8; 3]>> {
    let img = image::open(path)
        .map_err(|e| Error::Image { path: path.to_path_buf(), source: e })?
        .into_rgb8();
    let (w, h) = img.dimensions();
    Grid::from_vec(w as usize, h as usize, img.pixels().map(|p| p.0).collect())
}

pub fn write_color_png(path: &Path, color: &Grid<[u8; 3]>) -> Result<()> {
    let img = RgbImage::from_fn(color.width as u32, color.height as u32, |x, y| Rgb(*color.get(x as usize, y as usize)));
    img.save(path).map_err(|e| Error::Image { path: path.to_path_buf(), source: e })
}

/// One `ts_depth depth_path ts_rgb rgb_path` row; paths relative to the
/// association file's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    pub depth_time: f64,
    pub depth: PathBuf,
    pub rgb_time: f64,
    pub rgb: PathBuf,
}

pub fn parse_associations(path: &Path, text: &str) -> Result<Vec<Association>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(Error::parse(path, idx + 1, format!("expected 4 fields, found {}", f.len())));
        }
        let time = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(path, idx + 1, format!("`{s}`: {e}")));
        out.push(Association {
            depth_time: time(f[0])?,
            depth: PathBuf::from(f[1]),
            rgb_time: time(f[2])?,
            rgb: PathBuf::from(f[3]),
        });
    }
    Ok(out)
}

pub fn read_associations(path: &Path) -> Result<Vec<Association>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_associations(path, &text)
}

pub fn write_associations(path: &Path, rows: &[Association]) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        let _ = writeln!(
            out,
            "{:.6} {} {:.6} {}",
            r.depth_time,
            r.depth.display(),
            r.rgb_time,
            r.rgb.display()
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// A sequence on disk: frames in association order with depth timestamps.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub timestamps: Vec<f64>,
    pub frames: Vec<Frame>,
}

/// Loads every associated frame. RGB is optional per row: a missing file
/// is an error, an empty path (`-`) is skipped.
pub fn load_sequence(association: &Path, intrinsics: Intrinsics, depth_scale: f64) -> Result<Sequence> {
    if !association.exists() {
        return Err(Error::MissingPath(association.to_path_buf()));
    }
    let root = association.parent().unwrap_or(Path::new("."));
    let rows = read_associations(association)?;
    let mut timestamps = Vec::with_capacity(rows.len());
    let mut frames = Vec::with_capacity(rows.len());
    for (index, r) in rows.iter().enumerate() {
        let depth_path = root.join(&r.depth);
        if !depth_path.exists() {
            return Err(Error::MissingPath(depth_path));
        }
        let mut frame = Frame::new(index, read_depth_png(&depth_path, depth_scale)?, intrinsics);
        if r.rgb.as_os_str() != "-" {
            let rgb_path = root.join(&r.rgb);
            if !rgb_path.exists() {
                return Err(Error::MissingPath(rgb_path));
            }
            frame.color = Some(read_color(&rgb_path)?);
        }
        frame.validate()?;
        timestamps.push(r.depth_time);
        frames.push(frame);
    }
    Ok(Sequence { timestamps, frames })
}

/// Depth PNGs of a directory in file-name order, with timestamps taken
/// from numeric file stems, else the listing index.
pub fn depth_dir_listing(dir: &Path) -> Result<Vec<(PathBuf, f64)>> {
    if !dir.is_dir() {
        return Err(Error::MissingPath(dir.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files
        .into_iter()
        .enumerate()
        .map(|(index, f)| {
            let ts = f
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<f64>().ok())
                .unwrap_or(index as f64);
            (f, ts)
        })
        .collect())
}

/// Loads every depth PNG of a directory, without colour.
pub fn load_depth_dir(dir: &Path, intrinsics: Intrinsics, depth_scale: f64) -> Result<Sequence> {
    let mut seq = Sequence {
        timestamps: Vec::new(),
        frames: Vec::new(),
    };
    for (index, (f, ts)) in depth_dir_listing(dir)?.into_iter().enumerate() {
        seq.timestamps.push(ts);
        seq.frames.push(Frame::new(index, read_depth_png(&f, depth_scale)?, intrinsics));
    }
    Ok(seq)
}

/// For each entry of `query`, the index of the nearest `reference` stamp
/// within `max_dt` seconds.
pub fn associate_timestamps(query: &[f64], reference: &[f64], max_dt: f64) -> Vec<Option<usize>> {
    query
        .iter()
        .map(|t| {
            reference
                .iter()
                .enumerate()
                .map(|(k, r)| (k, (r - t).abs()))
                .filter(|(_, d)| *d <= max_dt)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(k, _)| k)
        })
        .collect()
}

const PATCH_HEADER: &str = "frame,patch,pixel_count,area,px,py,pz,nx,ny,nz,cx,cy,cz,x0,y0,x1,y1,samples";

/// Patch table, one row per patch. `samples` holds `x y z` triples
/// separated by spaces.
pub fn write_patches_csv(path: &Path, patches_by_frame: &[Vec<PlanePatch>]) -> Result<()> {
    let mut out = String::from(PATCH_HEADER);
    out.push('\n');
    for p in patches_by_frame.iter().flatten() {
        let (pt, n, c, b) = (p.plane.point, p.plane.normal, p.centroid, p.bbox_px);
        let _ = write!(
            out,
            "{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{},{},{},",
            p.frame_id, p.id, p.pixel_count, p.area, pt.x, pt.y, pt.z, n.x, n.y, n.z, c.x, c.y, c.z, b.x0, b.y0, b.x1, b.y1
        );
        let samples: Vec<String> = p
            .samples
            .iter()
            .flat_map(|s| [s.x, s.y, s.z])
            .map(|v| format!("{v:?}"))
            .collect();
        out.push_str(&samples.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads the patch table into `n_frames` per-frame lists (at least as many
/// as the largest frame index). Patch ids must be `0..k` per frame in order.
pub fn read_patches_csv(path: &Path, n_frames: usize) -> Result<Vec<Vec<PlanePatch>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == PATCH_HEADER => {}
        _ => return Err(Error::parse(path, 1, "missing patch table header")),
    }
    let mut out: Vec<Vec<PlanePatch>> = vec![Vec::new(); n_frames];
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 18 {
            return Err(Error::parse(path, lineno, format!("expected 18 fields, found {}", f.len())));
        }
        let real = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::parse(path, lineno, format!("`{s}`: {e}")));
        let int = |s: &str| s.trim().parse::<u32>().map_err(|e| Error::parse(path, lineno, format!("`{s}`: {e}")));
        let frame = int(f[0])? as usize;
        let id = int(f[1])?;
        let v3 = |k: usize| -> Result<Vector3<f64>> { Ok(Vector3::new(real(f[k])?, real(f[k + 1])?, real(f[k + 2])?)) };
        let normal = v3(7)?;
        if !(normal.norm() > 0.0) {
            return Err(Error::parse(path, lineno, "zero normal"));
        }
        let coords: Vec<f64> = f[17].split_whitespace().map(real).collect::<Result<_>>()?;
        if coords.is_empty() || coords.len() % 3 != 0 {
            return Err(Error::parse(path, lineno, "samples must be nonempty x y z triples"));
        }
        if frame >= out.len() {
            out.resize(frame + 1, Vec::new());
        }
        if id as usize != out[frame].len() {
            return Err(Error::parse(path, lineno, format!("patch id {id} out of order in frame {frame}")));
        }
        out[frame].push(PlanePatch {
            id,
            frame_id: frame,
            plane: Plane::new(v3(4)?, normal),
            samples: coords.chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect(),
            pixel_count: int(f[2])? as usize,
            area: real(f[3])?,
            centroid: v3(10)?,
            bbox_px: PixelRect {
                x0: int(f[13])?,
                y0: int(f[14])?,
                x1: int(f[15])?,
                y1: int(f[16])?,
            },
            pixels: Vec::new(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_png_round_trip_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let mut g = Grid::new(4, 3, 0.0);
        g.set(1, 1, 1.23456);
        g.set(2, 0, 20.0);
        write_depth_png(&path, &g, DEFAULT_DEPTH_SCALE).unwrap();
        let back = read_depth_png(&path, DEFAULT_DEPTH_SCALE).unwrap();
        assert_eq!(*back.get(1, 1), 6173.0 / 5000.0);
        assert_eq!(*back.get(2, 0), 0.0);
        assert_eq!(*back.get(0, 0), 0.0);
    }

    #[test]
    fn association_rows_parse() {
        let text = "# comment\n1305031102.175304 depth/1305031102.160407.png 1305031102.175304 rgb/1305031102.175304.png\n";
        let rows = parse_associations(Path::new("a.txt"), text).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].depth, PathBuf::from("depth/1305031102.160407.png"));
        assert!(matches!(
            parse_associations(Path::new("a.txt"), "1 2 3\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn missing_association_names_path() {
        let err = load_sequence(Path::new("/nonexistent/assoc.txt"), Intrinsics::default(), 5000.0).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/assoc.txt"));
    }

    #[test]
    fn timestamps_associate_to_nearest() {
        let got = associate_timestamps(&[0.0, 0.1, 0.5], &[0.09, 0.011, 0.3], 0.02);
        assert_eq!(got, vec![Some(1), Some(0), None]);
    }

    #[test]
    fn patch_table_round_trip() {
        let scene = crate::synth::generate_scene(&crate::synth::SceneSpec::default()).unwrap();
        let patches: Vec<Vec<PlanePatch>> = scene.patches_by_frame();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("patches.csv");
        write_patches_csv(&path, &patches).unwrap();
        let back = read_patches_csv(&path, patches.len()).unwrap();
        for (a, b) in patches.iter().flatten().zip(back.iter().flatten()) {
            assert_eq!(a.samples, b.samples);
            assert_eq!(a.plane.point, b.plane.point);
            assert!((a.plane.normal.into_inner() - b.plane.normal.into_inner()).norm() < 1e-15);
            assert_eq!((a.id, a.frame_id, a.area, a.bbox_px), (b.id, b.frame_id, b.area, b.bbox_px));
        }
    }
}
