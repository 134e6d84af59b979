//! Run configuration as flat `section.key = value` text.
//!
//! Every key has a default; a file only lists the keys it changes. The
//! canonical form lists all keys in a fixed order.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::extraction::ExtractionParams;
use crate::geometry::Intrinsics;
use crate::io::DEFAULT_DEPTH_SCALE;
use crate::pipeline::{PipelineParams, SolveMode};
use crate::synth::{Layout, SceneSpec, TrajectoryShape};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    /// TUM association file; takes precedence over `depth_dir`.
    pub associations: Option<PathBuf>,
    pub depth_dir: Option<PathBuf>,
    pub depth_scale: f64,
    pub intrinsics: Intrinsics,
    pub ground_truth: Option<PathBuf>,
    pub keypoints: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub patches: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            associations: None,
            depth_dir: None,
            depth_scale: DEFAULT_DEPTH_SCALE,
            intrinsics: Intrinsics::default(),
            ground_truth: None,
            keypoints: None,
            embeddings: None,
            patches: None,
            pairs: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProviderKind {
    #[default]
    File,
    /// Ground-truth planes from `dataset.ground_truth`, plus noise.
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorConfig {
    pub provider: ProviderKind,
    pub threshold: f64,
    pub oracle_sigma: f64,
    pub oracle_seed: u64,
    pub color_bins: usize,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::File,
            threshold: 2.5,
            oracle_sigma: 0.0,
            oracle_seed: 0,
            color_bins: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SceneLayout {
    #[default]
    Corridor,
    BoxRoom,
    SingleWall,
    Corner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrajectoryKind {
    #[default]
    Line,
    Orbit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub layout: SceneLayout,
    pub trajectory: TrajectoryKind,
    pub frames: usize,
    /// Line: meters per frame. Orbit: radius.
    pub step: f64,
    pub depth_sigma: f64,
    pub descriptor_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            layout: SceneLayout::Corridor,
            trajectory: TrajectoryKind::Line,
            frames: 10,
            step: 0.1,
            depth_sigma: 0.0,
            descriptor_sigma: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn scene_spec(&self, depth_scale: f64) -> SceneSpec {
        let base = SceneSpec::default();
        let layout = match self.layout {
            SceneLayout::Corridor => base.layout.clone(),
            SceneLayout::BoxRoom => Layout::BoxRoom { size: [6.0, 5.0, 2.6] },
            SceneLayout::SingleWall => Layout::SingleWall,
            SceneLayout::Corner => Layout::Corner,
        };
        let trajectory = match self.trajectory {
            TrajectoryKind::Line => TrajectoryShape::Line {
                frames: self.frames,
                start: Vector3::new(0.0, 0.0, 1.3),
                step: self.step,
                yaw_amplitude_deg: 8.0,
                pitch_deg: 10.0,
                sway: 0.05,
            },
            TrajectoryKind::Orbit => TrajectoryShape::Orbit {
                frames: self.frames,
                center: Vector3::new(0.0, 0.0, 1.4),
                radius: self.step,
                arc_deg: 315.0,
                pitch_deg: 15.0,
            },
        };
        SceneSpec {
            layout,
            trajectory,
            depth_sigma: self.depth_sigma,
            descriptor_sigma: self.descriptor_sigma,
            depth_scale,
            seed: self.seed,
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub ratios: Vec<f64>,
    pub pairs: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            ratios: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            pairs: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Pairs per COP subset written by `synth`; 0 skips the benchmark set.
    pub cop_per_subset: usize,
    pub cop_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            cop_per_subset: 16,
            cop_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub extraction: ExtractionParams,
    pub export_bundles: bool,
    pub descriptor: DescriptorConfig,
    pub pipeline: PipelineParams,
    /// Propose pairs between fragment representatives with the descriptor provider.
    pub long_range: bool,
    pub synth: SynthConfig,
    pub sweep: SweepConfig,
    pub eval: EvalConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            extraction: ExtractionParams::default(),
            export_bundles: false,
            descriptor: DescriptorConfig::default(),
            pipeline: PipelineParams::default(),
            long_range: false,
            synth: SynthConfig::default(),
            sweep: SweepConfig::default(),
            eval: EvalConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Option<Self>;
    fn format_value(&self) -> String;
}

impl ConfigValue for f64 {
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok().filter(|v: &f64| v.is_finite())
    }
    fn format_value(&self) -> String {
        format!("{self:?}")
    }
}

macro_rules! int_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Option<Self> {
                s.parse().ok()
            }
            fn format_value(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
int_value!(usize, u64, bool);

impl ConfigValue for PathBuf {
    fn parse_value(s: &str) -> Option<Self> {
        (!s.is_empty()).then(|| PathBuf::from(s))
    }
    fn format_value(&self) -> String {
        self.display().to_string()
    }
}

impl ConfigValue for Option<PathBuf> {
    fn parse_value(s: &str) -> Option<Self> {
        Some(PathBuf::parse_value(s))
    }
    fn format_value(&self) -> String {
        self.as_ref().map(|p| p.format_value()).unwrap_or_default()
    }
}

impl ConfigValue for Vec<f64> {
    fn parse_value(s: &str) -> Option<Self> {
        if s.is_empty() {
            return Some(Vec::new());
        }
        s.split(',').map(|v| f64::parse_value(v.trim())).collect()
    }
    fn format_value(&self) -> String {
        self.iter().map(f64::format_value).collect::<Vec<_>>().join(",")
    }
}

macro_rules! enum_value {
    ($t:ty { $($variant:path => $name:literal),* $(,)? }) => {
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Option<Self> {
                match s {
                    $($name => Some($variant),)*
                    _ => None,
                }
            }
            fn format_value(&self) -> String {
                match self {
                    $($variant => $name,)*
                }
                .to_string()
            }
        }
    };
}

enum_value!(ProviderKind { ProviderKind::File => "file", ProviderKind::Oracle => "oracle" });
enum_value!(SolveMode {
    SolveMode::Mixed => "mixed",
    SolveMode::CoplanarityOnly => "coplanarity_only",
    SolveMode::KeypointsOnly => "keypoints_only",
});
enum_value!(SceneLayout {
    SceneLayout::Corridor => "corridor",
    SceneLayout::BoxRoom => "box_room",
    SceneLayout::SingleWall => "single_wall",
    SceneLayout::Corner => "corner",
});
enum_value!(TrajectoryKind { TrajectoryKind::Line => "line", TrajectoryKind::Orbit => "orbit" });

macro_rules! config_keys {
    ($($key:literal => $($field:ident).+;)*) => {
        impl RunConfig {
            /// Every key in canonical order.
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let value = value.trim();
                match key {
                    $($key => {
                        self.$($field).+ = ConfigValue::parse_value(value)
                            .ok_or_else(|| Error::Config(format!("bad value `{value}` for `{key}`")))?;
                    })*
                    _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                }
                Ok(())
            }

            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $($key => Some(self.$($field).+.format_value()),)*
                    _ => None,
                }
            }
        }
    };
}

config_keys! {
    "dataset.associations" => dataset.associations;
    "dataset.depth_dir" => dataset.depth_dir;
    "dataset.depth_scale" => dataset.depth_scale;
    "dataset.fx" => dataset.intrinsics.fx;
    "dataset.fy" => dataset.intrinsics.fy;
    "dataset.cx" => dataset.intrinsics.cx;
    "dataset.cy" => dataset.intrinsics.cy;
    "dataset.ground_truth" => dataset.ground_truth;
    "dataset.keypoints" => dataset.keypoints;
    "dataset.embeddings" => dataset.embeddings;
    "dataset.patches" => dataset.patches;
    "dataset.pairs" => dataset.pairs;
    "extraction.normal_window_px" => extraction.normal_window_px;
    "extraction.merge_normal_angle_deg" => extraction.merge_normal_angle_deg;
    "extraction.merge_plane_rms_m" => extraction.merge_plane_rms_m;
    "extraction.min_valid_pixels" => extraction.min_valid_pixels;
    "extraction.samples_per_patch" => extraction.samples_per_patch;
    "extraction.export_bundles" => export_bundles;
    "descriptor.provider" => descriptor.provider;
    "descriptor.threshold" => descriptor.threshold;
    "descriptor.oracle_sigma" => descriptor.oracle_sigma;
    "descriptor.oracle_seed" => descriptor.oracle_seed;
    "descriptor.color_bins" => descriptor.color_bins;
    "pipeline.fragment_size" => pipeline.fragment_size;
    "pipeline.overlap" => pipeline.overlap;
    "pipeline.mode" => pipeline.mode;
    "pipeline.long_range" => long_range;
    "pipeline.dedup_angle_deg" => pipeline.dedup_angle_deg;
    "pipeline.dedup_distance_m" => pipeline.dedup_distance_m;
    "solver.mu_init" => pipeline.solver.mu_init;
    "solver.mu_floor" => pipeline.solver.mu_floor;
    "solver.mu_decay" => pipeline.solver.mu_decay;
    "solver.rel_tol" => pipeline.solver.rel_tol;
    "solver.max_outer" => pipeline.solver.max_outer;
    "solver.max_inner" => pipeline.solver.max_inner;
    "solver.samples_per_patch" => pipeline.solver.samples_per_patch;
    "solver.kp_squared" => pipeline.solver.kp_squared;
    "solver.frame_reg_lambda" => pipeline.solver.frame_reg_lambda;
    "solver.gamma_t" => pipeline.solver.gamma_t;
    "solver.mu_axis_init" => pipeline.solver.mu_axis_init;
    "solver.lm_iterations" => pipeline.solver.lm_iterations;
    "ransac.iterations" => pipeline.ransac.iterations;
    "ransac.inlier_threshold_m" => pipeline.ransac.inlier_threshold_m;
    "ransac.consensus_fraction" => pipeline.ransac.consensus_fraction;
    "ransac.seed" => pipeline.ransac.rng_seed;
    "synth.layout" => synth.layout;
    "synth.trajectory" => synth.trajectory;
    "synth.frames" => synth.frames;
    "synth.step" => synth.step;
    "synth.depth_sigma" => synth.depth_sigma;
    "synth.descriptor_sigma" => synth.descriptor_sigma;
    "synth.seed" => synth.seed;
    "sweep.ratios" => sweep.ratios;
    "sweep.pairs" => sweep.pairs;
    "sweep.seed" => sweep.seed;
    "eval.cop_per_subset" => eval.cop_per_subset;
    "eval.cop_seed" => eval.cop_seed;
    "output.dir" => output_dir;
}

const PATH_KEYS: &[&str] = &[
    "dataset.associations",
    "dataset.depth_dir",
    "dataset.ground_truth",
    "dataset.keypoints",
    "dataset.embeddings",
    "dataset.patches",
    "dataset.pairs",
    "output.dir",
];

impl RunConfig {
    /// Applies `key = value` lines to the defaults. Blank lines and lines
    /// starting with `#` are ignored; a repeated key keeps the last value.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", idx + 1)))?;
            cfg.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", idx + 1)))?;
        }
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for key in PATH_KEYS {
            let value = cfg.get(key).unwrap_or_default();
            if !value.is_empty() && Path::new(&value).is_relative() {
                cfg.set(key, &base.join(&value).display().to_string())?;
            }
        }
        Ok(cfg)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not `key=value`")))?;
        self.set(key.trim(), value)
    }

    /// Sets every seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.pipeline.ransac.rng_seed = seed;
        self.descriptor.oracle_seed = seed;
        self.synth.seed = seed;
        self.sweep.seed = seed;
        self.eval.cop_seed = seed;
    }

    /// All keys in canonical order, one `key = value` line each, with a
    /// blank line between sections.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for key in Self::KEYS {
            let head = key.split('.').next().unwrap_or("");
            if !section.is_empty() && head != section {
                out.push('\n');
            }
            section = head;
            let value = self.get(key).unwrap_or_default();
            if value.is_empty() {
                out.push_str(&format!("{key} =\n"));
            } else {
                out.push_str(&format!("{key} = {value}\n"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |e: Error| match e {
            Error::InvalidParameter(m) => Error::Config(m),
            other => other,
        };
        self.extraction.validate().map_err(usage)?;
        self.pipeline.validate().map_err(usage)?;
        self.dataset.intrinsics.validate().map_err(usage)?;
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.dataset.depth_scale > 0.0) {
            return bad("dataset.depth_scale must be positive");
        }
        if !(self.descriptor.threshold > 0.0) {
            return bad("descriptor.threshold must be positive");
        }
        if !(self.descriptor.oracle_sigma >= 0.0) {
            return bad("descriptor.oracle_sigma must be nonnegative");
        }
        if self.descriptor.color_bins == 0 || self.descriptor.color_bins > 256 {
            return bad("descriptor.color_bins must lie in 1..=256");
        }
        if self.synth.frames == 0 || !(self.synth.step > 0.0) {
            return bad("synth.frames and synth.step must be positive");
        }
        if !(self.synth.depth_sigma >= 0.0 && self.synth.descriptor_sigma >= 0.0) {
            return bad("synth noise levels must be nonnegative");
        }
        if self.sweep.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("sweep.ratios must lie in [0, 1]");
        }
        if self.sweep.pairs == 0 {
            return bad("sweep.pairs must be positive");
        }
        if self.eval.cop_per_subset % 2 != 0 {
            return bad("eval.cop_per_subset must be even");
        }
        Ok(())
    }
}
