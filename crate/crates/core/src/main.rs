use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use planereg::config::{ProviderKind, RunConfig};
use planereg::correspondence::{load_keypoint_matches, propose_pairs, read_pairs_csv, write_pairs_csv};
use planereg::descriptor::{write_embeddings, ColorHistogramProvider, DescriptorProvider, FileProvider, OracleProvider};
use planereg::eval::{
    ate_rmse, build_cop_set, pr_curve, read_cop_csv, robustness_sweep, write_cop_csv, write_pr_csv, write_sweep_csv,
    CopSubset, SweepParams,
};
use planereg::extraction::{build_patch_inputs, segment_planar_patches, write_patch_bundle};
use planereg::geometry::{PatchKey, PlanePatch, RigidTransform};
use planereg::io::{
    associate_timestamps, depth_dir_listing, load_depth_dir, load_sequence, read_associations, read_patches_csv,
    write_associations, write_color_png, write_depth_png, write_patches_csv, Association, Sequence,
};
use planereg::pipeline::{
    read_tum_trajectory, run_pipeline, write_pipeline_trace_csv, write_tum_trajectory, PipelineInput, SolveMode,
};
use planereg::synth::generate_scene;
use planereg::{Error, Result};

/// Seconds between synthetic frames.
const SYNTH_FRAME_PERIOD: f64 = 0.1;
/// Timestamp tolerance when matching trajectories.
const MAX_TIME_DIFF: f64 = 0.02;

#[derive(Parser)]
#[command(name = "planereg", version, about = "Coplanarity-driven RGB-D registration")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `section.key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Config override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for every randomized stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence with ground truth and a COP benchmark set.
    Synth,
    /// Segment planar patches in every frame.
    Extract,
    /// Propose coplanar pairs from patch descriptors.
    Propose,
    /// Register the sequence from patches, pairs and optional keypoints.
    Register {
        #[arg(long, conflicts_with = "keypoints_only")]
        coplanarity_only: bool,
        #[arg(long)]
        keypoints_only: bool,
    },
    /// ATE of a trajectory and/or PR curves of embeddings on a COP set.
    Evaluate {
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long)]
        cop_set: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// ATE versus planted outlier ratio on a synthetic scene.
    Sweep,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 1,
                Error::SolverDiverged { .. } => 3,
                _ => 2,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli.common)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    match cli.command {
        Command::Synth => cmd_synth(&cfg),
        Command::Extract => cmd_extract(&cfg),
        Command::Propose => cmd_propose(&cfg),
        Command::Register {
            coplanarity_only,
            keypoints_only,
        } => {
            let mut cfg = cfg;
            if coplanarity_only {
                cfg.pipeline.mode = SolveMode::CoplanarityOnly;
            } else if keypoints_only {
                cfg.pipeline.mode = SolveMode::KeypointsOnly;
            }
            cmd_register(&cfg)
        }
        Command::Evaluate {
            trajectory,
            ground_truth,
            cop_set,
            embeddings,
        } => cmd_evaluate(&cfg, trajectory, ground_truth, cop_set, embeddings),
        Command::Sweep => cmd_sweep(&cfg),
    }
}

fn build_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) if !path.exists() => return Err(Error::Config(format!("config file {} not found", path.display()))),
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

/// Configured input, else the file an earlier command wrote to the output dir.
fn input_path(configured: &Option<PathBuf>, cfg: &RunConfig, default_name: &str) -> Result<PathBuf> {
    let path = configured.clone().unwrap_or_else(|| out_path(cfg, default_name));
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingPath(path))
    }
}

fn load_frames(cfg: &RunConfig) -> Result<Sequence> {
    let d = &cfg.dataset;
    match (&d.associations, &d.depth_dir) {
        (Some(a), _) => load_sequence(a, d.intrinsics, d.depth_scale),
        (None, Some(dir)) => load_depth_dir(dir, d.intrinsics, d.depth_scale),
        (None, None) => Err(Error::Config("set dataset.associations or dataset.depth_dir".into())),
    }
}

fn frame_timestamps(cfg: &RunConfig) -> Result<Vec<f64>> {
    let d = &cfg.dataset;
    match (&d.associations, &d.depth_dir) {
        (Some(a), _) if !a.exists() => Err(Error::MissingPath(a.clone())),
        (Some(a), _) => Ok(read_associations(a)?.iter().map(|r| r.depth_time).collect()),
        (None, Some(dir)) => Ok(depth_dir_listing(dir)?.into_iter().map(|(_, t)| t).collect()),
        (None, None) => Err(Error::Config("set dataset.associations or dataset.depth_dir".into())),
    }
}

/// Ground-truth pose of every frame, matched by timestamp.
fn ground_truth_poses(cfg: &RunConfig, timestamps: &[f64]) -> Result<Vec<RigidTransform>> {
    let path = cfg
        .dataset
        .ground_truth
        .clone()
        .ok_or_else(|| Error::Config("the oracle provider needs dataset.ground_truth".into()))?;
    if !path.exists() {
        return Err(Error::MissingPath(path));
    }
    let (gt_ts, gt) = read_tum_trajectory(&path)?;
    associate_timestamps(timestamps, &gt_ts, MAX_TIME_DIFF)
        .into_iter()
        .enumerate()
        .map(|(k, m)| {
            m.map(|i| gt[i]).ok_or_else(|| {
                Error::InvalidParameter(format!("{}: no pose within {MAX_TIME_DIFF} s of frame {k}", path.display()))
            })
        })
        .collect()
}

fn descriptor_provider(cfg: &RunConfig, timestamps: &[f64]) -> Result<Box<dyn DescriptorProvider>> {
    Ok(match cfg.descriptor.provider {
        ProviderKind::File => {
            let path = cfg
                .dataset
                .embeddings
                .clone()
                .ok_or_else(|| Error::Config("the file provider needs dataset.embeddings".into()))?;
            if !path.exists() {
                return Err(Error::MissingPath(path));
            }
            Box::new(FileProvider::load(&path)?)
        }
        ProviderKind::Oracle => Box::new(OracleProvider::from_poses(
            ground_truth_poses(cfg, timestamps)?,
            cfg.descriptor.oracle_sigma,
            cfg.descriptor.oracle_seed,
        )?),
    })
}

fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let mut spec = cfg.synth.scene_spec(cfg.dataset.depth_scale);
    spec.render_images = true;
    let scene = generate_scene(&spec)?;
    for w in &scene.warnings {
        eprintln!("warning: {w}");
    }
    let out = &cfg.output_dir;
    for sub in ["depth", "rgb"] {
        let dir = out.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let timestamps: Vec<f64> = (0..scene.frames.len()).map(|i| i as f64 * SYNTH_FRAME_PERIOD).collect();
    let mut rows = Vec::with_capacity(scene.frames.len());
    for (f, ts) in scene.frames.iter().zip(&timestamps) {
        let depth = PathBuf::from(format!("depth/{:06}.png", f.index));
        let rgb = PathBuf::from(format!("rgb/{:06}.png", f.index));
        if let Some(d) = &f.depth {
            write_depth_png(&out.join(&depth), d, cfg.dataset.depth_scale)?;
        }
        if let Some(c) = &f.color {
            write_color_png(&out.join(&rgb), c)?;
        }
        rows.push(Association {
            depth_time: *ts,
            depth,
            rgb_time: *ts,
            rgb,
        });
    }
    write_associations(&out_path(cfg, "associations.txt"), &rows)?;
    write_tum_trajectory(&out_path(cfg, "groundtruth.txt"), &timestamps, &scene.trajectory)?;
    write_patches_csv(&out_path(cfg, "patches_gt.csv"), &scene.patches_by_frame())?;

    if cfg.eval.cop_per_subset > 0 {
        let set = build_cop_set(std::slice::from_ref(&scene), cfg.eval.cop_per_subset, cfg.eval.cop_seed)?;
        write_cop_csv(&out_path(cfg, "cop.csv"), &set)?;
        let oracle = OracleProvider::from_scene(&scene, cfg.synth.descriptor_sigma, cfg.synth.seed)?;
        let rows = scene
            .frames
            .iter()
            .flat_map(|f| f.patches.iter())
            .map(|p| Ok((PatchKey::new(p.frame_id, p.id as usize), oracle.describe(p)?)))
            .collect::<Result<Vec<_>>>()?;
        write_embeddings(&out_path(cfg, "cop_embeddings.txt"), &rows)?;
    }

    let mut dataset = RunConfig::default();
    let cam = scene.camera.intrinsics;
    for (key, value) in [
        ("dataset.associations", "associations.txt".to_string()),
        ("dataset.ground_truth", "groundtruth.txt".to_string()),
        ("dataset.patches", "patches.csv".to_string()),
        ("dataset.pairs", "pairs.csv".to_string()),
        ("dataset.depth_scale", format!("{:?}", cfg.dataset.depth_scale)),
        ("dataset.fx", format!("{:?}", cam.fx)),
        ("dataset.fy", format!("{:?}", cam.fy)),
        ("dataset.cx", format!("{:?}", cam.cx)),
        ("dataset.cy", format!("{:?}", cam.cy)),
        ("descriptor.provider", "oracle".to_string()),
        ("descriptor.threshold", "0.05".to_string()),
        ("output.dir", ".".to_string()),
    ] {
        dataset.set(key, &value)?;
    }
    dataset.synth = cfg.synth.clone();
    let path = out_path(cfg, "dataset.cfg");
    std::fs::write(&path, dataset.serialize()).map_err(|e| Error::io(&path, e))?;
    println!(
        "synthesized {} frames, {} patches into {}",
        scene.frames.len(),
        scene.frames.iter().map(|f| f.patches.len()).sum::<usize>(),
        out.display()
    );
    Ok(())
}

fn cmd_extract(cfg: &RunConfig) -> Result<()> {
    let seq = load_frames(cfg)?;
    let patches: Vec<Vec<PlanePatch>> = seq
        .frames
        .par_iter()
        .map(|f| segment_planar_patches(f, &cfg.extraction))
        .collect::<Result<_>>()?;
    write_patches_csv(&out_path(cfg, "patches.csv"), &patches)?;
    if seq.frames.iter().any(|f| f.color.is_some()) {
        let provider = ColorHistogramProvider::new(&seq.frames, cfg.descriptor.color_bins)?;
        let rows = patches
            .iter()
            .flatten()
            .filter(|p| seq.frames[p.frame_id].color.is_some())
            .map(|p| Ok((PatchKey::new(p.frame_id, p.id as usize), provider.describe(p)?)))
            .collect::<Result<Vec<_>>>()?;
        write_embeddings(&out_path(cfg, "embeddings_color.txt"), &rows)?;
    }
    if cfg.export_bundles {
        patches.par_iter().flatten().try_for_each(|p| {
            let bundle = build_patch_inputs(&seq.frames[p.frame_id], p)?;
            let dir = out_path(cfg, "bundles").join(format!("f{:06}_p{:03}", p.frame_id, p.id));
            write_patch_bundle(&dir, p, &bundle, cfg.dataset.depth_scale)
        })?;
    }
    println!(
        "extracted {} patches from {} frames",
        patches.iter().map(Vec::len).sum::<usize>(),
        seq.frames.len()
    );
    Ok(())
}

fn cmd_propose(cfg: &RunConfig) -> Result<()> {
    let timestamps = frame_timestamps(cfg)?;
    let patches = read_patches_csv(&input_path(&cfg.dataset.patches, cfg, "patches.csv")?, timestamps.len())?;
    let provider = descriptor_provider(cfg, &timestamps)?;
    let pairs = propose_pairs(&patches, provider.as_ref(), cfg.descriptor.threshold)?;
    write_pairs_csv(&out_path(cfg, "pairs.csv"), &pairs)?;
    println!("proposed {} pairs", pairs.len());
    Ok(())
}

fn cmd_register(cfg: &RunConfig) -> Result<()> {
    let timestamps = frame_timestamps(cfg)?;
    let patches = read_patches_csv(&input_path(&cfg.dataset.patches, cfg, "patches.csv")?, timestamps.len())?;
    if patches.len() != timestamps.len() {
        return Err(Error::InvalidParameter(format!(
            "patch table references frame {} but the sequence has {} frames",
            patches.len() - 1,
            timestamps.len()
        )));
    }
    let pairs = read_pairs_csv(&input_path(&cfg.dataset.pairs, cfg, "pairs.csv")?)?;
    let keypoints = match &cfg.dataset.keypoints {
        Some(path) if !path.exists() => return Err(Error::MissingPath(path.clone())),
        Some(path) => load_keypoint_matches(path, &load_frames(cfg)?.frames)?,
        None => Vec::new(),
    };
    let provider = if cfg.long_range {
        Some(descriptor_provider(cfg, &timestamps)?)
    } else {
        None
    };
    let input = PipelineInput {
        patches_by_frame: &patches,
        pairs: &pairs,
        keypoints: &keypoints,
        initial_poses: None,
        long_range: provider.as_deref().map(|p| (p, cfg.descriptor.threshold)),
    };
    let out = run_pipeline(&input, &cfg.pipeline)?;
    write_tum_trajectory(&out_path(cfg, "trajectory.txt"), &timestamps, &out.trajectory)?;
    write_pipeline_trace_csv(&out_path(cfg, "trace.csv"), &out)?;
    let selected: Vec<_> = pairs
        .iter()
        .zip(&out.pair_selections)
        .map(|(p, s)| {
            let mut p = *p;
            p.selection = *s;
            p
        })
        .collect();
    write_pairs_csv(&out_path(cfg, "selected_pairs.csv"), &selected)?;
    let accepted = out.links.iter().filter(|l| l.accepted).count();
    println!(
        "registered {} frames in {} fragments, {accepted}/{} fragment links accepted, {} of {} pairs kept",
        out.trajectory.len(),
        out.fragments.len(),
        out.links.len(),
        out.pair_selections.iter().filter(|s| **s > 0.5).count(),
        pairs.len()
    );
    Ok(())
}

fn cmd_evaluate(
    cfg: &RunConfig,
    trajectory: Option<PathBuf>,
    ground_truth: Option<PathBuf>,
    cop_set: Option<PathBuf>,
    embeddings: Option<PathBuf>,
) -> Result<()> {
    if trajectory.is_none() && cop_set.is_none() {
        return Err(Error::Config("evaluate needs --trajectory or --cop-set".into()));
    }
    if let Some(est_path) = trajectory {
        let gt_path = ground_truth
            .or_else(|| cfg.dataset.ground_truth.clone())
            .ok_or_else(|| Error::Config("--trajectory needs --ground-truth or dataset.ground_truth".into()))?;
        let ate = trajectory_ate(&est_path, &gt_path)?;
        println!("ATE {ate:.6}");
    }
    if let Some(cop_path) = cop_set {
        let emb_path = embeddings
            .or_else(|| cfg.dataset.embeddings.clone())
            .ok_or_else(|| Error::Config("--cop-set needs --embeddings or dataset.embeddings".into()))?;
        for p in [&cop_path, &emb_path] {
            if !p.exists() {
                return Err(Error::MissingPath(p.clone()));
            }
        }
        let set = read_cop_csv(&cop_path)?;
        let provider = FileProvider::load(&emb_path)?;
        let mut summary = String::from("subset,pairs,auc\n");
        for subset in CopSubset::ALL {
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            for pair in set.subset(subset) {
                let lookup = |k: PatchKey| {
                    provider.get(k).ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "{}: no embedding for patch {} of frame {}",
                            emb_path.display(),
                            k.patch,
                            k.frame
                        ))
                    })
                };
                scores.push(planereg::descriptor::feature_distance(lookup(pair.a)?, lookup(pair.b)?)?);
                labels.push(pair.label);
            }
            let name = subset.name();
            let curve = pr_curve(&scores, &labels)?;
            write_pr_csv(&out_path(cfg, &format!("pr_{name}.csv")), &curve)?;
            let _ = writeln!(summary, "{name},{},{:?}", scores.len(), curve.auc);
            println!("AUC {name} {:.6}", curve.auc);
        }
        let path = out_path(cfg, "auc.csv");
        std::fs::write(&path, summary).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Aligned ATE over the estimated poses that have a ground-truth pose
/// within the timestamp tolerance.
fn trajectory_ate(est_path: &Path, gt_path: &Path) -> Result<f64> {
    for p in [est_path, gt_path] {
        if !p.exists() {
            return Err(Error::MissingPath(p.to_path_buf()));
        }
    }
    let (est_ts, est) = read_tum_trajectory(est_path)?;
    let (gt_ts, gt) = read_tum_trajectory(gt_path)?;
    let (a, b): (Vec<_>, Vec<_>) = associate_timestamps(&est_ts, &gt_ts, MAX_TIME_DIFF)
        .into_iter()
        .enumerate()
        .filter_map(|(k, m)| m.map(|i| (est[k], gt[i])))
        .unzip();
    if a.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no poses of {} match {} within {MAX_TIME_DIFF} s",
            est_path.display(),
            gt_path.display()
        )));
    }
    ate_rmse(&a, &b, true)
}

fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let scene = generate_scene(&cfg.synth.scene_spec(cfg.dataset.depth_scale))?;
    let params = SweepParams {
        n_pairs: cfg.sweep.pairs,
        d_f_threshold: cfg.descriptor.threshold,
        seed: cfg.sweep.seed,
        pipeline: cfg.pipeline,
    };
    let rows = robustness_sweep(&scene, &cfg.sweep.ratios, &params)?;
    write_sweep_csv(&out_path(cfg, "sweep.csv"), &rows)?;
    for r in &rows {
        println!("ratio {:.2} ATE {:.6} outliers rejected {:.3}", r.ratio, r.ate, r.outliers_rejected);
    }
    Ok(())
}
