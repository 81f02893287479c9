use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use npc::cache::DescriptorCache;
use npc::checkpoint::{self, Sidecar, TrainMeta, HISTORY_FILE};
use npc::codec;
use npc::dataset::{Dataset, DEFAULT_HOLDOUT};
use npc::pipeline::{self, ModelOptions, StereoOptions};
use npc::{ply, synth, Error, Result};
use npc_core::reconstruction::default_delta;
use npc_core::render::NaiveMode;
use npc_core::stereo::SweepParams;
use npc_core::train::TrainConfig;
use npc_core::{AblationFlags, Camera, DepthSource, MlpModel, UncertaintyMap};

#[derive(Parser, Debug)]
#[command(name = "npc", version, about = "Neural pixel composition: novel views, depth maps and point clouds from posed images")]
struct Cli {
    /// Seed for every random choice
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all available cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a procedural scene with exact depth into a dataset
    GenSynth(GenSynthArgs),
    /// Replace every view's depth with plane-sweep stereo against its nearest view
    Stereo(StereoArgs),
    /// Train a composition network
    Train(TrainArgs),
    /// Render one view (dataset camera or explicit pose)
    Render(RenderArgs),
    /// Render held-out views and print psnr/ssim rows
    Eval(EvalArgs),
    /// Score the naive closest-sample or closest-three baselines
    Naive(NaiveArgs),
    /// Extract a depth map from the learned weights
    Depth(DepthArgs),
    /// Fuse all views into a point cloud
    Fuse(FuseArgs),
    /// Convert a PFM depth or uncertainty map to the native raster format
    Convert(ConvertArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Scene {
    Box,
    Orbit,
}

#[derive(Args, Debug)]
struct GenSynthArgs {
    #[arg(long, value_enum, default_value_t = Scene::Box)]
    scene: Scene,
    /// Cameras on the rig
    #[arg(long, default_value_t = 9, value_parser = clap::value_parser!(u32).range(2..))]
    views: u32,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(1..))]
    width: u32,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(1..))]
    height: u32,
    /// Frames per camera (temporal scenes move over frames)
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    frames: u32,
    /// Hold out every k-th view for testing (0 = none)
    #[arg(long, default_value_t = DEFAULT_HOLDOUT)]
    holdout: usize,
    /// Output dataset directory (required)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct StereoArgs {
    /// Dataset directory (required)
    #[arg(long)]
    data: PathBuf,
    /// Nearest depth candidate, world units
    #[arg(long, default_value_t = 0.5)]
    near: f64,
    /// Farthest depth candidate, world units
    #[arg(long, default_value_t = 20.0)]
    far: f64,
    /// Number of depth candidates (even in inverse depth)
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(2..))]
    candidates: u32,
    /// Matching window side, odd
    #[arg(long, default_value_t = 7)]
    window: usize,
    /// Softmin temperature for the uncertainty
    #[arg(long, default_value_t = 0.1)]
    temperature: f64,
}

#[derive(Args, Debug, Clone)]
struct AblationArgs {
    /// Force the color correction to zero
    #[arg(long)]
    no_gamma: bool,
    /// Drop the spatial positional encoding
    #[arg(long)]
    no_spatial: bool,
    /// Replace uncertainties by the padding mask
    #[arg(long)]
    no_entropy: bool,
    /// Softmax of raw outputs instead of depth-aware weights
    #[arg(long)]
    direct_mlp: bool,
    /// Ignore frame indices on temporal data
    #[arg(long)]
    no_time: bool,
}

impl AblationArgs {
    fn flags(&self) -> AblationFlags {
        AblationFlags {
            no_gamma: self.no_gamma,
            no_spatial: self.no_spatial,
            no_entropy: self.no_entropy,
            direct_mlp: self.direct_mlp,
            no_time: self.no_time,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory (required)
    #[arg(long)]
    data: PathBuf,
    /// Output model directory (required)
    #[arg(long)]
    out: PathBuf,
    /// Source views per target (saturates at training views - 1)
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    k: u32,
    /// Samples per pixel
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    n: u32,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    epochs: u32,
    /// Base learning rate
    #[arg(long, default_value_t = 2e-4)]
    lr: f64,
    /// Positional-encoding frequencies
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..))]
    freq_l: u32,
    /// Temporal Gaussian width in frames
    #[arg(long, default_value_t = 1.0)]
    sigma_t: f64,
    /// Hidden width
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u32).range(1..))]
    hidden: u32,
    /// Linear layers
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    layers: u32,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    images_per_step: u32,
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u32).range(1..))]
    pixels_per_image: u32,
    /// Also write a checkpoint after every epoch (epoch-<e>/)
    #[arg(long)]
    save_every_epoch: bool,
    /// Rebuild descriptors instead of using the on-disk cache
    #[arg(long)]
    no_cache: bool,
    #[command(flatten)]
    ablation: AblationArgs,
}

#[derive(Args, Debug)]
struct ModelSource {
    /// Model directory or checkpoint file (required)
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory (default: the one recorded at training time)
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[command(flatten)]
    src: ModelSource,
    /// Render the camera of this dataset view (excluded from its own sources)
    #[arg(long, conflicts_with = "pose", required_unless_present = "pose")]
    view_id: Option<String>,
    /// Explicit pose "rx,ry,rz,tx,ty,tz" with the dataset's intrinsics
    #[arg(long, allow_hyphen_values = true)]
    pose: Option<String>,
    /// Frame index for temporal models (default: the view's frame, else 0)
    #[arg(long)]
    time: Option<usize>,
    /// Output PNG (required)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    src: ModelSource,
    /// Evaluate only this view (default: every held-out view)
    #[arg(long)]
    view_id: Option<String>,
    /// Directory for the rendered PNGs (default: not written)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Closest,
    Avg3,
}

#[derive(Args, Debug)]
struct NaiveArgs {
    /// Dataset directory (required)
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Closest)]
    mode: Mode,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    k: u32,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    n: u32,
    /// Color for pixels without samples, "r,g,b" in [0,1]
    #[arg(long, default_value = "0,0,0")]
    background: String,
    /// Evaluate only this view (default: every held-out view)
    #[arg(long)]
    view_id: Option<String>,
    /// Directory for the rendered PNGs (default: not written)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DepthArgs {
    #[command(flatten)]
    src: ModelSource,
    /// Dataset view to extract (required)
    #[arg(long)]
    view_id: String,
    /// Output depth raster (.npcd) (required)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FuseArgs {
    #[command(flatten)]
    src: ModelSource,
    /// Vicinity threshold in world units (default: 1% of the depth normalizer)
    #[arg(long)]
    delta: Option<f64>,
    /// Output PLY (required)
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Kind {
    Depth,
    Uncertainty,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    /// Input PFM file (required)
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Kind::Depth)]
    kind: Kind,
    /// Output raster (.npcd) (required)
    #[arg(long)]
    out: PathBuf,
}

fn parse_floats<const K: usize>(s: &str, what: &str) -> Result<[f64; K]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Invalid(format!("{what}: expected {K} comma-separated numbers")))?;
    v.try_into()
        .map_err(|_| Error::Invalid(format!("{what}: expected {K} comma-separated numbers")))
}

fn load_model(src: &ModelSource) -> Result<(MlpModel, Dataset)> {
    let (model, sidecar) = checkpoint::load(&src.model)?;
    let root = src
        .data
        .clone()
        .or_else(|| sidecar.and_then(|s| s.data_root))
        .ok_or_else(|| Error::Invalid("no --data given and the model does not record its dataset".into()))?;
    let ds = Dataset::load(&root)?;
    if ds.temporal_frames() != model.config.frames {
        return Err(npc_core::Error::ConfigMismatch("dataset frame count differs from the model's").into());
    }
    Ok((model, ds))
}

fn view_index(ds: &Dataset, id: &str) -> Result<usize> {
    ds.index_of(id)
        .ok_or_else(|| Error::Invalid(format!("unknown view id {id}")))
}

fn selected_views(ds: &Dataset, id: &Option<String>) -> Result<Vec<usize>> {
    match id {
        Some(id) => Ok(vec![view_index(ds, id)?]),
        None => {
            let t = ds.test_indices();
            if t.is_empty() {
                Err(Error::Invalid("dataset has no held-out views; pass --view-id".into()))
            } else {
                Ok(t)
            }
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynth(a) => {
            let (v, w, h, f) = (a.views as usize, a.width, a.height, a.frames as usize);
            let mut spec = match a.scene {
                Scene::Box => npc_core::synth::box_scene(v, w, h),
                Scene::Orbit => npc_core::synth::orbit_scene(v, w, h, f),
            };
            spec.frames = f;
            let ds = synth::gen_synthetic(&spec, cli.seed, &a.out, a.holdout)?;
            println!(
                "dataset={} views={} train={} test={} d_scale={}",
                a.out.display(),
                ds.views.len(),
                ds.train_indices().len(),
                ds.test_indices().len(),
                ds.manifest.d_scale.unwrap_or(f64::NAN)
            );
        }
        Command::Stereo(a) => {
            let mut ds = Dataset::load(&a.data)?;
            let opts = StereoOptions {
                near: a.near,
                far: a.far,
                candidates: a.candidates as usize,
                params: SweepParams {
                    window: a.window,
                    temperature: a.temperature,
                },
            };
            pipeline::stereo(&mut ds, &opts)?;
            ds.save()?;
            println!("stereo views={} d_scale={}", ds.views.len(), ds.manifest.d_scale.unwrap_or(f64::NAN));
        }
        Command::Train(a) => {
            let ds = Dataset::load(&a.data)?;
            let opts = ModelOptions {
                k: a.k as usize,
                n: a.n as usize,
                freq_l: a.freq_l as usize,
                sigma_t: a.sigma_t,
                hidden: a.hidden as usize,
                layers: a.layers as usize,
                flags: a.ablation.flags(),
            };
            let cfg = pipeline::composition_config(&ds, &opts)?;
            let tcfg = TrainConfig {
                epochs: a.epochs as usize,
                base_lr: a.lr,
                images_per_step: a.images_per_step as usize,
                pixels_per_image: a.pixels_per_image as usize,
                seed: cli.seed,
            };
            let cache = if a.no_cache {
                None
            } else {
                Some(DescriptorCache::new(pipeline::default_cache_dir(&ds), &ds)?)
            };
            let data_root = Some(fs::canonicalize(&a.data).map_err(|e| Error::io(&a.data, e))?);
            let meta = |steps| TrainMeta {
                epochs: tcfg.epochs,
                base_lr: tcfg.base_lr,
                images_per_step: tcfg.images_per_step,
                pixels_per_image: tcfg.pixels_per_image,
                seed: tcfg.seed,
                loss_reduction: "mean".into(),
                steps,
            };
            let mut log = String::new();
            let (model, _, steps) = pipeline::train(&ds, cfg, tcfg, cache.as_ref(), |r, m| {
                println!("{}", r.line());
                log.push_str(&r.line());
                log.push('\n');
                if a.save_every_epoch {
                    let dir = a.out.join(format!("epoch-{}", r.epoch));
                    checkpoint::save(&dir, m, &checkpoint::sidecar_for(m, data_root.clone(), None))?;
                }
                Ok(())
            })?;
            let sidecar: Sidecar = checkpoint::sidecar_for(&model, data_root.clone(), Some(meta(steps)));
            checkpoint::save(&a.out, &model, &sidecar)?;
            write_text(&a.out.join(HISTORY_FILE), &log)?;
            println!("model={} params={}", a.out.display(), model.params.data.len());
        }
        Command::Render(a) => {
            let (model, ds) = load_model(&a.src)?;
            let (cam, exclude, time) = match (&a.view_id, &a.pose) {
                (Some(id), _) => {
                    let i = view_index(&ds, id)?;
                    (ds.views[i].camera.clone(), Some(i), a.time.unwrap_or(ds.views[i].time))
                }
                (None, Some(p)) => {
                    let v: [f64; 6] = parse_floats(p, "--pose")?;
                    let base = &ds.views.first().ok_or_else(|| Error::Invalid("dataset has no views".into()))?.camera;
                    let cam: Camera = base.with_pose([v[0], v[1], v[2]], [v[3], v[4], v[5]])?;
                    (cam, None, a.time.unwrap_or(0))
                }
                (None, None) => unreachable!("clap requires --view-id or --pose"),
            };
            let r = pipeline::render_view(&model, &ds, &cam, exclude, Some(time))?;
            codec::write_png(&a.out, &r.image)?;
            let invalid = r.valid.iter().filter(|v| !**v).count();
            println!("image={} width={} height={} invalid_pixels={invalid}", a.out.display(), cam.width, cam.height);
        }
        Command::Eval(a) => {
            let (model, ds) = load_model(&a.src)?;
            let views = selected_views(&ds, &a.view_id)?;
            let rows = pipeline::evaluate(&model, &ds, &views)?;
            let mut sum = (0.0, 0.0);
            for (row, r) in &rows {
                println!("{}", row.line());
                sum.0 += row.psnr;
                sum.1 += row.ssim;
                if let Some(dir) = &a.out {
                    codec::write_png(&dir.join(format!("{}.png", row.id)), &r.image)?;
                }
            }
            let n = rows.len() as f64;
            println!("mean psnr={:.4} ssim={:.6} (8-bit values; lpips not computed)", sum.0 / n, sum.1 / n);
        }
        Command::Naive(a) => {
            let ds = Dataset::load(&a.data)?;
            let bg = parse_floats::<3>(&a.background, "--background")?;
            let opts = ModelOptions {
                k: a.k as usize,
                n: a.n as usize,
                ..Default::default()
            };
            let cfg = pipeline::composition_config(&ds, &opts)?;
            let mode = match a.mode {
                Mode::Closest => NaiveMode::Closest,
                Mode::Avg3 => NaiveMode::Avg3,
            };
            let mut sum = (0.0, 0.0, 0usize);
            for i in selected_views(&ds, &a.view_id)? {
                let img = pipeline::naive_render(&ds, &cfg, i, mode, bg)?;
                let row = pipeline::score(&ds, i, &img)?;
                println!("{}", row.line());
                sum = (sum.0 + row.psnr, sum.1 + row.ssim, sum.2 + 1);
                if let Some(dir) = &a.out {
                    codec::write_png(&dir.join(format!("{}.png", row.id)), &img)?;
                }
            }
            let n = sum.2 as f64;
            println!("mean psnr={:.4} ssim={:.6} (8-bit values; lpips not computed)", sum.0 / n, sum.1 / n);
        }
        Command::Depth(a) => {
            let (model, ds) = load_model(&a.src)?;
            let i = view_index(&ds, &a.view_id)?;
            let d = pipeline::extract_depth(&model, &ds, i)?;
            codec::write_depth(&a.out, &d)?;
            let valid = d.valid_values().count();
            println!("depth={} valid_pixels={valid}", a.out.display());
        }
        Command::Fuse(a) => {
            let (model, ds) = load_model(&a.src)?;
            let delta = a.delta.unwrap_or_else(|| default_delta(model.config.d_scale));
            let cloud = pipeline::fuse(&model, &ds, delta)?;
            ply::write_ply(&a.out, &cloud)?;
            println!("cloud={} points={} delta={delta}", a.out.display(), cloud.points.len());
        }
        Command::Convert(a) => {
            let (w, h, v) = codec::read_pfm(&a.input)?;
            match a.kind {
                Kind::Depth => {
                    let d = npc_core::DepthMap::from_values(w, h, v, DepthSource::External)?;
                    codec::write_depth(&a.out, &d)?;
                }
                Kind::Uncertainty => codec::write_uncertainty(&a.out, &UncertaintyMap::from_values(w, h, v)?)?,
            }
            println!("raster={} width={w} height={h}", a.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // only fails if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
