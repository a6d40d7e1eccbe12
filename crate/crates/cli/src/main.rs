use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volprim::diff::{gradcheck, small_scene, GradcheckConfig, Scene};
use volprim::fit::{fit, write_log_csv, FitConfig, FitOptions, LossWeights};
use volprim::geometry::{load_cameras, rotation_from_axis_angle, Camera, Ray, Vec3};
use volprim::image::{psnr, Image};
use volprim::io::{
    load_dataset, load_image, load_scene, make_synthetic, save_float_image, save_png, save_scene, write_synthetic, SyntheticConfig,
};
use volprim::primitive::{PrimitiveSlab, WindowParams, WorldTransform};
use volprim::renderer::{composite, render, render_rays, FrameGeometry, MarchConfig, SceneView};
use volprim::{Error, Result};

#[derive(Parser)]
#[command(name = "volprim", version, about = "Render and fit scenes of volumetric primitives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene from one or all of its cameras.
    Render(RenderArgs),
    /// Fit a scene to a multi-view dataset.
    Fit(FitArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Time hierarchy builds and ray throughput; prints CSV.
    Bench(BenchArgs),
    /// Write a synthetic dataset with its ground-truth scene.
    MakeSynthetic(SyntheticArgs),
}

/// Overrides of the raymarch settings.
#[derive(Args, Clone, Default)]
struct MarchArgs {
    /// Sample spacing along each ray, meters.
    #[arg(long)]
    stepsize: Option<f64>,
    /// Early-termination threshold; 0 disables.
    #[arg(long)]
    early_eps: Option<f64>,
    /// Randomly offset each ray's sample lattice.
    #[arg(long)]
    jitter: bool,
}

impl MarchArgs {
    fn apply(&self, mut cfg: MarchConfig, seed: Option<u64>) -> MarchConfig {
        if let Some(s) = self.stepsize {
            cfg.step = s;
        }
        if let Some(e) = self.early_eps {
            cfg.early_eps = e;
        }
        cfg.jitter |= self.jitter;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg
    }
}

#[derive(Args)]
struct RenderArgs {
    /// Scene JSON.
    #[arg(long)]
    scene: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Camera index; all cameras when omitted.
    #[arg(long)]
    camera: Option<usize>,
    /// Camera list overriding the scene's.
    #[arg(long)]
    cameras: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Background image (PNG or float dump) to composite over; black otherwise.
    #[arg(long)]
    background: Option<PathBuf>,
    /// Also write premultiplied RGBA as a float dump.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    march: MarchArgs,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset manifest JSON.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for the fitted scene and metric log.
    #[arg(long)]
    out: PathBuf,
    /// Initial scene; otherwise primitives are placed on the dataset mesh.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Fit configuration JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Primitive count when placing on the mesh (a perfect square).
    #[arg(long, default_value_t = 16)]
    n_prim: usize,
    /// Voxels per axis when placing on the mesh.
    #[arg(long, default_value_t = 8)]
    m: usize,
    /// Window strength; 0 disables the opacity fade.
    #[arg(long)]
    window_alpha: Option<f64>,
    #[command(flatten)]
    march: MarchArgs,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Voxels per axis of the 8-primitive test scene.
    #[arg(long, default_value_t = 8)]
    m: usize,
    #[arg(long, default_value_t = 64)]
    rays: usize,
    #[arg(long, default_value_t = 200)]
    params: usize,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    march: MarchArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated primitive counts.
    #[arg(long, value_delimiter = ',', default_values_t = vec![256usize, 1024, 4096, 16384, 65536])]
    sizes: Vec<usize>,
    /// Rays traced per size.
    #[arg(long, default_value_t = 100_000)]
    rays: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    march: MarchArgs,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long)]
    out: PathBuf,
    /// Generator configuration JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn run_render(a: RenderArgs) -> Result<()> {
    let bundle = load_scene(&a.scene, a.frame)?;
    let cameras: Vec<Camera<f32>> = match &a.cameras {
        Some(p) => load_cameras(p)?,
        None => bundle.cameras,
    };
    let chosen: Vec<usize> = match a.camera {
        Some(c) if c < cameras.len() => vec![c],
        Some(c) => return Err(Error::InvalidInput(format!("camera {c} of {}", cameras.len()))),
        None => (0..cameras.len()).collect(),
    };
    if chosen.is_empty() {
        return Err(Error::Empty("camera list"));
    }
    let background = a.background.as_deref().map(load_image).transpose()?;
    let march = a.march.apply(bundle.march, a.seed);
    let geometry = bundle.scene.geometry()?;
    let view = bundle.scene.view(&geometry)?;
    std::fs::create_dir_all(&a.out)?;
    for c in chosen {
        let cam = &cameras[c];
        let out = render(&view, cam, &march, c as u32)?;
        let bg = match &background {
            Some(b) => b.clone(),
            None => Image::new(cam.width(), cam.height(), 3),
        };
        save_png(&composite(&out, &bg)?, &a.out.join(format!("render_{c:02}.png")))?;
        if a.raw {
            let mut rgba = Image::new(cam.width(), cam.height(), 4);
            for p in 0..rgba.pixel_count() {
                let px = rgba.pixel_mut(p);
                px[..3].copy_from_slice(out.color.pixel(p));
                px[3] = out.alpha.pixel(p)[0];
            }
            save_float_image(&rgba, &a.out.join(format!("render_{c:02}.mvpf")))?;
        }
        println!("camera {c}: {} samples, {} primitive evaluations", out.total_samples(), out.total_prim_samples());
    }
    Ok(())
}

fn run_fit(a: FitArgs) -> Result<()> {
    let mut cfg: FitConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => FitConfig::default(),
    };
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.march = a.march.apply(cfg.march, a.seed);
    let path = if a.dataset.is_dir() { a.dataset.join("dataset.json") } else { a.dataset.clone() };
    let dataset = load_dataset(&path, a.frame)?;
    let (mut scene, cameras) = match &a.init {
        Some(p) => {
            let b = load_scene(p, 0)?;
            (b.scene, b.cameras)
        }
        None => {
            let s = Scene::from_mesh(
                dataset.mesh.clone(),
                a.n_prim,
                a.m,
                Vec3::splat(0.5),
                1.0,
                WindowParams::default(),
                cfg.weights.geo > 0.0,
            )?;
            (s, dataset.views.iter().map(|v| v.camera.clone()).collect())
        }
    };
    if let Some(alpha) = a.window_alpha {
        scene.window = WindowParams::new(alpha, scene.window.beta)?;
    }
    std::fs::create_dir_all(&a.out)?;
    let t0 = Instant::now();
    let opts = FitOptions {
        dump_dir: Some(a.out.clone()),
    };
    let outcome = fit(&mut scene, &dataset.views, &dataset.train, &dataset.heldout, &cfg, &opts, |row| {
        if let Some(p) = row.heldout_psnr {
            eprintln!(
                "iteration {:>6}  L_pho {:.4e}  held-out PSNR {p:.2} dB  {:.1} s",
                row.iteration,
                row.pho,
                t0.elapsed().as_secs_f64()
            );
        }
    })?;
    write_log_csv(&outcome.log, std::io::BufWriter::new(std::fs::File::create(a.out.join("log.csv"))?))?;
    save_scene(&a.out.join("scene.json"), &scene, &cfg.march, &cameras)?;
    match outcome.final_psnr {
        Some(p) => println!("held-out PSNR {p:.2} dB after {} iterations", cfg.iterations),
        None => println!("finished {} iterations", cfg.iterations),
    }
    Ok(())
}

fn run_gradcheck(a: GradcheckArgs) -> Result<bool> {
    let (scene, batch, cfg) = small_scene(a.m, a.rays, a.seed)?;
    let cfg = a.march.apply(cfg, Some(a.seed));
    let gc = GradcheckConfig {
        n_params: a.params,
        seed: a.seed,
        tolerance: a.tolerance,
        ..Default::default()
    };
    let weights = LossWeights {
        pho: 1.0,
        geo: 0.1,
        vol: 0.01,
        del: 0.01,
    };
    let report = gradcheck(&scene, &batch, &weights, &cfg, &gc)?;
    println!("{}", report.table());
    println!("{}", if report.passed() { "PASS" } else { "FAIL" });
    Ok(report.passed())
}

fn run_bench(a: BenchArgs) -> Result<()> {
    let march = a.march.apply(
        MarchConfig {
            step: 0.01,
            ..Default::default()
        },
        Some(a.seed),
    );
    println!("N_prim,build_ms,rays_per_sec");
    for &n in &a.sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed ^ n as u64);
        // primitives on a unit-cube shell sized so neighbors overlap a little
        let size = 1.5 / (n as f32).cbrt();
        let world: Vec<WorldTransform<f32>> = (0..n)
            .map(|_| {
                let t = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                WorldTransform::new(t, *rotation_from_axis_angle(axis).matrix(), Vec3::splat(size * rng.random_range(0.5f32..1.0)))
            })
            .collect();
        let mut builds = Vec::new();
        let mut geometry = None;
        for _ in 0..5 {
            let t0 = Instant::now();
            let g = FrameGeometry::from_world(world.clone())?;
            builds.push(t0.elapsed().as_secs_f64() * 1e3);
            geometry = Some(g);
        }
        builds.sort_by(f64::total_cmp);
        let geometry = geometry.expect("at least one build");
        let slab = PrimitiveSlab::constant(n, 2, Vec3::splat(0.5f32), 0.5);
        let view = SceneView::new(&slab, &geometry, WindowParams::default())?;
        let rays: Vec<Ray<f32>> = (0..a.rays)
            .map(|i| {
                let origin = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), -3.0);
                let aim = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
                Ray {
                    origin,
                    dir: (aim - origin).normalized(),
                    pixel: i as u32,
                }
            })
            .collect();
        let keys: Vec<u64> = (0..a.rays as u64).collect();
        let t0 = Instant::now();
        render_rays(&view, &rays, &keys, &march)?;
        let rps = a.rays as f64 / t0.elapsed().as_secs_f64();
        println!("{n},{:.4},{rps:.0}", builds[2]);
    }
    Ok(())
}

fn run_make_synthetic(a: SyntheticArgs) -> Result<()> {
    let cfg: SyntheticConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SyntheticConfig::default(),
    };
    let syn = make_synthetic(&cfg, a.seed)?;
    write_synthetic(&syn, &a.out)?;
    // re-render from what landed on disk
    let truth = load_scene(&a.out.join("truth.json"), 0)?;
    let dataset = load_dataset(&a.out.join("dataset.json"), 0)?;
    let geometry = truth.scene.geometry()?;
    let view = truth.scene.view(&geometry)?;
    let mut worst = f64::INFINITY;
    for v in &dataset.views {
        let img = composite(&render(&view, &v.camera, &truth.march, v.id)?, &v.background)?;
        worst = worst.min(psnr(img.mse(&v.target)?));
    }
    println!(
        "wrote {} views ({} held out) to {}; re-render PSNR {worst:.1} dB",
        syn.dataset.views.len(),
        syn.dataset.heldout.len(),
        a.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Render(a) => run_render(a).map(|_| true),
        Command::Fit(a) => run_fit(a).map(|_| true),
        Command::Gradcheck(a) => run_gradcheck(a),
        Command::Bench(a) => run_bench(a).map(|_| true),
        Command::MakeSynthetic(a) => run_make_synthetic(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error[gradcheck_failed]: analytic and numeric gradients disagree");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
