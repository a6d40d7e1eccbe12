use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{ParamGroup, Scene};
use crate::error::{Error, Result};
use crate::image::{psnr, Image};
use crate::renderer::{composite, render, MarchConfig};

use super::adam::{adam_step, project, AdamConfig, AdamState};
use super::loss::LossWeights;
use super::objective::evaluate;
use super::sample::{sample_rays, View};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub iterations: usize,
    pub images_per_batch: usize,
    pub rays_per_image: usize,
    pub march: MarchConfig,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    /// Learning rates decay geometrically to this fraction of their initial
    /// value over the run; 1 keeps them constant.
    pub final_lr_ratio: f64,
    /// Held-out evaluation period in iterations; 0 evaluates only at the end.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            images_per_batch: 4,
            rays_per_image: 512,
            march: MarchConfig {
                step: 0.01,
                ..Default::default()
            },
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            final_lr_ratio: 1.0,
            eval_every: 500,
            seed: 0,
        }
    }
}

impl FitConfig {
    /// Settings used for the synthetic self-reconstruction scene.
    pub fn synthetic() -> Self {
        let mut adam = AdamConfig::default();
        for (g, lr) in [
            (ParamGroup::PayloadRgb, 2e-2),
            (ParamGroup::PayloadSigma, 3e-1),
            (ParamGroup::DeltaTranslation, 1e-3),
            (ParamGroup::DeltaRotation, 3e-3),
            (ParamGroup::DeltaScale, 1e-3),
            (ParamGroup::VertexOffset, 1e-4),
        ] {
            adam.group_lr.insert(g, lr);
        }
        Self {
            adam,
            final_lr_ratio: 0.05,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.march.validate()?;
        self.weights.validate()?;
        self.adam.validate()?;
        if self.images_per_batch == 0 || self.rays_per_image == 0 {
            return Err(Error::InvalidInput("empty ray batch".into()));
        }
        if !(self.final_lr_ratio > 0.0 && self.final_lr_ratio.is_finite()) {
            return Err(Error::InvalidInput("final_lr_ratio must be > 0".into()));
        }
        Ok(())
    }

    fn lr_scale(&self, iteration: usize) -> f64 {
        if self.iterations <= 1 {
            return 1.0;
        }
        self.final_lr_ratio.powf(iteration as f64 / (self.iterations - 1) as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub pho: f64,
    pub geo: f64,
    pub vol: f64,
    pub del: f64,
    pub heldout_psnr: Option<f64>,
}

impl LogRow {
    pub fn total(&self) -> f64 {
        self.pho + self.geo + self.vol + self.del
    }
}

pub const LOG_HEADER: &str = "iteration,L_pho,L_geo,L_vol,L_del,heldout_PSNR";

pub fn write_log_csv<W: Write>(rows: &[LogRow], mut w: W) -> Result<()> {
    writeln!(w, "{LOG_HEADER}")?;
    for r in rows {
        let p = r.heldout_psnr.map_or(String::new(), |p| format!("{p}"));
        writeln!(w, "{},{},{},{},{},{}", r.iteration, r.pho, r.geo, r.vol, r.del, p)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub log: Vec<LogRow>,
    /// Mean PSNR over held-out views after the last iteration.
    pub final_psnr: Option<f64>,
}

/// Composited render of `view` and its MSE against the target.
pub fn evaluate_view(scene: &Scene<f32>, view: &View, march: &MarchConfig) -> Result<(Image, f64)> {
    let geometry = scene.geometry()?;
    let v = scene.view(&geometry)?;
    let out = render(&v, &view.camera, march, view.id)?;
    let img = composite(&out, &view.background)?;
    let mse = img.mse(&view.target)?;
    Ok((img, mse))
}

fn heldout_psnr(scene: &Scene<f32>, views: &[View], heldout: &[usize], march: &MarchConfig) -> Result<Option<f64>> {
    if heldout.is_empty() {
        return Ok(None);
    }
    let mut sum = 0.0;
    for &i in heldout {
        sum += psnr(evaluate_view(scene, &views[i], march)?.1);
    }
    Ok(Some(sum / heldout.len() as f64))
}

/// Where a diverged run leaves its last finite state.
#[derive(Clone, Debug, Default)]
pub struct FitOptions {
    pub dump_dir: Option<PathBuf>,
}

fn dump_state(scene: &Scene<f32>, march: &MarchConfig, dir: Option<&Path>, iteration: usize) -> PathBuf {
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(std::env::temp_dir);
    let path = dir.join(format!("diverged_{iteration:06}.json"));
    // The divergence error is what the caller needs; a failed dump only
    // loses the debugging aid.
    let _ = std::fs::create_dir_all(&dir).map(|_| crate::io::save_scene(&path, scene, march, &[]));
    path
}

/// Runs `cfg.iterations` steps of {sample rays, rebuild geometry, forward,
/// losses, backward, Adam}. `progress` sees every log row as it is produced.
pub fn fit(
    scene: &mut Scene<f32>,
    views: &[View],
    train: &[usize],
    heldout: &[usize],
    cfg: &FitConfig,
    opts: &FitOptions,
    mut progress: impl FnMut(&LogRow),
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.len() < 2 && views.len() < 2 {
        return Err(Error::InvalidInput("fitting needs at least two cameras".into()));
    }
    for v in views {
        v.validate()?;
    }
    project(scene)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(cfg.adam.clone(), scene.params.len())?;
    let base_lr = cfg.adam.clone();
    let mut log = Vec::with_capacity(cfg.iterations);
    let mut last_good = scene.clone();

    for it in 0..cfg.iterations {
        let batch = sample_rays(views, train, cfg.images_per_batch.min(train.len()), cfg.rays_per_image, &mut rng)?;
        let mut march = cfg.march;
        march.seed = cfg.march.seed.wrapping_add(it as u64);
        let ev = evaluate(scene, &batch, &cfg.weights, &march, true)?;
        let grad = ev.grad.expect("gradient requested");
        if !ev.terms.is_finite() || !grad.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                dump: dump_state(&last_good, &cfg.march, opts.dump_dir.as_deref(), it),
            });
        }
        let s = cfg.lr_scale(it);
        adam.config.lr = base_lr.lr * s;
        for (g, lr) in &base_lr.group_lr {
            adam.config.group_lr.insert(*g, lr * s);
        }
        last_good.clone_from(scene);
        adam_step(scene, &grad, &mut adam)?;
        if !scene.params.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                dump: dump_state(&last_good, &cfg.march, opts.dump_dir.as_deref(), it),
            });
        }

        let last = it + 1 == cfg.iterations;
        let eval_now = last || (cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0);
        let row = LogRow {
            iteration: it,
            pho: ev.terms.pho,
            geo: ev.terms.geo,
            vol: ev.terms.vol,
            del: ev.terms.del,
            heldout_psnr: if eval_now { heldout_psnr(scene, views, heldout, &cfg.march)? } else { None },
        };
        progress(&row);
        log.push(row);
    }
    let final_psnr = match log.last() {
        Some(r) => r.heldout_psnr,
        None => heldout_psnr(scene, views, heldout, &cfg.march)?,
    };
    Ok(FitOutcome { log, final_psnr })
}
