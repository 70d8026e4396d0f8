//! Transformer denoiser over (view, frame) tokens.
//!
//! Each token carries one frame of one view. Its input features are the
//! noisy rows of that frame, the clean primary-view rows (zeros on other
//! views and during single-view pretraining) and a primary-view flag. A
//! learned projection of a sinusoidal timestep embedding, a per-view camera
//! embedding and a fixed sinusoidal frame encoding are added before the
//! blocks.
//!
//! Block (pre-norm, residual):
//!
//! ```text
//! temporal self-attention   within one (sample, view)
//! view self-attention       within one (sample, frame)      multi-view only
//! cross-attention           (sample, view) → its pointmap   pointmaps only
//! feed-forward              width → ffn → width, GELU
//! ```
//!
//! The model predicts the clean sample directly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{add_assign, gelu, gelu_backward, join, sinusoid, Attention, AttentionCache, Groups, LayerNorm, LayerNormCache, Linear, Param, Visitor};
use super::schedule::{ScheduleKind, DEFAULT_STEPS};
use super::tensor::MotionLayout;
use crate::error::{Error, Result};
use crate::geometry::{Camera, Pointmap, DEFAULT_GRID};
use crate::scalar::Real;

/// Camera descriptor length: 4 intrinsics, 9 rotation entries, 3 center.
pub const CAMERA_FEATURES: usize = 16;
/// Pointmap cell descriptor: clamped ground x, y and a validity flag.
pub const CELL_FEATURES: usize = 3;
const POINTMAP_CLAMP: f64 = 10.0;
const POINTMAP_SCALE: f64 = 5.0;
const CENTER_SCALE: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    SingleView,
    MultiView,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub width: usize,
    pub blocks: usize,
    pub heads: usize,
    pub ffn: usize,
    pub layout: MotionLayout,
    pub mode: ModelMode,
    pub pointmaps: bool,
    /// Pointmap cells per side.
    pub grid: usize,
    /// Pointmap tokens per side after average pooling.
    pub pointmap_tokens: usize,
    pub steps: usize,
    pub schedule: ScheduleKind,
}

impl ModelConfig {
    pub fn new(layout: MotionLayout, mode: ModelMode, pointmaps: bool) -> Self {
        ModelConfig {
            width: 64,
            blocks: 4,
            heads: 4,
            ffn: 128,
            layout,
            mode,
            pointmaps,
            grid: DEFAULT_GRID,
            pointmap_tokens: 4,
            steps: DEFAULT_STEPS,
            schedule: ScheduleKind::Cosine,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("model config: {m}")));
        if self.width == 0 || !self.width.is_multiple_of(2) || self.heads == 0 || !self.width.is_multiple_of(self.heads) {
            return bad("width must be even and divisible by heads");
        }
        if self.blocks == 0 || self.ffn == 0 {
            return bad("blocks and ffn must be positive");
        }
        if self.steps < 2 {
            return Err(Error::BadStepCount(self.steps));
        }
        if self.pointmaps {
            if self.mode == ModelMode::SingleView {
                return bad("pointmap cross-attention requires multi-view mode");
            }
            if self.pointmap_tokens == 0 || !self.grid.is_multiple_of(self.pointmap_tokens) {
                return bad("pointmap grid must be a multiple of the token side");
            }
        }
        Ok(())
    }

    pub fn features(&self) -> usize {
        self.layout.features()
    }

    pub fn input_features(&self) -> usize {
        2 * self.features() + 1
    }

    /// Same architecture in multi-view mode, as used for fine-tuning.
    pub fn to_multi_view(&self, pointmaps: bool) -> Self {
        ModelConfig {
            mode: ModelMode::MultiView,
            pointmaps,
            ..self.clone()
        }
    }
}

/// One batch of model inputs. Tokens are ordered `(sample, view, frame)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput<T: Real> {
    pub batch: usize,
    pub views: usize,
    pub frames: usize,
    /// `tokens × input_features`.
    pub tokens: Vec<T>,
    /// Diffusion step per sample.
    pub steps: Vec<usize>,
    /// `(sample, view) × CAMERA_FEATURES`.
    pub cameras: Vec<T>,
    /// `(sample, view) × grid² × CELL_FEATURES`, required iff the model uses
    /// pointmaps.
    pub pointmaps: Option<Vec<T>>,
}

impl<T: Real> ModelInput<T> {
    pub fn token_count(&self) -> usize {
        self.batch * self.views * self.frames
    }
}

/// Writes the input features of one token.
pub fn token_features<T: Real>(out: &mut Vec<T>, noisy: &[T], primary: Option<&[T]>) {
    out.extend_from_slice(noisy);
    match primary {
        Some(m0) => {
            out.extend_from_slice(m0);
            out.push(T::one());
        }
        None => {
            out.extend(std::iter::repeat_n(T::zero(), noisy.len()));
            out.push(T::zero());
        }
    }
}

pub fn camera_features(cam: &Camera<f64>) -> [f64; CAMERA_FEATURES] {
    let (w, h) = (cam.image_w as f64, cam.image_h as f64);
    let c = cam.center() / CENTER_SCALE;
    let r = &cam.rotation;
    [
        cam.fx / w,
        cam.fy / h,
        cam.cx / w,
        cam.cy / h,
        r[(0, 0)],
        r[(0, 1)],
        r[(0, 2)],
        r[(1, 0)],
        r[(1, 1)],
        r[(1, 2)],
        r[(2, 0)],
        r[(2, 1)],
        r[(2, 2)],
        c.x,
        c.y,
        c.z,
    ]
}

pub fn pointmap_features(pm: &Pointmap<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(pm.points.len() * CELL_FEATURES);
    for (p, &valid) in pm.points.iter().zip(&pm.valid) {
        if valid {
            out.push(p.x.clamp(-POINTMAP_CLAMP, POINTMAP_CLAMP) / POINTMAP_SCALE);
            out.push(p.y.clamp(-POINTMAP_CLAMP, POINTMAP_CLAMP) / POINTMAP_SCALE);
            out.push(1.0);
        } else {
            out.extend_from_slice(&[0.0, 0.0, 0.0]);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
struct Block<T: Real> {
    temporal_ln: LayerNorm<T>,
    temporal: Attention<T>,
    view: Option<(LayerNorm<T>, Attention<T>)>,
    cross: Option<(LayerNorm<T>, Attention<T>)>,
    ffn_ln: LayerNorm<T>,
    ffn_in: Linear<T>,
    ffn_out: Linear<T>,
}

struct SubCache<T> {
    ln: LayerNormCache<T>,
    normed: Vec<T>,
    att: AttentionCache<T>,
}

struct BlockCache<T> {
    temporal: SubCache<T>,
    view: Option<SubCache<T>>,
    cross: Option<SubCache<T>>,
    ffn_ln: LayerNormCache<T>,
    ffn_normed: Vec<T>,
    ffn_hidden: Vec<T>,
    ffn_act: Vec<T>,
}

struct PointmapEncoder<T: Real> {
    cell: Linear<T>,
    pos: Param<T>,
}

struct PointmapCache<T> {
    cells: Vec<T>,
    pre: Vec<T>,
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardCache<T: Real> {
    batch: usize,
    views: usize,
    frames: usize,
    tokens: Vec<T>,
    time_in: Vec<T>,
    cam_in: Vec<T>,
    cam_hidden: Vec<T>,
    cam_act: Vec<T>,
    pointmap: Option<PointmapCache<T>>,
    pm_tokens: Vec<T>,
    groups: AllGroups,
    blocks: Vec<BlockCache<T>>,
    out_ln: LayerNormCache<T>,
    out_normed: Vec<T>,
}

struct AllGroups {
    temporal: Groups,
    view: Groups,
    cross: Groups,
}

pub struct DenoiserModel<T: Real> {
    pub config: ModelConfig,
    input: Linear<T>,
    time: Linear<T>,
    cam_in: Linear<T>,
    cam_out: Linear<T>,
    pointmap: Option<PointmapEncoder<T>>,
    blocks: Vec<Block<T>>,
    out_ln: LayerNorm<T>,
    out: Linear<T>,
}

impl<T: Real> Clone for PointmapEncoder<T> {
    fn clone(&self) -> Self {
        PointmapEncoder {
            cell: self.cell.clone(),
            pos: self.pos.clone(),
        }
    }
}

impl<T: Real> Clone for DenoiserModel<T> {
    fn clone(&self) -> Self {
        DenoiserModel {
            config: self.config.clone(),
            input: self.input.clone(),
            time: self.time.clone(),
            cam_in: self.cam_in.clone(),
            cam_out: self.cam_out.clone(),
            pointmap: self.pointmap.clone(),
            blocks: self.blocks.clone(),
            out_ln: self.out_ln.clone(),
            out: self.out.clone(),
        }
    }
}

fn build_groups(batch: usize, views: usize, frames: usize, pm_tokens: usize) -> AllGroups {
    let tok = |b: usize, v: usize, t: usize| (b * views + v) * frames + t;
    let mut temporal = Vec::with_capacity(batch * views);
    let mut cross_keys = Vec::with_capacity(batch * views);
    for b in 0..batch {
        for v in 0..views {
            temporal.push((0..frames).map(|t| tok(b, v, t)).collect::<Vec<_>>());
            let base = (b * views + v) * pm_tokens;
            cross_keys.push((base..base + pm_tokens).collect::<Vec<_>>());
        }
    }
    let mut view = Vec::with_capacity(batch * frames);
    for b in 0..batch {
        for t in 0..frames {
            view.push((0..views).map(|v| tok(b, v, t)).collect::<Vec<_>>());
        }
    }
    AllGroups {
        cross: Groups {
            queries: temporal.clone(),
            keys: cross_keys,
        },
        temporal: Groups::self_attention(temporal),
        view: Groups::self_attention(view),
    }
}

impl<T: Real> DenoiserModel<T> {
    /// Freshly initialized model.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.width;
        let multi = config.mode == ModelMode::MultiView;
        let input = Linear::new(config.input_features(), d, &mut rng);
        let time = Linear::new(d, d, &mut rng);
        let cam_in = Linear::new(CAMERA_FEATURES, d, &mut rng);
        let cam_out = Linear::new(d, d, &mut rng);
        let blocks = (0..config.blocks)
            .map(|_| Block {
                temporal_ln: LayerNorm::new(d),
                temporal: Attention::new(d, config.heads, &mut rng),
                view: multi.then(|| (LayerNorm::new(d), Attention::new(d, config.heads, &mut rng))),
                cross: config
                    .pointmaps
                    .then(|| (LayerNorm::new(d), Attention::new(d, config.heads, &mut rng))),
                ffn_ln: LayerNorm::new(d),
                ffn_in: Linear::new(d, config.ffn, &mut rng),
                ffn_out: Linear::new(config.ffn, d, &mut rng),
            })
            .collect();
        let pointmap = config.pointmaps.then(|| {
            let p = config.pointmap_tokens * config.pointmap_tokens;
            PointmapEncoder {
                cell: Linear::new(CELL_FEATURES, d, &mut rng),
                pos: Param::uniform(&[p, d], 0.1, &mut rng),
            }
        });
        let out_ln = LayerNorm::new(d);
        let out = Linear::new(d, config.features(), &mut rng);
        Ok(DenoiserModel {
            config,
            input,
            time,
            cam_in,
            cam_out,
            pointmap,
            blocks,
            out_ln,
            out,
        })
    }

    /// Multi-view model whose shared layers start from `pretrained`.
    ///
    /// Parameters present in both models are copied by name. The output
    /// projections of the new view and cross-attention layers start at zero,
    /// so those layers begin as identity residuals.
    pub fn from_pretrained(pretrained: &DenoiserModel<T>, config: ModelConfig, seed: u64) -> Result<Self> {
        let mut model = Self::new(config, seed)?;
        let same_arch = {
            let (a, b) = (&pretrained.config, &model.config);
            (a.width, a.blocks, a.heads, a.ffn, a.layout) == (b.width, b.blocks, b.heads, b.ffn, b.layout)
        };
        if !same_arch {
            return Err(Error::Checkpoint("pretrained model architecture differs from the fine-tuning config".into()));
        }
        let mut source = pretrained.clone();
        let mut shared = std::collections::HashMap::new();
        source.visit(&mut |name, p| {
            shared.insert(name.to_string(), p.value.clone());
        });
        model.visit(&mut |name, p| {
            if let Some(v) = shared.get(name) {
                if v.len() == p.len() {
                    p.value.clone_from(v);
                }
            } else if name.ends_with("view.o.w") || name.ends_with("view.o.b") || name.ends_with("cross.o.w") || name.ends_with("cross.o.b") {
                p.value.fill(T::zero());
            }
        });
        Ok(model)
    }

    pub fn visit(&mut self, f: &mut Visitor<'_, T>) {
        self.input.visit("input", f);
        self.time.visit("time", f);
        self.cam_in.visit("camera.0", f);
        self.cam_out.visit("camera.1", f);
        if let Some(pm) = &mut self.pointmap {
            pm.cell.visit("pointmap.cell", f);
            f("pointmap.pos", &mut pm.pos);
        }
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = format!("blocks.{i}");
            b.temporal_ln.visit(&join(&p, "temporal_ln"), f);
            b.temporal.visit(&join(&p, "temporal"), f);
            if let Some((ln, att)) = &mut b.view {
                ln.visit(&join(&p, "view_ln"), f);
                att.visit(&join(&p, "view"), f);
            }
            if let Some((ln, att)) = &mut b.cross {
                ln.visit(&join(&p, "cross_ln"), f);
                att.visit(&join(&p, "cross"), f);
            }
            b.ffn_ln.visit(&join(&p, "ffn_ln"), f);
            b.ffn_in.visit(&join(&p, "ffn.0"), f);
            b.ffn_out.visit(&join(&p, "ffn.1"), f);
        }
        self.out_ln.visit("out_ln", f);
        self.out.visit("out", f);
    }

    pub fn parameter_count(&mut self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, p| n += p.len());
        n
    }

    pub fn zero_grad(&mut self) {
        self.visit(&mut |_, p| p.grad.fill(T::zero()));
    }

    pub fn has_view_attention(&self) -> bool {
        self.blocks.iter().all(|b| b.view.is_some())
    }

    fn check_input(&self, x: &ModelInput<T>) -> Result<()> {
        let c = &self.config;
        if x.views > 1 && c.mode == ModelMode::SingleView {
            return Err(Error::ModeMismatch(format!(
                "single-view model given {} views",
                x.views
            )));
        }
        let n = x.token_count();
        if x.tokens.len() != n * c.input_features()
            || x.steps.len() != x.batch
            || x.cameras.len() != x.batch * x.views * CAMERA_FEATURES
        {
            return Err(Error::ShapeMismatch("model input buffers".into()));
        }
        if x.steps.iter().any(|&s| s >= c.steps) {
            return Err(Error::InvalidArgument("diffusion step out of range".into()));
        }
        match (&x.pointmaps, c.pointmaps) {
            (Some(pm), true) if pm.len() == x.batch * x.views * c.grid * c.grid * CELL_FEATURES => Ok(()),
            (None, false) => Ok(()),
            (Some(_), false) | (None, true) => Err(Error::ModeMismatch(
                "pointmap tokens must be supplied exactly when the model uses them".into(),
            )),
            _ => Err(Error::ShapeMismatch("pointmap buffer".into())),
        }
    }

    /// Predicted clean rows, `tokens × features`.
    pub fn forward(&self, x: &ModelInput<T>) -> Result<(Vec<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let c = &self.config;
        let d = c.width;
        let (batch, views, frames) = (x.batch, x.views, x.frames);
        let n = x.token_count();

        let mut h = self.input.forward(&x.tokens, n);

        let mut time_in = Vec::with_capacity(batch * d);
        for &s in &x.steps {
            time_in.extend(sinusoid(s as f64, d).into_iter().map(T::of));
        }
        let temb = self.time.forward(&time_in, batch);

        let cam_hidden = self.cam_in.forward(&x.cameras, batch * views);
        let cam_act = gelu(&cam_hidden);
        let cemb = self.cam_out.forward(&cam_act, batch * views);

        let frame_pe: Vec<Vec<T>> = (0..frames)
            .map(|t| sinusoid(t as f64, d).into_iter().map(T::of).collect())
            .collect();
        for b in 0..batch {
            for v in 0..views {
                for t in 0..frames {
                    let row = &mut h[((b * views + v) * frames + t) * d..][..d];
                    add_assign(row, &temb[b * d..(b + 1) * d]);
                    add_assign(row, &cemb[(b * views + v) * d..(b * views + v + 1) * d]);
                    add_assign(row, &frame_pe[t]);
                }
            }
        }

        let p_side = c.pointmap_tokens;
        let p_tokens = p_side * p_side;
        let (pm_cache, pm_tokens) = match (&self.pointmap, &x.pointmaps) {
            (Some(enc), Some(cells)) => {
                let g = c.grid;
                let pre = enc.cell.forward(cells, batch * views * g * g);
                let act = gelu(&pre);
                let k = g / p_side;
                let inv = T::of(1.0 / (k * k) as f64);
                let mut tokens = vec![T::zero(); batch * views * p_tokens * d];
                for bv in 0..batch * views {
                    for row in 0..g {
                        for col in 0..g {
                            let p = (row / k) * p_side + col / k;
                            let src = &act[((bv * g + row) * g + col) * d..][..d];
                            let dst = &mut tokens[(bv * p_tokens + p) * d..][..d];
                            for (a, &s) in dst.iter_mut().zip(src) {
                                *a += s * inv;
                            }
                        }
                    }
                    for p in 0..p_tokens {
                        add_assign(&mut tokens[(bv * p_tokens + p) * d..][..d], &enc.pos.value[p * d..(p + 1) * d]);
                    }
                }
                (
                    Some(PointmapCache {
                        cells: cells.clone(),
                        pre,
                    }),
                    tokens,
                )
            }
            _ => (None, Vec::new()),
        };

        let groups = build_groups(batch, views, frames, p_tokens);
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let sub = |ln: &LayerNorm<T>, att: &Attention<T>, h: &mut Vec<T>, kv: Option<&[T]>, g: &Groups| {
                let (normed, lnc) = ln.forward(h);
                let (o, ac) = att.forward(&normed, kv.unwrap_or(&normed), g);
                add_assign(h, &o);
                SubCache {
                    ln: lnc,
                    normed,
                    att: ac,
                }
            };
            let temporal = sub(&blk.temporal_ln, &blk.temporal, &mut h, None, &groups.temporal);
            let view = match (&blk.view, views > 1) {
                (Some((ln, att)), true) => Some(sub(ln, att, &mut h, None, &groups.view)),
                _ => None,
            };
            let cross = blk
                .cross
                .as_ref()
                .map(|(ln, att)| sub(ln, att, &mut h, Some(&pm_tokens), &groups.cross));
            let (ffn_normed, ffn_ln) = blk.ffn_ln.forward(&h);
            let ffn_hidden = blk.ffn_in.forward(&ffn_normed, n);
            let ffn_act = gelu(&ffn_hidden);
            add_assign(&mut h, &blk.ffn_out.forward(&ffn_act, n));
            block_caches.push(BlockCache {
                temporal,
                view,
                cross,
                ffn_ln,
                ffn_normed,
                ffn_hidden,
                ffn_act,
            });
        }
        let (out_normed, out_ln) = self.out_ln.forward(&h);
        let y = self.out.forward(&out_normed, n);
        Ok((
            y,
            ForwardCache {
                batch,
                views,
                frames,
                tokens: x.tokens.clone(),
                time_in,
                cam_in: x.cameras.clone(),
                cam_hidden,
                cam_act,
                pointmap: pm_cache,
                pm_tokens,
                groups,
                blocks: block_caches,
                out_ln,
                out_normed,
            },
        ))
    }

    pub fn predict(&self, x: &ModelInput<T>) -> Result<Vec<T>> {
        Ok(self.forward(x)?.0)
    }

    /// Accumulates parameter gradients of `Σ dy · y`.
    pub fn backward(&mut self, cache: &ForwardCache<T>, dy: &[T]) {
        let d = self.config.width;
        let (batch, views, frames) = (cache.batch, cache.views, cache.frames);
        let n = batch * views * frames;

        let d_normed = self.out.backward(&cache.out_normed, dy, n);
        let mut dh = self.out_ln.backward(&cache.out_ln, &d_normed);
        let mut d_pm = vec![T::zero(); cache.pm_tokens.len()];

        for (blk, bc) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            let d_act = blk.ffn_out.backward(&bc.ffn_act, &dh, n);
            let d_hidden = gelu_backward(&bc.ffn_hidden, &d_act);
            let d_normed = blk.ffn_in.backward(&bc.ffn_normed, &d_hidden, n);
            add_assign(&mut dh, &blk.ffn_ln.backward(&bc.ffn_ln, &d_normed));

            if let (Some((ln, att)), Some(sc)) = (&mut blk.cross, &bc.cross) {
                let (dq, dkv) = att.backward(&sc.att, &sc.normed, &cache.pm_tokens, &cache.groups.cross, &dh);
                add_assign(&mut d_pm, &dkv);
                add_assign(&mut dh, &ln.backward(&sc.ln, &dq));
            }
            if let (Some((ln, att)), Some(sc)) = (&mut blk.view, &bc.view) {
                let (mut dq, dkv) = att.backward(&sc.att, &sc.normed, &sc.normed, &cache.groups.view, &dh);
                add_assign(&mut dq, &dkv);
                add_assign(&mut dh, &ln.backward(&sc.ln, &dq));
            }
            let sc = &bc.temporal;
            let (mut dq, dkv) = blk
                .temporal
                .backward(&sc.att, &sc.normed, &sc.normed, &cache.groups.temporal, &dh);
            add_assign(&mut dq, &dkv);
            add_assign(&mut dh, &blk.temporal_ln.backward(&sc.ln, &dq));
        }

        // Embedding sums.
        let mut d_temb = vec![T::zero(); batch * d];
        let mut d_cemb = vec![T::zero(); batch * views * d];
        for b in 0..batch {
            for v in 0..views {
                for t in 0..frames {
                    let row = &dh[((b * views + v) * frames + t) * d..][..d];
                    add_assign(&mut d_temb[b * d..(b + 1) * d], row);
                    add_assign(&mut d_cemb[(b * views + v) * d..(b * views + v + 1) * d], row);
                }
            }
        }
        self.time.backward(&cache.time_in, &d_temb, batch);
        let d_cact = self.cam_out.backward(&cache.cam_act, &d_cemb, batch * views);
        let d_chid = gelu_backward(&cache.cam_hidden, &d_cact);
        self.cam_in.backward(&cache.cam_in, &d_chid, batch * views);
        self.input.backward(&cache.tokens, &dh, n);

        if let (Some(enc), Some(pc)) = (&mut self.pointmap, &cache.pointmap) {
            let c = &self.config;
            let (g, p_side) = (c.grid, c.pointmap_tokens);
            let p_tokens = p_side * p_side;
            let k = g / p_side;
            let inv = T::of(1.0 / (k * k) as f64);
            for bv in 0..batch * views {
                for p in 0..p_tokens {
                    add_assign(&mut enc.pos.grad[p * d..(p + 1) * d], &d_pm[(bv * p_tokens + p) * d..][..d]);
                }
            }
            let mut d_act = vec![T::zero(); pc.pre.len()];
            for bv in 0..batch * views {
                for row in 0..g {
                    for col in 0..g {
                        let p = (row / k) * p_side + col / k;
                        let src = &d_pm[(bv * p_tokens + p) * d..][..d];
                        let dst = &mut d_act[((bv * g + row) * g + col) * d..][..d];
                        for (a, &s) in dst.iter_mut().zip(src) {
                            *a = s * inv;
                        }
                    }
                }
            }
            let d_pre = gelu_backward(&pc.pre, &d_act);
            enc.cell.backward(&pc.cells, &d_pre, batch * views * g * g);
        }
    }

    /// Copy of the model in another scalar type.
    pub fn cast<U: Real>(&self) -> DenoiserModel<U> {
        let mut values = Vec::new();
        self.clone().visit(&mut |_, p| values.push(p.value.clone()));
        let mut out = DenoiserModel::<U>::new(self.config.clone(), 0).expect("config already validated");
        let mut it = values.into_iter();
        out.visit(&mut |_, p| {
            let v = it.next().expect("same architecture");
            p.value = v.iter().map(|x| U::of(x.to_f64_lossy())).collect();
        });
        out
    }
}
