//! Hierarchical shifted-window attention classifier.
//!
//! Parameter names follow the timm layout (`patch_embed.*`,
//! `layers.{i}.blocks.{j}.*`, `layers.{i}.downsample.*`, `norm.*`,
//! `head.fc.*`) so converted timm checkpoints load directly.

use candle_core::{DType, Device, Tensor, D};
use serde::{Deserialize, Serialize};

use super::params::{Init, ParamStore};
use super::{FeatureHook, ImageClassifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwinConfig {
    pub img_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depths: Vec<usize>,
    pub num_heads: Vec<usize>,
    pub window_size: usize,
    pub mlp_ratio: usize,
}

impl SwinConfig {
    /// The large variant at 384² (patch 4, window 12), ~197M weights.
    pub fn large_384() -> Self {
        Self {
            img_size: 384,
            patch_size: 4,
            embed_dim: 192,
            depths: vec![2, 2, 18, 2],
            num_heads: vec![6, 12, 24, 48],
            window_size: 12,
            mlp_ratio: 4,
        }
    }

    /// A two-stage toy network for CPU experiments and tests.
    pub fn tiny(img_size: usize) -> Self {
        Self {
            img_size,
            patch_size: 4,
            embed_dim: 32,
            depths: vec![2, 2],
            num_heads: vec![2, 4],
            window_size: 8,
            mlp_ratio: 2,
        }
    }

    pub fn num_features(&self) -> usize {
        self.embed_dim << (self.depths.len() - 1)
    }

    /// Token-grid side length of stage `i`.
    pub fn stage_resolution(&self, i: usize) -> usize {
        (self.img_size / self.patch_size) >> i
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::config(format!("swin: {m}")));
        if self.depths.is_empty() || self.depths.len() != self.num_heads.len() {
            return err("depths and num_heads must be non-empty and equally long".into());
        }
        if self.patch_size == 0 || self.img_size % self.patch_size != 0 {
            return err(format!("img_size {} not divisible by patch {}", self.img_size, self.patch_size));
        }
        for i in 0..self.depths.len() {
            let dim = self.embed_dim << i;
            let res = self.stage_resolution(i);
            if i > 0 && ((self.img_size / self.patch_size) >> (i - 1)) % 2 != 0 {
                return err(format!("stage {i} cannot halve an odd grid"));
            }
            if res == 0 {
                return err(format!("stage {i} has an empty token grid"));
            }
            if dim % self.num_heads[i] != 0 {
                return err(format!("stage {i}: dim {dim} not divisible by {} heads", self.num_heads[i]));
            }
            let win = self.window_size.min(res);
            if res % win != 0 {
                return err(format!("stage {i}: grid {res} not divisible by window {win}"));
            }
        }
        Ok(())
    }
}

struct Linear {
    weight: Tensor,
    bias: Option<Tensor>,
}

impl Linear {
    fn new(p: &ParamStore, name: &str, in_dim: usize, out_dim: usize, bias: bool) -> Result<Self> {
        Ok(Self {
            weight: p.get(&format!("{name}.weight"), &[out_dim, in_dim], Init::TruncNormal(0.02))?,
            bias: if bias {
                Some(p.get(&format!("{name}.bias"), &[out_dim], Init::Zeros)?)
            } else {
                None
            },
        })
    }

    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let y = x.broadcast_matmul(&self.weight.t()?)?;
        match &self.bias {
            Some(b) => y.broadcast_add(b),
            None => Ok(y),
        }
    }
}

/// Layer norm over the last dim, built from differentiable primitives.
struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
}

impl LayerNorm {
    fn new(p: &ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            weight: p.get(&format!("{name}.weight"), &[dim], Init::Ones)?,
            bias: p.get(&format!("{name}.bias"), &[dim], Init::Zeros)?,
        })
    }

    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + 1e-5)?.sqrt()?)?;
        normed.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)
    }
}

struct WindowAttention {
    qkv: Linear,
    proj: Linear,
    /// `[heads, W², W²]`, gathered once from the bias table.
    bias_table: Tensor,
    bias_index: Tensor,
    heads: usize,
    window: usize,
    scale: f64,
}

impl WindowAttention {
    fn new(p: &ParamStore, name: &str, dim: usize, heads: usize, window: usize) -> Result<Self> {
        let table_len = (2 * window - 1) * (2 * window - 1);
        let bias_table = p.get(
            &format!("{name}.relative_position_bias_table"),
            &[table_len, heads],
            Init::TruncNormal(0.02),
        )?;
        Ok(Self {
            qkv: Linear::new(p, &format!("{name}.qkv"), dim, 3 * dim, true)?,
            proj: Linear::new(p, &format!("{name}.proj"), dim, dim, true)?,
            bias_table,
            bias_index: relative_position_index(window, p.device())?,
            heads,
            window,
            scale: ((dim / heads) as f64).powf(-0.5),
        })
    }

    /// `x`: `[B·nW, N, C]`; `mask`: `[nW, N, N]`.
    fn forward(&self, x: &Tensor, mask: Option<&Tensor>) -> candle_core::Result<Tensor> {
        let (bw, n, c) = x.dims3()?;
        let hd = c / self.heads;
        let qkv = self
            .qkv
            .forward(x)?
            .reshape((bw, n, 3, self.heads, hd))?
            .permute((2, 0, 3, 1, 4))?;
        let q = (qkv.get(0)?.contiguous()? * self.scale)?;
        let k = qkv.get(1)?.contiguous()?;
        let v = qkv.get(2)?.contiguous()?;
        let mut attn = q.matmul(&k.t()?.contiguous()?)?;
        let ww = self.window * self.window;
        let bias = self
            .bias_table
            .index_select(&self.bias_index, 0)?
            .reshape((ww, ww, self.heads))?
            .permute((2, 0, 1))?
            .contiguous()?;
        attn = attn.broadcast_add(&bias.unsqueeze(0)?)?;
        if let Some(mask) = mask {
            let nw = mask.dim(0)?;
            attn = attn
                .reshape((bw / nw, nw, self.heads, n, n))?
                .broadcast_add(&mask.unsqueeze(1)?.unsqueeze(0)?)?
                .reshape((bw, self.heads, n, n))?;
        }
        let attn = candle_nn::ops::softmax(&attn, D::Minus1)?;
        let out = attn.matmul(&v)?.transpose(1, 2)?.reshape((bw, n, c))?;
        self.proj.forward(&out)
    }
}

fn relative_position_index(window: usize, device: &Device) -> Result<Tensor> {
    let w = window as i64;
    let coords: Vec<(i64, i64)> = (0..w).flat_map(|y| (0..w).map(move |x| (y, x))).collect();
    let mut index = Vec::with_capacity(coords.len() * coords.len());
    for &(y1, x1) in &coords {
        for &(y2, x2) in &coords {
            let dy = y1 - y2 + w - 1;
            let dx = x1 - x2 + w - 1;
            index.push((dy * (2 * w - 1) + dx) as u32);
        }
    }
    Ok(Tensor::from_vec(index, coords.len() * coords.len(), device)?)
}

struct Block {
    norm1: LayerNorm,
    attn: WindowAttention,
    norm2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
    window: usize,
    shift: usize,
    mask: Option<Tensor>,
}

impl Block {
    fn new(p: &ParamStore, name: &str, dim: usize, heads: usize, res: usize, cfg: &SwinConfig, shifted: bool) -> Result<Self> {
        let window = cfg.window_size.min(res);
        let shift = if shifted && res > cfg.window_size { window / 2 } else { 0 };
        let hidden = dim * cfg.mlp_ratio;
        Ok(Self {
            norm1: LayerNorm::new(p, &format!("{name}.norm1"), dim)?,
            attn: WindowAttention::new(p, &format!("{name}.attn"), dim, heads, window)?,
            norm2: LayerNorm::new(p, &format!("{name}.norm2"), dim)?,
            fc1: Linear::new(p, &format!("{name}.mlp.fc1"), dim, hidden, true)?,
            fc2: Linear::new(p, &format!("{name}.mlp.fc2"), hidden, dim, true)?,
            window,
            shift,
            mask: if shift > 0 {
                Some(shift_mask(res, window, shift, p.device())?)
            } else {
                None
            },
        })
    }

    /// `x`: `[B, H, W, C]`.
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let (b, h, w, c) = x.dims4()?;
        let ws = self.window;
        let mut y = self.norm1.forward(x)?;
        if self.shift > 0 {
            y = y.roll(-(self.shift as i32), 1)?.roll(-(self.shift as i32), 2)?;
        }
        let windows = y
            .reshape(&[b, h / ws, ws, w / ws, ws, c][..])?
            .permute([0, 1, 3, 2, 4, 5])?
            .reshape((b * (h / ws) * (w / ws), ws * ws, c))?;
        let attended = self.attn.forward(&windows, self.mask.as_ref())?;
        let mut y = attended
            .reshape(&[b, h / ws, w / ws, ws, ws, c][..])?
            .permute([0, 1, 3, 2, 4, 5])?
            .reshape((b, h, w, c))?;
        if self.shift > 0 {
            y = y.roll(self.shift as i32, 1)?.roll(self.shift as i32, 2)?;
        }
        let x = (x + y)?;
        let mlp = self
            .fc2
            .forward(&self.fc1.forward(&self.norm2.forward(&x)?)?.gelu_erf()?)?;
        x + mlp
    }
}

/// Additive attention mask keeping shifted windows from mixing regions that
/// were not adjacent before the cyclic shift. `[nW, W², W²]`.
fn shift_mask(res: usize, window: usize, shift: usize, device: &Device) -> Result<Tensor> {
    let bands = |i: usize| -> usize {
        if i < res - window {
            0
        } else if i < res - shift {
            1
        } else {
            2
        }
    };
    let region = |y: usize, x: usize| bands(y) * 3 + bands(x);
    let per_side = res / window;
    let ww = window * window;
    let mut mask = Vec::with_capacity(per_side * per_side * ww * ww);
    for wy in 0..per_side {
        for wx in 0..per_side {
            let ids: Vec<usize> = (0..ww)
                .map(|i| region(wy * window + i / window, wx * window + i % window))
                .collect();
            for &a in &ids {
                for &b in &ids {
                    mask.push(if a == b { 0f32 } else { -100.0 });
                }
            }
        }
    }
    Ok(Tensor::from_vec(mask, (per_side * per_side, ww, ww), device)?)
}

struct PatchMerging {
    norm: LayerNorm,
    reduction: Linear,
}

impl PatchMerging {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let (b, h, w, c) = x.dims4()?;
        let merged = x
            .reshape(&[b, h / 2, 2, w / 2, 2, c][..])?
            .permute([0, 1, 3, 4, 2, 5])?
            .reshape((b, h / 2, w / 2, 4 * c))?;
        self.reduction.forward(&self.norm.forward(&merged)?)
    }
}

struct Stage {
    downsample: Option<PatchMerging>,
    blocks: Vec<Block>,
}

pub struct SwinClassifier {
    cfg: SwinConfig,
    num_classes: usize,
    patch_proj: Linear,
    patch_norm: LayerNorm,
    stages: Vec<Stage>,
    norm: LayerNorm,
    head: Linear,
}

impl SwinClassifier {
    pub fn new(cfg: &SwinConfig, num_classes: usize, p: &ParamStore) -> Result<Self> {
        cfg.validate()?;
        if num_classes == 0 {
            return Err(Error::config("classifier needs at least one class"));
        }
        let patch_in = 3 * cfg.patch_size * cfg.patch_size;
        // The patch projection is a stride-`patch` convolution; stored in
        // conv layout and applied as a matmul over flattened patches.
        let conv_w = p.get(
            "patch_embed.proj.weight",
            &[cfg.embed_dim, 3, cfg.patch_size, cfg.patch_size],
            Init::TruncNormal(0.02),
        )?;
        let patch_proj = Linear {
            weight: conv_w.reshape((cfg.embed_dim, patch_in))?,
            bias: Some(p.get("patch_embed.proj.bias", &[cfg.embed_dim], Init::Zeros)?),
        };
        let patch_norm = LayerNorm::new(p, "patch_embed.norm", cfg.embed_dim)?;
        let mut stages = Vec::with_capacity(cfg.depths.len());
        for (i, (&depth, &heads)) in cfg.depths.iter().zip(&cfg.num_heads).enumerate() {
            let dim = cfg.embed_dim << i;
            let res = cfg.stage_resolution(i);
            let downsample = if i > 0 {
                let in_dim = dim / 2;
                Some(PatchMerging {
                    norm: LayerNorm::new(p, &format!("layers.{i}.downsample.norm"), 4 * in_dim)?,
                    reduction: Linear::new(p, &format!("layers.{i}.downsample.reduction"), 4 * in_dim, dim, false)?,
                })
            } else {
                None
            };
            let blocks = (0..depth)
                .map(|j| Block::new(p, &format!("layers.{i}.blocks.{j}"), dim, heads, res, cfg, j % 2 == 1))
                .collect::<Result<Vec<_>>>()?;
            stages.push(Stage { downsample, blocks });
        }
        let nf = cfg.num_features();
        Ok(Self {
            cfg: cfg.clone(),
            num_classes,
            patch_proj,
            patch_norm,
            stages,
            norm: LayerNorm::new(p, "norm", nf)?,
            head: Linear::new(p, "head.fc", nf, num_classes, true)?,
        })
    }

    pub fn config(&self) -> &SwinConfig {
        &self.cfg
    }

    fn embed(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        let ps = self.cfg.patch_size;
        let (hp, wp) = (h / ps, w / ps);
        let patches = x
            .reshape(&[b, c, hp, ps, wp, ps][..])?
            .permute([0, 2, 4, 1, 3, 5])?
            .reshape((b, hp, wp, c * ps * ps))?;
        self.patch_norm.forward(&self.patch_proj.forward(&patches)?)
    }
}

impl FeatureHook for SwinClassifier {
    fn features(&self, pixels: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = pixels.dims4()?;
        let size = self.cfg.img_size;
        if c != 3 || h != size || w != size {
            return Err(Error::contract(format!(
                "expected [B, 3, {size}, {size}] input, got {:?}",
                pixels.dims()
            )));
        }
        let mut x = self.embed(&pixels.to_dtype(DType::F32)?)?;
        for stage in &self.stages {
            if let Some(ds) = &stage.downsample {
                x = ds.forward(&x)?;
            }
            for block in &stage.blocks {
                x = block.forward(&x)?;
            }
        }
        Ok(self.norm.forward(&x)?)
    }

    fn head(&self, features: &Tensor) -> Result<Tensor> {
        let pooled = features.mean(2)?.mean(1)?;
        Ok(self.head.forward(&pooled)?)
    }
}

impl ImageClassifier for SwinClassifier {
    fn input_resolution(&self) -> usize {
        self.cfg.img_size
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn logits(&self, pixels: &Tensor) -> Result<Tensor> {
        let f = self.features(pixels)?;
        self.head(&f)
    }

    fn gradient_hook(&self) -> Option<&dyn FeatureHook> {
        Some(self)
    }
}
