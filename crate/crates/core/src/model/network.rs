//! ViT backbone with relative position bias and the attention-to-mask decoder.

use std::sync::Arc;

use rayon::prelude::*;

use super::config::ModelConfig;
use super::geometry::{bilinear_upsampler, patchify, relative_position_index};
use super::inference::{assemble_sample_logits, argmax_mask, DecoderOutput, DecoderLayerOutput};
use super::loss::{graph_atm_loss, loss_targets, LossTerms};
use super::params::{initialize, layout, AttnIds, Layout, LinearIds, NormIds, ParameterSet};
use super::ModelError;
use crate::autodiff::{BiasIndex, Graph, Resampler, Var};
use crate::dataset::{Gray, Mask, SegSample};
use crate::metrics::Segmenter;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Per-layer decoder outputs for one image: `(class logits C×1, mask logits C×HW)`.
pub type SampleDecoderOutput<T> = Vec<(Matrix<T>, Matrix<T>)>;

/// Gradient of one sample's loss, indexed like the parameter set.
pub type Gradients<T> = Vec<Option<Matrix<T>>>;

#[derive(Clone, Debug)]
pub struct SegModel<T: Scalar> {
    config: ModelConfig,
    layout: Layout,
    params: ParameterSet<T>,
    bias_index: Arc<BiasIndex>,
    upsampler: Arc<Resampler<T>>,
}

impl<T: Scalar> SegModel<T> {
    /// Fresh model with seeded initialization.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, specs) = layout(&config);
        let params = initialize(&specs, seed);
        Ok(Self::assemble(config, layout, params))
    }

    /// Wraps existing parameters; names and shapes must match the layout of `config`.
    pub fn from_parameters(config: ModelConfig, params: ParameterSet<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, specs) = layout(&config);
        if specs.len() != params.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} parameters, layout expects {}",
                params.len(),
                specs.len()
            )));
        }
        for (s, p) in specs.iter().zip(params.iter()) {
            if s.name != p.name || (s.rows, s.cols) != p.value.shape() {
                return Err(ModelError::ShapeMismatch(format!(
                    "{} {:?}, layout expects {} {:?}",
                    p.name,
                    p.value.shape(),
                    s.name,
                    (s.rows, s.cols)
                )));
            }
        }
        Ok(Self::assemble(config, layout, params))
    }

    fn assemble(config: ModelConfig, layout: Layout, params: ParameterSet<T>) -> Self {
        let grid = config.grid();
        Self {
            bias_index: Arc::new(relative_position_index(grid)),
            upsampler: Arc::new(bilinear_upsampler(grid, config.image_size)),
            config,
            layout,
            params,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &ParameterSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParameterSet<T> {
        self.params
    }

    /// Same weights in another scalar type.
    pub fn cast<U: Scalar>(&self) -> SegModel<U> {
        SegModel::assemble(self.config.clone(), self.layout.clone(), self.params.cast())
    }

    fn leaves<'p>(&'p self, g: &mut Graph<'p, T>) -> Vec<Var> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| g.param(i, &p.value))
            .collect()
    }

    fn check_image(&self, image: &Gray<T>) -> Result<(), ModelError> {
        let s = self.config.image_size;
        if image.dims() != (s, s) {
            return Err(ModelError::ShapeMismatch(format!(
                "image {:?}, model expects {s}x{s}",
                image.dims()
            )));
        }
        Ok(())
    }

    // ---- graph builders ------------------------------------------------

    fn g_linear(g: &mut Graph<'_, T>, pv: &[Var], x: Var, ids: LinearIds) -> Var {
        g.linear(x, pv[ids.w], pv[ids.b])
    }

    fn g_norm(g: &mut Graph<'_, T>, pv: &[Var], x: Var, ids: NormIds) -> Var {
        g.layer_norm(x, pv[ids.g], pv[ids.b])
    }

    #[allow(clippy::too_many_arguments)]
    fn g_attention(
        g: &mut Graph<'_, T>,
        pv: &[Var],
        query_src: Var,
        kv_src: Var,
        ids: AttnIds,
        heads: usize,
        bias: Option<(Var, Arc<BiasIndex>)>,
    ) -> Var {
        let q = Self::g_linear(g, pv, query_src, ids.q);
        let k = Self::g_linear(g, pv, kv_src, ids.k);
        let v = Self::g_linear(g, pv, kv_src, ids.v);
        let a = g.attention(q, k, v, heads, bias);
        Self::g_linear(g, pv, a, ids.out)
    }

    fn g_mlp(g: &mut Graph<'_, T>, pv: &[Var], x: Var, fc1: LinearIds, fc2: LinearIds) -> Var {
        let h = Self::g_linear(g, pv, x, fc1);
        let h = g.gelu(h);
        Self::g_linear(g, pv, h, fc2)
    }

    fn g_patch_embed(&self, g: &mut Graph<'_, T>, pv: &[Var], image: &Gray<T>) -> Var {
        let patches = g.constant(patchify(image, self.config.patch_size));
        Self::g_linear(g, pv, patches, self.layout.patch)
    }

    /// Pre-norm transformer blocks; returns the tapped block outputs.
    fn g_backbone(&self, g: &mut Graph<'_, T>, pv: &[Var], tokens: Var) -> Vec<Var> {
        let mut x = tokens;
        let mut taps = Vec::with_capacity(self.config.tap_layers.len());
        for (i, blk) in self.layout.blocks.iter().enumerate() {
            let h = Self::g_norm(g, pv, x, blk.norm1);
            let a = Self::g_attention(
                g,
                pv,
                h,
                h,
                blk.attn,
                self.config.num_heads,
                Some((pv[blk.rel_pos], self.bias_index.clone())),
            );
            x = g.add(x, a);
            let h = Self::g_norm(g, pv, x, blk.norm2);
            let m = Self::g_mlp(g, pv, h, blk.fc1, blk.fc2);
            x = g.add(x, m);
            if self.config.tap_layers.contains(&i) {
                taps.push(x);
            }
        }
        taps
    }

    /// Class queries cross-attend one tapped map per decoder layer (shallowest
    /// first). Each layer emits class logits (C×1) and upsampled mask logits
    /// (C×HW).
    fn g_decode(&self, g: &mut Graph<'_, T>, pv: &[Var], taps: &[Var]) -> Vec<(Var, Var)> {
        let heads = self.config.decoder_heads;
        let mut q = pv[self.layout.class_queries];
        let mut out = Vec::with_capacity(taps.len());
        for (ids, &tap) in self.layout.decoder.iter().zip(taps) {
            let mem = Self::g_linear(g, pv, tap, ids.input_proj);
            let mem = Self::g_norm(g, pv, mem, ids.input_norm);

            let h = Self::g_norm(g, pv, q, ids.self_norm);
            let sa = Self::g_attention(g, pv, h, h, ids.self_attn, heads, None);
            q = g.add(q, sa);
            let h = Self::g_norm(g, pv, q, ids.cross_norm);
            let ca = Self::g_attention(g, pv, h, mem, ids.cross_attn, heads, None);
            q = g.add(q, ca);
            let h = Self::g_norm(g, pv, q, ids.ffn_norm);
            let f = Self::g_mlp(g, pv, h, ids.fc1, ids.fc2);
            q = g.add(q, f);

            let qn = Self::g_norm(g, pv, q, ids.out_norm);
            let cls = Self::g_linear(g, pv, qn, self.layout.class_head);
            let pix = Self::g_linear(g, pv, mem, self.layout.mask_proj);
            let sim = query_pixel_similarity(g, qn, pix);
            let up = g.resample(sim, self.upsampler.clone());
            out.push((cls, up));
        }
        out
    }

    fn ensure_finite(g: &Graph<'_, T>, vars: &[Var], stage: &'static str) -> Result<(), ModelError> {
        if vars.iter().all(|&v| g.value(v).all_finite()) {
            Ok(())
        } else {
            Err(ModelError::NonFinite(stage))
        }
    }

    // ---- public forward API --------------------------------------------

    /// Linear projection of each non-overlapping patch: `N × embed_dim`.
    pub fn patch_embed(&self, image: &Gray<T>) -> Result<Matrix<T>, ModelError> {
        self.check_image(image)?;
        let mut g = Graph::inference();
        let pv = self.leaves(&mut g);
        let t = self.g_patch_embed(&mut g, &pv, image);
        Ok(g.value(t).clone())
    }

    /// Runs the blocks on a token matrix and returns the tapped outputs.
    pub fn backbone_forward(&self, tokens: &Matrix<T>) -> Result<Vec<Matrix<T>>, ModelError> {
        let expect = (self.config.num_tokens(), self.config.embed_dim);
        if tokens.shape() != expect {
            return Err(ModelError::ShapeMismatch(format!(
                "tokens {:?}, expected {expect:?}",
                tokens.shape()
            )));
        }
        let mut g = Graph::inference();
        let pv = self.leaves(&mut g);
        let x = g.constant(tokens.clone());
        let taps = self.g_backbone(&mut g, &pv, x);
        Self::ensure_finite(&g, &taps, "backbone")?;
        Ok(taps.iter().map(|&t| g.value(t).clone()).collect())
    }

    /// Decoder over already computed tapped feature maps.
    pub fn atm_decode(&self, features: &[Matrix<T>]) -> Result<SampleDecoderOutput<T>, ModelError> {
        if features.len() != self.config.decoder_layers {
            return Err(ModelError::ShapeMismatch(format!(
                "{} feature maps for {} decoder layers",
                features.len(),
                self.config.decoder_layers
            )));
        }
        let mut g = Graph::inference();
        let pv = self.leaves(&mut g);
        let taps: Vec<Var> = features.iter().map(|f| g.constant(f.clone())).collect();
        let layers = self.g_decode(&mut g, &pv, &taps);
        Ok(layers
            .iter()
            .map(|&(c, m)| (g.value(c).clone(), g.value(m).clone()))
            .collect())
    }

    /// Full forward pass for one image.
    pub fn forward_sample(&self, image: &Gray<T>) -> Result<SampleDecoderOutput<T>, ModelError> {
        self.check_image(image)?;
        let mut g = Graph::inference();
        let pv = self.leaves(&mut g);
        let tokens = self.g_patch_embed(&mut g, &pv, image);
        let taps = self.g_backbone(&mut g, &pv, tokens);
        Self::ensure_finite(&g, &taps, "backbone")?;
        let layers = self.g_decode(&mut g, &pv, &taps);
        Ok(layers
            .iter()
            .map(|&(c, m)| (g.value(c).clone(), g.value(m).clone()))
            .collect())
    }

    /// Batched forward pass; samples never interact.
    pub fn forward(&self, images: &[Gray<T>]) -> Result<DecoderOutput<T>, ModelError> {
        let per_sample: Vec<SampleDecoderOutput<T>> = images
            .par_iter()
            .map(|im| self.forward_sample(im))
            .collect::<Result<_, _>>()?;
        Ok(DecoderOutput::from_samples(
            per_sample,
            self.config.num_classes,
            self.config.image_size,
        ))
    }

    /// Binary prediction for one image (argmax of the fused logits).
    pub fn segment_image(&self, image: &Gray<T>) -> Result<Mask, ModelError> {
        let out = self.forward_sample(image)?;
        let (cls, masks) = out.last().expect("at least one decoder layer");
        let logits = assemble_sample_logits(cls, masks);
        argmax_mask(&logits, self.config.image_size, self.config.image_size)
    }

    /// Composite loss and its gradient for one sample.
    pub fn loss_and_grads(&self, sample: &SegSample<T>) -> Result<(LossTerms<T>, Gradients<T>), ModelError> {
        self.loss_and_grads_scaled(sample, T::one())
    }

    /// As [`Self::loss_and_grads`], with gradients of `scale · loss`. The
    /// reported loss is unscaled.
    pub fn loss_and_grads_scaled(
        &self,
        sample: &SegSample<T>,
        scale: T,
    ) -> Result<(LossTerms<T>, Gradients<T>), ModelError> {
        self.check_image(&sample.image)?;
        let targets = loss_targets::<T>(&sample.mask, self.config.num_classes)?;
        let mut g = Graph::new();
        let pv = self.leaves(&mut g);
        let tokens = self.g_patch_embed(&mut g, &pv, &sample.image);
        let taps = self.g_backbone(&mut g, &pv, tokens);
        Self::ensure_finite(&g, &taps, "backbone")?;
        let layers = self.g_decode(&mut g, &pv, &taps);
        let (total, terms) = graph_atm_loss(&mut g, &layers, &targets);
        let loss = LossTerms::read(&g, total, &terms);
        if !loss.total.is_finite() {
            return Err(ModelError::NonFinite("loss"));
        }
        let mut grads: Gradients<T> = (0..self.params.len()).map(|_| None).collect();
        let seed = if scale == T::one() { total } else { g.scale(total, scale) };
        for (i, gr) in g.backward(seed) {
            match &mut grads[i] {
                Some(acc) => acc.axpy(T::one(), &gr),
                slot @ None => *slot = Some(gr),
            }
        }
        Ok((loss, grads))
    }

    /// Loss value only (no gradient bookkeeping).
    pub fn loss(&self, sample: &SegSample<T>) -> Result<LossTerms<T>, ModelError> {
        self.check_image(&sample.image)?;
        let targets = loss_targets::<T>(&sample.mask, self.config.num_classes)?;
        let mut g = Graph::inference();
        let pv = self.leaves(&mut g);
        let tokens = self.g_patch_embed(&mut g, &pv, &sample.image);
        let taps = self.g_backbone(&mut g, &pv, tokens);
        let layers = self.g_decode(&mut g, &pv, &taps);
        let (total, terms) = graph_atm_loss(&mut g, &layers, &targets);
        Ok(LossTerms::read(&g, total, &terms))
    }

    /// Mean loss and mean gradient over a batch. Per-sample work runs in
    /// parallel; the reduction is sequential in batch order.
    pub fn batch_loss_and_grads(
        &self,
        batch: &[&SegSample<T>],
    ) -> Result<(LossTerms<T>, Vec<Matrix<T>>), ModelError> {
        self.batch_loss_and_grads_scaled(batch, T::one())
    }

    pub fn batch_loss_and_grads_scaled(
        &self,
        batch: &[&SegSample<T>],
        scale: T,
    ) -> Result<(LossTerms<T>, Vec<Matrix<T>>), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::ShapeMismatch("empty batch".into()));
        }
        let results: Vec<(LossTerms<T>, Gradients<T>)> = batch
            .par_iter()
            .map(|s| self.loss_and_grads_scaled(s, scale))
            .collect::<Result<_, _>>()?;
        let inv = T::one() / T::from_usize(batch.len()).unwrap();
        let mut grads = self.params.zeros_like();
        let mut terms = Vec::with_capacity(results.len());
        for (t, gs) in results {
            for (acc, g) in grads.iter_mut().zip(gs) {
                if let Some(g) = g {
                    acc.axpy(inv, &g);
                }
            }
            terms.push(t);
        }
        Ok((LossTerms::mean(&terms), grads))
    }
}

/// Plain scaled dot product between updated queries (`C × D`) and per-pixel
/// features (`N × D`): `C × N`.
pub fn query_pixel_similarity<T: Scalar>(g: &mut Graph<'_, T>, queries: Var, pixels: Var) -> Var {
    let d = g.value(queries).cols();
    let s = g.matmul_nt(queries, pixels);
    g.scale(s, T::one() / T::from_usize(d).unwrap().sqrt())
}

impl<T: Scalar> Segmenter<T> for SegModel<T> {
    fn input_size(&self) -> (usize, usize) {
        (self.config.image_size, self.config.image_size)
    }

    fn segment(&self, sample: &SegSample<T>) -> Result<Mask, String> {
        self.segment_image(&sample.image).map_err(|e| e.to_string())
    }
}

impl<T: Scalar> DecoderOutput<T> {
    fn from_samples(per_sample: Vec<SampleDecoderOutput<T>>, classes: usize, size: usize) -> Self {
        let batch = per_sample.len();
        let layers = per_sample.first().map_or(0, Vec::len);
        let mut out: Vec<DecoderLayerOutput<T>> = (0..layers)
            .map(|_| DecoderLayerOutput {
                class_logits: Matrix::zeros(batch, classes),
                mask_logits: Vec::with_capacity(batch),
            })
            .collect();
        for (b, sample) in per_sample.into_iter().enumerate() {
            for (l, (cls, mask)) in sample.into_iter().enumerate() {
                out[l].class_logits.row_mut(b).copy_from_slice(cls.data());
                out[l].mask_logits.push(mask);
            }
        }
        DecoderOutput {
            height: size,
            width: size,
            layers: out,
        }
    }
}
