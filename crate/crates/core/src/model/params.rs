//! Named parameter storage and the structural layout of the network.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    TruncNormal,
    Zeros,
    Ones,
}

/// Optimizer-facing metadata of one parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamGroup {
    /// 0 = patch embedding, `i + 1` = backbone block `i`, `depth + 1` = head.
    pub layer: usize,
    pub weight_decay: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Matrix<T>,
    pub group: ParamGroup,
}

/// Ordered, named parameters. Index order is the layout order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet<T> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Scalar> ParameterSet<T> {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn get(&self, index: usize) -> &Parameter<T> {
        &self.params[index]
    }

    pub fn value_mut(&mut self, index: usize) -> &mut Matrix<T> {
        &mut self.params[index].value
    }

    /// Mutable access to every value, in layout order.
    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Matrix<T>> {
        self.params.iter_mut().map(|p| &mut p.value)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter<T>> {
        self.index_of(name).map(|i| &self.params[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.all_finite())
    }

    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        ParameterSet {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    group: p.group,
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }

    /// Zero-filled tensors with the same shapes (gradient / moment buffers).
    pub fn zeros_like(&self) -> Vec<Matrix<T>> {
        self.params
            .iter()
            .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect()
    }

    /// An absolute positional table would show up under one of these names.
    pub fn has_absolute_position_table(&self) -> bool {
        self.params
            .iter()
            .any(|p| p.name.contains("pos_embed") || p.name.contains("absolute_pos"))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LinearIds {
    pub w: usize,
    pub b: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct NormIds {
    pub g: usize,
    pub b: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct AttnIds {
    pub q: LinearIds,
    pub k: LinearIds,
    pub v: LinearIds,
    pub out: LinearIds,
}

#[derive(Clone, Copy, Debug)]
pub struct BlockIds {
    pub norm1: NormIds,
    pub attn: AttnIds,
    pub rel_pos: usize,
    pub norm2: NormIds,
    pub fc1: LinearIds,
    pub fc2: LinearIds,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderLayerIds {
    pub input_proj: LinearIds,
    pub input_norm: NormIds,
    pub self_norm: NormIds,
    pub self_attn: AttnIds,
    pub cross_norm: NormIds,
    pub cross_attn: AttnIds,
    pub ffn_norm: NormIds,
    pub fc1: LinearIds,
    pub fc2: LinearIds,
    pub out_norm: NormIds,
}

/// Parameter indices of every learnable piece.
#[derive(Clone, Debug)]
pub struct Layout {
    pub patch: LinearIds,
    pub blocks: Vec<BlockIds>,
    pub class_queries: usize,
    pub decoder: Vec<DecoderLayerIds>,
    pub class_head: LinearIds,
    pub mask_proj: LinearIds,
}

/// Expected name, shape, grouping and initializer of every parameter.
pub struct Spec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub group: ParamGroup,
    pub init: Init,
}

struct Builder {
    specs: Vec<Spec>,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize, group: ParamGroup, init: Init) -> usize {
        self.specs.push(Spec {
            name,
            rows,
            cols,
            group,
            init,
        });
        self.specs.len() - 1
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize, layer: usize) -> LinearIds {
        LinearIds {
            w: self.add(
                format!("{name}.weight"),
                fan_in,
                fan_out,
                ParamGroup {
                    layer,
                    weight_decay: true,
                },
                Init::TruncNormal,
            ),
            b: self.add(
                format!("{name}.bias"),
                1,
                fan_out,
                ParamGroup {
                    layer,
                    weight_decay: false,
                },
                Init::Zeros,
            ),
        }
    }

    fn norm(&mut self, name: &str, dim: usize, layer: usize) -> NormIds {
        let group = ParamGroup {
            layer,
            weight_decay: false,
        };
        NormIds {
            g: self.add(format!("{name}.weight"), 1, dim, group, Init::Ones),
            b: self.add(format!("{name}.bias"), 1, dim, group, Init::Zeros),
        }
    }

    fn attn(&mut self, name: &str, dim: usize, layer: usize) -> AttnIds {
        AttnIds {
            q: self.linear(&format!("{name}.q"), dim, dim, layer),
            k: self.linear(&format!("{name}.k"), dim, dim, layer),
            v: self.linear(&format!("{name}.v"), dim, dim, layer),
            out: self.linear(&format!("{name}.out"), dim, dim, layer),
        }
    }
}

/// Builds the layout for `cfg` together with the parameter specs.
pub fn layout(cfg: &ModelConfig) -> (Layout, Vec<Spec>) {
    let mut b = Builder { specs: Vec::new() };
    let e = cfg.embed_dim;
    let d = cfg.decoder_embed_dim;
    let head_layer = cfg.depth + 1;
    let table_rows = (2 * cfg.grid() - 1) * (2 * cfg.grid() - 1);

    let patch = b.linear("patch_embed.proj", cfg.patch_dim(), e, 0);
    let blocks = (0..cfg.depth)
        .map(|i| {
            let layer = i + 1;
            let p = format!("blocks.{i}");
            BlockIds {
                norm1: b.norm(&format!("{p}.norm1"), e, layer),
                attn: b.attn(&format!("{p}.attn"), e, layer),
                rel_pos: b.add(
                    format!("{p}.attn.relative_position_bias_table"),
                    table_rows,
                    cfg.num_heads,
                    ParamGroup {
                        layer,
                        weight_decay: false,
                    },
                    Init::Zeros,
                ),
                norm2: b.norm(&format!("{p}.norm2"), e, layer),
                fc1: b.linear(&format!("{p}.mlp.fc1"), e, e * cfg.mlp_ratio, layer),
                fc2: b.linear(&format!("{p}.mlp.fc2"), e * cfg.mlp_ratio, e, layer),
            }
        })
        .collect();
    let class_queries = b.add(
        "decode_head.class_queries".into(),
        cfg.num_classes,
        d,
        ParamGroup {
            layer: head_layer,
            weight_decay: true,
        },
        Init::TruncNormal,
    );
    let decoder = (0..cfg.decoder_layers)
        .map(|l| {
            let p = format!("decode_head.layers.{l}");
            DecoderLayerIds {
                input_proj: b.linear(&format!("{p}.input_proj"), e, d, head_layer),
                input_norm: b.norm(&format!("{p}.input_norm"), d, head_layer),
                self_norm: b.norm(&format!("{p}.self_norm"), d, head_layer),
                self_attn: b.attn(&format!("{p}.self_attn"), d, head_layer),
                cross_norm: b.norm(&format!("{p}.cross_norm"), d, head_layer),
                cross_attn: b.attn(&format!("{p}.cross_attn"), d, head_layer),
                ffn_norm: b.norm(&format!("{p}.ffn_norm"), d, head_layer),
                fc1: b.linear(&format!("{p}.ffn.fc1"), d, d * cfg.mlp_ratio, head_layer),
                fc2: b.linear(&format!("{p}.ffn.fc2"), d * cfg.mlp_ratio, d, head_layer),
                out_norm: b.norm(&format!("{p}.out_norm"), d, head_layer),
            }
        })
        .collect();
    let class_head = b.linear("decode_head.class_head", d, 1, head_layer);
    let mask_proj = b.linear("decode_head.mask_proj", d, d, head_layer);
    (
        Layout {
            patch,
            blocks,
            class_queries,
            decoder,
            class_head,
            mask_proj,
        },
        b.specs,
    )
}

/// Draws from N(0, std²) truncated to ±2 std.
fn trunc_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    let normal = Normal::new(0.0, std).expect("positive std");
    loop {
        let v: f64 = normal.sample(rng);
        if v.abs() <= 2.0 * std {
            return v;
        }
    }
}

/// Materializes parameters from specs with seeded initialization.
pub fn initialize<T: Scalar>(specs: &[Spec], seed: u64) -> ParameterSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<Parameter<T>> = specs
        .iter()
        .map(|s| {
            let value = match s.init {
                Init::Zeros => Matrix::zeros(s.rows, s.cols),
                Init::Ones => Matrix::filled(s.rows, s.cols, T::one()),
                Init::TruncNormal => {
                    Matrix::from_fn(s.rows, s.cols, |_, _| T::of(trunc_normal(&mut rng, INIT_STD)))
                }
            };
            Parameter {
                name: s.name.clone(),
                value,
                group: s.group,
            }
        })
        .collect();
    from_parameters(params)
}

pub(crate) fn from_parameters<T: Scalar>(params: Vec<Parameter<T>>) -> ParameterSet<T> {
    let by_name = params
        .iter()
        .enumerate()
        .map(|(i, p)| (p.name.clone(), i))
        .collect();
    ParameterSet { params, by_name }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_groups() {
        let cfg = ModelConfig::toy();
        let (lay, specs) = layout(&cfg);
        let p: ParameterSet<f64> = initialize(&specs, 1);
        assert_eq!(p.get(lay.patch.w).value.shape(), (64, 32));
        let table = p.get(lay.blocks[1].rel_pos);
        assert_eq!(table.value.shape(), (15 * 15, 4));
        assert!(table.value.data().iter().all(|&v| v == 0.0));
        assert!(!table.group.weight_decay);
        assert_eq!(table.group.layer, 2);
        assert_eq!(p.get(lay.class_queries).value.shape(), (2, 32));
        assert_eq!(p.get(lay.class_head.w).group.layer, 3);
        assert!(!p.has_absolute_position_table());
        assert!(p.all_finite());
    }

    #[test]
    fn init_is_truncated_and_seeded() {
        let (_, specs) = layout(&ModelConfig::toy());
        let a: ParameterSet<f64> = initialize(&specs, 5);
        let b: ParameterSet<f64> = initialize(&specs, 5);
        let c: ParameterSet<f64> = initialize(&specs, 6);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for p in a.iter().filter(|p| p.name.ends_with(".weight") && p.group.weight_decay) {
            assert!(p.value.data().iter().all(|v| v.abs() <= 0.04));
        }
    }

    #[test]
    fn default_model_size() {
        let (_, specs) = layout(&ModelConfig::default());
        let n: usize = specs.iter().map(|s| s.rows * s.cols).sum();
        // ViT-B backbone (~86M) plus a 3-layer 384-wide head
        assert!(n > 85_000_000 && n < 100_000_000, "{n}");
    }
}
