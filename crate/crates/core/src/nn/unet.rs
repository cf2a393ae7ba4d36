use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::hierarchy::{pool_features, pool_features_backward, unpool_features, unpool_features_backward};
use super::params::key;
use super::{
    check_finite, relu, relu_backward, Aggregation, ConvCache, DistMlp, GeoConv, GraphHierarchy,
    GroupNorm, Linear, NormCache, ParamSet, Real, ResBlock, ResBlockCache, SigmaSchedule, Tensor,
    TensorMut, WIDTH,
};
use crate::mesh::VertexGraph;
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// How two embeddings are turned into a distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    /// Learned MLP on the squared difference.
    #[default]
    Mlp,
    /// Euclidean norm of the difference, no parameters.
    Euclidean,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Number of pooling steps.
    pub depth: usize,
    /// Residual blocks per encoder/decoder stage and in the bottleneck.
    pub blocks_per_stage: usize,
    /// Channel groups of every group normalisation.
    pub groups: usize,
    pub aggregation: Aggregation,
    pub decoder: DecoderKind,
    pub sigmas: SigmaSchedule,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            depth: 3,
            blocks_per_stage: 1,
            groups: 8,
            aggregation: Aggregation::Max,
            decoder: DecoderKind::Mlp,
            sigmas: SigmaSchedule::default(),
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks_per_stage == 0 {
            return Err(Error::Config("blocks_per_stage must be at least 1".into()));
        }
        if self.groups == 0 || WIDTH % self.groups != 0 {
            return Err(Error::Config(format!("groups must divide {WIDTH}, got {}", self.groups)));
        }
        if self.depth > 16 {
            return Err(Error::Config(format!("depth {} is unreasonably large", self.depth)));
        }
        self.sigmas.validate()
    }

    /// Builds the pooling pyramid this configuration expects.
    pub fn hierarchy(&self, graph: &VertexGraph) -> GraphHierarchy {
        GraphHierarchy::build(graph, self.depth, &self.sigmas)
    }
}

/// Encoder-decoder over the pooling pyramid producing per-vertex embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct UNet<T> {
    pub stem: GeoConv<T>,
    pub encoder: Vec<Vec<ResBlock<T>>>,
    pub bottleneck: Vec<ResBlock<T>>,
    pub decoder: Vec<Vec<ResBlock<T>>>,
    pub head_norm: GroupNorm<T>,
    pub head1: Linear<T>,
    pub head2: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct UNetCache<T> {
    stem: ConvCache<T>,
    encoder: Vec<Vec<ResBlockCache<T>>>,
    bottleneck: Vec<ResBlockCache<T>>,
    decoder: Vec<Vec<ResBlockCache<T>>>,
    features: Array2<T>,
    head_norm: NormCache<T>,
    normed: Array2<T>,
    hidden: Array2<T>,
    hidden_act: Array2<T>,
}

impl<T: Real> UNetCache<T> {
    #[cfg(test)]
    pub(crate) fn pattern(&self, out: &mut Vec<u32>) {
        self.stem.pattern(out);
        for c in self.encoder.iter().chain(&self.decoder).flatten().chain(&self.bottleneck) {
            c.pattern(out);
        }
        super::sign_pattern(&self.features, out);
        super::sign_pattern(&self.hidden, out);
    }
}

/// Input signal: position and normal per vertex.
pub(crate) fn input_signal<T: Real>(graph: &VertexGraph) -> Array2<T> {
    let mut x = Array2::zeros((graph.vertex_count(), 6));
    for (i, (p, n)) in graph.positions().iter().zip(graph.normals()).enumerate() {
        for k in 0..3 {
            x[[i, k]] = T::lit(p[k]);
            x[[i, 3 + k]] = T::lit(n[k]);
        }
    }
    x
}

fn blocks<T: Real>(count: usize, groups: usize, rng: &mut Rng) -> Result<Vec<ResBlock<T>>> {
    (0..count).map(|_| ResBlock::new(groups, rng)).collect()
}

impl<T: Real> UNet<T> {
    pub fn new(config: &NetConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (r, g) = (config.blocks_per_stage, config.groups);
        Ok(UNet {
            stem: GeoConv::new(6, WIDTH, rng),
            encoder: (0..config.depth).map(|_| blocks(r, g, rng)).collect::<Result<_>>()?,
            bottleneck: blocks(r, g, rng)?,
            decoder: (0..config.depth).map(|_| blocks(r, g, rng)).collect::<Result<_>>()?,
            head_norm: GroupNorm::new(WIDTH, g)?,
            head1: Linear::new(WIDTH, WIDTH, rng),
            head2: Linear::new(WIDTH, WIDTH, rng),
        })
    }

    pub fn depth(&self) -> usize {
        self.encoder.len()
    }

    pub fn forward(
        &self,
        hier: &GraphHierarchy,
        agg: Aggregation,
    ) -> Result<(Array2<T>, UNetCache<T>)> {
        let depth = self.depth();
        if hier.depth() != depth {
            return Err(Error::Shape(format!(
                "network has {depth} levels, hierarchy has {}",
                hier.depth()
            )));
        }
        let (mut h, stem) = self.stem.forward(&input_signal(hier.level(0)), hier.level(0), agg)?;
        check_finite(&h, "stem")?;
        let mut skips = Vec::with_capacity(depth);
        let mut encoder = Vec::with_capacity(depth);
        for (l, stage) in self.encoder.iter().enumerate() {
            let mut caches = Vec::with_capacity(stage.len());
            for block in stage {
                let (out, cache) = block.forward(&h, hier.level(l), hier.segments(l), agg)?;
                h = out;
                caches.push(cache);
            }
            check_finite(&h, &format!("encoder level {l}"))?;
            encoder.push(caches);
            let coarse = pool_features(&h, hier.cluster_map(l), hier.level(l + 1).vertex_count());
            skips.push(h);
            h = coarse;
        }
        let mut bottleneck = Vec::with_capacity(self.bottleneck.len());
        for block in &self.bottleneck {
            let (out, cache) = block.forward(&h, hier.level(depth), hier.segments(depth), agg)?;
            h = out;
            bottleneck.push(cache);
        }
        check_finite(&h, "bottleneck")?;
        let mut decoder: Vec<Vec<ResBlockCache<T>>> = (0..depth).map(|_| Vec::new()).collect();
        for l in (0..depth).rev() {
            h = unpool_features(&h, hier.cluster_map(l)) + &skips[l];
            for block in &self.decoder[l] {
                let (out, cache) = block.forward(&h, hier.level(l), hier.segments(l), agg)?;
                h = out;
                decoder[l].push(cache);
            }
            check_finite(&h, &format!("decoder level {l}"))?;
        }
        let (normed, head_norm) = self.head_norm.forward(&relu(&h), hier.segments(0))?;
        let hidden = self.head1.forward(&normed)?;
        let hidden_act = relu(&hidden);
        let out = self.head2.forward(&hidden_act)?;
        check_finite(&out, "head")?;
        Ok((
            out,
            UNetCache {
                stem,
                encoder,
                bottleneck,
                decoder,
                features: h,
                head_norm,
                normed,
                hidden,
                hidden_act,
            },
        ))
    }

    /// Accumulates parameter gradients for `dL/d(embedding)`.
    pub fn backward(
        &self,
        cache: &UNetCache<T>,
        hier: &GraphHierarchy,
        agg: Aggregation,
        d_out: &Array2<T>,
        grad: &mut Self,
    ) {
        let depth = self.depth();
        let mut d = self.head2.backward(&cache.hidden_act, d_out, &mut grad.head2);
        relu_backward(&cache.hidden, &mut d);
        let d = self.head1.backward(&cache.normed, &d, &mut grad.head1);
        let mut d = self
            .head_norm
            .backward(&cache.head_norm, hier.segments(0), &d, &mut grad.head_norm);
        relu_backward(&cache.features, &mut d);

        let mut d_skips = Vec::with_capacity(depth);
        for l in 0..depth {
            for (b, block) in self.decoder[l].iter().enumerate().rev() {
                d = block.backward(
                    &cache.decoder[l][b],
                    hier.level(l),
                    hier.segments(l),
                    agg,
                    &d,
                    &mut grad.decoder[l][b],
                );
            }
            let coarse = unpool_features_backward(&d, hier.cluster_map(l), hier.level(l + 1).vertex_count());
            d_skips.push(d);
            d = coarse;
        }
        for (b, block) in self.bottleneck.iter().enumerate().rev() {
            d = block.backward(
                &cache.bottleneck[b],
                hier.level(depth),
                hier.segments(depth),
                agg,
                &d,
                &mut grad.bottleneck[b],
            );
        }
        for l in (0..depth).rev() {
            d = pool_features_backward(&d, hier.cluster_map(l)) + &d_skips[l];
            for (b, block) in self.encoder[l].iter().enumerate().rev() {
                d = block.backward(
                    &cache.encoder[l][b],
                    hier.level(l),
                    hier.segments(l),
                    agg,
                    &d,
                    &mut grad.encoder[l][b],
                );
            }
        }
        self.stem.backward(&cache.stem, hier.level(0), agg, &d, &mut grad.stem);
    }
}

impl<T: Real> ParamSet<T> for UNet<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a, T>>) {
        self.stem.tensors(&key(prefix, "stem"), out);
        for (l, stage) in self.encoder.iter().enumerate() {
            for (b, block) in stage.iter().enumerate() {
                block.tensors(&key(prefix, &format!("encoder{l}.block{b}")), out);
            }
        }
        for (b, block) in self.bottleneck.iter().enumerate() {
            block.tensors(&key(prefix, &format!("bottleneck.block{b}")), out);
        }
        for (l, stage) in self.decoder.iter().enumerate() {
            for (b, block) in stage.iter().enumerate() {
                block.tensors(&key(prefix, &format!("decoder{l}.block{b}")), out);
            }
        }
        self.head_norm.tensors(&key(prefix, "head.norm"), out);
        self.head1.tensors(&key(prefix, "head.layer1"), out);
        self.head2.tensors(&key(prefix, "head.layer2"), out);
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a, T>>) {
        self.stem.tensors_mut(&key(prefix, "stem"), out);
        for (l, stage) in self.encoder.iter_mut().enumerate() {
            for (b, block) in stage.iter_mut().enumerate() {
                block.tensors_mut(&key(prefix, &format!("encoder{l}.block{b}")), out);
            }
        }
        for (b, block) in self.bottleneck.iter_mut().enumerate() {
            block.tensors_mut(&key(prefix, &format!("bottleneck.block{b}")), out);
        }
        for (l, stage) in self.decoder.iter_mut().enumerate() {
            for (b, block) in stage.iter_mut().enumerate() {
                block.tensors_mut(&key(prefix, &format!("decoder{l}.block{b}")), out);
            }
        }
        self.head_norm.tensors_mut(&key(prefix, "head.norm"), out);
        self.head1.tensors_mut(&key(prefix, "head.layer1"), out);
        self.head2.tensors_mut(&key(prefix, "head.layer2"), out);
    }
}

/// Embedding network plus distance decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: NetConfig,
    pub net: UNet<T>,
    /// Present iff `config.decoder` is [`DecoderKind::Mlp`].
    pub dist: Option<DistMlp<T>>,
}

impl<T: Real> Model<T> {
    /// Freshly initialised parameters; deterministic in `seed`.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, "init");
        let net = UNet::new(&config, &mut rng)?;
        let dist = match config.decoder {
            DecoderKind::Mlp => Some(DistMlp::new(WIDTH, WIDTH, &mut rng)),
            DecoderKind::Euclidean => None,
        };
        Ok(Model { config, net, dist })
    }

    /// Same structure with every parameter zero, for gradient accumulation.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero();
        z
    }

    /// Per-vertex embeddings for a single graph.
    pub fn embed_graph(&self, graph: &VertexGraph) -> Result<Array2<T>> {
        let hier = self.config.hierarchy(graph);
        Ok(self.net.forward(&hier, self.config.aggregation)?.0)
    }
}

impl<T: Real> ParamSet<T> for Model<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a, T>>) {
        self.net.tensors(&key(prefix, "net"), out);
        if let Some(dist) = &self.dist {
            dist.tensors(&key(prefix, "dist"), out);
        }
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a, T>>) {
        self.net.tensors_mut(&key(prefix, "net"), out);
        if let Some(dist) = &mut self.dist {
            dist.tensors_mut(&key(prefix, "dist"), out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{shapes, Vec3};

    #[test]
    fn parameter_budget() {
        let model = Model::<f32>::new(NetConfig::default(), 0).unwrap();
        let names: Vec<String> = model.named_tensors().into_iter().map(|t| t.name).collect();
        assert_eq!(names[0], "net.stem.w_self");
        assert!(names.contains(&"dist.layer3.bias".to_string()));
        let count = model.parameter_count();
        assert!((2_000_000..2_300_000).contains(&count), "{count} parameters");
    }

    #[test]
    fn output_shape_and_translation_sensitivity() {
        let mesh = shapes::bumpy_sphere(1, 0.1, 3.0).normalized().unwrap();
        let model = Model::<f32>::new(NetConfig::default(), 1).unwrap();
        let emb = model.embed_graph(&mesh.build_graph()).unwrap();
        assert_eq!(emb.dim(), (mesh.vertex_count(), WIDTH));
        let moved = mesh
            .with_positions(mesh.positions().iter().map(|p| p + Vec3::new(0.37, 0.0, 0.0)).collect())
            .unwrap();
        let emb2 = model.embed_graph(&moved.build_graph()).unwrap();
        let diff = (&emb - &emb2).iter().fold(0f32, |m, v| m.max(v.abs()));
        assert!(diff > 1e-4);
    }

    #[test]
    fn depth_mismatch_is_a_shape_error() {
        let g = shapes::icosphere(1).build_graph();
        let model = Model::<f32>::new(NetConfig::default(), 1).unwrap();
        let hier = GraphHierarchy::build(&g, 2, &SigmaSchedule::default());
        assert!(matches!(model.net.forward(&hier, Aggregation::Max), Err(Error::Shape(_))));
    }

    #[test]
    fn config_validation() {
        let bad = NetConfig {
            groups: 7,
            ..NetConfig::default()
        };
        assert!(Model::<f32>::new(bad, 0).is_err());
        let euclid = Model::<f32>::new(
            NetConfig {
                decoder: DecoderKind::Euclidean,
                ..NetConfig::default()
            },
            0,
        )
        .unwrap();
        assert!(euclid.dist.is_none());
    }
}
