//! Finite-difference checks of every backward pass, in `f64`.

use ndarray::{Array1, Array2};
use rand::Rng as _;

use super::*;
use crate::mesh::{shapes, VertexGraph};
use crate::rng::{self, Rng};

const STEP: f64 = 1e-4;
const TOLERANCE: f64 = 1e-4;

fn random(rows: usize, cols: usize, r: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.gen_range(-1.0..1.0))
}

fn small_graph() -> VertexGraph {
    // 3 x 3 vertices with a bump so positions are not coplanar.
    let mesh = shapes::grid(2, 2, 1.0, 1.0);
    let p = mesh
        .positions()
        .iter()
        .enumerate()
        .map(|(i, p)| p + crate::mesh::Vec3::new(0.0, 0.0, 0.1 * (i % 3) as f64))
        .collect();
    mesh.with_positions(p).unwrap().build_graph()
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares analytic gradients against central differences for a spread of
/// entries in every parameter tensor.
///
/// `eval` returns the loss and the activation pattern (ReLU signs and
/// max-aggregation winners). Max and ReLU make the loss piecewise smooth; a
/// probe whose step changes the pattern straddles a kink, where central
/// differences are meaningless, and is replaced by another entry.
fn check<M, F>(model: &M, analytic: &M, mut eval: F, per_tensor: usize)
where
    M: ParamSet<f64> + Clone,
    F: FnMut(&M) -> (f64, Vec<u32>),
{
    let names: Vec<(String, usize)> = model
        .named_tensors()
        .iter()
        .map(|t| (t.name.clone(), t.values.len()))
        .collect();
    let grads: Vec<Vec<f64>> = analytic.named_tensors().iter().map(|t| t.values.to_vec()).collect();
    let (_, base) = eval(model);
    let mut r = rng::stream(99, "probe");
    let (mut probes, mut kinks) = (0, 0);
    for (t, (name, len)) in names.iter().enumerate() {
        let mut done = 0;
        while done < per_tensor.min(*len) {
            let k = r.gen_range(0..*len);
            let mut plus = model.clone();
            plus.named_tensors_mut()[t].values[k] += STEP;
            let mut minus = model.clone();
            minus.named_tensors_mut()[t].values[k] -= STEP;
            let ((lp, pp), (lm, pm)) = (eval(&plus), eval(&minus));
            if pp != base || pm != base {
                kinks += 1;
                assert!(kinks <= 4 * probes + 20, "too many non-smooth probes ({kinks} of {probes})");
                continue;
            }
            let numeric = (lp - lm) / (2.0 * STEP);
            let err = relative_error(grads[t][k], numeric);
            assert!(
                err < TOLERANCE,
                "{name}[{k}]: analytic {} vs numeric {numeric} (rel {err})",
                grads[t][k]
            );
            done += 1;
            probes += 1;
        }
    }
}

fn weighted_sum(y: &Array2<f64>, w: &Array2<f64>) -> f64 {
    (y * w).sum()
}

#[test]
fn geo_conv_gradients() {
    let g = small_graph();
    let mut r = rng::stream(1, "conv");
    let x = random(g.vertex_count(), 5, &mut r);
    let w = random(g.vertex_count(), 7, &mut r);
    for agg in [Aggregation::Max, Aggregation::Mean, Aggregation::Sum] {
        let conv = GeoConv::<f64>::new(5, 7, &mut r);
        let (_, cache) = conv.forward(&x, &g, agg).unwrap();
        let mut grad = GeoConv::zeros(5, 7);
        let dx = conv.backward(&cache, &g, agg, &w, &mut grad);
        check(
            &conv,
            &grad,
            |c| {
                let (y, cache) = c.forward(&x, &g, agg).unwrap();
                let mut p = Vec::new();
                cache.pattern(&mut p);
                (weighted_sum(&y, &w), p)
            },
            12,
        );
        // Input gradient.
        for (i, c) in [(0, 1), (4, 3), (8, 0)] {
            let mut xp = x.clone();
            xp[[i, c]] += STEP;
            let mut xm = x.clone();
            xm[[i, c]] -= STEP;
            let numeric = (weighted_sum(&conv.forward(&xp, &g, agg).unwrap().0, &w)
                - weighted_sum(&conv.forward(&xm, &g, agg).unwrap().0, &w))
                / (2.0 * STEP);
            assert!(relative_error(dx[[i, c]], numeric) < TOLERANCE, "{agg:?} dx[{i},{c}]");
        }
    }
}

#[test]
fn group_norm_gradients() {
    let mut r = rng::stream(2, "norm");
    let x = random(9, 16, &mut r);
    let w = random(9, 16, &mut r);
    let segments = [0..4, 4..9];
    let mut norm = GroupNorm::<f64>::new(16, 4).unwrap();
    norm.gamma = Array1::from_shape_simple_fn(16, || r.gen_range(0.5..1.5));
    norm.beta = Array1::from_shape_simple_fn(16, || r.gen_range(-0.5..0.5));
    let (_, cache) = norm.forward(&x, &segments).unwrap();
    let mut grad = norm.clone();
    grad.zero();
    let dx = norm.backward(&cache, &segments, &w, &mut grad);
    check(&norm, &grad, |n| (weighted_sum(&n.forward(&x, &segments).unwrap().0, &w), Vec::new()), 16);
    for (i, c) in [(0, 0), (3, 7), (6, 15)] {
        let mut xp = x.clone();
        xp[[i, c]] += STEP;
        let mut xm = x.clone();
        xm[[i, c]] -= STEP;
        let numeric = (weighted_sum(&norm.forward(&xp, &segments).unwrap().0, &w)
            - weighted_sum(&norm.forward(&xm, &segments).unwrap().0, &w))
            / (2.0 * STEP);
        assert!(relative_error(dx[[i, c]], numeric) < TOLERANCE);
    }
}

#[test]
fn res_block_gradients() {
    let g = small_graph();
    let n = g.vertex_count();
    let mut r = rng::stream(3, "block");
    let x = random(n, WIDTH, &mut r);
    let w = random(n, WIDTH, &mut r);
    let block = ResBlock::<f64>::new(8, &mut r).unwrap();
    let seg = [0..n];
    let agg = Aggregation::Max;
    let (_, cache) = block.forward(&x, &g, &seg, agg).unwrap();
    let mut grad = block.clone();
    grad.zero();
    block.backward(&cache, &g, &seg, agg, &w, &mut grad);
    check(
        &block,
        &grad,
        |b| {
            let (y, cache) = b.forward(&x, &g, &seg, agg).unwrap();
            let mut p = Vec::new();
            cache.pattern(&mut p);
            (weighted_sum(&y, &w), p)
        },
        6,
    );
}

#[test]
fn dist_mlp_gradients() {
    let mut r = rng::stream(4, "mlp");
    let s = random(10, WIDTH, &mut r).mapv(|v| v * v);
    let w = Array1::from_shape_simple_fn(10, || r.gen_range(-1.0..1.0));
    let mlp = DistMlp::<f64>::new(WIDTH, WIDTH, &mut r);
    let (_, cache) = mlp.forward(&s).unwrap();
    let mut grad = mlp.clone();
    grad.zero();
    let ds = mlp.backward(&cache, &w, &mut grad);
    let loss = |m: &DistMlp<f64>, s: &Array2<f64>| (m.forward(s).unwrap().0 * &w).sum();
    check(
        &mlp,
        &grad,
        |m| {
            let (y, cache) = m.forward(&s).unwrap();
            let mut p = Vec::new();
            cache.pattern(&mut p);
            ((y * &w).sum(), p)
        },
        8,
    );
    for (i, c) in [(0, 0), (5, 100), (9, 255)] {
        let mut sp = s.clone();
        sp[[i, c]] += STEP;
        let mut sm = s.clone();
        sm[[i, c]] -= STEP;
        let numeric = (loss(&mlp, &sp) - loss(&mlp, &sm)) / (2.0 * STEP);
        assert!(relative_error(ds[[i, c]], numeric) < TOLERANCE);
    }
}

#[test]
fn unet_gradients() {
    let g = small_graph();
    let config = NetConfig {
        depth: 2,
        sigmas: SigmaSchedule {
            position: 0.4,
            normal: None,
        },
        ..NetConfig::default()
    };
    let hier = config.hierarchy(&g);
    assert!(hier.level(2).vertex_count() < g.vertex_count());
    let net = UNet::<f64>::new(&config, &mut rng::stream(5, "net")).unwrap();
    let w = random(g.vertex_count(), WIDTH, &mut rng::stream(6, "w"));
    let (_, cache) = net.forward(&hier, config.aggregation).unwrap();
    let mut grad = net.clone();
    grad.zero();
    net.backward(&cache, &hier, config.aggregation, &w, &mut grad);
    check(
        &net,
        &grad,
        |m| {
            let (y, cache) = m.forward(&hier, config.aggregation).unwrap();
            let mut p = Vec::new();
            cache.pattern(&mut p);
            (weighted_sum(&y, &w), p)
        },
        2,
    );
}
