use ndarray::{Array1, Array2};

use crate::mesh::TriangleMesh;
use crate::nn::{DecoderKind, Model};
use crate::oracle::GeodesicSampleSet;
use crate::{Error, Result};

const CHUNK: usize = 8192;
/// Keeps the Euclidean decoder differentiable at coincident embeddings.
const SQRT_GUARD: f32 = 1e-12;

fn squared_differences(emb: &Array2<f32>, pairs: &[(u32, u32)]) -> Array2<f32> {
    let mut s = Array2::<f32>::zeros((pairs.len(), emb.ncols()));
    for (mut row, &(i, j)) in s.rows_mut().into_iter().zip(pairs) {
        let (p, q) = (emb.row(i as usize), emb.row(j as usize));
        for ((dst, &a), &b) in row.iter_mut().zip(p).zip(q) {
            let d = a - b;
            *dst = d * d;
        }
    }
    s
}

fn check_pairs(emb: &Array2<f32>, pairs: &[(u32, u32)]) -> Result<()> {
    let n = emb.nrows();
    match pairs.iter().find(|(i, j)| (*i.max(j)) as usize >= n) {
        Some(&(i, j)) => Err(Error::IndexOutOfRange {
            index: i.max(j) as usize,
            len: n,
        }),
        None => Ok(()),
    }
}

/// Raw decoder outputs (before clamping) for a batch of pairs.
fn raw_distances(model: &Model<f32>, s: &Array2<f32>) -> Result<Array1<f32>> {
    match (&model.config.decoder, &model.dist) {
        (DecoderKind::Mlp, Some(mlp)) => Ok(mlp.forward(s)?.0),
        (DecoderKind::Euclidean, _) => Ok(s.rows().into_iter().map(|r| r.sum().sqrt()).collect()),
        (DecoderKind::Mlp, None) => Err(Error::Shape("model has no decoder parameters".into())),
    }
}

/// Inference distances (clamped at zero) for pairs of embedding rows.
pub fn predict_pairs(model: &Model<f32>, emb: &Array2<f32>, pairs: &[(u32, u32)]) -> Result<Vec<f32>> {
    check_pairs(emb, pairs)?;
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(CHUNK) {
        let raw = raw_distances(model, &squared_differences(emb, chunk))?;
        out.extend(raw.iter().map(|d| d.max(0.0)));
    }
    Ok(out)
}

/// Relative-error loss of raw decoder outputs against `targets`.
///
/// Decoder gradients accumulate into `grad`; the returned array is the
/// gradient with respect to the embedding rows.
pub fn pair_loss_and_gradient(
    model: &Model<f32>,
    emb: &Array2<f32>,
    pairs: &[(u32, u32)],
    targets: &[f32],
    epsilon: f64,
    grad: &mut Model<f32>,
) -> Result<(f64, Array2<f32>)> {
    check_pairs(emb, pairs)?;
    if pairs.is_empty() || pairs.len() != targets.len() {
        return Err(Error::Shape(format!("{} pairs with {} targets", pairs.len(), targets.len())));
    }
    let s = squared_differences(emb, pairs);
    let n = pairs.len() as f64;
    let eps = epsilon as f32;
    let (pred, ds) = match (&model.config.decoder, &model.dist) {
        (DecoderKind::Mlp, Some(mlp)) => {
            let (pred, cache) = mlp.forward(&s)?;
            let dd = dloss(&pred, targets, eps, n);
            let grad_mlp = grad
                .dist
                .as_mut()
                .ok_or_else(|| Error::Shape("gradient has no decoder parameters".into()))?;
            (pred.clone(), mlp.backward(&cache, &dd, grad_mlp))
        }
        (DecoderKind::Euclidean, _) => {
            let pred: Array1<f32> = s.rows().into_iter().map(|r| (r.sum() + SQRT_GUARD).sqrt()).collect();
            let dd = dloss(&pred, targets, eps, n);
            let mut ds = Array2::<f32>::zeros(s.dim());
            for (k, mut row) in ds.rows_mut().into_iter().enumerate() {
                row.fill(dd[k] / (2.0 * pred[k]));
            }
            (pred, ds)
        }
        (DecoderKind::Mlp, None) => return Err(Error::Shape("model has no decoder parameters".into())),
    };
    let loss = pred
        .iter()
        .zip(targets)
        .map(|(&p, &g)| ((p - g).abs() / (g + eps)) as f64)
        .sum::<f64>()
        / n;
    let mut d_emb = Array2::<f32>::zeros(emb.dim());
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let (i, j) = (i as usize, j as usize);
        for c in 0..emb.ncols() {
            let g = 2.0 * (emb[[i, c]] - emb[[j, c]]) * ds[[k, c]];
            d_emb[[i, c]] += g;
            d_emb[[j, c]] -= g;
        }
    }
    Ok((loss, d_emb))
}

fn dloss(pred: &Array1<f32>, targets: &[f32], eps: f32, n: f64) -> Array1<f32> {
    let scale = (1.0 / n) as f32;
    pred.iter()
        .zip(targets)
        .map(|(&p, &g)| {
            let sign = if p > g {
                1.0
            } else if p < g {
                -1.0
            } else {
                0.0
            };
            sign * scale / (g + eps)
        })
        .collect()
}

/// Mean relative error of the model's inference distances over every pair of
/// a sample set.
pub fn sample_set_mre(
    model: &Model<f32>,
    mesh: &TriangleMesh,
    samples: &GeodesicSampleSet,
    epsilon: f64,
) -> Result<f64> {
    samples.check_mesh(mesh)?;
    let emb = model.embed_graph(&mesh.build_graph())?;
    let pairs: Vec<(u32, u32)> = samples.pairs().iter().map(|p| (p.i, p.j)).collect();
    let pred = predict_pairs(model, &emb, &pairs)?;
    let pred: Vec<f64> = pred.iter().map(|&d| d as f64).collect();
    let gt: Vec<f64> = samples.pairs().iter().map(|p| p.distance as f64).collect();
    super::mre_loss(&pred, &gt, epsilon)
}
