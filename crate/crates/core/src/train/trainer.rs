use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::index;
use rand::Rng as _;
use serde::Serialize;

use super::pairs::{pair_loss_and_gradient, sample_set_mre};
use super::{poly_learning_rate, TrainConfig, TrainState};
use crate::mesh::TriangleMesh;
use crate::nn::{GraphHierarchy, NetConfig};
use crate::oracle::GeodesicSampleSet;
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// A mesh with its supervision pairs and cached pooling pyramid.
#[derive(Debug, Clone)]
pub struct TrainingMesh {
    mesh: TriangleMesh,
    samples: GeodesicSampleSet,
    hierarchy: GraphHierarchy,
}

impl TrainingMesh {
    pub fn new(mesh: TriangleMesh, samples: GeodesicSampleSet, net: &NetConfig) -> Result<Self> {
        samples.check_mesh(&mesh)?;
        if samples.is_empty() {
            return Err(Error::InvalidArgument("sample set is empty".into()));
        }
        let v = mesh.vertex_count();
        if let Some(p) = samples.pairs().iter().find(|p| p.i.max(p.j) as usize >= v) {
            return Err(Error::IndexOutOfRange {
                index: p.i.max(p.j) as usize,
                len: v,
            });
        }
        let hierarchy = net.hierarchy(&mesh.build_graph());
        Ok(TrainingMesh {
            mesh,
            samples,
            hierarchy,
        })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn samples(&self) -> &GeodesicSampleSet {
        &self.samples
    }

    pub fn hierarchy(&self) -> &GraphHierarchy {
        &self.hierarchy
    }
}

/// The meshes and sample indices used by one optimisation step.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `(mesh index, indices into that mesh's sample set)`.
    pub entries: Vec<(usize, Vec<usize>)>,
}

impl Batch {
    /// Draws `batch_meshes` distinct meshes from `candidates` (all of them if
    /// there are fewer) and `pairs_per_mesh` samples from each. Samples are
    /// distinct when the set is large enough, drawn with replacement otherwise.
    pub fn sample(
        candidates: &[usize],
        meshes: &[TrainingMesh],
        batch_meshes: usize,
        pairs_per_mesh: usize,
        rng: &mut Rng,
    ) -> Self {
        let picked = index::sample(rng, candidates.len(), batch_meshes.min(candidates.len()));
        let entries = picked
            .into_iter()
            .map(|k| {
                let m = candidates[k];
                let len = meshes[m].samples.len();
                let samples = if pairs_per_mesh <= len {
                    index::sample(rng, len, pairs_per_mesh).into_vec()
                } else {
                    (0..pairs_per_mesh).map(|_| rng.gen_range(0..len)).collect()
                };
                (m, samples)
            })
            .collect();
        Batch { entries }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub wall_seconds: f64,
}

/// Summary written after each epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean step loss over the epoch.
    pub train_mre: f64,
    pub val_mre: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum LogLine<'a> {
    Step(&'a StepRecord),
    Epoch(&'a EpochRecord),
}

/// Where a training run writes its log and checkpoints. Both are optional.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    /// Line-delimited JSON log.
    pub log_path: Option<PathBuf>,
    /// Receives `last.gckp` after every epoch, `best.gckp` whenever the
    /// validation error improves and `diagnostic.gckp` on numeric failure.
    pub checkpoint_dir: Option<PathBuf>,
}

/// Final state and log of a training run.
#[derive(Debug)]
pub struct TrainRun {
    pub state: TrainState,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Meshes held out for model selection, as indices into the input.
    pub validation: Vec<usize>,
}

struct Outputs {
    log: Option<BufWriter<File>>,
    log_path: PathBuf,
    dir: Option<PathBuf>,
}

impl Outputs {
    fn open(outputs: &TrainOutputs) -> Result<Self> {
        if let Some(dir) = &outputs.checkpoint_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let log = match &outputs.log_path {
            Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
            None => None,
        };
        Ok(Outputs {
            log,
            log_path: outputs.log_path.clone().unwrap_or_default(),
            dir: outputs.checkpoint_dir.clone(),
        })
    }

    fn write(&mut self, line: LogLine) -> Result<()> {
        if let Some(log) = &mut self.log {
            let text = serde_json::to_string(&line).expect("records serialise");
            writeln!(log, "{text}")
                .and_then(|_| log.flush())
                .map_err(|e| Error::io(&self.log_path, e))?;
        }
        Ok(())
    }

    fn checkpoint(&self, state: &TrainState, name: &str) -> Result<()> {
        match &self.dir {
            Some(dir) => state.save(dir.join(name)),
            None => Ok(()),
        }
    }
}

/// One optimiser update on `batch`; returns the batch loss before the update.
pub fn train_step(
    state: &mut TrainState,
    meshes: &[TrainingMesh],
    batch: &Batch,
    lr: f64,
    epsilon: f64,
) -> Result<f64> {
    let parts: Vec<&GraphHierarchy> = batch.entries.iter().map(|(m, _)| &meshes[*m].hierarchy).collect();
    let hier = GraphHierarchy::batch(&parts)?;
    let agg = state.model.config.aggregation;
    let (emb, cache) = state.model.net.forward(&hier, agg)?;
    let mut pairs = Vec::new();
    let mut targets = Vec::new();
    for ((m, picks), segment) in batch.entries.iter().zip(hier.segments(0)) {
        let offset = segment.start as u32;
        let all = meshes[*m].samples.pairs();
        for &k in picks {
            let p = all[k];
            pairs.push((p.i + offset, p.j + offset));
            targets.push(p.distance);
        }
    }
    let mut grad = state.model.zeros_like();
    let (loss, d_emb) = pair_loss_and_gradient(&state.model, &emb, &pairs, &targets, epsilon, &mut grad)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss is {loss}")));
    }
    state.model.net.backward(&cache, &hier, agg, &d_emb, &mut grad.net);
    state.optimizer.update(&mut state.model, &grad, lr)?;
    Ok(loss)
}

fn validation_split(count: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let held = ((count as f64 * fraction).floor() as usize).min(count.saturating_sub(1));
    let mut val = index::sample(&mut rng::stream(seed, "split"), count, held).into_vec();
    val.sort_unstable();
    let train = (0..count).filter(|i| val.binary_search(i).is_err()).collect();
    (train, val)
}

/// Trains a fresh model on `meshes` (mesh plus supervision pairs each).
///
/// A fraction of the meshes is held out for model selection. The returned
/// state is the one after the last step; the best-validation state is
/// written to the checkpoint directory when one is configured.
pub fn train(
    meshes: Vec<(TriangleMesh, GeodesicSampleSet)>,
    config: &TrainConfig,
    outputs: &TrainOutputs,
) -> Result<TrainRun> {
    config.validate()?;
    if meshes.is_empty() {
        return Err(Error::InvalidArgument("no training meshes".into()));
    }
    let meshes = meshes
        .into_iter()
        .map(|(mesh, samples)| TrainingMesh::new(mesh, samples, &config.net))
        .collect::<Result<Vec<_>>>()?;
    let (train_idx, val_idx) = validation_split(meshes.len(), config.validation_fraction, config.seed);
    let mut state = TrainState::new(config.net.clone(), config.seed, config.weight_decay)?;
    let mut out = Outputs::open(outputs)?;
    let steps_per_epoch = config
        .steps_per_epoch
        .unwrap_or_else(|| train_idx.len().div_ceil(config.batch_meshes));
    let total = (config.epochs * steps_per_epoch) as u64;
    let start = Instant::now();
    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    out.checkpoint(&state, "last.gckp")?;
    for epoch in 0..config.epochs {
        let mut sum = 0.0;
        for _ in 0..steps_per_epoch {
            let t = state.step();
            let lr = poly_learning_rate(config.learning_rate, t, total, config.poly_power);
            let batch = Batch::sample(
                &train_idx,
                &meshes,
                config.batch_meshes,
                config.pairs_per_mesh,
                &mut state.rng,
            );
            let loss = match train_step(&mut state, &meshes, &batch, lr, config.epsilon) {
                Err(Error::Numeric(msg)) => {
                    out.checkpoint(&state, "diagnostic.gckp")?;
                    return Err(Error::Numeric(format!("step {t}: {msg}")));
                }
                other => other?,
            };
            sum += loss;
            let record = StepRecord {
                step: t,
                epoch,
                lr,
                loss,
                wall_seconds: start.elapsed().as_secs_f64(),
            };
            out.write(LogLine::Step(&record))?;
            steps.push(record);
        }
        let val_mre = if val_idx.is_empty() {
            None
        } else {
            let mut total = 0.0;
            for &m in &val_idx {
                total += sample_set_mre(&state.model, &meshes[m].mesh, &meshes[m].samples, config.epsilon)?;
            }
            Some(total / val_idx.len() as f64)
        };
        if let Some(v) = val_mre {
            if state.best_val_mre.map_or(true, |b| v < b) {
                state.best_val_mre = Some(v);
                out.checkpoint(&state, "best.gckp")?;
            }
        }
        let record = EpochRecord {
            epoch,
            train_mre: sum / steps_per_epoch as f64,
            val_mre,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train {:.4}{}",
            record.train_mre,
            val_mre.map(|v| format!(", val {v:.4}")).unwrap_or_default()
        );
        out.write(LogLine::Epoch(&record))?;
        epochs.push(record);
        out.checkpoint(&state, "last.gckp")?;
    }
    Ok(TrainRun {
        state,
        steps,
        epochs,
        validation: val_idx,
    })
}

/// [`train`] on sample sets labelled with biharmonic rather than geodesic
/// distances. The loss and optimisation are the same.
pub fn train_biharmonic(
    meshes: Vec<(TriangleMesh, GeodesicSampleSet)>,
    config: &TrainConfig,
    outputs: &TrainOutputs,
) -> Result<TrainRun> {
    train(meshes, config, outputs)
}

/// Continues optimisation of `state` on a single mesh for `iterations`
/// steps. Optimiser moments and the step counter carry over; the learning
/// rate restarts at `config.learning_rate` and decays to zero over the
/// finetuning steps.
pub fn finetune(
    state: &mut TrainState,
    mesh: &TriangleMesh,
    samples: &GeodesicSampleSet,
    iterations: usize,
    config: &TrainConfig,
) -> Result<Vec<StepRecord>> {
    samples.check_mesh(mesh)?;
    if iterations == 0 {
        return Ok(Vec::new());
    }
    let target = [TrainingMesh::new(mesh.clone(), samples.clone(), &state.model.config)?];
    let start = Instant::now();
    let mut records = Vec::with_capacity(iterations);
    for k in 0..iterations {
        let lr = poly_learning_rate(config.learning_rate, k as u64, iterations as u64, config.poly_power);
        let batch = Batch::sample(&[0], &target, 1, config.pairs_per_mesh, &mut state.rng);
        let step = state.step();
        let loss = train_step(state, &target, &batch, lr, config.epsilon)?;
        records.push(StepRecord {
            step,
            epoch: 0,
            lr,
            loss,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(records)
}
