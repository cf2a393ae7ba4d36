use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use geoembed::apps::{compare_distributions, shape_distribution, trace_geodesic_path};
use geoembed::mesh::io::write_obj;
use geoembed::mesh::{load_mesh, write_ply_with_quality, TriangleMesh};
use geoembed::nn::{EmbeddingTable, Model};
use geoembed::oracle::{
    build_spectral_basis, sample_pairs, BiharmonicOracle, DistanceOracle, GeodesicSampleSet,
    GraphOracle, SteinerOracle,
};
use geoembed::query::{
    benchmark, evaluate_mre, precompute_embedding, triangle_violations, violation_mask,
    BenchmarkConfig, QuerySession,
};
use geoembed::train::{train, TrainConfig, TrainOutputs, TrainState};
use geoembed::Error;

use crate::{
    BenchArgs, Cli, Command, EmbedArgs, EvalArgs, GenDataArgs, ModelArgs, OracleArgs, OracleKind,
    Predictor, QueryArgs, ShapeHistArgs, TraceArgs, TrainArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::GenData(args) => gen_data(args, seed),
        Command::Train(args) => train_cmd(args, seed),
        Command::Embed(args) => embed(args),
        Command::Query(args) => query(args),
        Command::Eval(args) => eval(args, seed),
        Command::Bench(args) => bench(args, seed),
        Command::Trace(args) => trace(args),
        Command::ShapeHist(args) => shape_hist(args, seed),
    }
}

fn load_normalized(path: &Path) -> Result<TriangleMesh> {
    let (mesh, report) = load_mesh(path, None).with_context(|| format!("loading {}", path.display()))?;
    if report.dropped_faces > 0 {
        log::warn!("{}: dropped {} degenerate faces", path.display(), report.dropped_faces);
    }
    mesh.normalized()
        .with_context(|| format!("normalising {}", path.display()))
}

fn make_oracle(mesh: &TriangleMesh, args: &OracleArgs) -> Result<Box<dyn DistanceOracle>> {
    Ok(match args.oracle {
        OracleKind::Graph => Box::new(GraphOracle::new(mesh)),
        OracleKind::Steiner => Box::new(SteinerOracle::new(mesh, args.steiner_points)),
        OracleKind::Biharmonic => Box::new(BiharmonicOracle::new(build_spectral_basis(mesh, args.modes)?)),
    })
}

fn load_model(path: &Path) -> Result<Model<f32>> {
    Ok(TrainState::load(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))?
        .model)
}

fn open_session(args: &ModelArgs) -> Result<(TriangleMesh, QuerySession)> {
    let mesh = load_normalized(&args.mesh)?;
    let model = load_model(&args.checkpoint)?;
    let table = match &args.embedding {
        Some(p) => EmbeddingTable::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => precompute_embedding(&model, &mesh)?,
    };
    let session = QuerySession::for_mesh(table, &model, &mesh)?;
    Ok((mesh, session))
}

fn mesh_stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .with_context(|| format!("{} has no file name", path.display()))
}

fn gen_data(args: GenDataArgs, seed: u64) -> Result<()> {
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut failures = 0;
    for path in &args.meshes {
        let result = (|| -> Result<()> {
            let mesh = load_normalized(path)?;
            let oracle = make_oracle(&mesh, &args.oracle)?;
            let sampled = sample_pairs(&mesh, args.sources, args.dests, oracle.as_ref(), seed)?;
            let stem = mesh_stem(path)?;
            sampled.set.save(args.out.join(format!("{stem}.gset")))?;
            write_obj(args.out.join(format!("{stem}.obj")), &mesh)?;
            println!(
                "{}: vertices {} pairs {} dropped {}",
                path.display(),
                mesh.vertex_count(),
                sampled.set.len(),
                sampled.dropped
            );
            Ok(())
        })();
        if let Err(e) = result {
            eprintln!("error: {}: {e:#}", path.display());
            failures += 1;
        }
    }
    if failures > 0 {
        bail!("{failures} of {} meshes failed", args.meshes.len());
    }
    Ok(())
}

/// Pairs each `<name>.gset` in `dir` with the normalised `<name>.obj` next
/// to it. The meshes are stored normalised, so they are loaded as-is.
fn load_training_data(dir: &Path) -> Result<Vec<(TriangleMesh, GeodesicSampleSet)>> {
    let entries = fs::read_dir(dir).with_context(|| format!("reading data directory {}", dir.display()))?;
    let mut sets: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "gset"))
        .collect();
    sets.sort();
    if sets.is_empty() {
        bail!("no .gset files in {}", dir.display());
    }
    sets.iter()
        .map(|set| {
            let mesh_path = set.with_extension("obj");
            let (mesh, _) = load_mesh(&mesh_path, None)
                .with_context(|| format!("loading {}", mesh_path.display()))?;
            let samples = GeodesicSampleSet::load(set).with_context(|| format!("loading {}", set.display()))?;
            Ok((mesh, samples))
        })
        .collect()
}

fn train_cmd(args: TrainArgs, seed: u64) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => TrainConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => TrainConfig::default(),
    };
    config.seed = seed;
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if args.steps_per_epoch.is_some() {
        config.steps_per_epoch = args.steps_per_epoch;
    }
    config.validate()?;
    let data = load_training_data(&args.data)?;
    let outputs = TrainOutputs {
        log_path: Some(args.out.join("train_log.jsonl")),
        checkpoint_dir: Some(args.out.clone()),
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let meshes = data.len();
    let run = train(data, &config, &outputs)?;
    println!(
        "trained {} steps on {meshes} meshes; checkpoints in {}",
        run.state.step(),
        args.out.display()
    );
    if let Some(last) = run.epochs.last() {
        println!("final train MRE {:.6}", last.train_mre);
    }
    Ok(())
}

fn embed(args: EmbedArgs) -> Result<()> {
    let mesh = load_normalized(&args.mesh)?;
    let model = load_model(&args.checkpoint)?;
    let start = Instant::now();
    let table = precompute_embedding(&model, &mesh)?;
    let seconds = start.elapsed().as_secs_f64();
    table.save(&args.out)?;
    println!(
        "embedded {} vertices in {seconds:.4} s -> {}",
        table.vertex_count(),
        args.out.display()
    );
    Ok(())
}

fn read_pairs(path: &Path) -> Result<Vec<(u32, u32)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        let [i, j] = fields[..] else {
            bail!("{}:{}: expected two vertex indices", path.display(), n + 1);
        };
        let parse = |s: &str| {
            s.parse::<u32>()
                .with_context(|| format!("{}:{}: bad index `{s}`", path.display(), n + 1))
        };
        pairs.push((parse(i)?, parse(j)?));
    }
    Ok(pairs)
}

fn query(args: QueryArgs) -> Result<()> {
    let table = EmbeddingTable::load(&args.embedding)
        .with_context(|| format!("loading {}", args.embedding.display()))?;
    if let Some(mesh) = &args.mesh {
        table.check_mesh(&load_normalized(mesh)?)?;
    }
    let model = load_model(&args.checkpoint)?;
    let session = QuerySession::new(table, &model)?;
    let mut pairs = args.pairs;
    if let Some(p) = &args.pairs_file {
        pairs.extend(read_pairs(p)?);
    }
    let distances = session.query_batch(&pairs)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for d in distances {
        writeln!(out, "{d}")?;
    }
    out.flush()?;
    Ok(())
}

fn eval(args: EvalArgs, seed: u64) -> Result<()> {
    let mesh = load_normalized(&args.mesh)?;
    let reference = make_oracle(&mesh, &args.oracle)?;
    let model_session = match args.predictor {
        Predictor::Model => {
            let Some(checkpoint) = &args.checkpoint else {
                bail!("--checkpoint is required when the predictor is the model");
            };
            let (_, s) = open_session(&ModelArgs {
                checkpoint: checkpoint.clone(),
                mesh: args.mesh.clone(),
                embedding: args.embedding.clone(),
            })?;
            Some(s)
        }
        Predictor::Oracle => None,
    };
    let predictor: &dyn DistanceOracle = match &model_session {
        Some(s) => s,
        None => reference.as_ref(),
    };
    let sources = args.sources.min(mesh.vertex_count());
    let mre = evaluate_mre(predictor, reference.as_ref(), sources, seed, args.epsilon)?;
    println!("MRE {mre:.6} over {sources} sources");
    if let (Some(source), Some(out)) = (args.field_source, &args.field_out) {
        write_ply_with_quality(out, &mesh, &predictor.distance_field(source)?)?;
        println!("field from vertex {source} -> {}", out.display());
    }
    if let Some((p, q)) = args.violations {
        let bad = triangle_violations(predictor, p as usize, q as usize)?;
        println!(
            "triangle violations for ({p}, {q}): {} of {} vertices ({:.4}%)",
            bad.len(),
            mesh.vertex_count(),
            100.0 * bad.len() as f64 / mesh.vertex_count() as f64
        );
        if let Some(out) = &args.violations_out {
            write_ply_with_quality(out, &mesh, &violation_mask(&bad, mesh.vertex_count()))?;
        }
    }
    Ok(())
}

fn bench(args: BenchArgs, seed: u64) -> Result<()> {
    let mesh = load_normalized(&args.mesh)?;
    let model = load_model(&args.checkpoint)?;
    let config = BenchmarkConfig {
        batch_sizes: args.batch_sizes,
        queries: args.queries,
        repeats: args.repeats,
        seed,
    };
    let reports = benchmark(&model, &mesh, &config)?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    for r in &reports {
        writeln!(out, "{}", serde_json::to_string(r)?)?;
    }
    out.flush()?;
    Ok(())
}

fn trace(args: TraceArgs) -> Result<()> {
    if args.source == args.target {
        bail!("source and target are the same vertex");
    }
    let (mesh, session) = open_session(&args.model)?;
    match trace_geodesic_path(&mesh, &session, args.source, args.target, args.max_steps) {
        Ok(path) => {
            path.save_obj(&args.out)?;
            println!(
                "path with {} points, length {:.6} -> {}",
                path.points.len(),
                path.total_length(),
                args.out.display()
            );
            Ok(())
        }
        Err(Error::PartialPath(path)) => {
            path.save_obj(&args.out)?;
            bail!(
                "path tracing stopped after {} points; partial path written to {}",
                path.points.len(),
                args.out.display()
            )
        }
        Err(e) => Err(e.into()),
    }
}

fn shape_hist(args: ShapeHistArgs, seed: u64) -> Result<()> {
    let (_, session) = open_session(&args.model)?;
    let hist = shape_distribution(&session, args.pairs, args.bins, seed)?;
    hist.save_text(&args.out)?;
    println!("{} samples in {} bins -> {}", hist.total(), hist.bins(), args.out.display());
    if let Some(other) = &args.compare {
        let (_, other_session) = open_session(&ModelArgs {
            checkpoint: args.model.checkpoint.clone(),
            mesh: other.clone(),
            embedding: None,
        })?;
        let other_hist = shape_distribution(&other_session, args.pairs, args.bins, seed)?;
        println!("L1 distance {:.6}", compare_distributions(&hist, &other_hist)?);
    }
    Ok(())
}
