use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use geotopo::bordergraph::BorderGraph;
use geotopo::embedding::{initial_embedding, optimize_embedding, OptimizeStats};
use geotopo::metrics::{distance_latency_audit, ks_statistic, tiv_all, Ecdf, LatencyMatrix};
use geotopo::{
    build_border_graph, generate_pfp, AsGraph, DensityGrid, Embedding, Error, LatencyDataset,
    LatencyModel, Model,
};

use crate::config::RunConfig;
use crate::{BuildHArgs, EvalArgs, RouteArgs, Stage, StageArgs, SweepArgs};

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
        .with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            let f = File::create(p)
                .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            Box::new(BufWriter::new(f))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Parameter(format!("missing --{what}")).into())
}

fn load_graph(cfg: &RunConfig) -> Result<AsGraph> {
    let path = required(&cfg.graph, "graph")?;
    let g = AsGraph::read(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    if !g.is_connected() {
        eprintln!("warning: graph {} is not connected", path.display());
    }
    Ok(g)
}

fn load_grid(cfg: &RunConfig) -> Result<DensityGrid> {
    match &cfg.grid {
        Some(path) => {
            Ok(DensityGrid::read(open(path)?).with_context(|| format!("reading {}", path.display()))?)
        }
        None => {
            eprintln!("warning: no density grid given, sampling uniformly over the globe");
            Ok(DensityGrid::uniform_world(180, 360)?)
        }
    }
}

fn load_model(cfg: &RunConfig) -> Result<Model> {
    let graph = load_graph(cfg)?;
    let path = required(&cfg.embedding_file, "embedding")?;
    let embedding = Embedding::read(open(path)?, graph.node_count())
        .with_context(|| format!("reading {}", path.display()))?;
    match &cfg.border {
        Some(path) => {
            let border = BorderGraph::read(open(path)?, &graph, &embedding, cfg.l_max)
                .with_context(|| format!("reading {}", path.display()))?;
            Ok(Model {
                graph,
                embedding,
                border,
            })
        }
        None => Ok(Model::build(graph, embedding, cfg.l_max)?),
    }
}

fn load_dataset(cfg: &RunConfig, key: &str) -> Result<LatencyDataset> {
    let path = match key {
        "devices" => required(&cfg.devices, "devices")?,
        _ => required(&cfg.dataset, "dataset")?,
    };
    LatencyDataset::read(open(path)?).with_context(|| format!("reading {}", path.display()))
}

pub fn generate(args: &StageArgs) -> Result<()> {
    let cfg = args.params.resolve(Stage::Graph)?;
    let g = generate_pfp(&cfg.pfp, cfg.graph_seed)?;
    let mut w = output(args.out.as_deref())?;
    writeln!(w, "# geotopo generate")?;
    write!(w, "{}", cfg.render("# "))?;
    g.write(&mut w)?;
    w.flush()?;

    let degrees = g.degrees();
    let low = degrees.iter().filter(|&&d| d <= 2).count();
    eprintln!(
        "nodes {} edges {} max_degree {} mean_degree {:.3} degree_le_2 {:.3} connected {}",
        g.node_count(),
        g.edge_count(),
        g.max_degree(),
        2.0 * g.edge_count() as f64 / g.node_count() as f64,
        low as f64 / g.node_count() as f64,
        g.is_connected()
    );
    Ok(())
}

fn stats_block(stats: &OptimizeStats) -> String {
    format!(
        "stats iterations {}\nstats accepted_swaps {}\nstats same_as_draws {}\n\
         stats compactness_rejections {}\nstats trailing_unchanged {}\n\
         stats max_compactness_km {}\nstats compactness_violations {}\n",
        stats.iterations,
        stats.accepted_swaps,
        stats.same_as_draws,
        stats.compactness_rejections,
        stats.trailing_unchanged,
        stats.max_compactness,
        stats.compactness_violations
    )
}

fn embed_graph(g: &AsGraph, grid: &DensityGrid, cfg: &RunConfig) -> Result<(Embedding, OptimizeStats)> {
    let initial = initial_embedding(g, grid, &cfg.embedding, cfg.embed_seed)?;
    // The optimizer draws from its own stream so the initial draw and the swaps
    // stay independent.
    Ok(optimize_embedding(g, initial, &cfg.embedding, cfg.embed_seed.wrapping_add(1))?)
}

pub fn embed(args: &StageArgs) -> Result<()> {
    let cfg = args.params.resolve(Stage::Embed)?;
    let g = load_graph(&cfg)?;
    let grid = load_grid(&cfg)?;
    let (e, stats) = embed_graph(&g, &grid, &cfg)?;
    let block = stats_block(&stats);
    let mut w = output(args.out.as_deref())?;
    writeln!(w, "# geotopo embed")?;
    write!(w, "{}", cfg.render("# "))?;
    for line in block.lines() {
        writeln!(w, "# {line}")?;
    }
    e.write(&mut w)?;
    w.flush()?;
    eprint!("locations {}\n{block}", e.location_count());
    if stats.compactness_violations > 0 {
        eprintln!(
            "warning: {} ASes exceed c_max; consider another --seed",
            stats.compactness_violations
        );
    }
    Ok(())
}

pub fn build_h(args: &BuildHArgs) -> Result<()> {
    let cfg = args.stage.params.resolve(Stage::None)?;
    let graph = load_graph(&cfg)?;
    let path = required(&cfg.embedding_file, "embedding")?;
    let e = Embedding::read(open(path)?, graph.node_count())
        .with_context(|| format!("reading {}", path.display()))?;
    let h = build_border_graph(&graph, &e, cfg.l_max)?;
    let mut w = output(args.stage.out.as_deref())?;
    writeln!(w, "# geotopo build-h l_max = {}", cfg.l_max)?;
    h.write(&mut w, &e, !args.no_intra)?;
    w.flush()?;
    eprintln!(
        "intra {} inter {} fallback {}",
        h.intra_edge_count(),
        h.inter_edges().len() - h.fallback_count(),
        h.fallback_count()
    );
    Ok(())
}

fn device_index(lm: &LatencyModel, name: &str) -> Result<usize> {
    lm.devices()
        .iter()
        .position(|d| d.name == name)
        .ok_or_else(|| Error::Parameter(format!("unknown device `{name}`")).into())
}

pub fn route(args: &RouteArgs) -> Result<()> {
    let cfg = args.stage.params.resolve(Stage::Attach)?;
    let model = load_model(&cfg)?;
    let devices = load_dataset(&cfg, "devices")?.devices()?;
    let lm = LatencyModel::new(&model, devices, cfg.routing, cfg.attach_seed)?;
    let n = lm.devices().len();
    let pairs: Vec<(usize, usize)> = match (&args.from, &args.to) {
        (Some(a), Some(b)) => vec![(device_index(&lm, a)?, device_index(&lm, b)?)],
        (Some(a), None) => {
            let i = device_index(&lm, a)?;
            (0..n).filter(|&j| j != i).map(|j| (i, j)).collect()
        }
        (None, Some(b)) => {
            let j = device_index(&lm, b)?;
            (0..n).filter(|&i| i != j).map(|i| (i, j)).collect()
        }
        (None, None) => (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect(),
    };
    let mut w = output(args.stage.out.as_deref())?;
    for (i, j) in pairs {
        let path = lm.route(i, j)?;
        let locs: Vec<String> = path.locations.iter().map(|l| l.to_string()).collect();
        writeln!(
            w,
            "route {} {} {}",
            lm.devices()[i].name,
            lm.devices()[j].name,
            locs.join(" ")
        )?;
    }
    w.flush()?;
    Ok(())
}

fn report_attachments(lm: &LatencyModel) {
    let fallbacks = lm.attachments().iter().filter(|a| a.fallback).count();
    if fallbacks > 0 {
        eprintln!(
            "warning: {fallbacks} devices had no location within h_max and use the nearest one"
        );
    }
}

pub fn latency_matrix(args: &StageArgs) -> Result<()> {
    let cfg = args.params.resolve(Stage::Attach)?;
    let model = load_model(&cfg)?;
    let devices = load_dataset(&cfg, "devices")?.devices()?;
    let lm = LatencyModel::new(&model, devices, cfg.routing, cfg.attach_seed)?;
    report_attachments(&lm);
    let matrix = lm.latency_matrix()?;
    let mut w = output(args.out.as_deref())?;
    lm.write_matrix(&matrix, &mut w)?;
    w.flush()?;
    Ok(())
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut dyn Write) -> geotopo::Result<()>) -> Result<()> {
    let path = dir.join(name);
    let mut w = output(Some(&path))?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Model latencies over the dataset's support, next to the dataset matrix.
fn model_vs_dataset(
    cfg: &RunConfig,
    model: &Model,
    ds: &LatencyDataset,
) -> Result<(LatencyMatrix, LatencyMatrix, usize)> {
    let devices = ds.devices()?;
    let lm = LatencyModel::new(model, devices, cfg.routing, cfg.attach_seed)?;
    report_attachments(&lm);
    let fallbacks = lm.attachments().iter().filter(|a| a.fallback).count();
    let measured = ds.to_matrix(cfg.symmetric_fallback);
    let full = LatencyMatrix::from_dense(ds.len(), lm.latency_matrix()?)?;
    Ok((full.restricted_to(&measured), measured, fallbacks))
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let cfg = args.params.resolve(Stage::Attach)?;
    let model = load_model(&cfg)?;
    let ds = load_dataset(&cfg, "dataset")?;
    let (modeled, measured, fallbacks) = model_vs_dataset(&cfg, &model, &ds)?;

    let lat_model = Ecdf::new(&modeled.defined_values())?;
    let lat_data = Ecdf::new(&measured.defined_values())?;
    let ks_latency = ks_statistic(&modeled.defined_values(), &measured.defined_values())?;

    let tiv = |m: &LatencyMatrix| -> Vec<f64> { tiv_all(m).into_iter().map(|(_, _, s)| s).collect() };
    let tiv_model_values = tiv(&modeled);
    let tiv_data_values = tiv(&measured);
    let tiv_model = Ecdf::new(&tiv_model_values)?;
    let tiv_data = Ecdf::new(&tiv_data_values)?;
    let ks_tiv = ks_statistic(&tiv_model_values, &tiv_data_values)?;
    let violating = |v: &[f64]| v.iter().filter(|&&s| s > 0.0).count();

    let audit = distance_latency_audit(&ds, cfg.routing.n_f, cfg.routing.c_light);

    let dir = &args.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    write_file(dir, "latency_model.ecdf", |w| lat_model.write(w))?;
    write_file(dir, "latency_dataset.ecdf", |w| lat_data.write(w))?;
    write_file(dir, "tiv_model.ecdf", |w| tiv_model.write(w))?;
    write_file(dir, "tiv_dataset.ecdf", |w| tiv_data.write(w))?;
    write_file(dir, "audit.txt", |w| audit.write(&ds, w))?;
    write_file(dir, "config.txt", |w| Ok(w.write_all(cfg.render("").as_bytes())?))?;

    let report = format!(
        "hosts {}\npairs {}\nattachment_fallbacks {}\nks_latency {}\nks_tiv {}\n\
         tiv_pairs_model {}\ntiv_pairs_dataset {}\naudit_points {}\naudit_infeasible {}\n\
         audit_skipped {}\nborder_fallback_edges {}\n",
        ds.len(),
        lat_data.len(),
        fallbacks,
        ks_latency,
        ks_tiv,
        violating(&tiv_model_values),
        violating(&tiv_data_values),
        audit.points.len(),
        audit.infeasible_count(),
        audit.skipped,
        model.border.fallback_count(),
    );
    write_file(dir, "report.txt", |w| {
        w.write_all(report.as_bytes())?;
        Ok(w.write_all(cfg.render("config ").as_bytes())?)
    })?;
    print!("{report}");
    Ok(())
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let base = args.stage.params.resolve(Stage::Embed)?;
    let graph = load_graph(&base)?;
    let grid = load_grid(&base)?;
    let ds = load_dataset(&base, "dataset")?;
    let mut rows = Vec::new();
    for &n in &args.n_values {
        for &max_locations in &args.max_location_values {
            for &c_max in &args.cmax_values {
                let mut cfg = base.clone();
                cfg.embedding.n = n;
                cfg.embedding.max_locations = max_locations;
                cfg.embedding.c_max = c_max;
                cfg.validate()?;
                let (e, stats) = embed_graph(&graph, &grid, &cfg)?;
                let model = Model::build(graph.clone(), e, cfg.l_max)?;
                let (modeled, measured, _) = model_vs_dataset(&cfg, &model, &ds)?;
                let d = ks_statistic(&modeled.defined_values(), &measured.defined_values())?;
                eprintln!("n {n} N {max_locations} c_max {c_max}: ks {d}");
                rows.push((d, n, max_locations, c_max, stats));
            }
        }
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut w = output(args.stage.out.as_deref())?;
    writeln!(w, "# rank n N c_max ks_latency accepted_swaps compactness_violations")?;
    for (rank, (d, n, big_n, c_max, stats)) in rows.iter().enumerate() {
        writeln!(
            w,
            "sweep {} {n} {big_n} {c_max} {d} {} {}",
            rank + 1,
            stats.accepted_swaps,
            stats.compactness_violations
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn audit(args: &StageArgs) -> Result<()> {
    let cfg = args.params.resolve(Stage::None)?;
    let ds = load_dataset(&cfg, "dataset")?;
    let audit = distance_latency_audit(&ds, cfg.routing.n_f, cfg.routing.c_light);
    let mut w = output(args.out.as_deref())?;
    audit.write(&ds, &mut w)?;
    w.flush()?;
    eprintln!(
        "points {} infeasible {} skipped {}",
        audit.points.len(),
        audit.infeasible_count(),
        audit.skipped
    );
    Ok(())
}
