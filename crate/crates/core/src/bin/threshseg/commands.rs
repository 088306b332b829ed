use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use threshseg::image_io::{self, LabelMap, RawImage};
use threshseg::oracle;
use threshseg::solver::{self, initialize, IterationReport, SolveResult, Solver, StopReason};
use threshseg::{Error, ImageField, Partition, Result, SolverConfig};

use crate::args::{BenchArgs, PhantomArgs, SegmentArgs, SweepArgs};
use crate::exit;

pub const ENERGY_HEADER: &str = "k,fidelity,perimeter,total,e_k,wall_ms";

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub input: PathBuf,
    pub config: SolverConfig,
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: String,
    pub wall_time: f64,
    pub final_energy: f64,
    pub final_fidelity: f64,
    pub final_perimeter: f64,
    pub misclassification: Option<f64>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn energy_csv(reports: &[IterationReport]) -> String {
    let mut s = format!("{ENERGY_HEADER}\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:.3}",
            r.k,
            r.energy.fidelity_total,
            r.energy.perimeter_total,
            r.energy.total,
            r.e_k,
            r.wall_time * 1e3
        );
    }
    s
}

fn load_truth(path: Option<&Path>, phases: usize) -> Result<Option<LabelMap>> {
    path.map(|p| image_io::load_label_map(p, &image_io::default_palette(phases)))
        .transpose()
}

struct Input {
    path: PathBuf,
    raw: RawImage,
    field: ImageField,
}

fn load_input(path: &Path) -> Result<Input> {
    let raw = image_io::load_image(path)?;
    let field = image_io::normalize(&raw)?;
    Ok(Input {
        path: path.to_path_buf(),
        raw,
        field,
    })
}

struct Outcome {
    result: SolveResult,
    manifest: RunManifest,
}

fn write_labels(u: &Partition, path: &Path) -> Result<()> {
    let map = LabelMap::from_partition(u);
    image_io::write_label_map(&map, &image_io::default_palette(u.phases()), path)
}

/// Solves and writes every per-run artifact into `dir`.
fn run_one(
    input: &Input,
    config: &SolverConfig,
    dir: &Path,
    truth: Option<&LabelMap>,
) -> Result<Outcome> {
    create_dir(dir)?;
    let start = Instant::now();
    let result = match solver::solve(&input.field, config) {
        Ok(r) => r,
        Err(Error::DecayViolation(v)) => {
            write_labels(&v.previous, &dir.join("decay_prev.png"))?;
            write_labels(&v.current, &dir.join("decay_curr.png"))?;
            write_file(&dir.join("energy.csv"), energy_csv(&v.partial.reports))?;
            return Err(Error::DecayViolation(v));
        }
        Err(e) => return Err(e),
    };
    let wall_time = start.elapsed().as_secs_f64();

    let map = LabelMap::from_partition(&result.final_partition);
    let mut files = Vec::new();
    let labels_path = dir.join("labels.png");
    image_io::write_label_map(
        &map,
        &image_io::default_palette(config.phases),
        &labels_path,
    )?;
    files.push(labels_path);
    files.extend(image_io::write_phase_masks(&map, dir)?);
    let overlay_path = dir.join("overlay.png");
    image_io::write_contour_overlay(&input.raw, &map, &overlay_path)?;
    files.push(overlay_path);
    let csv_path = dir.join("energy.csv");
    write_file(&csv_path, energy_csv(&result.reports))?;
    files.push(csv_path);
    let manifest_path = dir.join("manifest.json");
    files.push(manifest_path.clone());

    let misclassification = truth
        .map(|t| oracle::misclassification_rate(&map, t))
        .transpose()?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        input: input.path.clone(),
        config: config.clone(),
        output_dir: dir.to_path_buf(),
        files: files
            .iter()
            .map(|p| p.strip_prefix(dir).unwrap_or(p).to_path_buf())
            .collect(),
        iterations: result.iterations(),
        converged: result.converged,
        stop_reason: stop_name(result.stop_reason).to_string(),
        wall_time,
        final_energy: result.final_energy.total,
        final_fidelity: result.final_energy.fidelity_total,
        final_perimeter: result.final_energy.perimeter_total,
        misclassification,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&manifest_path, json + "\n")?;
    Ok(Outcome { result, manifest })
}

fn stop_name(reason: StopReason) -> &'static str {
    match reason {
        StopReason::ToleranceMet => "tolerance-met",
        StopReason::MaxIter => "max-iter",
        StopReason::DecayViolationAbort => "decay-violation",
    }
}

fn status_code(result: &SolveResult) -> u8 {
    if result.converged {
        exit::OK
    } else {
        exit::MAX_ITER
    }
}

pub fn segment(args: SegmentArgs) -> Result<u8> {
    let (input_path, config) = match &args.manifest {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Unreadable {
                path: path.clone(),
                source,
            })?;
            let m: RunManifest = serde_json::from_str(&text)
                .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
            (m.input, m.config)
        }
        None => (
            args.input
                .clone()
                .expect("clap requires --input without --manifest"),
            args.solver.config(),
        ),
    };
    config.validate()?;
    let input = load_input(&input_path)?;
    let truth = load_truth(args.truth.as_deref(), config.phases)?;
    let out = run_one(&input, &config, &args.output_dir, truth.as_ref())?;
    println!(
        "{}: {} after {} iterations, E = {}",
        input_path.display(),
        out.manifest.stop_reason,
        out.manifest.iterations,
        out.manifest.final_energy
    );
    if let Some(m) = out.manifest.misclassification {
        println!("misclassification: {m}");
    }
    Ok(status_code(&out.result))
}

pub fn phantom(args: PhantomArgs) -> Result<u8> {
    let p = oracle::make_phantom(args.kind, args.size, args.sigma, args.seed)?;
    create_dir(&args.output_dir)?;
    let image_path = args.output_dir.join(format!("{}.png", args.kind.name()));
    let truth_path = args
        .output_dir
        .join(format!("{}_truth.png", args.kind.name()));
    image_io::write_png(&RawImage::from_field(&p.image)?, &image_path)?;
    image_io::write_label_map(
        &p.truth,
        &image_io::default_palette(p.truth.phases),
        &truth_path,
    )?;
    println!("{}", image_path.display());
    println!("{}", truth_path.display());
    Ok(exit::OK)
}

pub fn sweep(args: SweepArgs) -> Result<u8> {
    if args.lambdas.is_empty() && args.dts.is_empty() {
        return Err(Error::InvalidArgument(
            "sweep needs at least one --lambda or --dt value".into(),
        ));
    }
    let base = SolverConfig {
        phases: args.phases as usize,
        tau: args.tau,
        max_iter: args.max_iter,
        init: args.init,
        seed: args.seed,
        assert_decay: args.assert_decay == crate::args::Switch::On,
        ..SolverConfig::default()
    };
    let lambdas = if args.lambdas.is_empty() {
        vec![base.lambda]
    } else {
        args.lambdas.clone()
    };
    let dts = if args.dts.is_empty() {
        vec![base.dt]
    } else {
        args.dts.clone()
    };
    let points: Vec<SolverConfig> = lambdas
        .iter()
        .flat_map(|&lambda| dts.iter().map(move |&dt| (lambda, dt)))
        .map(|(lambda, dt)| SolverConfig {
            lambda,
            dt,
            ..base.clone()
        })
        .collect();
    for c in &points {
        c.validate()?;
    }

    let input = load_input(&args.input)?;
    let truth = load_truth(args.truth.as_deref(), base.phases)?;
    create_dir(&args.output_dir)?;
    let mut summary = String::from(
        "lambda,dt,iterations,converged,final_energy,perimeter,misclassification,dir\n",
    );
    let mut code = exit::OK;
    for c in &points {
        let name = format!("lambda_{}_dt_{}", c.lambda, c.dt);
        let out = run_one(&input, c, &args.output_dir.join(&name), truth.as_ref())?;
        let m = &out.manifest;
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{},{}",
            c.lambda,
            c.dt,
            m.iterations,
            m.converged,
            m.final_energy,
            m.final_perimeter,
            m.misclassification
                .map(|v| v.to_string())
                .unwrap_or_default(),
            name
        );
        code = code.max(status_code(&out.result));
    }
    let summary_path = args.output_dir.join("summary.csv");
    write_file(&summary_path, summary)?;
    println!("{}", summary_path.display());
    Ok(code)
}

fn bench_solver<'a>(args: &BenchArgs, image: &'a ImageField) -> Result<Solver<'a>> {
    let config = SolverConfig {
        phases: args.kind.phases(),
        dt: args.dt,
        lambda: args.lambda,
        seed: args.seed,
        assert_decay: false,
        ..SolverConfig::default()
    };
    config.validate()?;
    let initial = initialize(image, config.phases, config.init, config.seed)?;
    let mut s = Solver::new(image, config, initial)?;
    s.step(0)?;
    Ok(s)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Sizes are timed in alternating repetitions of one warm iteration each.
pub fn bench(args: BenchArgs) -> Result<u8> {
    create_dir(&args.output_dir)?;
    let phantoms = args
        .sizes
        .iter()
        .map(|&size| oracle::make_phantom(args.kind, size, args.sigma, args.seed))
        .collect::<Result<Vec<_>>>()?;
    let mut solvers = phantoms
        .iter()
        .map(|p| bench_solver(&args, &p.image))
        .collect::<Result<Vec<_>>>()?;
    let mut times = vec![Vec::new(); solvers.len()];
    for k in 1..=args.reps as usize {
        for (s, t) in solvers.iter_mut().zip(times.iter_mut()) {
            let start = Instant::now();
            s.step(k)?;
            t.push(start.elapsed().as_secs_f64());
        }
    }
    let mut csv = String::from("size,reps,mean_ms,median_ms,min_ms\n");
    for (&size, t) in args.sizes.iter().zip(times) {
        let mean = t.iter().sum::<f64>() / t.len() as f64;
        let min = t.iter().copied().fold(f64::INFINITY, f64::min);
        let med = median(t);
        let _ = writeln!(
            csv,
            "{size},{},{:.4},{:.4},{:.4}",
            args.reps,
            mean * 1e3,
            med * 1e3,
            min * 1e3
        );
        println!("{size}x{size}: {:.3} ms/iteration (median)", med * 1e3);
    }
    let path = args.output_dir.join("bench.csv");
    write_file(&path, csv)?;
    println!("{}", path.display());
    Ok(exit::OK)
}
