use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use curvirom::config::{parse_dims, RunSettings};
use curvirom::dataset::{generate_lhs, Dataset};
use curvirom::export;
use curvirom::geometry::{build_boundary, GeometryParams, ParamBounds};
use curvirom::mesh::generate_mesh;
use curvirom::multilevel::level_dims;
use curvirom::surrogate::{aggregate, evaluate, sample_metrics, train_thermal, Metrics, Mode, ThermalSurrogate};
use curvirom::thermal::{field_residual, solve_laplace};

#[derive(Parser, Debug)]
#[command(name = "curvirom", version, about = "Body-fitted meshing and multi-level POD/GP thermal surrogates")]
struct Cli {
    /// Flat TOML file of run settings.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Reject parameters outside the reference bounds.
    #[arg(long, global = true)]
    strict: bool,
    #[arg(long, global = true, value_parser = ["multi", "single"])]
    mode: Option<String>,
    #[arg(long, global = true)]
    levels: Option<usize>,
    /// Coarsest grid as HxW node counts.
    #[arg(long, global = true, value_name = "HxW")]
    base_dims: Option<String>,
    #[arg(long, global = true, env = "CURVIROM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ParamsArg {
    /// Five values x1,y1,y2,y3,y4 (mm) or `x1=..., y1=...`.
    #[arg(long, conflicts_with = "params_file")]
    params: Option<String>,
    /// File holding the parameters in either form.
    #[arg(long, value_name = "FILE")]
    params_file: Option<PathBuf>,
}

impl ParamsArg {
    fn resolve(&self) -> Result<GeometryParams> {
        let text = match (&self.params, &self.params_file) {
            (Some(p), _) => p.clone(),
            (None, Some(f)) => std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?,
            (None, None) => bail!("give --params or --params-file"),
        };
        Ok(GeometryParams::parse(&text)?)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Relax a body-fitted mesh and write it out.
    Mesh {
        #[command(flatten)]
        params: ParamsArg,
        /// Grid as HxW; defaults to the finest hierarchy level.
        #[arg(long, value_name = "HxW")]
        dims: Option<String>,
        /// Output file name in --out; .vtk or .csv.
        #[arg(long, default_value = "mesh.vtk")]
        file: String,
    },
    /// Finite-difference temperature solve on the relaxed mesh.
    Solve {
        #[command(flatten)]
        params: ParamsArg,
        #[arg(long, value_name = "HxW")]
        dims: Option<String>,
        #[arg(long, default_value = "solution.vtk")]
        file: String,
    },
    /// LHS sample geometries and write ground truth into --out.
    GenerateDataset {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Split a dataset and train a surrogate bundle into --out.
    Train {
        #[arg(long, value_name = "DIR")]
        dataset: PathBuf,
        #[arg(long)]
        train_fraction: Option<f64>,
    },
    /// Surrogate temperature on the body-fitted mesh.
    Predict {
        #[arg(long, value_name = "DIR")]
        surrogate: PathBuf,
        #[command(flatten)]
        params: ParamsArg,
        #[arg(long, default_value = "prediction.vtk")]
        file: String,
    },
    /// MAE/MRE against finite-difference truth.
    Evaluate {
        #[arg(long, value_name = "DIR")]
        dataset: PathBuf,
        /// Surrogate bundle; samples it was trained on are skipped unless --all.
        #[arg(long, value_name = "DIR", required_unless_present = "predictions")]
        surrogate: Option<PathBuf>,
        /// Dataset whose finest fields are taken as predictions, matched by id.
        #[arg(long, value_name = "DIR", conflicts_with = "surrogate")]
        predictions: Option<PathBuf>,
        #[arg(long)]
        all: bool,
    },
    /// Write one dataset sample's truth field on its mesh.
    Export {
        #[arg(long, value_name = "DIR")]
        dataset: PathBuf,
        #[arg(long)]
        id: usize,
        /// Also write the surrogate prediction for the same sample.
        #[arg(long, value_name = "DIR")]
        surrogate: Option<PathBuf>,
        #[arg(long, default_value = "vtk", value_parser = ["vtk", "csv"])]
        format: String,
    },
}

fn settings(cli: &Cli) -> Result<RunSettings> {
    let mut s = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunSettings::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => RunSettings::default(),
    };
    if let Some(v) = cli.seed {
        s.seed = v;
    }
    if cli.strict {
        s.strict = true;
    }
    if let Some(m) = &cli.mode {
        s.mode = m.parse::<Mode>()?;
    }
    if let Some(v) = cli.levels {
        s.levels = v;
    }
    if let Some(v) = &cli.base_dims {
        s.base_dims = v.clone();
    }
    if let Some(v) = cli.threads {
        s.threads = v;
    }
    if let Command::GenerateDataset { samples: Some(n) } = cli.command {
        s.samples = n;
    }
    if let Command::Train { train_fraction: Some(f), .. } = cli.command {
        s.train_fraction = f;
    }
    s.validate()?;
    Ok(s)
}

fn out_file(out: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out.join(name))
}

fn grid_dims(s: &RunSettings, dims: &Option<String>) -> Result<(usize, usize)> {
    Ok(match dims {
        Some(d) => parse_dims(d)?,
        None => *level_dims(s.dims()?, s.levels).last().expect("levels >= 1"),
    })
}

fn checked_params(s: &RunSettings, p: &ParamsArg) -> Result<GeometryParams> {
    let params = p.resolve()?;
    if s.strict {
        params.validate(&ParamBounds::reference())?;
    } else if !params.is_within(&ParamBounds::reference()) {
        log::warn!("parameters {params} lie outside the reference bounds");
    }
    Ok(params)
}

fn print_metrics(m: &Metrics, out: &Path) -> Result<()> {
    let n_oor = m.per_sample.iter().filter(|s| s.out_of_range).count();
    println!("samples  {}", m.per_sample.len());
    println!("MAE      {:.4} K", m.mae);
    println!("MRE      {:.4} %", 100.0 * m.mre);
    if n_oor > 0 {
        println!("flagged  {n_oor} out-of-range samples");
    }
    let mut csv = String::from("id,mae_k,mre,max_abs_k,out_of_range\n");
    for s in &m.per_sample {
        writeln!(csv, "{},{:e},{:e},{:e},{}", s.id, s.mae, s.mre, s.max_abs, s.out_of_range)?;
    }
    let path = out_file(out, "evaluation.csv")?;
    std::fs::write(&path, csv)?;
    std::fs::write(out.join("evaluation.json"), serde_json::to_string_pretty(m)? + "\n")?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let s = settings(cli)?;
    log::info!("resolved config:\n{}", s.to_toml());
    if s.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(s.threads).build_global()?;
    }
    let out = &cli.out;
    match &cli.command {
        Command::Mesh { params, dims, file } => {
            let p = checked_params(&s, params)?;
            let (n_eta, n_xi) = grid_dims(&s, dims)?;
            let boundary = build_boundary(&p, n_xi, n_eta, s.strict)?;
            let t = Instant::now();
            let r = generate_mesh(&boundary, &s.relax())?;
            println!("grid          {n_eta}x{n_xi}");
            println!("sweeps        {}", r.sweeps);
            println!("loss          {:.3e}", r.loss);
            println!("min jacobian  {:.6e}", r.min_jacobian);
            println!("time          {:.3} s", t.elapsed().as_secs_f64());
            let path = out_file(out, file)?;
            export::write(&path, &r.mesh, None, &format!("curvirom mesh {p}"))?;
            log::info!("wrote {}", path.display());
        }
        Command::Solve { params, dims, file } => {
            let p = checked_params(&s, params)?;
            let (n_eta, n_xi) = grid_dims(&s, dims)?;
            let boundary = build_boundary(&p, n_xi, n_eta, s.strict)?;
            let mesh = generate_mesh(&boundary, &s.relax())?.mesh;
            let field = solve_laplace(&mesh, &s.boundary_conditions()?, &s.solve())?;
            let lo = field.values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = field.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            println!("grid      {n_eta}x{n_xi}");
            println!("residual  {:.3e}", field_residual(&mesh, &field)?);
            println!("T range   {lo:.4} .. {hi:.4} K");
            let path = out_file(out, file)?;
            export::write(&path, &mesh, Some(&field), &format!("curvirom solution {p}"))?;
            log::info!("wrote {}", path.display());
        }
        Command::GenerateDataset { .. } => {
            let t = Instant::now();
            let ds = generate_lhs(s.samples, &ParamBounds::reference(), s.seed, &s.generation()?)?;
            ds.save(out)?;
            println!("samples   {}", ds.len());
            println!("excluded  {}", ds.manifest().excluded.len());
            println!("levels    {:?}", ds.manifest().dims);
            println!("time      {:.1} s", t.elapsed().as_secs_f64());
        }
        Command::Train { dataset, .. } => {
            let ds = Dataset::load(dataset)?;
            let (train, test) = ds.split(s.train_fraction, s.seed)?;
            let t = Instant::now();
            let sur = train_thermal(&train, &s.train())?;
            sur.save(out)?;
            println!("surrogate  {}", sur.manifest().id);
            println!("train/test {}/{}", train.len(), test.len());
            for l in &sur.manifest().levels {
                println!("level {}    {}x{} grid, {} modes", l.level, l.dims.0, l.dims.1, l.pod_dim);
            }
            println!("time       {:.1} s", t.elapsed().as_secs_f64());
        }
        Command::Predict { surrogate, params, file } => {
            let sur = ThermalSurrogate::load(surrogate)?;
            let p = checked_params(&s, params)?;
            let c = sur.predict_combined(&p)?;
            if c.out_of_range {
                println!("warning: parameters outside the training bounds");
            }
            let path = out_file(out, file)?;
            export::write(&path, &c.mesh, Some(&c.field), &format!("curvirom prediction {p} ({})", c.surrogate_id))?;
            println!("wrote {}", path.display());
        }
        Command::Evaluate { dataset, surrogate, predictions, all } => {
            let ds = Dataset::load(dataset)?;
            let m = if let Some(dir) = surrogate {
                let sur = ThermalSurrogate::load(dir)?;
                let seen: HashSet<usize> = if *all { HashSet::new() } else { sur.manifest().train_ids.iter().copied().collect() };
                let keep: Vec<_> = ds.samples().iter().filter(|x| !seen.contains(&x.id)).cloned().collect();
                if keep.is_empty() {
                    bail!("every dataset sample was used in training; pass --all to evaluate on them");
                }
                let mut manifest = ds.manifest().clone();
                manifest.samples.retain(|e| !seen.contains(&e.id));
                evaluate(&sur, &Dataset::from_parts(manifest, keep)?)?
            } else {
                let pred = Dataset::load(predictions.as_ref().expect("clap requires one"))?;
                let per = ds
                    .samples()
                    .iter()
                    .map(|truth| {
                        let p = pred
                            .samples()
                            .iter()
                            .find(|p| p.id == truth.id)
                            .with_context(|| format!("no prediction for sample {}", truth.id))?;
                        Ok(sample_metrics(truth.id, p.finest(), truth.finest())?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                aggregate(per)?
            };
            print_metrics(&m, out)?;
        }
        Command::Export { dataset, id, surrogate, format } => {
            let ds = Dataset::load(dataset)?;
            let smp = ds
                .samples()
                .iter()
                .find(|x| x.id == *id)
                .with_context(|| format!("dataset has no sample {id}"))?;
            let path = out_file(out, &format!("sample_{id:05}_truth.{format}"))?;
            export::write(&path, &smp.mesh, Some(smp.finest()), &format!("curvirom truth {}", smp.params))?;
            println!("wrote {}", path.display());
            if let Some(dir) = surrogate {
                let sur = ThermalSurrogate::load(dir)?;
                let pred = sur.predict(&smp.params)?;
                let path = out.join(format!("sample_{id:05}_pred.{format}"));
                export::write(&path, &smp.mesh, Some(&pred.field), &format!("curvirom prediction {}", smp.params))?;
                let m = sample_metrics(*id, &pred.field, smp.finest())?;
                println!("wrote {}", path.display());
                println!("MAE {:.4} K  MRE {:.4} %", m.mae, 100.0 * m.mre);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
