//! `zlp`: sample, evaluate, render, fit and verify sphere flows.
//!
//! Exit codes: 0 ok, 2 input error, 3 numerical divergence, 4 verification
//! failure.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zlp_core::fit::{fit, FitConfig, FitResult};
use zlp_core::grid::{render_mollweide, render_ortho, DensityGrid, Raster};
use zlp_core::io::{ChainSpecFile, SampleFile};
use zlp_core::verify::{kent_constraint_check, run_checks, CheckLevel, CheckReport};
use zlp_core::{Family, FlowChain, ZlpError};

#[derive(Parser)]
#[command(name = "zlp", version, about = "Normalizing flows on the sphere from Fisher zooms and linear projections")]
struct Cli {
    /// Worker threads for grid evaluation and multi-start fits.
    #[arg(long, global = true, env = "ZLP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw samples with their log densities.
    Sample {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate log densities at the points of a sample file.
    Logprob {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a log-density grid (D = 3 only).
    Grid {
        #[arg(long)]
        spec: PathBuf,
        /// Rows of the equirectangular grid, raster height for the others.
        #[arg(long, default_value_t = 360)]
        res: usize,
        #[arg(long, value_enum, default_value_t = Projection::Equirect)]
        projection: Projection,
        /// Orthographic centre as `LON,LAT` in degrees.
        #[arg(long, value_parser = parse_lon_lat, allow_hyphen_values = true)]
        center: Option<(f64, f64)>,
        /// Orthographic field of view in degrees.
        #[arg(long, default_value_t = 180.0)]
        fov: f64,
        #[arg(long)]
        out: PathBuf,
        /// Raster image: grayscale PGM for a `.pgm` name, heat-map PPM otherwise.
        #[arg(long, alias = "image")]
        png: Option<PathBuf>,
    },
    /// Fit a family to a sample file by maximum likelihood.
    Fit {
        #[arg(long, value_parser = parse_family)]
        family: Family,
        #[arg(long)]
        data: PathBuf,
        /// JSON optimizer settings; every field is optional.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Expected dimension of the data.
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Loss trace CSV; defaults to the output name with `.trace.csv`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the verification suite and print a pass/fail table.
    Check {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum, default_value_t = Level::Fast)]
        level: Level,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Projection {
    Equirect,
    Mollweide,
    Ortho,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Fast,
    Full,
}

fn parse_lon_lat(s: &str) -> Result<(f64, f64), String> {
    let (lon, lat) = s.split_once(',').ok_or("expected LON,LAT")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}"));
    Ok((num(lon)?, num(lat)?))
}

fn parse_family(s: &str) -> Result<Family, String> {
    Family::parse(s).map_err(|e| e.to_string())
}

enum Failure {
    Input(String),
    Numerical(String),
    Verification,
}

impl From<ZlpError> for Failure {
    fn from(e: ZlpError) -> Self {
        match e {
            ZlpError::Divergence(_) | ZlpError::NonConvergence { .. } | ZlpError::RankDeficient(_) => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Input(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn read_spec(path: &Path) -> Result<ChainSpecFile, Failure> {
    ChainSpecFile::read(open(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn read_samples(path: &Path) -> Result<SampleFile, Failure> {
    SampleFile::read(open(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn sample(spec: &Path, n: usize, seed: u64, out: &Path) -> Outcome {
    let chain = read_spec(spec)?.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (points, log_probs) = chain.sample(&mut rng, n)?.into_iter().unzip();
    SampleFile { dim: chain.dim(), points, log_probs: Some(log_probs) }.write(create(out)?)?;
    Ok(())
}

fn logprob(spec: &Path, points: &Path, out: &Path) -> Outcome {
    let chain = read_spec(spec)?.build()?;
    let mut data = read_samples(points)?;
    if data.dim != chain.dim() {
        return Err(ZlpError::DimensionMismatch { expected: chain.dim(), found: data.dim }.into());
    }
    data.log_probs = Some(chain.log_prob_batch(&data.points)?);
    data.write(create(out)?)?;
    Ok(())
}

fn write_image(raster: &Raster, path: &Path) -> Outcome {
    let w = create(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        raster.write_pgm(w)?;
    } else {
        raster.write_ppm(w)?;
    }
    Ok(())
}

struct GridArgs<'a> {
    res: usize,
    projection: Projection,
    center: Option<(f64, f64)>,
    fov: f64,
    out: &'a Path,
    image: Option<&'a Path>,
}

fn grid(chain: &FlowChain, a: GridArgs) -> Outcome {
    let raster = match a.projection {
        Projection::Equirect => {
            let g = DensityGrid::evaluate(chain, a.res)?;
            g.write_csv(create(a.out)?)?;
            g.as_raster()
        }
        Projection::Mollweide => {
            let r = render_mollweide(chain, a.res)?;
            r.write_csv(create(a.out)?, "mollweide log-density raster, D=3, longitude 0 at the centre")?;
            r
        }
        Projection::Ortho => {
            let centre = a.center.unwrap_or((0.0, 90.0));
            let r = render_ortho(chain, centre, a.fov, a.res)?;
            let header = format!(
                "orthographic log-density raster, D=3, centre lon={} lat={} deg, fov={} deg",
                centre.0, centre.1, a.fov
            );
            r.write_csv(create(a.out)?, &header)?;
            r
        }
    };
    if let Some(path) = a.image {
        write_image(&raster, path)?;
    }
    Ok(())
}

fn write_trace(r: &FitResult, path: &Path) -> Outcome {
    let mut w = create(path)?;
    let io = |e: std::io::Error| Failure::Input(format!("{}: {e}", path.display()));
    writeln!(w, "iteration,loss,best").map_err(io)?;
    for row in &r.trace {
        writeln!(w, "{},{:.16e},{:.16e}", row.iteration, row.loss, row.best).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn fit_command(family: Family, data: &Path, config: Option<&Path>, dim: Option<usize>, out: &Path, trace: Option<&Path>) -> Outcome {
    let cfg: FitConfig = match config {
        Some(p) => serde_json::from_reader(open(p)?).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?,
        None => FitConfig::default(),
    };
    let samples = read_samples(data)?;
    if let Some(d) = dim {
        if d != samples.dim {
            return Err(Failure::Input(format!(
                "{}: data have {} columns x1..x{}, expected dimension {d}",
                data.display(),
                samples.dim,
                samples.dim
            )));
        }
    }
    let r = fit(family, &samples.points, &cfg)?;
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    let text = ChainSpecFile::from_chain(&r.chain, Some(family)).to_json()?;
    let mut f = create(out)?;
    writeln!(f, "{text}").map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    let trace_path = trace.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("trace.csv"));
    write_trace(&r, &trace_path)?;
    let uniform = -zlp_core::uniform_log_density(samples.dim);
    println!(
        "{family}: NLL {:.6} (uniform {uniform:.6}) after {} iterations, {} start(s); spec {}, trace {}",
        r.nll,
        r.trace.len(),
        r.start_nlls.len(),
        out.display(),
        trace_path.display()
    );
    Ok(())
}

fn check(spec: &Path, level: Level) -> Outcome {
    let file = read_spec(spec)?;
    let kent = file.family() == Some(Family::Kent);
    let level = match level {
        Level::Fast => CheckLevel::Fast,
        Level::Full => CheckLevel::Full,
    };
    let report = match file.build() {
        Ok(chain) => run_checks(&chain, level, kent),
        // a Kent spec whose scales leave the interval cannot be built; that is the check's finding
        Err(ZlpError::Constraint(msg)) if kent => {
            let mut r = CheckReport::default();
            let mut line = kent_constraint_check(&FlowChain::empty(file.dimension)?);
            line.detail = msg;
            r.push(line);
            r
        }
        Err(e) => return Err(e.into()),
    };
    print!("{}", report.table());
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Input(format!("--threads {n}: {e}")))?;
    }
    match cli.command {
        Command::Sample { spec, n, seed, out } => sample(&spec, n, seed, &out),
        Command::Logprob { spec, points, out } => logprob(&spec, &points, &out),
        Command::Grid { spec, res, projection, center, fov, out, png } => {
            let chain = read_spec(&spec)?.build()?;
            grid(&chain, GridArgs { res, projection, center, fov, out: &out, image: png.as_deref() })
        }
        Command::Fit { family, data, config, dim, out, trace } => {
            fit_command(family, &data, config.as_deref(), dim, &out, trace.as_deref())
        }
        Command::Check { spec, level } => check(&spec, level),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Verification) => ExitCode::from(4),
    }
}
