use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tentlab::ensemble::{
    bandlimited_field, indicator_box_field, mode_field, rough_coefficients, TimeProfile,
};
use tentlab::grid::io::{load_coefficients, load_field, save_coefficients, save_field};
use tentlab::grid::{make_grid, GridSpec};
use tentlab::maxreg::{ml_apply, MlScheme};
use tentlab::probes::admissible_p_range;
use tentlab::semigroup::provider_by_name;
use tentlab::tentnorm::{carleson_norm, indicator_field, tent_norm, TentParams};
use tentlab_cli::{
    load_experiment, run_experiment, verdict_summary, EXIT_ERROR, EXIT_VERDICT_FAILED,
};

#[derive(Parser)]
#[command(
    name = "tentlab",
    version,
    about = "Weighted tent-space and maximal regularity workbench"
)]
struct Cli {
    /// Cap on worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the probe named in a config file.
    Run { config: PathBuf },
    /// Run the named probe with the settings of a config file.
    Probe {
        name: String,
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the weighted tent norm of a field.
    TentNorm {
        field: PathBuf,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 1)]
        m: u32,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
    /// Print the Carleson norm of a field.
    CarlesonNorm {
        field: PathBuf,
        #[arg(long, default_value_t = 1)]
        m: u32,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        beta: f64,
    },
    /// Apply the maximal regularity operator to a field.
    MlApply {
        field: PathBuf,
        #[arg(long)]
        provider: String,
        /// Coefficient field for `divform`.
        #[arg(long)]
        coefficients: Option<PathBuf>,
        #[arg(long, default_value = "singularity-split")]
        scheme: MlScheme,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write one generated field (`.bin`/`.fld` for binary, CSV otherwise).
    GenField(GenField),
    /// Print the admissible exponent interval for (n, m, beta).
    PRange {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        m: u32,
        #[arg(long, allow_hyphen_values = true)]
        beta: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldKind {
    Bandlimited,
    Mode,
    Indicator,
    /// Rough divergence-form coefficients, one uniform draw per cell
    /// (written as a single-slice CSV field).
    Coefficients,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileKind {
    Bump,
    Ramp,
}

#[derive(clap::Args)]
struct GenField {
    #[arg(long, value_enum)]
    kind: FieldKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ensemble member (stream) of a band-limited field.
    #[arg(long, default_value_t = 0)]
    member: u64,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long)]
    extent: f64,
    #[arg(long)]
    nx: usize,
    #[arg(long)]
    t_min: f64,
    #[arg(long)]
    t_max: f64,
    #[arg(long)]
    nt: usize,
    /// Mode cutoff (default nx/8).
    #[arg(long)]
    cutoff: Option<usize>,
    /// Wave numbers of a mode field.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 0], allow_hyphen_values = true)]
    k: Vec<isize>,
    #[arg(long, value_enum, default_value_t = ProfileKind::Bump)]
    profile: ProfileKind,
    /// Indicator box corners per axis.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lo: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    hi: Vec<f64>,
    /// Range of rough coefficients.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 10.0])]
    a_range: Vec<f64>,
    /// Sharp time window `t0,t1` for an indicator instead of the profile.
    #[arg(long, value_delimiter = ',')]
    t_window: Option<Vec<f64>>,
    #[arg(short, long)]
    output: PathBuf,
}

fn corner(values: &[f64], n: usize, key: &str) -> Result<[f64; 2]> {
    if values.len() != n {
        bail!(
            "--{key} needs {n} comma-separated values, got {}",
            values.len()
        );
    }
    Ok([values[0], *values.get(1).unwrap_or(&0.0)])
}

fn gen_field(args: &GenField) -> Result<()> {
    let spec = GridSpec::new(
        args.n,
        args.extent,
        args.nx,
        args.t_min,
        args.t_max,
        args.nt,
    );
    if let FieldKind::Coefficients = args.kind {
        if args.a_range.len() != 2 {
            bail!("--a-range needs two values lo,hi");
        }
        let a = rough_coefficients(
            args.n,
            args.nx,
            args.seed,
            (args.a_range[0], args.a_range[1]),
        )?;
        save_coefficients(&spec, &a, &args.output)
            .with_context(|| format!("cannot write {}", args.output.display()))?;
        return Ok(());
    }
    let grid = make_grid(spec)?;
    let profile = match args.profile {
        ProfileKind::Bump => TimeProfile::default(),
        ProfileKind::Ramp => TimeProfile::Ramp,
    };
    let field = match args.kind {
        FieldKind::Bandlimited => {
            let cutoff = args.cutoff.unwrap_or((args.nx / 8).max(1));
            bandlimited_field(grid, args.seed, args.member, cutoff, &profile)?
        }
        FieldKind::Mode => {
            if args.k.len() != args.n {
                bail!("--k needs {} wave numbers, got {}", args.n, args.k.len());
            }
            mode_field(grid, [args.k[0], *args.k.get(1).unwrap_or(&0)], &profile)?
        }
        FieldKind::Coefficients => unreachable!(),
        FieldKind::Indicator => {
            let (lo, hi) = (
                corner(&args.lo, args.n, "lo")?,
                corner(&args.hi, args.n, "hi")?,
            );
            match &args.t_window {
                Some(w) if w.len() == 2 => indicator_field(grid, (w[0], w[1]), lo, hi)?,
                Some(_) => bail!("--t-window needs two values t0,t1"),
                None => indicator_box_field(grid, lo, hi, &profile)?,
            }
        }
    };
    save_field(&field, &args.output)
        .with_context(|| format!("cannot write {}", args.output.display()))?;
    Ok(())
}

fn load(path: &Path) -> Result<tentlab::grid::SpaceTimeField> {
    load_field(path).with_context(|| format!("cannot read field {}", path.display()))
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { config } => run(&config, None),
        Command::Probe { name, config } => run(&config, Some(&name)),
        Command::TentNorm {
            field,
            p,
            m,
            beta,
            alpha,
        } => {
            let params = TentParams::new(p, m, beta, alpha)?;
            println!("{}", tent_norm(&load(&field)?, &params)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::CarlesonNorm { field, m, beta } => {
            println!("{}", carleson_norm(&load(&field)?, m, beta)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::MlApply {
            field,
            provider,
            coefficients,
            scheme,
            output,
        } => {
            let f = load(&field)?;
            let coefficients = match coefficients {
                Some(path) => {
                    let (spec, a) = load_coefficients(&path)
                        .with_context(|| format!("cannot read coefficients {}", path.display()))?;
                    if !spec.same_space(f.grid().spec()) {
                        bail!(
                            "coefficient grid {spec:?} differs from the field grid {:?}",
                            f.grid().spec()
                        );
                    }
                    Some(a)
                }
                None => None,
            };
            let provider = provider_by_name(&provider, *f.grid().spec(), coefficients)?;
            let out = ml_apply(&f, provider.as_ref(), scheme)?;
            save_field(&out, &output)
                .with_context(|| format!("cannot write {}", output.display()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::GenField(args) => {
            gen_field(&args)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::PRange { n, m, beta } => {
            println!("{}", admissible_p_range(n, m, beta)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run(config: &Path, probe: Option<&str>) -> Result<ExitCode> {
    let experiment = load_experiment(config, probe)?;
    let outcome = run_experiment(&experiment)?;
    println!("{}", verdict_summary(&outcome.report));
    println!("report: {}", outcome.json_path.display());
    println!("table:  {}", outcome.csv_path.display());
    Ok(if outcome.report.all_asserted_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERDICT_FAILED)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    }
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
