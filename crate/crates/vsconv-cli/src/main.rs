use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use vsconv::metrics::MetricsReport;
use vsconv::sparse::{encode_weights, prune_weights_vector};
use vsconv::tensor::DenseTensor;
use vsconv_cli::config::{parse_input_model, parse_layer, parse_pe, ExperimentConfig, LayerSet};
use vsconv_cli::{demo, gen, runner};

/// Cycle-level model of a convolution accelerator with vector-sparse
/// zero skipping.
#[derive(Parser)]
#[command(name = "vsconv", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Configuration file (flat key = value format).
    #[arg(long)]
    config: Option<PathBuf>,
    /// PE array geometry as B,R,C (e.g. 4,14,3 or 8,7,3).
    #[arg(long)]
    pe: Option<String>,
    /// Target weight vector density in (0, 1].
    #[arg(long)]
    weight_density: Option<f64>,
    /// Input model: relu-propagated, bernoulli:<p>, or file:<path>.
    #[arg(long)]
    input_model: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Spatial scale divisor for the vgg16 catalog (224 must divide evenly).
    #[arg(long)]
    scale: Option<usize>,
    /// Directory for all written artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(pe) = &self.pe {
            cfg.pe = parse_pe(pe)?;
        }
        if let Some(d) = self.weight_density {
            cfg.weight_density = d;
        }
        if let Some(m) = &self.input_model {
            cfg.input_model = parse_input_model(m)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.scale {
            cfg.set_scale(s);
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the 5x5 walkthrough: dense and sparse schedules, skipped
    /// cycles, and the oracle check.
    Demo {
        /// Also write the normative schedule dumps here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a single layer and print its metrics row.
    RunLayer {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Layer shape as in_c x h x w x out_c, e.g. 64x28x28x64.
        #[arg(long)]
        layer: String,
    },
    /// Run the configured layer list (vgg16 catalog by default) and emit
    /// the metrics CSV.
    RunNetwork {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Layer list override: "vgg16" or semicolon-separated
        /// in_c x h x w x out_c quadruples.
        #[arg(long)]
        layers: Option<String>,
    },
    /// Prune a dense weight tensor file to a target vector density.
    Prune {
        /// Input weights (VSTN, rank 4).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        density: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a synthetic vector-sparse activation file.
    GenSparsity {
        /// Dense dims as c,h,w.
        #[arg(long)]
        dims: String,
        #[arg(long)]
        density: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        vec_len: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Summarize a metrics CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn write_under(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents).with_context(|| format!("writing {name}"))?;
    Ok(())
}

fn emit_network(cfg: &ExperimentConfig, outcome: &runner::NetworkOutcome) -> Result<()> {
    let csv = outcome.report.to_csv();
    match &cfg.out {
        Some(dir) => {
            write_under(dir, "metrics.csv", &csv)?;
            for (name, dense, sparse) in &outcome.layer_reports {
                write_under(dir, &format!("{name}.dense.txt"), &dense.to_text())?;
                write_under(dir, &format!("{name}.sparse.txt"), &sparse.to_text())?;
            }
            println!("wrote {}", dir.join("metrics.csv").display());
        }
        None => print!("{csv}"),
    }
    print!("{}", outcome.report.summary());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Demo { out } => {
            let d = demo::build()?;
            print!("{}", d.render()?);
            if let Some(dir) = out {
                write_under(
                    &dir,
                    "demo_dense_schedule.csv",
                    &(d.dense.dump_lines().join("\n") + "\n"),
                )?;
                write_under(
                    &dir,
                    "demo_sparse_schedule.csv",
                    &(d.sparse.dump_lines().join("\n") + "\n"),
                )?;
            }
            Ok(())
        }
        Cmd::RunLayer { exp, layer } => {
            let mut cfg = exp.resolve()?;
            cfg.layers = LayerSet::Explicit(vec![parse_layer(&layer)?]);
            let outcome = runner::run_network(&cfg)?;
            emit_network(&cfg, &outcome)
        }
        Cmd::RunNetwork { exp, layers } => {
            let mut cfg = exp.resolve()?;
            if let Some(spec) = layers {
                if spec != "vgg16" {
                    cfg.layers = LayerSet::Explicit(
                        spec.split(';').map(parse_layer).collect::<Result<Vec<_>>>()?,
                    );
                }
                cfg.validate()?;
            }
            let outcome = runner::run_network(&cfg)?;
            emit_network(&cfg, &outcome)
        }
        Cmd::Prune { input, density, output } => {
            let mut f =
                fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let weights = DenseTensor::read_vstn(&mut f)?;
            let before = weights.element_density()?;
            let pruned = prune_weights_vector(&weights, density)?;
            let enc = encode_weights(&pruned)?;
            let mut out = fs::File::create(&output)
                .with_context(|| format!("creating {}", output.display()))?;
            pruned.write_vstn(&mut out)?;
            println!(
                "pruned {} -> {}: element density {:.4} -> {:.4}, vector density {:.4} ({} columns kept)",
                input.display(),
                output.display(),
                before,
                pruned.element_density()?,
                enc.vector_density(),
                enc.num_vectors(),
            );
            Ok(())
        }
        Cmd::GenSparsity { dims, density, seed, vec_len, output } => {
            if !(0.0..=1.0).contains(&density) {
                anyhow::bail!("density {density} outside [0, 1]");
            }
            let parts: Vec<usize> = dims
                .split(',')
                .map(|p| p.trim().parse().with_context(|| format!("bad dim {p:?}")))
                .collect::<Result<_>>()?;
            if parts.len() != 3 {
                anyhow::bail!("dims must be c,h,w");
            }
            let sparse = gen::gen_sparsity(&parts, density, vec_len, seed)?;
            let mut f = fs::File::create(&output)
                .with_context(|| format!("creating {}", output.display()))?;
            sparse.write_vssp(&mut f)?;
            println!(
                "wrote {}: {} of {} vectors kept (density {:.4})",
                output.display(),
                sparse.num_vectors(),
                sparse.total_vector_slots(),
                sparse.vector_density(),
            );
            Ok(())
        }
        Cmd::Report { input } => {
            let text = fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let report = MetricsReport::from_csv(&text)?;
            print!("{}", report.summary());
            Ok(())
        }
    }
}

/// Exit code categories: 2 config/usage, 3 mapping, 4 data/file,
/// 5 simulation (including oracle mismatches).
fn error_category(err: &anyhow::Error) -> (i32, &'static str) {
    use vsconv::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::UnsupportedMapping { .. }
                | E::BadPeColumns { .. }
                | E::UnsupportedKernel { .. }
                | E::VecLenMismatch { .. }
                | E::ShapeMismatch { .. }
                | E::InvalidDensity { .. } => (3, "mapping"),
                E::BadFile { .. }
                | E::Io(_)
                | E::InconsistentCoord { .. }
                | E::EmptyTensor
                | E::ValueOutOfRange { .. } => (4, "data"),
                E::AccumulatorOverflow { .. }
                | E::CapacityExceeded { .. }
                | E::MissingOperand { .. }
                | E::InconsistentCycles { .. } => (5, "simulation"),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return (4, "data");
        }
    }
    if format!("{err:#}").contains("oracle mismatch") {
        (5, "simulation")
    } else {
        (2, "config")
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        let (code, category) = error_category(&e);
        eprintln!("error ({category}): {e:#}");
        std::process::exit(code);
    }
}
