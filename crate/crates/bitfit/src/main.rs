use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bitfit::io::{self, ModelFile, Provenance};
use bitfit::{crosstab, plot_data, repair_cells, Error, GeneratorSpec, GridSpec};
use bitfit_core::{
    estimate_errors, fit, prune, q_total_with_precision, repair_delta_m, Dataset, ErrorMethod, FitConfig, FitObjective,
    FitResult, MixtureParams, Scheme, VariationMode,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Fit diagonal Gaussian mixtures by minimizing the bit count of model plus data.
#[derive(Parser)]
#[command(name = "bitfit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Local,
    Global,
}

impl From<ModeArg> for VariationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Local => VariationMode::Local,
            ModeArg::Global => VariationMode::Global,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Sqnorm,
    Hyperspherical,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Simple,
    Full,
}

#[derive(Args, Clone)]
struct FitArgs {
    #[arg(long, value_enum, default_value = "global")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "sqnorm")]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 5)]
    max_components: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Total objective evaluations over all four stages.
    #[arg(long, default_value_t = 20_000)]
    budget: usize,
    /// Minimize the negative log-likelihood alone.
    #[arg(long)]
    likelihood_only: bool,
    /// Weight below which a component counts as insignificant.
    #[arg(long, default_value_t = 0.01)]
    significance: f64,
    /// Remove insignificant and collapsed components after fitting.
    #[arg(long)]
    prune: bool,
}

impl FitArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            max_components: self.max_components,
            scheme: match self.scheme {
                SchemeArg::Sqnorm => Scheme::SquaredNorm,
                SchemeArg::Hyperspherical => Scheme::Hyperspherical,
            },
            seed: self.seed,
            mode: self.mode.into(),
            objective: if self.likelihood_only {
                FitObjective::LikelihoodOnly
            } else {
                FitObjective::BitCount
            },
            significant_amplitude: self.significance,
            ..FitConfig::default()
        }
        .with_total_budget(self.budget)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample from a mixture (default: the three-component 2D mixture).
    Generate {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep only this coordinate of every point.
        #[arg(long)]
        project_to: Option<usize>,
        /// JSON generator spec replacing the default mixture.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Fit a model to a dataset and save it.
    Fit {
        data: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Print the Q breakdown of a model on a dataset.
    Eval {
        model: PathBuf,
        data: PathBuf,
        /// Overrides the mode stored in the model.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Shrink the truncation ranges if Q is invalid on this dataset.
        #[arg(long)]
        repair: bool,
    },
    /// Evaluate every model on every sample; fits the samples if no models are given.
    Crosstab {
        #[arg(long, num_args = 1.., required = true)]
        samples: Vec<PathBuf>,
        /// One model per sample, in the same order.
        #[arg(long, num_args = 1..)]
        models: Vec<PathBuf>,
        /// Output prefix; writes PREFIX.txt and PREFIX.csv.
        #[arg(short, long)]
        output: PathBuf,
        /// Also repair invalid cells and report the result.
        #[arg(long)]
        repair: bool,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Remove insignificant and collapsed components.
    Prune {
        model: PathBuf,
        data: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        significance: f64,
        /// Width floor as a fraction of the data range.
        #[arg(long, default_value_t = 1e-6)]
        min_width_fraction: f64,
    },
    /// Propagated standard deviations of the model parameters.
    Errors {
        model: PathBuf,
        data: PathBuf,
        #[arg(long, value_enum, default_value = "simple")]
        method: MethodArg,
    },
    /// Write density grids, per-component densities and the sample as CSV.
    Plotdata {
        model: PathBuf,
        data: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
        /// Grid points per axis (default 512 in 1D, 128 in 2D).
        #[arg(long)]
        points: Option<usize>,
    },
}

fn exit_code(e: &Error) -> u8 {
    use bitfit_core::Error as Core;
    match e {
        Error::Usage(_) | Error::Spec(_) => 1,
        Error::Core(Core::InvalidConfig(_) | Core::Dimension { .. }) => 1,
        Error::Core(Core::InvalidDataset(_)) => 3,
        Error::Core(_) | Error::Model(_) => 2,
        Error::Io { .. } | Error::Parse { .. } => 3,
    }
}

/// Exit 2 with a message once the output has been written.
struct Invalid(String);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Invalid(msg))) => {
            eprintln!("bitfit: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("bitfit: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn describe(fit: &FitResult, significance: f64) -> String {
    let mut s = format!(
        "q_total {}\nq_l {}\nq_delta {}\nq_r {}\nvalid {}\n",
        fit.q.q_total,
        fit.q.q_l,
        fit.q.q_delta,
        fit.q.q_r,
        fit.is_valid()
    );
    let w = fit.weights();
    s.push_str(&format!(
        "components {} ({} significant)\n",
        w.len(),
        fit.significant_components(significance)
    ));
    for (i, wi) in w.iter().enumerate() {
        let means: Vec<String> = (0..fit.params.n_dim)
            .map(|nu| fit.params.mean(i, nu).to_string())
            .collect();
        let widths: Vec<String> = (0..fit.params.n_dim)
            .map(|nu| fit.params.width(i, nu).to_string())
            .collect();
        s.push_str(&format!(
            "  weight {wi:.6} mean [{}] width [{}]\n",
            means.join(", "),
            widths.join(", ")
        ));
    }
    s
}

fn fit_and_maybe_prune(data: &Dataset, args: &FitArgs) -> Result<(FitResult, FitConfig), Error> {
    let config = args.config();
    let mut result = fit(data, &config)?;
    if args.prune {
        result = prune(&result, data, &config)?;
    }
    Ok((result, config))
}

fn param_names(p: &MixtureParams) -> Vec<String> {
    let mut names: Vec<String> = (0..p.n_amplitude_params()).map(|k| format!("amp[{k}]")).collect();
    for kind in ["mean", "log_width"] {
        for i in 0..p.n_components() {
            for nu in 0..p.n_dim {
                names.push(format!("{kind}[{i}][{nu}]"));
            }
        }
    }
    let base = names.clone();
    names.extend(base.iter().map(|n| format!("log_dm:{n}")));
    names
}

fn run(command: Command) -> Result<Option<Invalid>, Error> {
    match command {
        Command::Generate {
            n,
            seed,
            project_to,
            spec,
            output,
        } => {
            let mut g = match spec {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| Error::Io {
                        path: path.display().to_string(),
                        source: e,
                    })?;
                    serde_json::from_str(&text).map_err(|e| Error::Spec(e.to_string()))?
                }
                None => GeneratorSpec::default(),
            };
            if project_to.is_some() {
                g.project_to = project_to;
            }
            let data = g.sample(n, seed)?;
            io::write_dataset(&output, &data)?;
            Ok(None)
        }
        Command::Fit { data, output, fit } => {
            let dataset = io::read_dataset(&data)?;
            let (result, config) = fit_and_maybe_prune(&dataset, &fit)?;
            let model = ModelFile::from_fit(
                &result,
                config.delta_x,
                Provenance::from_config(&config, Some(&data), dataset.len()),
            );
            io::save_model(&output, &model)?;
            print!("{}", describe(&result, fit.significance));
            Ok((!result.is_valid()).then(|| Invalid("fitted model is invalid".into())))
        }
        Command::Eval {
            model,
            data,
            mode,
            repair,
        } => {
            let m = io::load_model(&model)?;
            let dataset = io::read_dataset(&data)?;
            let mode = mode.map_or(m.mode, VariationMode::from);
            let mut result = m.to_fit();
            result.mode = mode;
            result.q = q_total_with_precision(&dataset, &m.params, &m.delta_m, mode, m.delta_x)?;
            if !result.q.valid && repair {
                let r = repair_delta_m(&dataset, &m.params, &m.delta_m, mode)?;
                println!("repaired: ranges scaled by {}", r.scale);
                result.delta_m = r.delta_m;
                result.q = r.q;
            }
            print!("{}", describe(&result, 0.01));
            Ok((!result.is_valid()).then(|| Invalid("Q is invalid on this dataset".into())))
        }
        Command::Crosstab {
            samples,
            models,
            output,
            repair,
            fit: args,
        } => {
            let data: Vec<Dataset> = samples.iter().map(|p| io::read_dataset(p)).collect::<Result<_, _>>()?;
            let (fits, mode, delta_x) = if models.is_empty() {
                let mut fits = Vec::with_capacity(data.len());
                for d in &data {
                    fits.push(fit_and_maybe_prune(d, &args)?.0);
                }
                (fits, args.config().mode, args.config().delta_x)
            } else {
                let files: Vec<ModelFile> = models.iter().map(|p| io::load_model(p)).collect::<Result<_, _>>()?;
                let mode = files.first().map_or(VariationMode::Global, |f| f.mode);
                let dx = files.first().map_or(1.0, |f| f.delta_x);
                (files.iter().map(ModelFile::to_fit).collect(), mode, dx)
            };
            let table = crosstab(&fits, &data, mode, delta_x)?;
            let mut text = table.to_text();
            if repair {
                for c in repair_cells(&table, &fits, &data, mode)? {
                    text.push_str(&format!(
                        "repaired m{} on s{}: scale {:.3e}, rel_q {:.1}%, own-sample change {:.2}%\n",
                        c.train,
                        c.test,
                        c.scale,
                        100.0 * c.rel_q,
                        100.0 * c.own_sample_change
                    ));
                }
            }
            write(&output.with_extension("txt"), &text)?;
            write(&output.with_extension("csv"), &table.to_csv())?;
            print!("{text}");
            Ok(None)
        }
        Command::Prune {
            model,
            data,
            output,
            significance,
            min_width_fraction,
        } => {
            let m = io::load_model(&model)?;
            let dataset = io::read_dataset(&data)?;
            let config = FitConfig {
                significant_amplitude: significance,
                min_width_fraction,
                delta_x: m.delta_x,
                ..FitConfig::default()
            };
            let pruned = prune(&m.to_fit(), &dataset, &config)?;
            let out = ModelFile::from_fit(&pruned, m.delta_x, m.provenance.clone());
            io::save_model(&output, &out)?;
            print!("{}", describe(&pruned, significance));
            Ok((!pruned.is_valid()).then(|| Invalid("pruned model is invalid".into())))
        }
        Command::Errors { model, data, method } => {
            let m = io::load_model(&model)?;
            let dataset = io::read_dataset(&data)?;
            let method = match method {
                MethodArg::Simple => ErrorMethod::Simple,
                MethodArg::Full => ErrorMethod::Full,
            };
            let e = estimate_errors(&dataset, &m.to_fit(), method)?;
            if !e.stationary {
                eprintln!(
                    "warning: gradient {} at the model; it may not be an optimum",
                    e.gradient_norm
                );
            }
            if e.rank_deficient {
                eprintln!(
                    "warning: singular system (condition {}), pseudo-inverse used",
                    e.condition
                );
            }
            let mut values = m.params.to_vec();
            values.extend_from_slice(m.delta_m.log_values());
            println!("parameter,value,std");
            for ((name, v), s) in param_names(&m.params).iter().zip(&values).zip(&e.std) {
                println!("{name},{v},{s}");
            }
            Ok(None)
        }
        Command::Plotdata {
            model,
            data,
            output_dir,
            points,
        } => {
            let m = io::load_model(&model)?;
            let dataset = io::read_dataset(&data)?;
            let out = plot_data(&m.params, &dataset, &GridSpec { points, span: None })?;
            fs::create_dir_all(&output_dir).map_err(|e| Error::Io {
                path: output_dir.display().to_string(),
                source: e,
            })?;
            write(&output_dir.join("density.csv"), &out.density)?;
            write(&output_dir.join("components.csv"), &out.components)?;
            write(&output_dir.join("sample.csv"), &out.sample)?;
            Ok(None)
        }
    }
}
