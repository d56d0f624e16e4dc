use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use resolwe::grammar::{ExpandMode, Grammar};
use resolwe::io::{read_model, read_predictions, selection_report, write_model, write_predictions};
use resolwe::metrics::evaluation_report;
use resolwe::mln::{InferenceConfig, LearnConfig, Learner, WeightedModel};
use resolwe::pipeline::{learnable_clauses, predict_stream, run_pipeline, FileStream, Mode, PipelineConfig, StreamSource};
use resolwe::select::Selector;
use resolwe::synth::{Generator, SynthConfig};

#[derive(Parser)]
#[command(name = "resolwe", version, about = "Streaming structure selection for Markov logic networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the candidate formulas a grammar expands to.
    Expand {
        #[arg(long)]
        grammar: PathBuf,
        /// `resolwe` for selection candidates, `skipSelection` for every variant.
        #[arg(long, default_value = "resolwe")]
        mode: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select formulas on the first k2 subgraphs of a stream.
    Select {
        #[arg(long)]
        grammar: PathBuf,
        #[arg(long)]
        stream: PathBuf,
        #[arg(long, default_value_t = 30)]
        k2: usize,
        #[arg(long, default_value_t = 0.4)]
        theta: f64,
        /// Output directory for selection.tsv and the zero-weight model.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn weights over a whole stream.
    Learn {
        #[arg(long)]
        grammar: PathBuf,
        #[arg(long)]
        stream: PathBuf,
        /// Start from this model's formulas and weights instead of every grammar variant.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        learn: LearnArgs,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank the query atoms of every subgraph in a stream.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        stream: PathBuf,
        #[command(flatten)]
        infer: InferArgs,
        /// Output predictions file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute MAP and AUC from a predictions file.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic stream and its ground-truth manifest.
    Synth {
        /// TOML generator configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for stream.txt and manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Expand, select and learn in one run.
    Pipeline {
        #[arg(long)]
        grammar: PathBuf,
        #[arg(long)]
        stream: PathBuf,
        #[arg(long, default_value = "resolwe")]
        mode: String,
        #[arg(long, default_value_t = 30)]
        k2: usize,
        #[arg(long, default_value_t = 0.4)]
        theta: f64,
        #[command(flatten)]
        learn: LearnArgs,
        /// Held-out stream to predict and evaluate after learning.
        #[arg(long)]
        test: Option<PathBuf>,
        #[command(flatten)]
        infer: InferArgs,
        /// Evaluate candidates sequentially during selection.
        #[arg(long)]
        sequential: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long, default_value_t = 100.0)]
    prior_variance: f64,
    #[arg(long, default_value_t = 1)]
    cd_chain_length: usize,
    #[arg(long, default_value_t = 1)]
    passes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl LearnArgs {
    fn config(&self) -> LearnConfig {
        LearnConfig {
            learning_rate: self.learning_rate,
            prior_variance: self.prior_variance,
            cd_chain_length: self.cd_chain_length,
            passes: self.passes,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct InferArgs {
    #[arg(long, default_value_t = 100)]
    burn_in: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    infer_seed: u64,
}

impl InferArgs {
    fn config(&self) -> InferenceConfig {
        InferenceConfig {
            burn_in: self.burn_in,
            samples: self.samples,
            seed: self.infer_seed,
        }
    }
}

fn load_grammar(path: &Path) -> Result<Grammar> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Grammar::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Expand { grammar, mode, out } => {
            let g = load_grammar(&grammar)?;
            let mode = match mode.parse::<Mode>()? {
                Mode::Resolwe => ExpandMode::Selection,
                Mode::SkipSelection => ExpandMode::AllVariants,
            };
            let exp = g.expand(mode);
            for r in &exp.rejected {
                log::warn!("rejected: {r}");
            }
            let text: String = exp.formulas.iter().map(|f| f.to_text(&g.schema) + "\n").collect();
            match out {
                Some(p) => write(&p, &text)?,
                None => print!("{text}"),
            }
            log::info!("{} candidates", exp.formulas.len());
        }
        Command::Select {
            grammar,
            stream,
            k2,
            theta,
            out,
        } => {
            if !(0.0..=1.0).contains(&theta) || k2 == 0 {
                bail!("need k2 >= 1 and theta in [0, 1]");
            }
            let g = load_grammar(&grammar)?;
            let src = FileStream {
                path: stream,
                schema: g.schema.clone(),
            };
            let mut sel = Selector::new(g.schema.clone(), g.expand(ExpandMode::Selection).formulas);
            for db in src.open()?.take(k2) {
                sel.observe(&db?);
            }
            if sel.processed() < k2 {
                log::warn!("stream ended after {} of {k2} subgraphs", sel.processed());
            }
            let selected = sel.finalize(theta);
            out_dir(&out)?;
            write(
                &out.join("selection.tsv"),
                &selection_report(&g.schema, sel.candidates(), sel.stats(), &selected),
            )?;
            let formulas: Vec<_> = selected.iter().map(|s| s.formula()).collect();
            let model = WeightedModel::new(
                g.schema.clone(),
                learnable_clauses(&g.schema, &formulas),
                LearnConfig::default(),
            );
            write(&out.join("model.txt"), &write_model(&model))?;
            log::info!("selected {} forms from {} candidates", selected.len(), sel.candidates().len());
        }
        Command::Learn {
            grammar,
            stream,
            model,
            learn,
            out,
        } => {
            let g = load_grammar(&grammar)?;
            let cfg = learn.config();
            let initial = match model {
                Some(p) => read_model(&fs::read_to_string(&p)?, Some(&g.schema))?,
                None => {
                    let exp = g.expand(ExpandMode::AllVariants);
                    WeightedModel::new(g.schema.clone(), learnable_clauses(&g.schema, &exp.formulas), cfg.clone())
                }
            };
            // share the grammar's schema so stream atoms resolve to the model's predicates
            let schema: Arc<_> = initial.schema().clone();
            let src = FileStream { path: stream, schema };
            let mut learner = Learner::new(initial, cfg.clone())?;
            for _ in 0..cfg.passes {
                for db in src.open()? {
                    learner.observe(&db?)?;
                }
            }
            log::info!("trained on {} subgraphs", learner.seen());
            write(&out, &write_model(learner.model()))?;
        }
        Command::Predict {
            model,
            stream,
            infer,
            out,
        } => {
            let m = read_model(&fs::read_to_string(&model)?, None)?;
            let src = FileStream {
                path: stream,
                schema: m.schema().clone(),
            };
            let rankings = predict_stream(&m, &src, &infer.config())?;
            write(&out, &write_predictions(&rankings))?;
            log::info!("ranked {} subgraphs", rankings.len());
        }
        Command::Eval { predictions, out } => {
            let rankings = read_predictions(&fs::read_to_string(&predictions)?)?;
            let report = evaluation_report(&rankings);
            match out {
                Some(p) => write(&p, &report)?,
                None => print!("{report}"),
            }
        }
        Command::Synth { config, seed, out } => {
            let mut cfg = SynthConfig::from_toml(&fs::read_to_string(&config)?)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let gen = Generator::new(cfg)?;
            out_dir(&out)?;
            let mut w = BufWriter::new(fs::File::create(out.join("stream.txt"))?);
            let manifest = gen.write(&mut w)?;
            write(&out.join("manifest.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
            log::info!("wrote {} subgraphs", manifest.subgraphs);
        }
        Command::Pipeline {
            grammar,
            stream,
            mode,
            k2,
            theta,
            learn,
            test,
            infer,
            sequential,
            out,
        } => {
            let g = load_grammar(&grammar)?;
            let cfg = PipelineConfig {
                k2,
                theta,
                mode: mode.parse()?,
                learn: learn.config(),
                parallel: !sequential,
            };
            let src = FileStream {
                path: stream,
                schema: g.schema.clone(),
            };
            let res = run_pipeline(&g, &src, &cfg)?;
            out_dir(&out)?;
            write(&out.join("model.txt"), &write_model(&res.model))?;
            write(&out.join("timings.tsv"), &res.timing_report())?;
            if let Some(sel) = &res.selection {
                write(
                    &out.join("selection.tsv"),
                    &selection_report(&g.schema, &sel.candidates, &sel.stats, &sel.selected),
                )?;
            }
            if let Some(test) = test {
                let src = FileStream {
                    path: test,
                    schema: g.schema.clone(),
                };
                let rankings = predict_stream(&res.model, &src, &infer.config())?;
                write(&out.join("predictions.tsv"), &write_predictions(&rankings))?;
                write(&out.join("evaluation.tsv"), &evaluation_report(&rankings))?;
            }
            eprint!("{}", res.timing_report());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
