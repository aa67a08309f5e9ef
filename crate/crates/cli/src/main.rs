//! `demand`: reproducible pipelines from product text and embeddings to
//! demand estimates, specification selection, and substitution
//! counterfactuals.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod manifest;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "demand",
    version,
    about = "Demand estimation from product text, images and attributes"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Every run-config field can be overridden on the command line; flags win
/// over the `--config` file, which wins over built-in defaults.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Flat JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    products: Option<PathBuf>,
    #[arg(long, global = true)]
    choices: Option<PathBuf>,
    #[arg(long, global = true)]
    reviews: Option<PathBuf>,
    /// Directory of `<data_type>__<model>.csv` embedding files.
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Simulation draws per individual.
    #[arg(long, global = true)]
    draws: Option<usize>,
    /// Use Halton draws (the default).
    #[arg(long, global = true, conflicts_with = "pseudo")]
    halton: bool,
    /// Use counter-based pseudo-random draws.
    #[arg(long, global = true)]
    pseudo: bool,
    /// Leading Halton points skipped per dimension.
    #[arg(long, global = true)]
    burn: Option<usize>,
    /// Worker threads (0 = one per CPU).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Principal components to extract.
    #[arg(long, global = true)]
    components: Option<usize>,
    /// Standardize every embedding source before PCA (attribute sources
    /// always are).
    #[arg(long, global = true)]
    standardize: bool,
    /// Cap on random-coefficient subset size during selection (0 = none).
    #[arg(long, global = true)]
    max_k: Option<usize>,
    #[arg(long, global = true)]
    aic_threshold: Option<f64>,
    #[arg(long, global = true)]
    grad_tol: Option<f64>,
    #[arg(long, global = true)]
    ll_tol: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Optimizer multistarts.
    #[arg(long, global = true)]
    starts: Option<usize>,
    #[arg(long, global = true)]
    fixed_price: Option<f64>,
    #[arg(long, global = true)]
    mc: Option<f64>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    config.$field = v.clone();
                }
            };
        }
        set!(products);
        set!(choices);
        set!(reviews);
        set!(embeddings);
        set!(out);
        set!(seed);
        set!(draws);
        set!(burn);
        set!(threads);
        set!(components);
        set!(max_k);
        set!(aic_threshold);
        set!(grad_tol);
        set!(ll_tol);
        set!(max_iter);
        set!(starts);
        set!(fixed_price);
        set!(mc);
        if self.halton {
            config.method = "halton".into();
        }
        if self.pseudo {
            config.method = "pseudo".into();
        }
        if self.standardize {
            config.standardize = true;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build count-model text embeddings from the product catalog.
    Featurize {
        /// Vectorizer: bow or tfidf.
        #[arg(long = "type")]
        kind: String,
        /// Text source: title, description or reviews.
        #[arg(long)]
        source: String,
        /// Stopword file (one token per line) replacing the bundled list.
        #[arg(long)]
        stopwords: Option<PathBuf>,
    },
    /// Extract principal components from every embedding source.
    Pca,
    /// Fit one model specification and write fit.json.
    Fit {
        /// Model specification JSON file.
        #[arg(long)]
        spec: PathBuf,
    },
    /// Run the forward AIC search over all embedding sources.
    Select {
        /// Number of candidate components per source (defaults to
        /// --components).
        #[arg(long)]
        max_pc: Option<usize>,
        /// Extend candidate sets with attribute principal components.
        #[arg(long)]
        with_attributes: bool,
    },
    /// Akaike weights per data type from the selection trace.
    Weights,
    /// Predicted (and, when second choices exist, empirical) diversion
    /// matrices.
    Diversions {
        /// Fitted model to use (defaults to <out>/fit.json).
        #[arg(long)]
        fit: Option<PathBuf>,
        /// Evaluate at one common price instead of the estimation sample's
        /// profiles.
        #[arg(long)]
        common_price: Option<f64>,
    },
    /// Second-choice validation table across fitted specifications.
    Validate,
    /// Price a two-product merger against separate ownership.
    Merger {
        /// The merging pair, e.g. `b3,b7`.
        #[arg(long, value_delimiter = ',')]
        pair: Vec<String>,
        #[arg(long)]
        fixed_price: Option<f64>,
        #[arg(long)]
        mc: Option<f64>,
    },
    /// Pick a maximum-variance product subset under group balance.
    DesignSelect {
        /// Target subset size.
        #[arg(long)]
        n: usize,
        /// CSV with `product_id,group` rows.
        #[arg(long)]
        groups: PathBuf,
        /// Search mode: exact or local.
        #[arg(long, default_value = "exact")]
        mode: String,
        /// Normalize each source's variance by its full-catalog value.
        #[arg(long)]
        normalize: bool,
    },
    /// Generate a synthetic two-task choice dataset from known parameters.
    Simulate {
        /// Ground-truth parameter JSON file.
        #[arg(long)]
        truth: PathBuf,
        /// Number of individuals.
        #[arg(long)]
        n: usize,
    },
}

fn run(cli: Cli) -> Result<()> {
    let config = cli.overrides.resolve()?;
    if config.threads > 0 {
        // Ignore failure: the global pool can only be built once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global();
    }
    match cli.command {
        Command::Featurize {
            kind,
            source,
            stopwords,
        } => commands::featurize::run(&config, &kind, &source, stopwords.as_deref()),
        Command::Pca => commands::pca::run(&config),
        Command::Fit { spec } => commands::fit::run(&config, &spec),
        Command::Select {
            max_pc,
            with_attributes,
        } => commands::select::run(&config, max_pc, with_attributes),
        Command::Weights => commands::weights::run(&config),
        Command::Diversions { fit, common_price } => {
            commands::diversions::run(&config, fit.as_deref(), common_price)
        }
        Command::Validate => commands::validate::run(&config),
        Command::Merger {
            pair,
            fixed_price,
            mc,
        } => commands::merger::run(&config, &pair, fixed_price, mc),
        Command::DesignSelect {
            n,
            groups,
            mode,
            normalize,
        } => commands::design_select::run(&config, n, &groups, &mode, normalize),
        Command::Simulate { truth, n } => commands::simulate::run(&config, &truth, n),
    }
}

/// Exit 1 for input/validation problems, 2 for numerical failures.
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<demand_core::Error>() {
            return if core.is_numerical() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}
