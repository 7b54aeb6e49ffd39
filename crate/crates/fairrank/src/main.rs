use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairrank::core::tuning::{DEFAULT_DEGRADATION, DEFAULT_GRID_SIZE};
use fairrank::core::{
    build_representations, knn, rerank, Catalog, Kernel, Metric, RepresentationSet, RerankConfig, TuningConfig,
};
use fairrank::experiment::{derive_seed, evaluate_queries, split_queries, tune_queries, STAGE_REPS, STAGE_SPLIT};
use fairrank::{io, Error, ExperimentSpec, Method, QueryFilter, Result, Summary, SyntheticSpec};

#[derive(Parser)]
#[command(name = "fairrank", version, about = "Fairness-aware re-ranking of nearest-neighbour results")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a catalog and print a summary, optionally re-serializing it.
    Ingest {
        #[command(flatten)]
        catalog: CatalogArgs,
        /// Directory for the canonical catalog files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic catalog.
    Synth(SynthArgs),
    /// Build fairness representations.
    Reps {
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact nearest neighbours of a catalog item or a raw vector.
    Knn {
        #[command(flatten)]
        catalog: CatalogArgs,
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, default_value_t = 50)]
        pool_size: usize,
        #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
        metric: MetricArg,
    },
    /// Re-rank the KNN pool of one query.
    Rerank {
        #[command(flatten)]
        catalog: CatalogArgs,
        #[command(flatten)]
        query: QueryArgs,
        #[command(flatten)]
        ranking: RankingArgs,
        #[arg(long)]
        lambda: f64,
        #[command(flatten)]
        reps: RepsArgs,
    },
    /// Tune lambda on a seeded train sample of the selected queries.
    Tune {
        #[command(flatten)]
        catalog: CatalogArgs,
        #[command(flatten)]
        select: SelectArgs,
        #[command(flatten)]
        ranking: RankingArgs,
        #[command(flatten)]
        reps: RepsArgs,
        /// Allowable relative drop in p@k.
        #[arg(long = "d", default_value_t = DEFAULT_DEGRADATION)]
        degradation: f64,
        #[arg(long, default_value_t = 100)]
        train_size: usize,
        #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
        grid_size: usize,
        /// Directory for one curve file per train query.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Evaluate a fixed lambda on every selected query.
    Eval {
        #[command(flatten)]
        catalog: CatalogArgs,
        #[command(flatten)]
        select: SelectArgs,
        #[command(flatten)]
        ranking: RankingArgs,
        #[command(flatten)]
        reps: RepsArgs,
        /// Omit to evaluate the plain KNN pool.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Run the full train/test protocol and write the report files.
    Report {
        #[command(flatten)]
        catalog: CatalogArgs,
        #[command(flatten)]
        select: SelectArgs,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 50)]
        pool_size: usize,
        #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
        metric: MetricArg,
        #[arg(long = "d", default_value_t = DEFAULT_DEGRADATION)]
        degradation: f64,
        #[arg(long, default_value_t = 100)]
        train_size: usize,
        #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
        grid_size: usize,
        /// Sampling fractions for the fmmr rows.
        #[arg(long = "fraction", value_delimiter = ',', default_value = "1")]
        fractions: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "knn,mmr,fmmr")]
        methods: Vec<String>,
        /// Add an mmr row matched to the fmmr train fairness.
        #[arg(long)]
        matched: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CatalogArgs {
    /// Directory holding embeddings.tsv, tags.tsv and mapping.yaml.
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    tags: Option<PathBuf>,
    #[arg(long)]
    mapping: Option<PathBuf>,
}

impl CatalogArgs {
    fn load(&self) -> Result<Catalog> {
        let dir = self.catalog.as_ref().map(io::CatalogPaths::in_dir);
        let pick = |own: &Option<PathBuf>, from_dir: Option<PathBuf>, name: &str| {
            own.clone().or(from_dir).ok_or_else(|| Error::InvalidExperiment(format!("missing --{name} (or --catalog)")))
        };
        io::load_catalog(
            &pick(&self.embeddings, dir.as_ref().map(|d| d.embeddings.clone()), "embeddings")?,
            &pick(&self.tags, dir.as_ref().map(|d| d.tags.clone()), "tags")?,
            &pick(&self.mapping, dir.as_ref().map(|d| d.mapping.clone()), "mapping")?,
        )
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct QueryArgs {
    /// Catalog item to use as the query; it is excluded from its results.
    #[arg(long)]
    query: Option<String>,
    /// Comma-separated query vector.
    #[arg(long, allow_hyphen_values = true)]
    vector: Option<String>,
}

impl QueryArgs {
    fn vector<'a>(&'a self, catalog: &'a Catalog) -> Result<(Vec<f64>, Option<&'a str>)> {
        match (&self.query, &self.vector) {
            (Some(id), _) => Ok((catalog.item(id)?.vector.clone(), Some(id.as_str()))),
            (None, Some(v)) => {
                let values = io::parse_embeddings(&format!("query\t{v}"), "--vector".as_ref())?;
                Ok((values.into_iter().next().expect("one record").1, None))
            }
            (None, None) => unreachable!("clap requires one of the query arguments"),
        }
    }
}

#[derive(Args)]
struct SelectArgs {
    /// Restrict queries to one group's members.
    #[arg(long, conflicts_with = "query_tag")]
    query_group: Option<String>,
    /// Restrict queries to items with any of these tags.
    #[arg(long, value_delimiter = ',')]
    query_tag: Vec<String>,
}

impl SelectArgs {
    fn filter(&self) -> QueryFilter {
        match (&self.query_group, self.query_tag.is_empty()) {
            (Some(g), _) => QueryFilter::Group(g.clone()),
            (None, false) => QueryFilter::AnyTag(self.query_tag.clone()),
            (None, true) => QueryFilter::AnyGroup,
        }
    }
}

#[derive(Args)]
struct RankingArgs {
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 50)]
    pool_size: usize,
    #[arg(long, value_enum, default_value_t = KernelArg::Fmmr)]
    kernel: KernelArg,
    #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
    metric: MetricArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RepsArgs {
    /// Precomputed representations; built from the catalog when omitted.
    #[arg(long)]
    reps: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    fraction: f64,
}

impl RepsArgs {
    fn resolve(&self, catalog: &Catalog, kernel: Kernel, seed: u64) -> Result<Option<RepresentationSet>> {
        if kernel != Kernel::Fmmr {
            return Ok(None);
        }
        let reps = match &self.reps {
            Some(path) => io::read_representations(path)?,
            None => build_representations(catalog, self.fraction, derive_seed(seed, STAGE_REPS))?,
        };
        reps.check_against(catalog)?;
        Ok(Some(reps))
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    items_per_group: Option<usize>,
    #[arg(long)]
    groupless: Option<usize>,
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 500 items: two groups of 200 plus 100 groupless, 10 topics.
    Desk,
    /// 600 items: two groups of 300, 10 topics.
    Paired,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Mmr,
    Fmmr,
}

impl From<KernelArg> for Kernel {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Mmr => Kernel::ClassicMmr,
            KernelArg::Fmmr => Kernel::Fmmr,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclidean,
    Manhattan,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Manhattan => Metric::Manhattan,
        }
    }
}

fn tuning_config(catalog: &Catalog, r: &RankingArgs) -> Result<TuningConfig> {
    let mut cfg = TuningConfig::for_catalog(catalog)?;
    cfg.k = r.k;
    cfg.pool_size = r.pool_size;
    cfg.metric = r.metric.into();
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

fn run(cli: Cli) -> Result<String> {
    let mut out = String::new();
    match cli.command {
        Command::Ingest { catalog, out: dir } => {
            let cat = catalog.load()?;
            writeln!(out, "items\t{}\ndimension\t{}", cat.len(), cat.dimension()).unwrap();
            for (g, n) in cat.group_counts() {
                writeln!(out, "group {g}\t{n}").unwrap();
            }
            writeln!(out, "groupless\t{}", cat.iter().filter(|it| it.groups.is_empty()).count()).unwrap();
            if let Some(dir) = dir {
                std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
                io::save_catalog(&cat, &io::CatalogPaths::in_dir(&dir))?;
            }
        }
        Command::Synth(args) => {
            let mut spec = match args.preset {
                Preset::Desk => SyntheticSpec::desk_scale(),
                Preset::Paired => SyntheticSpec::paired(),
            };
            spec.items_per_group = args.items_per_group.unwrap_or(spec.items_per_group);
            spec.groupless_count = args.groupless.unwrap_or(spec.groupless_count);
            spec.num_topics = args.topics.unwrap_or(spec.num_topics);
            spec.noise_scale = args.noise.unwrap_or(spec.noise_scale);
            let corpus = fairrank::generate_synthetic(&spec, args.seed)?;
            std::fs::create_dir_all(&args.out).map_err(|e| Error::Io { path: args.out.clone(), source: e })?;
            io::save_catalog(&corpus.catalog, &io::CatalogPaths::in_dir(&args.out))?;
            let mut log = String::from("id\tgroup\ttopic\n");
            for a in &corpus.log {
                let group = a.group.map_or_else(|| "-".into(), |g| spec.group_tags[g].clone());
                writeln!(log, "{}\t{group}\t{}", a.id, a.topic).unwrap();
            }
            io::write_file(&args.out.join("assignments.tsv"), &log)?;
            writeln!(out, "wrote {} items to {}", corpus.catalog.len(), args.out.display()).unwrap();
        }
        Command::Reps { catalog, fraction, seed, out: path } => {
            let cat = catalog.load()?;
            let reps = build_representations(&cat, fraction, seed)?;
            io::write_representations(&path, &reps)?;
            for r in &reps {
                writeln!(out, "{}\t{} items", r.group, r.sample_size).unwrap();
            }
        }
        Command::Knn { catalog, query, pool_size, metric } => {
            let cat = catalog.load()?;
            let (v, exclude) = query.vector(&cat)?;
            let pool = knn(&cat, &v, pool_size, metric.into(), exclude)?;
            for c in pool.candidates() {
                writeln!(out, "{}\t{}", c.id, c.distance).unwrap();
            }
        }
        Command::Rerank { catalog, query, ranking, lambda, reps } => {
            let cat = catalog.load()?;
            let kernel = ranking.kernel.into();
            let reps = reps.resolve(&cat, kernel, ranking.seed)?;
            let (v, exclude) = query.vector(&cat)?;
            let pool = knn(&cat, &v, ranking.pool_size, ranking.metric.into(), exclude)?;
            let cfg = RerankConfig::new(lambda, ranking.k, kernel)?.with_metric(ranking.metric.into());
            let ranked = rerank(&pool, &cat, reps.as_ref(), &cfg)?;
            writeln!(out, "rank\tid\tobjective\trelevance\tgain").unwrap();
            for (i, e) in ranked.iter().enumerate() {
                writeln!(out, "{}\t{}\t{}\t{}\t{}", i + 1, e.id, e.objective, e.relevance, e.diversity_gain).unwrap();
            }
        }
        Command::Tune { catalog, select, ranking, reps, degradation, train_size, grid_size, curves } => {
            let cat = catalog.load()?;
            let kernel = ranking.kernel.into();
            let reps = reps.resolve(&cat, kernel, ranking.seed)?;
            let mut cfg = tuning_config(&cat, &ranking)?;
            cfg.degradation = degradation;
            cfg.grid_size = grid_size;
            cfg.validate()?;
            let queries = fairrank::select_queries(&cat, &select.filter())?;
            let split = split_queries(&queries, train_size, derive_seed(ranking.seed, STAGE_SPLIT))?;
            let train = split.train.iter().map(|id| cat.item(id)).collect::<Result<Vec<_>, _>>()?;
            let result = tune_queries(&train, &cat, reps.as_ref(), &cfg, kernel)?;
            if let Some(dir) = &curves {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
            }
            let k = cfg.k;
            writeln!(out, "query\tlambda\tbinding\tp@{k}\tfr@{k}").unwrap();
            for t in &result.per_query {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}",
                    t.query_id,
                    t.lambda,
                    t.constraint_binding,
                    fmt_opt(t.chosen.p_at_k),
                    fmt_opt(t.chosen.fr_at_k)
                )
                .unwrap();
                if let Some(dir) = &curves {
                    io::write_curve(&dir.join(format!("{}.tsv", t.query_id)), &t.curve)?;
                }
            }
            for id in &result.skipped {
                writeln!(out, "# skipped untagged query {id}").unwrap();
            }
            writeln!(out, "overall_lambda\t{}", result.overall_lambda).unwrap();
        }
        Command::Eval { catalog, select, ranking, reps, lambda } => {
            let cat = catalog.load()?;
            let kernel = ranking.kernel.into();
            let reps = match lambda {
                Some(_) => reps.resolve(&cat, kernel, ranking.seed)?,
                None => None,
            };
            let cfg = tuning_config(&cat, &ranking)?;
            let ids = fairrank::select_queries(&cat, &select.filter())?;
            let queries = ids.iter().map(|id| cat.item(id)).collect::<Result<Vec<_>, _>>()?;
            let evs = evaluate_queries(&queries, &cat, reps.as_ref(), &cfg, lambda.map(|l| (l, kernel)))?;
            let k = cfg.k;
            writeln!(out, "query\tp@{k}\tfr@{k}\tentropy@{k}").unwrap();
            for e in &evs {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}",
                    e.query_id,
                    fmt_opt(e.p_at_k),
                    fmt_opt(e.fr_at_k),
                    fmt_opt(e.entropy_at_k)
                )
                .unwrap();
            }
            for (name, s) in [
                ("p", Summary::of(evs.iter().map(|e| e.p_at_k), 0.95)?),
                ("fr", Summary::of(evs.iter().map(|e| e.fr_at_k), 0.95)?),
                ("entropy", Summary::of(evs.iter().map(|e| e.entropy_at_k), 0.95)?),
            ] {
                writeln!(out, "# mean {name}@{k}\t{}\t± {}\tn={}", fmt_opt(s.mean), fmt_opt(s.half_width), s.n)
                    .unwrap();
            }
        }
        Command::Report {
            catalog,
            select,
            k,
            pool_size,
            metric,
            degradation,
            train_size,
            grid_size,
            fractions,
            methods,
            matched,
            seed,
            out: dir,
        } => {
            let cat = catalog.load()?;
            let spec = ExperimentSpec {
                query_filter: select.filter(),
                train_size,
                k,
                pool_size,
                metric: metric.into(),
                methods: methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>>>()?,
                sampling_fractions: fractions,
                degradation,
                grid_size,
                matched_mmr: matched,
                seed,
                ..ExperimentSpec::default()
            };
            let report = fairrank::run_experiment(&cat, &spec)?;
            report.write_to(&dir)?;
            out.push_str(&report.aggregate_table());
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
