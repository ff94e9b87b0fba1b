use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use semfabric::agent::{retrieve_full_context, Agent, DEFAULT_BUDGET_TOKENS};
use semfabric::chunker::SplitParams;
use semfabric::corpus::load_corpus;
use semfabric::embed::EmbedderSpec;
use semfabric::harness::{read_rows_csv, report, rows_to_csv, run_experiment, ExperimentConfig, Fabric};
use semfabric::protocol::Constraints;
use semfabric::resolver::Resolver;
use semfabric::source_server::{descriptor_for, ingest_central, ingest_source, SourceServer};
use semfabric::store::VectorIndex;
use semfabric::transport::{endpoint_url, HttpTransport, Transport, WireRequest};

#[derive(Parser)]
#[command(name = "semfabric", version, about = "Semantic retrieval fabric: sources, resolver, agent, experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chunk and embed corpus documents into index files.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory; one `<source_id>.jsonl` per index.
        #[arg(long)]
        out: PathBuf,
        /// Sources to ingest (repeatable). Defaults to all.
        #[arg(long = "source")]
        sources: Vec<String>,
        /// Also build the global index `central.jsonl`.
        #[arg(long)]
        central: bool,
        #[arg(long, default_value_t = 1000)]
        chunk_size: usize,
        #[arg(long, default_value_t = 100)]
        overlap: usize,
    },
    /// Serve one index over HTTP.
    ServeSource {
        #[arg(long)]
        index: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8081")]
        addr: String,
        /// Public endpoint advertised in the manifest. Defaults to http://<addr>.
        #[arg(long)]
        endpoint: Option<String>,
        /// Resolver to register with on startup.
        #[arg(long)]
        register: Option<String>,
    },
    /// Run the semantic resolver.
    ServeResolver {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Registry persisted as JSONL, reloaded on restart.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Retrieve context for one question and print it as JSON.
    Query(QueryArgs),
    /// Run an experiment grid and write one CSV row per question and cell.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Rows CSV; a `.meta.json` file is written beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate experiment rows into sufficiency, transfer and
    /// query-processing tables.
    Report {
        #[arg(long, required = true)]
        rows: Vec<PathBuf>,
        /// Defaults to the directory of the first rows file.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum QueryMode {
    Centralized,
    Decentralized,
    Hybrid,
    #[value(alias = "full-context", alias = "full_context")]
    Full,
}

#[derive(Args)]
struct QueryArgs {
    /// Question text; or use --corpus with --qid.
    #[arg(conflicts_with = "query")]
    question: Option<String>,
    #[arg(long)]
    query: Option<String>,
    /// Defaults to the mode implied by the other flags.
    #[arg(long, value_enum)]
    mode: Option<QueryMode>,
    #[arg(long)]
    central: Option<String>,
    #[arg(long)]
    resolver: Option<String>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Hybrid mode: keep the best k_final of the s*k wide fetch.
    #[arg(long)]
    k_final: Option<usize>,
    /// Corpus for --qid lookups and full-context mode.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    qid: Option<String>,
    #[arg(long, default_value_t = DEFAULT_BUDGET_TOKENS)]
    budget_tokens: usize,
    /// Constraints as JSON, e.g. '{"licenses":["cc0-1.0"]}'.
    #[arg(long)]
    constraints: Option<String>,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn ingest(corpus_dir: &Path, out: &Path, sources: Vec<String>, central: bool, params: SplitParams) -> Result<()> {
    let corpus = load_corpus(corpus_dir)?;
    let spec = EmbedderSpec::default();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let sources = if sources.is_empty() { corpus.source_ids() } else { sources };
    for source_id in &sources {
        let docs = corpus.documents_of(source_id);
        if docs.is_empty() {
            bail!("source {source_id} has no documents in {}", corpus_dir.display());
        }
        let index = ingest_source(&docs, descriptor_for(&corpus, source_id), &params, &spec)?;
        let path = out.join(format!("{source_id}.jsonl"));
        index.persist(&path)?;
        println!("{source_id}\t{} chunks\t{}", index.len(), index.digest());
    }
    if central {
        let index = ingest_central(&corpus, &params, &spec)?;
        index.persist(out.join("central.jsonl"))?;
        println!("central\t{} chunks\t{}", index.len(), index.digest());
    }
    Ok(())
}

fn serve(addr: &str, service: Arc<dyn semfabric::Service>, listener: std::net::TcpListener) -> Result<()> {
    listener.set_nonblocking(true)?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        eprintln!("listening on {addr}");
        semfabric::http::serve(listener, service).await
    })?;
    Ok(())
}

fn serve_source(index: &Path, addr: &str, endpoint: Option<String>, register: Option<String>) -> Result<()> {
    let index = VectorIndex::load(index)?;
    let listener = std::net::TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    let bound = listener.local_addr()?;
    let endpoint = endpoint.unwrap_or_else(|| format!("http://{bound}"));
    let server = SourceServer::new(index, &endpoint)?;
    if let Some(resolver) = register {
        let manifest = server.manifest().context("server has no manifest")?;
        let body = serde_json::to_vec(manifest)?;
        let response = HttpTransport::default().exchange(&WireRequest::post(endpoint_url(&resolver, "/register"), body))?;
        if !response.is_success() {
            bail!("registration rejected ({}): {}", response.status, String::from_utf8_lossy(&response.body));
        }
        eprintln!("registered {} with {resolver}", manifest.source_id);
    }
    serve(&bound.to_string(), Arc::new(server), listener)
}

fn serve_resolver(addr: &str, state: Option<PathBuf>) -> Result<()> {
    let mut resolver = Resolver::default();
    if let Some(path) = state {
        resolver = resolver.with_state(path)?;
    }
    let listener = std::net::TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    let bound = listener.local_addr()?.to_string();
    serve(&bound, Arc::new(resolver), listener)
}

fn query(args: QueryArgs) -> Result<()> {
    let constraints: Option<Constraints> = args
        .constraints
        .as_deref()
        .map(|c| serde_json::from_str(c).context("parsing --constraints"))
        .transpose()?;
    let agent = Agent::new(Arc::new(HttpTransport::default())).with_constraints(constraints);

    let loaded = args.corpus.as_deref().map(load_corpus).transpose()?;
    let item = match (&loaded, &args.qid) {
        (Some(c), Some(id)) => Some(
            c.questions
                .iter()
                .find(|q| &q.qid == id)
                .with_context(|| format!("no question {id}"))?,
        ),
        _ => None,
    };
    let question = args
        .question
        .or(args.query)
        .or_else(|| item.map(|i| i.question.clone()))
        .context("give a question or --corpus with --qid")?;

    let mode = args.mode.unwrap_or(match (&args.central, &args.resolver, args.k_final) {
        (Some(_), _, _) => QueryMode::Centralized,
        (None, Some(_), Some(_)) => QueryMode::Hybrid,
        (None, Some(_), None) => QueryMode::Decentralized,
        (None, None, _) => QueryMode::Full,
    });
    let resolver = || args.resolver.clone().context("--resolver is required for this mode");
    let s = || args.s.context("--s is required for this mode");
    let result = match mode {
        QueryMode::Centralized => {
            let central = args.central.clone().context("--central is required for centralized mode")?;
            agent.retrieve_centralized(&agent.process(&question)?, args.k, &central)?
        }
        QueryMode::Decentralized => agent.retrieve_decentralized(&agent.process(&question)?, s()?, args.k, &resolver()?)?,
        QueryMode::Hybrid => {
            let k_final = args.k_final.context("--k-final is required for hybrid mode")?;
            agent.retrieve_hybrid(&agent.process(&question)?, s()?, args.k, k_final, &resolver()?)?
        }
        QueryMode::Full => {
            let (Some(corpus), Some(item)) = (&loaded, item) else {
                bail!("full-context mode needs --corpus and --qid");
            };
            retrieve_full_context(item, args.budget_tokens, corpus)
        }
    };
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn experiment(config_path: &Path, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config_path)?;
    let corpus_dir = cfg.corpus.as_ref().context("config needs `corpus` for the questions")?;
    let corpus = load_corpus(corpus_dir)?;

    let remote = cfg.central.is_some() || cfg.resolver.is_some();
    let mut cfg = cfg;
    let fabric;
    let agent = if remote {
        Agent::new(Arc::new(HttpTransport::default()))
    } else {
        fabric = match &cfg.index_dir {
            Some(dir) => Fabric::from_index_dir(dir)?,
            None => Fabric::from_corpus(&corpus, &SplitParams::default(), &EmbedderSpec::default())?,
        };
        cfg.central = Some(fabric.central_url());
        cfg.resolver = Some(fabric.resolver_url());
        fabric.agent()
    }
    .with_constraints(cfg.constraints.clone())
    .with_parallelism(cfg.parallelism);

    let rows = run_experiment(&cfg, &corpus, &agent)?;
    write_file(out, rows_to_csv(&rows)?)?;
    let meta = serde_json::json!({
        "mode": cfg.mode,
        "s": cfg.s,
        "k": cfg.k,
        "k_final": cfg.k_final,
        "budget_tokens": cfg.budget_tokens,
        "chars_per_token": cfg.chars_per_token,
        "k_semantics": "k chunks per subquery, merged with dedup by chunk_id",
        "transport": if remote { "http" } else { "in-process" },
        "rows": rows.len(),
    });
    let mut meta_path = out.as_os_str().to_owned();
    meta_path.push(".meta.json");
    write_file(Path::new(&meta_path), serde_json::to_string_pretty(&meta)? + "\n")?;
    eprintln!("{} rows -> {}", rows.len(), out.display());
    Ok(())
}

fn report_cmd(paths: &[PathBuf], out_dir: Option<PathBuf>) -> Result<()> {
    let out_dir = out_dir.unwrap_or_else(|| paths[0].parent().map(Path::to_path_buf).unwrap_or_default());
    let mut rows = Vec::new();
    for path in paths {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        rows.extend(read_rows_csv(file).with_context(|| format!("reading {}", path.display()))?);
    }
    let r = report(&rows)?;
    write_file(&out_dir.join("sufficiency.csv"), r.sufficiency_csv()?)?;
    write_file(&out_dir.join("transfer.csv"), r.transfer_csv()?)?;
    write_file(&out_dir.join("query_processing.csv"), r.query_processing_csv()?)?;
    print!("{}", r.sufficiency_csv()?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Ingest {
            corpus,
            out,
            sources,
            central,
            chunk_size,
            overlap,
        } => ingest(&corpus, &out, sources, central, SplitParams::new(chunk_size, overlap)?),
        Command::ServeSource {
            index,
            addr,
            endpoint,
            register,
        } => serve_source(&index, &addr, endpoint, register),
        Command::ServeResolver { addr, state } => serve_resolver(&addr, state),
        Command::Query(args) => query(args),
        Command::Experiment { config, out } => experiment(&config, &out),
        Command::Report { rows, out_dir } => report_cmd(&rows, out_dir),
    }
}
