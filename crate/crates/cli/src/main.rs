use std::path::{Path, PathBuf};
use std::sync::Arc;

use adnav_core::app_model::{load_bundle, AppBundle};
use adnav_core::config::Config;
use adnav_core::eval::{
    BackendSpec, BfsPolicy, CampaignSpec, CriterionPolicy, KeywordPolicy, PolicyKind, RandomPolicy,
};
use adnav_core::knowledge::profile_offline;
use adnav_core::memory::ExperienceStore;
use adnav_core::navigator::{run_episode, AgentPolicy, EpisodeEnv, EpisodeReport, Policy};
use adnav_core::perception::{ScriptedCaptioner, VisionCaptioner};
use adnav_core::profiler::{extract_screen_prior, extract_slot_prior, extract_trigger_prior};
use adnav_core::prober::probe_bundle;
use adnav_core::utg::{ExportFormat, TransitionGraph};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "adnav", version, about = "Find ad triggers in simulated app bundles")]
struct Cli {
    /// TOML config with sdk, probe, navigator, memory, oracle, criterion
    /// and remote sections. Missing keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log filter, e.g. `info` or `adnav_core=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Static priors from manifest, layouts and code summary.
    Profile {
        bundle: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Random probe plus network correlation.
    Probe {
        bundle: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
        /// Write the coarse transition graph here (JSON).
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// One exploration episode; writes report, graph and prompts to a run
    /// directory.
    Explore {
        bundle: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyArg::Agent)]
        policy: PolicyArg,
        /// `oracle`, `remote` or `replay:<transcript.jsonl>`.
        #[arg(long, default_value = "oracle")]
        backend: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run directory; defaults to `runs/<app>-<policy>-<seed>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Persistent experience store (JSONL); in memory when absent.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Stop after this many distinct ads.
        #[arg(long)]
        max_ads: Option<usize>,
    },
    /// Policies over a corpus manifest, as described by a campaign TOML.
    Campaign {
        spec: PathBuf,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the transition graph of a run directory.
    ExportUtg {
        run: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Dot)]
        format: FormatArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Agent,
    Random,
    Bfs,
    Keyword,
    Criterion,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Agent => PolicyKind::Agent,
            PolicyArg::Random => PolicyKind::Random,
            PolicyArg::Bfs => PolicyKind::Bfs,
            PolicyArg::Keyword => PolicyKind::Keyword,
            PolicyArg::Criterion => PolicyKind::Criterion,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Dot,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_new(&cli.log).context("bad --log filter")?)
        .with_writer(std::io::stderr)
        .init();
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Profile { bundle, json } => profile(&config, &bundle, json),
        Command::Probe { bundle, seed, json, graph } => probe(&config, &bundle, seed, json, graph.as_deref()),
        Command::Explore { bundle, policy, backend, seed, out, store, max_ads } => {
            explore(&config, &bundle, policy.into(), &backend, seed, out, store.as_deref(), max_ads)
        }
        Command::Campaign { spec, out } => campaign(cli.config.is_some().then_some(&config), &spec, out.as_deref()),
        Command::ExportUtg { run, format } => export_utg(&run, format),
    }
}

fn open_bundle(path: &Path) -> Result<Arc<AppBundle>> {
    Ok(Arc::new(load_bundle(path).with_context(|| format!("loading {}", path.display()))?))
}

fn profile(config: &Config, path: &Path, as_json: bool) -> Result<()> {
    let bundle = open_bundle(path)?;
    let screen = extract_screen_prior(&bundle, &config.sdk);
    let slot = extract_slot_prior(&bundle, &config.sdk);
    let trigger = extract_trigger_prior(&bundle, &config.sdk);
    if as_json {
        println!("{}", serde_json::to_string_pretty(&json!({"screen": screen, "slot": slot, "trigger": trigger}))?);
        return Ok(());
    }
    println!("app {}", bundle.app_id);
    let libraries: std::collections::BTreeSet<&String> = screen.detected_libraries.iter().chain(&trigger.libraries).collect();
    println!("libraries: {}", join(libraries.into_iter()));
    println!("ad activities: {}", join(screen.ad_related_activities.iter()));
    println!("permissions: {}", join(screen.matched_permissions.iter()));
    println!("\n{:<28} {:<22} {:<40} {:<12}", "activity", "view", "resource id", "format");
    for e in &slot.entries {
        println!(
            "{:<28} {:<22} {:<40} {:<12}",
            e.activity,
            e.view_class.rsplit('.').next().unwrap_or(&e.view_class),
            e.resource_id.as_deref().unwrap_or("-"),
            serde_json::to_value(e.ad_format)?.as_str().unwrap_or("?"),
        );
    }
    for w in &slot.warnings {
        println!("warning: {} {}: {}", w.activity, w.resource_id, w.message);
    }
    println!("\n{:<28} {:<28} {:>4}", "activity", "method", "rank");
    for (activity, methods) in &trigger.methods_by_activity {
        for m in methods {
            println!("{:<28} {:<28} {:>4}", activity, m.signature, m.rank);
        }
    }
    Ok(())
}

fn join<'a>(items: impl Iterator<Item = &'a String>) -> String {
    let v: Vec<&str> = items.map(String::as_str).collect();
    if v.is_empty() {
        "-".into()
    } else {
        v.join(", ")
    }
}

fn probe(config: &Config, path: &Path, seed: u64, as_json: bool, graph_out: Option<&Path>) -> Result<()> {
    let bundle = open_bundle(path)?;
    let (graph, trace, prior) = probe_bundle(bundle.clone(), &config.probe, seed);
    if let Some(p) = graph_out {
        std::fs::write(p, graph.export(ExportFormat::Json)).with_context(|| format!("writing {}", p.display()))?;
    }
    if as_json {
        println!("{}", serde_json::to_string_pretty(&prior)?);
        return Ok(());
    }
    println!(
        "app {}: {} events, {} states, {} edges, {} log records",
        bundle.app_id,
        trace.events.len(),
        graph.node_count(),
        graph.edge_count(),
        trace.syslog.len()
    );
    println!("{} linked requests, {} unlinked (window {} s)", prior.links.len(), prior.unlinked.len(), prior.window_delta_seconds);
    for l in &prior.links {
        println!("  {} {:?} -> {} after {:.2} s", short(&l.state_fingerprint), l.action, l.url, l.lag_seconds);
    }
    Ok(())
}

fn short(fp: &str) -> &str {
    &fp[..fp.len().min(6)]
}

fn backend_spec(config: &Config, backend: &str) -> Result<BackendSpec> {
    Ok(match backend {
        "oracle" => BackendSpec::Oracle { config: config.oracle.clone() },
        "remote" => BackendSpec::Remote { config: config.remote.clone() },
        other => match other.strip_prefix("replay:") {
            Some(path) => BackendSpec::Replay { path: path.into(), strict: false },
            None => bail!("unknown backend {other:?}; use oracle, remote or replay:<file>"),
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn explore(
    config: &Config,
    path: &Path,
    kind: PolicyKind,
    backend: &str,
    seed: u64,
    out: Option<PathBuf>,
    store_path: Option<&Path>,
    max_ads: Option<usize>,
) -> Result<()> {
    let bundle = open_bundle(path)?;
    let services = backend_spec(config, backend)?.services(&config.memory)?;
    let store = match store_path {
        Some(p) => ExperienceStore::open(p, config.memory.clone())?,
        None => ExperienceStore::in_memory(config.memory.clone()),
    };
    let profile = profile_offline(&bundle, &config.sdk, &config.probe, seed);
    let empty = Default::default();
    let agent = kind == PolicyKind::Agent;
    let mut graph = if agent {
        let mut g = profile.coarse_graph.clone();
        g.reset_visits();
        g
    } else {
        TransitionGraph::new(config.initial_score)
    };
    let mut policy: Box<dyn Policy> = match kind {
        PolicyKind::Agent => Box::new(AgentPolicy::new("agent", services.decision.clone())),
        PolicyKind::Random => Box::new(RandomPolicy::new(seed)),
        PolicyKind::Bfs => Box::new(BfsPolicy),
        PolicyKind::Keyword => Box::new(KeywordPolicy::new(seed)),
        PolicyKind::Criterion => Box::new(CriterionPolicy::new(config.criterion.clone(), Some(&bundle))),
    };
    let captioner: Arc<dyn VisionCaptioner> = match &services.captioner {
        Some(c) => c.clone(),
        None => Arc::new(ScriptedCaptioner::new(&bundle)),
    };
    let env = EpisodeEnv {
        bundle: bundle.clone(),
        knowledge: if agent { &profile.knowledge } else { &empty },
        success_activities: bundle.manifest.registered_success_activities.iter().cloned().collect(),
        store: agent.then_some(&store),
        embedder: services.embedder.as_ref(),
        summarizer: services.summarizer.as_ref(),
        captioner: Some(captioner),
    };
    let mut nav = config.navigator.clone();
    nav.record_prompts = nav.record_prompts || agent;
    if max_ads.is_some() {
        nav.limits.max_ads = max_ads;
    }
    let report = run_episode(&env, &mut graph, policy.as_mut(), &nav, seed);

    let dir = out.unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-{}-{seed}", bundle.app_id, kind.as_str())));
    write_run(&dir, &report, &graph)?;
    println!(
        "{} {} seed {}: {} steps, {:?}, ads found: {}",
        report.app_id,
        report.policy,
        seed,
        report.steps_taken,
        report.termination_reason,
        if report.distinct_ads.is_empty() { "none".to_string() } else { report.distinct_ads.join(", ") }
    );
    for hit in &report.steps_to_each_ad {
        println!("  {} at step {} ({} steps)", hit.ad_id, hit.at_step, hit.steps);
    }
    if let Some(e) = &report.abort_error {
        println!("aborted: {e}");
    }
    println!("run written to {}", dir.display());
    Ok(())
}

fn write_run(dir: &Path, report: &EpisodeReport, graph: &TransitionGraph) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    std::fs::write(dir.join("graph.json"), graph.export(ExportFormat::Json))?;
    let prompts: Vec<String> = report
        .trajectory
        .iter()
        .filter_map(|s| s.prompt.as_ref().map(|p| format!("### step {}\n{p}", s.step)))
        .collect();
    if !prompts.is_empty() {
        std::fs::write(dir.join("prompts.txt"), prompts.join("\n\n"))?;
    }
    Ok(())
}

fn campaign(config: Option<&Config>, path: &Path, out: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut spec = CampaignSpec::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
    if spec.manifest.is_relative() {
        spec.manifest = path.parent().unwrap_or(Path::new(".")).join(&spec.manifest);
    }
    if let BackendSpec::Replay { path: t, .. } = &mut spec.backend {
        if t.is_relative() {
            *t = path.parent().unwrap_or(Path::new(".")).join(&*t);
        }
    }
    // An explicit --config overrides the tunables in the campaign file.
    if let Some(c) = config {
        spec.sdk = c.sdk.clone();
        spec.probe = c.probe.clone();
        spec.navigator = c.navigator.clone();
        spec.memory = c.memory.clone();
        spec.criterion = c.criterion.clone();
        spec.initial_score = c.initial_score;
        match &mut spec.backend {
            BackendSpec::Oracle { config } => *config = c.oracle.clone(),
            BackendSpec::Remote { config } => *config = c.remote.clone(),
            BackendSpec::Replay { .. } => {}
        }
    }
    let report = adnav_core::eval::run_campaign(&spec)?;
    print!("{}", report.to_text());
    if let Some(p) = out {
        std::fs::write(p, report.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn export_utg(run: &Path, format: FormatArg) -> Result<()> {
    let file = if run.is_dir() { run.join("graph.json") } else { run.to_path_buf() };
    let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    let graph = TransitionGraph::import(&text, ExportFormat::Json)?;
    print!(
        "{}",
        graph.export(match format {
            FormatArg::Json => ExportFormat::Json,
            FormatArg::Dot => ExportFormat::Dot,
        })
    );
    Ok(())
}
