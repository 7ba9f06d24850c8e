use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::{Arc, OnceLock};

use clap::{Args, Parser, Subcommand};

use fedeval_agent::sheets::{parse_task_key, task_key};
use fedeval_agent::{
    audit_listing, exit, Agent, AgentError, AgentHome, ApiClient, ApprovalDecision, Approver,
    DecisionFileApprover, HttpTransport, TerminalApprover,
};
use fedeval_core::api::RequestAssociation;
use fedeval_core::cube::{
    backend_by_id, Backend, Capabilities, LaunchOutcome, LaunchRequest, RunError, SandboxPolicy,
};
use fedeval_core::{
    AssociationAction, AssociationId, BenchmarkId, ContentUid, EvaluationTask, ReleaseMode,
    ReleasePolicy, SubjectKind,
};

#[derive(Parser)]
#[command(name = "fedeval-agent", about = "Federated evaluation agent")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    #[arg(
        long,
        env = "FEDEVAL_SERVER_URL",
        default_value = "http://127.0.0.1:8080",
        global = true
    )]
    server: String,
    #[arg(long, env = "FEDEVAL_TOKEN", hide_env_values = true, global = true)]
    token: Option<String>,
    #[arg(
        long,
        env = "FEDEVAL_AGENT_HOME",
        default_value = "./fedeval-agent-home",
        global = true
    )]
    home: PathBuf,
    /// `container`, `docker`, `podman` or `process`.
    #[arg(long, default_value = "container", global = true)]
    backend: String,
    /// Run cubes with network access. Required for the process backend.
    #[arg(long, global = true)]
    insecure_allow_network: bool,
    /// Take approval decisions from a file instead of the terminal. For
    /// automated tests only.
    #[arg(long, global = true)]
    insecure_decision_file: Option<PathBuf>,
    /// Name recorded as the approving operator.
    #[arg(long, env = "USER", default_value = "operator", global = true)]
    operator: String,
}

#[derive(Subcommand)]
enum Command {
    /// Prepare and register local datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Pending evaluations of this site's datasets.
    #[command(subcommand)]
    Tasks(TasksCmd),
    /// The local log of approvals and executions.
    #[command(subcommand)]
    Audit(AuditCmd),
    /// Model owner commands.
    #[command(subcommand)]
    Model(ModelCmd),
    /// Benchmark committee and operator commands.
    #[command(subcommand)]
    Benchmark(BenchmarkCmd),
    /// Admission requests awaiting the committee.
    #[command(subcommand)]
    Associations(AssociationsCmd),
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Run the benchmark's preparation cube locally.
    Prepare {
        raw: PathBuf,
        #[arg(long)]
        benchmark: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        name: Option<String>,
    },
    /// Review the statistics, register the dataset and request admission.
    Register { uid: ContentUid },
    /// Local datasets and their state.
    List,
}

#[derive(Subcommand)]
enum TasksCmd {
    /// Fetch pending evaluations (or show the cached list with --offline).
    List {
        #[arg(long)]
        dataset: ContentUid,
        #[arg(long)]
        offline: bool,
    },
    /// Review a model and decide whether it may run.
    Approve { task: String },
    /// Run an approved evaluation into a local draft.
    Run { task: String },
    /// Review a draft's metrics and decide whether to upload them.
    Submit { task: String },
}

#[derive(Subcommand)]
enum AuditCmd {
    /// List the local log and verify its chain.
    Show {
        /// Only entries whose action contains this text.
        #[arg(long)]
        filter: Option<String>,
    },
}

#[derive(Subcommand)]
enum ModelCmd {
    /// Register a model cube directory and request admission.
    Submit {
        dir: PathBuf,
        #[arg(long)]
        benchmark: String,
        #[arg(long)]
        download_url: Option<String>,
    },
}

#[derive(Subcommand)]
enum BenchmarkCmd {
    /// Register a bundle directory's cubes and benchmark.
    Create {
        bundle: PathBuf,
        #[arg(long)]
        download_url_base: Option<String>,
    },
    /// Move a DRAFT benchmark to OPERATIONAL (operator only).
    Activate { id: String },
    /// Set the release policy: PRIVATE, OWNER_SCOPED or PUBLIC.
    Release {
        id: String,
        #[arg(long)]
        mode: String,
        #[arg(long)]
        show_per_site: bool,
    },
    /// Print the leaderboard visible to the caller.
    Results { id: String },
}

#[derive(Subcommand)]
enum AssociationsCmd {
    /// The committee's queue of requested associations.
    List,
    /// Ask to admit a model cube or dataset you own into a benchmark.
    Request {
        benchmark: String,
        #[arg(long, required_unless_present = "dataset", conflicts_with = "dataset")]
        model: Option<String>,
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Approve or reject one request.
    Decide {
        id: String,
        /// `approve` or `reject`.
        decision: String,
    },
}

fn task_arg(s: &str) -> Result<EvaluationTask, AgentError> {
    parse_task_key(s).ok_or_else(|| {
        AgentError::Invalid(format!("bad task {s:?}, expected benchmark:dataset:model"))
    })
}

fn approver(g: &Global) -> Result<Box<dyn Approver>, AgentError> {
    Ok(match &g.insecure_decision_file {
        Some(path) => {
            eprintln!(
                "warning: approvals are taken from {} (insecure)",
                path.display()
            );
            Box::new(DecisionFileApprover::load(path, g.operator.clone())?)
        }
        None => Box::new(TerminalApprover::new(g.operator.clone())),
    })
}

/// Looks the runtime up on first use so commands that never launch a cube
/// work on hosts without one.
struct LazyBackend {
    id: String,
    inner: OnceLock<Result<Box<dyn Backend>, String>>,
}

impl LazyBackend {
    fn new(id: &str) -> Self {
        LazyBackend {
            id: id.to_owned(),
            inner: OnceLock::new(),
        }
    }

    fn get(&self) -> Result<&dyn Backend, RunError> {
        self.inner
            .get_or_init(|| backend_by_id(&self.id).map_err(|e| e.to_string()))
            .as_ref()
            .map(|b| b.as_ref())
            .map_err(|_| RunError::BackendNotFound(self.id.clone()))
    }
}

impl Backend for LazyBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        self.get()
            .map(|b| b.capabilities())
            .unwrap_or(Capabilities {
                can_deny_network: false,
                can_limit_resources: false,
            })
    }

    fn launch(&self, request: &LaunchRequest<'_>) -> Result<LaunchOutcome, RunError> {
        self.get()?.launch(request)
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn run(cli: Cli) -> Result<i32, AgentError> {
    let g = &cli.global;
    let home = AgentHome::open(&g.home)?;
    let client = ApiClient::new(Arc::new(HttpTransport::new(&g.server)), g.token.clone());
    let mut policy = SandboxPolicy::default();
    if g.insecure_allow_network {
        eprintln!("warning: cubes run with network access");
        policy = policy.insecure_allow_network();
    }
    let agent = Agent::new(home, client, Arc::new(LazyBackend::new(&g.backend)), policy);

    match cli.command {
        Command::Dataset(DatasetCmd::Prepare {
            raw,
            benchmark,
            out,
            name,
        }) => {
            let d =
                agent.prepare_dataset(&raw, &BenchmarkId::new(benchmark), &out, name.as_deref())?;
            println!("{}", json(&d));
        }
        Command::Dataset(DatasetCmd::Register { uid }) => {
            let d = agent.register_dataset(&uid, approver(g)?.as_mut())?;
            println!("{}", json(&d));
        }
        Command::Dataset(DatasetCmd::List) => {
            for d in agent.home().datasets()? {
                println!(
                    "{}  {:?}  {}",
                    d.generated_uid, d.registration_state, d.name
                );
            }
        }
        Command::Tasks(TasksCmd::List { dataset, offline }) => {
            let items = if offline {
                agent.cached_tasks(&dataset)?
            } else {
                agent.poll(&dataset)?
            };
            for item in items {
                println!(
                    "{}  {} ({})",
                    task_key(&fedeval_agent::sheets::item_task(&item)),
                    item.model_cube.name,
                    item.model_cube.owner_id
                );
            }
        }
        Command::Tasks(TasksCmd::Approve { task }) => {
            let record = agent.approve_model(&task_arg(&task)?, approver(g)?.as_mut())?;
            println!("{:?} {}", record.decision, record.shown_digest);
            if record.decision == ApprovalDecision::Reject {
                return Ok(exit::APPROVAL_DENIED);
            }
        }
        Command::Tasks(TasksCmd::Run { task }) => {
            let draft = agent.run_evaluation(&task_arg(&task)?)?;
            println!("{}", json(&draft));
        }
        Command::Tasks(TasksCmd::Submit { task }) => {
            let id = agent.submit(&task_arg(&task)?, approver(g)?.as_mut())?;
            println!("{id}");
        }
        Command::Audit(AuditCmd::Show { filter }) => {
            let log = agent.home().audit_log()?;
            let shown: Vec<_> = log
                .iter()
                .filter(|e| {
                    filter
                        .as_ref()
                        .is_none_or(|f| e.action.name().contains(f.as_str()))
                })
                .cloned()
                .collect();
            print!("{}", audit_listing(&shown));
            fedeval_core::verify_audit_chain(&log).map_err(AgentError::ChainCorrupt)?;
            println!("chain ok ({} entries)", log.len());
        }
        Command::Model(ModelCmd::Submit {
            dir,
            benchmark,
            download_url,
        }) => {
            let (cube, assoc) =
                agent.submit_model(&dir, &BenchmarkId::new(benchmark), download_url.as_deref())?;
            println!("cube {cube}\nassociation {assoc}");
        }
        Command::Benchmark(BenchmarkCmd::Create {
            bundle,
            download_url_base,
        }) => {
            println!(
                "{}",
                agent.create_benchmark(&bundle, download_url_base.as_deref())?
            );
        }
        Command::Benchmark(BenchmarkCmd::Activate { id }) => {
            agent.client().activate_benchmark(&BenchmarkId::new(id))?;
        }
        Command::Benchmark(BenchmarkCmd::Release {
            id,
            mode,
            show_per_site,
        }) => {
            let mode: ReleaseMode =
                serde_json::from_value(serde_json::Value::String(mode.to_ascii_uppercase()))
                    .map_err(|_| {
                        AgentError::Invalid("mode must be PRIVATE, OWNER_SCOPED or PUBLIC".into())
                    })?;
            agent.client().set_release_policy(
                &BenchmarkId::new(id),
                ReleasePolicy {
                    mode,
                    show_per_site,
                },
            )?;
        }
        Command::Benchmark(BenchmarkCmd::Results { id }) => {
            println!("{}", json(&agent.client().results(&BenchmarkId::new(id))?));
        }
        Command::Associations(AssociationsCmd::List) => {
            for a in agent.client().association_queue()? {
                println!(
                    "{}  {}  {:?} {}",
                    a.id, a.benchmark_id, a.subject_kind, a.subject
                );
            }
        }
        Command::Associations(AssociationsCmd::Request {
            benchmark,
            model,
            dataset,
        }) => {
            let (subject_kind, subject) = match (model, dataset) {
                (Some(m), _) => (SubjectKind::Model, m),
                (None, Some(d)) => (SubjectKind::Dataset, d),
                (None, None) => unreachable!("clap requires one"),
            };
            let id = agent.client().request_association(&RequestAssociation {
                benchmark_id: BenchmarkId::new(benchmark),
                subject_kind,
                subject,
            })?;
            println!("{id}");
        }
        Command::Associations(AssociationsCmd::Decide { id, decision }) => {
            let action = match decision.to_ascii_lowercase().as_str() {
                "approve" => AssociationAction::Approve,
                "reject" => AssociationAction::Reject,
                _ => {
                    return Err(AgentError::Invalid(
                        "decision must be approve or reject".into(),
                    ))
                }
            };
            let a = agent.client().decide(&AssociationId::new(id), action)?;
            println!("{}", json(&a));
        }
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{}: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
