//! A live server on a loopback port plus helpers to stand up a federation.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;

use fedeval_agent::{
    Agent, AgentHome, ApiClient, ApprovalDecision, HttpTransport, RecordingTransport,
    ScriptedApprover,
};
use fedeval_core::api::{CreateAccount, RequestAssociation};
use fedeval_core::cube::{
    Backend, Capabilities, LaunchOutcome, LaunchRequest, RunError, SandboxPolicy,
};
use fedeval_core::{AssociationAction, BenchmarkId, ContentUid, CubeId, Role, SubjectKind};
use fedeval_refbench::bundle::{write_bundle, BundlePaths};
use fedeval_refbench::cli::InProcessBackend;
use fedeval_refbench::site::{write_site, SiteConfig};
use fedeval_server::{router, Service, SystemClock};

pub const OPERATOR_TOKEN: &str = "operator-token-0000000000";

pub struct TestServer {
    pub url: String,
    pub svc: Arc<Service>,
}

pub fn start_server() -> TestServer {
    let svc = Arc::new(Service::in_memory(Arc::new(SystemClock)));
    svc.bootstrap_operator(OPERATOR_TOKEN).unwrap();
    let app = router(svc.clone(), None);
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    let addr = rx.recv().unwrap();
    TestServer {
        url: format!("http://{addr}"),
        svc,
    }
}

/// Launch log of a wrapped backend.
#[derive(Clone)]
pub struct CountingBackend {
    inner: Arc<dyn Backend>,
    pub launches: Arc<Mutex<Vec<(u64, ContentUid, String)>>>,
}

impl CountingBackend {
    pub fn new(inner: Arc<dyn Backend>) -> Self {
        CountingBackend {
            inner,
            launches: Arc::default(),
        }
    }

    pub fn count(&self) -> usize {
        self.launches.lock().unwrap().len()
    }
}

impl Backend for CountingBackend {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn launch(&self, req: &LaunchRequest<'_>) -> Result<LaunchOutcome, RunError> {
        self.launches.lock().unwrap().push((
            req.cube.verification_id(),
            req.cube.manifest_uid().clone(),
            req.task.to_string(),
        ));
        self.inner.launch(req)
    }
}

pub fn token(name: &str) -> String {
    format!("{name}-token-0000000000000")
}

pub struct Federation {
    pub tmp: tempfile::TempDir,
    pub server: TestServer,
    pub recorder: RecordingTransport,
    pub bundle: BundlePaths,
    pub benchmark: BenchmarkId,
    pub reference_model: CubeId,
    pub backend: CountingBackend,
}

impl Federation {
    /// Accounts `committee`, `modeler` and `owner0..owners`, the refbench
    /// benchmark registered, activated and with its reference model admitted.
    pub fn new(owners: usize) -> Self {
        Self::with_backend(owners, Arc::new(InProcessBackend))
    }

    pub fn with_backend(owners: usize, backend: Arc<dyn Backend>) -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let server = start_server();
        let recorder = RecordingTransport::new(Arc::new(HttpTransport::new(&server.url)));
        let op = ApiClient::new(Arc::new(recorder.clone()), Some(OPERATOR_TOKEN.into()));
        let mut accounts = vec![
            ("committee".to_string(), Role::Committee),
            ("modeler".to_string(), Role::ModelOwner),
        ];
        accounts.extend((0..owners).map(|i| (format!("owner{i}"), Role::DataOwner)));
        for (name, role) in &accounts {
            op.create_account(&CreateAccount {
                display_name: name.clone(),
                roles: [*role].into(),
                token: Some(token(name)),
            })
            .unwrap();
        }
        let bundle = write_bundle(&tmp.path().join("bundle")).unwrap();
        let mut fed = Federation {
            tmp,
            server,
            recorder,
            bundle,
            benchmark: BenchmarkId::new(""),
            reference_model: CubeId::new(""),
            backend: CountingBackend::new(backend),
        };
        let committee = fed.agent("committee");
        fed.benchmark = committee
            .create_benchmark(&fed.bundle.benchmark, None)
            .unwrap();
        op.activate_benchmark(&fed.benchmark).unwrap();
        fed.reference_model = committee
            .client()
            .benchmark(&fed.benchmark)
            .unwrap()
            .reference_model_cube;
        committee
            .client()
            .request_association(&RequestAssociation {
                benchmark_id: fed.benchmark.clone(),
                subject_kind: SubjectKind::Model,
                subject: fed.reference_model.to_string(),
            })
            .unwrap();
        fed.approve_requested();
        fed
    }

    pub fn client(&self, who: &str) -> ApiClient {
        let t = if who == "operator" {
            OPERATOR_TOKEN.to_string()
        } else {
            token(who)
        };
        ApiClient::new(Arc::new(self.recorder.clone()), Some(t))
    }

    pub fn home(&self, who: &str) -> PathBuf {
        self.tmp.path().join("homes").join(who)
    }

    pub fn agent(&self, who: &str) -> Agent {
        self.agent_at(who, who)
    }

    pub fn agent_at(&self, who: &str, home: &str) -> Agent {
        Agent::new(
            AgentHome::open(self.home(home)).unwrap(),
            self.client(who),
            Arc::new(self.backend.clone()),
            SandboxPolicy::default().insecure_allow_network(),
        )
    }

    /// The committee approves everything in its queue.
    pub fn approve_requested(&self) -> usize {
        let c = self.client("committee");
        let queue = c.association_queue().unwrap();
        for a in &queue {
            c.decide(&a.id, AssociationAction::Approve).unwrap();
        }
        queue.len()
    }

    pub fn site(&self, name: &str, cfg: SiteConfig, sentinel: Option<&str>) -> PathBuf {
        let dir = self.tmp.path().join("raw").join(name);
        write_site(&cfg, &dir, sentinel).unwrap();
        dir
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.tmp.path().join("prepared").join(name)
    }

    /// Prepares and registers a site for `owner` and admits it.
    pub fn onboard(&self, owner: &str, cfg: SiteConfig, sentinel: Option<&str>) -> ContentUid {
        let agent = self.agent(owner);
        let raw = self.site(owner, cfg, sentinel);
        let d = agent
            .prepare_dataset(&raw, &self.benchmark, &self.out(owner), None)
            .unwrap();
        agent
            .register_dataset(&d.generated_uid, &mut approve_all())
            .unwrap();
        self.approve_requested();
        d.generated_uid
    }

    pub fn submit_linear(&self) -> CubeId {
        let agent = self.agent("modeler");
        let (id, _) = agent
            .submit_model(&self.bundle.linear, &self.benchmark, None)
            .unwrap();
        self.approve_requested();
        id
    }
}

pub fn approve_all() -> ScriptedApprover {
    ScriptedApprover::new(std::iter::repeat_n(ApprovalDecision::Approve, 64))
}

pub fn reject_all() -> ScriptedApprover {
    ScriptedApprover::new([])
}

pub fn oracle(sites: &[&str]) -> serde_json::Value {
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../python/refbench_oracle.py");
    let out = std::process::Command::new("python3")
        .arg(script)
        .args(sites)
        .output()
        .expect("python3 is required for oracle tests");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}
