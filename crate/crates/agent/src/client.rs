//! Typed calls against the server API.

use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use fedeval_core::api::{
    AuditPage, CreateAccount, Created, CreatedAccount, Decision, ErrorBody, ErrorDetail,
    PendingList, RegisterBenchmark, RegisterCube, RegisterDataset, RequestAssociation,
    SetReleasePolicy, SubmitResult, API_PREFIX,
};
use fedeval_core::{
    Association, AssociationAction, AssociationId, Benchmark, BenchmarkId, ContentUid, CubeId,
    CubeRecord, ReleasePolicy, ResultsReport,
};

use crate::error::{AgentError, Result};
use crate::transport::{Method, Request, Transport};

#[derive(Clone)]
pub struct ApiClient {
    transport: Arc<dyn Transport>,
    token: Option<String>,
}

#[derive(Deserialize)]
struct AssociationList {
    associations: Vec<Association>,
}

impl ApiClient {
    pub fn new(transport: Arc<dyn Transport>, token: Option<String>) -> Self {
        ApiClient { transport, token }
    }

    pub fn with_token(&self, token: &str) -> Self {
        ApiClient {
            transport: self.transport.clone(),
            token: Some(token.to_owned()),
        }
    }

    fn exchange<T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        body: Option<Vec<u8>>,
    ) -> Result<T> {
        let req = Request {
            method,
            path: format!("{API_PREFIX}{path}"),
            bearer: self.token.clone(),
            body,
        };
        let resp = self.transport.send(&req).map_err(AgentError::Network)?;
        if (200..300).contains(&resp.status) {
            return serde_json::from_slice(&resp.body)
                .map_err(|e| AgentError::Network(format!("bad response body: {e}")));
        }
        if resp.status == 401 {
            return Err(AgentError::AuthFailed);
        }
        let detail = serde_json::from_slice::<ErrorBody>(&resp.body)
            .map(|b| b.error)
            .unwrap_or_else(|_| ErrorDetail {
                code: format!("HTTP_{}", resp.status),
                message: String::from_utf8_lossy(&resp.body).into_owned(),
                details: Vec::new(),
            });
        Err(AgentError::ServerRejected(detail))
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        self.exchange(Method::Get, path, None)
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let bytes = serde_json::to_vec(body).expect("request bodies serialize");
        self.exchange(Method::Post, path, Some(bytes))
    }

    fn post_empty<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        self.exchange(Method::Post, path, Some(Vec::new()))
    }

    pub fn create_account(&self, req: &CreateAccount) -> Result<CreatedAccount> {
        self.post("/accounts", req)
    }

    pub fn register_benchmark(&self, req: &RegisterBenchmark) -> Result<BenchmarkId> {
        self.post::<_, Created>("/benchmarks", req)
            .map(|c| BenchmarkId::new(c.id))
    }

    pub fn benchmark(&self, id: &BenchmarkId) -> Result<Benchmark> {
        self.get(&format!("/benchmarks/{id}"))
    }

    pub fn activate_benchmark(&self, id: &BenchmarkId) -> Result<()> {
        self.post_empty::<serde_json::Value>(&format!("/benchmarks/{id}/activate"))
            .map(drop)
    }

    pub fn retire_benchmark(&self, id: &BenchmarkId) -> Result<()> {
        self.post_empty::<serde_json::Value>(&format!("/benchmarks/{id}/retire"))
            .map(drop)
    }

    pub fn set_release_policy(&self, id: &BenchmarkId, policy: ReleasePolicy) -> Result<()> {
        let body = SetReleasePolicy {
            release_policy: policy,
        };
        self.post::<_, serde_json::Value>(&format!("/benchmarks/{id}/release"), &body)
            .map(drop)
    }

    pub fn results(&self, id: &BenchmarkId) -> Result<ResultsReport> {
        self.get(&format!("/benchmarks/{id}/results"))
    }

    pub fn register_cube(&self, req: &RegisterCube) -> Result<CubeId> {
        self.post::<_, Created>("/cubes", req)
            .map(|c| CubeId::new(c.id))
    }

    pub fn cube(&self, id: &CubeId) -> Result<CubeRecord> {
        self.get(&format!("/cubes/{id}"))
    }

    pub fn register_dataset(&self, req: &RegisterDataset) -> Result<ContentUid> {
        self.post::<_, Created>("/datasets", req).and_then(|c| {
            c.id.parse()
                .map_err(|_| AgentError::Network(format!("bad dataset id {}", c.id)))
        })
    }

    pub fn pending(&self, dataset: &ContentUid) -> Result<PendingList> {
        self.get(&format!("/datasets/{dataset}/pending"))
    }

    pub fn request_association(&self, req: &RequestAssociation) -> Result<AssociationId> {
        self.post::<_, Created>("/associations", req)
            .map(|c| AssociationId::new(c.id))
    }

    pub fn association_queue(&self) -> Result<Vec<Association>> {
        self.get::<AssociationList>("/associations")
            .map(|l| l.associations)
    }

    pub fn decide(&self, id: &AssociationId, decision: AssociationAction) -> Result<Association> {
        self.post(
            &format!("/associations/{id}/decision"),
            &Decision { decision },
        )
    }

    pub fn submit_result(&self, req: &SubmitResult) -> Result<String> {
        self.post::<_, Created>("/results", req).map(|c| c.id)
    }

    pub fn audit(&self, from_seq: u64) -> Result<AuditPage> {
        self.get(&format!("/audit?from_seq={from_seq}"))
    }
}
