//! Process-wide driver registry and the two fan-out primitives.
//!
//! Every assistant request goes through a [`DriverManager`]. It resolves a
//! [`TargetSelector`] against the registry, invokes the targeted drivers
//! concurrently and folds their results into a [`FanoutOutcome`]:
//!
//! * [`DriverManager::call_back`] returns as soon as one driver answers
//!   successfully. Errors never win; drivers still running at that point are
//!   dropped and reported as `cancelled`.
//! * [`DriverManager::fetch_all`] waits for every targeted driver.
//!
//! Per-driver results are always listed in registration order.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock, RwLock};
use std::time::Instant;

use futures::stream::{FuturesUnordered, StreamExt};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::driver::{
    build_driver, AssistantRequest, AssistantResponse, ConfigViolation, Driver, DriverConfig,
    DriverError, DriverId,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManagerError {
    #[error("driver id {0} is already registered")]
    DuplicateId(DriverId),
    #[error("unknown driver {0}")]
    UnknownDriver(DriverId),
    #[error("target selection resolves to no drivers")]
    EmptyTargets,
    #[error(transparent)]
    InvalidConfig(#[from] ConfigViolation),
}

/// Which drivers a request goes to.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TargetSelector {
    /// Every registered driver.
    #[default]
    Any,
    Explicit(Vec<DriverId>),
}

impl TargetSelector {
    pub fn one(id: DriverId) -> Self {
        TargetSelector::Explicit(vec![id])
    }
}

impl Serialize for TargetSelector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            TargetSelector::Any => serializer.serialize_str("any"),
            TargetSelector::Explicit(ids) => ids.serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for TargetSelector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Keyword(String),
            Ids(Vec<DriverId>),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Keyword(k) if k == "any" => Ok(TargetSelector::Any),
            Repr::Keyword(k) => Err(serde::de::Error::custom(format!(
                "expected \"any\" or a list of driver ids, got {k:?}"
            ))),
            Repr::Ids(ids) if ids.is_empty() => {
                Err(serde::de::Error::custom("explicit target list must not be empty"))
            }
            Repr::Ids(ids) => Ok(TargetSelector::Explicit(ids)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FanoutMode {
    First,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum DriverResult {
    Ok { response: AssistantResponse },
    Error { error: DriverError },
}

impl DriverResult {
    pub fn response(&self) -> Option<&AssistantResponse> {
        match self {
            DriverResult::Ok { response } => Some(response),
            DriverResult::Error { .. } => None,
        }
    }

    pub fn error(&self) -> Option<&DriverError> {
        match self {
            DriverResult::Ok { .. } => None,
            DriverResult::Error { error } => Some(error),
        }
    }
}

impl From<Result<AssistantResponse, DriverError>> for DriverResult {
    fn from(result: Result<AssistantResponse, DriverError>) -> Self {
        match result {
            Ok(response) => DriverResult::Ok { response },
            Err(error) => DriverResult::Error { error },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoutOutcome {
    pub mode: FanoutMode,
    pub results: IndexMap<DriverId, DriverResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winner: Option<DriverId>,
}

impl FanoutOutcome {
    pub fn winning_response(&self) -> Option<&AssistantResponse> {
        self.winner
            .as_ref()
            .and_then(|id| self.results.get(id))
            .and_then(DriverResult::response)
    }

    pub fn responses(&self) -> impl Iterator<Item = &AssistantResponse> {
        self.results.values().filter_map(DriverResult::response)
    }

    pub fn errors(&self) -> impl Iterator<Item = &DriverError> {
        self.results.values().filter_map(DriverResult::error)
    }

    /// First successful response in registration order.
    pub fn first_response(&self) -> Option<&AssistantResponse> {
        self.responses().next()
    }
}

#[derive(Default)]
struct ActivityCounters {
    requests: AtomicU64,
    successes: AtomicU64,
    errors: AtomicU64,
    latency_ms: AtomicU64,
}

impl ActivityCounters {
    fn record(&self, result: &Result<AssistantResponse, DriverError>, elapsed_ms: u64) {
        match result {
            Ok(_) => self.successes.fetch_add(1, Ordering::Relaxed),
            Err(_) => self.errors.fetch_add(1, Ordering::Relaxed),
        };
        self.latency_ms.fetch_add(elapsed_ms, Ordering::Relaxed);
    }

    fn snapshot(&self) -> Activity {
        Activity {
            requests: self.requests.load(Ordering::Relaxed),
            successes: self.successes.load(Ordering::Relaxed),
            errors: self.errors.load(Ordering::Relaxed),
            cumulative_latency_ms: self.latency_ms.load(Ordering::Relaxed),
        }
    }
}

/// Point-in-time copy of one driver's counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    pub requests: u64,
    pub successes: u64,
    pub errors: u64,
    pub cumulative_latency_ms: u64,
}

#[derive(Clone)]
struct Entry {
    driver: Arc<dyn Driver>,
    counters: Arc<ActivityCounters>,
}

/// Registry of drivers keyed by id, in registration order.
#[derive(Default)]
pub struct DriverManager {
    entries: RwLock<IndexMap<DriverId, Entry>>,
}

static GLOBAL: OnceLock<Arc<DriverManager>> = OnceLock::new();

impl DriverManager {
    /// A standalone registry. Engines embedded in tests use one each; a
    /// running process uses [`DriverManager::global`].
    pub fn new() -> Self {
        Self::default()
    }

    /// The process-wide registry. Every call returns the same instance.
    pub fn global() -> Arc<DriverManager> {
        GLOBAL.get_or_init(|| Arc::new(DriverManager::new())).clone()
    }

    pub fn register(&self, config: DriverConfig) -> Result<DriverId, ManagerError> {
        let driver = build_driver(config)?;
        self.register_driver(driver)
    }

    /// Registers an already-built driver.
    pub fn register_driver(&self, driver: Arc<dyn Driver>) -> Result<DriverId, ManagerError> {
        let id = driver.id().clone();
        let mut entries = self.entries.write().expect("registry lock poisoned");
        if entries.contains_key(&id) {
            return Err(ManagerError::DuplicateId(id));
        }
        entries.insert(
            id.clone(),
            Entry {
                driver,
                counters: Arc::default(),
            },
        );
        Ok(id)
    }

    /// Drops every registration. Used on config reload.
    pub fn clear(&self) {
        self.entries.write().expect("registry lock poisoned").clear();
    }

    pub fn lookup(&self, id: &DriverId) -> Option<DriverConfig> {
        self.entries
            .read()
            .expect("registry lock poisoned")
            .get(id)
            .map(|e| e.driver.config().clone())
    }

    pub fn driver(&self, id: &DriverId) -> Option<Arc<dyn Driver>> {
        self.entries
            .read()
            .expect("registry lock poisoned")
            .get(id)
            .map(|e| e.driver.clone())
    }

    /// Registered configs in registration order.
    pub fn list(&self) -> Vec<DriverConfig> {
        self.entries
            .read()
            .expect("registry lock poisoned")
            .values()
            .map(|e| e.driver.config().clone())
            .collect()
    }

    pub fn ids(&self) -> Vec<DriverId> {
        self.entries
            .read()
            .expect("registry lock poisoned")
            .keys()
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("registry lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn activity(&self, id: &DriverId) -> Result<Activity, ManagerError> {
        self.entries
            .read()
            .expect("registry lock poisoned")
            .get(id)
            .map(|e| e.counters.snapshot())
            .ok_or_else(|| ManagerError::UnknownDriver(id.clone()))
    }

    /// Checks that `targets` names at least one registered driver.
    pub fn check_targets(&self, targets: &TargetSelector) -> Result<(), ManagerError> {
        self.resolve(targets).map(|_| ())
    }

    /// Resolves targets to entries in registration order.
    fn resolve(&self, targets: &TargetSelector) -> Result<Vec<(DriverId, Entry)>, ManagerError> {
        let entries = self.entries.read().expect("registry lock poisoned");
        let resolved: Vec<(DriverId, Entry)> = match targets {
            TargetSelector::Any => entries.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            TargetSelector::Explicit(ids) => {
                if let Some(missing) = ids.iter().find(|id| !entries.contains_key(*id)) {
                    return Err(ManagerError::UnknownDriver(missing.clone()));
                }
                entries
                    .iter()
                    .filter(|(k, _)| ids.contains(k))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect()
            }
        };
        if resolved.is_empty() {
            return Err(ManagerError::EmptyTargets);
        }
        Ok(resolved)
    }

    /// First successful response wins; see the module docs.
    pub async fn call_back(
        &self,
        request: &AssistantRequest,
        targets: &TargetSelector,
    ) -> Result<FanoutOutcome, ManagerError> {
        let targets = self.resolve(targets)?;
        let mut pending: FuturesUnordered<_> = targets
            .iter()
            .map(|(id, entry)| invoke(id.clone(), entry, request))
            .collect();

        let mut finished: IndexMap<DriverId, DriverResult> = IndexMap::new();
        let mut winner = None;
        while let Some((id, result)) = pending.next().await {
            let won = result.is_ok();
            finished.insert(id.clone(), result.into());
            if won {
                winner = Some(id);
                break;
            }
        }
        // dropping the stream abandons every exchange still in flight
        drop(pending);

        let results = targets
            .iter()
            .map(|(id, entry)| {
                let result = finished.shift_remove(id).unwrap_or_else(|| {
                    let error = DriverError::cancelled(id.clone());
                    entry.counters.errors.fetch_add(1, Ordering::Relaxed);
                    DriverResult::Error { error }
                });
                (id.clone(), result)
            })
            .collect();

        Ok(FanoutOutcome {
            mode: FanoutMode::First,
            results,
            winner,
        })
    }

    /// Waits for every targeted driver.
    pub async fn fetch_all(
        &self,
        request: &AssistantRequest,
        targets: &TargetSelector,
    ) -> Result<FanoutOutcome, ManagerError> {
        let targets = self.resolve(targets)?;
        let outcomes =
            futures::future::join_all(targets.iter().map(|(id, entry)| invoke(id.clone(), entry, request)))
                .await;
        Ok(FanoutOutcome {
            mode: FanoutMode::All,
            results: outcomes
                .into_iter()
                .map(|(id, result)| (id, result.into()))
                .collect(),
            winner: None,
        })
    }
}

async fn invoke(
    id: DriverId,
    entry: &Entry,
    request: &AssistantRequest,
) -> (DriverId, Result<AssistantResponse, DriverError>) {
    entry.counters.requests.fetch_add(1, Ordering::Relaxed);
    let started = Instant::now();
    let result = entry.driver.send(request).await;
    entry
        .counters
        .record(&result, started.elapsed().as_millis() as u64);
    (id, result)
}
