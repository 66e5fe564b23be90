use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use exroute_core::index::{load_registry, save_registry, ExpertEntry, Registry};

use crate::error::ApiError;

pub const DEFAULT_MAX_BODY_BYTES: usize = 16 * 1024 * 1024;
pub const DEFAULT_MAX_EXPERTS: usize = 64;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    /// Registry file loaded at startup (if it exists) and rewritten after
    /// every registration.
    pub registry_path: Option<PathBuf>,
    pub max_body_bytes: usize,
    pub max_experts: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            registry_path: None,
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            max_experts: DEFAULT_MAX_EXPERTS,
        }
    }
}

/// Shared server state. Readers clone the current `Arc<Registry>`; writers
/// are serialized and publish a new registry with a single swap, so a match
/// sees either the old or the new registry in full.
#[derive(Debug)]
pub struct AppState {
    registry: RwLock<Arc<Registry>>,
    writer: tokio::sync::Mutex<()>,
    config: ServerConfig,
}

impl AppState {
    pub fn new(registry: Registry, config: ServerConfig) -> Self {
        Self {
            registry: RwLock::new(Arc::new(registry)),
            writer: tokio::sync::Mutex::new(()),
            config,
        }
    }

    /// Starts from the persisted registry when the configured file exists,
    /// otherwise empty.
    pub fn open(config: ServerConfig) -> exroute_core::Result<Self> {
        let registry = match &config.registry_path {
            Some(path) if path.exists() => load_registry(path)?,
            _ => Registry::new(),
        };
        if registry.len() > config.max_experts {
            return Err(exroute_core::Error::InvalidInput(format!(
                "persisted registry has {} experts, limit is {}",
                registry.len(),
                config.max_experts
            )));
        }
        Ok(Self::new(registry, config))
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn snapshot(&self) -> Arc<Registry> {
        self.registry.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Appends `entry`, persists the new registry if configured, then
    /// publishes it. On any error the visible registry is unchanged.
    /// Returns the new entry's index.
    pub async fn register(&self, entry: ExpertEntry) -> Result<usize, ApiError> {
        let _guard = self.writer.lock().await;
        let current = self.snapshot();
        if current.position(&entry.expert_id).is_some() {
            return Err(ApiError::conflict(format!(
                "expert `{}` is already registered",
                entry.expert_id
            )));
        }
        if current.len() >= self.config.max_experts {
            return Err(ApiError::limit(format!(
                "registry already holds the maximum of {} experts",
                self.config.max_experts
            )));
        }
        let mut next = Registry::clone(&current);
        let index = next.push(entry).map_err(|e| ApiError::from_core("expert", e))?;
        let next = Arc::new(next);
        if let Some(path) = self.config.registry_path.clone() {
            let to_save = next.clone();
            tokio::task::spawn_blocking(move || save_registry(&to_save, path))
                .await
                .map_err(ApiError::internal)?
                .map_err(|e| ApiError::internal(format!("persisting registry failed: {e}")))?;
        }
        *self.registry.write().unwrap_or_else(|e| e.into_inner()) = next;
        Ok(index)
    }
}
