//! Wiring of components per role, and their lifecycle.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nstore_core::broker::Broker;
use nstore_core::persist::{self, MetadataSink, PersistStats, RecordSource, Workers};
use nstore_core::store::Store;
use thiserror::Error;

use crate::admin::{self, RemoteSource};
use crate::config::{Config, Role};
use crate::http::{self, HttpServer, ReadPath};
use crate::ingest;
use crate::net::Server;
use crate::store_net::{self, Follower, RemoteSink};

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("BindFailure: {0}")]
    Bind(std::io::Error),
    #[error(transparent)]
    Broker(#[from] nstore_core::broker::BrokerError),
    #[error(transparent)]
    Store(#[from] nstore_core::store::StoreError),
    #[error(transparent)]
    Persist(#[from] nstore_core::persist::PersistError),
    #[error("creating {path}: {source}")]
    DataDir { path: String, source: std::io::Error },
}

impl NodeError {
    pub fn code(&self) -> &'static str {
        match self {
            NodeError::Bind(_) => "BindFailure",
            NodeError::Broker(e) => e.code(),
            NodeError::Store(e) => e.code(),
            NodeError::Persist(e) => e.code(),
            NodeError::DataDir { .. } => "IoFailure",
        }
    }
}

/// Bound addresses of the servers a node runs.
#[derive(Debug, Default, Clone)]
pub struct Addrs {
    pub ingest: Option<SocketAddr>,
    pub admin: Option<SocketAddr>,
    pub store_write: Option<SocketAddr>,
    pub replication: Option<SocketAddr>,
    pub http: Option<SocketAddr>,
}

pub struct Node {
    pub role: Role,
    pub addrs: Addrs,
    broker: Option<Arc<Broker>>,
    primary: Option<Store>,
    replica: Option<Store>,
    ingest: Option<Server>,
    admin: Option<Server>,
    store_write: Option<Server>,
    replication: Option<Server>,
    follower: Option<Follower>,
    workers: Option<Workers>,
    http: Option<HttpServer>,
    stopped: bool,
}

fn bind_err(e: std::io::Error) -> NodeError {
    NodeError::Bind(e)
}

impl Node {
    pub fn start(cfg: &Config) -> Result<Node, NodeError> {
        let role = cfg.node.role;
        let dir = &cfg.node.data_dir;
        std::fs::create_dir_all(dir).map_err(|source| NodeError::DataDir {
            path: dir.display().to_string(),
            source,
        })?;
        let mut node = Node {
            role,
            addrs: Addrs::default(),
            broker: None,
            primary: None,
            replica: None,
            ingest: None,
            admin: None,
            store_write: None,
            replication: None,
            follower: None,
            workers: None,
            http: None,
            stopped: false,
        };
        tracing::info!(role = %role, data_dir = %dir.display(), "starting node");

        if matches!(role, Role::All | Role::StorePrimary) {
            let store = Store::open(dir, cfg.store_options())?;
            let w = store_net::serve_writes(&cfg.store.write_listen, store.clone()).map_err(bind_err)?;
            let r = store_net::serve_replication(&cfg.store.replica_listen, store.clone()).map_err(bind_err)?;
            node.addrs.store_write = Some(w.local_addr());
            node.addrs.replication = Some(r.local_addr());
            node.store_write = Some(w);
            node.replication = Some(r);
            node.primary = Some(store);
        }
        match role {
            Role::All if cfg.store.read_from_replica => {
                let replica = Store::replica();
                let primary = node.primary.clone().expect("primary opened");
                node.follower = Some(Follower::local(primary, replica.clone()));
                node.replica = Some(replica);
            }
            Role::StoreReplica | Role::Query => {
                let replica = Store::replica();
                node.follower = Some(Follower::remote(cfg.store.primary.clone(), replica.clone()));
                if role == Role::StoreReplica {
                    let r =
                        store_net::serve_replication(&cfg.store.replica_listen, replica.clone()).map_err(bind_err)?;
                    node.addrs.replication = Some(r.local_addr());
                    node.replication = Some(r);
                }
                node.replica = Some(replica);
            }
            _ => {}
        }

        if matches!(role, Role::All | Role::Broker) {
            let broker = Arc::new(Broker::open(&cfg.broker_dir(), cfg.broker_options())?);
            let a = admin::serve(&cfg.broker.admin_listen, broker.clone()).map_err(bind_err)?;
            node.addrs.admin = Some(a.local_addr());
            node.admin = Some(a);
            node.broker = Some(broker);
        }

        if matches!(role, Role::All | Role::Persist) {
            let (source, sink): (Arc<dyn RecordSource>, Arc<dyn MetadataSink>) = match role {
                Role::All => (
                    node.broker.clone().expect("broker opened"),
                    Arc::new(node.primary.clone().expect("primary opened")),
                ),
                _ => (
                    Arc::new(RemoteSource::new(&cfg.persist.broker_admin)),
                    Arc::new(RemoteSink::new(&cfg.persist.store_write)),
                ),
            };
            node.workers = Some(start_workers(source, sink, cfg)?);
        }

        if matches!(role, Role::All | Role::StorePrimary | Role::StoreReplica | Role::Query) {
            let reads = ReadPath {
                primary: node.primary.clone(),
                replica: node
                    .replica
                    .clone()
                    .zip(node.follower.as_ref().map(|f| f.status.clone())),
                prefer_replica: cfg.store.read_from_replica,
            };
            let app = http::router(
                role,
                reads,
                cfg.query.max_inflight,
                Duration::from_millis(cfg.query.timeout_ms),
            );
            let h = HttpServer::start(&cfg.query.listen, app).map_err(bind_err)?;
            node.addrs.http = Some(h.local_addr());
            node.http = Some(h);
        }

        // Ingest opens last so nothing is accepted before the node can persist it.
        if let Some(broker) = &node.broker {
            let i = ingest::serve(&cfg.broker.listen, broker.clone()).map_err(bind_err)?;
            node.addrs.ingest = Some(i.local_addr());
            node.ingest = Some(i);
        }
        tracing::info!(role = %role, addrs = ?node.addrs, "node ready");
        Ok(node)
    }

    pub fn broker(&self) -> Option<&Arc<Broker>> {
        self.broker.as_ref()
    }

    pub fn primary(&self) -> Option<&Store> {
        self.primary.as_ref()
    }

    pub fn replica(&self) -> Option<&Store> {
        self.replica.as_ref()
    }

    pub fn persist_stats(&self) -> Option<&PersistStats> {
        self.workers.as_ref().map(|w| &*w.stats)
    }

    /// Stops ingest, drains workers, then closes broker, store and query in turn.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if std::mem::replace(&mut self.stopped, true) {
            return;
        }
        if let Some(mut s) = self.ingest.take() {
            s.stop();
        }
        if let Some(w) = self.workers.take() {
            if let Err(e) = w.shutdown() {
                tracing::warn!(error = %e, "persist workers stopped with an error");
            }
        }
        if let Some(mut s) = self.admin.take() {
            s.stop();
        }
        if let Some(b) = self.broker.take() {
            b.shutdown();
        }
        if let Some(mut f) = self.follower.take() {
            f.stop();
        }
        for s in [self.store_write.take(), self.replication.take()].into_iter().flatten() {
            let mut s = s;
            s.stop();
        }
        for s in [&self.primary, &self.replica].into_iter().flatten() {
            s.close();
        }
        if let Some(mut h) = self.http.take() {
            h.stop();
        }
        tracing::info!(role = %self.role, "node stopped");
    }
}

impl Drop for Node {
    fn drop(&mut self) {
        self.stop();
    }
}

/// A remote broker may still be starting, so partition discovery is retried.
fn start_workers(
    source: Arc<dyn RecordSource>,
    sink: Arc<dyn MetadataSink>,
    cfg: &Config,
) -> Result<Workers, NodeError> {
    let deadline = Instant::now() + Duration::from_secs(30);
    loop {
        match source.partitions() {
            Ok(_) => break,
            Err(e) if Instant::now() < deadline => {
                tracing::info!(error = %e, "waiting for broker");
                std::thread::sleep(Duration::from_millis(200));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(persist::run_workers(source, sink, cfg.persist_options())?)
}
