#![allow(dead_code)]

use std::path::Path;
use std::time::{Duration, Instant};

use nstore::config::{Config, Role};
use nstore::node::Node;
use serde_json::Value;

/// Ephemeral ports, quick fsync, small partition count.
pub fn config(dir: &Path, role: Role) -> Config {
    let mut c = Config::default();
    c.node.role = role;
    c.node.data_dir = dir.to_path_buf();
    c.node.log = "warn".into();
    c.broker.partitions = 4;
    c.broker.fsync_interval_ms = 5;
    c.broker.listen = "127.0.0.1:0".into();
    c.broker.admin_listen = "127.0.0.1:0".into();
    c.persist.workers = 2;
    c.store.write_listen = "127.0.0.1:0".into();
    c.store.replica_listen = "127.0.0.1:0".into();
    c.query.listen = "127.0.0.1:0".into();
    c
}

pub fn start_all(dir: &Path) -> Node {
    Node::start(&config(dir, Role::All)).expect("node starts")
}

pub fn ingest_addr(n: &Node) -> String {
    n.addrs.ingest.expect("ingest address").to_string()
}

pub fn wait_until(timeout: Duration, mut f: impl FnMut() -> bool) -> bool {
    let end = Instant::now() + timeout;
    while Instant::now() < end {
        if f() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    f()
}

/// Minimal blocking HTTP client over reqwest.
pub struct Http {
    rt: tokio::runtime::Runtime,
    client: reqwest::Client,
    pub base: String,
}

impl Http {
    pub fn new(node: &Node) -> Http {
        Http::at(&format!("http://{}", node.addrs.http.expect("http address")))
    }

    pub fn at(base: &str) -> Http {
        Http {
            rt: tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .unwrap(),
            client: reqwest::Client::new(),
            base: base.to_string(),
        }
    }

    pub fn get(&self, path: &str) -> (u16, Vec<u8>) {
        self.rt.block_on(async {
            let r = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
            (r.status().as_u16(), r.bytes().await.unwrap().to_vec())
        })
    }

    pub fn post(&self, path: &str, body: &Value) -> (u16, Vec<u8>) {
        self.rt.block_on(async {
            let r = self
                .client
                .post(format!("{}{path}", self.base))
                .header("content-type", "application/json")
                .body(body.to_string())
                .send()
                .await
                .unwrap();
            (r.status().as_u16(), r.bytes().await.unwrap().to_vec())
        })
    }

    /// Like [`Http::get`], but a transport failure is `None`.
    pub fn try_get(&self, path: &str) -> Option<(u16, Vec<u8>)> {
        self.rt.block_on(async {
            let r = self.client.get(format!("{}{path}", self.base)).send().await.ok()?;
            let status = r.status().as_u16();
            Some((status, r.bytes().await.ok()?.to_vec()))
        })
    }

    pub fn get_json(&self, path: &str) -> (u16, Value) {
        let (s, b) = self.get(path);
        (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
    }

    pub fn post_json(&self, path: &str, body: &Value) -> (u16, Value) {
        let (s, b) = self.post(path, body);
        (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
    }
}

/// A response with the timing field removed.
pub fn content(v: &Value) -> Value {
    let mut v = v.clone();
    if let Some(o) = v.as_object_mut() {
        o.remove("elapsed_us");
    }
    v
}

/// Publishes a fixture through ingest and waits until `store` holds all of it.
pub fn load_fixture(
    node: &Node,
    store: &nstore_core::store::Store,
    n: usize,
    seed: u64,
) -> Vec<nstore_core::domain::EntityDocument> {
    let docs = nstore::bench::fixture::generate(n, seed);
    nstore::bench::fixture::load(&ingest_addr(node), &docs).expect("fixture loads");
    assert!(
        wait_until(Duration::from_secs(60), || store.snapshot().entity_count() == n),
        "fixture not persisted: {} of {n}",
        store.snapshot().entity_count()
    );
    docs
}

/// An address nothing listens on right now.
pub fn free_addr() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

/// A role=all config on fixed free ports, for running the binary.
pub fn process_config(dir: &Path) -> Config {
    let mut c = config(dir, Role::All);
    c.broker.listen = free_addr();
    c.broker.admin_listen = free_addr();
    c.store.write_listen = free_addr();
    c.store.replica_listen = free_addr();
    c.query.listen = free_addr();
    c
}

pub fn spawn_serve(cfg: &Config, config_path: &Path) -> std::process::Child {
    std::fs::write(config_path, toml::to_string(cfg).unwrap()).unwrap();
    std::process::Command::new(env!("CARGO_BIN_EXE_nstore"))
        .args(["serve", "--config"])
        .arg(config_path)
        .env_remove("RUST_LOG")
        .stdout(std::process::Stdio::null())
        .stderr(
            std::fs::File::create(config_path.with_extension("log"))
                .map(std::process::Stdio::from)
                .unwrap_or_else(|_| std::process::Stdio::null()),
        )
        .spawn()
        .expect("spawn nstore")
}

pub fn wait_healthy(http: &Http) -> bool {
    let url = format!("{}/v1/health", http.base);
    wait_until(Duration::from_secs(30), || {
        http.rt.block_on(async {
            match http.client.get(&url).send().await {
                Ok(r) => r.status().is_success(),
                Err(_) => false,
            }
        })
    })
}

pub fn run_check(dir: &Path) -> (bool, Value) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_nstore"))
        .args(["check", "--data-dir"])
        .arg(dir)
        .output()
        .expect("run nstore check");
    (
        out.status.success(),
        serde_json::from_slice(&out.stdout).unwrap_or(Value::Null),
    )
}
