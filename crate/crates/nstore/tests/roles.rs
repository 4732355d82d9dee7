mod common;

use std::path::Path;
use std::time::Duration;

use common::*;
use nstore::bench::storage_load::{self, StorageLoad};
use nstore::config::Role;
use nstore::node::Node;
use nstore_core::persist::signal_log;
use serde_json::{json, Value};

struct Split {
    broker: Node,
    primary: Node,
    persist: Node,
    query: Node,
}

fn start_split(root: &Path) -> Split {
    let broker = Node::start(&config(&root.join("broker"), Role::Broker)).unwrap();
    let primary = Node::start(&config(&root.join("primary"), Role::StorePrimary)).unwrap();
    let mut c = config(&root.join("persist"), Role::Persist);
    c.persist.broker_admin = broker.addrs.admin.unwrap().to_string();
    c.persist.store_write = primary.addrs.store_write.unwrap().to_string();
    let persist = Node::start(&c).unwrap();
    let mut c = config(&root.join("query"), Role::Query);
    c.store.primary = primary.addrs.replication.unwrap().to_string();
    let query = Node::start(&c).unwrap();
    Split {
        broker,
        primary,
        persist,
        query,
    }
}

fn requests() -> Vec<(&'static str, Option<Value>)> {
    vec![
        ("/v1/Process/browse?page_size=30", None),
        ("/v1/Data/browse?page=3&page_size=17", None),
        ("/v1/Person/browse", None),
        ("/v1/Data/joint", Some(nstore::bench::query_load::joint_body())),
        (
            "/v1/Data/query",
            Some(json!({"predicate": {"field": "EEG.channels", "op": "gt", "value": 32}, "page_size": 100})),
        ),
        (
            "/v1/Process/composed",
            Some(json!({"seed": {"topic": "Device"}, "steps": [{"relation": "ProcessDevice", "direction": "to"}]})),
        ),
    ]
}

/// total_count and items; the LSN depends on how writes interleaved.
fn answer(http: &Http, path: &str, body: &Option<Value>) -> Value {
    let (s, v) = match body {
        Some(b) => http.post_json(path, b),
        None => http.get_json(path),
    };
    assert_eq!(s, 200, "{path}: {v}");
    json!([v["total_count"], v["items"]])
}

fn streams(ingest: String, data_dir: &Path) -> Vec<Vec<u8>> {
    let load = StorageLoad {
        ingest,
        data_dir: data_dir.to_path_buf(),
        devices: 2,
        duration: Duration::from_millis(800),
        channels: 4,
        rate_hz: 200,
        seed: 77,
    };
    let report = storage_load::run(&load).unwrap();
    assert!(report.lossless);
    let mut ids = signal_log::list_streams(data_dir).unwrap();
    ids.sort();
    ids.iter()
        .map(|id| signal_log::sample_bytes(&signal_log::log_path(data_dir, id)).unwrap())
        .collect()
}

#[test]
fn split_roles_serve_the_same_answers_as_one_process() {
    let root = tempfile::tempdir().unwrap();

    let all = start_all(&root.path().join("all"));
    let store = all.primary().unwrap().clone();
    load_fixture(&all, &store, 800, 21);
    let http = Http::new(&all);
    let reference: Vec<Value> = requests().iter().map(|(p, b)| answer(&http, p, b)).collect();
    let ref_streams = streams(ingest_addr(&all), &root.path().join("all"));
    all.shutdown();

    let split = start_split(root.path());
    assert!(split.broker.primary().is_none() && split.broker.addrs.http.is_none());
    assert!(split.persist.addrs.ingest.is_none() && split.persist.addrs.http.is_none());
    let replica = split.query.replica().unwrap().clone();
    load_fixture(&split.broker, &replica, 800, 21);
    assert_eq!(split.primary.primary().unwrap().snapshot().entity_count(), 800);

    for http in [Http::new(&split.query), Http::new(&split.primary)] {
        let got: Vec<Value> = requests().iter().map(|(p, b)| answer(&http, p, b)).collect();
        assert_eq!(got, reference);
    }
    let (_, health) = Http::new(&split.query).get_json("/v1/health");
    assert_eq!(health["role"], "query");
    assert_eq!(health["replica_connected"], true);

    let split_streams = streams(ingest_addr(&split.broker), &root.path().join("persist"));
    assert_eq!(split_streams.len(), 2);
    assert_eq!(split_streams, ref_streams);

    let Split {
        broker,
        primary,
        persist,
        query,
    } = split;
    query.shutdown();
    persist.shutdown();
    broker.shutdown();
    primary.shutdown();
    for d in ["broker", "primary", "persist"] {
        let r = nstore::check::check(&root.path().join(d));
        assert!(r.ok, "{d}: {:?}", r.problems);
    }
}

#[test]
fn persist_node_waits_for_a_late_broker() {
    let root = tempfile::tempdir().unwrap();
    let primary = Node::start(&config(&root.path().join("primary"), Role::StorePrimary)).unwrap();
    let admin = nstore::net::bind("127.0.0.1:0").unwrap();
    let admin_addr = admin.local_addr().unwrap();
    drop(admin);
    let mut c = config(&root.path().join("persist"), Role::Persist);
    c.persist.broker_admin = admin_addr.to_string();
    c.persist.store_write = primary.addrs.store_write.unwrap().to_string();
    let starting = std::thread::spawn(move || Node::start(&c));
    std::thread::sleep(Duration::from_millis(600));
    let mut bc = config(&root.path().join("broker"), Role::Broker);
    bc.broker.admin_listen = admin_addr.to_string();
    let broker = Node::start(&bc).unwrap();
    let persist = starting.join().unwrap().expect("persist starts once the broker is up");
    let store = primary.primary().unwrap().clone();
    load_fixture(&broker, &store, 50, 3);
    persist.shutdown();
    broker.shutdown();
    primary.shutdown();
}
