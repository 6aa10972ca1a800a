use std::fs;
use std::path::Path;

use leosim::config::EFFECTIVE_CONFIG_FILE;
use leosim::output::{self, read_latencies};
use leosim::scenario::write_topology;
use leosim::{load_config, run_baseline, run_offline, run_online, Alignment, Baseline, QNetwork, Scenario, ScenarioConfig};

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn small() -> ScenarioConfig {
    let mut c = ScenarioConfig::for_preset("kepler").unwrap();
    c.horizon_s = 0.2;
    c.gateways.count = 3;
    c.traffic.load_fraction = 0.2;
    c
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn shipped_configs_load() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(cfg.constellation_spec().num_satellites(), 140);
    }
}

#[test]
fn offline_outputs_have_fixed_schemas() {
    let scn = Scenario::new(small()).unwrap();
    let (out, _) = run_offline(&scn, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();
    let p = dir.path();
    assert_eq!(header(&p.join("latency.csv")), output::LATENCY_HEADER.join(","));
    assert_eq!(header(&p.join("heatmap.csv")), output::HEATMAP_HEADER.join(","));
    assert_eq!(header(&p.join("drops.csv")), output::DROPS_HEADER.join(","));
    assert_eq!(header(&p.join("rewards.csv")), output::REWARDS_HEADER.join(","));
    assert_eq!(header(&p.join("epsilon.csv")), output::EPSILON_HEADER.join(","));
    assert_eq!(header(&p.join("cdf.csv")), output::CDF_HEADER.join(","));
    assert_eq!(read_latencies(&p.join("latency.csv")).unwrap(), out.latencies());

    let model = scn.load_network(&fs::read_to_string(p.join("model.json")).unwrap()).unwrap();
    assert_eq!(model, out.nets[0]);
    assert!(QNetwork::from_json(&fs::read_to_string(p.join("target_model.json")).unwrap()).is_ok());
}

#[test]
fn epsilon_log_decays() {
    let scn = Scenario::new(small()).unwrap();
    let (out, _) = run_offline(&scn, None).unwrap();
    assert!(out.epsilon.len() >= 2);
    assert!(out.epsilon.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 > w[1].1));
}

#[test]
fn online_writes_agent_archive_and_rounds() {
    let mut c = small();
    c.schedule.anticipation_period_s = Some(0.05);
    c.schedule.cluster_period_s = Some(0.1);
    c.output.probe_count = 32;
    let scn = Scenario::new(c).unwrap();
    let net = scn.new_network().unwrap();
    let (out, _) = run_online(&scn, &[net], true, Alignment { anticipation: true, fl: true }).unwrap();
    assert_eq!(out.nets.len(), 140);
    let kinds: Vec<&str> = out.aggregation.iter().map(|r| r.kind.as_str()).collect();
    assert_eq!(kinds.iter().filter(|k| **k == "anticipation").count(), 3);
    assert_eq!(kinds.iter().filter(|k| **k == "cluster").count(), 1);
    assert!(out.aggregation.iter().all(|r| r.post_mean_cka.is_some()));

    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();
    assert_eq!(header(&dir.path().join("aggregation_log.csv")), output::AGGREGATION_HEADER.join(","));
    let archive = leosim::mlp::archive_from_json(&fs::read_to_string(dir.path().join("agents.json")).unwrap()).unwrap();
    assert_eq!(archive, out.nets);

    // the archive seeds a follow-up run agent by agent
    let (again, _) = run_online(&scn, &archive, false, Alignment::default()).unwrap();
    assert_eq!(again.nets, archive);
}

#[test]
fn fl_without_cluster_period_is_a_config_error() {
    let scn = Scenario::new(small()).unwrap();
    let net = scn.new_network().unwrap();
    let err = run_online(&scn, &[net], true, Alignment { anticipation: false, fl: true }).unwrap_err();
    assert!(err.is_config());
}

#[test]
fn wrong_agent_count_is_rejected() {
    let scn = Scenario::new(small()).unwrap();
    let net = scn.new_network().unwrap();
    assert!(run_online(&scn, &[net.clone(), net], false, Alignment::default()).is_err());
}

#[test]
fn mismatched_model_dims_rejected() {
    let scn = Scenario::new(small()).unwrap();
    let other = QNetwork::zeros(&[28, 16, 4]);
    assert!(scn.load_network(&other.to_json()).is_err());
}

#[test]
fn baselines_share_the_trace() {
    let scn = Scenario::new(small()).unwrap();
    let sp = run_baseline(&scn, Baseline::ShortestPath).unwrap();
    let qr = run_baseline(&scn, Baseline::QRouting).unwrap();
    assert_eq!(sp.metrics.generated, qr.metrics.generated);
    assert_eq!(sp.metrics.generated, scn.packets.len() as u64);
    assert_eq!(Baseline::parse("q-routing"), Some(Baseline::QRouting));
    assert_eq!(Baseline::parse("dijkstra"), None);
    // light load: shortest path loses nothing
    assert!(sp.metrics.drops.is_empty());
    assert!(sp.tail_mean_latency(0.1).unwrap() > 0.0);
}

#[test]
fn topology_and_trace_files() {
    let mut c = small();
    c.horizon_s = 31.0;
    c.traffic.load_fraction = 0.001;
    let scn = Scenario::new(c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_topology(&scn, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("topology.csv")).unwrap();
    let mut times: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    times.dedup();
    assert_eq!(times, ["0", "15", "30"]);
    let trace = fs::read_to_string(dir.path().join("packets.csv")).unwrap();
    assert_eq!(trace.lines().count(), scn.packets.len() + 1);
}

#[test]
fn effective_config_round_trips() {
    let cfg = load_config(&configs().join("kepler_full_load_8gw.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = cfg.echo(dir.path()).unwrap();
    assert_eq!(path.file_name().unwrap(), EFFECTIVE_CONFIG_FILE);
    assert_eq!(load_config(&path).unwrap(), cfg);
}

#[test]
fn seeds_change_the_trace() {
    let a = Scenario::new(small()).unwrap();
    let mut c = small();
    c.seeds.traffic += 1;
    let b = Scenario::new(c).unwrap();
    assert_ne!(a.packets, b.packets);
    assert_eq!(a.packets, Scenario::new(small()).unwrap().packets);
}
