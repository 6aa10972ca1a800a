//! CSV writers for run artefacts. Columns are fixed; floats use the shortest
//! round-tripping decimal form and rows end in `\n`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::analysis::latency_cdf;
use crate::drl::policy::{AggregationRecord, RewardRecord};
use crate::engine::{DeliveryRecord, DropRecord};
use crate::orbit::NodeId;

pub const LATENCY_HEADER: [&str; 7] = ["packet_id", "src", "dst", "created_t", "delivered_t", "e2e_s", "hops"];
pub const HEATMAP_HEADER: [&str; 3] = ["node_a", "node_b", "packets"];
pub const DROPS_HEADER: [&str; 3] = ["packet_id", "node", "t"];
pub const REWARDS_HEADER: [&str; 6] = ["t", "agent", "reward", "r_q", "r_r", "r_star"];
pub const EPSILON_HEADER: [&str; 2] = ["t", "epsilon"];
pub const AGGREGATION_HEADER: [&str; 5] = ["t", "kind", "participants", "pre_mean_cka", "post_mean_cka"];
pub const CKA_HEADER: [&str; 3] = ["agent_i", "agent_j", "value"];
pub const CDF_HEADER: [&str; 2] = ["latency_s", "cdf"];
pub const COMPARISON_HEADER: [&str; 4] = ["percentile", "policy_s", "baseline_s", "gap_s"];

pub fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

pub fn create(path: &Path) -> std::io::Result<csv::Writer<BufWriter<File>>> {
    Ok(csv_writer(BufWriter::new(File::create(path)?)))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_latency<W: Write>(w: &mut csv::Writer<W>, deliveries: &[DeliveryRecord]) -> csv::Result<()> {
    w.write_record(LATENCY_HEADER)?;
    for d in deliveries {
        w.write_record([
            d.packet_id.to_string(),
            d.src.to_string(),
            d.dst.to_string(),
            d.created_t.to_string(),
            d.delivered_t.to_string(),
            d.e2e_s().to_string(),
            d.hops.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_heatmap<W: Write>(w: &mut csv::Writer<W>, counts: &BTreeMap<(NodeId, NodeId), u64>) -> csv::Result<()> {
    w.write_record(HEATMAP_HEADER)?;
    for (&(a, b), &n) in counts {
        w.write_record([a.to_string(), b.to_string(), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_drops<W: Write>(w: &mut csv::Writer<W>, drops: &[DropRecord]) -> csv::Result<()> {
    w.write_record(DROPS_HEADER)?;
    for d in drops {
        w.write_record([d.packet_id.to_string(), d.node.to_string(), d.t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rewards<W: Write>(w: &mut csv::Writer<W>, rewards: &[RewardRecord]) -> csv::Result<()> {
    w.write_record(REWARDS_HEADER)?;
    for r in rewards {
        let b = r.reward;
        w.write_record([r.t.to_string(), r.agent.to_string(), b.total.to_string(), b.r_q.to_string(), b.r_r.to_string(), b.r_star.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_epsilon<W: Write>(w: &mut csv::Writer<W>, log: &[(f64, f64)]) -> csv::Result<()> {
    w.write_record(EPSILON_HEADER)?;
    for (t, e) in log {
        w.write_record([t.to_string(), e.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregation_log<W: Write>(w: &mut csv::Writer<W>, log: &[AggregationRecord]) -> csv::Result<()> {
    w.write_record(AGGREGATION_HEADER)?;
    for r in log {
        w.write_record([r.t.to_string(), r.kind.as_str().to_string(), r.participants.to_string(), opt(r.pre_mean_cka), opt(r.post_mean_cka)])?;
    }
    w.flush()?;
    Ok(())
}

/// Upper triangle including the diagonal, or the full matrix when `full`.
pub fn write_cka<W: Write>(w: &mut csv::Writer<W>, m: &[Vec<f64>], full: bool) -> csv::Result<()> {
    w.write_record(CKA_HEADER)?;
    for (i, row) in m.iter().enumerate() {
        let start = if full { 0 } else { i };
        for (j, v) in row.iter().enumerate().skip(start) {
            w.write_record([i.to_string(), j.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_cdf<W: Write>(w: &mut csv::Writer<W>, latencies: &[f64]) -> csv::Result<()> {
    w.write_record(CDF_HEADER)?;
    for (x, c) in latency_cdf(latencies) {
        w.write_record([x.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_comparison<W: Write>(w: &mut csv::Writer<W>, rows: &[(f64, f64, f64)]) -> csv::Result<()> {
    w.write_record(COMPARISON_HEADER)?;
    for &(p, a, b) in rows {
        w.write_record([p.to_string(), a.to_string(), b.to_string(), (a - b).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// End-to-end latencies from a `latency.csv`.
pub fn read_latencies(path: &Path) -> csv::Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let idx = r.headers()?.iter().position(|h| h == "e2e_s");
    let Some(idx) = idx else {
        return Err(csv::Error::from(std::io::Error::new(std::io::ErrorKind::InvalidData, "missing e2e_s column")));
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v: f64 = rec[idx]
            .parse()
            .map_err(|e| csv::Error::from(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("bad e2e_s: {e}"))))?;
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continual::RoundKind;

    #[test]
    fn fixed_headers_and_newlines() {
        let mut buf = Vec::new();
        write_epsilon(&mut csv_writer(&mut buf), &[(0.0, 1.0), (0.5, 0.25)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,epsilon\n0,1\n0.5,0.25\n");
        let mut buf = Vec::new();
        let rec = AggregationRecord { t: 1.0, kind: RoundKind::Cluster, participants: 3, pre_mean_cka: None, post_mean_cka: Some(1.0) };
        write_aggregation_log(&mut csv_writer(&mut buf), &[rec]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,kind,participants,pre_mean_cka,post_mean_cka\n1,cluster,3,,1\n");
    }

    #[test]
    fn latency_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("latency.csv");
        let d = DeliveryRecord {
            packet_id: 4,
            src: NodeId(140),
            dst: NodeId(141),
            created_t: 0.125,
            delivered_t: 0.2,
            hops: 5,
            propagation_s: 0.01,
            path: Vec::new(),
        };
        write_latency(&mut create(&path).unwrap(), std::slice::from_ref(&d)).unwrap();
        assert_eq!(read_latencies(&path).unwrap(), vec![d.e2e_s()]);
    }
}
