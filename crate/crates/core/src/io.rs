//! CSV and JSON artifacts.
//!
//! Every CSV row starts with a `schema` column naming the layout version, so a
//! reader can reject files it does not understand. Undefined values (the ray
//! coordinates of an extinct state) are empty cells.

use std::io::Write;

use serde::Serialize;

use crate::model::{observables, Observables, PopulationState};
use crate::sde::PathEnsemble;
use crate::simulator::Trajectory;
use crate::stats::{CollapseProfile, EnsembleSummary};

pub const TRAJECTORY_SCHEMA: &str = "partner-trajectory/1";
pub const ENSEMBLE_SCHEMA: &str = "partner-ensemble/1";
pub const REPLICA_SCHEMA: &str = "partner-replicas/1";
pub const PATH_SCHEMA: &str = "partner-path/1";
pub const COLLAPSE_SCHEMA: &str = "partner-collapse/1";

const OBS_HEADER: [&str; 15] = ["S", "I", "J", "K", "L", "y", "z", "i", "j", "k", "h", "U", "V", "W", "Q"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn obs_fields(st: &PopulationState, o: &Observables) -> Vec<String> {
    let mut f: Vec<String> = st.as_array().iter().map(|c| c.to_string()).collect();
    f.extend([o.y, o.z, o.i, o.j, o.k, o.h].iter().map(|x| x.to_string()));
    f.extend([o.u, o.v, o.w, o.q].into_iter().map(opt));
    f
}

/// One row per recorded sample.
pub fn write_trajectory_csv<W: Write>(w: W, tr: &Trajectory) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["schema", "t_slow"];
    header.extend(OBS_HEADER);
    out.write_record(&header)?;
    for s in &tr.samples {
        let mut row = vec![TRAJECTORY_SCHEMA.to_string(), s.t_slow.to_string()];
        row.extend(obs_fields(&s.state, &s.obs));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// One row per replica and requested time.
pub fn write_ensemble_csv<W: Write>(w: W, summary: &EnsembleSummary) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["schema", "replica", "t_slow", "post_stop"];
    header.extend(OBS_HEADER);
    header.push("zi_integral");
    out.write_record(&header)?;
    let p = summary.config.params;
    for r in &summary.replicas {
        for m in &r.marginals {
            let o = observables(&m.state, &p, &summary.structure);
            let mut row = vec![ENSEMBLE_SCHEMA.to_string(), r.replica.to_string(), m.t_slow.to_string(), m.post_stop.to_string()];
            row.extend(obs_fields(&m.state, &o));
            row.push(m.zi_integral.to_string());
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One row per replica with its terminal statistics.
pub fn write_replicas_csv<W: Write>(w: W, summary: &EnsembleSummary) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "schema",
        "replica",
        "tau0_slow",
        "censored",
        "stop_reason",
        "stop_time_slow",
        "events",
        "sup_abs_z",
        "sup_h",
        "zi_integral",
    ])?;
    for r in &summary.replicas {
        let reason = serde_json::to_value(r.stop_reason).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        out.write_record([
            REPLICA_SCHEMA.to_string(),
            r.replica.to_string(),
            opt(r.tau0_slow),
            r.censored.to_string(),
            reason,
            r.stop_time_slow.to_string(),
            r.events.to_string(),
            r.sup_abs_z.to_string(),
            r.sup_h.to_string(),
            r.zi_integral.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reference-process marginals: one row per path and time, plus the path's
/// absorption time (empty if not absorbed).
pub fn write_paths_csv<W: Write>(w: W, ens: &PathEnsemble) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["schema", "path", "t", "value", "tau0"])?;
    for (p, tau) in ens.tau0.iter().enumerate() {
        for (q, t) in ens.times.iter().enumerate() {
            out.write_record([PATH_SCHEMA.to_string(), p.to_string(), t.to_string(), ens.marginals[q][p].to_string(), opt(*tau)])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One row per replica of a collapse run.
pub fn write_collapse_csv<W: Write>(w: W, profiles: &[CollapseProfile]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["schema", "replica", "first_hit_fast", "post_hit_samples", "post_hit_close"])?;
    for (r, p) in profiles.iter().enumerate() {
        out.write_record([
            COLLAPSE_SCHEMA.to_string(),
            r.to_string(),
            opt(p.first_hit_fast),
            p.post_hit_samples.to_string(),
            p.post_hit_close.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline. Key order follows struct field order.
pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")
}
