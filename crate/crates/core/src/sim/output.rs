//! Run directory layout.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use super::engine::{SimOutcome, VehicleTrace};

/// Rows of `time,x,y,heading,v,accel,steer`; the last row has no control.
pub fn trajectory_csv(trace: &VehicleTrace) -> String {
    let mut out = String::from("time,x,y,heading,v,accel,steer\n");
    for (k, z) in trace.states.iter().enumerate() {
        let _ = write!(out, "{},{},{},{},{},", trace.times[k], z.x, z.y, z.heading, z.v);
        match trace.controls.get(k) {
            Some(u) => {
                let _ = writeln!(out, "{},{}", u.accel, u.steer);
            }
            None => out.push_str(",\n"),
        }
    }
    out
}

/// Writes metrics, effective config, event log, trajectories, rate and
/// distance penalty series, and any BEV frames into `dir`.
pub fn write_run_directory(dir: &Path, outcome: &SimOutcome) -> io::Result<()> {
    fs::create_dir_all(dir.join("trajectories"))?;
    fs::write(dir.join("metrics.json"), outcome.metrics.to_json())?;
    fs::write(dir.join("config.toml"), outcome.effective_config.to_toml_string())?;
    fs::write(dir.join("events.jsonl"), outcome.events.to_jsonl())?;
    for (id, trace) in &outcome.traces {
        fs::write(dir.join("trajectories").join(format!("vehicle_{}.csv", id.0)), trajectory_csv(trace))?;
    }

    let slot = outcome.effective_config.dp_slot;
    let mut dp = String::from("slot,start,end,dp\n");
    for (k, v) in outcome.metrics.distance_penalty.iter().enumerate() {
        let value = v.map_or("n/a".to_string(), |x| x.to_string());
        let _ = writeln!(dp, "{k},{},{},{value}", k as f64 * slot, (k + 1) as f64 * slot);
    }
    fs::write(dir.join("distance_penalty.csv"), dp)?;

    let mut rates = String::from("time,response_rate,completion_rate\n");
    for (t, rr, cr) in &outcome.rates {
        let _ = writeln!(rates, "{t},{rr},{cr}");
    }
    fs::write(dir.join("rates.csv"), rates)?;

    if !outcome.bev_frames.is_empty() {
        fs::create_dir_all(dir.join("bev"))?;
        for (k, (t, img)) in outcome.bev_frames.iter().enumerate() {
            let png = img.to_png().map_err(|e| io::Error::new(io::ErrorKind::Other, e.to_string()))?;
            fs::write(dir.join("bev").join(format!("frame_{k:04}_t{t:.1}.png")), png)?;
        }
    }
    Ok(())
}
