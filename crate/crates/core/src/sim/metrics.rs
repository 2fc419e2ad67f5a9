//! Service metrics: response and completion rates, task times and the
//! per-slot distance penalty.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::fleet::{FleetSnapshot, PassengerRequest, VehicleId};
use crate::geometry::distance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("rates are undefined without requests")]
pub struct RatesUndefined;

/// Percent of all `n_t` requests picked up and delivered.
pub fn compute_rates(snapshot: &FleetSnapshot, n_t: usize) -> Result<(f64, f64), RatesUndefined> {
    if n_t == 0 {
        return Err(RatesUndefined);
    }
    let picked = snapshot.requests.values().filter(|r| r.picked).count();
    let arrived = snapshot.requests.values().filter(|r| r.arrived).count();
    let pct = |n: usize| n as f64 / n_t as f64 * 100.0;
    Ok((pct(picked), pct(arrived)))
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl MeanStd {
    pub fn of(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt(), count: samples.len() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskTimes {
    /// Spawn to pickup, over picked requests.
    pub response: Option<MeanStd>,
    /// Spawn to arrival, over arrived requests.
    pub completion: Option<MeanStd>,
}

pub fn compute_task_times<'a>(requests: impl IntoIterator<Item = &'a PassengerRequest>) -> TaskTimes {
    let mut response = Vec::new();
    let mut completion = Vec::new();
    for r in requests {
        if let Some(t) = r.pickup_time {
            response.push(t - r.spawn_time);
        }
        if let Some(t) = r.arrival_time {
            completion.push(t - r.spawn_time);
        }
    }
    TaskTimes { response: MeanStd::of(&response), completion: MeanStd::of(&completion) }
}

/// Positions of the vehicles taking part at one instant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Frame {
    pub time: f64,
    pub positions: BTreeMap<VehicleId, [f64; 2]>,
}

/// `exp(-d)` per slot of `slot_length`, with `d` the smallest pairwise
/// distance in the slot over `d_max`, capped at 1. Slots run from 0 up to
/// the last frame time, which is folded into the final slot. Slots where no
/// frame has two vehicles are `None`.
pub fn distance_penalty(frames: &[Frame], slot_length: f64, d_max: f64) -> Vec<Option<f64>> {
    let Some(end) = frames.iter().map(|f| f.time).reduce(f64::max) else {
        return Vec::new();
    };
    let slots = ((end / slot_length).ceil() as usize).max(1);
    let mut best = vec![f64::INFINITY; slots];
    for f in frames {
        let k = ((f.time / slot_length).floor() as usize).min(slots - 1);
        let p: Vec<[f64; 2]> = f.positions.values().copied().collect();
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                best[k] = best[k].min(distance(p[i], p[j]));
            }
        }
    }
    best.into_iter()
        .map(|d| d.is_finite().then(|| (-(d / d_max).min(1.0)).exp()))
        .collect()
}

/// Emits `None` as the string `"n/a"`.
fn na<S: Serializer, T: Serialize>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => x.serialize(s),
        None => s.serialize_str("n/a"),
    }
}

fn na_list<S: Serializer>(v: &[Option<f64>], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        match x {
            Some(x) => seq.serialize_element(x)?,
            None => seq.serialize_element("n/a")?,
        }
    }
    seq.end()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub dispatcher: String,
    pub final_time: f64,
    pub total_requests: usize,
    pub picked: usize,
    pub arrived: usize,
    #[serde(serialize_with = "na")]
    pub response_time: Option<MeanStd>,
    #[serde(serialize_with = "na")]
    pub completion_time: Option<MeanStd>,
    #[serde(serialize_with = "na")]
    pub response_rate: Option<f64>,
    #[serde(serialize_with = "na")]
    pub completion_rate: Option<f64>,
    #[serde(serialize_with = "na_list")]
    pub distance_penalty: Vec<Option<f64>>,
    pub separation_violations: usize,
    pub dispatch_fallbacks: usize,
    pub convergence_warnings: usize,
}

fn cell(v: Option<MeanStd>) -> String {
    v.map_or("n/a".into(), |m| format!("{:.2} ± {:.2}", m.mean, m.std))
}

fn pct(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.1}%"))
}

impl MetricsReport {
    pub const TABLE_HEADER: &'static str = "dispatcher      | T_atr (s)       | T_atc (s)       | RR      | CR";

    /// One row matching [`Self::TABLE_HEADER`].
    pub fn table_row(&self) -> String {
        format!(
            "{:<15} | {:<15} | {:<15} | {:<7} | {}",
            self.dispatcher,
            cell(self.response_time),
            cell(self.completion_time),
            pct(self.response_rate),
            pct(self.completion_rate)
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialise")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::RequestId;

    fn served(id: u32, spawn: f64, pick: Option<f64>, arrive: Option<f64>) -> PassengerRequest {
        let mut r = PassengerRequest::new(RequestId(id), [0.0, 0.0], [1.0, 0.0], spawn);
        r.picked = pick.is_some();
        r.pickup_time = pick;
        r.arrived = arrive.is_some();
        r.arrival_time = arrive;
        r
    }

    #[test]
    fn rates_examples() {
        let mut s = FleetSnapshot::default();
        for i in 0..40 {
            let r = served(i, 0.0, (i < 37).then_some(5.0), (i < 34).then_some(9.0));
            s.requests.insert(r.id, r);
        }
        assert_eq!(compute_rates(&s, 40).unwrap(), (92.5, 85.0));
        assert_eq!(compute_rates(&FleetSnapshot::default(), 3).unwrap(), (0.0, 0.0));
        assert_eq!(compute_rates(&s, 0), Err(RatesUndefined));
    }

    #[test]
    fn task_time_examples() {
        let t = compute_task_times(&[served(0, 0.0, Some(10.0), Some(25.0))]);
        assert_eq!(t.response.unwrap().mean, 10.0);
        assert_eq!(t.completion.unwrap().mean, 25.0);
        assert_eq!(t.response.unwrap().std, 0.0);
        let t = compute_task_times(&[served(0, 0.0, Some(10.0), None), served(1, 5.0, Some(35.0), None)]);
        assert_eq!((t.response.unwrap().mean, t.response.unwrap().std), (20.0, 10.0));
        assert!(t.completion.is_none());
    }

    fn pair_frame(time: f64, gap: f64) -> Frame {
        Frame { time, positions: BTreeMap::from([(VehicleId(0), [0.0, 0.0]), (VehicleId(1), [gap, 0.0])]) }
    }

    #[test]
    fn distance_penalty_values() {
        let dp = distance_penalty(&[pair_frame(0.0, 12.0), pair_frame(5.0, 30.0)], 20.0, 20.0);
        assert_eq!(dp.len(), 1);
        assert!((dp[0].unwrap() - (-0.6f64).exp()).abs() < 1e-12);
        let dp = distance_penalty(&[pair_frame(1.0, 25.0)], 20.0, 20.0);
        assert_eq!(dp[0], Some((-1.0f64).exp()));
        let dp = distance_penalty(&[pair_frame(1.0, 0.0)], 20.0, 20.0);
        assert_eq!(dp[0], Some(1.0));
    }

    #[test]
    fn lonely_slots_are_not_available() {
        let lone = Frame { time: 25.0, positions: BTreeMap::from([(VehicleId(0), [0.0, 0.0])]) };
        let dp = distance_penalty(&[pair_frame(0.0, 10.0), lone.clone(), pair_frame(40.0, 10.0)], 20.0, 20.0);
        assert_eq!(dp.len(), 2);
        assert!(dp[0].is_some());
        assert_eq!(dp[1], Some((-0.5f64).exp()));
        let dp = distance_penalty(&[pair_frame(0.0, 10.0), lone, pair_frame(60.0, 10.0)], 20.0, 20.0);
        assert_eq!(dp[1], None);
    }

    #[test]
    fn report_marks_missing_values() {
        let r = MetricsReport {
            dispatcher: "fcfs".into(),
            final_time: 200.0,
            total_requests: 0,
            picked: 0,
            arrived: 0,
            response_time: None,
            completion_time: None,
            response_rate: None,
            completion_rate: None,
            distance_penalty: vec![None, Some(0.5)],
            separation_violations: 0,
            dispatch_fallbacks: 0,
            convergence_warnings: 0,
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["response_rate"], "n/a");
        assert_eq!(v["distance_penalty"][0], "n/a");
        assert!(r.table_row().contains("n/a"));
    }
}
