use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::simulate::{end_score, EEG_STREAM, GAME_STREAM, UI_STREAM};
use super::{io_err, SessionError};
use crate::dsp::{
    band_features, bandpass_filter, extract_epochs, grand_average, mi_train_features, periodogram,
    psd_peak_score, remove_blink_component, welch, Average, EegData, EpochSet, EpochWindow,
    FilterSpec, IcaConfig, MiModel,
};
use crate::minigames::{Side, SSVEP_FREQUENCIES};
use crate::timeline::{align_events_to_samples, read_session_archive, MarkerEvent, SessionArchive};

pub const SUMMARY_FILE: &str = "summary.json";
/// Search windows for the contrast extrema, seconds.
const ERRP_N1: (f64, f64) = (0.150, 0.327);
const ERRP_P: (f64, f64) = (0.327, 0.426);
const ERRP_N2: (f64, f64) = (0.426, 0.700);
const P300_WINDOW: (f64, f64) = (0.300, 0.450);
const SSVEP_CONTROL_HZ: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum AnalysisStatus {
    Ok,
    InsufficientTrials(String),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub dir: PathBuf,
    pub summary: Value,
}

impl ReportBundle {
    pub fn metrics(&self, analysis: &str) -> Option<&Value> {
        self.summary["analyses"].get(analysis)?.get("metrics")
    }

    pub fn status(&self, analysis: &str) -> Option<AnalysisStatus> {
        let entry = self.summary["analyses"].get(analysis)?;
        let mut tagged = json!({"status": entry.get("status")?});
        if let Some(r) = entry.get("reason") {
            tagged["reason"] = r.clone();
        }
        serde_json::from_value(tagged).ok()
    }
}

/// Reads an archive and writes its report bundle to `out`.
pub fn analyze_session(session: &Path, out: &Path) -> Result<ReportBundle, SessionError> {
    let archive = read_session_archive(session)?;
    analyze_archive(&archive, out)
}

type Table = (Vec<String>, Vec<Vec<f64>>);

struct Outcome {
    metrics: Value,
    tables: Vec<(String, Table)>,
}

enum Failure {
    Insufficient(String),
    Failed(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Failed(e.to_string())
    }
}

fn need(got: usize, min: usize, what: &str) -> Result<(), Failure> {
    if got < min {
        Err(Failure::Insufficient(format!(
            "insufficient trials: {got} {what}, need {min}"
        )))
    } else {
        Ok(())
    }
}

/// Preprocessed recording plus events on the host clock.
struct Prepared {
    raw: EegData,
    clean: EegData,
    preprocessing: Value,
}

struct Ctx<'a> {
    archive: &'a SessionArchive,
    events: Vec<MarkerEvent>,
    eeg: Result<Prepared, String>,
}

impl Ctx<'_> {
    fn eeg(&self) -> Result<&Prepared, Failure> {
        self.eeg.as_ref().map_err(|e| Failure::Failed(e.clone()))
    }

    fn of<'b>(
        &'b self,
        stream: &'b str,
        kind: &'b str,
    ) -> impl Iterator<Item = &'b MarkerEvent> + 'b {
        self.events
            .iter()
            .filter(move |e| e.stream == stream && e.kind == kind)
    }

    fn onsets<'b>(&'b self, task: &'b str) -> impl Iterator<Item = &'b MarkerEvent> + 'b {
        self.of(UI_STREAM, "stimulus_onset")
            .filter(move |e| e.payload["task"] == task)
    }

    /// Sample index of a host-clock stamp, if inside the recording.
    fn index(&self, e: &MarkerEvent) -> Option<usize> {
        let h = self.archive.header(EEG_STREAM)?;
        let a = align_events_to_samples(&[e.t_ns], h)[0];
        a.in_range.then_some(a.index as usize)
    }
}

fn prepare(archive: &SessionArchive) -> Result<Prepared, String> {
    let h = archive
        .header(EEG_STREAM)
        .ok_or_else(|| format!("archive has no `{EEG_STREAM}` stream"))?;
    let s = archive
        .samples
        .get(EEG_STREAM)
        .ok_or_else(|| format!("archive has no `{EEG_STREAM}` samples"))?;
    let raw = EegData::from_frames(
        h.channel_labels.clone(),
        h.sample_rate.unwrap_or(0.0),
        &s.data,
    );
    let filtered = bandpass_filter(&raw, &FilterSpec::default()).map_err(|e| e.to_string())?;
    let ica =
        remove_blink_component(&filtered, &IcaConfig::default()).map_err(|e| e.to_string())?;
    let preprocessing = json!({
        "filter": FilterSpec::default(),
        "ica_component": ica.component,
        "ica_correlation": ica.correlation,
        "ica_converged": ica.model.converged,
        "ica_iterations": ica.model.iterations,
        "ica_fallback": ica.fallback,
        "frames": raw.len(),
    });
    Ok(Prepared {
        raw,
        clean: ica.cleaned,
        preprocessing,
    })
}

/// Runs every analysis; failures are recorded per analysis.
type Analysis = fn(&Ctx) -> Result<Outcome, Failure>;

pub fn analyze_archive(archive: &SessionArchive, out: &Path) -> Result<ReportBundle, SessionError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let ctx = Ctx {
        archive,
        events: archive.corrected_events(),
        eeg: prepare(archive),
    };
    let analyses: [(&str, Analysis); 6] = [
        ("rsvp_erp", rsvp_erp),
        ("ssvep_psd", ssvep_psd),
        ("errp_contrast", errp_contrast),
        ("nback_erp", nback_erp),
        ("nback_performance", nback_performance),
        ("mi_confusion", mi_confusion),
    ];
    let mut results = BTreeMap::new();
    for (name, f) in analyses {
        let entry = match f(&ctx) {
            Ok(o) => {
                let mut files = Vec::new();
                for (file, (header, rows)) in &o.tables {
                    write_csv(&out.join(file), header, rows)?;
                    files.push(file.clone());
                }
                let mut e = json!(AnalysisStatus::Ok);
                e["metrics"] = o.metrics;
                e["artifacts"] = json!(files);
                e
            }
            Err(Failure::Insufficient(r)) => {
                log::warn!("{name}: {r}");
                json!(AnalysisStatus::InsufficientTrials(r))
            }
            Err(Failure::Failed(r)) => {
                log::warn!("{name} failed: {r}");
                json!(AnalysisStatus::Failed(r))
            }
        };
        results.insert(name.to_owned(), entry);
    }
    let summary = json!({
        "session_id": archive.session_id,
        "preprocessing": ctx.eeg.as_ref().map(|p| p.preprocessing.clone()).unwrap_or(Value::Null),
        "analyses": results,
    });
    let path = out.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(ReportBundle {
        dir: out.to_owned(),
        summary,
    })
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), SessionError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v:.6}")))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

fn labelled(ctx: &Ctx, events: Vec<(&MarkerEvent, &str)>) -> Vec<(usize, String)> {
    events
        .into_iter()
        .filter_map(|(e, l)| ctx.index(e).map(|i| (i, l.to_owned())))
        .collect()
}

fn trace_mean(avg: &Average, channels: &[usize]) -> Vec<f64> {
    let traces: Vec<Vec<f64>> = channels.iter().map(|&c| avg.mean_trace(c)).collect();
    (0..avg.samples)
        .map(|s| traces.iter().map(|t| t[s]).sum::<f64>() / traces.len() as f64)
        .collect()
}

fn trace_se(avg: &Average, channels: &[usize]) -> Vec<f64> {
    let traces: Vec<Vec<f64>> = channels.iter().map(|&c| avg.se_trace(c)).collect();
    (0..avg.samples)
        .map(|s| traces.iter().map(|t| t[s]).sum::<f64>() / traces.len() as f64)
        .collect()
}

/// Index range of epoch samples whose time lies in `[lo, hi]`.
fn span(times: &[f64], (lo, hi): (f64, f64)) -> Vec<usize> {
    (0..times.len())
        .filter(|&i| times[i] >= lo - 1e-9 && times[i] <= hi + 1e-9)
        .collect()
}

fn argext(x: &[f64], idx: &[usize], max: bool) -> usize {
    let cmp = |a: &usize, b: &usize| x[*a].total_cmp(&x[*b]);
    let it = idx.iter().copied();
    if max {
        it.max_by(cmp).expect("non-empty window")
    } else {
        it.min_by(cmp).expect("non-empty window")
    }
}

fn erp_table(times: &[f64], columns: &[(&str, Vec<f64>)]) -> Table {
    let mut header = vec!["time_s".to_owned()];
    header.extend(columns.iter().map(|c| c.0.to_owned()));
    let rows = (0..times.len())
        .map(|i| {
            let mut r = vec![times[i]];
            r.extend(columns.iter().map(|c| c.1[i]));
            r
        })
        .collect();
    (header, rows)
}

struct TwoConditions {
    epochs: EpochSet,
    a: Average,
    b: Average,
}

fn two_conditions(
    data: &EegData,
    events: &[(usize, String)],
    a: &str,
    b: &str,
) -> Result<TwoConditions, Failure> {
    for c in [a, b] {
        need(events.iter().filter(|e| e.1 == c).count(), 2, c)?;
    }
    let epochs = extract_epochs(data, events, &EpochWindow::default())?;
    need(epochs.count(a), 2, a)?;
    need(epochs.count(b), 2, b)?;
    let ga = grand_average(&epochs, a)?;
    let gb = grand_average(&epochs, b)?;
    Ok(TwoConditions {
        epochs,
        a: ga,
        b: gb,
    })
}

fn rsvp_erp(ctx: &Ctx) -> Result<Outcome, Failure> {
    let p = ctx.eeg()?;
    let ev: Vec<_> = ctx
        .onsets("rsvp")
        .map(|e| {
            (
                e,
                if e.payload["is_target"] == true {
                    "target"
                } else {
                    "nontarget"
                },
            )
        })
        .collect();
    let ev = labelled(ctx, ev);
    let tc = two_conditions(&p.clean, &ev, "target", "nontarget")?;
    let pz = tc.epochs.channel_index("Pz")?;
    let times = tc.epochs.times();
    let (tm, nm) = (tc.a.mean_trace(pz), tc.b.mean_trace(pz));
    let post = span(&times, (0.0, 0.8));
    let peak = argext(&tm, &post, true);
    let win = span(&times, P300_WINDOW);
    let diff = win.iter().map(|&i| tm[i] - nm[i]).sum::<f64>() / win.len() as f64;
    // dominant spectral peak of the non-target average above 2 Hz
    let spec = periodogram(&nm, tc.epochs.sample_rate);
    let above: Vec<usize> = (0..spec.freqs.len())
        .filter(|&k| spec.freqs[k] > 2.0)
        .collect();
    let kmax = argext(&spec.power, &above, true);
    let table = erp_table(
        &times,
        &[
            ("target_mean", tm.clone()),
            ("target_se", tc.a.se_trace(pz)),
            ("nontarget_mean", nm.clone()),
            ("nontarget_se", tc.b.se_trace(pz)),
        ],
    );
    Ok(Outcome {
        metrics: json!({
            "channel": "Pz",
            "targets": tc.a.n,
            "nontargets": tc.b.n,
            "excluded": tc.epochs.excluded,
            "peak_latency_ms": times[peak] * 1e3,
            "peak_uv": tm[peak],
            "window_difference_uv": diff,
            "nontarget_dominant_hz": spec.freqs[kmax],
        }),
        tables: vec![("rsvp_erp.csv".into(), table)],
    })
}

fn ssvep_psd(ctx: &Ctx) -> Result<Outcome, Failure> {
    let p = ctx.eeg()?;
    let o2 = p.clean.channel("O2")?;
    let fs = p.clean.sample_rate;
    let mut metrics = serde_json::Map::new();
    let mut tables = Vec::new();
    for f in SSVEP_FREQUENCIES {
        let mut segs: Vec<&[f64]> = Vec::new();
        for e in ctx.onsets("ssvep").filter(|e| e.payload["frequency"] == f) {
            let dur = e.payload["duration"].as_f64().unwrap_or(0.0);
            let n = (dur * fs).round() as usize;
            if let Some(i) = ctx.index(e) {
                if i + n <= o2.len() {
                    segs.push(&o2[i..i + n]);
                }
            }
        }
        need(segs.len(), 2, &format!("{f} Hz trials"))?;
        let n = segs.iter().map(|s| s.len()).min().unwrap_or(0);
        let evoked: Vec<f64> = (0..n)
            .map(|i| segs.iter().map(|s| s[i]).sum::<f64>() / segs.len() as f64)
            .collect();
        let psd = welch(&evoked, fs)?;
        let singles = segs
            .iter()
            .map(|s| welch(&s[..n], fs))
            .collect::<Result<Vec<_>, _>>()?;
        let k = singles.len() as f64;
        let mean: Vec<f64> = (0..psd.freqs.len())
            .map(|b| singles.iter().map(|s| s.power[b]).sum::<f64>() / k)
            .collect();
        let se: Vec<f64> = (0..psd.freqs.len())
            .map(|b| {
                let ss = singles
                    .iter()
                    .map(|s| (s.power[b] - mean[b]).powi(2))
                    .sum::<f64>();
                (ss / (k - 1.0)).sqrt() / k.sqrt()
            })
            .collect();
        let fund = psd_peak_score(&psd, f as f64);
        let harm = psd_peak_score(&psd, 2.0 * f as f64);
        let control = psd_peak_score(&psd, SSVEP_CONTROL_HZ);
        metrics.insert(
            format!("{f}hz"),
            json!({
                "trials": segs.len(),
                "flag": fund.flag,
                "prominence_db": fund.prominence_db,
                "harmonic_flag": harm.flag,
                "harmonic_prominence_db": harm.prominence_db,
                "control_10hz_flag": control.flag,
                "control_10hz_prominence_db": control.prominence_db,
            }),
        );
        let rows = (0..psd.freqs.len())
            .map(|b| vec![psd.freqs[b], psd.power[b], mean[b], se[b]])
            .collect();
        let header = ["freq_hz", "evoked_psd", "trial_psd_mean", "trial_psd_se"]
            .map(String::from)
            .to_vec();
        tables.push((format!("ssvep_psd_{f}hz.csv"), (header, rows)));
    }
    metrics.insert("channel".into(), json!("O2"));
    Ok(Outcome {
        metrics: Value::Object(metrics),
        tables,
    })
}

fn errp_contrast(ctx: &Ctx) -> Result<Outcome, Failure> {
    let p = ctx.eeg()?;
    let caught: Vec<i64> = ctx
        .of(GAME_STREAM, "cheat_report")
        .filter(|e| e.payload["confirmed"] == true)
        .filter_map(|e| e.payload["injection_t_ns"].as_i64())
        .collect();
    let ev: Vec<_> = ctx
        .of(GAME_STREAM, "move")
        .filter_map(|e| {
            let injected = e.payload["injected"] == true;
            if injected && caught.contains(&e.t_ns.0) {
                Some((e, "caught"))
            } else if !injected && e.payload["valid"] == true {
                Some((e, "valid"))
            } else {
                None
            }
        })
        .collect();
    let ev = labelled(ctx, ev);
    let n_caught = ev.iter().filter(|e| e.1 == "caught").count();
    need(n_caught, 2, "caught substitutions")?;
    let tc = two_conditions(&p.clean, &ev, "caught", "valid")?;
    let chans = [
        tc.epochs.channel_index("Fz")?,
        tc.epochs.channel_index("Cz")?,
    ];
    let times = tc.epochs.times();
    let (cm, vm) = (trace_mean(&tc.a, &chans), trace_mean(&tc.b, &chans));
    let contrast: Vec<f64> = cm.iter().zip(&vm).map(|(a, b)| a - b).collect();
    let n1 = argext(&contrast, &span(&times, ERRP_N1), false);
    let pk = argext(&contrast, &span(&times, ERRP_P), true);
    let n2 = argext(&contrast, &span(&times, ERRP_N2), false);
    let table = erp_table(
        &times,
        &[
            ("caught_mean", cm.clone()),
            ("caught_se", trace_se(&tc.a, &chans)),
            ("valid_mean", vm.clone()),
            ("valid_se", trace_se(&tc.b, &chans)),
            ("contrast", contrast.clone()),
        ],
    );
    Ok(Outcome {
        metrics: json!({
            "channels": ["Fz", "Cz"],
            "caught": tc.a.n,
            "valid": tc.b.n,
            "n1_latency_ms": times[n1] * 1e3,
            "n1_uv": contrast[n1],
            "p_latency_ms": times[pk] * 1e3,
            "p_uv": contrast[pk],
            "n2_latency_ms": times[n2] * 1e3,
            "n2_uv": contrast[n2],
            "significance": "contrast-extrema rule; no statistical test",
        }),
        tables: vec![("errp_contrast.csv".into(), table)],
    })
}

fn nback_erp(ctx: &Ctx) -> Result<Outcome, Failure> {
    let p = ctx.eeg()?;
    let ev: Vec<_> = ctx
        .onsets("nback")
        .map(|e| {
            (
                e,
                if e.payload["is_target"] == true {
                    "target"
                } else {
                    "nontarget"
                },
            )
        })
        .collect();
    let ev = labelled(ctx, ev);
    let tc = two_conditions(&p.clean, &ev, "target", "nontarget")?;
    let pz = tc.epochs.channel_index("Pz")?;
    let times = tc.epochs.times();
    let (tm, nm) = (tc.a.mean_trace(pz), tc.b.mean_trace(pz));
    let peak = argext(&tm, &span(&times, (0.0, 0.8)), true);
    let table = erp_table(
        &times,
        &[
            ("target_mean", tm.clone()),
            ("target_se", tc.a.se_trace(pz)),
            ("nontarget_mean", nm.clone()),
            ("nontarget_se", tc.b.se_trace(pz)),
        ],
    );
    Ok(Outcome {
        metrics: json!({
            "channel": "Pz",
            "targets": tc.a.n,
            "nontargets": tc.b.n,
            "peak_latency_ms": times[peak] * 1e3,
            "target_peak_uv": tm[peak],
            "nontarget_at_peak_uv": nm[peak],
        }),
        tables: vec![("nback_erp.csv".into(), table)],
    })
}

fn nback_performance(ctx: &Ctx) -> Result<Outcome, Failure> {
    // n -> (trials, hits, targets, false alarms, rt sum, rt count)
    let mut per: BTreeMap<u64, (u32, u32, u32, u32, f64, u32)> = BTreeMap::new();
    for e in ctx
        .of(GAME_STREAM, "minigame_end")
        .filter(|e| e.payload["task"] == "nback")
    {
        let (Some(n), Some(s)) = (e.payload["n"].as_u64(), end_score(&e.payload)) else {
            continue;
        };
        let r = per.entry(n).or_default();
        r.0 += 1;
        r.1 += s.hits;
        r.2 += s.hits + s.misses;
        r.3 += s.false_alarms;
        if let Some(rt) = s.mean_rt {
            r.4 += rt * s.hits as f64;
            r.5 += s.hits;
        }
    }
    need(per.values().map(|r| r.0 as usize).sum(), 1, "n-back trials")?;
    let rows: Vec<Vec<f64>> = per
        .iter()
        .map(|(&n, r)| {
            vec![
                n as f64,
                r.0 as f64,
                r.1 as f64 / r.2.max(1) as f64,
                r.3 as f64 / r.0 as f64,
                if r.5 > 0 { r.4 / r.5 as f64 } else { f64::NAN },
            ]
        })
        .collect();
    let rates: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    let header = [
        "n",
        "trials",
        "hit_rate",
        "false_alarms_per_trial",
        "mean_rt_s",
    ]
    .map(String::from)
    .to_vec();
    Ok(Outcome {
        metrics: json!({
            "levels": per.keys().collect::<Vec<_>>(),
            "hit_rate": rates,
            "strictly_decreasing": rates.windows(2).all(|w| w[1] < w[0]),
        }),
        tables: vec![("nback_performance.csv".into(), (header, rows))],
    })
}

fn side_of(v: &Value) -> Option<Side> {
    serde_json::from_value(v.clone()).ok()
}

fn mi_confusion(ctx: &Ctx) -> Result<Outcome, Failure> {
    let p = ctx.eeg()?;
    let fs = p.raw.sample_rate;
    let n1 = fs.round() as usize;
    let window =
        |i: usize| -> Option<EegData> { (i + n1 <= p.raw.len()).then(|| p.raw.slice(i, n1)) };
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for e in ctx.onsets("mi_calibration") {
        let (Some(i), Some(side)) = (ctx.index(e), side_of(&e.payload["side"])) else {
            continue;
        };
        let per = e.payload["duration"].as_f64().unwrap_or(0.0).floor() as usize;
        for k in 0..per {
            if let Some(w) = window(i + k * n1) {
                feats.push(band_features(&w)?);
                labels.push(side);
            }
        }
    }
    need(feats.len(), 40, "calibration windows")?;
    let model: MiModel = mi_train_features(&feats, &labels)?;
    // rows: mode (0 imagery, 1 execution), true side (0 left, 1 right), predicted counts
    let mut counts = [[[0u32; 2]; 2]; 2];
    for (m, task) in ["mi", "me"].iter().enumerate() {
        for e in ctx.onsets(task) {
            let (Some(i), Some(side)) = (ctx.index(e), side_of(&e.payload["side"])) else {
                continue;
            };
            if let Some(w) = window(i) {
                let d = model.decide(&band_features(&w)?);
                counts[m][side as usize][d.side as usize] += 1;
            }
        }
    }
    let acc = |m: usize| {
        let c = counts[m];
        let total = c[0][0] + c[0][1] + c[1][0] + c[1][1];
        if total == 0 {
            Value::Null
        } else {
            json!((c[0][0] + c[1][1]) as f64 / total as f64)
        }
    };
    let mut rows = Vec::new();
    for (m, mode) in counts.iter().enumerate() {
        for (s, pred) in mode.iter().enumerate() {
            rows.push(vec![m as f64, s as f64, pred[0] as f64, pred[1] as f64]);
        }
    }
    let header = ["mode", "true_side", "pred_left", "pred_right"]
        .map(String::from)
        .to_vec();
    Ok(Outcome {
        metrics: json!({
            "calibration_windows": feats.len(),
            "model": model,
            "imagery_accuracy": acc(0),
            "execution_accuracy": acc(1),
            "encoding": "mode 0 = imagery, 1 = execution; side 0 = left, 1 = right",
        }),
        tables: vec![("mi_confusion.csv".into(), (header, rows))],
    })
}
