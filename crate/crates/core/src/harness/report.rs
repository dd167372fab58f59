//! Figure data from a run directory. Reads only persisted artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::run::{elicit_language, ComparisonRecord, SweepRecord};
use super::stages::{detect_stages, StageBoundaries};
use super::HarnessError;
use crate::estimator::{loss_anchors, smooth_scores, system_proportion_from_loss, system_proportion_from_mixture, ScoreSeries};
use crate::model::LossTrace;
use crate::probes::{NeuronSelection, TransferReport, WorkLangReport};
use crate::toylang::{EvalResult, LangId};
use crate::util::write_atomic;

/// Probe results of every probed checkpoint, in step order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeSeries {
    pub steps: Vec<u64>,
    pub languages: Vec<LangId>,
    pub pass: BTreeMap<LangId, Vec<f64>>,
    pub parse: BTreeMap<LangId, Vec<f64>>,
    /// `None` where nothing was attributed.
    pub worklang: Vec<Option<BTreeMap<LangId, f64>>>,
    pub worklang_counts: Vec<BTreeMap<LangId, u64>>,
    pub identifier_positions: Vec<u64>,
    pub neuron_counts: Vec<BTreeMap<LangId, usize>>,
    pub candidates: Vec<usize>,
    pub thresholds: Vec<f64>,
    /// `None` where the model solved no task of the elicited suite.
    pub transfer: Vec<Option<TransferReport>>,
}

impl ProbeSeries {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn pass_rates(&self, lang: &str) -> Option<Vec<f64>> {
        self.pass.get(lang).cloned()
    }

    pub fn worklang_of(&self, lang: &str) -> Vec<Option<f64>> {
        self.worklang.iter().map(|m| m.as_ref().and_then(|m| m.get(lang).copied())).collect()
    }

    pub fn neurons_of(&self, lang: &str) -> Vec<Option<f64>> {
        self.neuron_counts.iter().map(|m| m.get(lang).map(|n| *n as f64)).collect()
    }

    pub fn transfer_proportions(&self) -> Vec<Option<f64>> {
        self.transfer.iter().map(|t| t.as_ref().map(|t| t.proportion)).collect()
    }
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    serde_json::from_str(&read(path)?).map_err(|e| HarnessError::Artifact(format!("{}: {e}", path.display())))
}

pub fn load_probe_series(run_dir: &Path) -> Result<ProbeSeries, HarnessError> {
    let probes = run_dir.join("probes");
    let mut series = ProbeSeries::default();
    if !probes.is_dir() {
        return Ok(series);
    }
    let mut dirs: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(&probes).map_err(|e| HarnessError::io(&probes, e))? {
        let entry = entry.map_err(|e| HarnessError::io(&probes, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(step) = name.strip_prefix("step_").and_then(|s| s.parse().ok()) {
            dirs.push((step, entry.path()));
        }
    }
    dirs.sort();
    for (step, d) in dirs {
        series.steps.push(step);
        let mut langs = Vec::new();
        let mut files: Vec<_> = std::fs::read_dir(&d)
            .map_err(|e| HarnessError::io(&d, e))?
            .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
            .filter(|n| n.starts_with("eval_") && n.ends_with(".json"))
            .collect();
        files.sort();
        for f in files {
            let r: EvalResult = parse(&d.join(&f))?;
            series.pass.entry(r.language.clone()).or_default().push(r.pass_rate);
            series.parse.entry(r.language.clone()).or_default().push(r.parse_rate);
            langs.push(r.language);
        }
        if series.languages.is_empty() {
            series.languages = langs;
        } else if series.languages != langs {
            return Err(HarnessError::Artifact(format!("step {step} evaluates different languages")));
        }
        let wl: WorkLangReport = parse(&d.join("worklang.json"))?;
        series.worklang.push(wl.defined.then(|| wl.proportions.clone()));
        series.worklang_counts.push(wl.counts);
        series.identifier_positions.push(wl.identifier_positions);
        let sel: NeuronSelection = parse(&d.join("selection.json"))?;
        series.neuron_counts.push(sel.counts);
        series.candidates.push(sel.candidates.len());
        series.thresholds.push(sel.threshold);
        series.transfer.push(parse(&d.join("transfer.json"))?);
    }
    Ok(series)
}

/// Centered width-`width` moving average over the defined entries; entries
/// that are undefined stay undefined. `None` if too few entries are defined.
pub fn smooth_defined(steps: &[u64], values: &[Option<f64>], width: usize) -> Option<Vec<Option<f64>>> {
    let pairs: Vec<(u64, f64)> = steps.iter().zip(values).filter_map(|(s, v)| v.map(|v| (*s, v))).collect();
    let smoothed = smooth_scores(&ScoreSeries::from_pairs(&pairs), width).ok()?;
    let mut it = smoothed.entries.into_iter();
    Some(values.iter().map(|v| v.and_then(|_| it.next().map(|e| e.score))).collect())
}

/// Mean of the defined values among the last `window` entries.
pub fn final_state(values: &[Option<f64>], window: usize) -> Option<f64> {
    let tail: Vec<f64> = values[values.len().saturating_sub(window)..].iter().flatten().copied().collect();
    (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmittedFile {
    pub file: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub budget: u64,
    /// Token share of the dominant language in the cell's mixture.
    pub dominant_share: f64,
    pub final_pass: Option<f64>,
    pub final_worklang_target: Option<f64>,
    pub final_worklang_dominant: Option<f64>,
    pub final_neurons_target: Option<f64>,
    pub final_neurons_dominant: Option<f64>,
    pub final_transfer: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub kind: ExperimentKind,
    pub elicit_language: LangId,
    pub probed_checkpoints: usize,
    /// Written files, relative to the run directory.
    pub files: Vec<String>,
    pub omitted: Vec<OmittedFile>,
    /// Stages of the elicited language's smoothed pass rate.
    pub stages: Option<StageBoundaries>,
    pub plan: Option<serde_json::Value>,
    pub estimator_r: Option<f64>,
    pub estimator_r_smoothed: Option<f64>,
    pub sweep: Vec<SweepPoint>,
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

struct Csv {
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    fn new(header: &[String]) -> Self {
        let mut c = Csv { writer: csv::Writer::from_writer(Vec::new()) };
        c.row(header);
        c
    }

    fn row(&mut self, cells: &[String]) {
        self.writer.write_record(cells).expect("writing to memory");
    }

    fn finish(self) -> String {
        String::from_utf8(self.writer.into_inner().expect("flushing to memory")).expect("utf-8 cells")
    }
}

/// Writes `report/*.csv` and `report/summary.json` for the run in `run_dir`.
pub fn report(run_dir: &Path) -> Result<ReportSummary, HarnessError> {
    let cfg = ExperimentConfig::from_toml(&read(&run_dir.join("config.toml"))?)
        .map_err(|e| HarnessError::Artifact(e.to_string()))?;
    let width = cfg.estimator.smoothing_width;
    let series = load_probe_series(run_dir)?;
    let elicit = elicit_language(&cfg);
    let mut out: Vec<(String, String)> = Vec::new();
    let mut omitted = Vec::new();
    let mut omit = |file: &str, reason: &str| omitted.push(OmittedFile { file: file.into(), reason: reason.into() });
    let steps = &series.steps;
    let col = |prefix: &str| series.languages.iter().map(|l| format!("{prefix}{l}")).collect::<Vec<_>>();
    let mut stages = None;

    if series.is_empty() {
        for f in ["performance_vs_step.csv", "transfer_vs_step.csv", "worklang_vs_step.csv", "neurons_vs_step.csv"] {
            omit(f, "no probed checkpoints");
        }
    } else {
        let defined = |v: &[f64]| v.iter().map(|x| Some(*x)).collect::<Vec<_>>();
        let smoothed_pass: BTreeMap<&LangId, Option<Vec<Option<f64>>>> =
            series.pass.iter().map(|(l, v)| (l, smooth_defined(steps, &defined(v), width))).collect();
        let mut header = vec!["step".to_string()];
        header.extend(col("pass_"));
        header.extend(col("parse_"));
        header.extend(col("smoothed_pass_"));
        let mut csv = Csv::new(&header);
        for (i, s) in steps.iter().enumerate() {
            let mut row = vec![s.to_string()];
            row.extend(series.languages.iter().map(|l| num(Some(series.pass[l][i]))));
            row.extend(series.languages.iter().map(|l| num(Some(series.parse[l][i]))));
            row.extend(series.languages.iter().map(|l| num(smoothed_pass[l].as_ref().and_then(|v| v[i]))));
            csv.row(&row);
        }
        out.push(("performance_vs_step.csv".into(), csv.finish()));
        if let Some(Some(sm)) = smoothed_pass.get(&elicit) {
            let v: Vec<f64> = sm.iter().map(|x| x.expect("pass rates are always defined")).collect();
            stages = detect_stages(steps, &v, cfg.estimator.stage_slope_fraction, cfg.estimator.stage_consecutive);
        }

        let transfer = series.transfer_proportions();
        let smoothed = smooth_defined(steps, &transfer, width);
        let mut csv = Csv::new(
            &["step", "knowledge_tasks", "solved", "knowledge_solved", "proportion", "smoothed_proportion"].map(String::from),
        );
        for (i, s) in steps.iter().enumerate() {
            let t = series.transfer[i].as_ref();
            csv.row(&[
                s.to_string(),
                t.map(|t| t.p_size.to_string()).unwrap_or_default(),
                t.map(|t| t.c_size.to_string()).unwrap_or_else(|| "0".into()),
                t.map(|t| t.intersection.to_string()).unwrap_or_default(),
                num(transfer[i]),
                num(smoothed.as_ref().and_then(|v| v[i])),
            ]);
        }
        out.push(("transfer_vs_step.csv".into(), csv.finish()));

        let wl_langs: Vec<LangId> = series.worklang_counts[0].keys().cloned().collect();
        let wl_smoothed: Vec<Option<Vec<Option<f64>>>> =
            wl_langs.iter().map(|l| smooth_defined(steps, &series.worklang_of(l), width)).collect();
        let mut header = vec!["step".to_string()];
        header.extend(wl_langs.iter().map(|l| format!("R_{l}")));
        header.extend(wl_langs.iter().map(|l| format!("smoothed_R_{l}")));
        header.extend(wl_langs.iter().map(|l| format!("count_{l}")));
        header.push("identifier_positions".into());
        let mut csv = Csv::new(&header);
        for (i, s) in steps.iter().enumerate() {
            let mut row = vec![s.to_string()];
            row.extend(wl_langs.iter().map(|l| num(series.worklang_of(l)[i])));
            row.extend(wl_smoothed.iter().map(|v| num(v.as_ref().and_then(|v| v[i]))));
            row.extend(wl_langs.iter().map(|l| series.worklang_counts[i][l].to_string()));
            row.push(series.identifier_positions[i].to_string());
            csv.row(&row);
        }
        out.push(("worklang_vs_step.csv".into(), csv.finish()));

        let n_langs: Vec<LangId> = series.neuron_counts[0].keys().cloned().collect();
        let n_smoothed: Vec<Option<Vec<Option<f64>>>> =
            n_langs.iter().map(|l| smooth_defined(steps, &series.neurons_of(l), width)).collect();
        let mut header = vec!["step".to_string()];
        header.extend(n_langs.iter().map(|l| format!("neurons_{l}")));
        header.extend(n_langs.iter().map(|l| format!("smoothed_neurons_{l}")));
        header.extend(["candidates".to_string(), "threshold".to_string()]);
        let mut csv = Csv::new(&header);
        for (i, s) in steps.iter().enumerate() {
            let mut row = vec![s.to_string()];
            row.extend(n_langs.iter().map(|l| series.neuron_counts[i][l].to_string()));
            row.extend(n_smoothed.iter().map(|v| num(v.as_ref().and_then(|v| v[i]))));
            row.push(series.candidates[i].to_string());
            row.push(num(Some(series.thresholds[i])));
            csv.row(&row);
        }
        out.push(("neurons_vs_step.csv".into(), csv.finish()));
    }

    let mut estimator_r = None;
    let mut estimator_r_smoothed = None;
    let comparison_path = run_dir.join("comparison.json");
    if comparison_path.exists() {
        let c: ComparisonRecord = parse(&comparison_path)?;
        estimator_r = c.raw.map(|r| r.pearson_r);
        estimator_r_smoothed = c.smoothed.map(|r| r.pearson_r);
        let mut csv = Csv::new(&["step", "loss", "loss_based", "worklang_based"].map(String::from));
        for p in &c.points {
            csv.row(&[p.step.to_string(), num(Some(p.loss)), num(Some(p.loss_based)), num(Some(p.worklang_based))]);
        }
        out.push(("proportion_vs_step.csv".into(), csv.finish()));
    } else {
        omit("proportion_vs_step.csv", "no estimator output in this run");
    }

    let plan_path = run_dir.join("plan.json");
    let plan = if plan_path.exists() { Some(parse::<serde_json::Value>(&plan_path)?) } else { None };

    let mut sweep_points = Vec::new();
    let sweep_path = run_dir.join("sweep.json");
    if sweep_path.exists() {
        let sweep: SweepRecord = parse(&sweep_path)?;
        let (dom, target) = (&sweep.dominant_language, &sweep.target_language);
        let mut csv = Csv::new(
            &[
                "budget",
                "dominant_tokens",
                "dominant_share",
                "final_pass",
                "final_R_target",
                "final_R_dominant",
                "final_neurons_target",
                "final_neurons_dominant",
                "final_transfer",
            ]
            .map(String::from),
        );
        for cell in &sweep.cells {
            let cdir = run_dir.join(&cell.dir);
            let ccfg = ExperimentConfig::from_toml(&read(&cdir.join("config.toml"))?)
                .map_err(|e| HarnessError::Artifact(e.to_string()))?;
            let share = system_proportion_from_mixture(ccfg.mixture.as_ref().expect("cell mixture"), dom)?.value;
            let s = load_probe_series(&cdir)?;
            let pass: Vec<Option<f64>> = s.pass_rates(target).unwrap_or_default().into_iter().map(Some).collect();
            let point = SweepPoint {
                budget: cell.budget,
                dominant_share: share,
                final_pass: final_state(&pass, width),
                final_worklang_target: final_state(&s.worklang_of(target), width),
                final_worklang_dominant: final_state(&s.worklang_of(dom), width),
                final_neurons_target: final_state(&s.neurons_of(target), width),
                final_neurons_dominant: final_state(&s.neurons_of(dom), width),
                final_transfer: final_state(&s.transfer_proportions(), width),
            };
            csv.row(&[
                point.budget.to_string(),
                sweep.dominant_tokens.to_string(),
                num(Some(point.dominant_share)),
                num(point.final_pass),
                num(point.final_worklang_target),
                num(point.final_worklang_dominant),
                num(point.final_neurons_target),
                num(point.final_neurons_dominant),
                num(point.final_transfer),
            ]);
            sweep_points.push(point);
        }
        out.push(("sweep_final_state.csv".into(), csv.finish()));
        match sweep.reference_run.as_ref().map(|p| if p.is_relative() && !p.exists() { run_dir.join(p) } else { p.clone() }) {
            Some(reference) => {
                let curve = predicted_curve(&reference)?;
                let mut csv = Csv::new(&["source", "step", "budget", "dominant_share", "performance", "predicted"].map(String::from));
                for (step, share, perf) in &curve {
                    csv.row(&["predicted".into(), step.to_string(), String::new(), num(Some(*share)), num(Some(*perf)), String::new()]);
                }
                for p in &sweep_points {
                    csv.row(&[
                        "actual".into(),
                        String::new(),
                        p.budget.to_string(),
                        num(Some(p.dominant_share)),
                        num(p.final_pass),
                        num(interpolate(&curve, p.dominant_share)),
                    ]);
                }
                out.push(("predicted_vs_actual.csv".into(), csv.finish()));
            }
            None => omit("predicted_vs_actual.csv", "sweep has no reference run"),
        }
    } else if cfg.kind == ExperimentKind::MixtureSweep {
        omit("sweep_final_state.csv", "sweep record missing");
    }

    let mut files = Vec::new();
    for (name, text) in &out {
        let rel = format!("report/{name}");
        let p = run_dir.join(&rel);
        write_atomic(&p, text.as_bytes()).map_err(|e| HarnessError::io(&p, e))?;
        files.push(rel);
    }
    files.push("report/summary.json".into());
    let summary = ReportSummary {
        kind: cfg.kind,
        elicit_language: elicit,
        probed_checkpoints: series.len(),
        files,
        omitted,
        stages,
        plan,
        estimator_r,
        estimator_r_smoothed,
        sweep: sweep_points,
    };
    let p = run_dir.join("report/summary.json");
    write_atomic(&p, &serde_json::to_vec_pretty(&summary).expect("summary serializes")).map_err(|e| HarnessError::io(&p, e))?;
    Ok(summary)
}

/// `(step, loss-based dominant proportion, smoothed target score)` at every
/// probed checkpoint of a completed continual run.
pub fn predicted_curve(run_dir: &Path) -> Result<Vec<(u64, f64, f64)>, HarnessError> {
    let cfg = ExperimentConfig::from_toml(&read(&run_dir.join("config.toml"))?)
        .map_err(|e| HarnessError::Artifact(e.to_string()))?;
    let trace = LossTrace::from_jsonl(&read(&run_dir.join("trace.jsonl"))?)?;
    let scores = ScoreSeries::from_jsonl(&read(&run_dir.join("scores.jsonl"))?)?;
    let anchors = loss_anchors(&trace, cfg.estimator.init_window)?;
    let smoothed = smooth_scores(&scores, cfg.estimator.smoothing_width)?;
    let mut curve = Vec::new();
    for e in smoothed.entries {
        let loss = trace.loss_at(e.step).ok_or(crate::estimator::EstimatorError::MissingStep(e.step))?;
        curve.push((e.step, system_proportion_from_loss(loss, &anchors).value, e.score));
    }
    Ok(curve)
}

/// Performance the curve assigns to proportion `x`: linear between the two
/// nearest curve points by proportion, flat beyond the ends.
pub fn interpolate(curve: &[(u64, f64, f64)], x: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|(_, p, s)| (*p, *s)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| {
        // Average duplicate proportions so the curve is a function.
        if a.0 == b.0 {
            b.1 = (a.1 + b.1) / 2.0;
            true
        } else {
            false
        }
    });
    let (first, last) = (pts.first()?, pts.last()?);
    if x <= first.0 {
        return Some(first.1);
    }
    if x >= last.0 {
        return Some(last.1);
    }
    let i = pts.iter().position(|p| p.0 >= x)?;
    let (a, b) = (pts[i - 1], pts[i]);
    Some(a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_skips_undefined() {
        let steps = [1, 2, 3, 4];
        let v = [Some(1.0), None, Some(3.0), Some(5.0)];
        let s = smooth_defined(&steps, &v, 3).unwrap();
        assert_eq!(s, vec![Some(2.0), None, Some(3.0), Some(4.0)]);
        assert!(smooth_defined(&steps, &v, 5).is_none());
    }

    #[test]
    fn final_state_uses_trailing_window() {
        let v = [Some(9.0), Some(1.0), None, Some(3.0)];
        assert_eq!(final_state(&v, 3), Some(2.0));
        assert_eq!(final_state(&[None, None], 5), None);
    }

    #[test]
    fn interpolation() {
        let curve = [(1, 1.0, 0.2), (2, 0.5, 0.6), (3, 0.0, 0.4)];
        assert_eq!(interpolate(&curve, 0.25), Some(0.5));
        assert_eq!(interpolate(&curve, 0.75), Some(0.4));
        assert_eq!(interpolate(&curve, 2.0), Some(0.2));
        assert_eq!(interpolate(&[], 0.5), None);
    }
}
