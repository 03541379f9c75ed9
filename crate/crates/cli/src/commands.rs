use anyhow::{bail, Context, Result};
use fdr_threshold::asymptotics::{check_conditions, clt_limit_with, tau_star, BridgeScaling};
use fdr_threshold::fixedpoint::{iterate, power_compare, MapFamily};
use fdr_threshold::simulation::{run_study, SimConfig};
use fdr_threshold::{Error, LabeledSample, MixtureModel, ProcedureSpec};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

/// What a command produced: the JSON results, flat rows for CSV, and
/// optional extra CSV tables written next to the main output.
pub struct Produced {
    pub results: Value,
    pub rows: Vec<Value>,
    pub extra_tables: Vec<(&'static str, Vec<Value>)>,
    /// Some row hit a mathematical precondition failure.
    pub precondition_failed: bool,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn status(e: &Error) -> &'static str {
    match e {
        Error::Criticality { .. } => "criticality",
        Error::Ambiguity(_) => "ambiguity",
        Error::DegenerateLevel(_) => "degenerate-level",
        Error::OracleInconclusive(_) => "oracle-inconclusive",
        Error::Premise(_) => "premise",
        _ => "error",
    }
}

fn analyze_row(model: &MixtureModel, spec: &ProcedureSpec, scaling: BridgeScaling) -> Result<(Value, bool)> {
    let spec = spec.resolved_for(model.pi0())?;
    let conditions = check_conditions(model, &spec);
    let mut row = json!({
        "procedure": spec.label(),
        "name": spec.name().as_str(),
        "alpha": spec.alpha(),
        "lambda": spec.lambda(),
        "pi0": spec.pi0(),
        "status": "ok",
        "tau_star": null,
        "pfdr_star": null,
        "pfdr_ratio": null,
        "fdp_sd": null,
        "threshold_sd": null,
        "coupling": null,
        "conditions_hold": conditions.all_hold(),
        "conditions": to_value(&conditions)?,
        "error": null,
    });
    let mut failed = false;
    let mut fail = |row: &mut Value, e: &Error| {
        failed |= e.is_precondition_failure();
        row["status"] = json!(status(e));
        row["error"] = json!(e.to_string());
    };
    match tau_star(model, &spec) {
        Ok(c) => {
            let p = model.pfdr(c.t)?;
            row["tau_star"] = json!(c.t);
            row["pfdr_star"] = json!(p);
            row["pfdr_ratio"] = json!(p / (model.pi0() * spec.alpha()));
            match clt_limit_with(model, &spec, scaling) {
                Ok(lim) => {
                    row["fdp_sd"] = json!(lim.fdp_sd);
                    row["threshold_sd"] = json!(lim.threshold_sd);
                    row["coupling"] = json!(lim.coupling.map(|k| k.selected.formula()));
                }
                Err(e) => fail(&mut row, &e),
            }
        }
        Err(e) => fail(&mut row, &e),
    }
    if !failed && row["status"] != "ok" {
        bail!("{}: {}", spec.label(), row["error"]);
    }
    Ok((row, failed))
}

pub fn analyze(cfg: &RunConfig) -> Result<Produced> {
    let model = cfg.model()?;
    let mut rows = Vec::new();
    let mut failed = false;
    for spec in cfg.procedures()? {
        let (row, f) = analyze_row(&model, spec, cfg.scaling)?;
        failed |= f;
        rows.push(row);
    }
    Ok(Produced {
        results: Value::Array(rows.clone()),
        rows,
        extra_tables: Vec::new(),
        precondition_failed: failed,
    })
}

pub fn apply(cfg: &RunConfig, sample: &LabeledSample, need_fdp: bool) -> Result<Produced> {
    if need_fdp && !sample.is_labeled() {
        bail!("FDP requested but the sample has no is_null column");
    }
    let mut rows = Vec::new();
    let mut failed = false;
    for spec in cfg.procedures()? {
        let spec = match cfg.model {
            Some(m) => spec.resolved_for(m.pi0())?,
            None => *spec,
        };
        let row = match spec.apply(sample) {
            Ok(r) => json!({
                "procedure": spec.label(),
                "status": "ok",
                "level_used": r.level_used,
                "threshold": r.threshold,
                "num_rejected": r.num_rejected,
                "num_false": r.num_false,
                "fdp": r.fdp,
                "fnp": r.fnp,
                "rejected": r.rejected,
                "error": null,
            }),
            Err(e) if e.is_precondition_failure() => {
                failed = true;
                json!({
                    "procedure": spec.label(),
                    "status": status(&e),
                    "level_used": null,
                    "threshold": null,
                    "num_rejected": null,
                    "num_false": null,
                    "fdp": null,
                    "fnp": null,
                    "rejected": null,
                    "error": e.to_string(),
                })
            }
            Err(e) => return Err(e).with_context(|| spec.label()),
        };
        rows.push(row);
    }
    Ok(Produced {
        results: Value::Array(rows.clone()),
        rows,
        extra_tables: Vec::new(),
        precondition_failed: failed,
    })
}

pub fn simulate(cfg: &RunConfig, keep_raw: bool, workers: usize) -> Result<Produced> {
    let params = cfg.simulation.as_ref().context("this command needs a `simulation` block")?;
    let mut sim = SimConfig::new(cfg.model()?, cfg.procedures()?.to_vec(), params.m_values.clone(), params.replicates, params.seed);
    sim.fixed_thresholds = params.fixed_thresholds.clone();
    sim.keep_raw = keep_raw;
    let summary = run_study(&sim, workers)?;
    let cells: Vec<Value> = summary.cells.iter().map(to_value).collect::<Result<_>>()?;
    let fixed: Vec<Value> = summary.fixed_threshold_checks.iter().map(to_value).collect::<Result<_>>()?;
    let raw: Option<Vec<Value>> = summary
        .raw
        .as_ref()
        .map(|r| r.iter().map(to_value).collect::<Result<_>>())
        .transpose()?;
    let mut results = json!({ "cells": cells, "fixed_threshold_checks": fixed });
    let mut extra_tables = Vec::new();
    if !fixed.is_empty() {
        extra_tables.push(("fixed", fixed));
    }
    if let Some(raw) = raw {
        results["raw"] = Value::Array(raw.clone());
        extra_tables.push(("raw", raw));
    }
    Ok(Produced {
        results,
        rows: cells,
        extra_tables,
        precondition_failed: false,
    })
}

pub fn iterate_cmd(cfg: &RunConfig) -> Result<Produced> {
    let model = cfg.model()?;
    let p = cfg.iterate.as_ref().context("this command needs an `iterate` block")?;
    let t0 = match (p.t0, p.lambda) {
        (Some(t), _) => t,
        (None, Some(l)) => p.family.canonical_t0(&model, l)?,
        (None, None) if p.family == MapFamily::Sto02ToFdr08 => bail!("iterate needs `t0` or `lambda`"),
        (None, None) => bail!("bky06-to-br08 needs `lambda`"),
    };
    let trace = iterate(&model, p.family, t0, p.alpha, p.lambda, p.tol, p.max_iter)?;
    let rows = trace
        .sequence
        .iter()
        .zip(&trace.residuals)
        .enumerate()
        .map(|(n, (t, r))| json!({"n": n, "t_n": t, "residual": r}))
        .collect();
    Ok(Produced {
        results: to_value(&trace)?,
        rows,
        extra_tables: Vec::new(),
        precondition_failed: false,
    })
}

pub fn compare(cfg: &RunConfig) -> Result<Produced> {
    let model = cfg.model()?;
    let specs: Vec<ProcedureSpec> = cfg
        .procedures()?
        .iter()
        .map(|s| s.resolved_for(model.pi0()))
        .collect::<fdr_threshold::Result<_>>()?;
    if specs.len() < 2 {
        bail!("compare needs at least two procedures");
    }
    let mut rows = Vec::new();
    let mut failed = false;
    for i in 0..specs.len() {
        for j in i + 1..specs.len() {
            let row = match power_compare(&model, &specs[i], &specs[j]) {
                Ok(c) => json!({
                    "first": c.first,
                    "second": c.second,
                    "status": "ok",
                    "tau_first": c.tau_first,
                    "tau_second": c.tau_second,
                    "pfdr_first": c.pfdr_first,
                    "pfdr_second": c.pfdr_second,
                    "verdict": to_value(&c.verdict)?,
                    "pfdr_verdict": to_value(&c.pfdr_verdict)?,
                    "consistent": c.consistent(),
                    "criteria": to_value(&c.criteria)?,
                    "error": null,
                }),
                Err(e) if e.is_precondition_failure() => {
                    failed = true;
                    json!({
                        "first": specs[i].label(),
                        "second": specs[j].label(),
                        "status": status(&e),
                        "tau_first": null,
                        "tau_second": null,
                        "pfdr_first": null,
                        "pfdr_second": null,
                        "verdict": null,
                        "pfdr_verdict": null,
                        "consistent": null,
                        "criteria": null,
                        "error": e.to_string(),
                    })
                }
                Err(e) => return Err(e.into()),
            };
            rows.push(row);
        }
    }
    Ok(Produced {
        results: Value::Array(rows.clone()),
        rows,
        extra_tables: Vec::new(),
        precondition_failed: failed,
    })
}
