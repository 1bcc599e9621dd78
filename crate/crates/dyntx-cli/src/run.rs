//! Command execution over a loaded config.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use dyntx_core::bounds::{bound_arsf, bound_joint_prob};
use dyntx_core::identify::{
    identify_arsf, identify_arsf_at, identify_arsf_traced, identify_joint_prob, Identified,
};
use dyntx_core::inference::{bootstrap, estimate};
use dyntx_core::model::{read_model, AssumptionReport};
use dyntx_core::population::{
    empirical_evaluator, exact_evaluator, mc_population_evaluator, PopulationEvaluator,
};
use dyntx_core::regimes::{monotone_regimes, rank_regimes, ObjectiveSpec, RankOptions};
use dyntx_core::simulate::oracle::{mc_regime_outcomes, quadrature_regime_outcomes, quadrature_transition};
use dyntx_core::simulate::simulate_panel;
use dyntx_core::tol::DEFAULT_QUAD_ORDER;
use dyntx_core::{PanelData, Regime, StructuralModel};

use crate::config::{BackendChoice, CommandKind, LoadedConfig};
use crate::CommonArgs;

/// Flag-resolved run context.
struct Ctx {
    cfg: LoadedConfig,
    kind: CommandKind,
    seed: u64,
    out: Option<PathBuf>,
    backend: Option<BackendChoice>,
    trace: bool,
}

impl Ctx {
    /// Provenance fields every JSON output carries.
    fn stamp(&self) -> Value {
        json!({
            "command": format!("{:?}", self.kind).to_lowercase(),
            "config_sha256": self.cfg.sha256,
            "seed": self.seed,
        })
    }

    fn emit(&self, mut body: Value) -> Result<()> {
        let stamp = self.stamp();
        for (k, v) in stamp.as_object().unwrap() {
            body[k] = v.clone();
        }
        let text = serde_json::to_string_pretty(&body)? + "\n";
        match &self.out {
            Some(path) => std::fs::write(path, text)
                .with_context(|| format!("writing {}", path.display()))?,
            None => print!("{text}"),
        }
        Ok(())
    }

    fn model(&self) -> Result<StructuralModel> {
        let path = self.cfg.model_path()?;
        read_model(&path).with_context(|| format!("loading model {}", path.display()))
    }

    fn panel(&self) -> Result<PanelData> {
        let path = self.cfg.data_path()?;
        PanelData::read_csv(&path).with_context(|| format!("loading panel {}", path.display()))
    }

    fn backend_kind(&self) -> BackendChoice {
        self.backend
            .or(self.cfg.run.backend.kind)
            .unwrap_or(if self.cfg.run.data.is_some() {
                BackendChoice::Empirical
            } else {
                BackendChoice::Exact
            })
    }

    fn build_eval(&self) -> Result<(Box<dyn PopulationEvaluator>, Value)> {
        let b = &self.cfg.run.backend;
        match self.backend_kind() {
            BackendChoice::Exact => {
                let order = b.quad_order.unwrap_or(DEFAULT_QUAD_ORDER);
                let eval = exact_evaluator(&self.model()?, order)?;
                Ok((Box::new(eval), json!({"kind": "exact", "quad_order": order})))
            }
            BackendChoice::Mc => {
                let draws = b.draws.unwrap_or(1_000_000);
                let seed = b.seed.unwrap_or(self.seed);
                let eval = mc_population_evaluator(&self.model()?, draws, seed)?;
                Ok((
                    Box::new(eval),
                    json!({"kind": "mc", "draws": draws, "seed": seed}),
                ))
            }
            BackendChoice::Empirical => {
                let eval = empirical_evaluator(&self.panel()?)?;
                Ok((Box::new(eval), json!({"kind": "empirical"})))
            }
        }
    }

    fn regimes(&self, horizon: usize) -> Result<Vec<Regime>> {
        let q = &self.cfg.run.query;
        if !q.regimes.is_empty() {
            return Ok(q.regimes.clone());
        }
        Ok(if q.monotone {
            monotone_regimes(horizon)
        } else {
            Regime::enumerate_full(horizon).collect()
        })
    }

    fn x(&self) -> &[usize] {
        &self.cfg.run.query.x
    }
}

pub fn run(kind: CommandKind, args: &CommonArgs) -> Result<i32> {
    let cfg = LoadedConfig::read(&args.config)?;
    if let Some(declared) = cfg.run.command {
        if declared != kind {
            bail!(
                "config declares command {declared:?} but {kind:?} was invoked; \
                 reconcile the config or the subcommand"
            );
        }
    }
    let ctx = Ctx {
        seed: args.seed.or(cfg.run.seed).unwrap_or(0),
        out: args.out.clone().or_else(|| cfg.run.out.clone()),
        backend: args.backend,
        trace: args.trace || cfg.run.trace,
        cfg,
        kind,
    };
    match kind {
        CommandKind::Validate => cmd_validate(&ctx),
        CommandKind::Simulate => cmd_simulate(&ctx),
        CommandKind::Oracle => cmd_oracle(&ctx),
        CommandKind::Identify => cmd_identify(&ctx),
        CommandKind::Bounds => cmd_bounds(&ctx),
        CommandKind::Optimize => cmd_optimize(&ctx),
        CommandKind::Estimate => cmd_estimate(&ctx),
    }
}

fn cmd_validate(ctx: &Ctx) -> Result<i32> {
    let model = ctx.model()?;
    let tol = ctx.cfg.run.tolerances;
    let report = AssumptionReport::for_model(&model, tol.relevance, tol.matching);
    let ok = report.ok;
    ctx.emit(json!({
        "ok": ok,
        "report": report,
        "tolerances": {"relevance": tol.relevance, "matching": tol.matching},
    }))?;
    Ok(if ok { 0 } else { 2 })
}

fn cmd_simulate(ctx: &Ctx) -> Result<i32> {
    let model = ctx.model()?;
    let n = ctx
        .cfg
        .run
        .sim
        .n
        .context("simulate needs `sim.n` in the config")?;
    let strata = ctx.cfg.run.sim.strata.unwrap_or(1);
    let panel = simulate_panel(&model, n, ctx.seed, strata)?;
    match &ctx.out {
        Some(path) => {
            panel.write_csv(path)?;
            // The CSV itself has a fixed schema; provenance goes to stdout.
            println!(
                "{}",
                serde_json::to_string(&json!({
                    "command": "simulate",
                    "config_sha256": ctx.cfg.sha256,
                    "seed": ctx.seed,
                    "n": n,
                    "out": path.display().to_string(),
                }))?
            );
        }
        None => print!("{}", panel.to_csv_string()),
    }
    Ok(0)
}

fn cmd_oracle(ctx: &Ctx) -> Result<i32> {
    let model = ctx.model()?;
    let q = &ctx.cfg.run.query;
    let regimes = ctx.regimes(model.t())?;
    let backend = ctx.backend_kind();
    let mut rows = Vec::new();
    for regime in &regimes {
        let row = match (q.period, q.y_prev) {
            (Some(period), Some(y_prev)) => {
                let v = quadrature_transition(
                    &model,
                    regime,
                    ctx.x(),
                    period,
                    y_prev,
                    ctx.cfg.run.backend.quad_order.unwrap_or(DEFAULT_QUAD_ORDER),
                )?;
                json!({"regime": regime, "transition": v, "period": period, "y_prev": y_prev})
            }
            _ => match backend {
                BackendChoice::Mc => {
                    let draws = ctx.cfg.run.backend.draws.unwrap_or(1_000_000);
                    let seed = ctx.cfg.run.backend.seed.unwrap_or(ctx.seed);
                    let vals = mc_regime_outcomes(&model, regime, ctx.x(), draws, seed)?;
                    json!({"regime": regime, "outcomes": vals})
                }
                _ => {
                    let order =
                        ctx.cfg.run.backend.quad_order.unwrap_or(DEFAULT_QUAD_ORDER);
                    let vals = quadrature_regime_outcomes(&model, regime, ctx.x(), order)?;
                    json!({"regime": regime, "outcomes": vals})
                }
            },
        };
        rows.push(row);
    }
    ctx.emit(json!({"x": ctx.x(), "values": rows}))?;
    Ok(0)
}

fn identify_one(
    eval: &dyn PopulationEvaluator,
    regime: &Regime,
    x: &[usize],
    y_constraints: &[(usize, bool)],
    period: Option<usize>,
    trace: bool,
) -> dyntx_core::Result<Identified> {
    if !y_constraints.is_empty() {
        identify_joint_prob(eval, regime, x, y_constraints)
    } else if let Some(t) = period {
        identify_arsf_at(eval, regime, x, t)
    } else if trace {
        identify_arsf_traced(eval, regime, x)
    } else {
        identify_arsf(eval, regime, x)
    }
}

fn cmd_identify(ctx: &Ctx) -> Result<i32> {
    let (eval, backend) = ctx.build_eval()?;
    let q = &ctx.cfg.run.query;
    let regimes = ctx.regimes(eval.horizon().get())?;
    let mut rows = Vec::new();
    for regime in &regimes {
        let id = identify_one(
            eval.as_ref(),
            regime,
            ctx.x(),
            &q.y_constraints,
            q.period,
            ctx.trace,
        )?;
        let mut row = serde_json::to_value(&id)?;
        row["regime"] = json!(regime);
        if !ctx.trace {
            row.as_object_mut().unwrap().remove("trace");
        }
        rows.push(row);
    }
    ctx.emit(json!({"backend": backend, "x": ctx.x(), "values": rows}))?;
    Ok(0)
}

fn cmd_bounds(ctx: &Ctx) -> Result<i32> {
    let (eval, backend) = ctx.build_eval()?;
    let q = &ctx.cfg.run.query;
    let regimes = ctx.regimes(eval.horizon().get())?;
    let mut rows = Vec::new();
    for regime in &regimes {
        let b = if q.y_constraints.is_empty() {
            bound_arsf(eval.as_ref(), regime, ctx.x())?
        } else {
            bound_joint_prob(eval.as_ref(), regime, ctx.x(), &q.y_constraints)?
        };
        rows.push(json!({
            "regime": b.regime,
            "x": b.x,
            "lo": b.interval.lo,
            "hi": b.interval.hi,
            "ledger": b.sites,
            "dropped_z": b.dropped_z,
        }));
    }
    ctx.emit(json!({"backend": backend, "values": rows}))?;
    Ok(0)
}

fn cmd_optimize(ctx: &Ctx) -> Result<i32> {
    let (eval, backend) = ctx.build_eval()?;
    let q = &ctx.cfg.run.query;
    let regimes = ctx.regimes(eval.horizon().get())?;
    let objective = q.objective.clone().unwrap_or_else(ObjectiveSpec::terminal_value);
    let opts = RankOptions {
        x: ctx.x().to_vec(),
        allow_bounds: true,
    };
    let strata: Vec<Option<u8>> = match q.stratum {
        Some(w0) => vec![Some(w0)],
        None => vec![None],
    };
    let mut rankings = Vec::new();
    for stratum in strata {
        let r = rank_regimes(eval.as_ref(), &objective, stratum, &regimes, &opts)?;
        rankings.push(json!({
            "stratum": r.stratum,
            "objective": r.objective,
            "table": r.entries,
            "argmax": r.argmax,
            "excluded": r.excluded,
            "status": r.status,
        }));
    }
    ctx.emit(json!({"backend": backend, "x": ctx.x(), "rankings": rankings}))?;
    Ok(0)
}

fn cmd_estimate(ctx: &Ctx) -> Result<i32> {
    let panel = ctx.panel()?;
    let q = &ctx.cfg.run.query;
    let spec = q
        .functional
        .clone()
        .context("estimate needs `query.functional` in the config")?;
    let boot = &ctx.cfg.run.bootstrap;
    let body = if boot.b == 0 {
        let point = estimate(&panel, &spec)?;
        json!({
            "functional": spec.to_string(),
            "estimate": point,
            "n": panel.n(),
        })
    } else {
        let res = bootstrap(
            &panel,
            &spec,
            boot.b,
            boot.seed.unwrap_or(ctx.seed),
            boot.alpha,
        )?;
        json!({
            "functional": res.functional,
            "estimate": res.estimate,
            "ci": [res.ci.0, res.ci.1],
            "alpha": res.alpha,
            "b": res.b,
            "failures": res.failures,
            "n": panel.n(),
        })
    };
    ctx.emit(body)?;
    Ok(0)
}
