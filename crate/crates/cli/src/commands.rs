use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use lhv_forge_core::inequalities::ch_critical;
use lhv_forge_core::models::{self, SettingsGrid};
use lhv_forge_core::montecarlo::{self, CountsTable, ModelSampler, QuantumSampler};
use lhv_forge_core::optimizer::{self, curve_csv, CurveKind, SweepSteps};
use lhv_forge_core::quantum::{self, Channel, Setting, Side};
use lhv_forge_core::sample_space::{efficiencies, SymmetricModel};
use lhv_forge_core::stats::{self, ChiSquareOptions, CountBasis, SigmaMode, DEFAULT_ALPHA};
use lhv_forge_core::{EntangledState, Family, LhvError, LhvModel, ModelDescriptor, Padding};
use serde_json::{json, Value};

use crate::config::{parse_range, read_file, write_file, CliResult, Resolver};
use crate::{Cli, Command, ModelCommand};

pub const SEED_ENV: &str = "LHV_FORGE_SEED";

pub fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = Resolver::from_path(cli.config.as_deref())?;
    match &cli.command {
        Command::Model(ModelCommand::Build(a)) => model_build(&mut cfg, a, out),
        Command::Model(ModelCommand::Eval(a)) => model_eval(&mut cfg, a, out),
        Command::Efficiency(a) => efficiency(&mut cfg, a, out),
        Command::CheckOptimal(a) => check_optimal(&mut cfg, a, out),
        Command::Sweep(a) => sweep(&mut cfg, a, out),
        Command::Optimize(a) => optimize(&mut cfg, a, out),
        Command::Simulate(a) => simulate(&mut cfg, a, out),
        Command::Chisq(a) => chisq(&mut cfg, a, out),
    }
}

fn metadata(command: &str, cfg: &Resolver) -> Value {
    let seed = cfg.resolved().get("seed").cloned().unwrap_or(Value::Null);
    json!({
        "tool": "lhv-forge",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": cfg.resolved(),
        "seed": seed,
    })
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write_file(p, text),
        None => out.write_all(text.as_bytes()).map_err(|e| LhvError::domain(format!("cannot write output: {e}"))),
    }
}

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| LhvError::domain(format!("missing required --{flag}")))
}

fn state_json(s: EntangledState) -> Value {
    serde_json::to_value(s).expect("state serializes")
}

/// Descriptor from a model file: either the output of `model build` or a bare descriptor.
fn load_descriptor(path: &Path) -> CliResult<ModelDescriptor> {
    let text = read_file(path)?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| LhvError::domain(format!("model file {}: {e}", path.display())))?;
    let d = match v.get("descriptor") {
        Some(d) => d.clone(),
        None => v,
    };
    let d: ModelDescriptor = serde_json::from_value(d)
        .map_err(|e| LhvError::domain(format!("model file {}: invalid descriptor: {e}", path.display())))?;
    d.validate()?;
    Ok(d)
}

fn load_model(cfg: &mut Resolver, flag: Option<std::path::PathBuf>) -> CliResult<(ModelDescriptor, LhvModel)> {
    let path = required(cfg.path("model", flag)?, "model")?;
    let d = load_descriptor(&path)?;
    let m = models::build(&d)?;
    Ok((d, m))
}

fn model_summary(d: &ModelDescriptor, m: &LhvModel) -> CliResult<Value> {
    let e = m.efficiencies()?;
    let mut v = json!({
        "S": m.total_area(),
        "efficiencies": e,
        "state": state_json(m.state()),
    });
    if let Some(s1) = m.s1() {
        v["S1"] = json!(s1);
    }
    if let Some(p) = m.phi2_area() {
        v["phi2_area"] = json!(p);
    }
    if let (Some(a), Some(b)) = (m.a_settings(), m.b_settings()) {
        v["a_settings"] = json!(a);
        v["b_settings"] = json!(b);
    }
    if d.padding != Padding::None {
        let sm = models::build_symmetric(d)?;
        v["padded"] = json!({
            "padded_area": sm.padded_height_area,
            "coincidence_efficiency": sm.coincidence_efficiency(),
            "singles_efficiency": sm.singles_efficiency(),
        });
    }
    Ok(v)
}

fn model_build(cfg: &mut Resolver, a: &crate::BuildArgs, out: &mut dyn Write) -> CliResult<()> {
    let family = Family::parse(&required(cfg.string("family", a.family.clone())?, "family")?)?;
    let mut d = ModelDescriptor::new(family);
    d.r = cfg.f64("r", a.r.clone())?;
    let (sa, sb) = (cfg.f64_list("a-settings", a.a_settings.clone())?, cfg.f64_list("b-settings", a.b_settings.clone())?);
    if family == Family::Finite {
        d.a_settings = Some(required(sa, "a-settings")?);
        d.b_settings = Some(required(sb, "b-settings")?);
    } else if sa.is_some() || sb.is_some() {
        return Err(LhvError::domain(format!("family {} takes no setting lists", family.name())));
    }
    if let Some(p) = cfg.string("padding", a.padding.clone())? {
        d.padding = serde_json::from_value(Value::String(p.clone()))
            .map_err(|_| LhvError::domain(format!("unknown padding `{p}` (none, symmetric, independent)")))?;
    }
    if let Some(n) = cfg.u64("resolution", a.resolution)? {
        d.grid_resolution = n as usize;
    }
    d.height_offset = cfg.f64("height-offset", a.height_offset.clone())?;
    let out_path = cfg.output_path("out", a.out.clone())?;
    let m = models::build(&d)?;
    let doc = json!({
        "metadata": metadata("model build", cfg),
        "descriptor": d,
        "summary": model_summary(&d, &m)?,
    });
    emit(out, out_path.as_deref(), &pretty(&doc))
}

fn jdp_json(j: [[f64; 2]; 2]) -> Value {
    json!({"++": j[0][0], "+-": j[0][1], "-+": j[1][0], "--": j[1][1]})
}

fn model_eval(cfg: &mut Resolver, a: &crate::EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    let (d, m) = load_model(cfg, a.model.clone())?;
    let sa = required(cfg.f64("a", a.a.clone())?, "a")?;
    let sb = required(cfg.f64("b", a.b.clone())?, "b")?;
    let j = m.eval_jdp(Setting(sa), Setting(sb))?;
    let mut q = [[0.0; 2]; 2];
    for x in Channel::BOTH {
        for y in Channel::BOTH {
            q[x.index()][y.index()] = quantum::jdp(m.state(), Setting(sa), Setting(sb), x, y);
        }
    }
    let mut doc = json!({
        "metadata": metadata("model eval", cfg),
        "S": m.total_area(),
        "jdp": jdp_json(j),
        "sdp_a": m.eval_sdp(Setting(sa), Side::A)?,
        "sdp_b": m.eval_sdp(Setting(sb), Side::B)?,
        "quantum_jdp": jdp_json(q),
    });
    if d.padding != Padding::None {
        let sm = models::build_symmetric(&d)?;
        doc["padded_jdp"] = jdp_json(sm.jdp(Setting(sa), Setting(sb))?);
    }
    emit(out, None, &pretty(&doc))
}

fn efficiency(cfg: &mut Resolver, a: &crate::EfficiencyArgs, out: &mut dyn Write) -> CliResult<()> {
    let s = cfg.f64("s", a.s.clone())?;
    let doc = match s {
        Some(s) => json!({"metadata": metadata("efficiency", cfg), "efficiencies": efficiencies(s)?}),
        None => {
            let (d, m) = load_model(cfg, a.model.clone())?;
            json!({
                "metadata": metadata("efficiency", cfg),
                "family": d.family,
                "efficiencies": m.efficiencies()?,
            })
        }
    };
    emit(out, None, &pretty(&doc))
}

fn check_optimal(cfg: &mut Resolver, a: &crate::ModelPathArgs, out: &mut dyn Write) -> CliResult<()> {
    let (_, m) = load_model(cfg, a.model.clone())?;
    let o = m.check_optimal()?;
    let witness = o.witness.map(|(angle, ch)| json!({"a": angle, "channel": ch.to_string()}));
    let doc = json!({
        "metadata": metadata("check-optimal", cfg),
        "optimal": o.optimal,
        "witness": witness,
        "best_gap": o.best_gap,
    });
    emit(out, None, &pretty(&doc))
}

fn steps(cfg: &mut Resolver, a: &crate::SweepArgs) -> CliResult<SweepSteps> {
    let mut s = SweepSteps::default();
    if let Some(x) = cfg.f64("ch-step", a.ch_step.clone())? {
        s.ch = x;
    }
    if let Some(x) = cfg.f64("step-2x2", a.step_2x2.clone())? {
        s.lhv2x2 = x;
    }
    if let Some(x) = cfg.f64("step-3x3", a.step_3x3.clone())? {
        s.lhv3x3 = x;
    }
    Ok(s)
}

fn sweep(cfg: &mut Resolver, a: &crate::SweepArgs, out: &mut dyn Write) -> CliResult<()> {
    let kinds_s = required(cfg.string("kinds", a.kinds.clone())?, "kinds")?;
    let kinds: Vec<CurveKind> =
        kinds_s.split(',').filter(|k| !k.trim().is_empty()).map(|k| CurveKind::parse(k.trim())).collect::<CliResult<_>>()?;
    if kinds.is_empty() {
        return Err(LhvError::domain("--kinds needs at least one curve kind"));
    }
    let range = required(cfg.string("r", a.r.clone())?, "r")?;
    let rs = parse_range(&range)?;
    if rs.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(LhvError::domain(format!("r range {range} leaves (0, 1]")));
    }
    let st = steps(cfg, a)?;
    let out_dir = cfg.output_path("out-dir", a.out_dir.clone())?;
    let curves = optimizer::sweep_with(&rs, &kinds, st)?;
    let mut notes = Vec::new();
    if kinds.contains(&CurveKind::Lhv3x3) && st.lhv3x3 < PI / 32.0 - 1e-12 {
        notes.push("3x3 coarse step finer than pi/32 exceeds the intended search budget");
    }
    match out_dir {
        Some(dir) => {
            for c in &curves {
                write_file(&dir.join(format!("{}.csv", c.curve_kind.name())), &curve_csv(c))?;
            }
            let meta = json!({"metadata": metadata("sweep", cfg), "notes": notes});
            write_file(&dir.join("sweep.meta.json"), &pretty(&meta))?;
            Ok(())
        }
        None => {
            let text: String = curves.iter().map(curve_csv).collect();
            emit(out, None, &text)
        }
    }
}

fn optimize(cfg: &mut Resolver, a: &crate::OptimizeArgs, out: &mut dyn Write) -> CliResult<()> {
    let kind = CurveKind::parse(&required(cfg.string("kind", a.kind.clone())?, "kind")?)?;
    let r = required(cfg.f64("r", a.r.clone())?, "r")?;
    let step = cfg.f64("step", a.step.clone())?;
    let out_path = cfg.output_path("out", a.out.clone())?;
    let result = match kind {
        CurveKind::Lhv2x2 => serde_json::to_value(optimizer::search_2x2(r, step.unwrap_or(PI / 200.0))?),
        CurveKind::Lhv3x3 => serde_json::to_value(optimizer::search_3x3(r, step.unwrap_or(PI / 32.0))?),
        CurveKind::Ch => serde_json::to_value(ch_critical(r, step.unwrap_or(PI / 200.0))?),
        CurveKind::Nxn => return Err(LhvError::domain("optimize takes lhv2x2, lhv3x3 or ch; use sweep for nxn")),
    }
    .expect("search results serialize");
    let doc = json!({"metadata": metadata("optimize", cfg), "result": result});
    emit(out, out_path.as_deref(), &pretty(&doc))
}

fn schedule_for(cfg: &mut Resolver, m: Option<&LhvModel>, a: Option<String>, b: Option<String>) -> CliResult<SettingsGrid> {
    let (sa, sb) = (cfg.f64_list("a-settings", a)?, cfg.f64_list("b-settings", b)?);
    let g = match (sa, sb, m.and_then(|m| m.a_settings()), m.and_then(|m| m.b_settings())) {
        (Some(x), Some(y), _, _) => SettingsGrid::new(x, y)?,
        (None, None, Some(x), Some(y)) => SettingsGrid::new(x.to_vec(), y.to_vec())?,
        (None, None, _, _) => SettingsGrid::chsh(),
        _ => return Err(LhvError::domain("give both --a-settings and --b-settings or neither")),
    };
    cfg.record("a-settings", g.a_list.clone());
    cfg.record("b-settings", g.b_list.clone());
    Ok(g)
}

fn resolve_seed(cfg: &mut Resolver, flag: Option<u64>) -> CliResult<u64> {
    if let Some(s) = cfg.u64("seed", flag)? {
        return Ok(s);
    }
    let seed = match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| LhvError::domain(format!("{SEED_ENV} must be an integer, got `{v}`")))?,
        Err(_) => 0,
    };
    cfg.record("seed", seed);
    Ok(seed)
}

fn simulate(cfg: &mut Resolver, a: &crate::SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let source = cfg.string("source", a.source.clone())?.unwrap_or_else(|| "lhv".into());
    // the quantum source needs only a state, taken from --r when no model is given
    let r = cfg.f64("r", a.r.clone())?;
    let model_path = cfg.path("model", a.model.clone())?;
    let loaded = if source == "quantum" && r.is_some() && model_path.is_none() {
        None
    } else {
        let d = load_descriptor(&required(model_path, "model")?)?;
        let m = models::build(&d)?;
        Some((d, m))
    };
    let state = match (&loaded, r) {
        (Some((_, m)), None) => m.state(),
        (Some(_), Some(_)) => return Err(LhvError::domain("--r applies only to the quantum source without --model")),
        (None, Some(r)) => EntangledState::non_maximal(r)?,
        (None, None) => unreachable!("a model is loaded whenever --r is absent"),
    };
    let schedule = schedule_for(cfg, loaded.as_ref().map(|(_, m)| m), a.a_settings.clone(), a.b_settings.clone())?;
    let n = required(cfg.u64("n", a.n)?, "n")? as usize;
    let seed = resolve_seed(cfg, a.seed)?;
    let out_path = cfg.output_path("out", a.out.clone())?;
    let trials_path = cfg.output_path("trials", a.trials.clone())?;
    let (counts, records, eta) = match source.as_str() {
        "lhv" => {
            let (d, _) = loaded.as_ref().expect("lhv source always loads a model");
            let sm: SymmetricModel = models::build_symmetric(d)?;
            let sampler = ModelSampler::new(&sm, &schedule)?;
            let eta = sm.singles_efficiency();
            if trials_path.is_some() {
                let t = montecarlo::generate(&sampler, n, seed);
                (montecarlo::tabulate(&t, schedule.na(), schedule.nb()), Some(t), eta)
            } else {
                (montecarlo::count(&sampler, n, seed), None, eta)
            }
        }
        "quantum" => {
            let eta = required(cfg.f64("eta", a.eta.clone())?, "eta")?;
            let sampler = QuantumSampler::new(state, &schedule, eta)?;
            if trials_path.is_some() {
                let t = montecarlo::generate(&sampler, n, seed);
                (montecarlo::tabulate(&t, schedule.na(), schedule.nb()), Some(t), eta)
            } else {
                (montecarlo::count(&sampler, n, seed), None, eta)
            }
        }
        other => return Err(LhvError::domain(format!("unknown source `{other}` (lhv, quantum)"))),
    };
    if let (Some(p), Some(t)) = (&trials_path, &records) {
        write_file(p, &montecarlo::trials_csv(t))?;
    }
    let doc = json!({
        "metadata": metadata("simulate", cfg),
        "state": state_json(state),
        "schedule": schedule,
        "eta": eta,
        "counts": counts,
    });
    emit(out, out_path.as_deref(), &pretty(&doc))
}

fn chisq(cfg: &mut Resolver, a: &crate::ChisqArgs, out: &mut dyn Write) -> CliResult<()> {
    let path = required(cfg.path("counts", a.counts.clone())?, "counts")?;
    let text = read_file(&path)?;
    let v: Value =
        serde_json::from_str(&text).map_err(|e| LhvError::domain(format!("counts file {}: {e}", path.display())))?;
    let (counts_v, recorded) = match v.get("counts") {
        Some(c) => (c.clone(), Some(&v)),
        None => (v.clone(), None),
    };
    let counts = CountsTable::from_json(&counts_v.to_string())?;
    let state = match cfg.f64("r", a.r.clone())? {
        Some(r) => EntangledState::non_maximal(r)?,
        None => match recorded.and_then(|r| r.get("state")) {
            Some(s) => serde_json::from_value(s.clone()).map_err(|e| LhvError::domain(format!("recorded state: {e}")))?,
            None => return Err(LhvError::domain("missing required --r (no state recorded in the counts file)")),
        },
    };
    let (sa, sb) = (cfg.f64_list("a-settings", a.a_settings.clone())?, cfg.f64_list("b-settings", a.b_settings.clone())?);
    let schedule = match (sa, sb, recorded.and_then(|r| r.get("schedule"))) {
        (Some(x), Some(y), _) => SettingsGrid::new(x, y)?,
        (None, None, Some(s)) => {
            serde_json::from_value(s.clone()).map_err(|e| LhvError::domain(format!("recorded schedule: {e}")))?
        }
        _ => return Err(LhvError::domain("give --a-settings and --b-settings (no schedule recorded in the counts file)")),
    };
    let eta = match cfg.f64("eta", a.eta.clone())? {
        Some(e) => e,
        None => recorded
            .and_then(|r| r.get("eta"))
            .and_then(Value::as_f64)
            .ok_or_else(|| LhvError::domain("missing required --eta"))?,
    };
    cfg.record("eta", eta);
    let sigma = match cfg.string("sigma", a.sigma.clone())?.as_deref() {
        None | Some("poisson") => SigmaMode::Poisson,
        Some(s) => SigmaMode::Constant(
            s.parse().map_err(|_| LhvError::domain(format!("--sigma must be `poisson` or a number, got `{s}`")))?,
        ),
    };
    let basis = match cfg.string("basis", a.basis.clone())?.as_deref() {
        None | Some("uniform") => CountBasis::Uniform,
        Some("conditioned") => CountBasis::Conditioned,
        Some(b) => return Err(LhvError::domain(format!("--basis must be uniform or conditioned, got `{b}`"))),
    };
    let alpha = cfg.f64("alpha", a.alpha.clone())?.unwrap_or(DEFAULT_ALPHA);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LhvError::domain("--alpha must lie in (0, 1)"));
    }
    let out_path = cfg.output_path("out", a.out.clone())?;
    let report = stats::chi_square(&counts, state, &schedule, eta, ChiSquareOptions { sigma, basis })?;
    let ns = stats::no_signaling(&counts);
    let line = format!("{}\n", report.verdict_line(alpha));
    out.write_all(line.as_bytes()).map_err(|e| LhvError::domain(format!("cannot write output: {e}")))?;
    let doc = json!({
        "metadata": metadata("chisq", cfg),
        "verdict": report.verdict(alpha),
        "alpha": alpha,
        "report": report,
        "no_signaling": ns,
    });
    emit(out, out_path.as_deref(), &pretty(&doc))
}
