use std::path::PathBuf;
use std::time::Instant;

use indiff::bachelier::BachelierParams;
use indiff::conjugacy::{Conjugate, DualPoint, SaddleOptions};
use indiff::engine::{sample_path, Engine, EngineOptions, StateRecord};
use indiff::field::Field;
use indiff::parallel::try_map_range;
use indiff::representative::representative_utility;
use indiff::strategy::{PositionRule, Strategy};
use indiff::verify::{self, RandomShape, Scenario, ScenarioSource, SuiteConfig, SuiteReport};
use indiff::{NodeId, WeightVector};
use serde_json::json;

use crate::config::{ExperimentConfig, Scheme, StrategyKind, OUTPUT_ENV};
use crate::output::{ensure_dir, indexed, num, nums, write_json, Table};
use crate::{load, Common, Failure};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn require_config(c: &Common) -> Result<ExperimentConfig, Failure> {
    match &c.config {
        Some(p) => load(Some(p)),
        None => Err(Failure::Config("--config is required for this subcommand".into())),
    }
}

fn state_header(m: usize, j: usize, id: &str) -> Vec<String> {
    let mut h: Vec<String> = vec![id.into(), "level".into(), "node_id".into(), "t".into()];
    h.extend(indexed("U", m));
    h.extend(indexed("W", m));
    h.push("X".into());
    h.push("V".into());
    h.extend(indexed("Q", j));
    h
}

fn state_row(id: usize, t: f64, s: &StateRecord) -> Vec<String> {
    let mut r = vec![id.to_string(), s.level.to_string(), s.node.0.to_string(), num(t)];
    r.extend(nums(&s.u));
    r.extend(nums(&s.w));
    r.push(num(s.x));
    r.push(num(s.v));
    r.extend(nums(&s.q));
    r
}

pub fn simulate(c: &Common) -> Result<(), Failure> {
    let started = Instant::now();
    let cfg = require_config(c)?;
    let panel = cfg.panel()?;
    let tree = cfg.tree(c.steps)?;
    let lambda0 = cfg.lambda0(panel.len())?;
    let strategy = cfg.strategy(&tree)?;
    let seed = c.seed.unwrap_or(cfg.engine.seed);
    let paths = c.paths.unwrap_or(cfg.engine.paths);
    let exec = cfg.engine.execution();
    let dir = cfg.output_dir(c.out.as_deref());
    ensure_dir(&dir)?;

    let field = Field::new(&panel, &tree);
    let conj = Conjugate::new(&field).with_options(SaddleOptions {
        tolerance: cfg.engine.saddle_tolerance,
        ..Default::default()
    });
    let eng = Engine::new(&conj).with_options(EngineOptions {
        exec,
        explode_factor: cfg.engine.explode_factor,
        max_regimes: cfg.engine.max_regimes,
    });
    let (m, j) = (panel.len(), tree.claims());

    let mut exploded_paths = 0;
    let file;
    match cfg.engine.scheme {
        Scheme::Euler => {
            let out = eng.simulate_sde(&strategy, &lambda0, paths, seed)?;
            file = "paths.csv";
            let mut h = state_header(m, j, "path_id");
            h.push("exploded".into());
            let mut t = Table::create(&dir.join(file), "paths", 1, &h)?;
            for p in &out {
                if p.explosion.exploded {
                    exploded_paths += 1;
                }
                for s in &p.states {
                    let flag = p.explosion.level.is_some_and(|l| s.level >= l);
                    let mut r = state_row(p.id, tree.time(s.node), s);
                    r.push(u8::from(flag).to_string());
                    t.row(&r)?;
                }
            }
            t.finish()?;
        }
        Scheme::Forward => {
            let Strategy::Simple(simple) = &strategy else {
                return Err(Failure::Config(
                    "engine.scheme = \"forward\" needs a simple strategy (kind = \"simple\" or a rule with dates)"
                        .into(),
                ));
            };
            let out = try_map_range(exec, paths, |id| {
                let path = sample_path(&tree, seed, id);
                eng.execute_simple_path(simple, &lambda0, &path)
                    .map_err(|e| e.context(format!("path {id}")))
            })?;
            file = "paths.csv";
            let mut h = state_header(m, j, "path_id");
            h.push("exploded".into());
            let mut t = Table::create(&dir.join(file), "paths", 1, &h)?;
            for (id, states) in out.iter().enumerate() {
                for s in states {
                    let mut r = state_row(id, tree.time(s.node), s);
                    r.push("0".into());
                    t.row(&r)?;
                }
            }
            t.finish()?;
        }
        Scheme::Exhaustive => {
            let Strategy::Simple(simple) = &strategy else {
                return Err(Failure::Config(
                    "engine.scheme = \"exhaustive\" needs a simple strategy (kind = \"simple\" or a rule with dates)"
                        .into(),
                ));
            };
            let run = eng.execute_simple(simple, &lambda0)?;
            file = "regimes.csv";
            let mut h = state_header(m, j, "regime_id");
            h.insert(1, "parent_id".into());
            h.push("prob".into());
            h.push("preservation".into());
            let mut t = Table::create(&dir.join(file), "regimes", 1, &h)?;
            for (id, reg) in run.regimes.iter().enumerate() {
                let s = eng.regime_state(reg, reg.node)?;
                let mut r = state_row(id, tree.time(reg.node), &s);
                r.insert(1, reg.parent.map(|p| p.to_string()).unwrap_or_default());
                r.push(num(reg.prob));
                r.push(num(reg.preservation));
                t.row(&r)?;
            }
            t.finish()?;
            let na = eng.no_arbitrage(&run)?;
            let mut t = Table::create(
                &dir.join("terminal.csv"),
                "terminal",
                1,
                &["regime_id".into(), "leaf".into(), "prob".into(), "V_T".into()],
            )?;
            for s in &run.terminal {
                t.row(&[s.regime.to_string(), s.leaf.to_string(), num(s.prob), num(s.gain)])?;
            }
            t.finish()?;
            println!("no-arbitrage: before {} after {} gap {}", na.before, na.after, na.gap());
        }
    }
    let meta = json!({
        "format": 1,
        "indiff_version": VERSION,
        "output": file,
        "scheme": match cfg.engine.scheme {
            Scheme::Euler => "euler",
            Scheme::Forward => "forward",
            Scheme::Exhaustive => "exhaustive",
        },
        "seed": seed,
        "paths": paths,
        "steps": tree.steps(),
        "dim": tree.dim(),
        "makers": m,
        "claims": j,
        "tolerances": {
            "saddle": cfg.engine.saddle_tolerance,
            "explode_factor": cfg.engine.explode_factor,
        },
        "max_regimes": cfg.engine.max_regimes,
        "execution": format!("{:?}", exec.effective()).to_lowercase(),
        "exploded_paths": exploded_paths,
        "config": c.config.as_ref().map(|p| p.display().to_string()),
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    });
    write_json(&dir.join("metadata.json"), &meta)?;
    println!("wrote {}", dir.join(file).display());
    Ok(())
}

const SUITES: [&str; 9] = [
    "conjugacy",
    "round-trip",
    "martingale",
    "preservation",
    "bounds",
    "gradient",
    "no-arbitrage",
    "bachelier",
    "convergence",
];

fn explicit_out(cfg: &ExperimentConfig, c: &Common) -> Option<PathBuf> {
    if c.out.is_some() || std::env::var_os(OUTPUT_ENV).is_some() || cfg.output.dir.is_some() {
        Some(cfg.output_dir(c.out.as_deref()))
    } else {
        None
    }
}

pub fn verify(c: &Common, suite: &str) -> Result<(), Failure> {
    let cfg = load(c.config.as_deref())?;
    let selected: Vec<&str> = if suite == "all" {
        SUITES.to_vec()
    } else if let Some(s) = SUITES.iter().find(|s| **s == suite) {
        vec![*s]
    } else {
        return Err(Failure::Config(format!(
            "unknown suite {suite:?}; expected one of {} or all",
            SUITES.join(", ")
        )));
    };
    let v = &cfg.verify;
    let sc = SuiteConfig {
        probes: v.probes,
        seed: c.seed.unwrap_or(v.seed),
        sabotage: v.sabotage.into(),
        exec: cfg.engine.execution(),
    };
    let fixed = if cfg.panel.is_some() && cfg.tree.is_some() && !v.random {
        let panel = cfg.panel()?;
        let tree = cfg.tree(c.steps)?;
        let lambda0 = cfg.lambda0(panel.len())?;
        Some(Scenario { panel, tree, lambda0 })
    } else {
        None
    };
    let source = |shape: RandomShape| match &fixed {
        Some(s) => ScenarioSource::Fixed(s.clone()),
        None => ScenarioSource::Random(shape),
    };
    let mixed = RandomShape {
        makers: vec![2, 3],
        steps: vec![4, 8],
        dims: vec![1],
        mixed: true,
        ..Default::default()
    };
    let paths = c.paths.unwrap_or(v.paths);
    let mut reports: Vec<SuiteReport> = Vec::new();
    for name in selected {
        let started = Instant::now();
        let report = match name {
            "conjugacy" => verify::conjugacy_suite(&source(RandomShape::default()), &sc),
            "round-trip" => verify::round_trip_suite(&source(RandomShape::default()), &sc),
            "martingale" => verify::martingale_suite(&source(RandomShape::default()), &sc),
            "preservation" => verify::preservation_suite(&source(mixed.clone()), &sc),
            "bounds" => verify::bounds_suite(
                &source(RandomShape {
                    exponential_only: true,
                    ..Default::default()
                }),
                &sc,
            ),
            "gradient" => verify::gradient_suite(&source(RandomShape::default()), &sc),
            "no-arbitrage" => verify::no_arbitrage_suite(&source(mixed.clone()), &sc),
            "bachelier" => {
                let p = cfg.bachelier.params()?;
                verify::bachelier_suite(&p, c.steps.unwrap_or(v.steps), paths, &sc)
            }
            "convergence" => {
                let paths = c.paths.unwrap_or(v.convergence_paths);
                let own = fixed.as_ref().filter(|s| {
                    s.tree.steps() % 64 == 0
                        && cfg
                            .strategy
                            .as_ref()
                            .is_some_and(|b| b.kind == StrategyKind::Expression)
                });
                match own {
                    Some(s) => {
                        let target = cfg.strategy(&s.tree)?;
                        verify::convergence_suite(s, &target, paths, &sc)
                    }
                    None => {
                        let s = verify::convergence_scenario(64)?;
                        let target = Strategy::Rule(PositionRule::expressions(&["sin(2*pi*t)"])?);
                        verify::convergence_suite(&s, &target, paths, &sc)
                    }
                }
            }
            _ => unreachable!("suite names are checked above"),
        }
        .map_err(|e| e.context(format!("suite {name}")))?;
        let tag = if report.passed { "PASS" } else { "FAIL" };
        let mut line = format!(
            "{tag} {} probes={} max_deviation={:e} threshold={:e} seconds={:.2}",
            report.name,
            report.probes,
            report.max_deviation,
            report.threshold,
            started.elapsed().as_secs_f64()
        );
        for n in &report.notes {
            line.push_str(&format!(" [{n}]"));
        }
        println!("{line}");
        reports.push(report);
    }
    if let Some(dir) = explicit_out(&cfg, c) {
        ensure_dir(&dir)?;
        let rows: Vec<_> = reports
            .iter()
            .map(|r| {
                json!({
                    "suite": r.name,
                    "probes": r.probes,
                    "max_deviation": r.max_deviation,
                    "threshold": r.threshold,
                    "passed": r.passed,
                    "notes": r.notes,
                })
            })
            .collect();
        write_json(
            &dir.join("verify.json"),
            &json!({ "format": 1, "indiff_version": VERSION, "seed": sc.seed, "suites": rows }),
        )?;
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Failure::Suite(format!("{failed} suite(s) failed")));
    }
    Ok(())
}

pub fn bachelier(c: &Common) -> Result<(), Failure> {
    let started = Instant::now();
    let cfg = load(c.config.as_deref())?;
    let b = &cfg.bachelier;
    let p: BachelierParams = b.params()?;
    let steps = c.steps.unwrap_or(b.steps);
    let paths = c.paths.unwrap_or(b.paths);
    let seed = c.seed.unwrap_or(cfg.engine.seed);
    if steps == 0 {
        return Err(Failure::Config("bachelier.steps must be at least 1".into()));
    }
    let dir = cfg.output_dir(c.out.as_deref());
    ensure_dir(&dir)?;
    let cmp = verify::bachelier_comparison(&p, steps, paths, b.q, seed, cfg.engine.execution())?;
    let mut t = Table::create(
        &dir.join("bachelier.csv"),
        "bachelier",
        1,
        &[
            "path_id".into(),
            "B_T".into(),
            "V_T_engine".into(),
            "V_T_closed".into(),
            "abs_error".into(),
            "exploded".into(),
        ],
    )?;
    for r in &cmp.rows {
        t.row(&[
            r.path.to_string(),
            num(r.brownian),
            num(r.engine),
            num(r.closed),
            num((r.engine - r.closed).abs()),
            u8::from(r.exploded).to_string(),
        ])?;
    }
    t.finish()?;
    let mut depths: Vec<usize> = [steps / 8, steps / 4, steps / 2, steps]
        .into_iter()
        .filter(|n| *n > 0)
        .collect();
    depths.dedup();
    let price_errors = verify::bachelier_price_errors(&p, &depths)?;
    let mut t = Table::create(
        &dir.join("summary.csv"),
        "bachelier-summary",
        1,
        &["metric".into(), "value".into()],
    )?;
    let limit = 0.02 * cmp.impact;
    let mut summary = vec![
        ("mean_abs_gain_error".to_string(), cmp.mean_gain_error()),
        ("gain_error_limit".to_string(), limit),
        ("xi_tree".to_string(), cmp.xi_tree),
        ("xi_closed".to_string(), cmp.xi_closed),
        ("xi_relative_error".to_string(), cmp.xi_relative_error()),
        ("kernel_relative_error".to_string(), cmp.max_kernel_error),
        ("exploded_paths".to_string(), cmp.exploded as f64),
    ];
    for (n, e) in depths.iter().zip(&price_errors) {
        summary.push((format!("price_error_steps_{n}"), *e));
    }
    for (k, v) in &summary {
        t.row(&[k.clone(), num(*v)])?;
        println!("{k} = {v}");
    }
    t.finish()?;
    write_json(
        &dir.join("metadata.json"),
        &json!({
            "format": 1,
            "indiff_version": VERSION,
            "scheme": "euler",
            "params": { "gamma": p.gamma, "b": p.b, "mu": p.mu, "sigma": p.sigma, "s": p.s, "horizon": p.horizon, "q": b.q },
            "steps": steps,
            "paths": paths,
            "seed": seed,
            "wall_time_seconds": started.elapsed().as_secs_f64(),
        }),
    )?;
    Ok(())
}

pub fn pareto(
    c: &Common,
    weights: Option<Vec<f64>>,
    wealth: f64,
    utilities: Option<Vec<f64>>,
    q: Option<Vec<f64>>,
    node: usize,
) -> Result<(), Failure> {
    let cfg = require_config(c)?;
    let panel = cfg.panel()?;
    let m = panel.len();
    let w = match weights {
        Some(w) if w.len() != m => {
            return Err(Failure::Config(format!(
                "--weights has {} entries for {m} makers",
                w.len()
            )))
        }
        Some(w) => WeightVector::new(w).map_err(|e| Failure::Config(format!("--weights: {e}")))?,
        None => cfg.lambda0(m)?,
    };
    let rep = representative_utility(&panel, &w, wealth)?;
    println!("# indiff pareto v1");
    println!("quantity,index,value");
    println!("r,,{}", num(rep.r));
    println!("marginal,,{}", num(rep.y));
    for (i, x) in rep.split.0.iter().enumerate() {
        println!("split,{},{}", i + 1, num(*x));
    }
    for (i, x) in rep.utilities.iter().enumerate() {
        println!("utility,{},{}", i + 1, num(*x));
    }
    if let Some(u) = utilities {
        let tree = cfg.tree(c.steps)?;
        if node >= tree.node_count() {
            return Err(Failure::Config(format!(
                "--node {node} outside a tree of {} nodes",
                tree.node_count()
            )));
        }
        let q = q.unwrap_or_else(|| vec![0.0; tree.claims()]);
        if u.len() != m || q.len() != tree.claims() {
            return Err(Failure::Config(format!(
                "--utilities needs {m} entries and --q needs {} entries",
                tree.claims()
            )));
        }
        let field = Field::new(&panel, &tree);
        let conj = Conjugate::new(&field);
        let b = DualPoint::new(u, 1.0, q).map_err(|e| Failure::Config(e.to_string()))?;
        let s = conj.solve(&b, NodeId(node), None)?;
        println!("G,,{}", num(s.g));
        for (i, x) in s.v.as_slice().iter().enumerate() {
            println!("saddle_weight,{},{}", i + 1, num(*x));
        }
        println!("saddle_residual,,{}", num(s.residual));
    }
    Ok(())
}

pub fn dump_tree(c: &Common) -> Result<(), Failure> {
    let cfg = require_config(c)?;
    let tree = cfg.tree(c.steps)?;
    let dir = cfg.output_dir(c.out.as_deref());
    ensure_dir(&dir)?;
    let (d, j) = (tree.dim(), tree.claims());
    let mut h: Vec<String> = ["node_id", "parent_id", "level", "time", "prob"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(indexed("dB", d));
    h.extend(indexed("B", d));
    h.push("endowment".into());
    h.extend(indexed("psi", j));
    let mut t = Table::create(&dir.join("tree.csv"), "tree", 1, &h)?;
    let row = |node: NodeId, parent: Option<NodeId>, prob: f64, db: Option<&[f64]>| -> Vec<String> {
        let mut r = vec![
            node.0.to_string(),
            parent.map(|p| p.0.to_string()).unwrap_or_default(),
            tree.level(node).to_string(),
            num(tree.time(node)),
            num(prob),
        ];
        match db {
            Some(db) => r.extend(nums(db)),
            None => r.extend(std::iter::repeat_n(String::new(), d)),
        }
        r.extend(nums(&tree.brownian(node)));
        if tree.is_leaf(node) {
            let leaf = tree.leaf_index(node);
            r.push(num(tree.leaf_endowment(leaf)));
            r.extend(nums(tree.leaf_claims(leaf)));
        } else {
            r.extend(std::iter::repeat_n(String::new(), 1 + j));
        }
        r
    };
    t.row(&row(tree.root(), None, 1.0, None))?;
    for id in 0..tree.node_count() {
        let parent = NodeId(id);
        for e in tree.children(parent) {
            t.row(&row(e.child, Some(parent), e.prob, Some(&e.db)))?;
        }
    }
    t.finish()?;
    println!("wrote {}", dir.join("tree.csv").display());
    Ok(())
}
