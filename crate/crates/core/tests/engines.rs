use indiff::conjugacy::Conjugate;
use indiff::engine::{sample_path, Engine, EngineOptions};
use indiff::field::{Field, Order};
use indiff::parallel::Execution;
use indiff::strategy::{SimpleStrategy, Strategy};
use indiff::{MakerPanel, Payoff, PrimalPoint, TreeSpec, UtilitySpec, WeightVector};

fn panel() -> MakerPanel {
    MakerPanel::new(vec![
        UtilitySpec::exponential(1.2).unwrap(),
        UtilitySpec::sum_of_exponentials(vec![0.6, 0.4], vec![0.6, 2.0]).unwrap(),
    ])
    .unwrap()
}

fn tree(steps: usize) -> indiff::ScenarioTree {
    TreeSpec::new(
        steps,
        1.0,
        1,
        Payoff::expression("0.2 + 0.4*B").unwrap(),
        vec![Payoff::expression("1 + 0.5*B + 0.1*B^2").unwrap()],
    )
    .build()
    .unwrap()
}

#[test]
fn euler_matches_forward_induction_for_constant_positions() {
    let p = panel();
    let t = tree(8);
    let field = Field::new(&p, &t);
    let conj = Conjugate::new(&field);
    let eng = Engine::new(&conj);
    let lambda = WeightVector::new(vec![0.4, 0.6]).unwrap();
    let q = vec![0.7];
    let u0 = eng.initial_utilities(&lambda).unwrap();
    for id in 0..6 {
        let path = sample_path(&t, 3, id);
        let exact = eng
            .execute_simple_path(&SimpleStrategy::buy_and_hold(q.clone()), &lambda, &path)
            .unwrap();
        let euler = eng
            .simulate_path(&Strategy::constant(q.clone()), &u0, &path, id)
            .unwrap();
        assert!(!euler.explosion.exploded);
        for (a, b) in exact.iter().zip(&euler.states) {
            for (x, y) in a.u.iter().zip(&b.u) {
                assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()), "U {x} vs {y}");
            }
            assert!((a.x - b.x).abs() < 1e-8, "X {} vs {}", a.x, b.x);
            assert!((a.v - b.v).abs() < 1e-8, "V {} vs {}", a.v, b.v);
        }
    }
}

#[test]
fn sequential_and_parallel_paths_agree() {
    let p = panel();
    let t = tree(6);
    let field = Field::new(&p, &t);
    let conj = Conjugate::new(&field);
    let lambda = WeightVector::new(vec![0.5, 0.5]).unwrap();
    let strategy = Strategy::Rule(indiff::strategy::PositionRule::expressions(&["0.5 - 0.3*B"]).unwrap());
    let run = |exec| {
        Engine::new(&conj)
            .with_options(EngineOptions {
                exec,
                ..Default::default()
            })
            .simulate_sde(&strategy, &lambda, 16, 99)
            .unwrap()
    };
    assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
}

#[test]
fn zero_strategy_leaves_cash_and_gain_at_zero() {
    let p = panel();
    let t = tree(5);
    let field = Field::new(&p, &t);
    let conj = Conjugate::new(&field);
    let eng = Engine::new(&conj);
    let lambda = WeightVector::new(vec![0.3, 0.7]).unwrap();
    let run = eng.execute_simple(&SimpleStrategy::zero(1), &lambda).unwrap();
    assert_eq!(run.regimes.len(), 1);
    assert!(run.terminal.iter().all(|s| s.gain.abs() < 1e-12));
    let na = eng.no_arbitrage(&run).unwrap();
    assert!(na.gap().abs() < 1e-12);
}

#[test]
fn exhaustive_regimes_cover_all_histories() {
    let p = panel();
    let t = tree(6);
    let field = Field::new(&p, &t);
    let conj = Conjugate::new(&field);
    let eng = Engine::new(&conj);
    let s = SimpleStrategy::new(
        vec![1, 3],
        vec![
            indiff::strategy::PositionRule::Constant(vec![0.5]),
            indiff::strategy::PositionRule::expressions(&["-0.2 + B"]).unwrap(),
        ],
        1,
    )
    .unwrap();
    let run = eng.execute_simple(&s, &WeightVector::uniform(2)).unwrap();
    // 1 initial + 2 nodes at level 1 + 2 * 3 nodes at level 3
    assert_eq!(run.regimes.len(), 9);
    let total: f64 = run.terminal.iter().map(|t| t.prob).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(run.preservation_residual() < 1e-9);
}

#[test]
fn positions_frozen_after_a_triggered_stop() {
    let p = panel();
    let t = tree(8);
    let field = Field::new(&p, &t);
    let conj = Conjugate::new(&field);
    let eng = Engine::new(&conj);
    let lambda = WeightVector::new(vec![0.4, 0.6]).unwrap();
    // rebalance at levels 0, 2 and 4, the last one only where B > 0
    let s = SimpleStrategy::new(
        vec![0, 2, 4],
        vec![
            indiff::strategy::PositionRule::Constant(vec![0.3]),
            indiff::strategy::PositionRule::expressions(&["0.6 - B"]).unwrap(),
            indiff::strategy::PositionRule::Constant(vec![-0.4]),
        ],
        1,
    )
    .unwrap()
    .with_trigger(indiff::expr::Expr::parse("B > 0 || t < 0.5").unwrap());
    let mut stopped_early = 0;
    for id in 0..12 {
        let path = sample_path(&t, 17, id);
        let states = eng.execute_simple_path(&s, &lambda, &path).unwrap();
        let stop = if t.brownian(path[4])[0] > 0.0 { 4 } else { 2 };
        if stop == 2 {
            stopped_early += 1;
        }
        let frozen = &states[stop];
        let zeta = PrimalPoint::new(WeightVector::new(frozen.w.clone()).unwrap(), frozen.x, frozen.q.clone());
        for st in &states[stop + 1..] {
            assert_eq!(st.q, frozen.q);
            assert!((st.x - frozen.x).abs() < 1e-12);
            for (a, b) in st.w.iter().zip(&frozen.w) {
                assert!((a - b).abs() < 1e-12);
            }
            let fv = field.at(&zeta, st.node, Order::Gradient).unwrap().grad_v;
            for (a, b) in st.u.iter().zip(&fv) {
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "U {a} vs {b}");
            }
        }
    }
    assert!(stopped_early > 0 && stopped_early < 12);
}
