use agentic_control::agent::{
    decide_control_action, plan_recovery_path, power_gate, recommendation, AuditLog, Rejection, TemplateStore,
    ValidatorMode,
};
use agentic_control::control::{
    run_episode, safety_fallback, ControlContext, Controller, ControllerFailure, ControllerOutput, EpisodeConfig,
    InitialTemperatures, PidController, PidGains, PidState,
};
use agentic_control::fsm::{generate_fsm, parse_dict_text, PathPlan};
use agentic_control::provider::{CompletionProvider, CompletionRequest, ScriptRule, ScriptedProvider};
use agentic_control::twin::{
    equilibrium_temperature, DisturbanceProfile, HeaterCommand, PowerLimits, Twin, TwinParams, TwinState,
};
use proptest::prelude::*;

fn feasible_graph() -> impl Strategy<Value = (usize, usize, u64)> {
    (2usize..=12)
        .prop_flat_map(|n| (Just(n), n.div_ceil(2)..=n * (n - 1), any::<u64>()))
}

/// Explicit Euler with a fixed step, written out from the energy balance,
/// without disturbance.
fn euler(t0: f64, q: f64, duration: f64, dt: f64) -> f64 {
    let p = TwinParams::default();
    let steps = (duration / dt).round() as usize;
    let mut t = t0;
    for _ in 0..steps {
        let loss = p.htc * p.area * (t - p.ambient)
            + p.emissivity * p.stefan_boltzmann * p.area * (t.powi(4) - p.ambient.powi(4));
        t += dt * (q - loss) / (p.mass * p.heat_capacity);
    }
    t
}

#[test]
fn rk4_single_step_error_is_fourth_order() {
    // Euler at 1e-3 s carries ~1e-7 K error, more than RK4 makes in a 1 s
    // step, so the reference is Richardson-extrapolated Euler and the steps
    // are long enough for the RK4 error to dominate.
    let twin = Twin::new(TwinParams::default(), DisturbanceProfile::none(), PowerLimits::default());
    let start = TwinState::new(300.0, 300.0);
    let cmd = HeaterCommand::new(0.3, 0.3);
    let mut errors = Vec::new();
    for dt in [40.0, 20.0, 10.0] {
        let reference = 2.0 * euler(300.0, 0.3, dt, 5e-4) - euler(300.0, 0.3, dt, 1e-3);
        let rk = twin.step_rk4(&start, &cmd, dt).unwrap();
        errors.push((rk.t1 - reference).abs());
    }
    for w in errors.windows(2) {
        assert!(w[0] / w[1] >= 8.0, "{errors:?}");
    }
}

#[test]
fn pid_integral_stays_frozen_when_setpoint_is_unreachable() {
    struct Recording {
        inner: PidController,
        states: Vec<PidState>,
    }
    impl Controller for Recording {
        fn name(&self) -> String {
            self.inner.name()
        }
        fn update_period(&self) -> Option<f64> {
            self.inner.update_period()
        }
        fn decide(&mut self, ctx: &ControlContext<'_>) -> Result<ControllerOutput, ControllerFailure> {
            let out = self.inner.decide(ctx);
            self.states.push(self.inner.pid_state());
            out
        }
    }
    let config = EpisodeConfig {
        setpoint: 400.0,
        ..EpisodeConfig::default()
    };
    let mut c = Recording {
        inner: PidController::from_config(&config),
        states: Vec::new(),
    };
    let log = run_episode(&config, &mut c).unwrap();
    let limit = PidGains::default().integral_limit();
    assert_eq!(c.states.len(), 900);
    assert!(c.states.iter().all(|s| s.integral.abs() <= limit));
    assert!(c.states.iter().all(|s| s.integral == 0.0));
    assert!(log.trajectory.samples[1..].iter().all(|s| s.q1 == 0.3 && s.q2 == 0.3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_machines_are_sound((n, r, seed) in feasible_graph()) {
        let fsm = generate_fsm(n, r, seed).unwrap();
        prop_assert!(fsm.validate_structure().is_empty());
        prop_assert_eq!(fsm.edge_count(), r);
        prop_assert_eq!(&parse_dict_text(&fsm.encode_as_dict_text()).unwrap(), &fsm);
        for s in 0..n {
            for g in 0..n {
                if let Some(p) = fsm.shortest_path(s, g).unwrap() {
                    prop_assert!(fsm.traverse(&p).unwrap().valid);
                }
            }
        }
    }

    #[test]
    fn twin_stays_in_envelope_and_fan_side_runs_colder(
        t0 in 293.15f64..345.0,
        powers in prop::collection::vec(0.0f64..=0.3, 1..12),
    ) {
        let twin = Twin::default();
        let p = twin.params;
        let hi = equilibrium_temperature(0.3, &p, p.htc).unwrap().max(t0) + 0.1;
        let mut state = TwinState::new(t0, t0);
        let mut all = Vec::new();
        for q in powers {
            let cmd = HeaterCommand::new(q, q);
            let traj = twin.simulate_interval(&state, &cmd, 30.0, 1.0).unwrap();
            state = traj.last().unwrap().state();
            all.extend(traj.samples);
        }
        for s in &all {
            prop_assert!(s.t1 >= p.ambient - 1e-9 && s.t2 >= p.ambient - 1e-9);
            prop_assert!(s.t1 <= hi && s.t2 <= hi);
            prop_assert!(s.t1 <= s.t2);
        }
    }

    #[test]
    fn twin_is_bit_reproducible(t1 in 293.15f64..340.0, t2 in 293.15f64..340.0, q1 in 0.0f64..=0.3, q2 in 0.0f64..=0.3) {
        let twin = Twin::default();
        let s = TwinState::new(t1, t2);
        let a = twin.simulate_interval(&s, &HeaterCommand::new(q1, q2), 60.0, 1.0).unwrap();
        let b = twin.simulate_interval(&s, &HeaterCommand::new(q1, q2), 60.0, 1.0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn failing_controller_gets_fallback_within_envelope(t1 in 293.15f64..340.0, t2 in 293.15f64..340.0) {
        struct Refuse;
        impl Controller for Refuse {
            fn name(&self) -> String { "refuse".into() }
            fn decide(&mut self, _: &ControlContext<'_>) -> Result<ControllerOutput, ControllerFailure> {
                Err(ControllerFailure::new("no"))
            }
        }
        let config = EpisodeConfig { initial: InitialTemperatures { t1, t2 }, ..EpisodeConfig::default() };
        let log = run_episode(&config, &mut Refuse).unwrap();
        prop_assert_eq!(log.fallback_count(), log.decisions.len());
        for d in &log.decisions {
            prop_assert_eq!(d.command, safety_fallback(&d.state, &config, &[]));
        }
        let hi = t1.max(t2).max(equilibrium_temperature(0.3, &config.twin.params, config.twin.params.htc).unwrap()) + 0.1;
        for s in &log.trajectory.samples {
            prop_assert!(s.t1 >= config.twin.params.ambient - 1e-9 && s.t1 <= hi);
            prop_assert!(s.t2 >= config.twin.params.ambient - 1e-9 && s.t2 <= hi);
        }
    }

    #[test]
    fn chosen_command_passes_power_gate_unless_fallback(
        replies in prop::collection::vec(
            prop_oneof![
                Just("True".to_string()),
                Just("nonsense".to_string()),
                (-0.5f64..0.8, -0.5f64..0.8).prop_map(|(a, b)| format!("[{a}, {b}]")),
                (0.0f64..0.3).prop_map(|a| format!("[{a}]")),
                (-0.5f64..0.8, -0.5f64..0.8, 300.0f64..310.0).prop_map(|(a, b, t)| format!("[{a}, {b}, {t}]")),
                (-0.5f64..0.8, -0.5f64..0.8, 300.0f64..310.0).prop_map(|(a, b, t)| format!("[{a}, {b}, {t}, {t}]")),
            ],
            0..30,
        ),
        t in 300.0f64..312.0,
    ) {
        let provider = ScriptedProvider::new(replies.into_iter().map(ScriptRule::reply).collect()).unwrap();
        let config = EpisodeConfig::default();
        let ctx = ControlContext {
            state: TwinState::new(t, t),
            setpoint: config.setpoint,
            interval_index: 0,
            current: HeaterCommand::new(0.1, 0.1),
            history: &[],
            config: &config,
        };
        let mut audit = AuditLog::new("p");
        let d = decide_control_action(&provider, &TemplateStore::bundled(), &ctx, ValidatorMode::Host, &mut audit);
        let lim = config.twin.limits;
        prop_assert!(power_gate(&d.chosen, lim.lo, lim.hi).passed || d.used_fallback);
        prop_assert!(lim.admits(&d.chosen));
        prop_assert!(d.temp_reprompts <= config.budgets.temperature);
        prop_assert!(d.power_reprompts <= config.budgets.power);
    }

    #[test]
    fn planner_respects_budget(
        budget in 0u32..7,
        replies in prop::collection::vec(
            prop_oneof![
                Just("True [1, 2, 0]".to_string()),
                Just("False".to_string()),
                Just("True [1, 0]".to_string()),
                prop::collection::vec(0usize..4, 1..5).prop_map(|v| format!("{v:?}")),
            ],
            0..10,
        ),
    ) {
        let fsm = agentic_control::fsm::Fsm::from_lists(vec![vec![1, 2], vec![2], vec![0]]);
        let provider = ScriptedProvider::new(replies.into_iter().map(ScriptRule::reply).collect()).unwrap();
        let out = match plan_recovery_path(&provider, &fsm, 1, 0, budget) {
            Ok(o) => o,
            Err(agentic_control::agent::PlanError::Provider { partial, .. }) => *partial,
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(out.reprompts_used <= budget);
        prop_assert!(out.attempts.len() as u32 <= budget + 1);
        if out.success {
            let p = out.final_path.unwrap();
            prop_assert!(fsm.traverse(&p).unwrap().valid && p.start() == 1 && p.end() == 0);
        }
    }

    #[test]
    fn recommendation_quotes_every_prior_path(paths in prop::collection::vec(prop::collection::vec(0usize..30, 1..6), 0..6)) {
        let plans: Vec<PathPlan> = paths.into_iter().filter_map(PathPlan::new).collect();
        let text = recommendation(&Rejection::WrongGoal { expected: 0, got: 1 }, &plans);
        for p in &plans {
            prop_assert!(text.contains(&p.to_string()));
        }
    }

    #[test]
    fn scripted_latency_is_reported(n in 1usize..10) {
        let p = ScriptedProvider::from_replies((0..n).map(|i| i.to_string()));
        for _ in 0..n {
            let r = p.complete(&CompletionRequest::new("", "x")).unwrap();
            prop_assert!(r.latency_s >= 0.0 && r.latency_s.is_finite());
        }
    }
}
