mod oracles;

use trustfed_core::config::{AdversarySpec, ExperimentConfig};
use trustfed_core::dataset::{Behavior, ClientShard};
use trustfed_core::federation::{run_strategy, Engine, Federation, Strategy};
use trustfed_core::output::RunReport;
use trustfed_core::participation::Status;
use trustfed_core::{ClientId, StrategyKind};

fn small_config(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        seed,
        clients: 5,
        rounds: 8,
        ..ExperimentConfig::default()
    };
    c.dataset.n_per_class = 40;
    c.adversaries = AdversarySpec {
        count: 1,
        behavior: Behavior::LabelFlip { fraction: 1.0 },
    };
    c
}

#[test]
fn identical_shards_first_round_follows_trace() {
    let config = small_config(1);
    let fed = Federation::prepare(&config).unwrap();
    let template = fed.shards[0].clone();
    let shards: Vec<ClientShard> = (0..6)
        .map(|i| ClientShard {
            client_id: ClientId(i),
            behavior: Behavior::Honest,
            ..template.clone()
        })
        .collect();
    let strategy = Strategy::new(StrategyKind::AtsssfStatic);
    let mut engine = Engine::new(
        strategy,
        fed.initial.clone(),
        shards,
        fed.test.clone(),
        config.train_options(),
        config.seed,
    )
    .unwrap();
    let out = engine.run_round().unwrap();
    assert_eq!(out.log.alpha, Some(0.3));

    // one EMA step from 1.0, then the omission rule on the result
    let smoothed: Vec<f64> = (0..6).map(|i| 1.0 + 0.3 * (out.raw.get(ClientId(i)).unwrap() - 1.0)).collect();
    assert!(smoothed.iter().all(|&t| t >= 0.7 - 1e-12));
    let expected = &oracles::oracle_state_trace(std::slice::from_ref(&smoothed), 0.75, 3)[0];
    let got: Vec<usize> = out.decision.omitted_now.iter().map(|c| c.0 as usize).collect();
    assert_eq!(got, expected.omitted_now);
    // only a client whose raw score is below 1/6 can drop under the threshold
    for (i, t) in smoothed.iter().enumerate() {
        if out.raw.get(ClientId(i as u32)).unwrap() >= 1.0 / 6.0 {
            assert!(*t >= 0.75 - 1e-12);
            assert!(!got.contains(&i));
        }
    }
}

#[test]
fn baseline_logs_carry_no_op_markers() {
    let config = small_config(2);
    let fed = Federation::prepare(&config).unwrap();
    let out = run_strategy(&fed, &config, StrategyKind::FedavgBaseline).unwrap();
    assert_eq!(out.logs.len(), 8);
    for log in &out.logs {
        assert_eq!(log.alpha, None);
        assert!(log.omitted_now.is_empty() && log.readmitted_now.is_empty());
        assert_eq!(log.active_count, 5);
        assert_eq!(log.trust_variance, log.sigma2);
    }
    for entry in &out.client_logs {
        assert_eq!(entry.smoothed_trust, None);
        assert!(entry.raw_trust.is_some());
        assert_eq!(entry.status, Status::Included);
    }
}

#[test]
fn parallel_and_serial_runs_are_identical() {
    let mut config = small_config(3);
    let fed = Federation::prepare(&config).unwrap();
    let a = run_strategy(&fed, &config, StrategyKind::AtsssfAdaptive).unwrap();
    config.train.parallel = false;
    let b = run_strategy(&fed, &config, StrategyKind::AtsssfAdaptive).unwrap();
    assert_eq!(a.logs, b.logs);
    assert_eq!(a.client_logs, b.client_logs);
    assert_eq!(a.final_params, b.final_params);
    let again = run_strategy(&Federation::prepare(&config).unwrap(), &config, StrategyKind::AtsssfAdaptive).unwrap();
    assert_eq!(a.logs, again.logs);
}

#[test]
fn zero_rounds_report_the_untrained_model() {
    let config = ExperimentConfig {
        rounds: 0,
        ..small_config(4)
    };
    let fed = Federation::prepare(&config).unwrap();
    let out = run_strategy(&fed, &config, StrategyKind::AtsssfAdaptive).unwrap();
    assert!(out.logs.is_empty() && out.client_logs.is_empty());
    assert_eq!(out.report.initial_metrics, out.report.final_metrics);
    assert_eq!(out.final_params, fed.initial);
}

#[test]
fn full_scale_is_echoed_in_the_report() {
    let config = ExperimentConfig::from_toml_str("scale = \"full\"").unwrap();
    assert_eq!((config.clients, config.rounds), (100, 500));
    let report = RunReport::new(&config, &[]);
    let json: serde_json::Value = serde_json::to_value(&report).unwrap();
    let c = &json["config"];
    assert_eq!(c["clients"], 100);
    assert_eq!(c["rounds"], 500);
    assert_eq!(c["train"]["lr"], 0.001);
    assert_eq!(c["train"]["batch_size"], 16);
    assert_eq!(c["alpha_init"], 0.3);
    assert_eq!(c["tau"], 0.75);
    assert_eq!(c["m"], 3);
}

#[test]
fn cohort_is_conserved_and_cap_holds() {
    let config = ExperimentConfig {
        rounds: 15,
        clients: 6,
        adversaries: AdversarySpec {
            count: 2,
            behavior: Behavior::NoisyUpdate { sigma: 0.5 },
        },
        ..small_config(5)
    };
    let fed = Federation::prepare(&config).unwrap();
    let mut engine = Engine::from_federation(&fed, Strategy::from_config(&config, StrategyKind::AtsssfAdaptive).unwrap(), &config).unwrap();
    for _ in 0..config.rounds {
        let out = engine.run_round().unwrap();
        let omitted = engine.statuses().values().filter(|s| s.status == Status::Omitted).count();
        assert_eq!(omitted + out.log.active_count, 6);
        assert!(out.log.omitted_now.len() <= 3);
        assert!(out.log.active_count + 3 >= out.included_before.len());
        assert!(out.decision.omitted_now.is_disjoint(&out.decision.readmitted_now));
    }
}

#[test]
fn threshold_zero_reproduces_the_baseline_model() {
    let config = ExperimentConfig {
        tau: 0.0,
        ..small_config(6)
    };
    let fed = Federation::prepare(&config).unwrap();
    let base = run_strategy(&fed, &config, StrategyKind::FedavgBaseline).unwrap();
    for kind in [StrategyKind::AtsssfStatic, StrategyKind::AtsssfAdaptive] {
        let filtered = run_strategy(&fed, &config, kind).unwrap();
        assert_eq!(filtered.final_params, base.final_params);
        assert_eq!(filtered.report.total_omissions, 0);
    }
}

#[test]
fn honest_baseline_accuracy_trends_upwards() {
    for seed in [1, 2, 3] {
        let config = ExperimentConfig {
            seed,
            adversaries: AdversarySpec::default(),
            ..ExperimentConfig::default()
        };
        let fed = Federation::prepare(&config).unwrap();
        let out = run_strategy(&fed, &config, StrategyKind::FedavgBaseline).unwrap();
        let acc: Vec<f64> = out.logs.iter().map(|l| l.test.accuracy).collect();
        // means over consecutive 10-round windows
        let windows: Vec<f64> = acc.chunks(10).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
        for pair in windows.windows(2) {
            assert!(pair[1] >= pair[0], "seed {seed}: window means {windows:?}");
        }
    }
}
