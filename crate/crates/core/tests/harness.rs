//! Round-loop and artifact tests on small configs.

use rclub::bandits::{Auto, PolicyConfig, PolicyKind};
use rclub::harness::output::{
    detection_csv, parse_regret_csv, regret_csv, DETECTION_CSV, META_JSON, REGRET_CSV,
};
use rclub::harness::{
    emit_outputs, run_experiment, run_experiment_with, ExperimentConfig, RunOptions,
};

fn small_config(horizon: u64) -> ExperimentConfig {
    let text = format!(
        r#"
[instance]
users = 12
clusters = 3
dim = 5
pool_size = 40
arms_per_round = 6
corrupted_fraction = 0.25

[corruption]
k = 150

[run]
horizon = {horizon}
trace_points = 50

[[policy]]
kind = "rclub_wcu"
alpha = 0.3
c_bar = 2.0
alpha1 = 0.5

[[policy]]
kind = "club"

[[policy]]
kind = "linucb_ind"

[[policy]]
kind = "cw_oful"
c_bar = 10.0
"#
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

#[test]
fn single_round_run() {
    let r = run_experiment(&small_config(1), 3).unwrap();
    assert_eq!(r.trace_rounds, vec![1]);
    for p in &r.policies {
        assert_eq!(p.trace.len(), 1);
        assert!(p.trace[0] >= 0.0);
    }
}

#[test]
fn traces_are_monotone_and_end_at_total() {
    let r = run_experiment(&small_config(600), 1).unwrap();
    assert_eq!(*r.trace_rounds.last().unwrap(), 600);
    for p in &r.policies {
        assert!(p.trace.windows(2).all(|w| w[0] <= w[1]), "{}", p.label);
        assert_eq!(*p.trace.last().unwrap(), p.total_regret);
        let steps: Vec<f64> = p.trace.windows(2).map(|w| w[1] - w[0]).collect();
        let stride = (r.trace_rounds[1] - r.trace_rounds[0]) as f64;
        assert!(steps.iter().all(|&s| s <= 2.0 * stride));
    }
}

#[test]
fn oracle_choices_have_zero_regret() {
    let opts = RunOptions {
        oracle_choices: true,
        ..Default::default()
    };
    let r = run_experiment_with(&small_config(300), 2, opts).unwrap();
    for p in &r.policies {
        assert_eq!(p.total_regret, 0.0);
    }
}

#[test]
fn same_seed_is_identical() {
    let cfg = small_config(400);
    let a = run_experiment(&cfg, 9).unwrap();
    let b = run_experiment(&cfg, 9).unwrap();
    assert_eq!(regret_csv(&a), regret_csv(&b));
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}

#[test]
fn removing_a_policy_leaves_others_unchanged() {
    let full = small_config(500);
    let mut reduced = full.clone();
    reduced.policies.retain(|p| p.kind != PolicyKind::Club);
    let opts = RunOptions {
        keep_choices: true,
        ..Default::default()
    };
    let a = run_experiment_with(&full, 4, opts).unwrap();
    let b = run_experiment_with(&reduced, 4, opts).unwrap();
    for pb in &b.policies {
        let pa = a.policies.iter().find(|p| p.label == pb.label).unwrap();
        assert_eq!(pa.trace, pb.trace);
        assert_eq!(pa.choices, pb.choices);
    }
}

#[test]
fn realized_budget_matches_replayed_corruption() {
    use rclub::envsim::{realize_reward, sample_round, CorruptionState};
    use rclub::harness::build_instance;

    let cfg = small_config(400);
    let opts = RunOptions {
        keep_choices: true,
        ..Default::default()
    };
    let r = run_experiment_with(&cfg, 5, opts).unwrap();
    let inst = build_instance(&cfg, 5).unwrap();
    for p in &r.policies {
        let mut cs = CorruptionState::new(cfg.corruption.mode, cfg.corruption.k, true);
        let mut sum = 0.0;
        for (t, &arm) in (1..=400).zip(&p.choices) {
            let draw = sample_round(&inst, cfg.instance.arms_per_round, 5, t);
            let (_, c) = realize_reward(&inst, &mut cs, &draw, arm, 0.0);
            sum += c.abs();
        }
        assert_eq!(p.realized_budget, sum, "{}", p.label);
        assert!(p.realized_budget > 0.0);
    }
}

#[test]
fn detection_checkpoints_and_auc_range() {
    let mut cfg = small_config(500);
    cfg.detector.detect_every = Some(200);
    let r = run_experiment(&cfg, 6).unwrap();
    for p in &r.policies {
        if p.kind.is_cluster() {
            let ts: Vec<u64> = p.checkpoints.iter().map(|c| c.t).collect();
            assert_eq!(ts, vec![200, 400, 500]);
            for c in &p.checkpoints {
                for u in &c.occud.users {
                    assert_eq!(u.flagged, u.score > 0.0);
                }
            }
        } else {
            assert!(p.checkpoints.is_empty());
        }
    }
    let csv = detection_csv(&r);
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let auc: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&auc));
        rows += 1;
    }
    assert_eq!(rows, 2 * 2 * 3);
}

#[test]
fn corruption_free_run_has_no_auc_rows() {
    let mut cfg = small_config(200);
    cfg.instance.corrupted_fraction = 0.0;
    let r = run_experiment(&cfg, 1).unwrap();
    assert_eq!(detection_csv(&r).lines().count(), 1);
    for p in &r.policies {
        assert_eq!(p.realized_budget, 0.0);
    }
}

#[test]
fn outputs_round_trip() {
    let cfg = small_config(300);
    let r = run_experiment(&cfg, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&r, &cfg, &Err("skipped".into()), dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join(REGRET_CSV)).unwrap();
    let (rounds, labels, cols) = parse_regret_csv(&text).unwrap();
    assert_eq!(rounds, r.trace_rounds);
    for (p, (label, col)) in r.policies.iter().zip(labels.iter().zip(&cols)) {
        assert_eq!(&p.label, label);
        assert_eq!(&p.trace, col);
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(META_JSON)).unwrap())
            .unwrap();
    for (p, m) in r.policies.iter().zip(meta["policies"].as_array().unwrap()) {
        assert_eq!(m["realized_budget"].as_f64().unwrap(), p.realized_budget);
    }
    assert!(dir.path().join(DETECTION_CSV).exists());
}

#[test]
fn empty_policy_list_writes_header_only() {
    let mut cfg = small_config(50);
    cfg.policies.clear();
    let r = run_experiment(&cfg, 0).unwrap();
    assert_eq!(regret_csv(&r), "t\n");
}

#[test]
fn potential_tracking_reports_bounded_sums() {
    let mut cfg = small_config(800);
    cfg.run.track_potential = true;
    let r = run_experiment(&cfg, 7).unwrap();
    for p in &r.policies {
        let pot = p.potential.as_ref().unwrap();
        assert!(pot.max_ratio <= 1.0);
        assert_eq!(pot.samples.iter().sum::<u64>(), 800);
        for k in 0..pot.bounds.len() {
            assert!(pot.unweighted[k] <= pot.bounds[k]);
            assert!(pot.weighted[k] <= pot.bounds[k]);
        }
    }
}

#[test]
fn degenerate_configs_are_bit_identical() {
    let mut cfg = small_config(600);
    cfg.corruption.enabled = false;
    let mut robust = PolicyConfig::new(PolicyKind::RclubWcu);
    robust.weights_enabled = false;
    robust.c_bar = Auto::Value(0.0);
    let mut club = PolicyConfig::new(PolicyKind::Club);
    club.label = Some("club".into());
    cfg.policies = vec![robust, club];
    let opts = RunOptions {
        keep_choices: true,
        ..Default::default()
    };
    let r = run_experiment_with(&cfg, 8, opts).unwrap();
    let (a, b) = (&r.policies[0], &r.policies[1]);
    assert_eq!(a.choices, b.choices);
    assert_eq!(a.final_components, b.final_components);
    assert_eq!(a.estimates, b.estimates);
}
