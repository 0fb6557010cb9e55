//! The round loop: one shared environment stream, every policy on it.

use std::time::Instant;

use serde::Serialize;

use crate::bandits::{Policy, PolicyKind, PolicyParams};
use crate::detector::{auc, gcud_scan, occud_scan, DetectionReport, UserNonRobustState};
use crate::envsim::{
    lambda_tilde, realize_reward, round_noise, sample_round, t0_bound, t0_terms, BanditInstance,
    CorruptionState, T0Params,
};
use crate::error::{invalid, Error, Result};
use crate::ingest::load_features;
use crate::numkit::{min_eigenvalue, SpdState};

use super::config::ExperimentConfig;

/// Builds the instance a config describes for `seed`.
pub fn build_instance(cfg: &ExperimentConfig, seed: u64) -> Result<BanditInstance> {
    let inst = &cfg.instance;
    let built = if let Some(path) = &inst.instance_file {
        BanditInstance::load(path)?
    } else if let (Some(arms), Some(theta)) = (&inst.arm_features, &inst.theta_features) {
        let arms = load_features(arms)?.rows;
        let theta = load_features(theta)?.rows;
        BanditInstance::assemble(&inst.generation(), seed, theta, arms)?
    } else {
        BanditInstance::generate(&inst.generation(), seed)?
    };
    if built.dim != inst.dim {
        return Err(invalid(format!(
            "instance has dimension {}, config says {}",
            built.dim, inst.dim
        )));
    }
    if inst.arms_per_round > built.arms.len() {
        return Err(invalid(format!(
            "arms_per_round {} exceeds the pool of {}",
            inst.arms_per_round,
            built.arms.len()
        )));
    }
    Ok(built)
}

/// Clustering-time diagnostics for an instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub lambda_x: f64,
    pub sigma: f64,
    pub arms_per_round: u64,
    pub lambda_tilde: f64,
    /// Absent when the instance has a single cluster or no cluster policy.
    pub t0: Option<T0Report>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct T0Report {
    pub params: T0Params,
    pub terms: [f64; 4],
    pub bound: f64,
}

/// λ̃ₓ and T₀ for the first cluster policy (or defaults when none).
pub fn diagnostics(cfg: &ExperimentConfig, inst: &BanditInstance) -> Result<Diagnostics> {
    let lambda_x = match cfg.diagnostics.lambda_x {
        Some(v) => v,
        None => min_eigenvalue(&inst.arm_covariance())?,
    };
    if !(lambda_x > 0.0) {
        return Err(Error::Numeric(format!(
            "arm covariance is singular (lambda_x = {lambda_x}); set diagnostics.lambda_x"
        )));
    }
    let k = cfg.instance.arms_per_round as u64;
    let sigma = match cfg.diagnostics.sigma {
        Some(v) => v,
        None => lambda_x / (8.0 * (4.0 * k as f64).ln()).sqrt(),
    };
    let lt = lambda_tilde(lambda_x, sigma, k)?;
    let policy = cfg
        .policies
        .iter()
        .find(|p| p.kind.is_cluster())
        .map(|p| p.resolve(cfg.run.horizon, inst.dim))
        .transpose()?;
    let t0 = match (inst.gamma, policy) {
        (Some(gamma), Some(p)) if gamma > 0.0 => {
            let alpha = if p.alpha.is_finite() {
                p.alpha
            } else {
                (inst.dim as f64).sqrt() + p.lambda.sqrt()
            };
            let params = T0Params {
                users: inst.users as f64,
                dim: inst.dim as f64,
                gamma,
                alpha,
                lambda: p.lambda,
                lambda_tilde: lt,
                corruption: p.c_bar,
                delta: p.delta,
            };
            Some(T0Report {
                terms: t0_terms(&params)?,
                bound: t0_bound(&params)?,
                params,
            })
        }
        _ => None,
    };
    Ok(Diagnostics {
        lambda_x,
        sigma,
        arms_per_round: k,
        lambda_tilde: lt,
        t0,
    })
}

/// Detector output for one policy at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub t: u64,
    pub occud: DetectionReport,
    pub gcud: DetectionReport,
    /// Absent when the ground truth has a single class.
    pub occud_auc: Option<f64>,
    pub gcud_auc: Option<f64>,
}

/// Elliptical-potential bookkeeping over ground-truth clusters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialSummary {
    /// Final `Σ min{‖x‖²_{M⁻¹}, 1}` per ground-truth cluster.
    pub unweighted: Vec<f64>,
    /// The same with weighted samples `√w·x` against the weighted matrix.
    pub weighted: Vec<f64>,
    /// Final `2d·log(1 + n_j/(λd))` with `n_j` the cluster's sample count.
    pub bounds: Vec<f64>,
    pub samples: Vec<u64>,
    /// Largest potential/bound ratio seen at any round.
    pub max_ratio: f64,
}

struct PotentialTracker {
    lambda: f64,
    dim: usize,
    plain: Vec<SpdState>,
    weighted: Vec<SpdState>,
    sum_plain: Vec<f64>,
    sum_weighted: Vec<f64>,
    samples: Vec<u64>,
    max_ratio: f64,
}

impl PotentialTracker {
    fn new(clusters: usize, dim: usize, lambda: f64) -> Result<Self> {
        let fresh = || SpdState::new(dim, lambda);
        Ok(Self {
            lambda,
            dim,
            plain: (0..clusters).map(|_| fresh()).collect::<Result<_>>()?,
            weighted: (0..clusters).map(|_| fresh()).collect::<Result<_>>()?,
            sum_plain: vec![0.0; clusters],
            sum_weighted: vec![0.0; clusters],
            samples: vec![0; clusters],
            max_ratio: 0.0,
        })
    }

    fn bound(&self, n: u64) -> f64 {
        let d = self.dim as f64;
        2.0 * d * (1.0 + n as f64 / (self.lambda * d)).ln()
    }

    fn record(&mut self, cluster: usize, x: &[f64], weight: f64, t: u64) -> Result<()> {
        let p = self.plain[cluster].mahalanobis(x).powi(2);
        self.sum_plain[cluster] += p.min(1.0);
        self.plain[cluster].rank1_update(x, 1.0)?;
        let q = weight * self.weighted[cluster].mahalanobis(x).powi(2);
        self.sum_weighted[cluster] += q.min(1.0);
        self.weighted[cluster].rank1_update(x, weight)?;
        self.samples[cluster] += 1;

        let bound = self.bound(self.samples[cluster]);
        let worst = self.sum_plain[cluster].max(self.sum_weighted[cluster]);
        self.max_ratio = self.max_ratio.max(worst / bound);
        if worst > bound {
            return Err(Error::Invariant(format!(
                "potential {worst} exceeds 2d log(1 + n/(lambda d)) = {bound} \
                 for cluster {cluster} at round {t} after {} samples",
                self.samples[cluster]
            )));
        }
        Ok(())
    }

    fn summary(&self) -> PotentialSummary {
        PotentialSummary {
            unweighted: self.sum_plain.clone(),
            weighted: self.sum_weighted.clone(),
            bounds: self.samples.iter().map(|&n| self.bound(n)).collect(),
            samples: self.samples.clone(),
            max_ratio: self.max_ratio,
        }
    }
}

/// Everything one policy produced in one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyRun {
    pub label: String,
    pub kind: PolicyKind,
    pub params: PolicyParams,
    /// Cumulative regret at the run's trace rounds.
    pub trace: Vec<f64>,
    pub total_regret: f64,
    /// `Σ|c_t|` actually applied to this policy's rewards.
    pub realized_budget: f64,
    /// Inferred clusters at the end (cluster kinds only).
    pub final_components: Option<Vec<Vec<usize>>>,
    pub checkpoints: Vec<Checkpoint>,
    pub potential: Option<PotentialSummary>,
    /// Arm (pool index) chosen at every round; kept only on request.
    #[serde(skip)]
    pub choices: Vec<usize>,
    /// Final per-user robust estimates (cluster and per-user kinds).
    #[serde(skip)]
    pub estimates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub seed: u64,
    pub horizon: u64,
    pub trace_rounds: Vec<u64>,
    pub policies: Vec<PolicyRun>,
    pub gamma: Option<f64>,
    pub corrupted_users: Vec<usize>,
    pub true_partition: Vec<Vec<usize>>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Extra behavior for tests and acceptance runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Keep every round's chosen arm and the final estimates.
    pub keep_choices: bool,
    /// Replace the policy's choice by the round's best arm.
    pub oracle_choices: bool,
}

/// Rounds at which traces are sampled: a fixed stride, always ending at `T`.
pub fn trace_rounds(horizon: u64, points: usize) -> Vec<u64> {
    let stride = horizon.div_ceil(points.max(1) as u64).max(1);
    let mut v: Vec<u64> = (1..=horizon / stride).map(|k| k * stride).collect();
    if v.last() != Some(&horizon) {
        v.push(horizon);
    }
    v
}

fn checkpoint_rounds(horizon: u64, every: u64) -> Vec<u64> {
    let mut v: Vec<u64> = (1..=horizon / every).map(|k| k * every).collect();
    if v.last() != Some(&horizon) {
        v.push(horizon);
    }
    v
}

struct Lane {
    label: String,
    policy: Policy,
    nonrobust: Option<Vec<UserNonRobustState>>,
    corruption: CorruptionState,
    regret: f64,
    trace: Vec<f64>,
    checkpoints: Vec<Checkpoint>,
    potential: Option<PotentialTracker>,
    choices: Vec<usize>,
}

pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunResult> {
    run_experiment_with(cfg, seed, RunOptions::default())
}

pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    seed: u64,
    opts: RunOptions,
) -> Result<RunResult> {
    cfg.validate()?;
    let start = Instant::now();
    let inst = build_instance(cfg, seed)?;
    run_on_instance(cfg, &inst, seed, opts).map(|mut r| {
        r.wall_seconds = start.elapsed().as_secs_f64();
        r
    })
}

/// Runs every configured policy on `inst` with the streams of `seed`.
pub fn run_on_instance(
    cfg: &ExperimentConfig,
    inst: &BanditInstance,
    seed: u64,
    opts: RunOptions,
) -> Result<RunResult> {
    let horizon = cfg.run.horizon;
    let dim = inst.dim;
    let rounds = trace_rounds(horizon, cfg.run.trace_points);
    let checkpoints = checkpoint_rounds(horizon, cfg.detect_every());
    let labels = inst.corrupted_labels();
    let two_classes = labels.iter().any(|&l| l) && labels.iter().any(|&l| !l);

    let mut lanes = Vec::with_capacity(cfg.policies.len());
    for pc in &cfg.policies {
        let params = pc.resolve(horizon, dim)?;
        let policy = Policy::new(params, inst.users, dim)?;
        let nonrobust = if params.kind.is_cluster() {
            Some(
                (0..inst.users)
                    .map(|_| UserNonRobustState::new(dim, params.lambda, params.refresh_every))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        let potential = if cfg.run.track_potential {
            Some(PotentialTracker::new(inst.clusters, dim, params.lambda)?)
        } else {
            None
        };
        lanes.push(Lane {
            label: pc.label(),
            policy,
            nonrobust,
            corruption: CorruptionState::new(
                cfg.corruption.mode,
                cfg.corruption.k,
                cfg.corruption.enabled,
            ),
            regret: 0.0,
            trace: Vec::with_capacity(rounds.len()),
            checkpoints: Vec::new(),
            potential,
            choices: Vec::new(),
        });
    }

    let mut next_trace = 0;
    let mut next_check = 0;
    let mut arm_refs: Vec<&[f64]> = Vec::with_capacity(cfg.instance.arms_per_round);
    for t in 1..=horizon {
        let draw = sample_round(inst, cfg.instance.arms_per_round, seed, t);
        let noise = round_noise(seed, t, cfg.instance.noise_sd);
        arm_refs.clear();
        arm_refs.extend(draw.arm_set.iter().map(|&a| inst.arms[a].as_slice()));
        let mut best = 0;
        for k in 1..draw.arm_set.len() {
            if inst.expected_reward(draw.user, draw.arm_set[k])
                > inst.expected_reward(draw.user, draw.arm_set[best])
            {
                best = k;
            }
        }
        let best_reward = inst.expected_reward(draw.user, draw.arm_set[best]);

        for lane in &mut lanes {
            let choice = if opts.oracle_choices {
                best
            } else {
                lane.policy.select_arm(draw.user, &arm_refs, t)?
            };
            let arm = draw.arm_set[choice];
            let x = arm_refs[choice];
            let (reward, _) = realize_reward(inst, &mut lane.corruption, &draw, arm, noise);
            let inst_regret = best_reward - inst.expected_reward(draw.user, arm);
            if !(-1e-12..=2.0 + 1e-12).contains(&inst_regret) {
                return Err(Error::Invariant(format!(
                    "instantaneous regret {inst_regret} outside [0, 2] at round {t}"
                )));
            }
            lane.regret += inst_regret;
            let outcome = lane.policy.update(draw.user, x, reward)?;
            if let Some(nr) = lane.nonrobust.as_mut() {
                nr[draw.user].update(x, reward)?;
            }
            if let Some(tracker) = lane.potential.as_mut() {
                tracker.record(inst.assignment[draw.user], x, outcome.weight, t)?;
            }
            if opts.keep_choices {
                lane.choices.push(arm);
            }
        }

        if rounds.get(next_trace) == Some(&t) {
            for lane in &mut lanes {
                lane.trace.push(lane.regret);
            }
            next_trace += 1;
        }
        if checkpoints.get(next_check) == Some(&t) {
            for lane in &mut lanes {
                if let Some(nr) = &lane.nonrobust {
                    let occud = occud_scan(&lane.policy, nr, t, cfg.detector.delta)?;
                    let gcud = gcud_scan(&lane.policy, t, cfg.gcud_rho())?;
                    let (occud_auc, gcud_auc) = if two_classes {
                        (
                            Some(auc(&occud.scores(), labels)?),
                            Some(auc(&gcud.scores(), labels)?),
                        )
                    } else {
                        (None, None)
                    };
                    lane.checkpoints.push(Checkpoint {
                        t,
                        occud,
                        gcud,
                        occud_auc,
                        gcud_auc,
                    });
                }
            }
            next_check += 1;
        }
    }

    let policies = lanes
        .into_iter()
        .map(|lane| {
            let estimates = if opts.keep_choices {
                (0..inst.users)
                    .map(|i| lane.policy.state_for(i).theta_hat.clone())
                    .collect()
            } else {
                Vec::new()
            };
            PolicyRun {
                label: lane.label,
                kind: lane.policy.kind(),
                params: *lane.policy.params(),
                total_regret: lane.regret,
                trace: lane.trace,
                realized_budget: lane.corruption.realized_budget(),
                final_components: lane.policy.graph().map(|g| g.components().to_vec()),
                checkpoints: lane.checkpoints,
                potential: lane.potential.map(|p| p.summary()),
                choices: lane.choices,
                estimates,
            }
        })
        .collect();

    Ok(RunResult {
        seed,
        horizon,
        trace_rounds: rounds,
        policies,
        gamma: inst.gamma,
        corrupted_users: inst.corrupted.clone(),
        true_partition: inst.true_partition(),
        wall_seconds: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_grid() {
        assert_eq!(trace_rounds(1, 1000), vec![1]);
        assert_eq!(trace_rounds(10, 5), vec![2, 4, 6, 8, 10]);
        assert_eq!(trace_rounds(10, 3), vec![4, 8, 10]);
        assert_eq!(trace_rounds(7, 100).len(), 7);
        assert_eq!(checkpoint_rounds(10, 4), vec![4, 8, 10]);
        assert_eq!(checkpoint_rounds(10, 5), vec![5, 10]);
    }
}
