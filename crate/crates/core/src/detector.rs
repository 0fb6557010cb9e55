//! Online corrupted-user detection (OCCUD), the GCUD baseline, and AUC.
//!
//! OCCUD compares each user's unweighted ridge estimate `θ̃_i` against the
//! robust estimate of the inferred cluster it sits in. A user is flagged
//! when the gap exceeds the sum of the two confidence radii. The signed
//! margin `gap − threshold` doubles as the ranking score for AUC.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bandits::Policy;
use crate::error::{invalid, Error, Result};
use crate::numkit::{dist2, SpdState};

/// Unweighted ridge statistics of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserNonRobustState {
    /// `λI + M̃` with maintained inverse.
    pub spd: SpdState,
    /// `Σ r·x`.
    pub b: Vec<f64>,
    pub count: u64,
    /// `(λI + M̃)⁻¹·b̃`.
    pub theta_tilde: Vec<f64>,
}

impl UserNonRobustState {
    pub fn new(dim: usize, lambda: f64, refresh_every: usize) -> Result<Self> {
        Ok(Self {
            spd: SpdState::new(dim, lambda)?.with_refresh_every(refresh_every),
            b: vec![0.0; dim],
            count: 0,
            theta_tilde: vec![0.0; dim],
        })
    }

    pub fn update(&mut self, x: &[f64], reward: f64) -> Result<()> {
        self.spd.rank1_update(x, 1.0)?;
        for (b, xi) in self.b.iter_mut().zip(x) {
            *b += reward * xi;
        }
        self.count += 1;
        self.theta_tilde = self.spd.solve(&self.b)?;
        Ok(())
    }

    /// `λ_min(M̃)`, the smallest eigenvalue of the data part.
    pub fn data_min_eigenvalue(&self) -> Result<f64> {
        Ok(self.spd.min_eigenvalue()? - self.spd.reg())
    }
}

/// Inputs of the OCCUD threshold for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdInputs {
    pub count_user: u64,
    pub count_cluster: u64,
    /// `λ_min(M̃_i)` (no λ term).
    pub lambda_min_user: f64,
    /// `λ_min(λI + Σ M_ℓ)` over the user's component.
    pub lambda_min_cluster: f64,
    pub lambda: f64,
    pub dim: usize,
    pub delta: f64,
    /// `α·C̄`.
    pub corruption_margin: f64,
}

/// Sum of the user-level and cluster-level confidence radii.
pub fn occud_threshold(p: &ThresholdInputs) -> Result<f64> {
    let d = p.dim as f64;
    let log_delta = 2.0 * (1.0 / p.delta).ln();
    let sqrt_lambda = p.lambda.sqrt();
    let floor = sqrt_lambda * (1.0 - 1e-9);

    let den_user = (p.lambda_min_user + p.lambda).max(0.0).sqrt();
    let den_cluster = p.lambda_min_cluster.max(0.0).sqrt();
    if !(den_user >= floor) || !(den_cluster >= floor) {
        return Err(Error::Invariant(format!(
            "threshold denominators ({den_user}, {den_cluster}) fall below sqrt(lambda) = {sqrt_lambda}"
        )));
    }
    let num_user =
        (d * (1.0 + p.count_user as f64 / (p.lambda * d)).ln() + log_delta).sqrt() + sqrt_lambda;
    let num_cluster = (d * (1.0 + p.count_cluster as f64 / (p.lambda * d)).ln() + log_delta).sqrt()
        + sqrt_lambda
        + p.corruption_margin;
    Ok(num_user / den_user + num_cluster / den_cluster)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Occud,
    Gcud,
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectorKind::Occud => "occud",
            DetectorKind::Gcud => "gcud",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDetection {
    pub user: usize,
    pub score: f64,
    /// OCCUD only.
    pub threshold: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub t: u64,
    pub algorithm: DetectorKind,
    /// Indexed by user id.
    pub users: Vec<UserDetection>,
    /// Flagged users in ascending order.
    pub detected: Vec<usize>,
}

impl DetectionReport {
    fn assemble(t: u64, algorithm: DetectorKind, mut users: Vec<UserDetection>) -> Self {
        users.sort_by_key(|u| u.user);
        let detected = users.iter().filter(|u| u.flagged).map(|u| u.user).collect();
        Self {
            t,
            algorithm,
            users,
            detected,
        }
    }

    pub fn scores(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.score).collect()
    }
}

/// Per-component robust estimate: `(members, λI + Σ M_ℓ, θ̂_V, T_V)`.
struct ClusterView<'a> {
    members: &'a [usize],
    spd: SpdState,
    theta: Vec<f64>,
    count: u64,
}

fn cluster_views(policy: &Policy) -> Result<Vec<ClusterView<'_>>> {
    let graph = policy
        .graph()
        .ok_or_else(|| invalid(format!("{} keeps no user graph", policy.kind())))?;
    let states = policy.states();
    graph
        .components()
        .iter()
        .map(|members| {
            let count = members.iter().map(|&i| states[i].count).sum();
            let (spd, theta) = if members.len() == 1 {
                let s = &states[members[0]];
                (s.spd.clone(), s.theta_hat.clone())
            } else {
                policy.cluster_estimate(members)?
            };
            Ok(ClusterView {
                members,
                spd,
                theta,
                count,
            })
        })
        .collect()
}

/// OCCUD over every component of the policy's graph.
///
/// `delta` overrides the policy's confidence parameter when given.
pub fn occud_scan(
    policy: &Policy,
    nonrobust: &[UserNonRobustState],
    t: u64,
    delta: Option<f64>,
) -> Result<DetectionReport> {
    let p = policy.params();
    let n = policy.graph().map_or(0, |g| g.n_users());
    if nonrobust.len() != n {
        return Err(invalid(format!(
            "{} non-robust states for {n} users",
            nonrobust.len()
        )));
    }
    let delta = delta.unwrap_or(p.delta);
    let mut users = Vec::with_capacity(n);
    for view in cluster_views(policy)? {
        let lambda_min_cluster = view.spd.min_eigenvalue()?;
        for &i in view.members {
            let nr = &nonrobust[i];
            let lhs = dist2(&nr.theta_tilde, &view.theta);
            let threshold = occud_threshold(&ThresholdInputs {
                count_user: nr.count,
                count_cluster: view.count,
                lambda_min_user: nr.data_min_eigenvalue()?,
                lambda_min_cluster,
                lambda: p.lambda,
                dim: policy.dim(),
                delta,
                corruption_margin: p.corruption_margin(),
            })?;
            let score = lhs - threshold;
            users.push(UserDetection {
                user: i,
                score,
                threshold: Some(threshold),
                flagged: lhs > threshold,
            });
        }
    }
    Ok(DetectionReport::assemble(t, DetectorKind::Occud, users))
}

/// Flags the top `⌈ρ·|V|⌉` users per component by `‖θ̂_i − θ̂_V‖`.
pub fn gcud_scan(policy: &Policy, t: u64, rho: f64) -> Result<DetectionReport> {
    if !(0.0..1.0).contains(&rho) {
        return Err(invalid(format!("rho must lie in [0, 1), got {rho}")));
    }
    let states = policy.states();
    let mut users = Vec::new();
    for view in cluster_views(policy)? {
        let scores: Vec<(usize, f64)> = view
            .members
            .iter()
            .map(|&i| (i, dist2(&states[i].theta_hat, &view.theta)))
            .collect();
        let quota = (rho * view.members.len() as f64).ceil() as usize;
        users.extend(top_scorers(&scores, quota).into_iter().zip(&scores).map(
            |(flagged, &(user, score))| UserDetection {
                user,
                score,
                threshold: None,
                flagged,
            },
        ));
    }
    Ok(DetectionReport::assemble(t, DetectorKind::Gcud, users))
}

/// Marks the `quota` highest scores; ties go to the lower user id.
fn top_scorers(scores: &[(usize, f64)], quota: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .1
            .total_cmp(&scores[a].1)
            .then(scores[a].0.cmp(&scores[b].0))
    });
    let mut flags = vec![false; scores.len()];
    for &k in order.iter().take(quota) {
        flags[k] = true;
    }
    flags
}

/// Mann–Whitney AUC: `P(s⁺ > s⁻) + ½·P(s⁺ = s⁻)` via average ranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(invalid("scores contain NaN"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined(
            "AUC needs at least one positive and one negative label".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Doubled ranks keep tie averages integral.
    let mut pos_rank2: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let rank2 = (start + 1 + end) as u64;
        for &k in &order[start..end] {
            if labels[k] {
                pos_rank2 += rank2;
            }
        }
        start = end;
    }
    let np = n_pos as u64;
    let u2 = pos_rank2 - np * (np + 1);
    Ok(u2 as f64 / (2 * np * n_neg as u64) as f64)
}
