//! Arm-selection policies behind one select/update interface.
//!
//! * `RclubWcu`: per-user weighted ridge statistics, a deletion-only user
//!   graph, and cluster-level UCB on the aggregated statistics of the served
//!   user's connected component.
//! * `Club`: the same machinery with unit weights and no corruption margin.
//! * `LinUcb` / `CwOful`: one shared model for all users (unit / weighted).
//! * `LinUcbInd` / `CwOfulInd`: one independent model per user.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::graph::UserGraph;
use crate::numkit::{aggregate, dist2, dot, SpdState, DEFAULT_REFRESH_EVERY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "rclub_wcu")]
    RclubWcu,
    #[serde(rename = "club")]
    Club,
    #[serde(rename = "linucb")]
    LinUcb,
    #[serde(rename = "linucb_ind")]
    LinUcbInd,
    #[serde(rename = "cw_oful")]
    CwOful,
    #[serde(rename = "cw_oful_ind")]
    CwOfulInd,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::RclubWcu,
        PolicyKind::Club,
        PolicyKind::LinUcb,
        PolicyKind::LinUcbInd,
        PolicyKind::CwOful,
        PolicyKind::CwOfulInd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::RclubWcu => "rclub_wcu",
            PolicyKind::Club => "club",
            PolicyKind::LinUcb => "linucb",
            PolicyKind::LinUcbInd => "linucb_ind",
            PolicyKind::CwOful => "cw_oful",
            PolicyKind::CwOfulInd => "cw_oful_ind",
        }
    }

    /// Kinds that maintain a user graph.
    pub fn is_cluster(self) -> bool {
        matches!(self, PolicyKind::RclubWcu | PolicyKind::Club)
    }

    /// Kinds with one model for everybody.
    pub fn is_shared(self) -> bool {
        matches!(self, PolicyKind::LinUcb | PolicyKind::CwOful)
    }

    /// Kinds whose confidence width carries the corruption margin `α·C̄`.
    pub fn is_robust(self) -> bool {
        matches!(
            self,
            PolicyKind::RclubWcu | PolicyKind::CwOful | PolicyKind::CwOfulInd
        )
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown policy kind '{s}'")))
    }
}

/// A numeric setting that may instead be derived automatically.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Auto {
    #[default]
    Auto,
    Value(f64),
}

impl Serialize for Auto {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Auto::Auto => s.serialize_str("auto"),
            Auto::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Auto {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Auto::Value(v)),
            Raw::Int(v) => Ok(Auto::Value(v as f64)),
            Raw::Str(s) if s == "auto" => Ok(Auto::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"auto\", got \"{s}\""
            ))),
        }
    }
}

/// When the sample weight is computed relative to the statistics update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightTiming {
    /// Weight from the pre-update matrix and the current arm.
    #[default]
    PreUpdate,
    /// Weight computed after the previous visit's update, with that visit's arm.
    Lagged,
}

/// Which sample count enters the log term of the confidence width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaHorizon {
    /// The current round index.
    #[default]
    Round,
    /// The number of samples in the served cluster.
    Cluster,
}

fn default_lambda() -> f64 {
    1.0
}
fn default_alpha1() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_refresh() -> usize {
    DEFAULT_REFRESH_EVERY
}

/// Policy configuration as written in an experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Weight coefficient; `auto` is `(√d + √λ)/C̄`.
    #[serde(default)]
    pub alpha: Auto,
    #[serde(default = "default_alpha1")]
    pub alpha1: f64,
    /// Confidence parameter; `auto` is `1/T`.
    #[serde(default)]
    pub delta: Auto,
    /// Corruption level supplied to the formulas; `auto` is `√T`.
    #[serde(default)]
    pub c_bar: Auto,
    #[serde(default = "default_true")]
    pub weights_enabled: bool,
    #[serde(default = "default_true")]
    pub deletion_enabled: bool,
    #[serde(default)]
    pub weight_timing: WeightTiming,
    #[serde(default)]
    pub beta_horizon: BetaHorizon,
    #[serde(default = "default_refresh")]
    pub refresh_every: usize,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            label: None,
            lambda: default_lambda(),
            alpha: Auto::Auto,
            alpha1: default_alpha1(),
            delta: Auto::Auto,
            c_bar: Auto::Auto,
            weights_enabled: true,
            deletion_enabled: true,
            weight_timing: WeightTiming::PreUpdate,
            beta_horizon: BetaHorizon::Round,
            refresh_every: DEFAULT_REFRESH_EVERY,
        }
    }

    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| self.kind.name().to_string())
    }

    /// Turns `auto` settings into numbers for a given horizon and dimension
    /// and applies the kind's fixed choices.
    pub fn resolve(&self, horizon: u64, dim: usize) -> Result<PolicyParams> {
        if !(self.lambda > 0.0) {
            return Err(invalid(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.alpha1 > 0.0) {
            return Err(invalid(format!(
                "alpha1 must be positive, got {}",
                self.alpha1
            )));
        }
        let t = horizon.max(1) as f64;
        let delta = match self.delta {
            Auto::Auto => (1.0 / t).min(0.5),
            Auto::Value(v) => v,
        };
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        let c_bar = match self.c_bar {
            Auto::Auto => t.sqrt(),
            Auto::Value(v) => v,
        };
        if !(c_bar >= 0.0) {
            return Err(invalid(format!("c_bar must be nonnegative, got {c_bar}")));
        }
        let alpha = match self.alpha {
            Auto::Value(v) => v,
            Auto::Auto if c_bar == 0.0 => f64::INFINITY,
            Auto::Auto => ((dim as f64).sqrt() + self.lambda.sqrt()) / c_bar,
        };
        if !(alpha > 0.0) {
            return Err(invalid(format!("alpha must be positive, got {alpha}")));
        }
        let weights_enabled = match self.kind {
            PolicyKind::RclubWcu | PolicyKind::CwOful | PolicyKind::CwOfulInd => {
                self.weights_enabled
            }
            PolicyKind::Club | PolicyKind::LinUcb | PolicyKind::LinUcbInd => false,
        };
        let c_bar = if self.kind.is_robust() { c_bar } else { 0.0 };
        Ok(PolicyParams {
            kind: self.kind,
            lambda: self.lambda,
            alpha,
            alpha1: self.alpha1,
            delta,
            c_bar,
            weights_enabled,
            deletion_enabled: self.deletion_enabled,
            weight_timing: self.weight_timing,
            beta_horizon: self.beta_horizon,
            refresh_every: self.refresh_every.max(1),
        })
    }
}

/// Fully numeric policy parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyParams {
    pub kind: PolicyKind,
    pub lambda: f64,
    pub alpha: f64,
    pub alpha1: f64,
    pub delta: f64,
    pub c_bar: f64,
    pub weights_enabled: bool,
    pub deletion_enabled: bool,
    pub weight_timing: WeightTiming,
    pub beta_horizon: BetaHorizon,
    pub refresh_every: usize,
}

impl PolicyParams {
    /// `α·C̄`, taken as 0 when `C̄ = 0` (α may be infinite then).
    pub fn corruption_margin(&self) -> f64 {
        corruption_margin(self.alpha, self.c_bar)
    }

    /// Margin used by the deletion rule; dropped when weights are off.
    pub fn deletion_margin(&self) -> f64 {
        if self.weights_enabled {
            self.corruption_margin()
        } else {
            0.0
        }
    }
}

pub fn corruption_margin(alpha: f64, c_bar: f64) -> f64 {
    if c_bar == 0.0 {
        0.0
    } else {
        alpha * c_bar
    }
}

/// Confidence radius parameter
/// `√λ + √(2·ln(1/δ) + d·ln(1 + T/(λd))) + α·C̄`.
pub fn beta(lambda: f64, delta: f64, dim: usize, horizon: f64, alpha: f64, c_bar: f64) -> f64 {
    let d = dim as f64;
    lambda.sqrt()
        + (2.0 * (1.0 / delta).ln() + d * (1.0 + horizon / (lambda * d)).ln()).sqrt()
        + corruption_margin(alpha, c_bar)
}

/// `f(T) = √((1 + ln(1 + T))/(1 + T))`.
pub fn deletion_scale(count: u64) -> f64 {
    let t = count as f64;
    ((1.0 + t.ln_1p()) / (1.0 + t)).sqrt()
}

/// Edge-deletion rule: `‖θ̂_i − θ̂_ℓ‖ ≥ α₁·(f(T_i) + f(T_ℓ) + margin)`.
pub fn deletion_check(
    theta_i: &[f64],
    theta_l: &[f64],
    count_i: u64,
    count_l: u64,
    alpha1: f64,
    margin: f64,
) -> bool {
    let gap = dist2(theta_i, theta_l);
    gap >= alpha1 * (deletion_scale(count_i) + deletion_scale(count_l) + margin)
}

/// Weighted ridge statistics of one user (or of a shared model).
#[derive(Debug, Clone, PartialEq)]
pub struct UserRobustState {
    /// `λI + M` with maintained inverse.
    pub spd: SpdState,
    /// `Σ w·r·x`.
    pub b: Vec<f64>,
    /// Number of served rounds.
    pub count: u64,
    /// `(λI + M)⁻¹·b`.
    pub theta_hat: Vec<f64>,
    /// Weight to apply on the next visit under lagged timing.
    pending_weight: f64,
}

impl UserRobustState {
    pub fn new(dim: usize, lambda: f64, refresh_every: usize) -> Result<Self> {
        Ok(Self {
            spd: SpdState::new(dim, lambda)?.with_refresh_every(refresh_every),
            b: vec![0.0; dim],
            count: 0,
            theta_hat: vec![0.0; dim],
            pending_weight: 1.0,
        })
    }

    /// `M += w·x·xᵀ`, `b += w·r·x`, `T += 1`, then re-solve for `θ̂`.
    pub fn update(&mut self, x: &[f64], reward: f64, weight: f64) -> Result<()> {
        self.spd.rank1_update(x, weight)?;
        for (b, xi) in self.b.iter_mut().zip(x) {
            *b += weight * reward * xi;
        }
        self.count += 1;
        self.theta_hat = self.spd.solve(&self.b)?;
        Ok(())
    }
}

/// `min{1, α/‖x‖_{M′⁻¹}}` from the state's current matrix.
pub fn compute_weight(state: &UserRobustState, x: &[f64], alpha: f64) -> f64 {
    if alpha.is_infinite() {
        return 1.0;
    }
    let radius = state.spd.mahalanobis(x);
    if radius <= 0.0 {
        1.0
    } else {
        (alpha / radius).min(1.0)
    }
}

/// UCB argmax over `arms` for a given estimate and matrix; ties go to the
/// lowest index.
pub fn ucb_argmax(arms: &[&[f64]], theta: &[f64], spd: &SpdState, beta: f64) -> Result<usize> {
    if arms.is_empty() {
        return Err(invalid("arm set is empty"));
    }
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (a, x) in arms.iter().enumerate() {
        let v = dot(x, theta) + beta * spd.mahalanobis(x);
        if v > best_val {
            best_val = v;
            best = a;
        }
    }
    Ok(best)
}

/// Result of one statistics update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub weight: f64,
    pub deleted: Vec<usize>,
}

/// One running policy: estimator states plus (for cluster kinds) the graph.
#[derive(Debug, Clone)]
pub struct Policy {
    params: PolicyParams,
    dim: usize,
    states: Vec<UserRobustState>,
    graph: Option<UserGraph>,
}

impl Policy {
    pub fn new(params: PolicyParams, users: usize, dim: usize) -> Result<Self> {
        if users == 0 {
            return Err(invalid("policy needs at least one user"));
        }
        let n_states = if params.kind.is_shared() { 1 } else { users };
        let states = (0..n_states)
            .map(|_| UserRobustState::new(dim, params.lambda, params.refresh_every))
            .collect::<Result<Vec<_>>>()?;
        let graph = if params.kind.is_cluster() {
            Some(UserGraph::complete(users)?)
        } else {
            None
        };
        Ok(Self {
            params,
            dim,
            states,
            graph,
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.params.kind
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn graph(&self) -> Option<&UserGraph> {
        self.graph.as_ref()
    }

    /// Per-user states (one entry for shared kinds).
    pub fn states(&self) -> &[UserRobustState] {
        &self.states
    }

    pub fn state_for(&self, user: usize) -> &UserRobustState {
        if self.params.kind.is_shared() {
            &self.states[0]
        } else {
            &self.states[user]
        }
    }

    fn state_index(&self, user: usize) -> usize {
        if self.params.kind.is_shared() {
            0
        } else {
            user
        }
    }

    pub fn beta_for(&self, horizon: f64) -> f64 {
        let p = &self.params;
        beta(p.lambda, p.delta, self.dim, horizon, p.alpha, p.c_bar)
    }

    /// Picks an arm (index into `arms`) for `user` at round `t`.
    pub fn select_arm(&self, user: usize, arms: &[&[f64]], t: u64) -> Result<usize> {
        if arms.is_empty() {
            return Err(invalid("arm set is empty"));
        }
        match &self.graph {
            Some(graph) => {
                let members = graph.component_of(user);
                let horizon = match self.params.beta_horizon {
                    BetaHorizon::Round => t as f64,
                    BetaHorizon::Cluster => {
                        members.iter().map(|&i| self.states[i].count).sum::<u64>() as f64
                    }
                };
                let beta = self.beta_for(horizon);
                if members.len() == 1 {
                    let s = &self.states[user];
                    return ucb_argmax(arms, &s.theta_hat, &s.spd, beta);
                }
                let (spd, theta) = self.cluster_estimate(members)?;
                ucb_argmax(arms, &theta, &spd, beta)
            }
            None => {
                let s = self.state_for(user);
                let horizon = match self.params.beta_horizon {
                    BetaHorizon::Round => t as f64,
                    BetaHorizon::Cluster => s.count as f64,
                };
                ucb_argmax(arms, &s.theta_hat, &s.spd, self.beta_for(horizon))
            }
        }
    }

    /// Aggregated `(λI + Σ M_i, (λI + Σ M_i)⁻¹·Σ b_i)` over `members`.
    pub fn cluster_estimate(&self, members: &[usize]) -> Result<(SpdState, Vec<f64>)> {
        let mut spd = aggregate(
            members.iter().map(|&i| &self.states[i].spd),
            self.params.lambda,
        )?;
        let mut b = vec![0.0; self.dim];
        for &i in members {
            for (acc, v) in b.iter_mut().zip(&self.states[i].b) {
                *acc += v;
            }
        }
        let theta = spd.solve(&b)?;
        Ok((spd, theta))
    }

    /// Applies the served round's feedback and runs edge deletion.
    pub fn update(&mut self, user: usize, x: &[f64], reward: f64) -> Result<UpdateOutcome> {
        let p = self.params;
        let idx = self.state_index(user);
        let state = &mut self.states[idx];
        let weight = if !p.weights_enabled {
            1.0
        } else {
            match p.weight_timing {
                WeightTiming::PreUpdate => compute_weight(state, x, p.alpha),
                WeightTiming::Lagged => state.pending_weight,
            }
        };
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(Error::Invariant(format!(
                "sample weight {weight} outside (0, 1]"
            )));
        }
        state.update(x, reward, weight)?;
        if p.weights_enabled && p.weight_timing == WeightTiming::Lagged {
            state.pending_weight = compute_weight(state, x, p.alpha);
        }

        let mut deleted = Vec::new();
        if let Some(graph) = self.graph.as_mut() {
            if p.deletion_enabled {
                let margin = p.deletion_margin();
                let me = &self.states[user];
                for l in graph.neighbors(user) {
                    let other = &self.states[l];
                    if deletion_check(
                        &me.theta_hat,
                        &other.theta_hat,
                        me.count,
                        other.count,
                        p.alpha1,
                        margin,
                    ) {
                        deleted.push(l);
                    }
                }
                for &l in &deleted {
                    graph.delete_edge(user, l)?;
                }
            }
        }
        Ok(UpdateOutcome { weight, deleted })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Mat;

    fn params(kind: PolicyKind) -> PolicyParams {
        let mut c = PolicyConfig::new(kind);
        c.delta = Auto::Value(0.1);
        c.c_bar = Auto::Value(0.0);
        c.resolve(100, 2).unwrap()
    }

    #[test]
    fn weight_cap_and_ratio() {
        let s = UserRobustState::new(2, 1.0, 4096).unwrap();
        assert_eq!(compute_weight(&s, &[1.0, 0.0], 2.0), 1.0);
        assert_eq!(compute_weight(&s, &[1.0, 0.0], 0.5), 0.5);
    }

    #[test]
    fn weight_after_one_update() {
        let mut s = UserRobustState::new(2, 1.0, 4096).unwrap();
        s.update(&[1.0, 0.0], 0.0, 1.0).unwrap();
        let w = compute_weight(&s, &[1.0, 0.0], 0.5);
        assert!((w - 0.5 * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn beta_examples() {
        let b0 = beta(1.0, 0.1, 2, 0.0, 1.0, 0.0);
        assert!((b0 - (1.0 + (2.0 * 10f64.ln()).sqrt())).abs() < 1e-15);
        let b = beta(1.0, 0.1, 2, 100.0, 1.0, 0.0);
        assert!((b - 4.5311).abs() < 1e-4, "{b}");
        assert!(beta(1.0, 0.1, 2, 101.0, 1.0, 0.0) >= b);
    }

    #[test]
    fn deletion_rule_examples() {
        assert_eq!(deletion_scale(0), 1.0);
        let z = [0.2, 0.3];
        assert!(!deletion_check(&z, &z, 5, 9, 1.0, 0.0));
        assert!(deletion_check(&[2.5, 0.0], &[0.0, 0.0], 0, 0, 1.0, 0.0));
        assert!(!deletion_check(&[1.9, 0.0], &[0.0, 0.0], 0, 0, 1.0, 0.0));
    }

    #[test]
    fn cold_start_prefers_longest_arm() {
        let p = Policy::new(params(PolicyKind::LinUcb), 1, 2).unwrap();
        let a = [0.3, 0.0];
        let b = [0.6, 0.8];
        let c = [0.0, 0.5];
        assert_eq!(p.select_arm(0, &[&a, &b, &c], 1).unwrap(), 1);
    }

    #[test]
    fn identical_arms_tie_to_lowest_index() {
        let p = Policy::new(params(PolicyKind::RclubWcu), 3, 2).unwrap();
        let a = [0.6, 0.8];
        assert_eq!(p.select_arm(1, &[&a, &a], 1).unwrap(), 0);
    }

    #[test]
    fn empty_arm_set_rejected() {
        let p = Policy::new(params(PolicyKind::Club), 3, 2).unwrap();
        assert!(matches!(
            p.select_arm(0, &[], 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn hand_built_ucb_indices() {
        // M_V = diag(2, 1), b_V = (2, 0), β = 1
        let mut part = Mat::zeros(2, 2);
        part.set(0, 0, 1.0);
        let mut spd = SpdState::from_gram_part(&part, 1.0).unwrap();
        let theta = spd.solve(&[2.0, 0.0]).unwrap();
        let e1 = [1.0, 0.0];
        let e2 = [0.0, 1.0];
        let i1 = dot(&e1, &theta) + spd.mahalanobis(&e1);
        let i2 = dot(&e2, &theta) + spd.mahalanobis(&e2);
        assert!((i1 - (1.0 + 0.5f64.sqrt())).abs() < 1e-12);
        assert!((i2 - 1.0).abs() < 1e-12);
        assert_eq!(ucb_argmax(&[&e1, &e2], &theta, &spd, 1.0).unwrap(), 0);
    }

    #[test]
    fn unweighted_first_sample() {
        let mut p = Policy::new(params(PolicyKind::Club), 2, 3).unwrap();
        let out = p.update(0, &[1.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(out.weight, 1.0);
        assert_eq!(p.states()[0].theta_hat, vec![0.5, 0.0, 0.0]);
    }

    #[test]
    fn update_leaves_other_users_untouched() {
        let mut p = Policy::new(params(PolicyKind::CwOfulInd), 2, 2).unwrap();
        let before = p.states()[1].clone();
        for _ in 0..20 {
            p.update(0, &[0.6, 0.8], 0.4).unwrap();
        }
        assert_eq!(p.states()[1], before);
    }

    #[test]
    fn weights_in_unit_interval() {
        let mut c = PolicyConfig::new(PolicyKind::CwOful);
        c.c_bar = Auto::Value(30.0);
        let mut p = Policy::new(c.resolve(1000, 2).unwrap(), 1, 2).unwrap();
        for k in 0..200 {
            let a = k as f64 * 0.37;
            let out = p.update(0, &[a.cos() * 0.9, a.sin() * 0.9], 0.1).unwrap();
            assert!(out.weight > 0.0 && out.weight <= 1.0);
        }
    }

    #[test]
    fn auto_alpha_and_margin() {
        let mut c = PolicyConfig::new(PolicyKind::RclubWcu);
        c.lambda = 4.0;
        let p = c.resolve(10_000, 9).unwrap();
        assert_eq!(p.c_bar, 100.0);
        assert!((p.alpha - 5.0 / 100.0).abs() < 1e-15);
        assert!((p.corruption_margin() - 5.0).abs() < 1e-12);
        assert_eq!(p.delta, 1e-4);

        c.c_bar = Auto::Value(0.0);
        let p = c.resolve(10_000, 9).unwrap();
        assert!(p.alpha.is_infinite());
        assert_eq!(p.corruption_margin(), 0.0);
    }

    #[test]
    fn club_forces_unit_weights_and_no_margin() {
        let mut c = PolicyConfig::new(PolicyKind::Club);
        c.c_bar = Auto::Value(50.0);
        let p = c.resolve(100, 3).unwrap();
        assert!(!p.weights_enabled);
        assert_eq!(p.corruption_margin(), 0.0);
    }

    #[test]
    fn deletion_splits_disagreeing_users() {
        let mut c = PolicyConfig::new(PolicyKind::Club);
        c.delta = Auto::Value(0.1);
        let mut p = Policy::new(c.resolve(100, 2).unwrap(), 2, 2).unwrap();
        for _ in 0..30 {
            p.update(0, &[1.0, 0.0], 1.0).unwrap();
            p.update(1, &[1.0, 0.0], -1.0).unwrap();
        }
        assert_eq!(p.graph().unwrap().component_count(), 2);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
        }
        assert!("sclub".parse::<PolicyKind>().is_err());
    }
}
