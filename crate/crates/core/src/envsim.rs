//! Ground-truth world: instance generation, arrivals, arm sets, rewards with
//! flip-prefix corruption, and the clustering-time diagnostics.

use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, io_err, Result};
use crate::numkit::{dot, norm2, Mat};
use crate::seeds::{stream_rng, Stream};

const NORM_TOL: f64 = 1e-9;

/// Parameters for synthetic instance generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub users: usize,
    pub clusters: usize,
    pub dim: usize,
    pub pool_size: usize,
    pub arms_per_round: usize,
    #[serde(default)]
    pub corrupted_fraction: f64,
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 || self.users < self.clusters {
            return Err(invalid(format!(
                "need users >= clusters >= 1 (users={}, clusters={})",
                self.users, self.clusters
            )));
        }
        if self.dim < 2 {
            return Err(invalid("dim must be at least 2"));
        }
        if self.arms_per_round == 0 || self.pool_size < self.arms_per_round {
            return Err(invalid(format!(
                "need pool_size >= arms_per_round >= 1 (pool={}, per round={})",
                self.pool_size, self.arms_per_round
            )));
        }
        if !(0.0..1.0).contains(&self.corrupted_fraction) {
            return Err(invalid(format!(
                "corrupted_fraction must be in [0, 1), got {}",
                self.corrupted_fraction
            )));
        }
        Ok(())
    }

    pub fn corrupted_count(&self) -> usize {
        (self.corrupted_fraction * self.users as f64).round() as usize
    }
}

/// The ground truth of one simulated world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditInstance {
    pub users: usize,
    pub clusters: usize,
    pub dim: usize,
    /// One unit-norm preference vector per cluster.
    pub theta: Vec<Vec<f64>>,
    /// Cluster index of every user.
    pub assignment: Vec<usize>,
    /// Sorted ids of corrupted users.
    pub corrupted: Vec<usize>,
    pub arms: Vec<Vec<f64>>,
    /// Smallest pairwise distance between cluster vectors; absent for one cluster.
    pub gamma: Option<f64>,
    pub seed: u64,
    #[serde(skip)]
    corrupted_mask: Vec<bool>,
}

/// Draws `d−1` standard normals, normalizes them, appends a constant 1 and
/// divides by √2, giving a unit vector.
fn unit_with_bias<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim - 1).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm2(&g);
        if n > 0.0 {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let mut v: Vec<f64> = g.iter().map(|x| x / n * s).collect();
            v.push(s);
            return v;
        }
    }
}

/// Balanced contiguous assignment; the first `users mod clusters` clusters
/// get one extra user.
pub fn balanced_assignment(users: usize, clusters: usize) -> Vec<usize> {
    let base = users / clusters;
    let extra = users % clusters;
    let mut out = Vec::with_capacity(users);
    for j in 0..clusters {
        let size = base + usize::from(j < extra);
        out.extend(std::iter::repeat_n(j, size));
    }
    out
}

pub fn min_pairwise_gap(theta: &[Vec<f64>]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..theta.len() {
        for j in (i + 1)..theta.len() {
            let d = crate::numkit::dist2(&theta[i], &theta[j]);
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
    }
    best
}

impl BanditInstance {
    /// Generates a synthetic instance, deterministic in `seed`.
    pub fn generate(cfg: &GenerationConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(seed, Stream::Instance, 0);
        let theta: Vec<Vec<f64>> = (0..cfg.clusters)
            .map(|_| unit_with_bias(&mut rng, cfg.dim))
            .collect();
        let arms: Vec<Vec<f64>> = (0..cfg.pool_size)
            .map(|_| unit_with_bias(&mut rng, cfg.dim))
            .collect();
        Self::assemble(cfg, seed, theta, arms)
    }

    /// Builds an instance around given cluster vectors and arm pool, with
    /// generated assignment and corrupted set.
    pub fn assemble(
        cfg: &GenerationConfig,
        seed: u64,
        theta: Vec<Vec<f64>>,
        arms: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut cfg = cfg.clone();
        cfg.clusters = theta.len();
        cfg.pool_size = arms.len();
        if let Some(first) = theta.first() {
            cfg.dim = first.len();
        }
        cfg.validate()?;
        let assignment = balanced_assignment(cfg.users, cfg.clusters);
        let mut crng = stream_rng(seed, Stream::Corrupted, 0);
        let mut corrupted = index::sample(&mut crng, cfg.users, cfg.corrupted_count()).into_vec();
        corrupted.sort_unstable();
        let gamma = min_pairwise_gap(&theta);
        let inst = Self {
            users: cfg.users,
            clusters: cfg.clusters,
            dim: cfg.dim,
            theta,
            assignment,
            corrupted,
            arms,
            gamma,
            seed,
            corrupted_mask: Vec::new(),
        };
        inst.finish()
    }

    fn finish(mut self) -> Result<Self> {
        self.validate()?;
        let mut mask = vec![false; self.users];
        for &i in &self.corrupted {
            mask[i] = true;
        }
        self.corrupted_mask = mask;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.theta.len() != self.clusters || self.clusters == 0 {
            return Err(invalid("theta rows must match the cluster count"));
        }
        if self.assignment.len() != self.users {
            return Err(invalid("assignment length must match the user count"));
        }
        if let Some(&j) = self.assignment.iter().find(|&&j| j >= self.clusters) {
            return Err(invalid(format!("assignment refers to cluster {j}")));
        }
        if let Some(&i) = self.corrupted.iter().find(|&&i| i >= self.users) {
            return Err(invalid(format!("corrupted user {i} out of range")));
        }
        for (j, t) in self.theta.iter().enumerate() {
            if t.len() != self.dim {
                return Err(invalid(format!("theta row {j} has wrong length")));
            }
            if norm2(t) > 1.0 + NORM_TOL {
                return Err(invalid(format!("theta row {j} has norm above 1")));
            }
        }
        if self.arms.is_empty() {
            return Err(invalid("arm pool is empty"));
        }
        for (a, x) in self.arms.iter().enumerate() {
            if x.len() != self.dim {
                return Err(invalid(format!("arm {a} has wrong length")));
            }
            if norm2(x) > 1.0 + NORM_TOL {
                return Err(invalid(format!("arm {a} has norm above 1")));
            }
        }
        Ok(())
    }

    pub fn is_corrupted(&self, user: usize) -> bool {
        self.corrupted_mask[user]
    }

    pub fn corrupted_labels(&self) -> &[bool] {
        &self.corrupted_mask
    }

    pub fn user_theta(&self, user: usize) -> &[f64] {
        &self.theta[self.assignment[user]]
    }

    /// Ground-truth partition of users into clusters (non-empty clusters only).
    pub fn true_partition(&self) -> Vec<Vec<usize>> {
        let mut parts = vec![Vec::new(); self.clusters];
        for (i, &j) in self.assignment.iter().enumerate() {
            parts[j].push(i);
        }
        parts.retain(|p| !p.is_empty());
        parts.sort_by_key(|p| p[0]);
        parts
    }

    pub fn expected_reward(&self, user: usize, arm: usize) -> f64 {
        dot(&self.arms[arm], self.user_theta(user))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: Self = serde_json::from_str(text)?;
        let mut inst = inst;
        inst.corrupted.sort_unstable();
        inst.corrupted.dedup();
        inst.gamma = min_pairwise_gap(&inst.theta);
        inst.finish()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    /// Empirical second-moment matrix of the arm pool, `(1/|A|)·Σ x·xᵀ`.
    pub fn arm_covariance(&self) -> Mat {
        let mut m = Mat::zeros(self.dim, self.dim);
        let s = 1.0 / self.arms.len() as f64;
        for x in &self.arms {
            m.add_outer(x, s);
        }
        m
    }
}

/// One round's arrival and feasible arm set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundDraw {
    pub t: u64,
    pub user: usize,
    /// Distinct indices into the arm pool.
    pub arm_set: Vec<usize>,
}

/// Draws the served user and the arm set for round `t`.
pub fn sample_round(inst: &BanditInstance, arms_per_round: usize, seed: u64, t: u64) -> RoundDraw {
    let mut arrivals = stream_rng(seed, Stream::Arrivals, t);
    let user = arrivals.random_range(0..inst.users);
    let k = arms_per_round.min(inst.arms.len());
    let mut arms = stream_rng(seed, Stream::Arms, t);
    let arm_set = index::sample(&mut arms, inst.arms.len(), k).into_vec();
    RoundDraw { t, user, arm_set }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionMode {
    #[default]
    FlipPrefix,
}

/// Per-run corruption bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionState {
    pub mode: CorruptionMode,
    /// Rounds `1..=k` are corrupted for corrupted users.
    pub k: u64,
    pub enabled: bool,
    realized_budget: f64,
}

impl CorruptionState {
    pub fn new(mode: CorruptionMode, k: u64, enabled: bool) -> Self {
        Self {
            mode,
            k,
            enabled,
            realized_budget: 0.0,
        }
    }

    pub fn disabled() -> Self {
        Self::new(CorruptionMode::FlipPrefix, 0, false)
    }

    /// Running `Σ|c_t|`.
    pub fn realized_budget(&self) -> f64 {
        self.realized_budget
    }
}

/// Gaussian noise for round `t`; shared by every policy in a run.
pub fn round_noise(seed: u64, t: u64, noise_sd: f64) -> f64 {
    let mut rng = stream_rng(seed, Stream::Noise, t);
    let z: f64 = StandardNormal.sample(&mut rng);
    noise_sd * z
}

/// Realized reward and corruption for `chosen_arm` (a pool index).
pub fn realize_reward(
    inst: &BanditInstance,
    cs: &mut CorruptionState,
    draw: &RoundDraw,
    chosen_arm: usize,
    noise: f64,
) -> (f64, f64) {
    debug_assert!(draw.arm_set.contains(&chosen_arm));
    let mean = inst.expected_reward(draw.user, chosen_arm);
    let corruption = if cs.enabled && draw.t <= cs.k && inst.is_corrupted(draw.user) {
        match cs.mode {
            CorruptionMode::FlipPrefix => -2.0 * mean,
        }
    } else {
        0.0
    };
    cs.realized_budget += corruption.abs();
    (mean + noise + corruption, corruption)
}

/// `∫₀^{λx} (1 − exp(−(λx − x)²/(2σ²)))^K dx` by adaptive Simpson quadrature.
pub fn lambda_tilde(lambda_x: f64, sigma: f64, k: u64) -> Result<f64> {
    if !(lambda_x > 0.0) || !(sigma > 0.0) || k == 0 {
        return Err(invalid("lambda_tilde needs positive arguments"));
    }
    let two_s2 = 2.0 * sigma * sigma;
    let kf = k as f64;
    // substitute y = λx − x
    let g = |y: f64| -> f64 {
        let base = -(-(y * y) / two_s2).exp_m1();
        if base <= 0.0 {
            0.0
        } else {
            (kf * base.ln()).exp()
        }
    };
    // seed with a uniform split so narrow features near y = 0 are seen
    let pieces = 64;
    let h = lambda_x / pieces as f64;
    let tol = 1e-9 / pieces as f64;
    let mut total = 0.0;
    for p in 0..pieces {
        let a = p as f64 * h;
        let b = a + h;
        let (fa, fm, fb) = (g(a), g(0.5 * (a + b)), g(b));
        let whole = simpson(a, b, fa, fm, fb);
        total += adaptive_simpson(&g, a, b, fa, fm, fb, whole, tol, 48);
    }
    Ok(total)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Inputs to the sufficient-clustering-time bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T0Params {
    pub users: f64,
    pub dim: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub lambda_tilde: f64,
    pub corruption: f64,
    pub delta: f64,
}

/// The four candidates inside the `max{…}` of the bound, in order.
pub fn t0_terms(p: &T0Params) -> Result<[f64; 4]> {
    let positive = [p.users, p.dim, p.gamma, p.alpha, p.lambda, p.lambda_tilde];
    if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || !(p.corruption >= 0.0) {
        return Err(invalid("t0_bound needs positive parameters and C >= 0"));
    }
    if !(p.delta > 0.0 && p.delta < 1.0 / 3.0) {
        return Err(invalid(format!(
            "delta must lie in (0, 1/3), got {}",
            p.delta
        )));
    }
    let lt = p.lambda_tilde;
    let g2 = p.gamma * p.gamma;
    let sl = p.lambda.sqrt();
    let log_u = (p.users / p.delta).ln();
    Ok([
        288.0 * p.dim / (g2 * p.alpha * sl * lt) * log_u,
        16.0 / (lt * lt) * (8.0 * p.dim / (lt * lt * p.delta)).ln(),
        72.0 * sl / (p.alpha * g2 * lt),
        72.0 * p.alpha * p.corruption * p.corruption / (g2 * sl * lt),
    ])
}

/// Rounds after which every user is clustered correctly with high probability.
pub fn t0_bound(p: &T0Params) -> Result<f64> {
    let terms = t0_terms(p)?;
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(16.0 * p.users * (p.users / p.delta).ln() + 4.0 * p.users * max)
}
