//! Self-play groups on a shared deal, the trajectory trie and its preference
//! pairs, and the training objectives (SFT negative log-likelihood, group
//! advantage, clipped GRPO surrogate with a KL penalty, DPO) with analytic
//! gradients and a central finite-difference checker.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::game::{Action, GameState, Seat, Wall};
use crate::policy::{
    decide, featurize, log_softmax, mean_features, DecisionTrace, Featurized, Policy, PolicyError, PolicyParams,
    StateView, FEATURES,
};

/// One decision of the focal seat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub view: StateView,
    pub trace: DecisionTrace,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// Every action of the game, all seats, in order.
    pub record: Vec<Action>,
    pub winners: Vec<Seat>,
    pub focal_won: bool,
}

/// A finished engine-only game.
#[derive(Debug, Clone)]
pub struct PlayedGame {
    pub state: GameState,
    pub trajectory: Trajectory,
}

/// Plays one game from `wall` with one policy per seat. Seats flagged greedy
/// take the argmax action; the others sample from `rng`. Decisions of
/// `focal` are recorded as steps.
pub fn play_game<R: Rng + ?Sized>(
    wall: &Wall,
    players: &[(&Policy, bool); 4],
    focal: Seat,
    rng: &mut R,
) -> Result<PlayedGame, PolicyError> {
    let mut state = GameState::new_game(0, Some(wall.clone())).expect("wall was validated by the caller");
    let mut steps = Vec::new();
    let mut record = Vec::new();
    while !state.is_terminal() {
        let seat = state.seats_to_act()[0];
        let view = StateView::from_truth(&state, seat);
        let (policy, greedy) = players[seat.index()];
        let (action, trace) = decide(policy, &view, greedy, rng)?;
        state.apply_mut(action).expect("decisions are drawn from legal actions");
        if seat == focal {
            steps.push(Step { view, trace, action });
        }
        record.push(action);
    }
    let winners = state.winners.clone();
    let focal_won = winners.contains(&focal);
    Ok(PlayedGame { state, trajectory: Trajectory { steps, record, winners, focal_won } })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameGroup {
    pub group_size: usize,
    pub seed: u64,
    pub wall: Wall,
    pub focal: Seat,
    pub trajectories: Vec<Trajectory>,
}

pub const FOCAL_SEAT: Seat = Seat::ALL[0];

/// `g` games from the deal of `seed`. The focal seat samples from `policy`
/// with its own stream per game; the other seats play the same policy
/// greedily, so trajectories differ only through focal decisions.
pub fn play_group(policy: &Policy, g: usize, seed: u64) -> Result<GameGroup, PolicyError> {
    play_group_with(policy, g, seed, false)
}

/// [`play_group`] with the focal seat optionally taking argmax actions too,
/// which makes every game of the group identical.
pub fn play_group_with(policy: &Policy, g: usize, seed: u64, focal_greedy: bool) -> Result<GameGroup, PolicyError> {
    assert!(g >= 2, "a group needs at least two games");
    let wall = Wall::shuffled(seed);
    let players = [(policy, focal_greedy), (policy, true), (policy, true), (policy, true)];
    let trajectories = (0..g)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            play_game(&wall, &players, FOCAL_SEAT, &mut rng).map(|p| p.trajectory)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GameGroup { group_size: g, seed, wall, focal: FOCAL_SEAT, trajectories })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrieNode {
    pub depth: usize,
    /// Focal action leading into this node (`None` at the root).
    pub action: Option<Action>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub visits: u32,
    pub focal_wins: u32,
    /// Indices of the group's games passing through this node.
    pub games: Vec<usize>,
}

impl TrieNode {
    pub fn win_rate(&self) -> f64 {
        self.focal_wins as f64 / self.visits as f64
    }
}

/// Prefix tree over the focal seat's action sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTrie {
    pub nodes: Vec<TrieNode>,
}

impl TrajectoryTrie {
    pub fn root(&self) -> &TrieNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].children.is_empty())
    }

    /// Actions from the root to node `i`.
    pub fn path(&self, mut i: usize) -> Vec<Action> {
        let mut out = Vec::new();
        while let Some(a) = self.nodes[i].action {
            out.push(a);
            i = self.nodes[i].parent.expect("non-root nodes have parents");
        }
        out.reverse();
        out
    }
}

pub fn build_trie(group: &GameGroup) -> TrajectoryTrie {
    let mut nodes = vec![TrieNode {
        depth: 0,
        action: None,
        parent: None,
        children: Vec::new(),
        visits: 0,
        focal_wins: 0,
        games: Vec::new(),
    }];
    for (gi, traj) in group.trajectories.iter().enumerate() {
        let won = traj.focal_won as u32;
        let mut at = 0;
        nodes[0].visits += 1;
        nodes[0].focal_wins += won;
        nodes[0].games.push(gi);
        for (d, step) in traj.steps.iter().enumerate() {
            let found = nodes[at].children.iter().copied().find(|&c| nodes[c].action == Some(step.action));
            let child = match found {
                Some(c) => c,
                None => {
                    nodes.push(TrieNode {
                        depth: d + 1,
                        action: Some(step.action),
                        parent: Some(at),
                        children: Vec::new(),
                        visits: 0,
                        focal_wins: 0,
                        games: Vec::new(),
                    });
                    let c = nodes.len() - 1;
                    nodes[at].children.push(c);
                    c
                }
            };
            nodes[child].visits += 1;
            nodes[child].focal_wins += won;
            nodes[child].games.push(gi);
            at = child;
        }
    }
    TrajectoryTrie { nodes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub trace: DecisionTrace,
    pub action: Action,
    pub win_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    /// Trie node whose children were compared.
    pub node: usize,
    pub view: StateView,
    pub preferred: Choice,
    pub dispreferred: Choice,
    pub win_rate_gap: f64,
}

/// One pair per ordered (higher, lower) child combination with a strictly
/// positive win-rate gap, at every node with at least two children. The
/// trace of each side is sampled from a game passing through that child.
pub fn extract_preference_pairs<R: Rng + ?Sized>(
    trie: &TrajectoryTrie,
    group: &GameGroup,
    rng: &mut R,
) -> Vec<PreferencePair> {
    let mut pairs = Vec::new();
    for (ni, node) in trie.nodes.iter().enumerate() {
        if node.children.len() < 2 {
            continue;
        }
        let d = node.depth;
        let pick = |child: usize, rng: &mut R| {
            let games = &trie.nodes[child].games;
            let g = games[rng.random_range(0..games.len())];
            let step = &group.trajectories[g].steps[d];
            Choice {
                trace: step.trace.clone(),
                action: step.action,
                win_rate: trie.nodes[child].win_rate(),
            }
        };
        for &hi in &node.children {
            for &lo in &node.children {
                let gap = trie.nodes[hi].win_rate() - trie.nodes[lo].win_rate();
                if hi == lo || gap <= 0.0 {
                    continue;
                }
                let view = group.trajectories[node.games[0]].steps[d].view.clone();
                let preferred = pick(hi, rng);
                let dispreferred = pick(lo, rng);
                pairs.push(PreferencePair { node: ni, view, preferred, dispreferred, win_rate_gap: gap });
            }
        }
    }
    pairs
}

/// Line-delimited JSON, one record per item.
pub fn export_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Objectives

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlEstimator {
    /// Exact KL(π_θ ‖ π_ref) over the full action distribution.
    ExactPolicyToReference,
    /// Exact KL(π_ref ‖ π_θ).
    ExactReferenceToPolicy,
    /// Sampled `ρ − 1 − ln ρ` with `ρ = π_ref(a)/π_θ(a)` at the taken action.
    SampledK3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub clip_epsilon: f64,
    pub kl_beta: f64,
    pub dpo_beta: f64,
    pub group_size: usize,
    pub sigma_floor: f64,
    pub kl_estimator: KlEstimator,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            clip_epsilon: 0.2,
            kl_beta: 0.04,
            dpo_beta: 0.1,
            group_size: 4,
            sigma_floor: 1e-8,
            kl_estimator: KlEstimator::ExactPolicyToReference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub mu: f64,
    pub sigma: f64,
}

/// Mean and population standard deviation.
pub fn group_stats(rewards: &[f64]) -> GroupStats {
    let n = rewards.len() as f64;
    let mu = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / n;
    GroupStats { mu, sigma: var.sqrt() }
}

/// `A_i = (R_i − μ) / σ`; all zero when σ falls below the floor.
pub fn group_advantage(rewards: &[f64], cfg: &LossConfig) -> Vec<f64> {
    let GroupStats { mu, sigma } = group_stats(rewards);
    if sigma < cfg.sigma_floor {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mu) / sigma).collect()
}

/// `1{format ok} + teacher probability`.
pub fn composite_reward(format_ok: bool, teacher_prob: f64) -> f64 {
    format_ok as u8 as f64 + teacher_prob
}

/// A decision with its view featurized once.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub feats: Featurized,
    pub index: usize,
}

pub fn prepare(view: &StateView, action: &Action) -> Result<Prepared, PolicyError> {
    let feats = featurize(view)?;
    let index = feats.index_of(action).ok_or(PolicyError::IllegalAction(*action))?;
    Ok(Prepared { feats, index })
}

fn probs(params: &PolicyParams, feats: &Featurized) -> (Vec<f64>, Vec<f64>) {
    let lp = params.log_probs(feats);
    let p = lp.iter().map(|l| l.exp()).collect();
    (lp, p)
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (y, v) in acc.iter_mut().zip(x) {
        *y += a * v;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftSample {
    pub view: StateView,
    pub trace: Option<DecisionTrace>,
    pub action: Action,
}

/// Mean negative log-likelihood of the dataset actions and its gradient.
pub fn sft_nll_prepared(params: &PolicyParams, data: &[Prepared]) -> (f64, Vec<f64>) {
    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; FEATURES];
    for d in data {
        loss -= params.log_probs(&d.feats)[d.index];
        axpy(&mut grad, -1.0 / n, &params.grad_log_prob(&d.feats, d.index));
    }
    (loss / n, grad)
}

pub fn sft_nll(params: &PolicyParams, dataset: &[SftSample]) -> Result<f64, PolicyError> {
    Ok(sft_nll_and_grad(params, dataset)?.0)
}

pub fn sft_nll_and_grad(params: &PolicyParams, dataset: &[SftSample]) -> Result<(f64, Vec<f64>), PolicyError> {
    let data = dataset.iter().map(|s| prepare(&s.view, &s.action)).collect::<Result<Vec<_>, _>>()?;
    if data.is_empty() {
        return Err(PolicyError::InvalidParams("empty dataset".into()));
    }
    Ok(sft_nll_prepared(params, &data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoItem {
    pub view: StateView,
    pub action: Action,
    pub advantage: f64,
}

/// Clipped surrogate plus KL penalty, with its gradient:
/// `−(1/G)·Σ min(rᵢAᵢ, clip(rᵢ, 1−ε, 1+ε)Aᵢ) + β·KL`.
pub fn grpo_prepared(
    params: &PolicyParams,
    reference: &PolicyParams,
    items: &[(Prepared, f64)],
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>), PolicyError> {
    let g = items.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; FEATURES];
    for (d, adv) in items {
        let (lp, p) = probs(params, &d.feats);
        let (lq, q) = probs(reference, &d.feats);
        if !(q[d.index] > 0.0) || !lq[d.index].is_finite() {
            return Err(PolicyError::ZeroReferenceProbability(d.feats.actions[d.index]));
        }
        let ratio = (lp[d.index] - lq[d.index]).exp();
        let clipped = ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
        let surrogate = (ratio * adv).min(clipped * adv);
        loss -= surrogate / g;
        let clip_active = (*adv >= 0.0 && ratio > 1.0 + cfg.clip_epsilon) || (*adv < 0.0 && ratio < 1.0 - cfg.clip_epsilon);
        let mean = mean_features(&d.feats, &p);
        let grad_lp = |idx: usize| -> Vec<f64> {
            (0..FEATURES).map(|k| (d.feats.features[idx][k] - mean[k]) / params.temperature).collect()
        };
        if !clip_active {
            axpy(&mut grad, -adv * ratio / g, &grad_lp(d.index));
        }
        if cfg.kl_beta != 0.0 {
            let scale = cfg.kl_beta / g;
            match cfg.kl_estimator {
                KlEstimator::ExactPolicyToReference => {
                    for a in 0..p.len() {
                        let l = lp[a] - lq[a];
                        loss += scale * p[a] * l;
                        axpy(&mut grad, scale * p[a] * l, &grad_lp(a));
                    }
                }
                KlEstimator::ExactReferenceToPolicy => {
                    for a in 0..q.len() {
                        loss += scale * q[a] * (lq[a] - lp[a]);
                        axpy(&mut grad, -scale * q[a], &grad_lp(a));
                    }
                }
                KlEstimator::SampledK3 => {
                    let rho = (lq[d.index] - lp[d.index]).exp();
                    loss += scale * (rho - 1.0 - (lq[d.index] - lp[d.index]));
                    axpy(&mut grad, scale * (1.0 - rho), &grad_lp(d.index));
                }
            }
        }
    }
    Ok((loss, grad))
}

fn prepare_group(items: &[GrpoItem]) -> Result<Vec<(Prepared, f64)>, PolicyError> {
    items.iter().map(|i| prepare(&i.view, &i.action).map(|p| (p, i.advantage))).collect()
}

pub fn grpo_loss(
    params: &PolicyParams,
    reference: &PolicyParams,
    group: &[GrpoItem],
    cfg: &LossConfig,
) -> Result<f64, PolicyError> {
    Ok(grpo_prepared(params, reference, &prepare_group(group)?, cfg)?.0)
}

pub fn grpo_loss_and_grad(
    params: &PolicyParams,
    reference: &PolicyParams,
    group: &[GrpoItem],
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>), PolicyError> {
    grpo_prepared(params, reference, &prepare_group(group)?, cfg)
}

/// A preference pair featurized once: both actions index into `feats`.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub feats: Featurized,
    pub preferred: usize,
    pub dispreferred: usize,
}

pub fn prepare_pair(pair: &PreferencePair) -> Result<PreparedPair, PolicyError> {
    let feats = featurize(&pair.view)?;
    let preferred = feats.index_of(&pair.preferred.action).ok_or(PolicyError::IllegalAction(pair.preferred.action))?;
    let dispreferred =
        feats.index_of(&pair.dispreferred.action).ok_or(PolicyError::IllegalAction(pair.dispreferred.action))?;
    Ok(PreparedPair { feats, preferred, dispreferred })
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `−ln σ(β·[(ln π(a⁺) − ln π_ref(a⁺)) − (ln π(a⁻) − ln π_ref(a⁻))])` and its
/// gradient `−σ(−m)·β·(∇ln π(a⁺) − ∇ln π(a⁻))`.
pub fn dpo_prepared(
    params: &PolicyParams,
    reference: &PolicyParams,
    pair: &PreparedPair,
    beta: f64,
) -> Result<(f64, Vec<f64>), PolicyError> {
    let lp = params.log_probs(&pair.feats);
    let lq = reference.log_probs(&pair.feats);
    for idx in [pair.preferred, pair.dispreferred] {
        if !lq[idx].is_finite() {
            return Err(PolicyError::ZeroReferenceProbability(pair.feats.actions[idx]));
        }
    }
    let (w, l) = (pair.preferred, pair.dispreferred);
    let margin = beta * ((lp[w] - lq[w]) - (lp[l] - lq[l]));
    let loss = -log_sigmoid(margin);
    // ∇ln π(a⁺) − ∇ln π(a⁻) = (φ⁺ − φ⁻)/τ: the mean feature cancels.
    let coef = -sigmoid(-margin) * beta / params.temperature;
    let grad = (0..FEATURES).map(|k| coef * (pair.feats.features[w][k] - pair.feats.features[l][k])).collect();
    Ok((loss, grad))
}

pub fn dpo_loss(
    params: &PolicyParams,
    reference: &PolicyParams,
    pair: &PreferencePair,
    beta_sp: f64,
) -> Result<f64, PolicyError> {
    Ok(dpo_prepared(params, reference, &prepare_pair(pair)?, beta_sp)?.0)
}

pub fn dpo_loss_and_grad(
    params: &PolicyParams,
    reference: &PolicyParams,
    pair: &PreferencePair,
    beta_sp: f64,
) -> Result<(f64, Vec<f64>), PolicyError> {
    dpo_prepared(params, reference, &prepare_pair(pair)?, beta_sp)
}

/// Mean DPO loss over a batch and its gradient.
pub fn dpo_batch(
    params: &PolicyParams,
    reference: &PolicyParams,
    pairs: &[PreparedPair],
    beta: f64,
) -> Result<(f64, Vec<f64>), PolicyError> {
    let n = pairs.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; FEATURES];
    for p in pairs {
        let (l, g) = dpo_prepared(params, reference, p, beta)?;
        loss += l / n;
        axpy(&mut grad, 1.0 / n, &g);
    }
    Ok((loss, grad))
}

/// Softmax probabilities of a prepared view; handy for tests.
pub fn distribution_of(params: &PolicyParams, feats: &Featurized) -> Vec<f64> {
    log_softmax(&params.logits(feats)).into_iter().map(f64::exp).collect()
}

// ---------------------------------------------------------------------------
// Gradient verification

/// Relative errors are measured against `max(|analytic|, |numeric|, floor)`.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub max_relative_error: f64,
    pub worst_coordinate: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FdError {
    #[error("step must be positive, got {0}")]
    BadStep(f64),
    #[error("loss is not finite at coordinate {coordinate} (offset {offset})")]
    NonFinite { coordinate: usize, offset: f64 },
    #[error("gradient has {got} entries, point has {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Central differences per coordinate versus the analytic gradient.
pub fn finite_difference_check(
    value: impl Fn(&[f64]) -> f64,
    gradient: impl Fn(&[f64]) -> Vec<f64>,
    point: &[f64],
    step: f64,
) -> Result<FdReport, FdError> {
    if !(step > 0.0) {
        return Err(FdError::BadStep(step));
    }
    let analytic = gradient(point);
    if analytic.len() != point.len() {
        return Err(FdError::DimensionMismatch { got: analytic.len(), expected: point.len() });
    }
    let mut x = point.to_vec();
    let mut numeric = Vec::with_capacity(point.len());
    let mut worst = (0.0, 0);
    for k in 0..point.len() {
        x[k] = point[k] + step;
        let up = value(&x);
        x[k] = point[k] - step;
        let down = value(&x);
        x[k] = point[k];
        for (v, offset) in [(up, step), (down, -step)] {
            if !v.is_finite() {
                return Err(FdError::NonFinite { coordinate: k, offset });
            }
        }
        let n = (up - down) / (2.0 * step);
        let a = analytic[k];
        let err = (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_ERROR_FLOOR);
        if err > worst.0 {
            worst = (err, k);
        }
        numeric.push(n);
    }
    Ok(FdReport { max_relative_error: worst.0, worst_coordinate: worst.1, analytic, numeric })
}

/// Wraps a prepared objective as `(value, gradient)` closures over θ.
pub fn with_theta<'a>(
    base: &'a PolicyParams,
    f: impl Fn(&PolicyParams) -> (f64, Vec<f64>) + 'a,
) -> (impl Fn(&[f64]) -> f64 + 'a, impl Fn(&[f64]) -> Vec<f64> + 'a) {
    let f = std::rc::Rc::new(f);
    let f2 = f.clone();
    let at = move |theta: &[f64]| PolicyParams { theta: theta.to_vec(), temperature: base.temperature };
    let at2 = at.clone();
    (move |t: &[f64]| f(&at(t)).0, move |t: &[f64]| f2(&at2(t)).1)
}

/// Relative-error tolerance of the gradient verification suite.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Decision views with at least two legal actions, taken from games between
/// uniform players so they cover every phase.
pub fn sample_views(n: usize, seed: u64) -> Vec<StateView> {
    let uniform = Policy::Uniform;
    let players = [(&uniform, false); 4];
    let mut views = Vec::with_capacity(n);
    let mut game = 0u64;
    while views.len() < n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(game + 1);
        let wall = Wall::shuffled(seed.wrapping_add(game));
        let focal = Seat::ALL[(game % 4) as usize];
        let played = play_game(&wall, &players, focal, &mut rng).expect("uniform play never fails");
        views.extend(played.trajectory.steps.into_iter().map(|s| s.view).filter(|v| v.legal_actions().len() >= 2));
        game += 1;
    }
    views.truncate(n);
    views
}

fn random_params<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> PolicyParams {
    PolicyParams { theta: (0..FEATURES).map(|_| rng.random_range(-scale..scale)).collect(), temperature: 1.0 }
}

fn random_prepared<R: Rng + ?Sized>(view: &StateView, rng: &mut R) -> Prepared {
    let feats = featurize(view).expect("sampled views have legal actions");
    let index = rng.random_range(0..feats.actions.len());
    Prepared { feats, index }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckResult {
    pub loss: String,
    pub instances: usize,
    pub max_relative_error: f64,
    pub passed: bool,
}

/// Checks the SFT, GRPO (each KL option), and DPO gradients against
/// central differences on `instances` random instances each: random
/// parameters and references, decision views from sampled games, groups of
/// size `G = 4`.
pub fn gradcheck_suite(instances: usize, seed: u64) -> Result<Vec<GradcheckResult>, FdError> {
    let views = sample_views(instances * 8, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = LossConfig::default();
    let mut out = Vec::new();
    let mut run = |name: &str, check: &mut dyn FnMut(&mut ChaCha8Rng, &[StateView]) -> Result<f64, FdError>| {
        let mut worst = 0.0f64;
        for i in 0..instances {
            worst = worst.max(check(&mut rng, &views[i * 8..(i + 1) * 8])?);
        }
        out.push(GradcheckResult {
            loss: name.to_string(),
            instances,
            max_relative_error: worst,
            passed: worst < GRADCHECK_TOLERANCE,
        });
        Ok::<(), FdError>(())
    };

    run("sft", &mut |rng, vs| {
        let params = random_params(rng, 1.0);
        let data: Vec<Prepared> = vs.iter().map(|v| random_prepared(v, rng)).collect();
        let (value, gradient) = with_theta(&params, |p| sft_nll_prepared(p, &data));
        Ok(finite_difference_check(value, gradient, &params.theta, GRADCHECK_STEP)?.max_relative_error)
    })?;
    for (name, estimator) in [
        ("grpo", KlEstimator::ExactPolicyToReference),
        ("grpo-kl-reverse", KlEstimator::ExactReferenceToPolicy),
        ("grpo-kl-k3", KlEstimator::SampledK3),
    ] {
        let cfg = LossConfig { kl_estimator: estimator, ..cfg };
        run(name, &mut |rng, vs| {
            let reference = random_params(rng, 1.0);
            let mut params = reference.clone();
            for t in params.theta.iter_mut() {
                *t += rng.random_range(-0.3..0.3);
            }
            let rewards: Vec<f64> = (0..cfg.group_size).map(|_| rng.random_range(0.0..2.0)).collect();
            let adv = group_advantage(&rewards, &cfg);
            let items: Vec<(Prepared, f64)> =
                vs.iter().take(cfg.group_size).zip(adv).map(|(v, a)| (random_prepared(v, rng), a)).collect();
            let (value, gradient) =
                with_theta(&params, |p| grpo_prepared(p, &reference, &items, &cfg).expect("reference has full support"));
            Ok(finite_difference_check(value, gradient, &params.theta, GRADCHECK_STEP)?.max_relative_error)
        })?;
    }
    run("dpo", &mut |rng, vs| {
        let reference = random_params(rng, 1.0);
        let params = random_params(rng, 1.0);
        let pairs: Vec<PreparedPair> = vs
            .iter()
            .take(4)
            .map(|v| {
                let feats = featurize(v).expect("sampled views have legal actions");
                let n = feats.actions.len();
                let preferred = rng.random_range(0..n);
                let dispreferred = (preferred + rng.random_range(1..n)) % n;
                PreparedPair { feats, preferred, dispreferred }
            })
            .collect();
        let (value, gradient) =
            with_theta(&params, |p| dpo_batch(p, &reference, &pairs, cfg.dpo_beta).expect("reference has full support"));
        Ok(finite_difference_check(value, gradient, &params.theta, GRADCHECK_STEP)?.max_relative_error)
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advantage_example() {
        let a = group_advantage(&[1.0, 2.0, 3.0], &LossConfig::default());
        let expected = 1.5f64.sqrt();
        assert!((a[0] + expected).abs() < 1e-12);
        assert!(a[1].abs() < 1e-12);
        assert!((a[2] - expected).abs() < 1e-12);
        assert_eq!(group_advantage(&[2.0; 4], &LossConfig::default()), vec![0.0; 4]);
    }

    #[test]
    fn reward_examples() {
        assert!((composite_reward(true, 0.7) - 1.7).abs() < 1e-15);
        assert_eq!(composite_reward(false, 0.0), 0.0);
        assert_eq!(composite_reward(true, 1.0), 2.0);
    }

    #[test]
    fn quadratic_is_exact() {
        let value = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v * v).sum::<f64>();
        let grad = |x: &[f64]| x.iter().enumerate().map(|(i, v)| 2.0 * (i as f64 + 1.0) * v).collect();
        let r = finite_difference_check(value, grad, &[0.3, -1.2, 2.5], 1e-4).unwrap();
        assert!(r.max_relative_error < 1e-8, "{r:?}");
    }
}
