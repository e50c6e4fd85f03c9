//! Best-of-N, single-round beam search and MCTS, each wired to an
//! [`AugmentorStack`].
//!
//! Searches are single-threaded and deterministic: every policy draw uses a
//! sub-seed derived from the search seed and a running draw counter.

mod uct;

use serde::{Deserialize, Serialize};

pub use uct::{backprop, uct_select, Backprop, NodeStats, Q_INIT};

use crate::augment::{sibling_context, AugmentorStack, MemoryKind};
use crate::envs::{Environment, Task};
use crate::error::{EnvError, Error};
use crate::matrix::Rejection;
use crate::models::{Models, PolicyRequest, RewardRequest};
use crate::types::{
    derive_seed, select_best, Action, ApologyClassifier, ContextBundle, ContextSummary, SearchRecord, StateHandle,
    Step, Telemetry, TerminalKind, Trajectory, MAX_STEPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    BestOfN,
    Beam,
    Mcts,
}

impl SearchMethod {
    pub fn label(self) -> &'static str {
        match self {
            SearchMethod::BestOfN => "Best-of-N",
            SearchMethod::Beam => "Beam",
            SearchMethod::Mcts => "MCTS",
        }
    }

    /// Tree methods fork environment state.
    pub fn needs_fork(self) -> bool {
        self != SearchMethod::BestOfN
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expansion {
    /// All candidates sampled from one prompt.
    Batch,
    /// Candidate i sees the executed actions of candidates 0..i.
    Interleaved,
}

/// Which best-of-N steps the reward model scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepScoring {
    FinalStep,
    EveryStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub method: SearchMethod,
    /// Attempts for best-of-N.
    pub budget: usize,
    pub beam_width: usize,
    pub n_actions: usize,
    pub n_iters: usize,
    pub w_exp: f64,
    pub max_depth: usize,
    pub rollout_depth: usize,
    pub backprop: Backprop,
    pub decay_gamma: f64,
    pub temperature: f64,
    pub expansion: Expansion,
    pub bon_scoring: StepScoring,
    pub classifier: ApologyClassifier,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            method: SearchMethod::BestOfN,
            budget: 5,
            beam_width: 3,
            n_actions: 3,
            n_iters: 5,
            w_exp: 1.0,
            max_depth: MAX_STEPS,
            rollout_depth: MAX_STEPS,
            backprop: Backprop::Cumulative,
            decay_gamma: 0.5,
            temperature: 0.7,
            expansion: Expansion::Batch,
            bon_scoring: StepScoring::FinalStep,
            classifier: ApologyClassifier::default(),
        }
    }
}

impl SearchConfig {
    pub fn for_method(method: SearchMethod) -> Self {
        SearchConfig {
            method,
            ..SearchConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let fail = |m: String| Err(Error::Config(m));
        if self.expansion == Expansion::Interleaved && self.method == SearchMethod::BestOfN {
            return fail("interleaved expansion requires beam or MCTS".into());
        }
        if !(self.decay_gamma > 0.0 && self.decay_gamma <= 1.0) {
            return fail(format!("decay_gamma {} outside (0, 1]", self.decay_gamma));
        }
        if !(1..=MAX_STEPS).contains(&self.max_depth) {
            return fail(format!("max_depth {} outside [1, {MAX_STEPS}]", self.max_depth));
        }
        if self.budget == 0 || self.beam_width == 0 || self.n_actions == 0 || self.n_iters == 0 {
            return fail("budget, beam_width, n_actions and n_iters must be positive".into());
        }
        if !(self.w_exp >= 0.0) || !(self.temperature >= 0.0) {
            return fail("w_exp and temperature must be non-negative".into());
        }
        Ok(())
    }
}

/// Give-up diagnostics of one beam search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GiveUpStats {
    /// Candidates created that ended in an apology.
    pub apology_terminals: usize,
    pub selected_apology: bool,
    /// Expansions in which every sibling apologised.
    pub all_apology_states: usize,
    pub total_expansions: usize,
}

/// A freshly expanded child.
#[derive(Debug, Clone)]
struct Candidate {
    step: Step,
    state: StateHandle,
    context: ContextSummary,
}

struct Runner<'a> {
    task_id: &'a str,
    prompt: String,
    models: Models<'a>,
    stack: &'a mut AugmentorStack,
    config: &'a SearchConfig,
    telemetry: Telemetry,
    seed: u64,
    draws: u64,
    interleaved: bool,
}

impl<'a> Runner<'a> {
    fn new(
        task: &'a Task,
        models: Models<'a>,
        stack: &'a mut AugmentorStack,
        config: &'a SearchConfig,
        seed: u64,
    ) -> Self {
        let interleaved = config.expansion == Expansion::Interleaved || stack.wants_interleaved();
        Runner {
            task_id: &task.id,
            prompt: task.prompt_text(),
            models,
            stack,
            config,
            telemetry: Telemetry::default(),
            seed,
            draws: 0,
            interleaved,
        }
    }

    fn trajectory_id(&self, iteration: usize) -> String {
        format!("{}#{iteration}", self.task_id)
    }

    fn sample(&mut self, prefix: &[Step], bundle: &ContextBundle) -> Result<Action, Error> {
        self.draws += 1;
        let request = PolicyRequest {
            task_id: self.task_id,
            task_prompt: &self.prompt,
            prefix,
            bundle,
            temperature: self.config.temperature,
            seed: derive_seed(self.seed, self.draws),
        };
        let g = self.models.policy.sample(&request)?;
        self.telemetry.record_policy(g.usage);
        Ok(g.value)
    }

    fn score(&mut self, prefix: &[Step], step: Step) -> Result<Step, Error> {
        let request = RewardRequest {
            task_id: self.task_id,
            task_prompt: &self.prompt,
            prefix,
            candidate: &step,
        };
        let g = self.models.reward.score(&request)?;
        self.telemetry.record_supervisor(g.usage);
        Ok(step.with_reward(g.value))
    }

    fn fork(&self, env: &mut dyn Environment, state: &StateHandle) -> Result<StateHandle, Error> {
        env.fork(state).map_err(|e| match e {
            EnvError::ForkUnsupported(id) => Error::Inadmissible {
                cell: id,
                reason: Rejection::NonSerializable,
            },
            other => other.into(),
        })
    }

    /// Samples, executes and scores `n_actions` children of `state`, then
    /// runs the per-step hooks on every child.
    fn expand(
        &mut self,
        env: &mut dyn Environment,
        state: &StateHandle,
        prefix: &[Step],
        iteration: usize,
    ) -> Result<Vec<Candidate>, Error> {
        let n = self.config.n_actions;
        let mut executed: Vec<Candidate> = Vec::with_capacity(n);
        if self.interleaved {
            for _ in 0..n {
                let siblings: Vec<Step> = executed.iter().map(|c| c.step.clone()).collect();
                let bundle = self.stack.bundle(sibling_context(&siblings, iteration));
                let action = self.sample(prefix, &bundle)?;
                let child = self.fork(env, state)?;
                let (next, obs) = env.step(&child, &action)?;
                executed.push(Candidate {
                    step: Step::new(action, obs),
                    state: next,
                    context: ContextSummary::of(&bundle),
                });
            }
        } else {
            let bundle = self.stack.bundle(Vec::new());
            let actions = (0..n).map(|_| self.sample(prefix, &bundle)).collect::<Result<Vec<_>, _>>()?;
            let context = ContextSummary::of(&bundle);
            for action in actions {
                let child = self.fork(env, state)?;
                let (next, obs) = env.step(&child, &action)?;
                executed.push(Candidate {
                    step: Step::new(action, obs),
                    state: next,
                    context,
                });
            }
        }
        for c in executed.iter_mut() {
            c.step = self.score(prefix, c.step.clone())?;
        }
        let id = self.trajectory_id(iteration);
        for c in &executed {
            self.stack
                .on_step(&c.step, &self.prompt, iteration, &id, &self.models, &mut self.telemetry)?;
        }
        Ok(executed)
    }

    fn finish(&mut self, steps: Vec<Step>, contexts: Vec<ContextSummary>, iteration: usize) -> Result<Trajectory, Error> {
        let trajectory = Trajectory::build(steps, contexts, iteration, &self.config.classifier)?;
        let id = self.trajectory_id(iteration);
        self.stack
            .on_trajectory(&trajectory, &self.prompt, &id, &self.models, &mut self.telemetry)?;
        Ok(trajectory)
    }
}

fn require_fork(env: &dyn Environment) -> Result<(), Error> {
    if env.serializable() {
        Ok(())
    } else {
        Err(Error::Inadmissible {
            cell: env.id().to_string(),
            reason: Rejection::NonSerializable,
        })
    }
}

/// Runs the method named in `config`.
pub fn run_search(
    task: &Task,
    env: &mut dyn Environment,
    models: Models<'_>,
    stack: &mut AugmentorStack,
    config: &SearchConfig,
    seed: u64,
) -> Result<SearchRecord, Error> {
    match config.method {
        SearchMethod::BestOfN => run_best_of_n(task, env, models, stack, config, seed),
        SearchMethod::Beam => run_beam(task, env, models, stack, config, seed),
        SearchMethod::Mcts => run_mcts(task, env, models, stack, config, seed),
    }
}

/// `budget` sequential attempts from a fresh environment, with no early stop.
pub fn run_best_of_n(
    task: &Task,
    env: &mut dyn Environment,
    models: Models<'_>,
    stack: &mut AugmentorStack,
    config: &SearchConfig,
    seed: u64,
) -> Result<SearchRecord, Error> {
    config.validate()?;
    if stack.has(MemoryKind::RawSibling) {
        return Err(Error::Inadmissible {
            cell: task.id.clone(),
            reason: Rejection::CrossSiblingNeedsExpansion,
        });
    }
    let mut runner = Runner::new(task, models, stack, config, seed);
    let mut trajectories = Vec::with_capacity(config.budget);
    for attempt in 0..config.budget {
        let abort = |e: Error| Error::Aborted {
            attempt,
            source: Box::new(e),
        };
        let t = best_of_n_attempt(&mut runner, env, attempt).map_err(abort)?;
        trajectories.push(t);
    }
    let selected = select_best(&trajectories);
    Ok(SearchRecord {
        final_answer: selected.and_then(|i| trajectories[i].answer().map(String::from)),
        trajectories,
        telemetry: runner.telemetry,
        selected,
        give_up: None,
    })
}

fn best_of_n_attempt(runner: &mut Runner<'_>, env: &mut dyn Environment, attempt: usize) -> Result<Trajectory, Error> {
    let mut state = env.reset();
    let mut steps: Vec<Step> = Vec::new();
    let mut contexts = Vec::new();
    let every = runner.config.bon_scoring == StepScoring::EveryStep;
    let id = runner.trajectory_id(attempt);
    while steps.len() < runner.config.max_depth {
        let bundle = runner.stack.bundle(Vec::new());
        let action = runner.sample(&steps, &bundle)?;
        let done = action.is_final();
        let (next, obs) = env.step(&state, &action)?;
        state = next;
        let mut step = Step::new(action, obs);
        if every || done || steps.len() + 1 == runner.config.max_depth {
            step = runner.score(&steps, step)?;
        }
        runner
            .stack
            .on_step(&step, &runner.prompt, attempt, &id, &runner.models, &mut runner.telemetry)?;
        contexts.push(ContextSummary::of(&bundle));
        steps.push(step);
        if done {
            break;
        }
    }
    runner.finish(steps, contexts, attempt)
}

#[derive(Debug, Clone)]
struct Beam {
    steps: Vec<Step>,
    contexts: Vec<ContextSummary>,
    state: StateHandle,
    terminal: bool,
    order: usize,
}

impl Beam {
    fn key(&self) -> (f64, f64) {
        let last = self.steps.last().and_then(|s| s.reward).unwrap_or(0.0);
        let mean = crate::types::trajectory_score(&self.steps).unwrap_or(0.0);
        (last, mean)
    }
}

/// One round of beam search: expand every live beam, score, keep the top
/// `beam_width` (finished beams compete with live ones).
pub fn run_beam(
    task: &Task,
    env: &mut dyn Environment,
    models: Models<'_>,
    stack: &mut AugmentorStack,
    config: &SearchConfig,
    seed: u64,
) -> Result<SearchRecord, Error> {
    config.validate()?;
    require_fork(env)?;
    if stack.configs().iter().any(|c| c.kind.cross_trajectory()) {
        return Err(Error::Inadmissible {
            cell: task.id.clone(),
            reason: Rejection::CrossTrajectoryOnSingleRoundBeam,
        });
    }
    let mut runner = Runner::new(task, models, stack, config, seed);
    let classifier = config.classifier.clone();
    let mut stats = GiveUpStats::default();
    let mut created = 0usize;
    let mut beams = vec![Beam {
        steps: Vec::new(),
        contexts: Vec::new(),
        state: env.reset(),
        terminal: false,
        order: 0,
    }];
    while beams.iter().any(|b| !b.terminal) {
        let mut pool: Vec<Beam> = Vec::new();
        for beam in beams {
            if beam.terminal {
                pool.push(beam);
                continue;
            }
            let candidates = runner.expand(env, &beam.state, &beam.steps, 0)?;
            stats.total_expansions += 1;
            let apologies = candidates.iter().filter(|c| classifier.is_apology(&c.step.action)).count();
            stats.apology_terminals += apologies;
            if apologies == candidates.len() {
                stats.all_apology_states += 1;
            }
            for c in candidates {
                let mut steps = beam.steps.clone();
                let mut contexts = beam.contexts.clone();
                let terminal = c.step.action.is_final() || steps.len() + 1 >= config.max_depth;
                steps.push(c.step);
                contexts.push(c.context);
                created += 1;
                pool.push(Beam {
                    steps,
                    contexts,
                    state: c.state,
                    terminal,
                    order: created,
                });
            }
        }
        pool.sort_by(|a, b| {
            let (al, am) = a.key();
            let (bl, bm) = b.key();
            bl.total_cmp(&al).then(bm.total_cmp(&am)).then(a.order.cmp(&b.order))
        });
        pool.truncate(config.beam_width);
        beams = pool;
    }
    let mut trajectories = Vec::with_capacity(beams.len());
    for (rank, beam) in beams.into_iter().enumerate() {
        let t = Trajectory::build(beam.steps, beam.contexts, 0, &classifier)?;
        let id = format!("{}#beam{rank}", task.id);
        runner
            .stack
            .on_trajectory(&t, &runner.prompt, &id, &runner.models, &mut runner.telemetry)?;
        trajectories.push(t);
    }
    let selected = if trajectories.is_empty() { None } else { Some(0) };
    stats.selected_apology = trajectories.first().is_some_and(|t| t.terminal_kind == TerminalKind::Apology);
    Ok(SearchRecord {
        final_answer: trajectories.first().and_then(|t| t.answer().map(String::from)),
        trajectories,
        telemetry: runner.telemetry,
        selected,
        give_up: Some(stats),
    })
}

#[derive(Debug, Clone)]
struct Node {
    state: StateHandle,
    /// Step that led here; `None` for the root.
    step: Option<Step>,
    context: ContextSummary,
    parent: Option<usize>,
    children: Vec<usize>,
    stats: NodeStats,
    terminal: bool,
    depth: usize,
}

struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn path(&self, leaf: usize) -> Vec<usize> {
        let mut path = vec![leaf];
        let mut cur = leaf;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path
    }

    fn steps(&self, leaf: usize) -> (Vec<Step>, Vec<ContextSummary>) {
        let mut path = self.path(leaf);
        path.reverse();
        path.iter()
            .filter_map(|&i| self.nodes[i].step.clone().map(|s| (s, self.nodes[i].context)))
            .unzip()
    }

    fn add_children(&mut self, parent: usize, candidates: Vec<Candidate>, max_depth: usize) -> Vec<usize> {
        let depth = self.nodes[parent].depth + 1;
        candidates
            .into_iter()
            .map(|c| {
                let terminal = c.step.action.is_final() || depth >= max_depth;
                self.nodes.push(Node {
                    state: c.state,
                    step: Some(c.step),
                    context: c.context,
                    parent: Some(parent),
                    children: Vec::new(),
                    stats: NodeStats::default(),
                    terminal,
                    depth,
                });
                let id = self.nodes.len() - 1;
                self.nodes[parent].children.push(id);
                id
            })
            .collect()
    }

    /// Child with the highest step reward, ties to the earliest.
    fn best_child(&self, children: &[usize]) -> usize {
        let reward = |i: usize| self.nodes[i].step.as_ref().and_then(|s| s.reward).unwrap_or(0.0);
        children
            .iter()
            .copied()
            .reduce(|best, c| if reward(c) > reward(best) { c } else { best })
            .expect("expansion yields at least one child")
    }
}

/// MCTS with UCT selection, reward-greedy simulation and configurable
/// backpropagation. Each iteration yields one root-to-leaf trajectory.
pub fn run_mcts(
    task: &Task,
    env: &mut dyn Environment,
    models: Models<'_>,
    stack: &mut AugmentorStack,
    config: &SearchConfig,
    seed: u64,
) -> Result<SearchRecord, Error> {
    config.validate()?;
    require_fork(env)?;
    let mut runner = Runner::new(task, models, stack, config, seed);
    let mut tree = Tree {
        nodes: vec![Node {
            state: env.reset(),
            step: None,
            context: ContextSummary::default(),
            parent: None,
            children: Vec::new(),
            stats: NodeStats::default(),
            terminal: false,
            depth: 0,
        }],
    };
    let mut trajectories = Vec::with_capacity(config.n_iters);
    for iteration in 0..config.n_iters {
        let abort = |e: Error| Error::Aborted {
            attempt: iteration,
            source: Box::new(e),
        };
        let t = mcts_iteration(&mut runner, &mut tree, env, iteration).map_err(abort)?;
        trajectories.push(t);
    }
    let selected = select_best(&trajectories);
    Ok(SearchRecord {
        final_answer: selected.and_then(|i| trajectories[i].answer().map(String::from)),
        trajectories,
        telemetry: runner.telemetry,
        selected,
        give_up: None,
    })
}

fn mcts_iteration(
    runner: &mut Runner<'_>,
    tree: &mut Tree,
    env: &mut dyn Environment,
    iteration: usize,
) -> Result<Trajectory, Error> {
    let config = runner.config;
    let mut node = 0;
    while !tree.nodes[node].children.is_empty() && !tree.nodes[node].terminal {
        let kids: Vec<NodeStats> = tree.nodes[node].children.iter().map(|&c| tree.nodes[c].stats).collect();
        let pick = uct_select(tree.nodes[node].stats.visits, &kids, config.w_exp).expect("non-empty");
        node = tree.nodes[node].children[pick];
    }
    let mut rollout = 0;
    while !tree.nodes[node].terminal && (node == 0 || rollout < config.rollout_depth) {
        let (prefix, _) = tree.steps(node);
        let state = tree.nodes[node].state.clone();
        let candidates = runner.expand(env, &state, &prefix, iteration)?;
        let children = tree.add_children(node, candidates, config.max_depth);
        node = tree.best_child(&children);
        rollout += 1;
    }
    let (steps, contexts) = tree.steps(node);
    if steps.is_empty() {
        return Err(Error::Config("MCTS root is terminal".into()));
    }
    let trajectory = runner.finish(steps, contexts, iteration)?;
    let path = tree.path(node);
    let mut stats: Vec<NodeStats> = path.iter().map(|&i| tree.nodes[i].stats).collect();
    backprop(&mut stats, trajectory.trajectory_score, config.backprop, config.decay_gamma);
    for (&i, s) in path.iter().zip(stats) {
        tree.nodes[i].stats = s;
    }
    Ok(trajectory)
}
