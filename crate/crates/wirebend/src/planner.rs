//! Bending-sequence search: evaluate candidate orders against the simulator
//! and the motion layer, cache failed prefixes in a trie, and walk the
//! remaining choice space depth-first until a feasible sequence appears.
//!
//! The choice space per step is (bend index, placement mode, direction).
//! Branch order: roll placement before lift placement, CW before CCW.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::motion::MotionPlan;
use crate::sim::{
    check_contact_feasibility, pose_wire_for_bend, simulate_bend, wire_collides, BendDirection,
    BendProgram, ContactVerdict, Environment, MachineModel, SimError, WireState,
};

/// Placement/direction choice for one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepChoice {
    pub use_alpha: bool,
    pub direction: BendDirection,
}

/// All step choices in canonical branch order.
pub const CHOICES: [StepChoice; 4] = [
    StepChoice { use_alpha: true, direction: BendDirection::Cw },
    StepChoice { use_alpha: true, direction: BendDirection::Ccw },
    StepChoice { use_alpha: false, direction: BendDirection::Cw },
    StepChoice { use_alpha: false, direction: BendDirection::Ccw },
];

impl StepChoice {
    pub fn code(&self) -> u8 {
        CHOICES.iter().position(|c| c == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Self {
        CHOICES[code as usize]
    }
}

/// A full bending order with per-step choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BendSequence {
    pub order: Vec<usize>,
    pub choices: Vec<StepChoice>,
}

impl BendSequence {
    pub fn steps(&self) -> impl Iterator<Item = (usize, StepChoice)> + '_ {
        self.order.iter().copied().zip(self.choices.iter().copied())
    }
}

/// Trie over (bend index, choice) tuples marking known-infeasible prefixes.
///
/// Prefix-closed: storing a prefix removes any stored descendants, and a
/// lookup answers whether any stored failed prefix covers the query.
#[derive(Debug, Clone, Default)]
pub struct FailedPrefixTree {
    root: Node,
}

#[derive(Debug, Clone, Default)]
struct Node {
    failed: bool,
    children: BTreeMap<(usize, u8), Node>,
}

impl FailedPrefixTree {
    pub fn new() -> Self {
        Self::default()
    }

    /// Marks the prefix `seq[..=fail_step]` as failed.
    pub fn record_failure(&mut self, seq: &BendSequence, fail_step: usize) {
        let mut node = &mut self.root;
        for (idx, choice) in seq.steps().take(fail_step + 1) {
            if node.failed {
                return; // an ancestor already covers this prefix
            }
            node = node.children.entry((idx, choice.code())).or_default();
        }
        node.failed = true;
        node.children.clear();
    }

    /// True when some stored failed prefix covers the given step list.
    pub fn is_pruned(&self, steps: &[(usize, u8)]) -> bool {
        let mut node = &self.root;
        if node.failed {
            return true;
        }
        for key in steps {
            match node.children.get(key) {
                Some(next) => {
                    node = next;
                    if node.failed {
                        return true;
                    }
                }
                None => return false,
            }
        }
        false
    }

    /// Number of stored failed prefixes.
    pub fn len(&self) -> usize {
        fn count(node: &Node) -> usize {
            node.children.values().map(count).sum::<usize>() + usize::from(node.failed)
        }
        count(&self.root)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Lexicographically smallest full sequence avoiding every failed prefix,
/// or `None` when the tree covers the whole choice space.
pub fn next_sequence_dfs(tree: &FailedPrefixTree, n: usize) -> Option<BendSequence> {
    fn descend(
        tree: &FailedPrefixTree,
        n: usize,
        path: &mut Vec<(usize, u8)>,
        used: &mut Vec<bool>,
    ) -> bool {
        if path.len() == n {
            return true;
        }
        for idx in 0..n {
            if used[idx] {
                continue;
            }
            for code in 0..CHOICES.len() as u8 {
                path.push((idx, code));
                if tree.is_pruned(path) {
                    path.pop();
                    continue;
                }
                used[idx] = true;
                if descend(tree, n, path, used) {
                    return true;
                }
                used[idx] = false;
                path.pop();
            }
        }
        false
    }

    let mut path = Vec::with_capacity(n);
    let mut used = vec![false; n];
    if n == 0 || !descend(tree, n, &mut path, &mut used) {
        return None;
    }
    Some(BendSequence {
        order: path.iter().map(|&(i, _)| i).collect(),
        choices: path.iter().map(|&(_, c)| StepChoice::from_code(c)).collect(),
    })
}

/// Why a step failed during evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepFailReason {
    UnreachablePose,
    PreBendCollision,
    NoPunchContact,
    NoDieContact,
    WorkRange,
    ObstructedBend { achieved: f64 },
    PostBendCollision,
    NoGrasp,
    MotionFail,
    SimulatorError(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepFailure {
    pub step: usize,
    pub reason: StepFailReason,
}

/// Wire states around one executed step: posed before and after the bend.
#[derive(Debug, Clone)]
pub struct StepStates {
    pub index: usize,
    pub pre: WireState,
    pub post: WireState,
    /// Flat arclength of this step's bend start.
    pub u: f64,
    pub achieved: f64,
}

/// Verdict from the motion layer for a fully simulated sequence.
#[derive(Debug, Clone)]
pub enum MotionVerdict {
    Success(MotionPlan),
    /// Earliest step whose wire placement left no surviving grasp.
    NoGraspAtStep(usize),
    /// Latest step involved in the first failing transfer, maximized over
    /// candidate grasps; all extensions of that prefix share the failure.
    MotionFail(usize),
}

/// Grasp reasoning and motion planning hook consulted on every sequence
/// that survives simulation.
pub trait MotionOracle {
    fn check(&self, steps: &[StepStates]) -> MotionVerdict;
}

/// Oracle that accepts every sequence; used for simulation-only searches.
pub struct NoMotionCheck;

impl MotionOracle for NoMotionCheck {
    fn check(&self, _steps: &[StepStates]) -> MotionVerdict {
        MotionVerdict::Success(MotionPlan::default())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub clearance: f64,
    /// Shortfall from the target turn treated as an obstructed bend.
    pub angle_slack: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { clearance: crate::sim::DEFAULT_CLEARANCE, angle_slack: 1e-3 }
    }
}

fn scene_bodies(machine: &MachineModel, env: &Environment) -> Vec<crate::collide::Body> {
    let mut bodies = machine.collision_bodies.clone();
    bodies.extend(env.bodies.iter().cloned());
    bodies
}

/// Executes one step of a sequence on the current wire state.
fn evaluate_step(
    wire: &WireState,
    program: &BendProgram,
    bend_index: usize,
    choice: StepChoice,
    machine: &MachineModel,
    env: &Environment,
    bodies: &[crate::collide::Body],
    opts: &EvalOptions,
) -> Result<StepStates, StepFailReason> {
    let step = program
        .steps
        .iter()
        .find(|s| s.index == bend_index)
        .expect("bend index within the program");

    let posed = match pose_wire_for_bend(wire, step, machine, choice.use_alpha, choice.direction) {
        Ok(p) => p,
        Err(SimError::UnreachablePose(_)) => return Err(StepFailReason::UnreachablePose),
        Err(e) => return Err(StepFailReason::SimulatorError(e.to_string())),
    };
    if wire_collides(&posed, bodies, opts.clearance) {
        return Err(StepFailReason::PreBendCollision);
    }
    match check_contact_feasibility(&posed, step.u, machine, choice.direction) {
        ContactVerdict::Feasible => {}
        ContactVerdict::NoPunchContact => return Err(StepFailReason::NoPunchContact),
        ContactVerdict::NoDieContact => return Err(StepFailReason::NoDieContact),
    }
    let (bent, achieved) =
        match simulate_bend(&posed, step, choice.direction, machine, env, opts.clearance) {
            Ok(r) => r,
            Err(SimError::TargetExceedsWorkRange { .. }) => return Err(StepFailReason::WorkRange),
            Err(SimError::Machine(_)) => return Err(StepFailReason::WorkRange),
            Err(e) => return Err(StepFailReason::SimulatorError(e.to_string())),
        };
    if achieved < step.turn - opts.angle_slack {
        return Err(StepFailReason::ObstructedBend { achieved });
    }
    if wire_collides(&bent, bodies, opts.clearance) {
        return Err(StepFailReason::PostBendCollision);
    }
    Ok(StepStates { index: bend_index, pre: posed, post: bent, u: step.u, achieved })
}

/// Simulates a full sequence step by step.
///
/// Returns the per-step wire states on success or the first failing step.
pub fn evaluate_sequence(
    seq: &BendSequence,
    program: &BendProgram,
    machine: &MachineModel,
    env: &Environment,
    opts: &EvalOptions,
) -> Result<Vec<StepStates>, StepFailure> {
    let bodies = scene_bodies(machine, env);
    let mut wire = program.initial_wire();
    let mut out = Vec::with_capacity(seq.order.len());
    for (t, (idx, choice)) in seq.steps().enumerate() {
        match evaluate_step(&wire, program, idx, choice, machine, env, &bodies, opts) {
            Ok(states) => {
                // Next step continues from the bent shape, pose discarded.
                wire = states.post.with_pose(crate::geom::Iso3::identity());
                out.push(states);
            }
            Err(reason) => return Err(StepFailure { step: t, reason }),
        }
    }
    Ok(out)
}

/// Search statistics; node counts are bend-step simulations.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SearchStats {
    pub nodes_explored: u64,
    pub prunes: u64,
    pub sequences_tried: u64,
    pub wall_time_ms: u64,
}

/// One record per evaluated (partial) sequence in the search trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub order: Vec<usize>,
    pub choices: Vec<u8>,
    pub fail_step: Option<usize>,
    pub reason: String,
    pub elapsed_ms: u64,
}

#[derive(Debug)]
pub struct PlanResult {
    pub sequence: BendSequence,
    pub steps: Vec<StepStates>,
    pub motion: MotionPlan,
    pub stats: SearchStats,
}

#[derive(Debug)]
pub enum SearchOutcome {
    Solved(Box<PlanResult>),
    Infeasible(SearchStats),
    Timeout(SearchStats),
}

impl SearchOutcome {
    pub fn stats(&self) -> &SearchStats {
        match self {
            SearchOutcome::Solved(r) => &r.stats,
            SearchOutcome::Infeasible(s) | SearchOutcome::Timeout(s) => s,
        }
    }
}

/// Depth-first pruned search over bend orders and per-step choices.
///
/// Evaluates steps incrementally against the simulator, stores every failed
/// prefix in the trie (so later iterations skip all extensions), and runs
/// the motion oracle on each fully simulated sequence. Motion failures are
/// cached at the earliest step the oracle blames. Work-range violations are
/// placement-independent, so a candidate whose turn exceeds the machine's
/// range for the wire makes the whole instance infeasible up front.
pub fn prune_search(
    program: &BendProgram,
    machine: &MachineModel,
    env: &Environment,
    motion: &dyn MotionOracle,
    budget: Duration,
    opts: &EvalOptions,
) -> (SearchOutcome, FailedPrefixTree, Vec<TraceRecord>) {
    let started = Instant::now();
    let mut tree = FailedPrefixTree::new();
    let mut trace = Vec::new();
    let mut stats = SearchStats::default();
    let n = program.steps.len();

    let finish_stats = |mut stats: SearchStats, started: Instant| {
        stats.wall_time_ms = started.elapsed().as_millis() as u64;
        stats
    };

    if n == 0 {
        return (SearchOutcome::Infeasible(finish_stats(stats, started)), tree, trace);
    }

    // Placement-independent pre-check: turns beyond the work range can
    // never be executed, regardless of order.
    if let Ok(limit) = machine.max_feasible_angle(program.wire_diameter, BendDirection::Ccw) {
        if program.steps.iter().any(|s| s.turn > limit) {
            return (SearchOutcome::Infeasible(finish_stats(stats, started)), tree, trace);
        }
    } else {
        return (SearchOutcome::Infeasible(finish_stats(stats, started)), tree, trace);
    }

    let bodies = scene_bodies(machine, env);

    // DFS stack: wire states per depth plus an iterator cursor.
    let mut states: Vec<WireState> = vec![program.initial_wire()];
    let mut step_states: Vec<StepStates> = Vec::new();
    let mut path: Vec<(usize, u8)> = Vec::new();
    let mut used = vec![false; n];
    // cursor[d] = next (idx, code) pair to try at depth d.
    let mut cursor: Vec<(usize, u8)> = vec![(0, 0)];

    let record = |trace: &mut Vec<TraceRecord>,
                  path: &[(usize, u8)],
                  fail_step: Option<usize>,
                  reason: &str,
                  started: Instant| {
        trace.push(TraceRecord {
            order: path.iter().map(|&(i, _)| i).collect(),
            choices: path.iter().map(|&(_, c)| c).collect(),
            fail_step,
            reason: reason.to_string(),
            elapsed_ms: started.elapsed().as_millis() as u64,
        });
    };

    loop {
        if started.elapsed() > budget {
            return (SearchOutcome::Timeout(finish_stats(stats, started)), tree, trace);
        }
        let depth = path.len();
        let (mut idx, mut code) = cursor[depth];

        // Find the next untried, unpruned branch at this depth.
        let mut advanced = None;
        while idx < n {
            if !used[idx] {
                while (code as usize) < CHOICES.len() {
                    path.push((idx, code));
                    if tree.is_pruned(&path) {
                        stats.prunes += 1;
                        path.pop();
                        code += 1;
                        continue;
                    }
                    path.pop();
                    advanced = Some((idx, code));
                    break;
                }
                if advanced.is_some() {
                    break;
                }
            }
            idx += 1;
            code = 0;
        }

        let Some((idx, code)) = advanced else {
            // Depth exhausted: backtrack.
            if depth == 0 {
                return (SearchOutcome::Infeasible(finish_stats(stats, started)), tree, trace);
            }
            let (pidx, pcode) = path.pop().unwrap();
            used[pidx] = false;
            states.pop();
            step_states.pop();
            cursor.pop();
            cursor[depth - 1] = (pidx, pcode + 1);
            continue;
        };
        cursor[depth] = (idx, code);

        let choice = StepChoice::from_code(code);
        stats.nodes_explored += 1;
        match evaluate_step(
            states.last().unwrap(),
            program,
            idx,
            choice,
            machine,
            env,
            &bodies,
            opts,
        ) {
            Ok(ss) => {
                path.push((idx, code));
                used[idx] = true;
                states.push(ss.post.with_pose(crate::geom::Iso3::identity()));
                step_states.push(ss);
                cursor.push((0, 0));

                if path.len() == n {
                    stats.sequences_tried += 1;
                    match motion.check(&step_states) {
                        MotionVerdict::Success(plan) => {
                            record(&mut trace, &path, None, "success", started);
                            let sequence = BendSequence {
                                order: path.iter().map(|&(i, _)| i).collect(),
                                choices: path
                                    .iter()
                                    .map(|&(_, c)| StepChoice::from_code(c))
                                    .collect(),
                            };
                            stats.wall_time_ms = started.elapsed().as_millis() as u64;
                            return (
                                SearchOutcome::Solved(Box::new(PlanResult {
                                    sequence,
                                    steps: step_states,
                                    motion: plan,
                                    stats,
                                })),
                                tree,
                                trace,
                            );
                        }
                        MotionVerdict::NoGraspAtStep(k) => {
                            let seq = BendSequence {
                                order: path.iter().map(|&(i, _)| i).collect(),
                                choices: path
                                    .iter()
                                    .map(|&(_, c)| StepChoice::from_code(c))
                                    .collect(),
                            };
                            tree.record_failure(&seq, k);
                            record(&mut trace, &path, Some(k), "no-grasp", started);
                            // Backtrack one level; tree lookups skip the
                            // rest of the doomed subtree.
                            let (pidx, pcode) = path.pop().unwrap();
                            used[pidx] = false;
                            states.pop();
                            step_states.pop();
                            cursor.pop();
                            cursor[depth] = (pidx, pcode + 1);
                        }
                        MotionVerdict::MotionFail(k) => {
                            let seq = BendSequence {
                                order: path.iter().map(|&(i, _)| i).collect(),
                                choices: path
                                    .iter()
                                    .map(|&(_, c)| StepChoice::from_code(c))
                                    .collect(),
                            };
                            tree.record_failure(&seq, k);
                            record(&mut trace, &path, Some(k), "motion-fail", started);
                            let (pidx, pcode) = path.pop().unwrap();
                            used[pidx] = false;
                            states.pop();
                            step_states.pop();
                            cursor.pop();
                            cursor[depth] = (pidx, pcode + 1);
                        }
                    }
                }
            }
            Err(reason) => {
                // Record the failed prefix and continue with the next branch.
                path.push((idx, code));
                let seq = BendSequence {
                    order: path.iter().map(|&(i, _)| i).collect(),
                    choices: path.iter().map(|&(_, c)| StepChoice::from_code(c)).collect(),
                };
                tree.record_failure(&seq, depth);
                record(&mut trace, &path, Some(depth), &format!("{reason:?}"), started);
                path.pop();
                cursor[depth] = (idx, code + 1);
            }
        }
    }
}
