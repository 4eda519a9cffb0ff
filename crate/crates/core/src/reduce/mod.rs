//! Block-coordinate reduction of a scenario tree towards a smaller tree with
//! fixed structure: alternate the closed-form quantizer update with one
//! barycenter problem per reduced node and stage.

mod plan;
mod report;

use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ibp::ibp_solve;
use crate::mam::mam_solve;
use crate::nested::{child_block, root_distance, CostTable};
use crate::ot::{barycenter_lp, wasserstein_lp, BarycenterProblem};
use crate::tree::{compensated_sum, path_cost_tables, ScenarioTree};

pub use plan::{init_plan, optimal_plan, ConditionalPlan};
use plan::check_compatible;
pub use report::{ReductionConfig, ReductionReport, SolveRecord, SolverKind, StartPlan};

/// Measures whose weight is below this fraction of the node's total weight
/// are left out of the barycenter and transported exactly to its result.
const NEGLIGIBLE_WEIGHT: f64 = 1e-12;

/// Solver for a barycenter of `n_subtrees` measures with up to `branching`
/// atoms each: MAM for many branching subtrees or very wide ones, LP otherwise.
pub fn choose_solver(n_subtrees: usize, branching: usize, config: &ReductionConfig) -> SolverKind {
    if (n_subtrees > config.n_big && branching > 1) || branching > config.branch_big {
        SolverKind::Mam
    } else {
        SolverKind::Lp
    }
}

/// Moves every reduced quantizer to the plan-weighted mean of the original
/// quantizers at its stage. Reduced nodes that receive no mass keep their value.
pub fn quantizer_step(original: &ScenarioTree, reduced: &ScenarioTree, plan: &ConditionalPlan) -> Result<ScenarioTree> {
    check_compatible(original, reduced)?;
    let d = reduced.dim();
    let mut values = reduced.quantizers().to_vec();
    for t in 0..=reduced.depth() {
        let joint = plan.joint(t);
        for (b, &n) in reduced.stage_nodes(t).iter().enumerate() {
            let column = joint.column(b);
            let mass = compensated_sum(column.iter().copied());
            if mass <= 0.0 {
                continue;
            }
            let target = &mut values[n * d..(n + 1) * d];
            target.fill(0.0);
            for (a, &m) in original.stage_nodes(t).iter().enumerate() {
                let w = column[a] / mass;
                if w != 0.0 {
                    for (x, y) in target.iter_mut().zip(original.quantizer(m)) {
                        *x += w * y;
                    }
                }
            }
        }
    }
    reduced.clone().with_quantizers(values)
}

/// Conditional costs of a fixed plan, evaluated backwards from the leaf path
/// costs of the current quantizers.
pub fn evaluate_plan(original: &ScenarioTree, reduced: &ScenarioTree, plan: &ConditionalPlan, order: f64) -> Result<CostTable> {
    check_compatible(original, reduced)?;
    let mut tables = path_cost_tables(original, reduced, order)?;
    for t in (0..original.depth()).rev() {
        let (na, nb) = (original.stage_nodes(t), reduced.stage_nodes(t));
        let mut table = Array2::zeros((na.len(), nb.len()));
        for (a, &m) in na.iter().enumerate() {
            for (b, &n) in nb.iter().enumerate() {
                let cost = child_block(original, m, reduced, n, &tables[t + 1]);
                table[(a, b)] = (&cost * plan.block(t, a, b)).sum();
            }
        }
        tables[t] = table;
    }
    Ok(CostTable { order, stages: tables })
}

/// Result of one probability step.
#[derive(Clone, Debug)]
pub struct ProbabilityStep {
    pub plan: ConditionalPlan,
    pub costs: CostTable,
    pub solves: Vec<SolveRecord>,
    /// Wall time of each stage `t = 0..T`.
    pub stage_seconds: Vec<f64>,
}

struct NodeSolve {
    /// Plans against every original node of the stage, children × children.
    blocks: Vec<Array2<f64>>,
    deltas: Vec<f64>,
    record: Option<SolveRecord>,
}

/// Re-solves every conditional plan, stage by stage from the leaves up.
///
/// For a reduced node `n` at stage `t`, the original nodes `m` of that stage
/// enter a barycenter problem with weights `π(m, n)` taken from `plan`,
/// marginals `P(·|m)` and costs `δ(i, j)` of the stage below. Weightless
/// measures are transported exactly onto the resulting barycenter.
pub fn probability_step(
    original: &ScenarioTree,
    reduced: &ScenarioTree,
    plan: &ConditionalPlan,
    config: &ReductionConfig,
    iteration: usize,
) -> Result<ProbabilityStep> {
    check_compatible(original, reduced)?;
    let depth = original.depth();
    let mut tables = path_cost_tables(original, reduced, config.order)?;
    let mut blocks: Vec<Vec<Array2<f64>>> = vec![Vec::new(); depth];
    let mut solves = Vec::new();
    let mut stage_seconds = vec![0.0; depth];
    for t in (0..depth).rev() {
        let start = Instant::now();
        let (na, nb) = (original.stage_nodes(t), reduced.stage_nodes(t));
        let below = &tables[t + 1];
        let results: Vec<NodeSolve> = nb
            .par_iter()
            .enumerate()
            .map(|(b, &n)| solve_node(original, reduced, plan, below, t, b, n, config, iteration))
            .collect::<Result<_>>()?;
        let mut table = Array2::zeros((na.len(), nb.len()));
        let mut stage_blocks = vec![Array2::zeros((0, 0)); na.len() * nb.len()];
        for (b, res) in results.into_iter().enumerate() {
            for (a, (block, delta)) in res.blocks.into_iter().zip(res.deltas).enumerate() {
                table[(a, b)] = delta;
                stage_blocks[a * nb.len() + b] = block;
            }
            solves.extend(res.record);
        }
        tables[t] = table;
        blocks[t] = stage_blocks;
        stage_seconds[t] = start.elapsed().as_secs_f64();
    }
    solves.sort_by_key(|r| (r.stage, r.node));
    Ok(ProbabilityStep {
        plan: ConditionalPlan::from_blocks(original, reduced, blocks),
        costs: CostTable { order: config.order, stages: tables },
        solves,
        stage_seconds,
    })
}

#[allow(clippy::too_many_arguments)]
fn solve_node(
    original: &ScenarioTree,
    reduced: &ScenarioTree,
    plan: &ConditionalPlan,
    below: &Array2<f64>,
    t: usize,
    b: usize,
    n: usize,
    config: &ReductionConfig,
    iteration: usize,
) -> Result<NodeSolve> {
    let na = original.stage_nodes(t);
    let width = reduced.children(n).len();
    let costs: Vec<Array2<f64>> = na.iter().map(|&m| child_block(original, m, reduced, n, below)).collect();
    let marginals: Vec<Vec<f64>> = na.iter().map(|&m| original.conditional_children(m)).collect();
    let finish = |blocks: Vec<Array2<f64>>, record| {
        let deltas = blocks.iter().zip(&costs).map(|(p, c)| (p * c).sum()).collect();
        Ok(NodeSolve { blocks, deltas, record })
    };

    if width == 1 {
        let blocks = marginals.iter().map(|q| Array2::from_shape_fn((q.len(), 1), |(i, _)| q[i])).collect();
        return finish(blocks, None);
    }

    let joint = plan.joint(t);
    let weights: Vec<f64> = (0..na.len()).map(|a| joint[(a, b)]).collect();
    let total: f64 = weights.iter().sum();
    let kept: Vec<usize> = (0..na.len()).filter(|&a| total > 0.0 && weights[a] > NEGLIGIBLE_WEIGHT * total).collect();
    if kept.is_empty() {
        let p = vec![1.0 / width as f64; width];
        let blocks = marginals.iter().map(|q| Array2::from_shape_fn((q.len(), width), |(i, j)| q[i] * p[j])).collect();
        return finish(blocks, None);
    }

    let branching = kept.iter().map(|&a| marginals[a].len()).max().unwrap_or(0);
    let solver = match config.solver {
        SolverKind::Auto => choose_solver(kept.len(), branching, config),
        s => s,
    };
    let alphas: Vec<f64> = kept.iter().map(|&a| weights[a]).collect();
    let margs: Vec<Vec<f64>> = kept.iter().map(|&a| marginals[a].clone()).collect();
    let base: Vec<Array2<f64>> = kept.iter().map(|&a| costs[a].t().to_owned()).collect();
    let solution = match solver {
        SolverKind::Lp | SolverKind::Auto => barycenter_lp(&BarycenterProblem::weighted(alphas, margs, base)?)?,
        SolverKind::Mam => {
            let warm: Vec<Array2<f64>> = kept.iter().map(|&a| plan.block(t, a, b).t().to_owned()).collect();
            mam_solve(&BarycenterProblem::weighted(alphas, margs, base)?, &config.mam, Some(&warm))?
        }
        SolverKind::Ibp => {
            // λ is relative to the largest cost of the problem.
            let scale = base.iter().flat_map(|d| d.iter()).fold(0.0f64, |a, &x| a.max(x));
            let base = if scale > 0.0 { base.into_iter().map(|d| d / scale).collect() } else { base };
            ibp_solve(&BarycenterProblem::weighted(alphas, margs, base)?, &config.ibp)?
        }
    };
    let p = solution.barycenter().to_vec();
    let mut plans = solution.plans.plans.into_iter();
    let mut blocks = Vec::with_capacity(na.len());
    for a in 0..na.len() {
        if kept.binary_search(&a).is_ok() {
            blocks.push(plans.next().expect("one plan per kept measure").reversed_axes());
        } else {
            blocks.push(wasserstein_lp(&marginals[a], &p, costs[a].view())?.1);
        }
    }
    let record = SolveRecord {
        iteration,
        stage: t,
        node: n,
        solver,
        measures: kept.len(),
        branching,
        inner_iterations: solution.iterations,
        converged: solution.converged,
    };
    finish(blocks, Some(record))
}

/// Final probabilities: leaf masses `P'(n) = Σ_m π(m, n)` of the leaf-stage
/// plan, renormalized, then summed upwards.
fn extract_probabilities(reduced: &ScenarioTree, plan: &ConditionalPlan) -> Result<ScenarioTree> {
    let depth = reduced.depth();
    let leaf_joint = plan.joint(depth);
    let mut prob = vec![0.0; reduced.len()];
    let leaves = reduced.stage_nodes(depth);
    let masses: Vec<f64> = (0..leaves.len()).map(|b| compensated_sum(leaf_joint.column(b).iter().map(|x| x.max(0.0)))).collect();
    let total = compensated_sum(masses.iter().copied());
    if !(total > 0.0) {
        return Err(Error::Domain("leaf-stage plan carries no mass".into()));
    }
    for (&n, w) in leaves.iter().zip(&masses) {
        prob[n] = w / total;
    }
    for t in (0..depth).rev() {
        for &n in reduced.stage_nodes(t) {
            prob[n] = compensated_sum(reduced.children(n).iter().map(|&c| prob[c]));
        }
    }
    reduced.clone().with_probabilities(prob)
}

fn run_in_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(job))
}

/// Reduces `original` onto the structure of `start`, returning the reduced
/// tree and a report of the iterations.
///
/// The reduced tree's structure never changes. Each outer iteration updates
/// the quantizers, then all conditional plans; the loop stops once `δ(0,0)`
/// improves by at most `config.tol`, or after `config.max_iter` iterations
/// (`report.converged` is then false).
pub fn reduce_tree(original: &ScenarioTree, start: &ScenarioTree, config: &ReductionConfig) -> Result<(ScenarioTree, ReductionReport)> {
    check_compatible(original, start)?;
    if config.order != 2.0 {
        return Err(Error::Domain(format!("only order 2 has a closed-form quantizer step, got {}", config.order)));
    }
    if !(config.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {}", config.tol)));
    }
    original.check()?;
    start.check()?;
    run_in_pool(config.workers, || reduce_loop(original, start, config))?
}

fn reduce_loop(original: &ScenarioTree, start: &ScenarioTree, config: &ReductionConfig) -> Result<(ScenarioTree, ReductionReport)> {
    let (optimal, costs) = optimal_plan(original, start, config.order)?;
    let initial_nd = costs.distance();
    let (mut plan, initial_delta) = match config.start {
        StartPlan::Optimal => (optimal, costs.root()),
        StartPlan::Uniform => {
            let plan = init_plan(original, start)?;
            let delta = evaluate_plan(original, start, &plan, config.order)?.root();
            (plan, delta)
        }
    };
    let mut reduced = start.clone();
    let mut report = ReductionReport {
        solver: Some(config.solver),
        initial_delta,
        initial_nd,
        ..Default::default()
    };

    let mut previous = initial_delta;
    for k in 1..=config.max_iter {
        let clock = Instant::now();
        reduced = quantizer_step(original, &reduced, &plan)?;
        let step = probability_step(original, &reduced, &plan, config, k)?;
        plan = step.plan;
        let delta = step.costs.root();
        report.delta_trace.push(delta);
        report.nd_trace.push(root_distance(delta, config.order));
        report.stage_seconds.push(step.stage_seconds);
        report.solves.extend(step.solves);
        report.iteration_seconds.push(clock.elapsed().as_secs_f64());
        log::debug!("iteration {k}: delta {delta:.9e}");
        if previous - delta <= config.tol {
            report.converged = true;
            break;
        }
        previous = delta;
    }
    report.final_nd = *report.nd_trace.last().unwrap_or(&initial_nd);
    let tree = if report.delta_trace.is_empty() { reduced } else { extract_probabilities(&reduced, &plan)? };
    Ok((tree, report))
}
