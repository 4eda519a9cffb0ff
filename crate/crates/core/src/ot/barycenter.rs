use ndarray::Array2;

use super::simplex::LinearProgram;
use super::transport::transport;
use super::{BarycenterProblem, BarycenterSolution, TransportPlanSet};
use crate::error::Result;

/// Above this many equality rows the coupled LP is solved by decomposition.
const DIRECT_ROW_LIMIT: usize = 400;
/// From this many measures on, the decomposition is faster at any size.
const DIRECT_MEASURE_LIMIT: usize = 6;
const CUT_ROUNDS: usize = 1000;
const GAP_TOLERANCE: f64 = 1e-9;

/// Exact barycenter LP: `min Σ_m ⟨D^m, π^m⟩` over plans with column sums `q^m`
/// and a common row sum `p ∈ Δ_R`.
///
/// Instances with few measures and rows go through the coupled LP in one
/// piece; the others are split over `p` with cutting planes from transport
/// duals. Both are exact.
pub fn barycenter_lp(problem: &BarycenterProblem) -> Result<BarycenterSolution> {
    if problem.support() == 1 {
        return Ok(single_atom(problem));
    }
    if problem.measures() < DIRECT_MEASURE_LIMIT && coupled_rows(problem) <= DIRECT_ROW_LIMIT {
        barycenter_lp_direct(problem)
    } else {
        barycenter_lp_decomposed(problem)
    }
}

fn coupled_rows(problem: &BarycenterProblem) -> usize {
    problem.total_atoms() + problem.measures() * problem.support() + 1
}

fn single_atom(problem: &BarycenterProblem) -> BarycenterSolution {
    let plans = problem.product_plans(&[1.0]);
    BarycenterSolution {
        objective: problem.single_atom_objective(),
        plans: TransportPlanSet { plans, barycenter: vec![1.0] },
        iterations: 0,
        converged: true,
    }
}

/// The coupled LP with every plan entry and `p` as variables, solved by the
/// dense revised simplex.
pub fn barycenter_lp_direct(problem: &BarycenterProblem) -> Result<BarycenterSolution> {
    let (m_count, r) = (problem.measures(), problem.support());
    let atoms = problem.total_atoms();
    let col_offset: Vec<usize> = (0..m_count)
        .scan(0, |acc, m| {
            let here = *acc;
            *acc += problem.marginal(m).len();
            Some(here)
        })
        .collect();
    let row_base = atoms;
    let mass_row = atoms + m_count * r;
    let mut lp = LinearProgram::new(mass_row + 1);

    let mut var_offset = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let (q, d) = (problem.marginal(m), problem.cost(m));
        var_offset.push(lp.cols());
        for row in 0..r {
            for (s, _) in q.iter().enumerate() {
                lp.add_column(d[(row, s)], vec![(col_offset[m] + s, 1.0), (row_base + m * r + row, 1.0)]);
            }
        }
        for (s, &qs) in q.iter().enumerate() {
            lp.set_rhs(col_offset[m] + s, qs);
        }
    }
    let p_offset = lp.cols();
    for row in 0..r {
        let mut entries: Vec<(usize, f64)> = (0..m_count).map(|m| (row_base + m * r + row, -1.0)).collect();
        entries.push((mass_row, 1.0));
        lp.add_column(0.0, entries);
    }
    lp.set_rhs(mass_row, 1.0);

    let sol = lp.solve()?;
    let plans: Vec<Array2<f64>> = (0..m_count)
        .map(|m| {
            let s = problem.marginal(m).len();
            Array2::from_shape_fn((r, s), |(i, j)| sol.x[var_offset[m] + i * s + j].max(0.0))
        })
        .collect();
    let barycenter = normalized(&sol.x[p_offset..p_offset + r]);
    Ok(BarycenterSolution {
        objective: problem.objective(&plans),
        plans: TransportPlanSet { plans, barycenter },
        iterations: sol.pivots,
        converged: true,
    })
}

fn normalized(p: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = p.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total > 0.0 {
        clipped.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / p.len() as f64; p.len()]
    }
}

struct Cut {
    measure: usize,
    slope: Vec<f64>,
    offset: f64,
}

/// Cutting-plane decomposition over the barycenter `p`.
///
/// Each `W_m(p) = min {⟨D^m, π⟩ : π1 = p, πᵀ1 = q^m}` is convex and piecewise
/// linear; a transport solve at `p` returns potentials `(u, v)` with
/// `W_m(p') ≥ u·p' + v·q^m` for every `p'`, tight at `p`. The master problem
/// over these cuts is solved in dual form, whose row count stays `M + R`
/// however many cuts accumulate.
pub fn barycenter_lp_decomposed(problem: &BarycenterProblem) -> Result<BarycenterSolution> {
    let (m_count, r) = (problem.measures(), problem.support());
    if r == 1 {
        return Ok(single_atom(problem));
    }
    let mut cuts: Vec<Cut> = (0..m_count)
        .map(|m| {
            let (q, d) = (problem.marginal(m), problem.cost(m));
            let floor: f64 = q.iter().enumerate().map(|(s, &qs)| qs * d.column(s).fold(f64::INFINITY, |a, &b| a.min(b))).sum();
            Cut { measure: m, slope: vec![0.0; r], offset: floor }
        })
        .collect();

    let mut p = vec![1.0 / r as f64; r];
    let mut best: Option<(f64, Vec<Array2<f64>>, Vec<f64>)> = None;
    let mut lower = f64::NEG_INFINITY;
    let mut rounds = 0;
    let mut converged = false;
    while rounds < CUT_ROUNDS {
        rounds += 1;
        let mut value = 0.0;
        let mut plans = Vec::with_capacity(m_count);
        for m in 0..m_count {
            let sol = transport(&p, problem.marginal(m), problem.cost(m).view())?;
            let offset: f64 = sol.col_potential.iter().zip(problem.marginal(m)).map(|(a, b)| a * b).sum();
            value += sol.cost;
            cuts.push(Cut { measure: m, slope: sol.row_potential, offset });
            plans.push(sol.plan);
        }
        if best.as_ref().is_none_or(|(v, _, _)| value < *v) {
            best = Some((value, plans, p.clone()));
        }
        let upper = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        if upper - lower <= GAP_TOLERANCE * upper.abs().max(1.0) {
            converged = true;
            break;
        }
        let (next, bound) = solve_master(&cuts, m_count, r)?;
        lower = lower.max(bound);
        if upper - lower <= GAP_TOLERANCE * upper.abs().max(1.0) {
            converged = true;
            break;
        }
        p = next;
    }
    let (_, plans, barycenter) = best.expect("at least one round ran");
    if !converged {
        log::warn!("barycenter decomposition stopped after {rounds} rounds with gap open");
    }
    Ok(BarycenterSolution {
        objective: problem.objective(&plans),
        plans: TransportPlanSet { plans, barycenter },
        iterations: rounds,
        converged,
    })
}

/// Dual of `min Σθ_m  s.t.  θ_m − u·p ≥ c  (each cut),  Σp = 1,  p ≥ 0`.
/// Rows: one convexity row per measure, one row per barycenter atom.
/// Returns the master's `p` (from the row multipliers) and its optimal value.
fn solve_master(cuts: &[Cut], m_count: usize, r: usize) -> Result<(Vec<f64>, f64)> {
    let mut lp = LinearProgram::new(m_count + r);
    for m in 0..m_count {
        lp.set_rhs(m, 1.0);
    }
    for cut in cuts {
        let mut entries = Vec::with_capacity(r + 1);
        entries.push((cut.measure, 1.0));
        entries.extend(cut.slope.iter().enumerate().filter(|(_, &u)| u != 0.0).map(|(k, &u)| (m_count + k, -u)));
        lp.add_column(-cut.offset, entries);
    }
    lp.add_column(-1.0, (0..r).map(|k| (m_count + k, 1.0)).collect());
    lp.add_column(1.0, (0..r).map(|k| (m_count + k, -1.0)).collect());
    for k in 0..r {
        lp.add_column(0.0, vec![(m_count + k, 1.0)]);
    }
    let sol = lp.solve()?;
    let p: Vec<f64> = sol.duals[m_count..].iter().map(|y| -y).collect();
    Ok((normalized(&p), -sol.objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, m: usize, r: usize, s: usize) -> BarycenterProblem {
        let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
        let marginals = (0..m)
            .map(|_| {
                let raw: Vec<f64> = (0..s).map(|_| rng.gen_range(0.05..1.0)).collect();
                let t: f64 = raw.iter().sum();
                raw.iter().map(|x| x / t).collect()
            })
            .collect();
        let costs = (0..m).map(|_| Array2::from_shape_fn((r, s), |_| rng.gen_range(0.0..10.0))).collect();
        BarycenterProblem::weighted(weights, marginals, costs).unwrap()
    }

    #[test]
    fn zero_cost_single_measure() {
        let p = BarycenterProblem::new(vec![1.0], vec![vec![0.3, 0.7]], vec![Array2::zeros((2, 2))]).unwrap();
        let sol = barycenter_lp(&p).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert!(sol.plans.column_error(&p) < 1e-9 && sol.plans.row_error() < 1e-9);
    }

    #[test]
    fn single_atom_is_forced() {
        let p = BarycenterProblem::new(
            vec![1.0, 2.0],
            vec![vec![0.5, 0.5], vec![1.0]],
            vec![array![[1.0, 3.0]], array![[4.0]]],
        )
        .unwrap();
        let sol = barycenter_lp(&p).unwrap();
        assert_eq!(sol.barycenter(), &[1.0]);
        assert!((sol.objective - 6.0).abs() < 1e-12);
        assert!((barycenter_lp_direct(&p).unwrap().objective - 6.0).abs() < 1e-12);
    }

    #[test]
    fn decomposition_matches_coupled_lp() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let (m, r, s) = (rng.gen_range(1..5), rng.gen_range(2..5), rng.gen_range(1..6));
            let p = random_problem(&mut rng, m, r, s);
            let a = barycenter_lp_direct(&p).unwrap();
            let b = barycenter_lp_decomposed(&p).unwrap();
            assert!(b.converged);
            assert!((a.objective - b.objective).abs() <= 1e-7 * a.objective.abs().max(1.0), "{} vs {}", a.objective, b.objective);
            for sol in [&a, &b] {
                assert!(sol.plans.column_error(&p) < 1e-9);
                assert!(sol.plans.row_error() < 1e-9);
            }
        }
    }

    #[test]
    fn large_instances_take_the_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_problem(&mut rng, 12, 2, 60);
        assert!(coupled_rows(&p) > DIRECT_ROW_LIMIT);
        let sol = barycenter_lp(&p).unwrap();
        assert!(sol.converged);
        assert!(sol.plans.row_error() < 1e-9);
    }
}
