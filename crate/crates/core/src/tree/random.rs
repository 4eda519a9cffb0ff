use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ScenarioTree;
use crate::error::{Error, Result};

/// Builds a layered tree where every node of stage `t` has `branching[t]`
/// children. Nodes are numbered breadth-first, so each stage is a contiguous
/// id range.
///
/// `quantizer` fills the `d` coordinates of a node; `cond` returns the
/// conditional probabilities of the `b` children of a node.
pub fn layered_tree<Q, C>(branching: &[usize], dim: usize, mut quantizer: Q, mut cond: C) -> Result<ScenarioTree>
where
    Q: FnMut(&mut [f64]),
    C: FnMut(usize) -> Vec<f64>,
{
    if branching.iter().any(|&b| b == 0) {
        return Err(Error::Domain("branching factors must be at least 1".into()));
    }
    let total: usize = branching
        .iter()
        .scan(1usize, |width, &b| {
            *width *= b;
            Some(*width)
        })
        .sum::<usize>()
        + 1;
    let mut parent = Vec::with_capacity(total);
    let mut prob = Vec::with_capacity(total);
    let mut values = vec![0.0; total * dim];

    parent.push(None);
    prob.push(1.0);
    quantizer(&mut values[0..dim]);
    let mut frontier = 0..1usize;
    for &b in branching {
        let start = parent.len();
        for node in frontier.clone() {
            let c = cond(b);
            debug_assert_eq!(c.len(), b);
            for &pc in &c {
                let id = parent.len();
                parent.push(Some(node));
                prob.push(prob[node] * pc);
                quantizer(&mut values[id * dim..(id + 1) * dim]);
            }
        }
        frontier = start..parent.len();
    }
    ScenarioTree::from_parts(dim, parent, values, prob)
}

/// Full `b`-ary tree over `stages + 1` levels with i.i.d. uniform quantizers
/// in `[lo, hi]^dim` and uniform conditional probabilities `1/b`.
pub fn generate_random(stages: usize, branching: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Result<ScenarioTree> {
    if stages < 1 || branching < 1 {
        return Err(Error::Domain(format!("need stages >= 1 and branching >= 1, got {stages} and {branching}")));
    }
    if !(lo <= hi) {
        return Err(Error::Domain(format!("empty quantizer range [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    layered_tree(
        &vec![branching; stages],
        dim,
        |q| q.iter_mut().for_each(|x| *x = uniform(&mut rng, lo, hi)),
        |b| vec![1.0 / b as f64; b],
    )
}

pub(crate) fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_follow_branching() {
        let t = generate_random(3, 6, 1, -10.0, 10.0, 1).unwrap();
        assert_eq!(t.len(), 259);
        assert_eq!(t.leaves().count(), 216);
        assert!(t.validate().is_empty());

        let chain = generate_random(1, 1, 1, -1.0, 1.0, 1).unwrap();
        assert_eq!(chain.len(), 2);
        assert_eq!(chain.prob(1), 1.0);
    }

    #[test]
    fn large_tree_counts() {
        let t = generate_random(7, 5, 1, -10.0, 10.0, 0).unwrap();
        assert_eq!(t.len(), 97_656);
        assert_eq!(t.leaves().count(), 78_125);
        assert!(t.validate().is_empty());
    }

    #[test]
    fn same_seed_same_tree() {
        let a = generate_random(3, 3, 2, -10.0, 10.0, 42).unwrap();
        let b = generate_random(3, 3, 2, -10.0, 10.0, 42).unwrap();
        let c = generate_random(3, 3, 2, -10.0, 10.0, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.quantizers().iter().all(|x| (-10.0..=10.0).contains(x)));
    }

    #[test]
    fn bad_arguments() {
        assert!(generate_random(0, 2, 1, 0.0, 1.0, 0).is_err());
        assert!(generate_random(2, 0, 1, 0.0, 1.0, 0).is_err());
    }
}
