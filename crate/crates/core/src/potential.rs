//! Exact solves for the harmonic-type functions of a finite chain.
//!
//! Every solver reduces to a Dirichlet problem: fix the values on some
//! vertices, prescribe `-Δf` on the rest, and solve the resulting dense
//! system exactly.

use num::{BigRational, One, Signed, Zero};

use crate::chain::{ChainError, MarkovChain, VertexId};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PotentialKind {
    /// Probability of hitting `b` before `c`.
    HittingProb,
    /// Expected hitting time of `b`.
    HittingTime,
    /// Stationary distribution, normalised to total mass one.
    Stationary,
    /// Expected number of visits to `b`.
    ExpectedVisits,
    /// Any other function, e.g. a random test function.
    Arbitrary,
}

/// An exact function on the vertices of a chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PotentialVector {
    pub kind: PotentialKind,
    pub values: Vec<BigRational>,
}

impl PotentialVector {
    pub fn new(kind: PotentialKind, values: Vec<BigRational>) -> Self {
        PotentialVector { kind, values }
    }

    pub fn arbitrary(values: Vec<BigRational>) -> Self {
        PotentialVector::new(PotentialKind::Arbitrary, values)
    }

    pub fn get(&self, v: VertexId) -> &BigRational {
        &self.values[v.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> BigRational {
        self.values.iter().max().cloned().unwrap_or_else(BigRational::zero)
    }
}

/// `Σ_v p(u,v) f(v) − f(u)`.
pub fn laplacian(chain: &MarkovChain, f: &[BigRational], u: VertexId) -> Result<BigRational, ChainError> {
    if f.len() < chain.len() {
        let missing = VertexId(f.len());
        return Err(ChainError::MissingValue(chain.label(missing).to_string()));
    }
    let mut acc = -f[u.0].clone();
    for (v, p) in chain.row(u) {
        acc += p * &f[v.0];
    }
    Ok(acc)
}

/// Solve `-Δf(u) = source(u)` for every `u` with `fixed[u] == None`, with
/// `f(u) = fixed[u]` elsewhere.
pub fn solve_dirichlet(
    chain: &MarkovChain,
    fixed: &[Option<BigRational>],
    source: &[BigRational],
    what: &str,
) -> Result<Vec<BigRational>, ChainError> {
    let n = chain.len();
    let free: Vec<usize> = (0..n).filter(|&u| fixed[u].is_none()).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &u) in free.iter().enumerate() {
        slot[u] = k;
    }
    let m = free.len();
    let mut matrix = vec![vec![BigRational::zero(); m]; m];
    let mut rhs = vec![BigRational::zero(); m];
    for (k, &u) in free.iter().enumerate() {
        matrix[k][k] += BigRational::one();
        rhs[k] = source[u].clone();
        for (v, p) in chain.row(VertexId(u)) {
            match &fixed[v.0] {
                Some(value) => rhs[k] += p * value,
                None => matrix[k][slot[v.0]] -= p,
            }
        }
    }
    let solution = linalg::solve(&matrix, &rhs).ok_or_else(|| ChainError::SingularSystem(what.to_string()))?;
    let mut values: Vec<BigRational> = fixed.iter().map(|f| f.clone().unwrap_or_default()).collect();
    for (k, &u) in free.iter().enumerate() {
        values[u] = solution[k].clone();
    }
    Ok(values)
}

/// `h(v) = P_v(T_b < T_c)`.
pub fn solve_hitting_prob(chain: &MarkovChain, b: VertexId, c: VertexId) -> Result<PotentialVector, ChainError> {
    solve_hitting_prob_sets(chain, &[b], &[c])
}

/// Probability of hitting the set `hit` before the set `avoid`.
pub fn solve_hitting_prob_sets(
    chain: &MarkovChain,
    hit: &[VertexId],
    avoid: &[VertexId],
) -> Result<PotentialVector, ChainError> {
    let mut targets = hit.to_vec();
    targets.extend_from_slice(avoid);
    let reach = chain.can_reach(&targets);
    if let Some(u) = reach.iter().position(|r| !r) {
        return Err(ChainError::SingularSystem(format!(
            "{} cannot reach the target set",
            chain.label(VertexId(u))
        )));
    }
    let mut fixed = vec![None; chain.len()];
    for &v in avoid {
        fixed[v.0] = Some(BigRational::zero());
    }
    for &v in hit {
        fixed[v.0] = Some(BigRational::one());
    }
    let source = vec![BigRational::zero(); chain.len()];
    let values = solve_dirichlet(chain, &fixed, &source, "hitting probability")?;
    Ok(PotentialVector::new(PotentialKind::HittingProb, values))
}

/// `k(v) = E_v T_b`.
pub fn solve_hitting_time(chain: &MarkovChain, b: VertexId) -> Result<PotentialVector, ChainError> {
    let reach = chain.can_reach(&[b]);
    if let Some(u) = reach.iter().position(|r| !r) {
        return Err(ChainError::SingularSystem(format!(
            "{} cannot reach {}",
            chain.label(VertexId(u)),
            chain.label(b)
        )));
    }
    let mut fixed = vec![None; chain.len()];
    fixed[b.0] = Some(BigRational::zero());
    let source = vec![BigRational::one(); chain.len()];
    let values = solve_dirichlet(chain, &fixed, &source, "hitting time")?;
    Ok(PotentialVector::new(PotentialKind::HittingTime, values))
}

/// The stationary distribution of an irreducible chain.
pub fn solve_stationary(chain: &MarkovChain) -> Result<PotentialVector, ChainError> {
    if !chain.is_irreducible() {
        return Err(ChainError::ReducibleChain);
    }
    let n = chain.len();
    // Row v of the system is the balance equation at v; the last one is
    // replaced by the normalisation Σ π = 1.
    let mut matrix = vec![vec![BigRational::zero(); n]; n];
    for u in 0..n {
        matrix[u][u] -= BigRational::one();
        for (v, p) in chain.row(VertexId(u)) {
            matrix[v.0][u] += p;
        }
    }
    let mut rhs = vec![BigRational::zero(); n];
    matrix[n - 1] = vec![BigRational::one(); n];
    rhs[n - 1] = BigRational::one();
    let values = linalg::solve(&matrix, &rhs).ok_or_else(|| ChainError::SingularSystem("stationary".into()))?;
    Ok(PotentialVector::new(PotentialKind::Stationary, values))
}

/// `e_{b,c} = P_b(T_c < T_b^+) = −Δh_{b,c}(b)`.
pub fn escape_prob(chain: &MarkovChain, b: VertexId, c: VertexId) -> Result<BigRational, ChainError> {
    let h = solve_hitting_prob(chain, b, c)?;
    Ok(-laplacian(chain, &h.values, b)?)
}

/// Expected number of visits to `b` (counting time zero) for a chain that
/// escapes into absorbing sinks. Vertices that cannot reach `b` get zero.
pub fn expected_visits(chain: &MarkovChain, b: VertexId) -> Result<PotentialVector, ChainError> {
    let reach = chain.can_reach(&[b]);
    let fixed: Vec<Option<BigRational>> = reach
        .iter()
        .map(|&r| if r { None } else { Some(BigRational::zero()) })
        .collect();
    let mut source = vec![BigRational::zero(); chain.len()];
    source[b.0] = BigRational::one();
    let values = solve_dirichlet(chain, &fixed, &source, "expected visits: no escape from b")?;
    Ok(PotentialVector::new(PotentialKind::ExpectedVisits, values))
}

/// Check the defining sign and boundary conditions of a solved potential.
pub fn satisfies_invariants(f: &PotentialVector, b: VertexId, c: Option<VertexId>) -> bool {
    match f.kind {
        PotentialKind::HittingProb => {
            f.values.iter().all(crate::rational::is_probability)
                && f.get(b).is_one()
                && c.is_none_or(|c| f.get(c).is_zero())
        }
        PotentialKind::HittingTime => f.get(b).is_zero() && f.values.iter().all(|v| !v.is_negative()),
        PotentialKind::Stationary => f.values.iter().all(|v| v.is_positive()),
        PotentialKind::ExpectedVisits => f.values.iter().all(|v| !v.is_negative()),
        PotentialKind::Arbitrary => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::examples::{cycle, path, two_cycle};
    use crate::chain::ChainBuilder;
    use crate::rational::{int, ratio};

    #[test]
    fn gamblers_ruin_on_path() {
        let p = path(4);
        let h = solve_hitting_prob(&p, VertexId(0), VertexId(3)).unwrap();
        assert_eq!(h.values, vec![int(1), ratio(2, 3), ratio(1, 3), int(0)]);
        assert!(satisfies_invariants(&h, VertexId(0), Some(VertexId(3))));
        assert!(laplacian(&p, &h.values, VertexId(1)).unwrap().is_zero());
    }

    #[test]
    fn hitting_prob_is_unchanged_by_redirect() {
        let p = path(4);
        let r = p.redirect_to(&[VertexId(0), VertexId(3)], VertexId(1)).unwrap();
        assert_eq!(
            solve_hitting_prob(&p, VertexId(0), VertexId(3)).unwrap(),
            solve_hitting_prob(&r, VertexId(0), VertexId(3)).unwrap()
        );
    }

    #[test]
    fn triangle_midpoint() {
        let h = solve_hitting_prob(&cycle(3), VertexId(0), VertexId(1)).unwrap();
        assert_eq!(h.values[2], ratio(1, 2));
        assert_eq!(escape_prob(&cycle(3), VertexId(0), VertexId(1)).unwrap(), ratio(3, 4));
    }

    #[test]
    fn unreachable_target_is_singular() {
        let mut b = ChainBuilder::new();
        let x = b.vertex("x").unwrap();
        let y = b.vertex("y").unwrap();
        let z = b.vertex("z").unwrap();
        b.edge_by_id(x, x, int(1)).unwrap();
        b.edge_by_id(y, z, int(1)).unwrap();
        b.edge_by_id(z, y, int(1)).unwrap();
        let chain = b.build().unwrap();
        assert!(matches!(
            solve_hitting_prob(&chain, y, z),
            Err(ChainError::SingularSystem(_))
        ));
    }

    #[test]
    fn hitting_times() {
        let k = solve_hitting_time(&two_cycle(), VertexId(1)).unwrap();
        assert_eq!(k.values, vec![int(1), int(0)]);

        let k = solve_hitting_time(&path(4), VertexId(0)).unwrap();
        assert_eq!(k.values, vec![int(0), int(5), int(8), int(9)]);

        let k = solve_hitting_time(&cycle(3), VertexId(0)).unwrap();
        assert_eq!(k.values[1], k.values[2]);
        assert_eq!(k.values[1], int(2));
    }

    #[test]
    fn laplacian_of_hitting_time_at_b_is_k_of_a() {
        // On the 2-cycle with b = 1: Δk(b) = k(a) = 1.
        let c = two_cycle();
        let k = solve_hitting_time(&c, VertexId(1)).unwrap();
        assert_eq!(laplacian(&c, &k.values, VertexId(1)).unwrap(), int(1));
        let constant = vec![ratio(7, 3); 2];
        assert!(laplacian(&c, &constant, VertexId(0)).unwrap().is_zero());
        assert!(matches!(laplacian(&c, &[int(1)], VertexId(0)), Err(ChainError::MissingValue(_))));
    }

    #[test]
    fn stationary_distributions() {
        assert_eq!(solve_stationary(&two_cycle()).unwrap().values, vec![ratio(1, 2), ratio(1, 2)]);
        assert_eq!(solve_stationary(&cycle(3)).unwrap().values, vec![ratio(1, 3); 3]);

        let mut b = ChainBuilder::new();
        let a = b.vertex("a").unwrap();
        let bb = b.vertex("b").unwrap();
        b.edge_by_id(a, bb, int(1)).unwrap();
        b.edge_by_id(bb, a, ratio(1, 2)).unwrap();
        b.edge_by_id(bb, bb, ratio(1, 2)).unwrap();
        let pi = solve_stationary(&b.build().unwrap()).unwrap();
        assert_eq!(pi.values, vec![ratio(1, 3), ratio(2, 3)]);

        let reducible = path(3).make_absorbing(&[VertexId(0)]);
        assert_eq!(solve_stationary(&reducible), Err(ChainError::ReducibleChain));
    }

    fn sink_chain(loop_prob: BigRational) -> (MarkovChain, VertexId, VertexId, VertexId) {
        let mut b = ChainBuilder::new();
        let start = b.vertex("start").unwrap();
        let target = b.vertex("b").unwrap();
        let sink = b.vertex("sink").unwrap();
        b.edge_by_id(start, target, int(1)).unwrap();
        if !loop_prob.is_zero() {
            b.edge_by_id(target, target, loop_prob.clone()).unwrap();
        }
        b.edge_by_id(target, sink, int(1) - loop_prob).unwrap();
        b.edge_by_id(sink, sink, int(1)).unwrap();
        (b.build().unwrap(), start, target, sink)
    }

    #[test]
    fn expected_visit_counts() {
        let (chain, start, b, sink) = sink_chain(int(0));
        let g = expected_visits(&chain, b).unwrap();
        assert_eq!(g.values[b.0], int(1));
        assert_eq!(g.values[start.0], int(1));
        assert_eq!(g.values[sink.0], int(0));

        let (chain, _, b, _) = sink_chain(ratio(1, 2));
        let g = expected_visits(&chain, b).unwrap();
        assert_eq!(g.values[b.0], int(2));
        assert_eq!(-laplacian(&chain, &g.values, b).unwrap(), int(1));

        assert!(matches!(
            expected_visits(&two_cycle(), VertexId(0)),
            Err(ChainError::SingularSystem(_))
        ));
    }
}
