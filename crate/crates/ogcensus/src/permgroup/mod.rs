//! Permutation-group engine: orbits, stabilizers, membership, orders, and
//! seedable random elements, for groups acting on dense index domains.
//!
//! All geometric objects elsewhere in the crate are referenced by index into
//! a canonical point list, so groups here act on `{0, …, n-1}`.

mod bsgs;
mod perm;
mod random;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use thiserror::Error;

pub use bsgs::StabilizerChain;
pub use perm::{Permutation, Point};
pub use random::ProductReplacement;

#[derive(Debug, Error)]
pub enum PermError {
    #[error("image list is not a bijection")]
    NotABijection,
    #[error("point {point} out of range for domain of size {degree}")]
    PointOutOfRange { point: usize, degree: usize },
    #[error("degree mismatch: expected {expected}, got {got}")]
    DegreeMismatch { expected: usize, got: usize },
    #[error("cannot parse permutation token `{0}`")]
    Parse(String),
}

/// A permutation group given by generators, with a lazily built stabilizer
/// chain. Once the chain is filled the group is immutable and can be shared
/// across threads freely.
#[derive(Debug)]
pub struct PermGroup {
    degree: usize,
    generators: Vec<Permutation>,
    base_hint: Vec<Point>,
    chain: OnceLock<StabilizerChain>,
}

impl Clone for PermGroup {
    fn clone(&self) -> Self {
        PermGroup {
            degree: self.degree,
            generators: self.generators.clone(),
            base_hint: self.base_hint.clone(),
            chain: match self.chain.get() {
                Some(c) => OnceLock::from(c.clone()),
                None => OnceLock::new(),
            },
        }
    }
}

impl PermGroup {
    pub fn new(degree: usize, generators: Vec<Permutation>) -> Result<Self, PermError> {
        for g in &generators {
            if g.degree() != degree {
                return Err(PermError::DegreeMismatch {
                    expected: degree,
                    got: g.degree(),
                });
            }
        }
        Ok(PermGroup {
            degree,
            generators,
            base_hint: Vec::new(),
            chain: OnceLock::new(),
        })
    }

    pub fn trivial(degree: usize) -> Self {
        PermGroup {
            degree,
            generators: Vec::new(),
            base_hint: Vec::new(),
            chain: OnceLock::new(),
        }
    }

    /// Like [`new`](Self::new), but prefers the given points (in order) when
    /// choosing base points for the stabilizer chain.
    pub fn with_base_hint(
        degree: usize,
        generators: Vec<Permutation>,
        base_hint: Vec<Point>,
    ) -> Result<Self, PermError> {
        let mut g = Self::new(degree, generators)?;
        g.base_hint = base_hint;
        Ok(g)
    }

    /// Builds a group from a stream of candidate generators, keeping only
    /// those that enlarge the group. Returns the group (reduced generators,
    /// chain prefilled) together with its order.
    pub fn from_generators_reduced(
        degree: usize,
        base_hint: &[Point],
        candidates: impl IntoIterator<Item = Permutation>,
    ) -> Result<(Self, u128), PermError> {
        let mut chain = StabilizerChain::new_incremental(degree, base_hint);
        let mut kept = Vec::new();
        for g in candidates {
            if g.degree() != degree {
                return Err(PermError::DegreeMismatch {
                    expected: degree,
                    got: g.degree(),
                });
            }
            if chain.absorb(&g) {
                kept.push(g);
            }
        }
        let order = chain.order();
        let group = PermGroup {
            degree,
            generators: kept,
            base_hint: base_hint.to_vec(),
            chain: OnceLock::from(chain),
        };
        Ok((group, order))
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn generators(&self) -> &[Permutation] {
        &self.generators
    }

    pub fn identity(&self) -> Permutation {
        Permutation::identity(self.degree)
    }

    /// The stabilizer chain, built on first use.
    pub fn schreier_sims(&self) -> &StabilizerChain {
        self.chain
            .get_or_init(|| StabilizerChain::build(self.degree, &self.generators, &self.base_hint))
    }

    pub fn order(&self) -> u128 {
        self.schreier_sims().order()
    }

    pub fn is_member(&self, g: &Permutation) -> Result<bool, PermError> {
        if g.degree() != self.degree {
            return Err(PermError::DegreeMismatch {
                expected: self.degree,
                got: g.degree(),
            });
        }
        Ok(self.schreier_sims().contains(g))
    }

    /// Plain orbit of a point, in BFS discovery order.
    pub fn orbit(&self, point: Point) -> Result<Vec<Point>, PermError> {
        self.check_point(point)?;
        let mut orbit = vec![point];
        let mut seen = vec![false; self.degree];
        seen[point as usize] = true;
        let mut head = 0;
        while head < orbit.len() {
            let x = orbit[head];
            for g in &self.generators {
                let y = g.apply(x);
                if !seen[y as usize] {
                    seen[y as usize] = true;
                    orbit.push(y);
                }
            }
            head += 1;
        }
        Ok(orbit)
    }

    /// Orbit together with transporters: `transversal[y]` maps `point` to `y`.
    pub fn orbit_with_transversal(
        &self,
        point: Point,
    ) -> Result<(Vec<Point>, HashMap<Point, Permutation>), PermError> {
        self.check_point(point)?;
        let mut orbit = vec![point];
        let mut transversal: HashMap<Point, Permutation> = HashMap::new();
        transversal.insert(point, Permutation::identity(self.degree));
        let mut head = 0;
        while head < orbit.len() {
            let x = orbit[head];
            for g in &self.generators {
                let y = g.apply(x);
                if !transversal.contains_key(&y) {
                    let u_y = g.compose(&transversal[&x]);
                    transversal.insert(y, u_y);
                    orbit.push(y);
                }
            }
            head += 1;
        }
        Ok((orbit, transversal))
    }

    /// The stabilizer of `point`, with a reduced generating set and its
    /// order cached. Satisfies |G| = |orbit(point)| · |stabilizer|.
    pub fn point_stabilizer(&self, point: Point) -> Result<PermGroup, PermError> {
        self.check_point(point)?;
        let fresh;
        let chain = match self.chain.get() {
            Some(c) if c.num_levels() > 0 && c.level_base(0) == point => c,
            _ => {
                fresh = StabilizerChain::build_forcing(self.degree, &self.generators, &[], &[point]);
                &fresh
            }
        };
        let raw = chain.first_point_stabilizer_generators();
        let (stab, _) = PermGroup::from_generators_reduced(self.degree, &[], raw)?;
        Ok(stab)
    }

    /// Seedable product-replacement sampler for this group.
    pub fn random_sampler(&self, seed: u64) -> ProductReplacement {
        ProductReplacement::new(self, seed)
    }

    /// Serializes as one permutation per line (whitespace-separated images).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for g in &self.generators {
            let _ = writeln!(out, "{g}");
        }
        out
    }

    /// Parses the [`to_text`](Self::to_text) format.
    pub fn from_text(degree: usize, text: &str) -> Result<Self, PermError> {
        let gens = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.parse::<Permutation>())
            .collect::<Result<Vec<_>, _>>()?;
        PermGroup::new(degree, gens)
    }

    fn check_point(&self, point: Point) -> Result<(), PermError> {
        if (point as usize) >= self.degree {
            return Err(PermError::PointOutOfRange {
                point: point as usize,
                degree: self.degree,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn cyc(n: usize, cycles: &[&[Point]]) -> Permutation {
        Permutation::from_cycles(n, cycles).unwrap()
    }

    /// Exhaustive closure, the independent order oracle for small groups.
    pub(crate) fn brute_force_elements(degree: usize, gens: &[Permutation]) -> HashSet<Permutation> {
        let mut elements: HashSet<Permutation> = HashSet::new();
        elements.insert(Permutation::identity(degree));
        let mut frontier: Vec<Permutation> = vec![Permutation::identity(degree)];
        while let Some(g) = frontier.pop() {
            for h in gens {
                let gh = h.compose(&g);
                if elements.insert(gh.clone()) {
                    frontier.push(gh);
                }
            }
        }
        elements
    }

    /// The 7 points of the projective plane over F2 in lexicographic
    /// coordinate order, acted on by two matrices generating the full
    /// collineation group.
    pub(crate) fn fano_group() -> PermGroup {
        let points: Vec<[u8; 3]> = vec![
            [0, 0, 1],
            [0, 1, 0],
            [0, 1, 1],
            [1, 0, 0],
            [1, 0, 1],
            [1, 1, 0],
            [1, 1, 1],
        ];
        let index = |v: [u8; 3]| points.iter().position(|&p| p == v).unwrap() as Point;
        let apply = |m: [[u8; 3]; 3], v: [u8; 3]| {
            let mut out = [0u8; 3];
            for (r, row) in m.iter().enumerate() {
                out[r] = (0..3).map(|c| row[c] & v[c]).fold(0, |a, b| a ^ b);
            }
            out
        };
        // A cyclic shift and a transvection generate GL(3, 2).
        let mats = [
            [[0, 0, 1], [1, 0, 0], [0, 1, 0]],
            [[1, 1, 0], [0, 1, 0], [0, 0, 1]],
        ];
        let gens = mats
            .iter()
            .map(|&m| {
                Permutation::from_images(
                    points.iter().map(|&p| index(apply(m, p))).collect::<Vec<_>>(),
                )
                .unwrap()
            })
            .collect();
        PermGroup::new(7, gens).unwrap()
    }

    #[test]
    fn s3_order_and_stabilizer() {
        let g = PermGroup::new(3, vec![cyc(3, &[&[0, 1]]), cyc(3, &[&[0, 1, 2]])]).unwrap();
        assert_eq!(g.order(), 6);
        let stab = g.point_stabilizer(0).unwrap();
        assert_eq!(stab.order(), 2);
        assert!(stab.generators().iter().all(|h| h.apply(0) == 0));
    }

    #[test]
    fn empty_generator_list_trivial() {
        let g = PermGroup::trivial(10);
        assert_eq!(g.order(), 1);
        let stab = g.point_stabilizer(4).unwrap();
        assert_eq!(stab.order(), 1);
    }

    #[test]
    fn fano_order_matches_brute_force() {
        let g = fano_group();
        let brute = brute_force_elements(7, g.generators());
        assert_eq!(brute.len(), 168);
        assert_eq!(g.order(), 168);
    }

    #[test]
    fn fano_orbit_and_point_stabilizer() {
        let g = fano_group();
        let (orbit, transversal) = g.orbit_with_transversal(0).unwrap();
        assert_eq!(orbit.len(), 7);
        for (&y, t) in &transversal {
            assert_eq!(t.apply(0), y);
        }
        assert!(transversal[&0].is_identity());
        // 168 / 7 = 24 by orbit–stabilizer.
        let stab = g.point_stabilizer(0).unwrap();
        assert_eq!(stab.order(), 24);
        assert!(stab.generators().iter().all(|h| h.apply(0) == 0));
    }

    #[test]
    fn orbit_stabilizer_identity_all_points() {
        let g = fano_group();
        for p in 0..7 {
            let orbit = g.orbit(p).unwrap();
            let stab = g.point_stabilizer(p).unwrap();
            assert_eq!(g.order(), orbit.len() as u128 * stab.order());
        }
    }

    #[test]
    fn five_cycle_orbit() {
        let g = PermGroup::new(5, vec![cyc(5, &[&[0, 1, 2, 3, 4]])]).unwrap();
        let orbit = g.orbit(0).unwrap();
        assert_eq!(orbit.len(), 5);
        let (_, tr) = g.orbit_with_transversal(0).unwrap();
        assert_eq!(tr.len(), 5);
    }

    #[test]
    fn identity_only_group_orbit() {
        let g = PermGroup::trivial(5);
        let (orbit, tr) = g.orbit_with_transversal(3).unwrap();
        assert_eq!(orbit, vec![3]);
        assert!(tr[&3].is_identity());
    }

    #[test]
    fn orbit_point_out_of_range() {
        let g = PermGroup::trivial(5);
        assert!(matches!(
            g.orbit_with_transversal(9),
            Err(PermError::PointOutOfRange { .. })
        ));
    }

    #[test]
    fn membership_examples() {
        let g = PermGroup::new(3, vec![cyc(3, &[&[0, 1, 2]])]).unwrap();
        assert!(g.is_member(&Permutation::identity(3)).unwrap());
        assert!(!g.is_member(&cyc(3, &[&[0, 1]])).unwrap());
        assert!(matches!(
            g.is_member(&Permutation::identity(4)),
            Err(PermError::DegreeMismatch { .. })
        ));
    }

    #[test]
    fn random_products_are_members() {
        let g = fano_group();
        let mut sampler = g.random_sampler(99);
        let mut prod = g.identity();
        for _ in 0..20 {
            prod = sampler.next_element().compose(&prod);
        }
        assert!(g.is_member(&prod).unwrap());
    }

    #[test]
    fn random_draws_cover_most_of_fano_group() {
        let g = fano_group();
        let mut sampler = g.random_sampler(12345);
        let mut seen = HashSet::new();
        for _ in 0..10_000 {
            seen.insert(sampler.next_element());
        }
        assert!(seen.len() >= 160, "only {} distinct elements", seen.len());
        for e in &seen {
            assert!(g.is_member(e).unwrap());
        }
    }

    #[test]
    fn reduced_generators_drop_redundant() {
        let gens = vec![
            cyc(4, &[&[0, 1]]),
            cyc(4, &[&[0, 1]]), // duplicate
            cyc(4, &[&[0, 1, 2, 3]]),
        ];
        let (g, order) = PermGroup::from_generators_reduced(4, &[], gens).unwrap();
        assert_eq!(order, 24);
        assert_eq!(g.generators().len(), 2);
    }

    #[test]
    fn group_text_round_trip() {
        let g = fano_group();
        let text = g.to_text();
        let back = PermGroup::from_text(7, &text).unwrap();
        assert_eq!(back.order(), 168);
        assert_eq!(back.generators(), g.generators());
    }

    #[test]
    fn generators_pass_own_membership() {
        let g = fano_group();
        for gen in g.generators() {
            assert!(g.is_member(gen).unwrap());
        }
    }
}
