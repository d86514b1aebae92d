//! Base and strong generating sets (Schreier–Sims), with deterministic
//! closure and an incremental absorption interface.
//!
//! The chain is deterministic for a fixed generator list and base hint: the
//! randomized warm start draws from a fixed-seed generator, and every orbit
//! BFS iterates generators in a fixed order. Orders are reported only after
//! the full deterministic Schreier-generator closure has run.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::perm::{Permutation, Point};

/// Number of random subproducts sifted in before the deterministic closure.
const WARM_START_DRAWS: usize = 24;
const WARM_START_SEED: u64 = 0x0631_5EED;

#[derive(Clone, Debug)]
struct Level {
    base: Point,
    /// Indices into `strong_gens` of the generators acting at this level
    /// (each fixes all shallower base points).
    gen_idx: Vec<usize>,
    /// Orbit of `base` in BFS discovery order; `orbit[0] == base`.
    orbit: Vec<Point>,
    /// Position of each domain point in `orbit`, or -1.
    orbit_pos: Vec<i32>,
    /// `inv_transversal[i]` maps `orbit[i]` back to `base`.
    inv_transversal: Vec<Permutation>,
}

#[derive(Clone, Debug)]
pub struct StabilizerChain {
    degree: usize,
    strong_gens: Vec<Permutation>,
    levels: Vec<Level>,
    /// Preferred points for new base positions, in order.
    base_hint: Vec<Point>,
}

impl StabilizerChain {
    /// Builds a complete chain for the group generated by `gens`.
    pub fn build(degree: usize, gens: &[Permutation], base_hint: &[Point]) -> StabilizerChain {
        Self::build_forcing(degree, gens, base_hint, &[])
    }

    /// Builds a chain whose base *starts* with the given points, present even
    /// when some of them have singleton orbits. Used for point stabilizers.
    pub fn build_forcing(
        degree: usize,
        gens: &[Permutation],
        base_hint: &[Point],
        forced_base: &[Point],
    ) -> StabilizerChain {
        let mut chain = StabilizerChain {
            degree,
            strong_gens: Vec::new(),
            levels: Vec::new(),
            base_hint: base_hint.to_vec(),
        };
        for &b in forced_base {
            chain.push_level_with_base(b);
        }
        for g in gens {
            chain.seed_generator(g.clone(), 0);
        }
        chain.warm_start(gens);
        for i in (0..chain.levels.len()).rev() {
            chain.complete_level(i);
        }
        chain
    }

    /// Empty chain for incremental use with [`absorb`](Self::absorb).
    pub fn new_incremental(degree: usize, base_hint: &[Point]) -> StabilizerChain {
        StabilizerChain {
            degree,
            strong_gens: Vec::new(),
            levels: Vec::new(),
            base_hint: base_hint.to_vec(),
        }
    }

    /// Adds `g` to the generated group. Returns `false` when `g` was already
    /// a member (the chain is unchanged), `true` when the group grew.
    pub fn absorb(&mut self, g: &Permutation) -> bool {
        debug_assert_eq!(g.degree(), self.degree);
        let (residue, level) = self.sift_from(g.clone(), 0);
        let Some(residue) = residue else { return false };
        if level == self.levels.len() {
            self.push_level_for(&residue);
        }
        let idx = self.strong_gens.len();
        self.strong_gens.push(residue);
        for k in 0..=level {
            self.levels[k].gen_idx.push(idx);
            self.recompute_orbit(k);
        }
        for k in (0..=level).rev() {
            self.complete_level(k);
        }
        true
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn order(&self) -> u128 {
        self.levels.iter().map(|l| l.orbit.len() as u128).product()
    }

    pub fn base(&self) -> Vec<Point> {
        self.levels.iter().map(|l| l.base).collect()
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level_base(&self, level: usize) -> Point {
        self.levels[level].base
    }

    pub fn level_orbit(&self, level: usize) -> &[Point] {
        &self.levels[level].orbit
    }

    /// Membership by sifting.
    pub fn contains(&self, g: &Permutation) -> bool {
        debug_assert_eq!(g.degree(), self.degree);
        self.sift_from(g.clone(), 0).0.is_none()
    }

    /// The strong generators fixing the first base point; together they
    /// generate the stabilizer of that point (empty base ⇒ trivial group).
    pub fn first_point_stabilizer_generators(&self) -> Vec<Permutation> {
        let mut idxs: Vec<usize> = self
            .levels
            .iter()
            .skip(1)
            .flat_map(|l| l.gen_idx.iter().copied())
            .collect();
        idxs.sort_unstable();
        idxs.dedup();
        idxs.into_iter().map(|i| self.strong_gens[i].clone()).collect()
    }

    /// Sifts `g` through levels `from..`, returning the residue (`None` when
    /// it reduces to the identity) and the level where sifting stopped.
    fn sift_from(&self, g: Permutation, from: usize) -> (Option<Permutation>, usize) {
        let mut g = g;
        let mut scratch: Vec<Point> = Vec::with_capacity(self.degree);
        for (l, level) in self.levels.iter().enumerate().skip(from) {
            let im = g.apply(level.base);
            let pos = level.orbit_pos[im as usize];
            if pos < 0 {
                return (Some(g), l);
            }
            level.inv_transversal[pos as usize].compose_into(&g, &mut scratch);
            std::mem::swap(g.images_vec_mut(), &mut scratch);
        }
        if g.is_identity() {
            (None, self.levels.len())
        } else {
            (Some(g), self.levels.len())
        }
    }

    /// Places an input generator without running any closure.
    fn seed_generator(&mut self, g: Permutation, min_level: usize) {
        let (residue, level) = self.sift_from(g, min_level);
        let Some(residue) = residue else { return };
        if level == self.levels.len() {
            self.push_level_for(&residue);
        }
        let idx = self.strong_gens.len();
        self.strong_gens.push(residue);
        for k in min_level..=level {
            self.levels[k].gen_idx.push(idx);
            self.recompute_orbit(k);
        }
    }

    /// Sifts in random subproducts of the input generators so that deep
    /// levels are populated before the deterministic closure runs.
    fn warm_start(&mut self, gens: &[Permutation]) {
        if gens.is_empty() || self.levels.is_empty() {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(WARM_START_SEED);
        let mut current = Permutation::identity(self.degree);
        for _ in 0..WARM_START_DRAWS {
            for _ in 0..3 {
                let pick = &gens[rng.random_range(0..gens.len())];
                current = if rng.random_range(0..2) == 0 {
                    current.compose(pick)
                } else {
                    pick.compose(&current)
                };
            }
            let (residue, level) = self.sift_from(current.clone(), 0);
            let Some(residue) = residue else { continue };
            if level == 0 {
                continue;
            }
            if level == self.levels.len() {
                self.push_level_for(&residue);
            }
            let idx = self.strong_gens.len();
            self.strong_gens.push(residue);
            self.levels[level].gen_idx.push(idx);
            self.recompute_orbit(level);
        }
    }

    fn push_level_for(&mut self, g: &Permutation) {
        let used: Vec<Point> = self.base();
        let hint = self
            .base_hint
            .iter()
            .copied()
            .find(|&p| !used.contains(&p) && g.apply(p) != p);
        let base = hint.unwrap_or_else(|| {
            (0..self.degree as Point)
                .find(|&p| g.apply(p) != p)
                .expect("non-identity permutation moves a point")
        });
        self.push_level_with_base(base);
    }

    fn push_level_with_base(&mut self, base: Point) {
        self.levels.push(Level {
            base,
            gen_idx: Vec::new(),
            orbit: vec![base],
            orbit_pos: {
                let mut pos = vec![-1i32; self.degree];
                pos[base as usize] = 0;
                pos
            },
            inv_transversal: vec![Permutation::identity(self.degree)],
        });
    }

    fn recompute_orbit(&mut self, level: usize) {
        let base = self.levels[level].base;
        let gen_idx = self.levels[level].gen_idx.clone();
        let gens: Vec<&Permutation> = gen_idx.iter().map(|&i| &self.strong_gens[i]).collect();
        let inverses: Vec<Permutation> = gens.iter().map(|g| g.inverse()).collect();

        let mut orbit = vec![base];
        let mut orbit_pos = vec![-1i32; self.degree];
        orbit_pos[base as usize] = 0;
        let mut inv_transversal = vec![Permutation::identity(self.degree)];
        let mut head = 0;
        while head < orbit.len() {
            let x = orbit[head];
            for (g, ginv) in gens.iter().zip(&inverses) {
                let y = g.apply(x);
                if orbit_pos[y as usize] < 0 {
                    orbit_pos[y as usize] = orbit.len() as i32;
                    // v_y = v_x ∘ g⁻¹ maps y back to the base.
                    let v_y = inv_transversal[head].compose(ginv);
                    orbit.push(y);
                    inv_transversal.push(v_y);
                }
            }
            head += 1;
        }
        let l = &mut self.levels[level];
        l.orbit = orbit;
        l.orbit_pos = orbit_pos;
        l.inv_transversal = inv_transversal;
    }

    /// Verifies every Schreier generator of `level` sifts to the identity
    /// through the deeper chain, extending the chain where it does not.
    /// Assumes levels deeper than `level` are complete on entry.
    fn complete_level(&mut self, level: usize) {
        let mut p_idx = 0;
        while p_idx < self.levels[level].orbit.len() {
            let p = self.levels[level].orbit[p_idx];
            let u_p = self.levels[level].inv_transversal[p_idx].inverse();
            let mut g_idx = 0;
            while g_idx < self.levels[level].gen_idx.len() {
                let gi = self.levels[level].gen_idx[g_idx];
                g_idx += 1;
                let g = &self.strong_gens[gi];
                let y = g.apply(p);
                let y_pos = self.levels[level].orbit_pos[y as usize] as usize;
                let schreier = self.levels[level].inv_transversal[y_pos]
                    .compose(g)
                    .compose(&u_p);
                if schreier.is_identity() {
                    continue;
                }
                let (residue, lvl) = self.sift_from(schreier, level + 1);
                let Some(residue) = residue else { continue };
                if lvl == self.levels.len() {
                    self.push_level_for(&residue);
                }
                let idx = self.strong_gens.len();
                self.strong_gens.push(residue);
                for k in level + 1..=lvl {
                    self.levels[k].gen_idx.push(idx);
                    self.recompute_orbit(k);
                }
                for k in (level + 1..=lvl).rev() {
                    self.complete_level(k);
                }
            }
            p_idx += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cyc(n: usize, cycles: &[&[Point]]) -> Permutation {
        Permutation::from_cycles(n, cycles).unwrap()
    }

    #[test]
    fn s3_order() {
        let chain = StabilizerChain::build(3, &[cyc(3, &[&[0, 1]]), cyc(3, &[&[0, 1, 2]])], &[]);
        assert_eq!(chain.order(), 6);
    }

    #[test]
    fn empty_generators_trivial_group() {
        let chain = StabilizerChain::build(10, &[], &[]);
        assert_eq!(chain.order(), 1);
        assert!(chain.contains(&Permutation::identity(10)));
    }

    #[test]
    fn membership_in_cyclic_group() {
        let chain = StabilizerChain::build(3, &[cyc(3, &[&[0, 1, 2]])], &[]);
        assert_eq!(chain.order(), 3);
        assert!(!chain.contains(&cyc(3, &[&[0, 1]])));
        assert!(chain.contains(&cyc(3, &[&[0, 2, 1]])));
    }

    #[test]
    fn absorb_grows_group() {
        let mut chain = StabilizerChain::new_incremental(4, &[]);
        assert!(chain.absorb(&cyc(4, &[&[0, 1]])));
        assert_eq!(chain.order(), 2);
        assert!(!chain.absorb(&cyc(4, &[&[0, 1]])));
        assert!(chain.absorb(&cyc(4, &[&[0, 1, 2, 3]])));
        assert_eq!(chain.order(), 24);
    }
}
