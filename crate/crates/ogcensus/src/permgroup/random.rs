//! Seedable random group elements via product replacement.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::perm::Permutation;
use super::PermGroup;

const TABLE_SLOTS: usize = 10;
const BURN_IN: usize = 50;

/// Product-replacement sampler. Draws approach uniformity on the group after
/// the burn-in; the stream is fully determined by the seed.
pub struct ProductReplacement {
    slots: Vec<Permutation>,
    rng: ChaCha8Rng,
    degree: usize,
}

impl ProductReplacement {
    pub fn new(group: &PermGroup, seed: u64) -> ProductReplacement {
        let degree = group.degree();
        let gens = group.generators();
        let slots = if gens.is_empty() {
            Vec::new()
        } else {
            (0..TABLE_SLOTS.max(gens.len()))
                .map(|i| gens[i % gens.len()].clone())
                .collect()
        };
        let mut pr = ProductReplacement {
            slots,
            rng: ChaCha8Rng::seed_from_u64(seed),
            degree,
        };
        for _ in 0..BURN_IN {
            pr.step();
        }
        pr
    }

    fn step(&mut self) -> usize {
        let n = self.slots.len();
        if n < 2 {
            return 0;
        }
        let i = self.rng.random_range(0..n);
        let mut j = self.rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let other = if self.rng.random_range(0..2) == 0 {
            self.slots[j].clone()
        } else {
            self.slots[j].inverse()
        };
        self.slots[i] = if self.rng.random_range(0..2) == 0 {
            self.slots[i].compose(&other)
        } else {
            other.compose(&self.slots[i])
        };
        i
    }

    pub fn next_element(&mut self) -> Permutation {
        if self.slots.is_empty() {
            return Permutation::identity(self.degree);
        }
        let i = self.step();
        self.slots[i].clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_group_yields_identity() {
        let g = PermGroup::trivial(5);
        let mut pr = ProductReplacement::new(&g, 7);
        for _ in 0..10 {
            assert!(pr.next_element().is_identity());
        }
    }

    #[test]
    fn draws_stay_in_group() {
        let gens = vec![
            Permutation::from_cycles(3, &[&[0, 1]]).unwrap(),
            Permutation::from_cycles(3, &[&[0, 1, 2]]).unwrap(),
        ];
        let g = PermGroup::new(3, gens).unwrap();
        let mut pr = ProductReplacement::new(&g, 1);
        for _ in 0..100 {
            assert!(g.is_member(&pr.next_element()).unwrap());
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let gens = vec![Permutation::from_cycles(5, &[&[0, 1, 2, 3, 4]]).unwrap()];
        let g = PermGroup::new(5, gens).unwrap();
        let mut a = ProductReplacement::new(&g, 42);
        let mut b = ProductReplacement::new(&g, 42);
        for _ in 0..20 {
            assert_eq!(a.next_element(), b.next_element());
        }
    }
}
