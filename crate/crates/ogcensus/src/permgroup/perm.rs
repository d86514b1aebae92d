//! Permutations of a dense 0-based domain, stored as image arrays.

use std::fmt;
use std::str::FromStr;

use super::PermError;

/// Index into the domain a group acts on. Domains here stay well below
/// `u16::MAX` (the largest in practice has 2295 points).
pub type Point = u16;

/// A permutation of `{0, …, n-1}`, stored by its image array.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    images: Vec<Point>,
}

impl Permutation {
    pub fn identity(degree: usize) -> Self {
        Permutation {
            images: (0..degree as Point).collect(),
        }
    }

    /// Validates that `images` is a bijection of `{0, …, n-1}`.
    pub fn from_images(images: Vec<Point>) -> Result<Self, PermError> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &im in &images {
            if (im as usize) >= n {
                return Err(PermError::PointOutOfRange {
                    point: im as usize,
                    degree: n,
                });
            }
            if seen[im as usize] {
                return Err(PermError::NotABijection);
            }
            seen[im as usize] = true;
        }
        Ok(Permutation { images })
    }

    /// Builds a permutation of `{0, …, degree-1}` from disjoint cycles.
    pub fn from_cycles(degree: usize, cycles: &[&[Point]]) -> Result<Self, PermError> {
        let mut images: Vec<Point> = (0..degree as Point).collect();
        let mut touched = vec![false; degree];
        for cycle in cycles {
            for w in 0..cycle.len() {
                let from = cycle[w];
                let to = cycle[(w + 1) % cycle.len()];
                if from as usize >= degree {
                    return Err(PermError::PointOutOfRange {
                        point: from as usize,
                        degree,
                    });
                }
                if touched[from as usize] {
                    return Err(PermError::NotABijection);
                }
                touched[from as usize] = true;
                images[from as usize] = to;
            }
        }
        Self::from_images(images)
    }

    pub fn degree(&self) -> usize {
        self.images.len()
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        self.images[p as usize]
    }

    pub fn images(&self) -> &[Point] {
        &self.images
    }

    /// Raw image vector, for scratch-buffer swaps in hot loops. The caller
    /// must keep it a bijection.
    pub(crate) fn images_vec_mut(&mut self) -> &mut Vec<Point> {
        &mut self.images
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &im)| i == im as usize)
    }

    /// Function composition: `a.compose(&b)` applies `b` first, then `a`,
    /// matching the usual product notation `a·b`.
    pub fn compose(&self, rhs: &Permutation) -> Permutation {
        debug_assert_eq!(self.degree(), rhs.degree());
        Permutation {
            images: rhs.images.iter().map(|&x| self.images[x as usize]).collect(),
        }
    }

    /// In-place variant of [`compose`](Self::compose) writing into `out`.
    pub fn compose_into(&self, rhs: &Permutation, out: &mut Vec<Point>) {
        out.clear();
        out.extend(rhs.images.iter().map(|&x| self.images[x as usize]));
    }

    pub fn inverse(&self) -> Permutation {
        let mut images = vec![0 as Point; self.images.len()];
        for (i, &im) in self.images.iter().enumerate() {
            images[im as usize] = i as Point;
        }
        Permutation { images }
    }

    /// Image of a set, returned sorted.
    pub fn apply_set(&self, set: &[Point]) -> Vec<Point> {
        let mut out: Vec<Point> = set.iter().map(|&x| self.apply(x)).collect();
        out.sort_unstable();
        out
    }
}

impl fmt::Display for Permutation {
    /// Whitespace-separated image list, the on-disk format for permutations.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, im) in self.images.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{im}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation[{self}]")
    }
}

impl FromStr for Permutation {
    type Err = PermError;

    fn from_str(s: &str) -> Result<Self, PermError> {
        let images = s
            .split_whitespace()
            .map(|tok| tok.parse::<Point>().map_err(|_| PermError::Parse(tok.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Permutation::from_images(images)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compose_applies_rhs_first() {
        let a = Permutation::from_cycles(3, &[&[0, 1]]).unwrap();
        let b = Permutation::from_cycles(3, &[&[1, 2]]).unwrap();
        let ab = a.compose(&b);
        // (a·b)(1) = a(b(1)) = a(2) = 2
        assert_eq!(ab.apply(1), 2);
        assert_eq!(ab.apply(0), 1);
    }

    #[test]
    fn inverse_round_trip() {
        let g = Permutation::from_cycles(5, &[&[0, 1, 2, 3, 4]]).unwrap();
        assert!(g.compose(&g.inverse()).is_identity());
        assert!(g.inverse().compose(&g).is_identity());
    }

    #[test]
    fn rejects_non_bijections() {
        assert!(Permutation::from_images(vec![0, 0, 1]).is_err());
        assert!(Permutation::from_images(vec![0, 3]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let g = Permutation::from_cycles(4, &[&[0, 2], &[1, 3]]).unwrap();
        let s = g.to_string();
        assert_eq!(s, "2 3 0 1");
        assert_eq!(s.parse::<Permutation>().unwrap(), g);
    }
}
