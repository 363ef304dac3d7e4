use serde::{Deserialize, Serialize};

/// A finite multiset of real atoms, kept sorted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointMeasure {
    atoms: Vec<f64>,
}

/// A closed interval `[lo, hi]`; either end may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

impl PointMeasure {
    pub fn new(mut atoms: Vec<f64>) -> Self {
        assert!(atoms.iter().all(|x| !x.is_nan()), "NaN atom");
        atoms.sort_by(f64::total_cmp);
        PointMeasure { atoms }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn dirac(x: f64) -> Self {
        PointMeasure { atoms: vec![x] }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn into_atoms(self) -> Vec<f64> {
        self.atoms
    }

    /// Total mass.
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn min(&self) -> Option<f64> {
        self.atoms.first().copied()
    }

    /// The image under `x -> x + c`.
    pub fn shift(&self, c: f64) -> Self {
        PointMeasure { atoms: self.atoms.iter().map(|x| x + c).collect() }
    }

    /// The sum of the two measures.
    pub fn superpose(&self, other: &PointMeasure) -> Self {
        let mut atoms = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.atoms.len() && j < other.atoms.len() {
            if self.atoms[i] <= other.atoms[j] {
                atoms.push(self.atoms[i]);
                i += 1;
            } else {
                atoms.push(other.atoms[j]);
                j += 1;
            }
        }
        atoms.extend_from_slice(&self.atoms[i..]);
        atoms.extend_from_slice(&other.atoms[j..]);
        PointMeasure { atoms }
    }

    pub fn push(&mut self, x: f64) {
        assert!(!x.is_nan(), "NaN atom");
        let i = self.atoms.partition_point(|&a| a <= x);
        self.atoms.insert(i, x);
    }

    fn range(&self, a: Interval) -> std::ops::Range<usize> {
        let lo = self.atoms.partition_point(|&x| x < a.lo);
        let hi = self.atoms.partition_point(|&x| x <= a.hi);
        lo..hi.max(lo)
    }

    /// The restriction to a closed interval.
    pub fn restrict(&self, a: Interval) -> Self {
        PointMeasure { atoms: self.atoms[self.range(a)].to_vec() }
    }

    /// Number of atoms in a closed interval.
    pub fn count(&self, a: Interval) -> usize {
        self.range(a).len()
    }

    /// `sum_j alpha_j * measure(A_j)`.
    pub fn laplace_exponent(&self, alphas: &[f64], sets: &[Interval]) -> f64 {
        assert_eq!(alphas.len(), sets.len(), "one weight per interval");
        assert!(alphas.iter().all(|&a| a >= 0.0), "weights must be nonnegative");
        alphas
            .iter()
            .zip(sets)
            .filter(|(&a, _)| a > 0.0)
            .map(|(a, set)| a * self.count(*set) as f64)
            .sum()
    }

    /// `exp(-sum_j alpha_j * measure(A_j))`.
    pub fn laplace_functional(&self, alphas: &[f64], sets: &[Interval]) -> f64 {
        (-self.laplace_exponent(alphas, sets)).exp()
    }
}

impl FromIterator<f64> for PointMeasure {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn laplace_examples() {
        let m = PointMeasure::dirac(0.5);
        assert_eq!(m.laplace_functional(&[1.0], &[Interval::new(0.0, 1.0)]), (-1f64).exp());
        assert_eq!(m.laplace_functional(&[0.0], &[Interval::new(0.0, 1.0)]), 1.0);
        assert_eq!(PointMeasure::empty().laplace_functional(&[3.0], &[Interval::new(-1.0, 1.0)]), 1.0);
    }

    #[test]
    fn closed_interval_endpoints_count() {
        let m = PointMeasure::new(vec![0.0, 1.0, 1.0, 2.0]);
        assert_eq!(m.count(Interval::new(0.0, 1.0)), 3);
        assert_eq!(m.count(Interval::new(1.0, 1.0)), 2);
        assert_eq!(m.count(Interval::new(2.5, 1.0)), 0);
        assert_eq!(m.count(Interval::new(f64::NEG_INFINITY, f64::INFINITY)), 4);
    }

    fn atoms() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 0..40)
    }

    proptest! {
        #[test]
        fn restriction_matches_count(xs in atoms(), lo in -12.0f64..12.0, w in 0.0f64..10.0) {
            let m = PointMeasure::new(xs.clone());
            let a = Interval::new(lo, lo + w);
            prop_assert_eq!(m.restrict(a).len(), m.count(a));
            prop_assert_eq!(m.count(a), xs.iter().filter(|&&x| a.contains(x)).count());
        }

        #[test]
        fn laplace_multiplicative(xs in atoms(), ys in atoms(), alpha in 0.0f64..3.0, lo in -5.0f64..5.0) {
            let a = PointMeasure::new(xs);
            let b = PointMeasure::new(ys);
            let set = [Interval::new(lo, lo + 2.0)];
            let l = a.superpose(&b).laplace_functional(&[alpha], &set);
            let r = a.laplace_functional(&[alpha], &set) * b.laplace_functional(&[alpha], &set);
            prop_assert!((l - r).abs() <= 1e-12 * r.max(1e-300));
        }

        #[test]
        fn superpose_is_sorted_union(xs in atoms(), ys in atoms()) {
            let s = PointMeasure::new(xs.clone()).superpose(&PointMeasure::new(ys.clone()));
            let mut all = xs; all.extend(ys);
            prop_assert_eq!(s, PointMeasure::new(all));
        }

        #[test]
        fn shift_moves_min(xs in atoms(), c in -5.0f64..5.0) {
            let m = PointMeasure::new(xs);
            let s = m.shift(c);
            prop_assert_eq!(s.len(), m.len());
            if let (Some(a), Some(b)) = (m.min(), s.min()) {
                prop_assert!((b - a - c).abs() < 1e-12);
            }
        }
    }
}
