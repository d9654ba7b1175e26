//! Clamped, equidistant B-spline bases on the unit interval.
//!
//! Every coefficient function of the count models is a linear combination of
//! these basis functions evaluated at rescaled time `t/T`. Because the time
//! grid is fixed for a given series, [`BasisGrid`] caches the nonzero basis
//! values once so likelihood evaluations only touch `degree + 1` entries per
//! observation.

use crate::error::{Error, Result};

/// Default piecewise-polynomial degree (cubic).
pub const DEFAULT_DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    num_basis: usize,
    degree: usize,
    knots: Vec<f64>,
}

impl SplineBasis {
    /// Builds a clamped basis with `num_basis` functions of the given degree.
    ///
    /// The `num_basis - degree - 1` interior knots are placed at equal
    /// spacing, so `(4, 3)` gives the cubic Bernstein basis and `(6, 3)` has
    /// interior knots at 1/3 and 2/3.
    pub fn new(num_basis: usize, degree: usize) -> Result<Self> {
        if num_basis < degree + 1 {
            return Err(Error::InvalidBasis(format!(
                "{num_basis} basis functions cannot support degree {degree} (need at least {})",
                degree + 1
            )));
        }
        let segments = num_basis - degree;
        let mut knots = Vec::with_capacity(num_basis + degree + 1);
        knots.extend(std::iter::repeat(0.0).take(degree + 1));
        knots.extend((1..segments).map(|i| i as f64 / segments as f64));
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        Ok(Self {
            num_basis,
            degree,
            knots,
        })
    }

    /// Builds a basis from a count of interior knots instead of a basis size.
    pub fn with_interior_knots(interior: usize, degree: usize) -> Result<Self> {
        Self::new(interior + degree + 1, degree)
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Index `s` of the knot span `[knots[s], knots[s+1])` containing `x`.
    /// `x = 1` is assigned to the last nonempty span.
    fn span(&self, x: f64) -> usize {
        let segments = self.num_basis - self.degree;
        let cell = ((x * segments as f64).floor() as usize).min(segments - 1);
        let mut s = self.degree + cell;
        // floor() can land one cell off when x sits on a knot after rounding.
        while s > self.degree && x < self.knots[s] {
            s -= 1;
        }
        while s < self.num_basis - 1 && x >= self.knots[s + 1] {
            s += 1;
        }
        s
    }

    /// Evaluates the `degree + 1` possibly-nonzero basis functions at `x`.
    ///
    /// Returns the index of the first of them and writes their values into
    /// `out`, which must have length `degree + 1`.
    pub fn eval_nonzero(&self, x: f64, out: &mut [f64]) -> Result<usize> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain(x));
        }
        let d = self.degree;
        debug_assert_eq!(out.len(), d + 1);
        let s = self.span(x);
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        out[0] = 1.0;
        for j in 1..=d {
            left[j] = x - self.knots[s + 1 - j];
            right[j] = self.knots[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let tmp = out[r] / denom;
                out[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            out[j] = saved;
        }
        Ok(s - d)
    }

    /// Full length-`num_basis` vector of basis values at `x`.
    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        let mut local = vec![0.0; self.degree + 1];
        let first = self.eval_nonzero(x, &mut local)?;
        let mut values = vec![0.0; self.num_basis];
        values[first..first + local.len()].copy_from_slice(&local);
        Ok(values)
    }

    /// Evaluates `Σ_j coef_j B_j(x)`.
    pub fn combine(&self, coef: &[f64], x: f64) -> Result<f64> {
        debug_assert_eq!(coef.len(), self.num_basis);
        let mut local = vec![0.0; self.degree + 1];
        let first = self.eval_nonzero(x, &mut local)?;
        Ok(local
            .iter()
            .zip(&coef[first..])
            .map(|(b, c)| b * c)
            .sum())
    }
}

/// Basis values cached on the grid `t / T` for `t = 0..=T`.
#[derive(Debug, Clone)]
pub struct BasisGrid {
    width: usize,
    num_basis: usize,
    first: Vec<usize>,
    values: Vec<f64>,
}

impl BasisGrid {
    /// `last` is `T`; the grid has `T + 1` points.
    pub fn new(basis: &SplineBasis, last: usize) -> Self {
        let width = basis.degree() + 1;
        let n = last + 1;
        let mut first = Vec::with_capacity(n);
        let mut values = vec![0.0; n * width];
        for t in 0..n {
            let x = if last == 0 { 0.0 } else { t as f64 / last as f64 };
            let row = &mut values[t * width..(t + 1) * width];
            first.push(basis.eval_nonzero(x, row).expect("grid point inside [0, 1]"));
        }
        Self {
            width,
            num_basis: basis.num_basis(),
            first,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    /// First nonzero index and the nonzero values at grid point `t`.
    #[inline]
    pub fn row(&self, t: usize) -> (usize, &[f64]) {
        (self.first[t], &self.values[t * self.width..(t + 1) * self.width])
    }

    /// `Σ_j coef_j B_j(t/T)`.
    #[inline]
    pub fn combine(&self, coef: &[f64], t: usize) -> f64 {
        let (first, vals) = self.row(t);
        vals.iter().zip(&coef[first..]).map(|(b, c)| b * c).sum()
    }

    /// Adds `scale * B_j(t/T)` to `acc[j]` for every nonzero `j`.
    #[inline]
    pub fn scatter(&self, t: usize, scale: f64, acc: &mut [f64]) {
        let (first, vals) = self.row(t);
        for (a, b) in acc[first..].iter_mut().zip(vals) {
            *a += scale * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook Cox–de Boor recursion with the 0/0 = 0 convention, written
    /// independently of the triangular scheme above.
    fn cox_de_boor(knots: &[f64], i: usize, k: usize, x: f64, num_basis: usize) -> f64 {
        if k == 0 {
            let (lo, hi) = (knots[i], knots[i + 1]);
            if lo <= x && x < hi {
                return 1.0;
            }
            // The last nonempty span is closed on the right.
            if x == 1.0 && hi == 1.0 && lo < hi && i == num_basis - 1 {
                return 1.0;
            }
            return 0.0;
        }
        let mut v = 0.0;
        let d1 = knots[i + k] - knots[i];
        if d1 > 0.0 {
            v += (x - knots[i]) / d1 * cox_de_boor(knots, i, k - 1, x, num_basis);
        }
        let d2 = knots[i + k + 1] - knots[i + 1];
        if d2 > 0.0 {
            v += (knots[i + k + 1] - x) / d2 * cox_de_boor(knots, i + 1, k - 1, x, num_basis);
        }
        v
    }

    #[test]
    fn bernstein_endpoints_and_midpoint() {
        let b = SplineBasis::new(4, 3).unwrap();
        assert_eq!(b.knots(), &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(b.eval(0.0).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(b.eval(1.0).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        let mid = b.eval(0.5).unwrap();
        for (got, want) in mid.iter().zip([0.125, 0.375, 0.375, 0.125]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn six_functions_have_two_interior_knots() {
        let b = SplineBasis::new(6, 3).unwrap();
        assert_eq!(b.knots().len(), 6 + 3 + 1);
        let interior: Vec<f64> = b.knots()[4..6].to_vec();
        assert!((interior[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((interior[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(SplineBasis::with_interior_knots(2, 3).unwrap(), b);
    }

    #[test]
    fn underdetermined_basis_rejected() {
        assert!(matches!(
            SplineBasis::new(3, 3),
            Err(Error::InvalidBasis(_))
        ));
        assert!(SplineBasis::new(1, 0).is_ok());
    }

    #[test]
    fn out_of_domain_rejected() {
        let b = SplineBasis::new(6, 3).unwrap();
        assert!(matches!(b.eval(-1e-9), Err(Error::OutOfDomain(_))));
        assert!(matches!(b.eval(1.0 + 1e-9), Err(Error::OutOfDomain(_))));
        assert!(b.eval(f64::NAN).is_err());
    }

    #[test]
    fn matches_cox_de_boor_on_grid() {
        for (k, d) in [(4, 3), (6, 3), (12, 3), (7, 2), (5, 1), (3, 0)] {
            let b = SplineBasis::new(k, d).unwrap();
            for g in 0..=100 {
                let x = g as f64 / 100.0;
                let fast = b.eval(x).unwrap();
                for (j, v) in fast.iter().enumerate() {
                    let slow = cox_de_boor(b.knots(), j, d, x, k);
                    assert!((v - slow).abs() <= 1e-12, "K={k} d={d} x={x} j={j}: {v} vs {slow}");
                }
            }
        }
    }

    #[test]
    fn grid_cache_matches_direct_evaluation() {
        let b = SplineBasis::new(6, 3).unwrap();
        let grid = BasisGrid::new(&b, 37);
        let coef = [0.3, -1.0, 2.0, 0.5, 4.0, 1.5];
        for t in 0..=37 {
            let x = t as f64 / 37.0;
            let direct = b.combine(&coef, x).unwrap();
            assert!((grid.combine(&coef, t) - direct).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity_and_local_support(x in 0.0f64..=1.0, k in 4usize..15) {
            let b = SplineBasis::new(k, 3).unwrap();
            let v = b.eval(x).unwrap();
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(v.iter().all(|&e| e >= 0.0));
            let nz: Vec<usize> = v.iter().enumerate().filter(|(_, &e)| e != 0.0).map(|(j, _)| j).collect();
            prop_assert!(nz.len() <= 4);
            prop_assert!(nz.windows(2).all(|w| w[1] == w[0] + 1));
        }
    }
}
