//! Two-point Hermite cardinal bases and the composite scheme `H_{q,k}`:
//! degree `q` on the first interval `[t_0, t_1]`, degree `k` elsewhere.

use crate::dd::Dd;
use crate::design::Design;
use crate::error::{Error, Result};

/// Composite pair of odd degrees `q <= k`, each in {1, 3, 5}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplineScheme {
    q: usize,
    k: usize,
}

impl SplineScheme {
    pub fn new(q: usize, k: usize) -> Result<Self> {
        for d in [q, k] {
            if d % 2 == 0 {
                return Err(Error::InvalidScheme(format!("degree {d} is even")));
            }
            if d > 5 {
                return Err(Error::UnsupportedDegree(d));
            }
        }
        if q > k {
            return Err(Error::InvalidScheme(format!("q = {q} exceeds k = {k}")));
        }
        Ok(SplineScheme { q, k })
    }

    /// `H_k` on every interval.
    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(k, k)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Derivative order sampled on the first interval.
    pub fn r_q(&self) -> usize {
        (self.q - 1) / 2
    }

    /// Derivative order sampled elsewhere.
    pub fn r_k(&self) -> usize {
        (self.k - 1) / 2
    }

    /// Degree used on interval `j` (1-based).
    pub fn degree_on(&self, j: usize) -> usize {
        if j == 1 {
            self.q
        } else {
            self.k
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisEntry {
    pub knot: usize,
    pub order: usize,
    pub weight: f64,
}

/// Local cardinal expansion at one evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisWeights {
    /// Containing interval `j`, i.e. `[t_{j-1}, t_j]`.
    pub interval: usize,
    pub degree: usize,
    pub entries: Vec<BasisEntry>,
}

/// Cardinal functions on [0, 1]: value of the function interpolating the
/// order-`d` datum at the left (`side = 0`) or right (`side = 1`) endpoint.
/// `u` and `v = 1 - u` are passed separately to keep both accurate.
fn cardinal(degree: usize, side: usize, d: usize, u: Dd, v: Dd) -> Dd {
    // right-endpoint functions are mirror images: φ_{1,d}(u) = (-1)^d φ_{0,d}(1-u)
    let (x, y, sign) = if side == 0 {
        (u, v, 1.0)
    } else {
        (v, u, if d % 2 == 1 { -1.0 } else { 1.0 })
    };
    let val = match (degree, d) {
        (1, 0) => y,
        // (1-u)^2 (1+2u)
        (3, 0) => y.sqr() * (x.mul_pow2(2.0) + 1.0),
        // u (1-u)^2
        (3, 1) => x * y.sqr(),
        // (1-u)^3 (1 + 3u + 6u^2)
        (5, 0) => y.sqr() * y * (x * 3.0 + x.sqr() * 6.0 + 1.0),
        // u (1-u)^3 (1 + 3u)
        (5, 1) => x * y.sqr() * y * (x * 3.0 + 1.0),
        // u^2 (1-u)^3 / 2
        (5, 2) => (x.sqr() * y.sqr() * y).mul_pow2(0.5),
        _ => unreachable!("degree {degree} order {d}"),
    };
    val * sign
}

/// Weights in double-double, relative to the interval's knots:
/// `(side, order, weight)` with the `h^d` factor included.
pub(crate) fn local_weights(degree: usize, a: f64, b: f64, t: f64) -> Vec<(usize, usize, Dd)> {
    let h = Dd::diff(b, a);
    let u = Dd::diff(t, a) / h;
    let v = Dd::diff(b, t) / h;
    let r = (degree - 1) / 2;
    let mut out = Vec::with_capacity(2 * (r + 1));
    let mut hp = Dd::ONE;
    for d in 0..=r {
        for side in 0..2 {
            out.push((side, d, cardinal(degree, side, d, u, v) * hp));
        }
        hp = hp * h;
    }
    out
}

pub fn basis_weights(scheme: &SplineScheme, design: &Design, t: f64) -> Result<BasisWeights> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(t));
    }
    let j = design.locate(t);
    let degree = scheme.degree_on(j);
    let (a, b) = design.interval(j);
    // interpolation conditions at the knots
    if t == a || t == b {
        let knot = if t == a { j - 1 } else { j };
        return Ok(BasisWeights {
            interval: j,
            degree,
            entries: vec![BasisEntry {
                knot,
                order: 0,
                weight: 1.0,
            }],
        });
    }
    let entries = local_weights(degree, a, b, t)
        .into_iter()
        .map(|(side, order, w)| BasisEntry {
            knot: j - 1 + side,
            order,
            weight: w.to_f64(),
        })
        .collect();
    Ok(BasisWeights {
        interval: j,
        degree,
        entries,
    })
}

/// `H_{q,k}(f, T_n)(t)` for a deterministic `f` given through its derivatives.
pub fn interpolate_deterministic<F>(scheme: &SplineScheme, design: &Design, f: F, t: f64) -> Result<f64>
where
    F: Fn(f64, usize) -> f64,
{
    let w = basis_weights(scheme, design, t)?;
    let knots = design.knots();
    Ok(w.entries
        .iter()
        .map(|e| e.weight * f(knots[e.knot], e.order))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn design(knots: &[f64]) -> Design {
        Design::new(knots.to_vec()).unwrap()
    }

    /// t^d and its derivatives.
    fn monomial(d: usize) -> impl Fn(f64, usize) -> f64 {
        move |x: f64, j: usize| {
            if j > d {
                return 0.0;
            }
            let coeff: f64 = ((d - j + 1)..=d).map(|v| v as f64).product();
            coeff * x.powi((d - j) as i32)
        }
    }

    #[test]
    fn linear_midpoint() {
        let s = SplineScheme::uniform(1).unwrap();
        let d = design(&[0.0, 0.25, 0.5, 0.75, 1.0]);
        let w = basis_weights(&s, &d, 0.375).unwrap();
        assert_eq!(w.interval, 2);
        assert_eq!(w.entries.len(), 2);
        for e in &w.entries {
            assert!((e.weight - 0.5).abs() < 1e-16);
            assert_eq!(e.order, 0);
        }
        assert_eq!(w.entries[0].knot, 1);
        assert_eq!(w.entries[1].knot, 2);
    }

    #[test]
    fn cubic_cardinal_functions() {
        let s = SplineScheme::uniform(3).unwrap();
        let d = design(&[0.0, 0.2, 0.7, 1.0]);
        let (a, h) = (0.2, 0.5);
        for u in [0.1, 0.35, 0.5, 0.9] {
            let t = a + u * h;
            let w = basis_weights(&s, &d, t).unwrap();
            let get = |knot, order| w.entries.iter().find(|e| e.knot == knot && e.order == order).unwrap().weight;
            let u = (t - a) / h;
            assert!((get(1, 0) - (1.0 - u).powi(2) * (1.0 + 2.0 * u)).abs() < 1e-14);
            assert!((get(2, 0) - u * u * (3.0 - 2.0 * u)).abs() < 1e-14);
            assert!((get(1, 1) - h * u * (1.0 - u).powi(2)).abs() < 1e-14);
            assert!((get(2, 1) + h * u * u * (1.0 - u)).abs() < 1e-14);
        }
    }

    #[test]
    fn knots_give_single_weight() {
        let d = design(&[0.0, 0.1, 0.4, 1.0]);
        for (q, k) in [(1, 1), (1, 3), (3, 5), (5, 5)] {
            let s = SplineScheme::new(q, k).unwrap();
            for (j, &t) in d.knots().iter().enumerate() {
                let w = basis_weights(&s, &d, t).unwrap();
                assert_eq!(w.entries, vec![BasisEntry { knot: j, order: 0, weight: 1.0 }]);
            }
        }
    }

    #[test]
    fn tie_break_to_left_interval() {
        let d = design(&[0.0, 0.5, 1.0]);
        let s = SplineScheme::new(1, 3).unwrap();
        assert_eq!(basis_weights(&s, &d, 0.0).unwrap().interval, 1);
        assert_eq!(basis_weights(&s, &d, 0.5).unwrap().interval, 1);
        assert_eq!(basis_weights(&s, &d, 0.5000001).unwrap().interval, 2);
        assert_eq!(basis_weights(&s, &d, 1.0).unwrap().interval, 2);
        assert_eq!(basis_weights(&s, &d, 0.3).unwrap().degree, 1);
        assert_eq!(basis_weights(&s, &d, 0.7).unwrap().degree, 3);
    }

    #[test]
    fn scheme_validation() {
        assert!(matches!(SplineScheme::new(7, 7), Err(Error::UnsupportedDegree(7))));
        assert!(matches!(SplineScheme::new(2, 3), Err(Error::InvalidScheme(_))));
        assert!(matches!(SplineScheme::new(3, 1), Err(Error::InvalidScheme(_))));
        let s = SplineScheme::new(1, 5).unwrap();
        assert_eq!((s.r_q(), s.r_k()), (0, 2));
    }

    #[test]
    fn cubic_reproduces_cubics() {
        let s = SplineScheme::uniform(3).unwrap();
        let d = design(&[0.0, 0.13, 0.3, 0.77, 1.0]);
        let f = monomial(3);
        for i in 0..=50 {
            let t = i as f64 / 50.0;
            let v = interpolate_deterministic(&s, &d, &f, t).unwrap();
            assert!((v - t.powi(3)).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_first_interval_parabola_error() {
        let s = SplineScheme::new(1, 3).unwrap();
        let d = design(&[0.0, 0.2, 1.0]);
        let f = monomial(2);
        let v = interpolate_deterministic(&s, &d, &f, 0.1).unwrap();
        assert!((v - 0.01 - 0.2 * 0.2 / 4.0).abs() < 1e-15);
        // cubic part reproduces the parabola
        assert!((interpolate_deterministic(&s, &d, &f, 0.6).unwrap() - 0.36).abs() < 1e-14);
    }

    #[test]
    fn constant_is_reproduced() {
        let d = design(&[0.0, 0.01, 0.3, 0.31, 1.0]);
        for (q, k) in [(1, 1), (1, 3), (3, 3), (1, 5), (5, 5)] {
            let s = SplineScheme::new(q, k).unwrap();
            for i in 0..=40 {
                let t = i as f64 / 40.0;
                let v = interpolate_deterministic(&s, &d, |_, j| if j == 0 { 1.0 } else { 0.0 }, t).unwrap();
                assert!((v - 1.0).abs() < 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity_and_locality(
            mut inner in proptest::collection::vec(0.001f64..0.999, 1..8),
            t in 0.0f64..=1.0,
            k in prop_oneof![Just(1usize), Just(3), Just(5)],
        ) {
            inner.sort_by(f64::total_cmp);
            inner.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            let mut knots = vec![0.0];
            knots.extend(inner);
            knots.push(1.0);
            let d = Design::new(knots).unwrap();
            let s = SplineScheme::new(1, k).unwrap();
            let w = basis_weights(&s, &d, t).unwrap();
            let j = w.interval;
            prop_assert!(w.entries.len() <= 2 * ((w.degree - 1) / 2 + 1));
            let total: f64 = w.entries.iter().filter(|e| e.order == 0).map(|e| e.weight).sum();
            prop_assert!((total - 1.0).abs() <= 1e-14);
            for e in &w.entries {
                prop_assert!(e.knot == j - 1 || e.knot == j);
            }
        }

        #[test]
        fn scale_covariance(u in 0.01f64..0.99, a in 0.0f64..0.4, h in 0.01f64..0.55) {
            // weights depend on t only through u and on h only via h^d
            let k = 5;
            let s = SplineScheme::uniform(k).unwrap();
            let d1 = Design::new(vec![0.0, a.max(1e-3), a.max(1e-3) + h, 1.0]).unwrap();
            let d2 = Design::new(vec![0.0, 0.5, 1.0]).unwrap();
            let a1 = a.max(1e-3);
            let w1 = basis_weights(&s, &d1, a1 + u * h).unwrap();
            let w2 = basis_weights(&s, &d2, 0.5 + u * 0.5).unwrap();
            for (e1, e2) in w1.entries.iter().zip(&w2.entries) {
                prop_assert_eq!(e1.order, e2.order);
                let want = e2.weight / 0.5f64.powi(e1.order as i32) * h.powi(e1.order as i32);
                prop_assert!((e1.weight - want).abs() <= 1e-12 * want.abs().max(1e-3));
            }
        }

        #[test]
        fn polynomial_reproduction(ts in proptest::collection::vec(0.0f64..=1.0, 20)) {
            let d = Design::new(vec![0.0, 0.07, 0.21, 0.5, 0.66, 1.0]).unwrap();
            for k in [1usize, 3, 5] {
                let s = SplineScheme::uniform(k).unwrap();
                for deg in 0..=k {
                    let f = monomial(deg);
                    for &t in &ts {
                        let v = interpolate_deterministic(&s, &d, &f, t).unwrap();
                        prop_assert!((v - t.powi(deg as i32)).abs() <= 1e-12);
                    }
                }
            }
        }
    }
}
