//! Deterministic pseudo-random rational sample points.
//!
//! Sample `i` of a sampler depends only on the seed and `i`, so reductions
//! over samples do not depend on evaluation order.

use std::collections::BTreeMap;

use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::symbolic::{rat, Expr, Rational, SymbolId};

pub const DEFAULT_SEED: u64 = 0x5EED;

pub type Point = BTreeMap<SymbolId, Rational>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sampler {
    pub seed: u64,
    /// Successful samples required by generic-rank and zero tests.
    pub samples: usize,
    /// Total attempts allowed, counting points where evaluation fails.
    pub max_attempts: usize,
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler { seed: DEFAULT_SEED, samples: 25, max_attempts: 200 }
    }
}

impl Sampler {
    pub fn with_seed(seed: u64) -> Self {
        Sampler { seed, ..Sampler::default() }
    }

    fn rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }

    /// Random rational `p/q`, `p ∈ {−7..7}∖{0}`, `q ∈ {1..5}`.
    fn coordinate(rng: &mut ChaCha8Rng) -> Rational {
        let mut p: i64 = rng.random_range(-7..=6);
        if p >= 0 {
            p += 1;
        }
        let q: i64 = rng.random_range(1..=5);
        rat(p, q)
    }

    /// The `index`-th sample point over `ids`, with `fixed` coordinates kept.
    pub fn point(&self, index: usize, ids: &[SymbolId], fixed: &Point) -> Point {
        let mut rng = self.rng(index);
        let mut out = fixed.clone();
        for id in ids {
            let c = Self::coordinate(&mut rng);
            out.entry(*id).or_insert(c);
        }
        out
    }

    /// Sample points `0..max_attempts`.
    pub fn points<'a>(&'a self, ids: &'a [SymbolId], fixed: &'a Point) -> impl Iterator<Item = Point> + 'a {
        (0..self.max_attempts).map(move |i| self.point(i, ids, fixed))
    }

    /// Point in the box of half-width `radius` around `center` (coordinates not
    /// in `center` are drawn as in [`Sampler::point`]).
    pub fn box_point(&self, index: usize, ids: &[SymbolId], center: &Point, radius: &Rational) -> Point {
        let mut rng = self.rng(index.wrapping_add(1 << 32));
        let mut out = Point::new();
        for id in ids {
            let c = match center.get(id) {
                Some(c0) => {
                    let k: i64 = rng.random_range(-20..=20);
                    c0 + radius * rat(k, 20)
                }
                None => Self::coordinate(&mut rng),
            };
            out.insert(*id, c);
        }
        for (id, v) in center {
            out.entry(*id).or_insert_with(|| v.clone());
        }
        out
    }

    /// Symbolic zero test: canonical zero, or zero at `samples` successfully
    /// evaluated sample points.
    pub fn is_zero(&self, e: &Expr) -> bool {
        self.is_zero_with(e, &Point::new())
    }

    /// Zero test with some coordinates pinned.
    pub fn is_zero_with(&self, e: &Expr, fixed: &Point) -> bool {
        let c = match e.canonical() {
            Ok(c) => c,
            Err(_) => return false,
        };
        if c.is_zero() {
            return true;
        }
        if let Some(k) = c.as_constant() {
            return k.is_zero();
        }
        let ids: Vec<SymbolId> = c.free_symbols().into_iter().filter(|s| !fixed.contains_key(s)).collect();
        let transcendental = c.has_transcendental();
        let mut ok = 0;
        for pt in self.points(&ids, fixed) {
            let nonzero = if transcendental {
                match c.evaluate_float(&pt) {
                    Ok(v) => v.abs() > 1e-9 * (1.0 + scale_of(&pt)),
                    Err(_) => continue,
                }
            } else {
                match c.evaluate(&pt) {
                    Ok(v) => !v.is_zero(),
                    Err(_) => continue,
                }
            };
            if nonzero {
                return false;
            }
            ok += 1;
            if ok >= self.samples {
                return true;
            }
        }
        ok > 0
    }
}

fn scale_of(pt: &Point) -> f64 {
    pt.values().filter_map(ToPrimitive::to_f64).fold(0.0, |a, b| a.max(b.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{parse_expr, SymbolTable};

    #[test]
    fn deterministic_and_in_range() {
        let s = Sampler::default();
        let ids = [SymbolId(0), SymbolId(1)];
        let a: Vec<Point> = s.points(&ids, &Point::new()).take(50).collect();
        let b: Vec<Point> = s.points(&ids, &Point::new()).take(50).collect();
        assert_eq!(a, b);
        for p in &a {
            for v in p.values() {
                assert!(!v.is_zero());
                assert!(v.numer().magnitude() <= &7u32.into());
                assert!(v.denom() <= &5.into());
            }
        }
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn zero_tests() {
        let t = SymbolTable::free(&["x", "y"]).unwrap();
        let s = Sampler::default();
        assert!(s.is_zero(&parse_expr("x - x", &t).unwrap()));
        assert!(!s.is_zero(&parse_expr("x*y", &t).unwrap()));
        assert!(s.is_zero(&parse_expr("sin(x)^2 + cos(x)^2 - 1", &t).unwrap()));
        assert!(!s.is_zero(&parse_expr("sin(x)", &t).unwrap()));
        let fixed = Point::from([(SymbolId(0), rat(0, 1))]);
        assert!(s.is_zero_with(&parse_expr("x*y", &t).unwrap(), &fixed));
    }
}
