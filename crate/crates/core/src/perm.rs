//! Finite permutations with parity, alternating-group sampling, and the
//! index-doubling embedding.
//!
//! Points are 0-based in code; cycle-notation I/O is 1-based. The
//! distinguished "spine" direction of the tree machinery is point 0 in code
//! and is displayed as `1`.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

/// Largest degree for which full enumeration of `A_d` is allowed.
const MAX_ENUM_DEGREE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn is_even(self) -> bool {
        self == Parity::Even
    }

    /// Parity of a product of two permutations with these parities.
    pub fn combine(self, other: Parity) -> Parity {
        if self == other {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// A bijection of `{0..d}` in one-line notation: `images[t]` is the image
/// of `t`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn identity(d: usize) -> Self {
        Permutation {
            images: (0..d).collect(),
        }
    }

    /// Builds a permutation from its image array, validating bijectivity.
    pub fn from_images(images: Vec<usize>) -> Result<Self> {
        let d = images.len();
        let mut seen = vec![false; d];
        for &v in &images {
            if v >= d {
                return Err(Error::InvalidPermutation(format!(
                    "image {v} out of range for degree {d}"
                )));
            }
            if seen[v] {
                return Err(Error::InvalidPermutation(format!("image {v} repeated")));
            }
            seen[v] = true;
        }
        Ok(Permutation { images })
    }

    /// Builds a permutation of degree `d` from 1-based cycles, applied left
    /// to right. Cycles need not be disjoint.
    pub fn from_cycles(d: usize, cycles: &[Vec<usize>]) -> Result<Self> {
        let mut acc = Permutation::identity(d);
        for cycle in cycles {
            let mut seen = vec![false; d];
            for &pt in cycle {
                if pt == 0 || pt > d {
                    return Err(Error::InvalidPermutation(format!(
                        "cycle point {pt} out of range 1..={d}"
                    )));
                }
                if seen[pt - 1] {
                    return Err(Error::InvalidPermutation(format!(
                        "point {pt} repeated within a cycle"
                    )));
                }
                seen[pt - 1] = true;
            }
            let mut images: Vec<usize> = (0..d).collect();
            for (i, &pt) in cycle.iter().enumerate() {
                let next = cycle[(i + 1) % cycle.len()];
                images[pt - 1] = next - 1;
            }
            let c = Permutation::from_images(images)?;
            acc = acc.compose(&c);
        }
        Ok(acc)
    }

    /// Parses cycle notation such as `(1 2 3)(4 5)`; `e` or `()` is the
    /// identity. Points are 1-based.
    pub fn parse(d: usize, s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "e" || s == "()" || s.is_empty() {
            return Ok(Permutation::identity(d));
        }
        let mut cycles: Vec<Vec<usize>> = Vec::new();
        let mut rest = s;
        while !rest.is_empty() {
            let open = rest
                .find('(')
                .ok_or_else(|| Error::Parse(format!("expected '(' in {s:?}")))?;
            if !rest[..open].trim().is_empty() {
                return Err(Error::Parse(format!("unexpected text in {s:?}")));
            }
            let close = rest
                .find(')')
                .ok_or_else(|| Error::Parse(format!("unbalanced '(' in {s:?}")))?;
            let body = &rest[open + 1..close];
            let mut cycle = Vec::new();
            for tok in body.split([' ', ',']).filter(|t| !t.is_empty()) {
                let pt: usize = tok
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad point {tok:?} in {s:?}")))?;
                cycle.push(pt);
            }
            if !cycle.is_empty() {
                cycles.push(cycle);
            }
            rest = rest[close + 1..].trim_start();
        }
        Permutation::from_cycles(d, &cycles)
    }

    pub fn degree(&self) -> usize {
        self.images.len()
    }

    pub fn apply(&self, t: usize) -> usize {
        self.images[t]
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn fixes(&self, t: usize) -> bool {
        self.images[t] == t
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &v)| i == v)
    }

    /// Composition in application order: `self` is applied first, so
    /// `p.compose(q)` sends `t` to `q(p(t))`.
    ///
    /// Panics on degree mismatch; mixed degrees are rejected at the input
    /// boundaries of the crate.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(
            self.degree(),
            other.degree(),
            "cannot compose permutations of degrees {} and {}",
            self.degree(),
            other.degree()
        );
        Permutation {
            images: self.images.iter().map(|&v| other.images[v]).collect(),
        }
    }

    pub fn inverse(&self) -> Permutation {
        let mut images = vec![0; self.degree()];
        for (i, &v) in self.images.iter().enumerate() {
            images[v] = i;
        }
        Permutation { images }
    }

    /// `self * other * self^-1 * other^-1` in application order.
    pub fn commutator(&self, other: &Permutation) -> Permutation {
        self.compose(other)
            .compose(&self.inverse())
            .compose(&other.inverse())
    }

    /// Nontrivial cycles of the permutation, 0-based, each starting at its
    /// least point, ordered by that point.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let d = self.degree();
        let mut seen = vec![false; d];
        let mut out = Vec::new();
        for start in 0..d {
            if seen[start] || self.images[start] == start {
                seen[start] = true;
                continue;
            }
            let mut cycle = vec![start];
            seen[start] = true;
            let mut cur = self.images[start];
            while cur != start {
                seen[cur] = true;
                cycle.push(cur);
                cur = self.images[cur];
            }
            out.push(cycle);
        }
        out
    }

    pub fn parity(&self) -> Parity {
        let transpositions: usize = self.cycles().iter().map(|c| c.len() - 1).sum();
        if transpositions.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn is_even(&self) -> bool {
        self.parity() == Parity::Even
    }

    /// The doubling `sigma -> sigma sigma'` into degree `2d`, where the
    /// second copy acts on the top half by `t -> sigma(t - d) + d`. The
    /// result is always even and restricts to `self` on the bottom half.
    pub fn double(&self) -> Permutation {
        let d = self.degree();
        let mut images = Vec::with_capacity(2 * d);
        images.extend_from_slice(&self.images);
        images.extend(self.images.iter().map(|&v| v + d));
        Permutation { images }
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cycles = self.cycles();
        if cycles.is_empty() {
            return write!(f, "e");
        }
        for cycle in cycles {
            write!(f, "(")?;
            for (i, pt) in cycle.iter().enumerate() {
                if i > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", pt + 1)?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Uniform random element of `A_d`, or of the even permutations fixing
/// point 0 when `fix_spine` is set. Fisher-Yates followed by a
/// parity-correcting swap of two designated image slots, which maps the odd
/// half bijectively onto the even half and so preserves uniformity.
pub fn random_alternating<R: Rng + ?Sized>(
    d: usize,
    fix_spine: bool,
    rng: &mut R,
) -> Result<Permutation> {
    let required = if fix_spine { 4 } else { 3 };
    if d < required {
        return Err(Error::DegreeTooSmall { required, got: d });
    }
    let lo = usize::from(fix_spine);
    let mut images: Vec<usize> = (0..d).collect();
    for i in (lo + 1..d).rev() {
        let j = rng.gen_range(lo..=i);
        images.swap(i, j);
    }
    let mut p = Permutation { images };
    if p.parity() == Parity::Odd {
        p.images.swap(lo, lo + 1);
    }
    Ok(p)
}

/// Uniform random element of the full symmetric group.
pub fn random_permutation<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Permutation {
    let mut images: Vec<usize> = (0..d).collect();
    for i in (1..d).rev() {
        let j = rng.gen_range(0..=i);
        images.swap(i, j);
    }
    Permutation { images }
}

/// Uniform random permutation fixing point 0, parity unrestricted.
pub fn random_fixing_spine<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Permutation {
    let mut images: Vec<usize> = (0..d).collect();
    for i in (2..d).rev() {
        let j = rng.gen_range(1..=i);
        images.swap(i, j);
    }
    Permutation { images }
}

fn all_permutations(d: usize) -> Vec<Permutation> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..d).collect();
    heaps(&mut items, d, &mut out);
    out
}

fn heaps(items: &mut Vec<usize>, n: usize, out: &mut Vec<Permutation>) {
    if n <= 1 {
        out.push(Permutation {
            images: items.clone(),
        });
        return;
    }
    for i in 0..n {
        heaps(items, n - 1, out);
        if n.is_multiple_of(2) {
            items.swap(i, n - 1);
        } else {
            items.swap(0, n - 1);
        }
    }
}

/// All elements of `A_d`, for small `d` only.
pub fn all_alternating(d: usize) -> Result<Vec<Permutation>> {
    if d > MAX_ENUM_DEGREE {
        return Err(Error::Unsupported(format!(
            "enumeration of A_{d} exceeds the degree-{MAX_ENUM_DEGREE} limit"
        )));
    }
    Ok(all_permutations(d)
        .into_iter()
        .filter(|p| p.is_even())
        .collect())
}

/// All even permutations of `{0..d}` fixing point 0.
pub fn all_alternating_fixing_spine(d: usize) -> Result<Vec<Permutation>> {
    Ok(all_alternating(d)?
        .into_iter()
        .filter(|p| p.fixes(0))
        .collect())
}
