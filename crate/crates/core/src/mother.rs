//! The alternate mother group and its auxiliary constructions: the finite
//! directed group `B` with its group law, first-slot embedding witnesses,
//! commutator expressions in alternating groups, the index-doubling
//! embedding on portraits, saturated closures of directed generating sets,
//! and level-stabilizer quotient generators.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use num::BigUint;
use rand::Rng;

use crate::error::{Error, Result};
use crate::perm::{
    all_alternating, all_alternating_fixing_spine, random_alternating, random_fixing_spine,
    random_permutation, Permutation,
};
use crate::words::{Context, GroupWord, Letter, Portrait, SignedLetter, ValencySequence};

/// One level of a directed element: components `a_2,...,a_d` attached to the
/// off-spine children (index `c` holds the component at child `c+1`,
/// 0-based) and the root permutation `rho`, which fixes the spine point.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LevelData {
    pub a: Vec<Permutation>,
    pub rho: Permutation,
}

impl fmt::Debug for LevelData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.a.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ";{})", self.rho)
    }
}

/// Per-level data of a directed automorphism over an eventually periodic
/// valency sequence. The level data are aligned with the sequence's
/// prefix/period description, so levels that coincide in the sequence carry
/// identical data.
///
/// Structural requirement: every `rho_i` fixes the spine point. Evenness is
/// not required here — the doubling embedding consumes arbitrary directed
/// elements — and is enforced by the alternate-group constructors instead.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct DirectedSpec {
    valencies: ValencySequence,
    prefix: Vec<LevelData>,
    period: Vec<LevelData>,
}

impl DirectedSpec {
    pub fn new(
        valencies: ValencySequence,
        prefix: Vec<LevelData>,
        period: Vec<LevelData>,
    ) -> Result<Self> {
        if prefix.len() != valencies.prefix().len() || period.len() != valencies.period().len() {
            return Err(Error::InvalidValencies(
                "level data must be aligned with the valency description".into(),
            ));
        }
        let spec = DirectedSpec {
            valencies,
            prefix,
            period,
        };
        let total = spec.prefix.len() + spec.period.len();
        for i in 0..total {
            let d = spec.valencies.degree(i);
            let d_next = spec.valencies.degree(i + 1);
            let data = spec.level_data(i);
            if data.rho.degree() != d {
                return Err(Error::DegreeMismatch(format!(
                    "rho at level {i} has degree {}, expected {d}",
                    data.rho.degree()
                )));
            }
            if !data.rho.fixes(0) {
                return Err(Error::SpineNotFixed(format!(
                    "rho at level {i} moves the spine point"
                )));
            }
            if data.a.len() != d - 1 {
                return Err(Error::DegreeMismatch(format!(
                    "level {i} needs {} components, got {}",
                    d - 1,
                    data.a.len()
                )));
            }
            for (c, a) in data.a.iter().enumerate() {
                if a.degree() != d_next {
                    return Err(Error::DegreeMismatch(format!(
                        "component {c} at level {i} has degree {}, expected {d_next}",
                        a.degree()
                    )));
                }
            }
        }
        Ok(spec)
    }

    pub fn valencies(&self) -> &ValencySequence {
        &self.valencies
    }

    pub fn level_data(&self, i: usize) -> &LevelData {
        if i < self.prefix.len() {
            &self.prefix[i]
        } else {
            &self.period[(i - self.prefix.len()) % self.period.len()]
        }
    }

    pub fn prefix_data(&self) -> &[LevelData] {
        &self.prefix
    }

    pub fn period_data(&self) -> &[LevelData] {
        &self.period
    }

    /// Drops level 0: the data of the section at the spine child.
    pub fn shift(&self) -> DirectedSpec {
        if self.prefix.is_empty() {
            let mut period = self.period.clone();
            period.rotate_left(1);
            DirectedSpec {
                valencies: self.valencies.shift(),
                prefix: Vec::new(),
                period,
            }
        } else {
            DirectedSpec {
                valencies: self.valencies.shift(),
                prefix: self.prefix[1..].to_vec(),
                period: self.period.clone(),
            }
        }
    }

    pub fn is_alternate(&self) -> bool {
        self.prefix.iter().chain(self.period.iter()).all(|ld| {
            ld.rho.is_even() && ld.a.iter().all(|a| a.is_even())
        })
    }

    pub fn is_trivial(&self) -> bool {
        self.prefix.iter().chain(self.period.iter()).all(|ld| {
            ld.rho.is_identity() && ld.a.iter().all(|a| a.is_identity())
        })
    }

    /// When the spec is the constant-valency diagonal of a single level
    /// datum, recovers that datum as a `BElement`.
    pub fn as_constant_b(&self) -> Option<BElement> {
        if self.prefix.is_empty() && self.period.len() == 1 && self.valencies.is_constant().is_some()
        {
            let data = &self.period[0];
            BElement::new(data.a.clone(), data.rho.clone()).ok()
        } else {
            None
        }
    }
}

impl fmt::Debug for DirectedSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "DirectedSpec{{{:?},{:?};{:?}}}",
            self.valencies, self.prefix, self.period
        )
    }
}

/// An element of the finite directed group `B` at constant degree `d`:
/// components `a_2,...,a_d` in `A_d` (index `c` holds the component at
/// 0-based child `c+1`) and `rho` even fixing the spine point. The map to
/// `(A_d x ... x A_d) x| A_{d-1}` given by the component/rho data is an
/// isomorphism; the group law below is the corresponding semidirect-product
/// law, matching word-level multiplication under the wreath embedding.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BElement {
    a: Vec<Permutation>,
    rho: Permutation,
}

impl BElement {
    pub fn new(a: Vec<Permutation>, rho: Permutation) -> Result<Self> {
        let d = rho.degree();
        if d < 2 {
            return Err(Error::DegreeTooSmall { required: 2, got: d });
        }
        if !rho.fixes(0) {
            return Err(Error::SpineNotFixed(format!("rho = {rho}")));
        }
        if !rho.is_even() {
            return Err(Error::OddPermutation(format!("rho = {rho}")));
        }
        if a.len() != d - 1 {
            return Err(Error::DegreeMismatch(format!(
                "need {} components, got {}",
                d - 1,
                a.len()
            )));
        }
        for (c, p) in a.iter().enumerate() {
            if p.degree() != d {
                return Err(Error::DegreeMismatch(format!(
                    "component {c} has degree {}, expected {d}",
                    p.degree()
                )));
            }
            if !p.is_even() {
                return Err(Error::OddPermutation(format!("component {c} = {p}")));
            }
        }
        Ok(BElement { a, rho })
    }

    pub fn identity(d: usize) -> Self {
        BElement {
            a: vec![Permutation::identity(d); d - 1],
            rho: Permutation::identity(d),
        }
    }

    /// `b` with a single nontrivial component at 0-based child `c >= 1`.
    pub fn pure_component(d: usize, c: usize, alpha: Permutation) -> Result<Self> {
        if c == 0 || c >= d {
            return Err(Error::Malformed(format!(
                "component child {c} out of range 1..{d}"
            )));
        }
        let mut a = vec![Permutation::identity(d); d - 1];
        a[c - 1] = alpha;
        BElement::new(a, Permutation::identity(d))
    }

    /// `b` with trivial components and the given spine permutation.
    pub fn spine_only(d: usize, rho: Permutation) -> Result<Self> {
        BElement::new(vec![Permutation::identity(d); d - 1], rho)
    }

    pub fn degree(&self) -> usize {
        self.rho.degree()
    }

    pub fn components(&self) -> &[Permutation] {
        &self.a
    }

    pub fn rho(&self) -> &Permutation {
        &self.rho
    }

    pub fn is_identity(&self) -> bool {
        self.rho.is_identity() && self.a.iter().all(|p| p.is_identity())
    }

    /// Semidirect-product law: components multiply twisted by `rho`,
    /// `rho`s compose.
    pub fn product(&self, other: &BElement) -> BElement {
        assert_eq!(self.degree(), other.degree(), "degree mismatch in B product");
        let d = self.degree();
        let mut a = Vec::with_capacity(d - 1);
        for c in 1..d {
            let s = self.rho.apply(c);
            debug_assert!(s >= 1);
            a.push(self.a[c - 1].compose(&other.a[s - 1]));
        }
        BElement {
            a,
            rho: self.rho.compose(&other.rho),
        }
    }

    pub fn inverse(&self) -> BElement {
        let d = self.degree();
        let rho_inv = self.rho.inverse();
        let mut a = Vec::with_capacity(d - 1);
        for c in 1..d {
            let s = rho_inv.apply(c);
            a.push(self.a[s - 1].inverse());
        }
        BElement { a, rho: rho_inv }
    }

    /// Uniform random element: uniform even components and uniform even
    /// spine permutation fixing the spine point.
    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Self> {
        if d < 3 {
            return Err(Error::DegreeTooSmall { required: 3, got: d });
        }
        let mut a = Vec::with_capacity(d - 1);
        for _ in 1..d {
            a.push(random_alternating(d, false, rng)?);
        }
        let rho = if d >= 4 {
            random_alternating(d, true, rng)?
        } else {
            Permutation::identity(d)
        };
        Ok(BElement { a, rho })
    }

    /// The constant-valency diagonal spec embedding this element into the
    /// automorphism group: the same level datum at every level.
    pub fn to_spec(&self) -> Arc<DirectedSpec> {
        let valencies = ValencySequence::constant(self.degree()).expect("degree >= 2");
        Arc::new(
            DirectedSpec::new(
                valencies,
                Vec::new(),
                vec![LevelData {
                    a: self.a.clone(),
                    rho: self.rho.clone(),
                }],
            )
            .expect("BElement data is valid level data"),
        )
    }
}

/// Group law of `B`, written as a free function to mirror the operation
/// tables; see [`BElement::product`].
pub fn b_product(x: &BElement, y: &BElement) -> BElement {
    x.product(y)
}

impl fmt::Display for BElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b(")?;
        for (i, a) in self.a.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ";{})", self.rho)
    }
}

impl fmt::Debug for BElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// A target for the first-slot embedding witness.
pub enum WitnessTarget {
    Rooted(Permutation),
    Directed(BElement),
}

/// The alternate mother group at constant degree `d`: the group generated
/// by the rooted copies of `A_d` and the finite directed group `B`.
pub struct MotherGroup {
    d: usize,
    ctx: Arc<Context>,
}

impl MotherGroup {
    pub fn new(d: usize) -> Result<Self> {
        if d < 3 {
            return Err(Error::DegreeTooSmall { required: 3, got: d });
        }
        let ctx = Context::new(ValencySequence::constant(d)?);
        Ok(MotherGroup { d, ctx })
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    pub fn context(&self) -> &Arc<Context> {
        &self.ctx
    }

    pub fn identity(&self) -> GroupWord {
        GroupWord::identity(&self.ctx, 0)
    }

    /// One-letter rooted generator `a(sigma)`; rejects odd permutations so
    /// that every element of the group is alternate.
    pub fn rooted(&self, sigma: Permutation) -> Result<GroupWord> {
        if sigma.degree() != self.d {
            return Err(Error::DegreeMismatch(format!(
                "rooted generator of degree {}, group degree {}",
                sigma.degree(),
                self.d
            )));
        }
        if !sigma.is_even() {
            return Err(Error::OddPermutation(format!("sigma = {sigma}")));
        }
        GroupWord::from_letters(
            &self.ctx,
            0,
            vec![SignedLetter::new(Letter::Rooted(sigma), false)],
        )
    }

    /// One-letter directed generator.
    pub fn directed(&self, b: &BElement) -> Result<GroupWord> {
        if b.degree() != self.d {
            return Err(Error::DegreeMismatch(format!(
                "directed generator of degree {}, group degree {}",
                b.degree(),
                self.d
            )));
        }
        GroupWord::from_letters(
            &self.ctx,
            0,
            vec![SignedLetter::new(Letter::Directed(b.to_spec()), false)],
        )
    }

    pub fn random_even<R: Rng + ?Sized>(&self, rng: &mut R) -> Permutation {
        random_alternating(self.d, false, rng).expect("degree >= 3")
    }

    pub fn random_b<R: Rng + ?Sized>(&self, rng: &mut R) -> BElement {
        BElement::random(self.d, rng).expect("degree >= 3")
    }

    /// Random word with up to `max_len` letters, mixing rooted and directed
    /// letters with random signs.
    pub fn random_word<R: Rng + ?Sized>(&self, max_len: usize, rng: &mut R) -> GroupWord {
        let len = rng.gen_range(0..=max_len);
        let mut w = self.identity();
        for _ in 0..len {
            let letter = if rng.gen_bool(0.5) {
                self.rooted(self.random_even(rng)).expect("even by construction")
            } else {
                self.directed(&self.random_b(rng)).expect("valid by construction")
            };
            let letter = if rng.gen_bool(0.5) { letter.inverse() } else { letter };
            w = w.mul(&letter);
        }
        w
    }

    /// Smallest even permutation (in lexicographic image order) fixing the
    /// spine point with `tau(2) = 1`, the twist used in the commutator
    /// embedding trick.
    pub fn commutator_twist(&self) -> Result<Permutation> {
        self.search_even(|p| p.fixes(0) && p.apply(2) == 1)
    }

    /// Smallest even permutation with `pi(c) = target`.
    fn slot_mover(&self, c: usize, target: usize) -> Result<Permutation> {
        self.search_even(|p| p.apply(c) == target)
    }

    fn search_even(&self, pred: impl Fn(&Permutation) -> bool) -> Result<Permutation> {
        if self.d >= 5 {
            // Small search domain: permutations moving at most 5 points.
            for p in all_alternating(5)? {
                let mut images: Vec<usize> = (0..self.d).collect();
                for (i, &v) in p.images().iter().enumerate() {
                    images[i] = v;
                }
                let q = Permutation::from_images(images).expect("valid by construction");
                if pred(&q) {
                    return Ok(q);
                }
            }
        }
        for q in all_alternating(self.d)? {
            if pred(&q) {
                return Ok(q);
            }
        }
        Err(Error::Unsupported(format!(
            "no even permutation of degree {} satisfies the constraint",
            self.d
        )))
    }

    /// Word embedding `b_spine(rho) = b(e,...,e;rho)` into the first slot:
    /// `b_spine(rho) * a(rho^-1)` decomposes as `(b_spine(rho), e, ..., e)`.
    fn witness_spine(&self, rho: &Permutation) -> Result<GroupWord> {
        if rho.is_identity() {
            return Ok(self.identity());
        }
        let b = BElement::spine_only(self.d, rho.clone())?;
        Ok(self.directed(&b)?.mul(&self.rooted(rho.inverse())?))
    }

    /// Word embedding `b_2(alpha)` (single component at child 1) into the
    /// first slot, via products of commutators of directed letters, one
    /// factor twisted by the rooted conjugator.
    fn witness_pure_component(&self, alpha: &Permutation) -> Result<GroupWord> {
        if alpha.is_identity() {
            return Ok(self.identity());
        }
        if self.d < 5 {
            return Err(Error::Unsupported(format!(
                "first-slot witnesses need degree >= 5, got {}",
                self.d
            )));
        }
        let tau = self.rooted(self.commutator_twist()?)?;
        let mut w = self.identity();
        for (x, y) in commutator_expression(alpha)? {
            let bx = self.directed(&BElement::pure_component(self.d, 1, x)?)?;
            let by = self
                .directed(&BElement::pure_component(self.d, 1, y)?)?
                .conjugate_by(&tau);
            w = w.mul(&bx.commutator(&by));
        }
        Ok(w)
    }

    /// Word embedding a component at 0-based child `c` into the first slot:
    /// conjugate the child-1 witness by a spine witness moving the slots.
    fn witness_component_at(&self, c: usize, alpha: &Permutation) -> Result<GroupWord> {
        let w2 = self.witness_pure_component(alpha)?;
        if c == 1 || alpha.is_identity() {
            return Ok(w2);
        }
        let pi = self.search_even(|p| p.fixes(0) && p.apply(c) == 1)?;
        let mover = self.witness_spine(&pi)?;
        Ok(w2.conjugate_by(&mover))
    }

    /// A word whose wreath decomposition is `(target, e, ..., e)` with
    /// trivial root. Requires `d >= 5` (perfection of the alternating
    /// group) for nontrivial targets.
    pub fn perfect1_witness(&self, target: &WitnessTarget) -> Result<GroupWord> {
        match target {
            WitnessTarget::Directed(b) => {
                if b.degree() != self.d {
                    return Err(Error::DegreeMismatch(format!(
                        "target degree {}, group degree {}",
                        b.degree(),
                        self.d
                    )));
                }
                let mut w = self.identity();
                for c in 1..self.d {
                    w = w.mul(&self.witness_component_at(c, &b.components()[c - 1])?);
                }
                w = w.mul(&self.witness_spine(b.rho())?);
                Ok(w)
            }
            WitnessTarget::Rooted(sigma) => {
                if sigma.degree() != self.d {
                    return Err(Error::DegreeMismatch(format!(
                        "target degree {}, group degree {}",
                        sigma.degree(),
                        self.d
                    )));
                }
                if !sigma.is_even() {
                    return Err(Error::OddPermutation(format!("target {sigma}")));
                }
                if sigma.is_identity() {
                    return Ok(self.identity());
                }
                // (b_2^-1, e, ...) * phi(b_2) = (e, a(sigma), e, ...),
                // then a rooted conjugation pulls slot 1 into slot 0.
                let b2 = BElement::pure_component(self.d, 1, sigma.clone())?;
                let w0 = self
                    .witness_pure_component(sigma)?
                    .inverse()
                    .mul(&self.directed(&b2)?);
                let mover = self.rooted(self.slot_mover(0, 1)?)?;
                Ok(w0.conjugate_by(&mover))
            }
        }
    }

    /// Extends the first-slot witness multiplicatively over the letters of
    /// a word: the result decomposes as `(w, e, ..., e)`.
    pub fn embed_first_slot(&self, w: &GroupWord) -> Result<GroupWord> {
        let mut out = self.identity();
        for sl in w.letters() {
            let witness = match &sl.letter {
                Letter::Rooted(p) => self.perfect1_witness(&WitnessTarget::Rooted(p.clone()))?,
                Letter::Directed(spec) => {
                    let b = spec.as_constant_b().ok_or_else(|| {
                        Error::Unsupported(
                            "first-slot embedding needs constant-degree directed letters".into(),
                        )
                    })?;
                    self.perfect1_witness(&WitnessTarget::Directed(b))?
                }
            };
            out = out.mul(&if sl.inverse { witness.inverse() } else { witness });
        }
        Ok(out)
    }

    /// Embeds a word into slot `c`: conjugates the first-slot embedding by
    /// a rooted permutation sending `c` to 0.
    pub fn embed_slot(&self, c: usize, w: &GroupWord) -> Result<GroupWord> {
        let first = self.embed_first_slot(w)?;
        if c == 0 {
            return Ok(first);
        }
        let mover = self.rooted(self.slot_mover(c, 0)?)?;
        Ok(first.conjugate_by(&mover))
    }
}

/// Order of the alternating group on `n` points.
pub fn alternating_order(n: usize) -> BigUint {
    if n <= 1 {
        return BigUint::from(1u32);
    }
    let mut acc = BigUint::from(1u32);
    for i in 2..=n {
        acc *= BigUint::from(i);
    }
    acc / BigUint::from(2u32)
}

/// Order of the directed group `B` at degree `d`:
/// `|A_d|^(d-1) * |A_{d-1}|`.
pub fn b_order(d: usize) -> BigUint {
    alternating_order(d).pow((d - 1) as u32) * alternating_order(d - 1)
}

fn cycle3(d: usize, p: usize, u: usize, v: usize) -> Permutation {
    let mut images: Vec<usize> = (0..d).collect();
    images[p] = u;
    images[u] = v;
    images[v] = p;
    Permutation::from_images(images).expect("three distinct points")
}

/// Writes an even permutation as a product (left to right) of 3-cycles.
fn three_cycles(p: &Permutation) -> Vec<Permutation> {
    let d = p.degree();
    let mut transpositions: Vec<(usize, usize)> = Vec::new();
    for cycle in p.cycles() {
        for i in 1..cycle.len() {
            transpositions.push((cycle[0], cycle[i]));
        }
    }
    debug_assert_eq!(transpositions.len() % 2, 0, "even permutation expected");
    let mut out = Vec::new();
    for pair in transpositions.chunks(2) {
        let (a, b) = pair[0];
        let (c, e) = pair[1];
        if (a == c && b == e) || (a == e && b == c) {
            continue;
        }
        let shared: Vec<usize> = [a, b]
            .into_iter()
            .filter(|&x| x == c || x == e)
            .collect();
        match shared.as_slice() {
            [s] => {
                let s = *s;
                let u = if a == s { b } else { a };
                let v = if c == s { e } else { c };
                out.push(cycle3(d, s, u, v));
            }
            _ => {
                // Disjoint: (a b)(c e) = (a b c) * (c a e).
                out.push(cycle3(d, a, b, c));
                out.push(cycle3(d, c, a, e));
            }
        }
    }
    debug_assert_eq!(
        out.iter()
            .fold(Permutation::identity(d), |acc, c| acc.compose(c)),
        *p
    );
    out
}

fn canonical_three_cycle_commutator() -> &'static (Permutation, Permutation) {
    static CELL: OnceLock<(Permutation, Permutation)> = OnceLock::new();
    CELL.get_or_init(|| {
        let target = cycle3(5, 0, 1, 2);
        let all = all_alternating(5).expect("degree 5 enumerable");
        for x in &all {
            for y in &all {
                if x.commutator(y) == target {
                    return (x.clone(), y.clone());
                }
            }
        }
        unreachable!("every 3-cycle is a commutator in A_5");
    })
}

/// Transplants a degree-5 permutation onto five chosen points of `{0..d}`.
fn relabel(p5: &Permutation, points: &[usize; 5], d: usize) -> Permutation {
    let mut images: Vec<usize> = (0..d).collect();
    for (s, &pt) in points.iter().enumerate() {
        images[pt] = points[p5.apply(s)];
    }
    Permutation::from_images(images).expect("points distinct")
}

/// Expresses an even permutation of degree `d >= 5` as a product (left to
/// right) of commutators `[x_i, y_i]` with all `x_i, y_i` even. Each
/// 3-cycle of the decomposition becomes one commutator, found once by
/// exhaustive search in a degree-5 alternating group and transplanted onto
/// the cycle's support extended to five points.
pub fn commutator_expression(p: &Permutation) -> Result<Vec<(Permutation, Permutation)>> {
    let d = p.degree();
    if d < 5 {
        return Err(Error::DegreeTooSmall { required: 5, got: d });
    }
    if !p.is_even() {
        return Err(Error::OddPermutation(format!("{p}")));
    }
    let (cx, cy) = canonical_three_cycle_commutator();
    let mut out = Vec::new();
    for c in three_cycles(p) {
        let cyc = c.cycles();
        debug_assert_eq!(cyc.len(), 1);
        let pts = &cyc[0];
        debug_assert_eq!(pts.len(), 3);
        let mut extras = (0..d).filter(|t| !pts.contains(t));
        let l = extras.next().expect("d >= 5");
        let m = extras.next().expect("d >= 5");
        let support = [pts[0], pts[1], pts[2], l, m];
        out.push((relabel(cx, &support, d), relabel(cy, &support, d)));
    }
    Ok(out)
}

/// The index-doubling embedding on a truncated portrait: every label
/// doubles into the even permutation acting identically on both halves,
/// and the new vertices outside the original tree carry identity labels.
pub fn double_embed(w: &GroupWord, depth: usize) -> Portrait {
    let portrait = w.portrait(depth);
    let degrees: Vec<usize> = portrait.degrees().iter().map(|&d| 2 * d).collect();
    let mut labels = HashMap::new();
    for (v, p) in portrait.nontrivial_labels() {
        labels.insert(v.clone(), p.double());
    }
    Portrait::from_parts(degrees, labels)
}

/// One level type of a saturated closure: the wreath factor
/// `A_{child_degree} wr A_{degree - 1}` together with the marked
/// generator-indexed level data.
#[derive(Clone, PartialEq, Eq)]
pub struct SaturationClass {
    pub degree: usize,
    pub child_degree: usize,
    pub marked: Vec<LevelData>,
}

impl SaturationClass {
    /// Order of the full wreath factor `A_{d'} wr A_{d-1}`.
    pub fn order(&self) -> BigUint {
        alternating_order(self.child_degree).pow((self.degree - 1) as u32)
            * alternating_order(self.degree - 1)
    }
}

/// The finite saturated closure data of a directed generating set: the
/// distinct level types over one prefix-plus-period pass and the map from
/// described levels to types. The closure group is the full product of the
/// wreath factors, one per class.
pub struct SaturationData {
    pub classes: Vec<SaturationClass>,
    pub assignment: Vec<usize>,
    valencies: ValencySequence,
}

impl SaturationData {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn closure_order(&self) -> BigUint {
        self.classes.iter().map(|c| c.order()).product()
    }

    /// Reassembles the marked generators as directed specs; feeding these
    /// back into [`saturated_closure`] reproduces the same classes.
    pub fn marked_specs(&self) -> Result<Vec<Arc<DirectedSpec>>> {
        let n_gens = self.classes.first().map_or(0, |c| c.marked.len());
        let p = self.valencies.prefix().len();
        let q = self.valencies.period().len();
        let mut specs = Vec::with_capacity(n_gens);
        for g in 0..n_gens {
            let prefix: Vec<LevelData> = (0..p)
                .map(|i| self.classes[self.assignment[i]].marked[g].clone())
                .collect();
            let period: Vec<LevelData> = (p..p + q)
                .map(|i| self.classes[self.assignment[i]].marked[g].clone())
                .collect();
            specs.push(Arc::new(DirectedSpec::new(
                self.valencies.clone(),
                prefix,
                period,
            )?));
        }
        Ok(specs)
    }
}

/// Enumerates the distinct (wreath factor, marked subset) pairs of a finite
/// set of alternate directed generators over one prefix-plus-period pass.
pub fn saturated_closure(gens: &[Arc<DirectedSpec>]) -> Result<SaturationData> {
    let first = gens
        .first()
        .ok_or_else(|| Error::Malformed("empty generating set".into()))?;
    let valencies = first.valencies().clone();
    for g in gens {
        if g.valencies() != &valencies {
            return Err(Error::InvalidValencies(
                "generators disagree on the valency sequence".into(),
            ));
        }
        if !g.is_alternate() {
            return Err(Error::OddPermutation(
                "saturated closure requires alternate generators".into(),
            ));
        }
    }
    let total = valencies.prefix().len() + valencies.period().len();
    let mut classes: Vec<SaturationClass> = Vec::new();
    let mut assignment = Vec::with_capacity(total);
    for i in 0..total {
        let class = SaturationClass {
            degree: valencies.degree(i),
            child_degree: valencies.degree(i + 1),
            marked: gens.iter().map(|g| g.level_data(i).clone()).collect(),
        };
        let idx = match classes.iter().position(|c| *c == class) {
            Some(idx) => idx,
            None => {
                classes.push(class);
                classes.len() - 1
            }
        };
        assignment.push(idx);
    }
    Ok(SaturationData {
        classes,
        assignment,
        valencies,
    })
}

/// Level-`j` permutation images of the canonical finite generating family
/// of the mother group: all rooted generators plus the single-component and
/// spine-only directed generators.
pub fn level_generators(group: &MotherGroup, j: usize) -> Result<Vec<Permutation>> {
    let d = group.degree();
    let mut words: Vec<GroupWord> = Vec::new();
    for sigma in all_alternating(d)? {
        if !sigma.is_identity() {
            words.push(group.rooted(sigma)?);
        }
    }
    for alpha in all_alternating(d)? {
        if !alpha.is_identity() {
            words.push(group.directed(&BElement::pure_component(d, 1, alpha)?)?);
        }
    }
    for rho in all_alternating_fixing_spine(d)? {
        if !rho.is_identity() {
            words.push(group.directed(&BElement::spine_only(d, rho)?)?);
        }
    }
    words.iter().map(|w| w.level_permutation(j)).collect()
}

/// Generators of the level-`j` stabilizer quotient of the mother group,
/// acting on the `d^j` level vertices. Degree at least 6 keeps both finite
/// generating subgroups perfect, which the quotient construction needs.
pub fn stabilizer_quotient_generators(d: usize, j: usize) -> Result<Vec<Permutation>> {
    if d < 6 {
        return Err(Error::DegreeTooSmall { required: 6, got: d });
    }
    if j == 0 {
        return Err(Error::Malformed("level must be at least 1".into()));
    }
    let group = MotherGroup::new(d)?;
    level_generators(&group, j)
}

/// Orbit of a point under a set of permutations of common degree.
pub fn orbit_of_point(perms: &[Permutation], start: usize) -> Vec<usize> {
    let n = match perms.first() {
        Some(p) => p.degree(),
        None => return vec![start],
    };
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut queue = vec![start];
    let mut head = 0;
    while head < queue.len() {
        let x = queue[head];
        head += 1;
        for p in perms {
            let y = p.apply(x);
            if !seen[y] {
                seen[y] = true;
                queue.push(y);
            }
        }
    }
    queue
}

pub fn is_transitive(perms: &[Permutation]) -> bool {
    match perms.first() {
        Some(p) => orbit_of_point(perms, 0).len() == p.degree(),
        None => false,
    }
}

/// Searches for a quotient element fixing the first level vertex whose
/// inverse moves the second vertex outside the first two — the twist the
/// stabilizer-quotient construction needs at each level. Seeded random
/// products of the generators; deterministic for a fixed seed.
pub fn find_quotient_twist(gens: &[Permutation], seed: u64) -> Option<Permutation> {
    use rand::SeedableRng;
    let n = gens.first()?.degree();
    let accepts = |p: &Permutation| {
        p.fixes(0) && {
            let s = p.inverse().apply(1);
            s != 0 && s != 1
        }
    };
    for g in gens {
        if accepts(g) {
            return Some(g.clone());
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20_000 {
        let len = rng.gen_range(2..=8);
        let mut p = Permutation::identity(n);
        for _ in 0..len {
            p = p.compose(&gens[rng.gen_range(0..gens.len())]);
        }
        if accepts(&p) {
            return Some(p);
        }
    }
    None
}

/// Uniformly random directed spec over the given valencies; with
/// `alternate` unset the data ranges over full symmetric groups (the input
/// side of the doubling embedding), otherwise over alternating groups.
pub fn random_directed_spec<R: Rng + ?Sized>(
    valencies: &ValencySequence,
    alternate: bool,
    rng: &mut R,
) -> Result<Arc<DirectedSpec>> {
    let p = valencies.prefix().len();
    let q = valencies.period().len();
    let mut make = |i: usize| -> Result<LevelData> {
        let d = valencies.degree(i);
        let d_next = valencies.degree(i + 1);
        let mut a = Vec::with_capacity(d - 1);
        for _ in 1..d {
            a.push(if alternate {
                random_alternating(d_next, false, rng)?
            } else {
                random_permutation(d_next, rng)
            });
        }
        let rho = if alternate {
            if d >= 4 {
                random_alternating(d, true, rng)?
            } else {
                Permutation::identity(d)
            }
        } else {
            random_fixing_spine(d, rng)
        };
        Ok(LevelData { a, rho })
    };
    let prefix: Vec<LevelData> = (0..p).map(&mut make).collect::<Result<_>>()?;
    let period: Vec<LevelData> = (p..p + q).map(&mut make).collect::<Result<_>>()?;
    Ok(Arc::new(DirectedSpec::new(
        valencies.clone(),
        prefix,
        period,
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cyc(d: usize, cycles: &[&[usize]]) -> Permutation {
        let owned: Vec<Vec<usize>> = cycles.iter().map(|c| c.to_vec()).collect();
        Permutation::from_cycles(d, &owned).unwrap()
    }

    fn mother5() -> MotherGroup {
        MotherGroup::new(5).unwrap()
    }

    #[test]
    fn b_element_validation() {
        let d = 5;
        let e = Permutation::identity(d);
        // rho moving the spine point is rejected.
        assert!(BElement::new(vec![e.clone(); 4], cyc(d, &[&[1, 2, 3]])).is_err());
        // Odd component is rejected.
        let odd = cyc(d, &[&[1, 2]]);
        assert!(BElement::new(
            vec![odd, e.clone(), e.clone(), e.clone()],
            e.clone()
        )
        .is_err());
        // Wrong arity is rejected.
        assert!(BElement::new(vec![e.clone(); 3], e.clone()).is_err());
        assert!(BElement::new(vec![e.clone(); 4], e).is_ok());
    }

    #[test]
    fn b_inverse_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = BElement::random(5, &mut rng).unwrap();
            assert!(x.product(&x.inverse()).is_identity());
            assert!(x.inverse().product(&x).is_identity());
            let e = BElement::identity(5);
            assert_eq!(x.product(&e), x);
            assert_eq!(e.product(&x), x);
        }
    }

    #[test]
    fn b_product_of_pure_components_is_componentwise() {
        let d = 5;
        let a2 = cyc(d, &[&[1, 2, 3]]);
        let a2p = cyc(d, &[&[2, 4, 5]]);
        let x = BElement::pure_component(d, 1, a2.clone()).unwrap();
        let y = BElement::pure_component(d, 1, a2p.clone()).unwrap();
        let expect = BElement::pure_component(d, 1, a2.compose(&a2p)).unwrap();
        assert_eq!(x.product(&y), expect);
        assert_eq!(b_product(&x, &y), expect);
        // Commutators of pure components specialize componentwise too.
        let comm = x
            .product(&y)
            .product(&x.inverse())
            .product(&y.inverse());
        assert_eq!(
            comm,
            BElement::pure_component(d, 1, a2.commutator(&a2p)).unwrap()
        );
    }

    #[test]
    fn b_product_agrees_with_word_multiplication() {
        let g = mother5();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x = g.random_b(&mut rng);
            let y = g.random_b(&mut rng);
            let word_product = g.directed(&x).unwrap().mul(&g.directed(&y).unwrap());
            let law = g.directed(&x.product(&y)).unwrap();
            assert!(
                word_product.mul(&law.inverse()).is_identity(),
                "group law disagrees with word level for {x} * {y}"
            );
        }
    }

    #[test]
    fn directed_spec_shift_drops_level_zero() {
        let v = ValencySequence::new(vec![3], vec![5, 6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let spec = random_directed_spec(&v, false, &mut rng).unwrap();
        let shifted = spec.shift();
        for i in 0..8 {
            assert_eq!(shifted.level_data(i), spec.level_data(i + 1));
        }
        assert_eq!(shifted.valencies(), &v.shift());
    }

    #[test]
    fn make_generator_rejects_bad_payloads() {
        let g = mother5();
        assert!(g.rooted(cyc(5, &[&[1, 2]])).is_err());
        assert!(g.rooted(cyc(4, &[&[1, 2, 3]])).is_err());
        let e5 = BElement::identity(5);
        assert!(g.directed(&e5).unwrap().is_identity());
    }

    #[test]
    fn witness_for_spine_only_target() {
        let g = mother5();
        let rho = cyc(5, &[&[2, 3, 4]]);
        let b = BElement::spine_only(5, rho.clone()).unwrap();
        let w = g.perfect1_witness(&WitnessTarget::Directed(b.clone())).unwrap();
        // Structure: the directed letter followed by the rooted correction.
        assert_eq!(w.len(), 2);
        let dec = w.decompose();
        assert!(dec.root.is_identity());
        assert!(dec.sections[0]
            .mul(&g.directed(&b).unwrap().inverse())
            .is_identity());
        for t in 1..5 {
            assert!(dec.sections[t].is_identity());
        }
    }

    #[test]
    fn witness_for_pure_component_target() {
        let g = mother5();
        let alpha = cyc(5, &[&[1, 2, 3]]);
        let b = BElement::pure_component(5, 1, alpha).unwrap();
        let w = g.perfect1_witness(&WitnessTarget::Directed(b.clone())).unwrap();
        let dec = w.decompose();
        assert!(dec.root.is_identity());
        assert!(dec.sections[0]
            .mul(&g.directed(&b).unwrap().inverse())
            .is_identity());
        for t in 1..5 {
            assert!(dec.sections[t].is_identity(), "slot {t} nontrivial");
        }
    }

    #[test]
    fn witness_for_rooted_target_verified_by_decomposition() {
        let g = mother5();
        let sigma = cyc(5, &[&[1, 2, 3]]);
        let w = g
            .perfect1_witness(&WitnessTarget::Rooted(sigma.clone()))
            .unwrap();
        let dec = w.decompose();
        assert!(dec.root.is_identity());
        assert!(dec.sections[0]
            .mul(&g.rooted(sigma).unwrap().inverse())
            .is_identity());
        for t in 1..5 {
            assert!(dec.sections[t].is_identity());
        }
    }

    #[test]
    fn witness_for_random_targets() {
        let g = mother5();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for i in 0..10 {
            let (target_word, w) = if i % 2 == 0 {
                let b = g.random_b(&mut rng);
                (
                    g.directed(&b).unwrap(),
                    g.perfect1_witness(&WitnessTarget::Directed(b)).unwrap(),
                )
            } else {
                let s = g.random_even(&mut rng);
                (
                    g.rooted(s.clone()).unwrap(),
                    g.perfect1_witness(&WitnessTarget::Rooted(s)).unwrap(),
                )
            };
            let dec = w.decompose();
            assert!(dec.root.is_identity());
            assert!(dec.sections[0].mul(&target_word.inverse()).is_identity());
            for t in 1..5 {
                assert!(dec.sections[t].is_identity());
            }
        }
    }

    #[test]
    fn witness_requires_degree_five() {
        let g = MotherGroup::new(4).unwrap();
        let sigma = cyc(4, &[&[1, 2, 3]]);
        assert!(g.perfect1_witness(&WitnessTarget::Rooted(sigma)).is_err());
    }

    #[test]
    fn commutator_expression_identity_and_three_cycle() {
        assert!(commutator_expression(&Permutation::identity(5))
            .unwrap()
            .is_empty());
        let c = cyc(5, &[&[1, 2, 3]]);
        let pairs = commutator_expression(&c).unwrap();
        assert_eq!(pairs.len(), 1);
        let (x, y) = &pairs[0];
        assert!(x.is_even() && y.is_even());
        assert_eq!(x.commutator(y), c);
    }

    #[test]
    fn commutator_expression_recomposes_random_a7() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let p = random_alternating(7, false, &mut rng).unwrap();
            let pairs = commutator_expression(&p).unwrap();
            let mut acc = Permutation::identity(7);
            for (x, y) in &pairs {
                assert!(x.is_even() && y.is_even());
                acc = acc.compose(&x.commutator(y));
            }
            assert_eq!(acc, p, "recomposition differs for {p}");
        }
    }

    #[test]
    fn commutator_expression_rejects_odd_and_small() {
        assert!(commutator_expression(&cyc(5, &[&[1, 2]])).is_err());
        assert!(commutator_expression(&cyc(4, &[&[1, 2, 3]])).is_err());
    }

    #[test]
    fn double_embed_of_identity_and_rooted() {
        let g = MotherGroup::new(3).unwrap();
        let e = double_embed(&g.identity(), 3);
        assert!(e.nontrivial_labels().next().is_none());

        let sigma = cyc(3, &[&[1, 2, 3]]);
        let w = g.rooted(sigma.clone()).unwrap();
        let p = double_embed(&w, 2);
        assert_eq!(p.label(&[]), sigma.double());
        assert!(p.label(&[0]).is_identity());
        assert!(p.is_alternate());
    }

    #[test]
    fn double_embed_directed_image_is_directed_and_alternate() {
        // The input side ranges over full symmetric groups: odd data maps
        // to even doubled labels.
        let v = ValencySequence::constant(3).unwrap();
        let ctx = Context::new(v.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for _ in 0..20 {
            let spec = random_directed_spec(&v, false, &mut rng).unwrap();
            let w = GroupWord::from_letters(
                &ctx,
                0,
                vec![SignedLetter::new(Letter::Directed(spec), false)],
            )
            .unwrap();
            let img = double_embed(&w, 4);
            assert!(img.is_alternate());
            assert!(img.has_directed_support());
            for (v, label) in img.nontrivial_labels() {
                assert_eq!(label.degree(), 6, "depth {}", v.len());
            }
        }
    }

    #[test]
    fn double_embed_is_homomorphism_on_levels() {
        let v = ValencySequence::constant(3).unwrap();
        let ctx = Context::new(v.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        for _ in 0..20 {
            let s1 = random_directed_spec(&v, false, &mut rng).unwrap();
            let s2 = random_directed_spec(&v, false, &mut rng).unwrap();
            let w1 = GroupWord::from_letters(
                &ctx,
                0,
                vec![SignedLetter::new(Letter::Directed(s1), false)],
            )
            .unwrap();
            let w2 = GroupWord::from_letters(
                &ctx,
                0,
                vec![SignedLetter::new(Letter::Directed(s2), false)],
            )
            .unwrap();
            let prod = w1.mul(&w2);
            for j in 1..=3 {
                let lhs = double_embed(&prod, 3).level_permutation(j).unwrap();
                let rhs = double_embed(&w1, 3)
                    .level_permutation(j)
                    .unwrap()
                    .compose(&double_embed(&w2, 3).level_permutation(j).unwrap());
                assert_eq!(lhs, rhs, "level {j}");
            }
        }
    }

    #[test]
    fn saturated_closure_of_diagonal_mother_generators() {
        let g = mother5();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let gens: Vec<Arc<DirectedSpec>> =
            (0..3).map(|_| g.random_b(&mut rng).to_spec()).collect();
        let data = saturated_closure(&gens).unwrap();
        assert_eq!(data.class_count(), 1);
        // Closure is the full wreath factor A_5 wr A_4.
        let expected = alternating_order(5).pow(4) * alternating_order(4);
        assert_eq!(data.closure_order(), expected);
        assert_eq!(data.closure_order(), b_order(5));
    }

    #[test]
    fn saturated_closure_period_two() {
        let v = ValencySequence::new(vec![], vec![5, 6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let gens: Vec<Arc<DirectedSpec>> = (0..2)
            .map(|_| random_directed_spec(&v, true, &mut rng).unwrap())
            .collect();
        let data = saturated_closure(&gens).unwrap();
        assert!(data.class_count() <= 2);
        assert_eq!(data.assignment.len(), 2);
    }

    #[test]
    fn saturated_closure_idempotent_on_marked_specs() {
        let v = ValencySequence::new(vec![3], vec![5, 6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let gens: Vec<Arc<DirectedSpec>> = (0..2)
            .map(|_| random_directed_spec(&v, true, &mut rng).unwrap())
            .collect();
        let data = saturated_closure(&gens).unwrap();
        let again = saturated_closure(&data.marked_specs().unwrap()).unwrap();
        assert_eq!(data.class_count(), again.class_count());
        assert_eq!(data.assignment, again.assignment);
        assert_eq!(data.closure_order(), again.closure_order());
    }

    #[test]
    fn saturated_closure_rejects_non_alternate() {
        let v = ValencySequence::constant(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        // Draw until the spec actually contains an odd permutation.
        loop {
            let spec = random_directed_spec(&v, false, &mut rng).unwrap();
            if !spec.is_alternate() {
                assert!(saturated_closure(&[spec]).is_err());
                break;
            }
        }
    }

    #[test]
    fn stabilizer_quotient_level_one_images() {
        let gens = stabilizer_quotient_generators(6, 1).unwrap();
        // At level 1 a rooted generator maps to its sigma and a directed
        // one to its rho, so the distinct images are exactly the even
        // permutations of the level.
        assert!(gens.iter().all(|p| p.is_even()));
        assert!(is_transitive(&gens));
        assert!(gens.iter().all(|p| p.degree() == 6));
        let distinct: std::collections::HashSet<_> =
            gens.iter().map(|p| p.images().to_vec()).collect();
        let full: std::collections::HashSet<_> = all_alternating(6)
            .unwrap()
            .iter()
            .map(|p| p.images().to_vec())
            .collect();
        assert_eq!(distinct, full);
        assert!(stabilizer_quotient_generators(5, 1).is_err());
    }

    #[test]
    fn stabilizer_quotient_level_two_transitive() {
        let gens = stabilizer_quotient_generators(6, 2).unwrap();
        assert!(gens.iter().all(|p| p.degree() == 36));
        assert!(gens.iter().all(|p| p.is_even()));
        assert!(is_transitive(&gens));
    }

    #[test]
    fn quotient_twist_exists_for_levels_one_and_two() {
        for j in 1..=2 {
            let gens = stabilizer_quotient_generators(6, j).unwrap();
            let tau = find_quotient_twist(&gens, 7).expect("twist should exist");
            assert!(tau.fixes(0));
            let s = tau.inverse().apply(1);
            assert!(s != 0 && s != 1);
        }
    }

    #[test]
    fn orbit_utilities() {
        let p = cyc(4, &[&[1, 2]]);
        let q = cyc(4, &[&[3, 4]]);
        assert!(!is_transitive(&[p.clone(), q.clone()]));
        let r = cyc(4, &[&[2, 3]]);
        assert!(is_transitive(&[p, q, r]));
    }
}
