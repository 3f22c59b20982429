//! Tree automorphisms as words over rooted and directed letters.
//!
//! A word lives at a level `i` of a tower of groups acting on the suffix
//! trees of a fixed valency sequence. Decomposition folds the wreath product
//! rule over the letters; the product rule composes left to right, the left
//! factor being applied first. The action convention on vertices is
//! `(g_1,...,g_d) sigma : t_0 t_1... -> sigma(t_0) g_{t_0}(t_1...)`, i.e.
//! the root permutation moves the top coordinate and the section at the
//! *original* top coordinate handles the rest; with this choice the
//! displayed product rule holds verbatim.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::mother::DirectedSpec;
use crate::perm::Permutation;

/// An eventually periodic sequence of branching degrees `d_i >= 2`,
/// described by a finite prefix and a repeating period.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ValencySequence {
    prefix: Vec<usize>,
    period: Vec<usize>,
}

impl ValencySequence {
    pub fn new(prefix: Vec<usize>, period: Vec<usize>) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::InvalidValencies("period must be nonempty".into()));
        }
        if prefix.iter().chain(period.iter()).any(|&d| d < 2) {
            return Err(Error::InvalidValencies("all entries must be >= 2".into()));
        }
        Ok(ValencySequence { prefix, period })
    }

    pub fn constant(d: usize) -> Result<Self> {
        ValencySequence::new(Vec::new(), vec![d])
    }

    pub fn degree(&self, i: usize) -> usize {
        if i < self.prefix.len() {
            self.prefix[i]
        } else {
            self.period[(i - self.prefix.len()) % self.period.len()]
        }
    }

    pub fn prefix(&self) -> &[usize] {
        &self.prefix
    }

    pub fn period(&self) -> &[usize] {
        &self.period
    }

    /// Drops the first entry; an eventually periodic description shifts to
    /// another one.
    pub fn shift(&self) -> ValencySequence {
        if self.prefix.is_empty() {
            let mut period = self.period.clone();
            period.rotate_left(1);
            ValencySequence {
                prefix: Vec::new(),
                period,
            }
        } else {
            ValencySequence {
                prefix: self.prefix[1..].to_vec(),
                period: self.period.clone(),
            }
        }
    }

    /// Representative level with identical data at every deeper coincident
    /// level: levels past the prefix are reduced modulo the period.
    pub fn canonical_level(&self, i: usize) -> usize {
        if i < self.prefix.len() {
            i
        } else {
            self.prefix.len() + (i - self.prefix.len()) % self.period.len()
        }
    }

    pub fn is_constant(&self) -> Option<usize> {
        let d = self.period[0];
        if self.period.iter().all(|&x| x == d) && self.prefix.iter().all(|&x| x == d) {
            Some(d)
        } else {
            None
        }
    }

    /// The doubled sequence `(2 d_i)_i` used by the doubling embedding.
    pub fn doubled(&self) -> ValencySequence {
        ValencySequence {
            prefix: self.prefix.iter().map(|&d| 2 * d).collect(),
            period: self.period.iter().map(|&d| 2 * d).collect(),
        }
    }
}

impl fmt::Debug for ValencySequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ValencySequence({:?};{:?})", self.prefix, self.period)
    }
}

/// One letter of a word: a rooted permutation of the current level, or a
/// directed element described by per-level data.
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Letter {
    Rooted(Permutation),
    Directed(Arc<DirectedSpec>),
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SignedLetter {
    pub letter: Letter,
    pub inverse: bool,
}

impl SignedLetter {
    pub fn new(letter: Letter, inverse: bool) -> Self {
        SignedLetter { letter, inverse }
    }

    fn inverted(&self) -> SignedLetter {
        match &self.letter {
            Letter::Rooted(p) => SignedLetter::new(Letter::Rooted(p.inverse()), false),
            Letter::Directed(_) => SignedLetter::new(self.letter.clone(), !self.inverse),
        }
    }
}

impl fmt::Debug for SignedLetter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.letter {
            Letter::Rooted(p) => write!(f, "a{p}")?,
            Letter::Directed(_) => write!(f, "h")?,
        }
        if self.inverse {
            write!(f, "^-1")?;
        }
        Ok(())
    }
}

type MemoKey = (usize, Vec<SignedLetter>);

struct MemoEntry {
    root: Permutation,
    sections: Vec<Vec<SignedLetter>>,
}

/// Shared environment for words: the valency sequence, resource limits and
/// the decomposition memo. The memo is keyed by the canonical level and the
/// reduced letter sequence, and is internally synchronized so contexts can
/// be shared across tasks.
pub struct Context {
    valencies: ValencySequence,
    level_degree_limit: usize,
    memo: Mutex<HashMap<MemoKey, Arc<MemoEntry>>>,
}

impl Context {
    pub fn new(valencies: ValencySequence) -> Arc<Context> {
        Arc::new(Context {
            valencies,
            level_degree_limit: 2_000_000,
            memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_level_degree_limit(valencies: ValencySequence, limit: usize) -> Arc<Context> {
        Arc::new(Context {
            valencies,
            level_degree_limit: limit,
            memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn valencies(&self) -> &ValencySequence {
        &self.valencies
    }
}

/// A word over rooted/directed letters denoting a tree automorphism at a
/// given level of the tower. Words are kept reduced: rooted letters carry a
/// positive sign, adjacent rooted letters are merged, identity rooted
/// letters are dropped, and adjacent mutually inverse directed letters
/// cancel. Equality is syntactic on the reduced form; semantic equality is
/// `is_identity` of the difference.
#[derive(Clone)]
pub struct GroupWord {
    ctx: Arc<Context>,
    level: usize,
    letters: Vec<SignedLetter>,
}

impl PartialEq for GroupWord {
    fn eq(&self, other: &Self) -> bool {
        self.level == other.level
            && self.letters == other.letters
            && self.ctx.valencies == other.ctx.valencies
    }
}

impl Eq for GroupWord {}

fn push_reduced(out: &mut Vec<SignedLetter>, sl: SignedLetter) {
    let sl = if sl.inverse {
        if let Letter::Rooted(_) = sl.letter {
            sl.inverted()
        } else {
            sl
        }
    } else {
        sl
    };
    match &sl.letter {
        Letter::Rooted(q) => {
            if q.is_identity() {
                return;
            }
            if let Some(last) = out.last() {
                if let Letter::Rooted(p) = &last.letter {
                    let merged = p.compose(q);
                    out.pop();
                    if !merged.is_identity() {
                        out.push(SignedLetter::new(Letter::Rooted(merged), false));
                    }
                    return;
                }
            }
            out.push(sl);
        }
        Letter::Directed(_) => {
            if let Some(last) = out.last() {
                if last.letter == sl.letter && last.inverse != sl.inverse {
                    out.pop();
                    return;
                }
            }
            out.push(sl);
        }
    }
}

fn reduce(letters: impl IntoIterator<Item = SignedLetter>) -> Vec<SignedLetter> {
    let mut out = Vec::new();
    for sl in letters {
        push_reduced(&mut out, sl);
    }
    out
}

impl GroupWord {
    /// Builds a word at `level` from raw letters, validating the letters
    /// against the context and reducing.
    pub fn from_letters(
        ctx: &Arc<Context>,
        level: usize,
        letters: Vec<SignedLetter>,
    ) -> Result<GroupWord> {
        for sl in &letters {
            match &sl.letter {
                Letter::Rooted(p) => {
                    let d = ctx.valencies.degree(level);
                    if p.degree() != d {
                        return Err(Error::DegreeMismatch(format!(
                            "rooted letter of degree {} at level {level} of degree {d}",
                            p.degree()
                        )));
                    }
                }
                Letter::Directed(spec) => {
                    if spec.valencies() != &ctx.valencies {
                        return Err(Error::DegreeMismatch(
                            "directed letter has a different valency sequence".into(),
                        ));
                    }
                }
            }
        }
        Ok(GroupWord {
            ctx: ctx.clone(),
            level,
            letters: reduce(letters),
        })
    }

    pub fn identity(ctx: &Arc<Context>, level: usize) -> GroupWord {
        GroupWord {
            ctx: ctx.clone(),
            level,
            letters: Vec::new(),
        }
    }

    pub fn context(&self) -> &Arc<Context> {
        &self.ctx
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn letters(&self) -> &[SignedLetter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Degree of the tree at this word's level.
    pub fn top_degree(&self) -> usize {
        self.ctx.valencies.degree(self.level)
    }

    /// Rebases the word to another level carrying identical data (same
    /// canonical level); for constant valencies every level qualifies.
    pub fn at_level(&self, level: usize) -> GroupWord {
        assert_eq!(
            self.ctx.valencies.canonical_level(self.level),
            self.ctx.valencies.canonical_level(level),
            "levels {} and {level} carry different data",
            self.level
        );
        GroupWord {
            ctx: self.ctx.clone(),
            level,
            letters: self.letters.clone(),
        }
    }

    pub fn mul(&self, other: &GroupWord) -> GroupWord {
        assert_eq!(
            self.ctx.valencies.canonical_level(self.level),
            self.ctx.valencies.canonical_level(other.level),
            "cannot multiply words at levels with different data"
        );
        assert_eq!(
            self.ctx.valencies, other.ctx.valencies,
            "cannot multiply words over different valency sequences"
        );
        let mut letters = self.letters.clone();
        for sl in &other.letters {
            push_reduced(&mut letters, sl.clone());
        }
        GroupWord {
            ctx: self.ctx.clone(),
            level: self.level,
            letters,
        }
    }

    pub fn inverse(&self) -> GroupWord {
        let letters = reduce(self.letters.iter().rev().map(|sl| sl.inverted()));
        GroupWord {
            ctx: self.ctx.clone(),
            level: self.level,
            letters,
        }
    }

    /// `by * self * by^-1`.
    pub fn conjugate_by(&self, by: &GroupWord) -> GroupWord {
        by.mul(self).mul(&by.inverse())
    }

    /// `self * other * self^-1 * other^-1`.
    pub fn commutator(&self, other: &GroupWord) -> GroupWord {
        self.mul(other).mul(&self.inverse()).mul(&other.inverse())
    }

    fn memo_key(&self) -> MemoKey {
        (
            self.ctx.valencies.canonical_level(self.level),
            self.letters.clone(),
        )
    }

    fn decompose_entry(&self) -> Arc<MemoEntry> {
        let key = self.memo_key();
        if let Some(hit) = self.ctx.memo.lock().unwrap().get(&key) {
            return hit.clone();
        }
        let entry = Arc::new(raw_decompose(&self.ctx, self.level, &self.letters));
        self.ctx
            .memo
            .lock()
            .unwrap()
            .insert(key, entry.clone());
        entry
    }

    /// Wreath decomposition: the root permutation and one section word per
    /// child, the sections living one level deeper.
    pub fn decompose(&self) -> Decomposition {
        let entry = self.decompose_entry();
        let sections = entry
            .sections
            .iter()
            .map(|letters| GroupWord {
                ctx: self.ctx.clone(),
                level: self.level + 1,
                letters: letters.clone(),
            })
            .collect();
        Decomposition {
            root: entry.root.clone(),
            sections,
        }
    }

    /// Image of a vertex address under the automorphism. Coordinates are
    /// 0-based; entry `j` must be below the degree of level `level + j`.
    pub fn act(&self, vertex: &[usize]) -> Result<Vec<usize>> {
        for (j, &t) in vertex.iter().enumerate() {
            let d = self.ctx.valencies.degree(self.level + j);
            if t >= d {
                return Err(Error::Malformed(format!(
                    "vertex coordinate {t} at depth {j} exceeds degree {d}"
                )));
            }
        }
        let mut v = vertex.to_vec();
        for sl in &self.letters {
            act_letter(self.level, sl, &mut v);
        }
        Ok(v)
    }

    /// Portrait truncated at `depth`: the permutation labels of all vertices
    /// of length `< depth`.
    pub fn portrait(&self, depth: usize) -> Portrait {
        let degrees: Vec<usize> = (0..depth)
            .map(|j| self.ctx.valencies.degree(self.level + j))
            .collect();
        let mut labels = HashMap::new();
        fill_portrait(self, &mut Vec::new(), depth, &mut labels);
        Portrait { degrees, labels }
    }

    /// Terminating word-problem oracle: true iff the word acts trivially on
    /// every level. Maintains a visited set of reduced section words keyed
    /// by canonical level; sections of a length-n word have length <= n over
    /// a finite letter alphabet, so the search space is finite.
    pub fn is_identity(&self) -> bool {
        if self.letters.is_empty() {
            return true;
        }
        let mut visited: HashSet<MemoKey> = HashSet::new();
        visited.insert(self.memo_key());
        let mut pending = vec![self.clone()];
        while let Some(word) = pending.pop() {
            let entry = word.decompose_entry();
            if !entry.root.is_identity() {
                return false;
            }
            for letters in &entry.sections {
                if letters.is_empty() {
                    continue;
                }
                let child = GroupWord {
                    ctx: word.ctx.clone(),
                    level: word.level + 1,
                    letters: letters.clone(),
                };
                if visited.insert(child.memo_key()) {
                    pending.push(child);
                }
            }
        }
        true
    }

    /// The permutation induced on level `j` (vertices enumerated
    /// lexicographically, top coordinate most significant). Functorial:
    /// the level permutation of a product is the composition of the level
    /// permutations.
    pub fn level_permutation(&self, j: usize) -> Result<Permutation> {
        let mut size: usize = 1;
        for m in 0..j {
            let d = self.ctx.valencies.degree(self.level + m);
            size = size
                .checked_mul(d)
                .filter(|&s| s <= self.ctx.level_degree_limit)
                .ok_or_else(|| {
                    Error::ResourceLimit(format!(
                        "level {j} has more than {} vertices",
                        self.ctx.level_degree_limit
                    ))
                })?;
        }
        let degrees: Vec<usize> = (0..j)
            .map(|m| self.ctx.valencies.degree(self.level + m))
            .collect();
        let mut images = vec![0usize; size];
        let mut addr = vec![0usize; j];
        for image in images.iter_mut() {
            let out = self.act(&addr)?;
            *image = address_to_index(&out, &degrees);
            increment_address(&mut addr, &degrees);
        }
        Permutation::from_images(images)
    }
}

impl fmt::Debug for GroupWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupWord@{}{:?}", self.level, self.letters)
    }
}

pub(crate) fn address_to_index(addr: &[usize], degrees: &[usize]) -> usize {
    let mut idx = 0;
    for (j, &t) in addr.iter().enumerate() {
        idx = idx * degrees[j] + t;
    }
    idx
}

pub(crate) fn increment_address(addr: &mut [usize], degrees: &[usize]) {
    for j in (0..addr.len()).rev() {
        addr[j] += 1;
        if addr[j] < degrees[j] {
            return;
        }
        addr[j] = 0;
    }
}

fn fill_portrait(
    word: &GroupWord,
    prefix: &mut Vec<usize>,
    depth: usize,
    labels: &mut HashMap<Vec<usize>, Permutation>,
) {
    if depth == 0 {
        return;
    }
    let dec = word.decompose();
    if !dec.root.is_identity() {
        labels.insert(prefix.clone(), dec.root);
    }
    for (t, section) in dec.sections.iter().enumerate() {
        if section.is_empty() {
            continue;
        }
        prefix.push(t);
        fill_portrait(section, prefix, depth - 1, labels);
        prefix.pop();
    }
}

/// Per-letter wreath data: an optional one-letter contribution per child
/// slot plus the root permutation.
fn letter_decomposition(
    level: usize,
    sl: &SignedLetter,
    d0: usize,
) -> (Vec<Option<SignedLetter>>, Permutation) {
    match &sl.letter {
        Letter::Rooted(p) => {
            let root = if sl.inverse { p.inverse() } else { p.clone() };
            (vec![None; d0], root)
        }
        Letter::Directed(spec) => {
            let data = spec.level_data(level);
            let mut contrib: Vec<Option<SignedLetter>> = vec![None; d0];
            if !sl.inverse {
                contrib[0] = Some(SignedLetter::new(Letter::Directed(spec.clone()), false));
                for (c, a) in data.a.iter().enumerate() {
                    if !a.is_identity() {
                        contrib[c + 1] =
                            Some(SignedLetter::new(Letter::Rooted(a.clone()), false));
                    }
                }
                (contrib, data.rho.clone())
            } else {
                contrib[0] = Some(SignedLetter::new(Letter::Directed(spec.clone()), true));
                let rho_inv = data.rho.inverse();
                for (t, slot) in contrib.iter_mut().enumerate().skip(1) {
                    let s = rho_inv.apply(t);
                    let a = &data.a[s - 1];
                    if !a.is_identity() {
                        *slot = Some(SignedLetter::new(Letter::Rooted(a.inverse()), false));
                    }
                }
                (contrib, rho_inv)
            }
        }
    }
}

fn raw_decompose(ctx: &Arc<Context>, level: usize, letters: &[SignedLetter]) -> MemoEntry {
    let d0 = ctx.valencies.degree(level);
    let mut sections: Vec<Vec<SignedLetter>> = vec![Vec::new(); d0];
    let mut root = Permutation::identity(d0);
    for sl in letters {
        let (contrib, letter_root) = letter_decomposition(level, sl, d0);
        for (t, section) in sections.iter_mut().enumerate() {
            let src = root.apply(t);
            if let Some(x) = &contrib[src] {
                push_reduced(section, x.clone());
            }
        }
        root = root.compose(&letter_root);
    }
    MemoEntry { root, sections }
}

/// In-place action of one letter on a vertex address.
fn act_letter(level: usize, sl: &SignedLetter, v: &mut [usize]) {
    match &sl.letter {
        Letter::Rooted(p) => {
            if !v.is_empty() {
                v[0] = if sl.inverse {
                    p.inverse().apply(v[0])
                } else {
                    p.apply(v[0])
                };
            }
        }
        Letter::Directed(spec) => {
            let mut idx = 0;
            let mut lvl = level;
            while idx < v.len() {
                let data = spec.level_data(lvl);
                let t = v[idx];
                if !sl.inverse {
                    v[idx] = data.rho.apply(t);
                    if t == 0 {
                        idx += 1;
                        lvl += 1;
                        continue;
                    }
                    if idx + 1 < v.len() {
                        v[idx + 1] = data.a[t - 1].apply(v[idx + 1]);
                    }
                } else {
                    let u = data.rho.inverse().apply(t);
                    v[idx] = u;
                    if u == 0 {
                        idx += 1;
                        lvl += 1;
                        continue;
                    }
                    if idx + 1 < v.len() {
                        v[idx + 1] = data.a[u - 1].inverse().apply(v[idx + 1]);
                    }
                }
                break;
            }
        }
    }
}

/// Result of one wreath decomposition step.
pub struct Decomposition {
    pub root: Permutation,
    pub sections: Vec<GroupWord>,
}

/// A truncated portrait: sparse permutation labels per vertex, identity
/// where absent. `degrees[m]` is the label degree at vertices of length `m`.
#[derive(Clone)]
pub struct Portrait {
    degrees: Vec<usize>,
    labels: HashMap<Vec<usize>, Permutation>,
}

impl Portrait {
    pub(crate) fn from_parts(
        degrees: Vec<usize>,
        labels: HashMap<Vec<usize>, Permutation>,
    ) -> Portrait {
        Portrait { degrees, labels }
    }

    pub fn depth(&self) -> usize {
        self.degrees.len()
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn label(&self, vertex: &[usize]) -> Permutation {
        match self.labels.get(vertex) {
            Some(p) => p.clone(),
            None => Permutation::identity(self.degrees[vertex.len()]),
        }
    }

    pub fn nontrivial_labels(&self) -> impl Iterator<Item = (&Vec<usize>, &Permutation)> {
        self.labels.iter()
    }

    pub fn is_alternate(&self) -> bool {
        self.labels.values().all(|p| p.is_even())
    }

    /// True when every nontrivial label sits on the spine or directly off
    /// it, i.e. at an address whose coordinates are all 0 except possibly
    /// the last — the support shape of a directed automorphism.
    pub fn has_directed_support(&self) -> bool {
        self.labels.keys().all(|v| {
            v.len() <= 1 || v[..v.len() - 1].iter().all(|&c| c == 0)
        })
    }

    pub fn act(&self, vertex: &[usize]) -> Result<Vec<usize>> {
        if vertex.len() > self.degrees.len() {
            return Err(Error::Malformed(format!(
                "address of length {} exceeds portrait depth {}",
                vertex.len(),
                self.degrees.len()
            )));
        }
        for (j, &t) in vertex.iter().enumerate() {
            if t >= self.degrees[j] {
                return Err(Error::Malformed(format!(
                    "vertex coordinate {t} at depth {j} exceeds degree {}",
                    self.degrees[j]
                )));
            }
        }
        let mut out = Vec::with_capacity(vertex.len());
        for (j, &t) in vertex.iter().enumerate() {
            let label = self.label(&vertex[..j]);
            debug_assert_eq!(label.degree(), self.degrees[j]);
            out.push(label.apply(t));
        }
        Ok(out)
    }

    pub fn level_permutation(&self, j: usize) -> Result<Permutation> {
        if j > self.degrees.len() {
            return Err(Error::Malformed(format!(
                "level {j} exceeds portrait depth {}",
                self.degrees.len()
            )));
        }
        let degrees = &self.degrees[..j];
        let size: usize = degrees.iter().product();
        let mut images = vec![0usize; size];
        let mut addr = vec![0usize; j];
        for image in images.iter_mut() {
            let out = self.act(&addr)?;
            *image = address_to_index(&out, degrees);
            increment_address(&mut addr, degrees);
        }
        Permutation::from_images(images)
    }
}
