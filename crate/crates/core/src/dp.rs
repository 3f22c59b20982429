//! The generalized directed-product framework: valency sequences beyond
//! the eventually periodic ones, the escape-ratio recursion for the
//! combinatorial interiors of the nested sets and its decay, the
//! monotonicity of the step function, instance bookkeeping with level
//! shifting, and the interior ratio of the assembled sets over an abstract
//! seed set.
//!
//! The seed set is abstracted to its cardinalities: the assembled interior
//! ratio only uses `|Int(Omega)| / |Omega|`, and when the directed part is
//! finite the combinatorial interior is the true interior.

use std::sync::Arc;

use num::{BigRational, BigUint, One, ToPrimitive};

use crate::error::{Error, Result};
use crate::folner::{advance_ratio, ratio_step_f64, ExactnessPolicy, RatioValue};
use crate::mother::DirectedSpec;
use crate::words::{Context, GroupWord, Letter, SignedLetter, ValencySequence};

/// A valency sequence for the escape-ratio recursion: eventually periodic
/// data or a named unbounded formula.
#[derive(Clone, Debug)]
pub enum Valencies {
    Periodic(ValencySequence),
    Formula(ValencyFormula),
}

/// Built-in unbounded valency formulas.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValencyFormula {
    /// `d_k = 5 + floor(sqrt(ln(k + 2)))`, a sublogarithmic growth profile.
    SublogRootLog,
}

impl Valencies {
    pub fn constant(d: usize) -> Result<Valencies> {
        Ok(Valencies::Periodic(ValencySequence::constant(d)?))
    }

    pub fn degree(&self, i: usize) -> usize {
        match self {
            Valencies::Periodic(v) => v.degree(i),
            Valencies::Formula(ValencyFormula::SublogRootLog) => {
                5 + ((i as f64 + 2.0).ln().sqrt().floor() as usize)
            }
        }
    }

    /// Largest degree over indices `0..=n`.
    pub fn max_degree(&self, n: usize) -> usize {
        (0..=n).map(|i| self.degree(i)).max().unwrap_or(2)
    }
}

/// The step function of the ratio recursion,
/// `f(D, eps) = (1 - eps^(D-1)) / (1 - eps^D)`; the next ratio is
/// `eps * f(D, eps)`. Decreasing in `eps`, increasing in `D`.
pub fn f_eval(d: usize, eps: &BigRational) -> Result<BigRational> {
    if d < 2 {
        return Err(Error::DegreeTooSmall { required: 2, got: d });
    }
    let zero = BigRational::from_integer(0.into());
    let one = BigRational::one();
    if eps <= &zero || eps >= &one {
        return Err(Error::Malformed(format!(
            "step function needs a ratio strictly between 0 and 1, got {eps}"
        )));
    }
    let pow_dm1 = eps.pow((d - 1) as i32);
    let pow_d = &pow_dm1 * eps;
    Ok((&one - &pow_dm1) / (&one - &pow_d))
}

pub fn f_eval_f64(d: usize, eps: f64) -> f64 {
    let pow_dm1 = eps.powi((d - 1) as i32);
    (1.0 - pow_dm1) / (1.0 - pow_dm1 * eps)
}

/// The combinatorial-interior escape ratios of the sets assembled from
/// level `K` down: `epsilon(k)` after `k` assembly steps, `epsilon(K)` for
/// the full set.
pub struct EpsilonTable {
    big_k: usize,
    values: Vec<RatioValue>,
}

impl EpsilonTable {
    pub fn top_index(&self) -> usize {
        self.big_k
    }

    pub fn epsilon(&self, k: usize) -> &RatioValue {
        &self.values[k]
    }

    pub fn last(&self) -> &RatioValue {
        self.values.last().expect("table is nonempty")
    }

    pub fn values(&self) -> &[RatioValue] {
        &self.values
    }
}

/// The escape-ratio recursion over a valency sequence:
/// `eps_0 = 1 - 1/d_K` and
/// `1 - eps_{k+1} = (1 - eps_k)/(1 - eps_k^(d_{K-k-1}))`.
pub fn epsilon_sequence(
    valencies: &Valencies,
    big_k: usize,
    policy: &ExactnessPolicy,
) -> EpsilonTable {
    let d_top = valencies.degree(big_k);
    let mut values = Vec::with_capacity(big_k + 1);
    let eps0 = BigRational::new((d_top as i64 - 1).into(), (d_top as i64).into());
    values.push(if policy.max_exact_index == 0 {
        RatioValue::Approx(eps0.to_f64().unwrap())
    } else {
        RatioValue::Exact(eps0)
    });
    for k in 1..=big_k {
        let step_degree = valencies.degree(big_k - k);
        let next = advance_ratio(values.last().unwrap(), step_degree, k, policy);
        values.push(next);
    }
    EpsilonTable { big_k, values }
}

/// One row of the decay table: the escape ratio of the depth-`K` set and,
/// when a normalization exponent is supplied, `eps * K^eta`.
#[derive(Clone, Debug)]
pub struct DecayRow {
    pub big_k: usize,
    pub eps: f64,
    pub normalized: Option<f64>,
}

/// Escape ratios `eps_K^K` for `K = 0..=k_max` in float mode, with an
/// optional normalized column. Purely numerical: no asymptotic claim is
/// made beyond the computed values.
pub fn decay_report(valencies: &Valencies, k_max: usize, eta: Option<f64>) -> Vec<DecayRow> {
    let mut rows = Vec::with_capacity(k_max + 1);
    for big_k in 0..=k_max {
        let mut eps = 1.0 - 1.0 / valencies.degree(big_k) as f64;
        for k in 0..big_k {
            eps = ratio_step_f64(eps, valencies.degree(big_k - k - 1));
        }
        let normalized = eta.map(|e| eps * (big_k as f64).powf(e));
        rows.push(DecayRow {
            big_k,
            eps,
            normalized,
        });
    }
    rows
}

/// A directed-product instance: per-level rooted alternating groups over
/// the valency sequence and a finite indexed family of directed generators
/// whose level data shift coherently.
pub struct DPInstance {
    valencies: ValencySequence,
    generators: Vec<Arc<DirectedSpec>>,
    ctx: Arc<Context>,
}

impl DPInstance {
    pub fn new(valencies: ValencySequence, generators: Vec<Arc<DirectedSpec>>) -> Result<Self> {
        let span = valencies.prefix().len() + valencies.period().len();
        for i in 0..span {
            if valencies.degree(i) < 3 {
                return Err(Error::DegreeTooSmall {
                    required: 3,
                    got: valencies.degree(i),
                });
            }
        }
        for g in &generators {
            if g.valencies() != &valencies {
                return Err(Error::InvalidValencies(
                    "generator valencies disagree with the instance".into(),
                ));
            }
        }
        let ctx = Context::new(valencies.clone());
        Ok(DPInstance {
            valencies,
            generators,
            ctx,
        })
    }

    pub fn valencies(&self) -> &ValencySequence {
        &self.valencies
    }

    pub fn generators(&self) -> &[Arc<DirectedSpec>] {
        &self.generators
    }

    pub fn context(&self) -> &Arc<Context> {
        &self.ctx
    }

    pub fn rooted_degree(&self, level: usize) -> usize {
        self.valencies.degree(level)
    }

    /// Drops level 0: the shifted valencies with each directed generator
    /// replaced by its spine section, indexed identically.
    pub fn shift(&self) -> DPInstance {
        let generators = self
            .generators
            .iter()
            .map(|g| Arc::new(g.shift()))
            .collect();
        DPInstance::new(self.valencies.shift(), generators)
            .expect("shift of a valid instance is valid")
    }

    /// Word over the instance's directed generators from `(index, inverse)`
    /// pairs.
    pub fn word_from_indices(&self, letters: &[(usize, bool)]) -> Result<GroupWord> {
        let signed = letters
            .iter()
            .map(|&(idx, inverse)| {
                self.generators
                    .get(idx)
                    .map(|g| SignedLetter::new(Letter::Directed(g.clone()), inverse))
                    .ok_or_else(|| {
                        Error::Malformed(format!("generator index {idx} out of range"))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        GroupWord::from_letters(&self.ctx, 0, signed)
    }
}

/// Free-function form of [`DPInstance::shift`].
pub fn shift_instance(instance: &DPInstance) -> DPInstance {
    instance.shift()
}

/// Cardinality data of the abstract seed set: the assembled interior ratio
/// uses it only through `interior_size / size`. Equal sizes model the
/// finite-directed-part case, where the combinatorial interior is exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OmegaCore {
    size: BigUint,
    interior_size: BigUint,
}

impl OmegaCore {
    pub fn new(size: BigUint, interior_size: BigUint) -> Result<Self> {
        if interior_size == BigUint::from(0u32) {
            return Err(Error::Malformed("interior must be nonempty".into()));
        }
        if interior_size > size {
            return Err(Error::Malformed(
                "interior cannot exceed the whole set".into(),
            ));
        }
        Ok(OmegaCore {
            size,
            interior_size,
        })
    }

    pub fn full(size: BigUint) -> Result<Self> {
        OmegaCore::new(size.clone(), size)
    }

    pub fn size(&self) -> &BigUint {
        &self.size
    }

    pub fn interior_size(&self) -> &BigUint {
        &self.interior_size
    }

    pub fn interior_fraction(&self) -> BigRational {
        BigRational::new(self.interior_size.clone().into(), self.size.clone().into())
    }
}

/// Interior ratio of the assembled set:
/// `(1 - eps) * |Int(Omega)| / |Omega|`.
pub fn omega_ratio(core: &OmegaCore, eps: &BigRational) -> BigRational {
    (BigRational::one() - eps) * core.interior_fraction()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::folner::{brute_force_counts, delta_sequence};
    use crate::mother::random_directed_spec;
    use num::BigInt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rational(num: i64, den: i64) -> BigRational {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    #[test]
    fn epsilon_base_value_is_top_degree_ratio() {
        let v = Valencies::Periodic(ValencySequence::new(vec![2, 3], vec![4]).unwrap());
        for big_k in 0..5 {
            let table = epsilon_sequence(&v, big_k, &ExactnessPolicy::default());
            let d_top = v.degree(big_k);
            assert_eq!(
                table.epsilon(0).exact().unwrap(),
                &rational(d_top as i64 - 1, d_top as i64)
            );
        }
    }

    #[test]
    fn epsilon_two_three_hand_value() {
        let v = Valencies::Periodic(ValencySequence::new(vec![2, 3], vec![3]).unwrap());
        let table = epsilon_sequence(&v, 1, &ExactnessPolicy::default());
        assert_eq!(table.epsilon(0).exact().unwrap(), &rational(2, 3));
        assert_eq!(table.epsilon(1).exact().unwrap(), &rational(2, 5));
    }

    #[test]
    fn epsilon_equals_delta_for_constant_degree() {
        for d in [2usize, 5] {
            let v = Valencies::constant(d).unwrap();
            let big_k = 50;
            let policy = ExactnessPolicy::default();
            let table = epsilon_sequence(&v, big_k, &policy);
            let deltas = delta_sequence(d, big_k, &policy).unwrap();
            for k in 0..=big_k {
                match (table.epsilon(k), deltas.delta(k)) {
                    (RatioValue::Exact(a), RatioValue::Exact(b)) => {
                        assert_eq!(a, b, "exact mismatch at {k} for d={d}")
                    }
                    (RatioValue::Approx(a), RatioValue::Approx(b)) => {
                        assert_eq!(a, b, "float mismatch at {k} for d={d}")
                    }
                    _ => panic!("exactness regimes diverge at {k} for d={d}"),
                }
            }
        }
    }

    #[test]
    fn epsilon_strictly_decreasing() {
        let v = Valencies::Periodic(ValencySequence::new(vec![], vec![3, 5, 4]).unwrap());
        let table = epsilon_sequence(&v, 30, &ExactnessPolicy::default());
        for k in 1..=30 {
            assert!(
                table.epsilon(k).as_f64() < table.epsilon(k - 1).as_f64(),
                "not decreasing at {k}"
            );
        }
    }

    #[test]
    fn step_function_value_and_monotonicity_grid() {
        assert_eq!(f_eval(2, &rational(1, 2)).unwrap(), rational(2, 3));
        // Decreasing in eps, increasing in D, by exact comparisons on the
        // grid eps = 1/10..9/10, D = 2..10.
        for d in 2..=10 {
            for i in 1..9 {
                let lo = f_eval(d, &rational(i, 10)).unwrap();
                let hi = f_eval(d, &rational(i + 1, 10)).unwrap();
                assert!(hi < lo, "f({d}, eps) not decreasing at eps={}/10", i + 1);
            }
        }
        for d in 2..=9 {
            for i in 1..=9 {
                let small = f_eval(d, &rational(i, 10)).unwrap();
                let large = f_eval(d + 1, &rational(i, 10)).unwrap();
                assert!(large > small, "f(D, {i}/10) not increasing at D={d}");
            }
        }
        assert!(f_eval(1, &rational(1, 2)).is_err());
        assert!(f_eval(3, &rational(0, 1)).is_err());
        assert!(f_eval(3, &rational(1, 1)).is_err());
    }

    #[test]
    fn epsilon_step_is_eps_times_f() {
        let v = Valencies::Periodic(ValencySequence::new(vec![], vec![4, 3]).unwrap());
        let table = epsilon_sequence(&v, 6, &ExactnessPolicy::default());
        for k in 0..6 {
            let d = v.degree(6 - k - 1);
            let eps_k = table.epsilon(k).exact().unwrap();
            let expect = eps_k * f_eval(d, eps_k).unwrap();
            assert_eq!(table.epsilon(k + 1).exact().unwrap(), &expect);
        }
    }

    #[test]
    fn mixed_valency_interiors_match_the_oracle() {
        // Internal degrees of the depth-k set are d_{K-k}..d_K, so the
        // exhaustive direction-value count must reproduce 1 - eps_k^K.
        let cases: Vec<Vec<usize>> = vec![
            vec![2, 3],
            vec![3, 2],
            vec![2, 2, 3],
            vec![3, 3, 2],
            vec![2, 3, 2],
        ];
        for prefix in cases {
            let big_k = prefix.len() - 1;
            let v = Valencies::Periodic(ValencySequence::new(prefix.clone(), vec![2]).unwrap());
            let table = epsilon_sequence(&v, big_k, &ExactnessPolicy::default());
            for k in 0..=big_k {
                let internal: Vec<usize> = (0..=k).map(|j| v.degree(big_k - k + j)).collect();
                let counts = brute_force_counts(&internal, 1 << 24).unwrap();
                let expect = BigRational::one() - table.epsilon(k).exact().unwrap();
                assert_eq!(
                    counts.interior_ratio(),
                    expect,
                    "oracle vs recursion at degrees {prefix:?}, k={k}"
                );
            }
        }
    }

    #[test]
    fn decay_constant_degree_matches_delta_column() {
        let v = Valencies::constant(5).unwrap();
        let rows = decay_report(&v, 60, Some(0.24));
        let float_policy = ExactnessPolicy {
            max_exact_index: 0,
            max_denominator_bits: 0,
        };
        let deltas = delta_sequence(5, 60, &float_policy).unwrap();
        for (k, row) in rows.iter().enumerate() {
            assert_eq!(row.big_k, k);
            assert!((row.eps - deltas.delta(k).as_f64()).abs() < 1e-15);
        }
    }

    #[test]
    fn decay_sublog_formula_shrinks_past_plateau() {
        let v = Valencies::Formula(ValencyFormula::SublogRootLog);
        let rows = decay_report(&v, 400, None);
        let peak = rows
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.eps.partial_cmp(&b.1.eps).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        for k in peak.max(1)..400 {
            assert!(
                rows[k + 1].eps <= rows[k].eps + 1e-15,
                "eps grows at K={}",
                k + 1
            );
        }
        assert!(rows[400].eps < rows[40].eps);
    }

    #[test]
    fn instance_shift_drops_level_zero() {
        let valencies = ValencySequence::new(vec![3, 4], vec![5, 6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gens: Vec<_> = (0..2)
            .map(|_| random_directed_spec(&valencies, true, &mut rng).unwrap())
            .collect();
        let inst = DPInstance::new(valencies, gens).unwrap();
        let shifted = inst.shift();
        assert_eq!(shifted.valencies(), &inst.valencies().shift());
        for (g, s) in inst.generators().iter().zip(shifted.generators()) {
            for i in 0..6 {
                assert_eq!(s.level_data(i), g.level_data(i + 1));
            }
        }
    }

    #[test]
    fn constant_diagonal_instance_is_shift_invariant() {
        let g = crate::mother::MotherGroup::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = g.random_b(&mut rng);
        let valencies = ValencySequence::constant(5).unwrap();
        let inst = DPInstance::new(valencies, vec![b.to_spec()]).unwrap();
        let shifted = inst.shift();
        assert_eq!(shifted.valencies(), inst.valencies());
        assert_eq!(shifted.generators()[0], inst.generators()[0]);
    }

    #[test]
    fn trivial_relations_stay_trivial_after_shift() {
        // Relations among directed generators of the constant diagonal
        // instance, from the finite group law: each trivial word stays
        // trivial with every letter replaced by its shifted generator.
        let g = crate::mother::MotherGroup::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let valencies = ValencySequence::constant(5).unwrap();
        for _ in 0..30 {
            let x = g.random_b(&mut rng);
            let y = g.random_b(&mut rng);
            let xy = x.product(&y);
            let inst = DPInstance::new(
                valencies.clone(),
                vec![x.to_spec(), y.to_spec(), xy.to_spec()],
            )
            .unwrap();
            let relation = [(0usize, false), (1, false), (2, true)];
            let w = inst.word_from_indices(&relation).unwrap();
            assert!(w.is_identity(), "relation fails before shifting");
            let shifted = inst.shift();
            let w1 = shifted.word_from_indices(&relation).unwrap();
            assert!(w1.is_identity(), "relation fails after shifting");
        }
    }

    #[test]
    fn shifted_word_is_the_spine_section() {
        // For words in directed letters only, the spine section of the
        // decomposition is the same letter sequence one level down.
        let valencies = ValencySequence::new(vec![4], vec![5, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gens: Vec<_> = (0..3)
            .map(|_| random_directed_spec(&valencies, true, &mut rng).unwrap())
            .collect();
        let inst = DPInstance::new(valencies, gens).unwrap();
        let w = inst
            .word_from_indices(&[(0, false), (1, true), (2, false), (0, true)])
            .unwrap();
        let section = &w.decompose().sections[0];
        assert_eq!(section.level(), 1);
        assert_eq!(section.letters().len(), w.letters().len());
    }

    #[test]
    fn omega_ratio_values() {
        // Full interior at constant degree 5 with one assembly step:
        // the ratio is 1 - eps_1 = 625/2101.
        let v = Valencies::constant(5).unwrap();
        let table = epsilon_sequence(&v, 1, &ExactnessPolicy::default());
        let core = OmegaCore::full(BigUint::from(1000u32)).unwrap();
        let ratio = omega_ratio(&core, table.epsilon(1).exact().unwrap());
        assert_eq!(ratio, rational(625, 2101));

        // Halving the interior halves the ratio.
        let half = OmegaCore::new(BigUint::from(1000u32), BigUint::from(500u32)).unwrap();
        let ratio_half = omega_ratio(&half, table.epsilon(1).exact().unwrap());
        assert_eq!(ratio_half * BigRational::from_integer(2.into()), ratio);

        // Both factors live in (0, 1], so the product does too.
        assert!(omega_ratio(&core, &rational(1, 2)) <= BigRational::one());
        assert!(OmegaCore::new(BigUint::from(4u32), BigUint::from(5u32)).is_err());
        assert!(OmegaCore::new(BigUint::from(4u32), BigUint::from(0u32)).is_err());
    }
}
