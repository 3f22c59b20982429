//! Groups of rooted-tree automorphisms generated by rooted and directed
//! elements, together with the exact combinatorics of their Folner sets.
//!
//! The crate is organised around five layers:
//!
//! * [`perm`] — finite permutations with parity, alternating-group sampling
//!   and the index-doubling embedding `A_d -> A_{2d}`.
//! * [`words`] — tree automorphisms as words over rooted/directed letters,
//!   with wreath decomposition, vertex actions, portraits, a terminating
//!   word-problem oracle and induced level permutations.
//! * [`mother`] — the alternate mother group `G_d` and its auxiliary
//!   constructions: the finite directed group `B`, first-slot embedding
//!   witnesses, commutator expressions, the doubling embedding, saturated
//!   closures and level-stabilizer quotients.
//! * [`folner`] — the Folner sets `L_k`: profile representation, exact
//!   membership/interior tests, generator multiplication, the exact
//!   boundary-ratio recursion and cardinalities, stratified uniform
//!   sampling, and an independent brute-force counting oracle.
//! * [`dp`] — the generalized directed-product framework over arbitrary
//!   valency sequences: the epsilon recursion and its decay, instance
//!   shifting, and the interior-ratio bookkeeping for an abstract seed set.

#![forbid(unsafe_code)]

pub mod dp;
pub mod error;
pub mod folner;
pub mod mother;
pub mod perm;
pub mod words;

pub use error::{Error, Result};
