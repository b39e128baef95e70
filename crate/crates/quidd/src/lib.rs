//! Quantum Information Decision Diagrams.
//!
//! A QuIDD stores a complex vector or matrix as a reduced ordered decision
//! diagram over the bits of its element indices: row bits `R0, R1, ...` and
//! column bits `C0, C1, ...` interleaved as `R0 < C0 < R1 < C1 < ...`, with
//! terminals holding integer indices into a shared table of complex values.
//! Structured operators — anything assembled from tensor products of small
//! gates — collapse to diagrams whose size grows linearly with the number of
//! qubits, which makes gate-level simulation of circuits like Grover search
//! feasible far past the reach of explicit state vectors.
//!
//! The crate is organized around a [`dd::Manager`] that owns all nodes,
//! hash-conses them into canonical form, and memoizes the recursive `apply`
//! combinator. On top of that sit the linear-algebra layer
//! ([`linalg::QuiddMatrix`], [`linalg::QuiddVector`]), the gate/circuit layer
//! ([`circuits`]), the Grover driver ([`grover`]), and the classifier for
//! persistent terminal-value sets ([`persistence`]) that explains which
//! operators stay small under repeated tensoring.
//!
//! ```
//! use quidd::dd::Manager;
//! use quidd::numerics::PrecisionConfig;
//! use quidd::circuits::{parse_circuit, run};
//!
//! let mgr = Manager::new(PrecisionConfig::double()).unwrap();
//! let circuit = parse_circuit("qubits 2\ninit 00\nh 0\ncnot 0 1\n").unwrap();
//! let state = run(&mgr, &circuit).unwrap();
//! let amp = mgr.eval(state.handle(), &[], &[false, false]);
//! assert!((amp.to_f64_pair().0 - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
//! ```

pub mod circuits;
pub mod dd;
pub mod error;
pub mod grover;
pub mod linalg;
pub mod numerics;
pub mod persistence;

pub use error::{Error, Result};
