//! Semantic similarity from document-frequency counts.
//!
//! The central quantity is the normalized Google distance (NGD) between two
//! search terms, computed from three page counts (each term alone, both
//! together) and a normalizer `N`. Counts come from a [`provider::Provider`],
//! which can be backed by an offline inverted index ([`index::Index`]), a
//! fixture file of planted counts, or a remote count endpoint with a
//! persistent cache and rate limiting.
//!
//! On top of the distance sit the application layers:
//!
//! * [`dist`]: NGD, the event-probability distribution and its prefix code,
//!   the companion compression distance (NCD), and distance-matrix assembly.
//! * [`quartet`]: unrooted ternary-tree clustering by randomized
//!   hill-climbing against a quartet fidelity score `S(T)`.
//! * [`svm`]: anchor-feature binary concept learning with a soft-margin
//!   RBF classifier trained by SMO, hyperparameters picked by cross
//!   validation.
//! * [`translate`]: inferring the word permutation that matches two
//!   languages by maximizing Pearson correlation of NGD basis matrices.
//! * [`universality`]: exact finite-corpus checks of the distribution's
//!   domination properties over arbitrary partitions of the corpus into
//!   "authors".
//! * [`eval`]: randomized classification trials against category files,
//!   with query-budget accounting.

pub mod dist;
pub mod error;
pub mod eval;
pub mod index;
pub mod provider;
pub mod quartet;
pub mod svm;
pub mod translate;
pub mod universality;

pub use error::{Error, Result};
