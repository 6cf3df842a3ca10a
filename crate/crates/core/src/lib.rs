//! Joint estimation of several Gaussian precision matrices together with a
//! clustering of the classes that share structure.
//!
//! Two estimators are provided. [`crf`] adds a squared-Frobenius ridge to the
//! likelihood, [`pcen`] an elementwise L1 penalty; both add a fusion penalty
//! on the squared Frobenius distances between precision matrices in the same
//! cluster. The fits alternate between k-means over the vectorized matrices
//! ([`clusterer`]) and blockwise coordinate descent with the partition held
//! fixed. The sparse block subproblem is solved by the proximal gradient
//! method in [`gen_ista`].

pub mod clusterer;
pub mod crf;
pub mod error;
pub mod fit;
pub mod gen_ista;
pub mod linalg;
pub mod model;
pub mod operators;
pub mod pcen;
pub mod qda;
pub mod simgen;
pub mod tuning;

pub use error::{Error, Result};
pub use fit::{FitResult, InnerSolution, SolverReport};
pub use model::{ClassDataset, ClassStats, LabeledData, Partition, PenaltyConfig, PrecisionSet};
