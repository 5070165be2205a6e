//! Differentially private building blocks shared by the mechanisms.

pub mod budget;
pub mod dft;
pub mod exponential;
pub mod haar;
pub mod laplace;
pub mod strategy;
pub mod tree;

pub use budget::{split_budget, BudgetLedger, BudgetStage};
pub use dft::{dft_topk, fourier_forward, fourier_inverse, FourierApprox};
pub use exponential::{exponential_mechanism, selection_probabilities};
pub use haar::{haar_forward, haar_inverse};
pub use laplace::{laplace, laplace_vector};
pub use strategy::{run_strategy, StrategySpec};
pub use tree::{tree_least_squares, Hierarchy, NoisyTree, TreeNode};
