//! Local Tb machinery on a shifted dyadic grid: stopping and transit cubes,
//! b-adapted martingale differences, the A_QR Schur bound, Carleson ledgers,
//! exceptional sets, the big piece G_Q and the testing/good-λ harnesses.

mod carleson;
mod exceptional;
mod forest;
mod harness;
mod schur;

pub use carleson::{band_grid, carleson_ledger, CarlesonLedger, CarlesonParams};
pub use exceptional::{
    big_piece_gq, exceptional_set, h1_radius, p_function, small_set_worst_case, validate_local_assumptions, BigPiece,
    ExceptionalParams, ExceptionalSet, LocalAssumptions,
};
pub use forest::{
    b_telescoping, expand, martingale_difference, stopping_cubes, transit_cubes, Averages, Expansion, StoppingFamily,
    Term, TransitForest,
};
pub use harness::{good_lambda_harness, testing_condition, GoodLambdaRow, GoodLambdaTable, TestingReport};
pub use schur::{aqr, dyadic_tower, dyadic_tree, schur_norm, SchurResult};
