//! Distribution shift between a source table `P` and a target table `Q` on
//! finite feature × label spaces: factorizable joint shift (FJS), prior
//! estimation by EM, posterior correction and classifier density ratios.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod data;
pub mod em;
pub mod error;
pub mod prob;
pub mod psi;
pub mod ratio;
pub mod shift;

pub use error::{AxisName, Error, Result};
