#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod autodiff;
pub mod damage;
pub mod fem;
pub mod io;
pub mod materials;
pub mod networks;
pub mod studies;
pub mod tensor;
pub mod verify;
