//! Dense arrays, a reverse-mode tape, named parameters and plain SGD.

mod array;
mod gradcheck;
mod params;
mod tape;

pub use array::{NumericArray, Precision, Scalar};
pub use gradcheck::{finite_difference_check, relative_error, GradCheckReport, RELATIVE_ERROR_FLOOR};
pub use params::{Parameter, ParameterStore, DEFAULT_LEARNING_RATE};
pub use tape::{NodeId, Primitive, Tape, PROB_CLAMP};
