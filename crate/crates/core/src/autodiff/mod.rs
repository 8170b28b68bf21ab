pub mod gradcheck;
pub mod tape;

pub use gradcheck::{grad_check, projection_loss, GradCheckOptions, GradCheckReport};
pub use tape::{Gradients, NodeId, Tape};
