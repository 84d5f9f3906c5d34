pub mod error;
pub mod gengame;
pub mod grid;
pub mod control;
pub mod discretize;
pub mod matrixkit;
pub mod oracle;
pub mod simulate;
pub mod symgame;

pub use error::{Error, Result};
pub use grid::{Grid, ImpulseMode, ImpulseSets};
