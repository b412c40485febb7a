pub mod cases;
pub mod cli;
pub mod io;
pub mod runtime;
