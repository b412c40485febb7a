pub mod case;
pub mod matpower;
pub mod plan;
pub mod report;
