//! Ground-truth data model: quality ladders, binary satisfaction records and
//! the satisfied-subject ratio computed per rung.

mod ladder;
mod ratio;
mod records;
mod simulate;

pub use ladder::{QualityLadder, Rung};
pub use ratio::{ratio_curve, satisfaction_ratio, RatioCount, RatioCurve};
pub use records::{RatioKind, SatisfactionRecord, SubjectKind};
pub use simulate::{simulate_machine_population, MachinePopulation};
