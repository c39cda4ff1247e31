//! Domain types shared by every stage of the pipeline.

mod calendar;
mod grid;
mod request;
mod slot;
mod tensor;

pub use calendar::CalendarInfo;
pub use grid::{cell_of, GridSpec};
pub use request::RideRequest;
pub use slot::{slot_of, StudyWindow, TimeSlot, SECONDS_PER_DAY, SLOTS_PER_DAY, SLOT_SECONDS};
pub use tensor::DemandTensor;
