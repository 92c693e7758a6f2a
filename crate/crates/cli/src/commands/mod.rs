pub mod calibrate;
pub mod cause;
pub mod doe;
pub mod explain;
pub mod report;
pub mod reproduce;
pub mod simulate;
pub mod train;
