//! Edge detection with eigenfilters learned from the image being analysed,
//! the classical detectors it is usually compared against, and a circular
//! Hough cell counter that runs on the resulting edge maps.

pub mod classic;
pub mod dictedge;
pub mod eigen;
pub mod houghcells;
pub mod imgcore;

pub use imgcore::{Border, Image, Kernel};
