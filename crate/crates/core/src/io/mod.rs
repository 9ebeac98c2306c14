//! Binary encodings and atomic file IO.

pub mod bytes;
pub mod container;
