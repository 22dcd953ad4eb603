//! Visual previews for large micro-CT slice stacks.
//!
//! A gigabyte-scale stack of 8-bit slices is reduced to three megabyte-scale products:
//!
//! * a list thumbnail rendered from the view with the highest image entropy, after the sample
//!   container has been detected and masked ([`pipeline::build_list_preview`]);
//! * a data preview of 256^3 slicemaps with the container's grey values filtered out
//!   ([`pipeline::build_data_preview`]);
//! * interactive 128^3 / 256^3 / 512^3 slicemaps with the container masked and an Otsu
//!   threshold for the viewer ([`pipeline::build_interactive_preview`]).
//!
//! Built bundles are served over HTTP by [`service`].

pub mod error;
pub mod mask;
pub mod phantom;
pub mod pipeline;
pub mod render;
pub mod service;
pub mod slicemap;
pub mod stack;
pub mod threshold;
pub mod volume;

pub use error::{Error, Result};
pub use mask::{BinSet, Circle};
pub use slicemap::{SlicemapScheme, SlicemapSet};
pub use threshold::{Method, ThresholdResult};
pub use volume::{DatasetMeta, Histogram256, Volume};
