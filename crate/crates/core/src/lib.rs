//! Hierarchical 2D bin packing engine.
//!
//! The engine packs rectangular items into a grid bin fed by a conveyor with a
//! bounded recognition window. A low-level placement policy picks a cell for a
//! single item; a high-level depth-first selective beam search explores packing
//! orders, orientations, and unpack/repack moves; a task allocator compiles the
//! chosen primitives into synchronized pick-and-place rounds for one or two
//! robots. Instance generators and an experiment harness round out the crate.

pub mod alloc;
pub mod baseline;
pub mod datagen;
pub mod env;
pub mod grid;
pub mod harness;
pub mod policy;
pub mod search;

pub use env::{ScenarioConfig, WorldState};
pub use grid::{GridBin, ItemSpec, Orientation, Placement, PositionAction, RotatedSize};
pub use search::SearchConfig;
