//! Desk-scale laboratory for hybrid FHE-MPC private transformer inference.
//!
//! The crate pairs an exact, operation-metered CKKS slot emulator with a
//! simulated two-party fixed-point MPC engine, the boundary conversion
//! protocols that connect them, and a cost model for deciding where those
//! boundaries should sit.

pub mod dd;
pub mod linalg;
pub mod packing;
pub mod ring_codec;
pub mod slot_engine;
