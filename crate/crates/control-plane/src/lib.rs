//! Network control plane for the simulated SmartMask.
//!
//! A single device task ([`device`]) owns the simulator; any number of TCP
//! and WebSocket clients ([`server`]) talk to it through its request queue
//! and receive state and alert broadcasts once subscribed.

pub mod device;
pub mod server;

pub use device::{spawn_device, Clock, DeviceError, DeviceHandle, DeviceOptions, Snapshot};
pub use server::{serve_connection, BindError, Server};
