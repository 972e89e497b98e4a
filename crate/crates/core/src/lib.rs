//! Agentic planning and control with validation gates: state machine
//! recovery planning, a dual-heater digital twin, PID and model-driven
//! controllers, completion providers and benchmark metrics.

pub mod agent;
pub mod control;
pub mod fsm;
pub mod metrics;
pub mod provider;
pub mod twin;
