//! Reasoning-guided UI exploration for discovering ad triggers in
//! simulated mobile apps.

pub mod app_model;
pub mod profiler;
pub mod perception;
pub mod utg;
pub mod prober;
pub mod knowledge;
pub mod memory;
pub mod llm;
pub mod policy;
pub mod navigator;
pub mod eval;
pub mod config;
