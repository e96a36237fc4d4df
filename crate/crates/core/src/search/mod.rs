//! Homoclinic, periodic and switching orbits from nested Fix-plane regions.

pub mod chain;
pub mod shoot;
pub mod shooting;
pub mod target;
