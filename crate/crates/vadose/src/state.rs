//! The primary unknown: per-cell hydraulic heads.

use std::ops::{Deref, DerefMut};

/// Vector of cell hydraulic heads, m.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadState(pub Vec<f64>);

impl HeadState {
    pub fn constant(n: usize, value: f64) -> HeadState {
        HeadState(vec![value; n])
    }

    pub fn zeros(n: usize) -> HeadState {
        HeadState::constant(n, 0.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Deref for HeadState {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for HeadState {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for HeadState {
    fn from(v: Vec<f64>) -> HeadState {
        HeadState(v)
    }
}
