//! Snapshot sequences produced by the solvers.

use crate::field::{ComplexField2D, Mesh};
use crate::obe::SimState;

#[derive(Clone, Debug)]
pub struct Frame {
    pub t: f64,
    pub rho21: ComplexField2D,
    /// full atomic + probe state, kept only when requested
    pub state: Option<Box<SimState>>,
    pub norm: f64,
    pub peak_x: Option<f64>,
}

impl Frame {
    pub fn new(t: f64, rho21: ComplexField2D) -> Self {
        let norm = rho21.norm_sqr();
        let peak_x = crate::diagnostics::peak_on_row(&rho21, 0.0).ok();
        Frame { t, rho21, state: None, norm, peak_x }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TimeSeries {
    pub frames: Vec<Frame>,
}

impl TimeSeries {
    pub fn new() -> Self {
        TimeSeries { frames: Vec::new() }
    }

    pub fn push(&mut self, f: Frame) {
        self.frames.push(f);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }

    pub fn mesh(&self) -> Option<Mesh> {
        self.frames.first().map(|f| f.rho21.mesh)
    }

    /// Frames with t in [t0, t1].
    pub fn window(&self, t0: f64, t1: f64) -> TimeSeries {
        TimeSeries { frames: self.frames.iter().filter(|f| f.t >= t0 && f.t <= t1).cloned().collect() }
    }

    /// Index of the frame closest in time to `t`.
    pub fn nearest(&self, t: f64) -> Option<usize> {
        (0..self.frames.len()).min_by(|&a, &b| {
            (self.frames[a].t - t).abs().partial_cmp(&(self.frames[b].t - t).abs()).unwrap()
        })
    }
}
