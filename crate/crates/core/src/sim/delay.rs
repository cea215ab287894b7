use std::collections::VecDeque;

/// Pure transport delay of a whole number of samples.
///
/// `push` returns the sample pushed `len` calls earlier, or the fill value
/// while the line is warming up. A zero-length line is a pass-through.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayLine {
    buf: VecDeque<f64>,
}

impl DelayLine {
    pub fn new(len: usize, fill: f64) -> Self {
        Self {
            buf: std::iter::repeat(fill).take(len).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn push(&mut self, sample: f64) -> f64 {
        match self.buf.pop_front() {
            Some(out) => {
                self.buf.push_back(sample);
                out
            }
            None => sample,
        }
    }
}
