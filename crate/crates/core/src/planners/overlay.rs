/// Sparse multiplicative depletion on top of a read-only belief.
///
/// Simulated steps scale observed cells by `1 - p_tp`. Instead of cloning the
/// belief for every simulation, factors live in an epoch-stamped array; a
/// reset is one counter increment.
#[derive(Debug, Clone)]
pub(crate) struct Depletion {
    epoch: u32,
    stamp: Vec<u32>,
    factor: Vec<f64>,
}

impl Depletion {
    pub(crate) fn new(area: usize) -> Self {
        Depletion {
            epoch: 0,
            stamp: vec![0; area],
            factor: vec![1.0; area],
        }
    }

    /// Forgets all depletion. Grows the arrays if the grid got larger.
    pub(crate) fn reset_for(&mut self, area: usize) {
        if self.stamp.len() < area {
            self.stamp.resize(area, 0);
            self.factor.resize(area, 1.0);
        }
        self.reset();
    }

    pub(crate) fn reset(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }

    #[inline]
    pub(crate) fn factor(&self, index: usize) -> f64 {
        if self.stamp[index] == self.epoch {
            self.factor[index]
        } else {
            1.0
        }
    }

    #[inline]
    pub(crate) fn deplete(&mut self, index: usize, keep: f64) {
        if self.stamp[index] == self.epoch {
            self.factor[index] *= keep;
        } else {
            self.stamp[index] = self.epoch;
            self.factor[index] = keep;
        }
    }
}
