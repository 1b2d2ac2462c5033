/// Binary sum tree over event rates: O(log n) update and proportional selection.
///
/// Internal sums are recomputed from their children on every update, so the
/// total never accumulates drift from repeated add/subtract.
#[derive(Debug, Clone)]
pub struct RateTree {
    size: usize,
    nodes: Vec<f64>,
}

impl RateTree {
    pub fn new(leaves: usize) -> Self {
        let size = leaves.max(1).next_power_of_two();
        Self { size, nodes: vec![0.0; 2 * size] }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.nodes[self.size + leaf]
    }

    pub fn set(&mut self, leaf: usize, rate: f64) {
        let mut i = self.size + leaf;
        if self.nodes[i] == rate {
            return;
        }
        self.nodes[i] = rate;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    /// Leaf whose cumulative rate interval contains `target` (`0 <= target < total`).
    pub fn search(&self, mut target: f64) -> usize {
        let mut i = 1;
        while i < self.size {
            let left = self.nodes[2 * i];
            if target < left || self.nodes[2 * i + 1] <= 0.0 {
                i *= 2;
            } else {
                target -= left;
                i = 2 * i + 1;
            }
        }
        i - self.size
    }
}
