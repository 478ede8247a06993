#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation loss. Training stops once the number of
/// epochs since the last strict improvement exceeds `patience`.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper { patience, best: f64::INFINITY, best_epoch: 0, stale: 0 }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
            return StopDecision::Improved;
        }
        self.stale += 1;
        if self.stale > self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(losses: &[f64], patience: usize) -> (usize, usize) {
        let mut s = EarlyStopper::new(patience);
        for (k, &l) in losses.iter().enumerate() {
            if s.observe(k + 1, l) == StopDecision::Stop {
                return (k + 1, s.best_epoch());
            }
        }
        (losses.len(), s.best_epoch())
    }

    #[test]
    fn decreasing_losses_run_to_the_end() {
        let l: Vec<f64> = (0..30).map(|k| 1.0 / (k + 1) as f64).collect();
        assert_eq!(run(&l, 20), (30, 30));
    }

    #[test]
    fn plateau_after_first_epoch() {
        let mut l = vec![1.0];
        l.extend(std::iter::repeat_n(1.1, 30));
        assert_eq!(run(&l, 20), (22, 1));
    }

    #[test]
    fn ties_do_not_count_as_improvement() {
        assert_eq!(run(&[1.0, 1.0, 1.0], 1), (3, 1));
    }
}
