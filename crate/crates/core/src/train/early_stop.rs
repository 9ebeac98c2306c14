use crate::error::{Error, Result};

/// Patience-based stopping on validation loss. Improvement is strict.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyStopState {
    pub patience: usize,
    pub best_val_loss: f64,
    /// 1-based epoch of the best loss; 0 before any update.
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
    pub epochs_seen: usize,
    pub stopped: bool,
}

impl EarlyStopState {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_val_loss: f64::INFINITY,
            best_epoch: 0,
            epochs_since_improvement: 0,
            epochs_seen: 0,
            stopped: false,
        }
    }

    /// Record one epoch's validation loss. Returns whether it improved.
    pub fn update(&mut self, val_loss: f64) -> Result<bool> {
        if self.stopped {
            return Err(Error::Contract("early-stop update after stopping".into()));
        }
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss {val_loss}")));
        }
        self.epochs_seen += 1;
        let improved = val_loss < self.best_val_loss;
        if improved {
            self.best_val_loss = val_loss;
            self.best_epoch = self.epochs_seen;
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
            self.stopped = self.epochs_since_improvement >= self.patience;
        }
        Ok(improved)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_stops_after_epoch_five() {
        let mut s = EarlyStopState::new(3);
        for l in [1.0, 0.9, 0.95, 0.96, 0.97] {
            s.update(l).unwrap();
        }
        assert!(s.stopped);
        assert_eq!(s.epochs_seen, 5);
        assert_eq!(s.best_epoch, 2);
        assert!(matches!(s.update(0.1), Err(Error::Contract(_))));
    }

    #[test]
    fn ties_do_not_improve() {
        let mut s = EarlyStopState::new(1);
        s.update(1.0).unwrap();
        assert!(!s.update(1.0).unwrap());
        assert!(s.stopped);
    }
}
