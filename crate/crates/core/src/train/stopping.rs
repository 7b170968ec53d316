/// Patience counter on validation accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    waited: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_epoch: 0,
            waited: 0,
        }
    }

    /// Records the accuracy of `epoch` (1-based). Only a strict increase
    /// counts as an improvement.
    pub fn observe(&mut self, epoch: usize, accuracy: f64) -> Verdict {
        let improved = self.best.is_none_or(|b| accuracy > b);
        if improved {
            self.best = Some(accuracy);
            self.best_epoch = epoch;
            self.waited = 0;
        } else {
            self.waited += 1;
        }
        Verdict {
            improved,
            stop: self.waited >= self.patience,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn waited(&self) -> usize {
        self.waited
    }
}
