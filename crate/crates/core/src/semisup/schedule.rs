use serde::{Deserialize, Serialize};

use super::{Result, SemisupError};

/// `exp(-5 (1 - min(epoch / end, 1))^2)`; 1 when `end` is zero.
pub fn rampup(epoch: f64, end_epoch: f64) -> f64 {
    if end_epoch <= 0.0 {
        return 1.0;
    }
    let x = (epoch / end_epoch).clamp(0.0, 1.0);
    (-5.0 * (1.0 - x).powi(2)).exp()
}

/// Learning rate ramped up to `peak`, then stepped down twice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak: f64,
    pub ramp_end: f64,
    pub first_decay: (f64, f64),
    pub second_decay: (f64, f64),
}

impl LrSchedule {
    /// Ramp to 1e-3 by epoch 50, 2e-4 from epoch 100, 4e-5 from epoch 150,
    /// with milestones scaled by `epochs / 200`.
    pub fn scaled(epochs: usize) -> Self {
        let s = epochs as f64 / 200.0;
        Self { peak: 1e-3, ramp_end: 50.0 * s, first_decay: (100.0 * s, 2e-4), second_decay: (150.0 * s, 4e-5) }
    }

    pub fn at(&self, epoch: f64) -> f64 {
        if epoch >= self.second_decay.0 {
            self.second_decay.1
        } else if epoch >= self.first_decay.0 {
            self.first_decay.1
        } else {
            self.peak * rampup(epoch, self.ramp_end)
        }
    }
}

/// `teacher <- alpha * teacher + (1 - alpha) * student`.
pub fn ema_update(teacher: &mut [f64], student: &[f64], alpha: f64) -> Result<()> {
    if teacher.len() != student.len() {
        return Err(SemisupError::Shape { what: "teacher parameters", expected: student.len(), got: teacher.len() });
    }
    for (t, s) in teacher.iter_mut().zip(student) {
        *t = alpha * *t + (1.0 - alpha) * s;
    }
    Ok(())
}
