//! Checkpoint schedule whose steps-per-checkpoint grows linearly with the
//! current step.
//!
//! With `s(t) = s0 + (s1 - s0) t / t1` steps per checkpoint, the number of
//! checkpoints reached by step `t` (not counting the one at step 0) is
//!
//! ```text
//! count(t) = t1 / (s1 - s0) * ln(1 + (s1 - s0) t / (s0 t1))
//! ```
//!
//! and inverting gives the step of checkpoint `n`:
//!
//! ```text
//! step(n) = s0 t1 / (s1 - s0) * (exp(n (s1 - s0) / t1) - 1)
//! ```
//!
//! `ln_1p`/`exp_m1` keep both forms accurate when `s1` is close to `s0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    /// Steps per checkpoint at step 0.
    pub s0: f64,
    /// Steps per checkpoint at the final step.
    pub s1: f64,
    /// Final pre-training step.
    pub t1: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub index: u64,
    pub step: u64,
}

impl ScheduleParams {
    pub fn new(s0: f64, s1: f64, t1: u64) -> Result<Self> {
        let p = Self { s0, s1, t1 };
        p.validate()?;
        Ok(p)
    }

    /// 100 steps per checkpoint growing to 25K at step 1M.
    pub fn reference() -> Self {
        Self {
            s0: 100.0,
            s1: 25_000.0,
            t1: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t1 == 0 {
            return Err(Error::Param("t1 must be positive".into()));
        }
        if !(self.s0.is_finite() && self.s1.is_finite()) || self.s0 <= 0.0 || self.s1 <= self.s0 {
            return Err(Error::Param(format!(
                "schedule requires s1 > s0 > 0 (got s0={}, s1={})",
                self.s0, self.s1
            )));
        }
        Ok(())
    }

    fn slope(&self) -> f64 {
        (self.s1 - self.s0) / self.t1 as f64
    }

    fn check_range(&self, t: f64) -> Result<()> {
        if !(0.0..=self.t1 as f64).contains(&t) {
            return Err(Error::StepOutOfRange { step: t, t1: self.t1 });
        }
        Ok(())
    }
}

pub fn steps_per_checkpoint(params: &ScheduleParams, t: f64) -> Result<f64> {
    params.check_range(t)?;
    Ok(params.s0 + params.slope() * t)
}

/// Continuous checkpoint count at step `t`, excluding the step-0 checkpoint.
pub fn checkpoint_count(params: &ScheduleParams, t: f64) -> Result<f64> {
    params.check_range(t)?;
    let t1 = params.t1 as f64;
    let ds = params.s1 - params.s0;
    Ok(t1 / ds * (ds / (params.s0 * t1) * t).ln_1p())
}

/// Unrounded step of checkpoint `n`.
pub fn continuous_step(params: &ScheduleParams, n: u64) -> f64 {
    let t1 = params.t1 as f64;
    let ds = params.s1 - params.s0;
    params.s0 * t1 / ds * (n as f64 * ds / t1).exp_m1()
}

/// Step of checkpoint `n`, rounded half away from zero. Fails with
/// [`Error::EndOfSchedule`] once the rounded step passes `t1`.
pub fn step_of_checkpoint(params: &ScheduleParams, n: u64) -> Result<u64> {
    params.validate()?;
    if n == 0 {
        return Ok(0);
    }
    let raw = continuous_step(params, n);
    let limit = params.t1 as f64;
    if !raw.is_finite() || raw.round() > limit {
        return Err(Error::EndOfSchedule {
            index: n,
            step: if raw.is_finite() { raw.round() as u64 } else { u64::MAX },
            t1: params.t1,
        });
    }
    // f64::round rounds half away from zero.
    Ok(raw.round() as u64)
}

/// Full schedule including the step-0 checkpoint. Steps that collide after
/// rounding keep the lowest checkpoint index.
pub fn generate_schedule(params: &ScheduleParams) -> Result<Vec<Checkpoint>> {
    params.validate()?;
    let mut out = vec![Checkpoint { index: 0, step: 0 }];
    let mut n = 1;
    loop {
        match step_of_checkpoint(params, n) {
            Ok(step) => {
                if step > out.last().map_or(0, |c| c.step) {
                    out.push(Checkpoint { index: n, step });
                }
            }
            Err(Error::EndOfSchedule { .. }) => break,
            Err(e) => return Err(e),
        }
        n += 1;
    }
    if out.len() < 2 {
        return Err(Error::EmptySchedule);
    }
    Ok(out)
}

pub fn schedule_steps(params: &ScheduleParams) -> Result<Vec<u64>> {
    Ok(generate_schedule(params)?.into_iter().map(|c| c.step).collect())
}
