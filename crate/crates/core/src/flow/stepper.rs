//! Dormand–Prince 5(4) embedded pair with a PI step-size controller.

use crate::error::{Error, Result};

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

/// Outcome of one attempted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub h: f64,
    pub accepted: bool,
    /// Weighted RMS error estimate; the step is accepted when ≤ 1.
    pub error: f64,
    /// Max-norm of the raw local error estimate.
    pub raw_error: f64,
    /// Suggested next step.
    pub h_next: f64,
}

/// Autonomous Dormand–Prince integrator over a flat state vector.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    y_new: Vec<f64>,
    fsal: bool,
    err_old: f64,
}

impl Dopri5 {
    pub fn new(len: usize, rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            k: std::array::from_fn(|_| vec![0.0; len]),
            stage: vec![0.0; len],
            y_new: vec![0.0; len],
            fsal: false,
            err_old: 1e-4,
        }
    }

    /// Forgets the cached derivative; call after modifying the state outside
    /// of [`Dopri5::attempt`].
    pub fn invalidate(&mut self) {
        self.fsal = false;
    }

    /// f(y) at the current state after an accepted step.
    pub fn derivative(&self) -> Option<&[f64]> {
        self.fsal.then_some(self.k[0].as_slice())
    }

    /// Seeds the cached derivative when f(y) is already known.
    pub fn set_derivative(&mut self, dy: &[f64]) {
        self.k[0].copy_from_slice(dy);
        self.fsal = true;
    }

    /// Attempts a step of size `h`, updating `y` in place on acceptance.
    ///
    /// Failures of `f` at trial stages count as rejections; a failure at the
    /// current state is returned.
    pub fn attempt<F>(&mut self, f: &mut F, y: &mut [f64], h: f64) -> Result<StepInfo>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let len = y.len();
        if !self.fsal {
            f(y, &mut self.k[0])?;
            self.fsal = true;
        }
        for s in 1..7 {
            for i in 0..len {
                let mut acc = 0.0;
                for (j, a) in A[s][..s].iter().enumerate() {
                    if *a != 0.0 {
                        acc += a * self.k[j][i];
                    }
                }
                self.stage[i] = y[i] + h * acc;
            }
            if f(&self.stage, &mut self.k[s]).is_err() {
                return Ok(self.reject(h, f64::INFINITY));
            }
        }
        // The seventh stage point is the fifth-order solution.
        self.y_new.copy_from_slice(&self.stage);

        let mut sum = 0.0;
        let mut raw: f64 = 0.0;
        for i in 0..len {
            let mut e = 0.0;
            for (j, w) in E.iter().enumerate() {
                if *w != 0.0 {
                    e += w * self.k[j][i];
                }
            }
            e *= h;
            raw = raw.max(e.abs());
            let sk = self.atol + self.rtol * y[i].abs().max(self.y_new[i].abs());
            sum += (e / sk) * (e / sk);
        }
        let err = (sum / len.max(1) as f64).sqrt();
        if !err.is_finite() {
            return Ok(self.reject(h, err));
        }

        let fac11 = err.powf(0.2 - BETA * 0.75);
        if err <= 1.0 {
            let fac = (fac11 / self.err_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            self.err_old = err.max(1e-4);
            y.copy_from_slice(&self.y_new);
            self.k.swap(0, 6);
            Ok(StepInfo {
                h,
                accepted: true,
                error: err,
                raw_error: raw,
                h_next: h / fac,
            })
        } else {
            let fac = (fac11 / SAFETY).min(1.0 / FAC_MIN);
            Ok(StepInfo {
                h,
                accepted: false,
                error: err,
                raw_error: raw,
                h_next: h / fac,
            })
        }
    }

    fn reject(&self, h: f64, err: f64) -> StepInfo {
        StepInfo {
            h,
            accepted: false,
            error: err,
            raw_error: f64::INFINITY,
            h_next: 0.25 * h,
        }
    }
}

/// Errors for a step size that has collapsed.
pub(crate) fn check_underflow(s: f64, h: f64) -> Result<()> {
    if h < 1e-14 {
        Err(Error::StiffnessFailure { s, h })
    } else {
        Ok(())
    }
}
