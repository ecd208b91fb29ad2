//! Adaptive Bogacki–Shampine 3(2) stepper for scalar ODEs.

use crate::error::Result;

/// Absolute and relative tolerance plus step bounds.
#[derive(Clone, Copy, Debug)]
pub struct StepControl {
    pub tol: f64,
    pub h_max: f64,
    pub h_min: f64,
}

impl StepControl {
    pub fn new(tol: f64, h_max: f64) -> Self {
        StepControl {
            tol,
            h_max,
            h_min: 1e-15,
        }
    }
}

/// One embedded step; returns the third-order solution and the error estimate.
fn bs23<F>(f: &mut F, t: f64, y: f64, k1: f64, h: f64) -> Result<(f64, f64, f64)>
where
    F: FnMut(f64, f64) -> Result<f64>,
{
    let k2 = f(t + 0.5 * h, y + 0.5 * h * k1)?;
    let k3 = f(t + 0.75 * h, y + 0.75 * h * k2)?;
    let y3 = y + h * (2.0 * k1 + 3.0 * k2 + 4.0 * k3) / 9.0;
    let k4 = f(t + h, y3)?;
    let y2 = y + h * (7.0 * k1 / 24.0 + k2 / 4.0 + k3 / 3.0 + k4 / 8.0);
    Ok((y3, (y3 - y2).abs(), k4))
}

/// Stateful integrator that advances by one accepted step at a time.
pub struct Stepper {
    pub t: f64,
    pub y: f64,
    h: f64,
    k1: Option<f64>,
    ctrl: StepControl,
}

impl Stepper {
    pub fn new(t0: f64, y0: f64, ctrl: StepControl) -> Self {
        Stepper {
            t: t0,
            y: y0,
            h: (ctrl.h_max).min(1e-3).max(ctrl.h_min),
            k1: None,
            ctrl,
        }
    }

    /// Takes one accepted step, never past `t_stop` and never longer than
    /// `h_cap`. Returns the step size used.
    pub fn step<F>(&mut self, f: &mut F, t_stop: f64, h_cap: f64) -> Result<f64>
    where
        F: FnMut(f64, f64) -> Result<f64>,
    {
        let k1 = match self.k1 {
            Some(k) => k,
            None => f(self.t, self.y)?,
        };
        loop {
            let h = self
                .h
                .min(self.ctrl.h_max)
                .min(h_cap)
                .min(t_stop - self.t)
                .max(self.ctrl.h_min.min(t_stop - self.t));
            let (y_new, err, k4) = bs23(f, self.t, self.y, k1, h)?;
            let scale = self.ctrl.tol * (1.0 + self.y.abs().max(y_new.abs()));
            let ratio = err / scale;
            if ratio <= 1.0 || h <= self.ctrl.h_min {
                self.t = if t_stop - self.t - h <= 1e-15 * t_stop.abs().max(1.0) {
                    t_stop
                } else {
                    self.t + h
                };
                self.y = y_new;
                self.k1 = Some(k4);
                let grow = if ratio == 0.0 {
                    5.0
                } else {
                    (0.9 * ratio.powf(-1.0 / 3.0)).clamp(0.2, 5.0)
                };
                self.h = (h * grow).max(self.ctrl.h_min);
                return Ok(h);
            }
            self.h = (h * (0.9 * ratio.powf(-1.0 / 3.0)).clamp(0.1, 0.9)).max(self.ctrl.h_min);
        }
    }

    /// Forgets the cached slope, needed after the state is changed externally.
    pub fn reset(&mut self, t: f64, y: f64) {
        self.t = t;
        self.y = y;
        self.k1 = None;
    }
}
