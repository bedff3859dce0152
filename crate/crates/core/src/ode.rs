//! Dormand–Prince 5(4) integrator with Hairer's continuous extension.
//!
//! Works on fixed-size `nalgebra` vectors and integrates in either time
//! direction. Local error per step is held below the mixed tolerance
//! `atol + rtol * |y|` in the RMS norm.

use nalgebra::SVector;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Step-size controller settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_max: f64,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self::with_tol(1e-12)
    }
}

/// One accepted step with its interpolation coefficients.
#[derive(Debug, Clone)]
pub struct DenseStep<const N: usize> {
    pub t: f64,
    pub h: f64,
    rcont: [SVector<f64, N>; 5],
}

impl<const N: usize> DenseStep<N> {
    /// Interpolated state at `t` (must lie within the step).
    pub fn eval(&self, t: f64) -> SVector<f64, N> {
        let theta = (t - self.t) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        r1 + (r2 + (r3 + (r4 + r5 * theta1) * theta) * theta1) * theta
    }

    pub fn end(&self) -> f64 {
        self.t + self.h
    }
}

/// Continuous solution over the integration interval.
#[derive(Debug, Clone)]
pub struct DenseSolution<const N: usize> {
    steps: Vec<DenseStep<N>>,
    t0: f64,
    t1: f64,
    y1: SVector<f64, N>,
}

impl<const N: usize> DenseSolution<N> {
    pub fn t_start(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t1
    }

    pub fn final_state(&self) -> SVector<f64, N> {
        self.y1
    }

    pub fn steps(&self) -> &[DenseStep<N>] {
        &self.steps
    }

    /// Evaluates the solution at `t`, clamped to the integrated interval.
    pub fn eval(&self, t: f64) -> SVector<f64, N> {
        if self.steps.is_empty() {
            return self.y1;
        }
        if t == self.t1 {
            return self.y1;
        }
        let forward = self.t1 >= self.t0;
        // steps are ordered along the integration direction
        let idx = self.steps.partition_point(|s| {
            if forward {
                s.end() < t
            } else {
                s.end() > t
            }
        });
        let idx = idx.min(self.steps.len() - 1);
        self.steps[idx].eval(t)
    }
}

impl Dopri5 {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            max_steps: 2_000_000,
            h_max: f64::INFINITY,
        }
    }

    /// Integrates `y' = f(t, y)` from `(t0, y0)` to `t1`.
    pub fn integrate<const N: usize, F>(
        &self,
        f: F,
        t0: f64,
        y0: SVector<f64, N>,
        t1: f64,
    ) -> Result<SVector<f64, N>>
    where
        F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
    {
        self.run(f, t0, y0, t1, |_| {})
    }

    /// Integrates and keeps every step for dense evaluation.
    pub fn integrate_dense<const N: usize, F>(
        &self,
        f: F,
        t0: f64,
        y0: SVector<f64, N>,
        t1: f64,
    ) -> Result<DenseSolution<N>>
    where
        F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
    {
        let mut steps = Vec::new();
        let y1 = self.run(f, t0, y0, t1, |s| steps.push(s))?;
        Ok(DenseSolution { steps, t0, t1, y1 })
    }

    fn err_norm<const N: usize>(
        &self,
        err: &SVector<f64, N>,
        y: &SVector<f64, N>,
        ynew: &SVector<f64, N>,
    ) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let sk = self.atol + self.rtol * y[i].abs().max(ynew[i].abs());
            acc += (err[i] / sk).powi(2);
        }
        (acc / N as f64).sqrt()
    }

    fn initial_step<const N: usize, F>(
        &self,
        f: &mut F,
        t0: f64,
        y0: &SVector<f64, N>,
        f0: &SVector<f64, N>,
        dir: f64,
        span: f64,
    ) -> f64
    where
        F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
    {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sk = self.atol + self.rtol * y0[i].abs();
            d0 += (y0[i] / sk).powi(2);
            d1 += (f0[i] / sk).powi(2);
        }
        d0 = (d0 / N as f64).sqrt();
        d1 = (d1 / N as f64).sqrt();
        let mut h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.h_max).min(span);
        let y1 = y0 + f0 * (dir * h0);
        let f1 = f(t0 + dir * h0, &y1);
        let mut d2 = 0.0;
        for i in 0..N {
            let sk = self.atol + self.rtol * y0[i].abs();
            d2 += ((f1[i] - f0[i]) / sk).powi(2);
        }
        d2 = (d2 / N as f64).sqrt() / h0;
        let dm = d1.max(d2);
        let h1 = if dm <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / dm).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.h_max).min(span)
    }

    fn run<const N: usize, F, S>(
        &self,
        mut f: F,
        t0: f64,
        y0: SVector<f64, N>,
        t1: f64,
        mut on_step: S,
    ) -> Result<SVector<f64, N>>
    where
        F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
        S: FnMut(DenseStep<N>),
    {
        if t1 == t0 {
            return Ok(y0);
        }
        let dir = if t1 > t0 { 1.0 } else { -1.0 };
        let span = (t1 - t0).abs();
        let mut t = t0;
        let mut y = y0;
        let mut k1 = f(t, &y);
        let mut h = dir * self.initial_step(&mut f, t0, &y0, &k1, dir, span);
        let mut last_rejected = false;
        let mut n_steps = 0usize;

        loop {
            n_steps += 1;
            if n_steps > self.max_steps {
                return Err(Error::TooManySteps(self.max_steps));
            }
            let mut last = false;
            if (t + h - t1) * dir >= 0.0 {
                h = t1 - t;
                last = true;
            }
            let k2 = f(t + C2 * h, &(y + k1 * (h * A21)));
            let k3 = f(t + C3 * h, &(y + (k1 * A31 + k2 * A32) * h));
            let k4 = f(t + C4 * h, &(y + (k1 * A41 + k2 * A42 + k3 * A43) * h));
            let k5 = f(
                t + C5 * h,
                &(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h),
            );
            let k6 = f(
                t + h,
                &(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h),
            );
            let ynew = y + (k1 * A71 + k3 * A73 + k4 * A74 + k5 * A75 + k6 * A76) * h;
            let k7 = f(t + h, &ynew);
            let err_vec = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h;
            let err = self.err_norm(&err_vec, &y, &ynew);

            if err.is_finite() && err <= 1.0 {
                let r2 = ynew - y;
                let r3 = k1 * h - r2;
                let r4 = r2 - k7 * h - r3;
                let r5 = (k1 * D1 + k3 * D3 + k4 * D4 + k5 * D5 + k6 * D6 + k7 * D7) * h;
                on_step(DenseStep {
                    t,
                    h,
                    rcont: [y, r2, r3, r4, r5],
                });
                y = ynew;
                k1 = k7;
                if last {
                    return Ok(y);
                }
                t += h;
                let mut fac = if err == 0.0 { 10.0 } else { 0.9 * err.powf(-0.2) };
                fac = fac.clamp(0.2, 10.0);
                if last_rejected {
                    fac = fac.min(1.0);
                }
                last_rejected = false;
                h = (h * fac).clamp(-self.h_max, self.h_max);
            } else {
                let fac = if err.is_finite() {
                    (0.9 * err.powf(-0.2)).clamp(0.1, 1.0)
                } else {
                    0.1
                };
                h *= fac;
                last_rejected = true;
            }
            if h.abs() <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { t, h });
            }
        }
    }
}
