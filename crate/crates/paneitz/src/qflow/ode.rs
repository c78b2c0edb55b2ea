//! Dormand-Prince 5(4) with embedded error control and continuous output.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 7] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
    ],
    &[
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
    &[
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights minus the embedded fourth-order ones.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
/// Continuous extension weights.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

pub const MIN_STEP: f64 = 1e-12;

/// Fourth-order interpolant over one accepted step.
#[derive(Clone, Debug)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    r: [Vec<f64>; 5],
}

impl DenseSegment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let th = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.r;
        (0..r1.len())
            .map(|i| r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i]))))
            .collect()
    }

    /// Single component, cheaper than a full evaluation.
    pub fn eval_component(&self, t: f64, i: usize) -> f64 {
        let th = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.r;
        r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])))
    }
}

pub struct Dopri5<F> {
    rhs: F,
    pub t: f64,
    pub y: Vec<f64>,
    pub h: f64,
    k1: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
}

impl<F> Dopri5<F>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    pub fn new(mut rhs: F, t: f64, y: Vec<f64>, h: f64) -> Result<Self> {
        let k1 = rhs(t, &y)?;
        Ok(Self {
            rhs,
            t,
            y,
            h,
            k1,
            accepted: 0,
            rejected: 0,
        })
    }

    pub fn derivative(&self) -> &[f64] {
        &self.k1
    }

    /// Take one accepted step no longer than `t_max - t`. `err_norm(y, err)`
    /// returns the error in units of the tolerance (accept when ≤ 1).
    pub fn step(
        &mut self,
        t_max: f64,
        err_norm: impl Fn(&[f64], &[f64]) -> f64,
    ) -> Result<DenseSegment> {
        let n = self.y.len();
        loop {
            let mut h = self.h.min(t_max - self.t);
            let last = h >= t_max - self.t;
            if h < MIN_STEP {
                if t_max - self.t < MIN_STEP && t_max > self.t {
                    h = t_max - self.t;
                } else {
                    return Err(Error::StepUnderflow { t: self.t, dt: h });
                }
            }
            let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
            k.push(self.k1.clone());
            let mut ytmp = vec![0.0; n];
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, a) in A[s].iter().enumerate() {
                        acc += a * k[j][i];
                    }
                    ytmp[i] = self.y[i] + h * acc;
                }
                let ks = (self.rhs)(self.t + C[s] * h, &ytmp)?;
                k.push(ks);
            }
            // ytmp now holds the fifth-order solution (row 7 equals the weights)
            let err: Vec<f64> = (0..n)
                .map(|i| h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>())
                .collect();
            let e = err_norm(&ytmp, &err);
            if e.is_finite() && e <= 1.0 {
                let y0 = std::mem::replace(&mut self.y, ytmp);
                let r2: Vec<f64> = (0..n).map(|i| self.y[i] - y0[i]).collect();
                let r3: Vec<f64> = (0..n).map(|i| h * k[0][i] - r2[i]).collect();
                let r4: Vec<f64> = (0..n).map(|i| r2[i] - h * k[6][i] - r3[i]).collect();
                let r5: Vec<f64> = (0..n)
                    .map(|i| h * (0..7).map(|j| D[j] * k[j][i]).sum::<f64>())
                    .collect();
                let seg = DenseSegment {
                    t0: self.t,
                    h,
                    r: [y0, r2, r3, r4, r5],
                };
                self.t = if last { t_max } else { self.t + h };
                self.k1 = k.swap_remove(6);
                self.accepted += 1;
                let fac = if e == 0.0 {
                    5.0
                } else {
                    (0.9 * e.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !last || fac < 1.0 {
                    self.h = h * fac;
                }
                return Ok(seg);
            }
            self.rejected += 1;
            let fac = if e.is_finite() {
                (0.9 * e.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            self.h = h * fac;
            if self.h < MIN_STEP {
                return Err(Error::StepUnderflow {
                    t: self.t,
                    dt: self.h,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_with_dense_output() {
        let mut ode = Dopri5::new(
            |_t, y: &[f64]| Ok(vec![y[1], -y[0]]),
            0.0,
            vec![1.0, 0.0],
            0.1,
        )
        .unwrap();
        let mut segs = Vec::new();
        while ode.t < 10.0 {
            segs.push(ode.step(10.0, |_, e| (e[0].hypot(e[1])) / 1e-10).unwrap());
        }
        assert!((ode.y[0] - 10f64.cos()).abs() < 1e-8);
        for s in &segs {
            let tm = s.t0 + 0.37 * s.h;
            let v = s.eval(tm);
            assert!((v[0] - tm.cos()).abs() < 1e-8, "dense output at {tm}");
        }
    }
}
