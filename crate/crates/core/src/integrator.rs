//! Fixed-step classic Runge–Kutta used by both propagators.

use std::ops::{Add, Mul};

/// Scratch buffers so a long propagation allocates once.
pub struct Rk4<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
}

impl<T> Rk4<T>
where
    T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
{
    pub fn new(n: usize) -> Self {
        Self {
            k1: vec![T::default(); n],
            k2: vec![T::default(); n],
            k3: vec![T::default(); n],
            k4: vec![T::default(); n],
            tmp: vec![T::default(); n],
        }
    }

    /// Advance `y` from `t` to `t + dt`; `f(t, y, dy)` writes the derivative.
    pub fn step<F>(&mut self, f: &mut F, t: f64, dt: f64, y: &mut [T])
    where
        F: FnMut(f64, &[T], &mut [T]),
    {
        let h2 = 0.5 * dt;
        f(t, y, &mut self.k1);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + self.k1[i] * h2;
        }
        f(t + h2, &self.tmp, &mut self.k2);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + self.k2[i] * h2;
        }
        f(t + h2, &self.tmp, &mut self.k3);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + self.k3[i] * dt;
        }
        f(t + dt, &self.tmp, &mut self.k4);
        let w = dt / 6.0;
        for i in 0..y.len() {
            y[i] = y[i] + (self.k1[i] + self.k2[i] * 2.0 + self.k3[i] * 2.0 + self.k4[i]) * w;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn harmonic_oscillator_fourth_order() {
        // error ratio for dt vs dt/2 should approach 2^4
        let run = |dt: f64| {
            let mut y = [1.0f64, 0.0];
            let mut rk = Rk4::new(2);
            let mut f = |_t: f64, y: &[f64], d: &mut [f64]| {
                d[0] = y[1];
                d[1] = -y[0];
            };
            let n = (10.0 / dt).round() as usize;
            for i in 0..n {
                rk.step(&mut f, i as f64 * dt, dt, &mut y);
            }
            (y[0] - 10.0f64.cos()).abs()
        };
        let ratio = run(0.1) / run(0.05);
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn complex_phase_rotation() {
        let mut y = [Complex64::new(1.0, 0.0)];
        let mut rk = Rk4::new(1);
        let mut f = |_t: f64, y: &[Complex64], d: &mut [Complex64]| d[0] = -Complex64::i() * y[0] * 2.0;
        for i in 0..1000 {
            rk.step(&mut f, i as f64 * 1e-3, 1e-3, &mut y);
        }
        let exact = Complex64::from_polar(1.0, -2.0);
        assert!((y[0] - exact).norm() < 1e-12);
    }

    #[test]
    fn time_dependent_rhs() {
        // y' = t → y = t²/2, integrated exactly by RK4
        let mut y = [0.0f64];
        let mut rk = Rk4::new(1);
        let mut f = |t: f64, _y: &[f64], d: &mut [f64]| d[0] = t;
        for i in 0..10 {
            rk.step(&mut f, i as f64 * 0.3, 0.3, &mut y);
        }
        assert!((y[0] - 4.5).abs() < 1e-13);
    }
}
