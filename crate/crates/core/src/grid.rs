//! Uniform periodic grid and real-valued fields with spectral derivative operators.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{GkdvError, Result};

/// Uniform periodic grid on `[-L/2, L/2)` with a power-of-two number of points.
pub struct Grid {
    pub length: f64,
    pub n: usize,
    pub h: f64,
    x: Vec<f64>,
    /// Wavenumbers in FFT ordering, `k_j = 2 pi j / L` with negative half folded.
    k: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("length", &self.length)
            .field("n", &self.n)
            .finish()
    }
}

impl Grid {
    pub fn new(length: f64, n: usize) -> Result<Arc<Grid>> {
        if !(length > 0.0) || !n.is_power_of_two() || n < 8 {
            return Err(GkdvError::Config(format!(
                "grid requires L > 0 and power-of-two N >= 8, got L = {length}, N = {n}"
            )));
        }
        let h = length / n as f64;
        let x: Vec<f64> = (0..n).map(|i| -0.5 * length + i as f64 * h).collect();
        let k: Vec<f64> = (0..n)
            .map(|j| {
                let j = if j <= n / 2 { j as isize } else { j as isize - n as isize };
                2.0 * std::f64::consts::PI * j as f64 / length
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Arc::new(Grid { length, n, h, x, k, fwd, inv }))
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    pub fn inverse(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.inv.process(&mut spectrum);
        let scale = 1.0 / self.n as f64;
        spectrum.iter().map(|c| c.re * scale).collect()
    }
}

/// Real-valued function sampled on a [`Grid`].
#[derive(Clone, Debug)]
pub struct Field {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Field {
        Field { grid: grid.clone(), values: vec![0.0; grid.n] }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: grid.clone(), values: grid.x().iter().map(|&x| f(x)).collect() }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Field {
        assert_eq!(values.len(), grid.n);
        Field { grid: grid.clone(), values }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Spectral derivative of order `order` (1, 2 or 3).
    pub fn derivative(&self, order: u32) -> Field {
        let mut spec = self.grid.forward(&self.values);
        for (s, &k) in spec.iter_mut().zip(self.grid.wavenumbers()) {
            let ik = Complex64::new(0.0, k);
            *s *= ik.powu(order);
        }
        // the Nyquist mode of an odd-order derivative has no real representation
        if order % 2 == 1 {
            spec[self.grid.n / 2] = Complex64::new(0.0, 0.0);
        }
        Field { grid: self.grid.clone(), values: self.grid.inverse(spec) }
    }

    /// Exact periodic translation: returns `u(x + shift)`.
    pub fn translate(&self, shift: f64) -> Field {
        let mut spec = self.grid.forward(&self.values);
        for (s, &k) in spec.iter_mut().zip(self.grid.wavenumbers()) {
            *s *= Complex64::new(0.0, k * shift).exp();
        }
        Field { grid: self.grid.clone(), values: self.grid.inverse(spec) }
    }

    /// Zero all modes with |k| above two thirds of the Nyquist wavenumber.
    pub fn dealias(&self) -> Field {
        let n = self.grid.n;
        let cut = n / 3;
        let mut spec = self.grid.forward(&self.values);
        for (j, s) in spec.iter_mut().enumerate() {
            let jj = if j <= n / 2 { j } else { n - j };
            if jj > cut {
                *s = Complex64::new(0.0, 0.0);
            }
        }
        Field { grid: self.grid.clone(), values: self.grid.inverse(spec) }
    }

    /// Periodic trapezoid quadrature (exact for band-limited integrands).
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.h
    }

    pub fn inner(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.h
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn h1_norm(&self) -> f64 {
        let ux = self.derivative(1);
        (self.inner(self) + ux.inner(&ux)).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Field {
        self.zip(other, |a, b| a * b)
    }

    pub fn zip(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.grid.n, other.grid.n);
        Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn axpy(&mut self, a: f64, other: &Field) {
        for (v, &o) in self.values.iter_mut().zip(&other.values) {
            *v += a * o;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spectral_derivative_of_sine_is_exact() {
        let grid = Grid::new(2.0 * std::f64::consts::PI, 64).unwrap();
        let u = Field::from_fn(&grid, |x| (3.0 * x).sin());
        let ux = u.derivative(1);
        for (&x, &v) in grid.x().iter().zip(&ux.values) {
            assert_abs_diff_eq!(v, 3.0 * (3.0 * x).cos(), epsilon = 1e-10);
        }
        let uxxx = u.derivative(3);
        for (&x, &v) in grid.x().iter().zip(&uxxx.values) {
            assert_abs_diff_eq!(v, -27.0 * (3.0 * x).cos(), epsilon = 1e-9);
        }
    }

    #[test]
    fn translate_matches_analytic_shift() {
        let grid = Grid::new(40.0, 256).unwrap();
        let u = Field::from_fn(&grid, |x| (-x * x / 4.0).exp());
        let shifted = u.translate(1.5);
        for (&x, &v) in grid.x().iter().zip(&shifted.values) {
            let y = x + 1.5;
            if y.abs() < 15.0 {
                assert_abs_diff_eq!(v, (-y * y / 4.0).exp(), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn quadrature_of_gaussian() {
        let grid = Grid::new(80.0, 512).unwrap();
        let u = Field::from_fn(&grid, |x| (-x * x).exp());
        assert_abs_diff_eq!(u.integrate(), std::f64::consts::PI.sqrt(), epsilon = 1e-12);
    }
}
