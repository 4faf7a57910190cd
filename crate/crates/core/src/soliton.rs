//! Solitary wave profiles Q_c: construction by quadrature of the first
//! integral, evaluation with an exponential tail continuation, the
//! speed-derivative S_c, and decay certification.

use std::io::Write;
use std::sync::Arc;

use crate::error::{GkdvError, Result};
use crate::grid::{Field, Grid};
use crate::interp::QuinticHermite;
use crate::nonlinearity::Nonlinearity;

/// Fraction of the peak below which the profile switches to the tail formula.
const TAIL_THRESHOLD: f64 = 1e-9;
/// Table sizes: uniform-in-tau nodes near the peak, log-in-Q nodes below.
const PEAK_NODES: usize = 2048;
const TAIL_NODES: usize = 8192;

/// One solitary wave: even, positive, decreasing on x > 0, solving
/// Q'' + f(Q) = c Q with (Q')^2 = c Q^2 - 2 F(Q).
#[derive(Clone, Debug)]
pub struct SolitonProfile {
    c: f64,
    s0: f64,
    nl: Nonlinearity,
    /// Q as a function of x on [0, match_point].
    q_of_x: QuinticHermite,
    /// Coefficient of the e^{-sqrt(c) x} asymptote.
    tail_amplitude: f64,
    /// x beyond which the tail formula is used.
    match_point: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileOrder {
    Q,
    Qx,
}

impl SolitonProfile {
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn nl(&self) -> &Nonlinearity {
        &self.nl
    }

    pub fn tail_amplitude(&self) -> f64 {
        self.tail_amplitude
    }

    pub fn match_point(&self) -> f64 {
        self.match_point
    }

    pub fn eval(&self, x: f64, order: ProfileOrder) -> f64 {
        match order {
            ProfileOrder::Q => self.q(x),
            ProfileOrder::Qx => self.qx(x),
        }
    }

    pub fn q(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax <= self.match_point {
            self.q_of_x.eval(ax)
        } else {
            self.tail_amplitude * (-self.c.sqrt() * ax).exp()
        }
    }

    /// Q'(x) from the first integral with the parity sign.
    pub fn qx(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let ax = x.abs();
        let slope = if ax <= self.match_point {
            let q = self.q_of_x.eval(ax);
            -first_integral_rhs(&self.nl, self.c, q).max(0.0).sqrt()
        } else {
            -self.c.sqrt() * self.tail_amplitude * (-self.c.sqrt() * ax).exp()
        };
        if x > 0.0 {
            slope
        } else {
            -slope
        }
    }

    /// Sample Q(x) on a grid.
    pub fn sample(&self, grid: &Arc<Grid>) -> Field {
        Field::from_fn(grid, |x| self.q(x))
    }

    /// Sample Q'(x) on a grid.
    pub fn sample_qx(&self, grid: &Arc<Grid>) -> Field {
        Field::from_fn(grid, |x| self.qx(x))
    }

    /// Min and max of Q(x) e^{sqrt(c) x} over [0, x_max]: the two-sided decay
    /// constants. Both are finite and positive for a genuine profile.
    pub fn verify_decay(&self, x_max: f64) -> (f64, f64) {
        let n = 4096;
        let sqrt_c = self.c.sqrt();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..=n {
            let x = x_max * i as f64 / n as f64;
            let ratio = self.q(x) * (sqrt_c * x).exp();
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        (lo, hi)
    }

    /// Two-column CSV (x, Q) on [-x_max, x_max] with n samples.
    pub fn write_csv<W: Write>(&self, mut out: W, x_max: f64, n: usize) -> std::io::Result<()> {
        writeln!(out, "x,Q")?;
        for i in 0..n {
            let x = -x_max + 2.0 * x_max * i as f64 / (n - 1) as f64;
            writeln!(out, "{},{}", x, self.q(x))?;
        }
        Ok(())
    }
}

/// c Q^2 - 2 F(Q), the square of Q'.
fn first_integral_rhs(nl: &Nonlinearity, c: f64, q: f64) -> f64 {
    c * q * q - 2.0 * nl.antiderivative(q)
}

/// Construct Q_c by quadrature of x(Q) = int_Q^{s0} ds / sqrt(c s^2 - 2F(s)).
///
/// The substitution s = s0 - tau^2 removes the inverse-square-root endpoint
/// singularity (the radicand vanishes linearly at s0 because c s0 - f(s0) < 0),
/// leaving a smooth integrand 2 tau / sqrt(g(s0 - tau^2)).
pub fn build_profile(nl: &Nonlinearity, c: f64) -> Result<SolitonProfile> {
    if !nl.soliton_exists(c)? {
        return Err(GkdvError::NoSoliton { c });
    }
    let s0 = nl
        .first_positive_zero(c)?
        .expect("existence check guarantees a zero");
    let q_min = TAIL_THRESHOLD * s0;

    // node set in tau = sqrt(s0 - Q): uniform near the peak (resolves x
    // uniformly there), log-spaced in Q below s0/2 (resolves the tail, where
    // log Q is essentially linear in x)
    let tau_cross = (0.5 * s0).sqrt();
    let mut taus: Vec<f64> = (0..PEAK_NODES)
        .map(|i| tau_cross * i as f64 / PEAK_NODES as f64)
        .collect();
    let log_ratio = (0.5 * s0 / q_min).ln();
    for i in 0..=TAIL_NODES {
        let q = 0.5 * s0 * (-log_ratio * i as f64 / TAIL_NODES as f64).exp();
        taus.push((s0 - q).sqrt());
    }

    // g(q) = c q^2 - 2F(q) is a polynomial with a double root at 0 and a
    // simple root at s0.  Evaluating it as written loses ~10 digits near the
    // peak (two O(c s0^2) terms cancel down to O(tau^2)), which leaves a tiny
    // corner in the profile at x = 0.  Factor both roots out exactly instead:
    // g(q)/q^2 = c - 2F(q)/q^2 is a polynomial (f has no constant or linear
    // term), and Horner deflation at s0 writes it as (s0 - q) R(q).  With
    // q = s0 - tau^2 every vanishing factor of g = q^2 (s0 - q) R(q) is then
    // computed without cancellation.
    let r_coeffs = {
        let fc = nl.monomial_coefficients();
        let mut p = vec![0.0; fc.len() - 1];
        p[0] = c;
        for (k, &a) in fc.iter().enumerate().skip(2) {
            p[k - 1] -= 2.0 * a / (k as f64 + 1.0);
        }
        // deflate at s0; the remainder p(s0) is roundoff-level and dropped
        let n = p.len();
        let mut b = vec![0.0; n - 1];
        b[n - 2] = -p[n - 1];
        for k in (1..n - 1).rev() {
            b[k - 1] = -p[k] + s0 * b[k];
        }
        b
    };
    let r_poly = |q: f64| -> f64 {
        let mut acc = 0.0;
        for &bk in r_coeffs.iter().rev() {
            acc = acc * q + bk;
        }
        acc
    };

    // integrand of x(tau) after the substitution: 2 / sqrt(g / (s0 - q))
    let integrand = |tau: f64| -> Result<f64> {
        let q = s0 - tau * tau;
        let rq = r_poly(q);
        if !(rq > 0.0) || !(q > 0.0) {
            return Err(GkdvError::QuadratureFailure {
                location: q,
                error: rq,
            });
        }
        Ok(2.0 / (q * rq.sqrt()))
    };

    let mut xs = Vec::with_capacity(taus.len());
    let mut qs = Vec::with_capacity(taus.len());
    let mut ds = Vec::with_capacity(taus.len());
    let mut ss = Vec::with_capacity(taus.len());
    xs.push(0.0);
    qs.push(s0);
    ds.push(0.0);
    ss.push(c * s0 - nl.f(s0));
    let mut x = 0.0;
    for w in taus.windows(2) {
        x += gauss8(w[0], w[1], &integrand)?;
        let tau = w[1];
        let q = s0 - tau * tau;
        xs.push(x);
        qs.push(q);
        // Q' = -sqrt(g) = -tau q sqrt(R), again free of peak cancellation
        ds.push(-tau * q * r_poly(q).max(0.0).sqrt());
        // the equation supplies the exact curvature at every node
        ss.push(c * q - nl.f(q));
    }
    let match_point = x;

    // tail amplitude from value and slope at the match point (they agree to
    // O(q_min^{p-1}); average splits the residual)
    let exp_factor = (c.sqrt() * match_point).exp();
    let a_value = q_min * exp_factor;
    let a_slope =
        (q_min * ((s0 - q_min) * r_poly(q_min)).max(0.0).sqrt() / c.sqrt()) * exp_factor;
    let tail_amplitude = 0.5 * (a_value + a_slope);

    Ok(SolitonProfile {
        c,
        s0,
        nl: nl.clone(),
        q_of_x: QuinticHermite::new(xs, qs, ds, ss),
        tail_amplitude,
        match_point,
    })
}

/// S_c = dQ_c/dc as the solution of L_c S = -Q_c orthogonal to Q'_c.
///
/// The kernel direction is deflated by a rank-one shift before the dense
/// solve, then projected out of the result.
pub fn dqdc(prof: &SolitonProfile, grid: &Arc<Grid>) -> Result<Field> {
    use nalgebra::DVector;

    let op = crate::spectral::assemble_l(prof, grid)?;
    let n = grid.n;
    let q = prof.sample(grid);
    let qx = prof.sample_qx(grid);
    let qx_norm = qx.l2_norm();
    if qx_norm == 0.0 {
        return Err(GkdvError::SingularSystem { pivot: 0.0 });
    }
    let kernel: Vec<f64> = qx.values.iter().map(|v| v / qx_norm * grid.h.sqrt()).collect();

    let mut a = op.dense();
    // rank-one shift along the kernel; magnitude comparable to c keeps the
    // system well-conditioned
    let shift = prof.c().max(1.0);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] += shift * kernel[i] * kernel[j];
        }
    }
    let rhs = DVector::from_iterator(n, q.values.iter().map(|&v| -v));
    let lu = a.lu();
    let mut s = lu
        .solve(&rhs)
        .ok_or(GkdvError::SingularSystem { pivot: 0.0 })?;
    let overlap: f64 = s.iter().zip(&kernel).map(|(a, b)| a * b).sum();
    for (si, ki) in s.iter_mut().zip(&kernel) {
        *si -= overlap * ki;
    }
    Ok(Field::from_values(grid, s.iter().copied().collect()))
}

/// Closed-form pure-power profile, the main test oracle:
/// Q_c(x) = [ c (p+1)/2 sech^2((p-1) sqrt(c) x / 2) ]^{1/(p-1)}.
pub fn pure_power_profile(p: u32, c: f64, x: f64) -> f64 {
    let pf = p as f64;
    let sech = 1.0 / ((pf - 1.0) * c.sqrt() * x / 2.0).cosh();
    (c * (pf + 1.0) / 2.0 * sech * sech).powf(1.0 / (pf - 1.0))
}

/// 8-point Gauss-Legendre on [a, b].
fn gauss8(a: f64, b: f64, f: &impl Fn(f64) -> Result<f64>) -> Result<f64> {
    const NODES: [f64; 4] = [
        0.1834346424956498,
        0.5255324099163290,
        0.7966664774136267,
        0.9602898564975363,
    ];
    const WEIGHTS: [f64; 4] = [
        0.3626837833783620,
        0.3137066458778873,
        0.2223810344533745,
        0.1012285362903763,
    ];
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (t, w) in NODES.iter().zip(&WEIGHTS) {
        acc += w * (f(mid - half * t)? + f(mid + half * t)?);
    }
    Ok(acc * half)
}
