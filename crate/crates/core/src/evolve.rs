//! Time integration of u_t + (u_xx + f(u))_x = 0 and its linearization around
//! a soliton, plus conserved quantities, localized weights, the I/J
//! functionals and monotonicity audits.

use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{GkdvError, Result};
use crate::grid::{Field, Grid};
use crate::nonlinearity::Nonlinearity;
use crate::soliton::SolitonProfile;

/// Integrating-factor RK4 stepper: the stiff linear part (third derivative,
/// plus the transport term for the linearized flow) is advanced exactly by a
/// phase factor in transform space, the remaining flux by classical RK4
/// stages. Nonlinear products are dealiased with the 2/3 rule.
pub struct Stepper {
    grid: Arc<Grid>,
    dt: f64,
    /// exp(symbol * dt/2) and exp(symbol * dt) per mode.
    e_half: Vec<Complex64>,
    e_full: Vec<Complex64>,
    /// 2/3-rule mask.
    mask: Vec<f64>,
    flux: Flux,
}

enum Flux {
    /// -d_x f(u)
    Nonlinear(Nonlinearity),
    /// -d_x (f'(Q) eta)
    Linearized { potential: Field },
}

impl Stepper {
    /// Stepper for the full equation: symbol i k^3.
    pub fn gkdv(grid: &Arc<Grid>, nl: &Nonlinearity, dt: f64) -> Stepper {
        Stepper::build(grid, dt, |k| k * k * k, Flux::Nonlinear(nl.clone()))
    }

    /// Stepper for the flow eta_t = d_x (L_c eta): symbol i (k^3 + c0 k), the
    /// variable-coefficient part handled in the stages.
    pub fn linearized(grid: &Arc<Grid>, prof: &SolitonProfile, dt: f64) -> Stepper {
        let c0 = prof.c();
        let nl = prof.nl().clone();
        let potential = Field::from_fn(grid, |x| nl.df(prof.q(x)));
        Stepper::build(grid, dt, |k| k * k * k + c0 * k, Flux::Linearized { potential })
    }

    fn build(grid: &Arc<Grid>, dt: f64, symbol: impl Fn(f64) -> f64, flux: Flux) -> Stepper {
        let n = grid.n;
        let cut = n / 3;
        let mut e_half = Vec::with_capacity(n);
        let mut e_full = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        for (j, &k) in grid.wavenumbers().iter().enumerate() {
            let s = symbol(k);
            e_half.push(Complex64::new(0.0, s * dt / 2.0).exp());
            e_full.push(Complex64::new(0.0, s * dt).exp());
            let jj = if j <= n / 2 { j } else { n - j };
            mask.push(if jj > cut { 0.0 } else { 1.0 });
        }
        Stepper { grid: grid.clone(), dt, e_half, e_full, mask, flux }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Spectrum of the flux term, dealiased.
    fn flux_hat(&self, uh: &[Complex64]) -> Vec<Complex64> {
        let u = self.grid.inverse(uh.to_vec());
        let fu: Vec<f64> = match &self.flux {
            Flux::Nonlinear(nl) => u.iter().map(|&v| nl.f(v)).collect(),
            Flux::Linearized { potential } => u
                .iter()
                .zip(&potential.values)
                .map(|(&v, &p)| p * v)
                .collect(),
        };
        let mut fh = self.grid.forward(&fu);
        for ((c, &k), &m) in fh.iter_mut().zip(self.grid.wavenumbers()).zip(&self.mask) {
            // -d_x, with the 2/3 mask absorbing the unrepresentable modes
            *c *= Complex64::new(0.0, -k * m);
        }
        fh
    }

    /// Advance one step of size `dt`.
    pub fn step(&self, u: &Field) -> Result<Field> {
        let n = self.grid.n;
        let uh = self.grid.forward(&u.values);
        let k1 = self.flux_hat(&uh);

        let mut s2 = vec![Complex64::default(); n];
        for i in 0..n {
            s2[i] = self.e_half[i] * (uh[i] + 0.5 * self.dt * k1[i]);
        }
        let k2 = self.flux_hat(&s2);

        let mut s3 = vec![Complex64::default(); n];
        for i in 0..n {
            s3[i] = self.e_half[i] * uh[i] + 0.5 * self.dt * k2[i];
        }
        let k3 = self.flux_hat(&s3);

        let mut s4 = vec![Complex64::default(); n];
        for i in 0..n {
            s4[i] = self.e_full[i] * uh[i] + self.dt * self.e_half[i] * k3[i];
        }
        let k4 = self.flux_hat(&s4);

        let sixth = self.dt / 6.0;
        let mut out = vec![Complex64::default(); n];
        for i in 0..n {
            out[i] = self.e_full[i] * uh[i]
                + sixth
                    * (self.e_full[i] * k1[i]
                        + 2.0 * self.e_half[i] * (k2[i] + k3[i])
                        + k4[i]);
        }
        let values = self.grid.inverse(out);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GkdvError::NonFinite(f64::NAN));
        }
        Ok(Field::from_values(&self.grid, values))
    }

    /// Advance from `t` through `steps` steps, reporting blow-up with the time.
    pub fn run(&self, u0: &Field, t0: f64, steps: usize) -> Result<Field> {
        let mut u = u0.clone();
        for s in 0..steps {
            u = self.step(&u).map_err(|_| GkdvError::BlowUp {
                t: t0 + (s + 1) as f64 * self.dt,
            })?;
        }
        Ok(u)
    }
}

/// Mass and energy: (int u^2, 1/2 int u_x^2 - int F(u)).
pub fn invariants(u: &Field, nl: &Nonlinearity) -> (f64, f64) {
    let mass = u.inner(u);
    let ux = u.derivative(1);
    let f_int = u.map(|v| nl.antiderivative(v)).integrate();
    (mass, 0.5 * ux.inner(&ux) - f_int)
}

/// The localization profile psi(x) = (2/pi) arctan(e^{x/4}).
pub fn psi(x: f64) -> f64 {
    2.0 / std::f64::consts::PI * (x / 4.0).exp().atan()
}

/// psi'(x) = 1 / (4 pi cosh(x/4)).
pub fn psi_prime(x: f64) -> f64 {
    1.0 / (4.0 * std::f64::consts::PI * (x / 4.0).cosh())
}

/// psi'''(x), bounded by psi'(x)/16.
pub fn psi_third(x: f64) -> f64 {
    let y = x / 4.0;
    let sech = 1.0 / y.cosh();
    let tanh = y.tanh();
    sech * (2.0 * tanh * tanh - 1.0) / (64.0 * std::f64::consts::PI)
}

/// Moving localized weight anchored at time t0:
/// psi0(t,x) = psi(sqrt(c0) (x - rho(t0) + (c0/2)(t0 - t) - x0)).
pub fn psi0(x: f64, t: f64, t0: f64, rho_t0: f64, x0: f64, c0: f64) -> f64 {
    psi(c0.sqrt() * (x - rho_t0 + 0.5 * c0 * (t0 - t) - x0))
}

/// Sample psi0 on a grid.
pub fn psi0_field(grid: &Arc<Grid>, t: f64, t0: f64, rho_t0: f64, x0: f64, c0: f64) -> Field {
    Field::from_fn(grid, |x| psi0(x, t, t0, rho_t0, x0, c0))
}

/// I = int u^2 weight.
pub fn functional_i(u: &Field, weight: &Field) -> f64 {
    u.mul(u).inner(weight)
}

/// J = int (u_x^2 - 2F(u) + c0 u^2) weight.
pub fn functional_j(u: &Field, weight: &Field, nl: &Nonlinearity, c0: f64) -> f64 {
    let ux = u.derivative(1);
    let integrand = Field::from_values(
        &u.grid,
        (0..u.grid.n)
            .map(|i| {
                let v = u.values[i];
                ux.values[i] * ux.values[i] - 2.0 * nl.antiderivative(v) + c0 * v * v
            })
            .collect(),
    );
    integrand.inner(weight)
}

/// H^1 norm over {x > region_left} with a half-cell smooth edge.
pub fn local_h1_norm(u: &Field, region_left: f64) -> f64 {
    let h = u.grid.h;
    let ux = u.derivative(1);
    let mut acc = 0.0;
    for (i, &x) in u.grid.x().iter().enumerate() {
        let t = ((x - region_left) / h + 0.5).clamp(0.0, 1.0);
        let w = t * t * (3.0 - 2.0 * t);
        acc += w * (u.values[i] * u.values[i] + ux.values[i] * ux.values[i]);
    }
    (acc * h).sqrt()
}

/// Calibrated constant for the almost-monotonicity bound
/// I(t0) - I(t) <= K_CAL e^{-sqrt(c0) x0 / 4}, t <= t0.
///
/// An exact soliton overtaking the weight line already produces drops of size
/// about (2/pi) ||Q||^2 e^{-sqrt(c0) x0 / 4}, which is 3.82 e^{-x0/4} for the
/// quadratic nonlinearity at c0 = 1; this value covers that together with a
/// margin for perturbed runs, whose slightly heavier soliton drops a few
/// percent more, and is frozen here so audits across scenarios use one
/// constant.
pub const K_CAL: f64 = 5.0;

/// One stored state of a run, enough to anchor the localized functionals.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub u: Field,
    /// Soliton center at time t (peak location for audits).
    pub rho: f64,
}

/// Result of checking I(t0) - I(t) <= K e^{-sqrt(c0) x0 / 4} over all pairs
/// t <= t0 in a run, and the same for J.
#[derive(Clone, Debug)]
pub struct MonotonicityReport {
    pub x0: f64,
    pub c0: f64,
    pub bound: f64,
    pub max_excess_i: f64,
    pub max_excess_j: f64,
    pub max_drop_i: f64,
    pub max_drop_j: f64,
    pub pairs: usize,
}

/// Audit the almost-monotonicity of I and J along stored snapshots.
pub fn monotonicity_audit(
    snapshots: &[Snapshot],
    nl: &Nonlinearity,
    x0: f64,
    c0: f64,
    k_cal: f64,
) -> Result<MonotonicityReport> {
    if snapshots.len() < 2 {
        return Err(GkdvError::Config("need at least two snapshots".into()));
    }
    let bound = k_cal * (-c0.sqrt() * x0 / 4.0).exp();
    let mut max_excess_i = 0.0f64;
    let mut max_excess_j = 0.0f64;
    let mut max_drop_i = f64::NEG_INFINITY;
    let mut max_drop_j = f64::NEG_INFINITY;
    let mut pairs = 0;
    for (j, anchor) in snapshots.iter().enumerate() {
        let t0 = anchor.t;
        let w0 = psi0_field(&anchor.u.grid, t0, t0, anchor.rho, x0, c0);
        let i_t0 = functional_i(&anchor.u, &w0);
        let j_t0 = functional_j(&anchor.u, &w0, nl, c0);
        for snap in snapshots.iter().take(j) {
            let w = psi0_field(&snap.u.grid, snap.t, t0, anchor.rho, x0, c0);
            let i_t = functional_i(&snap.u, &w);
            let j_t = functional_j(&snap.u, &w, nl, c0);
            max_drop_i = max_drop_i.max(i_t0 - i_t);
            max_drop_j = max_drop_j.max(j_t0 - j_t);
            max_excess_i = max_excess_i.max(i_t0 - i_t - bound);
            max_excess_j = max_excess_j.max(j_t0 - j_t - bound);
            pairs += 1;
        }
    }
    Ok(MonotonicityReport {
        x0,
        c0,
        bound,
        max_excess_i: max_excess_i.max(0.0),
        max_excess_j: max_excess_j.max(0.0),
        max_drop_i,
        max_drop_j,
        pairs,
    })
}

/// One diagnostics record at a fixed time.
#[derive(Clone, Copy, Debug)]
pub struct DiagRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub c: f64,
    pub rho: f64,
    pub eta_h1: f64,
    pub i: f64,
    pub j: f64,
    pub v: f64,
    pub local_h1: f64,
}

/// Time series of diagnostics records with strictly increasing t.
#[derive(Clone, Debug, Default)]
pub struct DiagnosticsSeries {
    records: Vec<DiagRecord>,
}

impl DiagnosticsSeries {
    pub fn new() -> DiagnosticsSeries {
        DiagnosticsSeries { records: Vec::new() }
    }

    pub fn push(&mut self, rec: DiagRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if rec.t <= last.t {
                return Err(GkdvError::Config(format!(
                    "diagnostics time must increase: {} after {}",
                    rec.t, last.t
                )));
            }
        }
        let fields = [
            rec.t, rec.mass, rec.energy, rec.c, rec.rho, rec.eta_h1, rec.i, rec.j, rec.v,
            rec.local_h1,
        ];
        if let Some(bad) = fields.iter().find(|v| !v.is_finite()) {
            return Err(GkdvError::NonFinite(*bad));
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn records(&self) -> &[DiagRecord] {
        &self.records
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,mass,energy,c,rho,eta_h1,I,J,V,local_h1")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.t, r.mass, r.energy, r.c, r.rho, r.eta_h1, r.i, r.j, r.v, r.local_h1
            )?;
        }
        Ok(())
    }
}
