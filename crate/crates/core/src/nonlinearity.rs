//! Polynomial nonlinearities f with f(0) = f'(0) = 0, leading term a u^p, p >= 2.
//!
//! All scalar questions about f are answered here: the antiderivative F,
//! the first positive zero of (c/2) s^2 - F(s), the soliton existence
//! criterion, and the speed threshold c*(f).

use serde::{Deserialize, Serialize};

use crate::error::{GkdvError, Result};

/// Configuration fragment for a nonlinearity.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonlinearityKind {
    PurePower { p: u32, a: f64 },
    PowerDifference { p: u32, q: u32, a_lead: f64, a_sub: f64 },
    /// Coefficients from degree 2 upward: `coefficients[k]` multiplies `s^(k+2)`.
    Polynomial { coefficients: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalOrder {
    F,
    Antiderivative,
    Df,
    D2f,
}

/// Outcome of the c* search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CStar {
    Finite(f64),
    Infinite,
}

impl CStar {
    pub fn finite(self) -> Option<f64> {
        match self {
            CStar::Finite(c) => Some(c),
            CStar::Infinite => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Nonlinearity {
    kind: NonlinearityKind,
    /// coeffs[k] is the coefficient of s^k; entries 0 and 1 are zero.
    coeffs: Vec<f64>,
    /// Leading power p (smallest power with nonzero coefficient).
    leading_power: u32,
    /// Leading coefficient a > 0.
    leading_coeff: f64,
}

const ROOT_TOL: f64 = 1e-13;
const CSTAR_TOL: f64 = 1e-10;
const CSTAR_CEILING: f64 = 1e12;
const PREDICATE_SAMPLES: usize = 4096;

impl Nonlinearity {
    pub fn new(kind: NonlinearityKind) -> Result<Nonlinearity> {
        let coeffs = match &kind {
            NonlinearityKind::PurePower { p, a } => {
                let mut c = vec![0.0; *p as usize + 1];
                c[*p as usize] = *a;
                c
            }
            NonlinearityKind::PowerDifference { p, q, a_lead, a_sub } => {
                if q <= p {
                    return Err(GkdvError::Config(format!(
                        "power_difference requires p < q, got p = {p}, q = {q}"
                    )));
                }
                let mut c = vec![0.0; *q as usize + 1];
                c[*p as usize] = *a_lead;
                c[*q as usize] = -*a_sub;
                c
            }
            NonlinearityKind::Polynomial { coefficients } => {
                let mut c = vec![0.0, 0.0];
                c.extend_from_slice(coefficients);
                c
            }
        };
        let leading_power = coeffs
            .iter()
            .position(|&a| a != 0.0)
            .ok_or_else(|| GkdvError::Config("nonlinearity is identically zero".into()))?
            as u32;
        if leading_power < 2 {
            return Err(GkdvError::Config(format!(
                "leading power must be >= 2, got {leading_power}"
            )));
        }
        let leading_coeff = coeffs[leading_power as usize];
        if leading_coeff <= 0.0 {
            return Err(GkdvError::Config(format!(
                "leading coefficient must be positive, got {leading_coeff}"
            )));
        }
        Ok(Nonlinearity { kind, coeffs, leading_power, leading_coeff })
    }

    pub fn pure_power(p: u32, a: f64) -> Result<Nonlinearity> {
        Nonlinearity::new(NonlinearityKind::PurePower { p, a })
    }

    pub fn power_difference(p: u32, q: u32, a_lead: f64, a_sub: f64) -> Result<Nonlinearity> {
        Nonlinearity::new(NonlinearityKind::PowerDifference { p, q, a_lead, a_sub })
    }

    pub fn from_json(fragment: &str) -> Result<Nonlinearity> {
        let kind: NonlinearityKind = serde_json::from_str(fragment)
            .map_err(|e| GkdvError::Config(format!("bad nonlinearity fragment: {e}")))?;
        Nonlinearity::new(kind)
    }

    /// Monomial coefficients of f; index k multiplies s^k (entries 0 and 1
    /// are zero).
    pub fn monomial_coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    /// Leading power p of f(u) = a u^p + o(u^p).
    pub fn leading_power(&self) -> u32 {
        self.leading_power
    }

    pub fn leading_coeff(&self) -> f64 {
        self.leading_coeff
    }

    pub fn eval(&self, s: f64, order: EvalOrder) -> Result<f64> {
        if !s.is_finite() {
            return Err(GkdvError::NonFinite(s));
        }
        Ok(match order {
            EvalOrder::F => self.f(s),
            EvalOrder::Antiderivative => self.antiderivative(s),
            EvalOrder::Df => self.df(s),
            EvalOrder::D2f => self.d2f(s),
        })
    }

    pub fn f(&self, s: f64) -> f64 {
        horner(&self.coeffs, s, 0)
    }

    /// F(s) = integral of f from 0 to s, term by term.
    pub fn antiderivative(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for k in (2..self.coeffs.len()).rev() {
            acc = acc * s + self.coeffs[k] / (k as f64 + 1.0);
        }
        acc * s * s * s
    }

    pub fn df(&self, s: f64) -> f64 {
        horner(&self.coeffs, s, 1)
    }

    pub fn d2f(&self, s: f64) -> f64 {
        horner(&self.coeffs, s, 2)
    }

    /// s f(s) - 2 F(s), the Palais-Smale style quantity behind the c* characterization.
    pub fn virial_density(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for k in (2..self.coeffs.len()).rev() {
            let kf = k as f64;
            acc = acc * s + self.coeffs[k] * (kf - 1.0) / (kf + 1.0);
        }
        acc * s * s * s
    }

    /// Polynomial coefficients of h(s) = c/2 - F(s)/s^2 (index = power of s).
    fn zero_polynomial(&self, c: f64) -> Vec<f64> {
        let mut h = vec![0.0; self.coeffs.len() - 1];
        h[0] = 0.5 * c;
        for k in 2..self.coeffs.len() {
            h[k - 1] -= self.coeffs[k] / (k as f64 + 1.0);
        }
        h
    }

    fn default_ceiling(&self, c: f64) -> f64 {
        10.0 * (1.0 + cauchy_root_bound(&self.zero_polynomial(c)))
    }

    /// Smallest s0 > 0 with (c/2) s0^2 = F(s0), or `None` when provably no
    /// positive zero exists below the scan ceiling.
    pub fn first_positive_zero(&self, c: f64) -> Result<Option<f64>> {
        self.first_positive_zero_with_ceiling(c, None)
    }

    pub fn first_positive_zero_with_ceiling(
        &self,
        c: f64,
        ceiling: Option<f64>,
    ) -> Result<Option<f64>> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(GkdvError::NonFinite(c));
        }
        let h = self.zero_polynomial(c);
        let bound = cauchy_root_bound(&h);
        let ceiling = ceiling.unwrap_or_else(|| self.default_ceiling(c));

        // sign-change scan first; near-tangent double roots are invisible to a
        // scan, so companion-matrix roots back it up.
        if let Some(s0) = scan_and_bisect(|s| poly_eval(&h, s), ceiling) {
            return Ok(Some(self.polish_zero(c, s0)));
        }
        match smallest_positive_root(&h) {
            Some(root) if root <= ceiling => Ok(Some(self.polish_zero(c, root))),
            Some(_) | None => {
                if ceiling >= bound {
                    Ok(None)
                } else {
                    Err(GkdvError::ScanExhausted { c, ceiling })
                }
            }
        }
    }

    /// Newton polish of a zero of (c/2) s^2 - F(s) to relative tolerance 1e-13.
    fn polish_zero(&self, c: f64, mut s: f64) -> f64 {
        for _ in 0..60 {
            let g = 0.5 * c * s * s - self.antiderivative(s);
            let dg = c * s - self.f(s);
            if dg == 0.0 {
                break;
            }
            let step = g / dg;
            s -= step;
            if step.abs() <= ROOT_TOL * s.abs() {
                break;
            }
        }
        s
    }

    /// Berestycki-Lions criterion: a positive even soliton exists for speed c.
    pub fn soliton_exists(&self, c: f64) -> Result<bool> {
        match self.first_positive_zero(c)? {
            None => Ok(false),
            Some(s0) => Ok(c * s0 - self.f(s0) < 0.0),
        }
    }

    /// True when s f(s) - 2 F(s) > 0 for all s in (0, s0(c)].
    fn cstar_predicate(&self, c: f64) -> Result<bool> {
        let s0 = match self.first_positive_zero(c)? {
            Some(s0) => s0,
            None => return Ok(false),
        };
        if c * s0 - self.f(s0) >= 0.0 {
            return Ok(false);
        }
        // dense sampling plus endpoint; the polynomial root check catches dips
        // between samples.
        for i in 1..=PREDICATE_SAMPLES {
            let s = s0 * i as f64 / PREDICATE_SAMPLES as f64;
            if self.virial_density(s) <= 0.0 {
                return Ok(false);
            }
        }
        let mut vir = vec![0.0, 0.0, 0.0];
        for k in 2..self.coeffs.len() {
            let kf = k as f64;
            vir.push(self.coeffs[k] * (kf - 1.0) / (kf + 1.0));
        }
        if let Some(r) = smallest_positive_root(&vir) {
            if r <= s0 * (1.0 + 1e-12) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Threshold speed c*(f): solitons exist for every c in (0, c*).
    pub fn c_star(&self) -> Result<CStar> {
        // bracket by doubling
        let mut lo = f64::MIN_POSITIVE.max(1e-8);
        if !self.cstar_predicate(lo)? {
            // leading-order behavior guarantees the predicate for small c
            lo = 1e-12;
            if !self.cstar_predicate(lo)? {
                return Ok(CStar::Finite(0.0));
            }
        }
        let mut hi = lo;
        loop {
            hi *= 2.0;
            if hi > CSTAR_CEILING {
                return Ok(CStar::Infinite);
            }
            if !self.cstar_predicate(hi)? {
                break;
            }
            lo = hi;
        }
        while hi - lo > CSTAR_TOL * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if self.cstar_predicate(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(CStar::Finite(0.5 * (lo + hi)))
    }
}

/// Closed form for f(u) = u^p - a u^q (2 <= p < q): the peak value s0 at the
/// threshold and c* itself.
pub fn c_star_closed_form(p: u32, q: u32, a: f64) -> (f64, f64) {
    assert!(p >= 2 && q > p && a > 0.0);
    let (pf, qf) = (p as f64, q as f64);
    let s0 = ((1.0 / a) * ((qf + 1.0) / (qf - 1.0)) * ((pf - 1.0) / (pf + 1.0)))
        .powf(1.0 / (qf - pf));
    let c_star = s0.powi(p as i32 - 1) - a * s0.powi(q as i32 - 1);
    (s0, c_star)
}

fn horner(coeffs: &[f64], s: f64, deriv: u32) -> f64 {
    let mut acc = 0.0;
    for k in (0..coeffs.len()).rev() {
        if (k as u32) < deriv {
            break;
        }
        let mut factor = 1.0;
        for j in 0..deriv {
            factor *= (k as u32 - j) as f64;
        }
        acc = acc * s + coeffs[k] * factor;
    }
    acc
}

fn poly_eval(coeffs: &[f64], s: f64) -> f64 {
    let mut acc = 0.0;
    for &a in coeffs.iter().rev() {
        acc = acc * s + a;
    }
    acc
}

/// Cauchy bound: every root of the polynomial has modulus below this.
fn cauchy_root_bound(coeffs: &[f64]) -> f64 {
    let deg = match coeffs.iter().rposition(|&a| a != 0.0) {
        Some(d) if d > 0 => d,
        _ => return 1.0,
    };
    let lead = coeffs[deg].abs();
    1.0 + coeffs[..deg].iter().map(|a| a.abs()).fold(0.0, f64::max) / lead
}

/// Smallest positive real root, or `None` when there is none.
fn smallest_positive_root(coeffs: &[f64]) -> Option<f64> {
    // strip known roots at zero so the remaining constant term is nonzero
    let first = coeffs.iter().position(|&a| a != 0.0)?;
    let coeffs = &coeffs[first..];
    let bound = cauchy_root_bound(coeffs);
    real_roots_in(coeffs, 0.0, bound).into_iter().find(|&r| r > 0.0)
}

/// All real roots of the polynomial in `[lo, hi]`, ascending.
///
/// The polynomial is strictly monotone between consecutive roots of its
/// derivative, so isolating those critical points recursively and bisecting
/// each monotone panel finds every real root, including tangential double
/// roots (detected as critical points where the value sits at noise level).
fn real_roots_in(coeffs: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let deg = match coeffs.iter().rposition(|&a| a != 0.0) {
        Some(d) => d,
        None => return Vec::new(),
    };
    let coeffs = &coeffs[..=deg];
    if deg == 0 || !(hi > lo) {
        return Vec::new();
    }
    if deg == 1 {
        let r = -coeffs[0] / coeffs[1];
        return if (lo..=hi).contains(&r) { vec![r] } else { Vec::new() };
    }
    let dcoeffs: Vec<f64> = (1..=deg).map(|k| coeffs[k] * k as f64).collect();
    let mut nodes = vec![lo];
    nodes.extend(real_roots_in(&dcoeffs, lo, hi));
    nodes.push(hi);

    let eval = |s: f64| poly_eval(coeffs, s);
    // largest monomial magnitude, the natural scale for "value is zero up to
    // rounding" at this point
    let noise_scale = |s: f64| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| a.abs() * s.abs().powi(k as i32))
            .fold(f64::MIN_POSITIVE, f64::max)
    };

    let mut roots = Vec::new();
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(b > a) {
            continue;
        }
        let (fa, fb) = (eval(a), eval(b));
        if fa == 0.0 {
            roots.push(a);
        }
        if fa * fb < 0.0 {
            let (mut a, mut b, increasing) = (a, b, fb > fa);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if (eval(mid) < 0.0) == increasing {
                    a = mid;
                } else {
                    b = mid;
                }
                if b - a <= ROOT_TOL * b.abs().max(f64::MIN_POSITIVE) {
                    break;
                }
            }
            roots.push(0.5 * (a + b));
        }
    }
    if eval(hi) == 0.0 {
        roots.push(hi);
    }
    // tangential roots: the polynomial touches zero at a critical point
    for &cp in &nodes[1..nodes.len() - 1] {
        if eval(cp).abs() <= 1e-11 * noise_scale(cp) {
            roots.push(cp);
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
    roots
}

fn scan_and_bisect(g: impl Fn(f64) -> f64, ceiling: f64) -> Option<f64> {
    let n = PREDICATE_SAMPLES;
    let mut prev_s = ceiling * 1e-9;
    let mut prev_g = g(prev_s);
    for i in 1..=n {
        let s = ceiling * i as f64 / n as f64;
        let gs = g(s);
        if prev_g > 0.0 && gs <= 0.0 {
            // bisection to relative tolerance
            let (mut a, mut b) = (prev_s, s);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if g(mid) > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
                if b - a <= ROOT_TOL * b {
                    break;
                }
            }
            return Some(0.5 * (a + b));
        }
        prev_s = s;
        prev_g = gs;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eval_closed_forms() {
        let nl = Nonlinearity::pure_power(2, 1.0).unwrap();
        assert_eq!(nl.eval(2.0, EvalOrder::F).unwrap(), 4.0);
        assert_eq!(nl.eval(3.0, EvalOrder::Antiderivative).unwrap(), 9.0);
        assert_eq!(nl.eval(3.0, EvalOrder::Df).unwrap(), 6.0);
        assert_eq!(nl.eval(3.0, EvalOrder::D2f).unwrap(), 2.0);
        let pd = Nonlinearity::power_difference(2, 3, 1.0, 1.0).unwrap();
        assert_eq!(pd.eval(1.0, EvalOrder::F).unwrap(), 0.0);
        assert!(nl.eval(f64::NAN, EvalOrder::F).is_err());
    }

    #[test]
    fn first_zero_pure_power() {
        let nl = Nonlinearity::pure_power(2, 1.0).unwrap();
        // s0 solves c s^2/2 = s^3/3, so s0 = 3c/2... for c=1: 3/2
        let s0 = nl.first_positive_zero(1.0).unwrap().unwrap();
        assert_relative_eq!(s0, 1.5, max_relative = 1e-13);
        let s0 = nl.first_positive_zero(2.0).unwrap().unwrap();
        assert_relative_eq!(s0, 3.0, max_relative = 1e-13);
    }

    #[test]
    fn first_zero_none_above_threshold() {
        let nl = Nonlinearity::power_difference(2, 3, 1.0, 1.0).unwrap();
        assert_eq!(nl.first_positive_zero(1.0).unwrap(), None);
        assert!(nl.first_positive_zero(0.1).unwrap().is_some());
    }

    #[test]
    fn zero_residual_and_positivity_below() {
        let nl = Nonlinearity::power_difference(2, 3, 1.0, 1.0).unwrap();
        let c = 0.15;
        let s0 = nl.first_positive_zero(c).unwrap().unwrap();
        let resid = 0.5 * c * s0 * s0 - nl.antiderivative(s0);
        assert!(resid.abs() <= 1e-12 * c * s0 * s0);
        for i in 1..200 {
            let s = s0 * i as f64 / 200.0 * 0.999;
            assert!(0.5 * c * s * s - nl.antiderivative(s) > 0.0);
        }
    }

    #[test]
    fn soliton_exists_examples() {
        for p in 2..=5 {
            let nl = Nonlinearity::pure_power(p, 1.0).unwrap();
            assert!(nl.soliton_exists(1.0).unwrap());
        }
        let nl = Nonlinearity::power_difference(2, 3, 1.0, 1.0).unwrap();
        assert!(nl.soliton_exists(0.1).unwrap());
        assert!(!nl.soliton_exists(0.25).unwrap());
    }

    #[test]
    fn c_star_closed_form_examples() {
        let (s0, cs) = c_star_closed_form(2, 3, 1.0);
        assert_relative_eq!(s0, 2.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(cs, 2.0 / 9.0, max_relative = 1e-14);
        let (s0, cs) = c_star_closed_form(2, 3, 2.0);
        assert_relative_eq!(s0, 1.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(cs, 1.0 / 9.0, max_relative = 1e-14);
        let (s0, cs) = c_star_closed_form(3, 5, 1.0);
        assert_relative_eq!(s0, 0.75f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(cs, 3.0 / 16.0, max_relative = 1e-14);
    }

    #[test]
    fn c_star_matches_closed_form() {
        for (p, q, a) in [(2u32, 3u32, 1.0), (2, 3, 2.0), (3, 5, 1.0), (2, 4, 1.0)] {
            let nl = Nonlinearity::power_difference(p, q, 1.0, a).unwrap();
            // note: closed form is for u^p - a u^q
            let (_, expected) = c_star_closed_form(p, q, a);
            let got = nl.c_star().unwrap().finite().unwrap();
            assert_relative_eq!(got, expected, max_relative = 1e-8);
        }
    }

    #[test]
    fn c_star_pure_power_is_infinite() {
        for p in [2u32, 3, 5] {
            let nl = Nonlinearity::pure_power(p, 1.0).unwrap();
            assert_eq!(nl.c_star().unwrap(), CStar::Infinite);
        }
    }

    #[test]
    fn monotone_consistency_around_c_star() {
        let nl = Nonlinearity::power_difference(2, 3, 1.0, 1.0).unwrap();
        let cs = nl.c_star().unwrap().finite().unwrap();
        for frac in [0.1, 0.5, 0.9, 1.0 - 1e-6] {
            assert!(nl.soliton_exists(cs * frac).unwrap(), "c = {}", cs * frac);
        }
        for frac in [1.0 + 1e-6, 1.5, 10.0] {
            assert!(!nl.soliton_exists(cs * frac).unwrap(), "c = {}", cs * frac);
        }
    }

    #[test]
    fn antiderivative_consistency_central_difference() {
        let nl = Nonlinearity::power_difference(2, 4, 1.5, 0.3).unwrap();
        for i in 0..100 {
            let s = -2.0 + 4.0 * i as f64 / 99.0;
            let step = 1e-6 * (1.0 + s.abs());
            let fd = (nl.antiderivative(s + step) - nl.antiderivative(s - step)) / (2.0 * step);
            let exact = nl.f(s);
            assert!((fd - exact).abs() <= 1e-7 * (1.0 + exact.abs()));
        }
    }

    #[test]
    fn config_fragment_round_trip() {
        let nl = Nonlinearity::from_json(
            r#"{"kind":"power_difference","p":2,"q":3,"a_lead":1.0,"a_sub":1.0}"#,
        )
        .unwrap();
        assert_eq!(nl.leading_power(), 2);
        assert_eq!(nl.f(1.0), 0.0);
        let nl = Nonlinearity::from_json(r#"{"kind":"pure_power","p":3,"a":2.0}"#).unwrap();
        assert_eq!(nl.f(2.0), 16.0);
    }
}
