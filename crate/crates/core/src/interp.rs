//! Monotone cubic (PCHIP) interpolation on strictly increasing abscissae.

/// Piecewise cubic Hermite interpolant with Fritsch-Carlson slopes.
///
/// Preserves monotonicity of the data, which keeps interpolated profiles
/// positive and free of overshoot near steep gradients.
#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl MonotoneCubic {
    /// Build from strictly increasing `xs` and matching `ys` (at least 2 points).
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> MonotoneCubic {
        assert_eq!(xs.len(), ys.len());
        assert!(xs.len() >= 2);
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
        let n = xs.len();
        let h: Vec<f64> = (0..n - 1).map(|i| xs[i + 1] - xs[i]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();

        let mut ds = vec![0.0; n];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] <= 0.0 {
                ds[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                ds[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        ds[0] = endpoint_slope(h[0], h.get(1).copied().unwrap_or(h[0]), delta[0], delta.get(1).copied().unwrap_or(delta[0]));
        ds[n - 1] = endpoint_slope(
            h[n - 2],
            if n >= 3 { h[n - 3] } else { h[n - 2] },
            delta[n - 2],
            if n >= 3 { delta[n - 3] } else { delta[n - 2] },
        );
        MonotoneCubic { xs, ys, ds }
    }

    /// Build with caller-supplied exact slopes (plain cubic Hermite, fourth
    /// order accurate when values and slopes are exact).
    pub fn from_slopes(xs: Vec<f64>, ys: Vec<f64>, ds: Vec<f64>) -> MonotoneCubic {
        assert_eq!(xs.len(), ys.len());
        assert_eq!(xs.len(), ds.len());
        assert!(xs.len() >= 2);
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
        MonotoneCubic { xs, ys, ds }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    /// Evaluate at `x`, clamping to the data range.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            j => j - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.ds[i] + h01 * self.ys[i + 1] + h11 * h * self.ds[i + 1]
    }
}

/// Piecewise quintic Hermite interpolant from exact values, slopes and
/// curvatures at the nodes.
///
/// Sixth order accurate in the node spacing, with a fourth order accurate
/// second derivative; used where an interpolated profile must satisfy a
/// differential relation well beyond what value-and-slope data can deliver.
#[derive(Clone, Debug)]
pub struct QuinticHermite {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
    ss: Vec<f64>,
}

impl QuinticHermite {
    /// Build from strictly increasing `xs` with matching values `ys`, first
    /// derivatives `ds` and second derivatives `ss` (at least 2 points).
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, ds: Vec<f64>, ss: Vec<f64>) -> QuinticHermite {
        assert_eq!(xs.len(), ys.len());
        assert_eq!(xs.len(), ds.len());
        assert_eq!(xs.len(), ss.len());
        assert!(xs.len() >= 2);
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
        QuinticHermite { xs, ys, ds, ss }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    /// Evaluate at `x`, clamping to the data range.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            j => j - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let (t4, t5) = (t2 * t2, t2 * t3);
        // quintic Hermite basis on [0, 1]
        let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h10 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h20 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
        let h01 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h21 = 0.5 * (t3 - 2.0 * t4 + t5);
        h00 * self.ys[i]
            + h * h10 * self.ds[i]
            + h * h * h20 * self.ss[i]
            + h01 * self.ys[i + 1]
            + h * h11 * self.ds[i + 1]
            + h * h * h21 * self.ss[i + 1]
    }
}

/// Shape-preserving three-point endpoint slope (Fritsch-Carlson recipe).
fn endpoint_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}
