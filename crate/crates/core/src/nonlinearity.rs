//! The structural nonlinearity `phi` of the diffusion term, its derivative,
//! primitive (energy density), inverse `beta`, and the transform
//! `Psi*(z; zbar) = int_zbar^z psi(phi(s) - phi(zbar)) ds`.
//!
//! All presets are odd functions normalized by `phi(0) = 0`. The singular
//! power law `phi(z) = int_0^z s^b / (1 - s)^a ds` lives on `(-1, 1)` via its
//! anti-symmetric extension; the porous-medium and linear presets live on the
//! whole real line.

use crate::error::{Error, Result};
use crate::quadrature;

/// Relative margin by which bounded intervals are shrunk before evaluation.
pub const ENDPOINT_MARGIN: f64 = 1e-14;

/// Lower bound applied to `phi'` when forming `beta' = 1 / phi'(beta(w))`,
/// so that Newton Jacobians stay finite where the diffusion degenerates.
pub const SLOPE_FLOOR: f64 = 1e-10;

const INVERSE_MAX_ITERS: usize = 200;
const SERIES_SWITCH: f64 = 0.5;
/// Series cutoff when the closed form is available; below it the closed
/// form loses digits to cancellation.
const CLOSED_FORM_SWITCH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiKind {
    /// `phi' = |z|^b / (1 - |z|)^a` on `(-1, 1)`, `a >= 1`, `b > 0`.
    SingularPower { a: f64, b: f64 },
    /// `phi = sign(z) |z|^m` on the real line, `m > 1`.
    PorousMedium { m: f64 },
    /// `phi = slope * z`.
    Linear { slope: f64 },
}

/// Open interval `(lo, hi)`; infinite endpoints allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
    pub const UNIT: Interval = Interval { lo: -1.0, hi: 1.0 };

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, z: f64) -> bool {
        z > self.lo && z < self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiSpec {
    pub kind: PhiKind,
    pub interval: Interval,
    /// Point where `phi'` vanishes (or the convexity switch); zero for all presets.
    pub inflection: f64,
}

impl PhiSpec {
    pub fn singular_power(a: f64, b: f64) -> Result<Self> {
        if !(a >= 1.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
            return Err(Error::Config(format!(
                "singular_power needs a >= 1 and b > 0 (got a = {a}, b = {b})"
            )));
        }
        Ok(PhiSpec {
            kind: PhiKind::SingularPower { a, b },
            interval: Interval::UNIT,
            inflection: 0.0,
        })
    }

    pub fn porous_medium(m: f64) -> Result<Self> {
        if !(m > 1.0 && m.is_finite()) {
            return Err(Error::Config(format!(
                "porous_medium needs m > 1 (got {m})"
            )));
        }
        Ok(PhiSpec {
            kind: PhiKind::PorousMedium { m },
            interval: Interval::REAL_LINE,
            inflection: 0.0,
        })
    }

    pub fn linear(slope: f64) -> Result<Self> {
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::Config(format!(
                "linear needs slope > 0 (got {slope})"
            )));
        }
        Ok(PhiSpec {
            kind: PhiKind::Linear { slope },
            interval: Interval::REAL_LINE,
            inflection: 0.0,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        !matches!(self.kind, PhiKind::Linear { .. })
    }
}

/// Outcome of sampling the structural hypotheses on a given `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    /// Continuous and strictly increasing.
    pub increasing: bool,
    /// Surjective onto the real line.
    pub surjective: bool,
    /// Either uniformly positive slope, or degenerate at the inflection point
    /// with convexity on the right and concavity on the left.
    pub convexity: bool,
    pub phi_zero: bool,
}

impl HypothesisReport {
    pub fn all(&self) -> bool {
        self.increasing && self.surjective && self.convexity && self.phi_zero
    }
}

#[derive(Debug, Clone)]
pub struct PhiEvaluator {
    spec: PhiSpec,
    quad_tol: f64,
    inverse_tol: f64,
    guard: f64,
    phi_at_guard: f64,
    series_switch: f64,
    /// Integer `(a, b)` when both are small integers, for `powi`.
    integer_exponents: Option<(i32, i32)>,
    /// Increasing `(z, phi(z))` knots bracketing the positive branch.
    knots: Vec<(f64, f64)>,
}

impl PhiEvaluator {
    pub fn new(spec: PhiSpec) -> Self {
        Self::with_tolerances(spec, 1e-12, 1e-10)
    }

    pub fn with_tolerances(spec: PhiSpec, quad_tol: f64, inverse_tol: f64) -> Self {
        let guard = if spec.interval.is_bounded() {
            spec.interval.hi * (1.0 - ENDPOINT_MARGIN)
        } else {
            f64::INFINITY
        };
        let series_switch = match spec.kind {
            PhiKind::SingularPower { a, b }
                if small_integer(a).is_some()
                    && small_integer(a - 1.0).is_some()
                    && small_integer(b).is_some() =>
            {
                CLOSED_FORM_SWITCH
            }
            _ => SERIES_SWITCH,
        };
        let mut eval = PhiEvaluator {
            spec,
            quad_tol,
            inverse_tol,
            guard,
            phi_at_guard: f64::INFINITY,
            series_switch,
            integer_exponents: match spec.kind {
                PhiKind::SingularPower { a, b } => small_integer(a).zip(small_integer(b)),
                _ => None,
            },
            knots: Vec::new(),
        };
        if guard.is_finite() {
            eval.phi_at_guard = eval.phi_unchecked(guard);
        }
        if let PhiKind::SingularPower { .. } = spec.kind {
            let mut zs: Vec<f64> = (0..10).map(|k| 0.1 * k as f64).collect();
            let mut gap = 0.1;
            while gap > 4.0 * ENDPOINT_MARGIN {
                gap *= 0.5;
                zs.push(1.0 - gap);
            }
            eval.knots = zs
                .into_iter()
                .filter(|&z| z < guard)
                .map(|z| (z, eval.phi_unchecked(z)))
                .collect();
            eval.knots.push((guard, eval.phi_at_guard));
        }
        eval
    }

    pub fn spec(&self) -> &PhiSpec {
        &self.spec
    }

    pub fn inverse_tolerance(&self) -> f64 {
        self.inverse_tol
    }

    /// Largest admissible `|z|`; infinite for unbounded intervals.
    pub fn guard(&self) -> f64 {
        self.guard
    }

    /// Clamps `z` into the shrunk interval, rejecting values at or beyond the
    /// endpoints.
    pub fn admit(&self, z: f64) -> Result<f64> {
        if !z.is_finite() || !self.spec.interval.contains(z) {
            return Err(Error::Domain(format!(
                "{z} outside ({}, {})",
                self.spec.interval.lo, self.spec.interval.hi
            )));
        }
        Ok(z.clamp(-self.guard, self.guard))
    }

    /// Like [`admit`](Self::admit) but saturates instead of failing; NaN maps to 0.
    pub fn clamp_to_interval(&self, z: f64) -> f64 {
        if z.is_nan() {
            return 0.0;
        }
        z.clamp(-self.guard, self.guard)
    }

    pub fn phi(&self, z: f64) -> Result<f64> {
        let z = self.admit(z)?;
        Ok(self.phi_unchecked(z))
    }

    pub fn phi_prime(&self, z: f64) -> Result<f64> {
        let z = self.admit(z)?;
        Ok(self.phi_prime_unchecked(z))
    }

    /// `Phi(z) = int_0^z phi`.
    pub fn energy(&self, z: f64) -> Result<f64> {
        let z = self.admit(z)?;
        Ok(self.energy_unchecked(z))
    }

    /// Relative energy `Phi(z; zbar) = int_zbar^z (phi(s) - phi(zbar)) ds`.
    pub fn energy_primitive(&self, z: f64, zbar: f64) -> Result<f64> {
        let z = self.admit(z)?;
        let zbar = self.admit(zbar)?;
        Ok(self.relative_energy_unchecked(z, zbar))
    }

    pub(crate) fn relative_energy_unchecked(&self, z: f64, zbar: f64) -> f64 {
        if z == zbar {
            return 0.0;
        }
        let val = self.energy_unchecked(z)
            - self.energy_unchecked(zbar)
            - self.phi_unchecked(zbar) * (z - zbar);
        val.max(0.0)
    }

    /// `beta = phi^{-1}`, total on the real line. Values beyond `phi` of the
    /// guarded endpoint saturate at the guard.
    pub fn phi_inverse(&self, w: f64) -> Result<f64> {
        if !w.is_finite() {
            return Err(Error::Domain(format!("cannot invert phi at {w}")));
        }
        match self.spec.kind {
            PhiKind::Linear { slope } => Ok(w / slope),
            PhiKind::PorousMedium { m } => Ok(w.signum() * w.abs().powf(1.0 / m)),
            PhiKind::SingularPower { .. } => {
                if w == 0.0 {
                    return Ok(0.0);
                }
                let z = self.invert_positive(w.abs())?;
                Ok(w.signum() * z)
            }
        }
    }

    /// `beta'(w) = 1 / phi'(beta(w))` with `phi'` floored at [`SLOPE_FLOOR`].
    pub fn phi_inverse_slope(&self, w: f64) -> Result<f64> {
        let z = self.phi_inverse(w)?;
        Ok(1.0 / self.phi_prime_unchecked(z).max(SLOPE_FLOOR))
    }

    /// `Psi*(z; zbar) = int_zbar^z psi(phi(s) - phi(zbar)) ds`.
    pub fn transform_psi_star<F: Fn(f64) -> f64>(&self, psi: F, z: f64, zbar: f64) -> Result<f64> {
        let z = self.admit(z)?;
        let zbar = self.admit(zbar)?;
        let zeta_bar = self.phi_unchecked(zbar);
        let q = quadrature::integrate(
            |s| psi(self.phi_unchecked(s) - zeta_bar),
            zbar,
            z,
            self.quad_tol,
            1e-15,
        );
        Ok(q.value)
    }

    /// Samples monotonicity, surjectivity, the convexity structure and
    /// `phi(0) = 0` on a grid across the interval.
    pub fn check_hypotheses(&self) -> HypothesisReport {
        let n = 2001;
        let span = if self.guard.is_finite() {
            self.guard * 0.999_999
        } else {
            10.0
        };
        let zs: Vec<f64> = (0..n)
            .map(|i| -span + 2.0 * span * i as f64 / (n - 1) as f64)
            .collect();
        let phis: Vec<f64> = zs.iter().map(|&z| self.phi_unchecked(z)).collect();
        let slopes: Vec<f64> = zs.iter().map(|&z| self.phi_prime_unchecked(z)).collect();
        let increasing = phis.windows(2).all(|p| p[1] > p[0]);
        let surjective = if self.spec.interval.is_bounded() {
            // Must blow up at the endpoints: phi at the guard dwarfs phi at
            // a fixed interior point.
            let inner = self.phi_unchecked(0.9 * self.guard);
            self.phi_at_guard > 10.0 * inner.max(1.0)
        } else {
            // Odd and increasing: unbounded growth on one side suffices.
            self.phi_unchecked(1e6) >= 1e5 * self.phi_unchecked(1.0)
        };
        let z0 = self.spec.inflection;
        let uniformly_positive = slopes.iter().all(|&s| s > 0.0);
        let degenerate = self.phi_prime_unchecked(z0) == 0.0
            && zs.windows(2).zip(slopes.windows(2)).all(|(z, s)| {
                if z[0] >= z0 {
                    s[1] >= s[0]
                } else if z[1] <= z0 {
                    s[1] <= s[0]
                } else {
                    true
                }
            });
        HypothesisReport {
            increasing,
            surjective,
            convexity: uniformly_positive || degenerate,
            phi_zero: self.phi_unchecked(0.0) == 0.0,
        }
    }

    pub(crate) fn phi_unchecked(&self, z: f64) -> f64 {
        match self.spec.kind {
            PhiKind::Linear { slope } => slope * z,
            PhiKind::PorousMedium { m } => z.signum() * z.abs().powf(m),
            PhiKind::SingularPower { a, b } => {
                if z == 0.0 {
                    0.0
                } else {
                    z.signum() * self.singular_primitive(a, b, z.abs())
                }
            }
        }
    }

    pub(crate) fn phi_prime_unchecked(&self, z: f64) -> f64 {
        match self.spec.kind {
            PhiKind::Linear { slope } => slope,
            PhiKind::PorousMedium { m } => m * z.abs().powf(m - 1.0),
            PhiKind::SingularPower { a, b } => {
                let s = z.abs();
                match self.integer_exponents {
                    Some((ai, bi)) => s.powi(bi) / (1.0 - s).powi(ai),
                    None => s.powf(b) / (1.0 - s).powf(a),
                }
            }
        }
    }

    pub(crate) fn energy_unchecked(&self, z: f64) -> f64 {
        match self.spec.kind {
            PhiKind::Linear { slope } => 0.5 * slope * z * z,
            PhiKind::PorousMedium { m } => z.abs().powf(m + 1.0) / (m + 1.0),
            PhiKind::SingularPower { a, b } => {
                let s = z.abs();
                if s == 0.0 {
                    0.0
                } else if s <= self.series_switch {
                    singular_energy_series(a, b, s)
                } else {
                    // int_0^s (s - t) phi'(t) dt, split as (1 - t) - (1 - s).
                    self.singular_primitive(a - 1.0, b, s)
                        - (1.0 - s) * self.singular_primitive(a, b, s)
                }
            }
        }
    }

    /// `int_0^z t^b (1 - t)^{-a} dt` for `0 <= z < 1`.
    fn singular_primitive(&self, a: f64, b: f64, z: f64) -> f64 {
        if z <= self.series_switch {
            return singular_series(a, b, z);
        }
        if let (Some(ai), Some(bi)) = (small_integer(a), small_integer(b)) {
            return integer_primitive_tail(ai, bi, 1.0) - integer_primitive_tail(ai, bi, 1.0 - z);
        }
        // Substitute 1 - t = e^u to smooth the endpoint singularity.
        let head = singular_series(a, b, SERIES_SWITCH);
        let q = quadrature::integrate(
            |u: f64| {
                let e = u.exp();
                (1.0 - e).powf(b) * (u * (1.0 - a)).exp()
            },
            (1.0 - z).ln(),
            (1.0 - SERIES_SWITCH).ln(),
            self.quad_tol,
            1e-16,
        );
        head + q.value
    }

    fn invert_positive(&self, w: f64) -> Result<f64> {
        if w >= self.phi_at_guard {
            return Ok(self.guard);
        }
        let tol = self.inverse_tol * (1.0 + w);
        let k = self
            .knots
            .partition_point(|&(_, p)| p < w)
            .clamp(1, self.knots.len() - 1);
        let (mut lo, p_lo) = self.knots[k - 1];
        let (mut hi, p_hi) = self.knots[k];
        let mut z = if k == 1 {
            // Small-z asymptotics phi ~ z^{b+1} / (b+1).
            let b = match self.spec.kind {
                PhiKind::SingularPower { b, .. } => b,
                _ => 0.0,
            };
            ((b + 1.0) * w).powf(1.0 / (b + 1.0))
        } else {
            lo + (hi - lo) * (w - p_lo) / (p_hi - p_lo)
        };
        if !(z > lo && z < hi) {
            z = 0.5 * (lo + hi);
        }
        for _ in 0..INVERSE_MAX_ITERS {
            let r = self.phi_unchecked(z) - w;
            if r == 0.0 {
                return Ok(z);
            }
            if r > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let slope = self.phi_prime_unchecked(z);
            let newton = z - r / slope;
            let next = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let step = (next - z).abs();
            z = next;
            let collapsed = hi - lo <= 4.0 * f64::EPSILON * hi;
            if step <= 2.0 * f64::EPSILON * z.abs() || collapsed {
                let r = (self.phi_unchecked(z) - w).abs();
                if r <= tol || collapsed || step == 0.0 {
                    return Ok(z);
                }
            }
        }
        let residual = (self.phi_unchecked(z) - w).abs();
        if residual <= tol {
            Ok(z)
        } else {
            Err(Error::Convergence {
                iterations: INVERSE_MAX_ITERS,
                residual,
            })
        }
    }
}

fn small_integer(x: f64) -> Option<i32> {
    if x.fract() == 0.0 && (0.0..=8.0).contains(&x) {
        Some(x as i32)
    } else {
        None
    }
}

fn power(z: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() <= 16.0 {
        z.powi(p as i32)
    } else {
        z.powf(p)
    }
}

fn binomial(n: i32, k: i32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Antiderivative in `t = 1 - s` of `(1 - t)^b t^{-a}`, for integer `a, b`.
fn integer_primitive_tail(a: i32, b: i32, t: f64) -> f64 {
    (0..=b)
        .map(|k| {
            let p = k - a;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let term = if p == -1 {
                t.ln()
            } else {
                t.powi(p + 1) / (p + 1) as f64
            };
            sign * binomial(b, k) * term
        })
        .sum()
}

/// Power series of `int_0^z t^b (1 - t)^{-a} dt`, accurate for `z <= 1/2`.
fn singular_series(a: f64, b: f64, z: f64) -> f64 {
    let mut coeff = 1.0;
    let mut zp = power(z, b + 1.0);
    let mut sum = 0.0;
    for j in 0..400 {
        let jf = j as f64;
        let term = coeff * zp / (b + jf + 1.0);
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
        coeff *= (a + jf) / (jf + 1.0);
        zp *= z;
    }
    sum
}

/// Term-wise integral of [`singular_series`].
fn singular_energy_series(a: f64, b: f64, z: f64) -> f64 {
    let mut coeff = 1.0;
    let mut zp = power(z, b + 2.0);
    let mut sum = 0.0;
    for j in 0..400 {
        let jf = j as f64;
        let term = coeff * zp / ((b + jf + 1.0) * (b + jf + 2.0));
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
        coeff *= (a + jf) / (jf + 1.0);
        zp *= z;
    }
    sum
}
