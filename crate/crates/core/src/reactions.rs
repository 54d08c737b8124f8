//! Reaction terms: scalar `f(x, t, u)` and coupled `(f, g)(x, t, u, v)`
//! presets, Lipschitz constants, and sign-condition validation.
//!
//! Coupled kinetics are defined on the box `u in [0, 1)`, `v in [0, 1]`;
//! outside it the arguments are clamped, which keeps the extension Lipschitz
//! with the same constant.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Upper clamp for the biomass-like unknown.
pub const U_CLAMP_MAX: f64 = 1.0 - 1e-14;

/// Monod-type biofilm kinetics:
/// `f = -K2 u + K3 u v / (K4 + v)`, `g = -K1 u v / (K4 + v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiofilmKinetics {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

impl Default for BiofilmKinetics {
    fn default() -> Self {
        BiofilmKinetics {
            k1: 1.0,
            k2: 1.0,
            k3: 1.0,
            k4: 1.0,
        }
    }
}

impl BiofilmKinetics {
    pub fn new(k1: f64, k2: f64, k3: f64, k4: f64) -> Result<Self> {
        if !(k4 > 0.0)
            || k1 < 0.0
            || k2 < 0.0
            || k3 < 0.0
            || ![k1, k2, k3, k4].iter().all(|k| k.is_finite())
        {
            return Err(Error::Config(format!(
                "biofilm constants need K1..K3 >= 0 and K4 > 0 (got {k1}, {k2}, {k3}, {k4})"
            )));
        }
        Ok(BiofilmKinetics { k1, k2, k3, k4 })
    }

    fn monod(&self, v: f64) -> f64 {
        v / (self.k4 + v)
    }

    pub fn f(&self, u: f64, v: f64) -> f64 {
        let (u, v) = clamp_box(u, v);
        u * (-self.k2 + self.k3 * self.monod(v))
    }

    pub fn g(&self, u: f64, v: f64) -> f64 {
        let (u, v) = clamp_box(u, v);
        -self.k1 * u * self.monod(v)
    }

    pub fn f_u(&self, u: f64, v: f64) -> f64 {
        if !(0.0..=U_CLAMP_MAX).contains(&u) {
            return 0.0;
        }
        -self.k2 + self.k3 * self.monod(v.clamp(0.0, 1.0))
    }

    pub fn g_v(&self, u: f64, v: f64) -> f64 {
        if !(0.0..=1.0).contains(&v) {
            return 0.0;
        }
        let u = u.clamp(0.0, U_CLAMP_MAX);
        -self.k1 * u * self.k4 / (self.k4 + v).powi(2)
    }

    /// Suprema of the absolute partial derivatives over the box.
    pub fn partial_sups(&self) -> PartialSups {
        let s1 = 1.0 / (self.k4 + 1.0);
        PartialSups {
            f_u: self.k2.max((self.k3 * s1 - self.k2).abs()),
            f_v: self.k3 / self.k4,
            g_u: self.k1 * s1,
            g_v: self.k1 / self.k4,
        }
    }

    /// `L` with `|f1 - f2| + |g1 - g2| <= L (|u1 - u2| + |v1 - v2|)`.
    pub fn lipschitz(&self) -> f64 {
        // |f_u| + |g_u| is convex in s = v/(K4+v), so its max sits at an end of [0, 1/(K4+1)].
        let s1 = 1.0 / (self.k4 + 1.0);
        let du = self.k2.max((self.k3 * s1 - self.k2).abs() + self.k1 * s1);
        let dv = (self.k1 + self.k3) / self.k4;
        du.max(dv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialSups {
    pub f_u: f64,
    pub f_v: f64,
    pub g_u: f64,
    pub g_v: f64,
}

fn clamp_box(u: f64, v: f64) -> (f64, f64) {
    (u.clamp(0.0, U_CLAMP_MAX), v.clamp(0.0, 1.0))
}

pub type ReactionFn = Arc<dyn Fn([f64; 2], f64, f64, f64) -> f64 + Send + Sync>;

/// User-supplied kinetics `(x, t, u, v) -> value`, with the box used for
/// sampling Lipschitz quotients.
#[derive(Clone)]
pub struct CustomReaction {
    pub f: ReactionFn,
    pub g: ReactionFn,
    pub u_range: (f64, f64),
    pub v_range: (f64, f64),
}

impl CustomReaction {
    pub fn scalar<F>(f: F, u_range: (f64, f64)) -> Self
    where
        F: Fn([f64; 2], f64, f64) -> f64 + Send + Sync + 'static,
    {
        CustomReaction {
            f: Arc::new(move |x, t, u, _| f(x, t, u)),
            g: Arc::new(|_, _, _, _| 0.0),
            u_range,
            v_range: (0.0, 0.0),
        }
    }

    pub fn coupled<F, G>(f: F, g: G) -> Self
    where
        F: Fn([f64; 2], f64, f64, f64) -> f64 + Send + Sync + 'static,
        G: Fn([f64; 2], f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        CustomReaction {
            f: Arc::new(f),
            g: Arc::new(g),
            u_range: (0.0, 1.0),
            v_range: (0.0, 1.0),
        }
    }
}

impl fmt::Debug for CustomReaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomReaction")
            .field("u_range", &self.u_range)
            .field("v_range", &self.v_range)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum ReactionKind {
    None,
    /// `f = u (1 - u)` with `u` clamped to `[0, 1]`.
    PorousFischer,
    Biofilm(BiofilmKinetics),
    Custom(CustomReaction),
}

#[derive(Debug, Clone)]
pub struct ReactionSpec {
    pub kind: ReactionKind,
    /// Overrides the computed Lipschitz constant when set.
    pub lipschitz_override: Option<f64>,
}

impl ReactionSpec {
    pub fn none() -> Self {
        Self::from_kind(ReactionKind::None)
    }

    pub fn porous_fischer() -> Self {
        Self::from_kind(ReactionKind::PorousFischer)
    }

    pub fn biofilm(k: BiofilmKinetics) -> Self {
        Self::from_kind(ReactionKind::Biofilm(k))
    }

    pub fn custom(c: CustomReaction) -> Self {
        Self::from_kind(ReactionKind::Custom(c))
    }

    pub fn from_kind(kind: ReactionKind) -> Self {
        ReactionSpec {
            kind,
            lipschitz_override: None,
        }
    }

    pub fn is_coupled(&self) -> bool {
        matches!(
            self.kind,
            ReactionKind::Biofilm(_) | ReactionKind::Custom(_)
        )
    }

    /// Scalar reaction value. Coupled kinetics need a partner value and are
    /// rejected here; use [`eval_coupled`](Self::eval_coupled).
    pub fn eval_scalar(&self, x: [f64; 2], t: f64, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::Domain(format!("reaction evaluated at {u}")));
        }
        match &self.kind {
            ReactionKind::None => Ok(0.0),
            ReactionKind::PorousFischer => Ok(porous_fischer(u)),
            ReactionKind::Custom(c) => Ok((c.f)(x, t, u, 0.0)),
            ReactionKind::Biofilm(_) => Err(Error::Precondition(
                "biofilm kinetics need a partner field; freeze one unknown first".into(),
            )),
        }
    }

    /// Coupled reaction values `(f, g)` on the box `u in [0, 1)`, `v in [0, 1]`.
    pub fn eval_coupled(&self, x: [f64; 2], t: f64, u: f64, v: f64) -> Result<(f64, f64)> {
        if !(0.0..1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!(
                "(u, v) = ({u}, {v}) outside [0,1) x [0,1]"
            )));
        }
        Ok(self.eval_coupled_clamped(x, t, u, v))
    }

    /// Coupled values with arguments clamped into the box.
    pub fn eval_coupled_clamped(&self, x: [f64; 2], t: f64, u: f64, v: f64) -> (f64, f64) {
        match &self.kind {
            ReactionKind::None => (0.0, 0.0),
            ReactionKind::PorousFischer => (porous_fischer(u), 0.0),
            ReactionKind::Biofilm(k) => (k.f(u, v), k.g(u, v)),
            ReactionKind::Custom(c) => {
                let (u, v) = clamp_box(u, v);
                ((c.f)(x, t, u, v), (c.g)(x, t, u, v))
            }
        }
    }

    /// Lipschitz constant of the reaction with respect to its unknowns.
    pub fn lipschitz_bound(&self) -> f64 {
        if let Some(l) = self.lipschitz_override {
            return l;
        }
        match &self.kind {
            ReactionKind::None => 0.0,
            ReactionKind::PorousFischer => 1.0,
            ReactionKind::Biofilm(k) => k.lipschitz(),
            ReactionKind::Custom(c) => sampled_lipschitz(c, 0x5eed) * 1.1,
        }
    }

    /// Samples the sign conditions `f(0, v) >= 0`, `g(u, 0) >= 0` and
    /// `g(u, 1) <= 1` on a 101 x 101 lattice.
    pub fn check_sign_hypotheses(&self) -> SignReport {
        let n = 101;
        let lattice = |i: usize| (i as f64 / (n - 1) as f64).min(U_CLAMP_MAX);
        let x = [0.0, 0.0];
        let mut worst = f64::INFINITY;
        let mut g_one_nonpositive = true;
        for i in 0..n {
            let s = lattice(i);
            let v = i as f64 / (n - 1) as f64;
            let (f0, _) = self.eval_coupled_clamped(x, 0.0, 0.0, v);
            let (_, g0) = self.eval_coupled_clamped(x, 0.0, s, 0.0);
            let (_, g1) = self.eval_coupled_clamped(x, 0.0, s, 1.0);
            worst = worst.min(f0).min(g0).min(1.0 - g1);
            g_one_nonpositive &= g1 <= 0.0;
        }
        SignReport {
            pass: worst >= 0.0,
            worst_margin: worst,
            g_at_one_nonpositive: g_one_nonpositive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignReport {
    pub pass: bool,
    /// Smallest slack over all sampled conditions; negative means violated.
    pub worst_margin: f64,
    /// Whether the stronger `g(u, 1) <= 0` holds, which makes `v = 1` a supersolution.
    pub g_at_one_nonpositive: bool,
}

impl SignReport {
    pub fn violation(&self) -> f64 {
        (-self.worst_margin).max(0.0)
    }
}

fn porous_fischer(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * (1.0 - u)
}

fn porous_fischer_du(u: f64) -> f64 {
    if (0.0..=1.0).contains(&u) {
        1.0 - 2.0 * u
    } else {
        0.0
    }
}

fn sampled_lipschitz(c: &CustomReaction, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = [0.0, 0.0];
    let mut worst = 0.0_f64;
    let draw = |rng: &mut ChaCha8Rng, r: (f64, f64)| {
        if r.1 > r.0 {
            rng.gen_range(r.0..r.1)
        } else {
            r.0
        }
    };
    for _ in 0..10_000 {
        let (u1, u2) = (draw(&mut rng, c.u_range), draw(&mut rng, c.u_range));
        let (v1, v2) = (draw(&mut rng, c.v_range), draw(&mut rng, c.v_range));
        let dist = (u1 - u2).abs() + (v1 - v2).abs();
        if dist < 1e-12 {
            continue;
        }
        let df = ((c.f)(x, 0.0, u1, v1) - (c.f)(x, 0.0, u2, v2)).abs();
        let dg = ((c.g)(x, 0.0, u1, v1) - (c.g)(x, 0.0, u2, v2)).abs();
        worst = worst.max((df + dg) / dist);
    }
    worst
}

/// Where a source is evaluated: node, its coordinates, time and step index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourcePoint {
    pub node: usize,
    pub x: [f64; 2],
    pub t: f64,
    pub step: usize,
}

/// Reaction term of a single (scalar) equation as seen by the implicit solver.
pub trait Source: Send + Sync + fmt::Debug {
    fn value(&self, at: &SourcePoint, u: f64) -> f64;

    /// `df/du`; central difference with step `1e-6` unless overridden.
    fn derivative(&self, at: &SourcePoint, u: f64) -> f64 {
        let h = 1e-6;
        (self.value(at, u + h) - self.value(at, u - h)) / (2.0 * h)
    }

    fn lipschitz(&self) -> f64;

    /// `sup |f|` over the admissible range, when known.
    fn sup_abs(&self) -> Option<f64> {
        None
    }

    /// True if `f` vanishes identically.
    fn is_zero(&self) -> bool {
        false
    }
}

/// Scalar view of a [`ReactionSpec`] (kinds `None`, `PorousFischer`, `Custom`).
#[derive(Debug, Clone)]
pub struct ScalarSource {
    spec: ReactionSpec,
}

impl ScalarSource {
    pub fn new(spec: ReactionSpec) -> Result<Self> {
        if let ReactionKind::Biofilm(_) = spec.kind {
            return Err(Error::Precondition(
                "biofilm kinetics need a partner field; use FrozenPartner".into(),
            ));
        }
        Ok(ScalarSource { spec })
    }

    pub fn none() -> Self {
        ScalarSource {
            spec: ReactionSpec::none(),
        }
    }
}

impl Source for ScalarSource {
    fn value(&self, at: &SourcePoint, u: f64) -> f64 {
        match &self.spec.kind {
            ReactionKind::None => 0.0,
            ReactionKind::PorousFischer => porous_fischer(u),
            ReactionKind::Custom(c) => (c.f)(at.x, at.t, u, 0.0),
            ReactionKind::Biofilm(_) => unreachable!("rejected in constructor"),
        }
    }

    fn derivative(&self, at: &SourcePoint, u: f64) -> f64 {
        match &self.spec.kind {
            ReactionKind::None => 0.0,
            ReactionKind::PorousFischer => porous_fischer_du(u),
            _ => {
                let h = 1e-6;
                (self.value(at, u + h) - self.value(at, u - h)) / (2.0 * h)
            }
        }
    }

    fn lipschitz(&self) -> f64 {
        self.spec.lipschitz_bound()
    }

    fn sup_abs(&self) -> Option<f64> {
        match &self.spec.kind {
            ReactionKind::None => Some(0.0),
            ReactionKind::PorousFischer => Some(0.25),
            _ => None,
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self.spec.kind, ReactionKind::None)
    }
}

/// Constant source `f = c`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantSource(pub f64);

impl Source for ConstantSource {
    fn value(&self, _: &SourcePoint, _: f64) -> f64 {
        self.0
    }

    fn derivative(&self, _: &SourcePoint, _: f64) -> f64 {
        0.0
    }

    fn lipschitz(&self) -> f64 {
        0.0
    }

    fn sup_abs(&self) -> Option<f64> {
        Some(self.0.abs())
    }

    fn is_zero(&self) -> bool {
        self.0 == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Equation {
    /// The degenerate equation, source `f(u, v)`.
    U,
    /// The semilinear equation, source `g(u, v)`.
    V,
}

/// Values of the frozen unknown.
#[derive(Debug, Clone)]
pub enum Partner {
    Constant(f64),
    /// One nodal field per step of the window (index 0 = window start).
    Trace(Arc<Vec<Vec<f64>>>),
}

/// One equation of a coupled system with the other unknown frozen.
#[derive(Debug, Clone)]
pub struct FrozenPartner {
    pub spec: ReactionSpec,
    pub equation: Equation,
    pub partner: Partner,
    /// Global step index corresponding to `partner[0]`.
    pub step_offset: usize,
}

impl FrozenPartner {
    pub fn constant(spec: ReactionSpec, equation: Equation, value: f64) -> Self {
        FrozenPartner {
            spec,
            equation,
            partner: Partner::Constant(value),
            step_offset: 0,
        }
    }

    fn partner_value(&self, at: &SourcePoint) -> f64 {
        match &self.partner {
            Partner::Constant(c) => *c,
            Partner::Trace(fields) => {
                let k = at
                    .step
                    .saturating_sub(self.step_offset)
                    .min(fields.len() - 1);
                fields[k][at.node]
            }
        }
    }

    fn partner_range(&self) -> (f64, f64) {
        match &self.partner {
            Partner::Constant(c) => (*c, *c),
            Partner::Trace(fields) => fields
                .iter()
                .flatten()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                }),
        }
    }
}

impl Source for FrozenPartner {
    fn value(&self, at: &SourcePoint, s: f64) -> f64 {
        let p = self.partner_value(at);
        match self.equation {
            Equation::U => self.spec.eval_coupled_clamped(at.x, at.t, s, p).0,
            Equation::V => self.spec.eval_coupled_clamped(at.x, at.t, p, s).1,
        }
    }

    fn derivative(&self, at: &SourcePoint, s: f64) -> f64 {
        let p = self.partner_value(at);
        match (&self.spec.kind, self.equation) {
            (ReactionKind::Biofilm(k), Equation::U) => k.f_u(s, p),
            (ReactionKind::Biofilm(k), Equation::V) => k.g_v(p, s),
            (ReactionKind::None, _) => 0.0,
            _ => {
                let h = 1e-6;
                (self.value(at, s + h) - self.value(at, s - h)) / (2.0 * h)
            }
        }
    }

    fn lipschitz(&self) -> f64 {
        if let Some(l) = self.spec.lipschitz_override {
            return l;
        }
        match (&self.spec.kind, self.equation) {
            (ReactionKind::Biofilm(k), Equation::U) => {
                let (lo, hi) = self.partner_range();
                let (lo, hi) = (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0));
                (k.f_u(0.0, lo)).abs().max(k.f_u(0.0, hi).abs())
            }
            (ReactionKind::Biofilm(k), Equation::V) => {
                let (_, hi) = self.partner_range();
                k.k1 * hi.clamp(0.0, U_CLAMP_MAX) / k.k4
            }
            _ => self.spec.lipschitz_bound(),
        }
    }

    fn sup_abs(&self) -> Option<f64> {
        match (&self.spec.kind, self.equation) {
            (ReactionKind::Biofilm(k), Equation::U) => {
                let (lo, hi) = self.partner_range();
                let (lo, hi) = (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0));
                Some(k.f_u(0.0, lo).abs().max(k.f_u(0.0, hi).abs()))
            }
            (ReactionKind::Biofilm(k), Equation::V) => {
                let (_, hi) = self.partner_range();
                Some(k.k1 * hi.clamp(0.0, U_CLAMP_MAX) * k.monod(1.0))
            }
            (ReactionKind::None, _) => Some(0.0),
            _ => None,
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self.spec.kind, ReactionKind::None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const X: [f64; 2] = [0.0, 0.0];

    #[test]
    fn scalar_presets() {
        assert_eq!(ReactionSpec::none().eval_scalar(X, 0.0, 0.3).unwrap(), 0.0);
        let pf = ReactionSpec::porous_fischer();
        assert_eq!(pf.eval_scalar(X, 0.0, 0.5).unwrap(), 0.25);
        assert_eq!(pf.eval_scalar(X, 0.0, 1.0).unwrap(), 0.0);
        assert!(ReactionSpec::biofilm(BiofilmKinetics::default())
            .eval_scalar(X, 0.0, 0.5)
            .is_err());
    }

    #[test]
    fn biofilm_values() {
        let spec = ReactionSpec::biofilm(BiofilmKinetics::default());
        let (f, g) = spec.eval_coupled(X, 0.0, 0.5, 1.0).unwrap();
        assert_eq!(f, -0.25);
        assert_eq!(g, -0.25);
        let (f, g) = spec.eval_coupled(X, 0.0, 0.0, 0.7).unwrap();
        assert_eq!((f, g), (0.0, 0.0));
        let k = BiofilmKinetics::new(1.0, 0.0, 2.0, 1.0).unwrap();
        let (f, _) = ReactionSpec::biofilm(k)
            .eval_coupled(X, 0.0, 1.0 - 1e-12, 1.0)
            .unwrap();
        assert!((f - 1.0).abs() < 1e-11);
        assert!(spec.eval_coupled(X, 0.0, 1.0, 0.5).is_err());
        assert!(spec.eval_coupled(X, 0.0, 0.5, 1.5).is_err());
    }

    #[test]
    fn lipschitz_constants() {
        assert_eq!(ReactionSpec::porous_fischer().lipschitz_bound(), 1.0);
        assert_eq!(ReactionSpec::none().lipschitz_bound(), 0.0);
        let k = BiofilmKinetics::default();
        assert_eq!(k.partial_sups().g_v, 1.0);
        assert_eq!(k.lipschitz(), 2.0);
        let mut spec = ReactionSpec::biofilm(k);
        spec.lipschitz_override = Some(7.0);
        assert_eq!(spec.lipschitz_bound(), 7.0);
    }

    #[test]
    fn sign_hypotheses() {
        let r = ReactionSpec::biofilm(BiofilmKinetics::default()).check_sign_hypotheses();
        assert!(r.pass);
        assert!(r.g_at_one_nonpositive);

        let bad = CustomReaction::coupled(
            |_, _, _, _| 0.0,
            |_, _, _, v| if v >= 1.0 { 2.0 } else { 0.0 },
        );
        let r = ReactionSpec::custom(bad).check_sign_hypotheses();
        assert!(!r.pass);
        assert_eq!(r.violation(), 1.0);

        assert!(ReactionSpec::none().check_sign_hypotheses().pass);
    }

    #[test]
    fn custom_lipschitz_sampled() {
        let c = CustomReaction::coupled(|_, _, u, v| 3.0 * u - v, |_, _, _, _| 0.0);
        let l = ReactionSpec::custom(c).lipschitz_bound();
        assert!((3.0..=3.3 + 1e-9).contains(&l), "{l}");
    }

    #[test]
    fn frozen_partner_views() {
        let spec = ReactionSpec::biofilm(BiofilmKinetics::default());
        let at = SourcePoint {
            node: 0,
            x: X,
            t: 0.0,
            step: 3,
        };
        let fu = FrozenPartner::constant(spec.clone(), Equation::U, 1.0);
        assert_eq!(fu.value(&at, 0.5), -0.25);
        assert_eq!(fu.derivative(&at, 0.5), -0.5);
        assert_eq!(fu.lipschitz(), 0.5);
        assert_eq!(fu.sup_abs(), Some(0.5));

        let trace = Arc::new(vec![vec![0.0], vec![1.0]]);
        let gv = FrozenPartner {
            spec,
            equation: Equation::V,
            partner: Partner::Trace(trace),
            step_offset: 2,
        };
        // step 3 -> partner index 1 -> u = 1.
        assert!((gv.value(&at, 1.0) + 0.5).abs() < 1e-12);
    }
}
