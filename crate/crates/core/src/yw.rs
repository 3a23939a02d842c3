//! Yamada–Watanabe test functions.
//!
//! For a modulus `ρ` the levels `1 = a_0 > a_1 > … ` solve
//! `∫_{a_k}^{a_{k-1}} ρ(z)^{-2} dz = k`. Writing `Φ(x) = ∫_x^1 ρ^{-2}`, this is
//! `Φ(a_k) = k(k+1)/2`. Inside `(a_k, a_{k-1})` the clock
//! `τ(x) = (Φ(x) - Φ(a_{k-1})) / k` runs from 0 to 1, and
//!
//! ```text
//! ψ_k(x) = (4 / 3k) · ρ(x)^{-2} · m(τ(x))
//! ```
//!
//! where `m` rises by a quintic smoothstep on `[0, 1/4]`, equals 1 on
//! `[1/4, 3/4]` and falls back on `[3/4, 1]`. Since `∫_0^1 m = 3/4` the
//! normalisation `∫ψ_k = 1` is exact and `ψ_k ρ² k ≤ 4/3`. Levels are stored
//! as logarithms because they underflow quickly (`a_k = e^{-k(k+1)/2}` for
//! `ρ = √z`).

use crate::error::{Error, Result};
use crate::levy_measure::LevyMeasure;
use crate::quadrature::{self, Tolerance};
use crate::rng::{uniform, Purpose, StreamKey};
use crate::sde::{JumpCoefficient, SdeSystem};
use serde::{Deserialize, Serialize};

/// A modulus of continuity `ρ` on `[0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Modulus {
    /// `scale · z^exponent`.
    Power { exponent: f64, scale: f64 },
    /// `scale · z·ln(1/z)` for `z ≤ 1/e`, constant `scale/e` beyond.
    LogOsgood { scale: f64 },
    /// `slope · z`.
    Linear { slope: f64 },
    /// Piecewise linear through `(0, 0)` and the knots, constant beyond.
    Tabulated { knots: Vec<f64>, values: Vec<f64> },
}

impl Modulus {
    pub fn power(exponent: f64) -> Self {
        Modulus::Power { exponent, scale: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Modulus::Power { exponent, scale } => *exponent > 0.0 && *scale > 0.0,
            Modulus::LogOsgood { scale } => *scale > 0.0,
            Modulus::Linear { slope } => *slope > 0.0,
            Modulus::Tabulated { knots, values } => {
                knots.len() >= 2
                    && knots.len() == values.len()
                    && knots[0] > 0.0
                    && knots.windows(2).all(|w| w[1] > w[0])
                    && values[0] > 0.0
                    && values.windows(2).all(|w| w[1] >= w[0])
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid modulus {self:?}")))
        }
    }

    /// Parses `power:0.5`, `power:0.5:2`, `linear:1`, `log-osgood:1`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| Error::Config(format!("modulus {text:?} is missing a parameter")))?
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("modulus {text:?}: {e}")))
        };
        let m = match parts[0] {
            "power" => Modulus::Power { exponent: num(1)?, scale: if parts.len() > 2 { num(2)? } else { 1.0 } },
            "linear" => Modulus::Linear { slope: if parts.len() > 1 { num(1)? } else { 1.0 } },
            "log-osgood" => Modulus::LogOsgood { scale: if parts.len() > 1 { num(1)? } else { 1.0 } },
            other => return Err(Error::Config(format!("unknown modulus family {other:?}"))),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn eval(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        match self {
            Modulus::Power { exponent, scale } => scale * z.powf(*exponent),
            Modulus::LogOsgood { scale } => {
                if z <= (-1f64).exp() {
                    scale * z * (-z.ln())
                } else {
                    scale * (-1f64).exp()
                }
            }
            Modulus::Linear { slope } => slope * z,
            Modulus::Tabulated { knots, values } => {
                if z <= knots[0] {
                    return values[0] * z / knots[0];
                }
                if z >= knots[knots.len() - 1] {
                    return values[values.len() - 1];
                }
                let i = knots.partition_point(|&k| k <= z) - 1;
                let w = (z - knots[i]) / (knots[i + 1] - knots[i]);
                values[i] * (1.0 - w) + values[i + 1] * w
            }
        }
    }

    /// `ln ρ(e^y)`, usable far below the double-precision range of `z`.
    pub fn ln_eval(&self, y: f64) -> f64 {
        match self {
            Modulus::Power { exponent, scale } => scale.ln() + exponent * y,
            Modulus::Linear { slope } => slope.ln() + y,
            Modulus::LogOsgood { scale } => {
                if y <= -1.0 {
                    scale.ln() + y + (-y).ln()
                } else {
                    scale.ln() - 1.0
                }
            }
            Modulus::Tabulated { .. } => self.eval(y.exp()).ln(),
        }
    }

    /// Small-`z` behaviour `ρ(z) ≈ C z^γ`, when the family is a pure power
    /// near 0.
    fn power_exponent(&self) -> Option<f64> {
        match self {
            Modulus::Power { exponent, .. } => Some(*exponent),
            Modulus::Linear { .. } => Some(1.0),
            _ => None,
        }
    }

    /// Concavity as a family property; tabulated moduli are checked by
    /// slopes.
    pub fn is_concave(&self) -> bool {
        match self {
            Modulus::Power { exponent, .. } => *exponent <= 1.0,
            Modulus::LogOsgood { .. } | Modulus::Linear { .. } => true,
            Modulus::Tabulated { knots, values } => {
                let mut slopes = vec![values[0] / knots[0]];
                slopes.extend(knots.windows(2).zip(values.windows(2)).map(|(k, v)| (v[1] - v[0]) / (k[1] - k[0])));
                slopes.push(0.0);
                slopes.windows(2).all(|s| s[1] <= s[0] * (1.0 + 1e-12) + 1e-15)
            }
        }
    }

    /// `Φ(e^y) = ∫_{e^y}^1 ρ(z)^{-2} dz` in closed form where available.
    fn clock_closed(&self, y: f64) -> Option<f64> {
        let (g, s) = match self {
            Modulus::Power { exponent, scale } => (*exponent, *scale),
            Modulus::Linear { slope } => (1.0, *slope),
            _ => return None,
        };
        let e = 1.0 - 2.0 * g;
        let inv = 1.0 / (s * s);
        Some(if e == 0.0 { -y * inv } else { -inv * (e * y).exp_m1() / e })
    }

    /// `∫_{y0}^{y1} ρ(e^t)^{-2} e^t dt`, the clock increment between two
    /// log-abscissae.
    fn clock_increment(&self, y0: f64, y1: f64) -> Result<f64> {
        if let (Some(a), Some(b)) = (self.clock_closed(y0), self.clock_closed(y1)) {
            return Ok(a - b);
        }
        let f = |t: f64| (t - 2.0 * self.ln_eval(t)).exp();
        Ok(quadrature::integrate(f, y0, y1, Tolerance::new(1e-15, 1e-13))?.value)
    }
}

/// Which Osgood-type integral to test for divergence at `0+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OsgoodKind {
    /// `∫ ρ^{-1}`.
    RIntegral,
    /// `∫ ρ^{-2}`.
    RhoSquared,
    /// `∫ ρ^{-α/(α-1)}`, the stable-noise criterion.
    StableCritical { alpha: f64 },
}

impl OsgoodKind {
    fn power(&self) -> f64 {
        match self {
            OsgoodKind::RIntegral => 1.0,
            OsgoodKind::RhoSquared => 2.0,
            OsgoodKind::StableCritical { alpha } => alpha / (alpha - 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Divergence {
    Diverges,
    Converges,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsgoodVerdict {
    pub verdict: Divergence,
    /// `γ·κ` for power-type moduli; divergence iff it is at least 1.
    pub exponent_product: Option<f64>,
    pub detail: String,
}

/// Decides whether `∫_{0+} ρ(z)^{-κ} dz = ∞`.
pub fn osgood_diverges(modulus: &Modulus, kind: OsgoodKind) -> OsgoodVerdict {
    let kappa = kind.power();
    if let Some(g) = modulus.power_exponent() {
        let prod = g * kappa;
        let verdict = if prod >= 1.0 { Divergence::Diverges } else { Divergence::Converges };
        return OsgoodVerdict {
            verdict,
            exponent_product: Some(prod),
            detail: format!("ρ ~ z^{g}: ∫ z^{{-{prod}}} dz {}", if prod >= 1.0 { "diverges" } else { "converges" }),
        };
    }
    if let Modulus::LogOsgood { .. } = modulus {
        let verdict = if kappa >= 1.0 { Divergence::Diverges } else { Divergence::Converges };
        return OsgoodVerdict {
            verdict,
            exponent_product: Some(kappa),
            detail: format!("ρ ~ z·ln(1/z): ∫ (z ln(1/z))^{{-{kappa}}} dz {verdict:?}"),
        };
    }
    numeric_osgood(|z| modulus.eval(z), kappa)
}

/// Dyadic-block test: block integrals `I_j = ∫_{2^{-j-1}}^{2^{-j}} ρ^{-κ}` that
/// stay bounded below indicate divergence; geometric decay indicates
/// convergence.
fn numeric_osgood<F: Fn(f64) -> f64>(rho: F, kappa: f64) -> OsgoodVerdict {
    let mut blocks = Vec::new();
    for j in 0..60 {
        let (a, b) = (0.5f64.powi(j + 1), 0.5f64.powi(j));
        let est = quadrature::integrate_log(|z| rho(z).powf(-kappa), a, b, Tolerance::default());
        match est {
            Ok(e) if e.value.is_finite() => blocks.push(e.value),
            _ => break,
        }
    }
    let n = blocks.len();
    if n < 20 {
        return OsgoodVerdict {
            verdict: Divergence::Inconclusive,
            exponent_product: None,
            detail: format!("only {n} dyadic blocks could be integrated"),
        };
    }
    let tail = &blocks[n - 10..];
    let ratios: Vec<f64> = tail.windows(2).map(|w| w[1] / w[0]).collect();
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let verdict = if min_ratio >= 1.0 - 1e-6 {
        Divergence::Diverges
    } else if max_ratio < 0.99 {
        Divergence::Converges
    } else {
        Divergence::Inconclusive
    };
    OsgoodVerdict {
        verdict,
        exponent_product: None,
        detail: format!("dyadic block ratios in [{min_ratio:.6}, {max_ratio:.6}] over the last 10 blocks"),
    }
}

/// Quintic smoothstep `6u⁵ - 15u⁴ + 10u³`.
fn smoothstep(u: f64) -> f64 {
    u * u * u * (u * (6.0 * u - 15.0) + 10.0)
}

/// `∫_0^u smoothstep`.
fn smoothstep_integral(u: f64) -> f64 {
    u * u * u * u * (u * (u - 3.0) + 2.5)
}

/// Bump `m(τ)` on `[0, 1]`.
fn bump(tau: f64) -> f64 {
    if !(0.0..=1.0).contains(&tau) {
        0.0
    } else if tau < 0.25 {
        smoothstep(4.0 * tau)
    } else if tau <= 0.75 {
        1.0
    } else {
        smoothstep(4.0 * (1.0 - tau))
    }
}

/// `1 - (4/3)∫_0^τ m`, the derivative `φ_k'` as a function of the clock.
fn dphi_of_clock(tau: f64) -> f64 {
    if tau <= 0.0 {
        1.0
    } else if tau < 0.25 {
        1.0 - smoothstep_integral(4.0 * tau) / 3.0
    } else if tau <= 0.75 {
        7.0 / 6.0 - 4.0 * tau / 3.0
    } else if tau < 1.0 {
        smoothstep_integral(4.0 * (1.0 - tau)) / 3.0
    } else {
        0.0
    }
}

/// Levels and test functions for one modulus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct YwSequence {
    pub modulus: Modulus,
    /// `ln a_k` for `k = 0..=K`.
    pub ln_levels: Vec<f64>,
    /// `a_{k-1} - ∫_{a_k}^{a_{k-1}} φ_k'`, so `φ_k(z) = |z| - offset_k` beyond the support.
    offsets: Vec<f64>,
}

/// Normalisation constant `c_k = 4 / (3k)`.
pub fn psi_constant(k: usize) -> f64 {
    4.0 / (3.0 * k as f64)
}

impl YwSequence {
    /// Computes `a_0 … a_K` by bisection in `ln a` to relative tolerance 1e-12.
    pub fn new(modulus: Modulus, count: usize) -> Result<Self> {
        modulus.validate()?;
        let mut ln_levels = vec![0.0];
        for k in 1..=count {
            let prev = ln_levels[k - 1];
            let target = k as f64;
            let inc = |y: f64| modulus.clock_increment(y, prev);
            let mut step = 1.0;
            let mut lo = prev - step;
            loop {
                if inc(lo)? >= target {
                    break;
                }
                step *= 2.0;
                lo = prev - step;
                if lo < -1e7 || (modulus.clock_closed(lo).is_none() && lo < -700.0) {
                    return Err(Error::LevelExhaustion { k });
                }
            }
            let mut hi = prev;
            while hi - lo > 1e-13 * (1.0 + lo.abs()) {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if inc(mid)? >= target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let y = 0.5 * (lo + hi);
            if !(y < prev) {
                return Err(Error::LevelExhaustion { k });
            }
            ln_levels.push(y);
        }
        let mut seq = YwSequence { modulus, ln_levels, offsets: vec![0.0] };
        for k in 1..=count {
            let (lo, hi) = (seq.ln_levels[k], seq.ln_levels[k - 1]);
            let integral = if hi - lo > 0.0 {
                quadrature::integrate(
                    |y| seq.dphi_at_log(k, y) * y.exp(),
                    lo,
                    hi,
                    Tolerance::new(1e-15, 1e-12),
                )?
                .value
            } else {
                0.0
            };
            seq.offsets.push(hi.exp() - integral);
        }
        Ok(seq)
    }

    pub fn count(&self) -> usize {
        self.ln_levels.len() - 1
    }

    pub fn level(&self, k: usize) -> f64 {
        self.ln_levels[k].exp()
    }

    fn check_k(&self, k: usize) {
        assert!(k >= 1 && k <= self.count(), "level index {k} outside 1..={}", self.count());
    }

    /// Clock `τ` at `x = e^y` for level `k`, clamped to `[0, 1]`.
    fn clock(&self, k: usize, y: f64) -> f64 {
        let prev = self.ln_levels[k - 1];
        if y >= prev {
            return 0.0;
        }
        if y <= self.ln_levels[k] {
            return 1.0;
        }
        let inc = self.modulus.clock_increment(y, prev).unwrap_or(f64::NAN);
        (inc / k as f64).clamp(0.0, 1.0)
    }

    /// `ψ_k(e^y)·e^y`, the density of `ψ_k` in the variable `y = ln x`.
    pub fn psi_log_density(&self, k: usize, y: f64) -> f64 {
        self.check_k(k);
        if y <= self.ln_levels[k] || y >= self.ln_levels[k - 1] {
            return 0.0;
        }
        psi_constant(k) * bump(self.clock(k, y)) * (y - 2.0 * self.modulus.ln_eval(y)).exp()
    }

    /// `k·ψ_k(x)·ρ(x)²` at `x = e^y`; at most 4/3 by construction.
    pub fn psi_cap_ratio(&self, k: usize, y: f64) -> f64 {
        self.check_k(k);
        if y <= self.ln_levels[k] || y >= self.ln_levels[k - 1] {
            return 0.0;
        }
        k as f64 * psi_constant(k) * bump(self.clock(k, y))
    }

    /// `ψ_k(x)`; zero outside `(a_k, a_{k-1})`.
    pub fn psi(&self, k: usize, x: f64) -> f64 {
        self.check_k(k);
        if x <= 0.0 {
            return 0.0;
        }
        let y = x.ln();
        if y <= self.ln_levels[k] || y >= self.ln_levels[k - 1] {
            return 0.0;
        }
        let r = self.modulus.eval(x);
        psi_constant(k) * bump(self.clock(k, y)) / (r * r)
    }

    fn dphi_at_log(&self, k: usize, y: f64) -> f64 {
        dphi_of_clock(self.clock(k, y))
    }

    /// `φ_k'(z) = sign(z)·∫_0^{|z|} ψ_k`.
    pub fn dphi(&self, k: usize, z: f64) -> f64 {
        self.check_k(k);
        if z == 0.0 {
            return 0.0;
        }
        z.signum() * self.dphi_at_log(k, z.abs().ln())
    }

    /// `φ_k''(z) = ψ_k(|z|)`.
    pub fn ddphi(&self, k: usize, z: f64) -> f64 {
        self.psi(k, z.abs())
    }

    /// `φ_k(z) = ∫_0^{|z|} φ_k'`.
    pub fn phi(&self, k: usize, z: f64) -> f64 {
        self.check_k(k);
        let x = z.abs();
        let (lo, hi) = (self.level(k), self.level(k - 1));
        if x <= lo {
            0.0
        } else if x >= hi {
            x - self.offsets[k]
        } else {
            quadrature::integrate(|y| self.dphi_at_log(k, y) * y.exp(), lo.ln(), x.ln(), Tolerance::new(1e-16, 1e-12))
                .map(|e| e.value)
                .unwrap_or(f64::NAN)
        }
    }

    /// `|z| - φ_k(z)` for `|z| ≥ a_{k-1}`.
    pub fn linear_offset(&self, k: usize) -> f64 {
        self.offsets[k]
    }

    /// `D_w φ_k(v) = φ_k(v+w) - φ_k(v) - φ_k'(v)·w` by direct evaluation.
    pub fn d_phi_eval(&self, k: usize, v: f64, w: f64) -> f64 {
        self.phi(k, v + w) - self.phi(k, v) - self.dphi(k, v) * w
    }

    /// `D_w φ_k(v)` through the remainder form `∫_{[v,v+w]} ψ_k(|x|)·|v+w-x| dx`,
    /// which has no cancellation.
    pub fn d_phi(&self, k: usize, v: f64, w: f64) -> Result<f64> {
        self.check_k(k);
        let (lo, hi) = if w >= 0.0 { (v, v + w) } else { (v + w, v) };
        let end = v + w;
        let (a, b) = (self.level(k), self.level(k - 1));
        let mut total = 0.0;
        for (s0, s1) in [(-b, -a), (a, b)] {
            let l = lo.max(s0);
            let u = hi.min(s1);
            if u > l {
                let f = |x: f64| self.psi(k, x.abs()) * (end - x).abs();
                total += quadrature::integrate(f, l, u, Tolerance::new(1e-15, 1e-10))?.value;
            }
        }
        Ok(total)
    }
}

/// The interval `((1-2p)/(2-α), p/(α-1))` of admissible β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaWindow {
    pub lower: f64,
    pub upper: f64,
    pub nonempty: bool,
}

/// Nonemptiness is decided by the sign of `p·α - (α - 1)` computed with a
/// fused multiply-add, which is exact for the given floats.
pub fn beta_window(p: f64, alpha: f64) -> BetaWindow {
    let lower = (1.0 - 2.0 * p) / (2.0 - alpha);
    let upper = p / (alpha - 1.0);
    let nonempty = p.mul_add(alpha, 1.0 - alpha) > 0.0;
    BetaWindow { lower, upper, nonempty }
}

/// Critical exponent `1 - 1/α`.
pub fn frontier(alpha: f64) -> f64 {
    1.0 - 1.0 / alpha
}

/// `v_k = k^{1/(2(2-α))}`, so `v_k → ∞` and `v_k^{2-α}/k = k^{-1/2} → 0`.
pub fn stable_vk(alpha: f64, k: u64) -> f64 {
    (k as f64).powf(0.5 / (2.0 - alpha))
}

/// Right-hand side of the stable-noise bound `k^{-1}(2-α)^{-1}v^{2-α} + (α-1)^{-1}v^{1-α}`.
pub fn stable_bound(alpha: f64, k: u64, v: f64) -> f64 {
    v.powf(2.0 - alpha) / ((2.0 - alpha) * k as f64) + v.powf(1.0 - alpha) / (alpha - 1.0)
}

/// Inputs to the small-jump bound with `g0(x, z) = h(x)·z` and envelope
/// `f(z) = envelope·z`.
#[derive(Debug, Clone, Copy)]
pub struct JumpTermInput {
    pub x: f64,
    pub y: f64,
    /// `h(x) - h(y)`, the slope of `l0(x, y, z)` in `z`.
    pub slope_diff: f64,
    pub h: f64,
    pub p: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpTermBound {
    pub lhs: f64,
    pub rhs: f64,
}

/// Left side `∫ D_{l0} φ_k(x-y) ν0(dz)` and right side of the small-jump
/// bound for level `k`.
pub fn jump_term_bound(seq: &YwSequence, k: usize, input: &JumpTermInput, nu0: &LevyMeasure) -> Result<JumpTermBound> {
    let v = input.x - input.y;
    let d = v.abs();
    let s = input.slope_diff;
    let (a, b) = (seq.level(k), seq.level(k - 1));
    let lhs = if s == 0.0 { 0.0 } else { lhs_integral(seq, k, v, s, nu0, a, b)? };
    let rhs = if d <= b && d > 0.0 {
        let r = seq.modulus.eval(d);
        let c = input.envelope;
        let hc = input.h / c;
        r.powf(4.0 * input.p - 2.0) / k as f64 * c * c * nu0.truncated_second_moment(hc)?
            + r.powf(2.0 * input.p) * c * nu0.tail_first_moment(hc)?
    } else {
        0.0
    };
    Ok(JumpTermBound { lhs, rhs })
}

fn lhs_integral(seq: &YwSequence, k: usize, v: f64, s: f64, nu0: &LevyMeasure, a: f64, b: f64) -> Result<f64> {
    let integrand = |z: f64| {
        let dens = nu0.density(z).unwrap_or(0.0);
        if dens == 0.0 {
            return 0.0;
        }
        seq.d_phi(k, v, s * z).map(|dv| dv * dens).unwrap_or(f64::NAN)
    };
    // Breakpoints where the step v + s·z enters and leaves the support.
    let mut cuts: Vec<f64> = [a - v.abs(), b - v.abs(), a + v.abs(), b + v.abs(), v.abs() - a, v.abs() - b]
        .iter()
        .map(|c| c / s.abs())
        .filter(|c| *c > 0.0 && c.is_finite())
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    if cuts.is_empty() {
        cuts.push(b / s.abs());
    }
    let tol = Tolerance::new(1e-12, 1e-9);
    if let crate::levy_measure::MeasureShape::PointMass { location, mass } = nu0.shape {
        return Ok(mass * seq.d_phi(k, v, s * location)?);
    }
    let mut total = quadrature::integrate_lower(integrand, cuts[0], tol)?.value;
    for w in cuts.windows(2) {
        total += quadrature::integrate_log(integrand, w[0], w[1], tol)?.value;
    }
    total += quadrature::integrate_upper(integrand, *cuts.last().unwrap(), tol)?.value;
    Ok(total)
}

/// Outcome of the property checks (i)–(iv) for one sequence and system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub k_max: usize,
    pub box_bound: f64,
    pub samples: usize,
    /// (i): `φ_k ≤ φ_{k+1} ≤ |z|` on the test grid.
    pub monotone: bool,
    /// First `(z, k)` breaking (i).
    pub monotone_witness: Option<(f64, usize)>,
    /// (ii): `0 ≤ sign(z)φ_k'(z) ≤ 1` and `φ_k'' ≥ 0` on the test grid.
    pub derivatives: bool,
    pub derivative_witness: Option<(f64, usize)>,
    /// (iii): `sup φ_k''(x-y)(σ(x)-σ(y))²` per level.
    pub diffusion_sup: Vec<f64>,
    pub diffusion_capped: bool,
    /// `(x, y, k)` exceeding `2/k`.
    pub diffusion_witness: Option<(f64, f64, usize)>,
    /// (iv): `sup ∫ D_{l0}φ_k(x-y) ν0(dz)` per level; `None` unless `g0`
    /// is zero or multiplicative.
    pub jump_sup: Option<Vec<f64>>,
    /// Last entry of `jump_sup` below the first, or all within `1e-12`.
    pub jump_decreasing: Option<bool>,
    pub passed: bool,
}

/// Seed of the witness stream used by [`verify_properties`].
pub const PROPERTY_SEED: u64 = 0x5eed_3101;

/// Checks properties (i)–(iv) of `seq` against `system` on `[-m, m]`.
///
/// Witness pairs for level `k` have `|x - y|` log-uniform on the support
/// `(a_k, a_{k-1})` and `|x|` log-uniform between `|x - y|` and `m`, so that
/// the difference stays representable even when `a_k` is tiny.
pub fn verify_properties(
    seq: &YwSequence,
    system: &SdeSystem,
    nu0: Option<&LevyMeasure>,
    m: f64,
    samples: usize,
) -> Result<PropertyReport> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::domain(format!("box bound must be positive and finite, got {m}")));
    }
    let kk = seq.count();
    if kk == 0 {
        return Err(Error::domain("the sequence has no levels"));
    }
    let tol = 1e-10;

    let grid: Vec<f64> = {
        let lo = seq.level(kk).max(1e-300).log10();
        let hi = m.log10() + 0.3;
        let n = 60;
        (0..=n).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / n as f64)).collect()
    };
    let mut monotone_witness = None;
    let mut derivative_witness = None;
    for &x in &grid {
        for z in [x, -x] {
            let mut prev = 0.0;
            for k in 1..=kk {
                let phi = seq.phi(k, z);
                if monotone_witness.is_none() && (phi < prev - tol * (1.0 + x) || phi > x + tol * (1.0 + x) || phi.is_nan()) {
                    monotone_witness = Some((z, k));
                }
                prev = phi;
                let d = seq.dphi(k, z) * z.signum();
                if derivative_witness.is_none() && (!(-tol..=1.0 + tol).contains(&d) || seq.ddphi(k, z) < 0.0) {
                    derivative_witness = Some((z, k));
                }
            }
        }
    }

    let mut rng = StreamKey::new(PROPERTY_SEED, 0).stream(Purpose::Sampling);
    let draw_pair = |k: usize, rng: &mut rand_chacha::ChaCha20Rng| {
        let (la, lb) = (seq.ln_levels[k], seq.ln_levels[k - 1].min((2.0 * m).ln()));
        let d = (la + (lb - la) * uniform(rng)).exp();
        let (ld, lm) = (d.ln(), m.ln());
        let mut x = if lm > ld { (ld + (lm - ld) * uniform(rng)).exp() } else { m };
        if uniform(rng) < 0.5 {
            x = -x;
        }
        let y = if (x - d).abs() <= m { x - d } else { x + d };
        (x, y)
    };

    let mut diffusion_sup = vec![0.0; kk];
    let mut diffusion_witness = None;
    for k in 1..=kk {
        let cap = 2.0 / k as f64;
        for _ in 0..samples {
            let (x, y) = draw_pair(k, &mut rng);
            let ds = system.sigma.eval(x) - system.sigma.eval(y);
            let v = seq.ddphi(k, x - y) * ds * ds;
            if v > diffusion_sup[k - 1] {
                diffusion_sup[k - 1] = v;
            }
            if diffusion_witness.is_none() && !(v <= cap * (1.0 + 1e-9)) {
                diffusion_witness = Some((x, y, k));
            }
        }
    }

    let slope: Option<Box<dyn Fn(f64, f64) -> f64>> = match &system.g0 {
        JumpCoefficient::Zero => Some(Box::new(|_, _| 0.0)),
        JumpCoefficient::Multiplicative { h } => Some(Box::new(move |x, y| h.eval(x) - h.eval(y))),
        JumpCoefficient::Custom(_) => None,
    };
    let jump_sup = match (slope, nu0) {
        (Some(slope), Some(nu0)) => {
            let per_level = samples.clamp(1, 8);
            let mut sups = vec![0.0; kk];
            let mut jump_rng = StreamKey::new(PROPERTY_SEED, 1).stream(Purpose::Sampling);
            for k in 1..=kk {
                for _ in 0..per_level {
                    let (x, y) = draw_pair(k, &mut jump_rng);
                    let s = slope(x, y);
                    let v = if s == 0.0 { 0.0 } else { lhs_integral(seq, k, x - y, s, nu0, seq.level(k), seq.level(k - 1))? };
                    sups[k - 1] = f64::max(sups[k - 1], v);
                }
            }
            Some(sups)
        }
        (Some(_), None) => Some(vec![0.0; kk]),
        (None, _) => None,
    };
    let jump_decreasing = jump_sup.as_ref().map(|v| {
        let (first, last) = (v[0], v[kk - 1]);
        last < first || v.iter().all(|x| x.abs() <= 1e-12)
    });
    let passed = monotone_witness.is_none() && derivative_witness.is_none() && diffusion_witness.is_none() && jump_decreasing != Some(false);
    Ok(PropertyReport {
        k_max: kk,
        box_bound: m,
        samples,
        monotone: monotone_witness.is_none(),
        monotone_witness,
        derivatives: derivative_witness.is_none(),
        derivative_witness,
        diffusion_capped: diffusion_witness.is_none(),
        diffusion_sup,
        diffusion_witness,
        jump_sup,
        jump_decreasing,
        passed,
    })
}
