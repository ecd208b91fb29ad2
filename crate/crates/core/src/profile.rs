//! Initial-data profiles with closed-form derivatives, ranges and sup norms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
enum Family {
    Constant,
    Affine,
    Gaussian,
    Tanh,
    Sine,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    family: Family,
    params: Vec<f64>,
}

/// A scalar profile on the real line.
///
/// Gaussian and Tanh accept an optional fourth parameter, a constant offset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile", into = "RawProfile")]
pub enum ProfileSpec {
    Constant {
        c: f64,
    },
    /// `a + b x`
    Affine {
        a: f64,
        b: f64,
    },
    /// `offset + amp exp(-((x - center)/width)^2)`
    Gaussian {
        amp: f64,
        center: f64,
        width: f64,
        offset: f64,
    },
    /// `offset + amp tanh((x - center)/width)`
    Tanh {
        amp: f64,
        center: f64,
        width: f64,
        offset: f64,
    },
    /// `offset + amp sin(k x)`
    Sine {
        amp: f64,
        k: f64,
        offset: f64,
    },
}

impl TryFrom<RawProfile> for ProfileSpec {
    type Error = String;

    fn try_from(raw: RawProfile) -> Result<Self, String> {
        let p = &raw.params;
        if let Some(bad) = p.iter().find(|v| !v.is_finite()) {
            return Err(format!("non-finite profile parameter {bad}"));
        }
        let arity = |lo: usize, hi: usize| {
            if (lo..=hi).contains(&p.len()) {
                Ok(())
            } else if lo == hi {
                Err(format!("{:?} expects {lo} params, got {}", raw.family, p.len()))
            } else {
                Err(format!("{:?} expects {lo} or {hi} params, got {}", raw.family, p.len()))
            }
        };
        let positive = |w: f64, what: &str| {
            if w > 0.0 {
                Ok(())
            } else {
                Err(format!("{what} must be positive, got {w}"))
            }
        };
        let offset = || p.get(3).copied().unwrap_or(0.0);
        Ok(match raw.family {
            Family::Constant => {
                arity(1, 1)?;
                ProfileSpec::Constant { c: p[0] }
            }
            Family::Affine => {
                arity(2, 2)?;
                ProfileSpec::Affine { a: p[0], b: p[1] }
            }
            Family::Gaussian => {
                arity(3, 4)?;
                positive(p[2], "width")?;
                ProfileSpec::Gaussian {
                    amp: p[0],
                    center: p[1],
                    width: p[2],
                    offset: offset(),
                }
            }
            Family::Tanh => {
                arity(3, 4)?;
                positive(p[2], "width")?;
                ProfileSpec::Tanh {
                    amp: p[0],
                    center: p[1],
                    width: p[2],
                    offset: offset(),
                }
            }
            Family::Sine => {
                arity(3, 3)?;
                positive(p[1], "wavenumber")?;
                ProfileSpec::Sine {
                    amp: p[0],
                    k: p[1],
                    offset: p[2],
                }
            }
        })
    }
}

impl From<ProfileSpec> for RawProfile {
    fn from(p: ProfileSpec) -> Self {
        let (family, params) = match p {
            ProfileSpec::Constant { c } => (Family::Constant, vec![c]),
            ProfileSpec::Affine { a, b } => (Family::Affine, vec![a, b]),
            ProfileSpec::Gaussian {
                amp,
                center,
                width,
                offset,
            } => (Family::Gaussian, vec![amp, center, width, offset]),
            ProfileSpec::Tanh {
                amp,
                center,
                width,
                offset,
            } => (Family::Tanh, vec![amp, center, width, offset]),
            ProfileSpec::Sine { amp, k, offset } => (Family::Sine, vec![amp, k, offset]),
        };
        RawProfile { family, params }
    }
}

/// Infimum and supremum over the real line (either may be infinite).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Range {
    pub inf: f64,
    pub sup: f64,
}

impl Range {
    fn sym(k: f64) -> Self {
        Range {
            inf: -k.abs(),
            sup: k.abs(),
        }
    }

    fn between(a: f64, b: f64) -> Self {
        Range {
            inf: a.min(b),
            sup: a.max(b),
        }
    }

    pub fn sup_abs(&self) -> f64 {
        self.inf.abs().max(self.sup.abs())
    }
}

impl ProfileSpec {
    pub fn constant(c: f64) -> Self {
        ProfileSpec::Constant { c }
    }

    pub fn tanh(amp: f64) -> Self {
        ProfileSpec::Tanh {
            amp,
            center: 0.0,
            width: 1.0,
            offset: 0.0,
        }
    }

    pub fn sine(amp: f64, k: f64, offset: f64) -> Self {
        ProfileSpec::Sine { amp, k, offset }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ProfileSpec::Constant { c } => c,
            ProfileSpec::Affine { a, b } => a + b * x,
            ProfileSpec::Gaussian {
                amp,
                center,
                width,
                offset,
            } => {
                let s = (x - center) / width;
                offset + amp * (-s * s).exp()
            }
            ProfileSpec::Tanh {
                amp,
                center,
                width,
                offset,
            } => offset + amp * ((x - center) / width).tanh(),
            ProfileSpec::Sine { amp, k, offset } => offset + amp * (k * x).sin(),
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match *self {
            ProfileSpec::Constant { .. } => 0.0,
            ProfileSpec::Affine { b, .. } => b,
            ProfileSpec::Gaussian { amp, center, width, .. } => {
                let s = (x - center) / width;
                -2.0 * amp * s / width * (-s * s).exp()
            }
            ProfileSpec::Tanh { amp, center, width, .. } => {
                let c = ((x - center) / width).cosh();
                amp / (width * c * c)
            }
            ProfileSpec::Sine { amp, k, .. } => amp * k * (k * x).cos(),
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match *self {
            ProfileSpec::Constant { .. } | ProfileSpec::Affine { .. } => 0.0,
            ProfileSpec::Gaussian { amp, center, width, .. } => {
                let s = (x - center) / width;
                amp * (4.0 * s * s - 2.0) / (width * width) * (-s * s).exp()
            }
            ProfileSpec::Tanh { amp, center, width, .. } => {
                let s = (x - center) / width;
                let c = s.cosh();
                -2.0 * amp * s.tanh() / (width * width * c * c)
            }
            ProfileSpec::Sine { amp, k, .. } => -amp * k * k * (k * x).sin(),
        }
    }

    pub fn range(&self) -> Range {
        match *self {
            ProfileSpec::Constant { c } => Range { inf: c, sup: c },
            ProfileSpec::Affine { a, b: 0.0 } => Range { inf: a, sup: a },
            ProfileSpec::Affine { .. } => Range {
                inf: f64::NEG_INFINITY,
                sup: f64::INFINITY,
            },
            ProfileSpec::Gaussian { amp, offset, .. } => Range::between(offset, offset + amp),
            ProfileSpec::Tanh { amp, offset, .. } | ProfileSpec::Sine { amp, offset, .. } => Range {
                inf: offset - amp.abs(),
                sup: offset + amp.abs(),
            },
        }
    }

    pub fn d1_range(&self) -> Range {
        match *self {
            ProfileSpec::Constant { .. } => Range { inf: 0.0, sup: 0.0 },
            ProfileSpec::Affine { b, .. } => Range { inf: b, sup: b },
            ProfileSpec::Gaussian { amp, width, .. } => Range::sym(amp * (2.0f64).sqrt() * (-0.5f64).exp() / width),
            ProfileSpec::Tanh { amp, width, .. } => Range::between(0.0, amp / width),
            ProfileSpec::Sine { amp, k, .. } => Range::sym(amp * k),
        }
    }

    pub fn sup_abs(&self) -> f64 {
        self.range().sup_abs()
    }

    pub fn sup_abs_d1(&self) -> f64 {
        self.d1_range().sup_abs()
    }

    pub fn sup_abs_d2(&self) -> f64 {
        match *self {
            ProfileSpec::Constant { .. } | ProfileSpec::Affine { .. } => 0.0,
            ProfileSpec::Gaussian { amp, width, .. } => 2.0 * amp.abs() / (width * width),
            ProfileSpec::Tanh { amp, width, .. } => 4.0 * amp.abs() / (3.0 * (3.0f64).sqrt() * width * width),
            ProfileSpec::Sine { amp, k, .. } => amp.abs() * k * k,
        }
    }

    /// Interval outside of which the profile is constant to round-off, or
    /// one period for `Sine`. `None` when the profile has no feature.
    fn feature_window(&self) -> Option<(f64, f64)> {
        match *self {
            ProfileSpec::Constant { .. } | ProfileSpec::Affine { .. } => None,
            ProfileSpec::Gaussian { center, width, .. } | ProfileSpec::Tanh { center, width, .. } => {
                Some((center - 12.0 * width, center + 12.0 * width))
            }
            ProfileSpec::Sine { k, .. } => Some((-PI / k, PI / k)),
        }
    }

    fn period(&self) -> Option<f64> {
        match *self {
            ProfileSpec::Sine { k, .. } => Some(2.0 * PI / k),
            _ => None,
        }
    }

    /// Unbounded linear growth, the only way a family escapes every window.
    fn slope(&self) -> f64 {
        match *self {
            ProfileSpec::Affine { b, .. } => b,
            _ => 0.0,
        }
    }
}

/// Extreme values of a combined expression and where they occur.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Extrema {
    pub min: f64,
    pub argmin: f64,
    pub max: f64,
    pub argmax: f64,
}

/// Points in the coarse scan of [`combined_extrema`].
pub const SCAN_POINTS: usize = 4096;

const ASYMPTOTE: f64 = 1e30;

/// Window covering every feature of `profiles`, padded by one period on each
/// side when a periodic profile is present.
pub fn joint_window(profiles: &[ProfileSpec]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut pad: f64 = 0.0;
    for p in profiles {
        if let Some((a, b)) = p.feature_window() {
            lo = lo.min(a);
            hi = hi.max(b);
        }
        if let Some(per) = p.period() {
            pad = pad.max(per);
        }
    }
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    (lo - pad, hi + pad)
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

/// Min and max over the real line of `expr(x)`, where `expr` is built from
/// the given profiles. The slopes of any affine profiles must be passed via
/// `slope`, the net coefficient of `x` in `expr`; a nonzero slope makes both
/// extrema infinite.
pub fn combined_extrema(profiles: &[ProfileSpec], slope: f64, expr: impl Fn(f64) -> f64) -> Extrema {
    if slope != 0.0 {
        return Extrema {
            min: f64::NEG_INFINITY,
            argmin: f64::NAN,
            max: f64::INFINITY,
            argmax: f64::NAN,
        };
    }
    let (lo, hi) = joint_window(profiles);
    let h = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let xs = (0..SCAN_POINTS).map(|i| lo + h * i as f64);
    let (mut imin, mut imax) = (lo, lo);
    let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in xs {
        let v = expr(x);
        if v < vmin {
            vmin = v;
            imin = x;
        }
        if v > vmax {
            vmax = v;
            imax = x;
        }
    }
    let xmin = golden_min(&expr, imin - h, imin + h);
    let xmax = golden_min(&|x| -expr(x), imax - h, imax + h);
    let (min, argmin) = if expr(xmin) < vmin {
        (expr(xmin), xmin)
    } else {
        (vmin, imin)
    };
    let (max, argmax) = if expr(xmax) > vmax {
        (expr(xmax), xmax)
    } else {
        (vmax, imax)
    };
    let mut ext = Extrema {
        min,
        argmin,
        max,
        argmax,
    };
    // Tails of decaying profiles: the limit can be an infimum that no finite x attains.
    if profiles.iter().all(|p| p.period().is_none()) {
        for x in [f64::NEG_INFINITY, f64::INFINITY] {
            let v = expr(x.signum() * ASYMPTOTE);
            if v < ext.min {
                (ext.min, ext.argmin) = (v, x);
            }
            if v > ext.max {
                (ext.max, ext.argmax) = (v, x);
            }
        }
    }
    ext
}

/// Extrema of `e0 = u0' + rho0`.
pub fn e0_extrema(rho0: &ProfileSpec, u0: &ProfileSpec) -> Extrema {
    combined_extrema(&[*rho0, *u0], rho0.slope(), |x| u0.d1(x) + rho0.value(x))
}

/// Extrema of `rho0'`.
pub fn rho0x_extrema(rho0: &ProfileSpec) -> Extrema {
    combined_extrema(&[*rho0], 0.0, |x| rho0.d1(x))
}

/// Extrema of `u0'' + rho0'`.
pub fn e0x_extrema(rho0: &ProfileSpec, u0: &ProfileSpec) -> Extrema {
    combined_extrema(&[*rho0, *u0], 0.0, |x| u0.d2(x) + rho0.d1(x))
}

/// Extrema of `|g(u0(x))|` style expressions over the real line.
pub fn composed_extrema(u0: &ProfileSpec, g: impl Fn(f64) -> f64) -> Extrema {
    combined_extrema(&[*u0], 0.0, |x| g(u0.value(x)))
}
