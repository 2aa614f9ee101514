//! Periodic functions on `[0, 1]`, uniform periodic grids and the basic
//! quadrature and differencing rules built on them.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Index;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::CyclicTridiagonal;
use crate::quadrature;

const TWO_PI: f64 = 2.0 * PI;

/// A smooth 1-periodic function with analytic first and second derivatives.
///
/// Textual form (used in configs):
///
/// * `const:c`
/// * `trig:a0,a1,b1,a2,b2,...` for `a0 + sum_k a_k cos(2 pi k r) + b_k sin(2 pi k r)`
/// * `exptrig:a,b` for `a * exp(b cos(2 pi r))`
/// * `samples:y0,y1,...` for the periodic cubic spline through equispaced samples
///
/// Terms can be added with `+`, e.g. `const:1+trig:0,0.1`.
#[derive(Debug, Clone, PartialEq)]
pub enum PeriodicFn {
    Const(f64),
    /// `cos[k]` and `sin[k]` multiply the k-th harmonic; `sin[0]` is ignored.
    Trig { cos: Vec<f64>, sin: Vec<f64> },
    ExpTrig { amplitude: f64, rate: f64 },
    Sampled(PeriodicSpline),
    Sum(Vec<PeriodicFn>),
}

impl PeriodicFn {
    /// Truncated Fourier series from cosine and sine coefficients.
    pub fn trig(cos: Vec<f64>, mut sin: Vec<f64>) -> Self {
        let len = cos.len().max(sin.len()).max(1);
        let mut cos = cos;
        cos.resize(len, 0.0);
        sin.resize(len, 0.0);
        sin[0] = 0.0;
        PeriodicFn::Trig { cos, sin }
    }

    /// Value and first two derivatives at `r` (any real; wrapped to `[0, 1)`).
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        match self {
            PeriodicFn::Const(c) => (*c, 0.0, 0.0),
            PeriodicFn::Trig { cos, sin } => {
                let x = r.rem_euclid(1.0);
                let (mut v, mut d1, mut d2) = (cos[0], 0.0, 0.0);
                for k in 1..cos.len() {
                    let w = TWO_PI * k as f64;
                    let (s, c) = (w * x).sin_cos();
                    v += cos[k] * c + sin[k] * s;
                    d1 += w * (sin[k] * c - cos[k] * s);
                    d2 -= w * w * (cos[k] * c + sin[k] * s);
                }
                (v, d1, d2)
            }
            PeriodicFn::ExpTrig { amplitude, rate } => {
                let x = r.rem_euclid(1.0);
                let (s, c) = (TWO_PI * x).sin_cos();
                let g = amplitude * (rate * c).exp();
                let q = -TWO_PI * rate * s;
                (g, g * q, g * (q * q - TWO_PI * TWO_PI * rate * c))
            }
            PeriodicFn::Sampled(spline) => spline.eval(r),
            PeriodicFn::Sum(terms) => terms.iter().fold((0.0, 0.0, 0.0), |acc, t| {
                let (v, d1, d2) = t.eval(r);
                (acc.0 + v, acc.1 + d1, acc.2 + d2)
            }),
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval(r).0
    }

    pub fn d1(&self, r: f64) -> f64 {
        self.eval(r).1
    }

    pub fn d2(&self, r: f64) -> f64 {
        self.eval(r).2
    }

    pub fn is_constant(&self) -> bool {
        match self {
            PeriodicFn::Const(_) => true,
            PeriodicFn::Trig { cos, sin } => {
                cos.iter().skip(1).all(|&c| c == 0.0) && sin.iter().all(|&s| s == 0.0)
            }
            PeriodicFn::ExpTrig { amplitude, rate } => *amplitude == 0.0 || *rate == 0.0,
            PeriodicFn::Sampled(s) => s.values.iter().all(|&y| y == s.values[0]),
            PeriodicFn::Sum(terms) => terms.iter().all(PeriodicFn::is_constant),
        }
    }

    /// Smallest sampled value on `samples` equispaced points, with its location.
    pub fn min_on_scan(&self, samples: usize) -> (f64, f64) {
        (0..samples)
            .map(|i| {
                let r = i as f64 / samples as f64;
                (r, self.value(r))
            })
            .fold((0.0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
    }

    /// Sup over `samples` points of `|f| + |f'| + |f''|`.
    pub fn c2_norm(&self, samples: usize) -> f64 {
        (0..samples)
            .map(|i| {
                let (v, d1, d2) = self.eval(i as f64 / samples as f64);
                v.abs() + d1.abs() + d2.abs()
            })
            .fold(0.0, f64::max)
    }

    /// `self + other`, flattening nested sums.
    pub fn plus(&self, other: &PeriodicFn) -> PeriodicFn {
        let mut terms = Vec::new();
        for t in [self, other] {
            match t {
                PeriodicFn::Sum(inner) => terms.extend(inner.iter().cloned()),
                _ => terms.push(t.clone()),
            }
        }
        PeriodicFn::Sum(terms)
    }

    /// `c * self`.
    pub fn scaled(&self, c: f64) -> PeriodicFn {
        match self {
            PeriodicFn::Const(v) => PeriodicFn::Const(c * v),
            PeriodicFn::Trig { cos, sin } => PeriodicFn::Trig {
                cos: cos.iter().map(|x| c * x).collect(),
                sin: sin.iter().map(|x| c * x).collect(),
            },
            PeriodicFn::ExpTrig { amplitude, rate } => {
                PeriodicFn::ExpTrig { amplitude: c * amplitude, rate: *rate }
            }
            PeriodicFn::Sampled(s) => {
                PeriodicFn::Sampled(PeriodicSpline::new(s.values.iter().map(|y| c * y).collect())
                    .expect("scaling keeps sample count"))
            }
            PeriodicFn::Sum(terms) => PeriodicFn::Sum(terms.iter().map(|t| t.scaled(c)).collect()),
        }
    }

    fn parse_term(term: &str) -> Result<PeriodicFn> {
        let (family, args) = term
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("missing family prefix in '{term}'")))?;
        let numbers = args
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number '{}' in '{term}'", x.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        if numbers.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse(format!("non-finite coefficient in '{term}'")));
        }
        match family.trim() {
            "const" => match numbers.as_slice() {
                [c] => Ok(PeriodicFn::Const(*c)),
                _ => Err(Error::Parse(format!("const takes one value: '{term}'"))),
            },
            "trig" => {
                let mut cos = vec![numbers[0]];
                let mut sin = vec![0.0];
                for pair in numbers[1..].chunks(2) {
                    cos.push(pair[0]);
                    sin.push(pair.get(1).copied().unwrap_or(0.0));
                }
                Ok(PeriodicFn::Trig { cos, sin })
            }
            "exptrig" => match numbers.as_slice() {
                [a, b] => Ok(PeriodicFn::ExpTrig { amplitude: *a, rate: *b }),
                _ => Err(Error::Parse(format!("exptrig takes two values: '{term}'"))),
            },
            "samples" => Ok(PeriodicFn::Sampled(PeriodicSpline::new(numbers)?)),
            other => Err(Error::Parse(format!("unknown function family '{other}'"))),
        }
    }
}

const FAMILIES: [&str; 4] = ["const:", "trig:", "exptrig:", "samples:"];

impl FromStr for PeriodicFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        // '+' also appears in exponents such as 1e+3, so only split where a
        // new family prefix follows.
        let mut terms: Vec<String> = Vec::new();
        for piece in s.split('+') {
            let starts_family = FAMILIES.iter().any(|p| piece.trim_start().starts_with(p));
            match terms.last_mut() {
                Some(last) if !starts_family => {
                    last.push('+');
                    last.push_str(piece);
                }
                _ => terms.push(piece.to_string()),
            }
        }
        let mut parsed = terms
            .iter()
            .map(|t| PeriodicFn::parse_term(t.trim()))
            .collect::<Result<Vec<_>>>()?;
        if parsed.len() == 1 {
            Ok(parsed.pop().unwrap())
        } else {
            Ok(PeriodicFn::Sum(parsed))
        }
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for PeriodicFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeriodicFn::Const(c) => write!(f, "const:{c}"),
            PeriodicFn::Trig { cos, sin } => {
                let mut coeffs = vec![cos[0]];
                for k in 1..cos.len() {
                    coeffs.push(cos[k]);
                    coeffs.push(sin[k]);
                }
                write!(f, "trig:{}", join(&coeffs))
            }
            PeriodicFn::ExpTrig { amplitude, rate } => write!(f, "exptrig:{amplitude},{rate}"),
            PeriodicFn::Sampled(s) => write!(f, "samples:{}", join(&s.values)),
            PeriodicFn::Sum(terms) => {
                let parts: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
                write!(f, "{}", parts.join("+"))
            }
        }
    }
}

impl Serialize for PeriodicFn {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PeriodicFn {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Periodic cubic spline through equispaced samples `y_i = y(i/M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSpline {
    values: Vec<f64>,
    second: Vec<f64>,
}

impl PeriodicSpline {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let m = values.len();
        if m < 3 {
            return Err(Error::InvalidArgument(format!(
                "periodic spline needs at least 3 samples, got {m}"
            )));
        }
        let h = 1.0 / m as f64;
        let rhs: Vec<f64> = (0..m)
            .map(|i| {
                let prev = values[(i + m - 1) % m];
                let next = values[(i + 1) % m];
                6.0 * (next - 2.0 * values[i] + prev) / (h * h)
            })
            .collect();
        let system = CyclicTridiagonal::new(vec![1.0; m], vec![4.0; m], vec![1.0; m]);
        let second = system
            .solve(&rhs)
            .map_err(|_| Error::InvalidArgument("spline system is singular".into()))?;
        Ok(Self { values, second })
    }

    pub fn samples(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        let m = self.values.len();
        let h = 1.0 / m as f64;
        let x = r.rem_euclid(1.0) * m as f64;
        let i = (x.floor() as usize).min(m - 1);
        let t = x - i as f64;
        let j = (i + 1) % m;
        let (a, b) = (1.0 - t, t);
        let (y0, y1) = (self.values[i], self.values[j]);
        let (m0, m1) = (self.second[i], self.second[j]);
        let value = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d1 = (y1 - y0) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        let d2 = a * m0 + b * m1;
        (value, d1, d2)
    }
}

/// Uniform periodic grid `r_i = i/N`, `i = 0..N`, with `r_N` identified with `r_0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub const MIN_POINTS: usize = 16;

    pub fn new(n: usize) -> Result<Self> {
        if n < Self::MIN_POINTS {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least {} points, got {n}",
                Self::MIN_POINTS
            )));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// The `N + 1` nodes of the closed interval, ending at `r_N = 1`.
    pub fn closed_nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.node(i)).collect()
    }

    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.n as isize) as usize
    }

    pub fn refined(&self) -> Grid {
        Grid { n: 2 * self.n }
    }

    /// Cell index and fractional offset of `r` wrapped into `[0, 1)`.
    pub fn locate(&self, r: f64) -> (usize, f64) {
        let x = r.rem_euclid(1.0) * self.n as f64;
        let i = (x.floor() as usize).min(self.n - 1);
        (i, x - i as f64)
    }

    pub fn sample(&self, f: &PeriodicFn) -> GridFn {
        self.sample_with(|r| f.value(r))
    }

    pub fn sample_with(&self, f: impl Fn(f64) -> f64) -> GridFn {
        GridFn { values: (0..self.n).map(|i| f(self.node(i))).collect() }
    }
}

/// Samples of a periodic function on the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFn {
    values: Vec<f64>,
}

impl GridFn {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::InvalidArgument(format!(
                "grid function has {} samples, grid has {}",
                values.len(),
                grid.n()
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self { values: vec![0.0; grid.n()] }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self { values: vec![c; grid.n()] }
    }

    pub fn grid(&self) -> Grid {
        Grid { n: self.values.len() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.values.iter()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFn {
        GridFn { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Sup-norm distance to another function on the same grid.
    pub fn distance(&self, other: &GridFn) -> f64 {
        assert_eq!(self.len(), other.len());
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Periodic cubic spline through the samples.
    pub fn spline(&self) -> PeriodicSpline {
        PeriodicSpline::new(self.values.clone()).expect("grid has at least 16 points")
    }

    /// Resample onto another grid through the periodic cubic spline.
    pub fn resample(&self, grid: &Grid) -> GridFn {
        let spline = self.spline();
        grid.sample_with(|r| spline.eval(r).0)
    }
}

impl Index<usize> for GridFn {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Periodic rectangle rule `h * sum v_i`, an approximation of the integral over `[0, 1]`.
pub fn quad_periodic(v: &GridFn) -> f64 {
    v.values.iter().sum::<f64>() / v.len() as f64
}

/// Signed integral of `integrand` from `s` to `r` by adaptive quadrature.
pub fn quad_segment(integrand: impl Fn(f64) -> f64, s: f64, r: f64) -> f64 {
    quadrature::integrate(integrand, s, r, 1e-15, 1e-13)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Derivative {
    First,
    Second,
}

/// Second-order central differences with periodic wrap.
pub fn diff_periodic(v: &GridFn, order: Derivative) -> GridFn {
    let n = v.len();
    let h = 1.0 / n as f64;
    let x = &v.values;
    let values = (0..n)
        .map(|i| {
            let prev = x[(i + n - 1) % n];
            let next = x[(i + 1) % n];
            match order {
                Derivative::First => (next - prev) / (2.0 * h),
                Derivative::Second => (next - 2.0 * x[i] + prev) / (h * h),
            }
        })
        .collect();
    GridFn { values }
}
