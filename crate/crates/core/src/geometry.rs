//! Parametric description of the symmetric quadrilateral domain.
//!
//! The upper boundary is a cubic Bezier curve with control points
//! `(x1, y1)`, `(x1/2, y2)`, `(-x1/2, y3)` and `(-x1, y4)`; the lower boundary
//! is its mirror image about the x-axis, and two straight vertical sides close
//! the domain at `x = x1` and `x = -x1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PARAM_NAMES: [&str; 5] = ["x1", "y1", "y2", "y3", "y4"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn mirrored(self) -> Self {
        Point2::new(self.x, -self.y)
    }
}

/// The five design coordinates, in millimetres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryParams {
    pub x1: f64,
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
    pub y4: f64,
}

impl GeometryParams {
    pub const fn new(x1: f64, y1: f64, y2: f64, y3: f64, y4: f64) -> Self {
        GeometryParams { x1, y1, y2, y3, y4 }
    }

    pub const fn from_array(v: [f64; 5]) -> Self {
        GeometryParams::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub const fn to_array(&self) -> [f64; 5] {
        [self.x1, self.y1, self.y2, self.y3, self.y4]
    }

    /// Control points P1..P4 of the upper curve. The abscissae follow
    /// `x1 = 2 x2 = -2 x3 = -x4`.
    pub fn control_points(&self) -> [Point2; 4] {
        let half = 0.5 * self.x1;
        [
            Point2::new(self.x1, self.y1),
            Point2::new(half, self.y2),
            Point2::new(-half, self.y3),
            Point2::new(-self.x1, self.y4),
        ]
    }

    /// Fails with the first offending field if any coordinate leaves `bounds`.
    pub fn validate(&self, bounds: &ParamBounds) -> Result<()> {
        for (k, &v) in self.to_array().iter().enumerate() {
            let (lo, hi) = (bounds.lower[k], bounds.upper[k]);
            if !(v.is_finite() && v >= lo && v <= hi) {
                return Err(Error::Validation {
                    field: PARAM_NAMES[k],
                    value: v,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(())
    }

    pub fn is_within(&self, bounds: &ParamBounds) -> bool {
        self.validate(bounds).is_ok()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (k, v) in self.to_array().iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InputDomain(format!(
                    "parameter `{}` is not finite",
                    PARAM_NAMES[k]
                )));
            }
        }
        if self.x1 <= 0.0 {
            return Err(Error::InputDomain(format!(
                "x1 must be positive, got {}",
                self.x1
            )));
        }
        Ok(())
    }

    /// Parses either a comma/whitespace separated list of five numbers in the
    /// order `x1 y1 y2 y3 y4`, or a flat `key = value` record (lines or
    /// comma separated).
    pub fn parse(text: &str) -> Result<Self> {
        if text.contains('=') {
            let lines = text.replace(',', "\n");
            return toml::from_str(&lines).map_err(|e| Error::Decode(e.to_string()));
        }
        let values = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Decode(format!("`{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let arr: [f64; 5] = values.try_into().map_err(|v: Vec<f64>| {
            Error::Decode(format!("expected 5 parameters, found {}", v.len()))
        })?;
        Ok(GeometryParams::from_array(arr))
    }
}

impl FromStr for GeometryParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GeometryParams::parse(s)
    }
}

impl fmt::Display for GeometryParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "x1={} y1={} y2={} y3={} y4={}",
            self.x1, self.y1, self.y2, self.y3, self.y4
        )
    }
}

/// Per-parameter closed ranges, ordered like [`PARAM_NAMES`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lower: [f64; 5],
    pub upper: [f64; 5],
}

impl ParamBounds {
    pub fn new(lower: [f64; 5], upper: [f64; 5]) -> Result<Self> {
        for k in 0..5 {
            if !(lower[k].is_finite() && upper[k].is_finite() && lower[k] < upper[k]) {
                return Err(Error::InputDomain(format!(
                    "bounds for `{}` must satisfy lower < upper, got [{}, {}]",
                    PARAM_NAMES[k], lower[k], upper[k]
                )));
            }
        }
        Ok(ParamBounds { lower, upper })
    }

    /// Design ranges of the reference geometry family (mm).
    pub fn reference() -> Self {
        ParamBounds {
            lower: [100.0, 10.0, 0.0, 20.0, 25.0],
            upper: [150.0, 16.0, 30.0, 50.0, 75.0],
        }
    }

    /// Map onto the unit hypercube.
    pub fn normalize(&self, p: &GeometryParams) -> [f64; 5] {
        let v = p.to_array();
        std::array::from_fn(|k| (v[k] - self.lower[k]) / (self.upper[k] - self.lower[k]))
    }

    pub fn denormalize(&self, u: &[f64; 5]) -> GeometryParams {
        GeometryParams::from_array(std::array::from_fn(|k| {
            self.lower[k] + u[k] * (self.upper[k] - self.lower[k])
        }))
    }

    /// Grow every range by `fraction` of its width on both sides.
    pub fn widened(&self, fraction: f64) -> Self {
        let mut out = self.clone();
        for k in 0..5 {
            let w = self.upper[k] - self.lower[k];
            out.lower[k] -= fraction * w;
            out.upper[k] += fraction * w;
        }
        out
    }
}

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds::reference()
    }
}

/// Binomial coefficient by the multiplicative recurrence.
fn binomial(n: usize, i: usize) -> f64 {
    let i = i.min(n - i);
    let mut c = 1.0;
    for k in 1..=i {
        c = c * (n - i + k) as f64 / k as f64;
    }
    c
}

/// Bernstein basis polynomial `C(n,i) t^i (1-t)^(n-i)`.
pub fn bernstein(n: usize, i: usize, t: f64) -> Result<f64> {
    if i > n {
        return Err(Error::InputDomain(format!(
            "Bernstein index {i} exceeds order {n}"
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InputDomain(format!("t = {t} outside [0, 1]")));
    }
    Ok(bernstein_unchecked(n, i, t))
}

fn bernstein_unchecked(n: usize, i: usize, t: f64) -> f64 {
    binomial(n, i) * t.powi(i as i32) * (1.0 - t).powi((n - i) as i32)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BezierCurve {
    control_points: Vec<Point2>,
}

impl BezierCurve {
    pub fn new(control_points: Vec<Point2>) -> Result<Self> {
        if control_points.len() < 2 {
            return Err(Error::Construction(format!(
                "a Bezier curve needs at least 2 control points, got {}",
                control_points.len()
            )));
        }
        if control_points
            .iter()
            .any(|p| !(p.x.is_finite() && p.y.is_finite()))
        {
            return Err(Error::Construction(
                "control points must be finite".to_string(),
            ));
        }
        Ok(BezierCurve { control_points })
    }

    pub fn order(&self) -> usize {
        self.control_points.len() - 1
    }

    pub fn control_points(&self) -> &[Point2] {
        &self.control_points
    }

    pub fn eval(&self, t: f64) -> Result<Point2> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InputDomain(format!("t = {t} outside [0, 1]")));
        }
        let n = self.order();
        let mut p = Point2::default();
        for (i, c) in self.control_points.iter().enumerate() {
            let b = bernstein_unchecked(n, i, t);
            p.x += b * c.x;
            p.y += b * c.y;
        }
        Ok(p)
    }
}

/// Boundary polylines of a structured quadrilateral block.
///
/// `top` and `bottom` are ordered along increasing ξ (for the parametric
/// domain: increasing Bezier parameter, from `x = x1` towards `x = -x1`).
/// `right` is the side at ξ = 0 and `left` the side at the last ξ index;
/// both run from the top curve down to the bottom curve (increasing η).
/// With this orientation the mesh Jacobian is positive.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBoundary {
    pub top: Vec<Point2>,
    pub bottom: Vec<Point2>,
    pub left: Vec<Point2>,
    pub right: Vec<Point2>,
}

impl DomainBoundary {
    pub fn new(
        top: Vec<Point2>,
        bottom: Vec<Point2>,
        left: Vec<Point2>,
        right: Vec<Point2>,
    ) -> Result<Self> {
        if top.len() != bottom.len() {
            return Err(Error::Construction(format!(
                "top has {} nodes but bottom has {}",
                top.len(),
                bottom.len()
            )));
        }
        if left.len() != right.len() {
            return Err(Error::Construction(format!(
                "left has {} nodes but right has {}",
                left.len(),
                right.len()
            )));
        }
        if top.len() < 3 || left.len() < 3 {
            return Err(Error::Construction(format!(
                "need at least 3 nodes per side, got n_xi = {}, n_eta = {}",
                top.len(),
                left.len()
            )));
        }
        let all = top.iter().chain(&bottom).chain(&left).chain(&right);
        if all.clone().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::Construction("boundary nodes must be finite".into()));
        }
        let corners_ok = top[0] == right[0]
            && *top.last().unwrap() == left[0]
            && bottom[0] == *right.last().unwrap()
            && *bottom.last().unwrap() == *left.last().unwrap();
        if !corners_ok {
            return Err(Error::Construction(
                "adjacent sides do not share their corner nodes".into(),
            ));
        }
        Ok(DomainBoundary {
            top,
            bottom,
            left,
            right,
        })
    }

    /// Axis-aligned rectangle `[0, width] x [0, height]` with uniform nodes.
    pub fn rectangle(width: f64, height: f64, n_xi: usize, n_eta: usize) -> Result<Self> {
        if n_xi < 2 || n_eta < 2 {
            return Err(Error::Construction("rectangle needs at least 2 nodes per side".into()));
        }
        let xs: Vec<f64> = (0..n_xi)
            .map(|j| width * (n_xi - 1 - j) as f64 / (n_xi - 1) as f64)
            .collect();
        let ys: Vec<f64> = (0..n_eta)
            .map(|i| height * (n_eta - 1 - i) as f64 / (n_eta - 1) as f64)
            .collect();
        let top = xs.iter().map(|&x| Point2::new(x, height)).collect();
        let bottom = xs.iter().map(|&x| Point2::new(x, 0.0)).collect();
        let right = ys.iter().map(|&y| Point2::new(width, y)).collect();
        let left = ys.iter().map(|&y| Point2::new(0.0, y)).collect();
        DomainBoundary::new(top, bottom, left, right)
    }

    pub fn n_xi(&self) -> usize {
        self.top.len()
    }

    pub fn n_eta(&self) -> usize {
        self.left.len()
    }
}

fn segment(a: Point2, b: Point2, n: usize) -> Vec<Point2> {
    let mut pts: Vec<Point2> = (0..n)
        .map(|k| {
            let s = k as f64 / (n - 1) as f64;
            Point2::new(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y))
        })
        .collect();
    pts[0] = a;
    pts[n - 1] = b;
    pts
}

/// Discretize the parametric domain boundary with `n_xi` nodes along the
/// curves (uniform in the Bezier parameter) and `n_eta` nodes on each
/// straight side. With `strict`, parameters must lie inside the reference
/// bounds.
pub fn build_boundary(
    params: &GeometryParams,
    n_xi: usize,
    n_eta: usize,
    strict: bool,
) -> Result<DomainBoundary> {
    if n_xi < 3 || n_eta < 3 {
        return Err(Error::InputDomain(format!(
            "need n_xi >= 3 and n_eta >= 3, got {n_xi} x {n_eta}"
        )));
    }
    if strict {
        params.validate(&ParamBounds::reference())?;
    }
    params.check_finite()?;
    let curve = BezierCurve::new(params.control_points().to_vec())?;
    let top = (0..n_xi)
        .map(|j| curve.eval(j as f64 / (n_xi - 1) as f64))
        .collect::<Result<Vec<_>>>()?;
    let bottom: Vec<Point2> = top.iter().map(|p| p.mirrored()).collect();
    let right = segment(top[0], bottom[0], n_eta);
    let left = segment(top[n_xi - 1], bottom[n_xi - 1], n_eta);
    DomainBoundary::new(top, bottom, left, right)
}
