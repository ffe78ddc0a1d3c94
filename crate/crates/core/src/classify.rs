//! Membership of a chart in `W0`, `W3bar`, `W6bar` and `W1`.
//!
//! Each class is tested by the max-norm residual of its defining closed form
//! for `F`, normalized by `1 + max |F|`. Aggregation over sample points
//! takes the maximum, since the classes are defined pointwise.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curvature::PointStructure;
use crate::geometry::{GeometryAtPoint, GeometryError, ManifoldChart};
use crate::tensor::PointTensor;

/// Residual below which a point is in a class.
pub const IN_CLASS: f64 = 1e-7;
/// Residual above which a point is decisively out of a class.
pub const OUT_OF_CLASS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    #[serde(rename = "W0")]
    W0,
    #[serde(rename = "W3bar")]
    W3Bar,
    #[serde(rename = "W6bar")]
    W6Bar,
    #[serde(rename = "W1")]
    W1,
    #[serde(rename = "outside W1")]
    OutsideW1,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassLabel::W0 => "W0",
            ClassLabel::W3Bar => "W3bar",
            ClassLabel::W6Bar => "W6bar",
            ClassLabel::W1 => "W1",
            ClassLabel::OutsideW1 => "outside W1",
            ClassLabel::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("no sample point admitted a geometry evaluation")]
    NoValidSamples,
}

/// Class residuals at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PointClassResiduals {
    pub w0: f64,
    pub w3bar: f64,
    pub w6bar: f64,
    pub w1: f64,
    /// `max |theta(Px) + theta(x)|`
    pub theta_parity_minus: f64,
    /// `max |theta(Px) - theta(x)|`
    pub theta_parity_plus: f64,
}

impl PointClassResiduals {
    fn fold(&self, other: &PointClassResiduals, f: impl Fn(f64, f64) -> f64) -> PointClassResiduals {
        PointClassResiduals {
            w0: f(self.w0, other.w0),
            w3bar: f(self.w3bar, other.w3bar),
            w6bar: f(self.w6bar, other.w6bar),
            w1: f(self.w1, other.w1),
            theta_parity_minus: f(self.theta_parity_minus, other.theta_parity_minus),
            theta_parity_plus: f(self.theta_parity_plus, other.theta_parity_plus),
        }
    }

    pub fn get(&self, label: ClassLabel) -> Option<f64> {
        match label {
            ClassLabel::W0 => Some(self.w0),
            ClassLabel::W3Bar => Some(self.w3bar),
            ClassLabel::W6Bar => Some(self.w6bar),
            ClassLabel::W1 => Some(self.w1),
            _ => None,
        }
    }
}

fn theta_parity(theta: &PointTensor, s: &PointStructure, sign: f64) -> f64 {
    // sign = -1 tests theta(Px) = -theta(x)
    s.p_slot(theta, 0).sub(&theta.scale(sign)).max_abs()
}

/// `(1/2n){ [g + s g~](x,y) theta(z) + [g + s g~](x,z) theta(y) }`.
pub fn conformal_form(theta: &PointTensor, s: &PointStructure, sign: f64) -> PointTensor {
    let gs = s.g_plus(sign);
    let c = 1.0 / (2.0 * s.n() as f64);
    PointTensor::from_fn3(s.dim(), |x, y, z| {
        c * (gs.at2(x, y) * theta.at1(z) + gs.at2(x, z) * theta.at1(y))
    })
}

/// `(1/2n){ g(x,y)theta(z) - g(x,Py)theta(Pz) + g(x,z)theta(y) - g(x,Pz)theta(Py) }`.
pub fn w1_form(theta: &PointTensor, s: &PointStructure) -> PointTensor {
    let g = s.g();
    let gt = s.tilde();
    let tp = s.p_slot(theta, 0);
    let c = 1.0 / (2.0 * s.n() as f64);
    PointTensor::from_fn3(s.dim(), |x, y, z| {
        c * (g.at2(x, y) * theta.at1(z) - gt.at2(x, y) * tp.at1(z) + g.at2(x, z) * theta.at1(y)
            - gt.at2(x, z) * tp.at1(y))
    })
}

pub fn residual_w0(f: &PointTensor) -> f64 {
    let m = f.max_abs();
    m / (1.0 + m)
}

fn residual_conformal(f: &PointTensor, theta: &PointTensor, s: &PointStructure, sign: f64) -> f64 {
    let form = f.distance(&conformal_form(theta, s, sign));
    let parity = theta_parity(theta, s, -sign);
    (form + parity) / (1.0 + f.max_abs())
}

/// Defining condition of `W3bar`: conformal form with `g + g~` and `theta o P = -theta`.
pub fn residual_w3bar(f: &PointTensor, theta: &PointTensor, s: &PointStructure) -> f64 {
    residual_conformal(f, theta, s, 1.0)
}

/// Defining condition of `W6bar`: conformal form with `g - g~` and `theta o P = theta`.
pub fn residual_w6bar(f: &PointTensor, theta: &PointTensor, s: &PointStructure) -> f64 {
    residual_conformal(f, theta, s, -1.0)
}

pub fn residual_w1(f: &PointTensor, theta: &PointTensor, s: &PointStructure) -> f64 {
    f.distance(&w1_form(theta, s)) / (1.0 + f.max_abs())
}

pub fn point_residuals(geo: &GeometryAtPoint) -> PointClassResiduals {
    let s = &geo.structure;
    PointClassResiduals {
        w0: residual_w0(&geo.f),
        w3bar: residual_w3bar(&geo.f, &geo.theta, s),
        w6bar: residual_w6bar(&geo.f, &geo.theta, s),
        w1: residual_w1(&geo.f, &geo.theta, s),
        theta_parity_minus: theta_parity(&geo.theta, s, -1.0),
        theta_parity_plus: theta_parity(&geo.theta, s, 1.0),
    }
}

/// Most specific class in the order `W0, W3bar, W6bar, W1`. A residual in
/// the gap between [`IN_CLASS`] and [`OUT_OF_CLASS`] stops the walk with
/// `Inconclusive`.
pub fn verdict(max: &PointClassResiduals) -> ClassLabel {
    for label in [ClassLabel::W0, ClassLabel::W3Bar, ClassLabel::W6Bar, ClassLabel::W1] {
        let r = max.get(label).expect("class label");
        if r < IN_CLASS {
            return label;
        }
        if r <= OUT_OF_CLASS {
            return ClassLabel::Inconclusive;
        }
    }
    ClassLabel::OutsideW1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResidualRecord {
    pub points: Vec<PointClassResiduals>,
    pub max: PointClassResiduals,
    pub mean: PointClassResiduals,
    /// Indices of sample points where the geometry could not be evaluated.
    pub skipped: Vec<usize>,
    pub verdict: ClassLabel,
}

pub fn classify_geometries(
    geometries: &[Result<GeometryAtPoint, GeometryError>],
) -> Result<ClassResidualRecord, ClassifyError> {
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for (i, g) in geometries.iter().enumerate() {
        match g {
            Ok(geo) => points.push(point_residuals(geo)),
            Err(_) => skipped.push(i),
        }
    }
    if points.is_empty() {
        return Err(ClassifyError::NoValidSamples);
    }
    let zero = PointClassResiduals::default();
    let max = points.iter().fold(zero, |acc, p| acc.fold(p, f64::max));
    let sum = points.iter().fold(zero, |acc, p| acc.fold(p, |a, b| a + b));
    let count = points.len() as f64;
    let mean = sum.fold(&zero, |a, _| a / count);
    Ok(ClassResidualRecord {
        verdict: verdict(&max),
        points,
        max,
        mean,
        skipped,
    })
}

pub fn classify(chart: &ManifoldChart, samples: &[Vec<f64>]) -> Result<ClassResidualRecord, ClassifyError> {
    classify_geometries(&chart.geometry_at_points(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{self, sample, Alignment};
    use crate::expr::ScalarField;

    fn samples(chart: &ManifoldChart) -> Vec<Vec<f64>> {
        sample(chart, 3, 50, 2024)
    }

    #[test]
    fn flat_product_is_w0() {
        let c = catalog::flat_product(2).unwrap();
        let r = classify(&c, &samples(&c)).unwrap();
        assert_eq!(r.verdict, ClassLabel::W0);
        assert_eq!(r.max.w0, 0.0);
        assert_eq!(r.max.w3bar, 0.0);
        assert_eq!(r.max.w6bar, 0.0);
    }

    #[test]
    fn conformal_vertical_is_w3bar() {
        let u = ScalarField::parse("0.1*x3", 4).unwrap();
        let c = catalog::conformal_product(2, &u, Alignment::Vertical).unwrap();
        let r = classify(&c, &samples(&c)).unwrap();
        assert_eq!(r.verdict, ClassLabel::W3Bar);
        assert!(r.max.w3bar < 1e-8);
        assert!(r.max.w6bar > 0.01);
        assert!(r.max.w1 < 1e-8);
    }

    #[test]
    fn conformal_horizontal_is_w6bar() {
        let u = ScalarField::parse("0.1*x1", 4).unwrap();
        let c = catalog::conformal_product(2, &u, Alignment::Horizontal).unwrap();
        let r = classify(&c, &samples(&c)).unwrap();
        assert_eq!(r.verdict, ClassLabel::W6Bar);
        assert!(r.max.w6bar < 1e-8);
        assert!(r.max.w3bar > 0.01);
        assert!(r.max.theta_parity_plus < 1e-8);
    }

    #[test]
    fn perturbed_flat_product_leaves_w1() {
        let c = catalog::perturbed(&catalog::flat_product(2).unwrap(), 0.1, 7).unwrap();
        let r = classify(&c, &samples(&c)).unwrap();
        assert_eq!(r.verdict, ClassLabel::OutsideW1);
    }

    #[test]
    fn verdict_ladder() {
        let mut r = PointClassResiduals {
            w0: 1.0,
            w3bar: 1.0,
            w6bar: 1.0,
            w1: 1.0,
            ..Default::default()
        };
        assert_eq!(verdict(&r), ClassLabel::OutsideW1);
        r.w1 = 1e-9;
        assert_eq!(verdict(&r), ClassLabel::W1);
        r.w6bar = 1e-5;
        assert_eq!(verdict(&r), ClassLabel::Inconclusive);
        r.w3bar = 0.0;
        assert_eq!(verdict(&r), ClassLabel::W3Bar);
    }

    #[test]
    fn no_valid_samples() {
        let c = catalog::flat_product(2).unwrap();
        assert_eq!(
            classify(&c, &[vec![5.0; 4]]),
            Err(ClassifyError::NoValidSamples)
        );
    }

    #[test]
    fn w0_lies_in_every_class() {
        let c = catalog::sphere_factor();
        let r = classify(&c, &samples(&c)).unwrap();
        assert!(r.max.w0 < IN_CLASS);
        assert!(r.max.w3bar < IN_CLASS && r.max.w6bar < IN_CLASS && r.max.w1 < IN_CLASS);
    }
}
