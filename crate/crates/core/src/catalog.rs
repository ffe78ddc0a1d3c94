//! Built-in test manifolds and point sampling.
//!
//! Conformal deformations `g = e^{2u} g_flat` of the flat product realize the
//! two conformal classes: an exponent depending only on the vertical
//! coordinates (the `-1` eigendistribution of `P`) lands in `W3bar`, one
//! depending only on the horizontal coordinates lands in `W6bar`. In both
//! cases `theta = -2n du`. The catalog's own tests confirm every expected
//! verdict with the classifier before the entries are used elsewhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::ClassLabel;
use crate::expr::{Expr, Func, ScalarField};
use crate::geometry::{ChartError, ManifoldChart};

/// Grid points beyond this count are clipped by coarsening the grid.
pub const MAX_GRID_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogError {
    #[error("n must be at least 1")]
    ZeroHalfDimension,
    #[error("conformal exponent depends on x{coord}, which is not {alignment:?}")]
    Alignment { coord: usize, alignment: Alignment },
    #[error("exponent dimension {got} does not match chart dimension {expected}")]
    ExponentDimension { expected: usize, got: usize },
    #[error("perturbation amplitude must be finite and non-negative")]
    BadAmplitude,
    #[error("perturbed metric is not positive definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },
    #[error("unknown catalog entry `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Chart(#[from] ChartError),
}

/// Which eigendistribution of `P` the conformal exponent varies along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    /// `P = -1` coordinates `x{n+1}..x{2n}`.
    Vertical,
    /// `P = +1` coordinates `x1..x{n}`.
    Horizontal,
}

fn flat_fields(n: usize) -> (Vec<ScalarField>, Vec<ScalarField>) {
    let d = 2 * n;
    let mut g = Vec::with_capacity(d * d);
    let mut p = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let on_diag = i == j;
            g.push(ScalarField::constant(if on_diag { 1.0 } else { 0.0 }, d));
            let s = match (on_diag, i < n) {
                (true, true) => 1.0,
                (true, false) => -1.0,
                _ => 0.0,
            };
            p.push(ScalarField::constant(s, d));
        }
    }
    (g, p)
}

/// `g = I`, `P = diag(+1 x n, -1 x n)` on `[-1, 1]^{2n}`.
pub fn flat_product(n: usize) -> Result<ManifoldChart, CatalogError> {
    if n == 0 {
        return Err(CatalogError::ZeroHalfDimension);
    }
    let (g, p) = flat_fields(n);
    Ok(ManifoldChart::new(
        format!("flat-product-n{n}"),
        2 * n,
        g,
        p,
        vec![(-1.0, 1.0); 2 * n],
    )?)
}

/// `g = e^{2u} I`, `P = diag(+1 x n, -1 x n)`.
pub fn conformal_product(
    n: usize,
    u: &ScalarField,
    alignment: Alignment,
) -> Result<ManifoldChart, CatalogError> {
    if n == 0 {
        return Err(CatalogError::ZeroHalfDimension);
    }
    let d = 2 * n;
    if u.dim() != d {
        return Err(CatalogError::ExponentDimension {
            expected: d,
            got: u.dim(),
        });
    }
    let forbidden = match alignment {
        Alignment::Vertical => 1..=n,
        Alignment::Horizontal => (n + 1)..=d,
    };
    for coord in forbidden {
        if !u.independent_of(coord) {
            return Err(CatalogError::Alignment { coord, alignment });
        }
    }
    let factor = Expr::call(Func::Exp, Expr::mul(Expr::constant(2.0), u.expr().clone()));
    let (flat_g, p) = flat_fields(n);
    let g = flat_g
        .iter()
        .map(|f| ScalarField::from_expr(Expr::mul(factor.clone(), f.expr().clone()), d))
        .collect::<Result<Vec<_>, _>>()
        .expect("exponent already bound to the chart dimension");
    let label = match alignment {
        Alignment::Vertical => "vertical",
        Alignment::Horizontal => "horizontal",
    };
    Ok(ManifoldChart::new(
        format!("conformal-{label}-n{n}"),
        d,
        g,
        p,
        vec![(-1.0, 1.0); d],
    )?)
}

/// Unit 2-sphere `diag(1, sin^2 x1)` times a flat plane, split by `P` along the factors.
pub fn sphere_factor() -> ManifoldChart {
    let (mut g, p) = flat_fields(2);
    g[5] = ScalarField::parse("sin(x1)^2", 4).expect("static expression");
    let q = std::f64::consts::FRAC_PI_4;
    let domain = vec![(q, 3.0 * q), (-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)];
    ManifoldChart::new("sphere-factor", 4, g, p, domain).expect("static chart")
}

fn random_polynomial(rng: &mut ChaCha8Rng, dim: usize, amplitude: f64) -> Expr {
    let c: [f64; 3] = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
    let a = rng.gen_range(0..dim);
    let b = rng.gen_range(0..dim);
    let e = rng.gen_range(0..dim);
    let linear = Expr::mul(Expr::constant(c[1]), Expr::coord(a));
    let quadratic = Expr::mul(Expr::constant(c[2]), Expr::mul(Expr::coord(b), Expr::coord(e)));
    let poly = Expr::add(Expr::add(Expr::constant(c[0]), linear), quadratic);
    Expr::mul(Expr::constant(amplitude / 3.0), poly)
}

/// Adds seeded low-degree polynomial perturbations to `g`, projected onto
/// the `P`-compatible part `(E + P^T E P) / 2` so the structure stays valid.
pub fn perturbed(
    chart: &ManifoldChart,
    amplitude: f64,
    seed: u64,
) -> Result<ManifoldChart, CatalogError> {
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return Err(CatalogError::BadAmplitude);
    }
    if amplitude == 0.0 {
        return Ok(chart.clone());
    }
    let d = chart.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = vec![Expr::constant(0.0); d * d];
    for i in 0..d {
        for j in i..d {
            let e = random_polynomial(&mut rng, d, amplitude);
            raw[i * d + j] = e.clone();
            raw[j * d + i] = e;
        }
    }
    let p: Vec<&Expr> = chart.structure_fields().iter().map(|f| f.expr()).collect();
    let mut g: Vec<ScalarField> = chart.metric_fields().to_vec();
    for i in 0..d {
        for j in i..d {
            let mut conj = Expr::constant(0.0);
            for k in 0..d {
                for l in 0..d {
                    let term = Expr::mul(
                        Expr::mul(p[k * d + i].clone(), raw[k * d + l].clone()),
                        p[l * d + j].clone(),
                    );
                    conj = Expr::add(conj, term);
                }
            }
            let projected = Expr::mul(Expr::constant(0.5), Expr::add(raw[i * d + j].clone(), conj));
            let entry = Expr::add(g[i * d + j].expr().clone(), projected);
            let field = ScalarField::from_expr(entry, d).expect("chart dimension");
            g[i * d + j] = field.clone();
            g[j * d + i] = field;
        }
    }
    let out = ManifoldChart::new(
        format!("{}+perturbed(amp={amplitude},seed={seed})", chart.name()),
        d,
        g,
        chart.structure_fields().to_vec(),
        chart.domain().to_vec(),
    )?;
    let scan = sample(&out, 5, 200, seed ^ 0x5eed);
    for point in scan {
        let ok = out
            .structure_at(&point)
            .map(|s| s.metric().is_well_conditioned())
            .unwrap_or(false);
        if !ok {
            return Err(CatalogError::NotPositiveDefinite { point });
        }
    }
    Ok(out)
}

/// A perturbed product rotated pointwise in the `(x1, x{n+1})` plane, so that
/// `P` itself varies: `g = R G0 R^T`, `P = R D R^T` with `G0` block diagonal.
pub fn random_rotated(n: usize, seed: u64) -> Result<ManifoldChart, CatalogError> {
    let base = perturbed(&flat_product(n)?, 0.2, seed)?;
    let d = 2 * n;
    let angle = ScalarField::parse(&format!("0.3*x2 + 0.2*x1*x{}", n + 2), d)
        .expect("static expression")
        .expr()
        .clone();
    let (c, s) = (Expr::call(Func::Cos, angle.clone()), Expr::call(Func::Sin, angle));
    let rot = |i: usize, j: usize| -> Expr {
        match (i, j) {
            (0, 0) => c.clone(),
            (i, j) if i == n && j == n => c.clone(),
            (0, j) if j == n => Expr::neg(s.clone()),
            (i, 0) if i == n => s.clone(),
            (i, j) if i == j => Expr::constant(1.0),
            _ => Expr::constant(0.0),
        }
    };
    let g0: Vec<&Expr> = base.metric_fields().iter().map(|f| f.expr()).collect();
    let mut g = vec![ScalarField::constant(0.0, d); d * d];
    let mut p = vec![ScalarField::constant(0.0, d); d * d];
    for i in 0..d {
        for j in 0..d {
            if j >= i {
                let mut acc = Expr::constant(0.0);
                for k in 0..d {
                    for l in 0..d {
                        let t = Expr::mul(Expr::mul(rot(i, k), g0[k * d + l].clone()), rot(j, l));
                        acc = Expr::add(acc, t);
                    }
                }
                let field = ScalarField::from_expr(acc, d).expect("chart dimension");
                g[i * d + j] = field.clone();
                g[j * d + i] = field;
            }
            let mut acc = Expr::constant(0.0);
            for k in 0..d {
                let sign = if k < n { 1.0 } else { -1.0 };
                acc = Expr::add(acc, Expr::mul(Expr::mul(rot(i, k), Expr::constant(sign)), rot(j, k)));
            }
            p[i * d + j] = ScalarField::from_expr(acc, d).expect("chart dimension");
        }
    }
    Ok(ManifoldChart::new(
        format!("random-rotated-n{n}-seed{seed}"),
        d,
        g,
        p,
        base.domain().to_vec(),
    )?)
}

/// Grid and random sampling settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub grid: usize,
    pub random: usize,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan {
            grid: 3,
            random: 50,
            seed: 0,
        }
    }
}

/// Tensor grid over the domain box (coarsened until it has at most
/// [`MAX_GRID_POINTS`] points) followed by seeded uniform points.
pub fn sample(chart: &ManifoldChart, grid_per_axis: usize, n_random: usize, seed: u64) -> Vec<Vec<f64>> {
    let domain = chart.domain();
    let dim = domain.len();
    let mut per_axis = grid_per_axis.max(1);
    while per_axis > 1 && per_axis.checked_pow(dim as u32).is_none_or(|t| t > MAX_GRID_POINTS) {
        per_axis -= 1;
    }
    let mut points = Vec::new();
    if per_axis == 1 {
        points.push(chart.center());
    } else {
        let total = per_axis.pow(dim as u32);
        for mut flat in 0..total {
            let mut point = vec![0.0; dim];
            for axis in (0..dim).rev() {
                let k = flat % per_axis;
                flat /= per_axis;
                let (lo, hi) = domain[axis];
                point[axis] = lo + (hi - lo) * k as f64 / (per_axis - 1) as f64;
            }
            points.push(point);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_random {
        points.push(
            domain
                .iter()
                .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
                .collect(),
        );
    }
    points
}

/// How a catalog entry is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Construction {
    Flat { n: usize },
    Conformal { n: usize, exponent: String, alignment: Alignment },
    SphereFactor,
    Perturbed { n: usize, amplitude: f64, seed: u64 },
    RandomRotated { n: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub construction: Construction,
    pub expected: ClassLabel,
    pub note: &'static str,
}

impl CatalogEntry {
    pub fn build(&self) -> Result<ManifoldChart, CatalogError> {
        let chart = match &self.construction {
            Construction::Flat { n } => flat_product(*n)?,
            Construction::Conformal {
                n,
                exponent,
                alignment,
            } => {
                let u = ScalarField::parse(exponent, 2 * n)
                    .map_err(|e| CatalogError::Unknown(format!("{}: {e}", self.name)))?;
                conformal_product(*n, &u, *alignment)?
            }
            Construction::SphereFactor => sphere_factor(),
            Construction::Perturbed { n, amplitude, seed } => {
                perturbed(&flat_product(*n)?, *amplitude, *seed)?
            }
            Construction::RandomRotated { n, seed } => random_rotated(*n, *seed)?,
        };
        Ok(chart.with_name(self.name))
    }
}

fn conformal(name: &'static str, n: usize, exponent: &str, alignment: Alignment, note: &'static str) -> CatalogEntry {
    CatalogEntry {
        name,
        construction: Construction::Conformal {
            n,
            exponent: exponent.to_string(),
            alignment,
        },
        expected: match alignment {
            Alignment::Vertical => ClassLabel::W3Bar,
            Alignment::Horizontal => ClassLabel::W6Bar,
        },
        note,
    }
}

pub fn entries() -> Vec<CatalogEntry> {
    use Alignment::{Horizontal, Vertical};
    vec![
        CatalogEntry {
            name: "flat-product-n2",
            construction: Construction::Flat { n: 2 },
            expected: ClassLabel::W0,
            note: "F = 0",
        },
        CatalogEntry {
            name: "flat-product-n3",
            construction: Construction::Flat { n: 3 },
            expected: ClassLabel::W0,
            note: "F = 0",
        },
        CatalogEntry {
            name: "sphere-factor",
            construction: Construction::SphereFactor,
            expected: ClassLabel::W0,
            note: "Riemannian product S^2 x R^2; P is parallel",
        },
        conformal("conformal-vertical-n2", 2, "0.1*x3", Vertical, "theta = -0.4 dx3"),
        conformal("conformal-vertical-n3", 3, "0.1*x4", Vertical, "theta = -0.6 dx4"),
        conformal("conformal-vertical-quadratic-n2", 2, "0.1*x3^2", Vertical, "theta = -0.8 x3 dx3"),
        conformal("conformal-vertical-mixed-n2", 2, "0.1*x3 + 0.2*x3*x4", Vertical, "non-linear exponent in both vertical axes"),
        conformal("conformal-horizontal-n2", 2, "0.1*x1", Horizontal, "theta = -0.4 dx1"),
        conformal("conformal-horizontal-n3", 3, "0.1*x1", Horizontal, "theta = -0.6 dx1"),
        conformal("conformal-horizontal-mixed-n2", 2, "0.1*x1 - 0.2*x1*x2", Horizontal, "non-linear exponent in both horizontal axes"),
        CatalogEntry {
            name: "perturbed-7",
            construction: Construction::Perturbed {
                n: 2,
                amplitude: 0.1,
                seed: 7,
            },
            expected: ClassLabel::OutsideW1,
            note: "generic compatible perturbation of the flat product",
        },
        CatalogEntry {
            name: "random-rotated-n2",
            construction: Construction::RandomRotated { n: 2, seed: 11 },
            expected: ClassLabel::OutsideW1,
            note: "point-dependent P; exercises every derivative path",
        },
        CatalogEntry {
            name: "random-rotated-n3",
            construction: Construction::RandomRotated { n: 3, seed: 5 },
            expected: ClassLabel::OutsideW1,
            note: "point-dependent P in dimension 6",
        },
    ]
}

pub fn lookup(name: &str) -> Result<CatalogEntry, CatalogError> {
    entries()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| CatalogError::Unknown(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::STRUCTURE_THRESHOLD;

    #[test]
    fn sampling_shapes() {
        let c = flat_product(2).unwrap();
        assert_eq!(sample(&c, 1, 0, 1), vec![vec![0.0; 4]]);
        assert_eq!(sample(&c, 3, 0, 1).len(), 81);
        let six = flat_product(3).unwrap();
        let grid = sample(&six, 3, 0, 1);
        assert!(grid.len() <= MAX_GRID_POINTS);
        assert_eq!(grid.len(), 64);
        let a = sample(&c, 3, 50, 9);
        assert_eq!(a, sample(&c, 3, 50, 9));
        assert_ne!(a, sample(&c, 3, 50, 10));
        assert!(a.iter().all(|p| c.contains(p)));
    }

    #[test]
    fn alignment_is_enforced() {
        let u = ScalarField::parse("0.1*x1 + 0.1*x3", 4).unwrap();
        assert!(matches!(
            conformal_product(2, &u, Alignment::Vertical),
            Err(CatalogError::Alignment { coord: 1, .. })
        ));
        assert!(matches!(
            conformal_product(2, &u, Alignment::Horizontal),
            Err(CatalogError::Alignment { coord: 3, .. })
        ));
        let bad_dim = ScalarField::parse("x1", 6).unwrap();
        assert!(conformal_product(2, &bad_dim, Alignment::Horizontal).is_err());
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let c = flat_product(2).unwrap();
        let p = perturbed(&c, 0.0, 7).unwrap();
        assert_eq!(p.metric_fields(), c.metric_fields());
        assert_eq!(p.name(), c.name());
    }

    #[test]
    fn large_perturbation_loses_definiteness() {
        let c = flat_product(2).unwrap();
        assert!(matches!(perturbed(&c, 10.0, 7), Err(CatalogError::NotPositiveDefinite { .. })));
        assert!(matches!(perturbed(&c, -1.0, 7), Err(CatalogError::BadAmplitude)));
    }

    #[test]
    fn catalog_charts_pass_structural_checks() {
        for entry in entries() {
            let chart = entry.build().unwrap();
            let points = sample(&chart, 3, 20, 3);
            chart
                .validate(&points, STRUCTURE_THRESHOLD)
                .unwrap_or_else(|e| panic!("{}: {e}", entry.name));
        }
    }

    #[test]
    fn conformal_exponents_stay_small() {
        for entry in entries() {
            if let Construction::Conformal { n, exponent, .. } = &entry.construction {
                let u = ScalarField::parse(exponent, 2 * n).unwrap();
                let chart = entry.build().unwrap();
                for p in sample(&chart, 3, 50, 1) {
                    assert!(u.eval(&p).unwrap().abs() <= 0.5, "{}", entry.name);
                }
            }
        }
    }

    #[test]
    fn lookup_by_name() {
        assert!(lookup("conformal-vertical-n2").is_ok());
        assert!(matches!(lookup("nope"), Err(CatalogError::Unknown(_))));
        assert_eq!(lookup("sphere-factor").unwrap().build().unwrap().dim(), 4);
    }
}
