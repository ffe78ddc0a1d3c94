//! Pointwise geometry of a chart: Levi-Civita connection, curvature, the
//! structure tensor `F`, its Lee form `theta` and everything derived from them.
//!
//! All derivatives come from the symbolic derivative tables of the chart's
//! expressions. First derivatives of `Gamma`, `F` and `theta` are obtained by
//! propagating exact jets of `g` and `P` through the product rule, so no
//! finite differences enter any computed quantity.

use rayon::prelude::*;
use thiserror::Error;

use crate::curvature::PointStructure;
use crate::expr::{EvalError, Expr, ScalarField};
use crate::tensor::{
    check_structure, MetricAtPoint, PointTensor, ProductStructureAtPoint, StructureDiagnostics,
    TensorError,
};

/// Default structural acceptance threshold for `P^2 = I`, compatibility and `tr P = 0`.
pub const STRUCTURE_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChartError {
    #[error("dimension {0} is not a positive even integer")]
    BadDimension(usize),
    #[error("{what} has {got} entries, expected {expected}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("field dimension {got} does not match chart dimension {expected}")]
    FieldDimension { expected: usize, got: usize },
    #[error("metric expressions g[{i}][{j}] and g[{j}][{i}] differ")]
    AsymmetricMetric { i: usize, j: usize },
    #[error("domain interval {axis} is empty or not finite")]
    BadDomain { axis: usize },
    #[error("structure check failed at {point:?}: {diagnostics:?}")]
    Structure {
        point: Vec<f64>,
        diagnostics: StructureDiagnostics,
    },
    #[error("evaluation failed at {point:?}: {source}")]
    Geometry {
        point: Vec<f64>,
        #[source]
        source: GeometryError,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("metric is not positive definite (min eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("metric condition estimate {0:e} exceeds the limit")]
    IllConditioned(f64),
    #[error("point lies outside the chart domain")]
    OutsideDomain,
}

/// A single chart: metric and product structure as coordinate expressions.
#[derive(Debug, Clone)]
pub struct ManifoldChart {
    name: String,
    dim: usize,
    g: Vec<ScalarField>,
    p: Vec<ScalarField>,
    domain: Vec<(f64, f64)>,
    tables: DerivativeTables,
}

#[derive(Debug, Clone)]
struct DerivativeTables {
    g: Vec<Expr>,
    dg: Vec<Expr>,
    ddg: Vec<Expr>,
    p: Vec<Expr>,
    dp: Vec<Expr>,
    ddp: Vec<Expr>,
}

fn derivative_tables(dim: usize, base: &[Expr]) -> (Vec<Expr>, Vec<Expr>) {
    let entries = base.len();
    let mut first = Vec::with_capacity(dim * entries);
    for a in 0..dim {
        for e in base {
            first.push(e.diff(a));
        }
    }
    let mut second = Vec::with_capacity(dim * dim * entries);
    for a in 0..dim {
        for b in 0..dim {
            for idx in 0..entries {
                // Mixed partials commute; reuse the transposed entry when available.
                if b < a {
                    let mirrored: &Expr = &second[(b * dim + a) * entries + idx];
                    second.push(mirrored.clone());
                } else {
                    second.push(first[b * entries + idx].diff(a));
                }
            }
        }
    }
    (first, second)
}

impl ManifoldChart {
    /// `g` and `p` are row-major `dim x dim` matrices of fields; `p[i*dim+j]`
    /// is `P^i_j`.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        g: Vec<ScalarField>,
        p: Vec<ScalarField>,
        domain: Vec<(f64, f64)>,
    ) -> Result<Self, ChartError> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(ChartError::BadDimension(dim));
        }
        for (what, len, expected) in [
            ("metric", g.len(), dim * dim),
            ("structure", p.len(), dim * dim),
            ("domain", domain.len(), dim),
        ] {
            if len != expected {
                return Err(ChartError::Shape {
                    what,
                    expected,
                    got: len,
                });
            }
        }
        if let Some(f) = g.iter().chain(&p).find(|f| f.dim() != dim) {
            return Err(ChartError::FieldDimension {
                expected: dim,
                got: f.dim(),
            });
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if g[i * dim + j] != g[j * dim + i] {
                    return Err(ChartError::AsymmetricMetric { i, j });
                }
            }
        }
        for (axis, &(lo, hi)) in domain.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(ChartError::BadDomain { axis });
            }
        }
        let g_exprs: Vec<Expr> = g.iter().map(|f| f.expr().clone()).collect();
        let p_exprs: Vec<Expr> = p.iter().map(|f| f.expr().clone()).collect();
        let (dg, ddg) = derivative_tables(dim, &g_exprs);
        let (dp, ddp) = derivative_tables(dim, &p_exprs);
        Ok(ManifoldChart {
            name: name.into(),
            dim,
            g,
            p,
            domain,
            tables: DerivativeTables {
                g: g_exprs,
                dg,
                ddg,
                p: p_exprs,
                dp,
                ddp,
            },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.dim / 2
    }

    pub fn metric_fields(&self) -> &[ScalarField] {
        &self.g
    }

    pub fn structure_fields(&self) -> &[ScalarField] {
        &self.p
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim
            && point
                .iter()
                .zip(&self.domain)
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.domain.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    /// Values of `g`, `P` and their first and second partials at a point.
    pub fn jets_at(&self, point: &[f64]) -> Result<ChartJets, GeometryError> {
        if !self.contains(point) {
            return Err(GeometryError::OutsideDomain);
        }
        let eval = |es: &[Expr]| -> Result<Vec<f64>, EvalError> {
            es.iter().map(|e| e.eval(point)).collect()
        };
        Ok(ChartJets {
            dim: self.dim,
            g: eval(&self.tables.g)?,
            dg: eval(&self.tables.dg)?,
            ddg: eval(&self.tables.ddg)?,
            p: eval(&self.tables.p)?,
            dp: eval(&self.tables.dp)?,
            ddp: eval(&self.tables.ddp)?,
        })
    }

    /// Metric and structure at a point, without conditioning checks.
    pub fn structure_at(&self, point: &[f64]) -> Result<PointStructure, GeometryError> {
        if !self.contains(point) {
            return Err(GeometryError::OutsideDomain);
        }
        let g: Vec<f64> = self.g.iter().map(|f| f.eval(point)).collect::<Result<_, _>>()?;
        let p: Vec<f64> = self.p.iter().map(|f| f.eval(point)).collect::<Result<_, _>>()?;
        let metric = MetricAtPoint::new(self.dim, &g)?;
        let p = ProductStructureAtPoint::new(self.dim, &p)?;
        Ok(PointStructure::new(metric, p)?)
    }

    pub fn diagnostics_at(&self, point: &[f64]) -> Result<StructureDiagnostics, GeometryError> {
        let s = self.structure_at(point)?;
        Ok(check_structure(s.metric(), s.p())?)
    }

    /// Fails on the first point whose structural residuals reach `threshold`
    /// or whose metric cannot be evaluated.
    pub fn validate(&self, points: &[Vec<f64>], threshold: f64) -> Result<(), ChartError> {
        for point in points {
            let diagnostics = self.diagnostics_at(point).map_err(|source| ChartError::Geometry {
                point: point.clone(),
                source,
            })?;
            if !diagnostics.passes(threshold) {
                return Err(ChartError::Structure {
                    point: point.clone(),
                    diagnostics,
                });
            }
        }
        Ok(())
    }

    /// `Gamma^k_ij` stored as `[k][i][j]`.
    pub fn christoffel(&self, point: &[f64]) -> Result<PointTensor, GeometryError> {
        let jets = self.jets_at(point)?;
        let metric = conditioned_metric(&jets)?;
        let first_kind = christoffel_first_kind(&jets);
        Ok(raise_first(&metric, &first_kind))
    }

    pub fn geometry_at(&self, point: &[f64]) -> Result<GeometryAtPoint, GeometryError> {
        let jets = self.jets_at(point)?;
        GeometryAtPoint::from_jets(point.to_vec(), &jets)
    }

    /// Geometry at many points; results keep the input order.
    pub fn geometry_at_points(
        &self,
        points: &[Vec<f64>],
    ) -> Vec<Result<GeometryAtPoint, GeometryError>> {
        points.par_iter().map(|p| self.geometry_at(p)).collect()
    }

    /// The same chart with `g` replaced by `c * g`.
    pub fn with_scaled_metric(&self, c: f64) -> ManifoldChart {
        let g = self
            .g
            .iter()
            .map(|f| {
                ScalarField::from_expr(Expr::mul(Expr::constant(c), f.expr().clone()), self.dim)
                    .expect("same dimension")
            })
            .collect();
        ManifoldChart::new(
            format!("{}*{c}", self.name),
            self.dim,
            g,
            self.p.clone(),
            self.domain.clone(),
        )
        .expect("scaling keeps a valid chart")
    }
}

/// Exact jets of the chart data at a point. Layouts: `g[i*d+j]`,
/// `dg[(a*d+i)*d+j] = d_a g_ij`, `ddg[((a*d+b)*d+i)*d+j] = d_a d_b g_ij`,
/// and the same for `P^i_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartJets {
    pub dim: usize,
    pub g: Vec<f64>,
    pub dg: Vec<f64>,
    pub ddg: Vec<f64>,
    pub p: Vec<f64>,
    pub dp: Vec<f64>,
    pub ddp: Vec<f64>,
}

fn conditioned_metric(jets: &ChartJets) -> Result<MetricAtPoint, GeometryError> {
    let metric = MetricAtPoint::new(jets.dim, &jets.g)?;
    if metric.min_eigenvalue() <= 0.0 {
        return Err(GeometryError::NotPositiveDefinite(metric.min_eigenvalue()));
    }
    if !metric.is_well_conditioned() {
        return Err(GeometryError::IllConditioned(metric.condition_estimate()));
    }
    Ok(metric)
}

/// `Gamma_lij = (d_i g_jl + d_j g_il - d_l g_ij) / 2`, stored `[l][i][j]`.
fn christoffel_first_kind(jets: &ChartJets) -> PointTensor {
    let d = jets.dim;
    let dg = |a: usize, i: usize, j: usize| jets.dg[(a * d + i) * d + j];
    PointTensor::from_fn3(d, |l, i, j| 0.5 * (dg(i, j, l) + dg(j, i, l) - dg(l, i, j)))
}

fn raise_first(metric: &MetricAtPoint, t: &PointTensor) -> PointTensor {
    let d = metric.dim();
    let gi = metric.inverse();
    PointTensor::from_fn3(d, |k, i, j| (0..d).map(|l| gi.at2(k, l) * t.at3(l, i, j)).sum())
}

/// Everything the classifier and identity checks need at one chart point.
#[derive(Debug, Clone)]
pub struct GeometryAtPoint {
    pub point: Vec<f64>,
    pub structure: PointStructure,
    /// `Gamma^k_ij` as `[k][i][j]`.
    pub christoffel: PointTensor,
    /// `d_a Gamma^k_ij` as `[a][k][i][j]`.
    pub d_christoffel: PointTensor,
    /// `F(x,y,z) = g((nabla_x P) y, z)`.
    pub f: PointTensor,
    /// `d_a F_ijk` as `[a][i][j][k]`.
    pub d_f: PointTensor,
    /// `(nabla_a F)(i,j,k)` as `[a][i][j][k]`.
    pub nabla_f: PointTensor,
    /// `R(x,y,z,w) = g(R(x,y)z, w)`.
    pub riemann: PointTensor,
    pub theta: PointTensor,
    /// `d_a theta_k` as `[a][k]`.
    pub d_theta: PointTensor,
    /// `(nabla_y theta) z` as `[y][z]`.
    pub nabla_theta: PointTensor,
    pub omega: PointTensor,
    pub theta_omega: f64,
    pub div_omega: f64,
    /// `A = nabla theta - theta (x) theta / 2n`.
    pub a: PointTensor,
    /// `A' = nabla theta + theta (x) theta / 2n`.
    pub a_prime: PointTensor,
    /// `K = (R + R(.,.,P.,P.)) / 2`.
    pub k: PointTensor,
    pub rho: PointTensor,
    pub tau: f64,
    pub rho_star: PointTensor,
    pub tau_star: f64,
    /// `max |(nabla_x theta) y - (nabla_y theta) x|`.
    pub closedness: f64,
}

impl GeometryAtPoint {
    pub fn from_jets(point: Vec<f64>, jets: &ChartJets) -> Result<Self, GeometryError> {
        let d = jets.dim;
        let n = (d / 2) as f64;
        let metric = conditioned_metric(jets)?;
        let p_struct = ProductStructureAtPoint::new(d, &jets.p)?;
        let g = metric.g().clone();
        let gi = metric.inverse().clone();

        let i3 = |a: usize, i: usize, j: usize| (a * d + i) * d + j;
        let i4 = |a: usize, b: usize, i: usize, j: usize| ((a * d + b) * d + i) * d + j;
        let p = |i: usize, j: usize| jets.p[i * d + j];
        let dp = |a: usize, i: usize, j: usize| jets.dp[i3(a, i, j)];
        let ddp = |a: usize, b: usize, i: usize, j: usize| jets.ddp[i4(a, b, i, j)];
        let dg = |a: usize, i: usize, j: usize| jets.dg[i3(a, i, j)];
        let ddg = |a: usize, b: usize, i: usize, j: usize| jets.ddg[i4(a, b, i, j)];

        // d_a g^ij = -g^ik (d_a g_kl) g^lj
        let mut dginv = vec![0.0; d * d * d];
        for a in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let mut acc = 0.0;
                    for k in 0..d {
                        for l in 0..d {
                            acc -= gi.at2(i, k) * dg(a, k, l) * gi.at2(l, j);
                        }
                    }
                    dginv[i3(a, i, j)] = acc;
                }
            }
        }

        let first_kind = christoffel_first_kind(jets);
        let d_first_kind = PointTensor::from_fn4(d, |a, l, i, j| {
            0.5 * (ddg(a, i, j, l) + ddg(a, j, i, l) - ddg(a, l, i, j))
        });
        let gamma = raise_first(&metric, &first_kind);
        let d_gamma = PointTensor::from_fn4(d, |a, k, i, j| {
            (0..d)
                .map(|l| dginv[i3(a, k, l)] * first_kind.at3(l, i, j) + gi.at2(k, l) * d_first_kind.at4(a, l, i, j))
                .sum()
        });

        // R^l_ijk = d_i G^l_jk - d_j G^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik
        let r_up = PointTensor::from_fn4(d, |i, j, k, l| {
            let mut v = d_gamma.at4(i, l, j, k) - d_gamma.at4(j, l, i, k);
            for m in 0..d {
                v += gamma.at3(l, i, m) * gamma.at3(m, j, k) - gamma.at3(l, j, m) * gamma.at3(m, i, k);
            }
            v
        });
        let riemann = PointTensor::from_fn4(d, |i, j, k, w| {
            (0..d).map(|l| g.at2(l, w) * r_up.at4(i, j, k, l)).sum()
        });

        // (nabla_i P)^l_j stored [i][l][j], and its partials [a][i][l][j].
        let nabla_p = PointTensor::from_fn3(d, |i, l, j| {
            let mut v = dp(i, l, j);
            for m in 0..d {
                v += gamma.at3(l, i, m) * p(m, j) - gamma.at3(m, i, j) * p(l, m);
            }
            v
        });
        let d_nabla_p = PointTensor::from_fn4(d, |a, i, l, j| {
            let mut v = ddp(a, i, l, j);
            for m in 0..d {
                v += d_gamma.at4(a, l, i, m) * p(m, j) + gamma.at3(l, i, m) * dp(a, m, j)
                    - d_gamma.at4(a, m, i, j) * p(l, m)
                    - gamma.at3(m, i, j) * dp(a, l, m);
            }
            v
        });

        let f = PointTensor::from_fn3(d, |i, j, k| {
            (0..d).map(|l| g.at2(l, k) * nabla_p.at3(i, l, j)).sum()
        });
        let d_f = PointTensor::from_fn4(d, |a, i, j, k| {
            (0..d)
                .map(|l| dg(a, l, k) * nabla_p.at3(i, l, j) + g.at2(l, k) * d_nabla_p.at4(a, i, l, j))
                .sum()
        });
        let nabla_f = PointTensor::from_fn4(d, |a, i, j, k| {
            let mut v = d_f.at4(a, i, j, k);
            for m in 0..d {
                v -= gamma.at3(m, a, i) * f.at3(m, j, k)
                    + gamma.at3(m, a, j) * f.at3(i, m, k)
                    + gamma.at3(m, a, k) * f.at3(i, j, m);
            }
            v
        });

        let theta = PointTensor::vector(
            (0..d)
                .map(|k| {
                    let mut acc = 0.0;
                    for i in 0..d {
                        for j in 0..d {
                            acc += gi.at2(i, j) * f.at3(i, j, k);
                        }
                    }
                    acc
                })
                .collect(),
        );
        let d_theta = PointTensor::from_fn2(d, |a, k| {
            let mut acc = 0.0;
            for i in 0..d {
                for j in 0..d {
                    acc += dginv[i3(a, i, j)] * f.at3(i, j, k) + gi.at2(i, j) * d_f.at4(a, i, j, k);
                }
            }
            acc
        });
        let nabla_theta = PointTensor::from_fn2(d, |i, j| {
            d_theta.at2(i, j) - (0..d).map(|k| gamma.at3(k, i, j) * theta.at1(k)).sum::<f64>()
        });
        let omega = PointTensor::vector(
            (0..d)
                .map(|i| (0..d).map(|j| gi.at2(i, j) * theta.at1(j)).sum())
                .collect(),
        );
        let theta_omega: f64 = (0..d).map(|i| theta.at1(i) * omega.at1(i)).sum();
        let structure = PointStructure::new(metric, p_struct)?;
        let div_omega = structure.trace(&nabla_theta);
        let tt = PointTensor::from_fn2(d, |i, j| theta.at1(i) * theta.at1(j) / (2.0 * n));
        let a = nabla_theta.sub(&tt);
        let a_prime = nabla_theta.add(&tt);
        let closedness = nabla_theta.distance(&nabla_theta.transpose());
        let k = riemann.add(&structure.p_last_two(&riemann)).scale(0.5);
        let scalars = structure
            .ricci_and_scalars(&riemann)
            .expect("rank-4 curvature of matching dimension");

        Ok(GeometryAtPoint {
            point,
            structure,
            christoffel: gamma,
            d_christoffel: d_gamma,
            f,
            d_f,
            nabla_f,
            riemann,
            theta,
            d_theta,
            nabla_theta,
            omega,
            theta_omega,
            div_omega,
            a,
            a_prime,
            k,
            rho: scalars.rho,
            tau: scalars.tau,
            rho_star: scalars.rho_star,
            tau_star: scalars.tau_star,
            closedness,
        })
    }

    pub fn dim(&self) -> usize {
        self.structure.dim()
    }

    pub fn n(&self) -> usize {
        self.structure.n()
    }

    /// `theta(P e_i)`.
    pub fn theta_p(&self) -> PointTensor {
        self.structure.p_slot(&self.theta, 0)
    }

    /// `theta^v(x) = (theta(x) - theta(Px)) / 2`.
    pub fn theta_vertical(&self) -> PointTensor {
        self.theta.sub(&self.theta_p()).scale(0.5)
    }

    /// `theta^h(x) = (theta(x) + theta(Px)) / 2`.
    pub fn theta_horizontal(&self) -> PointTensor {
        self.theta.add(&self.theta_p()).scale(0.5)
    }

    /// `max |F(x,y,z) - F(x,z,y)|` and `max |F(x,y,z) + F(x,Py,Pz)|`.
    pub fn f_symmetry_residuals(&self) -> (f64, f64) {
        let swap = self.f.distance(&self.f.permute(&[0, 2, 1]));
        let pp = self.structure.p_slot(&self.structure.p_slot(&self.f, 1), 2);
        (swap, self.f.add(&pp).max_abs())
    }

    /// `max |F(x,y,Pz) + F(x,Py,z)|`.
    pub fn f_p_exchange_residual(&self) -> f64 {
        let a = self.structure.p_slot(&self.f, 2);
        let b = self.structure.p_slot(&self.f, 1);
        a.add(&b).max_abs()
    }
}
