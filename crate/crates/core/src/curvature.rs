//! Curvature-like tensors at a point.
//!
//! Slot conventions: `L(x,y,z,w)` is stored as `L[x][y][z][w]`. The Ricci
//! contraction is `rho(y,z) = g^ij L(e_i,y,z,e_j)` and the associated one
//! composes the *last* slot with `P`: `rho*(y,z) = g^ij L(e_i,y,z,Pe_j)`.
//! Both follow the definitions used throughout this crate's identity checks;
//! other references sometimes contract a different slot pair.

use thiserror::Error;

use crate::tensor::{
    apply_p, tilde_metric, MetricAtPoint, PointTensor, ProductStructureAtPoint, TensorError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurvatureError {
    #[error("expected a rank-{expected} tensor, got rank {got}")]
    RankMismatch { expected: usize, got: usize },
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("the four-dimensional decomposition needs dim 4, got {0}")]
    NotFourDimensional(usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Metric, product structure and `g~` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointStructure {
    metric: MetricAtPoint,
    p: ProductStructureAtPoint,
    tilde: PointTensor,
}

impl PointStructure {
    pub fn new(metric: MetricAtPoint, p: ProductStructureAtPoint) -> Result<Self, TensorError> {
        let tilde = tilde_metric(&metric, &p)?;
        Ok(PointStructure { metric, p, tilde })
    }

    /// Flat `g = I`, `P = diag(+1 x n, -1 x n)`.
    pub fn canonical(n: usize) -> Self {
        PointStructure::new(MetricAtPoint::identity(2 * n), ProductStructureAtPoint::canonical(n))
            .expect("canonical structure")
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn n(&self) -> usize {
        self.metric.n()
    }

    pub fn metric(&self) -> &MetricAtPoint {
        &self.metric
    }

    pub fn g(&self) -> &PointTensor {
        self.metric.g()
    }

    pub fn g_inv(&self) -> &PointTensor {
        self.metric.inverse()
    }

    pub fn p(&self) -> &ProductStructureAtPoint {
        &self.p
    }

    /// `g~(x,y) = g(x,Py)`.
    pub fn tilde(&self) -> &PointTensor {
        &self.tilde
    }

    /// `g + g~` (`sign = +1`) or `g - g~` (`sign = -1`).
    pub fn g_plus(&self, sign: f64) -> PointTensor {
        self.g().add(&self.tilde.scale(sign))
    }

    /// `g^ij S_ij`.
    pub fn trace(&self, s: &PointTensor) -> f64 {
        let gi = self.g_inv();
        s.data().iter().zip(gi.data()).map(|(a, b)| a * b).sum()
    }

    /// `L(x,y,Pz,Pw)`.
    pub fn p_last_two(&self, l: &PointTensor) -> PointTensor {
        let t = apply_p(l, &self.p, 2).expect("rank-4 tensor");
        apply_p(&t, &self.p, 3).expect("rank-4 tensor")
    }

    /// `T(Px, Py, ...)` on every slot.
    pub fn p_all(&self, t: &PointTensor) -> PointTensor {
        (0..t.rank()).fold(t.clone(), |acc, s| apply_p(&acc, &self.p, s).expect("slot in range"))
    }

    /// Composes one slot with `P`.
    pub fn p_slot(&self, t: &PointTensor, slot: usize) -> PointTensor {
        apply_p(t, &self.p, slot).expect("slot in range")
    }

    fn expect_shape(&self, t: &PointTensor, rank: usize) -> Result<(), CurvatureError> {
        if t.rank() != rank {
            return Err(CurvatureError::RankMismatch {
                expected: rank,
                got: t.rank(),
            });
        }
        if t.dim() != self.dim() {
            return Err(CurvatureError::DimensionMismatch {
                expected: self.dim(),
                got: t.dim(),
            });
        }
        Ok(())
    }

    /// `psi1(S)(x,y,z,w) = g(y,z)S(x,w) - g(x,z)S(y,w) + S(y,z)g(x,w) - S(x,z)g(y,w)`.
    pub fn psi1(&self, s: &PointTensor) -> Result<PointTensor, CurvatureError> {
        self.expect_shape(s, 2)?;
        Ok(psi1_with(self.g(), s))
    }

    /// `psi2(S)(x,y,z,w) = psi1(S)(x,y,Pz,Pw)`.
    pub fn psi2(&self, s: &PointTensor) -> Result<PointTensor, CurvatureError> {
        Ok(self.p_last_two(&self.psi1(s)?))
    }

    /// `(psi1 - psi2)(S)`.
    pub fn psi_difference(&self, s: &PointTensor) -> Result<PointTensor, CurvatureError> {
        let p1 = self.psi1(s)?;
        Ok(p1.sub(&self.p_last_two(&p1)))
    }

    pub fn pi_tensors(&self) -> PiTensors {
        let psi1_g = psi1_with(self.g(), self.g());
        let pi1 = psi1_g.scale(0.5);
        let pi2 = self.p_last_two(&psi1_g).scale(0.5);
        let pi3 = psi1_with(self.g(), &self.tilde);
        let pi3_alt = self.p_last_two(&pi3);
        PiTensors {
            pi3_forms_gap: pi3.distance(&pi3_alt),
            pi1,
            pi2,
            pi3,
        }
    }

    /// Residuals of antisymmetry, first Bianchi and the `P`-tensor property.
    pub fn check_properties(&self, l: &PointTensor) -> Result<PropertyResiduals, CurvatureError> {
        self.expect_shape(l, 4)?;
        let d = self.dim();
        let mut antisym: f64 = 0.0;
        let mut bianchi: f64 = 0.0;
        for x in 0..d {
            for y in 0..d {
                for z in 0..d {
                    for w in 0..d {
                        let v = l.at4(x, y, z, w);
                        antisym = antisym
                            .max((v + l.at4(y, x, z, w)).abs())
                            .max((v + l.at4(x, y, w, z)).abs());
                        let cyc = v + l.at4(y, z, x, w) + l.at4(z, x, y, w);
                        bianchi = bianchi.max(cyc.abs());
                    }
                }
            }
        }
        let p_tensor = self.p_last_two(l).distance(l);
        Ok(PropertyResiduals {
            antisym,
            bianchi,
            p_tensor,
            scale: l.max_abs(),
        })
    }

    /// `rho(L)`, `tau(L)` and their associated versions.
    pub fn ricci_and_scalars(&self, l: &PointTensor) -> Result<RicciScalars, CurvatureError> {
        self.expect_shape(l, 4)?;
        let d = self.dim();
        let gi = self.g_inv();
        // g^ij P^m_j: raises the last slot through P.
        let gp = PointTensor::from_fn2(d, |i, m| (0..d).map(|j| gi.at2(i, j) * self.p.at(m, j)).sum());
        let mut rho = PointTensor::zeros(2, d);
        let mut rho_star = PointTensor::zeros(2, d);
        for y in 0..d {
            for z in 0..d {
                let mut r = 0.0;
                let mut rs = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        let v = l.at4(i, y, z, j);
                        r += gi.at2(i, j) * v;
                        rs += gp.at2(i, j) * v;
                    }
                }
                rho.set(&[y, z], r);
                rho_star.set(&[y, z], rs);
            }
        }
        Ok(RicciScalars {
            tau: self.trace(&rho),
            tau_star: self.trace(&rho_star),
            rho,
            rho_star,
        })
    }

    /// Four-dimensional decomposition
    /// `L = (1/8){ tau(L)(pi1 + pi2) + tau*(L) pi3 }`, which holds exactly
    /// when `L` is a Riemannian P-tensor.
    pub fn decompose_dim4(&self, l: &PointTensor) -> Result<Decomposition, CurvatureError> {
        if self.dim() != 4 {
            return Err(CurvatureError::NotFourDimensional(self.dim()));
        }
        let scalars = self.ricci_and_scalars(l)?;
        let pis = self.pi_tensors();
        let reconstruction = self.dim4_form(&pis, scalars.tau, scalars.tau_star);
        Ok(Decomposition {
            tau: scalars.tau,
            tau_star: scalars.tau_star,
            residual: l.distance(&reconstruction),
            reconstruction,
        })
    }

    /// `(1/8){ a (pi1 + pi2) + b pi3 }`.
    pub fn dim4_form(&self, pis: &PiTensors, a: f64, b: f64) -> PointTensor {
        pis.pi1
            .add(&pis.pi2)
            .scale(a / 8.0)
            .add(&pis.pi3.scale(b / 8.0))
    }
}

fn psi1_with(g: &PointTensor, s: &PointTensor) -> PointTensor {
    PointTensor::from_fn4(g.dim(), |x, y, z, w| {
        g.at2(y, z) * s.at2(x, w) - g.at2(x, z) * s.at2(y, w) + s.at2(y, z) * g.at2(x, w)
            - s.at2(x, z) * g.at2(y, w)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiTensors {
    pub pi1: PointTensor,
    pub pi2: PointTensor,
    pub pi3: PointTensor,
    /// `max |psi1(g~) - psi2(g~)|`; zero up to rounding for a valid structure.
    pub pi3_forms_gap: f64,
}

/// Raw max-norm residuals; `scale` is `max |L|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropertyResiduals {
    pub antisym: f64,
    pub bianchi: f64,
    pub p_tensor: f64,
    pub scale: f64,
}

impl PropertyResiduals {
    /// Residuals divided by `1 + max |L|`.
    pub fn normalized(&self) -> PropertyResiduals {
        let s = 1.0 + self.scale;
        PropertyResiduals {
            antisym: self.antisym / s,
            bianchi: self.bianchi / s,
            p_tensor: self.p_tensor / s,
            scale: self.scale,
        }
    }

    pub fn curvature_like(&self) -> f64 {
        self.antisym.max(self.bianchi)
    }

    pub fn max(&self) -> f64 {
        self.curvature_like().max(self.p_tensor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RicciScalars {
    pub rho: PointTensor,
    pub tau: f64,
    pub rho_star: PointTensor,
    pub tau_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub tau: f64,
    pub tau_star: f64,
    pub reconstruction: PointTensor,
    pub residual: f64,
}
