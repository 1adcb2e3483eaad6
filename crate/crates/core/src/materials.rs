//! Piecewise-constant isotropic material fields: a homogeneous background
//! with axis-aligned box inclusions.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mesh::{voxel_box_elements, Aabb, Mesh};

/// Lamé parameters (Pa) and density (kg/m³).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lame {
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
}

impl Lame {
    pub const fn new(lambda: f64, mu: f64, rho: f64) -> Self {
        Self { lambda, mu, rho }
    }

    pub fn check(&self) -> Result<()> {
        for (name, value) in [("lambda", self.lambda), ("mu", self.mu), ("rho", self.rho)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveParameter { name, value });
            }
        }
        Ok(())
    }
}

/// Background medium of the reference experiment.
pub const TABLE1_BACKGROUND: Lame = Lame::new(6.0e5, 6.0e3, 3.0e3);
/// Inclusion medium of the reference experiment (density unchanged).
pub const TABLE1_INCLUSION: Lame = Lame::new(2.0e6, 2.0e4, 3.0e3);
/// Experimentally calibrated scale for the linearization weights.
pub const DEFAULT_ALPHA_SCALE: f64 = 0.0134;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inclusion {
    pub region: Aabb,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MaterialField {
    pub background: Lame,
    pub inclusions: Vec<Inclusion>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
}

/// Supports of `λ - λ₀`, `μ - μ₀` and `ρ₀ - ρ` as sorted element lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PerturbationSupports {
    pub d1: Vec<usize>,
    pub d2: Vec<usize>,
    pub d3: Vec<usize>,
}

impl PerturbationSupports {
    pub fn union(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.d1.iter().chain(&self.d2).chain(&self.d3).copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

impl MaterialField {
    pub fn homogeneous(mesh: &Mesh, background: Lame) -> Result<Self> {
        Self::with_inclusions(mesh, background, &[])
    }

    /// Paints the inclusions over the background in list order, so a later
    /// inclusion overrides an earlier one where they overlap.
    pub fn with_inclusions(mesh: &Mesh, background: Lame, inclusions: &[Inclusion]) -> Result<Self> {
        background.check()?;
        let ne = mesh.num_elements();
        let mut lambda = vec![background.lambda; ne];
        let mut mu = vec![background.mu; ne];
        let mut rho = vec![background.rho; ne];
        for inc in inclusions {
            if !inc.region.intersects(&mesh.bounds) {
                return Err(Error::InclusionOutside);
            }
            let over = Lame::new(
                inc.lambda.unwrap_or(background.lambda),
                inc.mu.unwrap_or(background.mu),
                inc.rho.unwrap_or(background.rho),
            );
            over.check()?;
            for e in voxel_box_elements(mesh, &inc.region) {
                if let Some(v) = inc.lambda {
                    lambda[e] = v;
                }
                if let Some(v) = inc.mu {
                    mu[e] = v;
                }
                if let Some(v) = inc.rho {
                    rho[e] = v;
                }
            }
        }
        Ok(Self {
            background,
            inclusions: inclusions.to_vec(),
            lambda,
            mu,
            rho,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.lambda.len()
    }

    pub fn supports(&self) -> PerturbationSupports {
        let b = self.background;
        let pick = |v: &[f64], r: f64| (0..v.len()).filter(|&e| v[e] != r).collect::<Vec<_>>();
        PerturbationSupports {
            d1: pick(&self.lambda, b.lambda),
            d2: pick(&self.mu, b.mu),
            d3: pick(&self.rho, b.rho),
        }
    }

    /// Multiplies λ and μ by `t` (density untouched).
    pub fn scaled_stiffness(&self, t: f64) -> Self {
        let mut out = self.clone();
        out.lambda.iter_mut().for_each(|v| *v *= t);
        out.mu.iter_mut().for_each(|v| *v *= t);
        out
    }

    /// FNV-1a over the bit patterns of all per-element values.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.lambda.iter().chain(&self.mu).chain(&self.rho) {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// P- and S-wavelengths `2π v / ω` of the background medium.
pub fn wavelengths(lambda0: f64, mu0: f64, rho0: f64, omega: f64) -> (f64, f64) {
    let vp = ((lambda0 + 2.0 * mu0) / rho0).sqrt();
    let vs = (mu0 / rho0).sqrt();
    (2.0 * PI * vp / omega, 2.0 * PI * vs / omega)
}

/// Linearization weights `(α₁, α₂, α₃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alpha {
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
}

impl Alpha {
    pub const ZERO: Alpha = Alpha::new(0.0, 0.0, 0.0);

    pub const fn new(lambda: f64, mu: f64, rho: f64) -> Self {
        Self { lambda, mu, rho }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.lambda, self.mu, self.rho]
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.lambda * s, self.mu * s, self.rho * s)
    }

    pub fn is_zero(&self) -> bool {
        self.lambda == 0.0 && self.mu == 0.0 && self.rho == 0.0
    }

    pub fn check_nonnegative(&self) -> Result<()> {
        if self.as_array().iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::NegativeAlpha(self.as_array()));
        }
        Ok(())
    }
}

/// Weights calibrated from the known inclusion contrast:
/// `α₁ = C·Δλ`, `α₂ = 2C·Δμ`, `α₃ = C·ω²·(ρ₀ − ρ₁)`, each clamped at zero.
///
/// The contrast is the largest per-element deviation from the background.
pub fn default_alphas(field: &MaterialField, c: f64, omega: f64) -> Alpha {
    let b = field.background;
    let max_dev = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&x| f(x)).fold(0.0f64, f64::max);
    let dl = max_dev(&field.lambda, &|x| x - b.lambda);
    let dm = max_dev(&field.mu, &|x| x - b.mu);
    let dr = max_dev(&field.rho, &|x| b.rho - x);
    alphas_from_contrast(c, dl, dm, dr, omega)
}

pub fn alphas_from_contrast(c: f64, d_lambda: f64, d_mu: f64, d_rho: f64, omega: f64) -> Alpha {
    Alpha::new(
        (c * d_lambda).max(0.0),
        (2.0 * c * d_mu).max(0.0),
        (c * omega * omega * d_rho).max(0.0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_cube_mesh;

    fn mesh() -> Mesh {
        build_cube_mesh(Aabb::cube(-1.0, 1.0), 4).unwrap()
    }

    #[test]
    fn wavelength_values() {
        let (lp, ls) = wavelengths(6.0e5, 6.0e3, 3.0e3, 50.0);
        assert!((ls - 0.1777).abs() < 1e-4, "{ls}");
        assert!((lp - 1.795).abs() < 1e-3, "{lp}");
        let (_, ls) = wavelengths(1.0, 2.0, 2.0, 2.0 * PI);
        assert!((ls - 1.0).abs() < 1e-14);
    }

    #[test]
    fn calibrated_weights() {
        let m = mesh();
        let inc = Inclusion {
            region: Aabb::new([0.0; 3], [1.0; 3]),
            lambda: Some(TABLE1_INCLUSION.lambda),
            mu: Some(TABLE1_INCLUSION.mu),
            rho: None,
        };
        let f = MaterialField::with_inclusions(&m, TABLE1_BACKGROUND, &[inc]).unwrap();
        let a = default_alphas(&f, DEFAULT_ALPHA_SCALE, 50.0);
        assert!((a.lambda - 18760.0).abs() <= 1e-9 * 18760.0);
        assert!((a.mu - 375.2).abs() <= 1e-9 * 375.2);
        assert_eq!(a.rho, 0.0);

        let flat = MaterialField::homogeneous(&m, TABLE1_BACKGROUND).unwrap();
        assert!(default_alphas(&flat, 3.7, 50.0).is_zero());
    }

    #[test]
    fn weights_are_linear_in_scale_and_contrast() {
        let a = alphas_from_contrast(0.5, 10.0, 4.0, 2.0, 3.0);
        let b = alphas_from_contrast(1.0, 10.0, 4.0, 2.0, 3.0);
        let c = alphas_from_contrast(0.5, 20.0, 8.0, 4.0, 3.0);
        assert_eq!(a.scale(2.0), b);
        assert_eq!(b, c);
    }

    #[test]
    fn supports_and_background() {
        let m = mesh();
        let flat = MaterialField::homogeneous(&m, TABLE1_BACKGROUND).unwrap();
        assert!(flat.supports().union().is_empty());
        assert!(flat.lambda.iter().all(|&v| v == 6.0e5));

        let inc = Inclusion {
            region: Aabb::new([0.0; 3], [1.0; 3]),
            lambda: None,
            mu: Some(2.0e4),
            rho: None,
        };
        let f = MaterialField::with_inclusions(&m, TABLE1_BACKGROUND, &[inc]).unwrap();
        let s = f.supports();
        assert!(s.d1.is_empty() && s.d3.is_empty());
        assert_eq!(s.d2.len(), 8);
        for e in 0..m.num_elements() {
            if !s.d2.contains(&e) {
                assert_eq!(f.mu[e], TABLE1_BACKGROUND.mu);
            }
        }
    }

    #[test]
    fn later_inclusions_win() {
        let m = mesh();
        let a = Inclusion {
            region: Aabb::new([-1.0; 3], [0.5; 3]),
            lambda: Some(1.0e6),
            mu: None,
            rho: None,
        };
        let b = Inclusion {
            region: Aabb::new([0.0; 3], [1.0; 3]),
            lambda: Some(3.0e6),
            mu: None,
            rho: None,
        };
        let f = MaterialField::with_inclusions(&m, TABLE1_BACKGROUND, &[a, b]).unwrap();
        let e = m.element_index([2, 2, 2]);
        assert_eq!(f.lambda[e], 3.0e6);
        let g = MaterialField::with_inclusions(&m, TABLE1_BACKGROUND, &[b, a]).unwrap();
        assert_eq!(g.lambda[e], 1.0e6);
    }

    #[test]
    fn rejects_nonpositive() {
        let m = mesh();
        assert!(MaterialField::homogeneous(&m, Lame::new(1.0, 0.0, 1.0)).is_err());
        let inc = Inclusion {
            region: Aabb::new([0.0; 3], [1.0; 3]),
            lambda: Some(-2.0),
            mu: None,
            rho: None,
        };
        assert!(matches!(
            MaterialField::with_inclusions(&m, TABLE1_BACKGROUND, &[inc]),
            Err(Error::NonPositiveParameter { name: "lambda", .. })
        ));
        let far = Inclusion {
            region: Aabb::cube(5.0, 6.0),
            lambda: Some(2.0),
            mu: None,
            rho: None,
        };
        assert!(matches!(
            MaterialField::with_inclusions(&m, TABLE1_BACKGROUND, &[far]),
            Err(Error::InclusionOutside)
        ));
    }
}
