//! TOML scenario files.
//!
//! Every table is optional and defaults to the Table 1 desk setup:
//!
//! ```toml
//! [mesh]
//! bounds = [-1.0, 1.0]   # the cube [lo, hi]^3
//! n = 12                 # elements per side
//!
//! [loads]
//! patches = 4            # patches per face side, must divide n
//! mode = "all"           # all | normal_only | tangential_only
//!
//! [physics]
//! omega = 50.0
//! dirichlet = []         # clamped faces: "+x", "-x", "+y", "-y", "+z", "-z"
//!
//! [background]
//! lambda = 6.0e5
//! mu = 6.0e3
//! rho = 3.0e3
//!
//! [[inclusions]]
//! min = [-0.667, -0.667, -0.667]
//! max = [-0.333, -0.333, -0.333]
//! mu = 2.0e4             # any of lambda / mu / rho; missing ones keep the background
//!
//! [test]
//! k = 6                  # blocks per side, must divide n
//!
//! [alpha]
//! policy = "from_contrast"   # or "explicit" with d = [a1, a2, a3] and mu = a2
//! c = 0.0134
//!
//! [thresholds]           # omit a key to use the gap advisor
//! d = 23
//! d2 = 14
//!
//! [tolerances]
//! eig_rtol = 1e-10
//! solve_rtol = 1e-8
//!
//! [output]
//! dir = "out"
//! vtk = true
//! seed = 1
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use elastomono::materials::{
    alphas_from_contrast, Alpha, Inclusion, Lame, DEFAULT_ALPHA_SCALE, TABLE1_BACKGROUND,
};
use elastomono::mesh::{Aabb, CubeFace};
use elastomono::ntd::LoadMode;
use elastomono::recon::{Threshold, DEFAULT_EIG_RTOL};
use elastomono::fem::DEFAULT_SOLVE_RTOL;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub mesh: MeshSpec,
    pub loads: LoadSpec,
    pub physics: PhysicsSpec,
    pub background: LameSpec,
    pub inclusions: Vec<InclusionSpec>,
    pub test: TestSpec,
    pub alpha: AlphaSpec,
    pub thresholds: ThresholdSpec,
    pub tolerances: ToleranceSpec,
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSpec {
    pub bounds: [f64; 2],
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadSpec {
    pub patches: usize,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSpec {
    pub omega: f64,
    pub dirichlet: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LameSpec {
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestSpec {
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlphaSpec {
    pub policy: String,
    pub c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d2: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceSpec {
    pub eig_rtol: f64,
    pub solve_rtol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: String,
    pub vtk: bool,
    pub seed: u64,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self {
            bounds: [-1.0, 1.0],
            n: 12,
        }
    }
}

impl Default for LoadSpec {
    fn default() -> Self {
        Self {
            patches: 4,
            mode: LoadMode::All.name().to_string(),
        }
    }
}

impl Default for PhysicsSpec {
    fn default() -> Self {
        Self {
            omega: 50.0,
            dirichlet: Vec::new(),
        }
    }
}

impl Default for LameSpec {
    fn default() -> Self {
        Self::from(TABLE1_BACKGROUND)
    }
}

impl From<Lame> for LameSpec {
    fn from(l: Lame) -> Self {
        Self {
            lambda: l.lambda,
            mu: l.mu,
            rho: l.rho,
        }
    }
}

impl Default for TestSpec {
    fn default() -> Self {
        Self { k: 6 }
    }
}

impl Default for AlphaSpec {
    fn default() -> Self {
        Self {
            policy: "from_contrast".to_string(),
            c: DEFAULT_ALPHA_SCALE,
            d: None,
            mu: None,
        }
    }
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self {
            eig_rtol: DEFAULT_EIG_RTOL,
            solve_rtol: DEFAULT_SOLVE_RTOL,
        }
    }
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: "out".to_string(),
            vtk: false,
            seed: 1,
        }
    }
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            mesh: MeshSpec::default(),
            loads: LoadSpec::default(),
            physics: PhysicsSpec::default(),
            background: LameSpec::default(),
            inclusions: Vec::new(),
            test: TestSpec::default(),
            alpha: AlphaSpec::default(),
            thresholds: ThresholdSpec::default(),
            tolerances: ToleranceSpec::default(),
            output: OutputSpec::default(),
        }
    }
}

/// The two test weights: the full-support test and the `μ` test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestWeights {
    pub d: Alpha,
    pub mu: f64,
}

/// Only the inputs that change forward solutions; this is what provenance
/// hashes cover.
#[derive(Serialize)]
struct ForwardKey<'a> {
    mesh: &'a MeshSpec,
    loads: &'a LoadSpec,
    physics: &'a PhysicsSpec,
    background: &'a LameSpec,
    inclusions: &'a [InclusionSpec],
    solve_rtol: f64,
}

impl Scenario {
    pub fn parse(text: &str) -> CliResult<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| CliError::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn forward_key(&self) -> String {
        let key = ForwardKey {
            mesh: &self.mesh,
            loads: &self.loads,
            physics: &self.physics,
            background: &self.background,
            inclusions: &self.inclusions,
            solve_rtol: self.tolerances.solve_rtol,
        };
        toml::to_string(&key).expect("forward key serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Scenario(msg));
        let [lo, hi] = self.mesh.bounds;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad(format!("mesh.bounds must satisfy lo < hi, got [{lo}, {hi}]"));
        }
        let n = self.mesh.n;
        if n < 2 {
            return bad(format!("mesh.n must be at least 2, got {n}"));
        }
        let m = self.loads.patches;
        if m == 0 || n % m != 0 {
            return bad(format!("loads.patches = {m} must divide mesh.n = {n}"));
        }
        let k = self.test.k;
        if k == 0 || n % k != 0 {
            return bad(format!("test.k = {k} must divide mesh.n = {n}"));
        }
        if LoadMode::parse(&self.loads.mode).is_none() {
            return bad(format!("unknown load mode {:?}", self.loads.mode));
        }
        if !(self.physics.omega >= 0.0 && self.physics.omega.is_finite()) {
            return bad(format!("physics.omega must be finite and >= 0, got {}", self.physics.omega));
        }
        self.dirichlet_faces()?;
        self.background_lame().check()?;
        let bounds = self.bounds();
        for (i, inc) in self.inclusions.iter().enumerate() {
            let r = Aabb::new(inc.min, inc.max);
            if (0..3).any(|a| !(r.min[a] < r.max[a])) {
                return bad(format!("inclusion {i} has an empty box"));
            }
            if !(bounds.contains(r.min) && bounds.contains(r.max)) {
                return bad(format!("inclusion {i} is not inside the mesh bounds"));
            }
            for (name, v) in [("lambda", inc.lambda), ("mu", inc.mu), ("rho", inc.rho)] {
                if let Some(v) = v {
                    if !(v > 0.0 && v.is_finite()) {
                        return bad(format!("inclusion {i}: {name} must be positive, got {v}"));
                    }
                }
            }
        }
        match self.alpha.policy.as_str() {
            "from_contrast" => {
                if !(self.alpha.c > 0.0 && self.alpha.c.is_finite()) {
                    return bad(format!("alpha.c must be positive, got {}", self.alpha.c));
                }
            }
            "explicit" => {
                let (Some(d), Some(mu)) = (self.alpha.d, self.alpha.mu) else {
                    return bad("alpha.policy = \"explicit\" needs alpha.d and alpha.mu".into());
                };
                if d.iter().chain([&mu]).any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return bad("explicit alpha weights must be finite and >= 0".into());
                }
            }
            other => return bad(format!("unknown alpha policy {other:?}")),
        }
        let t = &self.tolerances;
        if !(t.eig_rtol > 0.0 && t.solve_rtol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        Ok(())
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::cube(self.mesh.bounds[0], self.mesh.bounds[1])
    }

    pub fn mode(&self) -> LoadMode {
        LoadMode::parse(&self.loads.mode).expect("validated")
    }

    pub fn background_lame(&self) -> Lame {
        Lame::new(self.background.lambda, self.background.mu, self.background.rho)
    }

    pub fn inclusions(&self) -> Vec<Inclusion> {
        self.inclusions
            .iter()
            .map(|i| Inclusion {
                region: Aabb::new(i.min, i.max),
                lambda: i.lambda,
                mu: i.mu,
                rho: i.rho,
            })
            .collect()
    }

    pub fn dirichlet_faces(&self) -> CliResult<BTreeSet<CubeFace>> {
        self.physics
            .dirichlet
            .iter()
            .map(|s| CubeFace::parse(s).ok_or_else(|| CliError::Scenario(format!("unknown face {s:?}"))))
            .collect()
    }

    /// Weights for both tests. With `from_contrast` the full-support test
    /// uses `(α₁, 0, α₃)` and falls back to `(0, α₂, 0)` when that is zero.
    pub fn weights(&self) -> TestWeights {
        if self.alpha.policy == "explicit" {
            let d = self.alpha.d.unwrap_or_default();
            return TestWeights {
                d: Alpha::new(d[0], d[1], d[2]),
                mu: self.alpha.mu.unwrap_or_default(),
            };
        }
        let b = self.background_lame();
        let mut dl = 0.0f64;
        let mut dm = 0.0f64;
        let mut dr = 0.0f64;
        for i in &self.inclusions {
            dl = dl.max(i.lambda.map_or(0.0, |v| v - b.lambda));
            dm = dm.max(i.mu.map_or(0.0, |v| v - b.mu));
            dr = dr.max(i.rho.map_or(0.0, |v| b.rho - v));
        }
        let a = alphas_from_contrast(self.alpha.c, dl, dm, dr, self.physics.omega);
        let mut d = Alpha::new(a.lambda, 0.0, a.rho);
        if d.is_zero() {
            d = Alpha::new(0.0, a.mu, 0.0);
        }
        TestWeights { d, mu: a.mu }
    }

    pub fn thresholds(&self) -> (Threshold, Threshold) {
        let t = |v: Option<usize>| v.map_or(Threshold::Auto, Threshold::Fixed);
        (t(self.thresholds.d), t(self.thresholds.d2))
    }
}
