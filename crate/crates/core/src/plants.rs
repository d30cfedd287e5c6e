//! Executable system models: LTI, polytopic (convex hull of vertex pairs) and
//! Lur'e (linear part in feedback with a sector-bounded static nonlinearity).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError, MatrixRecord};

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid mixing weights: {0}")]
    Weights(String),
    #[error("nonlinearity evaluation failed at z = {z}: {reason}")]
    Nonlinearity { z: f64, reason: String },
    #[error("invalid plant: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// `x(k+1) = A x(k) + B u(k)`
#[derive(Debug, Clone, PartialEq)]
pub struct LtiPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LtiPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, PlantError> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(PlantError::Dimension(format!("A must be square and non-empty, got {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(PlantError::Dimension(format!("B is {}x{}, expected {}xm with m >= 1", b.nrows(), b.ncols(), a.nrows())));
        }
        Ok(Self { a, b })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        check_len("x", x, self.n())?;
        check_len("u", u, self.m())?;
        Ok(&self.a * x + &self.b * u)
    }

    /// `A + B K`
    pub fn closed_loop(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a + &self.b * k
    }
}

fn check_len(name: &str, v: &DVector<f64>, want: usize) -> Result<(), PlantError> {
    if v.len() != want {
        return Err(PlantError::Dimension(format!("{name} has length {}, expected {want}", v.len())));
    }
    Ok(())
}

/// Convenience wrapper around [`LtiPlant::step`].
pub fn step_lti(plant: &LtiPlant, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
    plant.step(x, u)
}

/// Polytopic plant: vertex pairs `(A_j, B_j)` and the mixture used in simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopicPlant {
    pub vertices: Vec<LtiPlant>,
    pub weights: Vec<f64>,
}

impl PolytopicPlant {
    pub fn new(vertices: Vec<LtiPlant>, weights: Vec<f64>) -> Result<Self, PlantError> {
        let first = vertices.first().ok_or_else(|| PlantError::Invalid("polytope needs at least one vertex".into()))?;
        let (n, m) = (first.n(), first.m());
        if let Some(j) = vertices.iter().position(|v| v.n() != n || v.m() != m) {
            return Err(PlantError::Dimension(format!("vertex {} has shape ({}, {}), vertex 0 has ({n}, {m})", j, vertices[j].n(), vertices[j].m())));
        }
        check_weights(&weights, vertices.len())?;
        Ok(Self { vertices, weights })
    }

    pub fn n(&self) -> usize {
        self.vertices[0].n()
    }

    pub fn m(&self) -> usize {
        self.vertices[0].m()
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self, PlantError> {
        Self::new(self.vertices.clone(), weights)
    }
}

fn check_weights(weights: &[f64], count: usize) -> Result<(), PlantError> {
    if weights.len() != count {
        return Err(PlantError::Weights(format!("{} weights for {count} vertices", weights.len())));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(PlantError::Weights("weights must be finite and nonnegative".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(PlantError::Weights(format!("weights sum to {sum}, expected 1")));
    }
    Ok(())
}

/// `(Σ λ_j A_j, Σ λ_j B_j)`.
pub fn interpolate_vertices(plant: &PolytopicPlant) -> Result<LtiPlant, PlantError> {
    check_weights(&plant.weights, plant.vertices.len())?;
    let (n, m) = (plant.n(), plant.m());
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    for (v, &w) in plant.vertices.iter().zip(&plant.weights) {
        a += &v.a * w;
        b += &v.b * w;
    }
    LtiPlant::new(a, b)
}

/// Scalar nonlinearity applied componentwise to `z = Hx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    Zero,
    /// `sin z + z`, inside the sector `[0, 2]`.
    SinPlusId,
    /// `slope · z`
    Linear { slope: f64 },
    /// `clamp(z, -limit, limit)`, inside `[0, 1]`.
    Saturation { limit: f64 },
    /// Piecewise-linear through `(z[i], value[i])`; `z` strictly increasing.
    /// Evaluation outside `[z[0], z[last]]` is an error.
    Tabulated { z: Vec<f64>, value: Vec<f64> },
}

impl Nonlinearity {
    pub fn eval(&self, z: f64) -> Result<f64, PlantError> {
        let out = match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::SinPlusId => z.sin() + z,
            Nonlinearity::Linear { slope } => slope * z,
            Nonlinearity::Saturation { limit } => z.clamp(-limit, *limit),
            Nonlinearity::Tabulated { z: grid, value } => tabulated(grid, value, z)?,
        };
        if !out.is_finite() {
            return Err(PlantError::Nonlinearity { z, reason: "non-finite output".into() });
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        match self {
            Nonlinearity::Saturation { limit } if !(*limit > 0.0) => {
                Err(PlantError::Invalid(format!("saturation limit must be positive, got {limit}")))
            }
            Nonlinearity::Tabulated { z, value } => {
                if z.len() < 2 || z.len() != value.len() {
                    return Err(PlantError::Invalid("tabulated nonlinearity needs >= 2 matching (z, value) points".into()));
                }
                if z.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(PlantError::Invalid("tabulated z must be strictly increasing".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn tabulated(grid: &[f64], value: &[f64], z: f64) -> Result<f64, PlantError> {
    let (first, last) = (grid[0], grid[grid.len() - 1]);
    if !(z >= first && z <= last) {
        return Err(PlantError::Nonlinearity { z, reason: format!("outside table range [{first}, {last}]") });
    }
    let i = grid.partition_point(|&g| g <= z).clamp(1, grid.len() - 1);
    let t = (z - grid[i - 1]) / (grid[i] - grid[i - 1]);
    Ok(value[i - 1] + t * (value[i] - value[i - 1]))
}

/// `x(k+1) = A x + B u + E γ(H x)`
#[derive(Debug, Clone, PartialEq)]
pub struct LurePlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub gamma: Nonlinearity,
    /// Sector slope, p×p (1×1 in the scalar case).
    pub beta: DMatrix<f64>,
}

impl LurePlant {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        e: DMatrix<f64>,
        h: DMatrix<f64>,
        gamma: Nonlinearity,
        beta: DMatrix<f64>,
    ) -> Result<Self, PlantError> {
        let lin = LtiPlant::new(a, b)?;
        let n = lin.n();
        let p = e.ncols();
        if e.nrows() != n || p == 0 {
            return Err(PlantError::Dimension(format!("E is {}x{}, expected {n}xp with p >= 1", e.nrows(), e.ncols())));
        }
        if h.nrows() != p || h.ncols() != n {
            return Err(PlantError::Dimension(format!("H is {}x{}, expected {p}x{n}", h.nrows(), h.ncols())));
        }
        if beta.nrows() != p || beta.ncols() != p {
            return Err(PlantError::Dimension(format!("beta is {}x{}, expected {p}x{p}", beta.nrows(), beta.ncols())));
        }
        if beta.iter().any(|v| !(*v >= 0.0)) {
            return Err(PlantError::Invalid("beta entries must be nonnegative".into()));
        }
        gamma.validate()?;
        Ok(Self { a: lin.a, b: lin.b, e, h, gamma, beta })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.e.ncols()
    }

    /// `γ(Hx)` componentwise.
    pub fn nonlinear_term(&self, x: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        let z = &self.h * x;
        let vals: Result<Vec<f64>, PlantError> = z.iter().map(|&zi| self.gamma.eval(zi)).collect();
        Ok(DVector::from_vec(vals?))
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        check_len("x", x, self.n())?;
        check_len("u", u, self.m())?;
        let w = self.nonlinear_term(x)?;
        Ok(&self.a * x + &self.b * u + &self.e * w)
    }

    pub fn linear_part(&self) -> LtiPlant {
        LtiPlant { a: self.a.clone(), b: self.b.clone() }
    }

    /// Smallest diagonal sector slope; used for the sampled sector test in the
    /// componentwise (diagonal β) case.
    pub fn scalar_beta(&self) -> f64 {
        (0..self.p()).map(|i| self.beta[(i, i)]).fold(f64::INFINITY, f64::min)
    }

    pub fn sector_report(&self, grid: &[f64]) -> SectorReport {
        sector_check(&self.gamma, self.scalar_beta(), grid)
    }
}

pub fn step_lure(plant: &LurePlant, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
    plant.step(x, u)
}

/// Result of the sampled sector test `γ(z)(βz − γ(z)) ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorReport {
    pub grid: Vec<f64>,
    pub products: Vec<f64>,
    pub min_product: f64,
    pub violating_z: Option<f64>,
}

impl SectorReport {
    pub fn holds(&self) -> bool {
        self.violating_z.is_none()
    }
}

/// Samples the sector product on `grid`. A sampled test can only falsify the
/// sector bound, never prove it. Evaluation failures count as violations.
pub fn sector_check(gamma: &Nonlinearity, beta: f64, grid: &[f64]) -> SectorReport {
    let products: Vec<f64> = grid
        .iter()
        .map(|&z| match gamma.eval(z) {
            Ok(g) => g * (beta * z - g),
            Err(_) => f64::NEG_INFINITY,
        })
        .collect();
    let min_product = products.iter().copied().fold(f64::INFINITY, f64::min);
    let violating_z = products.iter().position(|&p| p < 0.0).map(|i| grid[i]);
    SectorReport { grid: grid.to_vec(), products, min_product, violating_z }
}

/// `count` evenly spaced points on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// Default sampled range for sector checks.
pub fn default_sector_grid() -> Vec<f64> {
    uniform_grid(-10.0, 10.0, 10_000)
}

/// Any of the three plant kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum Plant {
    Lti(LtiPlant),
    Polytopic(PolytopicPlant),
    Lure(LurePlant),
}

impl Plant {
    pub fn n(&self) -> usize {
        match self {
            Plant::Lti(p) => p.n(),
            Plant::Polytopic(p) => p.n(),
            Plant::Lure(p) => p.n(),
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Plant::Lti(p) => p.m(),
            Plant::Polytopic(p) => p.m(),
            Plant::Lure(p) => p.m(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Plant::Lti(_) => "lti",
            Plant::Polytopic(_) => "polytopic",
            Plant::Lure(_) => "lure",
        }
    }

    /// One step. Polytopic plants step with their mixture `Σ λ_j [A_j B_j]`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        match self {
            Plant::Lti(p) => p.step(x, u),
            Plant::Polytopic(p) => interpolate_vertices(p)?.step(x, u),
            Plant::Lure(p) => p.step(x, u),
        }
    }

    /// Resolves a polytopic plant to its mixture once, so repeated stepping is cheap.
    pub fn resolved(&self) -> Result<Plant, PlantError> {
        match self {
            Plant::Polytopic(p) => Ok(Plant::Lti(interpolate_vertices(p)?)),
            other => Ok(other.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSpec {
    pub a: MatrixRecord,
    pub b: MatrixRecord,
}

/// On-disk plant description (TOML), one document per plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantSpec {
    Lti {
        a: MatrixRecord,
        b: MatrixRecord,
    },
    Polytopic {
        weights: Vec<f64>,
        vertices: Vec<VertexSpec>,
    },
    Lure {
        a: MatrixRecord,
        b: MatrixRecord,
        e: MatrixRecord,
        h: MatrixRecord,
        beta: MatrixRecord,
        nonlinearity: Nonlinearity,
    },
}

impl PlantSpec {
    pub fn build(&self) -> Result<Plant, PlantError> {
        Ok(match self {
            PlantSpec::Lti { a, b } => Plant::Lti(LtiPlant::new(a.to_matrix("a")?, b.to_matrix("b")?)?),
            PlantSpec::Polytopic { weights, vertices } => {
                let verts: Result<Vec<LtiPlant>, PlantError> = vertices
                    .iter()
                    .enumerate()
                    .map(|(j, v)| LtiPlant::new(v.a.to_matrix(&format!("vertices[{j}].a"))?, v.b.to_matrix(&format!("vertices[{j}].b"))?))
                    .collect();
                Plant::Polytopic(PolytopicPlant::new(verts?, weights.clone())?)
            }
            PlantSpec::Lure { a, b, e, h, beta, nonlinearity } => Plant::Lure(LurePlant::new(
                a.to_matrix("a")?,
                b.to_matrix("b")?,
                e.to_matrix("e")?,
                h.to_matrix("h")?,
                nonlinearity.clone(),
                beta.to_matrix("beta")?,
            )?),
        })
    }

    pub fn from_plant(plant: &Plant) -> Self {
        match plant {
            Plant::Lti(p) => PlantSpec::Lti { a: (&p.a).into(), b: (&p.b).into() },
            Plant::Polytopic(p) => PlantSpec::Polytopic {
                weights: p.weights.clone(),
                vertices: p.vertices.iter().map(|v| VertexSpec { a: (&v.a).into(), b: (&v.b).into() }).collect(),
            },
            Plant::Lure(p) => PlantSpec::Lure {
                a: (&p.a).into(),
                b: (&p.b).into(),
                e: (&p.e).into(),
                h: (&p.h).into(),
                beta: (&p.beta).into(),
                nonlinearity: p.gamma.clone(),
            },
        }
    }
}

#[derive(Deserialize)]
struct KindTag {
    kind: String,
}

#[derive(Deserialize)]
struct LtiFields {
    a: MatrixRecord,
    b: MatrixRecord,
}

#[derive(Deserialize)]
struct PolytopicFields {
    weights: Vec<f64>,
    vertices: Vec<VertexSpec>,
}

#[derive(Deserialize)]
struct LureFields {
    a: MatrixRecord,
    b: MatrixRecord,
    e: MatrixRecord,
    h: MatrixRecord,
    beta: MatrixRecord,
    nonlinearity: Nonlinearity,
}

/// Reads the `kind` tag first, then the variant fields, so that type errors
/// keep their line numbers.
pub fn parse_plant(text: &str, origin: &str) -> Result<Plant, PlantError> {
    let tag: KindTag = io::from_toml(text, origin)?;
    let spec = match tag.kind.as_str() {
        "lti" => {
            let f: LtiFields = io::from_toml(text, origin)?;
            PlantSpec::Lti { a: f.a, b: f.b }
        }
        "polytopic" => {
            let f: PolytopicFields = io::from_toml(text, origin)?;
            PlantSpec::Polytopic { weights: f.weights, vertices: f.vertices }
        }
        "lure" => {
            let f: LureFields = io::from_toml(text, origin)?;
            PlantSpec::Lure { a: f.a, b: f.b, e: f.e, h: f.h, beta: f.beta, nonlinearity: f.nonlinearity }
        }
        other => {
            return Err(PlantError::Invalid(format!("{origin}: unknown plant kind {other:?} (expected lti, polytopic or lure)")));
        }
    };
    spec.build()
}

pub fn plant_to_toml(plant: &Plant) -> String {
    toml::to_string(&PlantSpec::from_plant(plant)).expect("plant spec serializes")
}
