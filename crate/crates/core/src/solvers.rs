//! Reference datasets: Fourier pseudospectral RK4 for the periodic problems
//! (KdV, Burgers), explicit central differences for the wave equation and
//! forward Euler for Chaffee-Infante. Also multiplicative noise injection
//! and training-sample draws.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, SolverError};
use crate::surrogate::Sample;

/// Sampled solution `u(x_i, t_j)`; `values[i * t_nodes.len() + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub kind: String,
    pub coefficients: BTreeMap<String, f64>,
    pub x_nodes: Vec<f64>,
    pub t_nodes: Vec<f64>,
    pub values: Vec<f64>,
}

impl Field {
    pub fn nx(&self) -> usize {
        self.x_nodes.len()
    }

    pub fn nt(&self) -> usize {
        self.t_nodes.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.nt() + j]
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.values.len() != self.nx() * self.nt() {
            return Err(SolverError::Format(format!(
                "{} values for a {}x{} grid",
                self.values.len(),
                self.nx(),
                self.nt()
            )));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&self.x_nodes) || !increasing(&self.t_nodes) {
            return Err(SolverError::Format("axes must be strictly increasing".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Format("non-finite value".into()));
        }
        Ok(())
    }

    /// Largest absolute pointwise difference to another field on the same grid.
    pub fn max_abs_diff(&self, other: &Field) -> Option<f64> {
        if self.values.len() != other.values.len() {
            return None;
        }
        Some(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }

    /// Binary layout, all integers and floats little-endian:
    ///
    /// ```text
    /// magic    8 bytes  "DLGAFLD1"
    /// hlen     u32      length of the JSON header
    /// header   hlen     {"kind", "coefficients", "nx", "nt"}
    /// x_nodes  nx f64
    /// t_nodes  nt f64
    /// values   nx*nt f64, row-major over (x, t)
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&FieldHeader {
            kind: self.kind.clone(),
            coefficients: self.coefficients.clone(),
            nx: self.nx(),
            nt: self.nt(),
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + 8 * (self.nx() + self.nt() + self.len()));
        out.extend_from_slice(FIELD_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in self.x_nodes.iter().chain(&self.t_nodes).chain(&self.values) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SolverError> {
        let fail = |m: &str| SolverError::Format(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != FIELD_MAGIC {
            return Err(fail("bad magic"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = bytes.get(12..12 + hlen).ok_or_else(|| fail("truncated header"))?;
        let header: FieldHeader =
            serde_json::from_slice(body).map_err(|e| SolverError::Format(e.to_string()))?;
        let payload = &bytes[12 + hlen..];
        let count = header.nx + header.nt + header.nx * header.nt;
        if payload.len() != 8 * count {
            return Err(fail("payload length does not match header dimensions"));
        }
        let mut floats = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let x_nodes: Vec<f64> = floats.by_ref().take(header.nx).collect();
        let t_nodes: Vec<f64> = floats.by_ref().take(header.nt).collect();
        let values: Vec<f64> = floats.collect();
        let field = Field {
            kind: header.kind,
            coefficients: header.coefficients,
            x_nodes,
            t_nodes,
            values,
        };
        field.validate()?;
        Ok(field)
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }

    /// `x,t,u` rows for inspection.
    pub fn write_csv(&self, path: &Path) -> Result<(), Error> {
        let io = |e| Error::io(path, e);
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "x,t,u").map_err(io)?;
        for (i, x) in self.x_nodes.iter().enumerate() {
            for (j, t) in self.t_nodes.iter().enumerate() {
                writeln!(w, "{x},{t},{}", self.at(i, j)).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

const FIELD_MAGIC: &[u8; 8] = b"DLGAFLD1";

#[derive(Serialize, Deserialize)]
struct FieldHeader {
    kind: String,
    coefficients: BTreeMap<String, f64>,
    nx: usize,
    nt: usize,
}

/// `u(x, 0) = amplitude * cos(wavenumber * x + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub amplitude: f64,
    pub wavenumber: f64,
    pub phase: f64,
}

/// Periodic problem `u_t = -u u_x + diffusion * u_xx + dispersion * u_xxx`
/// on `[x_min, x_max)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSpec {
    pub modes: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub diffusion: f64,
    pub dispersion: f64,
    pub initial: Harmonic,
    /// Inner RK4 step.
    pub dt: f64,
    /// Inner steps between recorded snapshots.
    pub record_every: usize,
    /// Recorded snapshots including `t = 0`.
    pub observations: usize,
}

/// `u_tt = speed_sq * u_xx` on `[0, x_end]` with fixed ends and the half-sine pulse
/// `u(x, 0) = sin(2x) / 2` for `x < pi/2`, zero elsewhere, `u_t(x, 0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveSpec {
    pub speed_sq: f64,
    pub x_end: f64,
    /// Spatial intervals (`M`); nodes are `0..=M`.
    pub m: usize,
    pub t_end: f64,
    /// Recorded time intervals (`N`); snapshots are `0..=N`.
    pub n: usize,
    /// Inner steps per recorded interval.
    #[serde(default = "one")]
    pub substeps: usize,
}

fn one() -> usize {
    1
}

/// `u_t = u_xx + lambda (u^3 - u)` on `[0, x_end]`, `u(x, 0) = x sin x`,
/// zero Dirichlet boundaries for `t > 0`, forward Euler in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionDiffusionSpec {
    pub lambda: f64,
    pub x_end: f64,
    pub m: usize,
    pub t_end: f64,
    /// Total inner steps over `[0, t_end]`.
    pub n: usize,
    /// First recorded inner step.
    pub record_start: usize,
    pub record_every: usize,
    pub observations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    Kdv(SpectralSpec),
    Burgers(SpectralSpec),
    Wave(WaveSpec),
    ChaffeeInfante(ReactionDiffusionSpec),
}

impl ProblemSpec {
    /// `u_t = -u u_x - 0.0025 u_xxx`, `u0 = cos(pi x)` on `[-1, 1)`, 512 modes,
    /// `dt = 1e-6`, snapshots every 0.005 up to `t = 1`.
    pub fn kdv() -> Self {
        ProblemSpec::Kdv(SpectralSpec {
            modes: 512,
            x_min: -1.0,
            x_max: 1.0,
            diffusion: 0.0,
            dispersion: -0.0025,
            initial: Harmonic {
                amplitude: 1.0,
                wavenumber: PI,
                phase: 0.0,
            },
            dt: 1e-6,
            record_every: 5000,
            observations: 201,
        })
    }

    /// `u_t = -u u_x + 0.1 u_xx`, `u0 = -sin(pi x / 8)` on `[-8, 8)`, 256 modes,
    /// `dt = 1e-4`, snapshots every 0.05 up to `t = 10`.
    pub fn burgers() -> Self {
        ProblemSpec::Burgers(SpectralSpec {
            modes: 256,
            x_min: -8.0,
            x_max: 8.0,
            diffusion: 0.1,
            dispersion: 0.0,
            initial: Harmonic {
                amplitude: 1.0,
                wavenumber: PI / 8.0,
                phase: PI / 2.0,
            },
            dt: 1e-4,
            record_every: 500,
            observations: 201,
        })
    }

    /// `A = 1`, `x_f = pi`, `M = 160`, `T = 2 pi`, `N = 320`.
    pub fn wave() -> Self {
        ProblemSpec::Wave(WaveSpec {
            speed_sq: 1.0,
            x_end: PI,
            m: 160,
            t_end: 2.0 * PI,
            n: 320,
            substeps: 1,
        })
    }

    /// `lambda = 1`, `x_f = 3`, `M = 300`, `T = 0.5`, `N = 80000`, 200 snapshots
    /// every 320 steps from `t = 0.1`.
    pub fn chaffee_infante() -> Self {
        ProblemSpec::ChaffeeInfante(ReactionDiffusionSpec {
            lambda: 1.0,
            x_end: 3.0,
            m: 300,
            t_end: 0.5,
            n: 80_000,
            record_start: 16_000,
            record_every: 320,
            observations: 200,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Kdv(_) => "kdv",
            ProblemSpec::Burgers(_) => "burgers",
            ProblemSpec::Wave(_) => "wave",
            ProblemSpec::ChaffeeInfante(_) => "chaffee_infante",
        }
    }

    /// Same scheme with the inner time step divided by `factor`, recorded at
    /// the same observation times.
    pub fn refined(&self, factor: usize) -> Self {
        let mut spec = self.clone();
        match &mut spec {
            ProblemSpec::Kdv(s) | ProblemSpec::Burgers(s) => {
                s.dt /= factor as f64;
                s.record_every *= factor;
            }
            ProblemSpec::Wave(s) => s.substeps *= factor,
            ProblemSpec::ChaffeeInfante(s) => {
                s.n *= factor;
                s.record_start *= factor;
                s.record_every *= factor;
            }
        }
        spec
    }

    fn coefficients(&self) -> BTreeMap<String, f64> {
        let mut c = BTreeMap::new();
        match self {
            ProblemSpec::Kdv(s) | ProblemSpec::Burgers(s) => {
                c.insert("advection".into(), -1.0);
                c.insert("diffusion".into(), s.diffusion);
                c.insert("dispersion".into(), s.dispersion);
            }
            ProblemSpec::Wave(s) => {
                c.insert("speed_sq".into(), s.speed_sq);
            }
            ProblemSpec::ChaffeeInfante(s) => {
                c.insert("lambda".into(), s.lambda);
            }
        }
        c
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        match self {
            ProblemSpec::Kdv(s) | ProblemSpec::Burgers(s) => s.validate(),
            ProblemSpec::Wave(s) => s.validate(),
            ProblemSpec::ChaffeeInfante(s) => s.validate(),
        }
    }
}

impl SpectralSpec {
    fn wavenumbers(&self) -> Vec<f64> {
        let n = self.modes as i64;
        let base = 2.0 * PI / (self.x_max - self.x_min);
        (0..n)
            .map(|j| base * if j < n / 2 { j } else { j - n } as f64)
            .collect()
    }

    fn validate(&self) -> Result<(), SolverError> {
        if self.modes < 4 || !self.modes.is_power_of_two() {
            return Err(SolverError::Config(format!(
                "mode count {} must be a power of two >= 4",
                self.modes
            )));
        }
        if !(self.x_max > self.x_min) || !(self.dt > 0.0) || self.record_every == 0 || self.observations == 0 {
            return Err(SolverError::Config("degenerate domain or time stepping".into()));
        }
        // RK4 covers roughly |z| <= 2.78 on the negative real axis and 2.83 on the imaginary axis.
        let k = PI * self.modes as f64 / (self.x_max - self.x_min);
        let diffusive = self.diffusion.abs() * k * k * self.dt;
        let dispersive = self.dispersion.abs() * k.powi(3) * self.dt;
        if diffusive > 2.78 || dispersive > 2.83 {
            return Err(SolverError::Stability(format!(
                "RK4 step {} too large: diffusive {diffusive:.3}, dispersive {dispersive:.3}",
                self.dt
            )));
        }
        Ok(())
    }
}

impl WaveSpec {
    fn r(&self) -> f64 {
        let dx = self.x_end / self.m as f64;
        let dt = self.t_end / (self.n * self.substeps) as f64;
        self.speed_sq * dt * dt / (dx * dx)
    }

    fn validate(&self) -> Result<(), SolverError> {
        if self.m < 2 || self.n == 0 || self.substeps == 0 || !(self.x_end > 0.0) || !(self.t_end > 0.0) {
            return Err(SolverError::Config("degenerate wave grid".into()));
        }
        let r = self.r();
        if r > 1.0 + 1e-12 {
            return Err(SolverError::Stability(format!("wave scheme needs r <= 1, got {r}")));
        }
        Ok(())
    }
}

impl ReactionDiffusionSpec {
    fn r(&self) -> f64 {
        let dx = self.x_end / self.m as f64;
        (self.t_end / self.n as f64) / (dx * dx)
    }

    fn validate(&self) -> Result<(), SolverError> {
        if self.m < 2 || self.n == 0 || self.record_every == 0 || self.observations == 0 {
            return Err(SolverError::Config("degenerate reaction-diffusion grid".into()));
        }
        let last = self.record_start + (self.observations - 1) * self.record_every;
        if last > self.n {
            return Err(SolverError::Config(format!(
                "last snapshot at step {last} beyond the {} integrated steps",
                self.n
            )));
        }
        let r = self.r();
        if r > 0.5 + 1e-12 {
            return Err(SolverError::Stability(format!("forward Euler needs r <= 1/2, got {r}")));
        }
        Ok(())
    }
}

pub fn solve_reference_problem(spec: &ProblemSpec) -> Result<Field, SolverError> {
    spec.validate()?;
    let (x_nodes, t_nodes, values) = match spec {
        ProblemSpec::Kdv(s) | ProblemSpec::Burgers(s) => solve_spectral(s)?,
        ProblemSpec::Wave(s) => solve_wave(s)?,
        ProblemSpec::ChaffeeInfante(s) => solve_reaction_diffusion(s)?,
    };
    let field = Field {
        kind: spec.name().to_string(),
        coefficients: spec.coefficients(),
        x_nodes,
        t_nodes,
        values,
    };
    Ok(field)
}

type Grid = (Vec<f64>, Vec<f64>, Vec<f64>);

/// Evaluates `-(u^2 / 2)_x + diffusion u_xx + dispersion u_xxx` in Fourier space.
struct SpectralRhs {
    forward: std::sync::Arc<dyn Fft<f64>>,
    inverse: std::sync::Arc<dyn Fft<f64>>,
    advect: Vec<Complex64>,
    linear: Vec<Complex64>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl SpectralRhs {
    fn new(spec: &SpectralSpec) -> Self {
        let n = spec.modes;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let ks = spec.wavenumbers();
        let nyquist = n / 2;
        let advect = ks
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                let k = if j == nyquist { 0.0 } else { k };
                // -(1/2) i k, folded with the 1/n of the unnormalized inverse transform.
                Complex64::new(0.0, -0.5 * k / (n * n) as f64)
            })
            .collect();
        let linear = ks
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                let odd = if j == nyquist { 0.0 } else { k.powi(3) };
                Complex64::new(-spec.diffusion * k * k, -spec.dispersion * odd)
            })
            .collect();
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            forward,
            inverse,
            advect,
            linear,
            buf: vec![Complex64::default(); n],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    fn eval(&mut self, u_hat: &[Complex64], out: &mut [Complex64]) {
        self.buf.copy_from_slice(u_hat);
        self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
        for v in self.buf.iter_mut() {
            *v = Complex64::new(v.re * v.re, 0.0);
        }
        self.forward.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (((o, b), a), (l, u)) in out
            .iter_mut()
            .zip(&self.buf)
            .zip(&self.advect)
            .zip(self.linear.iter().zip(u_hat))
        {
            *o = a * b + l * u;
        }
    }

    fn to_physical(&mut self, u_hat: &[Complex64], out: &mut Vec<f64>) {
        self.buf.copy_from_slice(u_hat);
        self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
        let n = self.buf.len() as f64;
        out.clear();
        out.extend(self.buf.iter().map(|c| c.re / n));
    }
}

fn solve_spectral(spec: &SpectralSpec) -> Result<Grid, SolverError> {
    let n = spec.modes;
    let dx = (spec.x_max - spec.x_min) / n as f64;
    let x_nodes: Vec<f64> = (0..n).map(|i| spec.x_min + i as f64 * dx).collect();
    let t_nodes: Vec<f64> = (0..spec.observations)
        .map(|j| (j * spec.record_every) as f64 * spec.dt)
        .collect();
    let h = &spec.initial;
    let mut u_hat: Vec<Complex64> = x_nodes
        .iter()
        .map(|&x| Complex64::new(h.amplitude * (h.wavenumber * x + h.phase).cos(), 0.0))
        .collect();
    let mut rhs = SpectralRhs::new(spec);
    rhs.forward.process_with_scratch(&mut u_hat, &mut rhs.scratch);

    let mut snapshots: Vec<Vec<f64>> = Vec::with_capacity(spec.observations);
    let mut phys = Vec::with_capacity(n);
    rhs.to_physical(&u_hat, &mut phys);
    snapshots.push(phys.clone());

    let dt = spec.dt;
    let mut k1 = vec![Complex64::default(); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut stage = k1.clone();
    let mut step = 0usize;
    for _ in 1..spec.observations {
        for _ in 0..spec.record_every {
            rhs.eval(&u_hat, &mut k1);
            for ((s, u), k) in stage.iter_mut().zip(&u_hat).zip(&k1) {
                *s = u + k * (0.5 * dt);
            }
            rhs.eval(&stage, &mut k2);
            for ((s, u), k) in stage.iter_mut().zip(&u_hat).zip(&k2) {
                *s = u + k * (0.5 * dt);
            }
            rhs.eval(&stage, &mut k3);
            for ((s, u), k) in stage.iter_mut().zip(&u_hat).zip(&k3) {
                *s = u + k * dt;
            }
            rhs.eval(&stage, &mut k4);
            for (i, u) in u_hat.iter_mut().enumerate() {
                *u += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
            }
            step += 1;
        }
        rhs.to_physical(&u_hat, &mut phys);
        if phys.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Divergence { step });
        }
        snapshots.push(phys.clone());
    }
    Ok((x_nodes, t_nodes, transpose(&snapshots, n)))
}

/// `snapshots[j][i]` (time-major) to row-major over `(x, t)`.
fn transpose(snapshots: &[Vec<f64>], nx: usize) -> Vec<f64> {
    let nt = snapshots.len();
    let mut values = vec![0.0; nx * nt];
    for (j, snap) in snapshots.iter().enumerate() {
        for (i, v) in snap.iter().enumerate() {
            values[i * nt + j] = *v;
        }
    }
    values
}

fn solve_wave(spec: &WaveSpec) -> Result<Grid, SolverError> {
    let m = spec.m;
    let dx = spec.x_end / m as f64;
    let dt_rec = spec.t_end / spec.n as f64;
    let r = spec.r();
    let x_nodes: Vec<f64> = (0..=m).map(|i| i as f64 * dx).collect();
    let t_nodes: Vec<f64> = (0..=spec.n).map(|j| j as f64 * dt_rec).collect();

    let mut prev: Vec<f64> = x_nodes
        .iter()
        .map(|&x| if x < PI / 2.0 { (2.0 * x).sin() / 2.0 } else { 0.0 })
        .collect();
    prev[0] = 0.0;
    prev[m] = 0.0;
    let mut snapshots = vec![prev.clone()];

    // Zero initial velocity: second-order Taylor start.
    let mut cur = vec![0.0; m + 1];
    for i in 1..m {
        cur[i] = prev[i] + 0.5 * r * (prev[i - 1] - 2.0 * prev[i] + prev[i + 1]);
    }
    let mut next = vec![0.0; m + 1];
    let total = spec.n * spec.substeps;
    for step in 1..=total {
        if step % spec.substeps == 0 {
            if cur.iter().any(|v| !v.is_finite()) {
                return Err(SolverError::Divergence { step });
            }
            snapshots.push(cur.clone());
        }
        if step == total {
            break;
        }
        for i in 1..m {
            next[i] = r * (cur[i - 1] + cur[i + 1]) + (2.0 - 2.0 * r) * cur[i] - prev[i];
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok((x_nodes, t_nodes, transpose(&snapshots, m + 1)))
}

fn solve_reaction_diffusion(spec: &ReactionDiffusionSpec) -> Result<Grid, SolverError> {
    let m = spec.m;
    let dx = spec.x_end / m as f64;
    let dt = spec.t_end / spec.n as f64;
    let r = spec.r();
    let x_nodes: Vec<f64> = (0..=m).map(|i| i as f64 * dx).collect();
    let t_nodes: Vec<f64> = (0..spec.observations)
        .map(|j| (spec.record_start + j * spec.record_every) as f64 * dt)
        .collect();
    let mut u: Vec<f64> = x_nodes.iter().map(|&x| x * x.sin()).collect();
    let mut next = vec![0.0; m + 1];
    let mut snapshots = Vec::with_capacity(spec.observations);
    let last = spec.record_start + (spec.observations - 1) * spec.record_every;
    let lambda = spec.lambda;
    for step in 0..=last {
        if step >= spec.record_start && (step - spec.record_start) % spec.record_every == 0 {
            if u.iter().any(|v| !v.is_finite()) {
                return Err(SolverError::Divergence { step });
            }
            snapshots.push(u.clone());
        }
        if step == last {
            break;
        }
        for i in 1..m {
            let ui = u[i];
            next[i] = (1.0 - 2.0 * r) * ui + r * (u[i - 1] + u[i + 1]) + lambda * (ui * ui * ui - ui) * dt;
        }
        next[0] = 0.0;
        next[m] = 0.0;
        std::mem::swap(&mut u, &mut next);
    }
    Ok((x_nodes, t_nodes, transpose(&snapshots, m + 1)))
}

/// Discrete energy of the central-difference wave scheme between consecutive
/// snapshots `j` and `j + 1` (assumes one inner step per snapshot). Conserved
/// exactly by the leapfrog update.
pub fn wave_energy(field: &Field, speed_sq: f64) -> Vec<f64> {
    let nx = field.nx();
    let dx = field.x_nodes[1] - field.x_nodes[0];
    (1..field.nt().saturating_sub(1))
        .map(|j| {
            let dt = field.t_nodes[j + 1] - field.t_nodes[j];
            let kinetic: f64 = (0..nx)
                .map(|i| ((field.at(i, j + 1) - field.at(i, j)) / dt).powi(2))
                .sum();
            let potential: f64 = (0..nx - 1)
                .map(|i| {
                    (field.at(i + 1, j + 1) - field.at(i, j + 1)) * (field.at(i + 1, j) - field.at(i, j))
                        / (dx * dx)
                })
                .sum();
            (kinetic + speed_sq * potential) * dx
        })
        .collect()
}

/// `u <- u (1 + delta e)` with `e ~ U[-1, 1]` i.i.d. per point.
pub fn add_noise(field: &Field, delta: f64, seed: u64) -> Field {
    let mut out = field.clone();
    if delta == 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.values.iter_mut() {
        let e: f64 = rng.gen_range(-1.0..=1.0);
        *v *= 1.0 + delta * e;
    }
    out
}

/// Uniform draw of `n` distinct grid points.
pub fn sample_training_data(field: &Field, n: usize, seed: u64) -> Result<Vec<Sample>, SolverError> {
    let total = field.len();
    if n == 0 || n > total {
        return Err(SolverError::SampleCount {
            requested: n,
            available: total,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nt = field.nt();
    Ok(rand::seq::index::sample(&mut rng, total, n)
        .into_iter()
        .map(|idx| Sample {
            x: field.x_nodes[idx / nt],
            t: field.t_nodes[idx % nt],
            u: field.values[idx],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn short_kdv() -> ProblemSpec {
        match ProblemSpec::kdv() {
            ProblemSpec::Kdv(mut s) => {
                s.observations = 5;
                s.record_every = 2000;
                ProblemSpec::Kdv(s)
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn reference_grid_sizes() {
        assert!(ProblemSpec::wave().validate().is_ok());
        let wave = solve_reference_problem(&ProblemSpec::wave()).unwrap();
        assert_eq!(wave.len(), 51_681);
        let ci = solve_reference_problem(&ProblemSpec::chaffee_infante()).unwrap();
        assert_eq!(ci.len(), 60_200);
        assert_abs_diff_eq!(ci.t_nodes[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(ci.x_nodes[1] - ci.x_nodes[0], 0.01, epsilon = 1e-12);
        if let ProblemSpec::Kdv(s) = ProblemSpec::kdv() {
            assert_eq!(s.modes * s.observations, 102_912);
            assert_abs_diff_eq!(s.dt * s.record_every as f64, 0.005, epsilon = 1e-15);
        }
        if let ProblemSpec::Burgers(s) = ProblemSpec::burgers() {
            assert_eq!(s.modes * s.observations, 51_456);
            assert_abs_diff_eq!(s.dt * s.record_every as f64, 0.05, epsilon = 1e-15);
        }
    }

    #[test]
    fn wave_boundaries_stay_fixed() {
        let wave = solve_reference_problem(&ProblemSpec::wave()).unwrap();
        assert_abs_diff_eq!(*wave.x_nodes.last().unwrap(), PI, epsilon = 1e-12);
        for j in 0..wave.nt() {
            assert_eq!(wave.at(0, j), 0.0);
            assert_eq!(wave.at(wave.nx() - 1, j), 0.0);
        }
        wave.validate().unwrap();
    }

    /// Odd 2pi-periodic extension of the initial pulse.
    fn pulse(x: f64) -> f64 {
        let y = x.rem_euclid(2.0 * PI);
        if y <= PI {
            if y < PI / 2.0 {
                (2.0 * y).sin() / 2.0
            } else {
                0.0
            }
        } else {
            -pulse(2.0 * PI - y)
        }
    }

    #[test]
    fn unit_courant_wave_matches_dalembert() {
        let wave = solve_reference_problem(&ProblemSpec::wave()).unwrap();
        for i in 0..wave.nx() {
            for j in 0..wave.nt() {
                let (x, t) = (wave.x_nodes[i], wave.t_nodes[j]);
                let exact = 0.5 * (pulse(x - t) + pulse(x + t));
                assert_abs_diff_eq!(wave.at(i, j), exact, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn wave_energy_is_conserved() {
        let wave = solve_reference_problem(&ProblemSpec::wave()).unwrap();
        let e = wave_energy(&wave, 1.0);
        let e0 = e[0];
        let drift = e.iter().map(|v| (v - e0).abs() / e0).fold(0.0, f64::max);
        assert!(drift < 0.01, "energy drift {drift}");
    }

    #[test]
    fn stability_limits_are_enforced() {
        let mut w = match ProblemSpec::wave() {
            ProblemSpec::Wave(w) => w,
            _ => unreachable!(),
        };
        w.n = 200;
        assert!(matches!(
            solve_reference_problem(&ProblemSpec::Wave(w)),
            Err(SolverError::Stability(_))
        ));
        let mut c = match ProblemSpec::chaffee_infante() {
            ProblemSpec::ChaffeeInfante(c) => c,
            _ => unreachable!(),
        };
        c.n = 5_000;
        c.record_start = 1000;
        c.record_every = 20;
        assert!(matches!(
            solve_reference_problem(&ProblemSpec::ChaffeeInfante(c)),
            Err(SolverError::Stability(_))
        ));
        let mut k = match ProblemSpec::kdv() {
            ProblemSpec::Kdv(k) => k,
            _ => unreachable!(),
        };
        k.dt = 1e-5;
        assert!(matches!(solve_reference_problem(&ProblemSpec::Kdv(k.clone())), Err(SolverError::Stability(_))));
        k.dt = 1e-6;
        k.modes = 500;
        assert!(matches!(solve_reference_problem(&ProblemSpec::Kdv(k)), Err(SolverError::Config(_))));
    }

    #[test]
    fn burgers_conserves_mean_and_dissipates() {
        let spec = match ProblemSpec::burgers() {
            ProblemSpec::Burgers(mut s) => {
                s.observations = 21;
                ProblemSpec::Burgers(s)
            }
            _ => unreachable!(),
        };
        let f = solve_reference_problem(&spec).unwrap();
        f.validate().unwrap();
        let mean = |j: usize| (0..f.nx()).map(|i| f.at(i, j)).sum::<f64>() / f.nx() as f64;
        assert_abs_diff_eq!(mean(0), mean(20), epsilon = 1e-12);
        let norm = |j: usize| (0..f.nx()).map(|i| f.at(i, j).powi(2)).sum::<f64>();
        assert!(norm(20) < norm(0));
    }

    #[test]
    fn kdv_short_run_conserves_mass_and_energy() {
        let f = solve_reference_problem(&short_kdv()).unwrap();
        let sum = |j: usize, p: i32| (0..f.nx()).map(|i| f.at(i, j).powi(p)).sum::<f64>();
        for j in 1..f.nt() {
            assert_abs_diff_eq!(sum(j, 1), sum(0, 1), epsilon = 1e-9);
            assert_abs_diff_eq!(sum(j, 2) / sum(0, 2), 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn short_kdv_refinement() {
        let coarse = solve_reference_problem(&short_kdv()).unwrap();
        let fine = solve_reference_problem(&short_kdv().refined(4)).unwrap();
        assert_eq!(coarse.t_nodes, fine.t_nodes);
        assert!(coarse.max_abs_diff(&fine).unwrap() < 1e-6);
    }

    #[test]
    fn noise_contract() {
        let field = solve_reference_problem(&ProblemSpec::wave()).unwrap();
        assert_eq!(add_noise(&field, 0.0, 1), field);
        let noisy = add_noise(&field, 0.05, 7);
        for (a, b) in field.values.iter().zip(&noisy.values) {
            assert!((b - a).abs() <= 0.05 * a.abs() + 1e-15);
        }
        assert_eq!(add_noise(&field, 0.1, 3), add_noise(&field, 0.1, 3));
        assert_ne!(add_noise(&field, 0.1, 3), add_noise(&field, 0.1, 4));
    }

    #[test]
    fn sampling_contract() {
        let field = solve_reference_problem(&ProblemSpec::wave()).unwrap();
        let all = sample_training_data(&field, field.len(), 5).unwrap();
        let mut keys: Vec<(u64, u64)> = all.iter().map(|s| (s.x.to_bits(), s.t.to_bits())).collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), field.len());
        let one = sample_training_data(&field, 1, 5).unwrap();
        assert_eq!(one.len(), 1);
        let s = one[0];
        let i = field.x_nodes.iter().position(|&x| x == s.x).unwrap();
        let j = field.t_nodes.iter().position(|&t| t == s.t).unwrap();
        assert_eq!(field.at(i, j), s.u);
        assert!(sample_training_data(&field, 0, 5).is_err());
        assert!(sample_training_data(&field, field.len() + 1, 5).is_err());
        assert_eq!(
            sample_training_data(&field, 100, 9).unwrap(),
            sample_training_data(&field, 100, 9).unwrap()
        );
    }

    #[test]
    fn chaffee_infante_fraction() {
        let ci = solve_reference_problem(&ProblemSpec::chaffee_infante()).unwrap();
        let frac = 10_000.0 / ci.len() as f64;
        assert_abs_diff_eq!(frac, 0.166, epsilon = 5e-4);
        assert_eq!(sample_training_data(&ci, 10_000, 1).unwrap().len(), 10_000);
    }

    #[test]
    fn sampling_is_uniform() {
        // 20 cells, 5 draws each over 400 seeds: every cell count within 3 sigma.
        let field = Field {
            kind: "grid".into(),
            coefficients: BTreeMap::new(),
            x_nodes: (0..5).map(|i| i as f64).collect(),
            t_nodes: (0..4).map(|j| j as f64).collect(),
            values: (0..20).map(|v| v as f64).collect(),
        };
        let mut counts = [0usize; 20];
        let seeds = 400;
        for seed in 0..seeds {
            for s in sample_training_data(&field, 5, seed).unwrap() {
                counts[s.u as usize] += 1;
            }
        }
        let trials = seeds as f64;
        let p = 5.0 / 20.0;
        let mean = trials * p;
        let sigma = (trials * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn binary_round_trip_and_csv() {
        let field = solve_reference_problem(&ProblemSpec::wave()).unwrap();
        let back = Field::from_bytes(&field.to_bytes()).unwrap();
        assert_eq!(back, field);
        let mut bytes = field.to_bytes();
        bytes.truncate(bytes.len() - 8);
        assert!(Field::from_bytes(&bytes).is_err());
        assert!(Field::from_bytes(b"NOTAFIELD...").is_err());

        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("wave.csv");
        field.write_csv(&csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), field.len() + 1);
        assert!(text.starts_with("x,t,u\n"));
    }
}
