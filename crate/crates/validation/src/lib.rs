//! Reference computations that do not share code with the pipeline: finite
//! difference weights on arbitrary stencils and meta-data built from a
//! closed-form solution.

use dlga_core::surrogate::MetaDataset;

/// Weights `w` with `f^(m)(0) ~ sum_i w[i] f(offsets[i])`, by Fornberg's
/// recursion. Needs more offsets than `m`.
pub fn fd_weights(m: usize, offsets: &[f64]) -> Vec<f64> {
    let n = offsets.len();
    assert!(n > m, "stencil too small for derivative order {m}");
    // c[i][k]: weight of node i for the k-th derivative using nodes 0..=j
    let mut c = vec![vec![0.0; m + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = offsets[0];
    for j in 1..n {
        let mn = j.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[j];
        for i in 0..j {
            let c3 = offsets[j] - offsets[i];
            c2 *= c3;
            if i == j - 1 {
                for k in (1..=mn).rev() {
                    c[j][k] = c1 * (k as f64 * c[j - 1][k - 1] - c5 * c[j - 1][k]) / c2;
                }
                c[j][0] = -c1 * c5 * c[j - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[i][k] = (c4 * c[i][k] - k as f64 * c[i][k - 1]) / c3;
            }
            c[i][0] *= c4 / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[m]).collect()
}

/// Central stencil `-half..=half` scaled by `h`.
pub fn central_offsets(half: usize, h: f64) -> Vec<f64> {
    let half = half as i64;
    (-half..=half).map(|k| k as f64 * h).collect()
}

/// Derivative of order `m` of `f` at `x0` on a central stencil.
pub fn central_derivative(f: impl Fn(f64) -> f64, x0: f64, m: usize, half: usize, h: f64) -> f64 {
    let offsets = central_offsets(half, h);
    fd_weights(m, &offsets)
        .iter()
        .zip(&offsets)
        .map(|(w, d)| w * f(x0 + d))
        .sum()
}

/// Decaying Fourier modes `a sin(k x + phase) exp(-k^2 t)`, each solving `u_t = u_xx`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatModes {
    /// `(amplitude, wavenumber, phase)`
    pub modes: Vec<(f64, f64, f64)>,
}

impl HeatModes {
    /// `d^p/dx^p d^q/dt^q u` at `(x, t)`.
    pub fn derivative(&self, x: f64, t: f64, p: u32, q: u32) -> f64 {
        self.modes
            .iter()
            .map(|&(a, k, phase)| {
                let shift = p as f64 * std::f64::consts::FRAC_PI_2;
                a * k.powi(p as i32) * (-k * k).powi(q as i32) * (k * x + phase + shift).sin() * (-k * k * t).exp()
            })
            .sum()
    }

    /// Spatial orders `0..=spatial`, temporal orders `1..=temporal` at `points`.
    pub fn meta_data(&self, points: Vec<(f64, f64)>, spatial: u32, temporal: u32) -> MetaDataset {
        let spatial_cols = (0..=spatial)
            .map(|p| points.iter().map(|&(x, t)| self.derivative(x, t, p, 0)).collect())
            .collect();
        let temporal_cols = (1..=temporal)
            .map(|q| points.iter().map(|&(x, t)| self.derivative(x, t, 0, q)).collect())
            .collect();
        MetaDataset::from_columns(points, spatial_cols, temporal_cols).expect("consistent columns")
    }
}
