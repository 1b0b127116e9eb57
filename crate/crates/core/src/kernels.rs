//! Radial attraction kernels `G(x) = g(|x|)`.
//!
//! A kernel is a nonnegative, even, integrable profile that is strictly
//! decreasing in `|x|` and vanishes at infinity. Two analytic profiles are
//! provided (Gaussian and Laplace) plus a tabulated radial profile read from
//! samples. Every kernel carries its analytic L1 mass so that the diffusion
//! coefficient can be rescaled against `||G||_1`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radial profile with unit amplitude.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// Centered normal density with standard deviation `sigma` (unit mass).
    Gaussian { sigma: f64 },
    /// `exp(-|x|/scale) / (2 scale)` (unit mass).
    Laplace { scale: f64 },
    /// Piecewise-linear radial profile `g(r)` through `(r_k, g_k)` samples,
    /// zero beyond the last sample.
    Tabulated(Tabulated),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl Tabulated {
    /// Samples must start at `r = 0`, have strictly increasing radii and
    /// strictly decreasing nonnegative values.
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() || radii.len() < 2 {
            return Err(Error::InvalidInput(
                "tabulated kernel needs at least two (r, g) samples of equal length".into(),
            ));
        }
        if radii[0] != 0.0 {
            return Err(Error::InvalidInput(
                "tabulated kernel must start at r = 0".into(),
            ));
        }
        if radii.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "tabulated kernel samples must be finite".into(),
            ));
        }
        for w in radii.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidInput(format!(
                    "tabulated kernel radii must be strictly increasing ({} after {})",
                    w[1], w[0]
                )));
            }
        }
        for (k, w) in values.windows(2).enumerate() {
            if w[1] >= w[0] {
                return Err(Error::InvalidInput(format!(
                    "tabulated kernel must be strictly decreasing in r (sample {} -> {})",
                    k,
                    k + 1
                )));
            }
        }
        if *values.last().unwrap() < 0.0 {
            return Err(Error::InvalidInput(
                "tabulated kernel values must be nonnegative".into(),
            ));
        }
        Ok(Self { radii, values })
    }

    /// Reads a CSV file with header `r,g`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for record in reader.deserialize::<(f64, f64)>() {
            let (r, g) = record?;
            radii.push(r);
            values.push(g);
        }
        Self::new(radii, values).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    fn segment(&self, r: f64) -> Option<usize> {
        if r >= *self.radii.last().unwrap() {
            return None;
        }
        // index k with radii[k] <= r < radii[k + 1]
        Some(self.radii.partition_point(|&x| x <= r) - 1)
    }

    fn value(&self, r: f64) -> f64 {
        match self.segment(r) {
            Some(k) => {
                let t = (r - self.radii[k]) / (self.radii[k + 1] - self.radii[k]);
                self.values[k] + t * (self.values[k + 1] - self.values[k])
            }
            None if r == *self.radii.last().unwrap() => *self.values.last().unwrap(),
            None => 0.0,
        }
    }

    fn slope(&self, r: f64) -> f64 {
        match self.segment(r) {
            Some(k) => (self.values[k + 1] - self.values[k]) / (self.radii[k + 1] - self.radii[k]),
            None => 0.0,
        }
    }

    fn max_abs_slope(&self) -> f64 {
        self.radii
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(r, g)| ((g[1] - g[0]) / (r[1] - r[0])).abs())
            .fold(0.0, f64::max)
    }

    /// Trapezoid mass of the even extension.
    fn mass(&self) -> f64 {
        let half: f64 = self
            .radii
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(r, g)| 0.5 * (r[1] - r[0]) * (g[0] + g[1]))
            .sum();
        2.0 * half
    }
}

impl Profile {
    fn value(&self, r: f64) -> f64 {
        match self {
            Profile::Gaussian { sigma } => {
                let z = r / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
            }
            Profile::Laplace { scale } => (-r / scale).exp() / (2.0 * scale),
            Profile::Tabulated(t) => t.value(r),
        }
    }

    /// `g'(r)` for `r > 0`.
    fn slope(&self, r: f64) -> f64 {
        match self {
            Profile::Gaussian { sigma } => -r / (sigma * sigma) * self.value(r),
            Profile::Laplace { scale } => -self.value(r) / scale,
            Profile::Tabulated(t) => t.slope(r),
        }
    }

    fn mass(&self) -> f64 {
        match self {
            Profile::Gaussian { .. } | Profile::Laplace { .. } => 1.0,
            Profile::Tabulated(t) => t.mass(),
        }
    }

    fn max_abs_slope(&self) -> f64 {
        match self {
            Profile::Gaussian { sigma } => self.value(*sigma) / sigma,
            Profile::Laplace { scale } => 1.0 / (2.0 * scale * scale),
            Profile::Tabulated(t) => t.max_abs_slope(),
        }
    }
}

/// Interaction kernel `G`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    profile: Profile,
    amplitude: f64,
    normalized: bool,
}

impl Kernel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "gaussian sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self::from_profile(Profile::Gaussian { sigma }))
    }

    pub fn laplace(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "laplace scale must be positive, got {scale}"
            )));
        }
        Ok(Self::from_profile(Profile::Laplace { scale }))
    }

    pub fn tabulated(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let table = Tabulated::new(radii, values)?;
        if table.mass() <= 0.0 {
            return Err(Error::InvalidInput(
                "tabulated kernel has zero mass".into(),
            ));
        }
        Ok(Self::from_profile(Profile::Tabulated(table)))
    }

    fn from_profile(profile: Profile) -> Self {
        let normalized = (profile.mass() - 1.0).abs() <= 1e-14;
        Self {
            profile,
            amplitude: 1.0,
            normalized,
        }
    }

    /// Scales the profile by `amplitude`, so `l1_mass` becomes
    /// `amplitude * profile mass`.
    pub fn with_amplitude(mut self, amplitude: f64) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "kernel amplitude must be positive, got {amplitude}"
            )));
        }
        self.amplitude = amplitude;
        self.normalized = (self.l1_mass() - 1.0).abs() <= 1e-14;
        Ok(self)
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Analytic `||G||_1` of the kernel as evaluated by [`Kernel::eval`].
    pub fn l1_mass(&self) -> f64 {
        self.amplitude * self.profile.mass()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Whether the profile is twice continuously differentiable at the
    /// origin. Curvature checks on steady states only apply when it is.
    pub fn is_c2(&self) -> bool {
        matches!(self.profile, Profile::Gaussian { .. })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * self.profile.value(x.abs())
    }

    pub fn eval_derivative(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return match self.profile {
                Profile::Gaussian { .. } => Ok(0.0),
                _ => Err(Error::NonDifferentiable { x }),
            };
        }
        let r = x.abs();
        if let Profile::Tabulated(t) = &self.profile {
            if t.radii.binary_search_by(|p| p.total_cmp(&r)).is_ok() {
                return Err(Error::NonDifferentiable { x });
            }
        }
        Ok(x.signum() * self.amplitude * self.profile.slope(r))
    }

    /// `sup |G'|`, one-sided at the origin for non-smooth profiles.
    pub fn max_abs_derivative(&self) -> f64 {
        self.amplitude * self.profile.max_abs_slope()
    }

    /// Returns `(G / ||G||_1, epsilon / ||G||_1)`. Rescaling both leaves the
    /// evolution and its steady states unchanged up to a time change.
    pub fn normalize(&self, epsilon: f64) -> (Kernel, f64) {
        let mass = self.l1_mass();
        let kernel = Kernel {
            profile: self.profile.clone(),
            amplitude: self.amplitude / mass,
            normalized: true,
        };
        (kernel, epsilon / mass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelType {
    Gaussian,
    Laplace,
    Custom,
}

/// JSON form of a kernel:
/// `{"type": "gaussian"|"laplace"|"custom", "sigma": .., "scale": .., "samples_path": .., "normalize": bool}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(rename = "type")]
    pub kind: KernelType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default = "default_true")]
    pub normalize: bool,
}

fn default_true() -> bool {
    true
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Self {
        Self {
            kind: KernelType::Gaussian,
            sigma: Some(sigma),
            scale: None,
            samples_path: None,
            amplitude: None,
            normalize: true,
        }
    }

    pub fn laplace(scale: f64) -> Self {
        Self {
            kind: KernelType::Laplace,
            sigma: None,
            scale: Some(scale),
            samples_path: None,
            amplitude: None,
            normalize: true,
        }
    }

    /// Builds the kernel. Relative paths in `samples_path` resolve against
    /// `base_dir` when given.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<Kernel> {
        let kernel = match self.kind {
            KernelType::Gaussian => Kernel::gaussian(self.sigma.unwrap_or(1.0))?,
            KernelType::Laplace => Kernel::laplace(self.scale.unwrap_or(1.0))?,
            KernelType::Custom => {
                let path = self.samples_path.as_ref().ok_or_else(|| {
                    Error::InvalidInput("custom kernel requires samples_path".into())
                })?;
                let path = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let table = Tabulated::from_csv(&path)?;
                Kernel::from_profile(Profile::Tabulated(table))
            }
        };
        match self.amplitude {
            Some(a) => kernel.with_amplitude(a),
            None => Ok(kernel),
        }
    }

    /// Builds the kernel and applies the optional normalization to
    /// `(G, epsilon)`.
    pub fn build_with_epsilon(&self, epsilon: f64, base_dir: Option<&Path>) -> Result<(Kernel, f64)> {
        let kernel = self.build(base_dir)?;
        if self.normalize {
            Ok(kernel.normalize(epsilon))
        } else {
            Ok((kernel, epsilon))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_peak_value() {
        let g = Kernel::gaussian(1.0).unwrap();
        assert!((g.eval(0.0) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!((g.eval(0.0) - 0.398942).abs() < 1e-6);
        assert!(g.is_normalized());
    }

    #[test]
    fn laplace_peak_value() {
        let g = Kernel::laplace(1.0).unwrap();
        assert_eq!(g.eval(0.0), 0.5);
        assert!(!g.is_c2());
    }

    #[test]
    fn derivative_values() {
        let g = Kernel::gaussian(1.0).unwrap();
        assert_eq!(g.eval_derivative(0.0).unwrap(), 0.0);
        // central finite difference of eval at h = 1e-6
        let h = 1e-6;
        let fd = (g.eval(1.0 + h) - g.eval(1.0 - h)) / (2.0 * h);
        let d = g.eval_derivative(1.0).unwrap();
        assert!((d - fd).abs() < 1e-9);
        assert!((d + 0.241971).abs() < 1e-6);

        let l = Kernel::laplace(1.0).unwrap();
        // G(x) = exp(-|x|) / 2, so G'(2) = -exp(-2) / 2
        let d = l.eval_derivative(2.0).unwrap();
        assert!((d + 0.5 * (-2.0f64).exp()).abs() < 1e-16);
        let fd = (l.eval(2.0 + h) - l.eval(2.0 - h)) / (2.0 * h);
        assert!((d - fd).abs() < 1e-9);
    }

    #[test]
    fn laplace_not_differentiable_at_origin() {
        let l = Kernel::laplace(1.0).unwrap();
        assert!(matches!(
            l.eval_derivative(0.0),
            Err(Error::NonDifferentiable { .. })
        ));
    }

    #[test]
    fn normalize_rescales_epsilon() {
        let g = Kernel::gaussian(1.0).unwrap();
        let (n, eps) = g.normalize(0.5);
        assert_eq!(eps, 0.5);
        assert_eq!(n.eval(0.3), g.eval(0.3));

        let heavy = Kernel::gaussian(1.0).unwrap().with_amplitude(2.0).unwrap();
        assert!(!heavy.is_normalized());
        let (half, eps) = heavy.normalize(1.0);
        assert_eq!(eps, 0.5);
        assert!(half.is_normalized());
        assert!((half.eval(0.7) - 0.5 * heavy.eval(0.7)).abs() < 1e-16);

        let four = Kernel::laplace(1.0).unwrap().with_amplitude(4.0).unwrap();
        assert_eq!(four.normalize(4.0).1, 1.0);
    }

    #[test]
    fn normalized_gaussian_integrates_to_one() {
        let sigma = 1.3;
        let g = Kernel::gaussian(sigma).unwrap();
        let n = 4000;
        let (a, b) = (-10.0 * sigma, 10.0 * sigma);
        let h = (b - a) / n as f64;
        let mut sum = 0.5 * (g.eval(a) + g.eval(b));
        for i in 1..n {
            sum += g.eval(a + i as f64 * h);
        }
        assert!((sum * h - 1.0).abs() < 1e-10);
    }

    #[test]
    fn tabulated_kernel_interpolates_and_validates() {
        let k = Kernel::tabulated(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.0]).unwrap();
        assert_eq!(k.eval(0.5), 0.75);
        assert_eq!(k.eval(-1.5), 0.25);
        assert_eq!(k.eval(3.0), 0.0);
        assert!((k.l1_mass() - 2.0).abs() < 1e-15);
        assert_eq!(k.eval_derivative(0.5).unwrap(), -0.5);
        assert_eq!(k.eval_derivative(-0.5).unwrap(), 0.5);
        assert!(k.eval_derivative(0.0).is_err());
        assert_eq!(k.max_abs_derivative(), 0.5);

        assert!(Kernel::tabulated(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.6]).is_err());
        assert!(Kernel::tabulated(vec![0.0, 1.0, 1.0], vec![1.0, 0.5, 0.2]).is_err());
        assert!(Kernel::tabulated(vec![0.5, 1.0], vec![1.0, 0.5]).is_err());
    }

    #[test]
    fn max_derivative_matches_sampling() {
        for k in [Kernel::gaussian(0.7).unwrap(), Kernel::laplace(1.5).unwrap()] {
            let sampled = (1..20000)
                .map(|i| k.eval_derivative(i as f64 * 1e-3).unwrap().abs())
                .fold(0.0, f64::max);
            assert!(sampled <= k.max_abs_derivative() * (1.0 + 1e-12));
            assert!(sampled >= k.max_abs_derivative() * 0.999);
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let json = r#"{"type":"laplace","scale":2.0,"normalize":false}"#;
        let spec: KernelSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.kind, KernelType::Laplace);
        assert!(!spec.normalize);
        let k = spec.build(None).unwrap();
        assert_eq!(k.eval(0.0), 0.25);
        let back: KernelSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);

        let spec: KernelSpec = serde_json::from_str(r#"{"type":"gaussian"}"#).unwrap();
        assert!(spec.normalize);
        assert!(spec.build(None).unwrap().is_normalized());
    }

    #[test]
    fn custom_kernel_from_csv() {
        let dir = std::env::temp_dir().join(format!("aggdiff-kernel-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("g.csv"), "r,g\n0,2\n1,1\n2,0\n").unwrap();
        let spec = KernelSpec {
            kind: KernelType::Custom,
            sigma: None,
            scale: None,
            samples_path: Some("g.csv".into()),
            amplitude: None,
            normalize: true,
        };
        let (k, eps) = spec.build_with_epsilon(2.0, Some(&dir)).unwrap();
        assert!((k.l1_mass() - 1.0).abs() < 1e-15);
        assert!((eps - 0.5).abs() < 1e-15);
        std::fs::remove_dir_all(&dir).ok();
    }
}
