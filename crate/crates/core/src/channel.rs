//! Synthetic configurable fingerprints.
//!
//! Alice and Eve each reach Bob through the IRS: `Q = H Ψ G` with Rician
//! `H` (IRS → Bob) and `G` (transmitter → IRS). Bob estimates the channel
//! from a known pilot and the estimate, stacked into a real vector, is the
//! fingerprint. The non-IRS baseline replaces `Q` by the Rayleigh direct
//! link `D`.
//!
//! LoS components are outer products of array responses. Arrays are centred
//! on their node with half-wavelength spacing; element `k` at offset `p_k`
//! responds to unit direction `u` with `exp(j 2π/λ p_k·u)`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::identity::Identity;
use crate::seeds;

pub type CMatrix = DMatrix<Complex64>;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const MAX_PILOT_CONDITION: f64 = 1e6;
pub const STACKING: &str = "real-row-major-then-imag-row-major";

const STREAM_CHANNEL: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_CSI: u64 = 2;

/// 3GPP TR 38.901 UMi-style path loss in dB, `d` in metres and `fc_ghz` in GHz.
pub fn path_loss_db(d: f64, fc_ghz: f64, los: bool) -> f64 {
    let slope = if los { 21.0 } else { 31.9 };
    32.4 + slope * d.log10() + 20.0 * fc_ghz.log10()
}

/// Linear power gain for a loss in dB.
pub fn db_to_gain(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Practical phase-dependent reflection amplitude of one IRS element.
pub fn irs_amplitude(theta: f64, a_min: f64, omega: f64, v: f64) -> f64 {
    (1.0 - a_min) * (((theta - omega).sin() + 1.0) / 2.0).powf(v) + a_min
}

type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn unit(a: Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Geometry {
    pub bob: Vec3,
    pub irs: Vec3,
    pub alice: Vec3,
    pub eve: Vec3,
    pub n_t: usize,
    pub n_r: usize,
    pub n_y: usize,
    pub n_z: usize,
    pub carrier_hz: f64,
    /// Axis of Bob's linear array.
    pub bob_axis: Vec3,
    /// Axis of the transmitters' linear arrays.
    pub tx_axis: Vec3,
    pub irs_orientation: IrsOrientation,
}

/// Which way the IRS plane faces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum IrsOrientation {
    /// Normal along the bisector of the IRS→Alice and IRS→Bob directions,
    /// so the unconfigured surface reflects Alice's LoS path onto Bob.
    #[default]
    Specular,
    /// Explicit plane normal.
    Normal { normal: Vec3 },
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            bob: [0.0, 0.0, 0.0],
            irs: [10.0, 10.0, 3.0],
            alice: [20.0, 5.0, 1.5],
            eve: [20.0, 8.0, 1.5],
            n_t: 2,
            n_r: 4,
            n_y: 8,
            n_z: 32,
            carrier_hz: 3.5e9,
            bob_axis: [1.0, 0.0, 0.0],
            tx_axis: [0.0, 1.0, 0.0],
            irs_orientation: IrsOrientation::Specular,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_r == 0 || self.n_y == 0 || self.n_z == 0 {
            return Err(Error::Config("antenna and IRS element counts must be at least 1".into()));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(Error::Config(format!("carrier frequency {} Hz must be positive", self.carrier_hz)));
        }
        let nodes = [("bob", self.bob), ("irs", self.irs), ("alice", self.alice), ("eve", self.eve)];
        for (i, (na, a)) in nodes.iter().enumerate() {
            for (nb, b) in &nodes[i + 1..] {
                // Alice and Eve may coincide; every link distance must not
                if *na == "alice" && *nb == "eve" {
                    continue;
                }
                if !(norm(sub(*a, *b)) > 0.0) {
                    return Err(Error::Config(format!("{na} and {nb} are at the same position")));
                }
            }
        }
        if let IrsOrientation::Normal { normal } = self.irs_orientation {
            if !(norm(normal) > 0.0) {
                return Err(Error::Config("IRS normal must be non-zero".into()));
            }
        }
        for axis in [self.bob_axis, self.tx_axis] {
            if !(norm(axis) > 0.0) {
                return Err(Error::Config("array axes must be non-zero".into()));
            }
        }
        Ok(())
    }

    pub fn n_irs(&self) -> usize {
        self.n_y * self.n_z
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn element_spacing(&self) -> f64 {
        self.wavelength() / 2.0
    }

    pub fn carrier_ghz(&self) -> f64 {
        self.carrier_hz / 1e9
    }

    pub fn transmitter(&self, id: Identity) -> Vec3 {
        match id {
            Identity::Alice => self.alice,
            Identity::Eve => self.eve,
        }
    }

    pub fn irs_normal(&self) -> Vec3 {
        match self.irs_orientation {
            IrsOrientation::Specular => {
                let to_alice = unit(sub(self.alice, self.irs));
                let to_bob = unit(sub(self.bob, self.irs));
                unit([to_alice[0] + to_bob[0], to_alice[1] + to_bob[1], to_alice[2] + to_bob[2]])
            }
            IrsOrientation::Normal { normal } => unit(normal),
        }
    }

    /// In-plane axes of the IRS grid along its `n_y` and `n_z` dimensions:
    /// the first is horizontal, the second completes the plane.
    pub fn irs_axes(&self) -> [Vec3; 2] {
        let n = self.irs_normal();
        let mut horizontal = cross([0.0, 0.0, 1.0], n);
        if norm(horizontal) < 1e-9 {
            horizontal = [1.0, 0.0, 0.0];
        }
        let horizontal = unit(horizontal);
        [horizontal, unit(cross(n, horizontal))]
    }

    fn ula(&self, n: usize, axis: Vec3) -> Vec<Vec3> {
        let axis = unit(axis);
        let s = self.element_spacing();
        (0..n)
            .map(|k| {
                let o = (k as f64 - (n as f64 - 1.0) / 2.0) * s;
                [axis[0] * o, axis[1] * o, axis[2] * o]
            })
            .collect()
    }

    fn upa(&self) -> Vec<Vec3> {
        let [ay, az] = self.irs_axes();
        let s = self.element_spacing();
        let mut out = Vec::with_capacity(self.n_irs());
        for iy in 0..self.n_y {
            let oy = (iy as f64 - (self.n_y as f64 - 1.0) / 2.0) * s;
            for iz in 0..self.n_z {
                let oz = (iz as f64 - (self.n_z as f64 - 1.0) / 2.0) * s;
                out.push([
                    ay[0] * oy + az[0] * oz,
                    ay[1] * oy + az[1] * oz,
                    ay[2] * oy + az[2] * oz,
                ]);
            }
        }
        out
    }
}

/// Unit-modulus response of an array with the given element offsets to a
/// plane wave along `direction`.
pub fn steering_vector(offsets: &[Vec3], direction: Vec3, wavelength: f64) -> DVector<Complex64> {
    let u = unit(direction);
    let k = 2.0 * PI / wavelength;
    DVector::from_iterator(
        offsets.len(),
        offsets.iter().map(|p| Complex64::from_polar(1.0, k * dot(*p, u))),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IrsConfig {
    /// Phase applied to every element unless `phases` is non-empty.
    pub theta: f64,
    /// Per-element phases, row-major over the `n_y × n_z` grid.
    pub phases: Vec<f64>,
    pub a_min: f64,
    pub omega: f64,
    pub v: f64,
}

impl Default for IrsConfig {
    fn default() -> Self {
        Self {
            theta: 0.0,
            phases: Vec::new(),
            a_min: 0.2,
            omega: 0.43 * PI,
            v: 1.6,
        }
    }
}

impl IrsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.a_min) {
            return Err(Error::Config(format!("a_min {} outside [0, 1]", self.a_min)));
        }
        if !(self.v > 0.0) {
            return Err(Error::Config(format!("amplitude steepness v {} must be positive", self.v)));
        }
        Ok(())
    }

    /// `Ψ = I`: unit amplitude at zero phase.
    pub fn identity() -> Self {
        Self {
            theta: 0.0,
            phases: Vec::new(),
            a_min: 1.0,
            omega: -PI / 2.0,
            v: 1.0,
        }
    }

    pub fn phase(&self, n: usize) -> f64 {
        if self.phases.is_empty() {
            self.theta
        } else {
            self.phases[n]
        }
    }

    /// Diagonal of `Ψ` for `n` elements.
    pub fn diagonal(&self, n: usize) -> Result<DVector<Complex64>> {
        if !self.phases.is_empty() && self.phases.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} IRS phases for {n} elements",
                self.phases.len()
            )));
        }
        Ok(DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let th = self.phase(i);
                Complex64::from_polar(irs_amplitude(th, self.a_min, self.omega, self.v), th)
            }),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FadingParams {
    pub kappa_h: f64,
    pub kappa_g: f64,
    pub noise_variance: f64,
    pub csi_sigma2_h: f64,
    pub csi_sigma2_g: f64,
    /// Metadata only.
    pub bandwidth_hz: f64,
}

impl Default for FadingParams {
    fn default() -> Self {
        Self {
            kappa_h: 3.0,
            kappa_g: 4.0,
            noise_variance: 1e-20,
            csi_sigma2_h: 0.0,
            csi_sigma2_g: 0.0,
            bandwidth_hz: 1e6,
        }
    }
}

impl FadingParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa_h", self.kappa_h),
            ("kappa_g", self.kappa_g),
            ("noise_variance", self.noise_variance),
            ("csi_sigma2_h", self.csi_sigma2_h),
            ("csi_sigma2_g", self.csi_sigma2_g),
        ] {
            if !(v >= 0.0) || v.is_nan() {
                return Err(Error::Config(format!("{name} = {v} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn condition(&self) -> Condition {
        if self.csi_sigma2_h == 0.0 && self.csi_sigma2_g == 0.0 {
            Condition::Perfect
        } else {
            Condition::Imperfect {
                sigma2_h: self.csi_sigma2_h,
                sigma2_g: self.csi_sigma2_g,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    /// `H`, IRS to Bob.
    IrsToBob,
    /// `G`, transmitter to IRS.
    TxToIrs(Identity),
    /// `D`, transmitter straight to Bob.
    Direct(Identity),
}

/// LoS component of a link, before path loss.
pub fn los_matrix(geometry: &Geometry, link: Link) -> CMatrix {
    let lambda = geometry.wavelength();
    let (rx_offsets, rx_pos, tx_offsets, tx_pos) = match link {
        Link::IrsToBob => (
            geometry.ula(geometry.n_r, geometry.bob_axis),
            geometry.bob,
            geometry.upa(),
            geometry.irs,
        ),
        Link::TxToIrs(id) => (
            geometry.upa(),
            geometry.irs,
            geometry.ula(geometry.n_t, geometry.tx_axis),
            geometry.transmitter(id),
        ),
        Link::Direct(id) => (
            geometry.ula(geometry.n_r, geometry.bob_axis),
            geometry.bob,
            geometry.ula(geometry.n_t, geometry.tx_axis),
            geometry.transmitter(id),
        ),
    };
    let arrival = steering_vector(&rx_offsets, sub(tx_pos, rx_pos), lambda);
    let departure = steering_vector(&tx_offsets, sub(rx_pos, tx_pos), lambda);
    &arrival * departure.adjoint()
}

fn link_distance(geometry: &Geometry, link: Link) -> f64 {
    match link {
        Link::IrsToBob => norm(sub(geometry.bob, geometry.irs)),
        Link::TxToIrs(id) => norm(sub(geometry.transmitter(id), geometry.irs)),
        Link::Direct(id) => norm(sub(geometry.transmitter(id), geometry.bob)),
    }
}

fn link_shape(geometry: &Geometry, link: Link) -> (usize, usize) {
    match link {
        Link::IrsToBob => (geometry.n_r, geometry.n_irs()),
        Link::TxToIrs(_) => (geometry.n_irs(), geometry.n_t),
        Link::Direct(_) => (geometry.n_r, geometry.n_t),
    }
}

/// `CN(0, 1)` entries.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    })
}

/// Rician draw of `H` or `G`; the direct link is Rayleigh with NLoS loss.
pub fn sample_channel<R: Rng + ?Sized>(geometry: &Geometry, fading: &FadingParams, link: Link, rng: &mut R) -> CMatrix {
    let (rows, cols) = link_shape(geometry, link);
    let d = link_distance(geometry, link);
    let fc = geometry.carrier_ghz();
    let nlos_gain = db_to_gain(path_loss_db(d, fc, false));
    let kappa = match link {
        Link::IrsToBob => fading.kappa_h,
        Link::TxToIrs(_) => fading.kappa_g,
        Link::Direct(_) => return complex_gaussian(rows, cols, rng) * Complex64::from(nlos_gain.sqrt()),
    };
    let scattered = complex_gaussian(rows, cols, rng);
    if kappa.is_infinite() {
        let los_gain = db_to_gain(path_loss_db(d, fc, true));
        return los_matrix(geometry, link) * Complex64::from(los_gain.sqrt());
    }
    let mut out = scattered * Complex64::from((nlos_gain / (1.0 + kappa)).sqrt());
    if kappa > 0.0 {
        let los_gain = db_to_gain(path_loss_db(d, fc, true));
        let w = (los_gain * kappa / (1.0 + kappa)).sqrt();
        out += los_matrix(geometry, link) * Complex64::from(w);
    }
    out
}

/// `Q = H Ψ G` for diagonal `Ψ`.
pub fn cascade_channel(h: &CMatrix, psi: &DVector<Complex64>, g: &CMatrix) -> Result<CMatrix> {
    if h.ncols() != psi.len() || psi.len() != g.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "cascade {}x{} · diag({}) · {}x{}",
            h.nrows(),
            h.ncols(),
            psi.len(),
            g.nrows(),
            g.ncols()
        )));
    }
    let mut scaled = g.clone();
    for (mut row, p) in scaled.row_iter_mut().zip(psi.iter()) {
        row *= *p;
    }
    Ok(h * scaled)
}

/// Orthogonal pilot `√p·I`.
pub fn pilot_matrix(n_t: usize, power: f64) -> CMatrix {
    CMatrix::identity(n_t, n_t) * Complex64::from(power.sqrt())
}

fn condition_number(m: &CMatrix) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Hadamard perturbation with entries `CN(1, σ²)`; the identity when `σ² = 0`.
pub fn csi_perturb<R: Rng + ?Sized>(m: &CMatrix, sigma2: f64, rng: &mut R) -> CMatrix {
    if sigma2 == 0.0 {
        return m.clone();
    }
    let e = complex_gaussian(m.nrows(), m.ncols(), rng) * Complex64::from(sigma2.sqrt());
    m.zip_map(&e, |a, b| a * (Complex64::new(1.0, 0.0) + b))
}

/// `X̂ = (Q X_p + W) X_p⁻¹` with `W ~ CN(0, σ_w²)`.
pub fn estimate_fingerprint<R: Rng + ?Sized>(q: &CMatrix, pilot: &CMatrix, noise_variance: f64, rng: &mut R) -> Result<CMatrix> {
    if pilot.nrows() != pilot.ncols() || pilot.nrows() != q.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "pilot {}x{} for a channel with {} columns",
            pilot.nrows(),
            pilot.ncols(),
            q.ncols()
        )));
    }
    let condition = condition_number(pilot);
    if !(condition < MAX_PILOT_CONDITION) {
        return Err(Error::SingularPilot { condition });
    }
    let inverse = pilot
        .clone()
        .try_inverse()
        .ok_or(Error::SingularPilot { condition })?;
    let mut received = q * pilot;
    if noise_variance > 0.0 {
        received += complex_gaussian(q.nrows(), q.ncols(), rng) * Complex64::from(noise_variance.sqrt());
    }
    Ok(received * inverse)
}

/// Real parts row-major, then imaginary parts row-major.
pub fn stack_fingerprint(x: &CMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * x.len());
    for i in 0..x.nrows() {
        out.extend((0..x.ncols()).map(|j| x[(i, j)].re));
    }
    for i in 0..x.nrows() {
        out.extend((0..x.ncols()).map(|j| x[(i, j)].im));
    }
    out
}

pub fn unstack_fingerprint(v: &[f64], rows: usize, cols: usize) -> Result<CMatrix> {
    if v.len() != 2 * rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a {rows}x{cols} complex matrix",
            v.len()
        )));
    }
    let half = rows * cols;
    Ok(CMatrix::from_fn(rows, cols, |i, j| {
        Complex64::new(v[i * cols + j], v[half + i * cols + j])
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Irs,
    NonIrs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Condition {
    Perfect,
    Imperfect { sigma2_h: f64, sigma2_g: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ChannelScenario {
    pub mode: Mode,
    pub geometry: Geometry,
    pub irs: IrsConfig,
    pub fading: FadingParams,
    pub pilot_power: PilotPower,
}

/// Pilot power `p` of the `√p·I` pilot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PilotPower(pub f64);

impl Default for PilotPower {
    fn default() -> Self {
        PilotPower(1.0)
    }
}

impl ChannelScenario {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.irs.validate()?;
        self.fading.validate()?;
        if !self.irs.phases.is_empty() && self.irs.phases.len() != self.geometry.n_irs() {
            return Err(Error::Config(format!(
                "{} IRS phases for {} elements",
                self.irs.phases.len(),
                self.geometry.n_irs()
            )));
        }
        if !(self.pilot_power.0 > 0.0) {
            return Err(Error::Config("pilot power must be positive".into()));
        }
        Ok(())
    }

    pub fn fingerprint_dim(&self) -> usize {
        2 * self.geometry.n_r * self.geometry.n_t
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// One estimated fingerprint for `id`, from the sample's own streams.
    pub fn sample_fingerprint(&self, id: Identity, seed: u64, sample: u64) -> Result<Vec<f64>> {
        let g = &self.geometry;
        let mut rng = seeds::stream(seed, &[STREAM_CHANNEL, id.class() as u64, sample]);
        let mut noise_rng = seeds::stream(seed, &[STREAM_NOISE, id.class() as u64, sample]);
        let mut csi_rng = seeds::stream(seed, &[STREAM_CSI, id.class() as u64, sample]);
        let f = &self.fading;
        let q = match self.mode {
            Mode::Irs => {
                let h = sample_channel(g, f, Link::IrsToBob, &mut rng);
                let gm = sample_channel(g, f, Link::TxToIrs(id), &mut rng);
                let h = csi_perturb(&h, f.csi_sigma2_h, &mut csi_rng);
                let gm = csi_perturb(&gm, f.csi_sigma2_g, &mut csi_rng);
                cascade_channel(&h, &self.irs.diagonal(g.n_irs())?, &gm)?
            }
            Mode::NonIrs => {
                let d = sample_channel(g, f, Link::Direct(id), &mut rng);
                csi_perturb(&d, f.csi_sigma2_h, &mut csi_rng)
            }
        };
        let pilot = pilot_matrix(g.n_t, self.pilot_power.0);
        let x = estimate_fingerprint(&q, &pilot, f.noise_variance, &mut noise_rng)?;
        Ok(stack_fingerprint(&x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintSample {
    pub vector: Vec<f64>,
    pub identity: Identity,
    pub condition: Condition,
}

const DATASET_FORMAT: &str = "egpc-fingerprints";
const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintDataset {
    pub format: String,
    pub version: u32,
    pub scenario: ChannelScenario,
    pub scenario_hash: String,
    pub seed: u64,
    pub stacking: String,
    pub standardization: String,
    pub train: Vec<FingerprintSample>,
    pub test: Vec<FingerprintSample>,
}

/// Independent draws for both transmitters. Train samples come first per
/// class, then test samples; records are ordered Alice then Eve.
pub fn generate_dataset(
    scenario: &ChannelScenario,
    per_class_train: usize,
    per_class_test: usize,
    seed: u64,
) -> Result<FingerprintDataset> {
    scenario.validate()?;
    if per_class_train == 0 || per_class_test == 0 {
        return Err(Error::Config("per-class train and test counts must be at least 1".into()));
    }
    let per_class = per_class_train + per_class_test;
    let condition = scenario.fading.condition();
    let draw = |id: Identity| -> Result<Vec<FingerprintSample>> {
        (0..per_class)
            .into_par_iter()
            .map(|i| {
                Ok(FingerprintSample {
                    vector: scenario.sample_fingerprint(id, seed, i as u64)?,
                    identity: id,
                    condition,
                })
            })
            .collect()
    };
    let mut alice = draw(Identity::Alice)?;
    let mut eve = draw(Identity::Eve)?;
    let alice_test = alice.split_off(per_class_train);
    let eve_test = eve.split_off(per_class_train);
    let mut train = alice;
    train.extend(eve);
    let mut test = alice_test;
    test.extend(eve_test);
    Ok(FingerprintDataset {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        scenario_hash: scenario.hash(),
        scenario: scenario.clone(),
        seed,
        stacking: STACKING.into(),
        standardization: "none".into(),
        train,
        test,
    })
}

impl FingerprintDataset {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ds: Self = serde_json::from_str(text)?;
        if ds.format != DATASET_FORMAT || ds.version != DATASET_VERSION {
            return Err(Error::Format(format!(
                "expected {DATASET_FORMAT} v{DATASET_VERSION}, found {} v{}",
                ds.format, ds.version
            )));
        }
        let dim = ds.scenario.fingerprint_dim();
        if let Some(bad) = ds.train.iter().chain(&ds.test).find(|s| s.vector.len() != dim) {
            return Err(Error::Format(format!(
                "fingerprint of length {} in a {dim}-dimensional dataset",
                bad.vector.len()
            )));
        }
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Human-readable TOML summary of how the dataset was generated.
    pub fn manifest(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            format: &'a str,
            version: u32,
            scenario_hash: &'a str,
            seed: u64,
            stacking: &'a str,
            standardization: &'a str,
            train_samples: usize,
            test_samples: usize,
            scenario: &'a ChannelScenario,
        }
        toml::to_string(&Manifest {
            format: &self.format,
            version: self.version,
            scenario_hash: &self.scenario_hash,
            seed: self.seed,
            stacking: &self.stacking,
            standardization: &self.standardization,
            train_samples: self.train.len(),
            test_samples: self.test.len(),
            scenario: &self.scenario,
        })
        .map_err(|e| Error::Format(e.to_string()))
    }
}

/// Write to a sibling temp file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
