//! Noise channels, measurement families and control unitaries for the
//! qutrit testbed, with CPTP certification via the Choi matrix.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::qcore::{c, matrix_exponential, ComplexMatrix, DensityOperator, SpectralDecomposition};

pub const QUTRIT: usize = 3;

/// Largest imprecision accepted without the explicit override.
pub const EPSILON_MAX: f64 = 0.3;
/// Hard ceiling: above this the Kraus entries `√(1-2ε)` stop being real.
pub const EPSILON_HARD_MAX: f64 = 0.5;
/// Outcomes with probability at or below this are treated as impossible.
pub const ZERO_PROBABILITY: f64 = 1e-12;

const KRAUS_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoiseKind {
    Depolarizing,
    AmplitudeDamping,
    RandomPermutation,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [
        NoiseKind::Depolarizing,
        NoiseKind::AmplitudeDamping,
        NoiseKind::RandomPermutation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Depolarizing => "depolarizing",
            NoiseKind::AmplitudeDamping => "amplitude_damping",
            NoiseKind::RandomPermutation => "random_permutation",
        }
    }

    pub fn channel(self, alpha: f64) -> Result<QuantumChannel> {
        match self {
            NoiseKind::Depolarizing => depolarizing(alpha),
            NoiseKind::AmplitudeDamping => amplitude_damping(alpha),
            NoiseKind::RandomPermutation => random_permutation(alpha),
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "depolarizing" => Ok(NoiseKind::Depolarizing),
            "amplitude_damping" => Ok(NoiseKind::AmplitudeDamping),
            "random_permutation" => Ok(NoiseKind::RandomPermutation),
            other => Err(Error::Config(format!(
                "unknown noise kind '{other}' (expected depolarizing, amplitude_damping or random_permutation)"
            ))),
        }
    }
}

/// Kind and parameters of a channel, carried into result manifests.
#[derive(Clone, Debug, PartialEq)]
pub enum ChannelLabel {
    Identity,
    Noise { kind: NoiseKind, alpha: f64 },
    Measurement { kind: MeasurementKind, epsilon: f64 },
    Custom(String),
}

impl fmt::Display for ChannelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelLabel::Identity => f.write_str("identity"),
            ChannelLabel::Noise { kind, alpha } => write!(f, "{kind}(alpha={alpha})"),
            ChannelLabel::Measurement { kind, epsilon } => write!(f, "{kind:?}(epsilon={epsilon})"),
            ChannelLabel::Custom(s) => f.write_str(s),
        }
    }
}

/// A CPTP map in Kraus form, `ρ ↦ Σ_k K_k ρ K_k†`.
#[derive(Clone, Debug)]
pub struct QuantumChannel {
    kraus: Vec<ComplexMatrix>,
    label: ChannelLabel,
}

/// Numbers behind a CPTP certificate.
#[derive(Clone, Debug)]
pub struct CptpReport {
    /// `‖Σ K†K − I‖_max`
    pub completeness_error: f64,
    pub choi_min_eigenvalue: f64,
    /// `‖Tr_out J − I‖_max`
    pub partial_trace_error: f64,
}

impl CptpReport {
    pub fn passes(&self, completeness_tol: f64, psd_tol: f64) -> bool {
        self.completeness_error <= completeness_tol
            && self.partial_trace_error <= psd_tol
            && self.choi_min_eigenvalue >= -psd_tol
    }
}

impl QuantumChannel {
    pub fn new(kraus: Vec<ComplexMatrix>, label: ChannelLabel) -> Result<Self> {
        let Some(first) = kraus.first() else {
            return Err(Error::Dimension("channel needs at least one Kraus operator".into()));
        };
        let d = first.dim();
        if kraus.iter().any(|k| !k.is_square() || k.dim() != d) {
            return Err(Error::Dimension("Kraus operators must share one square shape".into()));
        }
        Ok(Self { kraus, label })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            kraus: vec![ComplexMatrix::identity(dim)],
            label: ChannelLabel::Identity,
        }
    }

    pub fn kraus_ops(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn label(&self) -> &ChannelLabel {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.kraus[0].dim()
    }

    /// Applies the map to an arbitrary matrix (not necessarily a state).
    pub fn apply_linear(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let d = self.dim();
        let mut out = ComplexMatrix::zeros(d, d);
        for k in &self.kraus {
            out = &out + &k.sandwich(m);
        }
        out
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        if rho.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "channel of dimension {} applied to state of dimension {}",
                self.dim(),
                rho.dim()
            )));
        }
        Ok(DensityOperator::from_cp_output(self.apply_linear(rho.matrix())))
    }

    pub fn completeness_error(&self) -> f64 {
        completeness_error(&self.kraus)
    }

    /// `J = Σ_ij |i⟩⟨j| ⊗ 𝓔(|i⟩⟨j|)`, a `d²×d²` matrix.
    pub fn choi_matrix(&self) -> ComplexMatrix {
        let d = self.dim();
        let mut j = ComplexMatrix::zeros(d * d, d * d);
        for a in 0..d {
            for b in 0..d {
                let unit = ComplexMatrix::unit(d, a, b);
                j = &j + &unit.kron(&self.apply_linear(&unit));
            }
        }
        j
    }

    pub fn certify(&self) -> Result<CptpReport> {
        let d = self.dim();
        let choi = self.choi_matrix();
        let min_eig = SpectralDecomposition::of_hermitian(&choi)?.min_eigenvalue();
        let pt = choi_output_partial_trace(&choi, d);
        Ok(CptpReport {
            completeness_error: self.completeness_error(),
            choi_min_eigenvalue: min_eig,
            partial_trace_error: pt.max_abs_diff(&ComplexMatrix::identity(d)),
        })
    }
}

/// Traces out the output factor of a Choi matrix built as input ⊗ output.
pub fn choi_output_partial_trace(choi: &ComplexMatrix, d: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |i, j| {
        (0..d).map(|a| choi.get(i * d + a, j * d + a)).sum()
    })
}

fn completeness_error(ops: &[ComplexMatrix]) -> f64 {
    let d = ops[0].dim();
    let mut sum = ComplexMatrix::zeros(d, d);
    for k in ops {
        sum = &sum + &(&k.adjoint() * k);
    }
    sum.max_abs_diff(&ComplexMatrix::identity(d))
}

fn check_unit_interval(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::param(name, v, "[0, 1]"))
    }
}

/// Cyclic shift |j⟩ ↦ |j+1 mod 3⟩.
fn cycle() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]])
}

/// `𝒩_α(ρ) = α I/3 + (1-α) ρ`.
///
/// Stored as a weighted Weyl (shift-and-clock) Kraus set: the nine operators
/// `X^a Z^b` twirl any state to `I/3`, so weighting the identity by
/// `1 - 8α/9` and the other eight by `α/9` gives the affine form.
pub fn depolarizing(alpha: f64) -> Result<QuantumChannel> {
    check_unit_interval("alpha", alpha)?;
    let x = cycle();
    let omega = c(0.0, 2.0 * PI / 3.0).exp();
    let z = ComplexMatrix::from_fn(3, 3, |i, j| if i == j { omega.powu(i as u32) } else { c(0.0, 0.0) });
    let mut kraus = Vec::with_capacity(9);
    let mut xa = ComplexMatrix::identity(3);
    for a in 0..3 {
        let mut w = xa.clone();
        for b in 0..3 {
            let weight = if a == 0 && b == 0 {
                1.0 - 8.0 * alpha / 9.0
            } else {
                alpha / 9.0
            };
            if weight > 0.0 {
                kraus.push(w.scale(weight.sqrt()));
            }
            w = &w * &z;
        }
        xa = &x * &xa;
    }
    let ch = QuantumChannel::new(
        kraus,
        ChannelLabel::Noise {
            kind: NoiseKind::Depolarizing,
            alpha,
        },
    )?;
    // the Kraus set must reproduce the affine map on every matrix unit
    for i in 0..3 {
        for j in 0..3 {
            let unit = ComplexMatrix::unit(3, i, j);
            let mut expected = unit.scale(1.0 - alpha);
            if i == j {
                expected = &expected + &ComplexMatrix::identity(3).scale(alpha / 3.0);
            }
            let err = ch.apply_linear(&unit).max_abs_diff(&expected);
            if err > KRAUS_TOL {
                return Err(Error::InvalidState(format!(
                    "depolarizing Kraus set deviates from affine form by {err:e}"
                )));
            }
        }
    }
    Ok(ch)
}

/// Qutrit amplitude damping with `γ₁ = 0`, `γ₂ = γ₃ = α/2`.
///
/// The four operators are kept as printed, including the zero `N_01` and the
/// `N_03` name for the |2⟩ → |0⟩ decay.
pub fn amplitude_damping(alpha: f64) -> Result<QuantumChannel> {
    check_unit_interval("alpha", alpha)?;
    let (g1, g2, g3) = (0.0_f64, alpha / 2.0, alpha / 2.0);
    let n0 = ComplexMatrix::diagonal(&[1.0, (1.0 - g1).sqrt(), (1.0 - g2 - g3).max(0.0).sqrt()]);
    let n01 = ComplexMatrix::unit(3, 0, 1).scale(g1.sqrt());
    let n12 = ComplexMatrix::unit(3, 1, 2).scale(g2.sqrt());
    let n03 = ComplexMatrix::unit(3, 0, 2).scale(g3.sqrt());
    QuantumChannel::new(
        vec![n0, n01, n12, n03],
        ChannelLabel::Noise {
            kind: NoiseKind::AmplitudeDamping,
            alpha,
        },
    )
}

/// Random cyclic flips: identity with weight `1 - 2α/3`, each cyclic shift
/// with weight `α/3`.
pub fn random_permutation(alpha: f64) -> Result<QuantumChannel> {
    check_unit_interval("alpha", alpha)?;
    let p1 = cycle();
    let p2 = &p1 * &p1;
    QuantumChannel::new(
        vec![
            ComplexMatrix::identity(3).scale((1.0 - 2.0 * alpha / 3.0).sqrt()),
            p1.scale((alpha / 3.0).sqrt()),
            p2.scale((alpha / 3.0).sqrt()),
        ],
        ChannelLabel::Noise {
            kind: NoiseKind::RandomPermutation,
            alpha,
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasurementKind {
    Imprecise,
    TerminalProjective,
}

/// Outcome-indexed measurement operators with `Σ_l M_l†M_l = I`.
#[derive(Clone, Debug)]
pub struct MeasurementModel {
    ops: Vec<ComplexMatrix>,
    effects: Vec<ComplexMatrix>,
    epsilon: f64,
    kind: MeasurementKind,
}

impl MeasurementModel {
    fn from_ops(ops: Vec<ComplexMatrix>, epsilon: f64, kind: MeasurementKind) -> Self {
        let effects = ops.iter().map(|m| &m.adjoint() * m).collect();
        Self {
            ops,
            effects,
            epsilon,
            kind,
        }
    }

    pub fn ops(&self) -> &[ComplexMatrix] {
        &self.ops
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn kind(&self) -> MeasurementKind {
        self.kind
    }

    pub fn n_outcomes(&self) -> usize {
        self.ops.len()
    }

    pub fn dim(&self) -> usize {
        self.ops[0].dim()
    }

    pub fn completeness_error(&self) -> f64 {
        completeness_error(&self.ops)
    }

    /// The unconditioned (outcome-averaged) map `ρ ↦ Σ_l M_l ρ M_l†`.
    pub fn as_channel(&self) -> QuantumChannel {
        QuantumChannel {
            kraus: self.ops.clone(),
            label: ChannelLabel::Measurement {
                kind: self.kind,
                epsilon: self.epsilon,
            },
        }
    }

    fn check_dim(&self, rho: &DensityOperator) -> Result<()> {
        if rho.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "measurement of dimension {} on state of dimension {}",
                self.dim(),
                rho.dim()
            )));
        }
        Ok(())
    }

    /// `p(l) = tr(M_l† M_l ρ)`.
    pub fn outcome_probabilities(&self, rho: &DensityOperator) -> Result<Vec<f64>> {
        self.check_dim(rho)?;
        Ok(self
            .effects
            .iter()
            .map(|e| (e * rho.matrix()).trace().re.max(0.0))
            .collect())
    }

    /// Post-measurement state `M_l ρ M_l† / p(l)`.
    pub fn condition(&self, rho: &DensityOperator, outcome: usize) -> Result<DensityOperator> {
        self.check_dim(rho)?;
        let m = self.ops.get(outcome).ok_or_else(|| {
            Error::param("outcome", outcome as f64, format!("0..{}", self.ops.len()))
        })?;
        let unnorm = m.sandwich(rho.matrix());
        let p = unnorm.trace().re;
        if p <= ZERO_PROBABILITY {
            return Err(Error::ZeroProbability {
                outcome,
                probability: p,
            });
        }
        Ok(DensityOperator::from_cp_output(unnorm))
    }
}

/// The imprecise computational-basis measurement: the correct outcome has
/// amplitude `√(1-2ε)`, each wrong one `√ε`. Accepts `ε ∈ [0, 0.3]`.
pub fn imprecise_measurement(epsilon: f64) -> Result<MeasurementModel> {
    if !(0.0..=EPSILON_MAX).contains(&epsilon) {
        return Err(Error::param(
            "epsilon",
            epsilon,
            format!("[0, {EPSILON_MAX}] (use imprecise_measurement_unchecked for up to {EPSILON_HARD_MAX})"),
        ));
    }
    imprecise_measurement_unchecked(epsilon)
}

/// As [`imprecise_measurement`] but accepting `ε ∈ [0, 0.5]`.
pub fn imprecise_measurement_unchecked(epsilon: f64) -> Result<MeasurementModel> {
    if !(0.0..=EPSILON_HARD_MAX).contains(&epsilon) {
        return Err(Error::param("epsilon", epsilon, format!("[0, {EPSILON_HARD_MAX}]")));
    }
    let hit = (1.0 - 2.0 * epsilon).sqrt();
    let miss = epsilon.sqrt();
    let ops = (0..QUTRIT)
        .map(|l| {
            let diag: Vec<f64> = (0..QUTRIT).map(|k| if k == l { hit } else { miss }).collect();
            ComplexMatrix::diagonal(&diag)
        })
        .collect();
    Ok(MeasurementModel::from_ops(ops, epsilon, MeasurementKind::Imprecise))
}

/// Projective computational-basis measurement used to read out the final
/// state.
pub fn terminal_measurement() -> MeasurementModel {
    let ops = (0..QUTRIT).map(|l| ComplexMatrix::unit(QUTRIT, l, l)).collect();
    MeasurementModel::from_ops(ops, 0.0, MeasurementKind::TerminalProjective)
}

/// Unitaries `U_β = exp(β G)` for an anti-Hermitian generator `G`, with
/// `β ∈ [-1, 1]`.
#[derive(Clone, Debug)]
pub struct ControlFamily {
    generator: ComplexMatrix,
    ladder: bool,
}

impl ControlFamily {
    pub const BETA_MIN: f64 = -1.0;
    pub const BETA_MAX: f64 = 1.0;

    /// `G = a - a†` with `a` the qutrit ladder operator, i.e.
    /// `H_c(β) = iβ(a - a†)` and `U_β = e^{-iH_c} = e^{β(a - a†)}`.
    pub fn qutrit_ladder() -> Self {
        let a = ComplexMatrix::from_real_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]]);
        Self {
            generator: &a - &a.adjoint(),
            ladder: true,
        }
    }

    pub fn new(generator: ComplexMatrix) -> Result<Self> {
        if !generator.is_square() {
            return Err(Error::Dimension("control generator must be square".into()));
        }
        let dev = (&generator + &generator.adjoint()).max_abs();
        if dev > KRAUS_TOL {
            return Err(Error::InvalidState(format!(
                "control generator is not anti-Hermitian (deviation {dev:e})"
            )));
        }
        Ok(Self {
            generator,
            ladder: false,
        })
    }

    pub fn generator(&self) -> &ComplexMatrix {
        &self.generator
    }

    pub fn check_beta(beta: f64) -> Result<()> {
        if (Self::BETA_MIN..=Self::BETA_MAX).contains(&beta) {
            Ok(())
        } else {
            Err(Error::ActionOutOfRange(beta))
        }
    }

    /// `U_β`. The ladder generator satisfies `G³ = -2G`, so
    /// `e^{βG} = I + sin(√2β)/√2 · G + (1 - cos(√2β))/2 · G²`.
    pub fn unitary(&self, beta: f64) -> Result<ComplexMatrix> {
        Self::check_beta(beta)?;
        if self.ladder {
            let g = &self.generator;
            let s = (SQRT_2 * beta).sin() / SQRT_2;
            let k = (1.0 - (SQRT_2 * beta).cos()) / 2.0;
            let g2 = g * g;
            Ok(&(&ComplexMatrix::identity(3) + &g.scale(s)) + &g2.scale(k))
        } else {
            self.unitary_generic(beta)
        }
    }

    /// `U_β` through the generic matrix exponential.
    pub fn unitary_generic(&self, beta: f64) -> Result<ComplexMatrix> {
        Self::check_beta(beta)?;
        matrix_exponential(&self.generator.scale(beta))
    }

    pub fn apply(&self, beta: f64, rho: &DensityOperator) -> Result<DensityOperator> {
        let u = self.unitary(beta)?;
        if u.dim() != rho.dim() {
            return Err(Error::Dimension("control unitary and state dimensions differ".into()));
        }
        Ok(DensityOperator::from_cp_output(u.sandwich(rho.matrix())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &DensityOperator, diag: &[f64], tol: f64) -> bool {
        a.max_abs_diff(&DensityOperator::diagonal(diag).unwrap()) <= tol
    }

    #[test]
    fn depolarizing_examples() {
        let full = depolarizing(1.0).unwrap();
        let rho = DensityOperator::basis(3, 1);
        assert!(close(&full.apply(&rho).unwrap(), &[1.0 / 3.0; 3], 1e-12));
        let none = depolarizing(0.0).unwrap();
        assert!(none.apply(&rho).unwrap().max_abs_diff(&rho) < 1e-12);
        let part = depolarizing(0.3).unwrap();
        assert!(close(&part.apply(&DensityOperator::basis(3, 0)).unwrap(), &[0.8, 0.1, 0.1], 1e-12));
        assert!(depolarizing(1.1).is_err());
        assert!(depolarizing(-0.1).is_err());
    }

    #[test]
    fn amplitude_damping_examples() {
        let none = amplitude_damping(0.0).unwrap();
        let two = DensityOperator::basis(3, 2);
        assert!(none.apply(&two).unwrap().max_abs_diff(&two) < 1e-12);
        let full = amplitude_damping(1.0).unwrap();
        assert!(close(&full.apply(&two).unwrap(), &[0.5, 0.5, 0.0], 1e-12));
        let zero = DensityOperator::basis(3, 0);
        for alpha in [0.0, 0.3, 0.7, 1.0] {
            let out = amplitude_damping(alpha).unwrap().apply(&zero).unwrap();
            assert!(out.max_abs_diff(&zero) < 1e-12);
        }
        assert_eq!(full.kraus_ops().len(), 4);
        assert!(amplitude_damping(2.0).is_err());
    }

    #[test]
    fn random_permutation_examples() {
        let zero = DensityOperator::basis(3, 0);
        let none = random_permutation(0.0).unwrap();
        assert!(none.apply(&zero).unwrap().max_abs_diff(&zero) < 1e-12);
        assert!(close(&random_permutation(1.0).unwrap().apply(&zero).unwrap(), &[1.0 / 3.0; 3], 1e-12));
        assert!(close(&random_permutation(0.3).unwrap().apply(&zero).unwrap(), &[0.8, 0.1, 0.1], 1e-12));
        let one = DensityOperator::basis(3, 1);
        assert!(close(
            &random_permutation(0.5).unwrap().apply(&one).unwrap(),
            &[1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0],
            1e-12
        ));
        assert!(random_permutation(f64::NAN).is_err());
    }

    #[test]
    fn imprecise_measurement_examples() {
        let proj = imprecise_measurement(0.0).unwrap();
        let term = terminal_measurement();
        for (a, b) in proj.ops().iter().zip(term.ops()) {
            assert!(a.max_abs_diff(b) < 1e-15);
        }
        let m = imprecise_measurement(0.1).unwrap();
        let p = m.outcome_probabilities(&DensityOperator::basis(3, 0)).unwrap();
        for (got, want) in p.iter().zip([0.8, 0.1, 0.1]) {
            assert!((got - want).abs() < 1e-12);
        }
        let p = m.outcome_probabilities(&DensityOperator::basis(3, 1)).unwrap();
        for (got, want) in p.iter().zip([0.1, 0.8, 0.1]) {
            assert!((got - want).abs() < 1e-12);
        }
        for eps in [0.2, 0.3] {
            let p = imprecise_measurement(eps)
                .unwrap()
                .outcome_probabilities(&DensityOperator::maximally_mixed(3))
                .unwrap();
            assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
        }
        assert!(imprecise_measurement(0.31).is_err());
        assert!(imprecise_measurement_unchecked(0.45).is_ok());
        assert!(imprecise_measurement_unchecked(0.51).is_err());
    }

    #[test]
    fn terminal_measurement_examples() {
        let t = terminal_measurement();
        let p = t.outcome_probabilities(&DensityOperator::basis(3, 2)).unwrap();
        assert_eq!(p, vec![0.0, 0.0, 1.0]);
        let half = DensityOperator::diagonal(&[0.5, 0.5, 0.0]).unwrap();
        let p = t.outcome_probabilities(&half).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15 && p[2] == 0.0);
        for op in t.ops() {
            assert!((op * op).max_abs_diff(op) < 1e-15);
            assert!(op.adjoint().max_abs_diff(op) < 1e-15);
        }
        let collapsed = t.condition(&half, 0).unwrap();
        assert!(collapsed.max_abs_diff(&DensityOperator::basis(3, 0)) < 1e-15);
    }

    #[test]
    fn conditioning_examples() {
        let m = imprecise_measurement(0.1).unwrap();
        let zero = DensityOperator::basis(3, 0);
        assert!(m.condition(&zero, 2).unwrap().max_abs_diff(&zero) < 1e-12);
        let post = m.condition(&DensityOperator::maximally_mixed(3), 0).unwrap();
        assert!(close(&post, &[0.8, 0.1, 0.1], 1e-12));
        let t = terminal_measurement();
        assert!(matches!(
            t.condition(&zero, 1),
            Err(Error::ZeroProbability { outcome: 1, .. })
        ));
    }

    #[test]
    fn basis_states_invariant_under_every_outcome() {
        for eps in [0.05, 0.1, 0.2, 0.3] {
            let m = imprecise_measurement(eps).unwrap();
            for k in 0..3 {
                let b = DensityOperator::basis(3, k);
                for l in 0..3 {
                    assert!(m.condition(&b, l).unwrap().max_abs_diff(&b) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn control_unitary_examples() {
        let fam = ControlFamily::qutrit_ladder();
        assert!(fam.unitary(0.0).unwrap().max_abs_diff(&ComplexMatrix::identity(3)) < 1e-15);
        let u = fam.unitary(1.0).unwrap();
        let r2 = 2f64.sqrt();
        assert!((u.get(2, 0).re - (1.0 - r2.cos()) / 2.0).abs() < 1e-14);
        assert!((u.get(1, 0).re + r2.sin() / r2).abs() < 1e-14);
        assert!((u.get(2, 0).re - 0.42203).abs() < 1e-5);
        assert!((u.get(1, 0).re + 0.69845).abs() < 1e-5);
        assert!(matches!(fam.unitary(1.5), Err(Error::ActionOutOfRange(_))));
    }

    #[test]
    fn control_inverse_is_transpose() {
        let fam = ControlFamily::qutrit_ladder();
        for i in 0..=100 {
            let beta = -1.0 + 2.0 * i as f64 / 100.0;
            let u = fam.unitary(beta).unwrap();
            let v = fam.unitary(-beta).unwrap();
            assert!(v.max_abs_diff(&u.transpose()) < 1e-12);
            assert!((&u * &v).max_abs_diff(&ComplexMatrix::identity(3)) < 1e-10);
            assert!(u.max_abs_diff(&fam.unitary_generic(beta).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn generic_family_rejects_hermitian_generator() {
        assert!(ControlFamily::new(ComplexMatrix::identity(3)).is_err());
    }

    #[test]
    fn choi_examples() {
        let id = QuantumChannel::identity(3).choi_matrix();
        let tr = id.trace().re;
        assert!((tr - 3.0).abs() < 1e-12);
        let spec = SpectralDecomposition::of_hermitian(&id).unwrap();
        let nonzero = spec.eigenvalues.iter().filter(|l| l.abs() > 1e-9).count();
        assert_eq!(nonzero, 1);
        let dep = depolarizing(1.0).unwrap().choi_matrix();
        assert!(dep.max_abs_diff(&ComplexMatrix::identity(9).scale(1.0 / 3.0)) < 1e-12);
    }

    #[test]
    fn non_cp_map_fails_certification() {
        // transpose-like map given by a non-normalized Kraus set
        let ch = QuantumChannel::new(
            vec![ComplexMatrix::identity(3).scale(1.2)],
            ChannelLabel::Custom("overscaled".into()),
        )
        .unwrap();
        let report = ch.certify().unwrap();
        assert!(!report.passes(1e-10, 1e-9));
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let ch = depolarizing(0.5).unwrap();
        assert!(ch.apply(&DensityOperator::basis(2, 0)).is_err());
        let m = imprecise_measurement(0.1).unwrap();
        assert!(m.outcome_probabilities(&DensityOperator::basis(2, 0)).is_err());
    }
}
