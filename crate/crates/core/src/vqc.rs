//! Data re-uploading VQC templates for the surrogate model and the policy.
//!
//! A template is `1 + reuploads` upload blocks. Each block encodes every
//! input `u ∈ [-1, 1]` as `RY(scale·u)` on its own qubit and then applies
//! `layers_per_upload` variational layers, each a `Rot` on every qubit
//! followed by the entangler. Outputs are `⟨Z⟩` on qubits `0..num_outputs`.
//!
//! Parameters are laid out as `[upload][layer][qubit][φ, θ, ω]`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::qsim::{Angle, BoundCircuit, CircuitSpec, Op};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entangler {
    /// CNOT from qubit `i` to `i + 1`, closing with `n - 1 → 0` (a single
    /// CNOT for two qubits).
    Ring,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VqcConfig {
    pub num_qubits: usize,
    pub num_inputs: usize,
    pub reuploads: usize,
    pub layers_per_upload: usize,
    pub num_outputs: usize,
    /// Encoding angle per unit input; `π` maps `[-1, 1]` onto `[-π, π]`.
    pub encoding_scale: f64,
    pub entangler: Entangler,
}

/// Surrogate encoding angle per unit input. With `π` the binary action
/// (`±1`) would encode to `RY(±π)`, which differ only by a global phase.
pub const MODEL_ENCODING_SCALE: f64 = 0.5;

impl VqcConfig {
    /// Surrogate defaults: 5 qubits, 3 re-uploadings, 5 layers per upload,
    /// inputs `(x, ẋ, θ, θ̇, action)`, 4 delta outputs.
    pub fn model() -> Self {
        Self {
            num_qubits: 5,
            num_inputs: 5,
            reuploads: 3,
            layers_per_upload: 5,
            num_outputs: 4,
            encoding_scale: MODEL_ENCODING_SCALE,
            entangler: Entangler::Ring,
        }
    }

    /// Policy defaults: 5 qubits, 3 re-uploadings, 3 layers per upload,
    /// 4 state inputs, a single readout (180 parameters).
    pub fn policy() -> Self {
        Self {
            num_qubits: 5,
            num_inputs: 4,
            reuploads: 3,
            layers_per_upload: 3,
            num_outputs: 1,
            encoding_scale: PI,
            entangler: Entangler::Ring,
        }
    }

    pub fn num_uploads(&self) -> usize {
        self.reuploads + 1
    }

    pub fn num_params(&self) -> usize {
        self.num_uploads() * self.layers_per_upload * self.num_qubits * 3
    }

    pub fn param_index(&self, upload: usize, layer: usize, qubit: usize, component: usize) -> usize {
        ((upload * self.layers_per_upload + layer) * self.num_qubits + qubit) * 3 + component
    }

    fn validate(&self) -> Result<()> {
        if self.num_qubits == 0 {
            return Err(config_err("a template needs at least one qubit"));
        }
        if self.num_inputs > self.num_qubits {
            return Err(config_err(format!(
                "{} inputs do not fit on {} qubits",
                self.num_inputs, self.num_qubits
            )));
        }
        if self.num_outputs == 0 || self.num_outputs > self.num_qubits {
            return Err(config_err(format!(
                "{} outputs invalid for {} qubits",
                self.num_outputs, self.num_qubits
            )));
        }
        if !self.encoding_scale.is_finite() {
            return Err(config_err("encoding scale must be finite"));
        }
        Ok(())
    }
}

/// A built template: its hyperparameters and the compiled circuit spec.
#[derive(Debug, Clone, PartialEq)]
pub struct VqcTemplate {
    config: VqcConfig,
    spec: CircuitSpec,
}

pub fn build_model_template(config: VqcConfig) -> Result<VqcTemplate> {
    VqcTemplate::new(config)
}

pub fn build_policy_template(config: VqcConfig) -> Result<VqcTemplate> {
    VqcTemplate::new(config)
}

fn entangler_ops(kind: Entangler, n: usize) -> Vec<Op> {
    match kind {
        Entangler::None => vec![],
        Entangler::Ring => match n {
            1 => vec![],
            2 => vec![Op::Cnot { control: 0, target: 1 }],
            _ => (0..n).map(|i| Op::Cnot { control: i, target: (i + 1) % n }).collect(),
        },
    }
}

impl VqcTemplate {
    pub fn new(config: VqcConfig) -> Result<Self> {
        config.validate()?;
        let n = config.num_qubits;
        let mut ops = Vec::new();
        for upload in 0..config.num_uploads() {
            for i in 0..config.num_inputs {
                ops.push(Op::Ry(i, Angle::Input { index: i, scale: config.encoding_scale }));
            }
            for layer in 0..config.layers_per_upload {
                for q in 0..n {
                    let p = |c| Angle::Param(config.param_index(upload, layer, q, c));
                    ops.push(Op::Rot { target: q, phi: p(0), theta: p(1), omega: p(2) });
                }
                ops.extend(entangler_ops(config.entangler, n));
            }
        }
        let spec = CircuitSpec::new(
            n,
            config.num_inputs,
            config.num_params(),
            ops,
            (0..config.num_outputs).collect(),
        )?;
        Ok(Self { config, spec })
    }

    pub fn config(&self) -> &VqcConfig {
        &self.config
    }

    pub fn spec(&self) -> &CircuitSpec {
        &self.spec
    }

    pub fn num_params(&self) -> usize {
        self.config.num_params()
    }

    pub fn num_inputs(&self) -> usize {
        self.config.num_inputs
    }

    pub fn num_outputs(&self) -> usize {
        self.config.num_outputs
    }

    pub fn bind(&self, params: &ParamVector) -> Result<BoundVqc> {
        self.check_params(params)?;
        Ok(BoundVqc { circuit: self.spec.bind(params.as_slice())? })
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(config_err(format!(
                "template expects {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        Ok(())
    }

    /// Outputs for scaled inputs; inputs are clamped to `[-1, 1]` first.
    pub fn evaluate(&self, inputs: &[f64], params: &ParamVector) -> Result<Vec<f64>> {
        self.bind(params)?.evaluate(inputs)
    }

    /// Parameter-shift gradient of `Σ_j w_j·f_j(params)` where `w` are the
    /// loss weights (`∂loss/∂output_j` at the unshifted point).
    ///
    /// Every parameter drives exactly one Pauli rotation (each `Rot` is three
    /// of them), so the two-term rule with shift `π/2` is exact.
    pub fn gradient(
        &self,
        inputs: &[f64],
        params: &ParamVector,
        loss_weights: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_params(params)?;
        if loss_weights.len() != self.num_outputs() {
            return Err(config_err(format!(
                "expected {} loss weights, got {}",
                self.num_outputs(),
                loss_weights.len()
            )));
        }
        let clamped = clamp_inputs(inputs, self.num_inputs())?;
        let mut shifted = params.0.clone();
        let mut grad = Vec::with_capacity(params.len());
        for k in 0..params.len() {
            let original = shifted[k];
            shifted[k] = original + FRAC_PI_2;
            let plus = self.spec.bind(&shifted)?.run(&clamped)?;
            shifted[k] = original - FRAC_PI_2;
            let minus = self.spec.bind(&shifted)?.run(&clamped)?;
            shifted[k] = original;
            let g: f64 = plus
                .iter()
                .zip(&minus)
                .zip(loss_weights)
                .map(|((p, m), w)| w * (p - m) / 2.0)
                .sum();
            grad.push(g);
        }
        Ok(grad)
    }

    /// MSE loss and its parameter-shift gradient for one sample.
    pub fn mse_gradient_parameter_shift(
        &self,
        inputs: &[f64],
        params: &ParamVector,
        targets: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let outputs = self.evaluate(inputs, params)?;
        let (loss, weights) = mse_and_weights(&outputs, targets)?;
        Ok((loss, self.gradient(inputs, params, &weights)?))
    }
}

fn clamp_inputs(inputs: &[f64], expected: usize) -> Result<Vec<f64>> {
    if inputs.len() != expected {
        return Err(config_err(format!("expected {expected} inputs, got {}", inputs.len())));
    }
    Ok(inputs.iter().map(|u| u.clamp(-1.0, 1.0)).collect())
}

/// Mean squared error over the outputs and its derivative per output.
pub fn mse_and_weights(outputs: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if outputs.len() != targets.len() {
        return Err(config_err(format!(
            "expected {} targets, got {}",
            outputs.len(),
            targets.len()
        )));
    }
    let k = outputs.len() as f64;
    let loss = outputs.iter().zip(targets).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / k;
    let weights = outputs.iter().zip(targets).map(|(o, t)| 2.0 * (o - t) / k).collect();
    Ok((loss, weights))
}

/// A template with parameters compiled in.
#[derive(Debug, Clone)]
pub struct BoundVqc {
    circuit: BoundCircuit,
}

impl BoundVqc {
    pub fn evaluate(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let clamped = clamp_inputs(inputs, self.circuit.num_inputs())?;
        self.circuit.run(&clamped)
    }

    /// MSE loss and its exact gradient by adjoint differentiation.
    pub fn mse_gradient(&self, inputs: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
        let clamped = clamp_inputs(inputs, self.circuit.num_inputs())?;
        if targets.len() != self.circuit.num_outputs() {
            return Err(config_err(format!(
                "expected {} targets, got {}",
                self.circuit.num_outputs(),
                targets.len()
            )));
        }
        let mut loss = f64::NAN;
        let g = self.circuit.gradient_with(&clamped, |out| {
            // lengths checked above
            let (l, w) = mse_and_weights(out, targets).unwrap_or((f64::NAN, vec![0.0; out.len()]));
            loss = l;
            w
        })?;
        Ok((loss, g.params))
    }
}

/// Flat parameter vector ω (radians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// Uniform in `[-π, π)`.
    pub fn random_uniform<R: rand::Rng>(len: usize, rng: &mut R) -> Self {
        Self((0..len).map(|_| rng.gen_range(-PI..PI)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub const VQC_SCHEMA_VERSION: u32 = 1;

/// JSON form of a template plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqcSnapshot {
    pub schema_version: u32,
    pub template: VqcConfig,
    pub params: ParamVector,
}

impl VqcSnapshot {
    pub fn new(template: &VqcTemplate, params: ParamVector) -> Self {
        Self { schema_version: VQC_SCHEMA_VERSION, template: template.config.clone(), params }
    }

    pub fn restore(&self) -> Result<(VqcTemplate, ParamVector)> {
        if self.schema_version != VQC_SCHEMA_VERSION {
            return Err(Error::Schema {
                what: "vqc snapshot".into(),
                expected: VQC_SCHEMA_VERSION,
                found: self.schema_version,
            });
        }
        let template = VqcTemplate::new(self.template.clone())?;
        template.check_params(&self.params)?;
        Ok((template, self.params.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{run_circuit, StateVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_counts() {
        assert_eq!(VqcConfig::model().num_params(), 300);
        assert_eq!(VqcConfig::policy().num_params(), 180);
        let mut c = VqcConfig::model();
        c.reuploads = 0;
        c.layers_per_upload = 1;
        assert_eq!(c.num_params(), 15);
        let base = c.num_params();
        c.reuploads = 1;
        assert_eq!(c.num_params(), 2 * base);
        let t = build_policy_template(VqcConfig::policy()).unwrap();
        assert_eq!(t.spec().num_params(), 180);
    }

    #[test]
    fn too_many_inputs_rejected() {
        let mut c = VqcConfig::model();
        c.num_inputs = 6;
        assert!(build_model_template(c).is_err());
    }

    #[test]
    fn zero_params_equal_pure_encoding() {
        let t = build_model_template(VqcConfig::model()).unwrap();
        let inputs = [0.2, -0.9, 0.5, 0.0, 1.0];
        let out = t.evaluate(&inputs, &ParamVector::zeros(300)).unwrap();
        let ops: Vec<Op> = t
            .spec()
            .ops()
            .iter()
            .copied()
            .filter(|op| !matches!(op, Op::Rot { .. }))
            .collect();
        let enc = CircuitSpec::new(5, 5, 0, ops, vec![0, 1, 2, 3]).unwrap();
        let reference = run_circuit(&enc, &inputs, &[]).unwrap();
        for (a, b) in out.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn inputs_are_clamped() {
        let t = build_policy_template(VqcConfig::policy()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ParamVector::random_uniform(180, &mut rng);
        let a = t.evaluate(&[3.0, -7.0, 0.1, 0.2], &p).unwrap();
        let b = t.evaluate(&[1.0, -1.0, 0.1, 0.2], &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_rotation_gradient() {
        // 1 qubit, 1 input, Rot = RZ·RY(θ)·RZ with readout ⟨Z⟩ = cos θ when the
        // input encodes 0: d/dθ = -sin θ.
        let config = VqcConfig {
            num_qubits: 1,
            num_inputs: 1,
            reuploads: 0,
            layers_per_upload: 1,
            num_outputs: 1,
            encoding_scale: PI,
            entangler: Entangler::Ring,
        };
        let t = VqcTemplate::new(config).unwrap();
        let g0 = t.gradient(&[0.0], &ParamVector(vec![0.0, 0.0, 0.0]), &[1.0]).unwrap();
        assert!(g0[1].abs() < 1e-12);
        let g1 = t.gradient(&[0.0], &ParamVector(vec![0.0, FRAC_PI_2, 0.0]), &[1.0]).unwrap();
        assert!((g1[1] + 1.0).abs() < 1e-9);
        let bound = t.bind(&ParamVector(vec![0.0, FRAC_PI_2, 0.0])).unwrap();
        // MSE with target cos(π/2) - 0.5 → weight 2·0.5 = 1
        let (_, adj) = bound.mse_gradient(&[0.0], &[-0.5]).unwrap();
        assert!((adj[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn parameter_shift_matches_adjoint() {
        let t = build_model_template(VqcConfig::model()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = ParamVector::random_uniform(300, &mut rng);
        let inputs = [0.3, -0.1, 0.8, -0.6, 1.0];
        let targets = [0.1, -0.2, 0.05, 0.3];
        let (l1, ps) = t.mse_gradient_parameter_shift(&inputs, &p, &targets).unwrap();
        let (l2, adj) = t.bind(&p).unwrap().mse_gradient(&inputs, &targets).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in ps.iter().zip(&adj) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn encoding_locality_without_entangler() {
        // without entanglers qubit j only sees input j
        let config = VqcConfig {
            num_qubits: 3,
            num_inputs: 3,
            reuploads: 1,
            layers_per_upload: 2,
            num_outputs: 3,
            encoding_scale: PI,
            entangler: Entangler::None,
        };
        let t = VqcTemplate::new(config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ParamVector::random_uniform(t.num_params(), &mut rng);
        let a = t.evaluate(&[0.1, 0.2, 0.3], &p).unwrap();
        let b = t.evaluate(&[0.1, -0.7, 0.3], &p).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-14);
        assert!((a[2] - b[2]).abs() < 1e-14);
        assert!((a[1] - b[1]).abs() > 1e-6);
    }

    #[test]
    fn two_qubit_template_matches_dense_oracle() {
        let config = VqcConfig {
            num_qubits: 2,
            num_inputs: 2,
            reuploads: 1,
            layers_per_upload: 2,
            num_outputs: 2,
            encoding_scale: PI,
            entangler: Entangler::Ring,
        };
        let t = VqcTemplate::new(config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = ParamVector::random_uniform(t.num_params(), &mut rng);
        let inputs = [0.4, -0.25];
        let out = t.evaluate(&inputs, &p).unwrap();
        let mut s = StateVector::zero(2).unwrap();
        for g in t.spec().gates(&inputs, p.as_slice()).unwrap() {
            s.apply(&g).unwrap();
        }
        for (q, o) in out.iter().enumerate() {
            assert!((s.expectation_z(q).unwrap() - o).abs() < 1e-9);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let t = build_policy_template(VqcConfig::policy()).unwrap();
        let snap = VqcSnapshot::new(&t, ParamVector(vec![0.5; 180]));
        let json = serde_json::to_string(&snap).unwrap();
        let back: VqcSnapshot = serde_json::from_str(&json).unwrap();
        let (t2, p2) = back.restore().unwrap();
        assert_eq!(t2, t);
        assert_eq!(p2.0, vec![0.5; 180]);
        let mut bad = snap;
        bad.schema_version = 99;
        assert!(matches!(bad.restore(), Err(Error::Schema { .. })));
    }
}
