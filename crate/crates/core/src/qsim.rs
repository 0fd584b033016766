//! Dense statevector simulator.
//!
//! Supports the gate set the cart-pole circuits need (H, RX, RY, RZ, the
//! general rotation `Rot` and CNOT) and exact Pauli-Z readout. Qubit `q`
//! corresponds to bit `q` of the basis-state index (little-endian), so
//! `|q0 q1⟩ = |1 0⟩` is amplitude index 1.
//!
//! Circuits are described declaratively by a [`CircuitSpec`] whose gate
//! angles may be constants, trainable parameters or (scaled) inputs.
//! [`CircuitSpec::bind`] compiles a spec for fixed parameters into a
//! [`BoundCircuit`] that fuses runs of single-qubit gates and can compute
//! exact parameter gradients by adjoint differentiation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

pub type C64 = Complex64;

/// Row-major 2x2 complex matrix.
pub type Mat2 = [[C64; 2]; 2];

pub const MAX_QUBITS: usize = 16;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

pub const IDENTITY: Mat2 = [[ONE, ZERO], [ZERO, ONE]];

pub fn hadamard() -> Mat2 {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

pub fn rx(angle: f64) -> Mat2 {
    let (s, c) = (angle / 2.0).sin_cos();
    [[C64::new(c, 0.0), C64::new(0.0, -s)], [C64::new(0.0, -s), C64::new(c, 0.0)]]
}

pub fn ry(angle: f64) -> Mat2 {
    let (s, c) = (angle / 2.0).sin_cos();
    [[C64::new(c, 0.0), C64::new(-s, 0.0)], [C64::new(s, 0.0), C64::new(c, 0.0)]]
}

pub fn rz(angle: f64) -> Mat2 {
    let (s, c) = (angle / 2.0).sin_cos();
    [[C64::new(c, -s), ZERO], [ZERO, C64::new(c, s)]]
}

/// `Rot(φ, θ, ω) = RZ(φ)·RY(θ)·RZ(ω)`; `RZ(ω)` acts first.
pub fn rot(phi: f64, theta: f64, omega: f64) -> Mat2 {
    matmul(&rz(phi), &matmul(&ry(theta), &rz(omega)))
}

pub fn matmul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

pub fn dagger(m: &Mat2) -> Mat2 {
    [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]]
}

/// Rotation axis of a Pauli rotation `exp(-i·angle·P/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn rotation(self, angle: f64) -> Mat2 {
        match self {
            Axis::X => rx(angle),
            Axis::Y => ry(angle),
            Axis::Z => rz(angle),
        }
    }

    pub fn pauli(self) -> Mat2 {
        let i = C64::new(0.0, 1.0);
        match self {
            Axis::X => [[ZERO, ONE], [ONE, ZERO]],
            Axis::Y => [[ZERO, -i], [i, ZERO]],
            Axis::Z => [[ONE, ZERO], [ZERO, -ONE]],
        }
    }
}

/// A concrete gate with resolved angles (radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    H { target: usize },
    Rx { target: usize, angle: f64 },
    Ry { target: usize, angle: f64 },
    Rz { target: usize, angle: f64 },
    Rot { target: usize, phi: f64, theta: f64, omega: f64 },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn target(&self) -> usize {
        match *self {
            Gate::H { target }
            | Gate::Rx { target, .. }
            | Gate::Ry { target, .. }
            | Gate::Rz { target, .. }
            | Gate::Rot { target, .. }
            | Gate::Cnot { target, .. } => target,
        }
    }

    pub fn control(&self) -> Option<usize> {
        match *self {
            Gate::Cnot { control, .. } => Some(control),
            _ => None,
        }
    }

    /// The 2x2 unitary of a single-qubit gate; `None` for CNOT.
    pub fn matrix(&self) -> Option<Mat2> {
        Some(match *self {
            Gate::H { .. } => hadamard(),
            Gate::Rx { angle, .. } => rx(angle),
            Gate::Ry { angle, .. } => ry(angle),
            Gate::Rz { angle, .. } => rz(angle),
            Gate::Rot { phi, theta, omega, .. } => rot(phi, theta, omega),
            Gate::Cnot { .. } => return None,
        })
    }

    fn check(&self, num_qubits: usize) -> Result<()> {
        let target = self.target();
        if target >= num_qubits {
            return Err(config_err(format!(
                "gate target {target} out of range for {num_qubits} qubits"
            )));
        }
        if let Some(control) = self.control() {
            if control >= num_qubits {
                return Err(config_err(format!(
                    "gate control {control} out of range for {num_qubits} qubits"
                )));
            }
            if control == target {
                return Err(config_err(format!("CNOT control equals target ({target})")));
            }
        }
        Ok(())
    }
}

/// Complex amplitudes of a `num_qubits` register.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// The all-zero basis state `|0…0⟩`.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(config_err(format!(
                "num_qubits must be in 1..={MAX_QUBITS}, got {num_qubits}"
            )));
        }
        let mut amps = vec![ZERO; 1 << num_qubits];
        amps[0] = ONE;
        Ok(Self { num_qubits, amps })
    }

    /// Wraps explicit amplitudes; the length must be a power of two and the
    /// vector normalized within 1e-10.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() || len > 1 << MAX_QUBITS {
            return Err(config_err(format!("amplitude count {len} is not a valid register size")));
        }
        let state = Self { num_qubits: len.trailing_zeros() as usize, amps };
        if (state.norm() - 1.0).abs() > 1e-10 {
            return Err(config_err("amplitudes are not normalized"));
        }
        Ok(state)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Applies `gate` in place.
    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.check(self.num_qubits)?;
        match gate.matrix() {
            Some(m) => apply_single(&mut self.amps, gate.target(), &m),
            None => apply_cnot(&mut self.amps, gate.control().unwrap_or_default(), gate.target()),
        }
        Ok(())
    }

    /// Consuming variant of [`StateVector::apply`].
    pub fn apply_gate(mut self, gate: &Gate) -> Result<Self> {
        self.apply(gate)?;
        Ok(self)
    }

    /// `⟨Z_qubit⟩ = Σ_b (±1)|amp_b|²`, + when bit `qubit` of `b` is clear.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        if qubit >= self.num_qubits {
            return Err(config_err(format!(
                "readout qubit {qubit} out of range for {} qubits",
                self.num_qubits
            )));
        }
        Ok(expectation_z(&self.amps, qubit))
    }
}

fn expectation_z(amps: &[C64], qubit: usize) -> f64 {
    let bit = 1usize << qubit;
    let mut acc = 0.0;
    for (b, a) in amps.iter().enumerate() {
        let p = a.norm_sqr();
        if b & bit == 0 {
            acc += p;
        } else {
            acc -= p;
        }
    }
    acc.clamp(-1.0, 1.0)
}

fn apply_single(amps: &mut [C64], target: usize, m: &Mat2) {
    let stride = 1usize << target;
    let [[m00, m01], [m10, m11]] = *m;
    for block in amps.chunks_exact_mut(2 * stride) {
        let (lo, hi) = block.split_at_mut(stride);
        for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
            let (x, y) = (*a, *b);
            *a = m00 * x + m01 * y;
            *b = m10 * x + m11 * y;
        }
    }
}

fn apply_cnot(amps: &mut [C64], control: usize, target: usize) {
    let cbit = 1usize << control;
    let tbit = 1usize << target;
    for i in 0..amps.len() {
        if i & cbit != 0 && i & tbit == 0 {
            amps.swap(i, i | tbit);
        }
    }
}

/// `M_ab = Σ_pairs conj(λ_a)·ψ_b` over the (bit clear, bit set) pairs of
/// `target`; `⟨λ|G_target|ψ⟩ = Σ_ab G_ab M_ab`.
fn pair_overlap(lambda: &[C64], psi: &[C64], target: usize) -> Mat2 {
    let stride = 1usize << target;
    let mut m = [[ZERO; 2]; 2];
    for (lb, pb) in lambda.chunks_exact(2 * stride).zip(psi.chunks_exact(2 * stride)) {
        let (l0, l1) = lb.split_at(stride);
        let (p0, p1) = pb.split_at(stride);
        for i in 0..stride {
            let (a0, a1) = (l0[i].conj(), l1[i].conj());
            let (b0, b1) = (p0[i], p1[i]);
            m[0][0] += a0 * b0;
            m[0][1] += a0 * b1;
            m[1][0] += a1 * b0;
            m[1][1] += a1 * b1;
        }
    }
    m
}

/// Source of a gate angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Angle {
    Fixed(f64),
    /// `scale · inputs[index]`
    Input { index: usize, scale: f64 },
    /// `params[index]`
    Param(usize),
}

impl Angle {
    fn resolve(self, inputs: &[f64], params: &[f64]) -> f64 {
        match self {
            Angle::Fixed(a) => a,
            Angle::Input { index, scale } => scale * inputs[index],
            Angle::Param(index) => params[index],
        }
    }
}

/// One instruction of a [`CircuitSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Op {
    H(usize),
    Rx(usize, Angle),
    Ry(usize, Angle),
    Rz(usize, Angle),
    Rot { target: usize, phi: Angle, theta: Angle, omega: Angle },
    Cnot { control: usize, target: usize },
}

impl Op {
    pub fn target(&self) -> usize {
        match *self {
            Op::H(target)
            | Op::Rx(target, _)
            | Op::Ry(target, _)
            | Op::Rz(target, _)
            | Op::Rot { target, .. }
            | Op::Cnot { target, .. } => target,
        }
    }

    fn angles(&self) -> Vec<Angle> {
        match *self {
            Op::H(_) | Op::Cnot { .. } => vec![],
            Op::Rx(_, a) | Op::Ry(_, a) | Op::Rz(_, a) => vec![a],
            Op::Rot { phi, theta, omega, .. } => vec![phi, theta, omega],
        }
    }

    fn resolve(&self, inputs: &[f64], params: &[f64]) -> Gate {
        let r = |a: Angle| a.resolve(inputs, params);
        match *self {
            Op::H(target) => Gate::H { target },
            Op::Rx(target, a) => Gate::Rx { target, angle: r(a) },
            Op::Ry(target, a) => Gate::Ry { target, angle: r(a) },
            Op::Rz(target, a) => Gate::Rz { target, angle: r(a) },
            Op::Rot { target, phi, theta, omega } => Gate::Rot {
                target,
                phi: r(phi),
                theta: r(theta),
                omega: r(omega),
            },
            Op::Cnot { control, target } => Gate::Cnot { control, target },
        }
    }

    /// Pauli rotations in application order (`Rot` acts as RZ(ω), RY(θ), RZ(φ)).
    fn primitives(&self) -> Vec<Primitive> {
        match *self {
            Op::H(_) => vec![Primitive::Fixed(hadamard())],
            Op::Rx(_, a) => vec![Primitive::Rotation(Axis::X, a)],
            Op::Ry(_, a) => vec![Primitive::Rotation(Axis::Y, a)],
            Op::Rz(_, a) => vec![Primitive::Rotation(Axis::Z, a)],
            Op::Rot { phi, theta, omega, .. } => vec![
                Primitive::Rotation(Axis::Z, omega),
                Primitive::Rotation(Axis::Y, theta),
                Primitive::Rotation(Axis::Z, phi),
            ],
            Op::Cnot { .. } => vec![],
        }
    }
}

enum Primitive {
    Fixed(Mat2),
    Rotation(Axis, Angle),
}

/// Declarative gate sequence with input/parameter arity and readout qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    num_qubits: usize,
    num_inputs: usize,
    num_params: usize,
    ops: Vec<Op>,
    readout: Vec<usize>,
}

impl CircuitSpec {
    pub fn new(
        num_qubits: usize,
        num_inputs: usize,
        num_params: usize,
        ops: Vec<Op>,
        readout: Vec<usize>,
    ) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(config_err(format!(
                "num_qubits must be in 1..={MAX_QUBITS}, got {num_qubits}"
            )));
        }
        for op in &ops {
            for angle in op.angles() {
                match angle {
                    Angle::Input { index, .. } if index >= num_inputs => {
                        return Err(config_err(format!(
                            "input index {index} out of range ({num_inputs} inputs)"
                        )))
                    }
                    Angle::Param(index) if index >= num_params => {
                        return Err(config_err(format!(
                            "parameter index {index} out of range ({num_params} parameters)"
                        )))
                    }
                    _ => {}
                }
            }
        }
        let spec = Self { num_qubits, num_inputs, num_params, ops, readout };
        // index checks on targets/controls
        spec.gates(&vec![0.0; num_inputs], &vec![0.0; num_params])?
            .iter()
            .try_for_each(|g| g.check(num_qubits))?;
        if let Some(&q) = spec.readout.iter().find(|&&q| q >= num_qubits) {
            return Err(config_err(format!("readout qubit {q} out of range")));
        }
        Ok(spec)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn readout(&self) -> &[usize] {
        &self.readout
    }

    fn check_arity(&self, inputs: &[f64], params: Option<&[f64]>) -> Result<()> {
        if inputs.len() != self.num_inputs {
            return Err(config_err(format!(
                "expected {} inputs, got {}",
                self.num_inputs,
                inputs.len()
            )));
        }
        if let Some(params) = params {
            if params.len() != self.num_params {
                return Err(config_err(format!(
                    "expected {} parameters, got {}",
                    self.num_params,
                    params.len()
                )));
            }
        }
        Ok(())
    }

    /// Resolves every op to a concrete gate.
    pub fn gates(&self, inputs: &[f64], params: &[f64]) -> Result<Vec<Gate>> {
        self.check_arity(inputs, Some(params))?;
        Ok(self.ops.iter().map(|op| op.resolve(inputs, params)).collect())
    }

    /// Compiles the circuit for fixed parameters.
    pub fn bind(&self, params: &[f64]) -> Result<BoundCircuit> {
        if params.len() != self.num_params {
            return Err(config_err(format!(
                "expected {} parameters, got {}",
                self.num_params,
                params.len()
            )));
        }
        let mut compiler = Compiler::new(self.num_qubits);
        for op in &self.ops {
            match *op {
                Op::Cnot { control, target } => {
                    compiler.flush(control);
                    compiler.flush(target);
                    compiler.ops.push(FusedOp::Cnot { control, target });
                }
                _ => {
                    let target = op.target();
                    for prim in op.primitives() {
                        compiler.push(target, prim, params);
                    }
                }
            }
        }
        for q in 0..self.num_qubits {
            compiler.flush(q);
        }
        Ok(BoundCircuit {
            num_qubits: self.num_qubits,
            num_inputs: self.num_inputs,
            num_params: self.num_params,
            readout: self.readout.clone(),
            ops: compiler.ops,
        })
    }
}

/// Runs `spec` on `|0…0⟩` and returns `⟨Z⟩` for each readout qubit.
pub fn run_circuit(spec: &CircuitSpec, inputs: &[f64], params: &[f64]) -> Result<Vec<f64>> {
    spec.check_arity(inputs, Some(params))?;
    spec.bind(params)?.run(inputs)
}

#[derive(Debug, Clone)]
enum Factor {
    Fixed(Mat2),
    Input { axis: Axis, index: usize, scale: f64 },
}

impl Factor {
    fn matrix(&self, inputs: &[f64]) -> Mat2 {
        match *self {
            Factor::Fixed(m) => m,
            Factor::Input { axis, index, scale } => axis.rotation(scale * inputs[index]),
        }
    }
}

/// Derivative tap of one parameter inside a fused single-qubit op.
///
/// `generator` is the Pauli generator conjugated by every fixed factor
/// applied after the parameter within factor `factor`; factors with a
/// higher index are applied at run time.
#[derive(Debug, Clone)]
struct Tap {
    param: usize,
    factor: usize,
    generator: Mat2,
}

#[derive(Debug, Clone)]
enum FusedOp {
    Single { target: usize, factors: Vec<Factor>, taps: Vec<Tap> },
    Cnot { control: usize, target: usize },
}

struct Pending {
    factors: Vec<Factor>,
    taps: Vec<Tap>,
}

struct Compiler {
    pending: Vec<Option<Pending>>,
    ops: Vec<FusedOp>,
}

impl Compiler {
    fn new(num_qubits: usize) -> Self {
        Self { pending: (0..num_qubits).map(|_| None).collect(), ops: Vec::new() }
    }

    fn push_fixed(pending: &mut Pending, m: Mat2) {
        let idx = pending.factors.len().wrapping_sub(1);
        match pending.factors.last_mut() {
            Some(Factor::Fixed(last)) => {
                let md = dagger(&m);
                for tap in pending.taps.iter_mut().filter(|t| t.factor == idx) {
                    tap.generator = matmul(&m, &matmul(&tap.generator, &md));
                }
                *last = matmul(&m, last);
            }
            _ => pending.factors.push(Factor::Fixed(m)),
        }
    }

    fn push(&mut self, target: usize, prim: Primitive, params: &[f64]) {
        let pending = self.pending[target]
            .get_or_insert_with(|| Pending { factors: Vec::new(), taps: Vec::new() });
        match prim {
            Primitive::Fixed(m) => Self::push_fixed(pending, m),
            Primitive::Rotation(axis, Angle::Fixed(a)) => Self::push_fixed(pending, axis.rotation(a)),
            Primitive::Rotation(axis, Angle::Param(p)) => {
                Self::push_fixed(pending, axis.rotation(params[p]));
                let idx = pending.factors.len() - 1;
                pending.taps.push(Tap { param: p, factor: idx, generator: axis.pauli() });
            }
            Primitive::Rotation(axis, Angle::Input { index, scale }) => {
                pending.factors.push(Factor::Input { axis, index, scale });
            }
        }
    }

    fn flush(&mut self, target: usize) {
        if let Some(p) = self.pending[target].take() {
            self.ops.push(FusedOp::Single { target, factors: p.factors, taps: p.taps });
        }
    }
}

fn compose(factors: &[Factor], inputs: &[f64]) -> Mat2 {
    let mut u = factors[0].matrix(inputs);
    for f in &factors[1..] {
        u = matmul(&f.matrix(inputs), &u);
    }
    u
}

/// Result of a forward pass plus vector-Jacobian product.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutGradient {
    pub outputs: Vec<f64>,
    /// `∂(Σ_j w_j·outputs_j)/∂params` for the weights returned by the
    /// caller's closure.
    pub params: Vec<f64>,
}

/// A circuit compiled for one fixed parameter vector; only the input
/// encodings are evaluated per run.
#[derive(Debug, Clone)]
pub struct BoundCircuit {
    num_qubits: usize,
    num_inputs: usize,
    num_params: usize,
    readout: Vec<usize>,
    ops: Vec<FusedOp>,
}

impl BoundCircuit {
    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn num_outputs(&self) -> usize {
        self.readout.len()
    }

    fn check_inputs(&self, inputs: &[f64]) -> Result<()> {
        if inputs.len() != self.num_inputs {
            return Err(config_err(format!(
                "expected {} inputs, got {}",
                self.num_inputs,
                inputs.len()
            )));
        }
        Ok(())
    }

    /// Final statevector for `inputs`.
    pub fn state(&self, inputs: &[f64]) -> Result<StateVector> {
        self.check_inputs(inputs)?;
        let mut state = StateVector::zero(self.num_qubits)?;
        for op in &self.ops {
            match op {
                FusedOp::Single { target, factors, .. } => {
                    apply_single(&mut state.amps, *target, &compose(factors, inputs))
                }
                FusedOp::Cnot { control, target } => apply_cnot(&mut state.amps, *control, *target),
            }
        }
        Ok(state)
    }

    /// `⟨Z⟩` of every readout qubit.
    pub fn run(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let state = self.state(inputs)?;
        Ok(self.readout.iter().map(|&q| expectation_z(&state.amps, q)).collect())
    }

    /// Adjoint differentiation of a weighted readout.
    ///
    /// `weights` receives the outputs of the forward pass and returns one
    /// weight per readout qubit (e.g. the loss derivative); the returned
    /// parameter gradient is that of `Σ_j w_j⟨Z_j⟩` with the weights held
    /// constant.
    pub fn gradient_with<F>(&self, inputs: &[f64], weights: F) -> Result<ReadoutGradient>
    where
        F: FnOnce(&[f64]) -> Vec<f64>,
    {
        self.check_inputs(inputs)?;
        let mut psi = vec![ZERO; 1 << self.num_qubits];
        psi[0] = ONE;
        let mut unitaries = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            match op {
                FusedOp::Single { target, factors, .. } => {
                    let u = compose(factors, inputs);
                    apply_single(&mut psi, *target, &u);
                    unitaries.push(u);
                }
                FusedOp::Cnot { control, target } => {
                    apply_cnot(&mut psi, *control, *target);
                    unitaries.push(IDENTITY);
                }
            }
        }
        let outputs: Vec<f64> = self.readout.iter().map(|&q| expectation_z(&psi, q)).collect();
        let w = weights(&outputs);
        if w.len() != outputs.len() {
            return Err(config_err(format!(
                "expected {} readout weights, got {}",
                outputs.len(),
                w.len()
            )));
        }

        let mut lambda: Vec<C64> = psi
            .iter()
            .enumerate()
            .map(|(b, a)| {
                let mut s = 0.0;
                for (j, &q) in self.readout.iter().enumerate() {
                    if b & (1 << q) == 0 {
                        s += w[j];
                    } else {
                        s -= w[j];
                    }
                }
                a * s
            })
            .collect();

        let mut grad = vec![0.0; self.num_params];
        for (op, u) in self.ops.iter().zip(&unitaries).rev() {
            match op {
                FusedOp::Single { target, factors, taps } => {
                    if !taps.is_empty() {
                        let overlap = pair_overlap(&lambda, &psi, *target);
                        for tap in taps {
                            let mut g = tap.generator;
                            for f in &factors[tap.factor + 1..] {
                                let m = f.matrix(inputs);
                                g = matmul(&m, &matmul(&g, &dagger(&m)));
                            }
                            let mut z = ZERO;
                            for a in 0..2 {
                                for b in 0..2 {
                                    z += g[a][b] * overlap[a][b];
                                }
                            }
                            grad[tap.param] += z.im;
                        }
                    }
                    let ud = dagger(u);
                    apply_single(&mut psi, *target, &ud);
                    apply_single(&mut lambda, *target, &ud);
                }
                FusedOp::Cnot { control, target } => {
                    apply_cnot(&mut psi, *control, *target);
                    apply_cnot(&mut lambda, *control, *target);
                }
            }
        }
        Ok(ReadoutGradient { outputs, params: grad })
    }
}
