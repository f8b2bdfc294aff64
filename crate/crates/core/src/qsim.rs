//! Group-factorized pure-state simulator.
//!
//! A [`World`] holds a set of [`StateGroup`]s. Each group is a normalized
//! amplitude vector over an ordered list of qubits; qubits in different
//! groups are in a product state with each other. Groups are merged lazily
//! when a multi-qubit gate spans them and split again after measurements
//! whenever a qubit factorizes out.
//!
//! Basis ordering inside a group: bit `p` of an amplitude index is the value
//! of `qubits[p]` (little-endian). Gate matrices use the textbook ordering
//! instead, with `targets[0]` as the most significant bit, so that
//! `CNOT(control, target)` is written the usual way.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Amplitude = Complex64;

pub const DEFAULT_GROUP_CEILING: usize = 24;

const NORM_TOL: f64 = 1e-9;
const UNITARY_TOL: f64 = 1e-9;
// det(ρ) of a single-qubit marginal below which the qubit is treated as
// unentangled and split into its own group.
const PRODUCT_TOL: f64 = 1e-13;
const MAX_GATE_QUBITS: usize = 3;
const MAX_DENSITY_QUBITS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QubitHandle(u64);

impl QubitHandle {
    pub fn id(self) -> u64 {
        self.0
    }
}

impl fmt::Display for QubitHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

/// Which party physically holds a qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Owner {
    Alice,
    Bank,
    Payee,
    Adversary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PlusMinus {
    Plus,
    Minus,
}

/// Bell-measurement outcome, labelled the way the cheque encoding labels
/// them: the `Psi` pair spans |00⟩,|11⟩ and the `Phi` pair spans |01⟩,|10⟩.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BellOutcome {
    PsiPlus,
    PsiMinus,
    PhiPlus,
    PhiMinus,
}

impl BellOutcome {
    pub const ALL: [BellOutcome; 4] = [
        BellOutcome::PsiPlus,
        BellOutcome::PsiMinus,
        BellOutcome::PhiPlus,
        BellOutcome::PhiMinus,
    ];

    /// Basis vector over `(q1, q2)` in gate ordering: index `2·q1 + q2`.
    pub fn basis_vector(self) -> [Amplitude; 4] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let (z, p, m) = (c(0.0, 0.0), c(h, 0.0), c(-h, 0.0));
        match self {
            BellOutcome::PsiPlus => [p, z, z, p],
            BellOutcome::PsiMinus => [p, z, z, m],
            BellOutcome::PhiPlus => [z, p, p, z],
            BellOutcome::PhiMinus => [z, p, m, z],
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[inline]
pub(crate) fn c(re: f64, im: f64) -> Amplitude {
    Complex64::new(re, im)
}

/// Standard single-qubit gates in row-major order.
pub mod gates {
    use super::{c, Amplitude};
    use std::f64::consts::FRAC_1_SQRT_2;

    pub fn identity() -> [Amplitude; 4] {
        [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]
    }

    pub fn pauli_x() -> [Amplitude; 4] {
        [c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]
    }

    pub fn pauli_y() -> [Amplitude; 4] {
        [c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]
    }

    pub fn pauli_z() -> [Amplitude; 4] {
        [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]
    }

    pub fn hadamard() -> [Amplitude; 4] {
        let h = FRAC_1_SQRT_2;
        [c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)]
    }

    /// CNOT with `targets[0]` as control.
    pub fn cnot() -> [Amplitude; 16] {
        let mut m = [c(0.0, 0.0); 16];
        m[0] = c(1.0, 0.0);
        m[5] = c(1.0, 0.0);
        m[11] = c(1.0, 0.0);
        m[14] = c(1.0, 0.0);
        m
    }

    /// General single-qubit unitary `e^{iα} Rz(β) Ry(γ) Rz(δ)`.
    pub fn euler(alpha: f64, beta: f64, gamma: f64, delta: f64) -> [Amplitude; 4] {
        let (s, co) = (gamma / 2.0).sin_cos();
        let ph = |x: f64| Amplitude::from_polar(1.0, x);
        [
            ph(alpha - beta / 2.0 - delta / 2.0) * co,
            -ph(alpha - beta / 2.0 + delta / 2.0) * s,
            ph(alpha + beta / 2.0 - delta / 2.0) * s,
            ph(alpha + beta / 2.0 + delta / 2.0) * co,
        ]
    }
}

/// Pure state of an ordered set of qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct StateGroup {
    qubits: Vec<QubitHandle>,
    amplitudes: Vec<Amplitude>,
}

impl StateGroup {
    pub fn qubits(&self) -> &[QubitHandle] {
        &self.qubits
    }

    pub fn amplitudes(&self) -> &[Amplitude] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    fn position(&self, q: QubitHandle) -> Option<usize> {
        self.qubits.iter().position(|&x| x == q)
    }

    fn kron(self, other: StateGroup) -> StateGroup {
        let shift = self.qubits.len();
        let mut amplitudes = vec![c(0.0, 0.0); self.amplitudes.len() * other.amplitudes.len()];
        for (j, b) in other.amplitudes.iter().enumerate() {
            if b.norm_sqr() == 0.0 {
                continue;
            }
            for (i, a) in self.amplitudes.iter().enumerate() {
                amplitudes[i | (j << shift)] = a * b;
            }
        }
        let mut qubits = self.qubits;
        qubits.extend(other.qubits);
        StateGroup { qubits, amplitudes }
    }

    /// 2×2 marginal of every qubit, row-major.
    fn marginals(&self) -> Vec<[Amplitude; 4]> {
        let amps = &self.amplitudes;
        (0..self.qubits.len())
            .map(|p| {
                let stride = 1usize << p;
                let (mut r00, mut r11, mut r01) = (0.0, 0.0, c(0.0, 0.0));
                for block in amps.chunks_exact(2 * stride) {
                    let (lo, hi) = block.split_at(stride);
                    for (a, b) in lo.iter().zip(hi) {
                        r00 += a.norm_sqr();
                        r11 += b.norm_sqr();
                        r01 += a * b.conj();
                    }
                }
                [c(r00, 0.0), r01, r01.conj(), c(r11, 0.0)]
            })
            .collect()
    }

    /// Splits off every qubit that is (numerically) unentangled with the rest.
    /// Factoring out a product qubit leaves the other marginals unchanged, so
    /// one pass over the marginals finds them all.
    fn factorize(mut self) -> Vec<StateGroup> {
        if self.qubits.len() <= 1 {
            return vec![self];
        }
        let marginals = self.marginals();
        let mut out = Vec::new();
        for pos in (0..marginals.len()).rev() {
            let rho = marginals[pos];
            let det = rho[0].re * rho[3].re - rho[1].norm_sqr();
            if det > PRODUCT_TOL || self.qubits.len() == 1 {
                continue;
            }
            // ρ = v v†; take the better-conditioned column.
            let v = if rho[0].re >= rho[3].re {
                let s = rho[0].re.sqrt();
                [rho[0] / s, rho[2] / s]
            } else {
                let s = rho[3].re.sqrt();
                [rho[1] / s, rho[3] / s]
            };
            let vn = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
            let v = [v[0] / vn, v[1] / vn];
            let bit = 1usize << pos;
            let low = bit - 1;
            let mut rest = Vec::with_capacity(self.amplitudes.len() / 2);
            for j in 0..self.amplitudes.len() / 2 {
                let base = (j & low) | ((j & !low) << 1);
                rest.push(
                    v[0].conj() * self.amplitudes[base] + v[1].conj() * self.amplitudes[base | bit],
                );
            }
            normalize(&mut rest);
            let q = self.qubits.remove(pos);
            out.push(StateGroup {
                qubits: vec![q],
                amplitudes: v.to_vec(),
            });
            self.amplitudes = rest;
        }
        out.push(self);
        out
    }
}

fn normalize(v: &mut [Amplitude]) {
    let n = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        for a in v.iter_mut() {
            *a /= n;
        }
    }
}

/// Spreads `value` around zero bits at the ascending `positions`.
#[inline]
fn insert_zero_bits(mut value: usize, positions: &[usize]) -> usize {
    for &p in positions {
        let low = (1usize << p) - 1;
        value = (value & low) | ((value & !low) << 1);
    }
    value
}

/// Places bit `i` of `value` at bit `positions[i]`.
#[inline]
fn scatter(value: usize, positions: &[usize]) -> usize {
    let mut out = 0;
    for (i, &p) in positions.iter().enumerate() {
        out |= ((value >> i) & 1) << p;
    }
    out
}

/// Dense density matrix over an ordered qubit list (little-endian indices,
/// bit `p` ↔ the `p`-th requested qubit).
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    data: Vec<Amplitude>,
}

impl DensityMatrix {
    pub fn from_pure(state: &[Amplitude]) -> Self {
        let dim = state.len();
        let mut data = vec![c(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                data[i * dim + j] = state[i] * state[j].conj();
            }
        }
        DensityMatrix { dim, data }
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let dim = entries.len();
        let mut data = vec![c(0.0, 0.0); dim * dim];
        for (i, &e) in entries.iter().enumerate() {
            data[i * dim + i] = c(e, 0.0);
        }
        DensityMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Amplitude {
        self.data[row * self.dim + col]
    }

    pub fn trace(&self) -> Amplitude {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Largest |ρ − ρ†| entry.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        assert_eq!(self.dim, other.dim, "density matrix dimensions differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// ⟨ψ|ρ|ψ⟩ for a pure state in the same qubit ordering.
    pub fn expectation(&self, state: &[Amplitude]) -> f64 {
        assert_eq!(state.len(), self.dim, "state dimension mismatch");
        let mut acc = c(0.0, 0.0);
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += state[i].conj() * self.get(i, j) * state[j];
            }
        }
        acc.re
    }

    /// Tr(ρσ).
    pub fn trace_product(&self, other: &DensityMatrix) -> f64 {
        assert_eq!(self.dim, other.dim, "density matrix dimensions differ");
        let mut acc = c(0.0, 0.0);
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += self.get(i, j) * other.get(j, i);
            }
        }
        acc.re
    }
}

#[derive(Clone, Copy, Debug)]
struct Slot {
    owner: Owner,
    group: u64,
}

/// The simulated quantum state of every live qubit plus the single seeded
/// PRNG that drives all measurement sampling.
#[derive(Clone, Debug)]
pub struct World {
    groups: BTreeMap<u64, StateGroup>,
    slots: BTreeMap<QubitHandle, Slot>,
    next_qubit: u64,
    next_group: u64,
    ceiling: usize,
    rng: ChaCha20Rng,
}

impl World {
    pub fn new(seed: u64) -> Self {
        Self::from_rng(ChaCha20Rng::seed_from_u64(seed))
    }

    pub fn from_seed_bytes(seed: [u8; 32]) -> Self {
        Self::from_rng(ChaCha20Rng::from_seed(seed))
    }

    fn from_rng(rng: ChaCha20Rng) -> Self {
        World {
            groups: BTreeMap::new(),
            slots: BTreeMap::new(),
            next_qubit: 0,
            next_group: 0,
            ceiling: DEFAULT_GROUP_CEILING,
            rng,
        }
    }

    pub fn with_ceiling(mut self, ceiling: usize) -> Self {
        self.ceiling = ceiling.max(1);
        self
    }

    pub fn ceiling(&self) -> usize {
        self.ceiling
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub fn qubit_count(&self) -> usize {
        self.slots.len()
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn contains(&self, q: QubitHandle) -> bool {
        self.slots.contains_key(&q)
    }

    pub fn live_qubits(&self) -> impl Iterator<Item = QubitHandle> + '_ {
        self.slots.keys().copied()
    }

    pub fn owner(&self, q: QubitHandle) -> Result<Owner> {
        Ok(self.slot(q)?.owner)
    }

    pub fn set_owner(&mut self, q: QubitHandle, owner: Owner) -> Result<()> {
        self.slots
            .get_mut(&q)
            .map(|s| s.owner = owner)
            .ok_or(Error::UnknownQubit(q))
    }

    pub fn group_of(&self, q: QubitHandle) -> Result<&StateGroup> {
        let slot = self.slot(q)?;
        Ok(&self.groups[&slot.group])
    }

    pub fn groups(&self) -> impl Iterator<Item = &StateGroup> {
        self.groups.values()
    }

    /// True when `a` and `b` share an amplitude vector.
    pub fn same_group(&self, a: QubitHandle, b: QubitHandle) -> Result<bool> {
        Ok(self.slot(a)?.group == self.slot(b)?.group)
    }

    pub fn alloc(&mut self, owner: Owner, state: [Amplitude; 2]) -> Result<QubitHandle> {
        let norm = (state[0].norm_sqr() + state[1].norm_sqr()).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        let q = QubitHandle(self.next_qubit);
        self.next_qubit += 1;
        let g = self.insert_group(StateGroup {
            qubits: vec![q],
            amplitudes: state.to_vec(),
        });
        self.slots.insert(q, Slot { owner, group: g });
        Ok(q)
    }

    pub fn alloc_zero(&mut self, owner: Owner) -> QubitHandle {
        self.alloc(owner, [c(1.0, 0.0), c(0.0, 0.0)])
            .expect("|0⟩ is normalized")
    }

    pub fn alloc_register(
        &mut self,
        owner: Owner,
        states: &[[Amplitude; 2]],
    ) -> Result<Vec<QubitHandle>> {
        states.iter().map(|&s| self.alloc(owner, s)).collect()
    }

    /// Applies a `2^k × 2^k` unitary (row-major, `targets[0]` most
    /// significant) to `k ≤ 3` distinct qubits.
    pub fn apply_gate(&mut self, matrix: &[Amplitude], targets: &[QubitHandle]) -> Result<()> {
        let k = targets.len();
        if k == 0 || k > MAX_GATE_QUBITS || matrix.len() != 1 << (2 * k) {
            return Err(Error::GateShape {
                len: matrix.len(),
                targets: k,
            });
        }
        self.check_distinct(targets)?;
        let dev = unitarity_defect(matrix, 1 << k);
        if dev.is_nan() || dev > UNITARY_TOL {
            return Err(Error::NonUnitary(dev));
        }
        let gid = self.merge_for(targets)?;
        let group = self.groups.get_mut(&gid).expect("merged group exists");
        // matrix bit (k-1-i) ↔ targets[i]
        let positions: Vec<usize> = targets
            .iter()
            .rev()
            .map(|&q| group.position(q).expect("target in merged group"))
            .collect();
        let mask: usize = positions.iter().map(|&p| 1usize << p).sum();
        let dim = 1usize << k;
        let offsets: Vec<usize> = (0..dim).map(|t| scatter(t, &positions)).collect();
        let mut local = vec![c(0.0, 0.0); dim];
        for base in 0..group.amplitudes.len() {
            if base & mask != 0 {
                continue;
            }
            for (t, off) in offsets.iter().enumerate() {
                local[t] = group.amplitudes[base | off];
            }
            for (r, off) in offsets.iter().enumerate() {
                let row = &matrix[r * dim..(r + 1) * dim];
                group.amplitudes[base | off] = row.iter().zip(&local).map(|(m, a)| m * a).sum();
            }
        }
        Ok(())
    }

    /// Fredkin gate: swaps `a` and `b` on the control-|1⟩ subspace.
    pub fn apply_cswap(
        &mut self,
        control: QubitHandle,
        a: QubitHandle,
        b: QubitHandle,
    ) -> Result<()> {
        self.check_distinct(&[control, a, b])?;
        let gid = self.merge_for(&[control, a, b])?;
        let group = self.groups.get_mut(&gid).expect("merged group exists");
        let bc = 1usize << group.position(control).expect("in group");
        let ba = 1usize << group.position(a).expect("in group");
        let bb = 1usize << group.position(b).expect("in group");
        for idx in 0..group.amplitudes.len() {
            if idx & bc != 0 && idx & ba != 0 && idx & bb == 0 {
                group.amplitudes.swap(idx, idx ^ ba ^ bb);
            }
        }
        Ok(())
    }

    /// Projective measurement in the computational basis; the qubit stays
    /// live in its own group, collapsed to the observed basis state.
    pub fn measure_computational(&mut self, q: QubitHandle) -> Result<u8> {
        let (bit, _) = self.measure_single(q, computational_basis(), None, true)?;
        Ok(bit as u8)
    }

    pub fn measure_hadamard(&mut self, q: QubitHandle) -> Result<PlusMinus> {
        let (k, _) = self.measure_single(q, hadamard_basis(), None, true)?;
        Ok(if k == 0 {
            PlusMinus::Plus
        } else {
            PlusMinus::Minus
        })
    }

    /// Bell measurement of `(q1, q2)`. Both qubits are consumed: only the
    /// classical outcome survives.
    pub fn measure_bell(&mut self, q1: QubitHandle, q2: QubitHandle) -> Result<BellOutcome> {
        let (k, _, _) = self.project_out(&[q1, q2], &bell_basis(), None, true)?;
        Ok(BellOutcome::ALL[k])
    }

    /// Post-selects a Bell outcome; returns its Born probability.
    pub fn force_bell(
        &mut self,
        q1: QubitHandle,
        q2: QubitHandle,
        outcome: BellOutcome,
    ) -> Result<f64> {
        let (_, p, _) = self.project_out(&[q1, q2], &bell_basis(), Some(outcome.index()), true)?;
        Ok(p)
    }

    /// Hadamard-basis measurement that consumes the qubit.
    pub fn measure_out_hadamard(&mut self, q: QubitHandle) -> Result<PlusMinus> {
        let (k, _) = self.measure_single(q, hadamard_basis(), None, false)?;
        Ok(if k == 0 {
            PlusMinus::Plus
        } else {
            PlusMinus::Minus
        })
    }

    /// Post-selects a Hadamard-basis outcome; returns its Born probability.
    pub fn force_hadamard(&mut self, q: QubitHandle, outcome: PlusMinus) -> Result<f64> {
        let idx = match outcome {
            PlusMinus::Plus => 0,
            PlusMinus::Minus => 1,
        };
        let (_, p) = self.measure_single(q, hadamard_basis(), Some(idx), true)?;
        Ok(p)
    }

    pub fn force_computational(&mut self, q: QubitHandle, bit: u8) -> Result<f64> {
        let (_, p) = self.measure_single(q, computational_basis(), Some(bit as usize & 1), true)?;
        Ok(p)
    }

    /// Measures `q` in the computational basis and removes it from the world.
    pub fn discard(&mut self, q: QubitHandle) -> Result<u8> {
        let (bit, _) = self.measure_single(q, computational_basis(), None, false)?;
        Ok(bit as u8)
    }

    /// Discards every qubit in `qs`, factorizing the affected groups once at
    /// the end instead of after each measurement.
    pub fn discard_many(&mut self, qs: &[QubitHandle]) -> Result<Vec<u8>> {
        self.check_distinct(qs)?;
        let basis = computational_basis().map(|v| v.to_vec());
        let mut bits = Vec::with_capacity(qs.len());
        let mut residuals = Vec::new();
        for &q in qs {
            let (k, _, gid) = self.project_out(&[q], &basis, None, false)?;
            bits.push(k as u8);
            residuals.extend(gid);
        }
        for gid in residuals {
            if let Some(group) = self.groups.remove(&gid) {
                for part in group.factorize() {
                    self.insert_group(part);
                }
            }
        }
        Ok(bits)
    }

    /// Reduced density matrix of `subset` (bit `p` ↔ `subset[p]`).
    pub fn reduced_density(&self, subset: &[QubitHandle]) -> Result<DensityMatrix> {
        if subset.is_empty() || subset.len() > MAX_DENSITY_QUBITS {
            return Err(Error::InvalidArgument(format!(
                "reduced density needs 1..={MAX_DENSITY_QUBITS} qubits, got {}",
                subset.len()
            )));
        }
        self.check_distinct(subset)?;
        // Partial trace per group, then tensor the factors together.
        let mut by_group: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, &q) in subset.iter().enumerate() {
            by_group.entry(self.slot(q)?.group).or_default().push(i);
        }
        let factors: Vec<(Vec<usize>, DensityMatrix)> = by_group
            .into_iter()
            .map(|(gid, members)| {
                let group = &self.groups[&gid];
                let positions: Vec<usize> = members
                    .iter()
                    .map(|&i| group.position(subset[i]).expect("in group"))
                    .collect();
                (members, partial_trace(group, &positions))
            })
            .collect();
        let dim = 1usize << subset.len();
        let mut data = vec![c(0.0, 0.0); dim * dim];
        let gather = |x: usize, members: &[usize]| -> usize {
            members
                .iter()
                .enumerate()
                .map(|(j, &m)| ((x >> m) & 1) << j)
                .sum()
        };
        for i in 0..dim {
            for j in 0..dim {
                let mut v = c(1.0, 0.0);
                for (members, rho) in &factors {
                    v *= rho.get(gather(i, members), gather(j, members));
                }
                data[i * dim + j] = v;
            }
        }
        Ok(DensityMatrix { dim, data })
    }

    /// Pure state of a register whose qubits are not entangled with anything
    /// outside it (bit `p` ↔ `reg[p]`).
    pub fn register_state(&self, reg: &[QubitHandle]) -> Result<Vec<Amplitude>> {
        if reg.is_empty() || reg.len() > 2 * MAX_DENSITY_QUBITS {
            return Err(Error::InvalidArgument(format!(
                "register of {} qubits cannot be expanded",
                reg.len()
            )));
        }
        self.check_distinct(reg)?;
        let members: BTreeSet<QubitHandle> = reg.iter().copied().collect();
        let mut gids: Vec<u64> = Vec::new();
        for &q in reg {
            let g = self.slot(q)?.group;
            if !gids.contains(&g) {
                gids.push(g);
            }
        }
        let mut layout: Vec<(&StateGroup, Vec<usize>)> = Vec::new();
        for g in gids {
            let group = &self.groups[&g];
            if let Some(&outside) = group.qubits.iter().find(|q| !members.contains(q)) {
                return Err(Error::Entangled(outside));
            }
            // reg position of each group qubit, in group order
            let pos: Vec<usize> = group
                .qubits
                .iter()
                .map(|q| reg.iter().position(|r| r == q).expect("member"))
                .collect();
            layout.push((group, pos));
        }
        let dim = 1usize << reg.len();
        let mut out = vec![c(1.0, 0.0); dim];
        for (x, amp) in out.iter_mut().enumerate() {
            for (group, pos) in &layout {
                let local: usize = pos
                    .iter()
                    .enumerate()
                    .map(|(b, &p)| ((x >> p) & 1) << b)
                    .sum();
                *amp *= group.amplitudes[local];
            }
        }
        Ok(out)
    }

    /// |⟨A|B⟩| for two registers that are each unentangled with the outside.
    pub fn overlap(&self, reg_a: &[QubitHandle], reg_b: &[QubitHandle]) -> Result<f64> {
        if reg_a.len() != reg_b.len() {
            return Err(Error::LengthMismatch(reg_a.len(), reg_b.len()));
        }
        let a = self.register_state(reg_a)?;
        let b = self.register_state(reg_b)?;
        Ok(a.iter()
            .zip(&b)
            .map(|(x, y)| x.conj() * y)
            .sum::<Amplitude>()
            .norm()
            .min(1.0))
    }

    /// Verifies the norm and partition invariants.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = 0usize;
        for (gid, group) in &self.groups {
            if group.amplitudes.len() != 1 << group.qubits.len() {
                return Err(Error::InvalidArgument(format!(
                    "group {gid} has a mis-sized vector"
                )));
            }
            if group.qubits.len() > self.ceiling {
                return Err(Error::CapacityExceeded(group.qubits.len(), self.ceiling));
            }
            if group
                .amplitudes
                .iter()
                .any(|a| !a.re.is_finite() || !a.im.is_finite())
            {
                return Err(Error::InvalidArgument(format!(
                    "group {gid} has non-finite amplitudes"
                )));
            }
            let norm = group.norm();
            if (norm - 1.0).abs() > NORM_TOL {
                return Err(Error::NotNormalized(norm));
            }
            for &q in &group.qubits {
                match self.slots.get(&q) {
                    Some(s) if s.group == *gid => seen += 1,
                    _ => return Err(Error::UnknownQubit(q)),
                }
            }
        }
        if seen != self.slots.len() {
            return Err(Error::InvalidArgument("orphan qubit handles".into()));
        }
        Ok(())
    }

    fn slot(&self, q: QubitHandle) -> Result<Slot> {
        self.slots.get(&q).copied().ok_or(Error::UnknownQubit(q))
    }

    fn check_distinct(&self, qs: &[QubitHandle]) -> Result<()> {
        for (i, &q) in qs.iter().enumerate() {
            self.slot(q)?;
            if qs[..i].contains(&q) {
                return Err(Error::DuplicateQubit(q));
            }
        }
        Ok(())
    }

    fn insert_group(&mut self, group: StateGroup) -> u64 {
        let gid = self.next_group;
        self.next_group += 1;
        for q in &group.qubits {
            if let Some(s) = self.slots.get_mut(q) {
                s.group = gid;
            }
        }
        self.groups.insert(gid, group);
        gid
    }

    /// Ensures all `qs` live in one group, merging by tensor product.
    fn merge_for(&mut self, qs: &[QubitHandle]) -> Result<u64> {
        let mut gids: Vec<u64> = Vec::new();
        for &q in qs {
            let g = self.slot(q)?.group;
            if !gids.contains(&g) {
                gids.push(g);
            }
        }
        if gids.len() == 1 {
            return Ok(gids[0]);
        }
        let total: usize = gids.iter().map(|g| self.groups[g].qubits.len()).sum();
        if total > self.ceiling {
            return Err(Error::CapacityExceeded(total, self.ceiling));
        }
        let mut merged = self.groups.remove(&gids[0]).expect("group exists");
        for g in &gids[1..] {
            merged = merged.kron(self.groups.remove(g).expect("group exists"));
        }
        Ok(self.insert_group(merged))
    }

    fn measure_single(
        &mut self,
        q: QubitHandle,
        basis: [[Amplitude; 2]; 2],
        forced: Option<usize>,
        keep: bool,
    ) -> Result<(usize, f64)> {
        let owner = self.slot(q)?.owner;
        let basis_vecs = [basis[0].to_vec(), basis[1].to_vec()];
        let (k, p, _) = self.project_out(&[q], &basis_vecs, forced, true)?;
        if keep {
            let g = self.insert_group(StateGroup {
                qubits: vec![q],
                amplitudes: basis[k].to_vec(),
            });
            self.slots.insert(q, Slot { owner, group: g });
        }
        Ok((k, p))
    }

    /// Projects `targets` onto one vector of an orthonormal basis (gate
    /// ordering), sampled by the Born rule unless `forced`. The targets are
    /// removed from the world; the residual is renormalized and, if
    /// `factor`, factorized. Returns the outcome, its probability and the
    /// residual's group id when it was left whole.
    fn project_out(
        &mut self,
        targets: &[QubitHandle],
        basis: &[Vec<Amplitude>],
        forced: Option<usize>,
        factor: bool,
    ) -> Result<(usize, f64, Option<u64>)> {
        self.check_distinct(targets)?;
        let gid = self.merge_for(targets)?;
        let group = &self.groups[&gid];
        let positions: Vec<usize> = targets
            .iter()
            .rev()
            .map(|&q| group.position(q).expect("in group"))
            .collect();
        let rest_positions: Vec<usize> = (0..group.qubits.len())
            .filter(|p| !positions.contains(p))
            .collect();
        let offsets: Vec<usize> = (0..basis[0].len())
            .map(|t| scatter(t, &positions))
            .collect();
        let rest_dim = 1usize << rest_positions.len();

        let mut residuals: Vec<Vec<Amplitude>> = Vec::with_capacity(basis.len());
        let mut probs = Vec::with_capacity(basis.len());
        let mut sorted = positions.clone();
        sorted.sort_unstable();
        for v in basis {
            let mut r = Vec::with_capacity(rest_dim);
            for j in 0..rest_dim {
                let base = insert_zero_bits(j, &sorted);
                r.push(
                    v.iter()
                        .zip(&offsets)
                        .map(|(b, off)| b.conj() * group.amplitudes[base | off])
                        .sum::<Amplitude>(),
                );
            }
            probs.push(r.iter().map(|a| a.norm_sqr()).sum::<f64>());
            residuals.push(r);
        }
        let k = match forced {
            Some(k) => {
                if k >= basis.len() || probs[k] < 1e-15 {
                    return Err(Error::ImpossibleOutcome);
                }
                k
            }
            None => {
                let total: f64 = probs.iter().sum();
                let u = self.rng.gen::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = probs.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                // never land on a zero-probability branch through rounding
                while probs[pick] == 0.0 && pick > 0 {
                    pick -= 1;
                }
                pick
            }
        };
        let p = probs[k];
        let mut residual = residuals.swap_remove(k);
        let group = self.groups.remove(&gid).expect("group exists");
        for q in targets {
            self.slots.remove(q);
        }
        if !rest_positions.is_empty() {
            normalize(&mut residual);
            let rest = StateGroup {
                qubits: rest_positions.iter().map(|&i| group.qubits[i]).collect(),
                amplitudes: residual,
            };
            if !factor {
                return Ok((k, p, Some(self.insert_group(rest))));
            }
            for part in rest.factorize() {
                self.insert_group(part);
            }
        }
        Ok((k, p, None))
    }
}

fn computational_basis() -> [[Amplitude; 2]; 2] {
    [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]]
}

fn hadamard_basis() -> [[Amplitude; 2]; 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]]
}

fn bell_basis() -> Vec<Vec<Amplitude>> {
    BellOutcome::ALL
        .iter()
        .map(|o| o.basis_vector().to_vec())
        .collect()
}

/// max |(M†M − I)_{ij}|
pub(crate) fn unitarity_defect(m: &[Amplitude], dim: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = c(0.0, 0.0);
            for r in 0..dim {
                acc += m[r * dim + i].conj() * m[r * dim + j];
            }
            if i == j {
                acc -= 1.0;
            }
            let d = acc.norm();
            if !d.is_finite() {
                return f64::INFINITY;
            }
            worst = worst.max(d);
        }
    }
    worst
}

fn partial_trace(group: &StateGroup, keep: &[usize]) -> DensityMatrix {
    let k = keep.len();
    let dim = 1usize << k;
    let traced: Vec<usize> = (0..group.qubits.len())
        .filter(|p| !keep.contains(p))
        .collect();
    let offsets: Vec<usize> = (0..dim).map(|t| scatter(t, keep)).collect();
    let mut data = vec![c(0.0, 0.0); dim * dim];
    for e in 0..1usize << traced.len() {
        let base = scatter(e, &traced);
        for i in 0..dim {
            let a = group.amplitudes[base | offsets[i]];
            if a.norm_sqr() == 0.0 {
                continue;
            }
            for j in 0..dim {
                data[i * dim + j] += a * group.amplitudes[base | offsets[j]].conj();
            }
        }
    }
    DensityMatrix { dim, data }
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub ceiling: usize,
    pub next_qubit: u64,
    pub rng: RngSnapshot,
    pub groups: Vec<GroupSnapshot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngSnapshot {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSnapshot {
    pub qubits: Vec<QubitEntry>,
    pub amplitudes: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitEntry {
    pub id: u64,
    pub owner: Owner,
}

impl World {
    pub fn to_snapshot(&self) -> WorldSnapshot {
        WorldSnapshot {
            ceiling: self.ceiling,
            next_qubit: self.next_qubit,
            rng: RngSnapshot {
                seed: hex::encode(self.rng.get_seed()),
                stream: self.rng.get_stream(),
                word_pos: self.rng.get_word_pos().to_string(),
            },
            groups: self
                .groups
                .values()
                .map(|g| GroupSnapshot {
                    qubits: g
                        .qubits
                        .iter()
                        .map(|q| QubitEntry {
                            id: q.0,
                            owner: self.slots[q].owner,
                        })
                        .collect(),
                    amplitudes: g.amplitudes.iter().map(|a| (a.re, a.im)).collect(),
                })
                .collect(),
        }
    }

    pub fn from_snapshot(snap: &WorldSnapshot) -> Result<World> {
        let corrupt = |m: String| Error::SnapshotCorrupt(m);
        let seed: [u8; 32] = hex::decode(&snap.rng.seed)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| corrupt("rng seed must be 32 hex bytes".into()))?;
        let word_pos: u128 = snap
            .rng
            .word_pos
            .parse()
            .map_err(|_| corrupt("rng word position is not an integer".into()))?;
        let mut rng = ChaCha20Rng::from_seed(seed);
        rng.set_stream(snap.rng.stream);
        rng.set_word_pos(word_pos);
        let mut world = World::from_rng(rng).with_ceiling(snap.ceiling);
        world.next_qubit = snap.next_qubit;
        for (gi, g) in snap.groups.iter().enumerate() {
            if g.qubits.is_empty() || g.qubits.len() > world.ceiling {
                return Err(corrupt(format!("group {gi} has {} qubits", g.qubits.len())));
            }
            if g.amplitudes.len() != 1 << g.qubits.len() {
                return Err(corrupt(format!(
                    "group {gi} has a mis-sized amplitude list"
                )));
            }
            let group = StateGroup {
                qubits: g.qubits.iter().map(|e| QubitHandle(e.id)).collect(),
                amplitudes: g.amplitudes.iter().map(|&(re, im)| c(re, im)).collect(),
            };
            let norm = group.norm();
            if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
                return Err(corrupt(format!("group {gi} is not normalized")));
            }
            let gid = world.next_group;
            for e in &g.qubits {
                if e.id >= world.next_qubit {
                    return Err(corrupt(format!(
                        "qubit id {} beyond allocation counter",
                        e.id
                    )));
                }
                let prev = world.slots.insert(
                    QubitHandle(e.id),
                    Slot {
                        owner: e.owner,
                        group: gid,
                    },
                );
                if prev.is_some() {
                    return Err(corrupt(format!("qubit id {} appears twice", e.id)));
                }
            }
            world.insert_group(group);
        }
        Ok(world)
    }
}
