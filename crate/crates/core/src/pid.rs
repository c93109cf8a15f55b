//! Pointwise partial information decomposition.
//!
//! Redundancy is the difference between the smallest prior surprisal of the
//! two sources and the smallest posterior surprisal, where the posterior
//! surprisal of source `i` is `-log p(y_i) - i(y_i; x)`. Uniqueness is each
//! source's information minus the redundancy, and synergy is whatever remains
//! of the joint information. All quantities are in nats and signed.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::LatentField;

/// Per-event inputs: prior surprisals of both sources and the three pointwise
/// mutual informations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseInputs {
    pub neg_log_p1: f64,
    pub neg_log_p2: f64,
    pub mi1: f64,
    pub mi2: f64,
    pub mi_joint: f64,
}

impl PointwiseInputs {
    pub fn new(neg_log_p1: f64, neg_log_p2: f64, mi1: f64, mi2: f64, mi_joint: f64) -> Result<Self> {
        let inputs = PointwiseInputs {
            neg_log_p1,
            neg_log_p2,
            mi1,
            mi2,
            mi_joint,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("neg_log_p1", self.neg_log_p1),
            ("neg_log_p2", self.neg_log_p2),
            ("mi1", self.mi1),
            ("mi2", self.mi2),
            ("mi_joint", self.mi_joint),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(Error::domain(format!("{name} must be finite, got {v}")));
            }
        }
        if self.neg_log_p1 < 0.0 || self.neg_log_p2 < 0.0 {
            return Err(Error::domain(format!(
                "prior surprisals must be non-negative, got ({}, {})",
                self.neg_log_p1, self.neg_log_p2
            )));
        }
        Ok(())
    }

    /// The same event with the two sources exchanged.
    pub fn swapped(&self) -> Self {
        PointwiseInputs {
            neg_log_p1: self.neg_log_p2,
            neg_log_p2: self.neg_log_p1,
            mi1: self.mi2,
            mi2: self.mi1,
            mi_joint: self.mi_joint,
        }
    }
}

/// Redundancy, the two uniqueness terms and synergy for one event.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidAtoms {
    pub redundancy: f64,
    pub unique1: f64,
    pub unique2: f64,
    pub synergy: f64,
}

impl PidAtoms {
    pub fn total(&self) -> f64 {
        self.redundancy + self.unique1 + self.unique2 + self.synergy
    }

    fn scaled(&self, w: f64) -> PidAtoms {
        PidAtoms {
            redundancy: w * self.redundancy,
            unique1: w * self.unique1,
            unique2: w * self.unique2,
            synergy: w * self.synergy,
        }
    }

    fn add(&self, o: &PidAtoms) -> PidAtoms {
        PidAtoms {
            redundancy: self.redundancy + o.redundancy,
            unique1: self.unique1 + o.unique1,
            unique2: self.unique2 + o.unique2,
            synergy: self.synergy + o.synergy,
        }
    }
}

pub fn redundancy_pointwise(inputs: &PointwiseInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(redundancy_unchecked(inputs))
}

fn redundancy_unchecked(p: &PointwiseInputs) -> f64 {
    let informative = p.neg_log_p1.min(p.neg_log_p2);
    let misinformative = (p.neg_log_p1 - p.mi1).min(p.neg_log_p2 - p.mi2);
    informative - misinformative
}

fn decompose_unchecked(p: &PointwiseInputs) -> PidAtoms {
    let redundancy = redundancy_unchecked(p);
    let unique1 = p.mi1 - redundancy;
    let unique2 = p.mi2 - redundancy;
    PidAtoms {
        redundancy,
        unique1,
        unique2,
        synergy: p.mi_joint - redundancy - (unique1 + unique2),
    }
}

pub fn decompose_pointwise(inputs: &PointwiseInputs) -> Result<PidAtoms> {
    inputs.validate()?;
    Ok(decompose_unchecked(inputs))
}

/// Per-pixel atom maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomFields {
    pub redundancy: LatentField,
    pub unique1: LatentField,
    pub unique2: LatentField,
    pub synergy: LatentField,
}

/// Applies [`decompose_pointwise`] at every element, sharing the two scalar
/// prior surprisals across the field.
pub fn decompose_field(
    neg_log_p1: f64,
    neg_log_p2: f64,
    mi1: &LatentField,
    mi2: &LatentField,
    mi_joint: &LatentField,
) -> Result<AtomFields> {
    let shape = mi1.shape();
    mi2.expect_shape(shape, "mi2_field")?;
    mi_joint.expect_shape(shape, "mi_joint_field")?;
    PointwiseInputs::new(neg_log_p1, neg_log_p2, 0.0, 0.0, 0.0)?;
    if !(mi1.is_finite() && mi2.is_finite() && mi_joint.is_finite()) {
        return Err(Error::domain("mutual information fields must be finite"));
    }

    let atoms: Vec<PidAtoms> = (0..shape.len())
        .into_par_iter()
        .map(|i| {
            decompose_unchecked(&PointwiseInputs {
                neg_log_p1,
                neg_log_p2,
                mi1: mi1.values()[i],
                mi2: mi2.values()[i],
                mi_joint: mi_joint.values()[i],
            })
        })
        .collect();

    let take = |f: fn(&PidAtoms) -> f64| LatentField::from_raw(shape, atoms.iter().map(f).collect());
    Ok(AtomFields {
        redundancy: take(|a| a.redundancy),
        unique1: take(|a| a.unique1),
        unique2: take(|a| a.unique2),
        synergy: take(|a| a.synergy),
    })
}

/// Joint probability table over `(y1, y2, x)`, indexed `[y1][y2][x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJoint {
    sizes: [usize; 3],
    probs: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(sizes: [usize; 3], probs: Vec<f64>) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(Error::invalid("support sizes must be positive"));
        }
        let n = sizes[0] * sizes[1] * sizes[2];
        if probs.len() != n {
            return Err(Error::invalid(format!(
                "table needs {n} entries, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::domain("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(DiscreteJoint { sizes, probs })
    }

    /// Builds a table from weighted `(y1, y2, x)` events; weights are normalized.
    pub fn from_events(sizes: [usize; 3], events: &[([usize; 3], f64)]) -> Result<Self> {
        let mut probs = vec![0.0; sizes.iter().product()];
        let total: f64 = events.iter().map(|e| e.1).sum();
        for (idx, w) in events {
            if idx.iter().zip(&sizes).any(|(i, n)| i >= n) {
                return Err(Error::invalid(format!("event {idx:?} outside support {sizes:?}")));
            }
            probs[(idx[0] * sizes[1] + idx[1]) * sizes[2] + idx[2]] += w / total;
        }
        DiscreteJoint::new(sizes, probs)
    }

    /// Two uniform bits with `x = y1 xor y2`.
    pub fn xor_gate() -> Self {
        let events: Vec<_> = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .map(|&(a, b)| ([a, b, a ^ b], 1.0))
            .collect();
        Self::from_events([2, 2, 2], &events).expect("valid gate")
    }

    /// One uniform bit copied to both sources and the target.
    pub fn rdn_gate() -> Self {
        Self::from_events([2, 2, 2], &[([0, 0, 0], 1.0), ([1, 1, 1], 1.0)]).expect("valid gate")
    }

    /// Two independent uniform bits with `x = y1`.
    pub fn unq_gate() -> Self {
        let events: Vec<_> = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .map(|&(a, b)| ([a, b, a], 1.0))
            .collect();
        Self::from_events([2, 2, 2], &events).expect("valid gate")
    }

    pub fn sizes(&self) -> [usize; 3] {
        self.sizes
    }

    pub fn prob(&self, y1: usize, y2: usize, x: usize) -> f64 {
        self.probs[(y1 * self.sizes[1] + y2) * self.sizes[2] + x]
    }
}

/// One row of the oracle's event table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventAtoms {
    pub y1: usize,
    pub y2: usize,
    pub x: usize,
    pub p: f64,
    pub i1: f64,
    pub i2: f64,
    pub i_joint: f64,
    pub atoms: PidAtoms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub expected: PidAtoms,
    pub events: Vec<EventAtoms>,
}

impl OracleResult {
    pub const CSV_HEADER: &'static str = "y1,y2,x,p,i1,i2,i_joint,r,u1,u2,s";

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for e in &self.events {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                e.y1,
                e.y2,
                e.x,
                e.p,
                e.i1,
                e.i2,
                e.i_joint,
                e.atoms.redundancy,
                e.atoms.unique1,
                e.atoms.unique2,
                e.atoms.synergy
            )?;
        }
        Ok(())
    }
}

/// Exact PID by enumeration of every positive-probability event.
pub fn discrete_pid_oracle(joint: &DiscreteJoint) -> Result<OracleResult> {
    let [n1, n2, nx] = joint.sizes;
    let mut p1 = vec![0.0; n1];
    let mut p2 = vec![0.0; n2];
    let mut px = vec![0.0; nx];
    let mut p1x = vec![0.0; n1 * nx];
    let mut p2x = vec![0.0; n2 * nx];
    let mut p12 = vec![0.0; n1 * n2];
    for i in 0..n1 {
        for j in 0..n2 {
            for k in 0..nx {
                let p = joint.prob(i, j, k);
                p1[i] += p;
                p2[j] += p;
                px[k] += p;
                p1x[i * nx + k] += p;
                p2x[j * nx + k] += p;
                p12[i * n2 + j] += p;
            }
        }
    }

    let mut events = Vec::new();
    let mut expected = PidAtoms::default();
    for i in 0..n1 {
        for j in 0..n2 {
            for k in 0..nx {
                let p = joint.prob(i, j, k);
                if p <= 0.0 {
                    continue;
                }
                // marginals accumulated from a normalized table can round a hair above 1
                let ln_px = px[k].min(1.0).ln();
                let ln_p1 = p1[i].min(1.0).ln();
                let ln_p2 = p2[j].min(1.0).ln();
                let i1 = p1x[i * nx + k].ln() - ln_p1 - ln_px;
                let i2 = p2x[j * nx + k].ln() - ln_p2 - ln_px;
                let i_joint = p.ln() - p12[i * n2 + j].min(1.0).ln() - ln_px;
                let inputs = PointwiseInputs::new(-ln_p1, -ln_p2, i1, i2, i_joint)?;
                let atoms = decompose_unchecked(&inputs);
                expected = expected.add(&atoms.scaled(p));
                events.push(EventAtoms {
                    y1: i,
                    y2: j,
                    x: k,
                    p,
                    i1,
                    i2,
                    i_joint,
                    atoms,
                });
            }
        }
    }
    Ok(OracleResult { expected, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Shape;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn inputs(a: f64, b: f64, c: f64, d: f64, e: f64) -> PointwiseInputs {
        PointwiseInputs::new(a, b, c, d, e).unwrap()
    }

    fn assert_atoms(got: PidAtoms, want: [f64; 4]) {
        let g = [got.redundancy, got.unique1, got.unique2, got.synergy];
        for (g, w) in g.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn gate_events() {
        assert_eq!(redundancy_pointwise(&inputs(LN_2, LN_2, LN_2, LN_2, 0.0)).unwrap(), LN_2);
        assert_eq!(redundancy_pointwise(&inputs(LN_2, LN_2, 0.0, 0.0, 0.0)).unwrap(), 0.0);
        assert_atoms(decompose_pointwise(&inputs(LN_2, LN_2, 0.0, 0.0, LN_2)).unwrap(), [0.0, 0.0, 0.0, LN_2]);
        assert_atoms(decompose_pointwise(&inputs(LN_2, LN_2, LN_2, LN_2, LN_2)).unwrap(), [LN_2, 0.0, 0.0, 0.0]);
        assert_atoms(
            decompose_pointwise(&inputs(LN_2, LN_2, LN_2, 0.0, LN_2)).unwrap(),
            [LN_2, 0.0, -LN_2, LN_2],
        );
    }

    #[test]
    fn identical_sources_are_fully_redundant() {
        for (c, m) in [(0.0, 0.0), (1.5, 0.3), (3.0, -2.0), (2.0, 2.0)] {
            let r = redundancy_pointwise(&inputs(c, c, m, m, 0.0)).unwrap();
            assert!((r - m).abs() <= 1e-12 * c.max(1.0));
        }
    }

    #[test]
    fn no_information_gives_zero_atoms() {
        assert_atoms(decompose_pointwise(&inputs(0.4, 1.1, 0.0, 0.0, 0.0)).unwrap(), [0.0; 4]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(PointwiseInputs::new(f64::INFINITY, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(PointwiseInputs::new(-0.1, 1.0, 0.0, 0.0, 0.0).is_err());
        let raw = PointwiseInputs {
            neg_log_p1: 1.0,
            neg_log_p2: 1.0,
            mi1: f64::NAN,
            mi2: 0.0,
            mi_joint: 0.0,
        };
        assert!(matches!(decompose_pointwise(&raw), Err(Error::Domain(_))));
    }

    fn field(v: f64, s: Shape) -> LatentField {
        LatentField::filled(s, v)
    }

    #[test]
    fn field_decomposition_lifts_pointwise() {
        let s = Shape::new(2, 3, 4).unwrap();
        let out = decompose_field(LN_2, LN_2, &field(0.0, s), &field(0.0, s), &field(LN_2, s)).unwrap();
        assert!(out.redundancy.values().iter().all(|&v| v == 0.0));
        assert!(out.synergy.values().iter().all(|&v| (v - LN_2).abs() < 1e-15));

        let one = Shape::scalar();
        let single = decompose_field(0.7, 1.3, &field(0.2, one), &field(0.9, one), &field(1.4, one)).unwrap();
        let direct = decompose_pointwise(&inputs(0.7, 1.3, 0.2, 0.9, 1.4)).unwrap();
        assert_eq!(single.redundancy.values()[0], direct.redundancy);
        assert_eq!(single.unique1.values()[0], direct.unique1);
        assert_eq!(single.unique2.values()[0], direct.unique2);
        assert_eq!(single.synergy.values()[0], direct.synergy);

        let zero = decompose_field(0.5, 0.5, &field(0.0, s), &field(0.0, s), &field(0.0, s)).unwrap();
        for f in [&zero.redundancy, &zero.unique1, &zero.unique2, &zero.synergy] {
            assert!(f.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn field_shape_mismatch_names_field() {
        let a = Shape::new(1, 2, 2).unwrap();
        let b = Shape::new(1, 2, 3).unwrap();
        let err = decompose_field(1.0, 1.0, &field(0.0, a), &field(0.0, a), &field(0.0, b)).unwrap_err();
        match err {
            Error::ShapeMismatch { field, .. } => assert_eq!(field, "mi_joint_field"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gate_oracles() {
        let xor = discrete_pid_oracle(&DiscreteJoint::xor_gate()).unwrap();
        assert_atoms(xor.expected, [0.0, 0.0, 0.0, LN_2]);
        let rdn = discrete_pid_oracle(&DiscreteJoint::rdn_gate()).unwrap();
        assert_atoms(rdn.expected, [LN_2, 0.0, 0.0, 0.0]);
        let unq = discrete_pid_oracle(&DiscreteJoint::unq_gate()).unwrap();
        assert_atoms(unq.expected, [LN_2, 0.0, -LN_2, LN_2]);
        assert_eq!(xor.events.len(), 4);
        assert_eq!(rdn.events.len(), 2);
    }

    #[test]
    fn independent_target_has_no_information() {
        let probs: Vec<f64> = (0..12).map(|_| 1.0 / 12.0).collect();
        let joint = DiscreteJoint::new([2, 3, 2], probs).unwrap();
        let out = discrete_pid_oracle(&joint).unwrap();
        assert_atoms(out.expected, [0.0; 4]);
    }

    #[test]
    fn deterministic_marginal_has_zero_surprisal() {
        let joint = DiscreteJoint::from_events([1, 2, 2], &[([0, 0, 0], 1.0), ([0, 1, 1], 1.0)]).unwrap();
        let out = discrete_pid_oracle(&joint).unwrap();
        for e in &out.events {
            assert_eq!(e.i1, 0.0);
            assert!((e.i2 - LN_2).abs() < 1e-15);
        }
        // y1 carries nothing, so r = min(0, ln2) - min(0, ln2 - ln2) = 0
        assert_atoms(out.expected, [0.0, 0.0, LN_2, 0.0]);
    }

    #[test]
    fn rejects_unnormalized_tables() {
        assert!(DiscreteJoint::new([1, 1, 2], vec![0.5, 0.4]).is_err());
        assert!(DiscreteJoint::new([1, 1, 2], vec![1.5, -0.5]).is_err());
        assert!(DiscreteJoint::new([1, 1, 2], vec![0.5]).is_err());
    }

    #[test]
    fn csv_has_documented_columns() {
        let out = discrete_pid_oracle(&DiscreteJoint::xor_gate()).unwrap();
        let mut buf = Vec::new();
        out.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "y1,y2,x,p,i1,i2,i_joint,r,u1,u2,s");
        assert_eq!(lines.count(), 4);
    }

    fn entropy(p: &[f64]) -> f64 {
        -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
    }

    /// I(A;X) from entropies of the marginal tables, an independent route to
    /// the expected pointwise information.
    fn mutual_information(joint: &DiscreteJoint, group: impl Fn(usize, usize) -> usize, groups: usize) -> f64 {
        let [n1, n2, nx] = joint.sizes();
        let mut pa = vec![0.0; groups];
        let mut px = vec![0.0; nx];
        let mut pax = vec![0.0; groups * nx];
        for i in 0..n1 {
            for j in 0..n2 {
                for k in 0..nx {
                    let p = joint.prob(i, j, k);
                    let g = group(i, j);
                    pa[g] += p;
                    px[k] += p;
                    pax[g * nx + k] += p;
                }
            }
        }
        entropy(&pa) + entropy(&px) - entropy(&pax)
    }

    fn arb_joint() -> impl Strategy<Value = DiscreteJoint> {
        (1usize..=4, 1usize..=4, 1usize..=4).prop_flat_map(|(a, b, c)| {
            prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], a * b * c).prop_filter_map(
                "non-empty table",
                move |w| {
                    let total: f64 = w.iter().sum();
                    if total <= 0.0 {
                        return None;
                    }
                    let probs: Vec<f64> = w.iter().map(|v| v / total).collect();
                    let drift: f64 = probs.iter().sum::<f64>() - 1.0;
                    if drift.abs() > 1e-12 {
                        return None;
                    }
                    DiscreteJoint::new([a, b, c], probs).ok()
                },
            )
        })
    }

    fn arb_inputs() -> impl Strategy<Value = PointwiseInputs> {
        (0.0f64..10.0, 0.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0)
            .prop_map(|(a, b, c, d, e)| PointwiseInputs::new(a, b, c, d, e).unwrap())
    }

    proptest! {
        #[test]
        fn additivity(inp in arb_inputs()) {
            let a = decompose_pointwise(&inp).unwrap();
            let tol = 1e-12 * inp.mi_joint.abs().max(1.0);
            prop_assert!((a.total() - inp.mi_joint).abs() <= tol);
        }

        #[test]
        fn symmetry(inp in arb_inputs()) {
            let a = decompose_pointwise(&inp).unwrap();
            let b = decompose_pointwise(&inp.swapped()).unwrap();
            prop_assert_eq!(a.redundancy, b.redundancy);
            prop_assert_eq!(a.unique1, b.unique2);
            prop_assert_eq!(a.unique2, b.unique1);
            prop_assert_eq!(a.synergy, b.synergy);
        }

        #[test]
        fn self_redundancy(c in 0.0f64..10.0, m in -10.0f64..10.0, j in -10.0f64..10.0) {
            let a = decompose_pointwise(&PointwiseInputs::new(c, c, m, m, j).unwrap()).unwrap();
            let tol = 1e-12 * c.max(m.abs()).max(1.0);
            prop_assert!((a.redundancy - m).abs() <= tol);
            prop_assert!(a.unique1.abs() <= tol && a.unique2.abs() <= tol);
            prop_assert_eq!(a.unique1, a.unique2);
        }

        #[test]
        fn redundancy_matches_reordered_reevaluation(inp in arb_inputs()) {
            // min over posterior surprisals written as -log p(y_i|x), re-ordered
            let post1 = inp.neg_log_p1 - inp.mi1;
            let post2 = inp.neg_log_p2 - inp.mi2;
            let r_plus = if inp.neg_log_p2 < inp.neg_log_p1 { inp.neg_log_p2 } else { inp.neg_log_p1 };
            let r_minus = if post2 < post1 { post2 } else { post1 };
            prop_assert_eq!(redundancy_pointwise(&inp).unwrap(), r_plus - r_minus);
        }

        #[test]
        fn oracle_matches_enumeration_and_entropies(joint in arb_joint()) {
            let out = discrete_pid_oracle(&joint).unwrap();
            let mut acc = PidAtoms::default();
            let (mut e1, mut e2, mut ej) = (0.0, 0.0, 0.0);
            for e in &out.events {
                let direct = decompose_pointwise(&PointwiseInputs::new(
                    -(out.events.iter().filter(|o| o.y1 == e.y1).map(|o| o.p).sum::<f64>()).min(1.0).ln(),
                    -(out.events.iter().filter(|o| o.y2 == e.y2).map(|o| o.p).sum::<f64>()).min(1.0).ln(),
                    e.i1, e.i2, e.i_joint).unwrap()).unwrap();
                prop_assert!((direct.redundancy - e.atoms.redundancy).abs() < 1e-12);
                acc = acc.add(&e.atoms.scaled(e.p));
                e1 += e.p * e.i1;
                e2 += e.p * e.i2;
                ej += e.p * e.i_joint;
            }
            prop_assert_eq!(acc, out.expected);
            let [_, n2, _] = joint.sizes();
            let n1 = joint.sizes()[0];
            prop_assert!((e1 - mutual_information(&joint, |i, _| i, n1)).abs() < 1e-9);
            prop_assert!((e2 - mutual_information(&joint, |_, j| j, n2)).abs() < 1e-9);
            prop_assert!((ej - mutual_information(&joint, |i, j| i * n2 + j, n1 * n2)).abs() < 1e-9);
            prop_assert!((out.expected.total() - ej).abs() < 1e-9);
        }
    }
}
