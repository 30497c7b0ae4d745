use nalgebra::DMatrix;

/// Common view of continuous-time state-space models.
pub trait StateSpace {
    fn a(&self) -> &DMatrix<f64>;
    fn b(&self) -> &DMatrix<f64>;
    fn c(&self) -> &DMatrix<f64>;
    fn d(&self) -> &DMatrix<f64>;
    fn state_labels(&self) -> Vec<String>;
    fn input_labels(&self) -> Vec<String>;
    fn output_labels(&self) -> Vec<String>;
}

/// A bare (A, B, C, D) quadruple with generic labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Abcd {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpace for Abcd {
    fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    fn state_labels(&self) -> Vec<String> {
        (0..self.a.nrows()).map(|i| format!("x{i}")).collect()
    }
    fn input_labels(&self) -> Vec<String> {
        (0..self.b.ncols()).map(|i| format!("u{i}")).collect()
    }
    fn output_labels(&self) -> Vec<String> {
        (0..self.c.nrows()).map(|i| format!("y{i}")).collect()
    }
}

/// Stable fingerprint of a set of matrices, used as a provenance id.
pub(crate) fn fingerprint(ms: &[&DMatrix<f64>]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for m in ms {
        for v in [m.nrows() as u64, m.ncols() as u64]
            .into_iter()
            .chain(m.iter().map(|v| v.to_bits()))
        {
            for byte in v.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    format!("{h:016x}")
}
