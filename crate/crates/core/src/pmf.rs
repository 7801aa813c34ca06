//! Finite probability primitives: distributions, entropies, and the binary
//! memoryless channel.
//!
//! All information quantities are in bits. `0 log 0` is taken as `0`.

use crate::error::{invalid, Error, Result};

/// Sum tolerance for distributions typed in by a user.
pub const USER_TOL: f64 = 1e-9;
/// Sum tolerance for distributions produced by internal arithmetic.
pub const INTERNAL_TOL: f64 = 1e-12;

/// A probability mass function over `{0, .., len-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    /// Validates user-supplied probabilities (sum within [`USER_TOL`]) and
    /// renormalizes them.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(probs, USER_TOL)
    }

    /// Validation for values computed internally, at [`INTERNAL_TOL`].
    pub fn from_internal(probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(probs, INTERNAL_TOL)
    }

    pub fn with_tolerance(mut probs: Vec<f64>, tol: f64) -> Result<Self> {
        if probs.is_empty() {
            return invalid("empty distribution");
        }
        for (i, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() {
                return invalid(format!("probability {i} is not finite"));
            }
            if *p < 0.0 {
                if *p < -tol {
                    return invalid(format!("probability {i} is negative ({p})"));
                }
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > tol {
            return invalid(format!("probabilities sum to {total}, not 1"));
        }
        if total != 1.0 {
            probs.iter_mut().for_each(|p| *p /= total);
        }
        Ok(Pmf { probs })
    }

    pub fn point(len: usize, at: usize) -> Self {
        assert!(at < len, "point mass outside the alphabet");
        let mut probs = vec![0.0; len];
        probs[at] = 1.0;
        Pmf { probs }
    }

    pub fn uniform(len: usize) -> Self {
        assert!(len > 0);
        Pmf {
            probs: vec![1.0 / len as f64; len],
        }
    }

    /// `[1 - p, p]`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return invalid(format!("Bernoulli parameter {p} outside [0, 1]"));
        }
        Ok(Pmf {
            probs: vec![1.0 - p, p],
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs.get(i).copied().unwrap_or(0.0)
    }

    /// `sum_i i * p(i)`.
    pub fn mean_index(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| i as f64 * p).sum()
    }

    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.probs)
    }

    pub(crate) fn require_binary(&self, what: &str) -> Result<()> {
        if self.len() != 2 {
            return invalid(format!("{what} must be a binary distribution"));
        }
        Ok(())
    }
}

pub(crate) fn entropy_bits(probs: &[f64]) -> f64 {
    let h: f64 = probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
    h.max(0.0)
}

/// Shannon entropy in bits.
pub fn entropy(p: &Pmf) -> f64 {
    p.entropy()
}

/// Entropy of raw probabilities, validated at [`USER_TOL`].
pub fn entropy_of(probs: &[f64]) -> Result<f64> {
    Pmf::new(probs.to_vec()).map(|p| p.entropy())
}

/// Binary entropy function `h(p)`.
pub fn binary_entropy(p: f64) -> f64 {
    entropy_bits(&[p, 1.0 - p])
}

/// Relative entropy `D(p || q)` in bits. Mass of `p` outside the support of
/// `q` is an error rather than `+inf`.
pub fn kl_divergence(p: &Pmf, q: &Pmf) -> Result<f64> {
    if p.len() != q.len() {
        return invalid("distributions have different alphabets");
    }
    let mut d = 0.0;
    for (&a, &b) in p.probs.iter().zip(&q.probs) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(Error::SupportMismatch { p: a });
        }
        d += a * (a / b).log2();
    }
    Ok(d.max(0.0))
}

/// Binary memoryless channel: `q1 = P(y=0 | x=0)`, `q2 = P(y=1 | x=1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryChannel {
    q1: f64,
    q2: f64,
}

impl BinaryChannel {
    pub fn new(q1: f64, q2: f64) -> Result<Self> {
        for (name, q) in [("q1", q1), ("q2", q2)] {
            if !(0.0..=1.0).contains(&q) {
                return invalid(format!("{name} = {q} outside [0, 1]"));
            }
        }
        Ok(BinaryChannel { q1, q2 })
    }

    /// Binary symmetric channel with crossover probability `p`.
    pub fn symmetric(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return invalid(format!("crossover {p} outside [0, 1]"));
        }
        Ok(BinaryChannel {
            q1: 1.0 - p,
            q2: 1.0 - p,
        })
    }

    pub fn noiseless() -> Self {
        BinaryChannel { q1: 1.0, q2: 1.0 }
    }

    pub fn q1(&self) -> f64 {
        self.q1
    }

    pub fn q2(&self) -> f64 {
        self.q2
    }

    /// `P(y | x)` for `x, y` in `{0, 1}`.
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        match (x, y) {
            (0, 0) => self.q1,
            (0, _) => 1.0 - self.q1,
            (_, 1) => self.q2,
            _ => 1.0 - self.q2,
        }
    }

    /// The output depends on the input, i.e. `|q1 + q2 - 1| > 1e-9`.
    pub fn is_informative(&self) -> bool {
        (self.q1 + self.q2 - 1.0).abs() > 1e-9
    }

    /// Fails with [`Error::ChannelClass`] when the output is independent of the input.
    pub fn require_informative(&self) -> Result<()> {
        if self.is_informative() {
            Ok(())
        } else {
            Err(Error::ChannelClass {
                q1: self.q1,
                q2: self.q2,
            })
        }
    }

    /// `H(Y | X)` for the given input law.
    pub fn noise_entropy(&self, input: &Pmf) -> Result<f64> {
        input.require_binary("channel input")?;
        Ok(input.get(0) * binary_entropy(self.q1) + input.get(1) * binary_entropy(self.q2))
    }
}

/// Output law of `ch` for a binary input law.
pub fn push_through(ch: &BinaryChannel, input: &Pmf) -> Result<Pmf> {
    input.require_binary("channel input")?;
    let out0 = input.get(0) * ch.q1 + input.get(1) * (1.0 - ch.q2);
    Pmf::from_internal(vec![out0, 1.0 - out0])
}

/// `I(X; Y)` in bits for input law `input` sent through `ch`.
pub fn mutual_information(input: &Pmf, ch: &BinaryChannel) -> Result<f64> {
    let out = push_through(ch, input)?;
    let mi = out.entropy() - ch.noise_entropy(input)?;
    Ok(mi.max(0.0))
}

/// Joint distribution over a pair of finite alphabets, stored row-major.
/// Rows index the first variable, columns the second.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    rows: usize,
    cols: usize,
    table: Vec<f64>,
}

impl JointPmf {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(rows, USER_TOL)
    }

    pub fn from_internal(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(rows, INTERNAL_TOL)
    }

    fn build(rows: Vec<Vec<f64>>, tol: f64) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if n_rows == 0 || n_cols == 0 {
            return invalid("empty joint table");
        }
        if rows.iter().any(|r| r.len() != n_cols) {
            return invalid("ragged joint table");
        }
        let flat = Pmf::with_tolerance(rows.into_iter().flatten().collect(), tol)?;
        Ok(JointPmf {
            rows: n_rows,
            cols: n_cols,
            table: flat.probs,
        })
    }

    /// `p(a) * p(b)`.
    pub fn product(a: &Pmf, b: &Pmf) -> Self {
        let table = a
            .probs()
            .iter()
            .flat_map(|&x| b.probs().iter().map(move |&y| x * y))
            .collect();
        JointPmf {
            rows: a.len(),
            cols: b.len(),
            table,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.table[r * self.cols + c]
    }

    pub fn cells(&self) -> &[f64] {
        &self.table
    }

    /// Law of the row variable.
    pub fn row_marginal(&self) -> Pmf {
        let probs = (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c)).sum())
            .collect();
        Pmf { probs }
    }

    /// Law of the column variable.
    pub fn col_marginal(&self) -> Pmf {
        let probs = (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.get(r, c)).sum())
            .collect();
        Pmf { probs }
    }

    /// Conditional law of the row variable given column `c`, `None` if `p(c) = 0`.
    pub fn row_given_col(&self, c: usize) -> Option<Pmf> {
        let pc: f64 = (0..self.rows).map(|r| self.get(r, c)).sum();
        (pc > 0.0).then(|| Pmf {
            probs: (0..self.rows).map(|r| self.get(r, c) / pc).collect(),
        })
    }

    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.table)
    }
}

/// `H(row | col) = H(row, col) - H(col)` in bits.
pub fn conditional_entropy(j: &JointPmf) -> f64 {
    (j.entropy() - j.col_marginal().entropy()).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(entropy(&Pmf::new(vec![0.5, 0.5]).unwrap()), 1.0);
        assert_eq!(entropy(&Pmf::new(vec![1.0, 0.0]).unwrap()), 0.0);
        // h(0.1) = -0.9 log2 0.9 - 0.1 log2 0.1
        let h = -0.9 * (0.9f64).ln() / 2f64.ln() - 0.1 * (0.1f64).ln() / 2f64.ln();
        let got = entropy(&Pmf::new(vec![0.9, 0.1]).unwrap());
        assert_abs_diff_eq!(got, h, epsilon = 1e-15);
        assert_abs_diff_eq!(got, 0.468996, epsilon = 1e-6);
    }

    #[test]
    fn pmf_validation() {
        assert!(Pmf::new(vec![0.5, 0.6]).is_err());
        assert!(Pmf::new(vec![-0.1, 1.1]).is_err());
        assert!(Pmf::new(vec![]).is_err());
        assert!(Pmf::new(vec![f64::NAN, 1.0]).is_err());
        // within the user tolerance, then renormalized
        let p = Pmf::new(vec![0.5, 0.5 + 5e-10]).unwrap();
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(Pmf::from_internal(vec![0.5, 0.5 + 5e-10]).is_err());
        assert!(entropy_of(&[0.3, 0.3]).is_err());
    }

    #[test]
    fn push_through_examples() {
        let input = Pmf::new(vec![0.3, 0.7]).unwrap();
        let out = push_through(&BinaryChannel::noiseless(), &input).unwrap();
        assert_abs_diff_eq!(out.get(0), 0.3, epsilon = 1e-15);
        let half = BinaryChannel::new(0.5, 0.5).unwrap();
        let out = push_through(&half, &input).unwrap();
        assert_abs_diff_eq!(out.get(0), 0.5, epsilon = 1e-15);
        let ch = BinaryChannel::new(0.9, 0.9).unwrap();
        let out = push_through(&ch, &Pmf::point(2, 0)).unwrap();
        assert_abs_diff_eq!(out.get(0), 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(out.get(1), 0.1, epsilon = 1e-15);
        assert!(push_through(&ch, &Pmf::uniform(3)).is_err());
    }

    /// I(X;Y) straight from the joint law: sum p(x,y) log p(x,y) / (p(x) p(y)).
    fn mi_by_enumeration(px: [f64; 2], ch: &BinaryChannel) -> f64 {
        let mut joint = [[0.0; 2]; 2];
        for x in 0..2 {
            for y in 0..2 {
                joint[x][y] = px[x] * ch.prob(x, y);
            }
        }
        let py = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
        let mut mi = 0.0;
        for x in 0..2 {
            for y in 0..2 {
                if joint[x][y] > 0.0 {
                    mi += joint[x][y] * (joint[x][y] / (px[x] * py[y])).log2();
                }
            }
        }
        mi
    }

    #[test]
    fn mutual_information_examples() {
        let u = Pmf::uniform(2);
        assert_abs_diff_eq!(mutual_information(&u, &BinaryChannel::noiseless()).unwrap(), 1.0);
        let ch = BinaryChannel::new(0.7, 0.2).unwrap();
        assert_eq!(mutual_information(&Pmf::point(2, 0), &ch).unwrap(), 0.0);
        let bsc = BinaryChannel::symmetric(0.1).unwrap();
        let got = mutual_information(&u, &bsc).unwrap();
        assert_abs_diff_eq!(got, 1.0 - binary_entropy(0.1), epsilon = 1e-15);
        assert_abs_diff_eq!(got, mi_by_enumeration([0.5, 0.5], &bsc), epsilon = 1e-14);
        assert_abs_diff_eq!(got, 0.531004, epsilon = 1e-6);
    }

    #[test]
    fn conditional_entropy_examples() {
        let indep = JointPmf::product(&Pmf::uniform(2), &Pmf::uniform(2));
        assert_abs_diff_eq!(conditional_entropy(&indep), 1.0, epsilon = 1e-15);
        let coupled = JointPmf::new(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        assert_abs_diff_eq!(conditional_entropy(&coupled), 0.0, epsilon = 1e-15);

        // sum_c p(c) H(row | c), enumerated directly.
        let t = [[0.4, 0.1], [0.2, 0.3]];
        let mut oracle = 0.0;
        for c in 0..2 {
            let pc: f64 = t[0][c] + t[1][c];
            let mut h = 0.0;
            for row in &t {
                let q = row[c] / pc;
                if q > 0.0 {
                    h -= q * q.log2();
                }
            }
            oracle += pc * h;
        }
        let j = JointPmf::new(t.iter().map(|r| r.to_vec()).collect()).unwrap();
        assert_abs_diff_eq!(conditional_entropy(&j), oracle, epsilon = 1e-14);
        assert_abs_diff_eq!(oracle, 0.875489, epsilon = 1e-6);
    }

    #[test]
    fn kl_support_mismatch_is_error() {
        let p = Pmf::uniform(2);
        let q = Pmf::point(2, 0);
        assert!(matches!(kl_divergence(&p, &q), Err(Error::SupportMismatch { .. })));
        assert_eq!(kl_divergence(&q, &p).unwrap(), 1.0);
    }

    #[test]
    fn channel_class() {
        assert!(!BinaryChannel::new(0.3, 0.7).unwrap().is_informative());
        assert!(BinaryChannel::new(0.3, 0.7).unwrap().require_informative().is_err());
        assert!(BinaryChannel::new(1.2, 0.7).is_err());
    }

    fn arb_pmf(max_len: usize) -> impl Strategy<Value = Pmf> {
        prop::collection::vec(0.0f64..1.0, 1..=max_len).prop_filter_map("zero mass", |w| {
            let s: f64 = w.iter().sum();
            (s > 1e-6).then(|| Pmf::new(w.iter().map(|x| x / s).collect()).unwrap())
        })
    }

    proptest! {
        #[test]
        fn entropy_is_bounded(p in arb_pmf(16)) {
            let h = entropy(&p);
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (p.len() as f64).log2() + 1e-12);
        }

        #[test]
        fn mutual_information_nonnegative(p0 in 0.0f64..=1.0, q1 in 0.0f64..=1.0, q2 in 0.0f64..=1.0) {
            let input = Pmf::bernoulli(p0).unwrap();
            let ch = BinaryChannel::new(q1, q2).unwrap();
            let mi = mutual_information(&input, &ch).unwrap();
            prop_assert!(mi >= 0.0);
            prop_assert!((mi - mi_by_enumeration([1.0 - p0, p0], &ch)).abs() < 1e-12);
            let flat = BinaryChannel::new(q1, 1.0 - q1).unwrap();
            prop_assert!(mutual_information(&input, &flat).unwrap() < 1e-12);
        }

        #[test]
        fn push_through_stays_valid(p0 in 0.0f64..=1.0, q1 in 0.0f64..=1.0, q2 in 0.0f64..=1.0) {
            let out = push_through(&BinaryChannel::new(q1, q2).unwrap(), &Pmf::bernoulli(p0).unwrap()).unwrap();
            prop_assert!((out.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn conditioning_reduces_entropy(w in prop::collection::vec(0.0f64..1.0, 4)) {
            let s: f64 = w.iter().sum();
            prop_assume!(s > 1e-6);
            let j = JointPmf::new(vec![vec![w[0] / s, w[1] / s], vec![w[2] / s, w[3] / s]]).unwrap();
            prop_assert!(conditional_entropy(&j) <= j.row_marginal().entropy() + 1e-12);
        }
    }
}
