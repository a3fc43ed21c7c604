use serde::Serialize;

/// Eigenvalue gap below which the eigen closed form of a power is not used.
pub const EIGEN_POW_MIN_GAP: f64 = 1e-8;

/// Real 2x2 matrix `[[a11, a12], [a21, a22]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TwoByTwo {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl TwoByTwo {
    pub const IDENTITY: Self = Self::new(1.0, 0.0, 0.0, 1.0);
    pub const ZERO: Self = Self::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Self { a11, a12, a21, a22 }
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self {
            a11: self.a11 * o.a11 + self.a12 * o.a21,
            a12: self.a11 * o.a12 + self.a12 * o.a22,
            a21: self.a21 * o.a11 + self.a22 * o.a21,
            a22: self.a21 * o.a12 + self.a22 * o.a22,
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(
            self.a11 + o.a11,
            self.a12 + o.a12,
            self.a21 + o.a21,
            self.a22 + o.a22,
        )
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(c * self.a11, c * self.a12, c * self.a21, c * self.a22)
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// `(a11 - a22)^2 + 4 a12 a21`, the squared eigenvalue gap.
    pub fn discriminant(&self) -> f64 {
        let s = self.a11 - self.a22;
        s * s + 4.0 * self.a12 * self.a21
    }

    /// Real eigenvalues `(lambda1, lambda2)` with `lambda1 >= lambda2`, or
    /// `None` for a complex pair.
    pub fn eigenvalues(&self) -> Option<(f64, f64)> {
        let disc = self.discriminant();
        if disc < 0.0 {
            return None;
        }
        let gap = disc.sqrt();
        let t = self.trace();
        Some((0.5 * (t + gap), 0.5 * (t - gap)))
    }

    /// `M^l` by binary exponentiation.
    pub fn pow(&self, mut l: u64) -> Self {
        let mut result = Self::IDENTITY;
        let mut base = *self;
        while l > 0 {
            if l & 1 == 1 {
                result = result.mul(&base);
            }
            l >>= 1;
            if l > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// `M^l = (l1^l (M - l2 I) - l2^l (M - l1 I)) / (l1 - l2)`; `None` when the
    /// eigenvalues are complex or closer than [`EIGEN_POW_MIN_GAP`].
    pub fn pow_eigen(&self, l: u64) -> Option<Self> {
        let (l1, l2) = self.eigenvalues()?;
        let gap = l1 - l2;
        if gap <= EIGEN_POW_MIN_GAP {
            return None;
        }
        let e = l as i32;
        let p1 = l1.powi(e);
        let p2 = l2.powi(e);
        let shift = |lam: f64| Self::new(self.a11 - lam, self.a12, self.a21, self.a22 - lam);
        Some(
            shift(l2)
                .scale(p1)
                .add(&shift(l1).scale(-p2))
                .scale(1.0 / gap),
        )
    }
}

/// `[[A, X], [0, A]]^l` as the pair `(A^l, X_l)` with
/// `X_l = sum_{j<l} A^j X A^{l-1-j}`.
pub fn block_pow(a: &TwoByTwo, x: &TwoByTwo, mut l: u64) -> (TwoByTwo, TwoByTwo) {
    let mul = |(a1, x1): (TwoByTwo, TwoByTwo), (a2, x2): (TwoByTwo, TwoByTwo)| {
        (a1.mul(&a2), a1.mul(&x2).add(&x1.mul(&a2)))
    };
    let mut result = (TwoByTwo::IDENTITY, TwoByTwo::ZERO);
    let mut base = (*a, *x);
    while l > 0 {
        if l & 1 == 1 {
            result = mul(result, base);
        }
        l >>= 1;
        if l > 0 {
            base = mul(base, base);
        }
    }
    result
}

/// `S_N = sum_{k=0}^{N-1} l1^k l2^(N-1-k)`, i.e. `(l1^N - l2^N)/(l1 - l2)`, with
/// a direct evaluation for nearly equal arguments.
pub fn cross_power_sum(l1: f64, l2: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if (l1 - l2).abs() < EIGEN_POW_MIN_GAP {
        return TwoByTwo::new(l1, 1.0, 0.0, l2).pow(n).a12;
    }
    let e = n as i32;
    (l1.powi(e) - l2.powi(e)) / (l1 - l2)
}
