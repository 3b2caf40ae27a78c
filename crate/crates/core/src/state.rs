use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

/// Number of conserved components: ρ, ρu, ρw, ρθ.
pub const NVAR: usize = 4;

/// Conserved variables at a point. Perturbation states share the type and
/// may have any sign.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConservedState {
    pub rho: f64,
    pub rho_u: f64,
    pub rho_w: f64,
    pub rho_theta: f64,
}

impl ConservedState {
    pub const ZERO: Self = Self::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(rho: f64, rho_u: f64, rho_w: f64, rho_theta: f64) -> Self {
        Self {
            rho,
            rho_u,
            rho_w,
            rho_theta,
        }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }

    pub fn to_array(self) -> [f64; NVAR] {
        [self.rho, self.rho_u, self.rho_w, self.rho_theta]
    }

    pub fn write_to(self, s: &mut [f64]) {
        s[..NVAR].copy_from_slice(&self.to_array());
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl Index<usize> for ConservedState {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.rho,
            1 => &self.rho_u,
            2 => &self.rho_w,
            3 => &self.rho_theta,
            _ => panic!("component index {i} out of range"),
        }
    }
}

impl IndexMut<usize> for ConservedState {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        match i {
            0 => &mut self.rho,
            1 => &mut self.rho_u,
            2 => &mut self.rho_w,
            3 => &mut self.rho_theta,
            _ => panic!("component index {i} out of range"),
        }
    }
}

impl Add for ConservedState {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(
            self.rho + o.rho,
            self.rho_u + o.rho_u,
            self.rho_w + o.rho_w,
            self.rho_theta + o.rho_theta,
        )
    }
}

impl Sub for ConservedState {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(
            self.rho - o.rho,
            self.rho_u - o.rho_u,
            self.rho_w - o.rho_w,
            self.rho_theta - o.rho_theta,
        )
    }
}

impl Mul<f64> for ConservedState {
    type Output = Self;
    fn mul(self, a: f64) -> Self {
        Self::new(self.rho * a, self.rho_u * a, self.rho_w * a, self.rho_theta * a)
    }
}

impl Mul<ConservedState> for f64 {
    type Output = ConservedState;
    fn mul(self, s: ConservedState) -> ConservedState {
        s * self
    }
}

impl Neg for ConservedState {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl AddAssign for ConservedState {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl SubAssign for ConservedState {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}
