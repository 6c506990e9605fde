/// Probabilities of the four occupancy states of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellState {
    pub p_static: f32,
    pub p_dynamic: f32,
    pub p_free: f32,
    pub p_unknown: f32,
}

impl Default for CellState {
    fn default() -> Self {
        Self::UNKNOWN
    }
}

impl CellState {
    pub const UNKNOWN: CellState = CellState::new(0.0, 0.0, 0.0, 1.0);
    pub const FREE: CellState = CellState::new(0.0, 0.0, 1.0, 0.0);
    pub const STATIC: CellState = CellState::new(1.0, 0.0, 0.0, 0.0);
    pub const DYNAMIC: CellState = CellState::new(0.0, 1.0, 0.0, 0.0);

    pub const fn new(p_static: f32, p_dynamic: f32, p_free: f32, p_unknown: f32) -> Self {
        Self {
            p_static,
            p_dynamic,
            p_free,
            p_unknown,
        }
    }

    pub fn to_array(self) -> [f32; 4] {
        [self.p_static, self.p_dynamic, self.p_free, self.p_unknown]
    }

    pub fn from_array(a: [f32; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// Sum accumulated in f64.
    pub fn sum(&self) -> f64 {
        self.to_array().iter().map(|&v| v as f64).sum()
    }

    pub fn occupied(&self) -> f32 {
        self.p_static + self.p_dynamic
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.to_array().iter().all(|v| (0.0..=1.0).contains(v)) && (self.sum() - 1.0).abs() <= tol
    }

    /// `(1 - w) * self + w * target`.
    pub fn blend(self, target: CellState, w: f32) -> CellState {
        let a = self.to_array();
        let b = target.to_array();
        CellState::from_array(std::array::from_fn(|i| (1.0 - w) * a[i] + w * b[i]))
    }

    /// Clamps negatives and rescales to unit sum; an all-zero cell becomes unknown.
    pub fn normalized(self) -> CellState {
        let a = self.to_array().map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 });
        let s: f64 = a.iter().map(|&v| v as f64).sum();
        if s <= 1e-12 {
            return CellState::UNKNOWN;
        }
        if s == 1.0 {
            return CellState::from_array(a);
        }
        CellState::from_array(a.map(|v| (v as f64 / s) as f32))
    }

    /// Sets the dynamic mass to `dynamic` and rescales the other three states
    /// to fill the remainder. With nothing to rescale the remainder is unknown.
    pub fn with_dynamic(self, dynamic: f32) -> CellState {
        let d = dynamic.clamp(0.0, 1.0);
        let rest = 1.0 - d as f64;
        let others = self.p_static as f64 + self.p_free as f64 + self.p_unknown as f64;
        if others <= 1e-12 {
            return CellState::new(0.0, d, 0.0, rest as f32);
        }
        let k = rest / others;
        CellState::new(
            (self.p_static as f64 * k) as f32,
            d,
            (self.p_free as f64 * k) as f32,
            (self.p_unknown as f64 * k) as f32,
        )
    }
}
