/// Coarse control lattice spanning a voxel grid corner to corner.
///
/// Control point `c` on an axis with `m` points sits at voxel coordinate
/// `c · (n − 1) / (m − 1)`; values in between are trilinearly interpolated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ControlLattice {
    pub control: [usize; 3],
    pub target: [usize; 3],
}

impl ControlLattice {
    pub fn new(control: [usize; 3], target: [usize; 3]) -> Self {
        ControlLattice {
            control: [0, 1, 2].map(|a| control[a].max(1)),
            target,
        }
    }

    pub fn len(&self) -> usize {
        self.control.iter().product()
    }

    #[inline]
    fn axis(&self, a: usize, i: usize) -> (usize, usize, f64) {
        let m = self.control[a];
        let n = self.target[a];
        if m == 1 || n <= 1 {
            return (0, 0, 0.0);
        }
        let t = i as f64 * (m - 1) as f64 / (n - 1) as f64;
        let lo = (t.floor() as usize).min(m - 1);
        let hi = (lo + 1).min(m - 1);
        (lo, hi, t - lo as f64)
    }

    /// Eight (control index, weight) pairs for one target voxel.
    #[inline]
    pub fn weights(&self, v: [usize; 3]) -> [(usize, f64); 8] {
        let (x0, x1, fx) = self.axis(0, v[0]);
        let (y0, y1, fy) = self.axis(1, v[1]);
        let (z0, z1, fz) = self.axis(2, v[2]);
        let [mx, my, _] = self.control;
        let idx = |x: usize, y: usize, z: usize| x + mx * (y + my * z);
        [
            (idx(x0, y0, z0), (1.0 - fx) * (1.0 - fy) * (1.0 - fz)),
            (idx(x1, y0, z0), fx * (1.0 - fy) * (1.0 - fz)),
            (idx(x0, y1, z0), (1.0 - fx) * fy * (1.0 - fz)),
            (idx(x1, y1, z0), fx * fy * (1.0 - fz)),
            (idx(x0, y0, z1), (1.0 - fx) * (1.0 - fy) * fz),
            (idx(x1, y0, z1), fx * (1.0 - fy) * fz),
            (idx(x0, y1, z1), (1.0 - fx) * fy * fz),
            (idx(x1, y1, z1), fx * fy * fz),
        ]
    }

    pub fn interpolate(&self, values: &[f64], v: [usize; 3]) -> f64 {
        self.weights(v)
            .iter()
            .map(|&(c, w)| if w == 0.0 { 0.0 } else { w * values[c] })
            .sum()
    }
}
