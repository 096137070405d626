//! Gaussian RBF state features and tabular state-action features.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `exp(-||s - c||^2 / (2 sigma^2))`.
pub fn rbf_kernel(state: &[f64], center: &[f64], bandwidth: f64) -> Result<f64> {
    check_bandwidth(bandwidth)?;
    Ok(kernel(state, center, bandwidth))
}

fn check_bandwidth(bandwidth: f64) -> Result<()> {
    if bandwidth > 0.0 && bandwidth.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("RBF bandwidth must be positive, got {bandwidth}")))
    }
}

#[inline]
fn kernel(state: &[f64], center: &[f64], bandwidth: f64) -> f64 {
    let sq: f64 = state
        .iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    (-sq / (2.0 * bandwidth * bandwidth)).exp()
}

/// Evenly spaced `per_axis x per_axis` lattice on `[lower, upper]^2`,
/// endpoints included. A single point per axis sits at the midpoint.
pub fn grid_centers(lower: f64, upper: f64, per_axis: usize) -> Result<Vec<Vec<f64>>> {
    if per_axis == 0 {
        return Err(Error::config("grid needs at least one point per axis"));
    }
    if !(lower < upper) {
        return Err(Error::config(format!("grid bounds [{lower}, {upper}] are empty")));
    }
    let coord = |i: usize| {
        if per_axis == 1 {
            0.5 * (lower + upper)
        } else {
            lower + (upper - lower) * i as f64 / (per_axis - 1) as f64
        }
    };
    let mut centers = Vec::with_capacity(per_axis * per_axis);
    for i in 0..per_axis {
        for j in 0..per_axis {
            centers.push(vec![coord(i), coord(j)]);
        }
    }
    Ok(centers)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbfFeatureMap {
    dim: usize,
    centers: Vec<f64>,
    bandwidth: f64,
    normalize: bool,
}

impl RbfFeatureMap {
    pub fn new(centers: Vec<Vec<f64>>, bandwidth: f64, normalize: bool) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        let dim = centers
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::config("RBF map needs at least one center"))?;
        if dim == 0 || centers.iter().any(|c| c.len() != dim) {
            return Err(Error::config("RBF centers must share a positive dimension"));
        }
        Ok(Self {
            dim,
            centers: centers.into_iter().flatten().collect(),
            bandwidth,
            normalize,
        })
    }

    /// The navigation default: `per_axis^2` centers on `[-5, 5]^2`.
    pub fn grid(per_axis: usize, bandwidth: f64) -> Result<Self> {
        Self::new(grid_centers(-5.0, 5.0, per_axis)?, bandwidth, true)
    }

    pub fn len(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn normalized(&self) -> bool {
        self.normalize
    }

    pub fn centers(&self) -> impl Iterator<Item = &[f64]> {
        self.centers.chunks_exact(self.dim)
    }

    /// Stacked kernel values, scaled to unit norm when normalization is on.
    ///
    /// Far from every center all kernels can underflow to zero; the vector
    /// is then left as is.
    pub fn features(&self, state: &[f64]) -> DVector<f64> {
        debug_assert_eq!(state.len(), self.dim);
        let mut phi =
            DVector::from_iterator(self.len(), self.centers().map(|c| kernel(state, c, self.bandwidth)));
        if self.normalize {
            let norm = phi.norm();
            if norm > 0.0 {
                phi /= norm;
            }
        }
        phi
    }
}

/// Critic features `phi(s, a)` built from a policy observation and an action.
pub trait CriticFeatures<O, A> {
    fn dim(&self) -> usize;
    fn features(&self, obs: &O, action: &A) -> DVector<f64>;
}

/// How a continuous action enters the critic's features on top of the state
/// features `phi(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionEncoding {
    /// `phi(s, a) = phi(s)`.
    StateOnly,
    /// `phi(s, a) = [phi(s); phi(s) (x) a/||a||] / sqrt(2)`. Unit norm whenever
    /// `phi(s)` is.
    StateDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateActionFeatures {
    pub state_dim: usize,
    pub action_dim: usize,
    pub encoding: ActionEncoding,
}

impl StateActionFeatures {
    pub fn new(state_dim: usize, action_dim: usize, encoding: ActionEncoding) -> Self {
        Self {
            state_dim,
            action_dim,
            encoding,
        }
    }
}

/// `a / ||a||`, or the first basis vector for the zero action.
pub fn unit_direction(action: &DVector<f64>) -> DVector<f64> {
    let norm = action.norm();
    if norm > 0.0 && norm.is_finite() {
        action / norm
    } else {
        let mut e = DVector::zeros(action.len());
        if !e.is_empty() {
            e[0] = 1.0;
        }
        e
    }
}

impl CriticFeatures<DVector<f64>, DVector<f64>> for StateActionFeatures {
    fn dim(&self) -> usize {
        match self.encoding {
            ActionEncoding::StateOnly => self.state_dim,
            ActionEncoding::StateDirection => self.state_dim * (1 + self.action_dim),
        }
    }

    fn features(&self, phi_s: &DVector<f64>, action: &DVector<f64>) -> DVector<f64> {
        match self.encoding {
            ActionEncoding::StateOnly => phi_s.clone(),
            ActionEncoding::StateDirection => {
                let u = unit_direction(action);
                let p = self.state_dim;
                let scale = std::f64::consts::FRAC_1_SQRT_2;
                let mut out = DVector::zeros(self.dim());
                for i in 0..p {
                    out[i] = phi_s[i] * scale;
                }
                for (j, uj) in u.iter().enumerate() {
                    for i in 0..p {
                        out[p * (1 + j) + i] = phi_s[i] * uj * scale;
                    }
                }
                out
            }
        }
    }
}

/// One feature row per `(s, a)` pair of a finite MDP, pairs ordered
/// state-major (`row = s * n_actions + a`).
#[derive(Debug, Clone, PartialEq)]
pub struct TabularFeatureMap {
    n_states: usize,
    n_actions: usize,
    matrix: DMatrix<f64>,
}

impl TabularFeatureMap {
    /// Rejects matrices without full column rank.
    pub fn new(n_states: usize, n_actions: usize, matrix: DMatrix<f64>) -> Result<Self> {
        let map = Self::unchecked(n_states, n_actions, matrix)?;
        let rank = map.matrix.rank(1e-10);
        if rank < map.matrix.ncols() {
            return Err(Error::FeatureRank(format!(
                "rank {rank} < {} feature columns",
                map.matrix.ncols()
            )));
        }
        Ok(map)
    }

    /// Shape check only. Rank-deficient maps are useful for exercising the
    /// oracle's failure paths.
    pub fn unchecked(n_states: usize, n_actions: usize, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != n_states * n_actions || matrix.ncols() == 0 {
            return Err(Error::config(format!(
                "feature matrix is {}x{}, expected {} rows",
                matrix.nrows(),
                matrix.ncols(),
                n_states * n_actions
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            matrix,
        })
    }

    pub fn one_hot(n_states: usize, n_actions: usize) -> Self {
        let n = n_states * n_actions;
        Self {
            n_states,
            n_actions,
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn pair(&self, state: usize, action: usize) -> DVector<f64> {
        self.matrix.row(state * self.n_actions + action).transpose()
    }
}

impl CriticFeatures<usize, usize> for TabularFeatureMap {
    fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    fn features(&self, state: &usize, action: &usize) -> DVector<f64> {
        self.pair(*state, *action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn kernel_values() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.7).unwrap(), 1.0);
        let sigma = 1.3;
        let d = sigma * 2f64.sqrt();
        assert_relative_eq!(
            rbf_kernel(&[d, 0.0], &[0.0, 0.0], sigma).unwrap(),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
        assert_eq!(rbf_kernel(&[1e6, 0.0], &[0.0, 0.0], 1.0).unwrap(), 0.0);
        assert!(rbf_kernel(&[0.0], &[0.0], 0.0).is_err());
        assert!(rbf_kernel(&[0.0], &[0.0], -1.0).is_err());
    }

    #[test]
    fn grid_corners_and_spacing() {
        let g = grid_centers(-5.0, 5.0, 2).unwrap();
        assert_eq!(
            g,
            vec![
                vec![-5.0, -5.0],
                vec![-5.0, 5.0],
                vec![5.0, -5.0],
                vec![5.0, 5.0]
            ]
        );
        let g = grid_centers(-5.0, 5.0, 3).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g[4], vec![0.0, 0.0]);
        let g = grid_centers(-5.0, 5.0, 11).unwrap();
        assert_eq!(g.len(), 121);
        for k in 0..10 {
            assert_relative_eq!(g[(k + 1) * 11][0] - g[k * 11][0], 1.0, epsilon = 1e-12);
            assert_relative_eq!(g[k + 1][1] - g[k][1], 1.0, epsilon = 1e-12);
        }
        assert!(grid_centers(1.0, 1.0, 3).is_err());
        assert!(grid_centers(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn single_center_normalizes_to_one() {
        let map = RbfFeatureMap::new(vec![vec![0.3, -0.2]], 1.0, true).unwrap();
        for s in [[0.0, 0.0], [3.0, 4.0], [-2.0, 1.0]] {
            assert_eq!(map.features(&s).as_slice(), &[1.0]);
        }
    }

    #[test]
    fn tiny_bandwidth_concentrates_on_nearest_center() {
        let map = RbfFeatureMap::new(grid_centers(-5.0, 5.0, 3).unwrap(), 0.05, true).unwrap();
        let phi = map.features(&[5.0, 0.0]);
        // center index 7 is (5, 0)
        assert_relative_eq!(phi[7], 1.0, epsilon = 1e-12);
        assert!(phi.iter().enumerate().all(|(i, v)| i == 7 || *v < 1e-12));
    }

    #[test]
    fn map_rejects_bad_input() {
        assert!(RbfFeatureMap::new(vec![], 1.0, true).is_err());
        assert!(RbfFeatureMap::new(vec![vec![0.0]], 0.0, true).is_err());
        assert!(RbfFeatureMap::new(vec![vec![0.0], vec![0.0, 1.0]], 1.0, true).is_err());
    }

    #[test]
    fn state_direction_features_have_unit_norm() {
        let map = RbfFeatureMap::grid(10, 1.0).unwrap();
        let enc = StateActionFeatures::new(map.len(), 2, ActionEncoding::StateDirection);
        let phi = map.features(&[1.0, -2.0]);
        let psi = enc.features(&phi, &DVector::from_vec(vec![3.0, 4.0]));
        assert_eq!(psi.len(), 300);
        assert_relative_eq!(psi.norm(), 1.0, epsilon = 1e-12);
        // the action block scales the state block by the direction
        assert_relative_eq!(psi[100] / psi[0], 0.6, epsilon = 1e-12);
        assert_relative_eq!(psi[200] / psi[0], 0.8, epsilon = 1e-12);

        let state_only = StateActionFeatures::new(map.len(), 2, ActionEncoding::StateOnly);
        assert_eq!(state_only.features(&phi, &DVector::zeros(2)), phi);
    }

    #[test]
    fn tabular_rank_check() {
        let m = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 0.5]);
        assert!(TabularFeatureMap::new(2, 2, m).is_ok());
        let dup = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 2.0, 0.5, 0.5, 3.0, 3.0]);
        assert!(matches!(
            TabularFeatureMap::new(2, 2, dup),
            Err(Error::FeatureRank(_))
        ));
        assert!(TabularFeatureMap::new(3, 2, DMatrix::zeros(4, 2)).is_err());
        let oh = TabularFeatureMap::one_hot(2, 3);
        assert_eq!(oh.pair(1, 2)[5], 1.0);
        assert_eq!(oh.pair(1, 2).sum(), 1.0);
    }

    proptest! {
        #[test]
        fn normalized_features_have_unit_norm(x in -8.0f64..8.0, y in -8.0f64..8.0) {
            let map = RbfFeatureMap::grid(10, 1.0).unwrap();
            let phi = map.features(&[x, y]);
            prop_assert!((phi.norm() - 1.0).abs() < 1e-12);
            prop_assert!(phi.iter().all(|v| *v > 0.0));
        }

        #[test]
        fn kernel_is_symmetric_and_bounded(
            a in prop::array::uniform2(-5.0f64..5.0),
            b in prop::array::uniform2(-5.0f64..5.0),
            sigma in 0.1f64..3.0,
        ) {
            let k1 = rbf_kernel(&a, &b, sigma).unwrap();
            let k2 = rbf_kernel(&b, &a, sigma).unwrap();
            prop_assert_eq!(k1, k2);
            // far points underflow to exactly zero for narrow kernels
            prop_assert!((0.0..=1.0).contains(&k1));
        }
    }
}
