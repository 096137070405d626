//! Point agent navigating around a disc-shaped obstacle to a target.
//!
//! Free space is the closed annulus `inner <= ||s|| <= outer`. Every action
//! moves the agent a fixed distance along the action's heading; leaving the
//! free space is allowed but costs `-11` per step.

use nalgebra::DVector;
use rand::Rng;

use crate::env::{check_discount, Environment};
use crate::error::{Error, Result};

pub const OBSTACLE_REWARD: f64 = -11.0;
pub const TARGET_REWARD: f64 = -0.1;
pub const STEP_REWARD: f64 = -1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct NavConfig {
    pub start: [f64; 2],
    pub target: [f64; 2],
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub step_length: f64,
    pub target_tolerance: f64,
    pub gamma: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            start: [2.0, 2.0],
            target: [-2.0, -2.0],
            inner_radius: 0.5,
            outer_radius: 4.0,
            step_length: 0.5,
            target_tolerance: 0.5,
            gamma: 0.9,
        }
    }
}

impl NavConfig {
    pub fn validate(&self) -> Result<()> {
        check_discount(self.gamma)?;
        if !(0.0 < self.inner_radius && self.inner_radius < self.outer_radius) {
            return Err(Error::config(format!(
                "need 0 < inner ({}) < outer ({})",
                self.inner_radius, self.outer_radius
            )));
        }
        if !(self.step_length > 0.0) || !(self.target_tolerance > 0.0) {
            return Err(Error::config("step length and target tolerance must be positive"));
        }
        // the target ball must sit inside the free space so that the obstacle
        // and target reward cases never overlap
        let t = norm(&self.target);
        if t - self.target_tolerance < self.inner_radius || t + self.target_tolerance > self.outer_radius {
            return Err(Error::config("target tolerance ball leaves the free space"));
        }
        Ok(())
    }

    pub fn in_free_space(&self, s: &[f64]) -> bool {
        let r = norm(s);
        r >= self.inner_radius && r <= self.outer_radius
    }

    /// Reward for landing on `next`. The obstacle case takes precedence.
    pub fn reward(&self, next: &[f64]) -> f64 {
        if !self.in_free_space(next) {
            OBSTACLE_REWARD
        } else if dist(next, &self.target) < self.target_tolerance {
            TARGET_REWARD
        } else {
            STEP_REWARD
        }
    }

    pub fn step(&self, s: &[f64], a: &[f64]) -> DVector<f64> {
        nav_step(s, a, self.step_length)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `s + step * a / ||a||`; a zero action moves along the first axis.
pub fn nav_step(s: &[f64], a: &[f64], step_length: f64) -> DVector<f64> {
    let n = norm(a);
    let mut next = DVector::from_column_slice(s);
    if n > 0.0 && n.is_finite() {
        for (x, ai) in next.iter_mut().zip(a) {
            *x += step_length * ai / n;
        }
    } else {
        next[0] += step_length;
    }
    next
}

pub fn in_free_space(s: &[f64]) -> bool {
    NavConfig::default().in_free_space(s)
}

pub fn nav_reward(next: &[f64], cfg: &NavConfig) -> f64 {
    cfg.reward(next)
}

#[derive(Debug, Clone)]
pub struct NavEnv {
    cfg: NavConfig,
}

impl NavEnv {
    pub fn new(cfg: NavConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &NavConfig {
        &self.cfg
    }
}

impl Environment for NavEnv {
    type State = DVector<f64>;
    type Action = DVector<f64>;

    fn discount(&self) -> f64 {
        self.cfg.gamma
    }

    fn reward_bound(&self) -> f64 {
        OBSTACLE_REWARD.abs()
    }

    fn start_state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.cfg.start)
    }

    fn transition<R: Rng + ?Sized>(
        &self,
        s: &DVector<f64>,
        a: &DVector<f64>,
        _rng: &mut R,
    ) -> (DVector<f64>, f64) {
        let next = self.cfg.step(s.as_slice(), a.as_slice());
        let r = self.cfg.reward(next.as_slice());
        (next, r)
    }
}
