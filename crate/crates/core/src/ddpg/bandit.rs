use super::{EnvStep, Environment};
use crate::error::{Error, Result};

/// One-dimensional bandit with reward `−(a − a*)²` and a constant state.
#[derive(Debug, Clone)]
pub struct QuadraticBandit {
    pub optimum: f64,
    pub bound: f64,
    last_action: f64,
}

impl QuadraticBandit {
    pub fn new(optimum: f64, bound: f64) -> Result<Self> {
        if !(bound > 0.0) || optimum.abs() > bound {
            return Err(Error::Config(format!("optimum {optimum} must lie within the bound {bound}")));
        }
        Ok(Self { optimum, bound, last_action: 0.0 })
    }

    pub fn reward_at(&self, a: f64) -> f64 {
        -(a - self.optimum).powi(2)
    }
}

impl Environment for QuadraticBandit {
    type Snapshot = f64;

    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_bound(&self) -> f64 {
        self.bound
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        Ok(vec![1.0])
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep> {
        let a = action.first().copied().ok_or_else(|| Error::Dimension("empty action".into()))?;
        self.last_action = a;
        let r = self.reward_at(a);
        Ok(EnvStep { next_state: vec![1.0], reward: r, done: false, rate: r, min_slack: f64::INFINITY })
    }

    fn snapshot(&self) -> f64 {
        self.last_action
    }

    fn current_reward(&self) -> Result<f64> {
        Ok(self.reward_at(self.last_action))
    }
}
