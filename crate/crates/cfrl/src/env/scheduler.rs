//! Round-robin scheduler over environment variants.
//!
//! Multi-environment training interleaves variants (patient profiles,
//! gravity settings) in rounds of a fixed number of steps each. The trainer
//! asks for the active variant once per step; after the per-round quota is
//! used up, the scheduler rotates to the next variant.

use super::Environment;
use crate::error::{Error, Result};

pub struct EnvScheduler {
    envs: Vec<Box<dyn Environment>>,
    steps_per_round: usize,
    used_in_round: usize,
    current: usize,
}

impl EnvScheduler {
    pub fn new(envs: Vec<Box<dyn Environment>>, steps_per_round: usize) -> Result<Self> {
        if envs.is_empty() {
            return Err(Error::Config("scheduler needs at least one environment".into()));
        }
        if steps_per_round == 0 {
            return Err(Error::Config("steps_per_round must be >= 1".into()));
        }
        Ok(Self { envs, steps_per_round, used_in_round: 0, current: 0 })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor rejects empty pools
    }

    /// Index of the variant that would serve the next step.
    pub fn current_index(&self) -> usize {
        self.current
    }

    /// Claim one step on the active variant and return its index. Rotates to
    /// the next variant once the round quota is exhausted.
    pub fn next_step(&mut self) -> usize {
        let idx = self.current;
        self.used_in_round += 1;
        if self.used_in_round == self.steps_per_round {
            self.used_in_round = 0;
            self.current = (self.current + 1) % self.envs.len();
        }
        idx
    }

    pub fn env_mut(&mut self, idx: usize) -> &mut dyn Environment {
        self.envs[idx].as_mut()
    }

    pub fn env(&self, idx: usize) -> &dyn Environment {
        self.envs[idx].as_ref()
    }

    pub fn envs_mut(&mut self) -> &mut [Box<dyn Environment>] {
        &mut self.envs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{PointMassEnv, PointMassParams};

    fn pool(k: usize) -> Vec<Box<dyn Environment>> {
        (0..k)
            .map(|i| {
                let mut p = PointMassParams::default();
                p.goal = i as f64;
                Box::new(PointMassEnv::new(p).unwrap()) as Box<dyn Environment>
            })
            .collect()
    }

    #[test]
    fn single_variant_never_rotates() {
        let mut s = EnvScheduler::new(pool(1), 3).unwrap();
        for _ in 0..10 {
            assert_eq!(s.next_step(), 0);
        }
    }

    #[test]
    fn three_variants_quota_two_yields_aabbcc() {
        let mut s = EnvScheduler::new(pool(3), 2).unwrap();
        let seq: Vec<usize> = (0..6).map(|_| s.next_step()).collect();
        assert_eq!(seq, vec![0, 0, 1, 1, 2, 2]);
        // And it wraps back around.
        assert_eq!(s.next_step(), 0);
    }

    #[test]
    fn empty_pool_rejected() {
        assert!(EnvScheduler::new(Vec::new(), 5).is_err());
        assert!(EnvScheduler::new(pool(2), 0).is_err());
    }
}
