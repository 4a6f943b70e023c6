//! Model parameters and partial overrides layered from scenario files and flags.

use serde::{Deserialize, Serialize};

use crate::intent::{FilterKind, HmmParams, IntentError};
use crate::planner::{PlannerError, PlannerParams, RewardFloor};

/// Every tunable of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelConfig {
    pub planner: PlannerParams,
    pub hmm: HmmParams,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Hmm(#[from] IntentError),
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.planner.validate()?;
        self.hmm.validate()?;
        Ok(())
    }

    pub fn with(mut self, overrides: &ParamOverrides) -> Self {
        overrides.apply(&mut self);
        self
    }
}

/// Optional replacements for individual parameters. Field names are the
/// keys accepted in a scenario's `[params]` table.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub eps_move: Option<f64>,
    pub eps_reward: Option<f64>,
    pub eps_astar: Option<f64>,
    pub fov_half_angle: Option<f64>,
    pub reward_floor: Option<RewardFloor>,
    pub max_sweeps: Option<usize>,
    pub hmm_alpha: Option<f64>,
    pub hmm_beta: Option<f64>,
    pub hmm_gamma: Option<f64>,
    pub hmm_delta: Option<f64>,
    pub c_rational: Option<f64>,
    pub c_unknown: Option<f64>,
    pub phi_threshold: Option<f64>,
    pub phi_window: Option<usize>,
    pub filter: Option<FilterKind>,
}

impl ParamOverrides {
    pub fn apply(&self, cfg: &mut ModelConfig) {
        fn set<T: Copy>(slot: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *slot = v;
            }
        }
        let p = &mut cfg.planner;
        set(&mut p.gamma, self.gamma);
        set(&mut p.eta, self.eta);
        set(&mut p.eps_move, self.eps_move);
        set(&mut p.eps_reward, self.eps_reward);
        set(&mut p.eps_astar, self.eps_astar);
        set(&mut p.fov_half_angle, self.fov_half_angle);
        set(&mut p.reward_floor, self.reward_floor);
        set(&mut p.max_sweeps, self.max_sweeps);
        let h = &mut cfg.hmm;
        set(&mut h.alpha, self.hmm_alpha);
        set(&mut h.beta, self.hmm_beta);
        set(&mut h.gamma, self.hmm_gamma);
        set(&mut h.delta, self.hmm_delta);
        set(&mut h.c_rational, self.c_rational);
        set(&mut h.c_unknown, self.c_unknown);
        set(&mut h.phi_threshold, self.phi_threshold);
        set(&mut h.phi_window, self.phi_window);
        set(&mut h.filter, self.filter);
    }

    /// `other`'s values win where both are set.
    pub fn merged(mut self, other: &ParamOverrides) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            gamma,
            eta,
            eps_move,
            eps_reward,
            eps_astar,
            fov_half_angle,
            reward_floor,
            max_sweeps,
            hmm_alpha,
            hmm_beta,
            hmm_gamma,
            hmm_delta,
            c_rational,
            c_unknown,
            phi_threshold,
            phi_window,
            filter
        );
        self
    }
}
