//! PPO training of feed-forward and recurrent controllers.

pub mod buffer;
pub mod checkpoint;
pub mod env;
pub mod net;
pub mod policy;
pub mod ppo;

pub use buffer::{RolloutBuffer, Transition};
pub use env::{
    decode_state_observation, encode_observation, encode_outcome_observation, encode_state_observation,
    mb_db_reward, qomdp_reward, EnvKind, EnvStep, Environment, RewardTiming, ScenarioEnv,
};
pub use policy::{
    ActorCritic, Architecture, DistParams, Evaluation, LossCoefficients, LossStats, Objective, RawAction,
    RecurrentState, SampleStep, Sequence,
};
pub use ppo::{
    params_checksum, ppo_update, train, train_env, Adam, AgentKind, PpoConfig, RolloutData, TrainingOutcome,
    UpdateRecord,
};
