"""Learners (PPO, DQN) and agent wiring over combiner representations."""
from .agent import (AGENT_KINDS, BASELINES, Agent, AgentSpec, CombinerFeatures, E2EFeatures, PolicyValueHead,
                    QHead, build_agent, log_softmax_np, sample_categorical)
from .buffers import ReplayBuffer, RolloutBuffer, concat_stored, gae_compute, normalize_advantages, take_stored
from .dqn import DQNConfig, DQNTrainer, dqn_loss, dqn_update, make_target, sync_target, td_targets
from .evaluate import EVAL_SEEDS, EvalResult, episode_seeds, evaluate_policy
from .ppo import PPOConfig, PPOTrainer, ppo_loss, ppo_update

__all__ = ["AGENT_KINDS", "BASELINES", "Agent", "AgentSpec", "CombinerFeatures", "E2EFeatures",
           "PolicyValueHead", "QHead", "build_agent", "log_softmax_np", "sample_categorical",
           "ReplayBuffer", "RolloutBuffer", "concat_stored", "gae_compute", "normalize_advantages",
           "take_stored", "DQNConfig", "DQNTrainer", "dqn_loss", "dqn_update", "make_target",
           "sync_target", "td_targets", "EVAL_SEEDS", "EvalResult", "episode_seeds", "evaluate_policy",
           "PPOConfig", "PPOTrainer", "ppo_loss", "ppo_update"]
