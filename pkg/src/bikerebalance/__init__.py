"""Multi-agent tabular Q-learning for bike-station rebalancing."""

from bikerebalance.agent import DEFAULT_ACTIONS, AgentConfig, Experience, QAgent, QTable, choose_action, download, learn, upload
from bikerebalance.env import (
    FlowSchedule,
    StationConfig,
    StationEnv,
    StationState,
    StepFeedback,
    generate_flows,
    generate_network_flows,
    reset,
    reward_for_hour,
    step,
)
from bikerebalance.knowledge import KnowledgePacket, Repository, load_knowledge, save_knowledge
from bikerebalance.metrics import EpisodeRecord, SessionSummary
from bikerebalance.orchestrator import SessionConfig, SessionResult, run_benchmark, run_session

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "DEFAULT_ACTIONS",
    "EpisodeRecord",
    "Experience",
    "FlowSchedule",
    "KnowledgePacket",
    "QAgent",
    "QTable",
    "Repository",
    "SessionConfig",
    "SessionResult",
    "SessionSummary",
    "StationConfig",
    "StationEnv",
    "StationState",
    "StepFeedback",
    "choose_action",
    "download",
    "generate_flows",
    "generate_network_flows",
    "learn",
    "load_knowledge",
    "reset",
    "reward_for_hour",
    "run_benchmark",
    "run_session",
    "save_knowledge",
    "step",
    "upload",
]
