"""Track-following RL+IL toolkit.

Two self-contained POMDP track-following environments (a 12x12 circular
cliff grid world and a geometric spline river), a minimal numpy neural
stack, PPO with generalized advantage estimation, behavior cloning, and
an orchestrator that interleaves PPO training with online retraining of
the cloning expert on harvested high-reward trajectories.
"""

__version__ = "0.1.0"

from trackrl.envs import CliffCircularEnv, RiverEnv, TimeLimit, make_env

__all__ = ["CliffCircularEnv", "RiverEnv", "TimeLimit", "make_env", "__version__"]
