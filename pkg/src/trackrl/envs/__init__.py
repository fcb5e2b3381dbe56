from trackrl.envs import cliff, maps, river, spline
from trackrl.envs.cliff import CliffCircularEnv
from trackrl.envs.core import EnvSpec, EpisodeDoneError, StepResult, TimeLimit, TrackEnv
from trackrl.envs.maps import RiverMap, default_map, load_map, save_map
from trackrl.envs.river import RiverConfig, RiverEnv

ENV_IDS = ("cliff", "river")


def make_env(env_id: str, map_path: str | None = None, time_limit: int | None = None) -> TimeLimit:
    """Construct a time-limited environment by id ('cliff' or 'river')."""
    if env_id == "cliff":
        return TimeLimit(CliffCircularEnv(), time_limit or cliff.TIME_LIMIT)
    if env_id == "river":
        cfg = RiverConfig(river_map=load_map(map_path)) if map_path else RiverConfig()
        return TimeLimit(RiverEnv(cfg), time_limit or river.TIME_LIMIT)
    raise ValueError(f"unknown env id {env_id!r}; expected one of {ENV_IDS}")


__all__ = [
    "CliffCircularEnv", "RiverEnv", "RiverConfig", "RiverMap",
    "EnvSpec", "StepResult", "TimeLimit", "TrackEnv", "EpisodeDoneError",
    "make_env", "default_map", "load_map", "save_map", "ENV_IDS",
    "cliff", "river", "spline", "maps",
]
