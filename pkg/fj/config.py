import logging
import os
from dataclasses import dataclass, replace

FRESH_SEED_ENV = "COCOFJ_FRESH_SEED"


@dataclass(frozen=True)
class CheckerOptions:
    """
    Switches of the co-contextual checker.

    Args:
        in_depth_merge: Combine requirements on the same receiver whose conditions
            differ at most in their ground alternatives
        normalize: Prune requirements as soon as their condition is unsatisfiable
        fresh_seed: First class variable id handed out by a session
    """
    in_depth_merge: bool = True
    normalize: bool = True
    fresh_seed: int = 0

    def __post_init__(self):
        # in-depth merging compares normalized conditions
        if self.in_depth_merge and not self.normalize:
            object.__setattr__(self, "in_depth_merge", False)

    @classmethod
    def from_env(cls, **overrides) -> "CheckerOptions":
        seed = 0
        raw = os.environ.get(FRESH_SEED_ENV)
        if raw:
            try:
                seed = int(raw)
            except ValueError:
                logging.getLogger(__name__).warning(f"Ignoring non-integer {FRESH_SEED_ENV}={raw!r}")
        return replace(cls(fresh_seed=seed), **overrides)
