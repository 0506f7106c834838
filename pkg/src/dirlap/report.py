import json
import time
from dataclasses import dataclass, field, asdict


def _plain(v):
    # numpy scalars and arrays -> builtin types
    if hasattr(v, "tolist"):
        return v.tolist()
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


@dataclass
class SolveReport:
    """Summary returned next to every solver result."""

    iterations: int = 0
    residual: float = 0.0
    tol: float = 0.0
    wall_time: float = 0.0
    method: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return _plain(asdict(self))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


class Timer:
    def __init__(self):
        self.t0 = time.perf_counter()

    def elapsed(self):
        return time.perf_counter() - self.t0
