"""Shared numerical experiments used by more than one test module."""
import numpy as np

from apmcf.ambient import AmbientMetric
from apmcf.flow import FlowConfig, evaluate, stable_dt, step
from apmcf.grid import make_grid
from apmcf.surface import RadialGraph

EUC = AmbientMetric.euclidean()


def one_step_area_errors(n=16, factors=(2.0, 1.0, 0.5)):
    """Temporal error of the area after one step, against 16 substeps over the same interval."""
    g = make_grid(n)
    s = RadialGraph(1 + 0.1 * g.harmonic(2, 0) + 0.05 * g.harmonic(3, 1), g)
    cfg = FlowConfig()
    st0 = evaluate(0.0, s, EUC, cfg)
    dt0 = stable_dt(st0, cfg)

    def advance(T, k):
        cur = st0
        for _ in range(k):
            cur, _ = step(cur, cfg, dt=T / k)
        return cur.terms.area

    return np.array([abs(advance(f * dt0, 1) - advance(f * dt0, 16)) for f in factors])
