import numpy as np

from btboot.dataset import Panel, Series


def make_panel(data, covariate_names=(), starts=None):
    """``{id: y}`` or ``{id: (y, X)}`` -> Panel."""
    series = []
    for sid, v in data.items():
        y, X = v if isinstance(v, tuple) else (v, np.zeros((len(v), len(covariate_names))))
        series.append(Series(sid, (starts or {}).get(sid, 0), np.asarray(y, float), np.asarray(X, float)))
    return Panel(tuple(series), tuple(covariate_names))


def make_collection(eps, h=None, forecast=None, extra=None, provenance=None):
    """Residual collection with synthetic meta; ``j`` counts records, ``t = j + h``."""
    from btboot.backtest import ResidualCollection

    eps = np.asarray(eps, float)
    n = len(eps)
    h = np.ones(n, np.int64) if h is None else np.asarray(h, np.int64)
    j = np.arange(n, dtype=np.int64)
    f = np.full(n, 10.0) if forecast is None else np.asarray(forecast, float)
    return ResidualCollection(eps, np.full(n, "s", dtype=object), j, j + h, h, f, f + eps,
                              extra=extra, provenance=provenance or {})
