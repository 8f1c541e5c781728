"""Fill-time and deflection surrogate for injection moulded parts."""

import json as _json

from . import _core
from ._core import (
    DeflectionNet,
    FillTimeModel,
    GbmModel,
    Mesh,
    Projection,
    Sample,
    build_network,
    fit_gbm,
    fit_plane,
    geodesic_distances,
    load_dataset,
    load_mesh,
    load_weights,
    parse_mesh,
    project,
)

POINT_COLUMNS = ("fold", "sample", "vertex", "true_fill", "pred_fill", "true_deflection", "pred_deflection")


def _dump(config):
    return _json.dumps(config or {})


def synth_generate(config=None):
    return _core.synth_generate(_dump(config))


def train_fill_time(samples, config=None, seed=0):
    return _core.train_fill_time(list(samples), _dump(config), seed)


def train_deflection(samples, fill_model, config=None, seed=0):
    """Returns the trained network and the per-epoch loss."""
    return _core.train_deflection(list(samples), fill_model, _dump(config), seed)


def predict(fill_model, net, mesh, gates, seed=0, deflection=True):
    """`gates` is a gates document (dict) or its JSON text."""
    text = gates if isinstance(gates, str) else _json.dumps(gates)
    return _core.predict(fill_model, net, mesh, text, seed, deflection)


def crossvalidate(samples, folds=5, config=None, seed=0):
    """Returns the report dict and an (n, 7) point table, see POINT_COLUMNS."""
    report, points = _core.crossvalidate(list(samples), folds, _dump(config), seed)
    return _json.loads(report), points
