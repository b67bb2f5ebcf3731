"""Context-aware scene classification: synthetic data, training, evaluation and block mapping."""

import json

from . import _catnet
from ._catnet import CatnetError, balanced_accuracy, bucket_categories, overall_accuracy

__all__ = [
    "CatnetError",
    "balanced_accuracy",
    "bayes_center_accuracy",
    "bucket_categories",
    "evaluate",
    "generate_dataset",
    "gradient_check",
    "map_region",
    "metric_report",
    "overall_accuracy",
    "parameter_count",
    "predict",
    "profile_config",
    "render_sample",
    "score_map",
    "train",
]


def _kv(spec):
    # generator options use the same key = value strings as the config files
    out = {}
    for k, v in (spec or {}).items():
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, (list, tuple)):
            v = ";".join(",".join(map(str, g)) for g in v) if v and isinstance(v[0], (list, tuple)) else ",".join(map(str, v))
        out[k] = str(v)
    return out


def _dump(obj):
    return "" if obj is None else json.dumps(obj)


def profile_config(name="toy"):
    return json.loads(_catnet.profile_config(name))


def parameter_count(model_config):
    """(total, single-branch backbone) parameter counts for a model config dict."""
    return _catnet.parameter_count(json.dumps(model_config))


def metric_report(preds, labels, num_classes, train_counts=None):
    return json.loads(_catnet.metric_report(list(preds), list(labels), num_classes, dict(train_counts or {})))


def bayes_center_accuracy(spec=None):
    return _catnet.bayes_center_accuracy(_kv(spec))


def render_sample(cls, spec=None, noise_seed=0):
    """(center, surrounding, global) uint8 arrays of one synthetic scene."""
    return _catnet.render_sample(_kv(spec), cls, noise_seed)


def generate_dataset(out_dir, spec=None, split=True):
    return _catnet.generate_dataset(_kv(spec), str(out_dir), split)


def train(data, checkpoint, config=None):
    return json.loads(_catnet.train(str(data), str(checkpoint), _dump(config)))


def evaluate(checkpoint, data, split="test"):
    return json.loads(_catnet.evaluate(str(checkpoint), str(data), split))


def predict(checkpoint, center, surrounding, global_view):
    """(predicted class, class distribution) for one scene given as three H x W x 3 arrays."""
    return _catnet.predict(str(checkpoint), center, surrounding, global_view)


def gradient_check(config=None, max_coordinates=0, seed=1):
    """(max relative error, coordinates checked, passed)."""
    return _catnet.gradient_check(_dump(config), max_coordinates, seed)


def map_region(checkpoint, raster, block, remap=None):
    return json.loads(_catnet.map_region(str(checkpoint), raster, block, _dump(remap)))


def score_map(block_map, annotations):
    return json.loads(_catnet.score_map(json.dumps(block_map), json.dumps(annotations)))
