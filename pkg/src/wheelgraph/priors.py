"""Gaussian mixture priors over log distance ratios.

Two mixtures are fit from ground-truth pairings: one over wheel-vehicle
pairs and one over wheel-wheel (front/rear) couples. Their densities seed
the edge weights of the relation graph.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    FormatError,
    InsufficientDataError,
    InvalidParameterError,
)
from .geometry import BoxClass, distance_ratio, log_ratio, normalized_distance

VARIANCE_FLOOR = 1e-6

PRIORS_MAGIC = "wheelgraph-priors"
PRIORS_VERSION = "v1"


@dataclass(frozen=True)
class GaussianMixture:
    """K-component 1-D mixture; weights sum to 1, variances floored positive."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        means = np.asarray(self.means, dtype=np.float64)
        variances = np.asarray(self.variances, dtype=np.float64)
        if not (weights.shape == means.shape == variances.shape) or weights.ndim != 1:
            raise InvalidParameterError("mixture parameter arrays must be 1-D and aligned")
        if weights.size == 0:
            raise InvalidParameterError("mixture needs at least one component")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise InvalidParameterError(f"weights must be non-negative and sum to 1: {weights}")
        if np.any(variances <= 0):
            raise InvalidParameterError(f"variances must be positive: {variances}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def k(self):
        return self.weights.size


@dataclass(frozen=True)
class PriorModel:
    """Fitted mixtures for wheel-vehicle (wv) and wheel-wheel (ww) log ratios."""

    wv: GaussianMixture
    ww: GaussianMixture


def front_wheel(a, b):
    """The front wheel of a couple: smaller x-center, ties broken by id."""
    ax, _ = a.center()
    bx, _ = b.center()
    return a if (ax, a.id) < (bx, b.id) else b


def pair_log_ratio(a, b, width, height):
    """Log distance ratio of a pair, with `b` supplying the size normalizer.

    Returns None for coincident centers, which carry no usable ratio.
    """
    d = normalized_distance(a, b, width, height)
    if d == 0.0:
        return None
    return log_ratio(distance_ratio(d, b, width, height))


def collect_pair_stats(scenes):
    """Log-ratio samples of every ground-truth pair across `scenes`.

    Wheel-vehicle pairs are normalized by the wheel's size; wheel-wheel
    couples by the front wheel's. Coincident-center pairs are dropped.
    """
    wv_samples = []
    ww_samples = []
    for scene in scenes:
        for wheel_id, vehicle_id in sorted(scene.gt_wheel_vehicle.items()):
            sample = pair_log_ratio(
                scene.box(vehicle_id), scene.box(wheel_id), scene.width, scene.height
            )
            if sample is not None:
                wv_samples.append(sample)
        for couple in sorted(scene.gt_wheel_wheel, key=sorted):
            first, second = (scene.box(i) for i in sorted(couple))
            front = front_wheel(first, second)
            rear = second if front is first else first
            sample = pair_log_ratio(rear, front, scene.width, scene.height)
            if sample is not None:
                ww_samples.append(sample)
    return wv_samples, ww_samples


def _log_component_densities(m, x):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    diff = x[:, None] - m.means[None, :]
    return -0.5 * (np.log(2.0 * np.pi * m.variances)[None, :] + diff * diff / m.variances[None, :])


def pdf(m, x):
    """Mixture density at `x` (scalar or array)."""
    log_dens = _log_component_densities(m, x) + np.log(m.weights)[None, :]
    peak = log_dens.max(axis=1, keepdims=True)
    out = np.exp(peak[:, 0] + np.log(np.exp(log_dens - peak).sum(axis=1)))
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(out[0])
    return out


def _mean_log_likelihood(m, samples):
    log_dens = _log_component_densities(m, samples) + np.log(m.weights)[None, :]
    peak = log_dens.max(axis=1, keepdims=True)
    return float(np.mean(peak[:, 0] + np.log(np.exp(log_dens - peak).sum(axis=1))))


def _quantile_init(samples, k):
    order = np.sort(samples)
    groups = np.array_split(order, k)
    means = np.array([g.mean() for g in groups])
    variances = np.array([max(g.var(), VARIANCE_FLOOR) for g in groups])
    weights = np.full(k, 1.0 / k)
    return GaussianMixture(weights, means, variances)


def fit_gmm_trace(samples, k=2, tol=1e-6, max_iter=200, seed=0):
    """EM fit returning the mixture and the per-iteration mean log-likelihood.

    Initialization splits the sorted samples into k equal quantile groups,
    which is deterministic; `seed` is reserved for randomized restarts and
    does not affect the current procedure.
    """
    del seed
    samples = np.asarray(list(samples), dtype=np.float64)
    if k <= 0:
        raise InvalidParameterError(f"component count must be positive, got {k}")
    if tol <= 0:
        raise InvalidParameterError(f"tolerance must be positive, got {tol}")
    if max_iter <= 0:
        raise InvalidParameterError(f"max_iter must be positive, got {max_iter}")
    if samples.size < 2 * k:
        raise InsufficientDataError(
            f"need at least {2 * k} samples for k={k}, got {samples.size}"
        )

    m = _quantile_init(samples, k)
    history = [_mean_log_likelihood(m, samples)]
    for _ in range(max_iter):
        # E-step: responsibilities in the log domain for stability.
        log_dens = _log_component_densities(m, samples) + np.log(m.weights)[None, :]
        peak = log_dens.max(axis=1, keepdims=True)
        resp = np.exp(log_dens - peak)
        resp /= resp.sum(axis=1, keepdims=True)

        # M-step.
        mass = resp.sum(axis=0)
        weights = mass / samples.size
        means = (resp * samples[:, None]).sum(axis=0) / mass
        diff = samples[:, None] - means[None, :]
        variances = np.maximum((resp * diff * diff).sum(axis=0) / mass, VARIANCE_FLOOR)
        weights = weights / weights.sum()
        m = GaussianMixture(weights, means, variances)

        history.append(_mean_log_likelihood(m, samples))
        if history[-1] - history[-2] < tol:
            break
    return m, history


def fit_gmm(samples, k=2, tol=1e-6, max_iter=200, seed=0):
    """EM fit of a k-component mixture; see fit_gmm_trace."""
    m, _ = fit_gmm_trace(samples, k=k, tol=tol, max_iter=max_iter, seed=seed)
    return m


def fit_priors(scenes, k=2, tol=1e-6, max_iter=200, seed=0):
    """Fit both mixtures from ground-truth pairings of `scenes`."""
    wv_samples, ww_samples = collect_pair_stats(scenes)
    return PriorModel(
        wv=fit_gmm(wv_samples, k=k, tol=tol, max_iter=max_iter, seed=seed),
        ww=fit_gmm(ww_samples, k=k, tol=tol, max_iter=max_iter, seed=seed),
    )


def init_adjacency(scene, priors, normalize=True):
    """Prior edge-weight matrix of a scene.

    Wheel-vehicle and wheel-wheel entries carry the mixture density of the
    pair's log ratio; vehicle-vehicle entries are structural zeros and the
    diagonal is the unit self-loop. With `normalize`, off-diagonal entries
    are divided by the global off-diagonal maximum, keeping the matrix
    symmetric with values in [0, 1].
    """
    boxes = scene.boxes
    n = len(boxes)
    adj = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = boxes[i], boxes[j]
            if a.cls is BoxClass.VEHICLE and b.cls is BoxClass.VEHICLE:
                continue
            if a.cls is BoxClass.WHEEL and b.cls is BoxClass.WHEEL:
                mixture = priors.ww
                member = front_wheel(a, b)
            else:
                mixture = priors.wv
                member = a if a.cls is BoxClass.WHEEL else b
            owner = b if member is a else a
            sample = pair_log_ratio(owner, member, scene.width, scene.height)
            value = 0.0 if sample is None else pdf(mixture, sample)
            adj[i, j] = value
            adj[j, i] = value
    if normalize and n > 1:
        off = ~np.eye(n, dtype=bool)
        peak = adj[off].max()
        if peak > 0:
            adj[off] /= peak
    return adj


def save_priors(priors, path):
    path = str(path)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(serialize_priors(priors))


def serialize_priors(priors):
    lines = [f"{PRIORS_MAGIC} {PRIORS_VERSION} {priors.wv.k} {priors.ww.k}"]
    for tag, mixture in (("wv", priors.wv), ("ww", priors.ww)):
        for w, mu, var in zip(mixture.weights, mixture.means, mixture.variances):
            lines.append(f"{tag} {float(w)!r} {float(mu)!r} {float(var)!r}")
    return "\n".join(lines) + "\n"


def load_priors(path):
    with open(str(path), encoding="ascii") as fh:
        return parse_priors(fh.read())


def parse_priors(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty priors file")
    header = lines[0].split()
    if len(header) != 4 or header[0] != PRIORS_MAGIC:
        raise FormatError(f"not a priors file: {lines[0]!r}")
    if header[1] != PRIORS_VERSION:
        raise FormatError(f"unsupported priors version {header[1]!r}")
    k_wv, k_ww = int(header[2]), int(header[3])
    rows = {"wv": [], "ww": []}
    for line in lines[1:]:
        parts = line.split()
        if len(parts) != 4 or parts[0] not in rows:
            raise FormatError(f"malformed component line: {line!r}")
        rows[parts[0]].append([float(v) for v in parts[1:]])
    if len(rows["wv"]) != k_wv or len(rows["ww"]) != k_ww:
        raise FormatError("component count does not match header")
    mixtures = {}
    for tag in ("wv", "ww"):
        cols = np.asarray(rows[tag], dtype=np.float64)
        mixtures[tag] = GaussianMixture(cols[:, 0], cols[:, 1], cols[:, 2])
    return PriorModel(wv=mixtures["wv"], ww=mixtures["ww"])
