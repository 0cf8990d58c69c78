"""Dimension-based Bayesian classification over six road-user classes.

Each class models every axis with a Gaussian; the estimate's own standard
deviation widens it (``sigma_combined^2 = sigma_class^2 + sigma_hat^2``).
Per-axis posteriors are multiplied across axes and renormalized. The
``other`` class uses a uniform density over ``[0, d_max]``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from roadtrack.dimension import AXES, DimensionEstimate
from roadtrack.model import CLASSES, CLASS_INDEX, N_CLASSES, ClassVector, ModelError, normalize_class_vector

OTHER = CLASS_INDEX["other"]
_LOG_2PI = math.log(2.0 * math.pi)


class ClassModelError(ModelError):
    pass


@dataclass(frozen=True, eq=False)
class ClassModel:
    """``mu``/``sigma``/``modeled`` are (classes x axes) arrays."""

    mu: np.ndarray
    sigma: np.ndarray
    modeled: np.ndarray
    prior: np.ndarray
    d_max: tuple[float, float, float] = (20.0, 5.0, 5.0)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(N_CLASSES, 3)
        sigma = np.asarray(self.sigma, dtype=float).reshape(N_CLASSES, 3)
        modeled = np.asarray(self.modeled, dtype=bool).reshape(N_CLASSES, 3).copy()
        modeled[OTHER, :] = False
        prior = np.asarray(self.prior, dtype=float).reshape(N_CLASSES)
        if np.any(sigma[modeled] <= 0):
            raise ClassModelError("class sigmas must be > 0")
        if np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-6:
            raise ClassModelError("class priors must be nonnegative and sum to 1")
        for name, arr in (("mu", mu), ("sigma", sigma), ("modeled", modeled), ("prior", prior)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "d_max", tuple(float(d) for d in self.d_max))


def class_likelihood(d_hat: float, sigma_hat: float, mu: float, sigma_class: float) -> float:
    var = sigma_class**2 + sigma_hat**2
    if not var > 0:
        raise ModelError("combined variance must be > 0")
    return math.exp(-((d_hat - mu) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)


def _log_densities(d_hat: float, sigma_hat: float, axis: int, model: ClassModel) -> np.ndarray:
    var = model.sigma[:, axis] ** 2 + sigma_hat**2
    logd = -0.5 * (_LOG_2PI + np.log(var)) - (d_hat - model.mu[:, axis]) ** 2 / (2.0 * var)
    logd[OTHER] = -math.log(model.d_max[axis])
    return logd


@dataclass(frozen=True)
class ClassificationResult:
    vector: ClassVector
    degenerate: bool = False


def classify_detailed(dims: DimensionEstimate, model: ClassModel) -> ClassificationResult:
    with np.errstate(divide="ignore"):
        log_prior = np.log(model.prior)
    log_post = np.zeros(N_CLASSES)
    used = 0
    for axis in range(3):
        active = model.modeled[:, axis].copy()
        if not active.any():
            continue  # axis carries no class information
        used += 1
        active[OTHER] = True
        logj = _log_densities(float(dims.d[axis]), float(dims.sigma[axis]), axis, model) + log_prior
        marginal = logsumexp(logj[active])
        if not np.isfinite(marginal):
            return ClassificationResult(ClassVector.unclassified(), True)
        log_post = log_post + np.where(active, logj - marginal, 0.0)
    if not used:
        return ClassificationResult(normalize_class_vector(model.prior))
    total = logsumexp(log_post)
    if not np.isfinite(total):
        return ClassificationResult(ClassVector.unclassified(), True)
    return ClassificationResult(normalize_class_vector(np.exp(log_post - total)))


def classify(dims: DimensionEstimate, model: ClassModel) -> ClassVector:
    return classify_detailed(dims, model).vector


# -- model file -------------------------------------------------------------
#
#   # comment
#   <class> <axis> <mu> <sigma>        axis in {length, width, height}
#   ...
#   [prior]
#   <class> <probability>
#
# Axes not listed for a class are unmodeled. Missing priors default to
# uniform.


def parse_class_model(text: str, d_max=(20.0, 5.0, 5.0)) -> ClassModel:
    mu = np.zeros((N_CLASSES, 3))
    sigma = np.ones((N_CLASSES, 3))
    modeled = np.zeros((N_CLASSES, 3), dtype=bool)
    prior = {}
    section = "model"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.lower() == "[prior]":
            section = "prior"
            continue
        parts = line.split()
        try:
            if section == "model":
                if len(parts) != 4:
                    raise ValueError("expected: class axis mu sigma")
                c, axis = CLASS_INDEX[parts[0]], AXES.index(parts[1])
                mu[c, axis], sigma[c, axis] = float(parts[2]), float(parts[3])
                modeled[c, axis] = True
            else:
                if len(parts) != 2:
                    raise ValueError("expected: class probability")
                prior[CLASS_INDEX[parts[0]]] = float(parts[1])
        except (KeyError, ValueError) as exc:
            raise ClassModelError(f"class model line {lineno}: {raw!r} ({exc})") from exc
    if prior:
        p = np.array([prior.get(i, 0.0) for i in range(N_CLASSES)])
        p = p / p.sum()
    else:
        p = np.full(N_CLASSES, 1.0 / N_CLASSES)
    return ClassModel(mu, sigma, modeled, p, d_max)


def format_class_model(model: ClassModel) -> str:
    out = ["# class axis mu sigma"]
    for c, name in enumerate(CLASSES):
        for a, axis in enumerate(AXES):
            if model.modeled[c, a]:
                out.append(f"{name} {axis} {model.mu[c, a]:.4f} {model.sigma[c, a]:.4f}")
    out.append("")
    out.append("[prior]")
    out.extend(f"{name} {model.prior[c]:.6f}" for c, name in enumerate(CLASSES))
    return "\n".join(out) + "\n"


def load_class_model(path: str | Path | None = None, d_max=(20.0, 5.0, 5.0)) -> ClassModel:
    if path is None:
        text = resources.files("roadtrack.data").joinpath("class_model.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return parse_class_model(text, d_max)


def fit_class_model(rows, d_max=(20.0, 5.0, 5.0), min_samples: int = 2) -> ClassModel:
    """Estimate per-class Gaussians from ``(class, length, width, height)`` rows.

    Empty or non-numeric cells leave that axis unmodeled; priors are the
    class frequencies.
    """
    values: dict[int, list[list[float]]] = {i: [[], [], []] for i in range(N_CLASSES)}
    counts = np.zeros(N_CLASSES)
    for row in rows:
        name = row[0].strip()
        if name not in CLASS_INDEX:
            raise ClassModelError(f"unknown class {name!r}")
        c = CLASS_INDEX[name]
        counts[c] += 1
        for a in range(3):
            cell = row[a + 1].strip() if a + 1 < len(row) else ""
            if cell:
                values[c][a].append(float(cell))
    mu = np.zeros((N_CLASSES, 3))
    sigma = np.ones((N_CLASSES, 3))
    modeled = np.zeros((N_CLASSES, 3), dtype=bool)
    for c in range(N_CLASSES):
        for a in range(3):
            v = np.asarray(values[c][a])
            if v.size >= min_samples:
                mu[c, a] = v.mean()
                sigma[c, a] = max(float(v.std(ddof=1)), 1e-3)
                modeled[c, a] = True
    if counts.sum() == 0:
        raise ClassModelError("no labeled rows")
    return ClassModel(mu, sigma, modeled, counts / counts.sum(), d_max)


def read_labeled_csv(text: str):
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and not r[0].startswith("#")]
    if rows and rows[0][0].strip().lower() in ("class", "label"):
        rows = rows[1:]
    return rows
