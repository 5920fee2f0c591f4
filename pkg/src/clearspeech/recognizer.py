"""Left-to-right (Bakis) HMM word models with segmental Viterbi training."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._util import atomic_write_text, round_half_up

VAR_FLOOR = 1e-4
SKIP_PROB_INIT = 0.01
DEFAULT_STATES = 5
LOG_ZERO = -np.inf


class NoLegalPathError(ValueError):
    """No state sequence satisfies the left-to-right topology for this length."""


@dataclass
class HmmModel:
    """Diagonal-Gaussian Bakis model: self, next and skip-one transitions only."""

    label: int
    means: np.ndarray  # (n_states, dim)
    variances: np.ndarray  # (n_states, dim), floored at VAR_FLOOR
    log_trans: np.ndarray  # (n_states, n_states), -inf on illegal arcs

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        self.log_trans = np.asarray(self.log_trans, dtype=np.float64)
        s = self.means.shape[0]
        if self.variances.shape != self.means.shape:
            raise ValueError("means and variances must share a shape")
        if self.log_trans.shape != (s, s):
            raise ValueError("transition matrix shape mismatch")
        if np.any(self.variances < VAR_FLOOR * (1 - 1e-12)):
            raise ValueError(f"variances must be >= {VAR_FLOOR}")

    @property
    def n_states(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _allowed_arcs(n_states: int, i: int) -> range:
    return range(i, min(i + 3, n_states))


def bakis_log_trans(probs: np.ndarray) -> np.ndarray:
    """Dense probability rows to a log matrix with -inf outside the Bakis mask."""
    n = probs.shape[0]
    log_trans = np.full((n, n), LOG_ZERO)
    for i in range(n):
        for j in _allowed_arcs(n, i):
            if probs[i, j] > 0:
                log_trans[i, j] = np.log(probs[i, j])
    return log_trans


def log_emissions(model: HmmModel, observations: np.ndarray) -> np.ndarray:
    """(n_obs, n_states) diagonal-Gaussian log densities."""
    x = observations[:, None, :]  # (T, 1, D)
    mu = model.means[None, :, :]
    var = model.variances[None, :, :]
    return -0.5 * np.sum(
        np.log(2.0 * np.pi * var) + (x - mu) ** 2 / var, axis=2
    )


def _observations(features: np.ndarray, model: HmmModel) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError("feature matrix must be 2-D (coefficients x time)")
    if features.shape[0] != model.dim:
        raise ValueError(
            f"feature dim {features.shape[0]} does not match model dim {model.dim}"
        )
    return features.T  # time-major


def viterbi(model: HmmModel, features: np.ndarray) -> tuple[np.ndarray, float]:
    """Best state path through a (dim, T) feature matrix.

    The path starts in state 0 and ends in the final state; transitions allow
    self, next and skip-one arcs.  Score ties choose the lower predecessor
    state.  Returns (alignment of length T, log probability).
    """
    obs = _observations(features, model)
    t_len, s_len = obs.shape[0], model.n_states
    if s_len - 1 > 2 * (t_len - 1):
        raise NoLegalPathError(
            f"{s_len} states cannot be traversed in {t_len} observations"
        )
    log_b = log_emissions(model, obs)
    delta = np.full((t_len, s_len), LOG_ZERO)
    psi = np.zeros((t_len, s_len), dtype=int)
    delta[0, 0] = log_b[0, 0]
    for t in range(1, t_len):
        for j in range(s_len):
            best_score, best_prev = LOG_ZERO, 0
            for i in range(max(0, j - 2), j + 1):
                if delta[t - 1, i] == LOG_ZERO:
                    continue
                arc = model.log_trans[i, j]
                if arc == LOG_ZERO:
                    continue
                score = delta[t - 1, i] + arc
                if score > best_score:  # strict: ties keep the lower i
                    best_score, best_prev = score, i
            if best_score > LOG_ZERO:
                delta[t, j] = best_score + log_b[t, j]
                psi[t, j] = best_prev
    final = delta[t_len - 1, s_len - 1]
    if final == LOG_ZERO:
        raise NoLegalPathError("no admissible path reaches the final state")
    path = np.empty(t_len, dtype=int)
    path[-1] = s_len - 1
    for t in range(t_len - 1, 0, -1):
        path[t - 1] = psi[t, path[t]]
    return path, float(final)


def _segment_bounds(t_len: int, n_states: int) -> list[int]:
    return [round_half_up(i * t_len / n_states) for i in range(n_states + 1)]


def init_uniform(
    label: int, samples: list[np.ndarray], n_states: int = DEFAULT_STATES
) -> HmmModel:
    """Flat-start model: per-sample columns split into equal contiguous segments.

    Emission statistics pool each segment across samples; transitions derive
    from the expected dwell (self-loop 1 - 1/dwell) with a small skip weight.
    """
    if not samples:
        raise ValueError("no training samples")
    mats = [_check_sample(s) for s in samples]
    t_len = mats[0].shape[1]
    if n_states < 1:
        raise ValueError("n_states must be >= 1")
    if n_states > t_len:
        raise ValueError(f"{n_states} states exceed {t_len} feature columns")
    dim = mats[0].shape[0]
    means = np.zeros((n_states, dim))
    variances = np.zeros((n_states, dim))
    dwell = np.zeros(n_states)
    for state in range(n_states):
        pooled = []
        for m in mats:
            b = _segment_bounds(m.shape[1], n_states)
            pooled.append(m[:, b[state] : b[state + 1]])
        cols = np.concatenate(pooled, axis=1)
        dwell[state] = cols.shape[1] / len(mats)
        means[state] = cols.mean(axis=1)
        variances[state] = np.maximum(cols.var(axis=1), VAR_FLOOR)

    probs = np.zeros((n_states, n_states))
    for i in range(n_states):
        arcs = list(_allowed_arcs(n_states, i))
        if len(arcs) == 1:
            probs[i, i] = 1.0
            continue
        self_p = max(0.0, 1.0 - 1.0 / max(dwell[i], 1.0))
        skip_p = SKIP_PROB_INIT if len(arcs) == 3 else 0.0
        next_p = max(1.0 - self_p - skip_p, 1e-6)
        row = np.zeros(n_states)
        row[i] = self_p
        row[i + 1] = next_p
        if len(arcs) == 3:
            row[i + 2] = skip_p
        probs[i] = row / row.sum()
    return HmmModel(label, means, variances, bakis_log_trans(probs))


def _check_sample(sample: np.ndarray) -> np.ndarray:
    sample = np.asarray(sample, dtype=np.float64)
    if sample.ndim != 2 or sample.shape[1] < 1:
        raise ValueError("training samples must be (dim, T) matrices")
    return sample


def train(
    model: HmmModel,
    samples: list[np.ndarray],
    max_iters: int = 20,
    tol: float = 1e-4,
    history: list | None = None,
) -> HmmModel:
    """Segmental (Viterbi) training.

    Each iteration aligns every sample, re-estimates Gaussians from the
    assigned columns (a state left empty keeps its parameters) and rebuilds
    transitions from path counts with add-one smoothing over the legal arcs.
    Stops when the summed alignment log-probability improves by less than
    `tol`.  `history` collects the per-iteration totals when given.
    """
    if not samples:
        raise ValueError("no training samples")
    mats = [_check_sample(s) for s in samples]
    current = model
    prev_total = None
    for _ in range(max_iters):
        paths = []
        total = 0.0
        for m in mats:
            path, lp = viterbi(current, m)
            paths.append(path)
            total += lp
        if history is not None:
            history.append(total)
        if prev_total is not None and total - prev_total < tol:
            break
        prev_total = total
        current = _reestimate(current, mats, paths)
    return current


def _reestimate(
    model: HmmModel, mats: list[np.ndarray], paths: list[np.ndarray]
) -> HmmModel:
    s_len, dim = model.n_states, model.dim
    means = model.means.copy()
    variances = model.variances.copy()
    for state in range(s_len):
        cols = [m[:, p == state] for m, p in zip(mats, paths)]
        stacked = np.concatenate(cols, axis=1)
        if stacked.shape[1] == 0:
            continue  # empty state: parameters carry over
        means[state] = stacked.mean(axis=1)
        variances[state] = np.maximum(stacked.var(axis=1), VAR_FLOOR)

    counts = np.zeros((s_len, s_len))
    for p in paths:
        for a, b in zip(p[:-1], p[1:]):
            counts[a, b] += 1.0
    probs = np.zeros((s_len, s_len))
    for i in range(s_len):
        arcs = list(_allowed_arcs(s_len, i))
        smoothed = np.array([counts[i, j] + 1.0 for j in arcs])
        probs[i, arcs] = smoothed / smoothed.sum()
    return HmmModel(model.label, means, variances, bakis_log_trans(probs))


def recognize(models: list[HmmModel], features: np.ndarray) -> tuple[int, float]:
    """Score against every model; best log-probability wins, ties take the
    lower label.  Models with no legal path are skipped."""
    if not models:
        raise ValueError("no models to score against")
    best_label, best_lp = None, LOG_ZERO
    for model in sorted(models, key=lambda m: m.label):
        try:
            _, lp = viterbi(model, features)
        except NoLegalPathError:
            continue
        if lp > best_lp:
            best_label, best_lp = model.label, lp
    if best_label is None:
        raise NoLegalPathError("no model admits a legal path for this input")
    return best_label, best_lp


def word_accuracy(n_correct: int, n_total: int) -> float:
    """Percent correct: 100 * n_correct / n_total."""
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    if not 0 <= n_correct <= n_total:
        raise ValueError("n_correct must lie in [0, n_total]")
    return 100.0 * n_correct / n_total


def save_model(model: HmmModel, path) -> None:
    """Plain-text persistence: header, transition rows, then mean/variance
    pairs per state, all with 17 significant digits."""
    lines = [f"{model.label} {model.n_states} {model.dim}"]
    trans = np.exp(model.log_trans)
    trans[model.log_trans == LOG_ZERO] = 0.0
    for row in trans:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    for state in range(model.n_states):
        lines.append(" ".join(f"{v:.17g}" for v in model.means[state]))
        lines.append(" ".join(f"{v:.17g}" for v in model.variances[state]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_model(path) -> HmmModel:
    lines = [l for l in Path(path).read_text().splitlines() if l.strip()]
    header = lines[0].split()
    if len(header) != 3:
        raise ValueError(f"{path}: malformed header line")
    label, n_states, dim = int(header[0]), int(header[1]), int(header[2])
    expect = 1 + n_states + 2 * n_states
    if len(lines) != expect:
        raise ValueError(f"{path}: expected {expect} lines, found {len(lines)}")
    probs = np.array(
        [[float(v) for v in lines[1 + i].split()] for i in range(n_states)]
    )
    if probs.shape != (n_states, n_states):
        raise ValueError(f"{path}: transition matrix shape mismatch")
    means = np.empty((n_states, dim))
    variances = np.empty((n_states, dim))
    for s in range(n_states):
        means[s] = [float(v) for v in lines[1 + n_states + 2 * s].split()]
        variances[s] = [float(v) for v in lines[2 + n_states + 2 * s].split()]
    if means.shape[1] != dim:
        raise ValueError(f"{path}: mean vector length mismatch")
    return HmmModel(label, means, variances, bakis_log_trans(probs))
