"""Minimal dense feedforward/residual networks with full instrumentation.

Pure-numpy networks (bias absorbed as a trailing weight column), plain
SGD, and the measurements the rest of the package consumes: covariance
checks under group transformations of weights and inputs, loss Hessian
spectra by finite differences of the analytic gradient, gradient
variance traces, weight freeze-out, input-gradient autocorrelation
along input paths, and inter-layer weight correlations.

Everything is deterministic given the seeds in the specs; training
never mutates the network it is given.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .groups import GroupElement, Nonlinearity, apply, commutes_with, conjugate_weights

HESSIAN_PARAM_BUDGET = 2000
COVARIANCE_TOL = 1e-8
EMA_DECAY = 0.99


class HessianBudgetError(ValueError):
    """Parameter count too large for a dense Hessian; use a smaller net."""


class NonCommutingTransformError(ValueError):
    """Group element does not commute with the net's nonlinearities."""

    def __init__(self, message, counterexample):
        super().__init__(message)
        self.counterexample = counterexample


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture: layer_dims has len(layers)+1 entries; nonlinearity
    and residual may be a single value applied to every layer or one
    value per layer. Residual layers need equal in/out dims."""

    layer_dims: tuple
    nonlinearity: tuple = "relu"
    residual: tuple = False
    seed: int = 0
    init_scale: float = 1.0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError("layer_dims needs at least two positive entries")
        n = len(dims) - 1
        nl = self.nonlinearity
        nl = (nl,) * n if isinstance(nl, str) else tuple(nl)
        res = self.residual
        res = (bool(res),) * n if isinstance(res, (bool, int)) else tuple(bool(r) for r in res)
        if len(nl) != n or len(res) != n:
            raise ValueError("need one nonlinearity and one residual flag per layer")
        for kind in nl:
            Nonlinearity(kind)  # validates
        for i, r in enumerate(res):
            if r and dims[i] != dims[i + 1]:
                raise ValueError(f"residual layer {i} needs equal dims, got {dims[i]}->{dims[i+1]}")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "nonlinearity", nl)
        object.__setattr__(self, "residual", res)

    @property
    def depth(self) -> int:
        return len(self.layer_dims) - 1


class Network:
    """A spec plus concrete weights, each of shape (d_out, d_in + 1)."""

    def __init__(self, spec: NetworkSpec, weights: list):
        self.spec = spec
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        dims = spec.layer_dims
        for i, w in enumerate(self.weights):
            if w.shape != (dims[i + 1], dims[i] + 1):
                raise ValueError(f"layer {i} weights {w.shape} != {(dims[i+1], dims[i]+1)}")
        self._nls = [Nonlinearity(k) for k in spec.nonlinearity]

    @classmethod
    def initialize(cls, spec: NetworkSpec) -> "Network":
        """Gaussian init with std init_scale/sqrt(fan_in); biases zero."""
        rng = np.random.default_rng(spec.seed)
        dims = spec.layer_dims
        weights = []
        for din, dout in zip(dims[:-1], dims[1:]):
            w = np.zeros((dout, din + 1))
            w[:, :din] = rng.normal(0.0, spec.init_scale / np.sqrt(din), size=(dout, din))
            weights.append(w)
        return cls(spec, weights)

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights)

    def copy(self) -> "Network":
        return Network(self.spec, [w.copy() for w in self.weights])


@dataclass
class ForwardResult:
    y: np.ndarray
    activations: list


@dataclass
class CovarianceResult:
    covariant: bool
    deviation: float


@dataclass
class HessianReport:
    """Dense loss-Hessian eigenvalues, sorted descending."""

    eigenvalues: np.ndarray
    near_zero_fraction: float
    negative_count: int
    threshold: float


@dataclass
class StepRecord:
    step: int
    loss: float
    grad_var_params: list  # per layer: variance of mean-gradient entries
    grad_var_samples: list  # per layer: mean over params of across-sample variance
    eta: float
    train_error: float | None = None


@dataclass
class Checkpoint:
    step: int
    weights: list
    spectrum: HessianReport | None = None


@dataclass
class TrainingTrace:
    records: list
    checkpoints: list
    eta: float
    seed: int
    loss_kind: str
    layer_param_counts: list
    ema_weights: list | None = None
    diverged: bool = False

    @property
    def final_weights(self) -> list:
        return self.checkpoints[-1].weights


@dataclass
class GradientVarianceProfile:
    steps: np.ndarray
    grad_var_samples: np.ndarray
    ratio: np.ndarray


@dataclass
class FreezeOutReport:
    drift: np.ndarray
    frozen_set: np.ndarray
    threshold: float


@dataclass
class ShatteredProfile:
    lags: np.ndarray
    autocorr: np.ndarray
    whiteness: float


@dataclass
class Dataset:
    """Features (n, d) and targets: int class labels for cross_entropy,
    float target matrix (n, d_out) for mse."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y)
        if self.X.ndim != 2 or self.X.shape[0] == 0:
            raise ValueError("X must be a nonempty (n, d) matrix")
        if self.y.shape[0] != self.X.shape[0]:
            raise ValueError("X and y disagree on sample count")

    @property
    def n(self) -> int:
        return self.X.shape[0]


def _forward_batch(net: Network, X: np.ndarray):
    """Returns (output, pre-activations per layer, activations incl. input)."""
    a = X
    pres = []
    acts = [a]
    for w, nl, res in zip(net.weights, net._nls, net.spec.residual):
        aug = np.concatenate([a, np.ones((a.shape[0], 1))], axis=1)
        z = aug @ w.T
        pres.append(z)
        out = nl(z)
        if res:
            out = a + out
        acts.append(out)
        a = out
    return a, pres, acts


def forward(net: Network, x) -> ForwardResult:
    """Single-vector forward pass; activations[0] is the input."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.spec.layer_dims[0],):
        raise ValueError(f"input shape {x.shape} != ({net.spec.layer_dims[0]},)")
    y, _, acts = _forward_batch(net, x[None, :])
    return ForwardResult(y=y[0], activations=[a[0] for a in acts])


def _loss_and_delta(net: Network, X, y, loss: str):
    """Forward pass plus the per-sample output-layer error signal."""
    out, pres, acts = _forward_batch(net, X)
    n = X.shape[0]
    if loss == "mse":
        target = np.asarray(y, dtype=float)
        if target.ndim == 1:
            target = target[:, None]
        diff = out - target
        value = 0.5 * float(np.mean(np.sum(diff**2, axis=1)))
        delta = diff
        err = None
    elif loss == "cross_entropy":
        labels = np.asarray(y, dtype=int)
        z = out - out.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)
        value = float(np.mean(-np.log(p[np.arange(n), labels] + 1e-300)))
        delta = p.copy()
        delta[np.arange(n), labels] -= 1.0
        err = float(np.mean(p.argmax(axis=1) != labels))
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return value, delta, pres, acts, err


def _backprop(net: Network, delta, pres, acts, per_sample: bool):
    """Backpropagate per-sample output deltas.

    Returns mean gradients per layer and, when per_sample is set, the
    stacked per-sample gradients (n, d_out, d_in+1) per layer.
    """
    n = delta.shape[0]
    mean_grads = [None] * len(net.weights)
    sample_grads = [None] * len(net.weights) if per_sample else None
    for i in reversed(range(len(net.weights))):
        d = delta * net._nls[i].derivative(pres[i])
        aug = np.concatenate([acts[i], np.ones((n, 1))], axis=1)
        if per_sample:
            g = np.einsum("ni,nj->nij", d, aug)
            sample_grads[i] = g
            mean_grads[i] = g.mean(axis=0)
        else:
            mean_grads[i] = d.T @ aug / n
        delta_prev = d @ net.weights[i][:, :-1]
        if net.spec.residual[i]:
            delta_prev = delta_prev + delta
        delta = delta_prev
    return mean_grads, sample_grads


def loss_gradient(net: Network, dataset: Dataset, loss: str):
    """Full-dataset loss value and mean gradient per layer."""
    value, delta, pres, acts, _ = _loss_and_delta(net, dataset.X, dataset.y, loss)
    grads, _ = _backprop(net, delta, pres, acts, per_sample=False)
    return value, grads


def train(
    net: Network,
    dataset: Dataset,
    loss: str,
    eta: float,
    steps: int,
    batch: int,
    seed: int = 0,
    checkpoint_every: int | None = None,
    spectra: bool = True,
    n_spectra: int = 5,
) -> TrainingTrace:
    """Plain SGD, fully instrumented.

    Per step the trace records the loss and both gradient-variance
    readings (within-layer over parameters, and across minibatch
    samples). Weight snapshots land on a checkpoint cadence of
    max(1, steps // 50); dense Hessian spectra are attached to
    n_spectra evenly spaced checkpoints when the parameter count
    permits. Training aborts (trace flagged diverged) if the loss
    exceeds 1e10. The input network is not modified.
    """
    if dataset.n == 0:
        raise ValueError("dataset is empty")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    work = net.copy()
    rng = np.random.default_rng(seed)
    if checkpoint_every is None:
        checkpoint_every = max(1, steps // 50)
    spectra = spectra and work.n_params <= HESSIAN_PARAM_BUDGET
    spectrum_steps: set = set()
    if spectra and steps > 0:
        marks = np.linspace(0, steps - 1, num=min(n_spectra, steps), dtype=int)
        spectrum_steps = {int(s) for s in marks}

    ema = [np.zeros_like(w) for w in work.weights]
    records: list = []
    checkpoints: list = []
    diverged = False
    updates_done = 0

    def snapshot(step, with_spectrum):
        spec_rep = None
        if with_spectrum:
            spec_rep = hessian_spectrum(Network(work.spec, work.weights), dataset, loss)
        checkpoints.append(Checkpoint(step, [w.copy() for w in work.weights], spec_rep))

    for step in range(steps):
        if batch >= dataset.n:
            idx = np.arange(dataset.n)
        else:
            idx = rng.integers(0, dataset.n, size=batch)
        xb, yb = dataset.X[idx], dataset.y[idx]
        value, delta, pres, acts, err = _loss_and_delta(work, xb, yb, loss)
        grads, sgrads = _backprop(work, delta, pres, acts, per_sample=True)

        records.append(
            StepRecord(
                step=step,
                loss=value,
                grad_var_params=[float(np.var(g)) for g in grads],
                grad_var_samples=[float(np.mean(np.var(g, axis=0))) for g in sgrads],
                eta=eta,
                train_error=err,
            )
        )
        # checkpoint label = number of updates already applied
        if step % checkpoint_every == 0 or step in spectrum_steps:
            snapshot(step, with_spectrum=step in spectrum_steps)
        if value > 1e10 or not np.isfinite(value):
            diverged = True
            break
        for w, g, e in zip(work.weights, grads, ema):
            w -= eta * g
            e *= EMA_DECAY
            e += (1.0 - EMA_DECAY) * w
        updates_done += 1

    if not checkpoints or checkpoints[-1].step != updates_done:
        snapshot(updates_done, with_spectrum=False)
    return TrainingTrace(
        records=records,
        checkpoints=checkpoints,
        eta=eta,
        seed=seed,
        loss_kind=loss,
        layer_param_counts=[w.size for w in work.weights],
        ema_weights=[e.copy() for e in ema],
        diverged=diverged,
    )


def _transformed_network(net: Network, q: GroupElement) -> Network:
    """Conjugate every linear block by q and rotate the biases."""
    d = q.dim
    if any(dim != d for dim in net.spec.layer_dims):
        raise ValueError("weight transformation needs a square net matching q.dim")
    new_weights = []
    for w in net.weights:
        lin = conjugate_weights(q, w[:, :-1])
        bias = q.matrix @ w[:, -1]
        new_weights.append(np.concatenate([lin, bias[:, None]], axis=1))
    return Network(net.spec, new_weights)


def _gate_commutes(net: Network, q: GroupElement, trials: int = 100, tol: float = 1e-9):
    for kind in set(net.spec.nonlinearity):
        counter = commutes_with(q, Nonlinearity(kind), trials=trials, tol=tol)
        if counter is not None:
            raise NonCommutingTransformError(
                f"transform does not commute with {kind!r}", counterexample=counter
            )


def covariance_check(net: Network, q: GroupElement, x) -> CovarianceResult:
    """Is the net output covariant under q?

    Transforms all weights by conjugation and the input by q, and
    compares against transforming the untransformed output. Rejects q
    up front (with a counterexample) when it fails the randomized
    commutation gate against the net's nonlinearities.
    """
    _gate_commutes(net, q)
    x = np.asarray(x, dtype=float)
    y_plain = forward(net, x).y
    y_trans = forward(_transformed_network(net, q), apply(q, x)).y
    dev = float(np.max(np.abs(y_trans - apply(q, y_plain))))
    return CovarianceResult(covariant=dev < COVARIANCE_TOL, deviation=dev)


def adjacent_invariant_check(net: Network, q: GroupElement, x, layer: int = 1) -> float:
    """Covariance deviation of one adjacent layer pair under a permutation.

    Propagates x to the input of layer-1, then compares the two-layer
    output with both weight matrices conjugated (and the pair input
    transformed) against the transformed untransformed output.
    """
    if q.kind != "permutation":
        raise ValueError("adjacent-layer check is defined for permutation elements")
    if net.spec.depth < 2 or not 1 <= layer < net.spec.depth + 0:
        raise ValueError("need >= 2 layers and 1 <= layer < depth")
    _gate_commutes(net, q)
    x = np.asarray(x, dtype=float)

    _, _, acts = _forward_batch(net, x[None, :])
    x_prev = acts[layer - 1][0]

    def pair_out(network, start_vec):
        a = start_vec[None, :]
        for i in (layer - 1, layer):
            aug = np.concatenate([a, np.ones((1, 1))], axis=1)
            out = network._nls[i](aug @ network.weights[i].T)
            if network.spec.residual[i]:
                out = a + out
            a = out
        return a[0]

    y_plain = pair_out(net, x_prev)
    y_trans = pair_out(_transformed_network(net, q), apply(q, x_prev))
    return float(np.max(np.abs(y_trans - apply(q, y_plain))))


def skip_across_units_deviation(net: Network, q1: GroupElement, q2: GroupElement, x) -> float:
    """Covariance violation of a skip connection spanning two residual units.

    With unit outputs x2 = x1 + F1(x1) and x3 = x1 + x2 + F2(x2) (the
    extra skip re-injects x1), transforming the two units by different
    group elements leaves no single element covariant with the output.
    Returns the smaller of the two candidate deviations.
    """
    if net.spec.depth < 2:
        raise ValueError("need at least two layers to form two units")
    x1 = np.asarray(x, dtype=float)

    def unit(i, v):
        aug = np.concatenate([v, [1.0]])
        return net._nls[i](net.weights[i] @ aug)

    x2 = x1 + unit(0, x1)
    f2 = unit(1, x2)
    out = x1 + x2 + f2
    out_trans = apply(q1, x1) + apply(q2, x2) + apply(q2, f2)
    dev1 = np.max(np.abs(out_trans - apply(q1, out)))
    dev2 = np.max(np.abs(out_trans - apply(q2, out)))
    return float(min(dev1, dev2))


def _get_flat_params(net: Network) -> np.ndarray:
    return np.concatenate([w.ravel() for w in net.weights])


def _set_flat_params(net: Network, flat: np.ndarray):
    pos = 0
    for w in net.weights:
        w[...] = flat[pos : pos + w.size].reshape(w.shape)
        pos += w.size


def hessian_spectrum(net: Network, dataset: Dataset, loss: str) -> HessianReport:
    """Dense loss Hessian from central differences of the analytic gradient.

    Per-coordinate step 1e-4 * (1 + |w_i|); the result is symmetrized
    before a full eigensolve. Near-zero threshold: 1e-3 * max|e|.
    """
    p = net.n_params
    if p > HESSIAN_PARAM_BUDGET:
        raise HessianBudgetError(
            f"{p} parameters > budget {HESSIAN_PARAM_BUDGET}; use a smaller net"
        )
    work = net.copy()
    w0 = _get_flat_params(work)
    h = 1e-4 * (1.0 + np.abs(w0))

    def grad_at(flat):
        _set_flat_params(work, flat)
        _, grads = loss_gradient(work, dataset, loss)
        return np.concatenate([g.ravel() for g in grads])

    hess = np.empty((p, p))
    for i in range(p):
        step = np.zeros(p)
        step[i] = h[i]
        hess[:, i] = (grad_at(w0 + step) - grad_at(w0 - step)) / (2.0 * h[i])
    hess = 0.5 * (hess + hess.T)
    eigs = np.linalg.eigvalsh(hess)[::-1]
    scale = float(np.max(np.abs(eigs))) if p else 0.0
    tau = 1e-3 * scale
    near_zero = float(np.mean(np.abs(eigs) < tau)) if p else 0.0
    negative = int(np.sum(eigs < -tau))
    return HessianReport(
        eigenvalues=eigs, near_zero_fraction=near_zero, negative_count=negative, threshold=tau
    )


def gradient_variance_profile(trace: TrainingTrace) -> GradientVarianceProfile:
    """Across-sample gradient variance per step, pooled over parameters,
    with the ratio to its average over the first 5% of steps."""
    if len(trace.records) < 2:
        raise ValueError("need at least two trace records")
    counts = np.asarray(trace.layer_param_counts, dtype=float)
    steps = np.array([r.step for r in trace.records])
    pooled = np.array(
        [np.dot(r.grad_var_samples, counts) / counts.sum() for r in trace.records]
    )
    head = max(1, int(np.ceil(0.05 * len(pooled))))
    base = float(pooled[:head].mean())
    ratio = pooled / base if base > 0 else np.full_like(pooled, np.nan)
    return GradientVarianceProfile(steps=steps, grad_var_samples=pooled, ratio=ratio)


def freeze_out_report(trace: TrainingTrace) -> FreezeOutReport:
    """Weights that stop moving across the final 20% of checkpoints.

    Drift is the max |delta w| over consecutive snapshots in the
    window; indices with drift <= 1e-4 * median(drift) count as frozen
    (with a zero-learning-rate trace everything freezes).
    """
    if len(trace.checkpoints) < 2:
        raise ValueError("need at least two checkpoints")
    n_window = max(2, int(np.ceil(0.2 * len(trace.checkpoints))))
    window = trace.checkpoints[-n_window:]
    flats = [np.concatenate([w.ravel() for w in c.weights]) for c in window]
    drift = np.max(np.abs(np.diff(np.stack(flats), axis=0)), axis=0)
    threshold = 1e-4 * float(np.median(drift))
    frozen = np.flatnonzero(drift <= threshold)
    return FreezeOutReport(drift=drift, frozen_set=frozen, threshold=threshold)


def input_gradient(net: Network, x) -> np.ndarray:
    """Gradient of the summed output with respect to the input."""
    x = np.asarray(x, dtype=float)
    _, pres, _ = _forward_batch(net, x[None, :])
    delta = np.ones((1, net.spec.layer_dims[-1]))
    for i in reversed(range(net.spec.depth)):
        d = delta * net._nls[i].derivative(pres[i])
        delta_prev = d @ net.weights[i][:, :-1]
        if net.spec.residual[i]:
            delta_prev = delta_prev + delta
        delta = delta_prev
    return delta[0]


def shattered_gradient_profile(net: Network, x, n_points: int = 256) -> ShatteredProfile:
    """Autocorrelation of input gradients along a closed path.

    Walks a circle of radius |x| through x inside a fixed 2-plane,
    recomputing the input gradient of the summed output at each point.
    The autocorrelation is circular and NOT mean-subtracted, so a
    constant gradient field (a linear net) scores whiteness 0; gradients
    that decorrelate between neighboring points score near 1.
    """
    if net.spec.depth < 8:
        raise ValueError("profile is defined for nets of depth >= 8")
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise ValueError("x must be nonzero to define a path")
    u = x / r
    j = int(np.argmin(np.abs(u)))
    v = np.zeros_like(u)
    v[j] = 1.0
    v -= (v @ u) * u
    v /= np.linalg.norm(v)

    grads = np.empty((n_points, x.size))
    for i, s in enumerate(np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)):
        grads[i] = input_gradient(net, r * (np.cos(s) * u + np.sin(s) * v))
    n_lags = n_points // 2
    rho0 = float(np.sum(grads * grads))
    if rho0 == 0.0:
        raise ValueError("identically zero gradients along the path")
    autocorr = np.array(
        [np.sum(grads * np.roll(grads, -lag, axis=0)) / rho0 for lag in range(n_lags)]
    )
    return ShatteredProfile(
        lags=np.arange(n_lags), autocorr=autocorr, whiteness=float(1.0 - autocorr[1])
    )


def weight_correlation(trace: TrainingTrace, layer_a: int, layer_b: int) -> float:
    """Cosine similarity of final weight deviations (w - w*) of two layers,
    where w* is the exponential moving average accumulated in training."""
    if layer_a == layer_b:
        return 1.0
    final = trace.final_weights
    if trace.ema_weights is None:
        raise ValueError("trace carries no moving-average weights")
    va = (final[layer_a] - trace.ema_weights[layer_a]).ravel()
    vb = (final[layer_b] - trace.ema_weights[layer_b]).ravel()
    if va.shape != vb.shape:
        raise ValueError("layers must have identical shapes to correlate")
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero deviation norm: correlation undefined")
    return float(va @ vb / (na * nb))


def write_trace_csv(trace: TrainingTrace, path) -> None:
    """Trace export: step, loss, grad_var_params, grad_var_samples, eta
    (variances pooled over layers by parameter count)."""
    counts = np.asarray(trace.layer_param_counts, dtype=float)
    total = counts.sum()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "grad_var_params", "grad_var_samples", "eta"])
        for r in trace.records:
            gp = np.dot(r.grad_var_params, counts) / total
            gs = np.dot(r.grad_var_samples, counts) / total
            writer.writerow(
                [r.step] + [f"{v:.17g}" for v in (r.loss, gp, gs, r.eta)]
            )


def write_spectra_json(trace: TrainingTrace, path) -> None:
    """Sidecar with the Hessian spectra attached to checkpoints."""
    payload = []
    for c in trace.checkpoints:
        if c.spectrum is None:
            continue
        payload.append(
            {
                "step": c.step,
                "eigenvalues": [float(e) for e in c.spectrum.eigenvalues],
                "near_zero_fraction": c.spectrum.near_zero_fraction,
                "negative_count": c.spectrum.negative_count,
                "threshold": c.spectrum.threshold,
            }
        )
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def load_dataset_csv(path) -> Dataset:
    """Dataset input: feature columns f0..f{d-1} plus a final 'label'
    column (integers for classification, floats for regression)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != "label" or not all(h.startswith("f") for h in header[:-1]):
            raise ValueError("expected columns f0..f{d-1},label")
        rows = [row for row in reader if row]
    X = np.array([[float(v) for v in row[:-1]] for row in rows])
    raw = [row[-1] for row in rows]
    try:
        y = np.array([int(v) for v in raw])
    except ValueError:
        y = np.array([[float(v)] for v in raw])
    return Dataset(X=X, y=y)
