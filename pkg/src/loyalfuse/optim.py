"""From-scratch adaptive gradient optimizers: Adam, Adamax, Nadam.

Each optimizer keeps per-array first/second moment state keyed by the
parameter path and updates parameters in place.  Bias-correction uses the
step counter t starting at 1 (incremented once per :meth:`step`, before
any array is touched).

Conventions worth pinning down because implementations in the wild vary:

* Adam / Nadam divide by ``sqrt(v_hat) + eps`` (epsilon outside the
  square root).
* Adamax has no epsilon; the infinity-norm accumulator can only be zero
  when every gradient seen so far was zero, in which case the update is
  defined to be zero (0/0 -> 0), making an all-zero gradient a fixed
  point.
* Nadam uses the bias-corrected Nesterov momentum
  ``m_bar = beta1 * m_hat + (1 - beta1) * g / (1 - beta1 ** t)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import MLPParams

OPTIMIZERS = ("adam", "adamax", "nadam")

_DEFAULT_LR = {"adam": 0.001, "adamax": 0.002, "nadam": 0.001}


class OptimizerError(Exception):
    """Unknown optimizer name, bad hyperparameter, or mismatched arrays."""


def _validate_hypers(lr: float, beta1: float, beta2: float, eps: float) -> None:
    if not lr > 0:
        raise OptimizerError(f"learning rate must be > 0, got {lr}")
    if not 0 <= beta1 < 1:
        raise OptimizerError(f"beta1 must be in [0, 1), got {beta1}")
    if not 0 <= beta2 < 1:
        raise OptimizerError(f"beta2 must be in [0, 1), got {beta2}")
    if not eps >= 0:
        raise OptimizerError(f"eps must be >= 0, got {eps}")


@dataclass(frozen=True)
class OptimizerConfig:
    """Declarative optimizer choice; epsilon is unused by adamax."""

    kind: str
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if self.kind not in OPTIMIZERS:
            raise OptimizerError(
                f"unknown optimizer {self.kind!r}; expected one of {OPTIMIZERS}")
        _validate_hypers(self.lr, self.beta1, self.beta2, self.epsilon)
        if not self.epsilon > 0:
            raise OptimizerError(f"epsilon must be > 0, got {self.epsilon}")


def default_config(kind: str) -> OptimizerConfig:
    """Canonical hypers: lr 0.001 (adam/nadam) or 0.002 (adamax)."""
    if kind not in OPTIMIZERS:
        raise OptimizerError(
            f"unknown optimizer {kind!r}; expected one of {OPTIMIZERS}")
    return OptimizerConfig(kind=kind, lr=_DEFAULT_LR[kind])


class _MomentOptimizer:
    """Shared plumbing: state allocation, shape checks, step counting."""

    #: state arrays allocated per parameter, e.g. ("m", "v")
    slots: tuple[str, ...] = ()

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8) -> None:
        _validate_hypers(lr, beta1, beta2, eps)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._state: dict[str, dict[str, np.ndarray]] = {}

    def _slot(self, path: str, array: np.ndarray) -> dict[str, np.ndarray]:
        if path not in self._state:
            self._state[path] = {s: np.zeros_like(array) for s in self.slots}
        state = self._state[path]
        if state[self.slots[0]].shape != array.shape:
            raise OptimizerError(
                f"shape of {path} changed from {state[self.slots[0]].shape} to {array.shape}")
        return state

    def step(self, params: MLPParams, grads: MLPParams) -> None:
        """Apply one update in place; params and grads must align."""
        param_view = params.param_arrays()
        grad_view = grads.param_arrays()
        if [p for p, _ in param_view] != [p for p, _ in grad_view]:
            raise OptimizerError("params and grads have different structure")
        self.t += 1
        for (path, theta), (_, g) in zip(param_view, grad_view):
            if theta.shape != g.shape:
                raise OptimizerError(
                    f"gradient shape {g.shape} != parameter shape {theta.shape} at {path}")
            if not np.isfinite(g).all():
                raise OptimizerError(f"non-finite gradient at {path}")
            self._update(theta, g, self._slot(path, theta))

    def _update(self, theta: np.ndarray, g: np.ndarray,
                state: dict[str, np.ndarray]) -> None:
        raise NotImplementedError


class Adam(_MomentOptimizer):
    slots = ("m", "v")

    def __init__(self, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8) -> None:
        super().__init__(lr, beta1, beta2, eps)

    def _update(self, theta, g, state):
        m, v = state["m"], state["v"]
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        v *= self.beta2
        v += (1.0 - self.beta2) * g * g
        m_hat = m / (1.0 - self.beta1 ** self.t)
        v_hat = v / (1.0 - self.beta2 ** self.t)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Adamax(_MomentOptimizer):
    slots = ("m", "u")

    def __init__(self, lr: float = 0.002, beta1: float = 0.9,
                 beta2: float = 0.999) -> None:
        super().__init__(lr, beta1, beta2, eps=0.0)

    def _update(self, theta, g, state):
        m, u = state["m"], state["u"]
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        np.maximum(self.beta2 * u, np.abs(g), out=u)
        scale = self.lr / (1.0 - self.beta1 ** self.t)
        theta -= scale * np.where(u > 0.0, m / np.where(u > 0.0, u, 1.0), 0.0)


class Nadam(_MomentOptimizer):
    slots = ("m", "v")

    def __init__(self, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8) -> None:
        super().__init__(lr, beta1, beta2, eps)

    def _update(self, theta, g, state):
        m, v = state["m"], state["v"]
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        v *= self.beta2
        v += (1.0 - self.beta2) * g * g
        correction1 = 1.0 - self.beta1 ** self.t
        m_hat = m / correction1
        v_hat = v / (1.0 - self.beta2 ** self.t)
        m_bar = self.beta1 * m_hat + (1.0 - self.beta1) * g / correction1
        theta -= self.lr * m_bar / (np.sqrt(v_hat) + self.eps)


_REGISTRY = {"adam": Adam, "adamax": Adamax, "nadam": Nadam}


def make_optimizer(cfg: OptimizerConfig | str) -> _MomentOptimizer:
    """Build a stateful optimizer from a config (or a bare kind name)."""
    if isinstance(cfg, str):
        cfg = default_config(cfg)
    cls = _REGISTRY[cfg.kind]
    if cfg.kind == "adamax":
        return cls(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    return cls(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.epsilon)
