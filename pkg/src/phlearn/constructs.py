"""Atomic port-Hamiltonian elements and their parametrized constitutive maps.

Element taxonomy
----------------
* flow store     : integrates its port flow,   dx/dt = f,  effort e = dH/dx
* effort store   : integrates its port effort, dx/dt = e,  flow   f = dH/dx
* resistive      : static map from the port input to the complementary
                   variable (damper f = d*e, resistor e = R*f)
* transformer    : two-port whose port flows are an explicit function of the
                   two port efforts, (f1, f2) = map(e1, e2); this is the
                   "solution form" of the implicit two-port relation
* gyrator        : two-port with crossed causality, f1 = g1(e2), f2 = g2(e1)
* flow/effort source : boundary signal imposing f(t) or e(t)

Nonnegative physical coefficients (spring stiffness, damping, inverse mass)
are stored as unconstrained reals and squared on evaluation, so the training
loop never has to project.

All evaluation routines are pure in (map, x, w): they can be called
concurrently against read-only parameter views.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import StructuralError

__all__ = [
    "Mlp",
    "EnergyMap",
    "QuadraticEnergy",
    "EvenPolyEnergy",
    "NeuralEnergy",
    "PairPotentialEnergy",
    "ResistiveMap",
    "LinearResistive",
    "NeuralResistive",
    "DistanceModulatedResistive",
    "Construct",
    "FlowStore",
    "EffortStore",
    "Resistive",
    "Transformer",
    "Gyrator",
    "FlowSource",
    "EffortSource",
    "Signal",
    "eval_energy",
    "eval_energy_gradient",
    "eval_resistive",
    "instantaneous_power",
    "mlp_eval_with_jacobians",
]


# --------------------------------------------------------------------------
# multilayer perceptron with exact jacobians
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Mlp:
    """Fully connected tanh network with a linear output layer.

    Parameters are stored flat, layer by layer: W (row-major), then b.
    For a single hidden layer the count is
    hidden*input + hidden + output*hidden + output.
    """

    input_dim: int
    hidden: tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1 or len(self.hidden) < 1:
            raise StructuralError("Mlp dimensions must be positive")
        if any(h < 1 for h in self.hidden):
            raise StructuralError("Mlp hidden sizes must be positive")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden, self.output_dim]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]

    @property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.layer_dims)

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        """Weights uniform in [-s, s] with s = 1/sqrt(fan-in); biases zero."""
        chunks = []
        for out, inp in self.layer_dims:
            s = 1.0 / np.sqrt(inp)
            chunks.append(rng.uniform(-s, s, size=out * inp))
            chunks.append(np.zeros(out))
        return np.concatenate(chunks)

    def _unpack(self, w: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        w = np.asarray(w, dtype=float).ravel()
        if w.size != self.n_params:
            raise StructuralError(
                f"Mlp expects {self.n_params} parameters, got {w.size}"
            )
        layers = []
        k = 0
        for out, inp in self.layer_dims:
            W = w[k:k + out * inp].reshape(out, inp)
            k += out * inp
            b = w[k:k + out]
            k += out
            layers.append((W, b))
        return layers

    def eval(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        return self.eval_batch(np.asarray(x, dtype=float)[None, :], w)[0]

    def eval_batch(self, X: np.ndarray, w: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.input_dim:
            raise StructuralError(
                f"Mlp expects input dim {self.input_dim}, got {X.shape[-1]}"
            )
        layers = self._unpack(w)
        a = X
        for li, (W, b) in enumerate(layers):
            z = a @ W.T + b
            a = z if li == len(layers) - 1 else np.tanh(z)
        return a

    def eval_with_jacobians(
        self, x: np.ndarray, w: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        out, Jin, Jw = self.eval_with_jacobians_batch(
            np.asarray(x, dtype=float)[None, :], w
        )
        return out[0], Jin[0], Jw[0]

    def eval_with_jacobians_batch(
        self, X: np.ndarray, w: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Batched value, d_out/d_input (B,o,i) and d_out/d_params (B,o,P)."""
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.input_dim:
            raise StructuralError(
                f"Mlp expects input dim {self.input_dim}, got {X.shape[-1]}"
            )
        layers = self._unpack(w)
        B = X.shape[0]
        acts = [X]          # a_0 .. a_L
        zs = []
        a = X
        for li, (W, b) in enumerate(layers):
            z = a @ W.T + b
            zs.append(z)
            a = z if li == len(layers) - 1 else np.tanh(z)
            acts.append(a)

        o = self.output_dim
        # G = d out / d z_l, walked backwards; starts at the linear output.
        G = np.broadcast_to(np.eye(o), (B, o, o)).copy()
        Jw = np.zeros((B, o, self.n_params))
        offset = self.n_params
        for li in range(len(layers) - 1, -1, -1):
            W, b = layers[li]
            out_dim, in_dim = W.shape
            offset -= out_dim              # bias block
            Jw[:, :, offset:offset + out_dim] = G
            offset -= out_dim * in_dim     # weight block
            # d out / d W[r, c] = G[:, :, r] * a_prev[:, c]
            blk = np.einsum("bor,bc->borc", G, acts[li])
            Jw[:, :, offset:offset + out_dim * in_dim] = blk.reshape(B, o, -1)
            G = np.einsum("bor,rc->boc", G, W)
            if li > 0:
                G = G * (1.0 - np.tanh(zs[li - 1]) ** 2)[:, None, :]
        Jin = G
        return acts[-1], Jin, Jw


def mlp_eval_with_jacobians(
    net: Mlp, inputs: np.ndarray, w: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Network output plus exact jacobians wrt inputs and flat parameters."""
    return net.eval_with_jacobians(inputs, w)


# --------------------------------------------------------------------------
# energy maps H(x; w)
# --------------------------------------------------------------------------

class EnergyMap:
    """Scalar stored-energy function of a scalar state.

    Implementations provide the value, state gradient and hessian, and the
    jacobian of the gradient with respect to the map's own raw parameters.
    """

    n_params: int = 0
    trainable_default: bool = True

    def default_raw(self, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        return np.zeros(self.n_params)

    def value(self, x: float, w: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: float, w: np.ndarray) -> float:
        raise NotImplementedError

    def hess(self, x: float, w: np.ndarray) -> float:
        raise NotImplementedError

    def grad_w(self, x: float, w: np.ndarray) -> np.ndarray:
        """d(grad)/d(raw params), shape (n_params,)."""
        raise NotImplementedError

    def _check(self, w) -> np.ndarray:
        w = np.zeros(0) if w is None else np.asarray(w, dtype=float).ravel()
        if w.size != self.n_params:
            raise StructuralError(
                f"{type(self).__name__} expects {self.n_params} parameters, got {w.size}"
            )
        return w


@dataclass(frozen=True)
class QuadraticEnergy(EnergyMap):
    """H(x) = c/2 * x^2 with c = w^2 (spring stiffness, inverse mass, ...)."""

    coefficient: float = 1.0
    n_params = 1

    def default_raw(self, rng=None) -> np.ndarray:
        if self.coefficient < 0:
            raise StructuralError("quadratic coefficient must be >= 0")
        return np.array([np.sqrt(self.coefficient)])

    def value(self, x, w):
        w = self._check(w)
        return 0.5 * w[0] ** 2 * x * x

    def grad(self, x, w):
        w = self._check(w)
        return w[0] ** 2 * x

    def hess(self, x, w):
        w = self._check(w)
        return w[0] ** 2

    def grad_w(self, x, w):
        w = self._check(w)
        return np.array([2.0 * w[0] * x])


@dataclass(frozen=True)
class EvenPolyEnergy(EnergyMap):
    """H(x) = sum_i a_i x^(2i), a_i = w_i^2, i = 1..degree.

    Nonnegative everywhere with H(0) = 0 and a vanishing gradient at the
    origin; degree 3 by default to capture hardening-spring behavior.
    """

    coefficients: tuple[float, ...] = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.coefficients) < 1:
            raise StructuralError("even polynomial needs at least one coefficient")
        if any(a < 0 for a in self.coefficients):
            raise StructuralError("even polynomial coefficients must be >= 0")

    @property
    def n_params(self) -> int:  # type: ignore[override]
        return len(self.coefficients)

    def default_raw(self, rng=None) -> np.ndarray:
        return np.sqrt(np.asarray(self.coefficients, dtype=float))

    def value(self, x, w):
        w = self._check(w)
        s = x * x
        return sum((w[i] ** 2) * s ** (i + 1) for i in range(w.size))

    def grad(self, x, w):
        w = self._check(w)
        s = x * x
        return sum((w[i] ** 2) * 2 * (i + 1) * s ** i * x for i in range(w.size))

    def hess(self, x, w):
        w = self._check(w)
        total = 0.0
        for i in range(w.size):
            k = 2 * (i + 1)
            total += (w[i] ** 2) * k * (k - 1) * x ** (k - 2)
        return total

    def grad_w(self, x, w):
        w = self._check(w)
        s = x * x
        return np.array(
            [2.0 * w[i] * 2 * (i + 1) * s ** i * x for i in range(w.size)]
        )


@dataclass(frozen=True)
class NeuralEnergy(EnergyMap):
    """H(x) = scalar tanh network of the state; no sign guarantee."""

    hidden: tuple[int, ...] = (16,)

    @property
    def net(self) -> Mlp:
        return Mlp(1, self.hidden, 1)

    @property
    def n_params(self) -> int:  # type: ignore[override]
        return self.net.n_params

    def default_raw(self, rng=None) -> np.ndarray:
        rng = rng or np.random.default_rng(0)
        return self.net.init_params(rng)

    def value(self, x, w):
        return float(self.net.eval(np.array([x]), self._check(w))[0])

    def grad(self, x, w):
        _, Jin, _ = self.net.eval_with_jacobians(np.array([x]), self._check(w))
        return float(Jin[0, 0])

    def hess(self, x, w):
        # Analytic second derivative for the single-hidden-layer case; deeper
        # stacks fall back to a central difference of the exact gradient.
        w = self._check(w)
        if len(self.hidden) == 1:
            (W1, b1), (W2, _) = self.net._unpack(w)
            z = W1[:, 0] * x + b1
            t = np.tanh(z)
            return float(np.sum(W2[0] * (-2.0 * t * (1 - t ** 2)) * W1[:, 0] ** 2))
        eps = 1e-6 * max(1.0, abs(x))
        return (self.grad(x + eps, w) - self.grad(x - eps, w)) / (2 * eps)

    def grad_w(self, x, w):
        w = self._check(w)
        if len(self.hidden) == 1:
            (W1, b1), (W2, _) = self.net._unpack(w)
            h = self.hidden[0]
            z = W1[:, 0] * x + b1
            t = np.tanh(z)
            sech2 = 1 - t ** 2
            out = np.zeros(self.n_params)
            # layout: W1 (h), b1 (h), W2 (h), b2 (1)
            # grad = sum_h W2_h sech2_h W1_h
            out[0:h] = W2[0] * (sech2 + W1[:, 0] * (-2 * t * sech2) * x)
            out[h:2 * h] = W2[0] * (-2 * t * sech2) * W1[:, 0]
            out[2 * h:3 * h] = sech2 * W1[:, 0]
            # b2 does not enter the gradient
            return out
        eps = 1e-6
        out = np.zeros(self.n_params)
        for i in range(self.n_params):
            wp = w.copy(); wp[i] += eps
            wm = w.copy(); wm[i] -= eps
            out[i] = (self.grad(x, wp) - self.grad(x, wm)) / (2 * eps)
        return out


@dataclass(frozen=True)
class PairPotentialEnergy(EnergyMap):
    """Fixed symmetric pair energy H(q) = weight * U(|q|) for swarm links.

    U(r) = -c_attract*exp(-r/l_attract) + c_repel*exp(-r/l_repel); the
    gradient U'(|q|)*sign(q) is odd, matching an interaction force that is
    repulsive at short range and attractive at long range.
    """

    c_attract: float = 200.0
    l_attract: float = 100.0
    c_repel: float = 500.0
    l_repel: float = 2.0
    weight: float = 1.0
    n_params = 0
    trainable_default = False

    def _u(self, r):
        return (-self.c_attract * np.exp(-r / self.l_attract)
                + self.c_repel * np.exp(-r / self.l_repel))

    def _du(self, r):
        return (self.c_attract / self.l_attract * np.exp(-r / self.l_attract)
                - self.c_repel / self.l_repel * np.exp(-r / self.l_repel))

    def _d2u(self, r):
        return (-self.c_attract / self.l_attract ** 2 * np.exp(-r / self.l_attract)
                + self.c_repel / self.l_repel ** 2 * np.exp(-r / self.l_repel))

    def value(self, x, w):
        self._check(w)
        return self.weight * self._u(abs(x))

    def grad(self, x, w):
        self._check(w)
        return self.weight * self._du(abs(x)) * np.sign(x)

    def hess(self, x, w):
        self._check(w)
        return self.weight * self._d2u(abs(x))

    def grad_w(self, x, w):
        self._check(w)
        return np.zeros(0)


# --------------------------------------------------------------------------
# resistive maps
# --------------------------------------------------------------------------

class ResistiveMap:
    """Static map from the junction-shared variable to its complement.

    At a common-effort junction the input is the effort and the output a flow
    (damper); at a common-flow junction the roles swap (resistor).
    """

    n_params: int = 0
    trainable_default: bool = True

    def default_raw(self, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        return np.zeros(self.n_params)

    def value(self, e: float, w: np.ndarray, s: float = 0.0) -> float:
        raise NotImplementedError

    def d_e(self, e: float, w: np.ndarray, s: float = 0.0) -> float:
        raise NotImplementedError

    def d_w(self, e: float, w: np.ndarray, s: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def d_s(self, e: float, w: np.ndarray, s: float = 0.0) -> float:
        """Derivative wrt the modulating state (zero unless modulated)."""
        return 0.0

    def _check(self, w) -> np.ndarray:
        w = np.zeros(0) if w is None else np.asarray(w, dtype=float).ravel()
        if w.size != self.n_params:
            raise StructuralError(
                f"{type(self).__name__} expects {self.n_params} parameters, got {w.size}"
            )
        return w


@dataclass(frozen=True)
class LinearResistive(ResistiveMap):
    """f = d * e with d = w^2 >= 0, so e*f >= 0 always."""

    coefficient: float = 1.0
    n_params = 1

    def default_raw(self, rng=None) -> np.ndarray:
        if self.coefficient < 0:
            raise StructuralError("damping coefficient must be >= 0")
        return np.array([np.sqrt(self.coefficient)])

    def value(self, e, w, s=0.0):
        w = self._check(w)
        return w[0] ** 2 * e

    def d_e(self, e, w, s=0.0):
        w = self._check(w)
        return w[0] ** 2

    def d_w(self, e, w, s=0.0):
        w = self._check(w)
        return np.array([2.0 * w[0] * e])


@dataclass(frozen=True)
class NeuralResistive(ResistiveMap):
    """f = tanh-network(e); sign of e*f is not constrained."""

    hidden: tuple[int, ...] = (16,)

    @property
    def net(self) -> Mlp:
        return Mlp(1, self.hidden, 1)

    @property
    def n_params(self) -> int:  # type: ignore[override]
        return self.net.n_params

    def default_raw(self, rng=None) -> np.ndarray:
        rng = rng or np.random.default_rng(0)
        return self.net.init_params(rng)

    def value(self, e, w, s=0.0):
        return float(self.net.eval(np.array([e]), self._check(w))[0])

    def d_e(self, e, w, s=0.0):
        _, Jin, _ = self.net.eval_with_jacobians(np.array([e]), self._check(w))
        return float(Jin[0, 0])

    def d_w(self, e, w, s=0.0):
        _, _, Jw = self.net.eval_with_jacobians(np.array([e]), self._check(w))
        return Jw[0]


@dataclass(frozen=True)
class DistanceModulatedResistive(ResistiveMap):
    """f = weight * (1 + s^2)^(-gamma) * e, gated by a companion elongation s.

    Fixed (non-trainable) map used for velocity-alignment dampers whose
    strength decays with the link's relative distance.
    """

    gamma: float = 0.15
    weight: float = 1.0
    n_params = 0
    trainable_default = False

    def _gate(self, s):
        return self.weight * (1.0 + s * s) ** (-self.gamma)

    def value(self, e, w, s=0.0):
        self._check(w)
        return self._gate(s) * e

    def d_e(self, e, w, s=0.0):
        self._check(w)
        return self._gate(s)

    def d_w(self, e, w, s=0.0):
        self._check(w)
        return np.zeros(0)

    def d_s(self, e, w, s=0.0):
        self._check(w)
        dgate = self.weight * (-self.gamma) * (1.0 + s * s) ** (-self.gamma - 1) * 2 * s
        return dgate * e


# --------------------------------------------------------------------------
# boundary signals
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Signal:
    """Serializable time signal for boundary sources."""

    kind: str = "zero"          # zero | constant | step | sine
    value: float = 0.0
    t0: float = 0.0
    frequency: float = 1.0

    def __call__(self, t: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.value
        if self.kind == "step":
            return self.value if t >= self.t0 else 0.0
        if self.kind == "sine":
            return self.value * np.sin(2.0 * np.pi * self.frequency * t)
        raise StructuralError(f"unknown signal kind {self.kind!r}")


# --------------------------------------------------------------------------
# constructs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Construct:
    """Base record for one network element; subclasses define the variant."""

    id: str

    @property
    def n_ports(self) -> int:
        return 1

    @property
    def n_params(self) -> int:
        return 0


@dataclass(frozen=True)
class FlowStore(Construct):
    """Integrates flow into a state; its effort dH/dx drives its junctions.

    With n_ports > 1 the same effort is shared by every attached junction and
    the state collects the flow received through all ports (a mass linked to
    several neighbors).
    """

    energy: EnergyMap = field(default_factory=QuadraticEnergy)
    ports: int = 1
    trainable: bool = True

    @property
    def n_ports(self) -> int:
        return self.ports

    @property
    def n_params(self) -> int:
        return self.energy.n_params if self.trainable else 0


@dataclass(frozen=True)
class EffortStore(Construct):
    """Integrates effort into a state, pushing flow dH/dx into its junction.

    Two-port form spans a pair of junctions and sees the effort difference
    e(port0) - e(port1), pushing +f / -f into them (a spring between two
    moving masses).
    """

    energy: EnergyMap = field(default_factory=QuadraticEnergy)
    ports: int = 1
    trainable: bool = True

    @property
    def n_ports(self) -> int:
        return self.ports

    @property
    def n_params(self) -> int:
        return self.energy.n_params if self.trainable else 0


@dataclass(frozen=True)
class Resistive(Construct):
    """Static dissipator; optionally modulated by a companion store's state."""

    map: ResistiveMap = field(default_factory=LinearResistive)
    ports: int = 1
    trainable: bool = True
    modulator: Optional[str] = None

    @property
    def n_ports(self) -> int:
        return self.ports

    @property
    def n_params(self) -> int:
        return self.map.n_params if self.trainable else 0


@dataclass(frozen=True)
class Transformer(Construct):
    """Two-port in solution form: port flows from both port efforts.

    The implicit constitutive relation g(e1, f1, e2, f2) = 0 of a physical
    two-port would close an algebraic loop; here the loop's explicit solution
    (f1, f2) = map(e1, e2) is the modeling primitive.
    """

    map: Mlp = field(default_factory=lambda: Mlp(2, (16,), 2))
    trainable: bool = True

    def __post_init__(self):
        if self.map.input_dim != 2 or self.map.output_dim != 2:
            raise StructuralError("transformer map must be 2 -> 2")

    @property
    def n_ports(self) -> int:
        return 2

    @property
    def n_params(self) -> int:
        return self.map.n_params if self.trainable else 0


@dataclass(frozen=True)
class Gyrator(Construct):
    """Two-port with crossed causality: f1 = g1(e2), f2 = g2(e1)."""

    g1: ResistiveMap = field(default_factory=LinearResistive)
    g2: ResistiveMap = field(default_factory=LinearResistive)
    trainable: bool = True

    @property
    def n_ports(self) -> int:
        return 2

    @property
    def n_params(self) -> int:
        return (self.g1.n_params + self.g2.n_params) if self.trainable else 0


@dataclass(frozen=True)
class FlowSource(Construct):
    """Boundary element imposing a flow f(t); owns no parameters."""

    signal: Signal = field(default_factory=Signal)


@dataclass(frozen=True)
class EffortSource(Construct):
    """Boundary element imposing an effort e(t); owns no parameters."""

    signal: Signal = field(default_factory=Signal)


SOURCE_TYPES = (FlowSource, EffortSource)
STORE_TYPES = (FlowStore, EffortStore)


# --------------------------------------------------------------------------
# module-level operations
# --------------------------------------------------------------------------

def eval_energy(emap: EnergyMap, x: float, w=None) -> float:
    """Stored energy H(x; w); raw parameters default to the map's own."""
    if not np.isfinite(x):
        raise StructuralError("state must be finite")
    if w is None:
        w = emap.default_raw()
    return float(emap.value(float(x), w))


def eval_energy_gradient(emap: EnergyMap, x: float, w=None) -> float:
    """dH/dx, the store's complementary port variable (effort or flow)."""
    if not np.isfinite(x):
        raise StructuralError("state must be finite")
    if w is None:
        w = emap.default_raw()
    return float(emap.grad(float(x), w))


def eval_resistive(rmap: ResistiveMap, e: float, w=None, s: float = 0.0) -> float:
    """Resistive output for input e (flow for a damper, effort for a resistor)."""
    if not np.isfinite(e):
        raise StructuralError("input must be finite")
    if w is None:
        w = rmap.default_raw()
    return float(rmap.value(float(e), w, float(s)))


def instantaneous_power(e, f) -> float:
    """p = e . f for scalar or equal-length vector port variables."""
    e = np.atleast_1d(np.asarray(e, dtype=float))
    f = np.atleast_1d(np.asarray(f, dtype=float))
    if e.shape != f.shape:
        raise StructuralError(f"effort/flow shapes differ: {e.shape} vs {f.shape}")
    return float(e @ f)
