"""Networks of port-Hamiltonian constructs: composition, checking, assembly.

A network joins construct ports through two junction kinds:

* common-effort: every attached port sees the same effort; the signed port
  flows balance to zero.
* common-flow: every attached port carries the same flow; the signed port
  efforts balance to zero.

Causality is explicit. Each junction must contain exactly one *defining*
port (a flow store or effort source at a common-effort junction; an effort
store or flow source at a common-flow junction). The defining element fixes
the shared variable from its own state or signal and absorbs the balance
residual; every other port produces its variable from an explicit map. A
junction without such a port would close an implicit algebraic loop and is
rejected; the modeler replaces the looped maps with their explicit solution
(see `constructs.Transformer`).

Floating two-port stores and dissipators (springs/dampers between two moving
masses) read the effort difference e(port0) - e(port1) and push +f / -f into
the two junctions, so action-reaction pairing is structural.

Assembled systems are pure and reentrant: many trajectories may be
integrated concurrently against one read-only system and parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import constructs as con
from .ad import Jet, jet_const, seed_states
from .errors import AlgebraicLoopError, StructuralError
from .params import ParamVector, build_param_vector

__all__ = [
    "PortRef",
    "Junction",
    "Network",
    "OdeSystem",
    "check_dirac",
    "assemble_ode",
    "link_flows",
    "build_layered_network",
]


# --------------------------------------------------------------------------
# graph types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PortRef:
    """Reference to one construct port with its balance sign."""

    construct: str
    port: int = 0
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise StructuralError(f"port sign must be +-1, got {self.sign}")


@dataclass
class Junction:
    """Interconnection node; kind 'effort' shares effort, 'flow' shares flow."""

    kind: str
    ports: list[PortRef]
    id: str = ""

    def __post_init__(self):
        if self.kind not in ("effort", "flow"):
            raise StructuralError(f"junction kind must be effort|flow, got {self.kind!r}")


@dataclass
class Network:
    """Constructs wired through junctions, with boundary and observation lists.

    `boundary` lists the source ids in input order; `observed` holds
    (kind, construct_id[, port]) tuples with kind in {state, effort, flow}
    defining the output vector y.
    """

    constructs: list[con.Construct]
    junctions: list[Junction]
    boundary: list[str] = field(default_factory=list)
    observed: list[tuple] = field(default_factory=list)
    _compiled: Optional["_Compiled"] = field(default=None, repr=False, compare=False)

    def compiled(self, seed: int = 0) -> "_Compiled":
        if self._compiled is None or self._compiled.seed != seed:
            self._compiled = _Compiled(self, seed)
        return self._compiled


# --------------------------------------------------------------------------
# assembled explicit system
# --------------------------------------------------------------------------

@dataclass
class OdeSystem:
    """Explicit dynamics dx/dt = f(x, u, t; w) with analytic partials.

    Builders populate the optional evaluators when the underlying structure
    supports them (per-link flows, per-element powers, total stored energy).
    All callables are pure; `params` carries the initial parameter vector and
    the slice table used by d f / d w.
    """

    state_dim: int
    param_dim: int
    input_dim: int
    output_dim: int
    rhs: Callable
    rhs_partials: Callable
    output: Callable
    output_partials: Callable
    params: ParamVector
    state_names: list[str] = field(default_factory=list)
    input_names: list[str] = field(default_factory=list)
    output_names: list[str] = field(default_factory=list)
    link_names: list[str] = field(default_factory=list)
    link_flows: Optional[Callable] = None
    link_flow_partials: Optional[Callable] = None
    element_power_names: list[str] = field(default_factory=list)
    element_powers: Optional[Callable] = None
    element_power_partials: Optional[Callable] = None
    energy: Optional[Callable] = None
    source_power: Optional[Callable] = None
    default_input: Optional[Callable] = None


# --------------------------------------------------------------------------
# compilation
# --------------------------------------------------------------------------

class _Elem:
    """Resolved per-construct record used by the evaluator."""

    __slots__ = (
        "c", "kind", "port_junction", "port_sigma", "state_slot",
        "w_slice", "fixed_raw", "u_index", "modulator_slot",
    )

    def __init__(self, c: con.Construct):
        self.c = c
        self.kind = _kind_of(c)
        self.port_junction: list[int] = [-1] * c.n_ports
        self.port_sigma: list[int] = [1] * c.n_ports
        self.state_slot: Optional[int] = None
        self.w_slice: Optional[slice] = None
        self.fixed_raw: Optional[np.ndarray] = None
        self.u_index: Optional[int] = None
        self.modulator_slot: Optional[int] = None


def _kind_of(c: con.Construct) -> str:
    if isinstance(c, con.FlowStore):
        return "flow_store"
    if isinstance(c, con.EffortStore):
        return "effort_store"
    if isinstance(c, con.Resistive):
        return "resistive"
    if isinstance(c, con.Transformer):
        return "transformer"
    if isinstance(c, con.Gyrator):
        return "gyrator"
    if isinstance(c, con.FlowSource):
        return "flow_source"
    if isinstance(c, con.EffortSource):
        return "effort_source"
    raise StructuralError(f"unknown construct type {type(c).__name__}")


class _Compiled:
    """Validated network with a fixed evaluation order and parameter layout."""

    def __init__(self, net: Network, seed: int = 0):
        self.seed = seed
        rng = np.random.default_rng(seed)

        ids = [c.id for c in net.constructs]
        if len(set(ids)) != len(ids):
            raise StructuralError("construct ids must be unique")
        order = sorted(range(len(net.constructs)), key=lambda i: net.constructs[i].id)
        self.elements = [_Elem(net.constructs[i]) for i in order]
        self.index = {e.c.id: k for k, e in enumerate(self.elements)}

        # state slots: one per store, sorted by construct id
        self.state_names: list[str] = []
        for e in self.elements:
            if e.kind in ("flow_store", "effort_store"):
                if getattr(e.c, "state_dim", 1) != 1:
                    raise StructuralError(
                        f"store {e.c.id!r}: only scalar states are assembled"
                    )
                e.state_slot = len(self.state_names)
                self.state_names.append(e.c.id)
        self.n = len(self.state_names)

        # parameter layout: trainable constructs sorted by id
        blocks = []
        for e in self.elements:
            maps = _maps_of(e.c)
            raw = np.concatenate([m.default_raw(rng) for m in maps]) if maps else np.zeros(0)
            if getattr(e.c, "trainable", False) and raw.size:
                blocks.append((e.c.id, raw))
            else:
                e.fixed_raw = raw
        self.params = build_param_vector(blocks)
        for e in self.elements:
            if e.c.id in self.params.slices:
                e.w_slice = self.params.slices[e.c.id]
        self.m = self.params.size

        # boundary: sources in declared input order
        source_ids = {e.c.id for e in self.elements if e.kind.endswith("_source")}
        if set(net.boundary) != source_ids:
            raise StructuralError(
                f"boundary {net.boundary} must list exactly the sources {sorted(source_ids)}"
            )
        if len(set(net.boundary)) != len(net.boundary):
            raise StructuralError("duplicate boundary entries")
        self.input_names = list(net.boundary)
        for ui, sid in enumerate(net.boundary):
            self.elements[self.index[sid]].u_index = ui
        self.k = len(self.input_names)

        # junction wiring
        self.junctions: list[dict] = []
        attached: dict[tuple[str, int], int] = {}
        for ji, j in enumerate(net.junctions):
            entries = []
            for p in j.ports:
                if p.construct not in self.index:
                    raise StructuralError(f"junction references unknown construct {p.construct!r}")
                ei = self.index[p.construct]
                e = self.elements[ei]
                if not (0 <= p.port < e.c.n_ports):
                    raise StructuralError(
                        f"construct {p.construct!r} has no port {p.port}"
                    )
                key = (p.construct, p.port)
                if key in attached:
                    raise StructuralError(
                        f"port {key} attached to more than one junction"
                    )
                attached[key] = ji
                e.port_junction[p.port] = ji
                e.port_sigma[p.port] = p.sign
                entries.append((ei, p.port, p.sign))
            self.junctions.append(
                {"kind": j.kind, "entries": entries, "id": j.id or f"junction{ji}"}
            )

        for e in self.elements:
            for pi in range(e.c.n_ports):
                if e.port_junction[pi] < 0:
                    raise StructuralError(
                        f"unattached port: construct {e.c.id!r} port {pi}"
                    )

        self._validate_causality()
        self._validate_topology(net)

        # modulated dissipators read a companion store's state
        for e in self.elements:
            if e.kind == "resistive" and e.c.modulator is not None:
                mod = self.index.get(e.c.modulator)
                if mod is None or self.elements[mod].state_slot is None:
                    raise StructuralError(
                        f"resistive {e.c.id!r}: modulator {e.c.modulator!r} is not a store"
                    )
                e.modulator_slot = self.elements[mod].state_slot

        # observation rows
        self.observed: list[tuple] = []
        self.output_names: list[str] = []
        for obs in net.observed:
            kind, cid = obs[0], obs[1]
            port = obs[2] if len(obs) > 2 else 0
            if kind not in ("state", "effort", "flow"):
                raise StructuralError(f"unknown observed kind {kind!r}")
            if cid not in self.index:
                raise StructuralError(f"observed construct {cid!r} does not exist")
            self.observed.append((kind, self.index[cid], port))
            self.output_names.append(f"{kind}:{cid}" + (f"[{port}]" if len(obs) > 2 else ""))
        self.p = len(self.observed)

        # links: one flow per non-source element, one per two-port port
        self.links: list[tuple[int, int]] = []
        self.link_names: list[str] = []
        for k, e in enumerate(self.elements):
            if e.kind in ("flow_store", "effort_store", "resistive"):
                self.links.append((k, 0))
                self.link_names.append(e.c.id)
            elif e.kind in ("transformer", "gyrator"):
                self.links.append((k, 0))
                self.links.append((k, 1))
                self.link_names.append(f"{e.c.id}[0]")
                self.link_names.append(f"{e.c.id}[1]")

        self.power_names = [
            e.c.id for e in self.elements
            if e.kind in ("resistive", "transformer", "gyrator")
        ]

    # -- validation ---------------------------------------------------------

    def _validate_causality(self):
        for j in self.junctions:
            defs = []
            for ent in j["entries"]:
                e = self.elements[ent[0]]
                if j["kind"] == "effort" and e.kind in ("flow_store", "effort_source"):
                    defs.append(ent)
                if j["kind"] == "flow" and e.kind in ("effort_store", "flow_source"):
                    defs.append(ent)
            if not defs:
                raise AlgebraicLoopError(
                    j["id"], [self.elements[ent[0]].c.id for ent in j["entries"]]
                )
            if len(defs) > 1:
                names = [self.elements[d[0]].c.id for d in defs]
                raise StructuralError(
                    f"junction {j['id']!r}: multiple defining ports {names}; "
                    "the shared variable would be over-determined"
                )
            j["definer"] = defs[0]

        for e in self.elements:
            kinds = [self.junctions[ji]["kind"] for ji in e.port_junction]
            if e.kind in ("transformer", "gyrator") and any(k != "effort" for k in kinds):
                raise StructuralError(
                    f"two-port {e.c.id!r} must attach to common-effort junctions"
                )
            if e.c.n_ports == 2 and e.kind in ("effort_store", "resistive"):
                if any(k != "effort" for k in kinds):
                    raise StructuralError(
                        f"floating element {e.c.id!r} must span common-effort junctions"
                    )

    def _validate_topology(self, net: Network):
        if not self.junctions:
            raise StructuralError("network has no junctions")
        # connectivity over the element/junction bipartite graph
        adj: dict[int, set[int]] = {ji: set() for ji in range(len(self.junctions))}
        for k, e in enumerate(self.elements):
            for ji in e.port_junction:
                adj[ji].add(k)
        seen_j, seen_e = {0}, set()
        frontier = [0]
        while frontier:
            ji = frontier.pop()
            for k in adj[ji]:
                if k in seen_e:
                    continue
                seen_e.add(k)
                for ji2 in self.elements[k].port_junction:
                    if ji2 not in seen_j:
                        seen_j.add(ji2)
                        frontier.append(ji2)
        if len(seen_e) != len(self.elements) or len(seen_j) != len(self.junctions):
            raise StructuralError("network graph is not connected")

    # -- evaluation ---------------------------------------------------------

    def _raw(self, e: _Elem, w):
        if e.w_slice is not None:
            return w[e.w_slice]
        return e.fixed_raw

    def evaluate(self, x, u, t, w, jets: bool = False) -> dict:
        """One pass over the network; floats or Jets depending on `jets`."""
        n, m = self.n, self.m
        w = np.asarray(w, dtype=float)
        if w.size != m:
            raise StructuralError(f"expected {m} parameters, got {w.size}")
        u = np.zeros(self.k) if u is None else np.asarray(u, dtype=float)
        if u.size != self.k:
            raise StructuralError(f"expected {self.k} inputs, got {u.size}")
        x = np.asarray(x, dtype=float)
        if x.size != n:
            raise StructuralError(f"expected {n} states, got {x.size}")

        if jets:
            xs = seed_states(x, m)
            us = [jet_const(v, n, m) for v in u]
            zero = jet_const(0.0, n, m)
        else:
            xs = [float(v) for v in x]
            us = [float(v) for v in u]
            zero = 0.0

        def scatter(vec, sl):
            out = np.zeros(m)
            if sl is not None and vec.size:
                out[sl] = vec
            return out

        def store_grad(e: _Elem):
            q = xs[e.state_slot]
            raw = self._raw(e, w)
            emap = e.c.energy
            if not jets:
                return emap.grad(q, raw)
            g = emap.grad(q.val, raw)
            h = emap.hess(q.val, raw)
            dw = h * q.dw
            if e.w_slice is not None:
                dw = dw + scatter(emap.grad_w(q.val, raw), e.w_slice)
            return Jet(g, h * q.dx, dw)

        def resistive_out(e: _Elem, inp):
            raw = self._raw(e, w)
            rmap = e.c.map
            s = xs[e.modulator_slot] if e.modulator_slot is not None else zero
            if not jets:
                return rmap.value(inp, raw, s)
            v = rmap.value(inp.val, raw, s.val)
            de = rmap.d_e(inp.val, raw, s.val)
            ds = rmap.d_s(inp.val, raw, s.val)
            dx = de * inp.dx + ds * s.dx
            dw = de * inp.dw + ds * s.dw
            if e.w_slice is not None:
                dw = dw + scatter(rmap.d_w(inp.val, raw, s.val), e.w_slice)
            return Jet(v, dx, dw)

        def scalar_map_out(smap, raw, sl, inp):
            if not jets:
                return smap.value(inp, raw)
            v = smap.value(inp.val, raw)
            de = smap.d_e(inp.val, raw)
            dw = de * inp.dw
            if sl is not None:
                dw = dw + scatter(smap.d_w(inp.val, raw), sl)
            return Jet(v, de * inp.dx, dw)

        def mlp_out(e: _Elem, e1, e2):
            raw = self._raw(e, w)
            net_ = e.c.map
            if not jets:
                vals = net_.eval(np.array([e1, e2]), raw)
                return vals[0], vals[1]
            vals, jin, jw = net_.eval_with_jacobians(
                np.array([e1.val, e2.val]), raw
            )
            outs = []
            for i in range(2):
                dx = jin[i, 0] * e1.dx + jin[i, 1] * e2.dx
                dw = jin[i, 0] * e1.dw + jin[i, 1] * e2.dw
                if e.w_slice is not None:
                    dw = dw + scatter(jw[i], e.w_slice)
                outs.append(Jet(vals[i], dx, dw))
            return outs[0], outs[1]

        nelem = len(self.elements)
        shared = [None] * len(self.junctions)   # junction effort or flow
        eff = [None] * nelem                    # constitutive effort per element
        flo = [None] * nelem                    # constitutive flow per element
        xdot = [zero] * n

        # pass 1: shared junction variables from the defining ports
        for ji, j in enumerate(self.junctions):
            ei, _, _ = j["definer"]
            e = self.elements[ei]
            if e.kind in ("flow_store", "effort_store"):
                shared[ji] = store_grad(e)
            else:
                shared[ji] = us[e.u_index]

        # pass 2: explicit element outputs
        for ei, e in enumerate(self.elements):
            jk = [self.junctions[ji]["kind"] for ji in e.port_junction]
            if e.kind == "flow_store":
                eff[ei] = store_grad(e)
            elif e.kind == "effort_store":
                flo[ei] = store_grad(e)
                if all(k == "effort" for k in jk):
                    e_in = shared[e.port_junction[0]]
                    if e.c.n_ports == 2:
                        e_in = e_in - shared[e.port_junction[1]]
                    eff[ei] = e_in
                    xdot[e.state_slot] = e_in
            elif e.kind == "resistive":
                if jk[0] == "effort":
                    e_in = shared[e.port_junction[0]]
                    if e.c.n_ports == 2:
                        e_in = e_in - shared[e.port_junction[1]]
                    eff[ei] = e_in
                    flo[ei] = resistive_out(e, e_in)
                else:
                    flo[ei] = shared[e.port_junction[0]]
                    eff[ei] = resistive_out(e, flo[ei])
            elif e.kind == "transformer":
                e1 = shared[e.port_junction[0]]
                e2 = shared[e.port_junction[1]]
                eff[ei] = (e1, e2)
                flo[ei] = mlp_out(e, e1, e2)
            elif e.kind == "gyrator":
                e1 = shared[e.port_junction[0]]
                e2 = shared[e.port_junction[1]]
                eff[ei] = (e1, e2)
                raws = self._raw(e, w)
                n1 = e.c.g1.n_params
                sl = e.w_slice
                sl1 = slice(sl.start, sl.start + n1) if sl is not None else None
                sl2 = slice(sl.start + n1, sl.stop) if sl is not None else None
                f1 = scalar_map_out(e.c.g1, raws[:n1], sl1, e2)
                f2 = scalar_map_out(e.c.g2, raws[n1:], sl2, e1)
                flo[ei] = (f1, f2)
            elif e.kind == "flow_source":
                if jk[0] == "effort":
                    flo[ei] = us[e.u_index]
                    eff[ei] = shared[e.port_junction[0]]
                else:
                    flo[ei] = shared[e.port_junction[0]]
            elif e.kind == "effort_source":
                if jk[0] == "flow":
                    eff[ei] = us[e.u_index]
                    flo[ei] = shared[e.port_junction[0]]
                else:
                    eff[ei] = shared[e.port_junction[0]]

        def port_flow(ei: int, port: int):
            e = self.elements[ei]
            f = flo[ei]
            if e.kind in ("transformer", "gyrator"):
                return f[port]
            if e.c.n_ports == 2:
                return f if port == 0 else -f
            return f

        # pass 3: junction balances fix the defining ports' variables
        junction_residual = []
        for ji, j in enumerate(self.junctions):
            d_ei, d_port, d_sigma = j["definer"]
            e = self.elements[d_ei]
            if j["kind"] == "effort":
                total = zero
                for ei, port, sigma in j["entries"]:
                    if (ei, port) == (d_ei, d_port):
                        continue
                    total = total + sigma * port_flow(ei, port)
                residual_flow = -d_sigma * total
                if e.kind == "flow_store":
                    xdot[e.state_slot] = xdot[e.state_slot] + residual_flow
                    prev = flo[d_ei]
                    flo[d_ei] = residual_flow if prev is None else prev + residual_flow
                else:
                    flo[d_ei] = residual_flow
                junction_residual.append(d_sigma * residual_flow + total)
            else:
                total = zero
                for ei, port, sigma in j["entries"]:
                    if (ei, port) == (d_ei, d_port):
                        continue
                    total = total + sigma * eff[ei]
                residual_effort = -d_sigma * total
                if e.kind == "effort_store":
                    xdot[e.state_slot] = residual_effort
                    eff[d_ei] = residual_effort
                else:
                    eff[d_ei] = residual_effort
                junction_residual.append(d_sigma * residual_effort + total)

        # flow-store contributor ports at common-flow junctions (e.g. capacitor)
        for ei, e in enumerate(self.elements):
            if e.kind != "flow_store":
                continue
            for port, ji in enumerate(e.port_junction):
                j = self.junctions[ji]
                if j["kind"] != "flow":
                    continue
                sigma = e.port_sigma[port]
                f_in = sigma * shared[ji]
                xdot[e.state_slot] = xdot[e.state_slot] + f_in
                prev = flo[ei]
                flo[ei] = f_in if prev is None else prev + f_in

        return {
            "xdot": xdot,
            "shared": shared,
            "eff": eff,
            "flo": flo,
            "junction_residual": junction_residual,
        }

    # -- derived quantities --------------------------------------------------

    def outputs(self, x, u, t, w, ev: dict, xs=None):
        vals = []
        for kind, ei, port in self.observed:
            e = self.elements[ei]
            if kind == "state":
                vals.append(xs[e.state_slot] if xs is not None else x[e.state_slot])
            elif kind == "effort":
                v = ev["eff"][ei]
                vals.append(v[port] if isinstance(v, tuple) else v)
            else:
                f = ev["flo"][ei]
                vals.append(f[port] if isinstance(f, tuple) else f)
        return vals

    def link_values(self, ev: dict):
        vals = []
        for ei, port in self.links:
            e = self.elements[ei]
            f = ev["flo"][ei]
            vals.append(f[port] if isinstance(f, tuple) else f)
        return vals

    def element_power_values(self, ev: dict):
        vals = []
        for ei, e in enumerate(self.elements):
            if e.kind == "resistive":
                vals.append(ev["eff"][ei] * ev["flo"][ei])
            elif e.kind in ("transformer", "gyrator"):
                (e1, e2), (f1, f2) = ev["eff"][ei], ev["flo"][ei]
                vals.append(e1 * f1 + e2 * f2)
        return vals

    def power_accounts(self, ev: dict):
        """(store energy rates, dissipated powers, supplied source powers)."""
        store_rates, dissipated, supplied = [], [], []
        for ei, e in enumerate(self.elements):
            if e.kind in ("flow_store", "effort_store"):
                grad = ev["eff"][ei] if e.kind == "flow_store" else ev["flo"][ei]
                store_rates.append(grad * ev["xdot"][e.state_slot])
            elif e.kind in ("resistive", "transformer", "gyrator"):
                pass
            else:
                sigma = e.port_sigma[0]
                supplied.append(-sigma * ev["eff"][ei] * ev["flo"][ei])
        dissipated = self.element_power_values(ev)
        return store_rates, dissipated, supplied

    def total_energy(self, x, w) -> float:
        total = 0.0
        w = np.asarray(w, dtype=float)
        for e in self.elements:
            if e.kind in ("flow_store", "effort_store"):
                total += e.c.energy.value(float(x[e.state_slot]), self._raw(e, w))
        return float(total)


def _maps_of(c: con.Construct):
    if isinstance(c, (con.FlowStore, con.EffortStore)):
        return [c.energy]
    if isinstance(c, con.Resistive):
        return [c.map]
    if isinstance(c, con.Transformer):
        return [c.map]
    if isinstance(c, con.Gyrator):
        return [c.g1, c.g2]
    return []


# Transformer maps expose n_params/init through Mlp; adapt default_raw.
def _mlp_default_raw(self, rng=None):
    rng = rng or np.random.default_rng(0)
    return self.init_params(rng)


con.Mlp.default_raw = _mlp_default_raw  # type: ignore[attr-defined]


# --------------------------------------------------------------------------
# public operations
# --------------------------------------------------------------------------

def check_dirac(net: Network, state, inputs=None, w=None, t: float = 0.0) -> float:
    """Power-balance residual of the interconnection at one operating point.

    Returns |sum of junction constraint residuals| + |total oriented power|,
    where stores count their energy rate, dissipators and two-ports the power
    they absorb, and sources the power they supply. Zero (to roundoff) for a
    consistently assembled network; a flipped port sign shows up as a
    nonzero power imbalance at generic states.
    """
    comp = net.compiled()
    if w is None:
        w = comp.params.values
    ev = comp.evaluate(np.asarray(state, float), inputs, t, w, jets=False)
    jres = sum(abs(r) for r in ev["junction_residual"])
    rates, dissipated, supplied = comp.power_accounts(ev)
    power = sum(rates) + sum(dissipated) - sum(supplied)
    return float(jres + abs(power))


def assemble_ode(net: Network, seed: int = 0) -> OdeSystem:
    """Flatten a loop-free network into explicit dynamics with partials.

    State order is deterministic: one slot per store, sorted by construct id.
    Trainable constructs contribute parameter slices in the same order; fixed
    constructs keep their built-in coefficients.
    """
    comp = net.compiled(seed)
    n, m, k, p = comp.n, comp.m, comp.k, comp.p

    def rhs(x, u, t, w):
        ev = comp.evaluate(x, u, t, w, jets=False)
        return np.array(ev["xdot"], dtype=float)

    def rhs_partials(x, u, t, w):
        ev = comp.evaluate(x, u, t, w, jets=True)
        f = np.array([j.val for j in ev["xdot"]])
        dfdx = np.vstack([j.dx for j in ev["xdot"]]) if n else np.zeros((0, 0))
        dfdw = np.vstack([j.dw for j in ev["xdot"]]) if n else np.zeros((0, m))
        return f, dfdx, dfdw

    def output(x, u, w):
        ev = comp.evaluate(x, u, 0.0, w, jets=False)
        return np.array(comp.outputs(x, u, 0.0, w, ev), dtype=float)

    def output_partials(x, u, w):
        ev = comp.evaluate(x, u, 0.0, w, jets=True)
        xs = seed_states(np.asarray(x, float), m)
        vals = comp.outputs(x, u, 0.0, w, ev, xs=xs)
        y = np.array([j.val for j in vals])
        dydx = np.vstack([j.dx for j in vals]) if vals else np.zeros((0, n))
        dydw = np.vstack([j.dw for j in vals]) if vals else np.zeros((0, m))
        return y, dydx, dydw

    def link_flow_fn(x, u, t, w):
        ev = comp.evaluate(x, u, t, w, jets=False)
        return np.array(comp.link_values(ev), dtype=float)

    def link_flow_partials(x, u, t, w):
        ev = comp.evaluate(x, u, t, w, jets=True)
        vals = comp.link_values(ev)
        f = np.array([j.val for j in vals])
        dfdx = np.vstack([j.dx for j in vals]) if vals else np.zeros((0, n))
        dfdw = np.vstack([j.dw for j in vals]) if vals else np.zeros((0, m))
        return f, dfdx, dfdw

    def element_powers(x, u, t, w):
        ev = comp.evaluate(x, u, t, w, jets=False)
        return np.array(comp.element_power_values(ev), dtype=float)

    def element_power_partials(x, u, t, w):
        ev = comp.evaluate(x, u, t, w, jets=True)
        vals = comp.element_power_values(ev)
        f = np.array([j.val for j in vals])
        dfdx = np.vstack([j.dx for j in vals]) if vals else np.zeros((0, n))
        dfdw = np.vstack([j.dw for j in vals]) if vals else np.zeros((0, m))
        return f, dfdx, dfdw

    def source_power(x, u, t, w):
        ev = comp.evaluate(x, u, t, w, jets=False)
        _, _, supplied = comp.power_accounts(ev)
        return float(sum(supplied))

    signals = [
        comp.elements[comp.index[sid]].c.signal for sid in comp.input_names
    ]

    def default_input(t):
        return np.array([sig(t) for sig in signals], dtype=float)

    return OdeSystem(
        state_dim=n,
        param_dim=m,
        input_dim=k,
        output_dim=p,
        rhs=rhs,
        rhs_partials=rhs_partials,
        output=output,
        output_partials=output_partials,
        params=comp.params.copy(),
        state_names=list(comp.state_names),
        input_names=list(comp.input_names),
        output_names=list(comp.output_names),
        link_names=list(comp.link_names),
        link_flows=link_flow_fn,
        link_flow_partials=link_flow_partials,
        element_power_names=list(comp.power_names),
        element_powers=element_powers,
        element_power_partials=element_power_partials,
        energy=comp.total_energy,
        source_power=source_power,
        default_input=default_input if k else None,
    )


def link_flows(sys: OdeSystem, traj, w=None) -> np.ndarray:
    """Per-link flow series along a trajectory, shape (len(times), n_links)."""
    if sys.link_flows is None:
        raise StructuralError("system does not expose link flows")
    w = sys.params.values if w is None else np.asarray(w, float)
    rows = [
        sys.link_flows(traj.states[i], traj.inputs[i], traj.times[i], w)
        for i in range(traj.times.size)
    ]
    return np.vstack(rows)


# --------------------------------------------------------------------------
# layered template
# --------------------------------------------------------------------------

def build_layered_network(
    n_layers: int,
    boundary: tuple[str, con.Signal] = ("effort", con.Signal("zero")),
    observed: Optional[list[tuple]] = None,
    mass: float = 1.0,
    spring: float = 1.0,
    damper: float = 0.5,
    trainable: bool = False,
) -> Network:
    """Chain of identical layers between a boundary source and ground.

    Each layer couples to the previous node through a parallel spring+damper
    pair and holds a mass whose node is tied to ground by its own spring and
    damper, so the layer both reshapes the through-flow and shifts the node
    effort. Layer i contributes three states: the coupling-spring and
    ground-spring elongations and the mass momentum.
    """
    if n_layers < 1:
        raise StructuralError("n_layers must be >= 1")

    kind, signal = boundary
    if kind == "effort":
        source: con.Construct = con.EffortSource("source", signal=signal)
    elif kind == "flow":
        source = con.FlowSource("source", signal=signal)
    else:
        raise StructuralError(f"boundary kind must be effort|flow, got {kind!r}")

    cs: list[con.Construct] = [source]
    junctions: list[Junction] = []
    prev_ports = [PortRef("source", 0, -1)]

    for i in range(1, n_layers + 1):
        tag = f"l{i:02d}"
        cs += [
            con.EffortStore(f"{tag}_spring_in", energy=con.QuadraticEnergy(spring),
                            ports=2, trainable=trainable),
            con.Resistive(f"{tag}_damper_in", map=con.LinearResistive(damper),
                          ports=2, trainable=trainable),
            con.FlowStore(f"{tag}_mass", energy=con.QuadraticEnergy(1.0 / mass),
                          trainable=trainable),
            con.EffortStore(f"{tag}_spring_gnd", energy=con.QuadraticEnergy(spring),
                            trainable=trainable),
            con.Resistive(f"{tag}_damper_gnd", map=con.LinearResistive(damper),
                          trainable=trainable),
        ]
        junctions.append(Junction(
            "effort",
            prev_ports + [
                PortRef(f"{tag}_spring_in", 0),
                PortRef(f"{tag}_damper_in", 0),
            ],
            id=f"node{i - 1}",
        ))
        prev_ports = [
            PortRef(f"{tag}_spring_in", 1),
            PortRef(f"{tag}_damper_in", 1),
            PortRef(f"{tag}_mass", 0),
            PortRef(f"{tag}_spring_gnd", 0),
            PortRef(f"{tag}_damper_gnd", 0),
        ]
    junctions.append(Junction("effort", prev_ports, id=f"node{n_layers}"))

    if observed is None:
        observed = [("effort", f"l{n_layers:02d}_mass")]
    return Network(cs, junctions, boundary=["source"], observed=observed)
