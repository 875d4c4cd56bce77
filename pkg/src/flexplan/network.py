"""Transmission network data model and case-file handling.

A case document is a JSON object with four top-level keys:

``base_mva``
    System MVA base used to convert per-unit susceptances into MW flows.
``buses``
    ``[{"id": str, "reference": bool?}, ...]`` -- at most one bus may be
    marked as the angle reference; if none is marked the first listed bus
    is used and a warning is logged.
``lines``
    ``[{"id", "from", "to", "susceptance_pu", "capacity_mw"}, ...]``
``generators``
    ``[{"id", "bus", "existing_mw", "max_addition_mw",
        "marginal_cost_per_mwh", "investment_cost_per_mw"}, ...]``

Unknown keys are rejected so that typos fail loudly instead of silently
changing a study.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class CaseError(ValueError):
    """Raised when a case document cannot be turned into a valid Network."""


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding with a machine-readable code."""

    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


@dataclass(frozen=True)
class Bus:
    id: str
    index: int
    is_reference: bool = False


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    susceptance_pu: float
    capacity_mw: float


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    existing_mw: float
    max_addition_mw: float
    marginal_cost_per_mwh: float
    investment_cost_per_mw: float


@dataclass(frozen=True)
class Network:
    """Immutable bus/line/generator system; safe to share across solves."""

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    base_mva: float = 100.0

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_line(self) -> int:
        return len(self.lines)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    def bus_index(self, bus_id: str) -> int:
        try:
            return self._bus_pos[bus_id]
        except KeyError:
            raise KeyError(f"unknown bus id {bus_id!r}") from None

    @property
    def _bus_pos(self) -> dict[str, int]:
        # cached lazily; object.__setattr__ sidesteps the frozen dataclass
        cache = self.__dict__.get("_bus_pos_cache")
        if cache is None:
            cache = {b.id: b.index for b in self.buses}
            object.__setattr__(self, "_bus_pos_cache", cache)
        return cache

    @property
    def reference_index(self) -> int:
        for b in self.buses:
            if b.is_reference:
                return b.index
        raise CaseError("network has no reference bus")

    @property
    def bus_ids(self) -> tuple[str, ...]:
        return tuple(b.id for b in self.buses)

    def line_capacities(self) -> np.ndarray:
        return np.array([ln.capacity_mw for ln in self.lines], dtype=float)

    def gen_bus_indices(self) -> np.ndarray:
        return np.array([self.bus_index(g.bus) for g in self.generators], dtype=int)


def incidence_matrix(network: Network) -> sp.csc_matrix:
    """Bus-line incidence: +1 at the from bus, -1 at the to bus of each line."""
    n, m = network.n_bus, network.n_line
    rows, cols, vals = [], [], []
    for j, ln in enumerate(network.lines):
        rows.append(network.bus_index(ln.from_bus))
        cols.append(j)
        vals.append(1.0)
        rows.append(network.bus_index(ln.to_bus))
        cols.append(j)
        vals.append(-1.0)
    return sp.csc_matrix((vals, (rows, cols)), shape=(n, m))


def dc_flow_operator(network: Network) -> sp.csc_matrix:
    """Per-unit DC flow operator: row l gives f_l = b_l * (theta_from - theta_to).

    Output is in per-unit; multiply by ``network.base_mva`` for MW flows
    when angles are in radians.
    """
    for ln in network.lines:
        if not (ln.susceptance_pu > 0.0):
            raise CaseError(
                f"line {ln.id!r} has non-positive susceptance {ln.susceptance_pu}"
            )
    b = np.array([ln.susceptance_pu for ln in network.lines], dtype=float)
    return sp.csc_matrix(sp.diags(b) @ incidence_matrix(network).T)


def scale_line_capacities(network: Network, factor: float) -> Network:
    """Return a copy of the network with every line rating multiplied by factor."""
    if not (factor > 0.0) or not math.isfinite(factor):
        raise ValueError(f"capacity factor must be positive and finite, got {factor}")
    lines = tuple(replace(ln, capacity_mw=ln.capacity_mw * factor) for ln in network.lines)
    return replace(network, lines=lines)


def _connected(network: Network) -> tuple[bool, list[str]]:
    """Union-find connectivity over the line graph; returns (ok, stranded bus ids)."""
    n = network.n_bus
    if n == 0:
        return True, []
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    pos = {b.id: b.index for b in network.buses}
    for ln in network.lines:
        a, b = pos.get(ln.from_bus), pos.get(ln.to_bus)
        if a is None or b is None or a == b:
            continue
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra
    root = find(0)
    stranded = [bus.id for bus in network.buses if find(bus.index) != root]
    return not stranded, stranded


def validate(network: Network) -> list[Diagnostic]:
    """Check every Network invariant; an empty list means the network is sound."""
    diags: list[Diagnostic] = []

    if not network.buses:
        diags.append(Diagnostic("NO_BUSES", "network has no buses"))
    if not network.lines:
        diags.append(Diagnostic("NO_LINES", "network has no lines"))
    if not network.generators:
        diags.append(Diagnostic("NO_GENERATORS", "network has no generators"))
    if not (network.base_mva > 0.0 and math.isfinite(network.base_mva)):
        diags.append(Diagnostic("BAD_BASE_MVA", f"base_mva must be positive, got {network.base_mva}"))

    for kind, ids in (
        ("bus", [b.id for b in network.buses]),
        ("line", [ln.id for ln in network.lines]),
        ("generator", [g.id for g in network.generators]),
    ):
        seen: set[str] = set()
        for i in ids:
            if i in seen:
                diags.append(Diagnostic("DUPLICATE_ID", f"duplicate {kind} id {i!r}"))
            seen.add(i)

    expected = list(range(network.n_bus))
    actual = [b.index for b in network.buses]
    if actual != expected:
        diags.append(Diagnostic("BAD_INDEXING", f"bus indices {actual} are not contiguous 0..{network.n_bus - 1}"))

    refs = [b.id for b in network.buses if b.is_reference]
    if len(refs) > 1:
        diags.append(Diagnostic("MULTIPLE_REFERENCE", f"buses {refs} are all marked reference"))
    elif network.buses and not refs:
        diags.append(Diagnostic("NO_REFERENCE", "no bus is marked as the angle reference"))

    bus_ids = {b.id for b in network.buses}
    for ln in network.lines:
        for end in (ln.from_bus, ln.to_bus):
            if end not in bus_ids:
                diags.append(Diagnostic("DANGLING_REFERENCE", f"line {ln.id!r} references unknown bus {end!r}"))
        if ln.from_bus == ln.to_bus:
            diags.append(Diagnostic("SELF_LOOP", f"line {ln.id!r} connects bus {ln.from_bus!r} to itself"))
        if not (ln.susceptance_pu > 0.0 and math.isfinite(ln.susceptance_pu)):
            diags.append(Diagnostic("NONPOSITIVE_SUSCEPTANCE", f"line {ln.id!r} susceptance {ln.susceptance_pu}"))
        if not (ln.capacity_mw > 0.0 and math.isfinite(ln.capacity_mw)):
            diags.append(Diagnostic("NONPOSITIVE_CAPACITY", f"line {ln.id!r} capacity {ln.capacity_mw}"))

    for g in network.generators:
        if g.bus not in bus_ids:
            diags.append(Diagnostic("DANGLING_REFERENCE", f"generator {g.id!r} references unknown bus {g.bus!r}"))
        for field_name, v in (
            ("existing_mw", g.existing_mw),
            ("max_addition_mw", g.max_addition_mw),
            ("marginal_cost_per_mwh", g.marginal_cost_per_mwh),
            ("investment_cost_per_mw", g.investment_cost_per_mw),
        ):
            if not (v >= 0.0 and math.isfinite(v)):
                diags.append(Diagnostic("NEGATIVE_VALUE", f"generator {g.id!r} {field_name} = {v}"))

    if network.buses and network.lines:
        ok, stranded = _connected(network)
        if not ok:
            diags.append(Diagnostic("DISCONNECTED", f"buses {stranded} are not connected to bus {network.buses[0].id!r}"))

    return diags


_BUS_KEYS = {"id", "reference"}
_LINE_KEYS = {"id", "from", "to", "susceptance_pu", "capacity_mw"}
_GEN_KEYS = {"id", "bus", "existing_mw", "max_addition_mw", "marginal_cost_per_mwh", "investment_cost_per_mw"}
_TOP_KEYS = {"base_mva", "buses", "lines", "generators"}


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise CaseError(f"unknown key(s) {sorted(unknown)} in {where}")


def _num(obj: dict, key: str, where: str) -> float:
    try:
        v = float(obj[key])
    except KeyError:
        raise CaseError(f"missing key {key!r} in {where}") from None
    except (TypeError, ValueError):
        raise CaseError(f"key {key!r} in {where} is not a number: {obj[key]!r}") from None
    if not math.isfinite(v):
        raise CaseError(f"key {key!r} in {where} is not finite: {v}")
    return v


def _str(obj: dict, key: str, where: str) -> str:
    try:
        v = obj[key]
    except KeyError:
        raise CaseError(f"missing key {key!r} in {where}") from None
    if not isinstance(v, str) or not v:
        raise CaseError(f"key {key!r} in {where} must be a non-empty string, got {v!r}")
    return v


def parse_case(text: str) -> Network:
    """Parse and validate a JSON case document.

    Raises CaseError with a line/column position on malformed JSON and with
    a descriptive message on any schema or invariant violation.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CaseError(f"case syntax error at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise CaseError("case document root must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "case document")

    raw_buses = doc.get("buses", [])
    raw_lines = doc.get("lines", [])
    raw_gens = doc.get("generators", [])
    if not isinstance(raw_buses, list) or not isinstance(raw_lines, list) or not isinstance(raw_gens, list):
        raise CaseError("'buses', 'lines' and 'generators' must be arrays")

    buses: list[Bus] = []
    for i, rb in enumerate(raw_buses):
        where = f"buses[{i}]"
        if not isinstance(rb, dict):
            raise CaseError(f"{where} must be an object")
        _reject_unknown(rb, _BUS_KEYS, where)
        is_ref = bool(rb.get("reference", False))
        buses.append(Bus(id=_str(rb, "id", where), index=i, is_reference=is_ref))

    if buses and not any(b.is_reference for b in buses):
        logger.warning("case document marks no reference bus; defaulting to first bus %r", buses[0].id)
        buses[0] = replace(buses[0], is_reference=True)

    lines: list[Line] = []
    for i, rl in enumerate(raw_lines):
        where = f"lines[{i}]"
        if not isinstance(rl, dict):
            raise CaseError(f"{where} must be an object")
        _reject_unknown(rl, _LINE_KEYS, where)
        lines.append(
            Line(
                id=_str(rl, "id", where),
                from_bus=_str(rl, "from", where),
                to_bus=_str(rl, "to", where),
                susceptance_pu=_num(rl, "susceptance_pu", where),
                capacity_mw=_num(rl, "capacity_mw", where),
            )
        )

    gens: list[Generator] = []
    for i, rg in enumerate(raw_gens):
        where = f"generators[{i}]"
        if not isinstance(rg, dict):
            raise CaseError(f"{where} must be an object")
        _reject_unknown(rg, _GEN_KEYS, where)
        gens.append(
            Generator(
                id=_str(rg, "id", where),
                bus=_str(rg, "bus", where),
                existing_mw=_num(rg, "existing_mw", where),
                max_addition_mw=_num(rg, "max_addition_mw", where),
                marginal_cost_per_mwh=_num(rg, "marginal_cost_per_mwh", where),
                investment_cost_per_mw=_num(rg, "investment_cost_per_mw", where),
            )
        )

    network = Network(
        buses=tuple(buses),
        lines=tuple(lines),
        generators=tuple(gens),
        base_mva=float(doc.get("base_mva", 100.0)),
    )
    diags = validate(network)
    if diags:
        raise CaseError("invalid case: " + "; ".join(str(d) for d in diags))
    return network


def render_case(network: Network) -> str:
    """Serialize a Network back into case-document JSON (parse round-trips)."""
    doc = {
        "base_mva": network.base_mva,
        "buses": [
            {"id": b.id, "reference": True} if b.is_reference else {"id": b.id}
            for b in network.buses
        ],
        "lines": [
            {
                "id": ln.id,
                "from": ln.from_bus,
                "to": ln.to_bus,
                "susceptance_pu": ln.susceptance_pu,
                "capacity_mw": ln.capacity_mw,
            }
            for ln in network.lines
        ],
        "generators": [
            {
                "id": g.id,
                "bus": g.bus,
                "existing_mw": g.existing_mw,
                "max_addition_mw": g.max_addition_mw,
                "marginal_cost_per_mwh": g.marginal_cost_per_mwh,
                "investment_cost_per_mw": g.investment_cost_per_mw,
            }
            for g in network.generators
        ],
    }
    return json.dumps(doc, indent=2)
