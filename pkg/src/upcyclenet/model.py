"""Canonical MILP assembly: variable space, objective, constraint rows.

Decision variables
    x[t, p, i, j, c]   tons of material p moved in period t from origin i to
                       facility j at size option c, for the four legs ending
                       at a facility echelon (the size index belongs to the
                       destination, which lets capacity rows couple flow to
                       the install binaries without big-M constants)
    x[t, p, m, n]      tons from DPF m to sink n (sinks have no size option)
    b[site, c]         1 iff the site is installed at size option c

Objective (minimized, one number for the whole horizon)
    sum over install binaries of installation cost
    + sum_t dt_t * (operating cost per ton on every facility's inflow)
    + sum_t dt_t * 2 * (distance * per-ton-km rate on every leg, the factor
      2 paying the empty return trip)

Installation cost enters once for the horizon, not per period.  By default
(`install_cost_mode="annualized_times_horizon"`) the annualized figure is
scaled by the horizon length in years, so a one-year horizon charges it
exactly once; `install_cost_mode="once"` charges the raw figure regardless
of horizon length.

Constraint rows, in emission order:
    demand        per (t, p, sink): inflow <= demand capacity (a ceiling,
                  not an obligation; collection quota is what forces flow)
    quota         per (t, p) with quota > 0: collected tons >= quota share
                  of total generated supply
    source_cap    per (t, p, source): shipped tons <= supply
    flow_balance  per (t, output material, facility): yield * admissible
                  inflow == outflow, an equality
    facility_cap  per (t, facility, size): inflow booked at that size
                  <= capacity * install binary
    one_size      per facility: at most one size installed

Column order is deterministic: the five legs in chain order, each
lexicographic by (t, p, origin, dest, c) in instance declaration order,
then the install binaries grouped by echelon.  Material pruning (`prune`)
drops flow columns for materials a leg cannot carry (not producible at the
origin or not accepted at the destination); it never changes the optimal
objective, only the column count.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ModelError, NamingError
from .geo import DistanceMatrix, build_leg_matrices
from .instance import ECHELON_TAGS, LEGS, Instance, sanitize_id, serialize_instance

FLOW_PREFIXES = {
    "src_cf": "xsrccf",
    "cf_rtf": "xcfrtf",
    "rtf_cpf": "xrtfcpf",
    "cpf_dpf": "xcpfdpf",
    "dpf_sink": "xdpfsnk",
}

ROW_FAMILIES = ("demand", "quota", "source_cap", "flow_balance", "facility_cap", "one_size")

INSTALL_COST_MODES = ("annualized_times_horizon", "once")

MAX_NAME_LEN = 64


def flow_column_name(leg: str, t: str, p: str, origin: str, dest: str,
                     size: str | None) -> str:
    parts = [FLOW_PREFIXES[leg], sanitize_id(t), sanitize_id(p), sanitize_id(origin),
             sanitize_id(dest)]
    if size is not None:
        parts.append(sanitize_id(size))
    name = "_".join(parts)
    if len(name) > MAX_NAME_LEN:
        raise NamingError(f"column name '{name}' exceeds {MAX_NAME_LEN} characters")
    return name


def install_column_name(echelon: str, site: str, size: str) -> str:
    name = f"b{echelon}_{sanitize_id(site)}_{sanitize_id(size)}"
    if len(name) > MAX_NAME_LEN:
        raise NamingError(f"column name '{name}' exceeds {MAX_NAME_LEN} characters")
    return name


@dataclass(frozen=True)
class LegSpace:
    """Index block for one leg's flow columns; `sizes` is empty on the sink leg."""

    leg: str
    origin_role: str
    dest_role: str
    periods: tuple[str, ...]
    materials: tuple[str, ...]
    origins: tuple[str, ...]
    dests: tuple[str, ...]
    sizes: tuple[str, ...]
    start: int

    @property
    def count(self) -> int:
        n = len(self.periods) * len(self.materials) * len(self.origins) * len(self.dests)
        return n * len(self.sizes) if self.sizes else n

    def offset(self, t: int, p: int, i: int, j: int, c: int = 0) -> int:
        nc = len(self.sizes) if self.sizes else 1
        idx = ((t * len(self.materials) + p) * len(self.origins) + i) * len(self.dests) + j
        return self.start + idx * nc + c


@dataclass(frozen=True)
class InstallSpace:
    echelon: str
    sites: tuple[str, ...]
    sizes: tuple[str, ...]
    start: int

    @property
    def count(self) -> int:
        return len(self.sites) * len(self.sizes)

    def offset(self, site: int, size: int) -> int:
        return self.start + site * len(self.sizes) + size


class VariableIndex:
    """Arithmetic bijection between variable keys and column numbers.

    Nothing is materialized per column, so indexing stays cheap at
    case-study scale (millions of columns).
    """

    def __init__(self, inst: Instance, prune: bool) -> None:
        for role in ("sources",) + ECHELON_TAGS + ("sinks",):
            if not inst.role_nodes(role):
                raise ModelError(f"echelon chain position '{role}' has no nodes")
        self.instance = inst
        self.prune = prune
        periods = tuple(t.id for t in inst.periods)
        legs = []
        at = 0
        for leg, origin_role, dest_role in LEGS:
            origins = tuple(n.id for n in inst.role_nodes(origin_role))
            dests = tuple(n.id for n in inst.role_nodes(dest_role))
            sizes: tuple[str, ...] = ()
            if dest_role in ECHELON_TAGS:
                sizes = tuple(o.id for o in inst.echelon(dest_role).size_options)
            space = LegSpace(
                leg=leg,
                origin_role=origin_role,
                dest_role=dest_role,
                periods=periods,
                materials=inst.leg_materials(leg, prune),
                origins=origins,
                dests=dests,
                sizes=sizes,
                start=at,
            )
            legs.append(space)
            at += space.count
        self.legs: tuple[LegSpace, ...] = tuple(legs)
        self.n_continuous = at
        installs = []
        for tag in ECHELON_TAGS:
            spec = inst.echelon(tag)
            space = InstallSpace(
                echelon=tag,
                sites=tuple(n.id for n in spec.sites),
                sizes=tuple(o.id for o in spec.size_options),
                start=at,
            )
            installs.append(space)
            at += space.count
        self.installs: tuple[InstallSpace, ...] = tuple(installs)
        self.n_columns = at
        self.n_binary = at - self.n_continuous
        self._leg_by_id = {s.leg: s for s in self.legs}
        self._install_by_tag = {s.echelon: s for s in self.installs}

    def leg(self, leg_id: str) -> LegSpace:
        return self._leg_by_id[leg_id]

    def install(self, tag: str) -> InstallSpace:
        return self._install_by_tag[tag]

    def column_key(self, col: int) -> tuple:
        """('flow', leg, t, p, origin, dest, size-or-None) or ('install', echelon, site, size)."""
        if not 0 <= col < self.n_columns:
            raise IndexError(col)
        if col >= self.n_continuous:
            for space in self.installs:
                if col < space.start + space.count:
                    off = col - space.start
                    site, size = divmod(off, len(space.sizes))
                    return ("install", space.echelon, space.sites[site], space.sizes[size])
            raise AssertionError("unreachable")
        for space in self.legs:
            if col < space.start + space.count:
                off = col - space.start
                if space.sizes:
                    off, c = divmod(off, len(space.sizes))
                    size = space.sizes[c]
                else:
                    size = None
                off, j = divmod(off, len(space.dests))
                off, i = divmod(off, len(space.origins))
                t, p = divmod(off, len(space.materials))
                return (
                    "flow",
                    space.leg,
                    space.periods[t],
                    space.materials[p],
                    space.origins[i],
                    space.dests[j],
                    size,
                )
        raise AssertionError("unreachable")

    def column_name(self, col: int) -> str:
        key = self.column_key(col)
        if key[0] == "install":
            return install_column_name(*key[1:])
        return flow_column_name(*key[1:])

    def column_names(self) -> list[str]:
        return [self.column_name(c) for c in range(self.n_columns)]


def index_variables(inst: Instance, prune: bool = True) -> VariableIndex:
    return VariableIndex(inst, prune)


def count_columns(inst: Instance, prune: bool = True) -> tuple[int, int]:
    """(continuous, binary) column counts without building anything heavy."""
    vindex = VariableIndex(inst, prune)
    return vindex.n_continuous, vindex.n_binary


@dataclass(frozen=True)
class Row:
    name: str
    family: str
    key: tuple
    sense: str  # 'L' <=, 'G' >=, 'E' ==
    rhs: float
    cols: tuple[int, ...]
    coefs: tuple[float, ...]

    def activity(self, values: np.ndarray) -> float:
        return float(sum(v * values[c] for c, v in zip(self.cols, self.coefs)))


@dataclass(frozen=True)
class Model:
    """Solver-independent MILP: columns, objective, rows, plus build context."""

    instance: Instance
    prune: bool
    install_cost_mode: str
    index: VariableIndex
    objective: np.ndarray
    rows: tuple[Row, ...]
    distances: tuple[DistanceMatrix, ...]
    fingerprint: str

    @property
    def n_columns(self) -> int:
        return self.index.n_columns

    @property
    def binary_columns(self) -> range:
        return range(self.index.n_continuous, self.index.n_columns)

    def column_names(self) -> list[str]:
        return self.index.column_names()


def _demand_row_keys(inst: Instance, leg4_materials: tuple[str, ...]) -> Iterator[tuple[str, str, str]]:
    """(t, p, sink) demand keys: every defined demand entry, plus every
    (t, p, sink) reachable by a sink-leg column.  Absent entries cap at 0;
    without the row, an undeclared demand would silently become unlimited."""
    leg4 = set(leg4_materials)
    for t in inst.periods:
        for p in inst.materials:
            for s in inst.sinks:
                if p in leg4 or (t.id, p) in s.demand:
                    yield (t.id, p, s.node.id)


def _source_row_keys(inst: Instance, leg0_materials: tuple[str, ...]) -> Iterator[tuple[str, str, str]]:
    leg0 = set(leg0_materials)
    for t in inst.periods:
        for p in inst.materials:
            for s in inst.sources:
                if p in leg0 or s.supply.get((t.id, p), 0.0) > 0.0:
                    yield (t.id, p, s.node.id)


def count_rows(inst: Instance, prune: bool = True) -> dict[str, int]:
    """Row counts per family by closed-form counting, no row objects built."""
    leg0 = inst.leg_materials("src_cf", prune)
    leg4 = inst.leg_materials("dpf_sink", prune)
    counts = {
        "demand": sum(1 for _ in _demand_row_keys(inst, leg4)),
        "quota": sum(1 for v in inst.quota.values() if v > 0.0),
        "source_cap": sum(1 for _ in _source_row_keys(inst, leg0)),
        "flow_balance": len(inst.periods)
        * sum(len(spec.outputs) * len(spec.sites) for _, spec in inst.echelons()),
        "facility_cap": len(inst.periods)
        * sum(len(spec.sites) * len(spec.size_options) for _, spec in inst.echelons()),
        "one_size": sum(len(spec.sites) for _, spec in inst.echelons()),
    }
    counts["total"] = sum(counts[f] for f in ROW_FAMILIES)
    return counts


def build_objective(inst: Instance, vindex: VariableIndex, dists: tuple[DistanceMatrix, ...],
                    install_cost_mode: str = "annualized_times_horizon") -> np.ndarray:
    """Objective coefficient vector over the full column space.

    Flow columns into a facility cost dt_t * op_cost + 2 * dt_t * D * rate;
    sink-leg columns carry transport only.  Install columns cost the
    installation figure once for the horizon.
    """
    if install_cost_mode not in INSTALL_COST_MODES:
        raise ModelError(f"unknown install_cost_mode '{install_cost_mode}'")
    obj = np.zeros(vindex.n_columns, dtype=np.float64)
    dt = np.array([t.duration_years for t in inst.periods], dtype=np.float64)
    dist_by_leg = {d.leg: d for d in dists}
    for space in vindex.legs:
        if not space.count:
            continue
        for p in space.materials:
            if p not in inst.transport_cost:
                raise ModelError(
                    f"material '{p}' rides leg '{space.leg}' but has no transport_cost entry"
                )
        rate = np.array([inst.transport_cost[p] for p in space.materials], dtype=np.float64)
        km = dist_by_leg[space.leg].km
        op = inst.echelon(space.dest_role).op_cost_per_ton if space.dest_role in ECHELON_TAGS else 0.0
        # per-ton cost, shape (T, P, O, D): dt * (op + 2 * km * rate)
        per_ton = dt[:, None, None, None] * (
            op + 2.0 * km[None, None, :, :] * rate[None, :, None, None]
        )
        if space.sizes:
            per_ton = np.repeat(per_ton.reshape(-1), len(space.sizes))
        else:
            per_ton = per_ton.reshape(-1)
        obj[space.start : space.start + space.count] = per_ton
    horizon = inst.horizon_years()
    for space in vindex.installs:
        spec = inst.echelon(space.echelon)
        for s in range(len(space.sites)):
            for c, opt in enumerate(spec.size_options):
                cost = opt.install_cost_annual
                if install_cost_mode == "annualized_times_horizon":
                    cost *= horizon
                obj[space.offset(s, c)] = cost
    return obj


def _row_name(prefix: str, *parts: str) -> str:
    name = "_".join([prefix] + [sanitize_id(p) for p in parts])
    if len(name) > MAX_NAME_LEN:
        raise NamingError(f"row name '{name}' exceeds {MAX_NAME_LEN} characters")
    return name


def build_rows(inst: Instance, vindex: VariableIndex) -> tuple[Row, ...]:
    """All constraint rows in canonical family order; see module docstring."""
    rows: list[Row] = []
    leg = {s.leg: s for s in vindex.legs}
    leg0, leg1, leg2, leg3, leg4 = (leg[l] for l in ("src_cf", "cf_rtf", "rtf_cpf", "cpf_dpf", "dpf_sink"))
    in_leg_of = {"cf": leg0, "rtf": leg1, "cpf": leg2, "dpf": leg3}
    out_leg_of = {"cf": leg1, "rtf": leg2, "cpf": leg3, "dpf": leg4}

    def leg_cols(space: LegSpace, t: int, p_id: str, i: int | None = None, j: int | None = None) -> list[int]:
        """Columns of one leg for fixed (t, material) and optional origin/dest, all sizes."""
        if p_id not in space.materials:
            return []
        p = space.materials.index(p_id)
        iis = range(len(space.origins)) if i is None else (i,)
        jjs = range(len(space.dests)) if j is None else (j,)
        ccs = range(len(space.sizes)) if space.sizes else (0,)
        return [space.offset(t, p, ii, jj, cc) for ii in iis for jj in jjs for cc in ccs]

    # demand: inflow at a sink capped by declared demand (0 when undeclared)
    sink_pos = {s.node.id: k for k, s in enumerate(inst.sinks)}
    for t_idx, t in enumerate(inst.periods):
        for p in inst.materials:
            for s in inst.sinks:
                if not (p in leg4.materials or (t.id, p) in s.demand):
                    continue
                cols = leg_cols(leg4, t_idx, p, j=sink_pos[s.node.id])
                rows.append(
                    Row(
                        name=_row_name("dem", t.id, p, s.node.id),
                        family="demand",
                        key=(t.id, p, s.node.id),
                        sense="L",
                        rhs=s.demand.get((t.id, p), 0.0),
                        cols=tuple(cols),
                        coefs=(1.0,) * len(cols),
                    )
                )

    # quota: collected tons of p must reach the mandated share of total supply
    for t_idx, t in enumerate(inst.periods):
        for p in inst.materials:
            eta = inst.quota_at(t.id, p)
            if eta <= 0.0:
                continue
            cols = leg_cols(leg0, t_idx, p)
            rows.append(
                Row(
                    name=_row_name("quo", t.id, p),
                    family="quota",
                    key=(t.id, p),
                    sense="G",
                    rhs=eta * inst.supply_total(t.id, p),
                    cols=tuple(cols),
                    coefs=(1.0,) * len(cols),
                )
            )

    # source_cap: shipments out of a source capped by its supply
    for t_idx, t in enumerate(inst.periods):
        for p in inst.materials:
            for i_idx, s in enumerate(inst.sources):
                sigma = s.supply.get((t.id, p), 0.0)
                if not (p in leg0.materials or sigma > 0.0):
                    continue
                cols = leg_cols(leg0, t_idx, p, i=i_idx)
                rows.append(
                    Row(
                        name=_row_name("src", t.id, p, s.node.id),
                        family="source_cap",
                        key=(t.id, p, s.node.id),
                        sense="L",
                        rhs=sigma,
                        cols=tuple(cols),
                        coefs=(1.0,) * len(cols),
                    )
                )

    # flow_balance: yield * admissible inflow == outflow, per output material
    for tag in ECHELON_TAGS:
        spec = inst.echelon(tag)
        lin, lout = in_leg_of[tag], out_leg_of[tag]
        admissible_in = tuple(p for p in lin.materials if p in spec.inputs)
        for t_idx, t in enumerate(inst.periods):
            for p_out in spec.outputs:
                gamma = spec.yields[p_out]
                for j_idx, site in enumerate(spec.sites):
                    cols: list[int] = []
                    coefs: list[float] = []
                    if gamma != 0.0:
                        for p_in in admissible_in:
                            cc = leg_cols(lin, t_idx, p_in, j=j_idx)
                            cols.extend(cc)
                            coefs.extend([gamma] * len(cc))
                    out_cols = leg_cols(lout, t_idx, p_out, i=j_idx)
                    cols.extend(out_cols)
                    coefs.extend([-1.0] * len(out_cols))
                    rows.append(
                        Row(
                            name=_row_name(f"bal{tag}", t.id, p_out, site.id),
                            family="flow_balance",
                            key=(tag, t.id, p_out, site.id),
                            sense="E",
                            rhs=0.0,
                            cols=tuple(cols),
                            coefs=tuple(coefs),
                        )
                    )

    # facility_cap: inflow booked at size c at a site, against capacity * install
    for tag in ECHELON_TAGS:
        spec = inst.echelon(tag)
        lin = in_leg_of[tag]
        ispace = vindex.install(tag)
        for t_idx, t in enumerate(inst.periods):
            for j_idx, site in enumerate(spec.sites):
                for c_idx, opt in enumerate(spec.size_options):
                    cols = []
                    for p_idx in range(len(lin.materials)):
                        cols.extend(
                            lin.offset(t_idx, p_idx, i, j_idx, c_idx)
                            for i in range(len(lin.origins))
                        )
                    coefs = [1.0] * len(cols)
                    cols.append(ispace.offset(j_idx, c_idx))
                    coefs.append(-opt.max_capacity_tons)
                    rows.append(
                        Row(
                            name=_row_name(f"cap{tag}", t.id, site.id, opt.id),
                            family="facility_cap",
                            key=(tag, t.id, site.id, opt.id),
                            sense="L",
                            rhs=0.0,
                            cols=tuple(cols),
                            coefs=tuple(coefs),
                        )
                    )

    # one_size: at most one size option installed per site
    for tag in ECHELON_TAGS:
        spec = inst.echelon(tag)
        ispace = vindex.install(tag)
        for j_idx, site in enumerate(spec.sites):
            cols = tuple(ispace.offset(j_idx, c) for c in range(len(spec.size_options)))
            rows.append(
                Row(
                    name=_row_name(f"one{tag}", site.id),
                    family="one_size",
                    key=(tag, site.id),
                    sense="L",
                    rhs=1.0,
                    cols=cols,
                    coefs=(1.0,) * len(cols),
                )
            )

    return tuple(rows)


def build_milp(inst: Instance, prune: bool = True,
               install_cost_mode: str = "annualized_times_horizon") -> Model:
    """Assemble the complete model; deterministic for identical inputs."""
    vindex = index_variables(inst, prune)
    dists = build_leg_matrices(inst)
    objective = build_objective(inst, vindex, dists, install_cost_mode)
    rows = build_rows(inst, vindex)
    counts = count_rows(inst, prune)
    assert len(rows) == counts["total"], "row generation disagrees with closed-form count"
    fingerprint = hashlib.sha256(serialize_instance(inst).encode()).hexdigest()
    return Model(
        instance=inst,
        prune=prune,
        install_cost_mode=install_cost_mode,
        index=vindex,
        objective=objective,
        rows=rows,
        distances=dists,
        fingerprint=fingerprint,
    )


def dump_model(model: Model) -> str:
    """Human-auditable row listing: key, sense, rhs, then name:coefficient pairs."""
    names = model.column_names()
    sense_txt = {"L": "<=", "G": ">=", "E": "=="}
    lines = [
        f"model fingerprint={model.fingerprint} prune={'on' if model.prune else 'off'} "
        f"install_cost_mode={model.install_cost_mode}",
        f"columns={model.n_columns} continuous={model.index.n_continuous} "
        f"binary={model.index.n_binary} rows={len(model.rows)}",
        "objective " + " ".join(
            f"{names[c]}:{float(model.objective[c])!r}"
            for c in range(model.n_columns)
            if model.objective[c] != 0.0
        ),
    ]
    for row in model.rows:
        body = " ".join(f"{names[c]}:{float(v)!r}" for c, v in zip(row.cols, row.coefs))
        lines.append(f"{row.name} [{row.family}{row.key!r}] {sense_txt[row.sense]} {row.rhs!r} :: {body}")
    return "\n".join(lines) + "\n"
