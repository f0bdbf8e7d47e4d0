"""Analysis layer: cost breakdowns, flow tables, layout and utilization.

Everything here is derived from (instance, model, solution) alone; solver
logs are never consulted.  Costs are recomputed from raw flows and the
instance parameters, not by reading objective coefficients, and then
reconciled against the solution's objective; a mismatch is a hard error
because it means the model and the reports have drifted apart.

Capacity basis: a size option's capacity is the maximum inflow per period
(the capacity rows are written per period without duration scaling).  The
utilization table also shows an annualized display capacity, capacity
scaled by 1 year / period duration, matching the convention of annotating
facilities with annual throughput.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ReportError
from .geo import node_distance_km
from .instance import ECHELON_TAGS, LEGS, Instance, Node, sanitize_id
from .model import FLOW_PREFIXES, Model
from .model_io import Solution

_OPEN_THRESHOLD = 0.5


@dataclass(frozen=True)
class DecodedFlow:
    leg: str
    period: str
    material: str
    origin: str
    dest: str
    size: str | None
    tons: float


@dataclass(frozen=True)
class DecodedInstall:
    echelon: str
    site: str
    size: str
    value: float


class _NameDecoder:
    """Maps solution column names back to instance identifiers.

    Sanitized ids are injective per id set (the parser enforces it), so the
    reverse maps are exact.
    """

    def __init__(self, inst: Instance) -> None:
        self.inst = inst
        self.prefix_to_leg = {v: k for k, v in FLOW_PREFIXES.items()}
        self.periods = {sanitize_id(t.id): t.id for t in inst.periods}
        self.materials = {sanitize_id(p): p for p in inst.materials}
        self.nodes: dict[str, dict[str, str]] = {}
        for role in ("sources", "sinks") + ECHELON_TAGS:
            self.nodes[role] = {sanitize_id(n.id): n.id for n in inst.role_nodes(role)}
        self.sizes = {
            tag: {sanitize_id(o.id): o.id for o in inst.echelon(tag).size_options}
            for tag in ECHELON_TAGS
        }
        self.leg_roles = {leg: (o, d) for leg, o, d in LEGS}

    def _lookup(self, table: dict[str, str], token: str, what: str, name: str) -> str:
        try:
            return table[token]
        except KeyError:
            raise ReportError(f"solution column '{name}': unknown {what} '{token}'") from None

    def decode(self, name: str, value: float) -> DecodedFlow | DecodedInstall:
        tokens = name.split("_")
        head = tokens[0]
        if head in self.prefix_to_leg:
            leg = self.prefix_to_leg[head]
            origin_role, dest_role = self.leg_roles[leg]
            want = 5 if dest_role == "sinks" else 6
            if len(tokens) != want:
                raise ReportError(f"solution column '{name}': malformed flow name")
            period = self._lookup(self.periods, tokens[1], "period", name)
            material = self._lookup(self.materials, tokens[2], "material", name)
            origin = self._lookup(self.nodes[origin_role], tokens[3], "origin", name)
            dest = self._lookup(self.nodes[dest_role], tokens[4], "destination", name)
            size = None
            if want == 6:
                size = self._lookup(self.sizes[dest_role], tokens[5], "size option", name)
            return DecodedFlow(leg, period, material, origin, dest, size, value)
        if head.startswith("b") and head[1:] in ECHELON_TAGS and len(tokens) == 3:
            tag = head[1:]
            site = self._lookup(self.nodes[tag], tokens[1], "site", name)
            size = self._lookup(self.sizes[tag], tokens[2], "size option", name)
            return DecodedInstall(tag, site, size, value)
        raise ReportError(f"solution column '{name}' does not match any naming scheme")


def decode_solution(sol: Solution, inst: Instance) -> tuple[list[DecodedFlow], list[DecodedInstall]]:
    """Nonzero solution entries as structured flows and installs."""
    decoder = _NameDecoder(inst)
    flows: list[DecodedFlow] = []
    installs: list[DecodedInstall] = []
    for name, value in sol.values.items():
        if value == 0.0:
            continue
        decoded = decoder.decode(name, value)
        if isinstance(decoded, DecodedFlow):
            flows.append(decoded)
        else:
            installs.append(decoded)
    return flows, installs


def _fmt6(x: float) -> str:
    return f"{x:.6f}"


# ---------------------------------------------------------------------------
# cost breakdown


@dataclass(frozen=True)
class CostBreakdown:
    """Installation, per-(period, echelon) operating and per-(period, leg)
    transport totals, reconciled against the solution objective."""

    installation: float
    operating: dict[tuple[str, str], float]
    transport: dict[tuple[str, str], float]
    total: float
    currency: str

    @property
    def operating_total(self) -> float:
        return sum(self.operating.values())

    @property
    def transport_total(self) -> float:
        return sum(self.transport.values())

    def to_csv(self) -> str:
        lines = ["component,period,detail,cost"]
        lines.append(f"installation,,,{_fmt6(self.installation)}")
        for (t, tag), v in self.operating.items():
            lines.append(f"operating,{t},{tag},{_fmt6(v)}")
        for (t, leg), v in self.transport.items():
            lines.append(f"transport,{t},{leg},{_fmt6(v)}")
        lines.append(f"total,,,{_fmt6(self.total)}")
        return "\n".join(lines) + "\n"


def breakdown_costs(sol: Solution, model: Model, inst: Instance) -> CostBreakdown:
    """Recompute cost components from flows and parameters, then insist they
    sum to the reported objective (1e-9 relative for oracle solutions, 1e-6
    for external ones)."""
    flows, installs = decode_solution(sol, inst)
    duration = {t.id: t.duration_years for t in inst.periods}
    node_of: dict[str, dict[str, Node]] = {
        role: {n.id: n for n in inst.role_nodes(role)}
        for role in ("sources", "sinks") + ECHELON_TAGS
    }
    leg_roles = {leg: (o, d) for leg, o, d in LEGS}

    horizon = inst.horizon_years()
    multiplier = horizon if model.install_cost_mode == "annualized_times_horizon" else 1.0
    installation = 0.0
    for b in installs:
        if b.value < _OPEN_THRESHOLD:
            continue
        spec = inst.echelon(b.echelon)
        option = next(o for o in spec.size_options if o.id == b.size)
        installation += option.install_cost_annual * multiplier

    operating: dict[tuple[str, str], float] = {}
    transport: dict[tuple[str, str], float] = {}
    for t in inst.periods:
        for tag in ECHELON_TAGS:
            operating[(t.id, tag)] = 0.0
        for leg, _, _ in LEGS:
            transport[(t.id, leg)] = 0.0
    for f in flows:
        origin_role, dest_role = leg_roles[f.leg]
        dt = duration[f.period]
        if dest_role in ECHELON_TAGS:
            operating[(f.period, dest_role)] += dt * inst.echelon(dest_role).op_cost_per_ton * f.tons
        km = node_distance_km(
            node_of[origin_role][f.origin], node_of[dest_role][f.dest], inst.circuity_factor
        )
        transport[(f.period, f.leg)] += 2.0 * dt * km * inst.transport_cost[f.material] * f.tons

    total = installation + sum(operating.values()) + sum(transport.values())
    rel_tol = 1e-9 if sol.source == "oracle" else 1e-6
    if abs(total - sol.objective_reported) > rel_tol * max(1.0, abs(sol.objective_reported)):
        raise ReportError(
            f"cost breakdown {total!r} does not reconcile with reported objective "
            f"{sol.objective_reported!r} (tolerance {rel_tol:g} relative)"
        )
    return CostBreakdown(
        installation=installation,
        operating=operating,
        transport=transport,
        total=total,
        currency=inst.currency_unit,
    )


# ---------------------------------------------------------------------------
# flow table


@dataclass(frozen=True)
class FlowRow:
    period: str
    leg: str
    origin: str
    destination: str
    material: str
    tons: float


@dataclass(frozen=True)
class FacilityAnnotation:
    echelon: str
    site: str
    size: str
    max_capacity_tons: float


@dataclass(frozen=True)
class FlowTable:
    rows: tuple[FlowRow, ...]
    facilities: tuple[FacilityAnnotation, ...]

    def to_csv(self) -> str:
        lines = ["period,leg,origin,destination,material,tons"]
        for r in self.rows:
            lines.append(
                f"{r.period},{r.leg},{r.origin},{r.destination},{r.material},{_fmt6(r.tons)}"
            )
        return "\n".join(lines) + "\n"

    def facilities_csv(self) -> str:
        lines = ["echelon,site,size,max_capacity_tons"]
        for f in self.facilities:
            lines.append(f"{f.echelon},{f.site},{f.size},{_fmt6(f.max_capacity_tons)}")
        return "\n".join(lines) + "\n"


_ZERO_FLOW = 1e-9


def export_flows(sol: Solution, inst: Instance) -> FlowTable:
    """Sankey-ready rows: flows aggregated over size options, zero rows
    dropped, sorted by (period, leg, origin, destination, material) in
    instance declaration order."""
    flows, installs = decode_solution(sol, inst)
    agg: dict[tuple[str, str, str, str, str], float] = {}
    for f in flows:
        key = (f.period, f.leg, f.origin, f.dest, f.material)
        agg[key] = agg.get(key, 0.0) + f.tons

    period_pos = {t.id: k for k, t in enumerate(inst.periods)}
    leg_pos = {leg: k for k, (leg, _, _) in enumerate(LEGS)}
    material_pos = {p: k for k, p in enumerate(inst.materials)}
    node_pos: dict[tuple[str, str], int] = {}
    for role in ("sources",) + ECHELON_TAGS + ("sinks",):
        for k, n in enumerate(inst.role_nodes(role)):
            node_pos[(role, n.id)] = k
    leg_roles = {leg: (o, d) for leg, o, d in LEGS}

    def sort_key(item):
        (t, leg, origin, dest, p), _ = item
        origin_role, dest_role = leg_roles[leg]
        return (
            period_pos[t],
            leg_pos[leg],
            node_pos[(origin_role, origin)],
            node_pos[(dest_role, dest)],
            material_pos[p],
        )

    rows = tuple(
        FlowRow(t, leg, origin, dest, p, tons)
        for (t, leg, origin, dest, p), tons in sorted(agg.items(), key=sort_key)
        if tons > _ZERO_FLOW
    )

    annotations = []
    for tag in ECHELON_TAGS:
        spec = inst.echelon(tag)
        site_pos = {n.id: k for k, n in enumerate(spec.sites)}
        chosen = sorted(
            (b for b in installs if b.echelon == tag and b.value >= _OPEN_THRESHOLD),
            key=lambda b: site_pos[b.site],
        )
        for b in chosen:
            option = next(o for o in spec.size_options if o.id == b.size)
            annotations.append(
                FacilityAnnotation(tag, b.site, b.size, option.max_capacity_tons)
            )
    return FlowTable(rows=rows, facilities=tuple(annotations))


# ---------------------------------------------------------------------------
# layout


@dataclass(frozen=True)
class SiteLayout:
    role: str
    site: str
    lat: float
    lon: float
    open: bool | None  # None for sources and sinks (no install decision)
    size: str | None


@dataclass(frozen=True)
class LayoutExport:
    sites: tuple[SiteLayout, ...]

    def open_count(self, role: str) -> int:
        return sum(1 for s in self.sites if s.role == role and s.open)

    def to_csv(self) -> str:
        lines = ["role,site,lat,lon,open,size"]
        for s in self.sites:
            open_txt = "" if s.open is None else ("1" if s.open else "0")
            lines.append(
                f"{s.role},{s.site},{_fmt6(s.lat)},{_fmt6(s.lon)},{open_txt},{s.size or ''}"
            )
        return "\n".join(lines) + "\n"

    def to_geojson(self) -> str:
        features = []
        for s in self.sites:
            properties = {"role": s.role, "site": s.site}
            if s.open is not None:
                properties["open"] = s.open
                properties["size"] = s.size
            features.append(
                {
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [s.lon, s.lat]},
                    "properties": properties,
                }
            )
        return json.dumps({"type": "FeatureCollection", "features": features}, indent=2) + "\n"


def export_layout(sol: Solution, inst: Instance) -> LayoutExport:
    """Every network node with its open/size decision where one exists."""
    _, installs = decode_solution(sol, inst)
    chosen: dict[tuple[str, str], str] = {}
    for b in installs:
        if b.value >= _OPEN_THRESHOLD:
            key = (b.echelon, b.site)
            if key in chosen:
                raise ReportError(f"site {b.site} has two chosen sizes in the solution")
            chosen[key] = b.size
    sites: list[SiteLayout] = []
    for n in inst.role_nodes("sources"):
        sites.append(SiteLayout("source", n.id, n.lat, n.lon, None, None))
    for tag in ECHELON_TAGS:
        for n in inst.echelon(tag).sites:
            size = chosen.get((tag, n.id))
            sites.append(SiteLayout(tag, n.id, n.lat, n.lon, size is not None, size))
    for n in inst.role_nodes("sinks"):
        sites.append(SiteLayout("sink", n.id, n.lat, n.lon, None, None))
    return LayoutExport(sites=tuple(sites))


# ---------------------------------------------------------------------------
# utilization


@dataclass(frozen=True)
class UtilizationRow:
    echelon: str
    site: str
    size: str
    period: str
    inflow_tons: float
    capacity_tons: float
    utilization: float
    annual_capacity_tons: float


def compute_utilization(sol: Solution, inst: Instance) -> list[UtilizationRow]:
    """Per open facility and period: inflow against the chosen capacity.

    Capacity is per period; the annualized column rescales it by
    1 year / period duration for display.
    """
    flows, installs = decode_solution(sol, inst)
    inflow: dict[tuple[str, str, str], float] = {}
    leg_dest_role = {leg: d for leg, _, d in LEGS}
    for f in flows:
        dest_role = leg_dest_role[f.leg]
        if dest_role in ECHELON_TAGS:
            key = (dest_role, f.dest, f.period)
            inflow[key] = inflow.get(key, 0.0) + f.tons
    rows: list[UtilizationRow] = []
    for tag in ECHELON_TAGS:
        spec = inst.echelon(tag)
        site_pos = {n.id: k for k, n in enumerate(spec.sites)}
        chosen = sorted(
            (b for b in installs if b.echelon == tag and b.value >= _OPEN_THRESHOLD),
            key=lambda b: site_pos[b.site],
        )
        for b in chosen:
            option = next(o for o in spec.size_options if o.id == b.size)
            for t in inst.periods:
                tons = inflow.get((tag, b.site, t.id), 0.0)
                cap = option.max_capacity_tons
                rows.append(
                    UtilizationRow(
                        echelon=tag,
                        site=b.site,
                        size=b.size,
                        period=t.id,
                        inflow_tons=tons,
                        capacity_tons=cap,
                        utilization=tons / cap if cap > 0.0 else 0.0,
                        annual_capacity_tons=cap / t.duration_years,
                    )
                )
    return rows


def utilization_csv(rows: list[UtilizationRow]) -> str:
    lines = ["echelon,site,size,period,inflow_tons,capacity_tons,utilization,annual_capacity_tons"]
    for r in rows:
        lines.append(
            f"{r.echelon},{r.site},{r.size},{r.period},{_fmt6(r.inflow_tons)},"
            f"{_fmt6(r.capacity_tons)},{_fmt6(r.utilization)},{_fmt6(r.annual_capacity_tons)}"
        )
    return "\n".join(lines) + "\n"
