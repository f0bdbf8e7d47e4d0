"""Shared fixtures.

The expensive work (oracle passes and external solves over the whole tiny
suite) happens once per session in `suite_run`; the equivalence and the
conservation acceptance checks both read from it.
"""

from __future__ import annotations

import json
import shutil
import time
from dataclasses import dataclass
from pathlib import Path

import pytest

from upcyclenet import (
    Instance,
    Model,
    OracleCertificate,
    Solution,
    build_milp,
    parse_instance,
    run_external_solver,
    serialize_instance,
    solve_exact,
)
from upcyclenet.scenario import make_tiny_suite, single_chain_instance

SUITE_SEED = 2026
COST_SCALE = 7.0

ADAPTER_PATH = Path(__file__).parent / "scipy_milp_adapter.py"


def _python3() -> str:
    return shutil.which("python3") or "python3"


def adapter_template(*extra: str) -> str:
    parts = [_python3(), str(ADAPTER_PATH), "{mps}", "{sol}", *extra]
    return " ".join(parts)


def have_scipy_milp() -> bool:
    try:
        from scipy.optimize import milp  # noqa: F401
    except ImportError:
        return False
    return True


def scale_costs(inst: Instance, k: float) -> Instance:
    """Same instance with every cost parameter multiplied by k.

    Rebuilt through the document form so the result is a fully independent
    object.
    """
    doc = json.loads(serialize_instance(inst))
    for ech in doc["echelons"].values():
        ech["op_cost_per_ton"] *= k
        for option in ech["size_options"]:
            option["install_cost_annual"] *= k
    doc["transport_cost"] = {p: v * k for p, v in doc["transport_cost"].items()}
    return parse_instance(json.dumps(doc))


@dataclass
class SuiteRecord:
    inst: Instance
    model: Model  # prune on
    sol_on: Solution
    cert_on: OracleCertificate
    sol_off: Solution
    sol_perm: Solution
    cert_perm: OracleCertificate
    sol_scaled: Solution
    cert_scaled: OracleCertificate
    external: Solution | None


@dataclass
class SuiteRun:
    records: list[SuiteRecord]
    wall_seconds: float


@pytest.fixture(scope="session")
def hand_instance() -> Instance:
    return single_chain_instance()


@pytest.fixture(scope="session")
def tiny_suite() -> list[Instance]:
    return make_tiny_suite(SUITE_SEED)


@pytest.fixture(scope="session")
def suite_run(tiny_suite) -> SuiteRun:
    started = time.perf_counter()
    cmd = adapter_template() if have_scipy_milp() else None
    records = []
    for inst in tiny_suite:
        model = build_milp(inst, prune=True)
        sol_on, cert_on = solve_exact(inst, prune=True)
        sol_off, _ = solve_exact(inst, prune=False)
        sol_perm, cert_perm = solve_exact(inst, prune=True, permute_seed=1)
        sol_scaled, cert_scaled = solve_exact(scale_costs(inst, COST_SCALE), prune=True)
        external = run_external_solver(model, cmd, time_limit=120.0) if cmd else None
        records.append(
            SuiteRecord(
                inst=inst,
                model=model,
                sol_on=sol_on,
                cert_on=cert_on,
                sol_off=sol_off,
                sol_perm=sol_perm,
                cert_perm=cert_perm,
                sol_scaled=sol_scaled,
                cert_scaled=cert_scaled,
                external=external,
            )
        )
    return SuiteRun(records=records, wall_seconds=time.perf_counter() - started)
