"""Scenario files: an INI document with one section per building block.

Loading validates every field and cross-checks the scheme against the agent
and coupling choices, so an incompatible scenario fails before any run.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .coupling import arctan_law, quadratic_law
from .dynamics import monotone_agent, saturated_linear_agent
from .graph import Topology, TopologyError, build_line_graph, from_edge_list
from .hybrid_sim import Network, SimConfig
from .triggering import SCHEMES, EdgeClockParams, UnsupportedSchemeError, select_sigma


class ConfigError(ValueError):
    """Malformed or inconsistent scenario; the message names the offending field."""


AGENTS = ("saturated_linear", "monotone")
LAWS = ("arctan", "quadratic")


@dataclass(frozen=True)
class Scenario:
    name: str = "rendezvous"
    # topology: either a line graph on ``nodes`` nodes or an explicit edge list
    nodes: int = 5
    edges: Optional[tuple[tuple[int, int], ...]] = None
    agent: str = "saturated_linear"
    sat_level: float = 1.0
    agent_c: float = 1.0
    nonlinearity: str = "cubic"
    law: str = "arctan"
    offset: Optional[tuple[float, ...]] = None
    scheme: str = "etc"
    a: float = 0.0
    b: float = 10.0
    sigma: Optional[float] = None
    kappa: Optional[float] = None
    ttc_mode: str = "periodic"
    epsilon: Optional[float] = None
    horizon: float = 20.0
    flow_step: float = 1e-3
    event_tolerance: float = 1e-10
    output_step: float = 1e-2
    seed: int = 0
    runs: int = 100
    spread: float = 5.0

    # -- construction ------------------------------------------------------
    def topology(self) -> Topology:
        try:
            if self.edges is None:
                return build_line_graph(self.nodes)
            return from_edge_list(self.nodes, self.edges)
        except TopologyError as exc:
            raise ConfigError(f"[topology] {exc}") from exc

    def agent_model(self):
        if self.agent == "saturated_linear":
            return saturated_linear_agent(self.sat_level)
        return monotone_agent(self.agent_c, self.nonlinearity)

    def coupling(self):
        if self.law == "arctan":
            return arctan_law()
        return quadratic_law(self.offset)

    def edge_sigma(self, topo: Topology) -> list[float]:
        if self.sigma is not None:
            return [self.sigma] * topo.edge_count
        gain = self.agent_model().passivity.output_gain
        return select_sigma(self.kappa, topo, gain)

    def network(self) -> Network:
        topo = self.topology()
        clocks = [EdgeClockParams(self.a, self.b, s, self.epsilon) for s in self.edge_sigma(topo)]
        try:
            return Network(topo, self.agent_model(), self.coupling(), clocks, self.scheme, self.ttc_mode)
        except (UnsupportedSchemeError, ValueError) as exc:
            raise ConfigError(f"[trigger] scheme {self.scheme!r}: {exc}") from exc

    def sim_config(self, seed: Optional[int] = None) -> SimConfig:
        return SimConfig(horizon=self.horizon, flow_step=self.flow_step,
                         event_tolerance=self.event_tolerance, output_step=self.output_step,
                         seed=self.seed if seed is None else seed)

    def with_overrides(self, **changes) -> "Scenario":
        changes = {k: v for k, v in changes.items() if v is not None}
        return validate(replace(self, **changes))


# -- parsing ---------------------------------------------------------------

def _get(cp, section, key, conv, default, what=""):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key).strip()
    if raw.lower() in ("", "none", "auto"):
        return None
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: expected {what or conv.__name__}") from exc


def _edge_list(text: str):
    edges = []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        tail, sep, head = item.partition("-")
        if not sep:
            raise ValueError(item)
        edges.append((int(tail), int(head)))
    return tuple(edges)


def _floats(text: str):
    return tuple(float(x) for x in text.split(","))


_KNOWN = {
    "scenario": {"name"},
    "topology": {"nodes", "edges"},
    "agent": {"model", "sat_level", "c", "nonlinearity"},
    "coupling": {"law", "offset"},
    "trigger": {"scheme", "a", "b", "sigma", "kappa", "ttc_mode", "epsilon"},
    "simulation": {"horizon", "flow_step", "event_tolerance", "output_step", "seed", "runs", "spread"},
}


def parse(text: str, source: str = "<string>") -> Scenario:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        # configparser messages carry the file name and line number
        raise ConfigError(str(exc)) from exc
    for section in cp.sections():
        if section not in _KNOWN:
            raise ConfigError(f"{source}: unknown section [{section}]")
        unknown = set(cp.options(section)) - _KNOWN[section]
        if unknown:
            raise ConfigError(f"{source}: unknown field(s) {sorted(unknown)} in [{section}]")

    d = Scenario()
    f = float
    sc = Scenario(
        name=cp.get("scenario", "name", fallback=d.name).strip(),
        nodes=_get(cp, "topology", "nodes", int, d.nodes, "an integer"),
        edges=_get(cp, "topology", "edges", _edge_list, d.edges, "pairs like 1-2, 2-3"),
        agent=cp.get("agent", "model", fallback=d.agent).strip(),
        sat_level=_get(cp, "agent", "sat_level", f, d.sat_level, "a number"),
        agent_c=_get(cp, "agent", "c", f, d.agent_c, "a number"),
        nonlinearity=cp.get("agent", "nonlinearity", fallback=d.nonlinearity).strip(),
        law=cp.get("coupling", "law", fallback=d.law).strip(),
        offset=_get(cp, "coupling", "offset", _floats, d.offset, "comma-separated numbers"),
        scheme=cp.get("trigger", "scheme", fallback=d.scheme).strip().lower(),
        a=_get(cp, "trigger", "a", f, d.a, "a number"),
        b=_get(cp, "trigger", "b", f, d.b, "a number"),
        sigma=_get(cp, "trigger", "sigma", f, d.sigma, "a number or auto"),
        kappa=_get(cp, "trigger", "kappa", f, d.kappa, "a number"),
        ttc_mode=cp.get("trigger", "ttc_mode", fallback=d.ttc_mode).strip(),
        epsilon=_get(cp, "trigger", "epsilon", f, d.epsilon, "a number"),
        horizon=_get(cp, "simulation", "horizon", f, d.horizon, "a number"),
        flow_step=_get(cp, "simulation", "flow_step", f, d.flow_step, "a number"),
        event_tolerance=_get(cp, "simulation", "event_tolerance", f, d.event_tolerance, "a number"),
        output_step=_get(cp, "simulation", "output_step", f, d.output_step, "a number"),
        seed=_get(cp, "simulation", "seed", int, d.seed, "an integer"),
        runs=_get(cp, "simulation", "runs", int, d.runs, "an integer"),
        spread=_get(cp, "simulation", "spread", f, d.spread, "a number"),
    )
    for key in ("nodes", "sat_level", "agent_c", "a", "b", "horizon", "flow_step",
                "event_tolerance", "output_step", "seed", "runs", "spread"):
        if getattr(sc, key) is None:
            raise ConfigError(f"field {key} may not be empty")
    return validate(sc)


def validate(sc: Scenario) -> Scenario:
    """Check field ranges and cross-field rules; returns the scenario unchanged."""
    if sc.agent not in AGENTS:
        raise ConfigError(f"[agent] model = {sc.agent!r}: expected one of {AGENTS}")
    if sc.law not in LAWS:
        raise ConfigError(f"[coupling] law = {sc.law!r}: expected one of {LAWS}")
    if sc.offset is not None and sc.law != "quadratic":
        raise ConfigError("[coupling] offset only applies to the quadratic law")
    if sc.scheme not in SCHEMES:
        raise ConfigError(f"[trigger] scheme = {sc.scheme!r}: expected one of {SCHEMES}")
    if sc.ttc_mode not in ("periodic", "aperiodic"):
        raise ConfigError(f"[trigger] ttc_mode = {sc.ttc_mode!r}: expected periodic or aperiodic")
    if sc.sigma is None and sc.kappa is None:
        raise ConfigError("[trigger] give sigma, or kappa to derive it")
    if sc.kappa is not None and not 0 < sc.kappa < 1:
        raise ConfigError(f"[trigger] kappa = {sc.kappa}: must lie in (0, 1)")
    if sc.runs < 1:
        raise ConfigError(f"[simulation] runs = {sc.runs}: need at least one run")
    if not sc.spread > 0:
        raise ConfigError(f"[simulation] spread = {sc.spread}: must be positive")
    try:
        sc.sim_config()
        EdgeClockParams(sc.a, sc.b, sc.sigma if sc.sigma is not None else 1.0, sc.epsilon)
        model = sc.agent_model()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    topo = sc.topology()
    if sc.sigma is not None and sc.kappa is not None:
        bound = min(select_sigma(sc.kappa, topo, model.passivity.output_gain))
        if sc.sigma > bound * (1 + 1e-12):
            raise ConfigError(f"[trigger] sigma = {sc.sigma} exceeds {bound:.6g}, the largest value "
                              f"for which the passivity condition holds with kappa = {sc.kappa}")
    sc.network()  # scheme compatibility
    return sc


def load(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse(text, source=str(path))


def dumps(sc: Scenario) -> str:
    """Serialize every field explicitly so the file is self-describing."""
    def num(x):
        return "none" if x is None else repr(x)

    cp = configparser.ConfigParser(interpolation=None)
    cp["scenario"] = {"name": sc.name}
    cp["topology"] = {"nodes": str(sc.nodes),
                      "edges": "none" if sc.edges is None else ", ".join(f"{i}-{j}" for i, j in sc.edges)}
    cp["agent"] = {"model": sc.agent, "sat_level": num(sc.sat_level), "c": num(sc.agent_c),
                   "nonlinearity": sc.nonlinearity}
    cp["coupling"] = {"law": sc.law,
                      "offset": "none" if sc.offset is None else ", ".join(map(repr, sc.offset))}
    cp["trigger"] = {"scheme": sc.scheme, "a": num(sc.a), "b": num(sc.b), "sigma": num(sc.sigma),
                     "kappa": num(sc.kappa), "ttc_mode": sc.ttc_mode, "epsilon": num(sc.epsilon)}
    cp["simulation"] = {"horizon": num(sc.horizon), "flow_step": num(sc.flow_step),
                        "event_tolerance": num(sc.event_tolerance), "output_step": num(sc.output_step),
                        "seed": str(sc.seed), "runs": str(sc.runs), "spread": num(sc.spread)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
