"""JSON scenario files.

Schema (``format_version`` 1)::

    {"format_version": 1,
     "area": {"w": 500, "h": 500},
     "phy": {"gamma": 0.5, "eta": 7e-11, "p_tx": 0.1, "alpha": 4, "v": 1},
     "nodes": [{"id": 0, "x": 1.0, "y": 2.0, "role": "relay", "tx_prob": 0.5}, ...],
     "flows": [{"id": 0, "src": 3, "dst": 7, "path": [3, 12, 7]}, ...]}
"""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from ..phy import PhyParams
from ..scenario import Flow, Node, Scenario

FORMAT_VERSION = 1


class ScenarioFormatError(ValueError):
    pass


def scenario_to_dict(sc: Scenario) -> dict:
    nodes = []
    for n in sc.nodes:
        d = {"id": n.id, "x": n.x, "y": n.y, "role": n.role}
        if n.tx_prob is not None:
            d["tx_prob"] = n.tx_prob
        nodes.append(d)
    return {
        "format_version": FORMAT_VERSION,
        "area": {"w": sc.area[0], "h": sc.area[1]},
        "phy": {"gamma": sc.phy.gamma, "eta": sc.phy.eta, "p_tx": sc.phy.p_tx,
                "alpha": sc.phy.alpha, "v": sc.phy.v},
        "nodes": nodes,
        "flows": [{"id": f.id, "src": f.src, "dst": f.dst, "path": list(f.path)} for f in sc.flows],
    }


def _get(d, key, where, kind=None):
    name = f"{where}.{key}" if where else key
    if not isinstance(d, dict):
        raise ScenarioFormatError(f"'{where or '<root>'}' must be an object")
    if key not in d:
        raise ScenarioFormatError(f"missing required field '{name}'")
    val = d[key]
    if kind is not None and (not isinstance(val, kind) or isinstance(val, bool)):
        raise ScenarioFormatError(f"field '{name}' has the wrong type ({type(val).__name__})")
    return val


def scenario_from_dict(d: dict, source: str = "<dict>") -> Scenario:
    num = (int, float)
    try:
        ver = _get(d, "format_version", "", int)
        if ver != FORMAT_VERSION:
            raise ScenarioFormatError(f"unsupported format_version {ver}")
        area = _get(d, "area", "", dict)
        w, h = _get(area, "w", "area", num), _get(area, "h", "area", num)
        p = _get(d, "phy", "", dict)
        phy = PhyParams(gamma=_get(p, "gamma", "phy", num), eta=_get(p, "eta", "phy", num),
                        p_tx=_get(p, "p_tx", "phy", num), alpha=_get(p, "alpha", "phy", num),
                        v=p.get("v", 1.0))
        nodes = []
        for idx, n in enumerate(_get(d, "nodes", "", list)):
            where = f"nodes[{idx}]"
            nodes.append(Node(_get(n, "id", where, int), float(_get(n, "x", where, num)),
                              float(_get(n, "y", where, num)), _get(n, "role", where, str),
                              n.get("tx_prob")))
        flows = []
        for idx, f in enumerate(_get(d, "flows", "", list)):
            where = f"flows[{idx}]"
            flows.append(Flow(_get(f, "id", where, int), _get(f, "src", where, int),
                              _get(f, "dst", where, int), tuple(_get(f, "path", where, list))))
        sc = Scenario(tuple(nodes), tuple(flows), phy, (float(w), float(h)))
    except ScenarioFormatError as e:
        raise ScenarioFormatError(f"{source}: {e}") from None
    except ValueError as e:
        raise ScenarioFormatError(f"{source}: {e}") from e
    if sc.routed:
        try:
            sc.validate()
        except ValueError as e:
            raise ScenarioFormatError(f"{source}: {e}") from e
    return sc


def write_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n")


def read_scenario(path) -> Scenario:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioFormatError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    return scenario_from_dict(d, str(path))


def bundled(name: str = "fig3") -> Scenario:
    """Load a scenario shipped with the package (``fig3``: the two-flow toy topology)."""
    ref = resources.files("tofra.data").joinpath(f"{name}.json")
    return scenario_from_dict(json.loads(ref.read_text()), f"tofra.data/{name}.json")
