"""Text formats: polytope files, potential config blocks, run configs, CSV.

Polytope files have a header line ``dim n`` followed by one facet per line,
``u_1 ... u_n b`` with integer normal entries and a rational or decimal
offset.  All CSV numbers are written with 17 significant digits so repeated
runs produce byte-identical files.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .polytope import build_polytope
from .potential import canonical_potential, potential_from_expression

__all__ = [
    "read_polytope",
    "parse_polytope_text",
    "potential_from_config",
    "RunConfig",
    "load_run_config",
    "dump_run_config",
    "fmt",
    "write_csv",
]


def parse_polytope_text(text):
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError("empty polytope description")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "dim":
        raise ValueError(f"expected header 'dim n', got {lines[0]!r}")
    n = int(head[1])
    normals, offsets = [], []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != n + 1:
            raise ValueError(
                f"facet line needs {n} normal entries and an offset: {ln!r}")
        normals.append(tuple(int(p) for p in parts[:n]))
        offsets.append(parts[n])            # Fraction-parseable string
    return build_polytope(normals, offsets)


def read_polytope(path):
    with open(path) as fh:
        return parse_polytope_text(fh.read())


def potential_from_config(P, block):
    """Build a potential from {canonical: true} or {v: "<expression>"}."""
    if not isinstance(block, dict):
        raise ValueError("potential config must be a mapping")
    if block.get("canonical"):
        return canonical_potential(P)
    if "v" in block:
        return potential_from_expression(P, block["v"])
    raise ValueError(
        "potential config needs 'canonical: true' or a 'v' expression")


@dataclass
class RunConfig:
    command: str
    p_path: str = None
    q_path: str = None
    u0: dict = field(default_factory=lambda: {"canonical": True})
    g: dict = field(default_factory=lambda: {"canonical": True})
    h: float = None
    cfl: float = 0.2
    t_end: float = None
    diag_every: float = None
    tracked_z: list = field(default_factory=list)
    out_csv: str = None
    out_outcome: str = None
    out_state: str = None
    tol_overrides: dict = field(default_factory=dict)

    def validate(self):
        if self.command not in ("stability", "flow", "calabi", "report"):
            raise ValueError(f"unknown command {self.command!r}")
        if self.command == "flow":
            if self.h is None or self.h <= 0:
                raise ValueError("h must be positive")
            if not 0 < self.cfl <= 1:
                raise ValueError("cfl must lie in (0, 1]")
            if self.t_end is None or self.t_end <= 0:
                raise ValueError("t_end must be positive")
            if self.diag_every is None or self.diag_every <= 0:
                raise ValueError("diag_every must be positive")
        return self

    def to_dict(self):
        return {
            "command": self.command,
            "p_path": self.p_path,
            "q_path": self.q_path,
            "u0": self.u0,
            "g": self.g,
            "h": self.h,
            "cfl": self.cfl,
            "t_end": self.t_end,
            "diag_every": self.diag_every,
            "tracked_z": self.tracked_z,
            "out_csv": self.out_csv,
            "out_outcome": self.out_outcome,
            "out_state": self.out_state,
            "tol_overrides": self.tol_overrides,
        }


def load_run_config(path):
    with open(path) as fh:
        data = json.load(fh)
    cfg = RunConfig(
        command=data.get("command", "flow"),
        p_path=data.get("p") or data.get("p_path"),
        q_path=data.get("q") or data.get("q_path"),
        u0=data.get("u0", {"canonical": True}),
        g=data.get("g", {"canonical": True}),
        h=data.get("h"),
        cfl=data.get("cfl", 0.2),
        t_end=data.get("t_end"),
        diag_every=data.get("diag_every"),
        tracked_z=data.get("tracked_z", []),
        out_csv=data.get("out_csv"),
        out_outcome=data.get("out_outcome"),
        out_state=data.get("out_state"),
        tol_overrides=data.get("tol_overrides", {}),
    )
    return cfg.validate()


def dump_run_config(cfg):
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def fmt(x):
    """Deterministic 17-significant-digit rendering of a float."""
    return "%.17g" % float(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                c if isinstance(c, str) else fmt(c) for c in row) + "\n")
