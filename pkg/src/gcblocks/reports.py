"""Structured run reports.

Reports render as ``key: value`` lines with a fixed key order (command,
seed, spec, tolerances, results, checks, overall pass), so two runs with
identical inputs produce byte-identical text.  No timestamps.  Floats are
written with ``repr``, the shortest round-tripping form.
"""

from dataclasses import dataclass, field

import numpy as np


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


@dataclass
class RunReport:
    command: str
    seed: int | None = None
    spec: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_text(self) -> str:
        lines = [f"command: {self.command}"]
        if self.seed is not None:
            lines.append(f"seed: {self.seed}")
        for prefix, mapping in (
            ("spec", self.spec),
            ("tolerance", self.tolerances),
            ("result", self.results),
            ("check", self.checks),
        ):
            for key, value in mapping.items():
                lines.append(f"{prefix}.{key}: {_fmt(value)}")
        lines.append(f"pass: {_fmt(self.ok)}")
        return "\n".join(lines) + "\n"
