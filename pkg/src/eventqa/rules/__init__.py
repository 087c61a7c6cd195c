"""Rule files for the reasoning program, assembled per variant and dimensionality."""
from __future__ import annotations

from importlib.resources import files

from ..physics import Thresholds

SECTIONS = {
    "H0": ("detect_entry", "detect_exit", "detect_move", "detect_stop_collision"),
    "H1": ("detect_entry_persistent", "detect_exit", "detect_move", "detect_stop_collision"),
    "H2": ("detect_entry_persistent", "detect_exit", "detect_move_persistent", "detect_stop_collision"),
}


def rule_text(name: str) -> str:
    return files(__name__).joinpath(f"{name}.lp").read_text(encoding="utf-8")


def program_text(th: Thresholds, variant: str = "H2", dims: int = 3, causal: bool = True) -> str:
    """Full reasoning program with the thresholds bound as constants."""
    if variant not in SECTIONS:
        raise ValueError(f"unknown variant {variant!r}")
    detection = list(SECTIONS[variant])
    if th.persistence_window == 1:
        detection = [s.replace("_persistent", "") for s in detection]
    consts = "".join(
        f"#const {k} = {getattr(th, k)}.\n" for k in ("d_move", "d_stop", "d_prox", "d_vel")
    )
    numbers = "number(d_move). number(d_stop). number(d_prox). number(d_vel).\n"
    parts = [consts, numbers, rule_text(f"physics_{dims}d"), rule_text("effects"), rule_text("event_calculus")]
    parts += [rule_text(s) for s in detection]
    if causal:
        parts.append(rule_text("causal"))
    return "\n".join(parts)
