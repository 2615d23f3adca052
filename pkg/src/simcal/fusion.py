"""Product-of-experts fusion, carried out as a weighted sum of logits."""

from __future__ import annotations

from dataclasses import dataclass

from . import errors
from .geom import adaptive_csls, fixed_csls
from .structural import build_struct_logits
from .types import CalibConfig, SimMatrix, Stage, require_stage


@dataclass(frozen=True)
class PoEWeights:
    alpha: float = 1.0
    beta: float = 1.9

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise errors.ValidationError(f"invalid fusion weights ({self.alpha}, {self.beta})")


def poe_fuse(s_geom: SimMatrix, s_struct: SimMatrix, w: PoEWeights) -> SimMatrix:
    require_stage(s_geom, Stage.GEOM)
    require_stage(s_struct, Stage.STRUCT)
    if s_geom.shape != s_struct.shape:
        raise errors.ShapeMismatch(f"{s_geom.shape} vs {s_struct.shape}")
    return s_geom.advance(Stage.FINAL, w.alpha * s_geom.scores + w.beta * s_struct.scores)


def geometric_expert(s_new: SimMatrix, cfg: CalibConfig) -> SimMatrix:
    if cfg.csls_mode == "adaptive":
        return adaptive_csls(s_new, cfg)
    if cfg.csls_mode == "fixed":
        return fixed_csls(s_new, cfg.k_fixed)
    return s_new.advance(Stage.GEOM)


def calibrate(s_new: SimMatrix, cfg: CalibConfig | None = None) -> SimMatrix:
    """Map the pre-CSLS matrix to final scores; a pure function of its inputs.

    The geometric expert is CSLS (fixed or adaptive) or ``s_new`` itself
    when CSLS is off. Without the structural expert the geometric scores
    are returned unchanged as the final stage.
    """
    cfg = cfg or CalibConfig()
    require_stage(s_new, Stage.NEW)
    cfg.check(s_new.shape[1])
    s_geom = geometric_expert(s_new, cfg)
    if not cfg.struct_poe:
        return s_geom.advance(Stage.FINAL)
    s_struct, _ = build_struct_logits(s_new, cfg)
    return poe_fuse(s_geom, s_struct, PoEWeights(cfg.poe_alpha, cfg.poe_beta))
