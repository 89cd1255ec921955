"""End-to-end design: weights -> generalized plant -> synthesis -> reduction -> checks."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .analysis import ClosedLoopReport, verify_objectives
from .baseline_pr import PRDesign, design_pr, pr_controller, pr_margins
from .config import Config
from .lti import StateSpaceSystem, c2d_tustin, is_stable, tf_to_ss
from .reduction import ReductionResult, reduce_controller
from .synthesis import (InfiniteNormError, RobustStabilityReport, SynthesisResult, closed_loop,
                        hinf_norm, hinf_synthesize, robust_stability_grid)
from .uncertainty import GeneralizedPlant, assemble_generalized_plant, delta_grid, sample_plant
from .weights import make_weights

log = logging.getLogger(__name__)


@dataclass
class DesignOutcome:
    synthesis: SynthesisResult
    reduction: ReductionResult
    objectives: ClosedLoopReport
    robust: RobustStabilityReport
    generalized: GeneralizedPlant
    reduced_cl_norm: float
    grid: list
    flags: dict = field(default_factory=dict)

    @property
    def controller(self) -> StateSpaceSystem:
        return self.reduction.controller

    @property
    def passed(self) -> bool:
        return all(self.flags.values())


def _cl_norm(G: GeneralizedPlant, K: StateSpaceSystem) -> float:
    cl = closed_loop(G, K)
    if not is_stable(cl):
        return float("inf")
    try:
        return hinf_norm(cl)
    except InfiniteNormError:
        return float("inf")


def design_grid(cfg: Config, density: int | None = None) -> list:
    s = cfg.synthesis
    return delta_grid(n_random=s.n_random, seed=s.seed,
                      density=s.grid_density if density is None else density)


def check_controller(cfg: Config, K: StateSpaceSystem, grid) -> tuple[ClosedLoopReport, RobustStabilityReport]:
    params = cfg.plant
    plants = [sample_plant(params, a, b) for a, b in grid]
    report = verify_objectives(plants, K, params.omega_o)
    robust = robust_stability_grid(params, K, grid)
    return report, robust


def run_design(cfg: Config, order: int | None = None, grid_density: int | None = None) -> DesignOutcome:
    """Synthesize, reduce and verify. Raises ``InfeasibleError`` if gamma >= 1."""
    params = cfg.plant
    ws = make_weights(params, cfg.weights)
    G = assemble_generalized_plant(params, ws, cfg.synthesis.scaling)
    syn = hinf_synthesize(G, cfg.synthesis.gamma_hint, rel_tol=cfg.synthesis.rel_tol,
                          backoff=cfg.synthesis.backoff)
    limit = (1.0 + cfg.synthesis.max_cl_degradation) * syn.closed_loop_norm

    def accept(Kr):
        return _cl_norm(G, Kr) < limit

    red = reduce_controller(syn.controller, accept=accept, order=order)
    red_norm = _cl_norm(G, red.controller)
    grid = design_grid(cfg, grid_density)
    report, robust = check_controller(cfg, red.controller, grid)
    flags = {"gamma_below_one": syn.gamma_achieved < 1.0,
             "reduction_degradation": red_norm < limit,
             "robust_stability": robust.passed}
    flags.update(report.pass_flags)
    log.info("gamma=%.4f, order %d -> %d (%s)", syn.gamma_achieved, red.full_order, red.order, red.binding)
    return DesignOutcome(syn, red, report, robust, G, red_norm, grid, flags)


def discretize(K: StateSpaceSystem, cfg: Config) -> StateSpaceSystem:
    return c2d_tustin(K, 1.0 / cfg.plant.f_sw)


def pr_baseline(cfg: Config) -> tuple[PRDesign, StateSpaceSystem]:
    """PR gains (tuned unless fixed in the config) and their continuous realization."""
    params = cfg.plant
    if cfg.pr.params is not None:
        m = pr_margins(params, cfg.pr.params)
        d = PRDesign(cfg.pr.params, m, False, True, float("nan"), ["gains fixed by config"])
    else:
        d = design_pr(params, omega_c=cfg.pr.omega_c, fallback_gm_db=cfg.pr.fallback_gm_db,
                      grid=design_grid(cfg))
    return d, tf_to_ss(pr_controller(d.params, params.omega_o))
