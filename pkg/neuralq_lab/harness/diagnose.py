"""Diagnostic probes driven by an experiment configuration."""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import numpy as np

from ..diagnostics import ProbeReport, RegularityResult, RegularityStatus
from ..diagnostics.bias import bias_probe
from ..diagnostics.linearization import linearization_probe, sphere_point, width_regime
from ..diagnostics.mixing import estimate_mixing
from ..diagnostics.population import search_gap_violation
from ..diagnostics.sigma import (
    MAX_PATTERNS,
    check_regularity,
    check_regularity_all_patterns,
    estimate_sigma,
)
from ..learning import RunConfig
from ..learning.neural_q import step_size, train
from ..mdp import MdpSpec, PolicySpec
from ..mdp.oracles import stationary_distribution
from ..network import NetShape
from ..network.linearized import linearize
from ..network.projection import BallConstraint
from ..network.relu import init_gaussian
from ..utils import FitDegenerate, InvalidArgument, SigmaSingular, handle_lab_exceptions
from . import ExperimentConfig
from .config import PROBES

logger = logging.getLogger(__name__)


def _base_run(config: ExperimentConfig, mdp: MdpSpec) -> RunConfig:
    if config.cells:
        return config.run_config(config.cells[0], mdp)
    cell = {**config.run, "m": config.run.get("m") or config.diagnostics["widths"][0]}
    return config.run_config(cell, mdp)


def _regularity(run: RunConfig, mdp: MdpSpec, policy: PolicySpec, mu: np.ndarray, safety: float) -> RegularityResult:
    gamma = mdp.gamma if run.gamma is None else run.gamma
    init_seed, direction_seed = np.random.SeedSequence(run.seed).spawn(2)
    theta0 = init_gaussian(run.shape, np.random.default_rng(init_seed))
    if mdp.n_actions**mdp.n_states <= MAX_PATTERNS:
        return check_regularity_all_patterns(theta0, mdp, policy, gamma, safety, mu)
    direction = sphere_point(theta0, 1.0, np.random.default_rng(direction_seed)) - theta0
    pair = estimate_sigma(theta0, mdp, policy, direction, reduce_to_span=True, mu=mu)
    return check_regularity(pair, gamma, safety)


@handle_lab_exceptions("diagnose")
def run_diagnostics(
    config: ExperimentConfig,
    probes: Optional[Iterable[str]] = None,
    out_dir: Optional[Path] = None,
) -> tuple[ProbeReport, Dict[str, Any]]:
    """Run the requested probes and write probes.csv and probes_summary.md.

    Returns:
        The probe report and a flat dict of headline results for printing
    """
    settings = config.diagnostics
    probes = list(settings["probes"] if probes is None else probes)
    if "all" in probes:
        probes = list(PROBES)
    unknown = [p for p in probes if p not in PROBES]
    if unknown:
        raise InvalidArgument(f"Unknown probes {unknown}")
    out_dir = Path(config.output_dir if out_dir is None else out_dir)
    mdp = config.build_mdp()
    policy = config.build_policy(mdp)
    mu = stationary_distribution(mdp, policy)
    run = _base_run(config, mdp)
    omega = run.omega
    report = ProbeReport()
    headline: Dict[str, Any] = {"weighting": "stationary"}
    cell = dict(m=run.shape.m, L=run.shape.L, omega=omega, seed=run.seed)

    regularity: Optional[RegularityResult] = None
    if "sigma" in probes or "regularity" in probes or "gap" in probes:
        try:
            regularity = _regularity(run, mdp, policy, mu, settings["safety"])
            headline["regularity"] = regularity.verdict()
            if regularity.beta is not None:
                headline["admissible_beta"] = regularity.beta
            if not regularity.unbounded:
                report.add(probe="sup_alpha", value=regularity.sup_alpha, **cell)
            report.add(probe="sigma_min_eigenvalue", value=regularity.min_eigenvalue, **cell)
        except SigmaSingular as e:
            headline["regularity"] = f"INCONCLUSIVE (min eigenvalue {e.min_eigenvalue:.3e})"

    if "mixing" in probes:
        try:
            mixing = estimate_mixing(mdp, policy, step_size(run), settings["horizon"])
            headline.update(lam=mixing.lam, rho=mixing.rho, tau_star=mixing.tau_star)
            report.add(probe="tau_star", value=float(mixing.tau_star), **cell)
        except FitDegenerate as e:
            headline["mixing"] = f"exact within two steps ({e})"

    if "linearization" in probes:
        shapes = [NetShape(d=mdp.feature_dim, m=m, L=run.shape.L) for m in settings["widths"]]
        linear = linearization_probe(shapes, mdp.features, settings["n_seeds"], run.omega_coeff, base_seed=run.seed)
        report.extend(linear)
        for probe in ("linearization_gap", "grad_perturbation"):
            for m, value in linear.medians(probe).items():
                headline[f"{probe}_median_m{m}"] = value
        for shape in shapes:
            regime = width_regime(shape, c1=settings["c1"], delta=settings["delta"])
            headline[f"width_regime_m{shape.m}"] = "inside" if regime.satisfied else f"outside (needs m >= {regime.required_m:.3g})"

    if "bias" in probes:
        record = train(run, mdp, policy)
        bias = bias_probe(record, mdp, policy, window=settings["window"])
        report.extend(bias)
        windows = bias.select("bias_window")["value"]
        headline["bias_mean_abs_window"] = float(np.abs(windows).mean())

    if "gap" in probes:
        if regularity is None or regularity.status is not RegularityStatus.PASS:
            beta = run.beta
            headline["gap_beta_source"] = "run config (regularity not passed)"
        else:
            beta = regularity.beta if regularity.beta is not None else run.beta
        init_seed, search_seed = np.random.SeedSequence(run.seed).spawn(2)
        theta0 = init_gaussian(run.shape, np.random.default_rng(init_seed))
        search = search_gap_violation(
            linearize(theta0),
            mdp,
            policy,
            BallConstraint(theta0, omega),
            beta,
            settings["n_pairs"],
            np.random.default_rng(search_seed),
            gamma=run.gamma,
        )
        report.add(probe="gap_min_margin", value=search.min_margin, n_samples=search.n_pairs, **cell)
        headline.update(gap_min_margin=search.min_margin, gap_violations=search.n_violations)

    if report.cells:
        report.to_csv(out_dir / "probes.csv")
        report.write_summary(out_dir / "probes_summary.md")
    logger.info("Probes %s produced %d cells", ", ".join(probes), len(report.cells))
    return report, headline
