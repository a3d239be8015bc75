"""Stabilizability verdicts from openness bounds and spectral data.

The engine runs a fixed cascade of sufficiency and necessity rules against
the analysis artifacts.  Every rule whose premise holds is recorded; the
decision comes from the first positive rule, then the first negative rule,
and is INCONCLUSIVE when nothing fires.  Specific-case rules run before the
general margin rules so a nilpotent-type system is decided by the rule that
actually matches its structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .hautus import (
    HautusResult,
    SpectralProfile,
    TOL_CLASS,
    format_eigenvalue,
    hautus_asymptotic,
    hautus_full_spectrum,
    kalman_controllability_rank,
    spectral_profile,
)
from .linalg import numerical_rank
from .openness import OpennessReport, openness_report
from .system import (
    CONTINUOUS,
    DISCRETE,
    Linearization,
    SystemSpec,
    detect_control_affine,
    is_affine_system,
    jacobian,
    span_dimension_estimate,
)

EXP_STABILIZABLE_CONT_FEEDBACK = "EXP_STABILIZABLE_CONT_FEEDBACK"
ASY_STABILIZABLE_CONT_FEEDBACK = "ASY_STABILIZABLE_CONT_FEEDBACK"
NOT_SMOOTHLY_EXP_STABILIZABLE = "NOT_SMOOTHLY_EXP_STABILIZABLE"
NOT_SMOOTHLY_ASY_STABILIZABLE = "NOT_SMOOTHLY_ASY_STABILIZABLE"
INCONCLUSIVE = "INCONCLUSIVE"

DECISIONS = (
    EXP_STABILIZABLE_CONT_FEEDBACK,
    ASY_STABILIZABLE_CONT_FEEDBACK,
    NOT_SMOOTHLY_EXP_STABILIZABLE,
    NOT_SMOOTHLY_ASY_STABILIZABLE,
    INCONCLUSIVE,
)

POSITIVE_DECISIONS = (EXP_STABILIZABLE_CONT_FEEDBACK, ASY_STABILIZABLE_CONT_FEEDBACK)

RULE_CITATIONS = {
    "R1": "covering bound exceeds the real unstable spectral bound; "
          "exponential stabilization by continuous feedback",
    "R2": "unstable spectrum reduces to zero and the joint Jacobian has full "
          "row rank; exponential stabilization by continuous feedback",
    "R3": "real spectrum with covering bound above the spectral radius; "
          "exponential stabilization with small-time local controllability",
    "R4": "full row rank of the joint Jacobian is necessary for smooth "
          "exponential stabilization; the rank is deficient",
    "R5": "with strictly unstable spectrum, linear openness is necessary even "
          "for smooth asymptotic stabilization; the rank is deficient",
    "R6": "the control-affine fields span a proper subspace near the "
          "equilibrium, which smooth stabilizing feedback cannot overcome",
    "R7": "driftless system with independent input fields: stabilizable "
          "exactly when the number of controls matches the state dimension",
    "D1": "covering bound exceeds the real unstable spectral bound "
          "(unit-circle classification); stabilization by continuous feedback",
    "D2": "real spectrum with covering bound above the spectral radius; "
          "stabilization by continuous feedback",
    "D3": "nilpotent-type spectrum at zero with full-rank joint Jacobian; "
          "stabilization by continuous feedback",
}


@dataclass(frozen=True)
class FiredRule:
    rule: str
    citation: str
    decision: str
    evidence: dict


@dataclass(frozen=True)
class VerdictFlags:
    linearized_controllable: bool
    small_time_locally_controllable: bool | None


@dataclass(frozen=True)
class Verdict:
    decision: str
    fired_rules: tuple[FiredRule, ...]
    flags: VerdictFlags
    warnings: tuple[str, ...]
    notes: tuple[str, ...]


@dataclass(frozen=True)
class AnalysisConfig:
    tol_rank: float | None = None
    tol_class: float = TOL_CLASS
    margin: float = 0.0
    span_radius: float = 0.1
    span_samples: int = 64
    assume_bounded_perturbation: bool = False
    seed: int = 0


@dataclass(frozen=True)
class AffineStructure:
    """Control-affine shape of the right-hand side, when it has one."""

    is_control_affine: bool
    span_dim: int | None
    driftless: bool
    input_rank: int | None


@dataclass(frozen=True)
class Analysis:
    system: SystemSpec
    linearization: Linearization
    openness: OpennessReport
    profile: SpectralProfile
    hautus: HautusResult
    hautus_full: bool
    kalman_rank: int
    affine: AffineStructure
    verdict: Verdict
    perturbation_margin: float


def perturbation_margin(cov: float, profile: SpectralProfile) -> float:
    """Lipschitz perturbation size the sufficiency margin can absorb."""
    return cov - profile.eta


def _fire(rule: str, decision: str, evidence: dict) -> FiredRule:
    return FiredRule(rule, RULE_CITATIONS[rule], decision, evidence)


def _affine_structure(system: SystemSpec, cfg: AnalysisConfig) -> AffineStructure:
    fields = detect_control_affine(system)
    if fields is None:
        return AffineStructure(False, None, False, None)
    drift = fields[0]
    driftless = all(isinstance(c, ex.Const) and c.value == 0.0 for c in drift)
    columns = []
    for g in fields[1:]:
        columns.append([ex.eval_expr(c, system.x_eq, system.u_eq) for c in g])
    input_matrix = np.array(columns).T if columns else np.zeros((system.n, 0))
    input_rank = numerical_rank(input_matrix, cfg.tol_rank) if columns else 0
    samples = max(cfg.span_samples, 4 * system.n)
    span_dim = span_dimension_estimate(
        fields, system.x_eq, cfg.span_radius, samples, tol=cfg.tol_rank, seed=cfg.seed
    )
    return AffineStructure(True, span_dim, driftless, input_rank)


def _continuous_rules(
    system: SystemSpec,
    cfg: AnalysisConfig,
    rep: OpennessReport,
    prof: SpectralProfile,
    affine: AffineStructure,
) -> tuple[list[FiredRule], list[FiredRule], list[str]]:
    n, m = system.n, system.m
    cov = rep.cov_bound
    tol = cfg.tol_class
    margin = cfg.margin
    real_spectrum = all(abs(v.imag) <= tol for v in prof.eigenvalues)
    positives: list[FiredRule] = []
    negatives: list[FiredRule] = []
    warnings: list[str] = []

    if rep.linearly_open and all(abs(v) <= tol for v in prof.unstable):
        positives.append(_fire("R2", EXP_STABILIZABLE_CONT_FEEDBACK, {
            "cov": cov,
            "max_unstable_modulus": max((abs(v) for v in prof.unstable), default=0.0),
        }))
    if rep.linearly_open and prof.unstable_real_only and cov > prof.eta + margin:
        witness = 0.5 * (prof.eta + cov) if math.isfinite(prof.eta) else 0.5 * cov
        positives.append(_fire("R1", EXP_STABILIZABLE_CONT_FEEDBACK, {
            "cov": cov, "eta": prof.eta, "margin": margin, "kappa_witness": witness,
        }))
    if real_spectrum and cov > prof.eta_tilde + margin:
        positives.append(_fire("R3", EXP_STABILIZABLE_CONT_FEEDBACK, {
            "cov": cov, "eta_tilde": prof.eta_tilde,
        }))

    r7_applicable = affine.driftless and affine.input_rank == m
    if r7_applicable and m == n:
        positives.append(_fire("R7", EXP_STABILIZABLE_CONT_FEEDBACK, {
            "m": m, "n": n, "input_rank": affine.input_rank,
        }))

    strictly_unstable = all(v.real > tol for v in prof.unstable)
    if not rep.linearly_open:
        negatives.append(_fire("R4", NOT_SMOOTHLY_EXP_STABILIZABLE, {
            "jacobian_rank": rep.jacobian_rank, "n": n,
        }))
        if strictly_unstable and prof.unstable:
            negatives.append(_fire("R5", NOT_SMOOTHLY_ASY_STABILIZABLE, {
                "jacobian_rank": rep.jacobian_rank, "n": n,
                "min_unstable_real": min(v.real for v in prof.unstable),
            }))
    if affine.is_control_affine and affine.span_dim is not None and affine.span_dim < n:
        decision = (
            NOT_SMOOTHLY_ASY_STABILIZABLE
            if strictly_unstable and prof.unstable
            else NOT_SMOOTHLY_EXP_STABILIZABLE
        )
        negatives.append(_fire("R6", decision, {
            "span_dim": affine.span_dim, "n": n,
        }))
    if r7_applicable and m < n:
        negatives.append(_fire("R7", NOT_SMOOTHLY_EXP_STABILIZABLE, {
            "m": m, "n": n, "input_rank": affine.input_rank,
        }))

    if not positives and not negatives:
        if rep.linearly_open and not prof.unstable_real_only:
            warnings.append(
                "unstable spectrum contains nonreal eigenvalues; "
                "the sufficiency margin test does not apply"
            )
        if rep.linearly_open and prof.unstable_real_only and cov <= prof.eta + margin:
            warnings.append(
                f"sufficiency margin failed: cov={cov:.12g} <= "
                f"eta={prof.eta:.12g} + margin={margin:.12g}"
            )
        if real_spectrum and cov <= prof.eta_tilde + margin:
            warnings.append(
                f"spectrum-wide margin failed: cov={cov:.12g} <= "
                f"eta_tilde={prof.eta_tilde:.12g} + margin={margin:.12g}"
            )
    return positives, negatives, warnings


def _discrete_rules(
    system: SystemSpec,
    cfg: AnalysisConfig,
    rep: OpennessReport,
    prof: SpectralProfile,
) -> tuple[list[FiredRule], list[FiredRule], list[str]]:
    cov = rep.cov_bound
    tol = cfg.tol_class
    margin = cfg.margin
    real_spectrum = all(abs(v.imag) <= tol for v in prof.eigenvalues)
    positives: list[FiredRule] = []
    warnings: list[str] = []

    if rep.linearly_open and all(abs(v) <= tol for v in prof.eigenvalues):
        positives.append(_fire("D3", ASY_STABILIZABLE_CONT_FEEDBACK, {
            "cov": cov,
            "max_eigen_modulus": max((abs(v) for v in prof.eigenvalues), default=0.0),
        }))
    if rep.linearly_open and prof.unstable_real_only and cov > prof.eta + margin:
        witness = 0.5 * (prof.eta + cov) if math.isfinite(prof.eta) else 0.5 * cov
        positives.append(_fire("D1", ASY_STABILIZABLE_CONT_FEEDBACK, {
            "cov": cov, "eta": prof.eta, "margin": margin, "kappa_witness": witness,
        }))
    if real_spectrum and cov > prof.eta_tilde + margin:
        positives.append(_fire("D2", ASY_STABILIZABLE_CONT_FEEDBACK, {
            "cov": cov, "eta_tilde": prof.eta_tilde,
        }))

    if not positives:
        if rep.linearly_open and not prof.unstable_real_only:
            warnings.append(
                "unstable spectrum contains nonreal eigenvalues; "
                "the sufficiency margin test does not apply"
            )
        if rep.linearly_open and prof.unstable_real_only and cov <= prof.eta + margin:
            warnings.append(
                f"sufficiency margin failed: cov={cov:.12g} <= "
                f"eta={prof.eta:.12g} + margin={margin:.12g}"
            )
        if real_spectrum and cov <= prof.eta_tilde + margin:
            warnings.append(
                f"spectrum-wide margin failed: cov={cov:.12g} <= "
                f"eta_tilde={prof.eta_tilde:.12g} + margin={margin:.12g}"
            )
    return positives, [], warnings


def analyze(system: SystemSpec, config: AnalysisConfig | None = None) -> Analysis:
    """Run the full pipeline: linearize, bound, classify, test, decide."""
    cfg = config or AnalysisConfig()
    lin = jacobian(system)
    rep = openness_report(lin, tol=cfg.tol_rank)
    prof = spectral_profile(lin.a, system.mode, tol_class=cfg.tol_class)
    haut = hautus_asymptotic(lin.a, lin.b, prof, tol=cfg.tol_rank)
    full = hautus_full_spectrum(lin.a, lin.b, tol=cfg.tol_rank)
    kalman = kalman_controllability_rank(lin.a, lin.b, tol=cfg.tol_rank)
    affine = _affine_structure(system, cfg)

    if system.mode == CONTINUOUS:
        positives, negatives, warnings = _continuous_rules(system, cfg, rep, prof, affine)
    else:
        positives, negatives, warnings = _discrete_rules(system, cfg, rep, prof)

    fired = tuple(positives + negatives)
    if positives:
        decision = positives[0].decision
    elif negatives:
        decision = negatives[0].decision
    else:
        decision = INCONCLUSIVE

    notes: list[str] = []
    if not haut.holds:
        joined = ", ".join(format_eigenvalue(v) for v in haut.failures)
        warnings.append(
            f"Hautus rank test fails at lambda={joined}; linearization not stabilizable"
        )
    if math.isfinite(prof.eta) and abs(rep.cov_bound - prof.eta) < 1e-8:
        warnings.append(
            "covering bound within 1e-08 of the spectral bound; "
            "the margin comparison is tolerance-sensitive"
        )

    real_spectrum = all(abs(v.imag) <= cfg.tol_class for v in prof.eigenvalues)
    small_time: bool | None = None
    if system.mode == CONTINUOUS and real_spectrum and rep.cov_bound > prof.eta_tilde + cfg.margin:
        small_time = True
    if (
        system.mode == CONTINUOUS
        and cfg.assume_bounded_perturbation
        and is_affine_system(system)
        and real_spectrum
        and rep.cov_bound > prof.eta_tilde + cfg.margin
    ):
        notes.append(
            "with the asserted bounded perturbation, this linear system with real "
            "spectrum and covering bound above the spectral radius is globally "
            "controllable in any fixed time"
        )
    if system.mode == DISCRETE and decision == INCONCLUSIVE:
        notes.append(
            "no necessity criteria are available in discrete mode; "
            "the sufficiency tests were inconclusive"
        )

    flags = VerdictFlags(linearized_controllable=full, small_time_locally_controllable=small_time)
    verdict = Verdict(
        decision=decision,
        fired_rules=fired,
        flags=flags,
        warnings=tuple(warnings),
        notes=tuple(notes),
    )
    return Analysis(
        system=system,
        linearization=lin,
        openness=rep,
        profile=prof,
        hautus=haut,
        hautus_full=full,
        kalman_rank=kalman,
        affine=affine,
        verdict=verdict,
        perturbation_margin=perturbation_margin(rep.cov_bound, prof),
    )


def analyze_continuous(system: SystemSpec, config: AnalysisConfig | None = None) -> Verdict:
    if system.mode != CONTINUOUS:
        raise ValueError("analyze_continuous requires a continuous-mode system")
    return analyze(system, config).verdict


def analyze_discrete(system: SystemSpec, config: AnalysisConfig | None = None) -> Verdict:
    if system.mode != DISCRETE:
        raise ValueError("analyze_discrete requires a discrete-mode system")
    return analyze(system, config).verdict
