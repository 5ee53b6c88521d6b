"""Three-way verdicts for sampled numerical checks."""
import math

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


def classify(residual: float, tol_pass: float, tol_fail: float) -> str:
    """``pass`` below ``tol_pass``, ``fail`` above ``tol_fail`` (or non-finite), else inconclusive."""
    if not math.isfinite(residual) or residual > tol_fail:
        return FAIL
    if residual < tol_pass:
        return PASS
    return INCONCLUSIVE
