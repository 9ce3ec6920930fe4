"""Cubic least-squares fits with the full ANOVA diagnostic table.

The fit uses a QR decomposition of the 4-column design (raw cubic normal
equations on [0, 1]-range data are ill-conditioned). Type I sums of squares
come from the sequential term chain (x, then x^2, then x^3); Type III from
dropping one term out of the full model. F and t tail probabilities go
through an internal regularized incomplete beta function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import RankDeficiencyError
from .evaluation import CurvePoint, ThresholdReport

RELATIONSHIP_PRECISION_ON_RECALL = "precision_on_recall"
RELATIONSHIP_FPR_ON_PRECISION = "fpr_on_precision"
RELATIONSHIPS = (RELATIONSHIP_PRECISION_ON_RECALL, RELATIONSHIP_FPR_ON_PRECISION)

_MIN_POINTS = 5


# ---------------------------------------------------------------------------
# Tail probabilities via the regularized incomplete beta function


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    max_iter, eps, fpmin = 300, 3e-16, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_bt = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def f_sf(f: float, df1: int, df2: int) -> float:
    """P(F > f) for the F distribution."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return regularized_incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))


def t_sf_two_sided(t: float, df: int) -> float:
    """P(|T| > t) for Student's t."""
    t = abs(t)
    if math.isinf(t):
        return 0.0
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


# ---------------------------------------------------------------------------
# Report types


@dataclass(frozen=True)
class TermStat:
    name: str
    df: int
    ss: float
    mean_square: float
    f_value: float | None
    p_value: float | None


@dataclass(frozen=True)
class ParamStat:
    name: str
    estimate: float
    std_error: float
    t_value: float | None
    p_value: float | None


@dataclass(frozen=True)
class RegressionReport:
    y_name: str
    x_name: str
    n: int
    coefficients: tuple[ParamStat, ...]
    model_ss: float
    error_ss: float
    total_ss: float
    model_df: int
    error_df: int
    total_df: int
    model_ms: float
    error_ms: float
    f_value: float | None
    f_p_value: float | None
    r_square: float
    coeff_var: float | None
    root_mse: float
    mean_of_response: float
    type1: tuple[TermStat, ...]
    type3: tuple[TermStat, ...]

    @property
    def coefficient_values(self) -> tuple[float, float, float, float]:
        return tuple(p.estimate for p in self.coefficients)


# ---------------------------------------------------------------------------
# Fitting


def _qr_fit(design: np.ndarray, y: np.ndarray):
    """Least squares by reduced QR; returns (beta, rss, R, Q'y)."""
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-12 * max(diag.max(), 1e-300):
        raise RankDeficiencyError(
            "design matrix is rank deficient (collinear polynomial columns); "
            "x needs at least 4 distinct values"
        )
    qty = q.T @ y
    beta = np.linalg.solve(r, qty)
    resid = y - design @ beta
    return beta, float(resid @ resid), r, qty


def _term_names(x_name: str) -> list[str]:
    return [x_name, f"{x_name}*{x_name}", f"{x_name}*{x_name}*{x_name}"]


def fit_cubic(
    x: Sequence[float], y: Sequence[float],
    x_name: str = "x", y_name: str = "y",
) -> RegressionReport:
    """OLS fit of y = b0 + b1 x + b2 x^2 + b3 x^3 with ANOVA diagnostics."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValueError("x and y must be 1-D sequences of equal length")
    n = len(xa)
    if n < _MIN_POINTS:
        raise ValueError(f"need at least {_MIN_POINTS} points, got {n}")
    if np.all(xa == xa[0]):
        raise RankDeficiencyError("x values are all identical")

    design = np.column_stack([np.ones(n), xa, xa**2, xa**3])
    beta, error_ss, r_mat, qty = _qr_fit(design, ya)

    mean_y = float(ya.mean())
    total_ss = float(((ya - mean_y) ** 2).sum())
    model_ss = total_ss - error_ss
    model_df, error_df, total_df = 3, n - 4, n - 1
    error_ms = error_ss / error_df
    model_ms = model_ss / model_df
    root_mse = math.sqrt(max(error_ms, 0.0))

    degenerate = total_ss == 0.0
    r_square = 0.0 if degenerate else model_ss / total_ss
    coeff_var = None if mean_y == 0.0 else 100.0 * root_mse / mean_y

    if degenerate or error_ms == 0.0:
        f_value, f_p = (None, None) if degenerate else (math.inf, 0.0)
    else:
        f_value = model_ms / error_ms
        f_p = f_sf(f_value, model_df, error_df)

    # (X'X)^-1 = R^-1 R^-T from the QR factor
    r_inv = np.linalg.solve(r_mat, np.eye(4))
    cov = error_ms * (r_inv @ r_inv.T)
    ses = np.sqrt(np.maximum(np.diag(cov), 0.0))

    params = []
    names = ["Intercept"] + _term_names(x_name)
    for j in range(4):
        se = float(ses[j])
        if degenerate or se == 0.0:
            t_val, p_val = None, None
        else:
            t_val = float(beta[j]) / se
            p_val = t_sf_two_sided(t_val, error_df)
        params.append(
            ParamStat(name=names[j], estimate=float(beta[j]), std_error=se,
                      t_value=t_val, p_value=p_val)
        )

    def term_stat(name: str, ss: float) -> TermStat:
        if degenerate or error_ms == 0.0:
            f_v, p_v = (None, None) if degenerate else (math.inf, 0.0)
        else:
            f_v = ss / error_ms
            p_v = f_sf(f_v, 1, error_df)
        return TermStat(name=name, df=1, ss=ss, mean_square=ss,
                        f_value=f_v, p_value=p_v)

    term_names = _term_names(x_name)
    # Sequential (Type I): introducing column k reduces the RSS by exactly
    # the squared projection of y on the k-th orthogonalized column, so the
    # chain needs no subtraction of near-equal residual sums.
    type1 = tuple(
        term_stat(term_names[k], float(qty[k + 1]) ** 2) for k in range(3)
    )

    # Partial (Type III): the drop-one-term RSS increase for a single-df
    # term equals estimate^2 / [(X'X)^-1]_jj. The last term is also the last
    # entered, so its partial and sequential SS are the same value.
    unit_cov = r_inv @ r_inv.T
    type3 = []
    for k in range(2):
        j = k + 1
        type3.append(
            term_stat(term_names[k], float(beta[j]) ** 2 / float(unit_cov[j, j]))
        )
    type3.append(term_stat(term_names[2], type1[2].ss))

    return RegressionReport(
        y_name=y_name, x_name=x_name, n=n,
        coefficients=tuple(params),
        model_ss=model_ss, error_ss=error_ss, total_ss=total_ss,
        model_df=model_df, error_df=error_df, total_df=total_df,
        model_ms=model_ms, error_ms=error_ms,
        f_value=f_value, f_p_value=f_p,
        r_square=r_square, coeff_var=coeff_var, root_mse=root_mse,
        mean_of_response=mean_y,
        type1=type1, type3=tuple(type3),
    )


def predict_poly(coefficients: Sequence[float], x: float) -> float:
    """Horner evaluation of b0 + b1 x + b2 x^2 + b3 x^3."""
    if len(coefficients) != 4:
        raise ValueError(f"expected 4 coefficients, got {len(coefficients)}")
    b0, b1, b2, b3 = coefficients
    return ((b3 * x + b2) * x + b1) * x + b0


# ---------------------------------------------------------------------------
# Curve relationships


def sweep_relationship_points(
    report: ThresholdReport, relationship: str
) -> list[CurvePoint]:
    """(x, y) pairs for a named relationship over the dense sweep rows.

    Rows whose required metrics are undefined are dropped, so n can fall
    short of the grid size at extreme thresholds.
    """
    if relationship not in RELATIONSHIPS:
        raise ValueError(f"unknown relationship {relationship!r}")
    points = []
    for row in report.rows:
        m = row.metrics
        if relationship == RELATIONSHIP_PRECISION_ON_RECALL:
            if m.sensitivity is None or m.ppv is None:
                continue
            x_val, y_val = m.sensitivity, m.ppv
        else:
            if m.ppv is None or m.specificity is None:
                continue
            x_val, y_val = m.ppv, 1.0 - m.specificity
        points.append(CurvePoint(x=x_val, y=y_val, threshold=row.counts.threshold))
    return points


def fit_curve_relationship(
    points: Sequence[CurvePoint], relationship: str
) -> RegressionReport:
    """Cubic fit of the named relationship over extracted curve points."""
    if relationship == RELATIONSHIP_PRECISION_ON_RECALL:
        x_name, y_name = "Recall", "Precision"
    elif relationship == RELATIONSHIP_FPR_ON_PRECISION:
        x_name, y_name = "Precision", "FPR"
    else:
        raise ValueError(f"unknown relationship {relationship!r}")
    xs = [p.x for p in points]
    ys = [p.y for p in points]
    return fit_cubic(xs, ys, x_name=x_name, y_name=y_name)


def fit_sweep_relationship(
    report: ThresholdReport, relationship: str
) -> RegressionReport:
    return fit_curve_relationship(
        sweep_relationship_points(report, relationship), relationship
    )


# ---------------------------------------------------------------------------
# Rendering


def _fmt_ss(v: float) -> str:
    return f"{v:.8f}"


def _fmt_f(v: float | None) -> str:
    if v is None:
        return ""
    if math.isinf(v):
        return "Infty"
    if v >= 1e7:
        return f"{v:.3E}"
    if v >= 1e6:
        return f"{v:.0f}"
    return f"{v:.2f}"


def _fmt_p(v: float | None) -> str:
    if v is None:
        return ""
    if v < 0.0001:
        return "<.0001"
    return f"{v:.4f}"


def _fmt_t(v: float | None) -> str:
    return "" if v is None else f"{v:.2f}"


def render_report_text(report: RegressionReport) -> str:
    """Fixed-width ANOVA block: overall table, fit statistics, Type I and
    Type III tables, then the parameter estimates."""
    w_src, w_df, w_ss, w_ms, w_f, w_p = 30, 6, 16, 16, 11, 9
    lines = [f"Dependent Variable: {report.y_name}", ""]

    def table_row(src, df, ss, ms, f, p):
        return (
            src.ljust(w_src) + str(df).rjust(w_df) + ss.rjust(w_ss)
            + ms.rjust(w_ms) + f.rjust(w_f) + p.rjust(w_p)
        ).rstrip()

    lines.append(
        table_row("Source", "DF", "Sum of Squares", "Mean Square", "F Value", "Pr > F")
    )
    lines.append(
        table_row("Model", report.model_df, _fmt_ss(report.model_ss),
                  _fmt_ss(report.model_ms), _fmt_f(report.f_value),
                  _fmt_p(report.f_p_value))
    )
    lines.append(
        table_row("Error", report.error_df, _fmt_ss(report.error_ss),
                  _fmt_ss(report.error_ms), "", "")
    )
    lines.append(
        table_row("Corrected Total", report.total_df, _fmt_ss(report.total_ss),
                  "", "", "")
    )
    lines.append("")

    cv = "" if report.coeff_var is None else f"{report.coeff_var:.6f}"
    header = ["R-Square", "Coeff Var", "Root MSE", f"{report.y_name} Mean"]
    values = [f"{report.r_square:.6f}", cv, f"{report.root_mse:.6f}",
              f"{report.mean_of_response:.6f}"]
    width = max(len(s) for s in header + values) + 2
    lines.append("".join(s.rjust(width) for s in header))
    lines.append("".join(s.rjust(width) for s in values))
    lines.append("")

    for title, terms in (("Type I SS", report.type1), ("Type III SS", report.type3)):
        lines.append(
            table_row("Source", "DF", title, "Mean Square", "F Value", "Pr > F")
        )
        for t in terms:
            lines.append(
                table_row(t.name, t.df, _fmt_ss(t.ss), _fmt_ss(t.mean_square),
                          _fmt_f(t.f_value), _fmt_p(t.p_value))
            )
        lines.append("")

    lines.append(
        ("Parameter".ljust(w_src) + "Estimate".rjust(w_ss)
         + "Standard Error".rjust(w_ss) + "t Value".rjust(w_f)
         + "Pr > |t|".rjust(w_p)).rstrip()
    )
    for p in report.coefficients:
        lines.append(
            (p.name.ljust(w_src) + f"{p.estimate:.9f}".rjust(w_ss)
             + f"{p.std_error:.8f}".rjust(w_ss) + _fmt_t(p.t_value).rjust(w_f)
             + _fmt_p(p.p_value).rjust(w_p)).rstrip()
        )
    return "\n".join(lines) + "\n"


def report_to_dict(report: RegressionReport) -> dict:
    def term(t: TermStat) -> dict:
        return {"name": t.name, "df": t.df, "ss": t.ss,
                "mean_square": t.mean_square, "f_value": t.f_value,
                "p_value": t.p_value}

    return {
        "dependent_variable": report.y_name,
        "regressor": report.x_name,
        "n": report.n,
        "anova": {
            "model": {"df": report.model_df, "ss": report.model_ss,
                      "mean_square": report.model_ms,
                      "f_value": report.f_value, "p_value": report.f_p_value},
            "error": {"df": report.error_df, "ss": report.error_ss,
                      "mean_square": report.error_ms},
            "corrected_total": {"df": report.total_df, "ss": report.total_ss},
        },
        "fit": {
            "r_square": report.r_square,
            "coeff_var": report.coeff_var,
            "root_mse": report.root_mse,
            "mean_of_response": report.mean_of_response,
        },
        "type1": [term(t) for t in report.type1],
        "type3": [term(t) for t in report.type3],
        "parameters": [
            {"name": p.name, "estimate": p.estimate, "std_error": p.std_error,
             "t_value": p.t_value, "p_value": p.p_value}
            for p in report.coefficients
        ],
    }
