"""Analytic NLP test problems with closed-form solutions and sensitivities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nlp_solver import ParametricNlp


@dataclass
class CorpusProblem:
    name: str
    nlp: ParametricNlp
    params: np.ndarray
    u_exact: np.ndarray
    du_dp: np.ndarray | None  # None when the KKT point is degenerate


def _nlp(n, m, k, f, g, c, J, name):
    return ParametricNlp(n_dec=n, n_con=m, n_par=k, cost=f, cost_grad=g, constraints=c,
                         constraints_jac=J, name=name)


def _none(n):
    return lambda p, u: np.zeros(0), lambda p, u: np.zeros((0, n))


def corpus() -> list[CorpusProblem]:
    out = []

    # scalar QP with an active bound
    out.append(CorpusProblem(
        "bound_active",
        _nlp(1, 1, 1, lambda p, u: (u[0] - p[0]) ** 2, lambda p, u: 2 * (u - p[0]),
             lambda p, u: np.array([u[0] - 1.0]), lambda p, u: np.array([[1.0]]), "bound_active"),
        np.array([2.0]), np.array([1.0]), np.array([[0.0]])))

    # unconstrained identity in R^3
    c0, J0 = _none(3)
    out.append(CorpusProblem(
        "unconstrained_norm",
        _nlp(3, 0, 1, lambda p, u: float(u @ u), lambda p, u: 2 * u, c0, J0, "unconstrained_norm"),
        np.array([0.0]), np.zeros(3), np.zeros((3, 1))))

    # tracking u = p
    c1, J1 = _none(1)
    out.append(CorpusProblem(
        "tracking",
        _nlp(1, 0, 1, lambda p, u: (u[0] - p[0]) ** 2, lambda p, u: 2 * (u - p[0]), c1, J1, "tracking"),
        np.array([0.7]), np.array([0.7]), np.array([[1.0]])))

    # projection onto a halfspace in R^2
    out.append(CorpusProblem(
        "halfspace_projection",
        _nlp(2, 1, 2, lambda p, u: 0.5 * float((u - p) @ (u - p)), lambda p, u: u - p,
             lambda p, u: np.array([u.sum() - 1.0]), lambda p, u: np.ones((1, 2)), "halfspace_projection"),
        np.array([1.0, 1.0]), np.array([0.5, 0.5]), np.eye(2) - 0.5 * np.ones((2, 2))))

    # linear cost on a disk of radius sqrt(p)
    out.append(CorpusProblem(
        "linear_on_disk",
        _nlp(2, 1, 1, lambda p, u: float(u.sum()), lambda p, u: np.ones(2),
             lambda p, u: np.array([u @ u - p[0]]), lambda p, u: 2 * u[None, :], "linear_on_disk"),
        np.array([2.0]), np.array([-1.0, -1.0]), np.full((2, 1), -0.25)))

    # scalar tracking with a quadratic constraint, active and inactive
    for p0, u0, d0, tag in [(3.0, 1.0, 0.0, "active"), (0.5, 0.5, 1.0, "inactive")]:
        out.append(CorpusProblem(
            f"quadratic_constraint_{tag}",
            _nlp(1, 1, 1, lambda p, u: (u[0] - p[0]) ** 2, lambda p, u: 2 * (u - p[0]),
                 lambda p, u: np.array([u[0] ** 2 - 1.0]), lambda p, u: np.array([[2 * u[0]]]),
                 f"quadratic_constraint_{tag}"),
            np.array([p0]), np.array([u0]), np.array([[d0]])))

    # diagonal box QP in R^3 with one active bound
    Q = np.diag([1.0, 2.0, 3.0])
    cvec = np.array([2.0, 1.0, 1.0])
    out.append(CorpusProblem(
        "box_qp",
        _nlp(3, 3, 1, lambda p, u: 0.5 * float(u @ Q @ u) - p[0] * float(cvec @ u), lambda p, u: Q @ u - p[0] * cvec,
             lambda p, u: u - 1.0, lambda p, u: np.eye(3), "box_qp"),
        np.array([1.0]), np.array([1.0, 0.5, 1.0 / 3.0]), np.array([[0.0], [0.5], [1.0 / 3.0]])))

    # projection of (2, p) onto u1 + u2 <= 2
    out.append(CorpusProblem(
        "shifted_halfspace",
        _nlp(2, 1, 1, lambda p, u: (u[0] - 2.0) ** 2 + (u[1] - p[0]) ** 2,
             lambda p, u: np.array([2 * (u[0] - 2.0), 2 * (u[1] - p[0])]),
             lambda p, u: np.array([u.sum() - 2.0]), lambda p, u: np.ones((1, 2)), "shifted_halfspace"),
        np.array([1.0]), np.array([1.5, 0.5]), np.array([[-0.5], [0.5]])))

    # maximize u subject to u^2 <= p
    out.append(CorpusProblem(
        "sqrt_bound",
        _nlp(1, 1, 1, lambda p, u: -u[0], lambda p, u: np.array([-1.0]),
             lambda p, u: np.array([u[0] ** 2 - p[0]]), lambda p, u: np.array([[2 * u[0]]]), "sqrt_bound"),
        np.array([4.0]), np.array([2.0]), np.array([[0.25]])))

    # nonnegativity with an interior optimum
    out.append(CorpusProblem(
        "nonneg_interior",
        _nlp(1, 1, 1, lambda p, u: u[0] ** 2 + p[0] * u[0], lambda p, u: np.array([2 * u[0] + p[0]]),
             lambda p, u: np.array([-u[0]]), lambda p, u: np.array([[-1.0]]), "nonneg_interior"),
        np.array([-2.0]), np.array([1.0]), np.array([[-0.5]])))

    # vertex of the negative orthant
    out.append(CorpusProblem(
        "orthant_vertex",
        _nlp(2, 2, 1, lambda p, u: 0.5 * float((u - p[0]) @ (u - p[0])), lambda p, u: u - p[0],
             lambda p, u: u.copy(), lambda p, u: np.eye(2), "orthant_vertex"),
        np.array([1.0]), np.zeros(2), np.zeros((2, 1))))

    # projection of (3, 3) onto the disk of radius sqrt(p)
    out.append(CorpusProblem(
        "disk_projection",
        _nlp(2, 1, 1, lambda p, u: float((u - 3.0) @ (u - 3.0)), lambda p, u: 2 * (u - 3.0),
             lambda p, u: np.array([u @ u - p[0]]), lambda p, u: 2 * u[None, :], "disk_projection"),
        np.array([2.0]), np.array([1.0, 1.0]), np.full((2, 1), 0.25)))

    return out
