"""Builtin registry of the example systems with reference parameter sets.

Each entry carries the vector field, a default analysis window inside the
basin of the reference equilibrium, Newton starting guesses, refined
equilibria, and expected-value metadata for regression tests.  Provenance
tags: "paper" for values printed in the reference source, "derived" for
values recomputed here (Newton solves, hand differentiation).

The three-state system is registered in the ordering of the printed
reference values (fast variable second): the printed equilibrium does not
satisfy the equations in their written order, and the printed dominant
eigenvector only matches in this permuted ordering.  The gut kinetics model
ships without default rate constants (they are not in the reference); it
requires a user parameter set and its regression checks are structural only.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .dsl import VectorField


@dataclass
class ModelEntry:
    name: str
    description: str
    field: VectorField
    default_window: tuple = None            # ((lo, hi), ...) per state
    newton_guesses: list = dc_field(default_factory=list)
    known_equilibria: list = dc_field(default_factory=list)  # (point, tag)
    expected: dict = dc_field(default_factory=dict)          # name -> (value, tag)

    @property
    def dim(self):
        return self.field.dim


def _linear_equations(a, names):
    rows = []
    for i in range(a.shape[0]):
        terms = []
        for j, name in enumerate(names):
            c = float(a[i, j])
            if c == 0:
                continue
            terms.append(f"+ {c!r}*{name}" if c >= 0 else f"- {-c!r}*{name}")
        rows.append(" ".join(terms).lstrip("+ ") if terms else "0")
    return ";\n".join(rows)


EXAMPLE1_MATRIX = np.array([[-6.0, 10.0, 4.0], [-7.0, 2.0, 12.0], [3.0, -3.0, -4.0]])
COUNTEREXAMPLE_MATRIX = np.array(
    [[-10.0, -10.0, 14.0], [4.0, 1.0, -11.0], [0.0, 3.0, -9.0]]
)


def _build_linear_example1(params):
    eps = params["eps"]
    names = ("x1", "x2", "x3")
    field = VectorField.parse(
        _linear_equations(EXAMPLE1_MATRIX, names),
        names,
        lhs_scale=[1.0, 1.0, eps],
    )
    return ModelEntry(
        name="linear_example1",
        description="3-state linear system, slow/fast with eps on the third state",
        field=field,
        default_window=((-1.0, 1.0),) * 3,
        newton_guesses=[np.ones(3)],
        known_equilibria=[(np.zeros(3), "trivial")],
        expected={
            "matrix": (EXAMPLE1_MATRIX, "paper"),
            "reduced_matrix": (np.array([[-3.0, 7.0], [2.0, -7.0]]), "paper"),
            "fast_states": ([2], "paper"),
        },
    )


def _build_complex_counterexample(params):
    names = ("x1", "x2", "x3")
    field = VectorField.parse(_linear_equations(COUNTEREXAMPLE_MATRIX, names), names)
    return ModelEntry(
        name="complex_counterexample",
        description="3-state linear system with a complex pair tying the "
        "dominant real part; not eventually positive",
        field=field,
        default_window=((-1.0, 1.0),) * 3,
        newton_guesses=[np.ones(3)],
        known_equilibria=[(np.zeros(3), "trivial")],
        expected={
            "matrix": (COUNTEREXAMPLE_MATRIX, "paper"),
            "eigenvalues": (np.array([-6.0, -6.0 - 6.0j, -6.0 + 6.0j]), "paper"),
        },
    )


def _build_three_state(params):
    eps = params["eps"]
    field = VectorField.parse(
        "10/(1 + x3^2) - x1;"
        "1/(1 + x1) - x2;"
        "x1/(x1 + 1) + 3*x2 - x3",
        ("x1", "x2", "x3"),
        lhs_scale=[1.0, eps, 1.0],
    )
    return ModelEntry(
        name="three_state",
        description="three-state nonmonotone system, strongly eventually "
        "monotone w.r.t. the orthant diag(-1, 1, 1)",
        field=field,
        default_window=((1.8, 4.6), (0.16, 0.33), (0.9, 2.1)),
        newton_guesses=[np.array([3.0, 0.3, 1.5])],
        known_equilibria=[(np.array([3.1179, 0.2428, 1.4857]), "paper")],
        expected={
            "cone_signature": ((-1, 1, 1), "paper"),
            "v1": (np.array([-0.96, 0.07, 0.24]), "paper"),
            "lambda23_complex_pair": (True, "paper"),
        },
    )


def _build_reduced_two_state(params):
    field = VectorField.parse(
        "10/(1 + x2^2) - x1;"
        "1 + 2/(x1 + 1) - x2",
        ("x1", "x2"),
    )
    return ModelEntry(
        name="reduced_two_state",
        description="slow reduction of the three-state system; monotone "
        "w.r.t. the orthant diag(1, -1)",
        field=field,
        default_window=((1.6, 4.6), (1.0, 2.2)),
        newton_guesses=[np.array([3.0, 1.5])],
        known_equilibria=[(np.array([3.1105, 1.4867]), "derived")],
        expected={"cone_signature": ((1, -1), "paper")},
    )


def _build_fitzhugh_nagumo(params):
    field = VectorField.parse(
        "-w - v*(v - 1)*(v - a) + I;"
        "eps*(v - gamma*w)",
        ("v", "w"),
        params=params,
    )
    return ModelEntry(
        name="fitzhugh_nagumo",
        description="excitable FitzHugh-Nagumo model; locally eventually "
        "monotone near the equilibrium, not globally for any cone",
        field=field,
        default_window=((-1.4743, 1.5257), (-1.4743, 1.5257)),
        newton_guesses=[np.array([0.0, 0.0])],
        known_equilibria=[(np.array([0.02565, 0.02565]), "derived")],
        expected={
            "eigenvalues": (np.array([-0.19, -0.79]), "derived"),
            "real_negative_eigenvalues": (True, "paper"),
        },
    )


def _build_toxin_antitoxin(params):
    eps = params["eps"]
    kin = "(1 + Af*Tf/K0)*(1 + beta_M*Tf)"
    field = VectorField.parse(
        f"sigma_T/({kin}) - T/(1 + beta_C*Tf);"
        f"sigma_A/({kin}) - Gamma_A*A;"
        "A - (Af + Af*Tf/K_T + Af*Tf^2/(K_T*K_TT));"
        "T - (Tf + Af*Tf/K_T + 2*Af*Tf^2/(K_T*K_TT))",
        ("T", "A", "Af", "Tf"),
        params={k: v for k, v in params.items() if k != "eps"},
        lhs_scale=[1.0, 1.0, eps, eps],
    )
    return ModelEntry(
        name="toxin_antitoxin",
        description="bistable toxin-antitoxin network (total and free protein "
        "counts), slow/fast with eps on the free species",
        field=field,
        default_window=((5.0, 50.0), (55.0, 105.0), (20.0, 90.0), (0.02, 0.2)),
        newton_guesses=[
            np.array([27.0, 80.0, 58.0, 0.1]),
            np.array([163.0, 26.0, 0.0, 110.0]),
        ],
        known_equilibria=[
            (np.array([27.1517, 80.5151, 58.4429, 0.0877]), "paper"),
            (np.array([162.8103, 26.2221, 0.0002, 110.4375]), "paper"),
        ],
        expected={"bistable": (True, "paper"),
                  "cross_section_cone_signature": ((1, -1), "paper")},
    )


def _build_gut_kinetics(params):
    missing = [k for k, v in params.items() if v is None]
    if missing:
        raise ValueError(
            "gut_kinetics has no default rate constants (absent from the "
            f"reference); provide parameters {sorted(missing)} via a "
            "parameter file or overrides"
        )
    kempt = "(kmin + (kmax - kmin)/2*(tanh(alpha*(Qsto1 + Qsto2 - b)) " \
            "- tanh(beta*(Qsto1 + Qsto2 - c)) + 2))"
    field = VectorField.parse(
        "-k21*Qsto1;"
        f"-{kempt}*Qsto2 + k21*Qsto1;"
        f"-kabs*Qgut + {kempt}*Qsto2",
        ("Qsto1", "Qsto2", "Qgut"),
        params=params,
    )
    return ModelEntry(
        name="gut_kinetics",
        description="gut kinetics cascade of the glucose consumption model; "
        "reducible Jacobian, eventually monotone w.r.t. a non-orthant cone",
        field=field,
        default_window=((0.0, 100.0), (0.0, 100.0), (0.0, 100.0)),
        newton_guesses=[np.zeros(3)],
        known_equilibria=[(np.zeros(3), "derived")],
        expected={"jacobian_reducible": (True, "paper"),
                  "v1_first_component_zero": (True, "derived")},
    )


_BUILDERS = {
    "linear_example1": (_build_linear_example1, {"eps": 0.25}),
    "complex_counterexample": (_build_complex_counterexample, {}),
    "three_state": (_build_three_state, {"eps": 1.0}),
    "reduced_two_state": (_build_reduced_two_state, {}),
    "fitzhugh_nagumo": (
        _build_fitzhugh_nagumo,
        {"a": 1.0, "I": 0.05, "eps": 0.08, "gamma": 1.0},
    ),
    "toxin_antitoxin": (
        _build_toxin_antitoxin,
        {
            "sigma_T": 166.28,
            "K0": 1.0,
            "beta_M": 0.16,
            "beta_C": 0.16,
            "sigma_A": 100.0,
            "Gamma_A": 0.2,
            "K_T": 0.3,
            "K_TT": 0.3,
            "eps": 1e-6,
        },
    ),
    "gut_kinetics": (
        _build_gut_kinetics,
        {k: None for k in ("k21", "kabs", "kmin", "kmax", "alpha", "beta", "b", "c")},
    ),
}


def list_models():
    return sorted(_BUILDERS)


def get_model(name, params=None):
    """Registry lookup; params override the model defaults."""
    if name not in _BUILDERS:
        raise KeyError(
            f"unknown model {name!r}; available: {', '.join(list_models())}"
        )
    builder, defaults = _BUILDERS[name]
    merged = dict(defaults)
    for key, value in (params or {}).items():
        if key not in merged:
            raise KeyError(f"model {name!r} has no parameter {key!r}")
        merged[key] = float(value)
    return builder(merged)
