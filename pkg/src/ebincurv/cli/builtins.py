"""Built-in scenarios, written in the scenario file format."""

from __future__ import annotations

from .scenario import Scenario, ScenarioError, parse

_TEXT = {
    "flat3": """
[scenario]
name = flat3
dimension = 3
res = 16
[endo]
m = 1, 1, 1
lambda1 = -0.5
lambda2 = 0.1
lambda3 = auto
[times]
values = 0, 1, 2
""",
    "rotation3": """
[scenario]
name = rotation3
dimension = 3
res = 64
[frame]
kind = generator
j2_3 = 2*pi*x1
[endo]
m = 1, 1, 1
lambda1 = -0.5
lambda2 = -0.25
lambda3 = auto
[times]
values = 0, 0.5, 1, 2
""",
    "variable3": """
[scenario]
name = variable3
dimension = 3
res = 64
[endo]
m = 1, 1, 1
lambda1 = -0.5 + 0.1*sin(2*pi*x1)*cos(2*pi*x3)
lambda2 = -0.25 + 0.1*cos(2*pi*x2) + 0.05*sin(2*pi*x1)
lambda3 = auto
[times]
values = 0, 0.5, 1, 2
""",
    "mixed3": """
[scenario]
name = mixed3
dimension = 3
res = 64
[frame]
kind = generator
j2_3 = 0.25*sin(2*pi*x1) + 0.15*cos(2*pi*x2)
j1_2 = 0.1*sin(2*pi*x3)
[endo]
m = 1, 1, 1
lambda1 = -0.5 + 0.1*sin(2*pi*x2)
lambda2 = -0.25 + 0.05*cos(2*pi*x3)
lambda3 = auto
[times]
values = 0, 0.5, 1, 2
""",
    "block5": """
[scenario]
name = block5
dimension = 5
res = 16
[frame]
kind = generator
j1_3 = 0.013*sin(2*pi*x1)
j2_5 = 0.00975*cos(2*pi*x4)
j3_4 = 0.0065*sin(2*pi*x2 + 2*pi*x5)
[endo]
m = 2, 1, 1, 1
lambda1 = -0.6 + 0.006*sin(2*pi*x3)
lambda2 = -0.1 + 0.006*cos(2*pi*x1)
lambda3 = 0.3 + 0.0048*sin(2*pi*x5)
lambda4 = auto
s1_1_1 = 0.004*cos(2*pi*x2)
s1_2_2 = -0.004*cos(2*pi*x2)
s1_1_2 = 0.0028*sin(2*pi*x4)
[times]
values = 0, 0.5, 1
""",
    "decay3": """
[scenario]
name = decay3
dimension = 3
res = 32
[frame]
kind = generator
j2_3 = 2*pi*x1 + 0.1*sin(2*pi*x1)
[endo]
m = 1, 1, 1
lambda1 = -0.75
lambda2 = -0.25
lambda3 = auto
[times]
range = 0, 6, 0.25
[tolerances]
fit_window = 3, 6
""",
    "audit3": """
[scenario]
name = audit3
dimension = 3
res = 16
[frame]
kind = generator
j1_3 = 0.3*sin(2*pi*x1)
j2_3 = 0.2*cos(2*pi*x2)
[endo]
m = 2, 1
lambda1 = -1 + 0.00001*sin(2*pi*x2)
lambda2 = auto
s1_1_1 = 0.00006*cos(2*pi*x3)
s1_2_2 = -0.00006*cos(2*pi*x3)
s1_1_2 = 0.00005*sin(2*pi*x1)
[times]
values = 0, 0.5, 1, 2, 3, 4
""",
    "spike3": """
[scenario]
name = spike3
dimension = 3
res = 32
[frame]
kind = generator
j2_3 = -sin(2*pi*x1)*sin(2*pi*x3)/(4*pi*pi)
[endo]
m = 1, 1, 1
lambda1 = -(2*1.05/(4*pi*pi) + 1) + 1.05/(4*pi*pi)*(1 - cos(2*pi*x1))
lambda2 = 0.2 + sin(2*pi*x1)*sin(2*pi*x2)/(4*pi*pi)
lambda3 = auto
[times]
range = 0, 8, 0.5
[tolerances]
fit_window = 4, 8
""",
    "nonmember4": """
[scenario]
name = nonmember4
dimension = 4
res = 16
[frame]
kind = generator
j3_4 = 2*pi*x2
[endo]
m = 1, 1, 1, 1
lambda1 = -0.6
lambda2 = -0.2
lambda3 = 0.2
lambda4 = auto
[times]
values = 0, 1
""",
    "nearzero3": """
[scenario]
name = nearzero3
dimension = 3
res = 16
[endo]
m = 1, 1, 1
lambda1 = 0.01*sin(2*pi*x1)
lambda2 = 0.01*cos(2*pi*x2)
lambda3 = auto
""",
    "generic2": """
[scenario]
name = generic2
dimension = 2
res = 64
[endo]
kind = matrix
h1_1 = sin(2*pi*(x1 - 0.13))
h2_2 = -sin(2*pi*(x1 - 0.13))
h1_2 = sin(2*pi*(x2 - 0.31))
""",
    "degenerate2": """
[scenario]
name = degenerate2
dimension = 2
res = 64
seed = 7
[endo]
kind = matrix
h1_1 = (1 - cos(2*pi*x1))/(2*pi*pi)
h2_2 = -(1 - cos(2*pi*x1))/(2*pi*pi)
h1_2 = sin(2*pi*x2)
""",
    "locus3": """
[scenario]
name = locus3
dimension = 3
res = 64
[endo]
kind = matrix
h1_1 = -1 + sin(pi*x1)*sin(pi*x1) + sin(pi*x2)*sin(pi*x2) - 0.5
h2_2 = -1 - (sin(pi*x1)*sin(pi*x1) + sin(pi*x2)*sin(pi*x2) - 0.5)
h1_2 = sin(2*pi*(x3 - 0.17))
h3_3 = 2
""",
    "torus2": """
[scenario]
name = torus2
dimension = 2
res = 256
[metric]
kind = conformal
phi = 0.1*sin(2*pi*x1)*cos(2*pi*x2)
[frame]
kind = generator
j1_2 = 0.3*sin(2*pi*x2) + 0.2*cos(2*pi*x1)
[endo]
m = 1, 1
lambda1 = -0.5 - 0.2*sin(2*pi*x1 + 2*pi*x2)
lambda2 = auto
[times]
values = 0, 0.5, 1, 1.5, 2
""",
    "posstr6": """
[scenario]
name = posstr6
dimension = 6
res = 8
seed = 1
[endo]
m = 1, 1, 1, 1, 1, 1
lambda1 = -2.5
lambda2 = -1.5
lambda3 = -0.5
lambda4 = 0.5
lambda5 = 1.5
lambda6 = auto
""",
}

NAMES = tuple(sorted(_TEXT))


def text(name: str) -> str:
    try:
        return _TEXT[name].lstrip()
    except KeyError:
        raise ScenarioError(f"unknown built-in scenario {name!r}; choose from {', '.join(NAMES)}") from None


def get(name: str) -> Scenario:
    return parse(text(name))
