#!/usr/bin/env python3
"""Writes the scripted transcripts, requests and configs under fixtures/.

Each transcript is JSONL with one {"role", "seq", "text"} object per scripted
reply. Replies are listed in the order the orchestrator asks for them; seq
counts per role from 1.

Run from anywhere: python3 fixtures/make_fixtures.py
"""
import json
import os
from collections import defaultdict

HERE = os.path.dirname(os.path.abspath(__file__))
TEMPLATE = os.path.join(HERE, "templates", "burgers_pinn.py")

# Cell indices of templates/burgers_pinn.py.
CONFIG, DATA, MODEL, TRAIN, EVALUATE, OUTPUTS = range(6)


class Transcript:
    def __init__(self):
        self.rows = []
        self.seq = defaultdict(int)

    def reply(self, role, payload):
        self.seq[role] += 1
        text = payload if isinstance(payload, str) else json.dumps(payload, sort_keys=True)
        self.rows.append({"role": role, "seq": self.seq[role], "text": text})

    def write(self, path):
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w") as fh:
            for row in self.rows:
                fh.write(json.dumps(row, sort_keys=False) + "\n")


def write_text(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def write_json(path, obj):
    write_text(path, json.dumps(obj, indent=2) + "\n")


# ---------------------------------------------------------------- problems

VISCOUS_BURGERS_REQUEST = """\
Please train a physics-informed neural network for the 1D viscous Burgers equation

    u_t + u u_x = nu u_xx,  nu = 0.01 / pi

for x in [-1, 1] and t in [0, 1], with periodic boundary conditions in x and
the initial profile u(x, 0) = -sin(pi x).

Report the relative L2 error of the prediction as rel_l2 in metrics.json and
save a summary figure called summary_all.png.
"""

VISCOUS_BURGERS_PROBLEM = {
    "title": "Viscous Burgers equation with a physics-informed network",
    "pde_or_task": "u_t + u u_x = nu u_xx with nu = 0.01/pi",
    "domain_spec": "x in [-1, 1], t in [0, 1]",
    "boundary_conditions": "periodic in x",
    "initial_conditions": "u(x, 0) = -sin(pi x)",
    "reference_data": None,
    "problem_class": "forward",
    "outputs_required": ["metrics.json:rel_l2", "summary_all.png"],
    "time_dependent": True,
    "character": "parabolic",
    "method_hint": "piml",
}

BURGERS_TEMPLATE_METADATA = {
    "title": "Viscous Burgers physics-informed network",
    "description": "Physics-informed network solving the viscous Burgers equation with periodic "
                   "boundaries; writes rel_l2 to metrics.json and a summary_all.png figure",
    "equation": "u_t + u u_x = nu u_xx viscous Burgers",
    "method": "pinn",
    "domain_group": "sciml_piml",
    "tags": "burgers, pinn, periodic, physics-informed",
}


def base_config(**overrides):
    cfg = {
        "deterministic": True,
        "max_iterations": 5,
        "max_debug_rounds": 3,
        "reward_stop_threshold": 90,
        "scoring": {"required_artifacts": ["summary_all.png"], "primary_metric": "rel_l2"},
        "runtime": {"timeout_seconds": 60, "workdir_root": "work/runs"},
        "store_dir": "work/store",
        "log_dir": "work/logs",
        "seed_templates": [
            {"path": "../templates/burgers_pinn.py", "metadata": BURGERS_TEMPLATE_METADATA}
        ],
    }
    cfg.update(overrides)
    return cfg


def template_lines():
    with open(TEMPLATE) as fh:
        return fh.read().splitlines()


def cell_ranges():
    """1-based [start, end] line ranges: preamble, then one range per cell."""
    lines = template_lines()
    headers = [i + 1 for i, line in enumerate(lines) if line.startswith("# %%")]
    starts = [1] + headers
    ends = [h - 1 for h in headers] + [len(lines)]
    return [[s, e] for s, e in zip(starts, ends)]


# ---------------------------------------------------------------- builders

def session_start(t, problem, project, steps):
    t.reply("coordinator", problem)
    t.reply("gatekeeper", {"steps": steps, "rationale": "one learned step fits the request"})
    t.reply("filing", {"project_name": project})


def strategy(t, rep, constraint, opt, narrative, plan="", modules=None):
    t.reply("strategist", {
        "rep": rep,
        "constraint": constraint,
        "opt": opt,
        "narrative": narrative,
        "required_modules": modules or [],
        "training_plan": plan,
        "acceptance_targets": {"rel_l2": 1e-3},
    })
    t.reply("critic", {
        "verdict": "accepted",
        "requirements": [],
        "cited_principle": "piml: residual weighting and optimizer choice match the problem",
    })


def implement(t, plan_text, targets, patches):
    """One planner round: free-text plan, parsed targets, one patch per target."""
    t.reply("planner", plan_text)
    t.reply("planner_parser", {"targets": [{"cell_index": c, "intent": i} for c, i in targets]})
    for p in patches:
        t.reply("patcher", p)


def inspect_ok(t):
    t.reply("inspector", {"faithful": True, "violations": []})


def replace(cell, ops):
    return {"cell_index": cell,
            "ops": [{"op": "replace", "start_line": i, "end_line": i, "lines": [text]}
                    for i, text in ops]}


def advise(t, report, failure_modes, cure, details, optimality, consistency, verdict,
           revert=None):
    t.reply("advisor", report)
    diag = {
        "failure_modes": failure_modes,
        "prescribed_cure": cure,
        "grades": {"details": details, "optimality": optimality, "consistency": consistency,
                   "rationale": report.splitlines()[0]},
        "verdict": verdict,
        "revert_iteration": revert,
    }
    t.reply("advisor_parser", diag)


def deposit(t):
    t.reply("analyzer", {
        "description": "Physics-informed network for viscous Burgers with periodic boundaries",
        "equation": "u_t + u u_x = nu u_xx",
        "method": "pinn",
        "domain_group": "sciml_piml",
        "tags": ["burgers", "pinn", "kan"],
    })
    t.reply("splitter", {"ranges": cell_ranges()})


PIML_STEP = [{"group": "sciml_piml", "produces": ["summary_all.png", "metrics.json"]}]


def burgers_three_iterations():
    """mlp_fourier/adam -> ssbroyden (tuning) -> kan (structural); rewards 62, 81, 96."""
    t = Transcript()
    session_start(t, VISCOUS_BURGERS_PROBLEM, "burgers_viscous_piml", PIML_STEP)

    # Iteration 1: Fourier-feature MLP with Adam. rel_l2 2e-2, no precision credit.
    strategy(t, "mlp_fourier", "strong_form", "adam",
             "Start from a Fourier-feature MLP so the sine initial profile is easy to represent; "
             "enforce the PDE residual in strong form and train with Adam.",
             plan="20000 Adam epochs on 10000 collocation points")
    implement(t, "Set the representation to the Fourier-feature MLP in the config cell.",
              [(CONFIG, "set MODEL to mlp_fourier")],
              [replace(CONFIG, [(0, 'MODEL = "mlp_fourier"')])])
    inspect_ok(t)
    advise(t, "Training converged slowly and plateaued; rel_l2 of 2e-2 is far from the target.\n"
              "The loss curve flattens after a few thousand epochs, typical of first-order "
              "optimizers on stiff residuals.",
           ["loss plateau under Adam", "rel_l2 2e-2 above target"],
           "switch to a quasi-Newton optimizer such as self-scaled Broyden",
           8, 7, 0.8, "continue")

    # Iteration 2: same representation, optimizer swap only. rel_l2 5e-4.
    strategy(t, "mlp_fourier", "strong_form", "ssbroyden",
             "Keep the Fourier-feature MLP and switch to a quasi-Newton optimizer such as "
             "self-scaled Broyden to get past the Adam plateau.",
             plan="Adam warm start then self-scaled Broyden to convergence")
    implement(t, "Only the optimizer changes; edit the OPTIMIZER line of the config cell.",
              [(CONFIG, "set OPTIMIZER to ssbroyden")],
              [replace(CONFIG, [(2, 'OPTIMIZER = "ssbroyden"')])])
    inspect_ok(t)
    advise(t, "Precision target met at rel_l2 5e-4 but the error map shows residual bands near "
              "the steep front at x = 0.\nA more expressive representation should resolve the front.",
           ["error concentrated at the steep front"],
           "use a Kolmogorov-Arnold network representation to resolve the front",
           7, 7, 0.8, "continue")

    # Iteration 3: structural change to KAN, keeps ssbroyden. rel_l2 1.94e-6.
    strategy(t, "kan", "strong_form", "ssbroyden",
             "Use a Kolmogorov-Arnold network representation to resolve the front while keeping "
             "the self-scaled Broyden optimizer that removed the plateau.",
             plan="self-scaled Broyden from the start")
    implement(t, "Switch the representation to KAN and keep the quasi-Newton optimizer; both live "
                 "in the config cell.",
              [(CONFIG, "set MODEL to kan and OPTIMIZER to ssbroyden")],
              [replace(CONFIG, [(0, 'MODEL = "kan"'), (2, 'OPTIMIZER = "ssbroyden"')])])
    inspect_ok(t)
    advise(t, "rel_l2 of 1.94e-6 with a clean error map; the front is resolved and the physics "
              "constraints hold everywhere.\nNo further changes are warranted.",
           [], "", 14, 12, 1.0, "stop_success")

    deposit(t)
    base = os.path.join(HERE, "burgers_3iter")
    t.write(os.path.join(base, "transcript.jsonl"))
    write_text(os.path.join(base, "request.txt"), VISCOUS_BURGERS_REQUEST)
    write_json(os.path.join(base, "config.json"), base_config())


def crash_then_fix():
    """A typo in the train cell crashes once; one debug round repairs it; reward 96."""
    t = Transcript()
    session_start(t, VISCOUS_BURGERS_PROBLEM, "burgers_crash_fix", PIML_STEP)
    strategy(t, "kan", "strong_form", "ssbroyden",
             "Kolmogorov-Arnold network with self-scaled Broyden.", plan="quasi-Newton throughout")
    implement(t, "Set representation and optimizer in the config cell and rename the error table "
                 "lookup in the train cell.",
              [(CONFIG, "set MODEL to kan and OPTIMIZER to ssbroyden"),
               (TRAIN, "compute rel_l2 from the error table")],
              [replace(CONFIG, [(0, 'MODEL = "kan"'), (2, 'OPTIMIZER = "ssbroyden"')]),
               replace(TRAIN, [(1, "rel_l2 = BASE_ERRORS[MODEL] * OPTIMIZER_FACTOR[OPTIMIZER]")])])
    inspect_ok(t)
    t.reply("debugger", {
        "error_class": "NameError",
        "suspect_cells": [TRAIN],
        "fix_directive": "BASE_ERRORS is undefined in the train cell; the table is named BASE_ERROR.",
    })
    implement(t, "Rename the table lookup in the train cell.",
              [(TRAIN, "use BASE_ERROR")],
              [replace(TRAIN, [(1, "rel_l2 = BASE_ERROR[MODEL] * OPTIMIZER_FACTOR[OPTIMIZER]")])])
    advise(t, "After the fix the run is clean with rel_l2 1.94e-6.\nNothing left to improve.",
           [], "", 14, 12, 1.0, "stop_success")
    deposit(t)
    base = os.path.join(HERE, "debug_crash_fix")
    t.write(os.path.join(base, "transcript.jsonl"))
    write_text(os.path.join(base, "request.txt"), VISCOUS_BURGERS_REQUEST)
    write_json(os.path.join(base, "config.json"), base_config())


def debug_cap_exhaustion():
    """The repair never lands; the debug cap is reached and integrity is 0."""
    t = Transcript()
    session_start(t, VISCOUS_BURGERS_PROBLEM, "burgers_debug_cap", PIML_STEP)
    strategy(t, "kan", "strong_form", "ssbroyden",
             "Kolmogorov-Arnold network with self-scaled Broyden.", plan="quasi-Newton throughout")
    implement(t, "Set the representation in the config cell.",
              [(CONFIG, "set MODEL")],
              [replace(CONFIG, [(0, 'MODEL = "kan_v2"'), (2, 'OPTIMIZER = "ssbroyden"')])])
    inspect_ok(t)
    for _ in range(2):
        t.reply("debugger", {
            "error_class": "ValueError",
            "suspect_cells": [MODEL],
            "fix_directive": "The model cell rejects the representation; add it to the table.",
        })
        implement(t, "Reorder the error table; the requested representation is still absent.",
                  [(MODEL, "rewrite the error table")],
                  [replace(MODEL, [(0, 'BASE_ERROR = {"kan": 7.76e-5, "mlp": 5.0e-2, '
                                       '"mlp_fourier": 2.0e-2}')])])
    base = os.path.join(HERE, "debug_cap")
    t.write(os.path.join(base, "transcript.jsonl"))
    write_text(os.path.join(base, "request.txt"), VISCOUS_BURGERS_REQUEST)
    write_json(os.path.join(base, "config.json"),
               base_config(max_iterations=1, max_debug_rounds=2))


# ---------------------------------------------------------------- routing

ROUTING = {
    "inviscid_burgers": {
        "request": """\
Solve the two-dimensional inviscid Burgers equation u_t + u u_x + u u_y = 0 on the square
(x, y) in [0, 4 pi]^2 for t in [0, 2]. Both directions are periodic. The starting field is
u(x, y, 0) = 1/3 + (2/3) sin((x + y) / 2). Put snapshots at several times into one figure,
summary_all.png.
""",
        "problem": {
            "title": "2D inviscid Burgers equation",
            "pde_or_task": "u_t + u u_x + u u_y = 0",
            "domain_spec": "(x, y) in [0, 4pi]^2, t in [0, 2]",
            "boundary_conditions": "periodic in x and y",
            "initial_conditions": "u = 1/3 + 2/3 sin((x + y)/2)",
            "problem_class": "forward",
            "outputs_required": ["summary_all.png"],
            "time_dependent": True,
            "character": "hyperbolic",
            "method_hint": "classical",
        },
        "steps": [{"group": "scic", "produces": ["summary_all.png"]}],
        "rationale": "hyperbolic conservation law with an exact solution up to shock time; a "
                     "classical high-order solver is the direct route",
        "expected": ["scic"],
    },
    "kelvin_helmholtz": {
        "request": """\
Simulate the Kelvin-Helmholtz instability with the 2D compressible Euler equations
(gamma = 1.4, no viscosity, no gravity) on the unit square for t in [0, 2.5].
x is periodic; y = 0 and y = 1 are reflective slip walls.
A tanh shear layer of width 0.03 sits at y = 0.5: density 1.5 - 0.5 tanh((y - 0.5)/0.03),
horizontal velocity 0.5 tanh((y - 0.5)/0.03), pressure 2.5 everywhere, and a vertical
kick v = 0.01 sin(4 pi x) exp(-(y - 0.5)^2 / 0.01) to start the roll-up.
""",
        "problem": {
            "title": "Kelvin-Helmholtz instability, compressible Euler",
            "pde_or_task": "2D compressible Euler equations, gamma = 1.4, inviscid",
            "domain_spec": "(x, y) in [0, 1]^2, t in [0, 2.5]",
            "boundary_conditions": "periodic in x; slip walls at y = 0 and y = 1",
            "initial_conditions": "tanh shear layer at y = 0.5 with a single-mode v perturbation",
            "problem_class": "forward",
            "outputs_required": ["summary_all.png"],
            "time_dependent": True,
            "character": "hyperbolic",
            "method_hint": "classical",
        },
        "steps": [{"group": "scic", "produces": ["summary_all.png"]}],
        "rationale": "shock-capturing finite volume or DG solver for a hyperbolic system",
        "expected": ["scic"],
    },
    "operator_burgers": {
        "request": """\
Build an operator network for the viscous Burgers equation u_t + u u_x = nu u_xx with
nu = 1/1000 on x in [0, 1], t in [0, 1], periodic in x. The network maps the initial
condition u(x, 0) to the whole space-time solution up to the final time stored in the data.
Training data: data/Burger_1000_5000.mat
""",
        "problem": {
            "title": "Operator network for viscous Burgers",
            "pde_or_task": "learn the map u(x,0) -> u(x,t) for u_t + u u_x = nu u_xx, nu = 1e-3",
            "domain_spec": "x in [0, 1], t in [0, 1]",
            "boundary_conditions": "periodic in x",
            "initial_conditions": "sampled from the training set",
            "reference_data": {"path": "data/Burger_1000_5000.mat",
                               "format_notes": "MATLAB file with input and output fields"},
            "problem_class": "forward",
            "outputs_required": ["summary_all.png"],
            "time_dependent": True,
            "character": "parabolic",
            "method_hint": "operator",
        },
        "steps": [{"group": "sciml_operator", "consumes": ["Burger_1000_5000.mat"],
                   "produces": ["summary_all.png"]}],
        "rationale": "the request asks for an operator network trained on a dataset",
        "expected": ["sciml_operator"],
    },
    "aiv": {
        "request": """\
Artificial intelligence velocimetry for a lid-driven cavity at unknown Reynolds number.
Steady incompressible Navier-Stokes on the unit square: the top wall moves with u = (1, 0),
the other three walls are no-slip.
1. Produce a reference field with a classical solver and store it as ldc.npz.
2. Infer Re with a physics-informed network from 100 interior velocity samples of ldc.npz
   (no pressure), saving the estimate and the sensor points to results.npz.
3. Re-solve the cavity at the inferred Re with a smoothed lid profile and compare against
   the sensors and the reference; save summary_all.png.
""",
        "problem": {
            "title": "AI velocimetry, lid-driven cavity",
            "pde_or_task": "steady incompressible Navier-Stokes: div u = 0, (u . grad) u = -grad p "
                           "+ (1/Re) laplacian u; infer Re from velocity data",
            "domain_spec": "(x, y) in [0, 1]^2",
            "boundary_conditions": "u = (1, 0) on y = 1; no-slip on y = 0, x = 0 and x = 1",
            "initial_conditions": "",
            "problem_class": "inverse",
            "outputs_required": ["results.npz", "summary_all.png"],
            "time_dependent": False,
            "character": "elliptic",
            "method_hint": "piml",
        },
        "steps": [
            {"group": "scic", "task": "reference solve", "problem_class": "forward",
             "produces": ["ldc.npz"]},
            {"group": "sciml_piml", "task": "Reynolds number inference",
             "problem_class": "inverse", "consumes": ["ldc.npz"], "produces": ["results.npz"]},
            {"group": "scic", "task": "forward verification at the inferred Re",
             "problem_class": "forward", "consumes": ["results.npz", "ldc.npz"],
             "produces": ["summary_all.png"]},
        ],
        "rationale": "data generation, physics-informed inversion, classical verification",
        "expected": ["scic", "sciml_piml", "scic"],
    },
}


def routing_fixtures():
    expected = {}
    for name, spec in ROUTING.items():
        t = Transcript()
        t.reply("coordinator", spec["problem"])
        t.reply("gatekeeper", {"steps": spec["steps"], "rationale": spec["rationale"]})
        base = os.path.join(HERE, "routing", name)
        t.write(os.path.join(base, "transcript.jsonl"))
        write_text(os.path.join(base, "request.txt"), spec["request"])
        expected[name] = spec["expected"]
    write_json(os.path.join(HERE, "routing", "expected.json"), expected)


if __name__ == "__main__":
    burgers_three_iterations()
    crash_then_fix()
    debug_cap_exhaustion()
    routing_fixtures()
