"""Command-line surface: spectral checks, eigenfunction grids, certificates.

Every run resolves its full configuration (model, parameters, window,
tolerances, sample counts) into a canonical JSON document whose hash is
embedded in all outputs; rerunning the same configuration reproduces the
reports byte for byte (wall-clock metadata lives only in the config sidecar
written next to file outputs).

Exit codes: 0 = a verdict was produced (falsified included), 1 = usage
error, 2 = numerical failure (the failing stage is named on stderr).
"""

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import certify as cert
from . import koopman as koop
from . import linear, models, spectral
from .cones import ConeError, OrthantSignature, cone_from_json
from .dsl import EvaluationError, ParseError, load_model_file
from .koopman import SpectralPreconditionError
from .ode import EquilibriumError, IntegrationError, find_equilibrium
from .spectral import NotDiagonalizableError


class UsageError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


_NUMERICAL_ERRORS = (
    IntegrationError,
    EquilibriumError,
    SpectralPreconditionError,
    NotDiagonalizableError,
    EvaluationError,
    OverflowError,
    np.linalg.LinAlgError,
)


def _stage(name, func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except _NUMERICAL_ERRORS as exc:
        raise StageError(name, exc) from exc


# ---------------------------------------------------------------------------
# small parsers


def _parse_params(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"parameter override {item!r} is not key=value")
        key, val = item.split("=", 1)
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise UsageError(f"parameter value {val!r} is not a number") from None
    return out


def _parse_vector(text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"could not parse vector {text!r}") from None


def _parse_window(text):
    window = []
    for chunk in text.split(","):
        if ":" not in chunk:
            raise UsageError(f"window axis {chunk!r} is not lo:hi")
        lo, hi = chunk.split(":", 1)
        window.append((float(lo), float(hi)))
    return tuple(window)


def _parse_cross_section(text):
    """'3=58.44,4=0.0877' with 1-based state indices -> {index0: value}."""
    frozen = {}
    for chunk in text.split(","):
        if "=" not in chunk:
            raise UsageError(f"cross-section entry {chunk!r} is not i=value")
        idx, val = chunk.split("=", 1)
        frozen[int(idx) - 1] = float(val)
    return frozen


def _parse_sigma(text):
    sigma = tuple(int(v) for v in text.split(","))
    return OrthantSignature(sigma)


def _read_matrix(path):
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rows.append([float(v) for v in line.split()])
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise UsageError(f"{path}: not a rectangular numeric matrix")
    return np.asarray(rows)


def _load_model(source, params):
    if source in models.list_models():
        entry = models.get_model(source, params=params or None)
        return entry, entry.field
    path = Path(source)
    if path.exists():
        field = load_model_file(path)
        if params:
            field = field.with_params(**params)
        return None, field
    raise UsageError(
        f"unknown model {source!r}; builtins: {', '.join(models.list_models())}"
    )


# ---------------------------------------------------------------------------
# config + output plumbing


def _canonical(doc):
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        raise TypeError(f"not JSON serializable: {type(o)}")

    return json.dumps(doc, sort_keys=True, indent=2, default=default)


def _config_hash(config):
    return hashlib.sha256(_canonical(config).encode()).hexdigest()[:16]


class Emitter:
    """Routes reports to stdout and, when requested, to files in out-dir."""

    def __init__(self, command, config, out_dir=None):
        self.config = {"command": command, **config}
        self.hash = _config_hash(self.config)
        self.out_dir = Path(out_dir) if out_dir else None
        if self.out_dir:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            sidecar = {"config": self.config, "config_hash": self.hash,
                       "generated_at": time.strftime("%Y-%m-%dT%H:%M:%S")}
            (self.out_dir / f"{command}-config.json").write_text(
                _canonical(sidecar) + "\n"
            )

    def json(self, name, doc):
        doc = {**doc, "config_hash": self.hash, "config": self.config}
        text = _canonical(doc) + "\n"
        sys.stdout.write(text)
        if self.out_dir:
            (self.out_dir / f"{name}.json").write_text(text)

    def text(self, name, content):
        header = f"# config_hash {self.hash}\n"
        if self.out_dir:
            (self.out_dir / name).write_text(header + content)
        else:
            sys.stdout.write(header + content)


# ---------------------------------------------------------------------------
# shared model-analysis steps


def _equilibrium_for(entry, field, guess, tol=1e-10):
    if guess is not None:
        return _stage("equilibrium", find_equilibrium, field, guess, tol=tol)
    if entry is not None and entry.newton_guesses:
        return _stage(
            "equilibrium", find_equilibrium, field, entry.newton_guesses[0], tol=tol
        )
    raise UsageError("--guess is required for model files")


def _window_for(entry, args_window, dim):
    if args_window:
        win = _parse_window(args_window)
    elif entry is not None and entry.default_window is not None:
        win = entry.default_window
    else:
        raise UsageError("--window is required (model has no default window)")
    if len(win) != dim:
        raise UsageError(f"window has {len(win)} axes, expected {dim}")
    return win


def _cross_section_setup(field, x_star, cross, window):
    """Full-space grid or a 2D cross-section with frozen coordinates."""
    if cross is None:
        return tuple(range(field.dim)), x_star.copy(), window
    frozen = _parse_cross_section(cross)
    axes = tuple(i for i in range(field.dim) if i not in frozen)
    if len(axes) != 2:
        raise UsageError("--cross-section must freeze all but two states")
    base = x_star.copy()
    for idx, val in frozen.items():
        base[idx] = val
    sub = tuple(window[a] for a in axes)
    return axes, base, sub


def _cone_from_args(args, dim):
    if getattr(args, "cone", None):
        return _parse_sigma(args.cone)
    if getattr(args, "cone_file", None):
        with open(args.cone_file) as fh:
            return cone_from_json(json.load(fh))
    return None


# ---------------------------------------------------------------------------
# subcommands


def cmd_list_models(args):
    for name in models.list_models():
        try:
            entry = models.get_model(name)
            print(f"{name}  dim={entry.dim}  params={len(entry.field.params)}")
        except ValueError:
            # parameterless build refused (e.g. no default rate constants)
            print(f"{name}  (requires user parameters)")
    return 0


def cmd_reduce(args):
    a = _read_matrix(args.matrix_file)
    fast = [int(v) - 1 for v in args.fast.split(",")]
    slow = [i for i in range(a.shape[0]) if i not in fast]
    reduced = _stage("schur_reduce", linear.schur_reduce, a, slow, fast)
    emitter = Emitter(
        "reduce",
        {"matrix_file": str(args.matrix_file), "fast": fast, "slow": slow},
        args.out_dir,
    )
    body = "\n".join(" ".join(repr(float(v)) for v in row) for row in reduced) + "\n"
    emitter.text("reduced-matrix.txt", body)
    return 0


def cmd_linear_check(args):
    a = _read_matrix(args.matrix_file)
    config = {
        "matrix_file": str(args.matrix_file),
        "matrix": a.tolist(),
        "t_max": args.t_max,
        "n_samples": args.samples,
        "spectral_tol": args.spectral_tol,
        "positivize": bool(args.positivize),
    }
    emitter = Emitter("linear-check", config, args.out_dir)
    report = _stage(
        "check_eventual_positivity", linear.check_eventual_positivity,
        a, t_max=args.t_max, n_samples=args.samples, tol=args.spectral_tol,
    )
    doc = report.to_dict()
    doc["pf_class"] = _stage(
        "classify_pf", spectral.classify_pf, a, args.spectral_tol
    ).value
    dec = _stage("decompose", spectral.decompose, a)
    doc["eigenvalues"] = [[v.real, v.imag] for v in dec.eigenvalues]
    dom = spectral.check_dominance(dec, args.spectral_tol)
    if dom.strictly_dominant and dom.lambda1_real and dom.lambda1_negative:
        certs = _stage("find_alpha_certificates", linear.find_alpha_certificates, dec)
        doc["alpha_certificates"] = (
            None if certs is None
            else {"beta": certs["beta"].tolist(), "gamma": certs["gamma"].tolist()}
        )
    else:
        doc["alpha_certificates"] = None
    if args.positivize:
        s = _stage("similarity_positivize", linear.similarity_positivize, dec)
        doc["similarity_transform"] = s.tolist()
    emitter.json("linear-check", doc)
    return 0


def cmd_equilibrium(args):
    params = _parse_params(args.params)
    entry, field = _load_model(args.model, params)
    guess = _parse_vector(args.guess) if args.guess else None
    x_star = _equilibrium_for(entry, field, guess)
    dec = _stage("decompose", spectral.decompose, field.dyn_jacobian(x_star))
    dom = spectral.check_dominance(dec, args.spectral_tol)
    emitter = Emitter(
        "equilibrium",
        {"model": args.model, "params": params,
         "guess": None if guess is None else guess.tolist(),
         "spectral_tol": args.spectral_tol},
        args.out_dir,
    )
    emitter.json("equilibrium", {
        "x_star": x_star.tolist(),
        "residual_norm": float(np.linalg.norm(field.eval(x_star))),
        "eigenvalues": [[v.real, v.imag] for v in dec.eigenvalues],
        "dominance": dom.to_dict(),
        "diagonalizable": dec.diagonalizable,
    })
    return 0


def _spec_for(args, entry, field):
    guess = _parse_vector(args.guess) if getattr(args, "guess", None) else None
    x_star = _equilibrium_for(entry, field, guess)
    return x_star, _stage(
        "koopman_spec", koop.make_koopman_spec, field, x_star,
        tol=args.spectral_tol,
    )


def cmd_eigenfunction(args):
    params = _parse_params(args.params)
    entry, field = _load_model(args.model, params)
    x_star, spec = _spec_for(args, entry, field)
    window = _window_for(entry, args.window, field.dim)
    axes, base, sub_window = _cross_section_setup(
        field, x_star, args.cross_section, window
    )
    grid = tuple(int(v) for v in args.grid.split(","))
    config = {
        "model": args.model, "params": params, "window": [list(w) for w in window],
        "grid": list(grid), "gradients": bool(args.gradients),
        "cross_section": args.cross_section, "t_end": args.t_end,
        "rel_tol": args.rtol, "abs_tol": args.atol, "jobs": args.jobs,
        "x_star": x_star.tolist(),
    }
    emitter = Emitter("eigenfunction", config, args.out_dir)
    f = _stage(
        "eval_field_on_grid", koop.eval_field_on_grid, spec, field,
        sub_window, grid, with_gradients=args.gradients, axes=axes,
        base_point=base, t_end=args.t_end, rel_tol=args.rtol,
        abs_tol=args.atol, jobs=args.jobs, max_steps=args.max_steps,
    )
    import io

    buf = io.StringIO()
    f.dump(buf)
    emitter.text("eigenfunction.txt", buf.getvalue())
    emitter.json("eigenfunction-meta", f.sidecar())
    return 0


def cmd_isostables(args):
    params = _parse_params(args.params)
    entry, field = _load_model(args.model, params)
    x_star, spec = _spec_for(args, entry, field)
    window = _window_for(entry, args.window, field.dim)
    axes, base, sub_window = _cross_section_setup(
        field, x_star, args.cross_section, window
    )
    if len(axes) != 2:
        raise UsageError("isostables need a 2D model or a --cross-section")
    grid = tuple(int(v) for v in args.grid.split(","))
    levels = [float(v) for v in args.levels.split(",")]
    config = {
        "model": args.model, "params": params,
        "window": [list(w) for w in sub_window], "grid": list(grid),
        "levels": levels, "cross_section": args.cross_section,
        "t_end": args.t_end, "x_star": x_star.tolist(),
    }
    emitter = Emitter("isostables", config, args.out_dir)
    f = _stage(
        "eval_field_on_grid", koop.eval_field_on_grid, spec, field,
        sub_window, grid, axes=axes, base_point=base, t_end=args.t_end,
        rel_tol=args.rtol, abs_tol=args.atol, jobs=args.jobs,
        max_steps=args.max_steps,
    )
    isos = _stage("extract_isostables", koop.extract_isostables, f, levels)
    import io

    buf = io.StringIO()
    koop.dump_isostables(isos, buf)
    emitter.text("isostables.txt", buf.getvalue())
    return 0


def cmd_certify(args):
    params = _parse_params(args.params)
    entry, field = _load_model(args.model, params)
    window = _window_for(entry, args.window, field.dim)
    cone_hint = _cone_from_args(args, field.dim)
    config = {
        "model": args.model, "params": params,
        "window": [list(w) for w in window], "samples": args.samples,
        "margin": args.margin, "cone": None if cone_hint is None
        else cone_hint.describe(), "t_end": args.t_end,
        "rel_tol": args.rtol, "abs_tol": args.atol, "seed": args.seed,
        "spectral_tol": args.spectral_tol,
    }
    emitter = Emitter("certify", config, args.out_dir)
    try:
        x_star, spec = _spec_for(args, entry, field)
    except StageError as exc:
        if isinstance(exc.cause, SpectralPreconditionError):
            report = cert.CertReport(verdict=cert.VERDICT_INCONCLUSIVE)
            report.add("spectral_preconditions", False, reason=str(exc.cause))
            emitter.json("certify", report.to_dict())
            return 0
        raise
    points = cert.halton_points(window, args.samples, seed=args.seed)
    report = _stage(
        "certify_sem", cert.certify_sem, spec, field, points,
        cone_hint=cone_hint, margin_rel=args.margin, t_end=args.t_end,
        rel_tol=args.rtol, abs_tol=args.atol,
    )
    doc = report.to_dict()
    doc["x_star"] = x_star.tolist()
    doc["spec"] = spec.to_dict()

    if report.cone is not None:
        probe = _stage(
            "flow_direction_probe", cert.flow_direction_probe, field, spec,
            report.cone, points,
        )
        doc["flow_direction_probe"] = probe.to_dict()
        if field.dim == 2:
            f = _stage(
                "eval_field_on_grid", koop.eval_field_on_grid, spec, field,
                window, (21, 21), t_end=args.t_end, rel_tol=args.rtol,
                abs_tol=args.atol, jobs=args.jobs, max_steps=args.max_steps,
            )
            smax = float(np.nanmax(np.abs(f.s1)))
            isos = koop.extract_isostables(
                f, [0.25 * smax, 0.5 * smax, 0.75 * smax]
            )
            hits = cert.isostable_comparability_scan(
                isos, report.cone, margin=1e-3
            )
            doc["isostable_scan"] = {
                "levels": 3, "violations": len(hits), "examples": hits[:5],
            }
    emitter.json("certify", doc)
    return 0


def cmd_order_probe(args):
    params = _parse_params(args.params)
    entry, field = _load_model(args.model, params)
    window = _window_for(entry, args.window, field.dim)
    cone = _cone_from_args(args, field.dim)
    if cone is None:
        raise UsageError("order-probe requires --cone or --cone-file")
    horizon = args.horizon
    if horizon is None:
        x_star, spec = _spec_for(args, entry, field)
        horizon = 20.0 / abs(spec.lambda1)
    config = {
        "model": args.model, "params": params, "cone": cone.describe(),
        "pairs": args.pairs, "horizon": horizon, "seed": args.seed,
        "window": [list(w) for w in window],
    }
    emitter = Emitter("order-probe", config, args.out_dir)
    rng = np.random.default_rng(args.seed)
    pairs = cert.ordered_pairs_in_window(window, cone, args.pairs, rng)
    report = _stage(
        "empirical_order_probe", cert.empirical_order_probe, field, cone,
        pairs, horizon, rel_tol=args.rtol, abs_tol=args.atol,
    )
    emitter.json("order-probe", report.to_dict())
    return 0


# ---------------------------------------------------------------------------
# parser assembly


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(sp, model=True):
    if model:
        sp.add_argument("model", help="builtin model name or JSON model file")
        sp.add_argument("-p", "--params", action="append", metavar="K=V",
                        help="parameter override (repeatable)")
        sp.add_argument("--guess", help="Newton starting guess a,b,c")
        sp.add_argument("--window", help="analysis window lo:hi,lo:hi,...")
    sp.add_argument("--out-dir", help="write outputs and resolved config here")
    sp.add_argument("--rtol", type=float, default=1e-9)
    sp.add_argument("--atol", type=float, default=1e-12)
    sp.add_argument("--spectral-tol", type=float, default=None,
                    help="eigenvalue realness/simplicity tolerance "
                         "(default 1e-8 * matrix norm)")
    sp.add_argument("--t-end", type=float, default=None,
                    help="Laplace-average horizon (default from the spectrum)")
    sp.add_argument("--jobs", type=int, default=1,
                    help="worker threads; affects wall time only")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-steps", type=int, default=None)


def build_parser():
    parser = _Parser(prog="evmono", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("list-models", help="builtin model registry")
    sp.set_defaults(func=cmd_list_models)

    sp = sub.add_parser("reduce", help="slow/fast Schur reduction of a matrix")
    sp.add_argument("matrix_file")
    sp.add_argument("--fast", required=True, help="1-based fast state indices i,j")
    sp.add_argument("--out-dir")
    sp.set_defaults(func=cmd_reduce)

    sp = sub.add_parser("linear-check",
                        help="eventual positivity of xdot = Ax")
    sp.add_argument("matrix_file")
    sp.add_argument("--t-max", type=float, default=None)
    sp.add_argument("--samples", type=int, default=400)
    sp.add_argument("--spectral-tol", type=float, default=None)
    sp.add_argument("--positivize", action="store_true",
                    help="also emit the positivizing similarity transform")
    sp.add_argument("--out-dir")
    sp.set_defaults(func=cmd_linear_check)

    sp = sub.add_parser("equilibrium", help="refine x* and report the spectrum")
    _add_common(sp)
    sp.set_defaults(func=cmd_equilibrium)

    sp = sub.add_parser("eigenfunction", help="sample s1 (and grad s1) on a grid")
    _add_common(sp)
    sp.add_argument("--grid", required=True, help="grid shape n,m[,k]")
    sp.add_argument("--gradients", action="store_true")
    sp.add_argument("--cross-section", help="freeze states, e.g. 3=58.4,4=0.088")
    sp.set_defaults(func=cmd_eigenfunction)

    sp = sub.add_parser("isostables", help="level sets of |s1| as polylines")
    _add_common(sp)
    sp.add_argument("--grid", default="41,41")
    sp.add_argument("--levels", required=True, help="comma-separated |s1| levels")
    sp.add_argument("--cross-section")
    sp.set_defaults(func=cmd_isostables)

    sp = sub.add_parser("certify",
                        help="strong eventual monotonicity certificate")
    _add_common(sp)
    sp.add_argument("--cone", help="orthant signature, e.g. -1,1,1")
    sp.add_argument("--cone-file", help="JSON cone description")
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--margin", type=float, default=cert.MARGIN_REL)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("order-probe",
                        help="direct order-preservation probe on random pairs")
    _add_common(sp)
    sp.add_argument("--cone", help="orthant signature")
    sp.add_argument("--cone-file")
    sp.add_argument("--pairs", type=int, default=50)
    sp.add_argument("--horizon", type=float, default=None)
    sp.set_defaults(func=cmd_order_probe)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, KeyError, FileNotFoundError, ConeError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(f"numerical failure in stage {exc.stage!r}: {exc.cause}",
              file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
