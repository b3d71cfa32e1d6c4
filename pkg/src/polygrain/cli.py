"""Command-line front end.

Subcommands: group, gtable, readshockley, cellsolve, synth, segment, gamma,
energy.  All accept --config (key=value lines, later keys win; explicit
flags beat the config), --seed, --threads, --out.  Exit codes: 0 success,
1 input error, 2 solver non-convergence (results still written, flagged).
"""

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import backend, config as cfg
from .cellproblem import (CellParams, DamageModel, g_lambda, g_star,
                          rs_scaling_table, rs_upper_bound)
from .errors import PolygrainError
from .fieldio import load_field, save_field
from .matmanifold import misorientation_angle
from .phasefield import OrientationField, PhaseField, default_params, energy_total
from .pnm import read_pgm, write_pgm, write_ppm
from .pointgroup import (load_group, named_group, rotation2, save_group,
                         separation_radius)
from .segmentation import Image, LatticeSpec, segment, synth_image
from .sharpinterface import GrainMap, gamma_sweep


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors must exit 1, naming the offending flag
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def _resolve(args, conf, key, cast, default):
    """Precedence: explicit CLI flag > config file > hard default."""
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    if key in conf:
        return cast(conf[key])
    return default


def _load_group_arg(name_or_file, tol):
    if name_or_file and Path(name_or_file).exists():
        return load_group(name_or_file, tol=tol)
    return named_group(name_or_file or "trivial", tol=tol)


def _cell_params(args, conf, seed):
    dm = DamageModel(ell=_resolve(args, conf, "ell", float, 1.0))
    return CellParams(
        lam=_resolve(args, conf, "lambda", float, 1.0),
        damage=dm,
        n=_resolve(args, conf, "n", int, 512),
        multistarts=_resolve(args, conf, "multistarts", int, 12),
        max_iters=_resolve(args, conf, "max-iters", int, 5000),
        grad_tol=_resolve(args, conf, "grad-tol", float, 1e-8),
        seed=seed,
    )


def _comment(args, conf, extra):
    pairs = [("backend", backend.BACKEND)]
    pairs += sorted(conf.items())
    pairs += extra
    return cfg.config_comment(pairs)


def _write_csv(path, comment, header, rows):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(comment + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def cmd_group(args, conf, seed, out):
    g = _load_group_arg(args.name or args.file, args.tol or 1e-9)
    print(f"d={g.d} order={g.order}")
    r0 = separation_radius(g)
    print(f"separation_radius={'inf' if math.isinf(r0) else f'{r0:.6g}'}")
    for e in g.elements:
        print(" ".join(f"{x: .6f}" for x in e.reshape(-1)))
    if args.save:
        save_group(g, out / args.save)
    return 0


def cmd_gtable(args, conf, seed, out):
    group = _load_group_arg(args.group, 1e-9)
    cp = _cell_params(args, conf, seed)
    theta_max = math.radians(_resolve(args, conf, "theta-max", float, 45.0))
    steps = _resolve(args, conf, "steps", int, 16)
    rows = []
    eye = np.eye(2)
    all_conv = True
    for k in range(1, steps + 1):
        th = theta_max * k / steps
        rot = rotation2(th)
        sol = g_lambda(group, eye, rot, cp)
        s = float(np.linalg.norm(rot - eye))
        ub = rs_upper_bound(eye, rot, cp.damage)
        ratio = sol.value / (s * abs(math.log(s))) if 0 < s < 1 else math.nan
        rows.append((math.degrees(th), s, cp.lam, sol.value, ratio, ub,
                     int(sol.converged)))
        all_conv = all_conv and sol.converged
    comment = _comment(args, conf, [("lambda", cp.lam), ("n", cp.n),
                                    ("steps", steps), ("seed", seed)])
    _write_csv(out / "gtable.csv", comment,
               ["theta_deg", "frobenius_mismatch", "lambda", "g_value",
                "rs_ratio", "upper_bound", "converged_flag"], rows)
    print(f"wrote {out / 'gtable.csv'} ({len(rows)} rows)")
    return 0 if all_conv else 2


def cmd_readshockley(args, conf, seed, out):
    group = _load_group_arg(args.group, 1e-9)
    cp = _cell_params(args, conf, seed)
    angles_deg = [float(x) for x in
                  _resolve(args, conf, "angles", str, "8,4,2,1").split(",")]
    rows_out = []
    table = rs_scaling_table(group, [math.radians(a) for a in angles_deg], cp)
    all_conv = True
    for row in table:
        rows_out.append((math.degrees(row.theta), row.mismatch, row.g_value,
                         row.ratio, int(row.converged)))
        all_conv = all_conv and row.converged
    comment = _comment(args, conf, [("ell", cp.damage.ell), ("lambda", cp.lam),
                                    ("n", cp.n), ("seed", seed)])
    _write_csv(out / "readshockley.csv", comment,
               ["theta_deg", "frobenius_mismatch", "g_value", "rs_ratio",
                "converged_flag"], rows_out)
    print(f"wrote {out / 'readshockley.csv'} ({len(rows_out)} rows)")
    return 0 if all_conv else 2


def cmd_cellsolve(args, conf, seed, out):
    group = _load_group_arg(args.group, 1e-9)
    cp = _cell_params(args, conf, seed)
    theta = math.radians(_resolve(args, conf, "theta", float, 20.0))
    rot = rotation2(theta)
    sol = g_lambda(group, np.eye(2), rot, cp)
    path = sol.path
    t = np.linspace(0.0, 1.0, path.n)
    rows = [(t[i], *path.beta[i].reshape(-1), path.v[i]) for i in range(path.n)]
    comment = _comment(args, conf, [("theta_deg", math.degrees(theta)),
                                    ("lambda", cp.lam), ("n", cp.n),
                                    ("g_value", sol.value), ("seed", seed)])
    _write_csv(out / "cellsolve_path.csv", comment,
               ["t"] + [f"b{i}{j}" for i in range(2) for j in range(2)] + ["v"],
               rows)
    print(f"g_lambda={sol.value:.12g} converged={sol.converged} "
          f"orbit_index={sol.orbit_index}")
    print(f"wrote {out / 'cellsolve_path.csv'}")
    return 0 if sol.converged else 2


def _two_grain_map(nx, ny, theta, split_col, h):
    labels = np.zeros((ny, nx), dtype=np.int64)
    labels[:, split_col:] = 1
    orients = np.array([np.eye(2), rotation2(theta)])
    return GrainMap(labels=labels, orientations=orients, h=h)


def cmd_synth(args, conf, seed, out):
    nx = _resolve(args, conf, "nx", int, 256)
    ny = _resolve(args, conf, "ny", int, 256)
    theta = math.radians(_resolve(args, conf, "theta", float, 20.0))
    sigma = _resolve(args, conf, "sigma", float, 8.0)
    atom_radius = _resolve(args, conf, "atom-radius", float, sigma / 5.0)
    noise = _resolve(args, conf, "noise", float, 0.0)
    split = _resolve(args, conf, "split-col", int, nx // 2)
    gm = _two_grain_map(nx, ny, theta, split, 1.0)
    lat = LatticeSpec.square(sigma, atom_radius=atom_radius)
    img = synth_image(gm, lat, noise_sigma=noise, seed=seed)
    write_pgm(out / "synth.pgm", img.values)
    _write_csv(out / "synth_truth.csv",
               _comment(args, conf, [("theta_deg", math.degrees(theta)),
                                     ("sigma", sigma), ("noise", noise),
                                     ("split_col", split), ("seed", seed)]),
               ["label", "b00", "b01", "b10", "b11", "cell_count"],
               [(k, *gm.orientations[k].reshape(-1),
                 int((gm.labels == k).sum())) for k in range(gm.n_grains)])
    print(f"wrote {out / 'synth.pgm'} ({nx}x{ny}) and {out / 'synth_truth.csv'}")
    return 0


def _grain_colors(gmap, group):
    """Colorize by canonical orientation angle; label -1 stays black."""
    ny, nx = gmap.labels.shape
    rgb = np.zeros((ny, nx, 3))
    for k in range(gmap.n_grains):
        rot = gmap.orientations[k]
        ang = math.atan2(rot[1, 0], rot[0, 0]) % (2 * math.pi)
        hue = ang / (2 * math.pi)
        col = _hsv(hue, 0.85, 0.95)
        rgb[gmap.labels == k] = col
    return rgb


def _hsv(h, s, v):
    i = int(h * 6.0) % 6
    f = h * 6.0 - int(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    return [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]


def cmd_segment(args, conf, seed, out):
    if not args.image:
        print("error: --image is required", file=sys.stderr)
        return 1
    vals = read_pgm(args.image)
    img = Image(values=vals, pixel_size=1.0)
    group = _load_group_arg(args.group or "c4", 1e-9)
    sigma = _resolve(args, conf, "sigma", float, 8.0)
    gamma = _resolve(args, conf, "gamma", float, 10.0)
    eps_sched = [float(x) for x in
                 _resolve(args, conf, "eps-schedule", str, "4,2").split(",")]
    iters = _resolve(args, conf, "iters", int, 400)
    lat = LatticeSpec.square(sigma)
    params = default_params(eps_sched[0], damage=DamageModel(), gamma=gamma)
    res = segment(img, lat, group, params, eps_sched, iters_per_stage=iters)
    gmap = res.grain_map
    write_ppm(out / "segment_grains.ppm", _grain_colors(gmap, group))
    rows = []
    for k in range(gmap.n_grains):
        rows.append((k, *gmap.orientations[k].reshape(-1),
                     int((gmap.labels == k).sum())))
    comment = _comment(args, conf, [("sigma", sigma), ("gamma", gamma),
                                    ("eps_schedule", ";".join(map(str, eps_sched))),
                                    ("seed", seed),
                                    ("masked_fraction", res.masked_fraction)])
    _write_csv(out / "segment_grains.csv", comment,
               ["label", "b00", "b01", "b10", "b11", "cell_count"], rows)
    save_field(out / "segment_u.field", res.u)
    save_field(out / "segment_v.field", res.v)
    _write_csv(out / "segment_trace.csv", comment,
               ["stage", "iter", "term_grad", "term_at", "term_pen",
                "term_fid", "total"],
               [(r.stage, r.iter, r.term_grad, r.term_at, r.term_pen,
                 r.term_fid, r.total) for r in res.trace])
    print(f"grains={gmap.n_grains} masked_fraction={res.masked_fraction:.4f} "
          f"converged={res.converged}")
    print(f"wrote {out / 'segment_grains.ppm'}, csv, fields, trace")
    return 0 if res.converged else 2


def cmd_gamma(args, conf, seed, out):
    group = _load_group_arg(args.group, 1e-9)
    cp = _cell_params(args, conf, seed)
    theta = math.radians(_resolve(args, conf, "theta", float, 20.0))
    eps_list = [float(x) for x in
                _resolve(args, conf, "eps-list", str, "0.1,0.05,0.025,0.01").split(",")]
    n = _resolve(args, conf, "grid-n", int, 4096)
    dim = _resolve(args, conf, "dim", int, 1)
    rows = gamma_sweep(np.eye(2), rotation2(theta), group, eps_list, cp,
                       dim=dim, n=n)
    comment = _comment(args, conf, [("theta_deg", math.degrees(theta)),
                                    ("lambda", cp.lam), ("grid_n", n),
                                    ("dim", dim), ("seed", seed)])
    _write_csv(out / "gamma.csv", comment,
               ["eps", "delta_eps", "m_eps", "e_min", "g_target", "ratio",
                "iters", "wall_ms"],
               [(r.eps, r.delta_eps, r.m_eps, r.e_min, r.g_target, r.ratio,
                 r.iters, r.wall_ms) for r in rows])
    print(f"wrote {out / 'gamma.csv'} ({len(rows)} rows)")
    return 0


def cmd_energy(args, conf, seed, out):
    if not args.u or not args.v:
        print("error: --u and --v field files are required", file=sys.stderr)
        return 1
    u = load_field(args.u)
    v = load_field(args.v)
    if not isinstance(u, OrientationField) or not isinstance(v, PhaseField):
        print("error: --u must be an orientation field, --v a phase field",
              file=sys.stderr)
        return 1
    group = _load_group_arg(args.group, 1e-9)
    eps = _resolve(args, conf, "eps", float, 0.05)
    params = default_params(eps, damage=DamageModel())
    image = None
    lat = None
    gamma = _resolve(args, conf, "gamma", float, 0.0)
    if args.image:
        image = Image(values=read_pgm(args.image), pixel_size=u.h)
        lat = LatticeSpec.square(_resolve(args, conf, "sigma", float, 8.0))
        params = default_params(eps, damage=DamageModel(), gamma=gamma)
    bd = energy_total(u, v, group, params, image=image, lattice=lat)
    comment = _comment(args, conf, [("eps", eps), ("gamma", gamma), ("seed", seed)])
    _write_csv(out / "energy.csv", comment,
               ["term_grad", "term_at", "term_pen", "term_fid", "total"],
               [(bd.term_grad, bd.term_at, bd.term_pen, bd.term_fid, bd.total)])
    print(f"term_grad={bd.term_grad:.12g} term_at={bd.term_at:.12g} "
          f"term_pen={bd.term_pen:.12g} term_fid={bd.term_fid:.12g} "
          f"total={bd.total:.12g}")
    return 0


def build_parser():
    parser = _Parser(prog="polygrain",
                     description="Phase-field grain-boundary energies with "
                                 "lattice point-group symmetry")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="RNG seed (default 0)")
        p.add_argument("--threads", type=int, help="thread budget")
        p.add_argument("--out", help="output directory (default .)")

    p = sub.add_parser("group", help="print or validate a point group")
    p.add_argument("--name", help="named group (trivial, cN, dN, cubic)")
    p.add_argument("--file", help="group file to load")
    p.add_argument("--tol", type=float)
    p.add_argument("--save", help="write the group to this file under --out")
    common(p)

    p = sub.add_parser("gtable", help="misorientation sweep to CSV")
    p.add_argument("--group", help="group name or file (default trivial)")
    p.add_argument("--lambda", dest="lambda_", type=float)
    p.add_argument("--theta-max", type=float, help="degrees")
    p.add_argument("--steps", type=int)
    _solver_flags(p)
    common(p)

    p = sub.add_parser("readshockley", help="small-angle scaling table to CSV")
    p.add_argument("--group")
    p.add_argument("--lambda", dest="lambda_", type=float)
    p.add_argument("--angles", help="comma list of degrees, decreasing")
    _solver_flags(p)
    common(p)

    p = sub.add_parser("cellsolve", help="single g_lambda with argmin path dump")
    p.add_argument("--group")
    p.add_argument("--theta", type=float, help="degrees")
    p.add_argument("--lambda", dest="lambda_", type=float)
    _solver_flags(p)
    common(p)

    p = sub.add_parser("synth", help="synthetic polycrystal image to PGM")
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--theta", type=float, help="misorientation, degrees")
    p.add_argument("--sigma", type=float, help="lattice spacing, pixels")
    p.add_argument("--atom-radius", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--split-col", type=int)
    common(p)

    p = sub.add_parser("segment", help="segment a PGM image into grains")
    p.add_argument("--image", help="input PGM")
    p.add_argument("--group")
    p.add_argument("--sigma", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--eps-schedule", help="comma list, decreasing")
    p.add_argument("--iters", type=int)
    common(p)

    p = sub.add_parser("gamma", help="epsilon sweep of the two-grain problem")
    p.add_argument("--group")
    p.add_argument("--theta", type=float, help="degrees")
    p.add_argument("--lambda", dest="lambda_", type=float)
    p.add_argument("--eps-list")
    p.add_argument("--grid-n", type=int)
    p.add_argument("--dim", type=int, choices=(1, 2))
    _solver_flags(p)
    common(p)

    p = sub.add_parser("energy", help="evaluate the energy breakdown of saved fields")
    p.add_argument("--u", help="orientation field file")
    p.add_argument("--v", help="phase field file")
    p.add_argument("--group")
    p.add_argument("--eps", type=float)
    p.add_argument("--image", help="optional PGM for the fidelity term")
    p.add_argument("--sigma", type=float)
    p.add_argument("--gamma", type=float)
    common(p)

    return parser


def _solver_flags(p):
    p.add_argument("--ell", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--multistarts", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--grad-tol", type=float)


_COMMANDS = {
    "group": cmd_group,
    "gtable": cmd_gtable,
    "readshockley": cmd_readshockley,
    "cellsolve": cmd_cellsolve,
    "synth": cmd_synth,
    "segment": cmd_segment,
    "gamma": cmd_gamma,
    "energy": cmd_energy,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    conf = {}
    if args.config:
        try:
            conf = cfg.parse_config(args.config)
        except (OSError, ValueError) as exc:
            print(f"error: --config: {exc}", file=sys.stderr)
            return 1
    # map the --lambda flag onto the config key
    if getattr(args, "lambda_", None) is not None:
        setattr(args, "lambda", args.lambda_)
    seed = _resolve(args, conf, "seed", int, 0)
    threads = _resolve(args, conf, "threads", int, 0)
    if threads:
        backend.set_num_threads(threads)
    out = Path(_resolve(args, conf, "out", str, "."))
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _COMMANDS[args.command](args, conf, seed, out)
    except PolygrainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
