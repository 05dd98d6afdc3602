"""Command-line entry point: ``transduce-sim <subcommand> [options]``.

Every subcommand writes its CSV (and a JSON summary where it has one) into
``--out`` together with a manifest that records the resolved profile and
arguments. ``transduce-sim --replay MANIFEST`` reruns a manifest.

Exit codes: 0 success, 1 numerical failure, 2 configuration/schema error,
3 physics validity error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import coupled_branches, minimum_splitting, mode_linewidths, thermal_npsd
from .config import apply_overrides, load_profile, load_sequence, profile_from_dict
from .core import backaction_rate, build_operators, hz, to_hz, transmon_frequency
from .detection import optical_rabi, simulate_counts, wilson_interval
from .dynamics import write_columns
from .environment import heated_occupancy, qp_recovery, repetition_budget, weighted_average
from .errors import ConfigError, DomainError, FitError, IntegrationError, ValidityError
from .pipeline import (calibrate, phonon_detection_probability, readout_grid, readout_pulse,
                       run_thermometry, run_transduction)
from .protocol import (phonon_T1, rabi_scan, ramsey, swap_efficiency, transduction_sequence,
                       vacuum_rabi_frequency, vacuum_rabi_scan)
from .pulses import PulseSequence

EXIT_NUMERIC, EXIT_CONFIG, EXIT_PHYSICS = 1, 2, 3


def _trials(text):
    value = float(text)
    if value < 1 or value != math.floor(value):
        raise argparse.ArgumentTypeError("trials must be a positive integer")
    return int(value)


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return value


def _grid(start, stop, step):
    """Inclusive grid, rounded so the printed axis carries no float noise."""
    if step <= 0:
        raise ConfigError("step must be positive", "step")
    n = int(round((stop - start) / step))
    return np.round(start + step * np.arange(n + 1), 9)


class _Run:
    """Output collector for one invocation."""

    def __init__(self, args, profile):
        self.args = args
        self.profile = profile
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = {}
        self.summary = None

    def csv(self, columns, name=None):
        path = self.out / f"{name or self.args.command}.csv"
        write_columns(path, columns)
        self.files[path.name] = _sha256(path)

    def json(self, data, name=None):
        self.summary = data
        path = self.out / f"{name or self.args.command}.json"
        path.write_text(_dumps(data))
        self.files[path.name] = _sha256(path)

    def manifest(self):
        args = {k: v for k, v in vars(self.args).items()
                if k not in ("func", "profile_document", "replay", "replay_out")}
        data = {"tool": "transduce-sim", "version": __version__, "command": self.args.command,
                "args": args, "profile_document": self.profile.document,
                "outputs": self.files}
        (self.out / f"{self.args.command}.manifest.json").write_text(_dumps(data))


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _dumps(data):
    return json.dumps(_plain(data), indent=2, sort_keys=True) + "\n"


# ----------------------------------------------------------------- commands

def cmd_validate(run):
    p, s = run.profile.device, run.profile.settings
    checks = {"schema": True, "positive_rates": True, "T2_le_2T1": True,
              "resolved_sideband": True}
    checks["omega_m_over_kappa_o"] = p.mode.omega_m / p.kappa_o
    checks["adiabatic_elimination"] = 4 * math.sqrt(s.n_c) * p.mode.g_om < p.kappa_o
    checks["gamma_phi_nonnegative"] = 1 / p.qubit.T2s_q - 0.5 / p.qubit.T1_q >= 0
    try:
        checks["qubit_frequency_hz"] = transmon_frequency(p.qubit.E_J, p.qubit.E_c, 0.0)
    except DomainError:
        checks["qubit_frequency_hz"] = None
    ops = build_operators(s.N_m)
    comm = ops.b @ ops.b.conj().T - ops.b.conj().T @ ops.b
    checks["operator_commutators"] = bool(
        np.allclose(ops.sigma_ge @ ops.b, ops.b @ ops.sigma_ge, atol=0, rtol=0))
    diag = np.real(np.diag(comm)).reshape(2, s.N_m)[:, :-1]
    checks["truncation_identity"] = bool(np.allclose(diag, 1.0, atol=1e-14))
    checks["backaction_rate_hz"] = to_hz(backaction_rate(s.n_c, p.mode.g_om, p.kappa_o))
    checks["n_f"] = p.n_f
    report = {"profile": run.profile.name}
    if run.args.sequence:
        seq = load_sequence(run.args.sequence)
        checks["sequence_adiabatic_elimination"] = (
            4 * math.sqrt(seq.n_c_peak()) * p.mode.g_om < p.kappa_o)
        report["sequence"] = {"segments": [seg.kind for seg in seq.segments],
                              "total_duration_ns": seq.total_duration * 1e9,
                              "repetition_period_ms": seq.repetition_period * 1e3}
    ok = all(v for k, v in checks.items() if isinstance(v, bool))
    report.update(ok=ok, checks=checks)
    run.json(report)
    print(_dumps(report), end="")
    if not checks["adiabatic_elimination"]:
        raise ValidityError("adiabatic elimination invalid at the configured n_c")
    if not checks.get("sequence_adiabatic_elimination", True):
        raise ValidityError("adiabatic elimination invalid at the sequence peak n_c")
    return 0


def cmd_rabi(run):
    a, p, s = run.args, run.profile.device, run.profile.settings
    omega = s.rabi_rate if a.omega_hz is None else hz(a.omega_hz)
    d_ns = _grid(a.min_ns, a.max_ns, a.step_ns)
    d = d_ns * 1e-9
    res = rabi_scan(p, omega, d, s, fit=False)
    run.csv({"duration_ns": d_ns, "P_e": res.P_e})
    summary = {"omega_hz": to_hz(omega), "period_ns": None, "pi_time_ns": None}
    if omega > 0:
        try:
            fit = rabi_scan(p, omega, d, s)
            summary.update(period_ns=fit.period * 1e9, pi_time_ns=fit.pi_time * 1e9)
        except FitError as exc:
            summary["fit_error"] = str(exc)
    run.json(summary)
    return 0


def cmd_swap(run):
    a, p, s = run.args, run.profile.device, run.profile.settings
    holds_ns = _grid(a.min_ns, a.max_ns, a.step_ns)
    holds = holds_ns * 1e-9
    P, n = vacuum_rabi_scan(p, holds, s, a.prepare)
    run.csv({"hold_ns": holds_ns, "P_e": P, "n_m": n})
    sw = swap_efficiency(p, s, a.prepare)
    summary = {"eta_swap": sw.eta_swap, "t_swap_ns": sw.t_swap * 1e9, "prepare": a.prepare}
    try:
        summary["vacuum_rabi_hz"] = vacuum_rabi_frequency(holds, P)
    except FitError as exc:
        summary["fit_error"] = str(exc)
    run.json(summary)
    return 0


def cmd_phonon_t1(run):
    a, p, s = run.args, run.profile.device, run.profile.settings
    delays_ns = _grid(0.0, a.max_ns, a.step_ns)
    delays = delays_ns * 1e-9
    fit = phonon_T1(p, delays, s)
    run.csv({"delay_ns": delays_ns, "P_e": fit.signal})
    run.json({"T1_m_ns": fit.T * 1e9, "T1_m_sigma_ns": fit.T_sigma * 1e9,
              "lower_bound": fit.lower_bound})
    return 0


def cmd_ramsey(run):
    a, p, s = run.args, run.profile.device, run.profile.settings
    delays_ns = _grid(0.0, a.max_ns, a.step_ns)
    delays = delays_ns * 1e-9
    fit, fringe = ramsey(p, delays, s, hz(a.detuning_hz))
    run.csv({"delay_ns": delays_ns, "P_e": fit.signal})
    run.json({"T2s_ns": fit.T * 1e9, "T2s_sigma_ns": fit.T_sigma * 1e9,
              "fringe_hz": fringe, "lower_bound": fit.lower_bound})
    return 0


def cmd_spectrum(run):
    a, p = run.args, run.profile.device
    fq = _grid(a.start_ghz, a.stop_ghz, a.step_mhz * 1e-3) * 1e9
    br = coupled_branches(p, fq)
    cols = {"f_q_GHz": fq * 1e-9}
    for i in range(br.shape[1]):
        cols[f"branch{i}_GHz"] = br[:, i] * 1e-9
    run.csv(cols)
    run.json({"min_splitting_hz": minimum_splitting(p),
              "mode_hz": [to_hz(m.omega_m) for m in p.mech_modes]})
    return 0


def cmd_npsd(run):
    a, prof = run.args, run.profile
    p = prof.device
    optics = prof.section("optics")
    n_c = a.n_c if a.n_c is not None else (
        optics.get("npsd_power_uW", 20.0) * optics.get("photons_per_uW", 22.0))
    f = _grid(a.start_ghz, a.stop_ghz, a.step_mhz * 1e-3) * 1e9
    S = thermal_npsd(p, hz(f), n_c)
    run.csv({"omega_GHz": f * 1e-9, "S": S})
    run.json({"n_c": n_c, "linewidths_hz": [to_hz(w) for w in mode_linewidths(p, n_c)]})
    return 0


def cmd_thermometry(run):
    a = run.args
    th = run_thermometry(run.profile, a.trials, a.seed, n_m=a.n_m)
    r = th.result
    run.csv({"sideband": ["red", "blue"], "trials": [th.red.trials, th.blue.trials],
             "counts": [th.red.detected, th.blue.detected],
             "probability": [th.red.probability, th.blue.probability]})
    run.json({"p_d": r.p_d, "p_d_sigma": r.p_d_sigma, "n_m": r.n_m, "n_m_sigma": r.n_m_sigma,
              "n_m_model": th.n_m_weighted, "trials": a.trials, "seed": a.seed})
    return 0


def cmd_heating(run):
    a, prof = run.args, run.profile
    p, s = prof.device, prof.settings
    cal = calibrate(prof)
    taus_ns = _grid(a.min_ns, a.max_ns, a.step_ns)
    taus = taus_ns * 1e-9
    n_avg, p_det = [], []
    for tau in taus:
        pulse = readout_pulse(s, tau)
        t = readout_grid(s, tau)
        n_c = np.array([pulse.n_c(x) for x in t])
        gom = backaction_rate(n_c, p.mode.g_om, p.kappa_o)
        occ = heated_occupancy(cal.heating, n_c, t, p.mode.kappa_m_T1, gom, p.n_f)
        n_avg.append(weighted_average(occ, n_c, t))
        p_det.append(phonon_detection_probability(p, cal.chain, pulse))
    run.csv({"tau_ro_ns": taus_ns, "n_m": n_avg, "p_detect": p_det})
    run.json({"gamma_p_hz_per_photon": to_hz(cal.heating.gamma_p), "n_p": cal.heating.n_p,
              "envelope_factor": cal.chain.envelope_factor})
    return 0


def cmd_qp(run):
    a, prof = run.args, run.profile
    cal = calibrate(prof)
    if cal.qp is None:
        raise ConfigError("profile has no QP lifetime and recovery time", "qp")
    delays_ms = _grid(0.0, a.max_ms, a.step_ms)
    delays = delays_ms * 1e-3
    curve = qp_recovery(cal.qp, delays)
    cols = {"delay_ms": delays_ms, "contrast": curve.contrast}
    summary = {"recovery_ms": curve.recovery_time * 1e3, "tau_qp_ms": cal.qp.tau_qp * 1e3,
               "threshold": cal.qp.threshold}
    seq = PulseSequence([readout_pulse(prof.settings)], prof.settings.qubit_detuning,
                        prof.settings.repetition_period)
    summary["max_rate_hz"] = repetition_budget(seq, cal.qp).max_rate
    if cal.qp_vortex is not None:
        v = qp_recovery(cal.qp_vortex, delays)
        cols["contrast_vortex"] = v.contrast
        summary["recovery_vortex_ms"] = v.recovery_time * 1e3
        summary["recovery_ratio"] = curve.recovery_time / v.recovery_time
        summary["max_rate_vortex_hz"] = repetition_budget(seq, cal.qp_vortex).max_rate
    run.csv(cols)
    run.json(summary)
    return 0


def cmd_transduce(run):
    a = run.args
    tr = run_transduction(run.profile, a.trials, a.seed)
    recs = [tr.with_pi, tr.without_pi]
    cis = [wilson_interval(r.detected, r.trials) for r in recs]
    run.csv({"case": ["pi", "no_pi"], "trials": [r.trials for r in recs],
             "counts": [r.detected for r in recs], "probability": [r.probability for r in recs],
             "ci_lo": [c[0] for c in cis], "ci_hi": [c[1] for c in cis]})
    summary = tr.result.as_dict()
    summary.update(t_swap_ns=tr.t_swap * 1e9, eta_swap=tr.eta_swap,
                   n_m_readout_pi=tr.trace_pi.occupancy_at_readout,
                   n_m_readout_no_pi=tr.trace_0.occupancy_at_readout,
                   trials=a.trials, seed=a.seed, warnings=tr.trace_pi.warnings)
    run.json(summary)
    return 0


def cmd_optical_rabi(run):
    a, prof = run.args, run.profile
    p, s = prof.device, prof.settings
    cal = calibrate(prof)
    period = rabi_scan(p, s.rabi_rate, np.arange(2, 161, 2) * 1e-9, s).period
    t_swap = swap_efficiency(p, s, prepare="pulse").t_swap
    durations_ns = _grid(0.0, a.max_ns, a.step_ns)
    durations = durations_ns * 1e-9
    rate, lo, hi = [], [], []
    for k, d in enumerate(durations):
        tr = transduction_sequence(p, d, None, s, cal.heating, cal.chain, None, t_swap)
        rec = simulate_counts(tr.flux_red, tr.tau_ro, a.trials, a.seed, t=tr.t, stream=k)
        rate.append(rec.probability)
        ci = wilson_interval(rec.detected, rec.trials)
        lo.append(ci[0])
        hi.append(ci[1])
    run.csv({"duration_ns": durations_ns, "rate": rate, "ci_lo": lo, "ci_hi": hi})
    fit = optical_rabi(durations, rate, period)
    run.json({"period_ns": period * 1e9, "background": fit.background,
              "background_ci": fit.background_ci, "maximum": fit.maximum,
              "maximum_ci": fit.maximum_ci, "amplitude": fit.amplitude,
              "amplitude_ci": fit.amplitude_ci, "confidence": fit.confidence})
    return 0


SWEEP_QUANTITIES = ("swap", "transduce", "thermometry", "backaction")


def cmd_sweep(run):
    a = run.args
    values = [v.strip() for v in a.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("no sweep values", "values")
    base = run.profile.document
    rows = {a.param: []}
    for v in values:
        prof = profile_from_dict(apply_overrides(base, [f"{a.param}={v}"]), run.profile.name)
        p, s = prof.device, prof.settings
        out = {}
        if a.quantity == "swap":
            sw = swap_efficiency(p, s)
            out = {"eta_swap": sw.eta_swap, "t_swap_ns": sw.t_swap * 1e9}
        elif a.quantity == "backaction":
            out = {"gamma_om_hz": to_hz(backaction_rate(s.n_c, p.mode.g_om, p.kappa_o))}
        elif a.quantity == "thermometry":
            r = run_thermometry(prof, a.trials, a.seed).result
            out = {"p_d": r.p_d, "n_m": r.n_m, "n_m_sigma": r.n_m_sigma}
        else:
            r = run_transduction(prof, a.trials, a.seed).result
            out = {"P_pi": r.P_pi, "P_0": r.P_0, "eta_t": r.eta_t, "n_add": r.n_add}
        rows[a.param].append(float(read_value(v)))
        for k, x in out.items():
            rows.setdefault(k, []).append(x)
    run.csv(rows)
    return 0


def read_value(text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError("sweep values must be numeric", "values") from None


# ------------------------------------------------------------------ parser

def _common(sp, mc=False):
    sp.add_argument("--profile", default="paper_device",
                    help="bundled profile name or path to a device TOML file")
    sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                    help="set a profile field by dotted path, e.g. device.g_pe_hz=2e6")
    sp.add_argument("--out", default=".", help="output directory")
    if mc:
        sp.add_argument("--seed", type=_seed, required=True)
        sp.add_argument("--trials", type=_trials, default=10**9)


def build_parser():
    ap = argparse.ArgumentParser(prog="transduce-sim", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--replay", metavar="MANIFEST", help="rerun a recorded manifest")
    ap.add_argument("--replay-out", metavar="DIR", help="output directory for --replay")
    sub = ap.add_subparsers(dest="command")

    def add(name, func, mc=False, **kw):
        sp = sub.add_parser(name, **kw)
        _common(sp, mc)
        sp.set_defaults(func=func)
        return sp

    sp = add("validate", cmd_validate,
             help="check a profile against schema and physics invariants")
    sp.add_argument("--sequence", default=None, help="also validate a sequence TOML file")

    sp = add("rabi", cmd_rabi, help="qubit Rabi oscillation versus drive length")
    sp.add_argument("--omega-hz", type=float, default=None, help="Rabi rate Omega/2pi")
    sp.add_argument("--min-ns", type=float, default=0.0)
    sp.add_argument("--max-ns", type=float, default=160.0)
    sp.add_argument("--step-ns", type=float, default=2.0)

    sp = add("swap", cmd_swap, help="vacuum Rabi swap versus Stark pulse length")
    sp.add_argument("--min-ns", type=float, default=30.0)
    sp.add_argument("--max-ns", type=float, default=600.0)
    sp.add_argument("--step-ns", type=float, default=5.0)
    sp.add_argument("--prepare", choices=("ideal", "pulse"), default="ideal")

    sp = add("phonon-t1", cmd_phonon_t1, help="swap-wait-swap phonon lifetime")
    sp.add_argument("--max-ns", type=float, default=1500.0)
    sp.add_argument("--step-ns", type=float, default=25.0)

    sp = add("ramsey", cmd_ramsey, help="Ramsey fringes and T2*")
    sp.add_argument("--max-ns", type=float, default=1500.0)
    sp.add_argument("--step-ns", type=float, default=20.0)
    sp.add_argument("--detuning-hz", type=float, default=2e6)

    sp = add("spectrum", cmd_spectrum, help="qubit-mechanics avoided-crossing branches")
    sp.add_argument("--start-ghz", type=float, default=5.10)
    sp.add_argument("--stop-ghz", type=float, default=5.30)
    sp.add_argument("--step-mhz", type=float, default=0.25)

    sp = add("npsd", cmd_npsd, help="optically transduced thermal noise spectrum")
    sp.add_argument("--start-ghz", type=float, default=5.14)
    sp.add_argument("--stop-ghz", type=float, default=5.28)
    sp.add_argument("--step-mhz", type=float, default=0.05)
    sp.add_argument("--n-c", type=float, default=None, help="intracavity photons")

    sp = add("thermometry", cmd_thermometry, mc=True, help="sideband-asymmetry thermometry")
    sp.add_argument("--n-m", type=float, default=None,
                    help="inject a fixed occupancy instead of the heating model")

    sp = add("heating", cmd_heating, help="heating noise versus readout length")
    sp.add_argument("--min-ns", type=float, default=10.0)
    sp.add_argument("--max-ns", type=float, default=200.0)
    sp.add_argument("--step-ns", type=float, default=2.0)

    sp = add("qp", cmd_qp, help="quasi-particle recovery of the Rabi contrast")
    sp.add_argument("--max-ms", type=float, default=20.0)
    sp.add_argument("--step-ms", type=float, default=0.1)

    add("transduce", cmd_transduce, mc=True, help="full transduction with and without pi")

    sp = add("optical-rabi", cmd_optical_rabi, mc=True,
             help="qubit Rabi oscillation detected through optical photons")
    sp.add_argument("--max-ns", type=float, default=128.0)
    sp.add_argument("--step-ns", type=float, default=8.0)

    sp = add("sweep", cmd_sweep, mc=True, help="sweep one profile field")
    sp.add_argument("--param", required=True, help="dotted profile path")
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.add_argument("--quantity", choices=SWEEP_QUANTITIES, default="swap")
    return ap


def _replay_args(ap, path):
    try:
        data = json.loads(Path(path).read_text())
        command, recorded = data["command"], data["args"]
        document = data["profile_document"]
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"unreadable manifest: {exc}", "replay") from exc
    args = ap.parse_args([command, "--seed", "0"] if "seed" in recorded else [command])
    for k, v in recorded.items():
        setattr(args, k, v)
    args.profile_document = document
    return args


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.replay:
            out = args.replay_out
            args = _replay_args(ap, args.replay)
            if out:
                args.out = out
        if not getattr(args, "command", None):
            ap.print_usage(sys.stderr)
            return EXIT_CONFIG
        doc = getattr(args, "profile_document", None)
        if doc is not None:
            profile = profile_from_dict(doc)
        else:
            profile = load_profile(args.profile, args.override)
        run = _Run(args, profile)
        status = args.func(run)
        run.manifest()
        return status
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValidityError, DomainError) as exc:
        print(f"physics validity error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except (FitError, IntegrationError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
