"""Experiment runners behind ``mll run``.

Each runner takes a validated config and returns an :class:`Outcome`:
structured results for ``report.json``, data series for CSV files, and
named pass/fail checks against the tolerances the config declares.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .analysis.bias import bias_at, bias_scan, ula_stationary_bias
from .analysis.constants import constants_for, theorem_constants
from .analysis.coupling import contraction_rate, deviation_check, growth_check
from .analysis.duality import TOLERANCES, duality_suite
from .analysis.fit import fit_order
from .analysis.laws import GaussianLaw, law_from_config
from .analysis.local_error import FINE_STEPS, local_errors
from .analysis.msc import epsilon_bound, epsilon_example, msc_report_polytope
from .engine import SampleSet, gbm_exact, run_chains
from .errors import NotContractive
from .mirror_maps import Gbm1d, OrthantLogBarrier, Quadratic, map_from_config
from .potentials import DualTarget, QuadraticGaussian, RelativeAffine, potential_from_config
from .rng import stream
from .transport import w2_euclidean, w2_sliced

__all__ = ["Outcome", "run_experiment"]

Z95 = float(norm.ppf(0.975))


@dataclass
class Outcome:
    results: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)  # name -> (header, rows)
    checks: list = field(default_factory=list)
    violations: int = 0

    def check(self, name: str, passed: bool, **detail):
        self.checks.append({"name": name, "passed": bool(passed), **detail})

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)


def _instance(cfg):
    mirror = map_from_config(cfg["map"])
    return mirror, potential_from_config(cfg["potential"], mirror)


def _law(law_cfg, mirror, pot):
    if law_cfg is None:
        return GaussianLaw(pot.minimizer_dual(mirror), 0.1)
    return law_from_config(law_cfg)


def _run_sample(cfg, seed, threads):
    mirror, pot = _instance(cfg)
    law = _law(cfg.get("init"), mirror, pot)
    chains = cfg["chains"]
    y0 = law.sample(mirror, stream(seed, "sample-init"), chains)
    final = run_chains(mirror, pot, SampleSet(y0, "dual"), cfg["h"], cfg["k"], chains, seed,
                       policy=cfg.get("policy", "fail"), threads=threads)
    out = Outcome(violations=final.provenance["violations"])
    out.results["provenance"] = final.provenance
    out.series["samples"] = ([f"y{i}" for i in range(mirror.dim)], final.points.tolist())
    target = DualTarget(mirror, pot)
    if target.exact_sampler_available:
        ref = target.exact_dual_samples(len(final), seed).points
        if mirror.dim == 1 or len(final) <= 512:
            est = w2_euclidean(final.points, ref, cfg.get("n_boot", 0), seed)
        else:
            est = w2_sliced(final.points, ref, 64, seed)
        out.results["w2_to_target"] = {"value": est.value, "method": est.method, "half_width": est.half_width}
        if "max_w2" in cfg.get("expect", {}):
            out.check("w2_to_target", est.value <= cfg["expect"]["max_w2"], value=est.value,
                      tolerance=cfg["expect"]["max_w2"])
    return out


def _run_bias_scan(cfg, seed, threads):
    mirror, pot = _instance(cfg)
    init = law_from_config(cfg["init"]) if "init" in cfg else None
    h_grid = cfg["h_grid"]
    ks = cfg.get("k_per_h", [None] * len(h_grid))
    kw = dict(n_snapshots=cfg.get("n_snapshots", 4), n_boot=cfg.get("n_boot", 200), threads=threads)
    out = Outcome()
    if len(h_grid) >= 4:
        scan = bias_scan(mirror, pot, h_grid, ks, cfg["chains"], seed, init, **kw)
        points = scan.points
        out.results.update(scan.to_dict())
    else:
        exact = DualTarget(mirror, pot).exact_dual_samples(cfg["chains"], seed).points
        points = tuple(bias_at(mirror, pot, h, k, cfg["chains"], seed + 1 + i, init, exact=exact, **kw)
                       for i, (h, k) in enumerate(zip(h_grid, ks)))
        out.results["points"] = [p.to_dict() for p in points]
        scan = None
    out.violations = sum(p.violations for p in points)
    out.series["bias"] = (["h", "k", "bias", "half_width", "violations", "aborted"],
                          [[p.h, p.k, p.bias, p.half_width, p.violations, p.aborted] for p in points])
    out.series["bias_trace"] = (["h", "k", "w2"], [[p.h, k, w] for p in points
                                                    for k, w in zip(p.snapshot_k, p.snapshot_w2)])
    expect = cfg.get("expect", {})
    if "ula_oracle_rel_tol" in expect:
        if not (isinstance(mirror, Quadratic) and isinstance(pot, QuadraticGaussian)):
            raise ValueError("the ULA oracle applies to the quadratic map with a Gaussian target")
        tol = expect["ula_oracle_rel_tol"]
        for p in points:
            exact_bias = ula_stationary_bias(pot.c, p.h, mirror.dim)
            out.check(f"ula_oracle_h={p.h:g}", abs(p.bias - exact_bias) <= p.half_width + tol * exact_bias,
                      value=p.bias, expected=exact_bias, tolerance=p.half_width + tol * exact_bias)
    if "slope_range" in expect:
        lo, hi = expect["slope_range"]
        if scan is None:
            raise ValueError("slope_range needs at least 4 step sizes")
        ok = scan.resolved and lo <= scan.fit.slope <= hi
        out.check("bias_slope", ok, value=scan.fit.slope, range=[lo, hi], resolved=scan.resolved,
                  noise_floor=scan.noise_floor)
    return out


def _run_local_error(cfg, seed, threads):
    mirror, pot = _instance(cfg)
    law = law_from_config(cfg["init"])
    measure = cfg.get("measure", ["weak", "strong"])
    expect = cfg.get("expect", {})
    out = Outcome()
    ests = {"weak": [], "strong": []}
    for i, h in enumerate(cfg["h_grid"]):
        w, s = local_errors(mirror, pot, law, h, cfg["replicas"], seed + i, cfg.get("fine_steps", FINE_STEPS),
                            cfg.get("control_variate", True), threads)
        ests["weak"].append(w)
        ests["strong"].append(s)
    consts = None
    if expect.get("envelopes"):
        consts = constants_for(mirror, pot, ests["weak"][0].E_y0_sq, E_target_sq=0.0)
    rows = []
    for kind in measure:
        for e in ests[kind]:
            env = float("nan")
            if consts is not None:
                env = float(consts.weak_envelope(e.E_y0_sq, e.h) if kind == "weak"
                            else consts.strong_envelope(e.E_y0_sq, e.h))
                out.check(f"{kind}_envelope_h={e.h:g}", e.value <= env + 3.0 * e.half_width / Z95,
                          value=e.value, envelope=env)
            rows.append([kind, e.h, e.value, e.half_width, env, e.replicas, e.discarded, e.coarse_violations])
            out.violations += e.coarse_violations
    out.series["local_error"] = (["kind", "h", "error", "half_width", "envelope", "replicas", "discarded",
                                  "coarse_violations"], rows)
    for kind in measure:
        fit = fit_order([e.h for e in ests[kind]], [e.value for e in ests[kind]],
                        [e.half_width for e in ests[kind]])
        out.results[f"{kind}_fit"] = fit.to_dict()
        out.results[f"{kind}_estimates"] = [e.to_dict() for e in ests[kind]]
        if kind == "weak" and "weak_slope_min" in expect:
            out.check("weak_slope", fit.resolved and fit.slope >= expect["weak_slope_min"], value=fit.slope,
                      minimum=expect["weak_slope_min"], resolved=fit.resolved)
        if kind == "strong" and "strong_slope_range" in expect:
            lo, hi = expect["strong_slope_range"]
            out.check("strong_slope", fit.resolved and lo <= fit.slope <= hi, value=fit.slope, range=[lo, hi],
                      resolved=fit.resolved)
    if consts is not None:
        out.results["constants"] = consts.to_dict()
    return out


def _starts(law_cfg, mirror, n, seed, tag):
    return law_from_config(law_cfg).sample(mirror, stream(seed, tag), n)


def _run_contraction(cfg, seed, threads):
    mirror, pot = _instance(cfg)
    n = cfg["pairs"]
    fit = contraction_rate(mirror, pot, _starts(cfg["y0"], mirror, n, seed, "pair-a"),
                           _starts(cfg["y0p"], mirror, n, seed, "pair-b"), cfg["h"], cfg["k"], n, seed, threads)
    out = Outcome(results=fit.to_dict())
    out.series["contraction"] = (["k", "t", "sq_dist_mean", "sq_dist_sem"],
                                 [[i, t, m, s] for i, (t, m, s) in enumerate(zip(fit.times, fit.sq_dist,
                                                                                   fit.sq_dist_sem))])
    expect = cfg.get("expect", {})
    if "rate" in expect:
        tol = expect.get("rel_tol", 0.2)
        out.check("contraction_rate", abs(fit.rate - expect["rate"]) <= tol * abs(expect["rate"]),
                  value=fit.rate, expected=expect["rate"], rel_tol=tol)
    if "contracting" in expect:
        out.check("contracting", (not fit.non_contracting) == expect["contracting"], value=fit.rate)
    return out


def _run_deviation(cfg, seed, threads):
    mirror, pot = _instance(cfg)
    rep = deviation_check(mirror, pot, law_from_config(cfg["init"]), law_from_config(cfg["init_p"]),
                          cfg["t_grid"], cfg["pairs"], seed, cfg["fine_steps"], threads)
    out = Outcome(results=rep.to_dict())
    out.series["deviation"] = (["t", "lhs", "ratio", "ratio_se", "bound"],
                               [[t, l, r, s, rep.bound] for t, l, r, s in zip(rep.t_grid, rep.lhs, rep.ratios,
                                                                              rep.ratio_se)])
    out.check("deviation_bound", rep.passed, max_ratio=rep.max_ratio, bound=rep.bound)
    return out


def _run_growth(cfg, seed, threads):
    mirror, pot = _instance(cfg)
    rep = growth_check(mirror, pot, law_from_config(cfg["init"]), cfg["t_grid"], cfg["replicas"], seed,
                       cfg["fine_steps"], threads)
    out = Outcome(results=rep.to_dict())
    out.series["growth"] = (["t", "lhs", "lhs_se", "gamma_t"],
                            [[t, l, s, rep.gamma * t] for t, l, s in zip(rep.t_grid, rep.lhs, rep.lhs_se)])
    out.check("growth_bound", rep.passed, max_ratio=max(rep.ratios), gamma=rep.gamma)
    return out


def _run_constants(cfg, seed, threads):
    mirror, pot = _instance(cfg)
    c = constants_for(mirror, pot, cfg["E_y0_sq"], cfg.get("E_target_sq"))
    again = constants_for(mirror, pot, cfg["E_y0_sq"], cfg.get("E_target_sq"))
    out = Outcome(results={"constants": c.to_dict()})
    out.check("bit_stable", json.dumps(c.to_dict(), sort_keys=True) == json.dumps(again.to_dict(), sort_keys=True))
    scalars = {k: v for k, v in c.to_dict().items() if isinstance(v, (int, float))}
    out.series["constants"] = (["name", "value"], [[k, v] for k, v in scalars.items()])
    w0 = cfg.get("w0", 1.0)
    rows = []
    for eps in cfg.get("eps", [0.1, 0.01]):
        ratio = c.mixing_time_leading(eps / 2) / c.mixing_time_leading(eps)
        rows.append([eps, c.mixing_step(eps), c.mixing_time_leading(eps), c.mixing_time(eps, w0), ratio])
        rng = cfg.get("expect", {}).get("mixing_ratio_range")
        if rng:
            out.check(f"mixing_ratio_eps={eps:g}", rng[0] <= ratio <= rng[1], value=ratio, range=rng)
    out.series["mixing"] = (["eps", "h", "tau_leading", "tau", "ratio_half_eps"], rows)
    out.results["mixing"] = [dict(zip(out.series["mixing"][0], r)) for r in rows]
    for a in cfg.get("not_contractive_alphas", []):
        try:
            theorem_constants(c.m, c.M, a, c.d, 0.0, 0.0, 0.0, c.E_y0_sq, c.E_target_sq)
            raised = False
        except NotContractive:
            raised = True
        out.check(f"not_contractive_alpha={a:g}", raised == (a >= c.m), alpha=a, raised=raised)
    return out


def _run_msc(cfg, seed, threads):
    out = Outcome()
    n = cfg.get("probe_pairs", 10_000)
    box = cfg.get("box", 3.0)
    expect = cfg.get("expect", {})
    rows = []
    reports = []
    for eps in cfg.get("epsilon_grid", []):
        rep = msc_report_polytope(epsilon_example(eps), None, n, seed, box)
        reports.append(rep.to_dict())
        bound = epsilon_bound(eps)
        rows.append([eps, rep.singular_values[-1] ** 2, rep.analytic_upper, rep.witness_ratio, rep.empirical_sup])
        out.check(f"sup_within_bound_eps={eps:g}", rep.within_bound, empirical_sup=rep.empirical_sup,
                  bound=rep.analytic_upper)
        if "witness_rel_tol" in expect:
            rel = abs(rep.witness_ratio - bound) / bound
            out.check(f"witness_eps={eps:g}", rel <= expect["witness_rel_tol"], value=rep.witness_ratio,
                      expected=bound, rel_err=rel)
    if "bound_ratio_range" in expect:
        lo, hi = expect["bound_ratio_range"]
        for a, b in zip(rows, rows[1:]):
            r = b[2] / a[2]
            out.check(f"bound_growth_{a[0]:g}_to_{b[0]:g}", lo <= r <= hi, value=r, range=[lo, hi])
    out.series["msc_epsilon"] = (["eps", "sigma_min_sq", "bound", "witness_ratio", "empirical_sup"], rows)
    if "A" in cfg:
        rep = msc_report_polytope(np.asarray(cfg["A"], float), np.asarray(cfg["b"], float), n, seed, box)
        reports.append(rep.to_dict())
        if rep.analytic_upper is not None:
            out.check("sup_within_bound", rep.within_bound, empirical_sup=rep.empirical_sup, bound=rep.analytic_upper)
    out.results["reports"] = reports
    return out


def _run_gbm_check(cfg, seed, threads):
    alpha, t, n = cfg["alpha"], cfg["t"], cfg["replicas"]
    y0 = cfg.get("y0", 1.0)
    w = math.sqrt(t) * stream(seed, "gbm-moment").standard_normal(n)
    r = (gbm_exact(y0, alpha, t, w) / y0) ** 2
    ratio, se = float(r.mean()), float(r.std(ddof=1) / math.sqrt(n))
    exact = math.exp(-2.0 * (1.0 - alpha) * t)
    out = Outcome(results={"second_moment_ratio": ratio, "se": se, "exact": exact})
    out.series["gbm_moment"] = (["alpha", "t", "ratio", "se", "exact"], [[alpha, t, ratio, se, exact]])
    out.check("second_moment", abs(ratio - exact) <= 3.0 * se, value=ratio, expected=exact, se=se)
    c = cfg.get("contraction")
    if c:
        rows = []
        for i, a in enumerate(c["alphas"]):
            g = Gbm1d(a)
            fit = contraction_rate(g, RelativeAffine(g, 1.0, 0.0), c.get("y0", 1.0), c.get("y0p", 2.0), c["h"],
                                   c["k"], c["pairs"], seed + 1 + i, threads)
            rows.append([a, fit.rate, fit.se, int(fit.non_contracting)])
            if a < 1:
                out.check(f"contracting_alpha={a:g}", not fit.non_contracting, rate=fit.rate, se=fit.se)
            elif a > 1:
                out.check(f"non_contracting_alpha={a:g}", fit.non_contracting, rate=fit.rate, se=fit.se)
        out.series["gbm_rates"] = (["alpha", "rate", "se", "non_contracting"], rows)
        out.results["rates"] = [dict(zip(out.series["gbm_rates"][0], r)) for r in rows]
    return out


def _run_duality(cfg, seed, threads):
    out = Outcome()
    rows = []
    lam = cfg.get("lambda", 2.0)
    for i, map_cfg in enumerate(cfg["maps"]):
        mirror = map_from_config(map_cfg)
        b = 1.0 if isinstance(mirror, OrthantLogBarrier) else 0.0
        rep = duality_suite(mirror, RelativeAffine(mirror, lam, b), cfg["points"], seed + i, cfg.get("h", 1e-3))
        label = f"{i}_{mirror.kind}"
        out.results[label] = rep
        for name, err in rep["errors"].items():
            rows.append([label, name, err, TOLERANCES[name], int(rep["passed"][name])])
            out.check(f"{label}:{name}", rep["passed"][name], value=err, tolerance=TOLERANCES[name])
    out.series["duality"] = (["map", "invariant", "max_error", "tolerance", "passed"], rows)
    return out


def _run_suite(cfg, seed, threads):
    out = Outcome()
    for i, sub in enumerate(cfg["experiments"]):
        name = sub.get("name", f"{i}_{sub['experiment']}")
        res = run_experiment(sub, sub.get("seed", seed), threads)
        out.results[name] = res.results
        out.violations += res.violations
        for s, v in res.series.items():
            out.series[f"{name}__{s}"] = v
        for c in res.checks:
            out.checks.append({**c, "name": f"{name}:{c['name']}"})
    return out


_RUNNERS = {
    "sample": _run_sample,
    "bias_scan": _run_bias_scan,
    "local_error": _run_local_error,
    "contraction": _run_contraction,
    "deviation": _run_deviation,
    "growth": _run_growth,
    "constants": _run_constants,
    "msc": _run_msc,
    "gbm_check": _run_gbm_check,
    "duality": _run_duality,
    "suite": _run_suite,
}


def run_experiment(cfg: dict, seed: int, threads: int | None = None) -> Outcome:
    return _RUNNERS[cfg["experiment"]](cfg, seed, threads)
