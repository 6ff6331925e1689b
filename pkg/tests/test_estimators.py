import json
import math

import numpy as np
import pytest
from scipy.stats import norm

from conftest import combined_z
from gfflab import gaussfield as gf
from gfflab.estimators import (
    CSV_HEADER, Estimate, FloorSchedule, ScheduleError, _chain_seed,
    estimate_conditional_contact, estimate_positivity, hardwall_sparse,
)
from gfflab.lattice import LatticeSpec, Region, build_box, \
    generate_delta_sparse, sparse_complement
from gfflab.mcmc import ChainConfig
from gfflab.pinning import PinnedMeasureSpec, event_xi_above, exact_tiny


class TestEstimateRecord:
    def test_validation(self):
        with pytest.raises(ValueError):
            Estimate(value=0.0, stderr=-1.0)
        with pytest.raises(ValueError):
            Estimate(value=0.0, stderr=0.0, n_samples=0)

    def test_csv_row_round_trip(self):
        est = Estimate(value=-1.25, stderr=0.125, log_scale=True,
                       n_samples=100, seed=7, meta={"kind": "test", "t": 0.5})
        row = est.csv_row()
        fields = row.split(",", 5)
        assert float(fields[0]) == -1.25
        assert float(fields[1]) == 0.125
        assert fields[2] == "1"
        meta = json.loads(fields[5][1:-1].replace('""', '"'))
        assert meta == {"kind": "test", "t": 0.5}
        assert CSV_HEADER.split(",")[0] == "value"


class TestFloorSchedule:
    def test_must_increase(self):
        with pytest.raises(ValueError):
            FloorSchedule(levels=(0.0, -1.0))
        with pytest.raises(ValueError):
            FloorSchedule(levels=(0.0,))

    def test_default_ends_at_target(self, chain_d1):
        s = FloorSchedule.default(chain_d1, 0.25)
        assert s.target == 0.25
        assert len(s.levels) >= 13

    def test_uniform_formula(self, single_site):
        s = FloorSchedule.uniform(single_site, 0.0, n_steps=12)
        sigma = math.sqrt(gf.max_variance(single_site))
        assert s.levels[0] == pytest.approx(-6.0 * sigma)
        assert len(s.levels) == 13
        steps = np.diff(s.levels)
        assert np.allclose(steps, steps[0])

    def test_wrong_target_rejected(self, single_site):
        s = FloorSchedule.default(single_site, 0.0)
        with pytest.raises(ValueError):
            estimate_positivity(single_site, 1.0, s)


class TestEstimatePositivity:
    def test_single_site_half(self, single_site):
        est = estimate_positivity(single_site, 0.0)
        assert est.log_scale
        assert abs(combined_z(est.value, est.stderr, math.log(0.5), 0.0)) < 3

    def test_single_site_tail(self, single_site):
        est = estimate_positivity(single_site, 1.0)
        ref = math.log(norm.sf(1.0))
        assert abs(combined_z(est.value, est.stderr, ref, 0.0)) < 3

    def test_three_sites_vs_direct_mc(self, chain_d1):
        est = estimate_positivity(chain_d1, 0.0)
        vals = gf.sample_free_values(chain_d1, 2_000_000, seed=123)
        p = (vals >= 0).all(axis=1).mean()
        se_log = math.sqrt((1 - p) / (p * vals.shape[0]))
        assert abs(combined_z(est.value, est.stderr, math.log(p), se_log)) < 3

    def test_monotone_in_floor_level(self, chain_d1):
        cfg = ChainConfig(sweeps=90 + 2500, burn_in=90, seed=5)
        lo = estimate_positivity(chain_d1, 0.0, config=cfg)
        hi = estimate_positivity(chain_d1, 0.5, config=cfg)
        gap_err = math.hypot(lo.stderr, hi.stderr)
        assert hi.value < lo.value - 3 * gap_err

    def test_coarse_schedule_raises(self):
        box = build_box(LatticeSpec(d=3, N=1))
        sched = FloorSchedule(levels=(-8.0, 0.0))
        cfg = ChainConfig(sweeps=90 + 400, burn_in=90, seed=1)
        with pytest.raises(ScheduleError):
            estimate_positivity(box, 0.0, sched, cfg)

    def test_meta_records_levels_and_ratios(self, single_site):
        cfg = ChainConfig(sweeps=90 + 800, burn_in=90, seed=2)
        est = estimate_positivity(single_site, 0.0, config=cfg)
        assert est.meta["kind"] == "positivity"
        assert len(est.meta["ratios"]) == len(est.meta["levels"]) - 1
        assert all(0 < r <= 1 for r in est.meta["ratios"])


class TestHardwallSparse:
    def test_single_anchor_reduces_to_positivity(self):
        spec = LatticeSpec(d=1, N=2)
        delta = 7  # one sublattice node: the origin
        cfg = ChainConfig(sweeps=250 + 1500, burn_in=250, seed=3)
        est = hardwall_sparse(spec, delta, 0.0, anchor_seeds=(0,), config=cfg)
        anchor = generate_delta_sparse(spec, delta, jitter_seed=0)
        assert anchor.anchors == ((0,),)
        region = sparse_complement(anchor)
        manual_cfg = ChainConfig(sweeps=cfg.sweeps, burn_in=cfg.burn_in,
                                 thin=cfg.thin, seed=_chain_seed(cfg.seed, 0))
        manual = estimate_positivity(region, 0.0, config=manual_cfg)
        assert est.value == pytest.approx(manual.value / 5, rel=1e-12)
        assert est.meta["anchors"][0]["n_anchors"] == 1

    def test_strictly_negative_and_seed_stable(self):
        spec = LatticeSpec(d=1, N=4)
        cfg = ChainConfig(sweeps=250 + 2000, burn_in=250, seed=4)
        est = hardwall_sparse(spec, 3, 0.0, anchor_seeds=(0, 1), config=cfg)
        rows = est.meta["anchors"]
        assert est.value < 0
        assert len(rows) == 2
        # delta <= 10: identical anchor sets, difference is pure MC noise
        z = combined_z(rows[0]["value"], rows[0]["stderr"],
                       rows[1]["value"], rows[1]["stderr"])
        assert abs(z) < 3
        assert est.value == min(r["value"] for r in rows)

    def test_monotone_in_t(self):
        spec = LatticeSpec(d=1, N=2)
        cfg = ChainConfig(sweeps=250 + 2000, burn_in=250, seed=6)
        e0 = hardwall_sparse(spec, 7, 0.0, anchor_seeds=(0,), config=cfg)
        e1 = hardwall_sparse(spec, 7, 0.5, anchor_seeds=(0,), config=cfg)
        assert e1.value < e0.value
        assert e1.meta["t"] == 0.5

    def test_normalization_meta(self):
        spec = LatticeSpec(d=1, N=2)
        cfg = ChainConfig(sweeps=250 + 800, burn_in=250, seed=7)
        est = hardwall_sparse(spec, 7, 0.0, anchor_seeds=(0,), config=cfg)
        assert est.meta["normalization"] == 5
        assert est.meta["normalization_Nd"] == 2
        assert est.meta["value_Nd_scale"] == pytest.approx(
            est.value * 5 / 2, rel=1e-12
        )


class TestConditionalContact:
    def test_threshold_above_size_gives_zero(self):
        m = PinnedMeasureSpec(spec=LatticeSpec(d=1, N=1), a=1.0, b=1.0,
                              floor=0.0)
        est = estimate_conditional_contact(m, 1.5)
        assert est.value == 0.0 and est.stderr == 0.0

    def test_requires_floor_and_window(self):
        m = PinnedMeasureSpec(spec=LatticeSpec(d=1, N=1), a=1.0, b=1.0)
        with pytest.raises(ValueError):
            estimate_conditional_contact(m, 0.1)
        sym = PinnedMeasureSpec(spec=LatticeSpec(d=1, N=1), a=1.0, b=1.0,
                                window="symmetric", floor=0.0)
        with pytest.raises(ValueError):
            estimate_conditional_contact(sym, 0.1)

    def test_single_site_vs_oracle(self, single_site):
        m = PinnedMeasureSpec(spec=single_site.spec, a=1.0, b=1.0, floor=0.0)
        cfg = ChainConfig(sweeps=90 + 40_000, burn_in=90, seed=8)
        est = estimate_conditional_contact(m, 0.0, config=cfg,
                                           region=single_site)
        # threshold 0 on one site inside a 3-site box: the event is >=1 contact
        oracle = exact_tiny(m, event_xi_above(0, 1.0), region=single_site)
        assert abs(combined_z(est.value, est.stderr,
                              oracle.value, oracle.error)) < 3

    def test_two_sites_vs_oracle(self):
        region = Region(LatticeSpec(d=1, N=1), [(0,), (1,)])
        m = PinnedMeasureSpec(spec=region.spec, a=1.0, b=1.0, floor=0.0)
        cfg = ChainConfig(sweeps=90 + 40_000, burn_in=90, seed=9)
        est = estimate_conditional_contact(m, 0.4, config=cfg, region=region)
        # eps * (2N+1)^d = 1.2, so the event is both sites in the window
        oracle = exact_tiny(m, event_xi_above(1.2, 1.0), region=region)
        assert abs(combined_z(est.value, est.stderr,
                              oracle.value, oracle.error)) < 3

    def test_value_in_unit_interval(self):
        m = PinnedMeasureSpec(spec=LatticeSpec(d=2, N=1), a=1.0, b=1.0,
                              floor=0.0)
        cfg = ChainConfig(sweeps=90 + 2000, burn_in=90, seed=10)
        est = estimate_conditional_contact(m, 0.05, config=cfg)
        assert 0.0 <= est.value <= 1.0
        assert est.stderr <= 0.5
