import pytest

from dvlr import harness as H
from dvlr import search as S
from dvlr.errors import ConfigError
from dvlr.notation import format_schedule_spec, parse_schedule_spec

BASE = "model=cifar_cnn\nepochs=1\nname=cnn\n"


def scoring_runner(score):
    """Runner that skips training and scores each spec with ``score(schedule)``."""
    def run(spec):
        acc = score(spec.schedule)
        trials = [H.TrialResult(k, k, acc, acc, acc) for k in range(spec.trials)]
        return H.ExperimentResult(spec.name, trials, spec)
    return run


def by_rate_sum(cfg):
    return 1000 * (cfg.correct.initial + cfg.incorrect.initial) + (cfg.correct.threshold_lo or 0) / 1000


class TestParsePlan:
    def test_bare_rates(self):
        plan = S.parse_plan(BASE + "candidate=0.01\ncandidate=0.03\n", "ss_sweep")
        assert [c.correct.initial for c in plan.candidates] == [0.01, 0.03]
        assert plan.trials == 3

    def test_stage_prefixed_lines(self):
        text = BASE + "ss_sweep.candidate=0.01\nsd_grid.candidate=0.05,0.01\n"
        plan = S.parse_plan(text, "sd_grid")
        assert plan.candidates == [parse_schedule_spec("etaC=0.05, etaI=0.01")]

    def test_specs_names_and_trials(self):
        plan = S.parse_plan(BASE + "trials=2\ntie_rate=correct\ncandidate=0.01\ncandidate=0.02\n", "ss_sweep")
        specs = plan.specs()
        assert [s.name for s in specs] == ["cnn_ss_sweep_00", "cnn_ss_sweep_01"]
        assert all(s.trials == 2 and s.schedule.tie_rate == "correct" for s in specs)

    def test_finals_use_final_trials(self):
        plan = S.SearchPlan("finals", [parse_schedule_spec("etaS=0.01")], {"model": "mlp"})
        assert plan.specs()[0].trials == 10

    @pytest.mark.parametrize("stage,line", [("ss_sweep", "0.05,0.01"), ("sd_grid", "etaC=0.05 VT1-2 inc, etaI=0.01"),
                                            ("one_variable", "etaC=0.05, etaI=0.01")])
    def test_wrong_kind(self, stage, line):
        with pytest.raises(ConfigError):
            S.parse_plan(BASE + f"candidate={line}\n", stage)

    def test_no_candidates(self):
        with pytest.raises(ConfigError):
            S.parse_plan(BASE, "ss_sweep")

    def test_derived_stage_without_upstream(self):
        with pytest.raises(ConfigError):
            S.parse_plan(BASE, "combine", {})

    def test_bad_base_key(self):
        with pytest.raises(ConfigError):
            S.parse_plan(BASE + "colour=red\ncandidate=0.01\n", "ss_sweep")


class TestStages:
    def test_ss_sweep_ranking(self):
        plan = S.parse_plan(BASE + "".join(f"candidate={r}\n" for r in (0.001, 0.03, 0.01)), "ss_sweep")
        res = S.run_stage(plan, runner=scoring_runner(by_rate_sum))
        assert [c.correct.initial for c, _ in res.ranked()] == [0.03, 0.01, 0.001]

    def test_ties_keep_declaration_order(self):
        res = S.SearchResult("ss_sweep", [parse_schedule_spec(f"etaS={r}") for r in (0.1, 0.2, 0.3)],
                             [5.0, 7.0, 5.0])
        assert res.ranking() == [1, 0, 2]

    def test_combine_is_a_cross_product(self):
        cs = [f"etaC=0.05 VT{lo}-{lo + 10} 0.01% inc, etaI=0.01" for lo in (10, 20, 30)]
        is_ = [f"etaC=0.05, etaI=0.01 VT{lo}-{lo + 5} 0.01% inc" for lo in (100, 200, 300, 400)]
        one = S.SearchResult("one_variable", [parse_schedule_spec(t) for t in cs + is_], [1.0] * 7)
        plan = S.parse_plan(BASE, "combine", {"one_variable": one})
        assert len(plan.candidates) == 12
        calls = []
        S.run_stage(plan, runner=lambda spec: calls.append(spec) or scoring_runner(by_rate_sum)(spec))
        assert len(calls) == 12
        assert all(c.correct.is_variable and c.incorrect.is_variable for c in plan.candidates)

    def test_combine_top_k(self):
        cs = [f"etaC=0.05 VT{lo}-{lo} inc, etaI=0.01" for lo in range(1, 6)]
        is_ = [f"etaC=0.05, etaI=0.01 VT{lo}-{lo} inc" for lo in range(1, 11)]
        one = S.SearchResult("one_variable", [parse_schedule_spec(t) for t in cs + is_],
                             list(range(15)))
        plan = S.parse_plan(BASE, "combine", {"one_variable": one})
        assert len(plan.candidates) == 3 * 8
        # best eta_C schedule (highest mean) comes first
        assert plan.candidates[0].correct.threshold_lo == 5

    def test_directions(self):
        combo = parse_schedule_spec("etaC=0.05 VT10-20 inc, etaI=0.01 VT30-40 inc")
        up = {"combine": S.SearchResult("combine", [combo], [1.0])}
        plan = S.parse_plan(BASE, "directions", up)
        got = {(c.correct.direction, c.incorrect.direction) for c in plan.candidates}
        assert len(plan.candidates) == 4 and len(got) == 4

    def test_finals(self):
        up = {
            "ss_sweep": S.SearchResult("ss_sweep", [parse_schedule_spec("etaS=0.01"),
                                                    parse_schedule_spec("etaS=0.03")], [50.0, 60.0]),
            "sd_grid": S.SearchResult("sd_grid", [parse_schedule_spec("etaC=0.05, etaI=0.01")], [61.0]),
            "one_variable": S.SearchResult("one_variable", [
                parse_schedule_spec(f"etaC=0.05, etaI=0.01 VT{lo}-{lo} inc") for lo in range(1, 9)],
                [60.0 + lo for lo in range(1, 9)]),
        }
        plan = S.parse_plan(BASE, "finals", up)
        assert plan.candidates[0] == parse_schedule_spec("etaS=0.03")
        assert plan.candidates[1] == parse_schedule_spec("etaC=0.05, etaI=0.01")
        assert [c.incorrect.threshold_lo for c in plan.candidates[2:]] == [8, 7, 6, 5, 4]


class TestReport:
    def test_ten_rows_and_reload(self, tmp_path):
        rates = [0.0001, 0.0005, 0.001, 0.005, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06]
        plan = S.parse_plan(BASE + "".join(f"candidate={r}\n" for r in rates), "ss_sweep")
        res = S.run_stage(plan, runner=scoring_runner(lambda c: -abs(c.correct.initial - 0.03)))
        (path,) = S.emit_search_report({"ss_sweep": res}, tmp_path)
        lines = path.read_text().splitlines()
        assert lines[0] == "method,test_avg" and len(lines) == 11
        back = S.read_stage_csv(path)
        assert back.ranking() == res.ranking() and back.candidates == res.candidates

    def test_method_strings_round_trip(self, tmp_path):
        cfg = parse_schedule_spec("etaC=0.05 VT5975-6025 0.01% dec, etaI=0.01 VT395-405 0.01% inc")
        res = S.SearchResult("directions", [cfg], [1.0])
        S.write_stage_csv(res, tmp_path / "stage_directions.csv")
        assert S.load_upstream(tmp_path)["directions"].candidates == [cfg]
        assert format_schedule_spec(cfg) in (tmp_path / "stage_directions.csv").read_text()

    def test_downstream_from_persisted_upstream_is_identical(self, tmp_path):
        cs = [f"etaC=0.05 VT{lo}-{lo + 3} inc, etaI=0.01" for lo in (5, 9, 13, 17)]
        is_ = [f"etaC=0.05, etaI=0.01 VT{lo}-{lo + 3} dec" for lo in range(20, 31)]
        one = S.SearchResult("one_variable", [parse_schedule_spec(t) for t in cs + is_],
                             [0.1 * ((7 * k) % 15) for k in range(15)])
        S.emit_search_report([one], tmp_path)
        live = S.derive_candidates("combine", {"one_variable": one})
        assert S.derive_candidates("combine", S.load_upstream(tmp_path)) == live

    def test_empty(self, tmp_path):
        with pytest.raises(ConfigError):
            S.emit_search_report([], tmp_path)
