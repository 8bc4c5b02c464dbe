"""Core accounting: welfare, threshold quantities, size verifiers, serialization."""

import pytest

from feemarket import (
    Discount,
    InvalidScheduleError,
    Patience,
    Scenario,
    ScenarioError,
    Schedule,
    ScheduleEntry,
    Transaction,
    UnsupportedSensitivityError,
    check_avg_block_size,
    constant_slack,
    max_block_size,
    quantity_above,
    validate_schedule,
    welfare,
    welfare_via_threshold_integral,
)
from feemarket.core import (
    measured_slackness,
    scenario_from_jsonl,
    scenario_to_jsonl,
    schedule_from_json,
    schedule_to_json,
)

from oracles import brute_window_check


def scn_of(*txs: Transaction, B: float = 100.0) -> Scenario:
    return Scenario(capacities=(B,), transactions=list(txs))


def full(*pairs) -> Schedule:
    return Schedule([ScheduleEntry(tx=i, time=t, fraction=1.0) for i, t in pairs], integral=True)


class TestTransaction:
    def test_value_patient(self):
        t = Transaction(id=0, arrival=3, size=(10,), unit_value=2.0)
        assert t.value_at(3) == 2.0
        assert t.value_at(100) == 2.0

    def test_value_discount(self):
        t = Transaction(id=0, arrival=2, size=(10,), unit_value=8.0, sensitivity=Discount(rho=0.5))
        assert t.value_at(2) == 8.0
        assert t.value_at(3) == 4.0
        assert t.value_at(5) == 1.0

    def test_value_patience_window(self):
        t = Transaction(id=0, arrival=2, size=(10,), unit_value=8.0, sensitivity=Patience(window=3))
        assert t.value_at(5) == 8.0
        assert t.value_at(6) == 0.0

    def test_invariants(self):
        with pytest.raises(ValueError):
            Transaction(id=0, arrival=0, size=(1,), unit_value=1.0)
        with pytest.raises(ValueError):
            Transaction(id=0, arrival=1, size=(0, 0), unit_value=1.0)
        with pytest.raises(ValueError):
            Transaction(id=0, arrival=1, size=(1,), unit_value=-1.0)
        with pytest.raises(ValueError):
            Transaction(id=0, arrival=1, size=(1.5,), unit_value=1.0)  # gas units
        with pytest.raises(ValueError):
            Discount(rho=1.0)


class TestWelfare:
    def test_single_term(self):
        scn = scn_of(Transaction(id=0, arrival=1, size=(10,), unit_value=2.0))
        assert welfare(full((0, 1)), scn, 1) == 20.0

    def test_empty(self):
        scn = scn_of(Transaction(id=0, arrival=1, size=(10,), unit_value=2.0))
        assert welfare(Schedule([], integral=True), scn, 7) == 0.0

    def test_three_txs_brute_force(self):
        # independent oracle: sum of q*v over the set = 5*1 + 5*3 + 10*2 = 40
        txs = [
            Transaction(id=0, arrival=1, size=(5,), unit_value=1.0),
            Transaction(id=1, arrival=1, size=(5,), unit_value=3.0),
            Transaction(id=2, arrival=1, size=(10,), unit_value=2.0),
        ]
        expected = sum(t.q * t.unit_value for t in txs)
        scn = scn_of(*txs)
        assert welfare(full((0, 1), (1, 1), (2, 2)), scn, 2) == expected == 40.0

    def test_discount_credits_execution_time(self):
        scn = scn_of(
            Transaction(id=0, arrival=1, size=(4,), unit_value=1.0, sensitivity=Discount(rho=0.5))
        )
        assert welfare(full((0, 3)), scn, 3) == pytest.approx(4 * 0.25)

    def test_patience_expired_contributes_zero(self):
        scn = scn_of(
            Transaction(id=0, arrival=1, size=(4,), unit_value=1.0, sensitivity=Patience(window=2))
        )
        assert welfare(full((0, 4)), scn, 4) == 0.0

    def test_unknown_id(self):
        scn = scn_of(Transaction(id=0, arrival=1, size=(1,), unit_value=1.0))
        with pytest.raises(InvalidScheduleError):
            welfare(full((9, 1)), scn, 1)

    def test_window_cutoff(self):
        scn = scn_of(Transaction(id=0, arrival=1, size=(10,), unit_value=2.0))
        assert welfare(full((0, 5)), scn, 4) == 0.0


class TestQuantityAbove:
    def setup_method(self):
        self.scn = scn_of(
            Transaction(id=0, arrival=1, size=(5,), unit_value=1.0),
            Transaction(id=1, arrival=1, size=(7,), unit_value=3.0),
            Transaction(id=2, arrival=2, size=(11,), unit_value=2.0),
        )
        self.sched = full((0, 1), (1, 1), (2, 2))

    def test_zero_threshold_is_total(self):
        assert quantity_above(self.sched, self.scn, 0.0, (1, 2)) == 23.0

    def test_above_max_is_zero(self):
        assert quantity_above(self.sched, self.scn, 3.5, (1, 2)) == 0.0

    def test_mid_threshold_filter_and_sum(self):
        # only unit values >= 1.5 qualify: sizes 7 + 11
        assert quantity_above(self.sched, self.scn, 1.5, (1, 2)) == 18.0

    def test_inclusive(self):
        assert quantity_above(self.sched, self.scn, 2.0, (1, 2)) == 18.0

    def test_window(self):
        assert quantity_above(self.sched, self.scn, 0.0, (2, 2)) == 11.0


class TestThresholdIntegral:
    def test_single_step(self):
        scn = scn_of(Transaction(id=0, arrival=1, size=(10,), unit_value=2.0))
        assert welfare_via_threshold_integral(full((0, 1)), scn, 1) == 20.0

    def test_two_values_by_hand(self):
        # (3-1)*5 + 1*10 = 20, equal to welfare
        scn = scn_of(
            Transaction(id=0, arrival=1, size=(5,), unit_value=1.0),
            Transaction(id=1, arrival=1, size=(5,), unit_value=3.0),
        )
        s = full((0, 1), (1, 1))
        assert welfare_via_threshold_integral(s, scn, 1) == pytest.approx(20.0, rel=1e-12)
        assert welfare(s, scn, 1) == pytest.approx(20.0, rel=1e-12)

    def test_empty(self):
        scn = scn_of(Transaction(id=0, arrival=1, size=(1,), unit_value=1.0))
        assert welfare_via_threshold_integral(Schedule([]), scn, 3) == 0.0

    def test_rejects_time_sensitive(self):
        scn = scn_of(
            Transaction(id=0, arrival=1, size=(1,), unit_value=1.0, sensitivity=Discount(rho=0.1))
        )
        with pytest.raises(UnsupportedSensitivityError):
            welfare_via_threshold_integral(full((0, 1)), scn, 1)


class TestAvgBlockSize:
    def make(self, sizes, B=10.0):
        txs = []
        entries = []
        for t, q in enumerate(sizes, start=1):
            if q:
                txs.append(Transaction(id=t, arrival=t, size=(q,), unit_value=1.0))
                entries.append(ScheduleEntry(tx=t, time=t, fraction=1.0))
        return Schedule(entries, integral=True), scn_of(*txs, B=B)

    def test_alternating_double_blocks_pass_with_slack_one(self):
        sched, scn = self.make([20, 0, 20, 0])
        report = check_avg_block_size(sched, scn, 10.0, constant_slack(1))
        assert report.passed
        # oracle: enumerate all 10 windows of [1, 4]
        sizes = {1: 20.0, 3: 20.0}
        assert brute_window_check(sizes, 10.0, constant_slack(1), 1, 4) == []

    def test_single_double_block_fails_zero_slack(self):
        sched, scn = self.make([20])
        report = check_avg_block_size(sched, scn, 10.0, constant_slack(0))
        assert not report.passed
        assert (report.violations[0].start, report.violations[0].end) == (1, 1)

    def test_empty_passes(self):
        sched, scn = self.make([0, 0])
        scn.transactions.append(Transaction(id=99, arrival=1, size=(1,), unit_value=1.0))
        assert check_avg_block_size(sched, scn, 10.0, constant_slack(0)).passed

    def test_matches_window_oracle(self):
        sizes = [13, 0, 7, 20, 5, 0, 18]
        sched, scn = self.make(sizes)
        for slack in (0, 1, 2):
            mine = check_avg_block_size(sched, scn, 10.0, constant_slack(slack))
            oracle = brute_window_check(
                {t: float(q) for t, q in enumerate(sizes, 1)}, 10.0, constant_slack(slack), 1, 7
            )
            got = sorted((v.start, v.end) for v in mine.violations)
            assert got == sorted(oracle)

    def test_measured_slackness(self):
        sched, scn = self.make([20, 0, 20, 0])
        assert measured_slackness(sched, scn, 10.0) == pytest.approx(1.0)

    def test_zero_slack_iff_all_windows_within_target(self):
        # pass with zero slack exactly when every block and every window
        # average stays at or below the target
        sched, scn = self.make([10, 9, 10, 10])
        assert check_avg_block_size(sched, scn, 10.0, constant_slack(0)).passed
        sched, scn = self.make([10, 11, 9])  # one block over
        assert not check_avg_block_size(sched, scn, 10.0, constant_slack(0)).passed
        sched, scn = self.make([10, 10, 10, 10, 10, 1])
        assert check_avg_block_size(sched, scn, 10.0, constant_slack(0)).passed


class TestMaxBlockSize:
    def test_empty(self):
        scn = scn_of(Transaction(id=0, arrival=1, size=(1,), unit_value=1.0))
        assert max_block_size(Schedule([]), scn) == (0.0,)

    def test_max(self):
        scn = scn_of(
            Transaction(id=0, arrival=1, size=(10,), unit_value=1.0),
            Transaction(id=1, arrival=2, size=(20,), unit_value=1.0),
            Transaction(id=2, arrival=3, size=(5,), unit_value=1.0),
        )
        assert max_block_size(full((0, 1), (1, 2), (2, 3)), scn) == (20.0,)

    def test_multi_resource_componentwise(self):
        scn = Scenario(
            capacities=(10.0, 10.0),
            transactions=[
                Transaction(id=0, arrival=1, size=(3, 7), unit_value=1.0),
                Transaction(id=1, arrival=2, size=(8, 2), unit_value=1.0),
            ],
        )
        assert max_block_size(full((0, 1), (1, 2)), scn) == (8.0, 7.0)


class TestScheduleValidation:
    def test_before_arrival(self):
        scn = scn_of(Transaction(id=0, arrival=5, size=(1,), unit_value=1.0))
        with pytest.raises(InvalidScheduleError):
            validate_schedule(full((0, 4)), scn)

    def test_fraction_sum(self):
        scn = scn_of(Transaction(id=0, arrival=1, size=(1,), unit_value=1.0))
        s = Schedule(
            [ScheduleEntry(0, 1, 0.7), ScheduleEntry(0, 2, 0.7)], integral=False
        )
        with pytest.raises(InvalidScheduleError):
            validate_schedule(s, scn)

    def test_integral_flag(self):
        scn = scn_of(Transaction(id=0, arrival=1, size=(1,), unit_value=1.0))
        s = Schedule([ScheduleEntry(0, 1, 0.5)], integral=True)
        with pytest.raises(InvalidScheduleError):
            validate_schedule(s, scn)

    def test_ok(self):
        scn = scn_of(Transaction(id=0, arrival=1, size=(1,), unit_value=1.0))
        validate_schedule(
            Schedule([ScheduleEntry(0, 1, 0.5), ScheduleEntry(0, 3, 0.5)]), scn
        )


class TestSerialization:
    def test_scenario_roundtrip(self):
        scn = Scenario(
            capacities=(100.0,),
            seed=42,
            transactions=[
                Transaction(id=0, arrival=1, size=(5,), unit_value=1.5),
                Transaction(id=1, arrival=2, size=(7,), unit_value=2.5, sensitivity=Discount(rho=0.25)),
                Transaction(id=2, arrival=2, size=(9,), unit_value=0.5, sensitivity=Patience(window=4)),
            ],
        )
        back = scenario_from_jsonl(scenario_to_jsonl(scn))
        assert back.capacities == scn.capacities
        assert back.seed == 42
        assert back.transactions == sorted(scn.transactions, key=lambda t: (t.arrival, t.id))

    def test_scenario_bad_line_number(self):
        text = scenario_to_jsonl(scn_of(Transaction(id=0, arrival=1, size=(1,), unit_value=1.0)))
        broken = text.splitlines()
        broken[1] = "{not json"
        with pytest.raises(ScenarioError, match="line 2"):
            scenario_from_jsonl("\n".join(broken))

    def test_missing_header(self):
        with pytest.raises(ScenarioError):
            scenario_from_jsonl('{"t": 1, "id": 0, "q": [1], "v": 1.0}\n')

    def test_schedule_roundtrip(self):
        s = Schedule([ScheduleEntry(3, 1, 0.25), ScheduleEntry(4, 2, 1.0)], integral=False)
        assert schedule_from_json(schedule_to_json(s)) == s
