import pytest

from elrp.instance import (DomainError, ParseError, ValidationError,
                           capital_recovery_factor, instance_from_dict,
                           instance_to_dict, load_instance, save_instance,
                           with_overrides)


class TestCapitalRecoveryFactor:
    def test_hand_computed_values(self):
        # frozen from direct evaluation of r(1+r)^Y/((1+r)^Y-1)
        assert capital_recovery_factor(0.05, 10) == pytest.approx(0.1295046, abs=5e-8)
        assert capital_recovery_factor(0.08, 15) == pytest.approx(0.1168295, abs=5e-8)

    def test_single_year_is_one_plus_rate(self):
        for r in (0.01, 0.05, 0.3, 0.9):
            assert capital_recovery_factor(r, 1) == pytest.approx(1.0 + r, rel=1e-12)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            capital_recovery_factor(0.0, 10)
        with pytest.raises(DomainError):
            capital_recovery_factor(-0.1, 10)
        with pytest.raises(DomainError):
            capital_recovery_factor(0.05, 0)

    def test_monotone_in_rate_and_years(self):
        # strictly increasing in rate, strictly decreasing in years
        rates = [0.01 + 0.024 * i for i in range(20)]
        years = list(range(1, 31))
        for y in (1, 5, 12, 30):
            vals = [capital_recovery_factor(r, y) for r in rates]
            assert all(a < b for a, b in zip(vals, vals[1:]))
        for r in (0.02, 0.05, 0.2):
            vals = [capital_recovery_factor(r, y) for y in years]
            assert all(a > b for a, b in zip(vals, vals[1:]))


class TestLoading:
    def test_bundled_small_base_shape(self, small_base):
        assert len(small_base.customers) == 5
        assert len(small_base.stations) == 2
        assert len(small_base.vehicle_types) == 2
        assert small_base.depot == "D0"
        assert small_base.sink == "D0'"

    def test_bundled_toy_shape(self, toy):
        assert len(toy.customers) == 2
        assert len(toy.stations) == 1
        assert toy.vehicle(1).battery_capacity / toy.vehicle(1).consumption_rate == 4.0

    def test_window_inversion_rejected(self, toy):
        doc = instance_to_dict(toy)
        doc["customers"][0]["window_early"] = 5
        doc["customers"][0]["window_late"] = 2
        with pytest.raises(ValidationError) as err:
            instance_from_dict(doc)
        assert "window" in str(err.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_instance(tmp_path / "nope.json")

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ParseError):
            load_instance(p)

    def test_wrong_schema(self, toy):
        doc = instance_to_dict(toy)
        doc["schema"] = 99
        with pytest.raises(ParseError):
            instance_from_dict(doc)

    def test_unknown_edge_node(self, toy):
        doc = instance_to_dict(toy)
        doc["edges"].append({"from": "D0", "to": "ZZ", "distance": 1.0, "travel_time": 1})
        with pytest.raises(ValidationError):
            instance_from_dict(doc)

    def test_unreachable_customer(self, toy):
        doc = instance_to_dict(toy)
        doc["customers"].append({"id": "C9", "demand": 1.0, "window_early": 0,
                                 "window_late": 5, "service_time": 0})
        with pytest.raises(ValidationError) as err:
            instance_from_dict(doc)
        assert "reachable" in str(err.value)

    def test_price_series_length_checked(self, toy):
        doc = instance_to_dict(toy)
        doc["stations"][0]["electricity_price"] = [0.1, 0.1]
        with pytest.raises(ValidationError):
            instance_from_dict(doc)

    def test_roundtrip_identity(self, tmp_path, small_base, toy):
        for inst in (small_base, toy):
            p = tmp_path / f"{inst.name}.json"
            save_instance(inst, p)
            again = load_instance(p)
            assert again == inst
            # and a second trip is byte-stable
            p2 = tmp_path / "again.json"
            save_instance(again, p2)
            assert p.read_text() == p2.read_text()


class TestOverrides:
    def test_fee_override_both_stations(self, small_base):
        inst = with_overrides(small_base, service_fee=0.125)
        assert all(f == 0.125 for f in inst.economics.service_fee.values())
        assert inst.customers == small_base.customers

    def test_window_tightening(self, small_base):
        inst = with_overrides(small_base, windows={"B": (1, 4), "C": (6, 9), "D": (2, 3)})
        assert (inst.customer("B").window_early, inst.customer("B").window_late) == (1, 4)
        assert (inst.customer("C").window_early, inst.customer("C").window_late) == (6, 9)
        assert (inst.customer("D").window_early, inst.customer("D").window_late) == (2, 3)
        assert inst.customer("A") == small_base.customer("A")

    def test_empty_patch_is_identity(self, small_base):
        assert with_overrides(small_base) == small_base

    def test_base_not_mutated(self, small_base):
        before = instance_to_dict(small_base)
        with_overrides(small_base, service_fee=0.42, rated_power={"F2": 20.0})
        assert instance_to_dict(small_base) == before

    def test_invalid_patch_rejected(self, small_base):
        with pytest.raises(ValidationError):
            with_overrides(small_base, windows={"B": (5, 2)})
        with pytest.raises(ValidationError):
            with_overrides(small_base, rated_power={"ZZ": 5.0})
        with pytest.raises(ValidationError):
            with_overrides(small_base, service_fee=-0.1)

    def test_rate_override(self, small_tw):
        inst = with_overrides(small_tw, rated_power={"F2": 20.0})
        assert inst.station("F2").rated_power == 20.0
        assert inst.station("F1").rated_power == small_tw.station("F1").rated_power
