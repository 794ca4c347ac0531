"""Target functions and their declared continuity moduli."""

import pytest
from gmpy2 import mpq

from nestnet import ValidationError, ModulusSpec, parse_target, rat
from nestnet.targets import (
    modulus_spot_check,
    target_abs_shift,
    target_const,
    target_hinge2,
)


class TestModulusSpec:
    """One-sided rational envelopes for omega."""

    def test_lipschitz_exact_alpha_one(self):
        m = ModulusSpec.lipschitz(rat(3, 2))
        assert m.upper(rat(1, 4)) == rat(3, 8)
        assert m.lower(rat(1, 4)) == rat(3, 8)
        assert m.upper(0) == 0

    def test_holder_envelopes_bracket(self):
        m = ModulusSpec.lipschitz(rat(1), alpha=rat(1, 2))
        t = rat(1, 9)
        assert m.lower(t) <= rat(1, 3) <= m.upper(t)
        assert m.upper(t) - m.lower(t) < rat(1, 1 << 60)

    def test_alpha_range_checked(self):
        with pytest.raises(ValidationError):
            ModulusSpec.lipschitz(rat(1), alpha=rat(3, 2))

    def test_table_modulus(self):
        m = ModulusSpec.from_table([(0, 0), (rat(1, 4), rat(1, 10)),
                                    (rat(1), rat(1, 2))])
        assert m.upper(rat(1, 8)) == rat(1, 10)
        assert m.lower(rat(1, 2)) == rat(1, 10)
        assert not m.is_zero

    def test_table_must_start_at_origin(self):
        with pytest.raises(ValidationError):
            ModulusSpec.from_table([(rat(1, 4), rat(1, 10))])

    def test_table_coverage_enforced(self):
        m = ModulusSpec.from_table([(0, 0), (rat(1, 2), rat(1, 4))])
        with pytest.raises(ValidationError):
            m.upper(rat(2))

    def test_zero_modulus(self):
        assert ModulusSpec.lipschitz(0).is_zero


class TestBuiltinTargets:
    """The CLI-facing target family."""

    def test_abs_shift_values(self):
        f = target_abs_shift(rat(1, 3))
        assert f((rat(1, 3),)) == 0
        assert f((rat(5, 6),)) == rat(1, 2)
        assert f.modulus.upper(rat(1, 4)) == rat(1, 4)

    def test_hinge2_values(self):
        g = target_hinge2()
        assert g((rat(1, 4), rat(3, 4))) == rat(1, 2)
        assert g((rat(1, 2), rat(1, 2))) == 0

    def test_const_has_zero_modulus(self):
        c = target_const(rat(2, 7))
        assert c((rat(1, 3),)) == rat(2, 7)
        assert c.modulus.is_zero

    def test_dimension_checked(self):
        with pytest.raises(ValidationError):
            target_hinge2()((rat(1, 2),))

    def test_float_coordinates_rejected(self):
        from nestnet import BackendMismatchError

        with pytest.raises(BackendMismatchError):
            target_abs_shift(rat(0))((0.5,))

    def test_moduli_are_honest(self):
        """Sampled increments never exceed the declared envelope."""
        for f in (target_abs_shift(rat(1, 3)), target_hinge2(),
                  target_const(rat(1, 2))):
            modulus_spot_check(f)


class TestParseTarget:
    """Text specs used by command-line flags."""

    def test_forms(self):
        assert parse_target("abs-shift:1/3", 1).name == "abs-shift:1/3"
        assert parse_target("hinge2", 2).dim == 2
        assert parse_target("const:0", 1)((rat(1, 2),)) == 0

    def test_dim_mismatch(self):
        with pytest.raises(ValidationError):
            parse_target("hinge2", 1)

    def test_unknown_name(self):
        with pytest.raises(ValidationError):
            parse_target("witch-of-agnesi", 1)

    def test_decimal_shift_rejected(self):
        with pytest.raises(ValueError):
            parse_target("abs-shift:0.25", 1)
