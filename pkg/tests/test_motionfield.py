import math

import numpy as np
import pytest

from crowdanom.core import BoundingBox, Frame, GeometryError, InputError
from crowdanom.motionfield import (
    FlowField,
    ModulatedFlowField,
    SaliencyMap,
    compute_flow,
    compute_saliency,
    compute_tau,
    modulate,
    modulation_factor,
    motion_energy,
)


def rect_frame(x0, h=64, w=64, bg=50, value=200, index=0):
    img = np.full((h, w), bg, dtype=np.uint8)
    img[20:32, x0 : x0 + 20] = value
    return Frame(data=img, index=index)


class TestComputeFlow:
    def test_identical_frames_zero_flow(self):
        f = rect_frame(10)
        flow = compute_flow(f, f)
        assert np.abs(flow.u).max() == 0.0
        assert np.abs(flow.v).max() == 0.0

    def test_recovers_unit_rightward_shift(self):
        flow = compute_flow(rect_frame(10), rect_frame(11, index=1))
        inner = (slice(22, 30), slice(13, 29))
        assert 0.7 <= flow.u[inner].mean() <= 1.3
        assert abs(flow.v[inner].mean()) <= 0.3

    def test_leftward_shift_flips_sign(self):
        flow = compute_flow(rect_frame(11), rect_frame(10, index=1))
        inner = (slice(22, 30), slice(13, 29))
        assert flow.u[inner].mean() < -0.5

    def test_magnitude_property(self):
        flow = FlowField(u=np.full((4, 4), 3.0), v=np.full((4, 4), 4.0))
        np.testing.assert_allclose(flow.magnitude, 5.0)

    def test_dims_must_match(self):
        a = Frame(data=np.zeros((32, 32), dtype=np.uint8))
        b = Frame(data=np.zeros((32, 48), dtype=np.uint8))
        with pytest.raises(InputError):
            compute_flow(a, b)

    def test_rejects_bad_iterations(self):
        f = rect_frame(10)
        with pytest.raises(InputError):
            compute_flow(f, f, iterations=0)

    def test_mismatched_uv_rejected(self):
        with pytest.raises(InputError):
            FlowField(u=np.zeros((4, 4)), v=np.zeros((4, 5)))


class TestComputeSaliency:
    def test_static_video_all_zero(self):
        f = rect_frame(10)
        sal = compute_saliency([f, f, f])
        assert (sal.values == 0).all()

    def test_central_difference_skips_middle_frame(self):
        # saliency over 3 frames reads only the first and last
        a = rect_frame(10, index=0)
        b = rect_frame(25, index=1)
        sal = compute_saliency([a, b, Frame(data=a.data.copy(), index=2)])
        assert (sal.values == 0).all()

    def test_two_frame_fallback(self):
        sal = compute_saliency([rect_frame(10), rect_frame(14, index=1)])
        assert sal.values.max() == 1.0
        assert sal.values.min() == 0.0

    def test_moving_object_peak_on_trajectory(self):
        frames = [rect_frame(10 + t, index=t) for t in range(3)]
        sal = compute_saliency(frames)
        r, c = np.unravel_index(np.argmax(sal.values), sal.values.shape)
        assert 17 <= r <= 35  # rows 20:32 dilated by 3
        assert 7 <= c <= 35  # leading/trailing edges of the 2-frame sweep

    def test_range_normalized(self):
        frames = [rect_frame(10 + 2 * t, index=t) for t in range(3)]
        sal = compute_saliency(frames)
        assert sal.values.min() == 0.0
        assert sal.values.max() == 1.0

    def test_needs_two_frames(self):
        with pytest.raises(InputError):
            compute_saliency([rect_frame(10)])


class TestComputeTau:
    def test_uniform_distribution(self):
        rng = np.random.default_rng(31)
        sal = SaliencyMap(values=rng.uniform(0, 1, (256, 256)))
        assert compute_tau(sal, 0.7) == pytest.approx(0.7, abs=0.01)

    def test_all_zero_map(self):
        sal = SaliencyMap(values=np.zeros((16, 16)))
        assert compute_tau(sal, 0.7) == 0.0

    def test_bimodal_exact_edge(self):
        # 60% mass at 0.2, 40% at 0.9: the largest 1/256 edge below 0.9
        values = np.concatenate([np.full(600, 0.2), np.full(400, 0.9)])
        sal = SaliencyMap(values=values.reshape(25, 40))
        assert compute_tau(sal, 0.7) == 230.0 / 256.0

    def test_alpha_validation(self):
        sal = SaliencyMap(values=np.zeros((4, 4)))
        with pytest.raises(ValueError):
            compute_tau(sal, 0.0)
        with pytest.raises(ValueError):
            compute_tau(sal, 1.0)


class TestModulationFactor:
    def test_endpoints(self):
        tau = 0.5
        assert modulation_factor(0.0, tau) == pytest.approx(math.exp(-0.5))
        assert modulation_factor(tau, tau) == pytest.approx(1.0)
        assert modulation_factor(1.0, tau) == pytest.approx(math.exp(0.5))

    def test_jump_at_threshold(self):
        tau = 0.5
        below = modulation_factor(tau, tau)
        above = modulation_factor(tau + 1e-9, tau)
        assert above > below * 1.2  # the discontinuity is intentional

    def test_monotone_per_branch(self):
        tau = 0.4
        s = np.linspace(0, 1, 501)
        f = modulation_factor(s, tau)
        below = s <= tau
        assert (np.diff(f[below]) >= 0).all()
        assert (np.diff(f[~below]) >= 0).all()

    def test_bounds_on_unit_interval(self):
        rng = np.random.default_rng(32)
        for _ in range(20):
            tau = rng.uniform(1e-6, 1.0)
            s = rng.uniform(0, 1, 100)
            f = modulation_factor(s, tau)
            assert f.min() >= math.exp(-0.5) - 1e-12
            assert f.max() <= math.exp(0.5) + 1e-12

    def test_zero_tau_degenerate(self):
        f = modulation_factor(np.array([0.0, 0.3, 1.0]), 0.0)
        assert f[0] == 1.0
        assert f[1] == pytest.approx(math.exp(0.15))
        assert f[2] == pytest.approx(math.exp(0.5))


class TestModulate:
    def test_scales_preserving_direction(self):
        u = np.full((8, 8), 2.0)
        v = np.full((8, 8), -1.0)
        sal = SaliencyMap(values=np.full((8, 8), 0.25))
        mof = modulate(FlowField(u=u, v=v), sal, tau=0.5)
        f = math.exp((0.25 - 0.5) / 1.0)
        np.testing.assert_allclose(mof.u, 2.0 * f)
        np.testing.assert_allclose(mof.v, -1.0 * f)
        np.testing.assert_allclose(mof.u / mof.v, -2.0)

    def test_dims_must_match(self):
        with pytest.raises(InputError):
            modulate(
                FlowField(u=np.zeros((4, 4)), v=np.zeros((4, 4))),
                SaliencyMap(values=np.zeros((4, 5))),
                tau=0.5,
            )


class TestMotionEnergy:
    def _mof(self, u, v):
        return ModulatedFlowField(u=u, v=v, tau=0.5)

    def test_zero_flow(self):
        mof = self._mof(np.zeros((8, 8)), np.zeros((8, 8)))
        assert motion_energy(mof, BoundingBox(0, 0, 8, 8)) == (0.0, 0.0, 0.0, 0.0)

    def test_constant_three_four(self):
        mof = self._mof(np.full((8, 8), 3.0), np.full((8, 8), 4.0))
        assert motion_energy(mof, BoundingBox(0, 0, 8, 8)) == (5.0, 5.0, 5.0, 0.0)

    def test_half_zero_half_two(self):
        u = np.zeros((4, 4))
        u[:, 2:] = 2.0
        mof = self._mof(u, np.zeros((4, 4)))
        assert motion_energy(mof, BoundingBox(0, 0, 4, 4)) == (2.0, 0.0, 1.0, 1.0)

    def test_box_outside_field(self):
        mof = self._mof(np.zeros((8, 8)), np.zeros((8, 8)))
        with pytest.raises(GeometryError):
            motion_energy(mof, BoundingBox(4, 4, 8, 8))
