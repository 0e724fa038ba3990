import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from monoguide.errors import DegenerateHeight, UnknownClass
from monoguide.geometry import Box2D, CameraModel, project, theta_to_alpha
from monoguide.guidance import (
    DEFAULT_PRIORS,
    Detection2D,
    GuidanceGenerator,
    SizePrior,
    bottom_lambda,
    estimate_location,
    generate_guidance,
    generate_guidances,
    midpoints,
)
from monoguide.synth import SceneSpec, exact_lambda_box, generate_scene, perfect_detections

from conftest import random_box

CAR = DEFAULT_PRIORS["Car"]


def test_default_car_prior():
    assert (CAR.w_bar, CAR.h_bar, CAR.l_bar, CAR.lam) == (1.62, 1.53, 3.89, 0.07)


def test_prior_validation():
    with pytest.raises(ValueError):
        SizePrior("Car", 1.0, 1.0, 1.0, lam=0.5)
    with pytest.raises(ValueError):
        SizePrior("Car", -1.0, 1.0, 1.0)


def test_midpoints():
    top, bottom = midpoints(Box2D(100.0, 200.0, 40.0, 60.0), 0.1)
    np.testing.assert_allclose(top, [100.0, 170.0, 1.0])
    np.testing.assert_allclose(bottom, [100.0, 224.0, 1.0])


def test_hand_computed_location():
    # zero-translation camera: depth = h * f / pixel height between the two midpoints
    cam = CameraModel.from_intrinsics(700.0, 700.0, 600.0, 180.0)
    prior = SizePrior("Car", 1.6, 1.5, 4.0, lam=0.0)
    box = Box2D(670.0, 135.0, 80.0, 70.0)  # top edge v=100, bottom v=170
    x, y, z, d, nb = estimate_location(cam, box, prior)
    assert d == pytest.approx(1.5 * 700.0 / 70.0)
    assert z == pytest.approx(d)
    assert x == pytest.approx((670.0 - 600.0) / 700.0 * d)
    assert y == pytest.approx((170.0 - 180.0) / 700.0 * d)
    assert nb == pytest.approx(((670.0 - 600.0) / 700.0, (170.0 - 180.0) / 700.0))


def test_translation_column_is_removed():
    t = np.array([0.06, -0.01, 0.003])
    cam0 = CameraModel.from_intrinsics(700.0, 700.0, 600.0, 180.0)
    cam1 = CameraModel.from_intrinsics(700.0, 700.0, 600.0, 180.0, t)
    box = Box2D(670.0, 135.0, 80.0, 70.0)
    a = np.array(estimate_location(cam0, box, CAR)[:3])
    b = np.array(estimate_location(cam1, box, CAR)[:3])
    np.testing.assert_allclose(b, a - t, atol=1e-12)


def test_guidance_top_projects_to_top_midpoint(camera, rng):
    for _ in range(20):
        box2d = Box2D(rng.uniform(200, 1000), rng.uniform(150, 220), rng.uniform(30, 200), rng.uniform(20, 150))
        g = generate_guidance(camera, Detection2D(box2d, rng.uniform(-3, 3)), DEFAULT_PRIORS)
        b = g.box
        top = project(camera, b.bottom_center - [0, b.h, 0])
        bottom = project(camera, b.bottom_center)
        top_mid, bottom_mid = midpoints(box2d, CAR.lam)
        np.testing.assert_allclose(top, top_mid[:2], atol=1e-8)
        np.testing.assert_allclose(bottom, bottom_mid[:2], atol=1e-8)
        assert (b.w, b.h, b.l) == (CAR.w_bar, CAR.h_bar, CAR.l_bar)
        assert theta_to_alpha(b.theta, b.x, b.z) == pytest.approx(g.source.alpha)


@settings(max_examples=60, deadline=None)
@given(st.floats(10, 300), st.floats(1.01, 3.0))
def test_depth_decreases_with_box_height(h2d, factor):
    cam = CameraModel.from_intrinsics(721.5, 721.5, 609.6, 172.9, (0.06, 0.0, 0.003))
    near = estimate_location(cam, Box2D(600, 180, 50, h2d * factor), CAR)[3]
    far = estimate_location(cam, Box2D(600, 180, 50, h2d), CAR)[3]
    assert near < far
    assert far / near == pytest.approx(factor, rel=1e-9)


def test_degenerate_height(camera):
    with pytest.raises(DegenerateHeight):
        generate_guidance(camera, Detection2D(Box2D(600, 180, 50, 1e-4), 0.0), DEFAULT_PRIORS)


def test_unknown_class(camera):
    with pytest.raises(UnknownClass):
        generate_guidance(camera, Detection2D(Box2D(600, 180, 50, 40), 0.0, "Tram"), DEFAULT_PRIORS)


def test_exact_lambda_box_has_that_lambda(camera, rng):
    for lam in (0.0, 0.07, 0.2):
        b = random_box(rng)
        assert bottom_lambda(camera, b, exact_lambda_box(camera, b, lam)) == pytest.approx(lam, abs=1e-12)


def test_pipeline_closure_exact_lambda(camera):
    spec = SceneSpec(seed=7, count=8)
    for frame in range(5):
        scene = generate_scene(spec, frame)
        dets = perfect_detections(scene, camera, "exact_lambda", CAR.lam)
        for gt, g in zip(scene, generate_guidances(camera, dets, DEFAULT_PRIORS)):
            d = gt.box3d.to_array() - g.box.to_array()
            d[6] = math.remainder(d[6], 2 * math.pi)
            assert np.max(np.abs(d)) < 1e-6


def test_generator_estimator_api(camera, rng):
    spec = SceneSpec(seed=1, count=6, size_mode="gaussian", size_std=(0.1, 0.1, 0.3))
    scene = [g for k in range(10) for g in generate_scene(spec, k)]
    dets = perfect_detections(scene, camera, "exact_lambda", 0.05)
    X = np.array([[d.box.cx, d.box.cy, d.box.w2d, d.box.h2d, d.alpha] for d in dets])
    y = np.array([g.box3d.to_array() for g in scene])

    gen = GuidanceGenerator(camera=camera)
    assert gen.get_params()["lam"] is None
    out = gen.fit(X, y).transform(X)
    assert out.shape == (len(X), 7)
    assert gen.prior_.lam == pytest.approx(0.05)
    assert gen.prior_.w_bar == pytest.approx(y[:, 0].mean())

    fixed = clone(gen).set_params(lam=0.07, w_bar=1.62).fit(X, y)
    assert fixed.prior_.lam == 0.07 and fixed.prior_.w_bar == 1.62

    default = GuidanceGenerator(camera=camera).fit(X)
    assert default.prior_ == CAR
    np.testing.assert_allclose(default.depths(X[:3]),
                               [generate_guidance(camera, d, DEFAULT_PRIORS).depth for d in dets[:3]])
    assert GuidanceGenerator(camera=camera).fit(X).transform(X[:0]).shape == (0, 7)


def test_generator_input_validation(camera):
    gen = GuidanceGenerator(camera=camera).fit(np.zeros((0, 5)))
    with pytest.raises(ValueError):
        gen.transform(np.array([[600, 180, -5, 40, 0.0]]))
    with pytest.raises(ValueError):
        gen.transform(np.array([[600, 180, 5, 40]]))
    with pytest.raises(ValueError):
        gen.transform(np.array([[600, 180, 5, 40, 0.0, 1.5]]))
