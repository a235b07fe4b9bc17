"""Smoke test for the `aos` extension module.

Build and install first:
    maturin build --release -m crates/py/Cargo.toml && pip install target/wheels/aos-*.whl
"""

import json
import tempfile

import aos


def main():
    rig = aos.Rig.paper(resolution=128)
    assert rig.count == 10 and abs(rig.aperture_m - 9.0) < 1e-9

    scene = aos.Scene(seed=3, density=0.85)
    assert abs(scene.realized_density - 0.85) < 0.02
    frame = aos.render_frame(scene, rig, 0, 0.0)
    assert len(frame.images) == 10
    assert len(frame.centroids) == 2

    integral = aos.integrate(frame, rig).quantized()
    field = aos.rx_scores(integral.image, integral.valid_mask())
    mask, threshold = field.threshold(0.999)
    print(f"integral {integral.image}, threshold {threshold:.3f}, {mask}")
    confidence, best, precision, covered = field.optimize(frame.labels)
    print(f"optimized confidence {confidence}, Pi {precision}, targets covered {covered}")

    report = json.loads(aos.evaluate_frame(frame, integral))
    print(f"PAs {report['pas']:.1f}  Pi {report['pi'].get('percent')}")
    print(f"covariance shrink {aos.covariance_shrink(frame, integral):.2f}")

    tracker = aos.Tracker(gate_px=8.0)
    for n in range(6):
        f = aos.render_frame(scene, rig, n, n / 30.0)
        i = aos.integrate(f, rig).quantized()
        m, _ = aos.rx_scores(i.image, i.valid_mask()).threshold(confidence)
        tracker.step(m)
    csv = tracker.finish()
    assert csv.startswith("frame,track_id,x,y,area,status")
    print(csv.strip().splitlines()[:3])

    flat = aos.Image.filled(8, 8, (0.2, 0.4, 0.1))
    empty, _ = aos.rx_scores(flat).threshold(0.999)
    assert empty.count() == 0
    labels = aos.Labels(8, 8, 1, bytes(64))
    assert aos.pixel_precision(empty, labels) is None

    with tempfile.TemporaryDirectory() as d:
        manifest = json.loads(aos.simulate_flight(d, seed=1, frames=1, resolution=64))
        assert manifest["frames"] == 1 and len(manifest["rig"]["cameras"]) == 10
    print("ok")


if __name__ == "__main__":
    main()
