"""Score each forged-phase attack against its authentic source.

Run with ``python demos/attack_gallery.py``. The camera oscillates so that
delayed or wandering phase schedules fall out of step with the motion.
Note the gain attack: Pearson correlation ignores scale, so it scores
like the real thing.
"""

from moirekit.simulate import ScenarioSpec, apply_attack, render_sequence
from moirekit.verify import verify_sequence

spec = ScenarioSpec(distance_z=1300.0, n_frames=120, rotation_jitter_deg=2.0, seed=21,
                    path="sweep", start_offset=(250.0, 0.0), end_offset=(-250.0, 0.0))
frames, manifest = render_sequence(spec)
print(f"{'authentic':>10}  s = {verify_sequence(frames, manifest).best_correlation:.5f}")

for kind, param in [("frozen", None), ("lag", 10), ("drift", 0.3), ("gain", 0.3)]:
    forged, fm = apply_attack(frames, manifest, kind, param)
    print(f"{kind:>10}  s = {verify_sequence(forged, fm).best_correlation:.5f}")
