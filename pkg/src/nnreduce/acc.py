"""Adaptive cruise control benchmark: plant, controller synthesis and scenario.

State ``(x_l, v_l, g_l, x_e, v_e, g_e)``: position, velocity and actual
acceleration of the lead and ego cars.  Inputs ``(a_l, a_e)`` are the
commanded accelerations; the output is ``(v_e, d_rel, v_rel)``.  The
controller reads ``(v_set, t_gap, v_e, d_rel, v_rel)`` and commands ``a_e``;
the lead car brakes with a fixed ``a_l``.

No trained controller ships with the benchmark, so one is synthesized.  The
original 5x20 ReLU network realizes a saturated linear spacing law exactly;
the reduced 2x5 network is distilled from it by sampling.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .closed_loop import Halfspace, SafetySpec, SampledNNCS
from .network import Activation, Layer, Network
from .ode import Dynamics, isquare
from .reach import PartitionConfig
from .reduction import Precision, distill, precision
from .sets import IntervalBox

MU = 0.001
T_GAP = 1.4
D_DEFAULT = 10.0
SAMPLING_PERIOD = 0.01
INTERVALS = 300
V_SET = 30.0
LEAD_ACCEL = -2.0

STATE_NAMES = ("x_l", "v_l", "g_l", "x_e", "v_e", "g_e")
OUTPUT_NAMES = ("v_e", "d_rel", "v_rel")
CONTROLLER_INPUTS = ("v_set", "t_gap", "v_e", "d_rel", "v_rel")

X0 = IntervalBox([94.0, 30.0, 0.0, 10.0, 30.0, 0.0], [96.0, 30.2, 0.0, 11.0, 30.2, 0.0])

# fallback spacing law (benchmark plumbing, not fitted to anything)
K_V = 0.5
K_D = 0.2
ACCEL_MIN = -3.0
ACCEL_MAX = 2.0

# controller inputs seen in closed loop stay well inside these boxes
TRAIN_BOX = IntervalBox([V_SET, T_GAP, 22.0, 40.0, -24.0], [V_SET, T_GAP, 42.0, 100.0, 8.0])
PRECISION_BOX = IntervalBox([V_SET, T_GAP, 24.0, 58.0, -18.0], [V_SET, T_GAP, 42.0, 88.0, 2.0])
PRECISION_SPLITS = 64
# partition of the controller input box in every sampling interval
REACH_SPLITS = (1, 1, 12, 12, 12)


def acc_dynamics(mu: float = MU) -> Dynamics:
    def f(x, u):
        x, u = np.asarray(x, dtype=float), np.asarray(u, dtype=float)
        vl, gl, ve, ge = x[..., 1], x[..., 2], x[..., 4], x[..., 5]
        return np.stack([vl, gl, -2 * gl + 2 * u[..., 0] - mu * vl**2,
                         ve, ge, -2 * ge + 2 * u[..., 1] - mu * ve**2], axis=-1)

    def f_box(lo, hi, ulo, uhi):
        sl_lo, sl_hi = isquare(lo[1], hi[1])
        se_lo, se_hi = isquare(lo[4], hi[4])
        flo = np.array([lo[1], lo[2], -2 * hi[2] + 2 * ulo[0] - mu * sl_hi,
                        lo[4], lo[5], -2 * hi[5] + 2 * ulo[1] - mu * se_hi])
        fhi = np.array([hi[1], hi[2], -2 * lo[2] + 2 * uhi[0] - mu * sl_lo,
                        hi[4], hi[5], -2 * lo[5] + 2 * uhi[1] - mu * se_lo])
        return flo, fhi

    jx = np.zeros((6, 6))
    jx[0, 1] = jx[1, 2] = jx[3, 4] = jx[4, 5] = 1.0
    jx[2, 2] = jx[5, 5] = -2.0
    ju = np.zeros((6, 2))
    ju[2, 0] = ju[5, 1] = 2.0

    def jac_box(lo, hi, ulo, uhi):
        jlo, jhi = jx.copy(), jx.copy()
        # d/dv of -mu v^2 is -2 mu v, monotone in v
        jlo[2, 1], jhi[2, 1] = -2 * mu * hi[1], -2 * mu * lo[1]
        jlo[5, 4], jhi[5, 4] = -2 * mu * hi[4], -2 * mu * lo[4]
        return jlo, jhi, ju, ju

    def h(x):
        x = np.asarray(x, dtype=float)
        return np.stack([x[..., 4], x[..., 0] - x[..., 3], x[..., 1] - x[..., 4]], axis=-1)

    def h_box(lo, hi):
        return (np.array([lo[4], lo[0] - hi[3], lo[1] - hi[4]]),
                np.array([hi[4], hi[0] - lo[3], hi[1] - lo[4]]))

    return Dynamics(6, 2, f, f_box, h, h_box, jac_box, output_dim=3, name="acc")


def fallback_law(tau) -> np.ndarray:
    """``clip(K_V (v_set - v_e) + K_D (d_rel - d_def - t_gap v_e), min, max)``, column output."""
    tau = np.atleast_2d(np.asarray(tau, dtype=float))
    v_set, t_gap, v_e, d_rel = tau[:, 0], tau[:, 1], tau[:, 2], tau[:, 3]
    a = K_V * (v_set - v_e) + K_D * (d_rel - (D_DEFAULT + t_gap * v_e))
    return np.clip(a, ACCEL_MIN, ACCEL_MAX)[:, None]


def spacing_law_network(seed: int = 0, width: int = 20, hidden_layers: int = 5) -> Network:
    """ReLU network equal to :func:`fallback_law` at ``t_gap = T_GAP``.

    The first layer holds positive multiples of the two ramps
    ``relu(a - ACCEL_MIN)`` and ``relu(a - ACCEL_MAX)`` of the affine law
    ``a``; the remaining hidden layers mix each ramp group with random
    nonnegative matrices, and the output recombines them as
    ``ACCEL_MIN + ramp_min - ramp_max``.  Since every hidden value is a
    nonnegative multiple of one ramp, interval propagation through this
    network is as tight as through the law itself.  The ``t_gap`` input is
    ignored.
    """
    if width < 2 or width % 2 or hidden_layers < 1:
        raise ValueError("width must be even and positive, hidden_layers at least 1")
    rng = np.random.default_rng(seed)
    half = width // 2
    grad = np.array([K_V, 0.0, -(K_V + K_D * T_GAP), K_D, 0.0])
    offset = -K_D * D_DEFAULT
    c = rng.uniform(0.5, 1.5, half)
    d = rng.uniform(0.5, 1.5, half)
    layers = [Layer(np.vstack([np.outer(c, grad), np.outer(d, grad)]),
                    np.concatenate([c * (offset - ACCEL_MIN), d * (offset - ACCEL_MAX)]),
                    Activation.RELU)]
    for _ in range(hidden_layers - 1):
        p = rng.uniform(0.5, 1.5, (half, half)) / half
        q = rng.uniform(0.5, 1.5, (half, half)) / half
        mix = np.zeros((width, width))
        mix[:half, :half], mix[half:, half:] = p, q
        layers.append(Layer(mix, np.zeros(width), Activation.RELU))
        c, d = p @ c, q @ d
    out = np.concatenate([np.full(half, 1.0 / c.sum()), np.full(half, -1.0 / d.sum())])
    layers.append(Layer(out[None, :], np.array([ACCEL_MIN]), Activation.LINEAR))
    return Network(layers)


def safety_spec(t_gap: float = T_GAP, d_default: float = D_DEFAULT) -> SafetySpec:
    """Unsafe when ``d_rel <= d_default + t_gap * v_e``, i.e. ``x_l - x_e - t_gap v_e <= d_default``."""
    return SafetySpec(
        [[Halfspace((1.0, 0.0, 0.0, -1.0, -t_gap, 0.0), d_default, "d_rel <= d_def + t_gap*v_e")]],
        [f"relative distance at or below {d_default} + {t_gap} * v_e"],
    )


@functools.lru_cache(maxsize=4)
def synthesize_controllers(seed: int = 0, samples: int = 4000, epochs: int = 400):
    """Deterministic ``(original 5x20, reduced 2x5)`` controller pair.

    The original has five hidden layers of 20 neurons
    (:func:`spacing_law_network`); the reduced one has two hidden layers of 5.
    """
    big = spacing_law_network(seed, 20, 5)
    small = distill(big, [5, 5], TRAIN_BOX, samples, seed + 1, epochs=epochs).network
    return big, small


@functools.lru_cache(maxsize=4)
def _cached_precision(big: Network, small: Network, splits: int) -> Precision:
    return precision(big, small, PRECISION_BOX, PartitionConfig(splits=splits))


@dataclass
class Scenario:
    system: SampledNNCS
    x0: IntervalBox
    spec: SafetySpec
    horizon: float


def acc_system(controller: Network, reduced: Network | None = None, rho: Precision | None = None,
               v_set: float = V_SET, t_gap: float = T_GAP, lead_accel: float = LEAD_ACCEL) -> SampledNNCS:
    return SampledNNCS(
        plant=acc_dynamics(),
        controller=controller,
        sampling_period=SAMPLING_PERIOD,
        reference_box=IntervalBox.point([v_set, t_gap]),
        controller_input_layout=[("r", 0), ("r", 1), ("y", 0), ("y", 1), ("y", 2)],
        plant_input_layout=[("w", 0), ("u", 0)],
        exogenous_input=IntervalBox.point([lead_accel]),
        reduced_controller=reduced,
        precision=rho,
        state_names=STATE_NAMES,
    )


def acc_scenario(v_set: float = V_SET, lead_accel: float = LEAD_ACCEL, *, controller: Network | None = None,
                 reduced: Network | None = None, rho: Precision | None = None, with_reduced: bool = True,
                 precision_splits: int = PRECISION_SPLITS, seed: int = 0) -> Scenario:
    """Benchmark setup: 0.01 s sampling, 300 intervals, initial box and spacing spec.

    Missing controllers are synthesized (cached per process); when the reduced
    controller is used without a given precision it is computed over
    ``PRECISION_BOX``.
    """
    if controller is None:
        controller, synth_small = synthesize_controllers(seed)
        reduced = synth_small if reduced is None else reduced
    if with_reduced and reduced is not None and rho is None:
        rho = _cached_precision(controller, reduced, precision_splits)
    if not with_reduced:
        reduced, rho = None, None
    system = acc_system(controller, reduced, rho, v_set=v_set, lead_accel=lead_accel)
    return Scenario(system, X0, safety_spec(), INTERVALS * SAMPLING_PERIOD)
