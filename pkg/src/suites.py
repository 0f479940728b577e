"""Scenario generators.

All generated scenes follow the same layout: the EE starts at ``(0, 0, height)`` and
the target lies ``travel`` metres ahead along world x at the same height. Branches
grow upwards from the ground plane; ``y_cross`` is where a branch crosses the
EE path height, so tilted branches are placed to cross at the intended offset.
"""
from dataclasses import replace

import numpy as np
import pandas as pd

from src.canopy import SECTION_PRESETS, BranchSpec, LeafSpec
from src.logger import Logger
from src.scenario import Scenario

logger = Logger.get_logger(__name__)

PATH_HEIGHT = 0.1
TRAVEL = 0.2
BRANCH_LENGTH = 0.2
BRANCH_PARTICLES = 5
SUITE_MAX_DURATION = 60.0

BLOCKING = 'blocking'
STIFF = 'stiff'

GRID_SECTIONS = ('circular_5mm', 'circular_10mm', 'circular_12mm', 'square_5mm')
GRID_ORIENTATIONS = (60.0, 30.0, 0.0, -30.0, -60.0)
GRID_OFFSETS = (-0.006, 0.004)


def path_branch(x, y_cross, section='circular_10mm', orientation_deg=0.0, height=PATH_HEIGHT,
                length=BRANCH_LENGTH, particle_count=BRANCH_PARTICLES, **overrides):
    """Branch rooted on the ground that crosses the EE path height at ``(x, y_cross)``.

    Args:
        x (float): Position of the branch along the path (m).
        y_cross (float): Lateral offset of the branch from the path at path height (m).
        section (str): Key of ``SECTION_PRESETS``.
        orientation_deg (float): Tilt about world x (deg).

    Returns:
        BranchSpec
    """
    if section not in SECTION_PRESETS:
        raise ValueError(f"Unknown section {section!r}, expected one of {sorted(SECTION_PRESETS)}")
    cross_section, dimension = SECTION_PRESETS[section]
    y_root = y_cross + height * np.tan(np.deg2rad(orientation_deg))
    return BranchSpec(cross_section=cross_section, dimension=dimension, length=length,
                      particle_count=particle_count, attachment_position=(float(x), float(y_root), 0.0),
                      orientation_deg=float(orientation_deg), **overrides)


def path_scenario(name, branches, travel=TRAVEL, height=PATH_HEIGHT, controller='rice', tags=(), seed=0, **kwargs):
    """Point-mass scenario that drives ``travel`` metres along world x through ``branches``."""
    kwargs.setdefault('max_duration', SUITE_MAX_DURATION)
    return Scenario(name=name, seed=seed, canopy=list(branches), initial_position=(0.0, 0.0, height),
                    target=(travel, 0.0, height), controller=controller, tags=tuple(tags), **kwargs)


def reference_suite(controller='rice'):
    """Ten fixed scenes: eight with branches blocking the straight path, two clear.

    Blocking branches sit a few millimetres off the path so that contact is never
    exactly centred between the two pads.
    """
    blocked = (BLOCKING, STIFF)
    return [
        path_scenario('single_c10', [path_branch(0.06, 0.005)], controller=controller, tags=blocked),
        path_scenario('single_c12', [path_branch(0.06, -0.006, 'circular_12mm')], controller=controller,
                      tags=blocked),
        path_scenario('single_c5', [path_branch(0.06, 0.007, 'circular_5mm')], controller=controller,
                      tags=(BLOCKING,)),
        path_scenario('single_s5', [path_branch(0.06, -0.004, 'square_5mm')], controller=controller,
                      tags=(BLOCKING,)),
        path_scenario('tilted_c10_pos', [path_branch(0.06, 0.005, orientation_deg=30.0)], controller=controller,
                      tags=blocked),
        path_scenario('tilted_c10_neg', [path_branch(0.06, -0.005, orientation_deg=-30.0)], controller=controller,
                      tags=blocked),
        path_scenario('double_c10_c5', [path_branch(0.06, 0.005), path_branch(0.13, -0.006, 'circular_5mm')],
                      controller=controller, tags=blocked),
        path_scenario('double_c12_c10', [path_branch(0.06, -0.005, 'circular_12mm'), path_branch(0.13, 0.006)],
                      controller=controller, tags=blocked),
        path_scenario('clear_single', [path_branch(0.08, 0.045)], controller=controller),
        path_scenario('clear_gap', [path_branch(0.08, 0.04), path_branch(0.12, -0.04, 'circular_5mm')],
                      controller=controller),
    ]


def blocking(scenarios):
    return [s for s in scenarios if BLOCKING in s.tags]


def stiff(scenarios):
    return [s for s in scenarios if STIFF in s.tags]


def single_branch_grid(sections=GRID_SECTIONS, orientations=GRID_ORIENTATIONS, offsets=GRID_OFFSETS,
                       controller='rice'):
    """One blocking branch per scene over cross sections, tilts and lateral offsets.

    Branches are 0.3 m long so that even the steepest tilt crosses the path below the tip.
    """
    scenarios = []
    for section in sections:
        for orientation in orientations:
            for offset in offsets:
                branch = path_branch(0.06, offset, section, orientation, length=0.3, particle_count=6)
                name = f"grid_{section}_{orientation:+.0f}deg_{offset * 1000:+.0f}mm"
                scenarios.append(path_scenario(name, [branch], controller=controller, tags=(BLOCKING,)))
    return scenarios


def two_branch_grid(sections=('circular_5mm', 'circular_10mm'), offsets=GRID_OFFSETS, controller='rice'):
    """Two consecutive blocking branches for every ordered pair of sections."""
    scenarios = []
    for first in sections:
        for second in sections:
            for offset in offsets:
                branches = [path_branch(0.06, offset, first), path_branch(0.13, -offset, second)]
                name = f"pair_{first}_{second}_{offset * 1000:+.0f}mm"
                scenarios.append(path_scenario(name, branches, controller=controller, tags=(BLOCKING,)))
    return scenarios


def dense_random_scenario(seed, controller='rice', travel=0.35):
    """Cluttered scene of 8 to 15 leafy branches drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    sections = sorted(SECTION_PRESETS)
    branches = []
    for _ in range(int(rng.integers(8, 16))):
        leaves = [LeafSpec(attach_particle_index=int(rng.integers(2, BRANCH_PARTICLES)),
                           patch_normal=tuple(float(c) for c in _unit(rng.normal(size=3))))
                  for _ in range(int(rng.integers(0, 3)))]
        branches.append(path_branch(x=rng.uniform(0.04, travel - 0.04), y_cross=rng.uniform(-0.06, 0.06),
                                    section=sections[int(rng.integers(len(sections)))],
                                    orientation_deg=rng.uniform(-30.0, 30.0), leaf_specs=leaves))
    return path_scenario(f"dense_{seed}", branches, travel=travel, controller=controller, seed=int(seed),
                         max_duration=90.0)


def _unit(v):
    return v / np.linalg.norm(v)


def dense_random_suite(seeds, controller='rice'):
    return [dense_random_scenario(seed, controller) for seed in seeds]


def repeated(scenario, repeats):
    """``repeats`` identical copies of a scenario, named ``<name>_r<i>``."""
    if repeats < 1:
        raise ValueError(f"repeats should be at least 1 but is {repeats}")
    return [replace(scenario, name=f"{scenario.name}_r{i}") for i in range(repeats)]


def repeatability(results):
    """Spread (max − min) of every metric over repeated runs of one scenario."""
    table = pd.DataFrame([{'totalDisturbance': r.total_disturbance,
                           'finalTargetDeviation': r.final_target_deviation,
                           'brokenBranchCount': r.broken_branch_count,
                           'duration': r.duration} for r in results])
    spread = table.max() - table.min()
    if np.any(spread.to_numpy() > 0):
        logger.warning(f"Repeated runs differ: {spread.to_dict()}")
    return spread
