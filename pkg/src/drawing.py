import matplotlib.pyplot as plt
import numpy as np

from src.harness import tip_columns

colors = {'rice': 'tab:green', 'position': 'tab:red', 'hybrid': 'tab:blue', 'branch': 'saddlebrown',
          'target': 'black'}


def create_axis(figsize=(6, 4)):
    """Creates a new figure and axis for plotting.

    Returns:
        figure (matplotlib.figure.Figure): The created figure.
        axes (matplotlib.axes.Axes): The created axis.
    """
    fig, ax = plt.figure(figsize=figsize), plt.gca()
    return fig, ax


def get_cdf(data):
    """Sorted data and the empirical CDF values ``i/n``."""
    data_sorted = np.sort(np.asarray(data, dtype=float))
    cdf = np.arange(1, len(data_sorted) + 1) / len(data_sorted)
    return data_sorted, cdf


def drawTrajectory(ax, trajectory, color=colors['rice'], **kwargs):
    """Draws the EE path (top view, x against y) of a trajectory DataFrame.

    Args:
        ax (matplotlib.axes.Axes): The axes on which to draw.
        trajectory (pd.DataFrame): Trajectory as returned by `run_trial`.
        color (str, optional): Line color.
        **kwargs (dict): Additional keyword arguments passed to `ax.plot`.
    """
    defaults = {'color': color, 'linewidth': 1.5, 'label': 'EE'}
    defaults.update(kwargs)
    ax.plot(trajectory['x'], trajectory['y'], **defaults)
    ax.set_xlabel('x (m)')
    ax.set_ylabel('y (m)')


def drawTips(ax, trajectory, rest_tips=None, color=colors['branch'], **kwargs):
    """Draws the path of every branch tip; rest positions are marked with circles."""
    branch_count = (len(trajectory.columns) - 9) // 3
    columns = tip_columns(branch_count)
    defaults = {'color': color, 'linewidth': 0.8, 'linestyle': '--'}
    defaults.update(kwargs)
    for i in range(branch_count):
        x_col, y_col = columns[3 * i], columns[3 * i + 1]
        ax.plot(trajectory[x_col], trajectory[y_col], **defaults)
    if rest_tips is not None and len(rest_tips):
        rest_tips = np.asarray(rest_tips)
        ax.scatter(rest_tips[:, 0], rest_tips[:, 1], marker='o', facecolors='none', edgecolors=color, s=20)


def plot_trajectory(result, target=None, ax=None):
    """Top view of one trial: EE path, tip paths and the target.

    Args:
        result (TrialResult): The trial to draw.
        target (array-like, optional): Target to mark.
        ax (matplotlib.axes.Axes, optional): Axis to draw on, a new one if omitted.

    Returns:
        matplotlib.axes.Axes
    """
    if ax is None:
        _, ax = create_axis()
    drawTrajectory(ax, result.trajectory, color=colors.get(result.controller, 'black'), label=result.controller)
    drawTips(ax, result.trajectory, result.rest_tips)
    if target is not None:
        ax.scatter([target[0]], [target[1]], marker='x', color=colors['target'], label='target')
    ax.set_title(f"{result.scenario_name}: {result.stop_reason}")
    ax.set_aspect('equal', adjustable='datalim')
    ax.legend()
    return ax


def plot_sweep(table, ax=None):
    """Median disturbance (mm) and no-break reach rate against ``w_f`` from `sweep_table`."""
    if ax is None:
        _, ax = create_axis()
    ax.plot(table['wF'], table['medianDisturbance'] * 1000, marker='o', color='black', label='median disturbance')
    ax.set_xlabel('w_f')
    ax.set_ylabel('median disturbance (mm)')
    twin = ax.twinx()
    twin.plot(table['wF'], table['noBreakReachRate'], marker='s', color=colors['rice'], label='no-break reach rate')
    twin.set_ylabel('no-break reach rate')
    twin.set_ylim(-0.05, 1.05)
    ax.grid(True)
    return ax


def plot_disturbance_cdf(tables, ax=None, **kwargs):
    """CDF of per-trial disturbance for each controller.

    Args:
        tables (dict): Label -> trial table (see `trial_table`).
        ax (matplotlib.axes.Axes, optional): Axis to draw on.
    """
    if ax is None:
        _, ax = create_axis()
    for label, table in tables.items():
        if len(table) == 0:
            continue
        data_sorted, cdf = get_cdf(table['totalDisturbance'] * 1000)
        presets = {'marker': 'o', 'markersize': 2, 'linestyle': '-', 'linewidth': 1,
                   'color': colors.get(label, 'black'), 'label': label}
        presets.update(kwargs)
        ax.step(data_sorted, cdf, where='post', **presets)
    ax.set_xlabel('total disturbance (mm)')
    ax.set_ylabel('CDF')
    ax.grid(True)
    ax.legend()
    return ax
