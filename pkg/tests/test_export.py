import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from conftest import small_config
from src.data_generation import DatasetSpec, plot_range, sample_dataset
from src.data_loading import load_field_values, load_samples, load_training_log, load_trajectory
from src.export import export_field_grid, export_samples, export_trajectory, trajectory_columns
from src.numerics import Rng
from src.sampling import Trajectory, integrate
from src.training import train
from src.utils import read_json
from src.visualization import CANVAS, plot_sweep, plot_training_history, render_field, render_scatter

SVG = "{http://www.w3.org/2000/svg}"


def _circles(path):
    return ET.parse(path).getroot().iter(f"{SVG}circle")


def test_samples_round_trip_is_exact(tmp_path):
    x = np.random.default_rng(0).standard_normal((257, 2)) * 1e3
    x[0] = [np.pi, -1e-300]
    path = tmp_path / "samples.csv"
    export_samples(x, path)
    assert np.array_equal(load_samples(path), x)
    assert path.read_text().splitlines()[0] == "x,y"


def test_trajectory_round_trip(tmp_path):
    x0 = np.random.default_rng(1).standard_normal((20, 2))
    traj = integrate(lambda x, t: -x, x0, "midpoint", 0.01, record=7)
    path = tmp_path / "traj.csv"
    export_trajectory(traj, path)
    back = load_trajectory(path)
    assert np.array_equal(back.times, traj.times)
    for a, b in zip(back.states, traj.states):
        assert np.array_equal(a, b)


def test_single_particle_trajectory_layout(tmp_path):
    traj = Trajectory(np.array([0.0, 1.0]), [np.array([[0.5, 0.25]]), np.array([[1.0, 2.0]])])
    path = tmp_path / "one.csv"
    export_trajectory(traj, path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == trajectory_columns([0.0, 1.0]) == ["x@0", "y@0", "x@1", "y@1"]
    assert len(lines) == 2
    assert [float(v) for v in lines[1].split(",")] == [0.5, 0.25, 1.0, 2.0]


def test_malformed_trajectory_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x@0,z@0\n1,2\n")
    with pytest.raises(ValueError):
        load_trajectory(path)


def test_field_grid_files(tmp_path, random_ckpt):
    grid, written = export_field_grid(random_ckpt, (-2.0, 2.0), tmp_path, g=6, render=False)
    csvs = sorted(p for p in written if p.endswith(".csv"))
    assert len(csvs) == 10
    assert grid.plot_range == pytest.approx((-2.0, 2.0))
    assert np.allclose(grid.axis, -2.0 + 4.0 / 6 * (np.arange(6) + 0.5))
    lattice, values = load_field_values(os.path.join(tmp_path, "u_t2.csv"))
    assert np.array_equal(lattice, grid.lattice)
    assert np.array_equal(values, random_ckpt.u(grid.lattice, 0.5))
    _, values = load_field_values(os.path.join(tmp_path, "d_t4.csv"))
    assert np.array_equal(values, random_ckpt.d(grid.lattice, 1.0))
    assert read_json(os.path.join(tmp_path, "index.json"))["times"] == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_field_grid_of_zero_network_renders(tmp_path, zero_ckpt):
    _, written = export_field_grid(zero_ckpt, (-1.0, 1.0), tmp_path, g=4, times=(0.0, 1.0))
    svgs = [p for p in written if p.endswith(".svg")]
    assert len(svgs) == 4
    _, values = load_field_values(os.path.join(tmp_path, "u_t0.csv"))
    assert np.array_equal(values, np.zeros((16, 2)))
    ET.parse(svgs[0])


def test_field_grid_validation(random_ckpt, tmp_path):
    with pytest.raises(ValueError):
        export_field_grid(random_ckpt, (1.0, 1.0), tmp_path)
    with pytest.raises(ValueError):
        export_field_grid(random_ckpt, (-1.0, 1.0), tmp_path, g=1)
    with pytest.raises(ValueError):
        export_field_grid(random_ckpt, (-1.0, 1.0), tmp_path, times=(1.5,))


def test_scatter_single_point(tmp_path):
    path = tmp_path / "one.svg"
    assert render_scatter(np.array([[0.0, 0.0]]), (-1.0, 1.0), path) == 1
    (circle,) = list(_circles(path))
    assert float(circle.get("cx")) == pytest.approx(CANVAS / 2)
    assert float(circle.get("cy")) == pytest.approx(CANVAS / 2)


def test_scatter_skips_points_outside_range(tmp_path):
    batch = np.array([[0.0, 0.0], [5.0, 0.0], [0.5, -0.5]])
    assert render_scatter(batch, (-1.0, 1.0), tmp_path / "s.svg") == 2


def test_renders_are_byte_identical(tmp_path):
    batch = sample_dataset(DatasetSpec("moons"), Rng(0), 300)
    render_scatter(batch, plot_range([batch]), tmp_path / "a.svg", title="moons")
    render_scatter(batch, plot_range([batch]), tmp_path / "b.svg", title="moons")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_checkerboard_markers_inside_view_box(tmp_path):
    batch = sample_dataset(DatasetSpec("checkerboard"), Rng(1), 2000)
    path = tmp_path / "cb.svg"
    assert render_scatter(batch, plot_range([batch]), path) == 2000
    root = ET.parse(path).getroot()
    assert root.get("viewBox") == f"0 0 {CANVAS} {CANVAS}"
    for circle in _circles(path):
        assert 0.0 <= float(circle.get("cx")) <= CANVAS
        assert 0.0 <= float(circle.get("cy")) <= CANVAS


def test_render_field_draws_one_cell_per_node(tmp_path):
    axis = np.linspace(-0.75, 0.75, 4)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    lattice = np.stack([gx.ravel(), gy.ravel()], axis=1)
    path = tmp_path / "f.svg"
    render_field(lattice, -lattice, (-1.0, 1.0), path)
    rects = list(ET.parse(path).getroot().iter(f"{SVG}rect"))
    assert len(rects) == 1 + 16


def test_history_and_sweep_plots(tmp_path):
    log = tmp_path / "log.jsonl"
    train(small_config(iterations=30), log_path=log)
    frame = load_training_log(log)
    assert list(frame["iteration"]) == [10, 20, 30]
    plot_training_history(frame, tmp_path / "history.svg")
    ET.parse(tmp_path / "history.svg")
    plot_sweep(frame.assign(lambda_d=[0.0, 0.5, 1.0], mmd2=[0.1, 0.05, 0.02], fid2d=[1.0, 0.5, 0.2]),
               tmp_path / "sweep.svg")
    ET.parse(tmp_path / "sweep.svg")
