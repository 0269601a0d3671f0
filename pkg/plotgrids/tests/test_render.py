import numpy as np
import pytest
from PIL import Image

from plotgrids import GridFigureSpec, GridInputError, load_grid, render_grid
from plotgrids.cli import main

HEADER = "beta1,beta2,avg_backlog,max_excursion,stability,served_total,failed_ops"


def write_grid(path, rows):
    path.write_text(HEADER + "\n" + "\n".join(rows) + "\n")
    return path


def synthetic_rows(skip=()):
    rows = []
    for b1 in (0.1, 0.4):
        for b2 in (0.1, 0.4):
            if (b1, b2) in skip:
                rows.append(f"{b1},{b2},nan,nan,skipped,nan,nan")
            else:
                backlog = 100.0 * (b1 + b2)
                rows.append(f"{b1},{b2},{backlog},{int(backlog * 2)},stable,10,0")
    return rows


@pytest.fixture
def csv_set(tmp_path):
    paths = []
    for policy in ("greedy", "mw_fi"):
        for load in ("0", "0.2"):
            skip = {(0.4, 0.4)} if policy == "greedy" else set()
            paths.append(
                write_grid(tmp_path / f"grid_{policy}_{load}.csv", synthetic_rows(skip))
            )
    return paths


class TestLoadGrid:
    def test_parses_axes_and_skips(self, tmp_path):
        path = write_grid(tmp_path / "grid_mw_fi_0.csv", synthetic_rows({(0.1, 0.4)}))
        grid = load_grid(path)
        assert grid.policy == "mw_fi"
        assert grid.load == "0"
        assert grid.beta1 == (0.1, 0.4)
        assert grid.beta2 == (0.1, 0.4)
        assert grid.skipped[0, 1]
        assert np.isnan(grid.backlog[0, 1])
        assert grid.backlog[1, 1] == pytest.approx(80.0)

    def test_bad_name(self, tmp_path):
        path = write_grid(tmp_path / "results.csv", synthetic_rows())
        with pytest.raises(GridInputError, match="grid_<policy>_<load>"):
            load_grid(path)

    def test_incomplete_grid(self, tmp_path):
        path = write_grid(tmp_path / "grid_g_0.csv", synthetic_rows()[:3])
        with pytest.raises(GridInputError, match="do not fill"):
            load_grid(path)


class TestRenderGrid:
    def test_single_cell(self, tmp_path):
        path = write_grid(tmp_path / "grid_mw_fi_0.csv",
                          ["0.5,0.5,3.25,12,stable,9,0"])
        out = render_grid(GridFigureSpec(inputs=[path], output=tmp_path / "one.png"))
        assert out.exists()
        with Image.open(out) as image:
            assert image.size[0] > 100 and image.size[1] > 100

    def test_two_by_two_panel_layout(self, csv_set, tmp_path):
        import matplotlib.pyplot as plt

        out = tmp_path / "panels.png"
        render_grid(GridFigureSpec(inputs=csv_set, output=out))
        assert out.exists()

    def test_mismatched_grids_listed(self, csv_set, tmp_path):
        odd = write_grid(
            tmp_path / "grid_quad_fi_0.csv",
            [r.replace("0.4,", "0.9,", 1) for r in synthetic_rows()],
        )
        with pytest.raises(GridInputError, match="quad_fi"):
            render_grid(GridFigureSpec(inputs=csv_set + [odd], output=tmp_path / "x.png"))

    def test_duplicate_panels_rejected(self, tmp_path):
        (tmp_path / "a").mkdir()
        a = write_grid(tmp_path / "a" / "grid_g_0.csv", synthetic_rows())
        b = write_grid(tmp_path / "grid_g_0.csv", synthetic_rows())
        with pytest.raises(GridInputError, match="duplicate"):
            render_grid(GridFigureSpec(inputs=[a, b], output=tmp_path / "x.png"))


class TestAcceptanceCriterion14:
    def test_two_policy_two_load_panels(self, csv_set, tmp_path):
        """2 policies x 2 loads render as a 2x2 panel grid, skipped cells
        white, axis extents matching the beta ranges."""
        import matplotlib
        import matplotlib.pyplot as plt
        from matplotlib.colors import Normalize

        out = tmp_path / "figure.png"

        captured = {}
        original_subplots = plt.subplots

        def capture_subplots(*args, **kwargs):
            fig, axes = original_subplots(*args, **kwargs)
            captured["fig"], captured["axes"] = fig, axes
            return fig, axes

        plt.subplots = capture_subplots
        try:
            render_grid(GridFigureSpec(inputs=csv_set, output=out, annotate_excursion=True))
        finally:
            plt.subplots = original_subplots

        axes = captured["axes"]
        assert axes.shape == (2, 2)  # loads x policies

        # axis extents: cells centered on beta values 0.1 and 0.4
        ax = axes[0][0]
        x0, x1 = ax.get_xlim()
        y0, y1 = ax.get_ylim()
        assert x0 == pytest.approx(0.1 - 0.15) and x1 == pytest.approx(0.4 + 0.15)
        assert y0 == pytest.approx(0.1 - 0.15) and y1 == pytest.approx(0.4 + 0.15)

        # the greedy panels carry the skipped (0.4, 0.4) cell; it must render white
        image = next(im for im in axes[0][0].get_images())
        rgba = image.to_rgba(image.get_array())
        assert tuple(rgba[1, 1][:3]) == (1.0, 1.0, 1.0)  # white cell
        # a non-skipped cell is colored
        assert tuple(rgba[0, 0][:3]) != (1.0, 1.0, 1.0)

        assert out.exists()
        with Image.open(out) as rendered:
            assert rendered.size[0] > 300 and rendered.size[1] > 300
        print("[criterion 14] 2x2 heatmap panel with white skipped cells: PASS")


class TestCli:
    def test_end_to_end(self, csv_set, tmp_path, capsys):
        out = tmp_path / "cli.png"
        code = main(["--inputs", str(tmp_path / "grid_*.csv"), "--out", str(out),
                     "--log-scale", "--annotate-excursion"])
        assert code == 0
        assert out.exists()

    def test_no_matches(self, tmp_path):
        assert main(["--inputs", str(tmp_path / "none_*.csv"), "--out", str(tmp_path / "x.png")]) == 1
