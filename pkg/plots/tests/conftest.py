import pytest

from aggdata import SIX_MODES, rising_curve, write_aggregate


@pytest.fixture
def six_mode_csvs(tmp_path):
    """One aggregate CSV per mechanism, cooperation plus reward metrics."""
    paths = []
    for i, mode in enumerate(SIX_MODES):
        coop = rising_curve(40, 60.0 + 6.0 * i, 4.0)
        reward = rising_curve(40, 120.0 + 9.0 * i, 11.0)
        path = tmp_path / f"{mode}_aggregate.csv"
        write_aggregate(path, mode, {"cooperation_pct": coop, "societal_reward": reward})
        paths.append(path)
    return paths
