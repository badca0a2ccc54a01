"""
Checks that every package imports and the entry point is wired to the CLI.
"""
import importlib

import pytest

PACKAGES = ["config", "utils", "model", "render", "density", "tokens", "losses", "fitting", "sceneio", "cli"]


@pytest.mark.parametrize("name", PACKAGES)
def test_package_imports(name):
    module = importlib.import_module(name)
    for exported in getattr(module, "__all__", []):
        assert hasattr(module, exported), f"{name}.{exported}"


def test_entry_point_uses_cli():
    import main
    from cli import cli

    assert main.cli is cli
    assert set(cli.commands) == {"render", "fit", "prune", "schedule", "metrics", "bench"}


def test_settings_load():
    from config.settings import get_settings

    settings = get_settings()
    assert settings.psnr_cap == 99.0
    assert settings.window_size == 128
