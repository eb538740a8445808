"""Shared fixtures: synthetic campaigns are generated once per test session."""

import pytest

from honeycluster.synth import load_scenario, write_campaign


class CampaignCache:
    def __init__(self, root):
        self.root = root
        self._done = {}

    def get(self, name):
        """(campaign, {"log": path, "ground_truth": path}) for a library scenario."""
        if name not in self._done:
            scenario = load_scenario(name)
            campaign = scenario.generate()
            paths = write_campaign(campaign, self.root / name, scenario.name)
            self._done[name] = (campaign, paths)
        return self._done[name]


@pytest.fixture(scope="session")
def campaigns(tmp_path_factory):
    return CampaignCache(tmp_path_factory.mktemp("campaigns"))
