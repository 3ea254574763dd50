import json
import os.path
import tempfile
import unittest

from targetedmsm.util.errors import ConfigError

from targetedmsm.cli.services.config import RunConfig, from_dict, load_config, settle, to_json, validate


class TestConfig(unittest.TestCase):

    def test_json_round_trip_keeps_every_setting(self):
        config = RunConfig(
            command="bayes",
            input="data.csv",
            modifiers=["X4"],
            prior_mean=[0.0, 0.0],
            prior_var=[4.0, 4.0],
        )
        config = config.set(mcmc=config.mcmc.set(iters=2000, burn_in=500, seed=7))

        self.assertEqual(config, from_dict(json.loads(to_json(config))))

    def test_flags_override_file_settings(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "run.json")
            with open(path, "w", encoding="utf-8") as f:
                json.dump({"schema": "1.0.0", "input": "a.csv", "mcmc": {"iters": 3000, "seed": 1}}, f)

            config = settle(path, "bayes", input="b.csv", modifiers=("X4",), **{"mcmc.seed": 9, "mcmc.iters": None})

        self.assertEqual("b.csv", config.input)
        self.assertEqual(["X4"], list(config.modifiers))
        self.assertEqual(3000, config.mcmc.iters)
        self.assertEqual(9, config.seed)

    def test_unknown_keys_are_rejected(self):
        with self.assertRaises(ConfigError):
            from_dict({"schema": "1.0.0", "colour": "red"})

    def test_newer_major_schema_is_rejected(self):
        with self.assertRaises(ConfigError) as raised:
            from_dict({"schema": "2.0.0"})

        self.assertEqual("2.0.0", raised.exception.detail["found"])

    def test_every_problem_is_listed(self):
        config = RunConfig(command="bayes", family="ordinal", level=1.5)

        with self.assertRaises(ConfigError) as raised:
            validate(config)

        problems = raised.exception.detail["problems"]
        self.assertTrue(any("family" in e for e in problems))
        self.assertTrue(any("level" in e for e in problems))
        self.assertTrue(any("input" in e for e in problems))

    def test_short_chains_are_rejected_before_sampling(self):
        with self.assertRaises(ConfigError):
            settle(None, "bayes", input="a.csv", **{"mcmc.iters": 10})

    def test_unreadable_file(self):
        with self.assertRaises(ConfigError):
            load_config("/nonexistent/run.json")
